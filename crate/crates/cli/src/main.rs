use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mapi_gnn::data::{self, Dataset, GraphHeader, SyntheticSpec};
use mapi_gnn::metrics::compute_metrics;
use mapi_gnn::pipeline::{self, TrainConfig};
use mapi_gnn::Error;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "mapi", version, about = "Multimodal activation-graph patient classifier")]
struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true, env = "MAPI_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 440)]
        n: usize,
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
    /// Cross-validate and write report, loss history and out-of-fold scores into a directory.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate and write the metric report.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional loss history CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Export influence matrices and activation graphs of an untrained model.
    Construct {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Module ablation or hyperparameter sweep as a CSV table.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Study::Modules)]
        study: Study,
        /// PAF values for `--study paf`.
        #[arg(long, value_delimiter = ',', default_values_t = [0.03, 0.05, 0.08, 0.10])]
        pafs: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics from a `label,score` file.
    Metrics {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// `key = value` file; defaults for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Folds trained in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    Modules,
    Fpm,
    Paf,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Parse { .. } | Error::Stratification(_) => 2,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        msg: format!("{}: {e}", path.display()),
    })
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure {
        code: 1,
        msg: format!("{}: {e}", path.display()),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure {
        code: 1,
        msg: format!("{}: {e}", path.display()),
    })
}

fn load(run: &RunArgs, seed: Option<u64>) -> Result<(Dataset, TrainConfig), Failure> {
    let ds = Dataset::parse(&read(&run.data)?)?;
    let mut cfg = match &run.config {
        Some(p) => TrainConfig::parse(&read(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok((ds, cfg))
}

/// Patient ids reduced to characters safe in file names.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth {
            out,
            n,
            separation,
            noise,
        } => {
            let spec = SyntheticSpec {
                n,
                separation,
                noise,
                seed: seed.unwrap_or(SyntheticSpec::default().seed),
                ..Default::default()
            };
            let ds = data::generate_synthetic(&spec)?;
            write(&out, &ds.to_text())
        }
        Command::Train { run, out } => {
            let (ds, cfg) = load(&run, seed)?;
            let res = pipeline::kfold_evaluate(&ds, &cfg, run.jobs)?;
            create_dir(&out)?;
            write(&out.join("report.txt"), &res.report.to_string())?;
            write(&out.join("history.csv"), &pipeline::history_csv(&res.histories))?;
            write(&out.join("scores.csv"), &pipeline::scores_csv(&ds.labels, &res.scores))?;
            write(&out.join("config.cfg"), &cfg.to_string())
        }
        Command::Eval { run, out, history } => {
            let (ds, cfg) = load(&run, seed)?;
            let res = pipeline::kfold_evaluate(&ds, &cfg, run.jobs)?;
            if let Some(h) = history {
                write(&h, &pipeline::history_csv(&res.histories))?;
            }
            emit(out.as_deref(), &res.report.to_string())
        }
        Command::Construct { run, out } => {
            let (ds, cfg) = load(&run, seed)?;
            let s = pipeline::construct(&ds, &cfg)?;
            let (graphs, influence) = (out.join("graphs"), out.join("influence"));
            create_dir(&graphs)?;
            create_dir(&influence)?;
            for (stack, inf) in s.stacks.iter().zip(&s.influences) {
                let header = GraphHeader {
                    c: stack.node_count(),
                    m: stack.graphs.len(),
                    k: cfg.k,
                    paf: cfg.paf,
                };
                let name = format!("{}.csv", file_stem(&stack.patient_id));
                write(&graphs.join(&name), &data::graphs_to_text(stack, header))?;
                write(&influence.join(&name), &data::influence_to_text(inf))?;
            }
            Ok(())
        }
        Command::Ablate { run, study, pafs, out } => {
            let (ds, cfg) = load(&run, seed)?;
            let (label, rows) = match study {
                Study::Modules => ("setting", pipeline::run_ablation(&ds, &cfg, run.jobs)?),
                Study::Fpm => ("FPM", pipeline::perturbation_sweep(&ds, &cfg, run.jobs)?),
                Study::Paf => ("PAF", pipeline::paf_sweep(&ds, &cfg, &pafs, run.jobs)?),
            };
            emit(out.as_deref(), &pipeline::render_table(label, &rows))
        }
        Command::Metrics { scores, threshold, out } => {
            let (labels, s) = data::parse_scores(&read(&scores)?)?;
            let m = compute_metrics(&labels, &s, threshold)?;
            emit(out.as_deref(), &format!("{m}\n"))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
