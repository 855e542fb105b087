use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "M = 4\nlatent_dim = 3\npaf = 0.5\nk = 2\nk_global = 3\nepochs = 2\n";

fn mapi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapi"))
        .args(args)
        .env_remove("MAPI_SEED")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_setup(dir: &Path) -> (String, String) {
    let data = dir.join("d.csv");
    let cfg = dir.join("c.cfg");
    assert!(mapi(&["synth", "--out", p(&data), "--n", "30", "--seed", "3"])
        .status
        .success());
    fs::write(&cfg, SMALL).unwrap();
    (p(&data).to_string(), p(&cfg).to_string())
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for f in [&a, &b] {
        assert_eq!(mapi(&["synth", "--out", p(f), "--seed", "7"]).status.code(), Some(0));
    }
    assert!(mapi(&["synth", "--out", p(&c), "--seed", "8"]).status.success());
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    assert_ne!(text, fs::read(&c).unwrap());
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 441);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = Command::new(env!("CARGO_BIN_EXE_mapi"))
        .args(["synth", "--n", "20", "--out", p(&a)])
        .env("MAPI_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(mapi(&["synth", "--n", "20", "--seed", "9", "--out", p(&b)])
        .status
        .success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn eval_report_has_fold_and_mean_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = small_setup(dir.path());
    let report = dir.path().join("report.txt");
    let hist = dir.path().join("h.csv");
    let out = mapi(&[
        "eval",
        "--data",
        &data,
        "--config",
        &cfg,
        "--out",
        p(&report),
        "--history",
        p(&hist),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.matches("[fold ").count(), 5);
    assert_eq!(text.matches("[mean]").count(), 1);
    assert!(text.contains("ACC: "));
    assert_eq!(fs::read_to_string(hist).unwrap().lines().count(), 1 + 5 * 2);

    let again = mapi(&["eval", "--data", &data, "--config", &cfg, "--jobs", "2"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn train_writes_artifacts_that_metrics_can_read() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = small_setup(dir.path());
    let run = dir.path().join("run");
    assert!(mapi(&["train", "--data", &data, "--config", &cfg, "--out", p(&run)])
        .status
        .success());
    for f in ["report.txt", "history.csv", "scores.csv", "config.cfg"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let out = mapi(&["metrics", "--scores", p(&run.join("scores.csv"))]);
    assert!(out.status.success());
    let pooled = fs::read_to_string(run.join("report.txt")).unwrap();
    let pooled = pooled.split("[pooled]\n").nth(1).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), pooled.trim());
}

#[test]
fn metrics_on_inverted_scores() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.csv");
    fs::write(&s, "label,score\n1,0.1\n0,0.9\n").unwrap();
    let out = mapi(&["metrics", "--scores", p(&s)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("AUC: 0.000000"), "{text}");
    assert!(text.contains("ACC: 0.000000"));
}

#[test]
fn construct_exports_every_patient() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = small_setup(dir.path());
    let out = dir.path().join("g");
    assert!(
        mapi(&["construct", "--data", &data, "--config", &cfg, "--out", p(&out)])
            .status
            .success()
    );
    let graphs: Vec<_> = fs::read_dir(out.join("graphs")).unwrap().collect();
    assert_eq!(graphs.len(), 30);
    assert_eq!(fs::read_dir(out.join("influence")).unwrap().count(), 30);
    let first = fs::read_to_string(graphs[0].as_ref().unwrap().path()).unwrap();
    let g = first.lines().next().unwrap();
    assert!(g.contains("C=9") && g.contains("M=4") && g.contains("k=2"), "{g}");
}

#[test]
fn ablate_paf_table() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = small_setup(dir.path());
    fs::write(&cfg, SMALL.replace("epochs = 2", "epochs = 1")).unwrap();
    let out = mapi(&[
        "ablate", "--study", "paf", "--pafs", "0.3,0.5", "--data", &data, "--config", &cfg,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "PAF,ACC,AUC,PRE,REC,F1,SPE,AP,SCORE");
    assert!(lines[1].starts_with("30%,") && lines[2].starts_with("50%,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = small_setup(dir.path());
    let single_line = |o: &Output| {
        let e = String::from_utf8_lossy(&o.stderr).to_string();
        assert_eq!(e.trim_end().lines().count(), 1, "{e}");
    };

    assert_eq!(mapi(&["eval", "--bogus"]).status.code(), Some(2));
    assert_eq!(mapi(&[]).status.code(), Some(2));
    assert_eq!(mapi(&["--help"]).status.code(), Some(0));

    let missing = mapi(&["eval", "--data", p(&dir.path().join("nope.csv"))]);
    assert_eq!(missing.status.code(), Some(2));
    single_line(&missing);

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "lambda_clss = 1\n").unwrap();
    let o = mapi(&["eval", "--data", &data, "--config", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    single_line(&o);
    fs::write(&bad, "paf = 2\n").unwrap();
    assert_eq!(
        mapi(&["eval", "--data", &data, "--config", p(&bad)]).status.code(),
        Some(2)
    );

    // Runtime failure: training diverges.
    fs::write(
        &bad,
        format!("{SMALL}lr = 1e300\nepochs = 20\n").replace("epochs = 2\n", ""),
    )
    .unwrap();
    let o = mapi(&["eval", "--data", &data, "--config", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    single_line(&o);

    let s = dir.path().join("s.csv");
    fs::write(&s, "1,0.2\n1,0.3\n").unwrap();
    let o = mapi(&["metrics", "--scores", p(&s)]);
    assert_eq!(o.status.code(), Some(1));
    single_line(&o);
}
