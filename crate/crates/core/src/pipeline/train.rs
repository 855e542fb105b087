//! Full-batch training, cross-validation and reports.

use std::fmt::{self, Write as _};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compression::Standardizer;
use crate::data::Dataset;
use crate::error::{Error, Result, TensorError};
use crate::inter::{cls_loss, softmax_rows};
use crate::metrics::{compute_metrics, Metrics};
use crate::tensor::{AdamConfig, Matrix, Tape};

use super::config::{total_loss, TrainConfig};
use super::model::{Model, Structure};

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub l_cls: f64,
    pub l_rep: f64,
    pub l_sd: f64,
    pub total: f64,
}

pub struct TrainedFold {
    pub model: Model,
    pub history: Vec<LossRecord>,
    /// Class probabilities for every patient, `N x classes`.
    pub probabilities: Matrix,
    /// Structure used for the final predictions.
    pub structure: Structure,
}

/// Per-modality z-scores with statistics from the training rows only.
pub fn standardize(ds: &Dataset, train: &[usize]) -> Vec<Matrix> {
    ds.raw.iter().map(|m| Standardizer::fit(m, train).apply(m)).collect()
}

fn fold_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_split(ds: &Dataset, split: &Split) -> Result<()> {
    let n = ds.len();
    let mut seen = vec![false; n];
    for &i in split.train.iter().chain(&split.test) {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Config(format!("split index {i} is out of range or repeated")));
        }
    }
    if split.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let classes = ds.classes();
    for c in 0..classes {
        if !split.train.iter().any(|&i| ds.labels[i] == c) {
            return Err(Error::Stratification(format!(
                "class {c} is absent from the training split"
            )));
        }
    }
    Ok(())
}

/// Trains one model on `split.train`; test patients take part transductively, without labels.
pub fn train_fold(ds: &Dataset, split: &Split, cfg: &TrainConfig, stream: u64) -> Result<TrainedFold> {
    cfg.validate()?;
    check_split(ds, split)?;
    let raws = standardize(ds, &split.train);
    let mut rng = fold_rng(cfg.seed, stream);
    let mut model = Model::new(&ds.modalities, ds.classes(), cfg, &mut rng)?;
    let adam = AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    };

    // During training only labels of the training split are visible.
    let mut labels: Vec<Option<usize>> = vec![None; ds.len()];
    for &i in &split.train {
        labels[i] = Some(ds.labels[i]);
    }
    let (rows, train_labels, mask): (Option<&[usize]>, Vec<Option<usize>>, Vec<usize>) = if cfg.attach_at_eval {
        let l = split.train.iter().map(|&i| labels[i]).collect();
        (Some(&split.train), l, (0..split.train.len()).collect())
    } else {
        (None, labels.clone(), split.train.clone())
    };

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut structure: Option<Structure> = None;
    for epoch in 1..=cfg.epochs {
        if (epoch - 1) % cfg.refresh_every == 0 {
            structure = None;
        }
        let mut t = Tape::new();
        let forward = model
            .forward(&mut t, &raws, &ds.ids, &mut structure)
            .and_then(|enc| Ok((model.classify(&mut t, enc.fusion, rows)?, enc)));
        let (logits, enc) = match forward {
            Err(Error::Tensor(TensorError::NonFinite(_))) => return Err(Error::Divergence { epoch }),
            r => r?,
        };
        let l_cls = cls_loss(&mut t, logits, &train_labels, &mask)?;
        let l_sd = model.sd_loss(&mut t, enc.x, enc.recon)?;
        let total = total_loss(&mut t, l_cls, enc.rep, l_sd, cfg)?;
        let scalar = |v| t.value(v).get(0, 0);
        let rec = LossRecord {
            epoch,
            l_cls: scalar(l_cls),
            l_rep: scalar(enc.rep),
            l_sd: scalar(l_sd),
            total: scalar(total),
        };
        if !rec.total.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(rec);
        t.backward(total, &mut model.params)?;
        if !model.params.grads_finite() {
            return Err(Error::Divergence { epoch });
        }
        model.params.adam_step(&adam);
        if !model.params.values_finite() {
            return Err(Error::Divergence { epoch });
        }
    }

    // Final transductive pass over the whole cohort with freshly scored structure.
    let mut structure = None;
    let mut t = Tape::new();
    let enc = model.forward(&mut t, &raws, &ds.ids, &mut structure)?;
    let logits = model.classify(&mut t, enc.fusion, None)?;
    let probabilities = softmax_rows(t.value(logits));
    Ok(TrainedFold {
        model,
        history,
        probabilities,
        structure: structure.expect("built by forward"),
    })
}

/// Influence matrices and graph stacks of every patient under a freshly initialized model.
pub fn construct(ds: &Dataset, cfg: &TrainConfig) -> Result<Structure> {
    cfg.validate()?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let raws = standardize(ds, &all);
    let model = Model::new(&ds.modalities, ds.classes(), cfg, &mut fold_rng(cfg.seed, 0))?;
    let mut t = Tape::new();
    let comp = model.compress(&mut t, &raws)?;
    model.structure(t.value(comp.features), &ds.ids)
}

/// Out-of-fold scores as `label,score` CSV.
pub fn scores_csv(labels: &[usize], scores: &[f64]) -> String {
    let mut s = String::from("label,score\n");
    for (l, p) in labels.iter().zip(scores) {
        writeln!(s, "{l},{p}").unwrap();
    }
    s
}

/// Seeded stratified assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || labels.len() < folds {
        return Err(Error::Config(format!(
            "{} patients cannot be split into {folds} folds",
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = fold_rng(seed, 0);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {c} has {} patient(s); every training split needs it",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub test_size: usize,
    /// `None` when the test fold holds a single class.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub folds: Vec<FoldReport>,
    /// Mean over folds with defined metrics; pooled metrics if no fold has both classes.
    pub mean: Metrics,
    /// Metrics of all out-of-fold predictions taken together.
    pub pooled: Metrics,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fold in &self.folds {
            writeln!(f, "[fold {}]", fold.fold)?;
            writeln!(f, "n_test: {}", fold.test_size)?;
            match &fold.metrics {
                Some(m) => writeln!(f, "{m}")?,
                None => writeln!(f, "status: single-class test fold")?,
            }
            writeln!(f)?;
        }
        let defined = self.folds.iter().filter(|r| r.metrics.is_some()).count();
        writeln!(f, "[mean]")?;
        writeln!(f, "folds: {defined}")?;
        writeln!(f, "{}", self.mean)?;
        writeln!(f)?;
        writeln!(f, "[pooled]")?;
        writeln!(f, "{}", self.pooled)
    }
}

pub struct KFoldOutcome {
    pub report: MetricReport,
    /// Loss history of each fold.
    pub histories: Vec<Vec<LossRecord>>,
    /// Out-of-fold probability of class 1 for every patient.
    pub scores: Vec<f64>,
}

/// Loss histories as CSV.
pub fn history_csv(histories: &[Vec<LossRecord>]) -> String {
    let mut s = String::from("fold,epoch,l_cls,l_rep,l_sd,l_total\n");
    for (f, h) in histories.iter().enumerate() {
        for r in h {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                f + 1,
                r.epoch,
                r.l_cls,
                r.l_rep,
                r.l_sd,
                r.total
            )
            .unwrap();
        }
    }
    s
}

/// Stratified k-fold evaluation; folds run on up to `jobs` threads.
pub fn kfold_evaluate(ds: &Dataset, cfg: &TrainConfig, jobs: usize) -> Result<KFoldOutcome> {
    cfg.validate()?;
    if ds.classes() > 2 {
        return Err(Error::Config("evaluation metrics need binary labels".into()));
    }
    let folds = stratified_folds(&ds.labels, cfg.folds, cfg.seed)?;
    let k = folds.len();
    type FoldResult = Result<(Vec<LossRecord>, Vec<f64>)>;
    let results: Mutex<Vec<Option<FoldResult>>> = Mutex::new((0..k).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let f = next.fetch_add(1, Ordering::SeqCst);
        if f >= k {
            break;
        }
        let split = Split {
            train: folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.clone())
                .collect(),
            test: folds[f].clone(),
        };
        let r = train_fold(ds, &split, cfg, f as u64 + 1)
            .map(|tf| (tf.history, (0..ds.len()).map(|i| tf.probabilities.get(i, 1)).collect()));
        results.lock().unwrap()[f] = Some(r);
    };
    let jobs = jobs.clamp(1, k);
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }

    let mut histories = Vec::with_capacity(k);
    let mut scores = vec![0.0; ds.len()];
    let mut fold_reports = Vec::with_capacity(k);
    for (f, r) in results.into_inner().unwrap().into_iter().enumerate() {
        let (hist, probs) = r.expect("every fold ran")?;
        let test = &folds[f];
        let y: Vec<usize> = test.iter().map(|&i| ds.labels[i]).collect();
        let s: Vec<f64> = test.iter().map(|&i| probs[i]).collect();
        for (&i, &p) in test.iter().zip(&s) {
            scores[i] = p;
        }
        let metrics = match compute_metrics(&y, &s, cfg.threshold) {
            Ok(m) => Some(m),
            Err(Error::SingleClass) => None,
            Err(e) => return Err(e),
        };
        fold_reports.push(FoldReport {
            fold: f + 1,
            test_size: test.len(),
            metrics,
        });
        histories.push(hist);
    }
    let pooled = compute_metrics(&ds.labels, &scores, cfg.threshold)?;
    let defined: Vec<Metrics> = fold_reports.iter().filter_map(|r| r.metrics).collect();
    let mean = Metrics::mean(&defined).unwrap_or(pooled);
    Ok(KFoldOutcome {
        report: MetricReport {
            folds: fold_reports,
            mean,
            pooled,
        },
        histories,
        scores,
    })
}
