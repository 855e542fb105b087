//! Binary classification metrics.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(labels: &[usize], scores: &[f64], threshold: f64) -> Self {
        let mut c = Self::default();
        for (&y, &s) in labels.iter().zip(scores) {
            match (y == 1, s >= threshold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// One row of results; every rate lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub acc: f64,
    pub auc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
    pub spe: f64,
    pub ap: f64,
    pub score: f64,
    pub confusion: Confusion,
}

impl Metrics {
    pub const NAMES: [&'static str; 8] = ["ACC", "AUC", "PRE", "REC", "F1", "SPE", "AP", "SCORE"];

    pub fn values(&self) -> [f64; 8] {
        [
            self.acc, self.auc, self.pre, self.rec, self.f1, self.spe, self.ap, self.score,
        ]
    }

    /// Arithmetic mean of each rate; confusion counts are summed.
    pub fn mean(rows: &[Metrics]) -> Option<Metrics> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let mut confusion = Confusion::default();
        for r in rows {
            confusion.tp += r.confusion.tp;
            confusion.fp += r.confusion.fp;
            confusion.tn += r.confusion.tn;
            confusion.fn_ += r.confusion.fn_;
        }
        Some(Metrics {
            acc: avg(|m| m.acc),
            auc: avg(|m| m.auc),
            pre: avg(|m| m.pre),
            rec: avg(|m| m.rec),
            f1: avg(|m| m.f1),
            spe: avg(|m| m.spe),
            ap: avg(|m| m.ap),
            score: avg(|m| m.score),
            confusion,
        })
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, v) in Self::NAMES.iter().zip(self.values()) {
            writeln!(f, "{name}: {v:.6}")?;
        }
        let c = &self.confusion;
        writeln!(f, "TP: {}", c.tp)?;
        writeln!(f, "FP: {}", c.fp)?;
        writeln!(f, "TN: {}", c.tn)?;
        write!(f, "FN: {}", c.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn class_counts(labels: &[usize]) -> Result<(usize, usize)> {
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Config(format!("label {bad} is not binary")));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score (stable).
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Mann-Whitney statistic with half credit for ties.
pub fn roc_auc(labels: &[usize], scores: &[f64]) -> Result<f64> {
    let (pos, neg) = class_counts(labels)?;
    let order = descending(scores);
    // Walk tie groups from the top; each positive beats every negative ranked strictly below.
    let mut neg_above = 0usize;
    let mut concordant = 0.0;
    let mut g = 0;
    while g < order.len() {
        let mut end = g;
        while end < order.len() && scores[order[end]] == scores[order[g]] {
            end += 1;
        }
        let p = order[g..end].iter().filter(|&&i| labels[i] == 1).count();
        let n = end - g - p;
        concordant += p as f64 * (neg - neg_above - n) as f64 + 0.5 * (p * n) as f64;
        neg_above += n;
        g = end;
    }
    Ok(concordant / (pos as f64 * neg as f64))
}

/// Area under precision-recall as `sum (R_k - R_{k-1}) P_k` over distinct thresholds.
pub fn average_precision(labels: &[usize], scores: &[f64]) -> Result<f64> {
    let (pos, _) = class_counts(labels)?;
    let order = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut g = 0;
    while g < order.len() {
        let mut end = g;
        while end < order.len() && scores[order[end]] == scores[order[g]] {
            if labels[order[end]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
        prev_recall = recall;
        g = end;
    }
    Ok(ap)
}

/// Scores at or above `threshold` are predicted positive.
pub fn compute_metrics(labels: &[usize], scores: &[f64], threshold: f64) -> Result<Metrics> {
    if labels.len() != scores.len() {
        return Err(Error::Config(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Config(format!("score {s} outside [0, 1]")));
    }
    let auc = roc_auc(labels, scores)?;
    let ap = average_precision(labels, scores)?;
    let c = Confusion::from_predictions(labels, scores, threshold);
    let pre = ratio(c.tp, c.tp + c.fp);
    let rec = ratio(c.tp, c.tp + c.fn_);
    let f1 = if pre + rec > 0.0 {
        2.0 * pre * rec / (pre + rec)
    } else {
        0.0
    };
    Ok(Metrics {
        acc: ratio(c.tp + c.tn, c.total()),
        auc,
        pre,
        rec,
        f1,
        spe: ratio(c.tn, c.tn + c.fp),
        ap,
        score: (auc + ap) / 2.0,
        confusion: c,
    })
}
