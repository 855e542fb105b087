//! Training configuration and its flat `key = value` text form.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result, TensorError};
use crate::mdfd::{PerturbationMethod, SdWeights};
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of semantic dimensions `M`.
    pub semantic_dim: usize,
    /// Neighbours per activated feature in each activation graph.
    pub k: usize,
    /// Neighbours per patient in the cohort graph.
    pub k_global: usize,
    /// Proportion of activated features.
    pub paf: f64,
    pub perturbation: PerturbationMethod,
    pub lambda_cls: f64,
    pub lambda_rep: f64,
    pub lambda_sd: f64,
    pub lambda_orth: f64,
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub disable_mdfd: bool,
    pub disable_magcs: bool,
    pub disable_hfdan: bool,
    /// Influence scores and activation graphs are rebuilt every this many epochs.
    pub refresh_every: usize,
    pub per_plane_encoders: bool,
    /// Train on a cohort graph of training patients only; attach test patients at evaluation.
    pub attach_at_eval: bool,
    pub threshold: f64,
    /// Compressed width of each modality (capped at its raw width).
    pub latent_dim: usize,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            semantic_dim: 24,
            k: 5,
            k_global: 10,
            paf: 0.05,
            perturbation: PerturbationMethod::ZeroOut,
            lambda_cls: 1.0,
            lambda_rep: 0.3,
            lambda_sd: 1.0,
            lambda_orth: 1e-3,
            lambda_l1: 1e-4,
            lambda_l2: 1e-4,
            lr: 1e-3,
            epochs: 30,
            seed: 7,
            disable_mdfd: false,
            disable_magcs: false,
            disable_hfdan: false,
            refresh_every: 1,
            per_plane_encoders: false,
            attach_at_eval: false,
            threshold: 0.5,
            latent_dim: 8,
            folds: 5,
        }
    }
}

const KEYS: [&str; 23] = [
    "M",
    "k",
    "k_global",
    "paf",
    "perturbation",
    "lambda_cls",
    "lambda_rep",
    "lambda_sd",
    "lambda_orth",
    "lambda_l1",
    "lambda_l2",
    "lr",
    "epochs",
    "seed",
    "disable_mdfd",
    "disable_magcs",
    "disable_hfdan",
    "refresh_every",
    "per_plane_encoders",
    "attach_at_eval",
    "threshold",
    "latent_dim",
    "folds",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        let lambdas = [
            self.lambda_cls,
            self.lambda_rep,
            self.lambda_sd,
            self.lambda_orth,
            self.lambda_l1,
            self.lambda_l2,
        ];
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return fail("loss weights must be finite and >= 0");
        }
        if !(self.paf > 0.0 && self.paf <= 1.0) {
            return fail("paf must lie in (0, 1]");
        }
        if self.semantic_dim == 0 || self.k == 0 || self.k_global == 0 {
            return fail("M, k and k_global must be at least 1");
        }
        if self.epochs == 0 || self.refresh_every == 0 {
            return fail("epochs and refresh_every must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail("threshold must lie in (0, 1)");
        }
        if self.latent_dim == 0 {
            return fail("latent_dim must be at least 1");
        }
        if self.folds < 2 {
            return fail("folds must be at least 2");
        }
        Ok(())
    }

    pub fn sd_weights(&self) -> SdWeights {
        SdWeights {
            l1: self.lambda_l1,
            l2: self.lambda_l2,
            orth: self.lambda_orth,
        }
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
        }
        let v = value.trim();
        match key {
            "M" => self.semantic_dim = num(key, v)?,
            "k" => self.k = num(key, v)?,
            "k_global" => self.k_global = num(key, v)?,
            "paf" => self.paf = num(key, v)?,
            "perturbation" => self.perturbation = v.parse().map_err(Error::Config)?,
            "lambda_cls" => self.lambda_cls = num(key, v)?,
            "lambda_rep" => self.lambda_rep = num(key, v)?,
            "lambda_sd" => self.lambda_sd = num(key, v)?,
            "lambda_orth" => self.lambda_orth = num(key, v)?,
            "lambda_l1" => self.lambda_l1 = num(key, v)?,
            "lambda_l2" => self.lambda_l2 = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "disable_mdfd" => self.disable_mdfd = num(key, v)?,
            "disable_magcs" => self.disable_magcs = num(key, v)?,
            "disable_hfdan" => self.disable_hfdan = num(key, v)?,
            "refresh_every" => self.refresh_every = num(key, v)?,
            "per_plane_encoders" => self.per_plane_encoders = num(key, v)?,
            "attach_at_eval" => self.attach_at_eval = num(key, v)?,
            "threshold" => self.threshold = num(key, v)?,
            "latent_dim" => self.latent_dim = num(key, v)?,
            "folds" => self.folds = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, got `{line}`"),
            })?;
            cfg.set(k.trim(), v).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let vals: [String; 23] = [
            self.semantic_dim.to_string(),
            self.k.to_string(),
            self.k_global.to_string(),
            self.paf.to_string(),
            self.perturbation.to_string(),
            self.lambda_cls.to_string(),
            self.lambda_rep.to_string(),
            self.lambda_sd.to_string(),
            self.lambda_orth.to_string(),
            self.lambda_l1.to_string(),
            self.lambda_l2.to_string(),
            self.lr.to_string(),
            self.epochs.to_string(),
            self.seed.to_string(),
            self.disable_mdfd.to_string(),
            self.disable_magcs.to_string(),
            self.disable_hfdan.to_string(),
            self.refresh_every.to_string(),
            self.per_plane_encoders.to_string(),
            self.attach_at_eval.to_string(),
            self.threshold.to_string(),
            self.latent_dim.to_string(),
            self.folds.to_string(),
        ];
        for (k, v) in KEYS.iter().zip(vals) {
            writeln!(s, "{k} = {v}")?;
        }
        f.write_str(&s)
    }
}

/// `λ_cls L_cls + λ_rep L_rep + λ_sd L_sd`.
pub fn total_loss(t: &mut Tape, l_cls: Var, l_rep: Var, l_sd: Var, cfg: &TrainConfig) -> Result<Var> {
    let w = [cfg.lambda_cls, cfg.lambda_rep, cfg.lambda_sd];
    if w.iter().any(|l| l.is_nan() || *l < 0.0) {
        return Err(Error::Config("loss weights must be >= 0".into()));
    }
    for v in [l_cls, l_rep, l_sd] {
        let shape = t.shape(v);
        if shape != (1, 1) {
            return Err(TensorError::NonScalarOutput(shape.0, shape.1).into());
        }
    }
    let a = t.scale(l_cls, w[0]);
    let b = t.scale(l_rep, w[1]);
    let c = t.scale(l_sd, w[2]);
    let ab = t.add(a, b)?;
    Ok(t.add(ab, c)?)
}
