//! Dataset files, synthetic cohorts and artifact export.
//!
//! All formats are line-oriented text with `,` separators. Floats are written
//! with Rust's shortest round-trip formatting, so save/load is lossless.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::magcs::{Edge, GraphStack};
use crate::mdfd::InfluenceMatrix;
use crate::tensor::Matrix;

/// Raw modality as declared in a dataset header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modality {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub modalities: Vec<Modality>,
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    /// One `N x dim` matrix per modality.
    pub raw: Vec<Matrix>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Raw features of patient `p` for modality `m`.
    pub fn modality_row(&self, m: usize, p: usize) -> &[f64] {
        self.raw[m].row(p)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = self
            .modalities
            .iter()
            .map(|m| format!("{}:{}", m.name, m.dim))
            .collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for p in 0..self.len() {
            write!(s, "{},{}", self.ids[p], self.labels[p]).unwrap();
            for m in &self.raw {
                for v in m.row(p) {
                    write!(s, ",{v}").unwrap();
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let mut modalities = Vec::new();
        for tok in header.split(',') {
            let bad = || Error::Parse {
                line: 1,
                msg: format!("header token `{tok}` is not name:dim"),
            };
            let (name, dim) = tok.trim().split_once(':').ok_or_else(bad)?;
            let dim: usize = dim.parse().map_err(|_| bad())?;
            if name.is_empty() || dim == 0 {
                return Err(bad());
            }
            modalities.push(Modality {
                name: name.to_string(),
                dim,
            });
        }
        let width: usize = modalities.iter().map(|m| m.dim).sum();
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut flat: Vec<Vec<f64>> = vec![Vec::new(); modalities.len()];
        let mut seen = HashSet::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != width + 2 {
                return Err(err(format!(
                    "row has {} features, schema declares {width}",
                    fields.len().saturating_sub(2)
                )));
            }
            let id = fields[0];
            if id.is_empty() || !seen.insert(id.to_string()) {
                return Err(err(format!("duplicate or empty patient id `{id}`")));
            }
            let label: usize = fields[1]
                .parse()
                .map_err(|_| err(format!("unknown label `{}`", fields[1])))?;
            let mut off = 2;
            for (m, spec) in modalities.iter().enumerate() {
                for f in &fields[off..off + spec.dim] {
                    let v: f64 = f.parse().map_err(|_| err(format!("bad number `{f}`")))?;
                    if !v.is_finite() {
                        return Err(err(format!("non-finite value `{f}`")));
                    }
                    flat[m].push(v);
                }
                off += spec.dim;
            }
            ids.push(id.to_string());
            labels.push(label);
        }
        let n = ids.len();
        let raw = modalities
            .iter()
            .zip(flat)
            .map(|(spec, data)| Matrix::from_vec(n, spec.dim, data))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            modalities,
            ids,
            labels,
            raw,
        })
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::parse(&std::fs::read_to_string(path)?)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ds.to_text())?;
    Ok(())
}

/// Class-conditional Gaussian cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub classes: usize,
    pub modality_dims: Vec<usize>,
    /// Informative features at the start of each modality.
    pub informative: usize,
    pub noise: f64,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 440,
            classes: 2,
            modality_dims: vec![32, 32, 32],
            informative: 4,
            noise: 1.0,
            separation: 4.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 || self.n < 2 * self.classes {
            return bad(format!(
                "need at least two patients per class, got n={} classes={}",
                self.n, self.classes
            ));
        }
        if self.modality_dims.is_empty() || self.modality_dims.contains(&0) {
            return bad("every modality needs a positive width".into());
        }
        if self.modality_dims.iter().any(|&d| self.informative > d) {
            return bad(format!(
                "informative count {} exceeds a modality width",
                self.informative
            ));
        }
        if self.noise.is_nan() || self.noise < 0.0 || !self.separation.is_finite() {
            return bad("noise must be >= 0 and separation finite".into());
        }
        Ok(())
    }

    /// Class mean of informative feature `f`: `+s/2` when `f % classes == class`, else `-s/2`.
    pub fn mean(&self, f: usize, class: usize) -> f64 {
        if f >= self.informative {
            0.0
        } else if f % self.classes == class {
            self.separation / 2.0
        } else {
            -self.separation / 2.0
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut rng);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let raw = spec
        .modality_dims
        .iter()
        .map(|&d| Matrix::from_fn(spec.n, d, |p, f| spec.mean(f, labels[p]) + noise.sample(&mut rng)))
        .collect();
    let width = (spec.n.max(1) - 1).to_string().len();
    Ok(Dataset {
        modalities: spec
            .modality_dims
            .iter()
            .enumerate()
            .map(|(i, &dim)| Modality {
                name: format!("m{}", i + 1),
                dim,
            })
            .collect(),
        ids: (0..spec.n).map(|i| format!("p{i:0width$}")).collect(),
        labels,
        raw,
    })
}

/// Construction parameters echoed in graph export headers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphHeader {
    pub c: usize,
    pub m: usize,
    pub k: usize,
    pub paf: f64,
}

/// Header `patient=..,C=..,M=..,k=..,paf=..` followed by `m,i,j,w` lines.
pub fn graphs_to_text(stack: &GraphStack, header: GraphHeader) -> String {
    let mut s = format!(
        "patient={},C={},M={},k={},paf={}\n",
        stack.patient_id, header.c, header.m, header.k, header.paf
    );
    for g in &stack.graphs {
        for e in &g.edges {
            writeln!(s, "{},{},{},{}", g.dimension, e.i, e.j, e.w).unwrap();
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphExport {
    pub patient_id: String,
    pub header: GraphHeader,
    /// `(dimension, edge)` in file order.
    pub edges: Vec<(usize, Edge)>,
}

impl GraphExport {
    /// Edges of dimension `m`.
    pub fn section(&self, m: usize) -> Vec<Edge> {
        self.edges.iter().filter(|(d, _)| *d == m).map(|(_, e)| *e).collect()
    }

    pub fn section_count(&self) -> usize {
        let mut dims: Vec<usize> = self.edges.iter().map(|(d, _)| *d).collect();
        dims.dedup();
        dims.len()
    }
}

pub fn parse_graphs(text: &str) -> Result<GraphExport> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let herr = |msg: String| Error::Parse { line: 1, msg };
    let mut patient_id = None;
    let (mut c, mut m, mut k, mut paf) = (None, None, None, None);
    for tok in head.split(',') {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| herr(format!("bad header token `{tok}`")))?;
        let num = || val.parse::<usize>().map_err(|_| herr(format!("bad value for {key}")));
        match key {
            "patient" => patient_id = Some(val.to_string()),
            "C" => c = Some(num()?),
            "M" => m = Some(num()?),
            "k" => k = Some(num()?),
            "paf" => paf = Some(val.parse::<f64>().map_err(|_| herr("bad paf".into()))?),
            other => return Err(herr(format!("unknown header key `{other}`"))),
        }
    }
    let header = match (c, m, k, paf) {
        (Some(c), Some(m), Some(k), Some(paf)) => GraphHeader { c, m, k, paf },
        _ => return Err(herr("header must define C, M, k and paf".into())),
    };
    let mut edges = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: i + 1,
            msg: format!("{msg}: `{line}`"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err("expected m,i,j,w"));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| err("bad index"));
        let (d, a, b) = (idx(f[0])?, idx(f[1])?, idx(f[2])?);
        let w: f64 = f[3].parse().map_err(|_| err("bad weight"))?;
        if d >= header.m || a >= header.c || b >= header.c {
            return Err(err("index out of range"));
        }
        edges.push((d, Edge { i: a, j: b, w }));
    }
    Ok(GraphExport {
        patient_id: patient_id.unwrap_or_default(),
        header,
        edges,
    })
}

pub fn export_graphs(stack: &GraphStack, header: GraphHeader, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, graphs_to_text(stack, header))?;
    Ok(())
}

/// `M` lines of `C` comma-separated scores.
pub fn influence_to_text(inf: &InfluenceMatrix) -> String {
    let mut s = String::new();
    for r in 0..inf.scores.rows() {
        let row: Vec<String> = inf.scores.row(r).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_influence(text: &str, patient_id: &str) -> Result<InfluenceMatrix> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok(InfluenceMatrix {
        patient_id: patient_id.to_string(),
        scores: Matrix::from_rows(&rows)?,
    })
}

pub fn export_influence(inf: &InfluenceMatrix, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, influence_to_text(inf))?;
    Ok(())
}

/// `label,score` lines, optionally preceded by a `label,score` header.
pub fn parse_scores(text: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let (mut labels, mut scores) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("label")) {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: i + 1,
            msg: format!("{msg}: `{line}`"),
        };
        let (l, s) = line.split_once(',').ok_or_else(|| err("expected label,score"))?;
        labels.push(l.trim().parse().map_err(|_| err("bad label"))?);
        scores.push(s.trim().parse().map_err(|_| err("bad score"))?);
    }
    Ok((labels, scores))
}
