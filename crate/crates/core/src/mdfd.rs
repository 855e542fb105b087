//! Multi-dimensional feature discriminator.
//!
//! The discriminator is an autoencoder over the patient vector `x ∈ R^C`
//! whose encoder `F_sd: R^C → R^M` defines `M` semantic axes. Each feature's
//! influence on axis `m` is the absolute change of `F_sd(x)_m` when that
//! feature alone is perturbed; the top-scoring features per axis become the
//! activated set that seeds that axis's graph.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::nn::Dense;
use crate::tensor::{Activation, Matrix, ParamId, ParamSet, Tape, Var};

/// How a single feature is ablated when measuring influence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PerturbationMethod {
    #[default]
    ZeroOut,
    Halve,
    SetToOne,
}

impl PerturbationMethod {
    pub const ALL: [PerturbationMethod; 3] = [Self::ZeroOut, Self::Halve, Self::SetToOne];

    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Self::ZeroOut => 0.0,
            Self::Halve => v / 2.0,
            Self::SetToOne => 1.0,
        }
    }
}

impl fmt::Display for PerturbationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ZeroOut => "zero_out",
            Self::Halve => "halve",
            Self::SetToOne => "set_to_one",
        })
    }
}

impl FromStr for PerturbationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "zero_out" => Ok(Self::ZeroOut),
            "halve" => Ok(Self::Halve),
            "set_to_one" => Ok(Self::SetToOne),
            other => Err(format!("unknown perturbation method `{other}`")),
        }
    }
}

/// Copy of `x` with feature `i` ablated.
pub fn perturb(x: &[f64], i: usize, method: PerturbationMethod) -> Result<Vec<f64>, TensorError> {
    if i >= x.len() {
        return Err(TensorError::Index { index: i, len: x.len() });
    }
    let mut out = x.to_vec();
    out[i] = method.apply(x[i]);
    Ok(out)
}

/// Encoder `C → (C →) M` plus decoder `M → C → C`.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub input_dim: usize,
    pub semantic_dim: usize,
    pub hidden: Option<Dense>,
    /// Final linear map whose `M x C'` weight defines the semantic axes.
    pub projection: Dense,
    pub decoder: Vec<Dense>,
}

impl Discriminator {
    /// Default architecture: one smooth hidden layer of width `C` before the projection.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        input_dim: usize,
        semantic_dim: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        let c = input_dim;
        let hidden = Some(Dense::new(params, "sd.enc0", c, c, act, true, rng));
        let projection = Dense::new(params, "sd.proj", c, semantic_dim, Activation::Identity, true, rng);
        let decoder = vec![
            Dense::new(params, "sd.dec0", semantic_dim, c, act, true, rng),
            Dense::new(params, "sd.dec1", c, c, Activation::Identity, true, rng),
        ];
        Self {
            input_dim,
            semantic_dim,
            hidden,
            projection,
            decoder,
        }
    }

    /// Single bias-free linear projection `s = W_sd x` with a linear decoder.
    pub fn linear<R: Rng + ?Sized>(params: &mut ParamSet, w_sd: Matrix, rng: &mut R) -> Self {
        let (m, c) = w_sd.shape();
        let mut projection = Dense::new(params, "sd.proj", c, m, Activation::Identity, false, rng);
        *params.value_mut(projection.weight) = w_sd;
        projection.bias = None;
        let decoder = vec![Dense::new(params, "sd.dec0", m, c, Activation::Identity, true, rng)];
        Self {
            input_dim: c,
            semantic_dim: m,
            hidden: None,
            projection,
            decoder,
        }
    }

    pub fn w_sd(&self) -> ParamId {
        self.projection.weight
    }

    fn check(&self, cols: usize, rows: usize) -> Result<(), TensorError> {
        if cols != self.input_dim {
            return Err(TensorError::Shape {
                op: "project",
                lhs: (rows, cols),
                rhs: (rows, self.input_dim),
            });
        }
        Ok(())
    }

    /// `F_sd` on the tape; rows of `x` are patients.
    pub fn project(&self, t: &mut Tape, params: &ParamSet, x: Var) -> Result<Var, TensorError> {
        let (r, c) = t.shape(x);
        self.check(c, r)?;
        let h = match &self.hidden {
            Some(l) => l.forward(t, params, x)?,
            None => x,
        };
        self.projection.forward(t, params, h)
    }

    pub fn project_plain(&self, params: &ParamSet, x: &Matrix) -> Result<Matrix, TensorError> {
        self.check(x.cols(), x.rows())?;
        match &self.hidden {
            Some(l) => self.projection.apply(params, &l.apply(params, x)?),
            None => self.projection.apply(params, x),
        }
    }

    pub fn reconstruct(&self, t: &mut Tape, params: &ParamSet, s: Var) -> Result<Var, TensorError> {
        let mut h = s;
        for l in &self.decoder {
            h = l.forward(t, params, h)?;
        }
        Ok(h)
    }

    /// Weight matrices covered by the L1/L2 penalties (`Θ_sd`, biases excluded).
    pub fn weight_ids(&self) -> Vec<ParamId> {
        self.hidden
            .iter()
            .chain(std::iter::once(&self.projection))
            .chain(&self.decoder)
            .map(|d| d.weight)
            .collect()
    }
}

/// Per-patient influence of every feature on every semantic axis (`M x C`, non-negative).
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    pub patient_id: String,
    pub scores: Matrix,
}

impl InfluenceMatrix {
    pub fn semantic_dim(&self) -> usize {
        self.scores.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.scores.cols()
    }

    /// Every dimension receives the same constant score for every feature.
    pub fn uniform(patient_id: &str, m: usize, c: usize) -> Self {
        Self {
            patient_id: patient_id.to_string(),
            scores: Matrix::filled(m, c, 1.0),
        }
    }
}

/// Influence scores for one patient: one baseline pass plus one pass per perturbed feature.
pub fn influence_scores(
    x: &[f64],
    patient_id: &str,
    disc: &Discriminator,
    params: &ParamSet,
    method: PerturbationMethod,
) -> Result<InfluenceMatrix, TensorError> {
    let batch = Matrix::row_vector(x);
    let mut out = influence_scores_batch(&batch, disc, params, method)?;
    let scores = out.pop().expect("one row in, one matrix out");
    Ok(InfluenceMatrix {
        patient_id: patient_id.to_string(),
        scores,
    })
}

/// Influence matrices for every row of `xs`, evaluated in one stacked forward pass.
pub fn influence_scores_batch(
    xs: &Matrix,
    disc: &Discriminator,
    params: &ParamSet,
    method: PerturbationMethod,
) -> Result<Vec<Matrix>, TensorError> {
    let (n, c) = xs.shape();
    let m = disc.semantic_dim;
    // Row block p holds [x_p, x̂_p^(0), ..., x̂_p^(C-1)].
    let mut stacked = Matrix::zeros(n * (c + 1), c);
    for p in 0..n {
        let x = xs.row(p);
        let base = p * (c + 1);
        stacked.row_mut(base).copy_from_slice(x);
        for i in 0..c {
            let r = stacked.row_mut(base + 1 + i);
            r.copy_from_slice(x);
            r[i] = method.apply(x[i]);
        }
    }
    let proj = disc.project_plain(params, &stacked)?;
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let base = p * (c + 1);
        let s0 = proj.row(base);
        let mut scores = Matrix::zeros(m, c);
        for i in 0..c {
            let si = proj.row(base + 1 + i);
            for k in 0..m {
                scores.set(k, i, (s0[k] - si[k]).abs());
            }
        }
        out.push(scores);
    }
    Ok(out)
}

/// `max(2, ceil(paf · C))`, capped at `C`.
pub fn activated_count(c: usize, paf: f64) -> usize {
    // The small offset keeps products such as 0.07 * 100 from rounding up a whole unit.
    let n = (paf * c as f64 - 1e-9).ceil().max(0.0) as usize;
    n.max(2).min(c)
}

/// Activated feature indices per semantic dimension, each list sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    pub sets: Vec<Vec<usize>>,
    pub paf: f64,
}

impl ActivationSet {
    pub fn semantic_dim(&self) -> usize {
        self.sets.len()
    }
}

/// Top-`n` indices of a score row; ties resolved toward the lower index.
pub fn top_indices(row: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

pub fn select_activated(scores: &InfluenceMatrix, paf: f64) -> ActivationSet {
    let c = scores.feature_dim();
    let n = activated_count(c, paf);
    let sets = (0..scores.semantic_dim())
        .map(|m| top_indices(scores.scores.row(m), n))
        .collect();
    ActivationSet { sets, paf }
}

/// Regularisation weights inside the discriminator loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdWeights {
    pub l1: f64,
    pub l2: f64,
    pub orth: f64,
}

impl Default for SdWeights {
    fn default() -> Self {
        Self {
            l1: 1e-4,
            l2: 1e-4,
            orth: 1e-3,
        }
    }
}

/// The four terms of the discriminator objective, each a scalar node.
pub struct SdLossTerms {
    pub reconstruction: Var,
    pub l1: Var,
    pub l2: Var,
    pub orth: Var,
    pub total: Var,
}

/// `MSE(target, decode(F_sd(x))) + λ1‖Θ‖₁ + λ2‖Θ‖₂² + λ⊥‖W_sd W_sdᵀ − I‖_F²`.
///
/// `target` is usually `x` itself, passed separately so callers can detach it.
pub fn sd_loss(
    t: &mut Tape,
    params: &ParamSet,
    disc: &Discriminator,
    x: Var,
    target: Var,
    w: SdWeights,
) -> Result<SdLossTerms, TensorError> {
    let s = disc.project(t, params, x)?;
    let rec = disc.reconstruct(t, params, s)?;
    let reconstruction = t.mse(target, rec)?;
    let ids = disc.weight_ids();
    let mut l1 = None;
    let mut l2 = None;
    for id in ids {
        let p = t.param(params, id);
        let a = t.abs_sum(p);
        let q = t.square_sum(p);
        l1 = Some(match l1 {
            Some(prev) => t.add(prev, a)?,
            None => a,
        });
        l2 = Some(match l2 {
            Some(prev) => t.add(prev, q)?,
            None => q,
        });
    }
    let l1 = l1.expect("discriminator has at least one weight");
    let l2 = l2.expect("discriminator has at least one weight");
    let wsd = t.param(params, disc.w_sd());
    let orth = t.orth_penalty(wsd);
    let a = t.scale(l1, w.l1);
    let b = t.scale(l2, w.l2);
    let c = t.scale(orth, w.orth);
    let mut total = t.add(reconstruction, a)?;
    total = t.add(total, b)?;
    total = t.add(total, c)?;
    Ok(SdLossTerms {
        reconstruction,
        l1,
        l2,
        orth,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::check_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perturb_variants() {
        let x = [2.0, 4.0];
        assert_eq!(perturb(&x, 1, PerturbationMethod::ZeroOut).unwrap(), vec![2.0, 0.0]);
        assert_eq!(perturb(&x, 1, PerturbationMethod::Halve).unwrap(), vec![2.0, 2.0]);
        assert_eq!(perturb(&x, 0, PerturbationMethod::SetToOne).unwrap(), vec![1.0, 4.0]);
        assert!(perturb(&x, 2, PerturbationMethod::ZeroOut).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in PerturbationMethod::ALL {
            assert_eq!(m.to_string().parse::<PerturbationMethod>().unwrap(), m);
        }
    }

    #[test]
    fn zero_weights_project_to_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        let d = Discriminator::new(&mut ps, 6, 4, Activation::Tanh, &mut rng);
        for id in ps.ids().collect::<Vec<_>>() {
            let (r, c) = ps.value(id).shape();
            *ps.value_mut(id) = Matrix::zeros(r, c);
        }
        let x = Matrix::random_uniform(3, 6, -1.0, 1.0, &mut rng);
        assert_eq!(d.project_plain(&ps, &x).unwrap(), Matrix::zeros(3, 4));
    }

    #[test]
    fn linear_projection_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ps = ParamSet::new();
        let w = Matrix::random_uniform(3, 5, -1.0, 1.0, &mut rng);
        let d = Discriminator::linear(&mut ps, w.clone(), &mut rng);
        let x = Matrix::random_uniform(1, 5, -1.0, 1.0, &mut rng);
        let s = d.project_plain(&ps, &x).unwrap();
        for m in 0..3 {
            let expect: f64 = (0..5).map(|i| w.get(m, i) * x.get(0, i)).sum();
            assert!((s.get(0, m) - expect).abs() < 1e-14);
        }
        assert!(d.project_plain(&ps, &Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn full_sized_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::new();
        let d = Discriminator::new(&mut ps, 24, 24, Activation::Tanh, &mut rng);
        let x = Matrix::random_uniform(1, 24, -1.0, 1.0, &mut rng);
        assert_eq!(d.project_plain(&ps, &x).unwrap().shape(), (1, 24));
    }

    #[test]
    fn zero_encoder_column_has_zero_influence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ps = ParamSet::new();
        let mut w = Matrix::random_uniform(4, 5, -1.0, 1.0, &mut rng);
        for m in 0..4 {
            w.set(m, 2, 0.0);
        }
        let d = Discriminator::linear(&mut ps, w, &mut rng);
        let x = [0.3, -1.2, 2.0, 0.7, 1.1];
        let inf = influence_scores(&x, "p", &d, &ps, PerturbationMethod::ZeroOut).unwrap();
        for m in 0..4 {
            assert_eq!(inf.scores.get(m, 2), 0.0);
        }
    }

    #[test]
    fn linear_influence_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut ps = ParamSet::new();
            let w = Matrix::random_uniform(6, 9, -2.0, 2.0, &mut rng);
            let d = Discriminator::linear(&mut ps, w.clone(), &mut rng);
            let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let inf = influence_scores(&x, "p", &d, &ps, PerturbationMethod::ZeroOut).unwrap();
            for m in 0..6 {
                for i in 0..9 {
                    let expect = (w.get(m, i) * x[i]).abs();
                    assert!((inf.scores.get(m, i) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn duplicate_features_get_identical_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ps = ParamSet::new();
        let mut w = Matrix::random_uniform(3, 4, -1.0, 1.0, &mut rng);
        for m in 0..3 {
            let v = w.get(m, 0);
            w.set(m, 3, v);
        }
        let d = Discriminator::linear(&mut ps, w, &mut rng);
        let x = [1.5, 0.2, -0.4, 1.5];
        let inf = influence_scores(&x, "p", &d, &ps, PerturbationMethod::ZeroOut).unwrap();
        for m in 0..3 {
            assert_eq!(inf.scores.get(m, 0), inf.scores.get(m, 3));
        }
    }

    #[test]
    fn batch_matches_single_patient_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ps = ParamSet::new();
        let d = Discriminator::new(&mut ps, 7, 5, Activation::Tanh, &mut rng);
        let xs = Matrix::random_uniform(4, 7, -2.0, 2.0, &mut rng);
        for method in PerturbationMethod::ALL {
            let batch = influence_scores_batch(&xs, &d, &ps, method).unwrap();
            for p in 0..4 {
                // Independent route: explicit perturb + separate projections.
                let base = d.project_plain(&ps, &Matrix::row_vector(xs.row(p))).unwrap();
                for i in 0..7 {
                    let xp = perturb(xs.row(p), i, method).unwrap();
                    let s = d.project_plain(&ps, &Matrix::row_vector(&xp)).unwrap();
                    for m in 0..5 {
                        let e = (base.get(0, m) - s.get(0, m)).abs();
                        assert!((batch[p].get(m, i) - e).abs() < 1e-12);
                        assert!(batch[p].get(m, i) >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn activation_counts() {
        assert_eq!(activated_count(100, 0.05), 5);
        assert_eq!(activated_count(100, 0.07), 7);
        assert_eq!(activated_count(24, 0.05), 2);
        assert_eq!(activated_count(24, 0.10), 3);
        assert_eq!(activated_count(10, 1.0), 10);
        assert_eq!(activated_count(2, 0.01), 2);
    }

    #[test]
    fn select_with_ties_and_dominant_score() {
        let inf = InfluenceMatrix {
            patient_id: "p".into(),
            scores: Matrix::filled(2, 100, 0.5),
        };
        let set = select_activated(&inf, 0.05);
        assert_eq!(set.sets[0], vec![0, 1, 2, 3, 4]);
        assert_eq!(set.sets[1], vec![0, 1, 2, 3, 4]);

        let mut scores = Matrix::filled(1, 10, 0.1);
        scores.set(0, 7, 9.0);
        let inf = InfluenceMatrix {
            patient_id: "p".into(),
            scores,
        };
        let set = select_activated(&inf, 0.2);
        assert!(set.sets[0].contains(&7));
        assert_eq!(set, select_activated(&inf, 0.2));
    }

    #[test]
    fn selection_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let c = rng.gen_range(2..60);
            let row: Vec<f64> = (0..c).map(|_| (rng.gen_range(0..8) as f64) * 0.25).collect();
            let n = activated_count(c, 0.1);
            // Oracle: rank by counting strictly better entries (ties by index).
            let mut expect: Vec<usize> = (0..c)
                .filter(|&i| {
                    let better = (0..c)
                        .filter(|&j| row[j] > row[i] || (row[j] == row[i] && j < i))
                        .count();
                    better < n
                })
                .collect();
            expect.sort_unstable();
            assert_eq!(top_indices(&row, n), expect);
        }
    }

    #[test]
    fn orthogonal_projection_has_zero_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ps = ParamSet::new();
        // Rows are orthonormal: a 2x3 slice of a rotation.
        let (c, s) = (0.6, 0.8);
        let w = Matrix::from_rows(&[vec![c, -s, 0.0], vec![s, c, 0.0]]).unwrap();
        let d = Discriminator::linear(&mut ps, w, &mut rng);
        let mut t = Tape::new();
        let x = t.constant(Matrix::random_uniform(2, 3, -1.0, 1.0, &mut rng));
        let terms = sd_loss(&mut t, &ps, &d, x, x, SdWeights::default()).unwrap();
        assert!(t.value(terms.orth).get(0, 0) < 1e-15);
    }

    #[test]
    fn scaled_identity_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for (m, c) in [(4, 4), (3, 5), (5, 3)] {
            let mut ps = ParamSet::new();
            let w = Matrix::from_fn(m, c, |i, j| if i == j { 2.0 } else { 0.0 });
            let d = Discriminator::linear(&mut ps, w, &mut rng);
            let mut t = Tape::new();
            let x = t.constant(Matrix::zeros(1, c));
            let terms = sd_loss(&mut t, &ps, &d, x, x, SdWeights::default()).unwrap();
            // ‖W Wᵀ − I‖²: diagonal 3 on min(m,c) rows and -1 on the rest.
            let expect = 9.0 * m.min(c) as f64 + (m - m.min(c)) as f64;
            assert_eq!(t.value(terms.orth).get(0, 0), expect);
        }
    }

    #[test]
    fn sd_loss_matches_term_by_term_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ps = ParamSet::new();
        let d = Discriminator::new(&mut ps, 5, 3, Activation::Tanh, &mut rng);
        let x = Matrix::random_uniform(4, 5, -1.0, 1.0, &mut rng);
        let w = SdWeights {
            l1: 0.01,
            l2: 0.02,
            orth: 0.03,
        };
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let terms = sd_loss(&mut t, &ps, &d, xv, xv, w).unwrap();

        // Oracle: explicit loops over the stored weights.
        let dense = |x: &Matrix, wid: ParamId, bid: Option<ParamId>, act: Activation| {
            let wm = ps.value(wid);
            Matrix::from_fn(x.rows(), wm.rows(), |r, o| {
                let mut s: f64 = (0..wm.cols()).map(|i| x.get(r, i) * wm.get(o, i)).sum();
                if let Some(b) = bid {
                    s += ps.value(b).get(0, o);
                }
                act.apply(s)
            })
        };
        let h = dense(
            &x,
            ps.id("sd.enc0.weight").unwrap(),
            ps.id("sd.enc0.bias"),
            Activation::Tanh,
        );
        let s = dense(
            &h,
            ps.id("sd.proj.weight").unwrap(),
            ps.id("sd.proj.bias"),
            Activation::Identity,
        );
        let r1 = dense(
            &s,
            ps.id("sd.dec0.weight").unwrap(),
            ps.id("sd.dec0.bias"),
            Activation::Tanh,
        );
        let r = dense(
            &r1,
            ps.id("sd.dec1.weight").unwrap(),
            ps.id("sd.dec1.bias"),
            Activation::Identity,
        );
        let mut mse = 0.0;
        for i in 0..x.len() {
            mse += (x.data()[i] - r.data()[i]).powi(2);
        }
        mse /= x.len() as f64;
        let (mut l1, mut l2) = (0.0, 0.0);
        for name in ["sd.enc0.weight", "sd.proj.weight", "sd.dec0.weight", "sd.dec1.weight"] {
            for v in ps.value(ps.id(name).unwrap()).data() {
                l1 += v.abs();
                l2 += v * v;
            }
        }
        let wsd = ps.value(ps.id("sd.proj.weight").unwrap());
        let mut orth = 0.0;
        for i in 0..wsd.rows() {
            for j in 0..wsd.rows() {
                let dot: f64 = (0..wsd.cols()).map(|k| wsd.get(i, k) * wsd.get(j, k)).sum();
                let e = dot - if i == j { 1.0 } else { 0.0 };
                orth += e * e;
            }
        }
        let expect = mse + w.l1 * l1 + w.l2 * l2 + w.orth * orth;
        assert!((t.value(terms.total).get(0, 0) - expect).abs() < 1e-10);
    }

    #[test]
    fn zero_orth_weight_drops_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut ps = ParamSet::new();
        let w = Matrix::identity(3);
        let d = Discriminator::linear(&mut ps, w, &mut rng);
        let mut t = Tape::new();
        let x = t.constant(Matrix::random_uniform(2, 3, -1.0, 1.0, &mut rng));
        let wts = SdWeights {
            orth: 0.0,
            ..SdWeights::default()
        };
        let terms = sd_loss(&mut t, &ps, &d, x, x, wts).unwrap();
        let expect = t.value(terms.reconstruction).get(0, 0)
            + wts.l1 * t.value(terms.l1).get(0, 0)
            + wts.l2 * t.value(terms.l2).get(0, 0);
        assert_eq!(t.value(terms.total).get(0, 0), expect);
    }

    #[test]
    fn discriminator_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut ps = ParamSet::new();
        let d = Discriminator::new(&mut ps, 5, 3, Activation::Tanh, &mut rng);
        for id in ps.ids().collect::<Vec<_>>() {
            let (r, c) = ps.value(id).shape();
            ps.insert(
                ps.name(id).to_string(),
                Matrix::random_uniform(r, c, -2.0, 2.0, &mut rng),
            );
        }
        let x = Matrix::random_uniform(3, 5, -2.0, 2.0, &mut rng);
        check_params(&ps, 20, 13, |t, ps| {
            let xv = t.constant(x.clone());
            sd_loss(
                t,
                ps,
                &d,
                xv,
                xv,
                SdWeights {
                    l1: 0.0,
                    l2: 0.1,
                    orth: 0.05,
                },
            )
            .unwrap()
            .total
        });
    }
}
