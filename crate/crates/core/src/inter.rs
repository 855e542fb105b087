//! Inter-sample classification over the patient population graph.

use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result, TensorError};
use crate::nn::Mlp;
use crate::tensor::{Activation, Matrix, ParamId, ParamSet, Tape, Var};

/// Population graph: one node per patient.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortGraph {
    /// Patients' fusion vectors, one per row.
    pub features: Matrix,
    /// Symmetric 0/1 adjacency with zero diagonal.
    pub adjacency: Matrix,
    pub train_mask: Vec<usize>,
    pub test_mask: Vec<usize>,
    pub labels: Vec<Option<usize>>,
}

fn cosine_matrix(f: &Matrix) -> Matrix {
    let n = f.rows();
    let norms: Vec<f64> = (0..n)
        .map(|i| f.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut dots = Matrix::zeros(n, n);
    crate::tensor::gemm(f, false, f, true, &mut dots, 0.0);
    Matrix::from_fn(n, n, |i, j| {
        let d = norms[i] * norms[j];
        if d > 0.0 {
            dots.get(i, j) / d
        } else {
            0.0
        }
    })
}

/// Cosine k-NN adjacency, symmetrised by union; similarity ties go to the lower index.
pub fn cohort_adjacency(features: &Matrix, k_global: usize) -> Result<Matrix> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::DegenerateCohort(n));
    }
    if k_global == 0 {
        return Err(Error::Config("k_global must be at least 1".into()));
    }
    let sim = cosine_matrix(features);
    let mut adj = Matrix::zeros(n, n);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let row = sim.row(i);
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for &j in order.iter().take(k_global) {
            adj.set(i, j, 1.0);
            adj.set(j, i, 1.0);
        }
    }
    Ok(adj)
}

pub fn build_cohort_graph(
    features: Matrix,
    k_global: usize,
    labels: Vec<Option<usize>>,
    train_mask: Vec<usize>,
    test_mask: Vec<usize>,
) -> Result<CohortGraph> {
    let n = features.rows();
    if labels.len() != n {
        return Err(TensorError::Shape {
            op: "build_cohort_graph",
            lhs: features.shape(),
            rhs: (labels.len(), 1),
        }
        .into());
    }
    if let Some(&i) = train_mask.iter().find(|&&i| i >= n || labels[i].is_none()) {
        return Err(Error::Config(format!("training node {i} has no label")));
    }
    if train_mask.iter().any(|i| test_mask.contains(i)) {
        return Err(Error::Config("train and test masks overlap".into()));
    }
    let adjacency = cohort_adjacency(&features, k_global)?;
    Ok(CohortGraph {
        features,
        adjacency,
        train_mask,
        test_mask,
        labels,
    })
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn normalize_adjacency(a: &Matrix) -> Matrix {
    let n = a.rows();
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>() + 1.0).collect();
    // One rounding per entry; exactly symmetric since the degree product commutes.
    Matrix::from_fn(n, n, |i, j| {
        let v = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
        if v == 0.0 {
            0.0
        } else {
            v / (deg[i] * deg[j]).sqrt()
        }
    })
}

/// `σ(Â H Wᵀ)` with `W` stored `out x in`.
pub fn gcn_layer(
    t: &mut Tape,
    params: &ParamSet,
    h: Var,
    a_hat: Var,
    weight: ParamId,
    act: Activation,
) -> Result<Var, TensorError> {
    let w = t.param(params, weight);
    let hw = t.matmul_t(h, w)?;
    let prop = t.matmul(a_hat, hw)?;
    Ok(t.activate(prop, act))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    /// GCN layer output widths, e.g. `[64, 64]`. Empty skips graph propagation.
    pub gcn_widths: Vec<usize>,
    /// Hidden widths of the MLP head.
    pub head_hidden: Vec<usize>,
    pub classes: usize,
    pub activation: Activation,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            gcn_widths: vec![64, 64],
            head_hidden: vec![32],
            classes: 2,
            activation: Activation::Elu(1.0),
        }
    }
}

/// GCN stack followed by an MLP head producing class logits.
#[derive(Debug, Clone)]
pub struct GcnClassifier {
    pub gcn: Vec<ParamId>,
    pub head: Mlp,
    pub activation: Activation,
    pub classes: usize,
}

impl GcnClassifier {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, input_dim: usize, cfg: &ClassifierConfig, rng: &mut R) -> Self {
        let mut prev = input_dim;
        let gcn = cfg
            .gcn_widths
            .iter()
            .enumerate()
            .map(|(l, &w)| {
                let id = params.insert(format!("gcn{l}.weight"), Matrix::glorot(w, prev, rng));
                prev = w;
                id
            })
            .collect();
        let mut dims = vec![prev];
        dims.extend(&cfg.head_hidden);
        dims.push(cfg.classes);
        let head = Mlp::new(params, "head", &dims, cfg.activation, Activation::Identity, rng);
        Self {
            gcn,
            head,
            activation: cfg.activation,
            classes: cfg.classes,
        }
    }

    /// Logits for every row of `h`. `a_hat` is required whenever the classifier has GCN layers.
    pub fn forward(&self, t: &mut Tape, params: &ParamSet, h: Var, a_hat: Option<Var>) -> Result<Var, TensorError> {
        let mut h = h;
        if !self.gcn.is_empty() {
            let a = a_hat.ok_or_else(|| TensorError::Contract("GCN layers need a normalized adjacency".into()))?;
            for &w in &self.gcn {
                h = gcn_layer(t, params, h, a, w, self.activation)?;
            }
        }
        classify(t, params, &self.head, h)
    }
}

/// MLP head producing one logit row per patient.
pub fn classify(t: &mut Tape, params: &ParamSet, head: &Mlp, h: Var) -> Result<Var, TensorError> {
    let (r, c) = t.shape(h);
    if c != head.in_dim() {
        return Err(TensorError::Shape {
            op: "classify",
            lhs: (r, c),
            rhs: (r, head.in_dim()),
        });
    }
    head.forward(t, params, h)
}

/// Mean cross-entropy over the training nodes only.
pub fn cls_loss(t: &mut Tape, logits: Var, labels: &[Option<usize>], train_mask: &[usize]) -> Result<Var, TensorError> {
    let mut dense = Vec::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(v) => dense.push(*v),
            None if train_mask.contains(&i) => {
                return Err(TensorError::Contract(format!("training node {i} is unlabeled")))
            }
            None => dense.push(0),
        }
    }
    t.cross_entropy(logits, Rc::new(dense), Rc::new(train_mask.to_vec()))
}

/// Row-wise softmax probabilities.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::check_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_patients_single_edge() {
        let f = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let a = cohort_adjacency(&f, 3).unwrap();
        assert_eq!(a, Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        assert!(matches!(
            cohort_adjacency(&Matrix::zeros(1, 2), 1),
            Err(Error::DegenerateCohort(1))
        ));
    }

    #[test]
    fn identical_patients_form_complete_graph() {
        let f = Matrix::filled(6, 3, 0.4);
        let a = cohort_adjacency(&f, 1).unwrap();
        // Ties go to lower indices, so everyone links to 0 (and 0 to 1).
        for i in 1..6 {
            assert_eq!(a.get(i, 0), 1.0);
        }
        let a = cohort_adjacency(&f, 5).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(a.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn adjacency_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = Matrix::random_uniform(50, 12, -1.0, 1.0, &mut rng);
        let a = cohort_adjacency(&f, 10).unwrap();
        let cos = |i: usize, j: usize| {
            let (x, y) = (f.row(i), f.row(j));
            let d: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            d / (nx * ny)
        };
        let mut expect = Matrix::zeros(50, 50);
        for i in 0..50 {
            // Rank each j by counting strictly more similar candidates.
            for j in 0..50 {
                if i == j {
                    continue;
                }
                let better = (0..50)
                    .filter(|&q| q != i && q != j)
                    .filter(|&q| cos(i, q) > cos(i, j) || (cos(i, q) == cos(i, j) && q < j))
                    .count();
                if better < 10 {
                    expect.set(i, j, 1.0);
                    expect.set(j, i, 1.0);
                }
            }
        }
        assert_eq!(a, expect);
    }

    #[test]
    fn normalization_closed_forms() {
        assert_eq!(normalize_adjacency(&Matrix::zeros(1, 1)), Matrix::scalar(1.0));
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(normalize_adjacency(&a), Matrix::filled(2, 2, 0.5));
        assert!(spectral_radius(&normalize_adjacency(&a)) <= 1.0 + 1e-10);
    }

    fn spectral_radius(a: &Matrix) -> f64 {
        let mut v = Matrix::from_fn(a.rows(), 1, |i, _| 1.0 + i as f64 * 0.1);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = a.matmul(&v).unwrap();
            let norm = w.frobenius_sq().sqrt();
            lambda = norm / v.frobenius_sq().sqrt();
            v = w.scale(1.0 / norm);
        }
        lambda
    }

    #[test]
    fn normalized_spectrum_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in [1, 3, 10] {
            let f = Matrix::random_uniform(40, 6, -1.0, 1.0, &mut rng);
            let a_hat = normalize_adjacency(&cohort_adjacency(&f, k).unwrap());
            assert_eq!(a_hat, a_hat.transpose());
            assert!(spectral_radius(&a_hat) <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ps = ParamSet::new();
        let clf = GcnClassifier::new(&mut ps, 5, &ClassifierConfig::default(), &mut rng);
        let f = Matrix::random_uniform(12, 5, -1.0, 1.0, &mut rng);
        let perm: Vec<usize> = vec![3, 7, 0, 11, 5, 1, 9, 2, 10, 4, 8, 6];
        let run = |f: &Matrix| {
            let a = normalize_adjacency(&cohort_adjacency(f, 3).unwrap());
            let mut t = Tape::new();
            let (h, av) = (t.constant(f.clone()), t.constant(a));
            let out = clf.forward(&mut t, &ps, h, Some(av)).unwrap();
            t.value(out).clone()
        };
        let base = run(&f);
        let permuted = run(&f.select_rows(&perm));
        assert!(permuted.max_abs_diff(&base.select_rows(&perm)) < 1e-10);
    }

    #[test]
    fn gcn_single_node_and_zero_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ps = ParamSet::new();
        let w = ps.insert("w", Matrix::random_uniform(3, 4, -1.0, 1.0, &mut rng));
        let h = Matrix::random_uniform(1, 4, -1.0, 1.0, &mut rng);
        let mut t = Tape::new();
        let hv = t.constant(h.clone());
        let a = t.constant(Matrix::scalar(1.0));
        let out = gcn_layer(&mut t, &ps, hv, a, w, Activation::Tanh).unwrap();
        let direct = h.matmul(&ps.value(w).transpose()).unwrap().map(f64::tanh);
        assert!(t.value(out).max_abs_diff(&direct) < 1e-15);

        *ps.value_mut(w) = Matrix::zeros(3, 4);
        let out = gcn_layer(&mut t, &ps, hv, a, w, Activation::Sigmoid).unwrap();
        assert_eq!(t.value(out), &Matrix::filled(1, 3, 0.5));
    }

    #[test]
    fn triangle_matches_dense_oracle() {
        let mut ps = ParamSet::new();
        let w = ps.insert(
            "w",
            Matrix::from_rows(&[vec![0.2, -0.5], vec![0.7, 0.1], vec![-0.3, 0.4]]).unwrap(),
        );
        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, -0.7]]).unwrap();
        let adj = Matrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let a_hat = normalize_adjacency(&adj);
        let mut t = Tape::new();
        let (hv, av) = (t.constant(h.clone()), t.constant(a_hat));
        let out = gcn_layer(&mut t, &ps, hv, av, w, Activation::Elu(1.0)).unwrap();
        // Triangle with self-loops: every degree is 3, so Â is all 1/3.
        let wm = ps.value(w);
        let expect = Matrix::from_fn(3, 3, |i, o| {
            let _ = i;
            let s: f64 = (0..3)
                .map(|j| (0..2).map(|k| h.get(j, k) * wm.get(o, k)).sum::<f64>() / 3.0)
                .sum();
            Activation::Elu(1.0).apply(s)
        });
        assert!(t.value(out).max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn classify_shapes_and_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::new();
        let head = Mlp::new(
            &mut ps,
            "head",
            &[4, 3, 2],
            Activation::Tanh,
            Activation::Identity,
            &mut rng,
        );
        for l in &head.layers {
            *ps.value_mut(l.weight) = Matrix::zeros(l.out_dim, l.in_dim);
        }
        let mut t = Tape::new();
        let h = t.constant(Matrix::random_uniform(7, 4, -1.0, 1.0, &mut rng));
        let logits = classify(&mut t, &ps, &head, h).unwrap();
        assert_eq!(t.shape(logits), (7, 2));
        let p = softmax_rows(t.value(logits));
        assert!(p.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let bad = t.constant(Matrix::zeros(2, 5));
        assert!(classify(&mut t, &ps, &head, bad).is_err());

        let p = softmax_rows(&Matrix::row_vector(&[2.0, 0.0]));
        assert!((p.get(0, 0) - 0.881).abs() < 1e-3);
        assert!((p.get(0, 1) - 0.119).abs() < 1e-3);
    }

    #[test]
    fn cls_loss_closed_forms_and_oracle() {
        let mut t = Tape::new();
        let z = t.constant(Matrix::zeros(2, 2));
        let l = cls_loss(&mut t, z, &[Some(0), Some(1)], &[0, 1]).unwrap();
        assert!((t.value(l).get(0, 0) - std::f64::consts::LN_2).abs() < 1e-12);

        let z = t.constant(Matrix::from_rows(&[vec![40.0, -40.0], vec![-40.0, 40.0]]).unwrap());
        let l = cls_loss(&mut t, z, &[Some(0), Some(1)], &[0, 1]).unwrap();
        assert!(t.value(l).get(0, 0) < 1e-30);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let logits = Matrix::random_uniform(6, 3, -2.0, 2.0, &mut rng);
        let labels = [Some(2), Some(0), None, Some(1), Some(1), None];
        let mask = [0, 1, 3, 4];
        let z = t.constant(logits.clone());
        let l = cls_loss(&mut t, z, &labels, &mask).unwrap();
        let mut expect = 0.0;
        for &r in &mask {
            let row = logits.row(r);
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            expect -= (row[labels[r].unwrap()].exp() / z).ln();
        }
        expect /= mask.len() as f64;
        assert!((t.value(l).get(0, 0) - expect).abs() < 1e-10);
        assert!(cls_loss(&mut t, z, &labels, &[2]).is_err());
        assert!(cls_loss(&mut t, z, &labels, &[]).is_err());
    }

    #[test]
    fn classifier_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamSet::new();
        let cfg = ClassifierConfig {
            gcn_widths: vec![5, 4],
            head_hidden: vec![3],
            classes: 2,
            activation: Activation::Elu(1.0),
        };
        let clf = GcnClassifier::new(&mut ps, 6, &cfg, &mut rng);
        for id in ps.ids().collect::<Vec<_>>() {
            let (r, c) = ps.value(id).shape();
            ps.insert(
                ps.name(id).to_string(),
                Matrix::random_uniform(r, c, -2.0, 2.0, &mut rng),
            );
        }
        let f = Matrix::random_uniform(8, 6, -2.0, 2.0, &mut rng);
        let a_hat = normalize_adjacency(&cohort_adjacency(&f, 2).unwrap());
        let labels: Vec<Option<usize>> = (0..8).map(|i| Some(i % 2)).collect();
        check_params(&ps, 20, 5, |t, ps| {
            let h = t.constant(f.clone());
            let a = t.constant(a_hat.clone());
            let logits = clf.forward(t, ps, h, Some(a)).unwrap();
            cls_loss(t, logits, &labels, &[0, 1, 2, 5, 6]).unwrap()
        });
    }
}
