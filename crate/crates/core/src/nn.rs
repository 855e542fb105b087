//! Fully connected layers on top of the tape.

use rand::Rng;

use crate::error::TensorError;
use crate::tensor::{gemm, Activation, Matrix, ParamId, ParamSet, Tape, Var};

/// `act(x · Wᵀ + b)` with `W` stored as `out x in`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub act: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = params.insert(format!("{name}.weight"), Matrix::glorot(out_dim, in_dim, rng));
        let bias = with_bias.then(|| params.insert(format!("{name}.bias"), Matrix::zeros(1, out_dim)));
        Self {
            weight,
            bias,
            act,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, t: &mut Tape, params: &ParamSet, x: Var) -> Result<Var, TensorError> {
        let w = t.param(params, self.weight);
        let mut h = t.matmul_t(x, w)?;
        if let Some(b) = self.bias {
            let b = t.param(params, b);
            h = t.add_bias(h, b)?;
        }
        Ok(t.activate(h, self.act))
    }

    /// Tape-free evaluation for inference-only paths.
    pub fn apply(&self, params: &ParamSet, x: &Matrix) -> Result<Matrix, TensorError> {
        let w = params.value(self.weight);
        if x.cols() != w.cols() {
            return Err(TensorError::Shape {
                op: "dense",
                lhs: x.shape(),
                rhs: w.shape(),
            });
        }
        let mut h = Matrix::zeros(x.rows(), w.rows());
        gemm(x, false, w, true, &mut h, 0.0);
        let cols = h.cols();
        if let Some(b) = self.bias {
            let b = params.value(b).data();
            for (i, v) in h.data_mut().iter_mut().enumerate() {
                *v += b[i % cols];
            }
        }
        if self.act != Activation::Identity {
            for v in h.data_mut() {
                *v = self.act.apply(*v);
            }
        }
        Ok(h)
    }

    /// Weight (not bias) parameter ids.
    pub fn weight_ids(&self) -> [ParamId; 1] {
        [self.weight]
    }
}

/// A chain of [`Dense`] layers.
#[derive(Debug, Clone, Default)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Builds `dims[0] -> dims[1] -> ... -> dims[last]`; hidden layers use `hidden_act`,
    /// the last uses `out_act`.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        dims: &[usize],
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut R,
    ) -> Self {
        let n = dims.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { out_act } else { hidden_act };
                Dense::new(params, &format!("{name}.{i}"), dims[i], dims[i + 1], act, true, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, t: &mut Tape, params: &ParamSet, mut x: Var) -> Result<Var, TensorError> {
        for l in &self.layers {
            x = l.forward(t, params, x)?;
        }
        Ok(x)
    }

    pub fn apply(&self, params: &ParamSet, x: &Matrix) -> Result<Matrix, TensorError> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.apply(params, &h)?;
        }
        Ok(h)
    }

    pub fn weight_ids(&self) -> Vec<ParamId> {
        self.layers.iter().map(|l| l.weight).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::check_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tape_and_plain_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ps = ParamSet::new();
        let mlp = Mlp::new(
            &mut ps,
            "m",
            &[4, 6, 3],
            Activation::Tanh,
            Activation::Identity,
            &mut rng,
        );
        let x = Matrix::random_uniform(5, 4, -1.0, 1.0, &mut rng);
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let y = mlp.forward(&mut t, &ps, xv).unwrap();
        assert!(t.value(y).max_abs_diff(&mlp.apply(&ps, &x).unwrap()) < 1e-14);
    }

    #[test]
    fn mlp_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut ps = ParamSet::new();
        let mlp = Mlp::new(
            &mut ps,
            "m",
            &[3, 5, 2],
            Activation::Elu(1.0),
            Activation::Sigmoid,
            &mut rng,
        );
        for id in ps.ids().collect::<Vec<_>>() {
            let (r, c) = ps.value(id).shape();
            ps.insert(
                ps.name(id).to_string(),
                Matrix::random_uniform(r, c, -2.0, 2.0, &mut rng),
            );
        }
        let x = Matrix::random_uniform(4, 3, -2.0, 2.0, &mut rng);
        check_params(&ps, 20, 10, |t, ps| {
            let xv = t.constant(x.clone());
            let y = mlp.forward(t, ps, xv).unwrap();
            t.square_sum(y)
        });
    }
}
