//! Finite-difference gradient checks for the acceptance suite.

use mapi_gnn::tensor::{Matrix, ParamSet, Tape, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub coords: usize,
    pub worst: f64,
}

/// Relative error with a small floor so gradients near zero are compared absolutely.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Tape gradients against central differences on up to `per_param` random
/// coordinates of every parameter of `params`.
pub fn fd_check<F>(params: &ParamSet, per_param: usize, seed: u64, f: F) -> FdReport
where
    F: Fn(&mut Tape, &ParamSet) -> Var,
{
    let mut work = params.clone();
    work.zero_grad();
    let mut tape = Tape::new();
    let out = f(&mut tape, &work);
    tape.backward(out, &mut work).unwrap();

    let eval = |ps: &ParamSet| {
        let mut t = Tape::new();
        let o = f(&mut t, ps);
        t.value(o).get(0, 0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FdReport { coords: 0, worst: 0.0 };
    for id in params.ids() {
        let mut coords: Vec<usize> = (0..params.value(id).len()).collect();
        coords.shuffle(&mut rng);
        coords.truncate(per_param);
        for c in coords {
            let mut plus = params.clone();
            plus.value_mut(id).data_mut()[c] += FD_STEP;
            let mut minus = params.clone();
            minus.value_mut(id).data_mut()[c] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            report.worst = report.worst.max(rel_err(work.grad(id).data()[c], numeric));
            report.coords += 1;
        }
    }
    report
}

/// `Σ y ⊙ R` for a fixed pseudo-random `R`, turning any output into a scalar
/// whose gradient exercises every entry.
pub fn probe(t: &mut Tape, y: Var, seed: u64) -> Var {
    let (r, c) = t.shape(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(Matrix::random_uniform(r, c, -1.0, 1.0, &mut rng));
    let p = t.mul(y, w).unwrap();
    t.sum(p)
}
