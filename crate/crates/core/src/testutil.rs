//! Finite-difference gradient checking shared by the unit tests.

use crate::tensor::{ParamSet, Tape, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Compares tape gradients with central differences on up to `per_param`
/// coordinates of every parameter. Returns the worst relative error.
pub fn check_params<F>(params: &ParamSet, per_param: usize, seed: u64, f: F) -> f64
where
    F: Fn(&mut Tape, &ParamSet) -> Var,
{
    let mut work = params.clone();
    work.zero_grad();
    let mut tape = Tape::new();
    let out = f(&mut tape, &work);
    tape.backward(out, &mut work).unwrap();
    let analytic = work.clone();

    let eval = |ps: &ParamSet| {
        let mut t = Tape::new();
        let o = f(&mut t, ps);
        t.value(o).get(0, 0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for id in params.ids() {
        let n = params.value(id).len();
        let mut coords: Vec<usize> = (0..n).collect();
        coords.shuffle(&mut rng);
        coords.truncate(per_param);
        for c in coords {
            let mut plus = params.clone();
            plus.value_mut(id).data_mut()[c] += FD_STEP;
            let mut minus = params.clone();
            minus.value_mut(id).data_mut()[c] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let a = analytic.grad(id).data()[c];
            let e = rel_err(a, numeric);
            if e > worst {
                worst = e;
            }
            assert!(
                e < FD_TOL,
                "{}[{c}]: analytic {a} vs numeric {numeric} (rel {e})",
                params.name(id)
            );
        }
    }
    worst
}
