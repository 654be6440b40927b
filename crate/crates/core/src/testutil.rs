//! Test-only helpers: a central finite-difference gradient oracle.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Tape, Tensor, Var};

pub const FD_STEP: f64 = 1e-6;
/// Relative error is measured against `max(|analytic|, |numeric|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Compares tape gradients of `f` against central differences on up to
/// `max_coords` randomly chosen parameter coordinates.
pub fn check_gradients<F>(params: &[Tensor], f: F, max_coords: usize, seed: u64) -> GradReport
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.grad(v)).collect();

    let mut coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.len()).map(move |j| (i, j)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while coords.len() > max_coords {
        let k = rng.random_range(0..coords.len());
        coords.swap_remove(k);
    }

    let eval = |ps: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = ps.iter().map(|p| t.constant(p.clone())).collect();
        let l = f(&mut t, &vs);
        t.value(l).item()
    };

    let mut max_rel_err: f64 = 0.0;
    let mut work = params.to_vec();
    for &(i, j) in &coords {
        let orig = work[i].data()[j];
        work[i].data_mut()[j] = orig + FD_STEP;
        let plus = eval(&work);
        work[i].data_mut()[j] = orig - FD_STEP;
        let minus = eval(&work);
        work[i].data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[i].data()[j];
        let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
        max_rel_err = max_rel_err.max((a - numeric).abs() / denom);
    }
    GradReport {
        checked: coords.len(),
        max_rel_err,
    }
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}
