use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::testutil::{check_gradients, random_tensor};

const TOL: f64 = 1e-5;

#[test]
fn matmul_identity() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let i = t.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
    let y = t.matmul(a, i).unwrap();
    assert_eq!(t.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    let y = t.matmul_unordered(a, i).unwrap();
    assert_eq!(t.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_shape_mismatch() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(t.matmul(a, b), Err(DiffError::ShapeMismatch { .. })));
}

#[test]
fn softmax_symmetric_input() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::row(&[0.0, 0.0]));
    let y = t.softmax_lastdim(x).unwrap();
    assert_eq!(t.value(y).data(), &[0.5, 0.5]);
}

#[test]
fn layer_norm_constant_row_is_zero() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::row(&[3.0; 8]));
    let g = t.constant(Tensor::filled(&[8], 1.0));
    let b = t.constant(Tensor::zeros(&[8]));
    let y = t.layer_norm(x, g, b).unwrap();
    // (x - mean) is exactly 0, so the epsilon only guards the division
    assert!(t.value(y).data().iter().all(|v| v.abs() < LAYER_NORM_EPS));
}

#[test]
fn l2_normalize_zero_row_flags() {
    let mut t = Tape::new();
    let x = t.param(Tensor::from_rows(&[&[0.0, 0.0], &[3.0, 4.0]]));
    let y = t.l2_normalize_lastdim(x).unwrap();
    assert_eq!(t.value(y).data(), &[0.0, 0.0, 0.6, 0.8]);
    assert_eq!(t.zero_norm_rows(), 1);
    let s = t.sum(y).unwrap();
    t.backward(s).unwrap();
    assert!(t.grad(x).is_finite());
}

#[test]
fn non_finite_rejected() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::row(&[1e308, 1e308]));
    let y = t.scale(x, 10.0);
    assert!(matches!(y, Err(DiffError::NonFiniteValue { .. })));
    assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
}

#[test]
fn grad_of_sum_is_ones() {
    let mut t = Tape::new();
    let x = t.param(Tensor::row(&[0.5, -1.0, 2.0]));
    let s = t.sum(x).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn grad_of_sum_of_squares() {
    let build = |t: &mut Tape, v: &[Var]| {
        let sq = t.mul(v[0], v[0]).unwrap();
        t.sum(sq).unwrap()
    };
    let x = Tensor::row(&[1.0, 2.0, 3.0]);
    let mut t = Tape::new();
    let v = t.param(x.clone());
    let l = build(&mut t, &[v]);
    t.backward(l).unwrap();
    assert_eq!(t.grad(v).data(), &[2.0, 4.0, 6.0]);
    let report = check_gradients(&[x], build, 10, 0);
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn unreached_leaf_has_zero_grad() {
    let mut t = Tape::new();
    let x = t.param(Tensor::row(&[1.0, 2.0]));
    let unused = t.param(Tensor::row(&[5.0, 6.0]));
    let s = t.sum(x).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(unused).data(), &[0.0, 0.0]);
}

#[test]
fn backward_needs_scalar_and_runs_once() {
    let mut t = Tape::new();
    let x = t.param(Tensor::row(&[1.0, 2.0]));
    assert!(matches!(t.backward(x), Err(DiffError::NonScalarLoss { .. })));
    let s = t.sum(x).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.backward(s), Err(DiffError::TapeConsumed));
}

#[test]
fn gradient_shared_input_accumulates() {
    // y = sum(x + x) => dy/dx = 2
    let mut t = Tape::new();
    let x = t.param(Tensor::row(&[1.0, 2.0]));
    let y = t.add(x, x).unwrap();
    let s = t.sum(y).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).data(), &[2.0, 2.0]);
}

fn check(shapes: &[&[usize]], seed: u64, f: impl Fn(&mut Tape, &[Var]) -> Var) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut rng, s)).collect();
    let report = check_gradients(&params, f, 200, seed);
    assert!(report.checked > 0);
    assert!(report.max_rel_err < TOL, "{report:?}");
}

// A fixed random projection turns any tensor into a scalar with a non-trivial
// gradient everywhere.
fn project(t: &mut Tape, x: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let shape = t.value(x).shape().to_vec();
    let w = t.constant(random_tensor(&mut rng, &shape));
    let p = t.mul(x, w).unwrap();
    t.sum(p).unwrap()
}

#[test]
fn gradcheck_primitives() {
    for seed in 0..3 {
        check(&[&[3, 4], &[4, 5]], seed, |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 4], &[4, 5]], seed, |t, v| {
            let y = t.matmul_unordered(v[0], v[1]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 4]], seed, |t, v| {
            let y = t.transpose(v[0]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 4], &[3, 4]], seed, |t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 4], &[4]], seed, |t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 4], &[3, 4]], seed, |t, v| {
            let y = t.mul(v[0], v[1]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 4]], seed, |t, v| {
            let y = t.scale(v[0], -0.7).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 6]], seed, |t, v| {
            let y = t.softmax_lastdim(v[0]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 6], &[6], &[6]], seed, |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 6]], seed, |t, v| {
            let y = t.gelu(v[0]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 4], &[4, 2], &[2]], seed, |t, v| {
            let y = t.linear(v[0], v[1], v[2]).unwrap();
            project(t, y, seed)
        });
        check(&[&[2, 3], &[1, 3]], seed, |t, v| {
            let y = t.concat(&[v[0], v[1]], 0).unwrap();
            project(t, y, seed)
        });
        check(&[&[2, 3], &[2, 2]], seed, |t, v| {
            let y = t.concat(&[v[0], v[1]], 1).unwrap();
            project(t, y, seed)
        });
        check(&[&[4, 5]], seed, |t, v| {
            let a = t.slice(v[0], 0, 1, 2).unwrap();
            let b = t.slice(a, 1, 2, 3).unwrap();
            project(t, b, seed)
        });
        check(&[&[4, 3]], seed, |t, v| {
            let y = t.gather_rows(v[0], &[3, 0, 3]).unwrap();
            project(t, y, seed)
        });
        check(&[&[4, 3]], seed, |t, v| {
            let y = t.mul(v[0], v[0]).unwrap();
            t.mean(y).unwrap()
        });
        check(&[&[3, 4]], seed, |t, v| {
            let y = t.l2_normalize_lastdim(v[0]).unwrap();
            project(t, y, seed)
        });
        check(&[&[3, 5]], seed, |t, v| t.cross_entropy(v[0], &[4, 0, 2]).unwrap());
    }
}

#[test]
fn matmul_unordered_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_tensor(&mut rng, &[3, 7]);
    let b = random_tensor(&mut rng, &[7, 2]);
    let perm = [6, 2, 4, 0, 1, 5, 3];
    let mut ap = Vec::new();
    for r in 0..3 {
        for &p in &perm {
            ap.push(a.data()[r * 7 + p]);
        }
    }
    let mut bp = Vec::new();
    for &p in &perm {
        bp.extend_from_slice(b.row_slice(p));
    }
    let mut t = Tape::new();
    let (x, y) = (t.constant(a), t.constant(b));
    let out = t.matmul_unordered(x, y).unwrap();
    let xp = t.constant(Tensor::new(vec![3, 7], ap).unwrap());
    let yp = t.constant(Tensor::new(vec![7, 2], bp).unwrap());
    let outp = t.matmul_unordered(xp, yp).unwrap();
    assert_eq!(t.value(out), t.value(outp));
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-30.0f64..30.0, 1..40)) {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(&vals));
        let y = t.softmax_lastdim(x).unwrap();
        let s: f64 = t.value(y).data().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l2_rows_have_unit_norm(vals in proptest::collection::vec(-5.0f64..5.0, 2..32)) {
        prop_assume!(vals.iter().any(|v| v.abs() > 1e-6));
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(&vals));
        let y = t.l2_normalize_lastdim(x).unwrap();
        let n: f64 = t.value(y).data().iter().map(|v| v * v).sum::<f64>(); let n = libm::sqrt(n);
        prop_assert!((n - 1.0).abs() < 1e-12);
    }
}
