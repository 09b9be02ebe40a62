//! Seeded gradient sweeps over every primitive, shared by this crate's
//! tests and by downstream acceptance checks.
//!
//! Each sweep builds a random instance of one primitive, reduces its
//! output through a random linear functional, and compares tape
//! gradients with central differences. Cotangent magnitudes stay away
//! from zero and the step size is chosen per op (central differences
//! are exact for ops at most quadratic in any one parameter, so those
//! use a large step; smooth nonlinear ops use a small one) so the
//! relative-error comparison is meaningful at f64 precision.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::NumError;
use crate::gradcheck::finite_diff_check;
use crate::params::ParamSet;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct PrimitiveCheck {
    pub op: &'static str,
    pub max_rel_error: f64,
    pub seeds: u64,
}

/// Every op covered by `check_primitive`.
pub const PRIMITIVE_OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "mul_shared",
    "mul_const",
    "matmul",
    "matvec",
    "dot",
    "cols_sum",
    "concat",
    "slice",
    "reshape",
    "mean",
    "sum",
    "tanh",
    "sigmoid",
    "elu",
    "softmax",
    "cross_entropy",
    "softmax_cross_entropy",
    "affine_tanh_mean",
];

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values with magnitude in [0.3, 1.3] and random sign.
fn signed_bounded(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.3..1.3)
        })
        .collect()
}

fn cotangent(rng: &mut ChaCha8Rng, n: usize) -> Tensor<f64> {
    Tensor::constant(vec![n], signed_bounded(rng, n)).expect("finite cotangent")
}

fn project(
    tape: &Tape<f64>,
    y: &Tensor<f64>,
    weights: &Tensor<f64>,
) -> Result<Tensor<f64>, NumError> {
    let flat = tape.reshape(y, vec![y.numel()])?;
    tape.dot(&flat, weights)
}

/// One primitive, `seeds` random instances; returns the worst relative
/// error seen. Unknown names are a contract violation.
pub fn check_primitive(op: &'static str, seeds: u64) -> Result<PrimitiveCheck, NumError> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv(op));
        let err = run_once(op, &mut rng)?;
        if err > worst {
            worst = err;
        }
    }
    Ok(PrimitiveCheck { op, max_rel_error: worst, seeds })
}

fn fnv(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

// Step sizes: linear/quadratic ops admit the top of the permitted
// range; smooth nonlinear ops balance truncation against roundoff.
const EPS_LINEAR: f64 = 1e-3;
const EPS_SMOOTH: f64 = 1e-5;
// cross-entropy perturbs a probability vector, so the step must stay
// below the normalization tolerance
const EPS_PROB: f64 = 1e-7;

fn run_once(op: &'static str, rng: &mut ChaCha8Rng) -> Result<f64, NumError> {
    let mut params = ParamSet::new();
    let err = match op {
        "add" | "sub" | "mul" => {
            let a = params.register("a", Tensor::param(vec![6], uniform(rng, 6, -2.0, 2.0))?)?;
            let b = params.register("b", Tensor::param(vec![6], signed_bounded(rng, 6))?)?;
            let w = cotangent(rng, 6);
            finite_diff_check(&params, EPS_LINEAR, |tape| {
                let y = match op {
                    "add" => tape.add(&a, &b)?,
                    "sub" => tape.sub(&a, &b)?,
                    _ => tape.mul(&a, &b)?,
                };
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "mul_shared" => {
            let x = params.register("x", Tensor::param(vec![4], signed_bounded(rng, 4))?)?;
            let w = cotangent(rng, 4);
            finite_diff_check(&params, EPS_LINEAR, |tape| {
                let y = tape.mul(&x, &x)?;
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "mul_const" => {
            let x = params.register("x", Tensor::param(vec![5], uniform(rng, 5, -2.0, 2.0))?)?;
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let c = sign * rng.gen_range(0.5..3.0);
            let w = cotangent(rng, 5);
            finite_diff_check(&params, EPS_LINEAR, |tape| {
                let y = tape.mul_const(&x, c)?;
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "matmul" => {
            let a = params.register("a", Tensor::param(vec![3, 4], signed_bounded(rng, 12))?)?;
            let b = params.register("b", Tensor::param(vec![4, 2], signed_bounded(rng, 8))?)?;
            let w = cotangent(rng, 6);
            finite_diff_check(&params, EPS_LINEAR, |tape| {
                let y = tape.matmul(&a, &b)?;
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "matvec" => {
            let m = params.register("m", Tensor::param(vec![4, 5], signed_bounded(rng, 20))?)?;
            let x = params.register("x", Tensor::param(vec![5], signed_bounded(rng, 5))?)?;
            let w = cotangent(rng, 4);
            finite_diff_check(&params, EPS_LINEAR, |tape| {
                let y = tape.matvec(&m, &x)?;
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "dot" => {
            let a = params.register("a", Tensor::param(vec![6], signed_bounded(rng, 6))?)?;
            let b = params.register("b", Tensor::param(vec![6], signed_bounded(rng, 6))?)?;
            finite_diff_check(&params, EPS_LINEAR, |tape| tape.dot(&a, &b))?.max_rel_error
        }
        "cols_sum" => {
            let m = params.register("m", Tensor::param(vec![3, 7], uniform(rng, 21, -2.0, 2.0))?)?;
            let n_cols = rng.gen_range(1..=4);
            let mut cols: Vec<usize> = (0..7).collect();
            cols.shuffle(rng);
            cols.truncate(n_cols);
            cols.sort_unstable();
            let w = cotangent(rng, 3);
            finite_diff_check(&params, EPS_LINEAR, |tape| {
                let y = tape.cols_sum(&m, &cols)?;
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "concat" => {
            let a = params.register("a", Tensor::param(vec![2], uniform(rng, 2, -2.0, 2.0))?)?;
            let b = params.register("b", Tensor::param(vec![3], uniform(rng, 3, -2.0, 2.0))?)?;
            let c = params.register("c", Tensor::param(vec![4], uniform(rng, 4, -2.0, 2.0))?)?;
            let w = cotangent(rng, 9);
            finite_diff_check(&params, EPS_LINEAR, |tape| {
                let y = tape.concat(&[a.clone(), b.clone(), c.clone()])?;
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "slice" => {
            let x = params.register("x", Tensor::param(vec![7], uniform(rng, 7, -2.0, 2.0))?)?;
            let w = cotangent(rng, 3);
            finite_diff_check(&params, EPS_LINEAR, |tape| {
                let y = tape.slice(&x, 2, 3)?;
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "reshape" => {
            let x = params.register("x", Tensor::param(vec![6], uniform(rng, 6, -2.0, 2.0))?)?;
            let w = cotangent(rng, 6);
            finite_diff_check(&params, EPS_LINEAR, |tape| {
                let y = tape.reshape(&x, vec![2, 3])?;
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "mean" => {
            let x = params.register("x", Tensor::param(vec![5], uniform(rng, 5, -2.0, 2.0))?)?;
            finite_diff_check(&params, EPS_LINEAR, |tape| tape.mean(&x))?.max_rel_error
        }
        "sum" => {
            let x = params.register("x", Tensor::param(vec![2, 3], uniform(rng, 6, -2.0, 2.0))?)?;
            finite_diff_check(&params, EPS_LINEAR, |tape| tape.sum(&x))?.max_rel_error
        }
        "tanh" | "sigmoid" | "elu" => {
            let x = params.register("x", Tensor::param(vec![6], uniform(rng, 6, -3.0, 3.0))?)?;
            let w = cotangent(rng, 6);
            finite_diff_check(&params, EPS_SMOOTH, |tape| {
                let y = match op {
                    "tanh" => tape.tanh(&x)?,
                    "sigmoid" => tape.sigmoid(&x)?,
                    _ => tape.elu(&x)?,
                };
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "softmax" => {
            let x = params.register("x", Tensor::param(vec![5], uniform(rng, 5, -2.0, 2.0))?)?;
            let w = cotangent(rng, 5);
            finite_diff_check(&params, EPS_SMOOTH, |tape| {
                let y = tape.softmax(&x)?;
                project(tape, &y, &w)
            })?
            .max_rel_error
        }
        "cross_entropy" => {
            let logits = uniform(rng, 4, -1.5, 1.5);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
            let p = params.register("p", Tensor::param(vec![4], probs)?)?;
            let cls = rng.gen_range(0..4);
            let mut one_hot = vec![0.0; 4];
            one_hot[cls] = 1.0;
            let t = Tensor::constant(vec![4], one_hot)?;
            finite_diff_check(&params, EPS_PROB, |tape| tape.cross_entropy(&p, &t))?
                .max_rel_error
        }
        "softmax_cross_entropy" => {
            let x = params.register("x", Tensor::param(vec![5], uniform(rng, 5, -2.0, 2.0))?)?;
            let cls = rng.gen_range(0..5);
            let mut one_hot = vec![0.0; 5];
            one_hot[cls] = 1.0;
            let t = Tensor::constant(vec![5], one_hot)?;
            finite_diff_check(&params, EPS_SMOOTH, |tape| {
                let p = tape.softmax(&x)?;
                tape.cross_entropy(&p, &t)
            })?
            .max_rel_error
        }
        "affine_tanh_mean" => {
            let w = params.register("w", Tensor::param(vec![3, 4], uniform(rng, 12, -1.0, 1.0))?)?;
            let b = params.register("b", Tensor::param(vec![3], uniform(rng, 3, -0.5, 0.5))?)?;
            let x = Tensor::constant(vec![4], signed_bounded(rng, 4))?;
            finite_diff_check(&params, EPS_SMOOTH, |tape| {
                let h = tape.affine(&w, &x, &b)?;
                let a = tape.tanh(&h)?;
                tape.mean(&a)
            })?
            .max_rel_error
        }
        other => {
            return Err(NumError::Contract {
                op: "check_primitive",
                detail: format!("unknown primitive {:?}", other),
            })
        }
    };
    Ok(err)
}
