//! Central finite-difference verification of tape gradients.

use crate::error::NumError;
use crate::params::ParamSet;
use crate::scalar::{lit, Scalar};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Worst relative disagreement between analytic and numeric gradients,
/// together with where it occurred.
#[derive(Debug, Clone)]
pub struct GradCheckReport<T> {
    pub max_rel_error: T,
    pub worst_param: String,
    pub worst_index: usize,
    pub entries_checked: usize,
}

/// Compares tape gradients of `f` against central differences over
/// every element of every parameter in `params`.
///
/// `f` must be a pure function of the parameter values: it is evaluated
/// twice up front and rejected if the two losses differ. Relative error
/// uses |a - n| / (|a| + |n| + 1e-12) so that near-zero gradients do
/// not blow the ratio up.
pub fn finite_diff_check<T, F>(
    params: &ParamSet<T>,
    epsilon: T,
    f: F,
) -> Result<GradCheckReport<T>, NumError>
where
    T: Scalar,
    F: Fn(&Tape<T>) -> Result<Tensor<T>, NumError>,
{
    let eps_f64 = epsilon.to_f64().unwrap_or(f64::NAN);
    if !(1e-7..=1e-3).contains(&eps_f64) {
        return Err(NumError::EpsilonOutOfRange { value: eps_f64 });
    }

    let eval = |check_scalar: bool| -> Result<T, NumError> {
        let tape = Tape::new();
        let loss = f(&tape)?;
        if check_scalar && loss.numel() != 1 {
            return Err(NumError::NotScalar { shape: loss.shape() });
        }
        Ok(loss.item())
    };

    let base = eval(true)?;
    let again = eval(true)?;
    if base != again {
        return Err(NumError::NondeterministicFunction);
    }

    // analytic pass; start from clean gradients
    for (_, t) in params.iter() {
        t.set_grad(None)?;
    }
    let tape = Tape::new();
    let loss = f(&tape)?;
    tape.backward(&loss)?;
    let analytic: Vec<(String, Vec<T>)> = params
        .iter()
        .map(|(n, t)| (n.to_string(), t.grad_or_zeros()))
        .collect();
    for (_, t) in params.iter() {
        t.set_grad(None)?;
    }

    let two = lit::<T>(2.0);
    let tiny = lit::<T>(1e-12);
    let mut report = GradCheckReport {
        max_rel_error: T::zero(),
        worst_param: String::new(),
        worst_index: 0,
        entries_checked: 0,
    };

    for (p_idx, (name, tensor)) in params.iter().enumerate() {
        let original = tensor.values();
        for i in 0..original.len() {
            let mut perturbed = original.clone();
            perturbed[i] = original[i] + epsilon;
            tensor.set_data(perturbed.clone())?;
            let plus = eval(false)?;
            perturbed[i] = original[i] - epsilon;
            tensor.set_data(perturbed)?;
            let minus = eval(false)?;
            tensor.set_data(original.clone())?;

            let numeric = (plus - minus) / (two * epsilon);
            let a = analytic[p_idx].1[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + tiny);
            report.entries_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
