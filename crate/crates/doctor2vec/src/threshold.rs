//! Per-class decision thresholds tuned on validation data. The decision
//! rule is argmax over classes of (probability - threshold); thresholds
//! live on a hundredth-step grid and are fitted by coordinate ascent on
//! macro F1, taking the lowest maximizing value at every sweep.

use std::collections::BTreeSet;

use crate::data::N_BINS;
use crate::error::{D2vError, Result};
use crate::evalx::macro_f1;

const GRID_STEPS: usize = 100;
const MAX_PASSES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCalibration {
    pub thresholds: [f64; N_BINS],
    /// Macro F1 the fitted thresholds achieve on the calibration set;
    /// NaN when a fallback was taken.
    pub macro_f1: f64,
    /// Why calibration fell back to plain argmax, when it did.
    pub fallback: Option<String>,
}

/// Hard class choice: the class whose probability clears its threshold
/// by the largest margin; the lowest class index wins exact ties.
pub fn decide(probs: &[f64], thresholds: &[f64; N_BINS]) -> Result<u8> {
    if probs.len() != N_BINS {
        return Err(D2vError::Invalid(format!(
            "{} probabilities for {} classes",
            probs.len(),
            N_BINS
        )));
    }
    let mut best = 0usize;
    let mut best_margin = f64::NEG_INFINITY;
    for (c, (&p, &t)) in probs.iter().zip(thresholds).enumerate() {
        let margin = p - t;
        if margin > best_margin {
            best_margin = margin;
            best = c;
        }
    }
    Ok(best as u8)
}

pub fn decide_all(probs: &[Vec<f64>], thresholds: &[f64; N_BINS]) -> Result<Vec<u8>> {
    probs.iter().map(|p| decide(p, thresholds)).collect()
}

fn fallback(reason: &str) -> ThresholdCalibration {
    ThresholdCalibration {
        thresholds: [0.0; N_BINS],
        macro_f1: f64::NAN,
        fallback: Some(reason.to_string()),
    }
}

/// Fits thresholds on probability rows and their true classes.
pub fn calibrate_thresholds(probs: &[Vec<f64>], labels: &[u8]) -> Result<ThresholdCalibration> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(D2vError::Invalid(format!(
            "calibration over {} prob rows, {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if let Some(bad) = probs.iter().find(|p| p.len() != N_BINS) {
        return Err(D2vError::Invalid(format!(
            "probability row has {} entries for {} classes",
            bad.len(),
            N_BINS
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= N_BINS) {
        return Err(D2vError::Invalid(format!("label {bad} outside {N_BINS} classes")));
    }
    let classes: BTreeSet<u8> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Ok(fallback("calibration labels contain a single class"));
    }
    let uniform = probs.iter().all(|p| {
        let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo < 1e-12
    });
    if uniform {
        return Ok(fallback("predictor is uniform over classes"));
    }

    let mut thresholds = [0.0f64; N_BINS];
    let mut best_f1 = {
        let preds = decide_all(probs, &thresholds)?;
        macro_f1(&preds, labels, N_BINS)?
    };
    for _ in 0..MAX_PASSES {
        let mut changed = false;
        for c in 0..N_BINS {
            let mut best_t = thresholds[c];
            let mut best_here = best_f1;
            for k in 0..=GRID_STEPS {
                let t = k as f64 / GRID_STEPS as f64;
                let mut candidate = thresholds;
                candidate[c] = t;
                let preds = decide_all(probs, &candidate)?;
                let f1 = macro_f1(&preds, labels, N_BINS)?;
                // strict improvement keeps the lowest maximizing value
                if f1 > best_here {
                    best_here = f1;
                    best_t = t;
                }
            }
            if best_t != thresholds[c] {
                thresholds[c] = best_t;
                best_f1 = best_here;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(ThresholdCalibration { thresholds, macro_f1: best_f1, fallback: None })
}
