//! Evaluation metrics and result tables. The precision-recall area
//! follows the step convention: recall starts at zero, tied scores
//! collapse into one threshold step, and the area is the sum of
//! precision times recall increment over steps.

use std::collections::BTreeSet;

use crate::error::{D2vError, Result};

/// Area under the precision-recall curve for binary labels. Errors when
/// either class is absent, naming the missing one.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(D2vError::Invalid(format!(
            "pr_auc over {} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(D2vError::Invalid("pr_auc scores must be finite".into()));
    }
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return Err(D2vError::DegenerateLabels("no positive examples".into()));
    }
    if total_pos == labels.len() {
        return Err(D2vError::DegenerateLabels("no negative examples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut area = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        // advance through the whole tie group before taking a step
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// One-versus-rest macro average of `pr_auc` over the classes present.
/// `probs[i][c]` scores sample i for class c. Classes for which the
/// binary problem is degenerate (absent or universal) are skipped;
/// erroring only when every class is.
pub fn macro_pr_auc(probs: &[Vec<f64>], labels: &[u8], n_classes: usize) -> Result<f64> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(D2vError::Invalid(format!(
            "macro_pr_auc over {} prob rows, {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if let Some(bad) = probs.iter().find(|p| p.len() != n_classes) {
        return Err(D2vError::Invalid(format!(
            "probability row has {} entries for {} classes",
            bad.len(),
            n_classes
        )));
    }
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..n_classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let binary: Vec<bool> = labels.iter().map(|&l| l as usize == c).collect();
        match pr_auc(&scores, &binary) {
            Ok(a) => {
                total += a;
                used += 1;
            }
            Err(D2vError::DegenerateLabels(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(D2vError::DegenerateLabels(
            "every class is degenerate in the label set".into(),
        ));
    }
    Ok(total / used as f64)
}

/// Coefficient of determination, computed in two passes. Errors when
/// the targets have zero variance.
pub fn r_squared(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(D2vError::Invalid(format!(
            "r_squared over {} predictions, {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(D2vError::ZeroVariance);
    }
    let ss_res: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(D2vError::Invalid(format!(
            "mse over {} predictions, {} targets",
            preds.len(),
            targets.len()
        )));
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64)
}

/// Precision and recall for one class of a hard prediction, with flags
/// instead of NaN when a denominator is zero (the metric is then 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    /// The class was never predicted; precision reported as 0.
    pub no_predictions: bool,
    /// The class has no true examples; recall reported as 0.
    pub no_positives: bool,
}

pub fn precision_recall(preds: &[u8], labels: &[u8], class: u8) -> Result<PrecisionRecall> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(D2vError::Invalid(format!(
            "precision_recall over {} predictions, {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &l) in preds.iter().zip(labels) {
        match (p == class, l == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let no_predictions = tp + fp == 0;
    let no_positives = tp + fn_ == 0;
    Ok(PrecisionRecall {
        precision: if no_predictions { 0.0 } else { tp as f64 / (tp + fp) as f64 },
        recall: if no_positives { 0.0 } else { tp as f64 / (tp + fn_) as f64 },
        no_predictions,
        no_positives,
    })
}

/// Macro-averaged F1 over the classes that actually occur in `labels`.
pub fn macro_f1(preds: &[u8], labels: &[u8], n_classes: usize) -> Result<f64> {
    let present: BTreeSet<u8> = labels.iter().copied().collect();
    if present.is_empty() {
        return Err(D2vError::Empty { what: "label set" });
    }
    if let Some(&bad) = present.iter().find(|&&c| c as usize >= n_classes) {
        return Err(D2vError::Invalid(format!("label {bad} outside {n_classes} classes")));
    }
    let mut total = 0.0;
    for &c in &present {
        let pr = precision_recall(preds, labels, c)?;
        let denom = pr.precision + pr.recall;
        total += if denom == 0.0 { 0.0 } else { 2.0 * pr.precision * pr.recall / denom };
    }
    Ok(total / present.len() as f64)
}

/// Macro-averaged precision and recall over the classes present in the
/// labels, reported as plain numbers (degenerate classes contribute 0
/// through their flags).
pub fn macro_precision_recall(preds: &[u8], labels: &[u8]) -> Result<(f64, f64)> {
    let present: BTreeSet<u8> = labels.iter().copied().collect();
    if present.is_empty() {
        return Err(D2vError::Empty { what: "label set" });
    }
    let mut p = 0.0;
    let mut r = 0.0;
    for &c in &present {
        let pr = precision_recall(preds, labels, c)?;
        p += pr.precision;
        r += pr.recall;
    }
    let n = present.len() as f64;
    Ok((p / n, r / n))
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub mode: String,
    /// Seed as text so the aggregate row can carry "agg".
    pub seed: String,
    pub pr_auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub r2: f64,
    pub mse: f64,
    pub n_test: usize,
    pub config_hash: String,
}

pub const RESULTS_HEADER: &str =
    "model,mode,seed,pr_auc,precision,recall,r2,mse,n_test,config_hash";

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.model,
            self.mode,
            self.seed,
            self.pr_auc,
            self.precision,
            self.recall,
            self.r2,
            self.mse,
            self.n_test,
            self.config_hash
        )
    }
}

/// Mean over per-seed rows of one model and mode, with seed "agg".
pub fn aggregate_row(rows: &[ResultRow]) -> Result<ResultRow> {
    if rows.is_empty() {
        return Err(D2vError::Empty { what: "result rows" });
    }
    let first = &rows[0];
    if rows
        .iter()
        .any(|r| r.model != first.model || r.mode != first.mode || r.config_hash != first.config_hash)
    {
        return Err(D2vError::Invalid(
            "aggregate rows must share model, mode, and config hash".into(),
        ));
    }
    let n = rows.len() as f64;
    Ok(ResultRow {
        model: first.model.clone(),
        mode: first.mode.clone(),
        seed: "agg".into(),
        pr_auc: rows.iter().map(|r| r.pr_auc).sum::<f64>() / n,
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        r2: rows.iter().map(|r| r.r2).sum::<f64>() / n,
        mse: rows.iter().map(|r| r.mse).sum::<f64>() / n,
        n_test: rows.iter().map(|r| r.n_test).sum::<usize>() / rows.len(),
        config_hash: first.config_hash.clone(),
    })
}

/// Renders the full results table: header, rows in given order, then a
/// provenance comment so a table is traceable to its run settings.
pub fn results_csv(rows: &[ResultRow], provenance: &str) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out.push_str("# ");
    out.push_str(provenance);
    out.push('\n');
    out
}
