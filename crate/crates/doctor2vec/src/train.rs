//! Mini-batch training driver with per-epoch shuffling, joint loss,
//! adaptive moment updates, and model selection on validation ranking
//! quality.

use std::collections::BTreeMap;

use numcore::{AdamConfig, AdamState, Tape64};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, SplitSets, N_BINS};
use crate::error::{D2vError, Result};
use crate::evalx::macro_pr_auc;
use crate::model::{joint_loss, EnrollmentModel};
use crate::syngen::mix_seed;
use crate::text::TextEmbedder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Learning rate shrinks by (1 - lr_decay) at each epoch boundary.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 128, max_epochs: 200, learning_rate: 0.001, lr_decay: 0.02, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(D2vError::Config("batch_size and max_epochs must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(D2vError::Config("learning_rate must be finite and nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.lr_decay) {
            return Err(D2vError::Config("lr_decay must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Model outputs gathered over a set of samples, aligned index-wise
/// with their labels.
pub struct EvalOutputs {
    pub class_probs: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    pub bins: Vec<u8>,
    pub targets: Vec<f64>,
}

impl EvalOutputs {
    pub fn macro_pr_auc(&self) -> Result<f64> {
        macro_pr_auc(&self.class_probs, &self.bins, N_BINS)
    }
}

/// Forward-only pass over the given sample indices. Work is chunked so
/// each doctor and trial embeds once per chunk.
pub fn collect_outputs(
    model: &EnrollmentModel,
    corpus: &Corpus,
    indices: &[usize],
    text: &TextEmbedder,
) -> Result<EvalOutputs> {
    let mut out = EvalOutputs {
        class_probs: Vec::with_capacity(indices.len()),
        rates: Vec::with_capacity(indices.len()),
        bins: Vec::with_capacity(indices.len()),
        targets: Vec::with_capacity(indices.len()),
    };
    for chunk in indices.chunks(256) {
        let tape = Tape64::new();
        let mut memories = BTreeMap::new();
        let mut queries = BTreeMap::new();
        for &i in chunk {
            let sample = corpus
                .samples
                .get(i)
                .ok_or_else(|| D2vError::Invalid(format!("sample index {i} out of range")))?;
            let doctor = corpus.doctor(&sample.doctor_id)?;
            let trial = corpus.trial(&sample.trial_id)?;
            if !memories.contains_key(&sample.doctor_id) {
                memories.insert(sample.doctor_id.clone(), model.build_memory(&tape, doctor, corpus)?);
            }
            if !queries.contains_key(&sample.trial_id) {
                queries.insert(sample.trial_id.clone(), model.encode_trial(&tape, trial, corpus, text)?);
            }
            let pred = model.predict(
                &tape,
                &memories[&sample.doctor_id],
                &queries[&sample.trial_id],
                &doctor.static_features,
            )?;
            out.class_probs.push(pred.class_probs.values());
            out.rates.push(pred.rate.item());
            out.bins.push(sample.label.bin);
            out.targets.push(sample.label.normalized_rate);
        }
    }
    Ok(out)
}

pub struct TrainReport {
    pub epochs_run: usize,
    /// Sample-weighted mean joint loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Validation macro ranking score per epoch; NaN when validation
    /// labels were degenerate that epoch.
    pub val_scores: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_score: f64,
    /// One line per epoch plus a selection line; byte-stable for a
    /// fixed corpus, config, and seed.
    pub log: String,
}

pub fn train_model(
    model: &EnrollmentModel,
    corpus: &Corpus,
    split: &SplitSets,
    text: &TextEmbedder,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(D2vError::Empty { what: "training split" });
    }
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig { learning_rate: cfg.learning_rate, decay: cfg.lr_decay, ..AdamConfig::default() },
    );
    let mut log = String::new();
    let mut epoch_losses = Vec::with_capacity(cfg.max_epochs);
    let mut val_scores = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(usize, f64, Vec<(String, Vec<f64>)>)> = None;

    for epoch in 0..cfg.max_epochs {
        let mut order = split.train.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64)));

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let tape = Tape64::new();
            let mut memories = BTreeMap::new();
            let mut queries = BTreeMap::new();
            let mut probs = Vec::with_capacity(batch.len());
            let mut rates = Vec::with_capacity(batch.len());
            let mut bins = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &i in batch {
                let sample = &corpus.samples[i];
                let doctor = corpus.doctor(&sample.doctor_id)?;
                let trial = corpus.trial(&sample.trial_id)?;
                if !memories.contains_key(&sample.doctor_id) {
                    memories
                        .insert(sample.doctor_id.clone(), model.build_memory(&tape, doctor, corpus)?);
                }
                if !queries.contains_key(&sample.trial_id) {
                    queries
                        .insert(sample.trial_id.clone(), model.encode_trial(&tape, trial, corpus, text)?);
                }
                let pred = model.predict(
                    &tape,
                    &memories[&sample.doctor_id],
                    &queries[&sample.trial_id],
                    &doctor.static_features,
                )?;
                probs.push(pred.class_probs);
                rates.push(pred.rate);
                bins.push(sample.label.bin);
                targets.push(sample.label.normalized_rate);
            }
            let loss = joint_loss(&tape, &probs, &bins, &rates, &targets)?;
            let loss_val = loss.item();
            if !loss_val.is_finite() {
                return Err(D2vError::Diverged(format!(
                    "loss {loss_val} at epoch {epoch}"
                )));
            }
            loss_sum += loss_val * batch.len() as f64;
            tape.backward(&loss)?;
            adam.step(&model.params)?;
        }
        adam.end_epoch();
        let epoch_loss = loss_sum / split.train.len() as f64;
        epoch_losses.push(epoch_loss);

        let score = if split.validation.is_empty() {
            f64::NAN
        } else {
            let outputs = collect_outputs(model, corpus, &split.validation, text)?;
            match outputs.macro_pr_auc() {
                Ok(s) => s,
                Err(D2vError::DegenerateLabels(_)) => f64::NAN,
                Err(e) => return Err(e),
            }
        };
        val_scores.push(score);
        if score.is_finite() && best.as_ref().map_or(true, |(_, b, _)| score > *b) {
            best = Some((epoch, score, model.params.snapshot()));
        }
        if score.is_finite() {
            log.push_str(&format!("epoch {epoch} loss {epoch_loss:.6} val_pr_auc {score:.6}\n"));
        } else {
            log.push_str(&format!("epoch {epoch} loss {epoch_loss:.6} val_pr_auc degenerate\n"));
        }
    }

    let (best_epoch, best_val_score) = match &best {
        Some((e, s, snapshot)) => {
            model.params.restore(snapshot)?;
            (*e, *s)
        }
        None => (cfg.max_epochs - 1, f64::NAN),
    };
    log.push_str(&format!("selected epoch {best_epoch}\n"));
    Ok(TrainReport {
        epochs_run: cfg.max_epochs,
        epoch_losses,
        val_scores,
        best_epoch,
        best_val_score,
        log,
    })
}
