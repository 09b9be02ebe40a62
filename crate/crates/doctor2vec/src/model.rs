//! Enrollment model: patient histories become memory slots, a trial
//! query embedding attends over them, and two heads read the attended
//! doctor representation out as an enrollment class distribution and a
//! normalized rate.

use numcore::{xavier_uniform, zeros_param, ParamSet64, Tape64, Tensor64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, DoctorRecord, Trial, N_BINS};
use crate::encoder::{LstmCell, Mlp, PatientEncoder, TrialEncoder};
use crate::error::{D2vError, Result};
use crate::text::TextEmbedder;

/// Architecture hyperparameters. Defaults are the full-size network;
/// `desk()` is a reduced configuration for fast experiments and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Visit embedding width.
    pub visit_embed_dim: usize,
    /// Hidden width per direction of the patient sequence encoder.
    pub seq_hidden: usize,
    /// Trial query embedding width.
    pub query_dim: usize,
    /// Memory slot width.
    pub memory_dim: usize,
    /// Text embedding width fed to the trial encoder.
    pub text_dim: usize,
    /// Categorical MLP widths, output width last.
    pub cat_widths: Vec<usize>,
    /// Hidden widths of the memory write MLP; its output width is
    /// always `memory_dim`.
    pub mem_hidden: Vec<usize>,
    /// Most recent patients kept per doctor.
    pub k_max: usize,
    /// Passes of the memory generalization cell.
    pub gen_iterations: usize,
    /// Skip generalization entirely, storing raw write vectors.
    pub identity_generalization: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            visit_embed_dim: 128,
            seq_hidden: 124,
            query_dim: 64,
            memory_dim: 64,
            text_dim: 768,
            cat_widths: vec![128, 256, 128, 64],
            mem_hidden: vec![128, 128],
            k_max: 32,
            gen_iterations: 1,
            identity_generalization: false,
        }
    }
}

impl ModelConfig {
    /// Small configuration sized for seconds-per-epoch training on a
    /// single core.
    pub fn desk() -> Self {
        Self {
            visit_embed_dim: 16,
            seq_hidden: 8,
            query_dim: 16,
            memory_dim: 16,
            text_dim: 32,
            cat_widths: vec![32, 64, 32, 16],
            mem_hidden: vec![32, 32],
            k_max: 32,
            gen_iterations: 1,
            identity_generalization: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.visit_embed_dim,
            self.seq_hidden,
            self.query_dim,
            self.memory_dim,
            self.text_dim,
            self.k_max,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(D2vError::Config("model dimensions must be positive".into()));
        }
        if self.cat_widths.is_empty() || self.cat_widths.contains(&0) {
            return Err(D2vError::Config("cat_widths must be nonempty and positive".into()));
        }
        if self.mem_hidden.contains(&0) {
            return Err(D2vError::Config("mem_hidden widths must be positive".into()));
        }
        if !self.identity_generalization && self.gen_iterations == 0 {
            return Err(D2vError::Config(
                "gen_iterations must be at least 1 unless generalization is identity".into(),
            ));
        }
        Ok(())
    }
}

/// Input widths the architecture must match; derived from a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub visit_dim: usize,
    pub cat_dim: usize,
    pub static_dim: usize,
}

impl ModelDims {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self {
            visit_dim: corpus.vocab.visit_dim(),
            cat_dim: corpus.categorical_dim(),
            static_dim: corpus.static_dim,
        }
    }
}

/// Per-doctor memory: one row per retained patient, in history order.
/// Attention scores are computed on the generalized rows while the
/// readout averages the raw write rows.
pub struct DoctorMemory {
    /// Write-projection outputs, the bank the readout averages.
    pub write_rows: Vec<Tensor64>,
    /// Generalization-cell outputs, the bank attention scores against.
    /// Identical to `write_rows` under identity generalization.
    pub generalized_rows: Vec<Tensor64>,
    /// Positions of the retained patients within the doctor record.
    pub patient_positions: Vec<usize>,
}

/// Model outputs for one doctor-trial pair.
pub struct Prediction {
    /// Class distribution over the enrollment bins.
    pub class_probs: Tensor64,
    /// Normalized enrollment rate in [0, 1], shape [1].
    pub rate: Tensor64,
    /// Attention over the doctor's memory slots.
    pub memory_attention: Tensor64,
}

pub struct EnrollmentModel {
    pub config: ModelConfig,
    pub dims: ModelDims,
    pub params: ParamSet64,
    patient_enc: PatientEncoder,
    trial_enc: TrialEncoder,
    mem_write: Mlp,
    gen_cell: Option<LstmCell>,
    w_q: Tensor64,
    cls_w: Tensor64,
    cls_b: Tensor64,
    rate_w: Tensor64,
    rate_b: Tensor64,
}

impl EnrollmentModel {
    /// Builds the parameter set with a seeded generator; the same seed,
    /// config, and dims always give identical initial weights.
    pub fn new(config: ModelConfig, dims: ModelDims, init_seed: u64) -> Result<Self> {
        config.validate()?;
        if dims.visit_dim == 0 || dims.cat_dim == 0 {
            return Err(D2vError::Config("corpus dims must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut params = ParamSet64::new();
        let patient_enc = PatientEncoder::new(
            &mut params,
            &mut rng,
            dims.visit_dim,
            config.visit_embed_dim,
            config.seq_hidden,
        )?;
        let trial_enc = TrialEncoder::new(
            &mut params,
            &mut rng,
            dims.cat_dim,
            &config.cat_widths,
            config.text_dim,
            config.query_dim,
        )?;
        let mut write_widths = config.mem_hidden.clone();
        write_widths.push(config.memory_dim);
        let mem_write = Mlp::new(
            &mut params,
            &mut rng,
            "mem.write",
            patient_enc.out_dim(),
            &write_widths,
        )?;
        let gen_cell = if config.identity_generalization {
            None
        } else {
            Some(LstmCell::new(
                &mut params,
                &mut rng,
                "mem.gen",
                config.memory_dim,
                config.memory_dim,
            )?)
        };
        let w_q = params.register(
            "mem.w_q",
            xavier_uniform(&mut rng, config.memory_dim, config.query_dim)?,
        )?;
        let head_in = config.memory_dim + config.query_dim + dims.static_dim;
        let cls_w = params.register("head.cls.w", xavier_uniform(&mut rng, N_BINS, head_in)?)?;
        let cls_b = params.register("head.cls.b", zeros_param(vec![N_BINS]))?;
        let rate_w = params.register("head.rate.w", xavier_uniform(&mut rng, 1, head_in)?)?;
        let rate_b = params.register("head.rate.b", zeros_param(vec![1]))?;
        Ok(Self {
            config,
            dims,
            params,
            patient_enc,
            trial_enc,
            mem_write,
            gen_cell,
            w_q,
            cls_w,
            cls_b,
            rate_w,
            rate_b,
        })
    }

    /// Encodes every patient the doctor retains (the most recent
    /// `k_max`), writes each into memory space, and optionally runs the
    /// generalization cell across the slot sequence.
    pub fn build_memory(&self, tape: &Tape64, doctor: &DoctorRecord, corpus: &Corpus) -> Result<DoctorMemory> {
        if doctor.patients.is_empty() {
            return Err(D2vError::Empty { what: "doctor patient list" });
        }
        let start = doctor.patients.len().saturating_sub(self.config.k_max);
        let mut write_rows = Vec::with_capacity(doctor.patients.len() - start);
        let mut patient_positions = Vec::with_capacity(write_rows.capacity());
        for (pos, patient) in doctor.patients.iter().enumerate().skip(start) {
            let visits: Vec<Vec<usize>> = patient
                .visits
                .iter()
                .map(|v| v.concat_indices(&corpus.vocab))
                .collect();
            let (encoded, _) = self.patient_enc.encode(tape, &visits)?;
            write_rows.push(self.mem_write.forward(tape, &encoded)?);
            patient_positions.push(pos);
        }
        let mut generalized_rows = write_rows.clone();
        if let Some(cell) = &self.gen_cell {
            for _ in 0..self.config.gen_iterations {
                generalized_rows = cell.run(tape, &generalized_rows)?;
            }
        }
        Ok(DoctorMemory { write_rows, generalized_rows, patient_positions })
    }

    /// Trial query embedding from the trial's categorical attributes and
    /// its text embedding.
    pub fn encode_trial(&self, tape: &Tape64, trial: &Trial, corpus: &Corpus, text: &TextEmbedder) -> Result<Tensor64> {
        let offsets = corpus.category_offsets();
        if trial.categorical.len() != offsets.len() {
            return Err(D2vError::Invalid(format!(
                "trial {} has {} categorical values for {} categories",
                trial.trial_id,
                trial.categorical.len(),
                offsets.len()
            )));
        }
        let active: Vec<usize> = trial
            .categorical
            .iter()
            .zip(&offsets)
            .map(|(&v, &o)| o + v)
            .collect();
        let text_vec = text.embed(&trial.text_tokens)?;
        self.trial_enc.encode(tape, &active, &text_vec)
    }

    /// Scores the projected query against the generalized rows, reads
    /// the attended average of the write rows, and returns both the
    /// doctor embedding and the attention weights.
    pub fn query_memory(
        &self,
        tape: &Tape64,
        memory: &DoctorMemory,
        query: &Tensor64,
    ) -> Result<(Tensor64, Tensor64)> {
        let k = memory.write_rows.len();
        if memory.generalized_rows.len() != k {
            return Err(D2vError::Invalid(format!(
                "memory banks disagree: {} write rows, {} generalized rows",
                k,
                memory.generalized_rows.len()
            )));
        }
        let d = self.config.memory_dim;
        let keys = tape.reshape(&tape.concat(&memory.generalized_rows)?, vec![k, d])?;
        let values = tape.reshape(&tape.concat(&memory.write_rows)?, vec![k, d])?;
        let projected = tape.matvec(&self.w_q, query)?;
        let scores = tape.matvec(&keys, &projected)?;
        let attention = tape.softmax(&scores)?;
        let doc_emb = tape.reshape(
            &tape.matmul(&tape.reshape(&attention, vec![1, k])?, &values)?,
            vec![d],
        )?;
        Ok((doc_emb, attention))
    }

    /// Full readout for one doctor-trial pair. `static_features` is the
    /// doctor's static vector.
    pub fn predict(
        &self,
        tape: &Tape64,
        memory: &DoctorMemory,
        query: &Tensor64,
        static_features: &[f64],
    ) -> Result<Prediction> {
        if static_features.len() != self.dims.static_dim {
            return Err(D2vError::Invalid(format!(
                "static feature width {} does not match model width {}",
                static_features.len(),
                self.dims.static_dim
            )));
        }
        let (doc_emb, memory_attention) = self.query_memory(tape, memory, query)?;
        let stat = Tensor64::constant(vec![static_features.len()], static_features.to_vec())?;
        let features = tape.concat(&[doc_emb, query.clone(), stat])?;
        let class_probs = tape.softmax(&tape.affine(&self.cls_w, &features, &self.cls_b)?)?;
        let rate = tape.sigmoid(&tape.affine(&self.rate_w, &features, &self.rate_b)?)?;
        Ok(Prediction { class_probs, rate, memory_attention })
    }
}

/// Mean cross-entropy between predicted class distributions and one-hot
/// bins.
pub fn classification_loss(tape: &Tape64, preds: &[Tensor64], bins: &[u8]) -> Result<Tensor64> {
    if preds.is_empty() || preds.len() != bins.len() {
        return Err(D2vError::Invalid(format!(
            "classification loss over {} predictions, {} labels",
            preds.len(),
            bins.len()
        )));
    }
    let mut losses = Vec::with_capacity(preds.len());
    for (p, &b) in preds.iter().zip(bins) {
        let mut one_hot = vec![0.0; N_BINS];
        *one_hot
            .get_mut(b as usize)
            .ok_or_else(|| D2vError::Invalid(format!("bin {b} out of range")))? = 1.0;
        let target = Tensor64::constant(vec![N_BINS], one_hot)?;
        losses.push(tape.cross_entropy(p, &target)?);
    }
    Ok(tape.mean(&tape.concat(&losses)?)?)
}

/// Mean squared error between predicted rates (shape [1] each) and
/// target normalized rates.
pub fn regression_loss(tape: &Tape64, rates: &[Tensor64], targets: &[f64]) -> Result<Tensor64> {
    if rates.is_empty() || rates.len() != targets.len() {
        return Err(D2vError::Invalid(format!(
            "regression loss over {} predictions, {} targets",
            rates.len(),
            targets.len()
        )));
    }
    let mut sq = Vec::with_capacity(rates.len());
    for (r, &t) in rates.iter().zip(targets) {
        let diff = tape.sub(r, &Tensor64::constant(vec![1], vec![t])?)?;
        sq.push(tape.mul(&diff, &diff)?);
    }
    Ok(tape.mean(&tape.concat(&sq)?)?)
}

/// Joint objective: classification and regression terms summed with
/// unit weights.
pub fn joint_loss(
    tape: &Tape64,
    preds: &[Tensor64],
    bins: &[u8],
    rates: &[Tensor64],
    targets: &[f64],
) -> Result<Tensor64> {
    let ce = classification_loss(tape, preds, bins)?;
    let mse = regression_loss(tape, rates, targets)?;
    Ok(tape.add(&ce, &mse)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syngen::{generate_corpus, GenConfig};

    fn tiny_model_and_corpus() -> (EnrollmentModel, Corpus) {
        let cfg = GenConfig { n_doctors: 40, n_trials: 10, seed: 3, ..GenConfig::default() };
        let corpus = generate_corpus(&cfg).unwrap().corpus;
        let mut mc = ModelConfig::desk();
        mc.visit_embed_dim = 6;
        mc.seq_hidden = 4;
        mc.query_dim = 5;
        mc.memory_dim = 5;
        mc.text_dim = 16;
        mc.cat_widths = vec![8, 6];
        mc.mem_hidden = vec![8];
        let model = EnrollmentModel::new(mc, ModelDims::from_corpus(&corpus), 1).unwrap();
        (model, corpus)
    }

    #[test]
    fn memory_and_prediction_shapes() {
        let (model, corpus) = tiny_model_and_corpus();
        let text = TextEmbedder::hashed(16);
        let tape = Tape64::new();
        let doctor = &corpus.doctors[0];
        let memory = model.build_memory(&tape, doctor, &corpus).unwrap();
        assert_eq!(memory.write_rows.len(), doctor.patients.len().min(32));
        assert_eq!(memory.generalized_rows.len(), memory.write_rows.len());
        assert!(memory.write_rows.iter().all(|s| s.dims() == [5]));
        assert!(memory.generalized_rows.iter().all(|s| s.dims() == [5]));
        let trial = &corpus.trials[0];
        let q = model.encode_trial(&tape, trial, &corpus, &text).unwrap();
        assert_eq!(q.dims(), &[5]);
        let pred = model.predict(&tape, &memory, &q, &doctor.static_features).unwrap();
        assert_eq!(pred.class_probs.dims(), &[N_BINS]);
        assert_eq!(pred.rate.dims(), &[1]);
        assert_eq!(pred.memory_attention.dims(), &[memory.write_rows.len()]);
        let p_sum: f64 = pred.class_probs.values().iter().sum();
        assert!((p_sum - 1.0).abs() < 1e-12);
        let a_sum: f64 = pred.memory_attention.values().iter().sum();
        assert!((a_sum - 1.0).abs() < 1e-12);
        let r = pred.rate.item();
        assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn same_seed_same_parameters() {
        let (a, corpus) = tiny_model_and_corpus();
        let dims = ModelDims::from_corpus(&corpus);
        let b = EnrollmentModel::new(a.config.clone(), dims, 1).unwrap();
        let c = EnrollmentModel::new(a.config.clone(), dims, 2).unwrap();
        for ((na, ta), (nb, tb)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.values(), tb.values());
        }
        let differs = a
            .params
            .iter()
            .zip(c.params.iter())
            .any(|((_, ta), (_, tc))| ta.values() != tc.values());
        assert!(differs);
    }

    #[test]
    fn identity_generalization_drops_gen_parameters() {
        let (base, corpus) = tiny_model_and_corpus();
        let dims = ModelDims::from_corpus(&corpus);
        let mut cfg = base.config.clone();
        cfg.identity_generalization = true;
        let ident = EnrollmentModel::new(cfg, dims, 1).unwrap();
        assert!(base.params.get("mem.gen.wx").is_some());
        assert!(ident.params.get("mem.gen.wx").is_none());
        assert!(ident.params.len() < base.params.len());
    }

    #[test]
    fn uniform_prediction_loss_is_ln_bins() {
        let tape = Tape64::new();
        let p = Tensor64::constant(vec![N_BINS], vec![0.2; N_BINS]).unwrap();
        let loss = classification_loss(&tape, &[p.clone(), p], &[0, 4]).unwrap();
        assert!((loss.item() - (N_BINS as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn regression_loss_matches_hand_value() {
        let tape = Tape64::new();
        let r1 = Tensor64::constant(vec![1], vec![0.25]).unwrap();
        let r2 = Tensor64::constant(vec![1], vec![0.75]).unwrap();
        let loss = regression_loss(&tape, &[r1, r2], &[0.5, 0.5]).unwrap();
        assert!((loss.item() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn joint_loss_adds_terms() {
        let tape = Tape64::new();
        let p = Tensor64::constant(vec![N_BINS], vec![0.2; N_BINS]).unwrap();
        let r = Tensor64::constant(vec![1], vec![0.3]).unwrap();
        let joint = joint_loss(&tape, &[p.clone()], &[2], &[r.clone()], &[0.4]).unwrap();
        let ce = classification_loss(&tape, &[p], &[2]).unwrap();
        let mse = regression_loss(&tape, &[r], &[0.4]).unwrap();
        assert!((joint.item() - (ce.item() + mse.item())).abs() < 1e-15);
    }

    #[test]
    fn config_validation_rejects_degenerate_settings() {
        let mut c = ModelConfig::desk();
        c.k_max = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.cat_widths.clear();
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.gen_iterations = 0;
        assert!(c.validate().is_err());
        c.identity_generalization = true;
        assert!(c.validate().is_ok());
    }
}
