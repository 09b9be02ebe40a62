//! Canonical corpus types and the label pipeline: raw enrollment rate,
//! per-trial min-max normalization, five-way binning, and trial-disjoint
//! splitting. Corpora serialize to line-delimited JSON with multi-hot
//! vectors stored as sorted index lists; save -> load -> save is
//! byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{D2vError, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Number of enrollment classes produced by the binning ladder.
pub const N_BINS: usize = 5;

/// Ordered code namespaces; a code's index is its position in its list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeVocabulary {
    pub diagnosis: Vec<String>,
    pub procedure: Vec<String>,
    pub medication: Vec<String>,
}

impl CodeVocabulary {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (
            self.diagnosis.len(),
            self.procedure.len(),
            self.medication.len(),
        )
    }

    /// Total multi-hot width when visits are concatenated (dx, px, rx).
    pub fn visit_dim(&self) -> usize {
        self.diagnosis.len() + self.procedure.len() + self.medication.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub cardinality: usize,
}

/// One clinical visit; code sets are sorted active indices into the vocab.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub dx: Vec<usize>,
    pub px: Vec<usize>,
    pub rx: Vec<usize>,
    #[serde(rename = "t")]
    pub time_index: u32,
}

impl Visit {
    pub fn is_empty(&self) -> bool {
        self.dx.is_empty() && self.px.is_empty() && self.rx.is_empty()
    }

    /// Active columns of the concatenated (dx, px, rx) multi-hot vector.
    pub fn concat_indices(&self, vocab: &CodeVocabulary) -> Vec<usize> {
        let (nd, np, _) = vocab.sizes();
        let mut cols = Vec::with_capacity(self.dx.len() + self.px.len() + self.rx.len());
        cols.extend(self.dx.iter().copied());
        cols.extend(self.px.iter().map(|i| nd + i));
        cols.extend(self.rx.iter().map(|i| nd + np + i));
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patient {
    pub visits: Vec<Visit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoctorRecord {
    pub doctor_id: String,
    pub patients: Vec<Patient>,
    pub static_features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentCounts {
    pub randomized: u32,
    pub discontinued: u32,
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    /// Chosen index per category, aligned with `Corpus::categories`.
    pub categorical: Vec<usize>,
    pub text_tokens: Vec<String>,
    pub raw_enrollments: BTreeMap<String, EnrollmentCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentLabel {
    pub raw_rate: f64,
    pub normalized_rate: f64,
    pub bin: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub doctor_id: String,
    pub trial_id: String,
    pub label: EnrollmentLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub seed: u64,
    pub vocab: CodeVocabulary,
    pub categories: Vec<CategorySpec>,
    pub static_dim: usize,
    pub doctors: Vec<DoctorRecord>,
    pub trials: Vec<Trial>,
    pub samples: Vec<Sample>,
}

impl Corpus {
    pub fn doctor(&self, id: &str) -> Result<&DoctorRecord> {
        self.doctors
            .iter()
            .find(|d| d.doctor_id == id)
            .ok_or_else(|| D2vError::UnknownId {
                kind: "doctor",
                id: id.to_string(),
            })
    }

    pub fn trial(&self, id: &str) -> Result<&Trial> {
        self.trials
            .iter()
            .find(|t| t.trial_id == id)
            .ok_or_else(|| D2vError::UnknownId {
                kind: "trial",
                id: id.to_string(),
            })
    }

    pub fn category_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.categories.len());
        let mut acc = 0;
        for c in &self.categories {
            offs.push(acc);
            acc += c.cardinality;
        }
        offs
    }

    pub fn categorical_dim(&self) -> usize {
        self.categories.iter().map(|c| c.cardinality).sum()
    }

    /// Index of a named category in `categories`, if present.
    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    pub fn bin_histogram(&self) -> [usize; 5] {
        let mut h = [0usize; 5];
        for s in &self.samples {
            h[s.label.bin as usize] += 1;
        }
        h
    }

    /// Checks every structural invariant the types promise.
    pub fn validate(&self) -> Result<()> {
        let (nd, np, nm) = self.vocab.sizes();
        let mut doctor_ids = BTreeSet::new();
        for d in &self.doctors {
            if !doctor_ids.insert(d.doctor_id.as_str()) {
                return Err(D2vError::Invalid(format!(
                    "duplicate doctor id {}",
                    d.doctor_id
                )));
            }
            if d.patients.is_empty() {
                return Err(D2vError::Invalid(format!(
                    "doctor {} has no patients",
                    d.doctor_id
                )));
            }
            if d.static_features.len() != self.static_dim {
                return Err(D2vError::Invalid(format!(
                    "doctor {} static features {} != {}",
                    d.doctor_id,
                    d.static_features.len(),
                    self.static_dim
                )));
            }
            for p in &d.patients {
                if p.visits.is_empty() {
                    return Err(D2vError::Invalid(format!(
                        "doctor {} has a patient without visits",
                        d.doctor_id
                    )));
                }
                let mut last_t = None;
                for v in &p.visits {
                    if v.is_empty() {
                        return Err(D2vError::Invalid(format!(
                            "doctor {} has an empty visit",
                            d.doctor_id
                        )));
                    }
                    if let Some(prev) = last_t {
                        if v.time_index <= prev {
                            return Err(D2vError::Invalid(format!(
                                "doctor {} visit times not strictly increasing",
                                d.doctor_id
                            )));
                        }
                    }
                    last_t = Some(v.time_index);
                    for (codes, n) in [(&v.dx, nd), (&v.px, np), (&v.rx, nm)] {
                        if codes.windows(2).any(|w| w[0] >= w[1]) {
                            return Err(D2vError::Invalid(
                                "visit code indices not strictly sorted".into(),
                            ));
                        }
                        if codes.last().is_some_and(|&i| i >= n) {
                            return Err(D2vError::Invalid("visit code index out of vocab".into()));
                        }
                    }
                }
            }
        }
        let mut trial_ids = BTreeSet::new();
        for t in &self.trials {
            if !trial_ids.insert(t.trial_id.as_str()) {
                return Err(D2vError::Invalid(format!(
                    "duplicate trial id {}",
                    t.trial_id
                )));
            }
            if t.categorical.len() != self.categories.len() {
                return Err(D2vError::Invalid(format!(
                    "trial {} has {} categorical values, corpus declares {}",
                    t.trial_id,
                    t.categorical.len(),
                    self.categories.len()
                )));
            }
            for (v, spec) in t.categorical.iter().zip(&self.categories) {
                if *v >= spec.cardinality {
                    return Err(D2vError::Invalid(format!(
                        "trial {} category {} index {} out of range {}",
                        t.trial_id, spec.name, v, spec.cardinality
                    )));
                }
            }
            if t.text_tokens.is_empty() {
                return Err(D2vError::Invalid(format!("trial {} has no text", t.trial_id)));
            }
            for (doc, e) in &t.raw_enrollments {
                if !doctor_ids.contains(doc.as_str()) {
                    return Err(D2vError::Invalid(format!(
                        "trial {} enrolls unknown doctor {}",
                        t.trial_id, doc
                    )));
                }
                compute_enrollment_rate(e.randomized, e.discontinued, e.window)?;
            }
        }
        for s in &self.samples {
            if !doctor_ids.contains(s.doctor_id.as_str()) {
                return Err(D2vError::Invalid(format!(
                    "sample references unknown doctor {}",
                    s.doctor_id
                )));
            }
            if !trial_ids.contains(s.trial_id.as_str()) {
                return Err(D2vError::Invalid(format!(
                    "sample references unknown trial {}",
                    s.trial_id
                )));
            }
            if bin_rate(s.label.normalized_rate)? != s.label.bin {
                return Err(D2vError::Invalid(format!(
                    "sample ({}, {}) bin {} inconsistent with normalized rate {}",
                    s.doctor_id, s.trial_id, s.label.bin, s.label.normalized_rate
                )));
            }
        }
        Ok(())
    }
}

/// (randomized - discontinued) / window.
pub fn compute_enrollment_rate(randomized: u32, discontinued: u32, window: f64) -> Result<f64> {
    if discontinued > randomized || !(window > 0.0) {
        return Err(D2vError::InvalidEnrollment {
            randomized,
            discontinued,
            window,
        });
    }
    Ok(f64::from(randomized - discontinued) / window)
}

/// Min-max over one trial's doctors; all-equal inputs (including a single
/// doctor) map to 0.5 so every trial keeps defined labels.
pub fn normalize_rates(rates: &[f64]) -> Result<Vec<f64>> {
    if rates.is_empty() {
        return Err(D2vError::Empty { what: "rates" });
    }
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        Ok(rates.iter().map(|r| (r - min) / (max - min)).collect())
    } else {
        Ok(vec![0.5; rates.len()])
    }
}

/// Five bins over [0,1]: left-inclusive boundaries at 0.2 steps, last bin
/// closed at 1.0.
pub fn bin_rate(normalized: f64) -> Result<u8> {
    if !normalized.is_finite() || !(0.0..=1.0).contains(&normalized) {
        return Err(D2vError::RateOutOfRange(normalized));
    }
    Ok(if normalized < 0.2 {
        0
    } else if normalized < 0.4 {
        1
    } else if normalized < 0.6 {
        2
    } else if normalized < 0.8 {
        3
    } else {
        4
    })
}

/// Raw rates for one trial -> labels via normalize + bin.
pub fn labels_from_raw(raws: &[f64]) -> Result<Vec<EnrollmentLabel>> {
    let norm = normalize_rates(raws)?;
    raws.iter()
        .zip(&norm)
        .map(|(&raw_rate, &normalized_rate)| {
            Ok(EnrollmentLabel {
                raw_rate,
                normalized_rate,
                bin: bin_rate(normalized_rate)?,
            })
        })
        .collect()
}

/// Sample index sets per partition; trials never straddle partitions.
#[derive(Debug, Clone)]
pub struct SplitSets {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
    pub train_trials: BTreeSet<String>,
    pub test_trials: BTreeSet<String>,
    pub validation_trials: BTreeSet<String>,
}

/// Shuffles trial ids with the seed and apportions whole trials by
/// largest remainder, so partition sizes stay within one trial of the
/// exact ratios.
pub fn split_trial_disjoint(corpus: &Corpus, ratios: (f64, f64, f64), seed: u64) -> Result<SplitSets> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| x <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(D2vError::BadRatios(r));
    }
    let n = corpus.trials.len();
    if n < 10 {
        return Err(D2vError::TooFewTrials { need: 10, have: n });
    }
    let mut ids: Vec<&str> = corpus.trials.iter().map(|t| t.trial_id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let quotas: Vec<f64> = r.iter().map(|&x| x * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rem: Vec<(usize, f64)> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (i, q - q.floor()))
        .collect();
    rem.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut short = n - counts.iter().sum::<usize>();
    for (i, _) in rem {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }

    let train_trials: BTreeSet<String> = ids[..counts[0]].iter().map(|s| s.to_string()).collect();
    let test_trials: BTreeSet<String> = ids[counts[0]..counts[0] + counts[1]]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let validation_trials: BTreeSet<String> = ids[counts[0] + counts[1]..]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let mut sets = SplitSets {
        train: Vec::new(),
        test: Vec::new(),
        validation: Vec::new(),
        train_trials,
        test_trials,
        validation_trials,
    };
    for (i, s) in corpus.samples.iter().enumerate() {
        if sets.train_trials.contains(&s.trial_id) {
            sets.train.push(i);
        } else if sets.test_trials.contains(&s.trial_id) {
            sets.test.push(i);
        } else {
            sets.validation.push(i);
        }
    }
    Ok(sets)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind")]
enum Record {
    #[serde(rename = "header")]
    Header {
        format_version: u32,
        seed: u64,
        n_doctors: usize,
        n_patients: usize,
        n_trials: usize,
        n_samples: usize,
    },
    #[serde(rename = "vocab")]
    Vocab {
        diagnosis: Vec<String>,
        procedure: Vec<String>,
        medication: Vec<String>,
        categories: Vec<CategorySpec>,
        static_dim: usize,
    },
    #[serde(rename = "doctor")]
    Doctor {
        doctor_id: String,
        static_features: Vec<f64>,
    },
    #[serde(rename = "patient")]
    PatientRec {
        doctor_id: String,
        seq: usize,
        visits: Vec<Visit>,
    },
    #[serde(rename = "trial")]
    TrialRec {
        trial_id: String,
        categorical: Vec<usize>,
        text_tokens: Vec<String>,
        raw_enrollments: BTreeMap<String, EnrollmentCounts>,
    },
    #[serde(rename = "sample")]
    SampleRec {
        doctor_id: String,
        trial_id: String,
        label: EnrollmentLabel,
    },
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let n_patients = corpus.doctors.iter().map(|d| d.patients.len()).sum();
    let records = std::iter::once(Record::Header {
        format_version: FORMAT_VERSION,
        seed: corpus.seed,
        n_doctors: corpus.doctors.len(),
        n_patients,
        n_trials: corpus.trials.len(),
        n_samples: corpus.samples.len(),
    })
    .chain(std::iter::once(Record::Vocab {
        diagnosis: corpus.vocab.diagnosis.clone(),
        procedure: corpus.vocab.procedure.clone(),
        medication: corpus.vocab.medication.clone(),
        categories: corpus.categories.clone(),
        static_dim: corpus.static_dim,
    }));
    for rec in records {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    for d in &corpus.doctors {
        serde_json::to_writer(
            &mut out,
            &Record::Doctor {
                doctor_id: d.doctor_id.clone(),
                static_features: d.static_features.clone(),
            },
        )?;
        out.write_all(b"\n")?;
        for (seq, p) in d.patients.iter().enumerate() {
            serde_json::to_writer(
                &mut out,
                &Record::PatientRec {
                    doctor_id: d.doctor_id.clone(),
                    seq,
                    visits: p.visits.clone(),
                },
            )?;
            out.write_all(b"\n")?;
        }
    }
    for t in &corpus.trials {
        serde_json::to_writer(
            &mut out,
            &Record::TrialRec {
                trial_id: t.trial_id.clone(),
                categorical: t.categorical.clone(),
                text_tokens: t.text_tokens.clone(),
                raw_enrollments: t.raw_enrollments.clone(),
            },
        )?;
        out.write_all(b"\n")?;
    }
    for s in &corpus.samples {
        serde_json::to_writer(
            &mut out,
            &Record::SampleRec {
                doctor_id: s.doctor_id.clone(),
                trial_id: s.trial_id.clone(),
                label: s.label,
            },
        )?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut header = None;
    let mut vocab_rec = None;
    let mut doctors: Vec<DoctorRecord> = Vec::new();
    let mut patients: BTreeMap<String, Vec<(usize, Vec<Visit>)>> = BTreeMap::new();
    let mut trials = Vec::new();
    let mut samples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| {
            D2vError::Invalid(format!("line {}: {}", lineno + 1, e))
        })?;
        match rec {
            Record::Header { format_version, seed, .. } => {
                if format_version != FORMAT_VERSION {
                    return Err(D2vError::Invalid(format!(
                        "unsupported format version {format_version}"
                    )));
                }
                header = Some(seed);
            }
            Record::Vocab {
                diagnosis,
                procedure,
                medication,
                categories,
                static_dim,
            } => {
                vocab_rec = Some((
                    CodeVocabulary {
                        diagnosis,
                        procedure,
                        medication,
                    },
                    categories,
                    static_dim,
                ));
            }
            Record::Doctor {
                doctor_id,
                static_features,
            } => doctors.push(DoctorRecord {
                doctor_id,
                patients: Vec::new(),
                static_features,
            }),
            Record::PatientRec {
                doctor_id,
                seq,
                visits,
            } => patients.entry(doctor_id).or_default().push((seq, visits)),
            Record::TrialRec {
                trial_id,
                categorical,
                text_tokens,
                raw_enrollments,
            } => trials.push(Trial {
                trial_id,
                categorical,
                text_tokens,
                raw_enrollments,
            }),
            Record::SampleRec {
                doctor_id,
                trial_id,
                label,
            } => samples.push(Sample {
                doctor_id,
                trial_id,
                label,
            }),
        }
    }
    let seed = header.ok_or_else(|| D2vError::Invalid("missing header record".into()))?;
    let (vocab, categories, static_dim) =
        vocab_rec.ok_or_else(|| D2vError::Invalid("missing vocab record".into()))?;
    for d in &mut doctors {
        if let Some(mut ps) = patients.remove(&d.doctor_id) {
            ps.sort_by_key(|(seq, _)| *seq);
            d.patients = ps.into_iter().map(|(_, visits)| Patient { visits }).collect();
        }
    }
    if let Some(orphan) = patients.keys().next() {
        return Err(D2vError::Invalid(format!(
            "patient records for unknown doctor {orphan}"
        )));
    }
    let corpus = Corpus {
        seed,
        vocab,
        categories,
        static_dim,
        doctors,
        trials,
        samples,
    };
    corpus.validate()?;
    Ok(corpus)
}
