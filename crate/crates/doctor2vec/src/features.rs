//! Fixed-length feature vectors for the reference models: doctor code
//! counts, trial attribute indicators, and a tf-idf text vectorizer
//! fitted on training trials only.

use std::collections::BTreeMap;

use crate::data::{Corpus, DoctorRecord, Trial};
use crate::error::{D2vError, Result};

/// Occurrence counts of every code across the doctor's patient visits,
/// in concatenated vocabulary order.
pub fn doctor_code_counts(doctor: &DoctorRecord, corpus: &Corpus) -> Vec<f64> {
    let mut counts = vec![0.0; corpus.vocab.visit_dim()];
    for patient in &doctor.patients {
        for visit in &patient.visits {
            for idx in visit.concat_indices(&corpus.vocab) {
                counts[idx] += 1.0;
            }
        }
    }
    counts
}

/// ln(1 + x) applied elementwise; tames heavy-tailed counts.
pub fn log1p_scale(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.ln_1p()).collect()
}

/// Indicator vector over the concatenated attribute encoding.
pub fn trial_categorical_multihot(trial: &Trial, corpus: &Corpus) -> Result<Vec<f64>> {
    let offsets = corpus.category_offsets();
    if trial.categorical.len() != offsets.len() {
        return Err(D2vError::Invalid(format!(
            "trial {} has {} attribute values for {} categories",
            trial.trial_id,
            trial.categorical.len(),
            offsets.len()
        )));
    }
    let mut v = vec![0.0; corpus.categorical_dim()];
    for ((&choice, &offset), spec) in trial.categorical.iter().zip(&offsets).zip(&corpus.categories) {
        if choice >= spec.cardinality {
            return Err(D2vError::Invalid(format!(
                "attribute value {choice} outside {} ({})",
                spec.name, spec.cardinality
            )));
        }
        v[offset + choice] = 1.0;
    }
    Ok(v)
}

/// Term-frequency / inverse-document-frequency vectorizer. The
/// vocabulary is every token seen during fitting, in lexicographic
/// order; idf = ln((1 + N) / (1 + df)) + 1; rows are L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdf {
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdf {
    pub fn fit<D: AsRef<[String]>>(documents: &[D]) -> Result<Self> {
        if documents.is_empty() {
            return Err(D2vError::Empty { what: "tf-idf fitting set" });
        }
        let mut vocab = BTreeMap::new();
        for doc in documents {
            for token in doc.as_ref() {
                let next = vocab.len();
                vocab.entry(token.clone()).or_insert(next);
            }
        }
        // reassign ids lexicographically; insertion order above depends
        // on document order
        let mut ids: Vec<(String, usize)> = vocab.into_iter().collect();
        ids.sort_by(|a, b| a.0.cmp(&b.0));
        let vocab: BTreeMap<String, usize> =
            ids.into_iter().enumerate().map(|(i, (t, _))| (t, i)).collect();

        let mut df = vec![0usize; vocab.len()];
        for doc in documents {
            let mut seen = vec![false; vocab.len()];
            for token in doc.as_ref() {
                let &id = vocab.get(token).unwrap();
                if !seen[id] {
                    seen[id] = true;
                    df[id] += 1;
                }
            }
        }
        let n = documents.len() as f64;
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        Ok(Self { vocab, idf })
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    /// Tokens outside the fitted vocabulary are ignored; a document
    /// with no known tokens maps to the zero vector.
    pub fn transform(&self, tokens: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.vocab.len()];
        for token in tokens {
            if let Some(&id) = self.vocab.get(token) {
                v[id] += 1.0;
            }
        }
        for (x, idf) in v.iter_mut().zip(&self.idf) {
            *x *= idf;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        v
    }
}

/// Joint doctor-trial feature vector used by the reference models:
/// log-scaled code counts, attribute indicators, then tf-idf text.
pub fn pair_features(
    doctor: &DoctorRecord,
    trial: &Trial,
    corpus: &Corpus,
    tfidf: &TfIdf,
) -> Result<Vec<f64>> {
    let mut v = log1p_scale(&doctor_code_counts(doctor, corpus));
    v.extend(trial_categorical_multihot(trial, corpus)?);
    v.extend(tfidf.transform(&trial.text_tokens));
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(items: &[&str]) -> Vec<String> {
        items.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn tfidf_hand_example() {
        let docs = vec![s(&["a", "b", "a"]), s(&["b", "c"])];
        let model = TfIdf::fit(&docs).unwrap();
        assert_eq!(model.dim(), 3);
        let idf_a = (3.0f64 / 2.0).ln() + 1.0;
        let idf_b = 1.0;
        let raw = [2.0 * idf_a, idf_b, 0.0];
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let got = model.transform(&docs[0]);
        for (g, want) in got.iter().zip(raw.iter().map(|x| x / norm)) {
            assert!((g - want).abs() < 1e-15);
        }
        let n: f64 = got.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vocabulary_is_lexicographic_regardless_of_input_order() {
        let a = TfIdf::fit(&[s(&["zebra", "apple"]), s(&["mango"])]).unwrap();
        let b = TfIdf::fit(&[s(&["mango"]), s(&["apple", "zebra"])]).unwrap();
        assert_eq!(a.transform(&s(&["apple"])), b.transform(&s(&["apple"])));
        // "apple" must occupy slot 0 in both
        let t = a.transform(&s(&["apple"]));
        assert!(t[0] > 0.0);
        assert!(t[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unknown_tokens_are_ignored() {
        let model = TfIdf::fit(&[s(&["a", "b"])]).unwrap();
        let v = model.transform(&s(&["zzz", "qqq"]));
        assert!(v.iter().all(|&x| x == 0.0));
        let mixed = model.transform(&s(&["a", "zzz"]));
        assert!(mixed[0] > 0.0);
    }

    #[test]
    fn log_scale_is_monotone_and_zero_preserving() {
        let v = log1p_scale(&[0.0, 1.0, 10.0]);
        assert_eq!(v[0], 0.0);
        assert!(v[1] < v[2]);
    }
}
