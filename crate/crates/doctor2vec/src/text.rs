//! Deterministic text embedding for trial descriptions.
//!
//! The default mode hashes each token with 64-bit FNV-1a into one of
//! `output_dim` signed buckets and L2-normalizes the bucket counts, so the
//! embedding is reproducible across runs and platforms with no model
//! dependency. The lookup mode averages per-token vectors loaded from a
//! tab-separated embedding file.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use crate::error::{D2vError, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

#[derive(Debug, Clone)]
pub enum TextEmbedder {
    /// Signed hashed bag of tokens, L2-normalized.
    Hashed { output_dim: usize },
    /// Mean of per-token vectors; unknown tokens are skipped.
    Lookup {
        output_dim: usize,
        table: BTreeMap<String, Vec<f64>>,
    },
}

impl TextEmbedder {
    pub fn hashed(output_dim: usize) -> Self {
        TextEmbedder::Hashed { output_dim }
    }

    /// Loads "token<TAB>v1 v2 ..." lines; the first line declares the
    /// dimension as "dim<TAB>N".
    pub fn lookup_from_file(path: &Path) -> Result<Self> {
        let reader = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| D2vError::Text("empty embedding file".into()))??;
        let output_dim = header
            .strip_prefix("dim\t")
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| D2vError::Text("embedding file must start with 'dim\\tN'".into()))?;
        let mut table = BTreeMap::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (token, rest) = line.split_once('\t').ok_or_else(|| {
                D2vError::Text(format!("line {}: missing tab separator", lineno + 2))
            })?;
            let vec: Vec<f64> = rest
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| D2vError::Text(format!("line {}: {}", lineno + 2, e)))?;
            if vec.len() != output_dim {
                return Err(D2vError::Text(format!(
                    "line {}: vector length {} != declared dim {}",
                    lineno + 2,
                    vec.len(),
                    output_dim
                )));
            }
            table.insert(token.to_string(), vec);
        }
        Ok(TextEmbedder::Lookup { output_dim, table })
    }

    pub fn output_dim(&self) -> usize {
        match self {
            TextEmbedder::Hashed { output_dim } | TextEmbedder::Lookup { output_dim, .. } => {
                *output_dim
            }
        }
    }

    pub fn embed(&self, tokens: &[String]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(D2vError::Empty { what: "text tokens" });
        }
        match self {
            TextEmbedder::Hashed { output_dim } => {
                let mut v = vec![0.0; *output_dim];
                for tok in tokens {
                    let h = fnv1a(tok.as_bytes());
                    let bucket = (h % *output_dim as u64) as usize;
                    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                    v[bucket] += sign;
                }
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for x in &mut v {
                        *x /= norm;
                    }
                }
                Ok(v)
            }
            TextEmbedder::Lookup { output_dim, table } => {
                let mut v = vec![0.0; *output_dim];
                let mut known = 0usize;
                for tok in tokens {
                    if let Some(e) = table.get(tok) {
                        known += 1;
                        for (a, b) in v.iter_mut().zip(e) {
                            *a += b;
                        }
                    }
                }
                if known == 0 {
                    return Err(D2vError::Text(
                        "no tokens found in the embedding table".into(),
                    ));
                }
                for x in &mut v {
                    *x /= known as f64;
                }
                Ok(v)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hashed_is_unit_norm_and_deterministic() {
        let e = TextEmbedder::hashed(16);
        let a = e.embed(&toks(&["alpha", "beta", "gamma"])).unwrap();
        let b = e.embed(&toks(&["alpha", "beta", "gamma"])).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repetition_is_scale_invariant() {
        let e = TextEmbedder::hashed(16);
        let once = e.embed(&toks(&["a", "b"])).unwrap();
        let twice = e.embed(&toks(&["a", "b", "a", "b"])).unwrap();
        for (x, y) in once.iter().zip(&twice) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_token_is_one_hot_like() {
        let e = TextEmbedder::hashed(8);
        let v = e.embed(&toks(&["solo"])).unwrap();
        let nonzero: Vec<&f64> = v.iter().filter(|x| **x != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_tokens_rejected() {
        let e = TextEmbedder::hashed(8);
        assert!(e.embed(&[]).is_err());
    }
}
