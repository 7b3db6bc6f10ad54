//! Dense vector encoder shared by every store.
//!
//! Two backends: a remote OpenAI-compatible embeddings endpoint, and a
//! deterministic hashed bag-of-tokens encoder used by the offline test and
//! bench paths. Both produce unit-norm vectors so cosine similarity reduces
//! to a dot product everywhere downstream.

use std::collections::HashMap;
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::turn::InteractionUnit;

/// Environment variable holding the API key for remote backends.
pub const API_KEY_ENV: &str = "RECMEM_API_KEY";

/// A fixed-length dense vector, unit-norm unless it is the all-zeros
/// sentinel produced for token-free text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    /// Normalize raw component values to unit length. An all-zero input is
    /// kept as the zero sentinel.
    pub fn from_raw(mut values: Vec<f32>) -> Self {
        let norm = values.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for v in values.iter_mut() {
                *v /= norm;
            }
        }
        Embedding { values }
    }

    /// Wrap values that are already unit-norm (or the zero sentinel).
    pub fn from_unit(values: Vec<f32>) -> Self {
        Embedding { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Embedding {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f32 {
        self.values.iter().map(|x| x * x).sum::<f32>().sqrt()
    }

    /// Cosine similarity. Both vectors are unit-norm by construction, so
    /// this is a plain dot product; the zero sentinel scores 0 everywhere.
    pub fn cosine(&self, other: &Embedding) -> f32 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Which encoder implementation to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderBackend {
    Remote,
    HashedTest,
}

/// Encoder construction parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub backend: EncoderBackend,
    pub dim: usize,
    /// Remote only: embedding model name sent in the request body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    /// Remote only: base URL, e.g. "https://api.openai.com/v1".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
}

impl EncoderConfig {
    pub fn hashed_test(dim: usize) -> Self {
        EncoderConfig {
            backend: EncoderBackend::HashedTest,
            dim,
            model_name: None,
            endpoint_url: None,
        }
    }

    pub fn remote(dim: usize, model_name: impl Into<String>, endpoint_url: impl Into<String>) -> Self {
        EncoderConfig {
            backend: EncoderBackend::Remote,
            dim,
            model_name: Some(model_name.into()),
            endpoint_url: Some(endpoint_url.into()),
        }
    }

    /// Validate and construct the configured encoder.
    pub fn build(&self) -> Result<Box<dyn Encoder>> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("encoder dim must be positive".into()));
        }
        match self.backend {
            EncoderBackend::HashedTest => {
                if !self.dim.is_power_of_two() {
                    return Err(Error::InvalidConfig(format!(
                        "hashed-test dim must be a power of two, got {}",
                        self.dim
                    )));
                }
                Ok(Box::new(HashedEncoder::new(self.dim)))
            }
            EncoderBackend::Remote => {
                let model = self.model_name.clone().ok_or_else(|| {
                    Error::InvalidConfig("remote encoder requires model_name".into())
                })?;
                let endpoint = self.endpoint_url.clone().ok_or_else(|| {
                    Error::InvalidConfig("remote encoder requires endpoint_url".into())
                })?;
                Ok(Box::new(RemoteEncoder::new(self.dim, model, endpoint)?))
            }
        }
    }
}

/// The dense vector encoder. Implementations are pure with respect to the
/// input text (timestamps and ids never influence the vector) and safe to
/// call concurrently.
pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;

    /// Encode free text into a unit-norm vector.
    ///
    /// Empty or whitespace-only input errors with [`Error::EmptyText`];
    /// the caller decides whether to skip the unit.
    fn encode(&self, text: &str) -> Result<Embedding>;

    /// Encode one interaction unit via its canonical speaker-tagged text.
    fn encode_unit(&self, unit: &InteractionUnit) -> Result<Embedding> {
        if unit.is_blank() {
            return Err(Error::EmptyText);
        }
        self.encode(&unit.canonical_text())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Deterministic offline encoder: lowercase, split on non-alphanumeric
/// runs, FNV-1a each token into one of `dim` signed buckets, L2-normalize.
/// Cheap, byte-stable across runs, and lexical overlap maps to cosine
/// similarity, which is all the recurrence tests need.
#[derive(Debug, Clone)]
pub struct HashedEncoder {
    dim: usize,
}

impl HashedEncoder {
    /// `dim` must be a power of two.
    pub fn new(dim: usize) -> Self {
        assert!(dim.is_power_of_two(), "hashed encoder dim must be a power of two");
        HashedEncoder { dim }
    }
}

impl Encoder for HashedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let lowered = text.to_lowercase();
        let mut acc = vec![0.0f32; self.dim];
        for token in lowered.split(|c: char| !c.is_ascii_alphanumeric()) {
            if token.is_empty() {
                continue;
            }
            let hash = fnv1a(token.as_bytes());
            let bucket = (hash % self.dim as u64) as usize;
            let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
        // Text with no alphanumeric tokens encodes to the zero sentinel.
        Ok(Embedding::from_raw(acc))
    }
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: [&'a str; 1],
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingsDatum>,
}

#[derive(Deserialize)]
struct EmbeddingsDatum {
    embedding: Vec<f32>,
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
///
/// Vectors are re-normalized locally so downstream cosine math can assume
/// unit norm regardless of what the service returns. Repeated texts hit a
/// read-mostly cache.
pub struct RemoteEncoder {
    dim: usize,
    model_name: String,
    endpoint_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    cache: RwLock<HashMap<String, Embedding>>,
}

impl RemoteEncoder {
    pub fn new(dim: usize, model_name: String, endpoint_url: String) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::RemoteUnavailable(e.to_string()))?;
        Ok(RemoteEncoder {
            dim,
            model_name,
            endpoint_url: endpoint_url.trim_end_matches('/').to_string(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            client,
            cache: RwLock::new(HashMap::new()),
        })
    }
}

impl Encoder for RemoteEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        if let Some(hit) = self.cache.read().expect("cache lock").get(text) {
            return Ok(hit.clone());
        }

        let url = format!("{}/embeddings", self.endpoint_url);
        let body = EmbeddingsRequest {
            model: &self.model_name,
            input: [text],
        };
        let mut req = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Error::Timeout(Duration::from_secs(60))
            } else {
                Error::RemoteUnavailable(e.to_string())
            }
        })?;
        if !resp.status().is_success() {
            return Err(Error::RemoteUnavailable(format!(
                "{url} returned {}",
                resp.status()
            )));
        }
        let parsed: EmbeddingsResponse = resp
            .json()
            .map_err(|e| Error::RemoteUnavailable(format!("bad embeddings payload: {e}")))?;
        let raw = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| Error::RemoteUnavailable("embeddings response had no data".into()))?
            .embedding;
        if raw.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: raw.len(),
            });
        }
        let embedding = Embedding::from_raw(raw);
        self.cache
            .write()
            .expect("cache lock")
            .insert(text.to_string(), embedding.clone());
        Ok(embedding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::turn::Timestamp;

    fn enc() -> HashedEncoder {
        HashedEncoder::new(256)
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(enc().encode(""), Err(Error::EmptyText)));
        assert!(matches!(enc().encode("   \n\t"), Err(Error::EmptyText)));
    }

    #[test]
    fn repeated_token_encodes_to_same_unit_vector() {
        let a = enc().encode("hello hello").unwrap();
        let b = enc().encode("hello").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hashed_encoding_is_deterministic() {
        let a = enc().encode("order a birthday cake").unwrap();
        let b = enc().encode("order a birthday cake").unwrap();
        assert_eq!(a.values(), b.values());
    }

    // Expected values computed with a standalone implementation of the
    // hashed scheme (FNV-1a over lowercased tokens, signed buckets,
    // L2-normalize). Four distinct tokens, four distinct buckets, so every
    // nonzero component is exactly +-1/2.
    #[test]
    fn frozen_vector_for_cake_text() {
        let v = enc().encode("order a birthday cake").unwrap();
        assert_eq!(v.dim(), 256);
        let nonzero: Vec<(usize, f32)> = v
            .values()
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, x)| (i, *x))
            .collect();
        assert_eq!(
            nonzero,
            vec![(76, 0.5), (121, -0.5), (140, -0.5), (247, 0.5)]
        );
    }

    #[test]
    fn encodings_are_unit_norm_or_zero_sentinel() {
        for text in ["hi", "one two three", "a b c d e f g", "!!!", "--- ???"] {
            let v = enc().encode(text).unwrap();
            if v.is_zero() {
                // No alphanumeric tokens at all.
                assert!(text.chars().all(|c| !c.is_ascii_alphanumeric()));
            } else {
                assert!((v.norm() - 1.0).abs() <= 1e-6, "norm for {text:?}");
            }
        }
    }

    #[test]
    fn encode_unit_ignores_timestamp_and_ids() {
        let e = enc();
        let t1 = Timestamp::parse("2023-05-01T10:00:00Z").unwrap();
        let t2 = Timestamp::parse("2025-12-31T23:59:59Z").unwrap();
        let a = InteractionUnit::new("a", "hi there", "hello", t1);
        let b = InteractionUnit::new("b", "hi there", "hello", t2);
        assert_eq!(e.encode_unit(&a).unwrap(), e.encode_unit(&b).unwrap());
    }

    #[test]
    fn encode_unit_rejects_blank_unit() {
        let ts = Timestamp::parse("2023-05-01T10:00:00Z").unwrap();
        let u = InteractionUnit::new("t", "", "   ", ts);
        assert!(matches!(enc().encode_unit(&u), Err(Error::EmptyText)));
    }

    #[test]
    fn hashed_dim_must_be_power_of_two() {
        assert!(EncoderConfig::hashed_test(100).build().is_err());
        assert!(EncoderConfig::hashed_test(128).build().is_ok());
    }

    #[test]
    fn cosine_of_zero_sentinel_is_zero() {
        let z = Embedding::zeros(8);
        let v = Embedding::from_raw(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(z.cosine(&v), 0.0);
    }
}
