//! Text embedders: the deterministic hashed bag-of-words fallback and an
//! HTTP client for an external encoder service.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::RetrievalError;

pub const FALLBACK_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Dense vector, unit-norm or all-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_similarity(u: &Embedding, v: &Embedding) -> Result<f64, RetrievalError> {
    if u.dim() != v.dim() {
        return Err(RetrievalError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.values().iter().zip(v.values()) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, b| {
        (hash ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercase, split on non-alphanumerics, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Hashed bag-of-words: FNV-1a per token, bucket `hash % 64`, L2-normalized.
pub fn fallback_embed(text: &str) -> Embedding {
    let mut counts = vec![0.0f64; FALLBACK_DIM];
    for token in tokenize(text) {
        counts[(fnv1a64(token.as_bytes()) % FALLBACK_DIM as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        counts.iter_mut().for_each(|c| *c /= norm);
    }
    Embedding(counts)
}

/// A text encoder. Implementations must be deterministic per instance.
pub trait Embedder: Send + Sync {
    fn describe(&self) -> String;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, RetrievalError>;

    fn embed(&self, text: &str) -> Result<Embedding, RetrievalError> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        out.pop().ok_or_else(|| {
            RetrievalError::EmbedderProtocol("encoder returned no vector".into())
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackEmbedder;

impl Embedder for FallbackEmbedder {
    fn describe(&self) -> String {
        format!("fallback-fnv1a-{FALLBACK_DIM}")
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, RetrievalError> {
        Ok(texts.iter().map(|t| fallback_embed(t)).collect())
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    model: String,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

/// `GET /health` body of the encoder service.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct EmbedderHealth {
    pub status: String,
    pub model: String,
    pub dim: usize,
}

/// Client for the `/embed` + `/health` encoder service.
pub struct HttpEmbedder {
    base_url: String,
    client: reqwest::blocking::Client,
    health: EmbedderHealth,
}

impl fmt::Debug for HttpEmbedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpEmbedder")
            .field("base_url", &self.base_url)
            .field("health", &self.health)
            .finish()
    }
}

impl HttpEmbedder {
    /// Connects and waits for nothing: a non-ready service is unavailable.
    pub fn connect(base_url: &str) -> Result<Self, RetrievalError> {
        let base_url = base_url.trim_end_matches('/').to_string();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| RetrievalError::EmbedderUnavailable(e.to_string()))?;
        let resp = client
            .get(format!("{base_url}/health"))
            .send()
            .map_err(|e| RetrievalError::EmbedderUnavailable(format!("{base_url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(RetrievalError::EmbedderUnavailable(format!(
                "{base_url}/health returned {}",
                resp.status()
            )));
        }
        let health: EmbedderHealth = resp
            .json()
            .map_err(|e| RetrievalError::EmbedderProtocol(format!("bad /health body: {e}")))?;
        if health.status != "ok" {
            return Err(RetrievalError::EmbedderUnavailable(format!(
                "service status `{}`",
                health.status
            )));
        }
        Ok(Self {
            base_url,
            client,
            health,
        })
    }

    pub fn health(&self) -> &EmbedderHealth {
        &self.health
    }
}

impl Embedder for HttpEmbedder {
    fn describe(&self) -> String {
        format!("http:{} ({}, dim {})", self.base_url, self.health.model, self.health.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, RetrievalError> {
        let resp = self
            .client
            .post(format!("{}/embed", self.base_url))
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| RetrievalError::EmbedderUnavailable(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 503 {
            return Err(RetrievalError::EmbedderUnavailable("service is loading".into()));
        }
        if !status.is_success() {
            return Err(RetrievalError::EmbedderProtocol(format!("/embed returned {status}")));
        }
        let body: EmbedResponse = resp
            .json()
            .map_err(|e| RetrievalError::EmbedderProtocol(format!("bad /embed body: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(RetrievalError::EmbedderProtocol(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        if body.dim != self.health.dim || body.model != self.health.model {
            return Err(RetrievalError::EmbedderProtocol(format!(
                "model changed from {}/{} to {}/{}",
                self.health.model, self.health.dim, body.model, body.dim
            )));
        }
        body.vectors
            .into_iter()
            .map(|v| {
                if v.len() == body.dim {
                    Ok(Embedding(v))
                } else {
                    Err(RetrievalError::EmbedderProtocol(format!(
                        "vector of length {} for dim {}",
                        v.len(),
                        body.dim
                    )))
                }
            })
            .collect()
    }
}

/// Embedder selection: `fallback`, `http:<base-url>`, or bare `http`
/// (base URL taken from `MAR_EMBEDDER_URL`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderSpec {
    Fallback,
    Http(String),
}

pub const EMBEDDER_URL_ENV: &str = "MAR_EMBEDDER_URL";

impl std::str::FromStr for EmbedderSpec {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "fallback" => Ok(EmbedderSpec::Fallback),
            "http" => std::env::var(EMBEDDER_URL_ENV)
                .map(EmbedderSpec::Http)
                .map_err(|_| {
                    RetrievalError::EmbedderUnavailable(format!("{EMBEDDER_URL_ENV} is not set"))
                }),
            other => match other.strip_prefix("http:") {
                Some(url) if !url.is_empty() => Ok(EmbedderSpec::Http(url.to_string())),
                _ => Err(RetrievalError::InvalidConfig(format!(
                    "embedder must be `fallback` or `http:<url>`, got `{other}`"
                ))),
            },
        }
    }
}

impl EmbedderSpec {
    /// Instantiates the embedder. With `allow_fallback`, an unreachable
    /// service degrades to [`FallbackEmbedder`] instead of failing.
    pub fn connect(&self, allow_fallback: bool) -> Result<Arc<dyn Embedder>, RetrievalError> {
        match self {
            EmbedderSpec::Fallback => Ok(Arc::new(FallbackEmbedder)),
            EmbedderSpec::Http(url) => match HttpEmbedder::connect(url) {
                Ok(e) => Ok(Arc::new(e)),
                Err(RetrievalError::EmbedderUnavailable(reason)) if allow_fallback => {
                    log::warn!("embedder at {url} unavailable ({reason}); using fallback");
                    Ok(Arc::new(FallbackEmbedder))
                }
                Err(e) => Err(e),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bucket indices and hashes were computed by an independent script
    // running the same FNV-1a/mod-64 procedure.
    #[test]
    fn fnv_matches_reference_values() {
        assert_eq!(fnv1a64(b""), FNV_OFFSET);
        assert_eq!(fnv1a64(b"ramen"), 0x4aba_b411_ae76_93b4);
        assert_eq!(fnv1a64(b"hotel"), 0x42aa_ef7b_47cd_3d5d);
        assert_eq!(fnv1a64(b"ramen") % 64, 52);
        assert_eq!(fnv1a64(b"hotel") % 64, 29);
        assert_eq!(fnv1a64(b"search") % 64, 41);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = fallback_embed("");
        assert_eq!(e.dim(), 64);
        assert!(e.is_zero());
        assert!(fallback_embed(" ,.;!? ").is_zero());
    }

    #[test]
    fn repeated_tokens_keep_direction() {
        let a = fallback_embed("ramen");
        let b = fallback_embed("ramen ramen");
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 1.0);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ramen_and_hotel_land_in_distinct_buckets() {
        let sim = cosine_similarity(&fallback_embed("ramen"), &fallback_embed("hotel")).unwrap();
        assert_eq!(sim, 0.0);
        assert_eq!(fallback_embed("ramen").values()[52], 1.0);
        assert_eq!(fallback_embed("HOTEL").values()[29], 1.0);
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(
            tokenize("Tap the \"Search\" bar."),
            vec!["tap", "the", "search", "bar"]
        );
        // Query-vs-subtask value cross-checked with the reference script.
        let sim = cosine_similarity(
            &fallback_embed("Tap the search bar."),
            &fallback_embed("tap search bar"),
        )
        .unwrap();
        assert!((sim - 0.8660254037844388).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        let e = |v: &[f64]| Embedding::new(v.to_vec());
        assert_eq!(cosine_similarity(&e(&[1., 0., 0.]), &e(&[1., 0., 0.])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&e(&[1., 0.]), &e(&[0., 1.])).unwrap(), 0.0);
        let s = cosine_similarity(&e(&[1., 1.]), &e(&[1., 0.])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(cosine_similarity(&e(&[0., 0.]), &e(&[1., 0.])).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&e(&[1.]), &e(&[1., 0.])),
            Err(RetrievalError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("fallback".parse::<EmbedderSpec>().unwrap(), EmbedderSpec::Fallback);
        assert_eq!(
            "http:http://127.0.0.1:8765".parse::<EmbedderSpec>().unwrap(),
            EmbedderSpec::Http("http://127.0.0.1:8765".into())
        );
        assert!("contriever".parse::<EmbedderSpec>().is_err());
        assert!("http:".parse::<EmbedderSpec>().is_err());
    }

    #[test]
    fn unreachable_service_respects_fallback_switch() {
        // Port 9 (discard) on localhost is essentially never an HTTP server.
        let spec = EmbedderSpec::Http("http://127.0.0.1:9".into());
        assert!(matches!(
            spec.connect(false),
            Err(RetrievalError::EmbedderUnavailable(_))
        ));
        let e = spec.connect(true).unwrap();
        assert!(e.describe().starts_with("fallback"));
    }
}
