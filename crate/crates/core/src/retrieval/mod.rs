//! Exact-scan cosine retrieval over the two knowledge bases.
//!
//! The manager knowledge base holds (task instruction, human steps) pairs and
//! is queried once per task for the top-k most similar instructions. Operator
//! knowledge is partitioned per app; each query is restricted to one app's
//! library and returns its single best (subtask, screenshot, action) entry.
//! Ranking is by descending cosine similarity with ties broken by ascending
//! document id.

mod embed;
mod store;

pub use embed::{
    cosine_similarity, fallback_embed, fnv1a64, tokenize, Embedder, EmbedderHealth, EmbedderSpec,
    Embedding, FallbackEmbedder, HttpEmbedder, EMBEDDER_URL_ENV, FALLBACK_DIM,
};
pub use store::{
    load_knowledge_base, read_jsonl, read_manager_docs, read_operator_dir, read_operator_docs,
    write_jsonl, KbLayout, KnowledgeBase,
};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, TaskInstruction};

/// Default number of manager exemplars.
pub const DEFAULT_MANAGER_K: usize = 3;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("embedder protocol error: {0}")]
    EmbedderProtocol(String),
    #[error("invalid document {id}: {reason}")]
    InvalidDocument { id: u64, reason: String },
    #[error("duplicate document id {0}")]
    DuplicateId(u64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}:{line}: {reason}")]
    Format {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// (task instruction, human steps) exemplar for planning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagerDoc {
    pub id: u64,
    pub instruction: String,
    pub human_steps: String,
}

/// (subtask, screenshot, action) exemplar for one app.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorDoc {
    pub id: u64,
    pub app: String,
    pub subtask: String,
    /// Relative to the knowledge-base root.
    pub screenshot: PathBuf,
    pub action: Action,
}

/// A document that can be indexed: it has a stable id and one text to embed.
pub trait Document: Clone {
    fn id(&self) -> u64;
    fn key_text(&self) -> &str;
    fn validate(&self) -> Result<(), RetrievalError>;
}

impl Document for ManagerDoc {
    fn id(&self) -> u64 {
        self.id
    }

    fn key_text(&self) -> &str {
        &self.instruction
    }

    fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |reason: &str| RetrievalError::InvalidDocument {
            id: self.id,
            reason: reason.into(),
        };
        if self.instruction.trim().is_empty() {
            return Err(bad("empty instruction"));
        }
        if self.human_steps.trim().is_empty() {
            return Err(bad("empty human steps"));
        }
        Ok(())
    }
}

impl Document for OperatorDoc {
    fn id(&self) -> u64 {
        self.id
    }

    fn key_text(&self) -> &str {
        &self.subtask
    }

    fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |reason: String| RetrievalError::InvalidDocument {
            id: self.id,
            reason,
        };
        if self.subtask.trim().is_empty() {
            return Err(bad("empty subtask".into()));
        }
        if self.app.trim().is_empty() {
            return Err(bad("empty app".into()));
        }
        if !is_contained_relpath(&self.screenshot) {
            return Err(bad(format!(
                "screenshot path `{}` escapes the knowledge-base root",
                self.screenshot.display()
            )));
        }
        Ok(())
    }
}

/// True for non-empty relative paths made only of normal components.
pub fn is_contained_relpath(path: &Path) -> bool {
    path.components().next().is_some()
        && path.components().all(|c| matches!(c, Component::Normal(_)))
}

/// A scored retrieval result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit<D> {
    pub score: f64,
    pub doc: D,
}

/// Immutable exact-scan index: one embedding per document.
#[derive(Clone)]
pub struct Index<D> {
    docs: Vec<D>,
    vectors: Vec<Embedding>,
    embedder: Arc<dyn Embedder>,
}

impl<D: fmt::Debug> fmt::Debug for Index<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Index")
            .field("docs", &self.docs)
            .field("embedder", &self.embedder.describe())
            .finish()
    }
}

pub type ManagerKb = Index<ManagerDoc>;
pub type OperatorLibrary = Index<OperatorDoc>;

impl<D: Document> Index<D> {
    /// Validates the documents and embeds each key text once.
    pub fn build(docs: Vec<D>, embedder: Arc<dyn Embedder>) -> Result<Self, RetrievalError> {
        let mut seen = BTreeSet::new();
        for doc in &docs {
            doc.validate()?;
            if !seen.insert(doc.id()) {
                return Err(RetrievalError::DuplicateId(doc.id()));
            }
        }
        let texts: Vec<String> = docs.iter().map(|d| d.key_text().to_string()).collect();
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            embedder.embed_batch(&texts)?
        };
        if vectors.len() != docs.len() {
            return Err(RetrievalError::EmbedderProtocol(format!(
                "{} documents but {} embeddings",
                docs.len(),
                vectors.len()
            )));
        }
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
                return Err(RetrievalError::DimensionMismatch {
                    left: first.dim(),
                    right: bad.dim(),
                });
            }
        }
        Ok(Self {
            docs,
            vectors,
            embedder,
        })
    }

    pub fn empty(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            docs: Vec::new(),
            vectors: Vec::new(),
            embedder,
        }
    }

    pub fn docs(&self) -> &[D] {
        &self.docs
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    /// The `min(k, len)` best documents for `query`.
    pub fn top_k(&self, query: &str, k: usize) -> Result<Vec<Hit<D>>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if self.docs.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(query)?;
        let mut scored = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| Ok((cosine_similarity(&q, v)?, i)))
            .collect::<Result<Vec<_>, RetrievalError>>()?;

        let by_rank = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0)
                .then_with(|| self.docs[a.1].id().cmp(&self.docs[b.1].id()))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);
        Ok(scored
            .into_iter()
            .map(|(score, i)| Hit {
                score,
                doc: self.docs[i].clone(),
            })
            .collect())
    }
}

/// Top-k manager exemplars for a task instruction.
pub fn manager_retrieve(
    query: &TaskInstruction,
    kb: &ManagerKb,
    k: usize,
) -> Result<Vec<Hit<ManagerDoc>>, RetrievalError> {
    kb.top_k(query.as_str(), k)
}

/// Per-app operator libraries. Keys are exact app names.
#[derive(Debug, Clone)]
pub struct OperatorKbRegistry {
    libraries: BTreeMap<String, OperatorLibrary>,
}

impl OperatorKbRegistry {
    /// Partitions `docs` by app and indexes each partition.
    pub fn build(docs: Vec<OperatorDoc>, embedder: Arc<dyn Embedder>) -> Result<Self, RetrievalError> {
        let mut seen = BTreeSet::new();
        let mut by_app: BTreeMap<String, Vec<OperatorDoc>> = BTreeMap::new();
        for doc in docs {
            if !seen.insert(doc.id) {
                return Err(RetrievalError::DuplicateId(doc.id));
            }
            by_app.entry(doc.app.clone()).or_default().push(doc);
        }
        let libraries = by_app
            .into_iter()
            .map(|(app, docs)| Ok((app, Index::build(docs, embedder.clone())?)))
            .collect::<Result<_, RetrievalError>>()?;
        Ok(Self { libraries })
    }

    pub fn empty() -> Self {
        Self {
            libraries: BTreeMap::new(),
        }
    }

    pub fn library(&self, app: &str) -> Option<&OperatorLibrary> {
        self.libraries.get(app)
    }

    pub fn apps(&self) -> impl Iterator<Item = &str> {
        self.libraries.keys().map(String::as_str)
    }

    pub fn doc_count(&self) -> usize {
        self.libraries.values().map(Index::len).sum()
    }
}

/// Best exemplar from `app`'s library only; `None` when it has none.
pub fn operator_retrieve(
    subtask_query: &str,
    app: &str,
    registry: &OperatorKbRegistry,
) -> Result<Option<Hit<OperatorDoc>>, RetrievalError> {
    match registry.library(app) {
        Some(lib) => Ok(lib.top_k(subtask_query, 1)?.into_iter().next()),
        None => Ok(None),
    }
}
