//! JSONL knowledge-base files.
//!
//! Layout of a knowledge-base directory:
//!
//! ```text
//! <root>/manager.jsonl          one ManagerDoc per line
//! <root>/operator/<App>.jsonl   one OperatorDoc per line, app == <App>
//! <root>/screenshots/...        files referenced by OperatorDoc.screenshot
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Embedder, ManagerDoc, ManagerKb, OperatorDoc, OperatorKbRegistry, RetrievalError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbLayout {
    pub root: PathBuf,
}

impl KbLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manager_file(&self) -> PathBuf {
        self.root.join("manager.jsonl")
    }

    pub fn operator_dir(&self) -> PathBuf {
        self.root.join("operator")
    }

    pub fn operator_file(&self, app: &str) -> PathBuf {
        self.operator_dir().join(format!("{app}.jsonl"))
    }

    pub fn screenshots_dir(&self) -> PathBuf {
        self.root.join("screenshots")
    }

    pub fn resolve(&self, relpath: &Path) -> PathBuf {
        self.root.join(relpath)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RetrievalError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| RetrievalError::Format {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Writes one compact JSON value per line, creating parent directories.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RetrievalError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("KB rows serialize");
        buf.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(io_err(path))
}

pub fn read_manager_docs(path: &Path) -> Result<Vec<ManagerDoc>, RetrievalError> {
    read_jsonl(path)
}

pub fn read_operator_docs(path: &Path) -> Result<Vec<OperatorDoc>, RetrievalError> {
    read_jsonl(path)
}

/// Reads every `<App>.jsonl` under `dir`, checking each doc's app against
/// its file name. A missing directory yields no documents.
pub fn read_operator_dir(dir: &Path) -> Result<Vec<OperatorDoc>, RetrievalError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut docs = Vec::new();
    for file in files {
        let app = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        for doc in read_operator_docs(&file)? {
            if doc.app != app {
                return Err(RetrievalError::InvalidDocument {
                    id: doc.id,
                    reason: format!("app `{}` stored in library `{app}`", doc.app),
                });
            }
            docs.push(doc);
        }
    }
    Ok(docs)
}

/// Both indices plus the root that operator screenshots resolve against.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub layout: KbLayout,
    pub manager: ManagerKb,
    pub operators: OperatorKbRegistry,
}

impl KnowledgeBase {
    pub fn empty(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            layout: KbLayout::new(PathBuf::new()),
            manager: ManagerKb::empty(embedder),
            operators: OperatorKbRegistry::empty(),
        }
    }
}

/// Loads and indexes a knowledge-base directory. Missing parts are empty.
pub fn load_knowledge_base(
    root: &Path,
    embedder: Arc<dyn Embedder>,
) -> Result<KnowledgeBase, RetrievalError> {
    let layout = KbLayout::new(root);
    let manager_docs = if layout.manager_file().exists() {
        read_manager_docs(&layout.manager_file())?
    } else {
        Vec::new()
    };
    let operator_docs = read_operator_dir(&layout.operator_dir())?;
    for doc in &operator_docs {
        let resolved = layout.resolve(&doc.screenshot);
        if !resolved.is_file() {
            log::warn!(
                "operator doc {} references missing screenshot {}",
                doc.id,
                resolved.display()
            );
        }
    }
    Ok(KnowledgeBase {
        manager: ManagerKb::build(manager_docs, embedder.clone())?,
        operators: OperatorKbRegistry::build(operator_docs, embedder)?,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Action;
    use crate::retrieval::FallbackEmbedder;

    #[test]
    fn manager_rows_round_trip_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manager.jsonl");
        let original = "{\"id\":1,\"instruction\":\"Find ramen\",\"human_steps\":\"open Maps app, tap on the search bar\"}\n\
                        {\"id\":2,\"instruction\":\"Find \\\"hotpot\\\"\",\"human_steps\":\"open Maps app\"}\n";
        fs::write(&path, original).unwrap();
        let docs = read_manager_docs(&path).unwrap();
        write_jsonl(&path, &docs).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), original);
    }

    #[test]
    fn operator_dir_checks_app_partition() {
        let dir = tempfile::tempdir().unwrap();
        let layout = KbLayout::new(dir.path());
        let doc = OperatorDoc {
            id: 1,
            app: "Maps".into(),
            subtask: "Tap the search bar.".into(),
            screenshot: "screenshots/a.json".into(),
            action: Action::Tap { x: 404, y: 260 },
        };
        write_jsonl(&layout.operator_file("Maps"), std::slice::from_ref(&doc)).unwrap();
        let line = fs::read_to_string(layout.operator_file("Maps")).unwrap();
        assert_eq!(
            line,
            "{\"id\":1,\"app\":\"Maps\",\"subtask\":\"Tap the search bar.\",\"screenshot\":\"screenshots/a.json\",\"action\":\"Tap at {\\\"x\\\": 404, \\\"y\\\": 260}\"}\n"
        );
        assert_eq!(read_operator_dir(&layout.operator_dir()).unwrap(), vec![doc.clone()]);

        write_jsonl(&layout.operator_file("Notes"), &[doc]).unwrap();
        assert!(read_operator_dir(&layout.operator_dir()).is_err());
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manager.jsonl");
        fs::write(&path, "{\"id\":1,\"instruction\":\"a\",\"human_steps\":\"b\"}\n\nnot json\n").unwrap();
        match read_manager_docs(&path) {
            Err(RetrievalError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_kb_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let kb = load_knowledge_base(dir.path(), Arc::new(FallbackEmbedder)).unwrap();
        assert!(kb.manager.is_empty());
        assert_eq!(kb.operators.doc_count(), 0);
    }
}
