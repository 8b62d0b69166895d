use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::marking::TripletAnnotations;

use super::{Backend, BackendError, ReasoningBackend, ReasoningRequest, RecognitionBackend, RecognitionRequest, SceneContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Recognize,
    Decide,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Recognize => "recognize",
            Stage::Decide => "decide",
        })
    }
}

/// One backend call. Recognition responses hold the annotation JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub stage: Stage,
    pub request_hash: String,
    pub response: String,
}

pub fn write_records(path: &Path, records: &[ReplayRecord]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?;
    }
    f.flush()
}

/// Serves recorded responses in order, checking each request hash.
#[derive(Debug)]
pub struct ReplayBackend {
    records: Vec<ReplayRecord>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn from_records(records: Vec<ReplayRecord>) -> Self {
        ReplayBackend { records, cursor: Mutex::new(0) }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)?;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r = serde_json::from_str(line)
                .map_err(|e| BackendError::InvalidConfig(format!("{}:{}: {e}", path.display(), n + 1)))?;
            records.push(r);
        }
        Ok(Self::from_records(records))
    }

    /// Records not yet consumed.
    pub fn remaining(&self) -> usize {
        self.records.len() - *self.cursor.lock().expect("replay cursor poisoned")
    }

    fn next(&self, stage: Stage, hash: String) -> Result<String, BackendError> {
        let mut cursor = self.cursor.lock().expect("replay cursor poisoned");
        let index = *cursor;
        let actual = format!("{stage} {hash}");
        let Some(rec) = self.records.get(index) else {
            return Err(BackendError::ReplayMismatch { index, expected: "end of log".into(), actual });
        };
        if rec.stage != stage || rec.request_hash != hash {
            return Err(BackendError::ReplayMismatch {
                index,
                expected: format!("{} {}", rec.stage, rec.request_hash),
                actual,
            });
        }
        *cursor += 1;
        Ok(rec.response.clone())
    }
}

impl RecognitionBackend for ReplayBackend {
    fn recognize(&self, req: &RecognitionRequest, _ctx: &SceneContext<'_>) -> Result<TripletAnnotations, BackendError> {
        let text = self.next(Stage::Recognize, req.hash())?;
        serde_json::from_str(&text).map_err(|e| BackendError::MalformedPoints(e.to_string()))
    }
}

impl ReasoningBackend for ReplayBackend {
    fn decide(&self, req: &ReasoningRequest, _ctx: &SceneContext<'_>) -> Result<String, BackendError> {
        self.next(Stage::Decide, req.hash())
    }
}

/// Forwards to an inner backend and logs every successful call.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    log: Mutex<Vec<ReplayRecord>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        RecordingBackend { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn records(&self) -> Vec<ReplayRecord> {
        self.log.lock().expect("recording log poisoned").clone()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        write_records(path, &self.records())
    }

    fn push(&self, stage: Stage, request_hash: String, response: String) {
        self.log.lock().expect("recording log poisoned").push(ReplayRecord { stage, request_hash, response });
    }
}

impl RecognitionBackend for RecordingBackend {
    fn recognize(&self, req: &RecognitionRequest, ctx: &SceneContext<'_>) -> Result<TripletAnnotations, BackendError> {
        let out = self.inner.recognize(req, ctx)?;
        self.push(Stage::Recognize, req.hash(), serde_json::to_string(&out).expect("annotations serialize"));
        Ok(out)
    }
}

impl ReasoningBackend for RecordingBackend {
    fn decide(&self, req: &ReasoningRequest, ctx: &SceneContext<'_>) -> Result<String, BackendError> {
        let out = self.inner.decide(req, ctx)?;
        self.push(Stage::Decide, req.hash(), out.clone());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_json_shape() {
        let r = ReplayRecord { stage: Stage::Decide, request_hash: "ab".into(), response: "DECISION: done".into() };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"stage":"decide","request_hash":"ab","response":"DECISION: done"}"#
        );
    }

    #[test]
    fn mismatch_and_exhaustion() {
        let b = ReplayBackend::from_records(vec![ReplayRecord {
            stage: Stage::Decide,
            request_hash: "h1".into(),
            response: "x".into(),
        }]);
        assert!(matches!(b.next(Stage::Decide, "h2".into()), Err(BackendError::ReplayMismatch { index: 0, .. })));
        assert!(matches!(b.next(Stage::Recognize, "h1".into()), Err(BackendError::ReplayMismatch { .. })));
        assert_eq!(b.next(Stage::Decide, "h1".into()).unwrap(), "x");
        assert_eq!(b.remaining(), 0);
        assert!(matches!(b.next(Stage::Decide, "h1".into()), Err(BackendError::ReplayMismatch { index: 1, .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let recs = vec![
            ReplayRecord { stage: Stage::Recognize, request_hash: "a".into(), response: "{}".into() },
            ReplayRecord { stage: Stage::Decide, request_hash: "b".into(), response: "line\nbreak".into() },
        ];
        write_records(&path, &recs).unwrap();
        assert_eq!(ReplayBackend::load(&path).unwrap().records, recs);
    }
}
