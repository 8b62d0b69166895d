//! Recognition and reasoning backends.
//!
//! A backend may serve either role or both. Every call receives a
//! [`SceneContext`] with simulator ground truth; only the oracle reads it.

mod faulty;
mod http;
mod oracle;
mod replay;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{canonical_hash, sha256_hex};
use crate::marking::{ImageTriplet, MarkedTriplet, TripletAnnotations, TripletCameras};
use crate::prompting::MultiModalPrompt;
use crate::world::{WorldError, WorldState};

pub use faulty::{inject_faults, FaultConfig, FaultyBackend};
pub use http::{parse_points, HttpBackend, HttpConfig, RawPoint};
pub use oracle::{oracle_skill, OracleBackend};
pub use replay::{write_records, RecordingBackend, ReplayBackend, ReplayRecord, Stage};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed point reply: {0}")]
    MalformedPoints(String),
    #[error("label {0:?} matches no object")]
    UnknownLabel(String),
    #[error("backend returned an empty reply")]
    EmptyReply,
    #[error("replay diverged at record {index}: expected {expected}, got {actual}")]
    ReplayMismatch { index: usize, expected: String, actual: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("scene error: {0}")]
    Scene(WorldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<WorldError> for BackendError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::UnknownLabel(l) => BackendError::UnknownLabel(l),
            other => BackendError::Scene(other),
        }
    }
}

/// Ground truth handed to backends alongside each request.
#[derive(Debug, Clone, Copy)]
pub struct SceneContext<'a> {
    pub world: &'a WorldState,
    pub cameras: &'a TripletCameras,
    pub episode_index: u64,
    /// Index of this call among the episode's calls to the same stage.
    pub call_index: u64,
}

#[derive(Debug, Clone)]
pub struct RecognitionRequest {
    pub triplet: ImageTriplet,
    /// Names of pickable objects.
    pub object_labels: Vec<String>,
    /// Names of target locations; their markers come from the location range.
    pub location_labels: Vec<String>,
    pub recognition_prompt: String,
}

#[derive(Serialize)]
struct RecognitionHashInput<'a> {
    images: [String; 3],
    location_labels: &'a [String],
    object_labels: &'a [String],
    prompt: &'a str,
}

impl RecognitionRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.object_labels.is_empty() {
            return Err(BackendError::InvalidRequest("object label list is empty".into()));
        }
        if self.object_labels.iter().chain(&self.location_labels).any(|l| l.trim().is_empty()) {
            return Err(BackendError::InvalidRequest("empty label".into()));
        }
        Ok(())
    }

    pub fn all_labels(&self) -> Vec<String> {
        self.object_labels.iter().chain(&self.location_labels).cloned().collect()
    }

    pub fn hash(&self) -> String {
        canonical_hash(&RecognitionHashInput {
            images: self.triplet.hashes(),
            location_labels: &self.location_labels,
            object_labels: &self.object_labels,
            prompt: &self.recognition_prompt,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReasoningRequest {
    pub marked: MarkedTriplet,
    pub prompt: MultiModalPrompt,
}

impl ReasoningRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        let a = &self.marked.annotations;
        if a.current.is_empty() || a.goal.is_empty() {
            return Err(BackendError::InvalidRequest("current and goal images need markers".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.prompt.serialize().as_bytes())
    }
}

pub trait RecognitionBackend: Send + Sync {
    fn recognize(&self, req: &RecognitionRequest, ctx: &SceneContext<'_>) -> Result<TripletAnnotations, BackendError>;
}

pub trait ReasoningBackend: Send + Sync {
    /// The model's raw reply text.
    fn decide(&self, req: &ReasoningRequest, ctx: &SceneContext<'_>) -> Result<String, BackendError>;
}

/// A backend serving both stages.
pub trait Backend: RecognitionBackend + ReasoningBackend {}

impl<T: RecognitionBackend + ReasoningBackend> Backend for T {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BackendConfig {
    Oracle,
    Faulty {
        wrapped: Box<BackendConfig>,
        pick_error_rate: f64,
        insert_error_rate: f64,
        seed: u64,
    },
    Replay {
        path: PathBuf,
    },
    Http(HttpConfig),
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        match self {
            BackendConfig::Oracle | BackendConfig::Replay { .. } => Ok(()),
            BackendConfig::Faulty { wrapped, pick_error_rate, insert_error_rate, .. } => {
                for (name, p) in [("pick_error_rate", pick_error_rate), ("insert_error_rate", insert_error_rate)] {
                    if !(0.0..=1.0).contains(p) {
                        return Err(BackendError::InvalidConfig(format!("{name} {p} outside [0, 1]")));
                    }
                }
                wrapped.validate()
            }
            BackendConfig::Http(h) => h.validate(),
        }
    }

    /// Short name for report columns.
    pub fn display_name(&self) -> String {
        match self {
            BackendConfig::Oracle => "oracle".into(),
            BackendConfig::Faulty { wrapped, pick_error_rate, insert_error_rate, .. } => {
                format!("faulty({}, pick {pick_error_rate}, insert {insert_error_rate})", wrapped.display_name())
            }
            BackendConfig::Replay { .. } => "replay".into(),
            BackendConfig::Http(h) => h.model_name.clone(),
        }
    }
}

/// Instantiate the backend described by `config`.
pub fn build_backend(config: &BackendConfig) -> Result<Arc<dyn Backend>, BackendError> {
    config.validate()?;
    Ok(match config {
        BackendConfig::Oracle => Arc::new(OracleBackend),
        BackendConfig::Faulty { wrapped, pick_error_rate, insert_error_rate, seed } => Arc::new(FaultyBackend::new(
            build_backend(wrapped)?,
            FaultConfig { pick_error_rate: *pick_error_rate, insert_error_rate: *insert_error_rate, seed: *seed },
        )),
        BackendConfig::Replay { path } => Arc::new(ReplayBackend::load(path)?),
        BackendConfig::Http(h) => Arc::new(HttpBackend::new(h.clone())?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_shape() {
        let c = BackendConfig::Faulty {
            wrapped: Box::new(BackendConfig::Oracle),
            pick_error_rate: 0.0,
            insert_error_rate: 0.7,
            seed: 5,
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(
            text,
            r#"{"kind":"Faulty","wrapped":{"kind":"Oracle"},"pick_error_rate":0.0,"insert_error_rate":0.7,"seed":5}"#
        );
        assert_eq!(serde_json::from_str::<BackendConfig>(&text).unwrap(), c);
    }

    #[test]
    fn error_rates_are_bounded() {
        let c = BackendConfig::Faulty {
            wrapped: Box::new(BackendConfig::Oracle),
            pick_error_rate: 1.5,
            insert_error_rate: 0.0,
            seed: 0,
        };
        assert!(matches!(c.validate(), Err(BackendError::InvalidConfig(_))));
    }
}
