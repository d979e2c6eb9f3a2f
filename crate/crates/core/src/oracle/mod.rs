//! Detectors: the deterministic surrogate and clients for external models.

mod external;
mod protocol;
mod surrogate;

use std::path::Path;

use thiserror::Error;

pub use external::{ExecClient, ExternalConfig, HttpClient};
pub use protocol::{parse_response, PredictRequest, PredictResponse};
pub use surrogate::{
    fnv1a64, jitter_box, BlindSpotRule, SurrogateConfig, SurrogateModel, TrainingPoint,
    DEFAULT_COVERAGE_COUNT, DEFAULT_COVERAGE_RADIUS, JITTER_FRACTION,
};

use crate::generator::LabeledImage;
use crate::metrics::Detection;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("cannot reach detector: {0}")]
    Connection(String),
    #[error("detector timed out: {0}")]
    Timeout(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("malformed detection ({reason}): {payload}")]
    MalformedDetection { payload: String, reason: String },
    #[error("detector process: {0}")]
    Process(String),
    #[error("invalid model spec: {0}")]
    Config(String),
}

impl OracleError {
    /// Connection failures and timeouts may succeed on retry.
    pub fn is_transient(&self) -> bool {
        matches!(self, OracleError::Connection(_) | OracleError::Timeout(_))
    }

    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            OracleError::Protocol(_) | OracleError::MalformedDetection { .. }
        )
    }
}

/// One detection request.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub image_id: &'a str,
    pub image: &'a LabeledImage,
    /// Where the rendered image lives on disk, if it was saved.
    pub image_path: Option<&'a Path>,
}

pub trait Detector: Send + Sync {
    fn predict(&self, query: &Query<'_>) -> Result<Vec<Detection>, OracleError>;
}

/// Parsed `--model` flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Surrogate(String),
    Http(String),
    Exec(String),
}

impl std::str::FromStr for ModelSpec {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| OracleError::Config(format!("expected <kind>:<target>, got '{s}'")))?;
        if rest.is_empty() {
            return Err(OracleError::Config(format!("empty target in '{s}'")));
        }
        match kind {
            "surrogate" => Ok(ModelSpec::Surrogate(rest.to_string())),
            // The URL keeps its own scheme separator.
            "http" | "https" => Ok(ModelSpec::Http(if rest.starts_with("//") {
                s.to_string()
            } else {
                rest.to_string()
            })),
            "exec" => Ok(ModelSpec::Exec(rest.to_string())),
            other => Err(OracleError::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_spec_parsing() {
        assert_eq!(
            "surrogate:rules.json".parse::<ModelSpec>().unwrap(),
            ModelSpec::Surrogate("rules.json".into())
        );
        assert_eq!(
            "http:http://127.0.0.1:8080/predict".parse::<ModelSpec>().unwrap(),
            ModelSpec::Http("http://127.0.0.1:8080/predict".into())
        );
        assert_eq!(
            "http://localhost:9/x".parse::<ModelSpec>().unwrap(),
            ModelSpec::Http("http://localhost:9/x".into())
        );
        assert_eq!(
            "exec:python3 det.py --fast".parse::<ModelSpec>().unwrap(),
            ModelSpec::Exec("python3 det.py --fast".into())
        );
        assert!("yolo:x".parse::<ModelSpec>().is_err());
        assert!("surrogate:".parse::<ModelSpec>().is_err());
        assert!("rules.json".parse::<ModelSpec>().is_err());
    }
}
