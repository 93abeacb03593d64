use garde_core::engine::EngineError;
use garde_core::eval::EvalError;
use garde_core::io::IoError;
use garde_core::providers::ProviderError;
use garde_core::synth::SynthError;
use serde_json::json;
use thiserror::Error;

/// Command failure, classified by exit code: 2 for bad input or usage,
/// 3 for a well-formed request the domain rejects, 4 for provider failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Provider(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage error",
            CliError::Input(_) => "input error",
            CliError::Domain(_) => "domain error",
            CliError::Provider(_) => "provider error",
        }
    }

    /// The single-line JSON written to stderr.
    pub fn to_json_line(&self) -> String {
        json!({ "error": self.kind(), "code": self.code(), "message": self.to_string() }).to_string()
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Io(_) | ProviderError::Precondition(_) => CliError::Input(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        if e.is_provider() {
            return CliError::Provider(e.to_string());
        }
        match e {
            EngineError::Match(_) | EngineError::Proposals(_) => CliError::Domain(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::EmptyGroundTruth | EvalError::NoEpisodes => CliError::Domain(e.to_string()),
            EvalError::BadTolerance(_) | EvalError::BadLambda(_) | EvalError::BadGrid(_) => {
                CliError::Usage(e.to_string())
            }
            EvalError::Unsorted(_) | EvalError::NonFinite(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_line_is_single_line_json() {
        let e = CliError::Input("no such file\nsecond line".into());
        let line = e.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["code"], 2);
        assert_eq!(v["error"], "input error");
    }

    #[test]
    fn empty_ground_truth_is_a_domain_error() {
        assert_eq!(CliError::from(EvalError::EmptyGroundTruth).code(), 3);
        let t = ProviderError::Transport {
            endpoint: "http://x/pool".into(),
            attempts: 2,
            message: "refused".into(),
        };
        assert_eq!(CliError::from(t).code(), 4);
    }
}
