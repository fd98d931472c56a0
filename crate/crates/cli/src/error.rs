use std::fmt;
use std::path::Path;

use serde::Serialize;
use wrsn_core::emo::EmoError;
use wrsn_core::env::EnvError;
use wrsn_core::nn::NnError;

/// Failure reported as a one-line JSON record on stderr.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
}

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

impl CliError {
    pub fn input(error: &'static str, message: impl Into<String>) -> Self {
        Self {
            error,
            message: message.into(),
            exit_code: EXIT_INPUT,
        }
    }

    pub fn runtime(error: &'static str, message: impl Into<String>) -> Self {
        Self {
            error,
            message: message.into(),
            exit_code: EXIT_RUNTIME,
        }
    }

    pub fn output(path: &Path, err: impl fmt::Display) -> Self {
        Self::runtime("OutputError", format!("{}: {err}", path.display()))
    }

    pub fn scenario(path: &Path, err: EnvError) -> Self {
        match err {
            EnvError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Self::input("ScenarioNotFound", format!("{}: {e}", path.display()))
            }
            other => Self::input("BadScenario", format!("{}: {other}", path.display())),
        }
    }

    pub fn algo(path: &Path, err: EmoError) -> Self {
        match err {
            EmoError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Self::input("AlgoConfigNotFound", format!("{}: {e}", path.display()))
            }
            other => Self::input("BadAlgoConfig", format!("{}: {other}", path.display())),
        }
    }

    pub fn checkpoint(path: &Path, err: NnError) -> Self {
        let msg = format!("{}: {err}", path.display());
        match err {
            NnError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => Self::input("CheckpointNotFound", msg),
            NnError::CheckpointVersionMismatch { .. } => Self::input("CheckpointVersionMismatch", msg),
            _ => Self::input("BadCheckpoint", msg),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error record serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}
