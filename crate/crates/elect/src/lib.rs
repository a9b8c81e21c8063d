//! Command-line tool, file formats and remote clients for early-stopped
//! seed and prompt selection.

pub mod cli;
pub mod experiment;
pub mod io;
pub mod mllm_http;
pub mod remote;
pub mod trace;
pub mod wire;

use elect_core::engine::RunError;

pub use cli::run_cli;

/// A user-supplied setting that cannot be honoured.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

fn core_exit_code(e: &elect_core::Error) -> i32 {
    use elect_core::Error::*;
    match e {
        Transport { .. } | Protocol(_) => 3,
        InvalidArgument(_) | Format(_) | DegenerateInput(_) => 2,
        _ => 1,
    }
}

/// 2 for configuration errors, 3 for denoiser or transport failures, 1
/// otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<elect_core::Error>() {
            return core_exit_code(e);
        }
        if let Some(r) = cause.downcast_ref::<RunError>() {
            return core_exit_code(&r.error);
        }
    }
    1
}
