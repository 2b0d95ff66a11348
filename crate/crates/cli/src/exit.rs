use std::fmt;

use segstyle_core::Error;

pub const OK: u8 = 0;
pub const OTHER: u8 = 1;
pub const USAGE: u8 = 2;
pub const BACKEND: u8 = 3;
pub const IO: u8 = 4;
pub const CHECKPOINT: u8 = 5;
pub const NON_FINITE: u8 = 6;

/// Bad arguments that clap cannot catch (empty dataset, unreadable
/// config, missing output flag).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn for_core(e: &Error) -> u8 {
    match e.root() {
        Error::Contract(_) | Error::Manifest { .. } => USAGE,
        Error::Backend { .. } => BACKEND,
        Error::Io { .. } | Error::Format { .. } => IO,
        Error::Checkpoint(_) => CHECKPOINT,
        Error::NonFiniteLoss { .. } => NON_FINITE,
        Error::Stage { .. } => OTHER,
    }
}

pub fn code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return USAGE;
    }
    match err.downcast_ref::<Error>() {
        Some(e) => for_core(e),
        None => OTHER,
    }
}
