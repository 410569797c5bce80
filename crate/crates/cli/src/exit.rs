//! Mapping of failures onto process exit codes.

use std::fmt;

use fxeffect::bridge::BridgeError;
use fxeffect::EffectError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config = 2,
    Data = 3,
    Oracle = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn config(message: impl Into<String>) -> anyhow::Error {
    Failure {
        kind: ExitKind::Config,
        message: message.into(),
    }
    .into()
}

pub fn data(message: impl Into<String>) -> anyhow::Error {
    Failure {
        kind: ExitKind::Data,
        message: message.into(),
    }
    .into()
}

fn effect_kind(e: &EffectError) -> ExitKind {
    match e {
        EffectError::InvalidArgument(_) => ExitKind::Config,
        EffectError::Oracle(_) | EffectError::Bridge(_) => ExitKind::Oracle,
        _ => ExitKind::Data,
    }
}

/// The exit kind of the first recognised error in the chain. Anything
/// unrecognised (file system, CSV, JSON) counts as a data error.
pub fn classify(err: &anyhow::Error) -> ExitKind {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.kind;
        }
        if let Some(e) = cause.downcast_ref::<EffectError>() {
            return effect_kind(e);
        }
        if cause.downcast_ref::<BridgeError>().is_some() {
            return ExitKind::Oracle;
        }
    }
    ExitKind::Data
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn classification() {
        assert_eq!(classify(&config("x")), ExitKind::Config);
        let e: anyhow::Error = EffectError::Oracle("boom".into()).into();
        assert_eq!(classify(&e.context("while running")), ExitKind::Oracle);
        let e: anyhow::Error = EffectError::DegenerateRange { feature: 0, value: 1.0 }.into();
        assert_eq!(classify(&e), ExitKind::Data);
        let io: std::result::Result<(), _> = Err(std::io::Error::other("disk"));
        assert_eq!(classify(&io.context("write").unwrap_err()), ExitKind::Data);
        let e: anyhow::Error = EffectError::InvalidArgument("bad".into()).into();
        assert_eq!(classify(&e), ExitKind::Config);
    }
}
