//! Exit codes by error class.

use std::error::Error as StdError;
use std::fmt;
use std::io;

use css_core::eval::EvalError;
use css_core::mixgen::MixgenError;
use css_core::pipeline::PipelineError;
use css_core::stitcher::StitchError;
use css_core::sweep::SweepError;
use css_core::{FramingError, ScheduleError, SeparatorError, WavError};

pub const EXIT_FAILURE: u8 = 1;
/// Bad flags; also what clap exits with.
pub const EXIT_USAGE: u8 = 2;
/// Flags parse but describe an invalid run.
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_IO: u8 = 4;
pub const EXIT_SEPARATOR: u8 = 5;
/// Inputs are missing or inconsistent.
pub const EXIT_DATA: u8 = 6;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl StdError for ConfigError {}

#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl StdError for DataError {}

fn separator_code(e: &SeparatorError) -> u8 {
    match e {
        SeparatorError::InvalidSpec(_) => EXIT_CONFIG,
        SeparatorError::MissingGroundTruth(_)
        | SeparatorError::GroundTruthTooShort { .. }
        | SeparatorError::GroundTruthChannels { .. } => EXIT_DATA,
        _ => EXIT_SEPARATOR,
    }
}

fn pipeline_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Framing(_) | PipelineError::Schedule(_) => EXIT_CONFIG,
        PipelineError::Separator(s) => separator_code(s),
        PipelineError::ChannelCount { .. } => EXIT_SEPARATOR,
        PipelineError::Stitch(StitchError::MissingGroundTruth) => EXIT_DATA,
        PipelineError::Stitch(_) => EXIT_FAILURE,
        PipelineError::Audio(_) | PipelineError::EmptyMixture => EXIT_DATA,
    }
}

fn eval_code(e: &EvalError) -> u8 {
    match e {
        EvalError::Io(_) | EvalError::Csv(_) => EXIT_IO,
        _ => EXIT_DATA,
    }
}

fn code_of(e: &(dyn StdError + 'static)) -> Option<u8> {
    if e.is::<ConfigError>() || e.is::<FramingError>() || e.is::<ScheduleError>() {
        return Some(EXIT_CONFIG);
    }
    if e.is::<DataError>() {
        return Some(EXIT_DATA);
    }
    if e.is::<io::Error>() || e.is::<WavError>() {
        return Some(EXIT_IO);
    }
    if let Some(s) = e.downcast_ref::<SeparatorError>() {
        return Some(separator_code(s));
    }
    if let Some(p) = e.downcast_ref::<PipelineError>() {
        return Some(pipeline_code(p));
    }
    if let Some(m) = e.downcast_ref::<MixgenError>() {
        return Some(match m {
            MixgenError::Io { .. } | MixgenError::Wav(_) => EXIT_IO,
            MixgenError::InfeasibleTarget { .. } | MixgenError::Json(_) => EXIT_DATA,
            _ => EXIT_CONFIG,
        });
    }
    if let Some(ev) = e.downcast_ref::<EvalError>() {
        return Some(eval_code(ev));
    }
    if let Some(s) = e.downcast_ref::<SweepError>() {
        return Some(match s {
            SweepError::Pipeline { source, .. } => pipeline_code(source),
            SweepError::Eval { source, .. } | SweepError::Report(source) => eval_code(source),
            SweepError::Separator(sep) => separator_code(sep),
            SweepError::Schedule(_) => EXIT_CONFIG,
            SweepError::Csv(_) => EXIT_IO,
        });
    }
    if e.is::<serde_json::Error>() {
        return Some(EXIT_DATA);
    }
    None
}

/// First recognised error in the chain decides.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain().find_map(code_of).unwrap_or(EXIT_FAILURE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn context_does_not_hide_the_class() {
        let err = Err::<(), _>(SeparatorError::Timeout(std::time::Duration::from_secs(1)))
            .context("frame 3")
            .unwrap_err();
        assert_eq!(exit_code(&err), EXIT_SEPARATOR);
        let err = anyhow::Error::new(PipelineError::Framing(FramingError::NotMono(2)));
        assert_eq!(exit_code(&err), EXIT_CONFIG);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), EXIT_FAILURE);
        assert_eq!(exit_code(&DataError("x".into()).into()), EXIT_DATA);
    }
}
