//! Frame-level separation contract and the separators that implement it.
//!
//! A separator turns one mixture [`Frame`] of length `W` into `C` channel
//! estimates of the same length. The channel order of a separator trained
//! with a permutation-free objective is arbitrary per frame; the stitcher is
//! responsible for making it consistent across frames.

mod external;
mod irm;
mod reference;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framing::Frame;
use crate::scalar::Real;

pub use external::{
    decode_frame_response, encode_frame_request, encode_handshake, ExternalSeparator,
    HANDSHAKE_MAGIC, SHUTDOWN_INDEX,
};
pub use irm::{IdealRatioMaskSeparator, StftConfig};
pub use reference::{shuffle_permutation, IdentitySeparator, OracleSourceSeparator, ShuffleSeparator};

/// Default number of output channels.
pub const DEFAULT_CHANNELS: usize = 2;

/// Default per-frame timeout for external separators.
pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum SeparatorError {
    #[error("{0} separator needs ground-truth sources")]
    MissingGroundTruth(&'static str),
    #[error("ground truth has {found} samples but the mixture has {expected}")]
    GroundTruthTooShort { expected: usize, found: usize },
    #[error("ground truth has {found} sources, separator expects {expected} channels")]
    GroundTruthChannels { expected: usize, found: usize },
    #[error("frame has {found} samples, separator configured for {expected}")]
    FrameLength { expected: usize, found: usize },
    #[error("external separator protocol violation: {0}")]
    Protocol(String),
    #[error("external separator exited ({0})")]
    ChildExited(String),
    #[error("external separator did not answer within {0:?}")]
    Timeout(Duration),
    #[error("cannot launch external separator: {0}")]
    Spawn(std::io::Error),
    #[error("external separator i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid separator spec: {0}")]
    InvalidSpec(String),
}

/// `C` channel estimates for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedFrame<T> {
    pub index: usize,
    pub start: isize,
    pub channels: Vec<Vec<T>>,
}

impl<T: Real> SeparatedFrame<T> {
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn window(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    /// Reorders channels: output channel `g` is input channel `permutation[g]`.
    pub fn permuted(&self, permutation: &[usize]) -> Self {
        Self {
            index: self.index,
            start: self.start,
            channels: permutation.iter().map(|&c| self.channels[c].clone()).collect(),
        }
    }
}

/// Clean per-speaker streams aligned with the mixture, shared by the oracle
/// separators and oracle stitching.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    sources: Arc<Vec<Vec<T>>>,
}

impl<T: Real> GroundTruth<T> {
    pub fn new(sources: Vec<Vec<T>>) -> Self {
        Self {
            sources: Arc::new(sources),
        }
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    pub fn sources(&self) -> &[Vec<T>] {
        &self.sources
    }

    /// Shortest source length.
    pub fn len(&self) -> usize {
        self.sources.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Source `c` over `[start, start + len)`, zero outside the recording.
    pub fn excerpt(&self, source: usize, start: isize, len: usize) -> Vec<T> {
        let data = &self.sources[source];
        (0..len)
            .map(|k| {
                let t = start + k as isize;
                if t >= 0 && (t as usize) < data.len() {
                    data[t as usize]
                } else {
                    T::zero()
                }
            })
            .collect()
    }
}

pub trait Separator<T: Real>: Send {
    fn channel_count(&self) -> usize;

    fn separate(&mut self, frame: &Frame<T>) -> Result<SeparatedFrame<T>, SeparatorError>;
}

impl<T: Real> Separator<T> for Box<dyn Separator<T>> {
    fn channel_count(&self) -> usize {
        (**self).channel_count()
    }

    fn separate(&mut self, frame: &Frame<T>) -> Result<SeparatedFrame<T>, SeparatorError> {
        (**self).separate(frame)
    }
}

/// Which separator to build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeparatorKind {
    Identity,
    OracleSource,
    IdealRatioMask,
    Shuffle { inner: Box<SeparatorKind>, seed: u64 },
    External { command: Vec<String> },
}

impl SeparatorKind {
    pub fn needs_ground_truth(&self) -> bool {
        match self {
            Self::OracleSource | Self::IdealRatioMask => true,
            Self::Shuffle { inner, .. } => inner.needs_ground_truth(),
            Self::Identity | Self::External { .. } => false,
        }
    }
}

impl fmt::Display for SeparatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::OracleSource => write!(f, "oracle_source"),
            Self::IdealRatioMask => write!(f, "ideal_ratio_mask"),
            Self::Shuffle { inner, seed } => write!(f, "shuffle:{seed}:{inner}"),
            Self::External { command } => write!(f, "external:{}", command.join(" ")),
        }
    }
}

impl FromStr for SeparatorKind {
    type Err = SeparatorError;

    /// Parses `identity`, `oracle_source`, `ideal_ratio_mask`,
    /// `shuffle:<seed>:<inner>` and `external:<command line>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "identity" => return Ok(Self::Identity),
            "oracle_source" | "oracle" => return Ok(Self::OracleSource),
            "ideal_ratio_mask" | "irm" => return Ok(Self::IdealRatioMask),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("shuffle:") {
            let (seed, inner) = rest
                .split_once(':')
                .ok_or_else(|| SeparatorError::InvalidSpec(s.into()))?;
            let seed = seed
                .parse()
                .map_err(|_| SeparatorError::InvalidSpec(format!("bad shuffle seed in {s}")))?;
            return Ok(Self::Shuffle {
                inner: Box::new(inner.parse()?),
                seed,
            });
        }
        if let Some(rest) = s.strip_prefix("external:") {
            let command: Vec<String> = rest.split_whitespace().map(str::to_owned).collect();
            if command.is_empty() {
                return Err(SeparatorError::InvalidSpec("empty external command".into()));
            }
            return Ok(Self::External { command });
        }
        Err(SeparatorError::InvalidSpec(s.into()))
    }
}

/// A separator kind plus the parameters every separator is built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatorSpec {
    pub kind: SeparatorKind,
    pub channels: usize,
    pub sample_rate: u32,
    pub window: usize,
    #[serde(default = "default_timeout_seconds")]
    pub timeout_seconds: f64,
}

fn default_timeout_seconds() -> f64 {
    DEFAULT_EXTERNAL_TIMEOUT.as_secs_f64()
}

impl SeparatorSpec {
    pub fn new(kind: SeparatorKind, window: usize, sample_rate: u32) -> Self {
        Self {
            kind,
            channels: DEFAULT_CHANNELS,
            sample_rate,
            window,
            timeout_seconds: default_timeout_seconds(),
        }
    }

    /// Instantiates the separator. `mixture_len` is used to check that
    /// attached ground truth covers the whole mixture.
    pub fn build<T: Real>(
        &self,
        ground_truth: Option<&GroundTruth<T>>,
        mixture_len: usize,
    ) -> Result<Box<dyn Separator<T>>, SeparatorError> {
        self.build_kind(&self.kind, ground_truth, mixture_len)
    }

    fn build_kind<T: Real>(
        &self,
        kind: &SeparatorKind,
        ground_truth: Option<&GroundTruth<T>>,
        mixture_len: usize,
    ) -> Result<Box<dyn Separator<T>>, SeparatorError> {
        Ok(match kind {
            SeparatorKind::Identity => Box::new(IdentitySeparator::new(self.channels, self.window)),
            SeparatorKind::OracleSource => {
                let truth = ground_truth.ok_or(SeparatorError::MissingGroundTruth("oracle_source"))?;
                Box::new(OracleSourceSeparator::new(
                    truth.clone(),
                    self.channels,
                    self.window,
                    mixture_len,
                )?)
            }
            SeparatorKind::IdealRatioMask => {
                let truth =
                    ground_truth.ok_or(SeparatorError::MissingGroundTruth("ideal_ratio_mask"))?;
                Box::new(IdealRatioMaskSeparator::new(
                    truth.clone(),
                    self.channels,
                    self.window,
                    mixture_len,
                    StftConfig::default(),
                )?)
            }
            SeparatorKind::Shuffle { inner, seed } => Box::new(ShuffleSeparator::new(
                self.build_kind(inner, ground_truth, mixture_len)?,
                *seed,
            )),
            SeparatorKind::External { command } => Box::new(ExternalSeparator::spawn(
                command,
                self.sample_rate,
                self.window,
                self.channels,
                Duration::from_secs_f64(self.timeout_seconds),
            )?),
        })
    }
}

pub(crate) fn check_frame_len<T>(frame: &Frame<T>, window: usize) -> Result<(), SeparatorError> {
    if frame.samples.len() != window {
        return Err(SeparatorError::FrameLength {
            expected: window,
            found: frame.samples.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_ground_truth<T: Real>(
    truth: &GroundTruth<T>,
    channels: usize,
    mixture_len: usize,
) -> Result<(), SeparatorError> {
    if truth.source_count() != channels {
        return Err(SeparatorError::GroundTruthChannels {
            expected: channels,
            found: truth.source_count(),
        });
    }
    if truth.len() < mixture_len {
        return Err(SeparatorError::GroundTruthTooShort {
            expected: mixture_len,
            found: truth.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parses_and_displays() {
        let kind: SeparatorKind = "shuffle:7:oracle_source".parse().unwrap();
        assert_eq!(
            kind,
            SeparatorKind::Shuffle {
                inner: Box::new(SeparatorKind::OracleSource),
                seed: 7
            }
        );
        assert_eq!(kind.to_string(), "shuffle:7:oracle_source");
        assert!(kind.needs_ground_truth());
        let ext: SeparatorKind = "external:python3 serve.py --ckpt x".parse().unwrap();
        assert_eq!(ext.to_string(), "external:python3 serve.py --ckpt x");
        assert!("bogus".parse::<SeparatorKind>().is_err());
        assert!("shuffle:x:identity".parse::<SeparatorKind>().is_err());
    }

    #[test]
    fn oracle_kinds_require_ground_truth() {
        for kind in [SeparatorKind::OracleSource, SeparatorKind::IdealRatioMask] {
            let spec = SeparatorSpec::new(kind, 8, 8000);
            let err = spec.build::<f64>(None, 100).err().unwrap();
            assert!(matches!(err, SeparatorError::MissingGroundTruth(_)));
        }
    }

    #[test]
    fn spec_json_shape() {
        let spec = SeparatorSpec::new(
            SeparatorKind::Shuffle {
                inner: Box::new(SeparatorKind::Identity),
                seed: 3,
            },
            16,
            8000,
        );
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["kind"]["kind"], "shuffle");
        assert_eq!(json["kind"]["inner"]["kind"], "identity");
        let back: SeparatorSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
    }
}
