//! Streaming continuous speech separation.
//!
//! A frame-level separator is turned into a fixed-latency stream separator:
//! the input is cut into overlapping windows ([`framing`]), each window is
//! separated ([`separator`]), consecutive outputs are put into a consistent
//! channel order and overlap-added ([`stitcher`]), and each hop-sized segment
//! is released after `n_seg` of its covering windows ([`scheduler`]).
//! [`mixgen`] builds synthetic sparse-overlap conversations and [`eval`]
//! scores the result with SI-SDR.
//!
//! All signal processing is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the precision.

pub mod audio;
pub mod eval;
pub mod framing;
pub mod mixgen;
pub mod pipeline;
mod scalar;
pub mod scheduler;
pub mod separator;
pub mod stitcher;
pub mod sweep;
pub mod wav;

use thiserror::Error;

pub use audio::{apply_gain, mix, AudioBuffer, AudioError, GainDb, Placed, DEFAULT_SAMPLE_RATE};
pub use eval::{pit_si_sdr, si_sdr, si_sdr_improvement, EvalError, EvalReport, SiSdrResult};
pub use framing::{frame_count, frames, Frame, FramingConfig, FramingError, StreamingFramer};
pub use mixgen::{
    build_conversation, overlap_ratio, synth_utterance, Conversation, ConversationManifest, MixgenError, MixtureSpec,
    UtterancePool, UtteranceStyle,
};
pub use pipeline::{run_offline, run_online, PipelineConfig, PipelineError, PipelineOutput};
pub use scalar::Real;
pub use scheduler::{
    min_latency, predict_cost, CostModel, EmitMode, ScheduleError, SegmentEmitter, StreamSchedule,
};
pub use separator::{GroundTruth, SeparatedFrame, Separator, SeparatorError, SeparatorKind, SeparatorSpec};
pub use stitcher::{overlap_add, Aligner, PermutationDecision, StitchConfig, StitchError, StitchMode, Stitcher};
pub use sweep::{SweepError, SweepPlan};
pub use wav::{read_wav, write_wav, WavError};

pub type AudioBufferF32 = AudioBuffer<f32>;
pub type AudioBufferF64 = AudioBuffer<f64>;
pub type FrameF32 = Frame<f32>;
pub type FrameF64 = Frame<f64>;
pub type SeparatedFrameF32 = SeparatedFrame<f32>;
pub type SeparatedFrameF64 = SeparatedFrame<f64>;
pub type GroundTruthF32 = GroundTruth<f32>;
pub type GroundTruthF64 = GroundTruth<f64>;
pub type ConversationF32 = Conversation<f32>;
pub type ConversationF64 = Conversation<f64>;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error(transparent)]
    Separator(#[from] SeparatorError),
    #[error(transparent)]
    Stitch(#[from] StitchError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Mixgen(#[from] MixgenError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
