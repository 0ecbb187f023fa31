//! Channel alignment between consecutive separated frames and overlap-add
//! resynthesis.
//!
//! Frames are aligned greedily: each new frame is permuted to best match the
//! previous, already aligned frame on their shared `W - H` samples, so the
//! running global order is the composition of all earlier decisions. A wrong
//! decision therefore propagates to every later frame.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};
use crate::eval::{cap_db, si_sdr};
use crate::framing::FramingConfig;
use crate::scalar::{dot, energy, Real};
use crate::scheduler::{EmittedSegment, ScheduleError, SegmentAccumulator, SegmentEmitter};
use crate::separator::{GroundTruth, SeparatedFrame};

/// Score differences at or below this count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StitchError {
    #[error("oracle alignment needs ground-truth sources")]
    MissingGroundTruth,
    #[error("no frames to stitch")]
    NoFrames,
    #[error("frames {prev} and {next} are not consecutive")]
    NotConsecutive { prev: usize, next: usize },
    #[error("frame {index} has {found} channels, expected {expected}")]
    ChannelCount {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("frame has {found} samples per channel, expected {expected}")]
    FrameLength { expected: usize, found: usize },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StitchMode {
    /// Zero-lag normalized cross-correlation on the shared samples.
    CrossCorrelation,
    /// Ground-truth SI-SDR over the whole frame.
    Oracle,
}

impl StitchMode {
    pub fn label(self) -> &'static str {
        match self {
            Self::CrossCorrelation => "cross_correlation",
            Self::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for StitchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cross_correlation" | "xcorr" => Ok(Self::CrossCorrelation),
            "oracle" => Ok(Self::Oracle),
            other => Err(format!("unknown stitch mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StitchConfig {
    pub framing: FramingConfig,
    pub mode: StitchMode,
    pub sample_rate: u32,
}

/// Periodic (DFT-even) Hann window: `0.5 - 0.5 cos(2 pi n / len)`.
///
/// Shifted copies at hop `len / 2` sum to exactly one.
pub fn hann_periodic<T: Real>(len: usize) -> Vec<T> {
    let two_pi = T::PI() + T::PI();
    let n = T::from_usize_lossy(len.max(1));
    (0..len)
        .map(|i| T::lit(0.5) - T::lit(0.5) * (two_pi * T::from_usize_lossy(i) / n).cos())
        .collect()
}

/// Zero-lag normalized cross-correlation; zero when either side is silent.
pub fn ncc<T: Real>(a: &[T], b: &[T]) -> T {
    let norm = (energy(a) * energy(b)).sqrt();
    if norm == T::zero() {
        return T::zero();
    }
    dot(a, b) / norm
}

/// `sum_c ncc(tail[c], head[permutation[c]])`.
pub fn similarity<T: Real, A: AsRef<[T]>, B: AsRef<[T]>>(
    tail: &[A],
    head: &[B],
    permutation: &[usize],
) -> T {
    permutation
        .iter()
        .enumerate()
        .map(|(c, &p)| ncc(tail[c].as_ref(), head[p].as_ref()))
        .fold(T::zero(), |acc, v| acc + v)
}

/// All permutations of `0..channels`, identity first.
pub fn candidate_permutations(channels: usize) -> Vec<Vec<usize>> {
    (0..channels).permutations(channels).collect()
}

/// Channel order chosen for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationDecision<T> {
    pub index: usize,
    /// Global channel `g` takes the frame's channel `permutation[g]`.
    pub permutation: Vec<usize>,
    /// Score of every candidate, in [`candidate_permutations`] order.
    pub scores: Vec<T>,
    /// More than one candidate scored within [`TIE_TOLERANCE`] of the best.
    pub tie: bool,
}

impl<T: Real> PermutationDecision<T> {
    fn choose(index: usize, candidates: Vec<Vec<usize>>, scores: Vec<T>) -> Self {
        let best = scores.iter().copied().fold(T::neg_infinity(), T::max);
        let tol = T::lit(TIE_TOLERANCE);
        let near_best = |s: T| s >= best - tol || s == best;
        let tie = scores.iter().filter(|&&s| near_best(s)).count() > 1;
        let chosen = scores.iter().position(|&s| near_best(s)).unwrap_or(0);
        Self {
            index,
            permutation: candidates[chosen].clone(),
            scores,
            tie,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(g, &c)| g == c)
    }
}

fn check_frame<T: Real>(frame: &SeparatedFrame<T>, channels: usize, window: usize) -> Result<(), StitchError> {
    if frame.channel_count() != channels {
        return Err(StitchError::ChannelCount {
            index: frame.index,
            expected: channels,
            found: frame.channel_count(),
        });
    }
    if let Some(ch) = frame.channels.iter().find(|c| c.len() != window) {
        return Err(StitchError::FrameLength {
            expected: window,
            found: ch.len(),
        });
    }
    Ok(())
}

/// Oracle score: capped SI-SDR of each frame channel against the source it
/// is assigned to, skipping sources that are silent over the frame.
fn oracle_decision<T: Real>(
    frame: &SeparatedFrame<T>,
    truth: &GroundTruth<T>,
) -> PermutationDecision<T> {
    let window = frame.window();
    let targets: Vec<Vec<T>> = (0..truth.source_count())
        .map(|c| truth.excerpt(c, frame.start, window))
        .collect();
    let candidates = candidate_permutations(frame.channel_count());
    let scores = candidates
        .iter()
        .map(|perm| {
            perm.iter()
                .enumerate()
                .filter_map(|(g, &c)| si_sdr(&targets[g], &frame.channels[c]).ok().map(cap_db))
                .fold(T::zero(), |acc, v| acc + v)
        })
        .collect();
    PermutationDecision::choose(frame.index, candidates, scores)
}

/// Chooses how `next` maps onto the global order of `prev`, which must
/// already be aligned.
pub fn align<T: Real>(
    prev: &SeparatedFrame<T>,
    next: &SeparatedFrame<T>,
    config: &StitchConfig,
    truth: Option<&GroundTruth<T>>,
) -> Result<PermutationDecision<T>, StitchError> {
    if next.index != prev.index + 1 {
        return Err(StitchError::NotConsecutive {
            prev: prev.index,
            next: next.index,
        });
    }
    let window = config.framing.window();
    check_frame(prev, prev.channel_count(), window)?;
    check_frame(next, prev.channel_count(), window)?;
    match config.mode {
        StitchMode::CrossCorrelation => {
            // without overlap every score is zero and the order is kept
            let overlap = config.framing.overlap();
            let hop = config.framing.hop();
            let tail: Vec<&[T]> = prev.channels.iter().map(|c| &c[hop..]).collect();
            let head: Vec<&[T]> = next.channels.iter().map(|c| &c[..overlap]).collect();
            let candidates = candidate_permutations(next.channel_count());
            let scores = candidates.iter().map(|p| similarity(&tail, &head, p)).collect();
            Ok(PermutationDecision::choose(next.index, candidates, scores))
        }
        StitchMode::Oracle => Ok(oracle_decision(next, truth.ok_or(StitchError::MissingGroundTruth)?)),
    }
}

/// Stateful aligner for one stream: feed frames in order, get them back in
/// the global channel order.
#[derive(Debug, Clone)]
pub struct Aligner<T: Real> {
    config: StitchConfig,
    truth: Option<GroundTruth<T>>,
    prev: Option<SeparatedFrame<T>>,
}

impl<T: Real> Aligner<T> {
    pub fn new(config: StitchConfig, truth: Option<GroundTruth<T>>) -> Result<Self, StitchError> {
        if config.mode == StitchMode::Oracle && truth.is_none() {
            return Err(StitchError::MissingGroundTruth);
        }
        Ok(Self {
            config,
            truth,
            prev: None,
        })
    }

    pub fn config(&self) -> &StitchConfig {
        &self.config
    }

    /// Aligns the next frame. The first frame keeps its order in
    /// cross-correlation mode; in oracle mode every frame, including the
    /// first, is matched against the ground truth.
    pub fn push(
        &mut self,
        frame: SeparatedFrame<T>,
    ) -> Result<(SeparatedFrame<T>, PermutationDecision<T>), StitchError> {
        let decision = match (&self.prev, self.config.mode) {
            (Some(prev), _) => align(prev, &frame, &self.config, self.truth.as_ref())?,
            (None, StitchMode::Oracle) => {
                if frame.index != 0 {
                    return Err(StitchError::NotConsecutive { prev: 0, next: frame.index });
                }
                check_frame(&frame, frame.channel_count(), self.config.framing.window())?;
                oracle_decision(&frame, self.truth.as_ref().ok_or(StitchError::MissingGroundTruth)?)
            }
            (None, StitchMode::CrossCorrelation) => {
                if frame.index != 0 {
                    return Err(StitchError::NotConsecutive { prev: 0, next: frame.index });
                }
                check_frame(&frame, frame.channel_count(), self.config.framing.window())?;
                let candidates = candidate_permutations(frame.channel_count());
                let scores = vec![T::zero(); candidates.len()];
                PermutationDecision::choose(frame.index, candidates, scores)
            }
        };
        let aligned = frame.permuted(&decision.permutation);
        self.prev = Some(aligned.clone());
        Ok((aligned, decision))
    }
}

/// Aligns a whole sequence of frames.
pub fn align_all<T: Real>(
    frames: Vec<SeparatedFrame<T>>,
    config: &StitchConfig,
    truth: Option<&GroundTruth<T>>,
) -> Result<(Vec<SeparatedFrame<T>>, Vec<PermutationDecision<T>>), StitchError> {
    let mut aligner = Aligner::new(*config, truth.cloned())?;
    let mut aligned = Vec::with_capacity(frames.len());
    let mut decisions = Vec::with_capacity(frames.len());
    for frame in frames {
        let (a, d) = aligner.push(frame)?;
        aligned.push(a);
        decisions.push(d);
    }
    Ok((aligned, decisions))
}

/// Window-sum-normalized overlap-add of aligned frames, truncated to
/// `total_len` samples:
///
/// `X[t] = sum_i w[t - s_i] O_i[t - s_i] / sum_i w[t - s_i]`
///
/// Where every covering window weight is zero (the first sample of a
/// non-overlapping frame) the plain mean of the contributions is used.
pub fn overlap_add<T: Real>(
    frames: &[SeparatedFrame<T>],
    total_len: usize,
    config: &StitchConfig,
) -> Result<AudioBuffer<T>, StitchError> {
    let first = frames.first().ok_or(StitchError::NoFrames)?;
    let channels = first.channel_count();
    let framing = config.framing;
    let (window_len, hop) = (framing.window(), framing.hop());
    let window = hann_periodic::<T>(window_len);

    let segments = frames.len();
    let mut acc: Vec<SegmentAccumulator<T>> = (0..segments)
        .map(|_| SegmentAccumulator::new(channels, hop))
        .collect();
    for (expected, frame) in frames.iter().enumerate() {
        if frame.index != expected {
            return Err(StitchError::NotConsecutive {
                prev: expected.wrapping_sub(1),
                next: frame.index,
            });
        }
        check_frame(frame, channels, window_len)?;
        let newest = frame.index;
        let oldest = newest.saturating_sub(framing.segments_per_window() - 1);
        for (segment, slot) in acc.iter_mut().enumerate().take(newest + 1).skip(oldest) {
            slot.add(frame, segment, &framing, &window);
        }
    }
    let mut planar = vec![Vec::with_capacity(segments * hop); channels];
    for slot in acc {
        for (out, seg) in planar.iter_mut().zip(slot.finish()) {
            out.extend(seg);
        }
    }
    for ch in &mut planar {
        ch.truncate(total_len);
    }
    Ok(AudioBuffer::from_channels(&planar, config.sample_rate)?)
}

/// Streaming stitcher: aligns frames as they arrive and releases samples
/// once no later frame can contribute to them.
pub struct Stitcher<T: Real> {
    aligner: Aligner<T>,
    emitter: SegmentEmitter<T>,
    decisions: Vec<PermutationDecision<T>>,
}

impl<T: Real> Stitcher<T> {
    pub fn new(
        config: StitchConfig,
        channels: usize,
        truth: Option<GroundTruth<T>>,
    ) -> Result<Self, StitchError> {
        let n_seg = config.framing.segments_per_window();
        Ok(Self {
            aligner: Aligner::new(config, truth)?,
            emitter: SegmentEmitter::new(config.framing, n_seg, channels)?,
            decisions: Vec::new(),
        })
    }

    pub fn push(&mut self, frame: SeparatedFrame<T>) -> Result<Vec<EmittedSegment<T>>, StitchError> {
        self.emitter.check_next(frame.index)?;
        let (aligned, decision) = self.aligner.push(frame)?;
        self.decisions.push(decision);
        Ok(self.emitter.push(&aligned)?.into_iter().collect())
    }

    pub fn decisions(&self) -> &[PermutationDecision<T>] {
        &self.decisions
    }

    pub fn finish(self) -> Vec<EmittedSegment<T>> {
        self.emitter.finish()
    }
}
