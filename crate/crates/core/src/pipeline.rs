//! Framing, separation, stitching and emission composed into one run over a
//! mixture, either offline (whole file) or as a live stream.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};
use crate::framing::{frames, FramingConfig, FramingError, StreamingFramer};
use crate::scalar::Real;
use crate::scheduler::{collect_segments, emit_all, EmitMode, ScheduleError, SegmentEmitter};
use crate::separator::{GroundTruth, SeparatedFrame, Separator, SeparatorError};
use crate::stitcher::{align_all, overlap_add, Aligner, PermutationDecision, StitchConfig, StitchError, StitchMode};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error(transparent)]
    Separator(#[from] SeparatorError),
    #[error(transparent)]
    Stitch(#[from] StitchError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("mixture is empty")]
    EmptyMixture,
    #[error("separator produced {found} channels, expected {expected}")]
    ChannelCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub framing: FramingConfig,
    pub stitch: StitchMode,
    pub emit: EmitMode,
    pub sample_rate: u32,
}

impl PipelineConfig {
    pub fn stitch_config(&self) -> StitchConfig {
        StitchConfig {
            framing: self.framing,
            mode: self.stitch,
            sample_rate: self.sample_rate,
        }
    }

    pub fn n_seg(&self) -> usize {
        match self.emit {
            EmitMode::Offline => self.framing.segments_per_window(),
            EmitMode::Online { n_seg } => n_seg,
        }
    }
}

/// Wall-clock time the separator spent on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub frame: usize,
    pub processing_seconds: f64,
}

/// Latency of one emitted segment. Algorithmic latency counts input time
/// from the segment's first sample until its release, assuming the input
/// keeps flowing past the end of the file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentTiming {
    pub segment: usize,
    pub released_by_frame: usize,
    pub contributions: usize,
    pub algorithmic_latency_seconds: f64,
    pub processing_seconds: f64,
    pub total_latency_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<T> {
    pub estimates: AudioBuffer<T>,
    pub decisions: Vec<PermutationDecision<T>>,
    pub frame_timings: Vec<FrameTiming>,
    pub segment_timings: Vec<SegmentTiming>,
}

fn separate_timed<T: Real>(
    separator: &mut dyn Separator<T>,
    frame: &crate::framing::Frame<T>,
) -> Result<(SeparatedFrame<T>, FrameTiming), PipelineError> {
    let started = Instant::now();
    let out = separator.separate(frame)?;
    let timing = FrameTiming {
        frame: frame.index,
        processing_seconds: started.elapsed().as_secs_f64(),
    };
    if out.channel_count() != separator.channel_count() {
        return Err(PipelineError::ChannelCount {
            expected: separator.channel_count(),
            found: out.channel_count(),
        });
    }
    Ok((out, timing))
}

/// Frames the whole mixture, separates and aligns every frame.
pub fn separate_and_align<T: Real>(
    mixture: &AudioBuffer<T>,
    config: &StitchConfig,
    separator: &mut dyn Separator<T>,
    truth: Option<&GroundTruth<T>>,
) -> Result<(Vec<SeparatedFrame<T>>, Vec<PermutationDecision<T>>, Vec<FrameTiming>), PipelineError> {
    if mixture.is_empty() {
        return Err(PipelineError::EmptyMixture);
    }
    let mut separated = Vec::new();
    let mut timings = Vec::new();
    for frame in frames(mixture, &config.framing)? {
        let (out, timing) = separate_timed(separator, &frame)?;
        separated.push(out);
        timings.push(timing);
    }
    let (aligned, decisions) = align_all(separated, config, truth)?;
    Ok((aligned, decisions, timings))
}

fn segment_timings(
    config: &PipelineConfig,
    released: impl Iterator<Item = (usize, usize, usize)>,
    frame_timings: &[FrameTiming],
) -> Vec<SegmentTiming> {
    let sr = f64::from(config.sample_rate);
    let hop = config.framing.hop();
    let n_seg = config.n_seg();
    released
        .map(|(segment, by_frame, contributions)| {
            let algorithmic = (n_seg * hop) as f64 / sr;
            let processing = frame_timings.get(by_frame).map_or(0.0, |t| t.processing_seconds);
            SegmentTiming {
                segment,
                released_by_frame: by_frame,
                contributions,
                algorithmic_latency_seconds: algorithmic,
                processing_seconds: processing,
                total_latency_seconds: algorithmic + processing,
            }
        })
        .collect()
}

/// Whole-file run: every frame is separated and aligned first, then the
/// output is produced with the configured emission mode.
pub fn run_offline<T: Real>(
    mixture: &AudioBuffer<T>,
    config: &PipelineConfig,
    separator: &mut dyn Separator<T>,
    truth: Option<&GroundTruth<T>>,
) -> Result<PipelineOutput<T>, PipelineError> {
    let stitch = config.stitch_config();
    let (aligned, decisions, frame_timings) = separate_and_align(mixture, &stitch, separator, truth)?;
    let estimates = match config.emit {
        EmitMode::Offline => overlap_add(&aligned, mixture.len(), &stitch)?,
        EmitMode::Online { n_seg } => {
            let planar = emit_all(&aligned, config.framing, n_seg, mixture.len())?;
            AudioBuffer::from_channels(&planar, config.sample_rate)?
        }
    };
    let n_seg = config.n_seg();
    let last = aligned.len().saturating_sub(1);
    let released = (0..aligned.len()).map(|k| (k, (k + n_seg - 1).min(last), n_seg.min(aligned.len() - k)));
    let segment_timings = segment_timings(config, released, &frame_timings);
    Ok(PipelineOutput {
        estimates,
        decisions,
        frame_timings,
        segment_timings,
    })
}

/// Live run: the mixture is fed in `chunk`-sample pieces and each segment is
/// released as soon as the scheduler allows.
pub fn run_online<T: Real>(
    mixture: &AudioBuffer<T>,
    config: &PipelineConfig,
    separator: &mut dyn Separator<T>,
    truth: Option<&GroundTruth<T>>,
    chunk: usize,
) -> Result<PipelineOutput<T>, PipelineError> {
    if !mixture.is_mono() {
        return Err(FramingError::NotMono(mixture.channels()).into());
    }
    if mixture.is_empty() {
        return Err(PipelineError::EmptyMixture);
    }
    let channels = separator.channel_count();
    let mut framer = StreamingFramer::new(config.framing);
    let mut aligner = Aligner::new(config.stitch_config(), truth.cloned())?;
    let mut emitter = SegmentEmitter::new(config.framing, config.n_seg(), channels)?;
    let mut decisions = Vec::new();
    let mut frame_timings = Vec::new();
    let mut segments = Vec::new();

    let mut step = |frame: crate::framing::Frame<T>| -> Result<(), PipelineError> {
        let (out, timing) = separate_timed(separator, &frame)?;
        frame_timings.push(timing);
        let (aligned, decision) = aligner.push(out)?;
        decisions.push(decision);
        segments.extend(emitter.push(&aligned)?);
        Ok(())
    };
    for piece in mixture.samples().chunks(chunk.max(1)) {
        for frame in framer.push(piece) {
            step(frame)?;
        }
    }
    if let Some(frame) = framer.finish() {
        step(frame)?;
    }
    let frame_count = frame_timings.len();
    segments.extend(emitter.finish());

    let n_seg = config.n_seg();
    let released = segments
        .iter()
        .map(|s| (s.index, s.released_by_frame.unwrap_or((s.index + n_seg - 1).min(frame_count - 1)), s.contributions));
    let segment_timings = segment_timings(config, released, &frame_timings);
    let planar = collect_segments(&segments, channels, mixture.len());
    Ok(PipelineOutput {
        estimates: AudioBuffer::from_channels(&planar, config.sample_rate)?,
        decisions,
        frame_timings,
        segment_timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::separator::{IdentitySeparator, OracleSourceSeparator, ShuffleSeparator};

    fn signal(len: usize) -> Vec<f64> {
        (0..len).map(|t| ((t as f64) * 0.173).sin() + 0.3 * ((t as f64) * 0.0071).cos()).collect()
    }

    fn config(w: usize, h: usize, emit: EmitMode) -> PipelineConfig {
        PipelineConfig {
            framing: FramingConfig::new(w, h).unwrap(),
            stitch: StitchMode::CrossCorrelation,
            emit,
            sample_rate: 8000,
        }
    }

    #[test]
    fn identity_online_n_seg_one_reconstructs() {
        let data = signal(1234);
        let mix = AudioBuffer::mono(data.clone(), 8000).unwrap();
        let cfg = config(200, 50, EmitMode::Online { n_seg: 1 });
        let mut sep = IdentitySeparator::new(2, 200);
        let out = run_online(&mix, &cfg, &mut sep, None, 37).unwrap();
        for c in 0..2 {
            for (a, b) in out.estimates.channel(c).iter().zip(&data) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert!(out.segment_timings.iter().all(|s| s.algorithmic_latency_seconds == 50.0 / 8000.0));
    }

    #[test]
    fn online_and_offline_agree_bitwise() {
        let len = 3000;
        let s1 = signal(len);
        let s2: Vec<f64> = (0..len).map(|t| ((t as f64) * 0.9).sin() * 0.5).collect();
        let mix: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();
        let mix = AudioBuffer::mono(mix, 8000).unwrap();
        let truth = GroundTruth::new(vec![s1, s2]);
        let make = || -> Box<dyn Separator<f64>> {
            let inner = OracleSourceSeparator::new(truth.clone(), 2, 400, len).unwrap();
            Box::new(ShuffleSeparator::new(Box::new(inner), 3))
        };
        let offline = run_offline(&mix, &config(400, 100, EmitMode::Offline), make().as_mut(), None).unwrap();
        for chunk in [1, 99, 4000] {
            let online = run_online(&mix, &config(400, 100, EmitMode::Online { n_seg: 4 }), make().as_mut(), None, chunk).unwrap();
            assert_eq!(online.estimates, offline.estimates);
            assert_eq!(online.decisions, offline.decisions);
        }
        let replay = run_offline(&mix, &config(400, 100, EmitMode::Online { n_seg: 4 }), make().as_mut(), None).unwrap();
        assert_eq!(replay.estimates, offline.estimates);
    }

    #[test]
    fn empty_mixture_is_rejected() {
        let mix = AudioBuffer::<f64>::mono(vec![], 8000).unwrap();
        let mut sep = IdentitySeparator::new(2, 8);
        let cfg = config(8, 4, EmitMode::Offline);
        assert!(matches!(run_offline(&mix, &cfg, &mut sep, None), Err(PipelineError::EmptyMixture)));
        assert!(matches!(run_online(&mix, &cfg, &mut sep, None, 4), Err(PipelineError::EmptyMixture)));
    }
}
