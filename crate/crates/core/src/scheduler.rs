//! Offline to online conversion: a length-`H` segment is released as soon as
//! the `n_seg` earliest frames containing it have been committed, trading
//! separation quality for latency.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framing::{FramingConfig, StreamingFramer};
use crate::scalar::Real;
use crate::separator::SeparatedFrame;
use crate::stitcher::hann_periodic;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("n_seg must be in 1..={max}, got {n_seg}")]
    SegmentCount { n_seg: usize, max: usize },
    #[error("expected frame {expected}, got {found}")]
    OutOfOrder { expected: usize, found: usize },
    #[error("frame has {found} channels, expected {expected}")]
    ChannelCount { expected: usize, found: usize },
    #[error("processing time must be a finite nonnegative number of seconds")]
    ProcessingTime,
    #[error("window length must be positive")]
    WindowSeconds,
    #[error("cost fit needs at least {needed} calibration points")]
    TooFewPoints { needed: usize },
}

fn check_n_seg(framing: &FramingConfig, n_seg: usize) -> Result<(), ScheduleError> {
    let max = framing.segments_per_window();
    if n_seg == 0 || n_seg > max {
        return Err(ScheduleError::SegmentCount { n_seg, max });
    }
    Ok(())
}

/// Algorithmic latency `n_seg * H / sr` in seconds.
pub fn min_latency(framing: &FramingConfig, n_seg: usize, sample_rate: u32) -> Result<f64, ScheduleError> {
    check_n_seg(framing, n_seg)?;
    Ok((n_seg * framing.hop()) as f64 / f64::from(sample_rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitMode {
    /// Wait for the whole window.
    Offline,
    Online { n_seg: usize },
}

/// Latency bookkeeping for one stream configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSchedule {
    pub framing: FramingConfig,
    pub sample_rate: u32,
    pub mode: EmitMode,
    pub processing_seconds: f64,
}

impl StreamSchedule {
    pub fn offline(framing: FramingConfig, sample_rate: u32, processing_seconds: f64) -> Result<Self, ScheduleError> {
        Self::new(framing, sample_rate, EmitMode::Offline, processing_seconds)
    }

    pub fn online(
        framing: FramingConfig,
        sample_rate: u32,
        n_seg: usize,
        processing_seconds: f64,
    ) -> Result<Self, ScheduleError> {
        check_n_seg(&framing, n_seg)?;
        Self::new(framing, sample_rate, EmitMode::Online { n_seg }, processing_seconds)
    }

    fn new(framing: FramingConfig, sample_rate: u32, mode: EmitMode, processing_seconds: f64) -> Result<Self, ScheduleError> {
        if !(processing_seconds.is_finite() && processing_seconds >= 0.0) {
            return Err(ScheduleError::ProcessingTime);
        }
        Ok(Self {
            framing,
            sample_rate,
            mode,
            processing_seconds,
        })
    }

    pub fn window_seconds(&self) -> f64 {
        self.framing.window() as f64 / f64::from(self.sample_rate)
    }

    pub fn hop_seconds(&self) -> f64 {
        self.framing.hop() as f64 / f64::from(self.sample_rate)
    }

    /// Number of frame estimates combined per segment.
    pub fn n_seg(&self) -> usize {
        match self.mode {
            EmitMode::Offline => self.framing.segments_per_window(),
            EmitMode::Online { n_seg } => n_seg,
        }
    }

    pub fn algorithmic_latency(&self) -> f64 {
        match self.mode {
            EmitMode::Offline => self.window_seconds(),
            EmitMode::Online { n_seg } => (n_seg * self.framing.hop()) as f64 / f64::from(self.sample_rate),
        }
    }

    /// `t_l = t_W + t_proc` offline, `n_seg * H / sr + t_proc` online.
    pub fn total_latency(&self) -> f64 {
        self.algorithmic_latency() + self.processing_seconds
    }
}

/// Running window-weighted sum for one length-`H` segment.
///
/// Shared by offline overlap-add and the online emitter so that both add the
/// same contributions in the same order and round identically.
#[derive(Debug, Clone)]
pub struct SegmentAccumulator<T> {
    num: Vec<Vec<T>>,
    den: Vec<T>,
    plain: Vec<Vec<T>>,
    count: usize,
}

impl<T: Real> SegmentAccumulator<T> {
    pub fn new(channels: usize, hop: usize) -> Self {
        Self {
            num: vec![vec![T::zero(); hop]; channels],
            den: vec![T::zero(); hop],
            plain: vec![vec![T::zero(); hop]; channels],
            count: 0,
        }
    }

    /// Adds the part of `frame` covering segment `segment`.
    pub fn add(&mut self, frame: &SeparatedFrame<T>, segment: usize, framing: &FramingConfig, window: &[T]) {
        let hop = framing.hop();
        let offset = (segment as isize * hop as isize - frame.start) as usize;
        let w = &window[offset..offset + hop];
        for (den, &wt) in self.den.iter_mut().zip(w) {
            *den = *den + wt;
        }
        for ((num, plain), ch) in self.num.iter_mut().zip(&mut self.plain).zip(&frame.channels) {
            let x = &ch[offset..offset + hop];
            for t in 0..hop {
                num[t] = num[t] + w[t] * x[t];
                plain[t] = plain[t] + x[t];
            }
        }
        self.count += 1;
    }

    pub fn contributions(&self) -> usize {
        self.count
    }

    /// Normalized samples per channel; where every weight was zero the
    /// plain mean is used instead.
    pub fn finish(self) -> Vec<Vec<T>> {
        let count = T::from_usize_lossy(self.count.max(1));
        let den = self.den;
        self.num
            .into_iter()
            .zip(self.plain)
            .map(|(num, plain)| {
                num.iter()
                    .zip(&plain)
                    .zip(&den)
                    .map(|((&n, &p), &d)| if d == T::zero() { p / count } else { n / d })
                    .collect()
            })
            .collect()
    }
}

/// A finalized length-`H` slice of every output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedSegment<T> {
    pub index: usize,
    pub channels: Vec<Vec<T>>,
    /// Frame whose commit released the segment; `None` when flushed at end
    /// of stream.
    pub released_by_frame: Option<usize>,
    pub contributions: usize,
}

/// Releases segment `k` right after frame `k + n_seg - 1` is committed,
/// combining only frames `k..k + n_seg`.
#[derive(Debug, Clone)]
pub struct SegmentEmitter<T> {
    framing: FramingConfig,
    n_seg: usize,
    channels: usize,
    window: Vec<T>,
    /// Open segments, oldest first; the front has index `first_open`.
    open: VecDeque<SegmentAccumulator<T>>,
    first_open: usize,
    next_frame: usize,
}

impl<T: Real> SegmentEmitter<T> {
    pub fn new(framing: FramingConfig, n_seg: usize, channels: usize) -> Result<Self, ScheduleError> {
        check_n_seg(&framing, n_seg)?;
        Ok(Self {
            framing,
            n_seg,
            channels,
            window: hann_periodic(framing.window()),
            open: VecDeque::with_capacity(n_seg),
            first_open: 0,
            next_frame: 0,
        })
    }

    pub fn n_seg(&self) -> usize {
        self.n_seg
    }

    pub fn check_next(&self, index: usize) -> Result<(), ScheduleError> {
        if index != self.next_frame {
            return Err(ScheduleError::OutOfOrder {
                expected: self.next_frame,
                found: index,
            });
        }
        Ok(())
    }

    /// Commits an aligned frame and returns the segment it completes.
    pub fn push(&mut self, frame: &SeparatedFrame<T>) -> Result<Option<EmittedSegment<T>>, ScheduleError> {
        self.check_next(frame.index)?;
        if frame.channel_count() != self.channels {
            return Err(ScheduleError::ChannelCount {
                expected: self.channels,
                found: frame.channel_count(),
            });
        }
        let i = frame.index;
        self.open.push_back(SegmentAccumulator::new(self.channels, self.framing.hop()));
        for (pos, acc) in self.open.iter_mut().enumerate() {
            acc.add(frame, self.first_open + pos, &self.framing, &self.window);
        }
        self.next_frame += 1;
        if i + 1 < self.n_seg {
            return Ok(None);
        }
        Ok(self.pop(Some(i)))
    }

    fn pop(&mut self, released_by_frame: Option<usize>) -> Option<EmittedSegment<T>> {
        let acc = self.open.pop_front()?;
        let index = self.first_open;
        self.first_open += 1;
        Some(EmittedSegment {
            index,
            contributions: acc.contributions(),
            channels: acc.finish(),
            released_by_frame,
        })
    }

    /// Flushes segments still waiting for frames that will never come.
    pub fn finish(mut self) -> Vec<EmittedSegment<T>> {
        std::iter::from_fn(|| self.pop(None)).collect()
    }
}

/// Concatenates emitted segments into `channels` streams of `total_len`.
pub fn collect_segments<T: Real>(segments: &[EmittedSegment<T>], channels: usize, total_len: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::with_capacity(total_len); channels];
    for seg in segments {
        for (o, s) in out.iter_mut().zip(&seg.channels) {
            o.extend_from_slice(s);
        }
    }
    for o in &mut out {
        o.truncate(total_len);
    }
    out
}

/// Emits every segment of already aligned frames with the given `n_seg`.
pub fn emit_all<T: Real>(
    aligned: &[SeparatedFrame<T>],
    framing: FramingConfig,
    n_seg: usize,
    total_len: usize,
) -> Result<Vec<Vec<T>>, ScheduleError> {
    let channels = aligned.first().map_or(0, SeparatedFrame::channel_count);
    let mut emitter = SegmentEmitter::new(framing, n_seg, channels)?;
    let mut segments = Vec::with_capacity(aligned.len());
    for frame in aligned {
        segments.extend(emitter.push(frame)?);
    }
    segments.extend(emitter.finish());
    Ok(collect_segments(&segments, channels, total_len))
}

/// When a segment left the scheduler, in input samples received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmissionEvent {
    pub segment: usize,
    pub released_by_frame: usize,
    pub samples_received: usize,
}

/// Discrete-event trace of a live stream with instantaneous processing.
///
/// The input keeps flowing (silence after the first `total` samples) until
/// all `ceil(total / H)` segments carrying signal have been released.
pub fn emission_trace(total: usize, framing: FramingConfig, n_seg: usize) -> Result<Vec<EmissionEvent>, ScheduleError> {
    let segments = total.div_ceil(framing.hop());
    let mut framer = StreamingFramer::<f64>::new(framing);
    let mut emitter = SegmentEmitter::<f64>::new(framing, n_seg, 1)?;
    let mut events = Vec::with_capacity(segments);
    while events.len() < segments {
        let Some(frame) = framer.push_sample(0.0) else {
            continue;
        };
        let separated = SeparatedFrame {
            index: frame.index,
            start: frame.start,
            channels: vec![frame.samples],
        };
        if let Some(seg) = emitter.push(&separated)? {
            events.push(EmissionEvent {
                segment: seg.index,
                released_by_frame: frame.index,
                samples_received: framer.samples_received(),
            });
        }
    }
    Ok(events)
}

/// One calibration measurement: window length, FLOPs per hop, peak memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub window_seconds: f64,
    pub flops: f64,
    pub memory_bytes: f64,
}

/// Published DPRNN measurements at 3, 5 and 10 s windows.
pub const REFERENCE_COST_POINTS: [CostPoint; 3] = [
    CostPoint { window_seconds: 3.0, flops: 76e9, memory_bytes: 0.94e9 },
    CostPoint { window_seconds: 5.0, flops: 127e9, memory_bytes: 2.07e9 },
    CostPoint { window_seconds: 10.0, flops: 254e9, memory_bytes: 4.06e9 },
];

/// Linear compute and memory model in the window length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub flops_per_window_second: f64,
    pub memory_base: f64,
    pub memory_per_window_second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub flops: f64,
    pub memory_bytes: f64,
}

impl CostModel {
    /// FLOPs: least squares through the origin. Memory: least squares for
    /// `base + slope * W` subject to both coefficients being nonnegative.
    pub fn fit(points: &[CostPoint]) -> Result<Self, ScheduleError> {
        if points.len() < 2 {
            return Err(ScheduleError::TooFewPoints { needed: 2 });
        }
        let sxx: f64 = points.iter().map(|p| p.window_seconds.powi(2)).sum();
        let flops_per_window_second = (points.iter().map(|p| p.window_seconds * p.flops).sum::<f64>() / sxx).max(0.0);

        let n = points.len() as f64;
        let mean_w = points.iter().map(|p| p.window_seconds).sum::<f64>() / n;
        let mean_m = points.iter().map(|p| p.memory_bytes).sum::<f64>() / n;
        let cov: f64 = points.iter().map(|p| (p.window_seconds - mean_w) * (p.memory_bytes - mean_m)).sum();
        let var: f64 = points.iter().map(|p| (p.window_seconds - mean_w).powi(2)).sum();
        let slope = if var > 0.0 { cov / var } else { 0.0 };
        let base = mean_m - slope * mean_w;
        let (memory_base, memory_per_window_second) = if slope < 0.0 {
            (mean_m.max(0.0), 0.0)
        } else if base < 0.0 {
            // active constraint: refit through the origin
            let through_origin = points.iter().map(|p| p.window_seconds * p.memory_bytes).sum::<f64>() / sxx;
            (0.0, through_origin.max(0.0))
        } else {
            (base, slope)
        };
        Ok(Self {
            flops_per_window_second,
            memory_base,
            memory_per_window_second,
        })
    }

    pub fn predict(&self, window_seconds: f64) -> Result<CostEstimate, ScheduleError> {
        predict_cost(window_seconds, self)
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self::fit(&REFERENCE_COST_POINTS).expect("three reference points")
    }
}

pub fn predict_cost(window_seconds: f64, model: &CostModel) -> Result<CostEstimate, ScheduleError> {
    if !(window_seconds.is_finite() && window_seconds > 0.0) {
        return Err(ScheduleError::WindowSeconds);
    }
    Ok(CostEstimate {
        flops: model.flops_per_window_second * window_seconds,
        memory_bytes: model.memory_base + model.memory_per_window_second * window_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn framing(w: usize, h: usize) -> FramingConfig {
        FramingConfig::new(w, h).unwrap()
    }

    #[test]
    fn min_latency_examples() {
        let f = framing(40000, 4000);
        assert_eq!(min_latency(&f, 1, 8000).unwrap(), 0.5);
        assert_eq!(min_latency(&f, 4, 8000).unwrap(), 2.0);
        assert_eq!(min_latency(&f, 10, 8000).unwrap(), 5.0);
        assert!(min_latency(&f, 0, 8000).is_err());
        assert!(min_latency(&f, 11, 8000).is_err());
    }

    #[test]
    fn total_latency_examples() {
        let f = framing(40000, 20000);
        assert_eq!(StreamSchedule::offline(f, 8000, 0.0).unwrap().total_latency(), 5.0);
        let f3 = framing(24000, 12000);
        let s = StreamSchedule::offline(f3, 8000, 0.2).unwrap();
        assert!((s.total_latency() - 3.2).abs() < 1e-12);
        let online = StreamSchedule::online(framing(40000, 4000), 8000, 2, 0.1).unwrap();
        assert!((online.total_latency() - 1.1).abs() < 1e-12);
        assert!(StreamSchedule::offline(f, 8000, -1.0).is_err());
        let full = StreamSchedule::online(f, 8000, 2, 0.0).unwrap();
        assert_eq!(full.total_latency(), StreamSchedule::offline(f, 8000, 0.0).unwrap().total_latency());
    }

    #[test]
    fn trace_for_ten_hops_and_two_segments() {
        let f = framing(8, 4);
        let trace = emission_trace(40, f, 2).unwrap();
        let frames: Vec<usize> = trace.iter().map(|e| e.released_by_frame).collect();
        assert_eq!(frames, (1..=10).collect::<Vec<_>>());
        let segs: Vec<usize> = trace.iter().map(|e| e.segment).collect();
        assert_eq!(segs, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn emitter_rejects_gaps_and_bad_n_seg() {
        let f = framing(8, 4);
        assert!(SegmentEmitter::<f64>::new(f, 3, 2).is_err());
        let mut e = SegmentEmitter::<f64>::new(f, 1, 2).unwrap();
        let frame = SeparatedFrame { index: 1, start: 0, channels: vec![vec![0.0; 8]; 2] };
        assert_eq!(e.push(&frame), Err(ScheduleError::OutOfOrder { expected: 0, found: 1 }));
    }

    #[test]
    fn single_segment_reads_right_edge() {
        // with n_seg = 1 every segment comes from the newest H samples of one frame
        let f = framing(6, 2);
        let data: Vec<f64> = (1..=10).map(f64::from).collect();
        let buf = crate::audio::AudioBuffer::mono(data.clone(), 8000).unwrap();
        let frames: Vec<_> = crate::framing::frames(&buf, &f)
            .unwrap()
            .into_iter()
            .map(|fr| SeparatedFrame { index: fr.index, start: fr.start, channels: vec![fr.samples] })
            .collect();
        let mut e = SegmentEmitter::new(f, 1, 1).unwrap();
        for fr in &frames {
            let seg = e.push(fr).unwrap().unwrap();
            assert_eq!(seg.index, fr.index);
            assert_eq!(seg.contributions, 1);
            for (a, b) in seg.channels[0].iter().zip(&fr.channels[0][4..]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(e.finish().is_empty());
    }

    #[test]
    fn default_cost_model_flops() {
        let m = CostModel::default();
        for (w, paper) in [(3.0, 76e9), (5.0, 127e9), (10.0, 254e9)] {
            let c = predict_cost(w, &m).unwrap();
            assert!(((c.flops - paper) / paper).abs() < 0.01, "{w}: {}", c.flops);
        }
        let r = predict_cost(10.0, &m).unwrap().flops / predict_cost(5.0, &m).unwrap().flops;
        assert!((r - 2.0).abs() < 1e-12);
        assert!(m.memory_base >= 0.0 && m.memory_per_window_second >= 0.0);
        assert!(predict_cost(0.0, &m).is_err());
    }

    #[test]
    fn memory_fit_matches_exact_line() {
        let pts: Vec<CostPoint> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&w| CostPoint { window_seconds: w, flops: 3.0 * w, memory_bytes: 5.0 + 2.0 * w })
            .collect();
        let m = CostModel::fit(&pts).unwrap();
        assert!((m.memory_base - 5.0).abs() < 1e-9);
        assert!((m.memory_per_window_second - 2.0).abs() < 1e-9);
        assert!((m.flops_per_window_second - 3.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn trace_releases_each_segment_after_n_seg_hops(h in 1usize..6, ratio in 1usize..6, hops in 1usize..20, pick in 0usize..100) {
            let f = framing(h * ratio, h);
            let n_seg = 1 + pick % ratio;
            let total = hops * h;
            let trace = emission_trace(total, f, n_seg).unwrap();
            prop_assert_eq!(trace.len(), hops);
            for (k, e) in trace.iter().enumerate() {
                prop_assert_eq!(e.segment, k);
                prop_assert_eq!(e.samples_received, (k + n_seg) * h);
            }
        }

        #[test]
        fn latency_grows_with_n_seg(h in 1usize..1000, ratio in 2usize..12) {
            let f = framing(h * ratio, h);
            for n in 1..ratio {
                prop_assert!(min_latency(&f, n, 8000).unwrap() < min_latency(&f, n + 1, 8000).unwrap());
            }
        }
    }
}
