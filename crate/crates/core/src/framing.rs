//! Splitting a stream into overlapped fixed-length frames.
//!
//! Frame `i` spans samples `[i*H - (W - H), (i+1)*H)`: the stream is padded
//! with `W - H` zeros on the left, so the newest hop-sized segment of every
//! frame sits at its right edge and segment `i` becomes available as soon as
//! frame `i` completes. Samples outside `[0, T)` read as zero.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FramingError {
    #[error("hop must be positive")]
    ZeroHop,
    #[error("hop {hop} exceeds window {window}")]
    HopExceedsWindow { window: usize, hop: usize },
    #[error("window {window} is not a multiple of hop {hop}")]
    WindowNotMultipleOfHop { window: usize, hop: usize },
    #[error("stream is empty")]
    EmptyStream,
    #[error("framing needs a mono stream, found {0} channels")]
    NotMono(usize),
    #[error("{seconds} s is not a whole number of samples at {sample_rate} Hz")]
    FractionalSamples { seconds: f64, sample_rate: u32 },
}

/// Window and hop length in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FramingConfig {
    window: usize,
    hop: usize,
}

impl FramingConfig {
    pub fn new(window: usize, hop: usize) -> Result<Self, FramingError> {
        if hop == 0 {
            return Err(FramingError::ZeroHop);
        }
        if hop > window {
            return Err(FramingError::HopExceedsWindow { window, hop });
        }
        if !window.is_multiple_of(hop) {
            return Err(FramingError::WindowNotMultipleOfHop { window, hop });
        }
        Ok(Self { window, hop })
    }

    /// Builds a config from durations, requiring both to be whole sample counts.
    pub fn from_seconds(
        window_seconds: f64,
        hop_seconds: f64,
        sample_rate: u32,
    ) -> Result<Self, FramingError> {
        let window = seconds_to_samples(window_seconds, sample_rate)?;
        let hop = seconds_to_samples(hop_seconds, sample_rate)?;
        Self::new(window, hop)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Number of frames each interior segment appears in (`W / H`).
    pub fn segments_per_window(&self) -> usize {
        self.window / self.hop
    }

    pub fn overlap(&self) -> usize {
        self.window - self.hop
    }

    pub fn frame_start(&self, index: usize) -> isize {
        (index * self.hop) as isize - self.overlap() as isize
    }
}

pub fn seconds_to_samples(seconds: f64, sample_rate: u32) -> Result<usize, FramingError> {
    let exact = seconds * f64::from(sample_rate);
    let rounded = exact.round();
    if !(exact.is_finite() && rounded >= 0.0 && (exact - rounded).abs() < 1e-6) {
        return Err(FramingError::FractionalSamples {
            seconds,
            sample_rate,
        });
    }
    Ok(rounded as usize)
}

/// One fixed-length excerpt of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub index: usize,
    /// First sample covered; negative while inside the left padding.
    pub start: isize,
    pub samples: Vec<T>,
}

impl<T> Frame<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `ceil(T / H)`.
pub fn frame_count(total: usize, config: &FramingConfig) -> Result<usize, FramingError> {
    if total == 0 {
        return Err(FramingError::EmptyStream);
    }
    Ok(total.div_ceil(config.hop))
}

/// Frames a whole mono stream at once. An empty stream yields no frames.
pub fn frames<T: Real>(
    stream: &AudioBuffer<T>,
    config: &FramingConfig,
) -> Result<Vec<Frame<T>>, FramingError> {
    if !stream.is_mono() {
        return Err(FramingError::NotMono(stream.channels()));
    }
    let data = stream.samples();
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let count = frame_count(data.len(), config)?;
    Ok((0..count)
        .map(|index| {
            let start = config.frame_start(index);
            let samples = (0..config.window)
                .map(|k| {
                    let t = start + k as isize;
                    if t >= 0 && (t as usize) < data.len() {
                        data[t as usize]
                    } else {
                        T::zero()
                    }
                })
                .collect();
            Frame {
                index,
                start,
                samples,
            }
        })
        .collect())
}

/// Incremental framer: push chunks as they arrive, collect frames as soon
/// as their last sample is in.
#[derive(Debug, Clone)]
pub struct StreamingFramer<T> {
    config: FramingConfig,
    /// The most recent `W` samples of the left-padded stream.
    history: VecDeque<T>,
    received: usize,
    next_index: usize,
}

impl<T: Real> StreamingFramer<T> {
    pub fn new(config: FramingConfig) -> Self {
        let mut history = VecDeque::with_capacity(config.window);
        history.extend(std::iter::repeat_n(T::zero(), config.overlap()));
        Self {
            config,
            history,
            received: 0,
            next_index: 0,
        }
    }

    pub fn config(&self) -> &FramingConfig {
        &self.config
    }

    pub fn samples_received(&self) -> usize {
        self.received
    }

    fn take_frame(&mut self) -> Frame<T> {
        let frame = Frame {
            index: self.next_index,
            start: self.config.frame_start(self.next_index),
            samples: self.history.iter().copied().collect(),
        };
        self.history.drain(..self.config.hop);
        self.next_index += 1;
        frame
    }

    /// Feeds one sample; returns the frame it completes, if any.
    pub fn push_sample(&mut self, sample: T) -> Option<Frame<T>> {
        self.history.push_back(sample);
        self.received += 1;
        (self.history.len() == self.config.window).then(|| self.take_frame())
    }

    pub fn push(&mut self, chunk: &[T]) -> Vec<Frame<T>> {
        chunk.iter().filter_map(|&s| self.push_sample(s)).collect()
    }

    /// Flushes the trailing partial frame, zero-padded on the right.
    pub fn finish(mut self) -> Option<Frame<T>> {
        let pending = self.received - (self.next_index * self.config.hop).min(self.received);
        if pending == 0 {
            return None;
        }
        while self.history.len() < self.config.window {
            self.history.push_back(T::zero());
        }
        Some(self.take_frame())
    }
}
