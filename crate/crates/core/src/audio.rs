//! Sample-domain buffers, gain and mixing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Default sample rate of the conversational corpus the tooling targets.
pub const DEFAULT_SAMPLE_RATE: u32 = 8000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("channel count must be positive")]
    ZeroChannels,
    #[error("{len} samples cannot be split evenly into {channels} channels")]
    RaggedChannels { len: usize, channels: usize },
    #[error("channel {channel} has {len} samples, expected {expected}")]
    ChannelLength {
        channel: usize,
        len: usize,
        expected: usize,
    },
    #[error("sample rate mismatch: {expected} Hz vs {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("expected a mono buffer, found {0} channels")]
    NotMono(usize),
    #[error("gain of {0} dB does not give a finite positive factor")]
    InvalidGain(f64),
}

/// Interleaved multi-channel audio with a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    samples: Vec<T>,
    channels: usize,
    sample_rate: u32,
}

impl<T: Real> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, channels: usize, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if channels == 0 {
            return Err(AudioError::ZeroChannels);
        }
        if !samples.len().is_multiple_of(channels) {
            return Err(AudioError::RaggedChannels {
                len: samples.len(),
                channels,
            });
        }
        Ok(Self {
            samples,
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<T>, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(samples, 1, sample_rate)
    }

    pub fn silence(len: usize, channels: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(vec![T::zero(); len * channels], channels, sample_rate)
    }

    /// Builds an interleaved buffer from planar channel data of equal length.
    pub fn from_channels(planar: &[Vec<T>], sample_rate: u32) -> Result<Self, AudioError> {
        let channels = planar.len();
        if channels == 0 {
            return Err(AudioError::ZeroChannels);
        }
        let len = planar[0].len();
        for (channel, data) in planar.iter().enumerate() {
            if data.len() != len {
                return Err(AudioError::ChannelLength {
                    channel,
                    len: data.len(),
                    expected: len,
                });
            }
        }
        let mut samples = Vec::with_capacity(len * channels);
        for t in 0..len {
            samples.extend(planar.iter().map(|ch| ch[t]));
        }
        Self::new(samples, channels, sample_rate)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Number of samples per channel.
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn is_mono(&self) -> bool {
        self.channels == 1
    }

    pub fn channel(&self, channel: usize) -> Vec<T> {
        self.samples
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn to_channels(&self) -> Vec<Vec<T>> {
        (0..self.channels).map(|c| self.channel(c)).collect()
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> AudioBuffer<U> {
        AudioBuffer {
            samples: self.samples.iter().map(|&s| f(s)).collect(),
            channels: self.channels,
            sample_rate: self.sample_rate,
        }
    }

    /// Converts to another sample precision.
    pub fn cast<U: Real>(&self) -> AudioBuffer<U> {
        self.map(|s| U::lit(s.to_f64_lossy()))
    }
}

/// A gain in decibels.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct GainDb(f64);

impl GainDb {
    pub fn new(db: f64) -> Result<Self, AudioError> {
        let factor = 10f64.powf(db / 20.0);
        if !(factor.is_finite() && factor > 0.0) {
            return Err(AudioError::InvalidGain(db));
        }
        Ok(Self(db))
    }

    pub fn db(self) -> f64 {
        self.0
    }

    pub fn linear(self) -> f64 {
        10f64.powf(self.0 / 20.0)
    }
}

pub fn apply_gain<T: Real>(buffer: &AudioBuffer<T>, gain: GainDb) -> AudioBuffer<T> {
    let factor = T::lit(gain.linear());
    buffer.map(|s| s * factor)
}

/// A mono source placed at a sample offset inside a mix.
#[derive(Debug, Clone, Copy)]
pub struct Placed<'a, T> {
    pub buffer: &'a AudioBuffer<T>,
    pub offset: usize,
}

/// Sums mono sources placed at offsets.
///
/// The output spans the furthest source end. Per-sample contributions are
/// summed in ascending value order, so the result does not depend on the
/// order of `sources`.
pub fn mix<T: Real>(sources: &[Placed<'_, T>]) -> Result<AudioBuffer<T>, AudioError> {
    let Some(first) = sources.first() else {
        return AudioBuffer::mono(Vec::new(), DEFAULT_SAMPLE_RATE);
    };
    let sample_rate = first.buffer.sample_rate();
    for placed in sources {
        if placed.buffer.sample_rate() != sample_rate {
            return Err(AudioError::SampleRateMismatch {
                expected: sample_rate,
                found: placed.buffer.sample_rate(),
            });
        }
        if !placed.buffer.is_mono() {
            return Err(AudioError::NotMono(placed.buffer.channels()));
        }
    }
    let len = sources
        .iter()
        .map(|p| p.offset + p.buffer.len())
        .max()
        .unwrap_or(0);

    let mut contributions: Vec<Vec<T>> = vec![Vec::new(); len];
    for placed in sources {
        for (i, &s) in placed.buffer.samples().iter().enumerate() {
            contributions[placed.offset + i].push(s);
        }
    }
    let samples = contributions
        .into_iter()
        .map(|mut values| match values.len() {
            0 => T::zero(),
            1 => values[0],
            _ => {
                values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                values.into_iter().fold(T::zero(), |acc, v| acc + v)
            }
        })
        .collect();
    AudioBuffer::mono(samples, sample_rate)
}
