//! Ideal ratio mask separator: an oracle masker built from the clean source
//! magnitudes, applied to the mixture spectrogram of each frame.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{check_frame_len, check_ground_truth, GroundTruth, SeparatedFrame, Separator, SeparatorError};
use crate::framing::Frame;
use crate::scalar::Real;

/// Short-time transform used inside a frame. The sine window is applied on
/// analysis and synthesis; at 50% overlap its square sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window: 256,
            hop: 128,
        }
    }
}

const MASK_EPSILON: f64 = 1e-8;

struct Stft<T: Real> {
    config: StftConfig,
    window: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> Stft<T> {
    fn new(config: StftConfig) -> Self {
        let n = config.window;
        let window = (0..n)
            .map(|i| (T::PI() * (T::from_usize_lossy(i) + T::lit(0.5)) / T::from_usize_lossy(n)).sin())
            .collect();
        let mut planner = FftPlanner::new();
        Self {
            config,
            window,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Padding before the signal, and total padded length for `len` samples,
    /// so every original sample is covered by two full windows.
    fn layout(&self, len: usize) -> (usize, usize) {
        let lead = self.config.window - self.config.hop;
        let hop = self.config.hop;
        let body = lead + len;
        let tail = lead + (hop - body % hop) % hop;
        (lead, body + tail)
    }

    fn analyze(&self, signal: &[T]) -> Vec<Vec<Complex<T>>> {
        let (lead, padded_len) = self.layout(signal.len());
        let mut padded = vec![T::zero(); padded_len];
        padded[lead..lead + signal.len()].copy_from_slice(signal);
        let n = self.config.window;
        (0..=(padded_len - n) / self.config.hop)
            .map(|m| {
                let offset = m * self.config.hop;
                let mut buf: Vec<Complex<T>> = (0..n)
                    .map(|k| Complex::new(padded[offset + k] * self.window[k], T::zero()))
                    .collect();
                self.forward.process(&mut buf);
                buf
            })
            .collect()
    }

    fn synthesize(&self, spectra: Vec<Vec<Complex<T>>>, len: usize) -> Vec<T> {
        let (lead, padded_len) = self.layout(len);
        let n = self.config.window;
        let scale = T::one() / T::from_usize_lossy(n);
        let mut out = vec![T::zero(); padded_len];
        for (m, mut spectrum) in spectra.into_iter().enumerate() {
            self.inverse.process(&mut spectrum);
            let offset = m * self.config.hop;
            for k in 0..n {
                out[offset + k] = out[offset + k] + spectrum[k].re * scale * self.window[k];
            }
        }
        out[lead..lead + len].to_vec()
    }
}

pub struct IdealRatioMaskSeparator<T: Real> {
    truth: GroundTruth<T>,
    window: usize,
    stft: Stft<T>,
}

impl<T: Real> IdealRatioMaskSeparator<T> {
    pub fn new(
        truth: GroundTruth<T>,
        channels: usize,
        window: usize,
        mixture_len: usize,
        stft: StftConfig,
    ) -> Result<Self, SeparatorError> {
        check_ground_truth(&truth, channels, mixture_len)?;
        if stft.hop == 0 || stft.window != 2 * stft.hop {
            return Err(SeparatorError::InvalidSpec(
                "ratio-mask STFT needs hop = window / 2".into(),
            ));
        }
        Ok(Self {
            truth,
            window,
            stft: Stft::new(stft),
        })
    }

    /// Ratio masks for every source at every time-frequency bin of `frame`.
    pub fn masks(&self, frame: &Frame<T>) -> Vec<Vec<Vec<T>>> {
        let sources: Vec<_> = (0..self.truth.source_count())
            .map(|c| self.stft.analyze(&self.truth.excerpt(c, frame.start, self.window)))
            .collect();
        ratio_masks(&sources)
    }
}

fn ratio_masks<T: Real>(sources: &[Vec<Vec<Complex<T>>>]) -> Vec<Vec<Vec<T>>> {
    let eps = T::lit(MASK_EPSILON);
    let frames = sources[0].len();
    let bins = sources[0].first().map_or(0, Vec::len);
    let mut masks = vec![vec![vec![T::zero(); bins]; frames]; sources.len()];
    for m in 0..frames {
        for k in 0..bins {
            let total = sources.iter().fold(T::zero(), |acc, s| acc + s[m][k].norm());
            for (c, s) in sources.iter().enumerate() {
                masks[c][m][k] = s[m][k].norm() / (total + eps);
            }
        }
    }
    masks
}

impl<T: Real> Separator<T> for IdealRatioMaskSeparator<T> {
    fn channel_count(&self) -> usize {
        self.truth.source_count()
    }

    fn separate(&mut self, frame: &Frame<T>) -> Result<SeparatedFrame<T>, SeparatorError> {
        check_frame_len(frame, self.window)?;
        let mixture = self.stft.analyze(&frame.samples);
        let masks = self.masks(frame);
        let channels = masks
            .into_iter()
            .map(|mask| {
                let masked = mixture
                    .iter()
                    .zip(&mask)
                    .map(|(spec, gains)| spec.iter().zip(gains).map(|(&x, &g)| x * g).collect())
                    .collect();
                self.stft.synthesize(masked, self.window)
            })
            .collect();
        Ok(SeparatedFrame {
            index: frame.index,
            start: frame.start,
            channels,
        })
    }
}
