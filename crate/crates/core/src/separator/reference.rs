use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_frame_len, check_ground_truth, GroundTruth, SeparatedFrame, Separator, SeparatorError};
use crate::framing::Frame;
use crate::scalar::Real;

/// Copies the mixture frame onto every channel.
#[derive(Debug, Clone)]
pub struct IdentitySeparator {
    channels: usize,
    window: usize,
}

impl IdentitySeparator {
    pub fn new(channels: usize, window: usize) -> Self {
        Self { channels, window }
    }
}

impl<T: Real> Separator<T> for IdentitySeparator {
    fn channel_count(&self) -> usize {
        self.channels
    }

    fn separate(&mut self, frame: &Frame<T>) -> Result<SeparatedFrame<T>, SeparatorError> {
        check_frame_len(frame, self.window)?;
        Ok(SeparatedFrame {
            index: frame.index,
            start: frame.start,
            channels: vec![frame.samples.clone(); self.channels],
        })
    }
}

/// Returns the clean sources restricted to the frame, channel `c` = source `c`.
#[derive(Debug, Clone)]
pub struct OracleSourceSeparator<T> {
    truth: GroundTruth<T>,
    window: usize,
}

impl<T: Real> OracleSourceSeparator<T> {
    pub fn new(
        truth: GroundTruth<T>,
        channels: usize,
        window: usize,
        mixture_len: usize,
    ) -> Result<Self, SeparatorError> {
        check_ground_truth(&truth, channels, mixture_len)?;
        Ok(Self { truth, window })
    }
}

impl<T: Real> Separator<T> for OracleSourceSeparator<T> {
    fn channel_count(&self) -> usize {
        self.truth.source_count()
    }

    fn separate(&mut self, frame: &Frame<T>) -> Result<SeparatedFrame<T>, SeparatorError> {
        check_frame_len(frame, self.window)?;
        Ok(SeparatedFrame {
            index: frame.index,
            start: frame.start,
            channels: (0..self.truth.source_count())
                .map(|c| self.truth.excerpt(c, frame.start, self.window))
                .collect(),
        })
    }
}

/// The channel permutation a [`ShuffleSeparator`] applies to frame `index`.
///
/// Output channel `g` carries inner channel `perm[g]`. Depends only on
/// `(seed, index, channels)`.
pub fn shuffle_permutation(seed: u64, index: usize, channels: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut perm: Vec<usize> = (0..channels).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Wraps another separator and permutes its channels per frame, emulating
/// the arbitrary output order of a permutation-invariant model.
pub struct ShuffleSeparator<T: Real> {
    inner: Box<dyn Separator<T>>,
    seed: u64,
}

impl<T: Real> ShuffleSeparator<T> {
    pub fn new(inner: Box<dyn Separator<T>>, seed: u64) -> Self {
        Self { inner, seed }
    }
}

impl<T: Real> Separator<T> for ShuffleSeparator<T> {
    fn channel_count(&self) -> usize {
        self.inner.channel_count()
    }

    fn separate(&mut self, frame: &Frame<T>) -> Result<SeparatedFrame<T>, SeparatorError> {
        let out = self.inner.separate(frame)?;
        let perm = shuffle_permutation(self.seed, frame.index, out.channel_count());
        Ok(out.permuted(&perm))
    }
}
