//! Synthetic two-speaker conversations with a controlled overlap ratio.
//!
//! Utterances are speech-like test signals: a pitch-modulated harmonic
//! series shaped by two formant bumps, plus band-limited noise bursts, all
//! under a 4 Hz syllabic envelope. Everything is a pure function of seeds.

use std::f64::consts::TAU;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};
use crate::scalar::Real;
use crate::wav::{write_wav, WavError};

pub const MIN_UTTERANCE_SECONDS: f64 = 0.5;
pub const MAX_UTTERANCE_SECONDS: f64 = 10.0;

#[derive(Debug, Error)]
pub enum MixgenError {
    #[error("utterance duration {0} s outside [0.5, 10] s")]
    Duration(f64),
    #[error("overlap ratio {0} outside [0, 1]")]
    OverlapRange(f64),
    #[error("speaker {0} has no utterances")]
    EmptyPool(usize),
    #[error("could not reach overlap {target:.3}; realized {realized:.3}")]
    InfeasibleTarget { target: f64, realized: f64 },
    #[error("invalid mixture spec: {0}")]
    InvalidSpec(String),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceStyle {
    /// Voiced from start to end; every sample is nonzero.
    Continuous,
    /// Adds one or two internal pauses of exact silence, 0.15 to 0.9 s long.
    #[default]
    Phrased,
}

/// Seeded, reproducible speech-like signal of `len` samples, peak 1.
pub fn synth_samples(len: usize, seed: u64, sample_rate: u32, style: UtteranceStyle) -> Vec<f64> {
    let sr = f64::from(sample_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let f0 = rng.gen_range(85.0..255.0);
    let vibrato_rate = rng.gen_range(0.3..1.5);
    let vibrato_depth = rng.gen_range(0.04..0.12);
    let vibrato_phase = rng.gen_range(0.0..TAU);
    let declination = rng.gen_range(-0.08..0.02);
    let formants = [
        (rng.gen_range(300.0..850.0), 120.0, 1.0),
        (rng.gen_range(900.0..2400.0), 220.0, 0.6),
    ];
    let max_f0 = f0 * (1.0 + vibrato_depth);
    let harmonics = ((0.45 * sr / max_f0) as usize).max(1);
    let weights: Vec<(f64, f64, f64)> = (1..=harmonics)
        .map(|k| {
            let f = k as f64 * f0;
            let envelope: f64 = formants
                .iter()
                .map(|&(fc, bw, g)| g * (-0.5 * ((f - fc) / bw).powi(2)).exp())
                .sum::<f64>()
                + 0.05;
            let phase: f64 = rng.gen_range(0.0..TAU);
            (envelope / (k as f64).sqrt(), phase.cos(), phase.sin())
        })
        .collect();

    // syllables at 4 Hz, each with its own loudness and a chance of frication
    let syllable_phase = rng.gen_range(0.0..1.0);
    let syllables = (len as f64 / sr * 4.0).ceil() as usize + 2;
    let loudness: Vec<f64> = (0..syllables).map(|_| rng.gen_range(0.5..1.0)).collect();
    let bursts: Vec<Option<(f64, f64)>> = (0..syllables)
        .map(|_| rng.gen_bool(0.35).then(|| (rng.gen_range(0.0..0.1), rng.gen_range(0.03..0.09))))
        .collect();

    // RBJ band-pass for the noise
    let centre = rng.gen_range(1500.0..3200.0);
    let q = 1.5;
    let w0 = TAU * centre / sr;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);

    let mut theta = 0.0;
    let duration = len as f64 / sr;
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let t = n as f64 / sr;
        let pitch = f0
            * (1.0 + vibrato_depth * (TAU * vibrato_rate * t + vibrato_phase).sin())
            * (1.0 + declination * t / duration.max(1e-9));
        theta = (theta + TAU * pitch / sr) % TAU;
        let (s1, c1) = theta.sin_cos();
        let (mut sk, mut ck) = (s1, c1);
        let mut voiced = 0.0;
        for &(amp, cos_phi, sin_phi) in &weights {
            voiced += amp * (sk * cos_phi + ck * sin_phi);
            (sk, ck) = (sk * c1 + ck * s1, ck * c1 - sk * s1);
        }

        let syl_pos = 4.0 * t + syllable_phase;
        let syl = syl_pos as usize;
        let within = syl_pos.fract();
        let envelope = 0.2 + 0.8 * loudness[syl] * (0.5 - 0.5 * (TAU * within).cos());

        let white: f64 = rng.gen_range(-1.0..1.0);
        let y = b0 * white + b2 * x2 - a1 * y1 - a2 * y2;
        (x2, x1, y2, y1) = (x1, white, y1, y);
        let burst = bursts[syl].map_or(0.0, |(onset, width)| {
            let u = within / 4.0 - onset;
            if (0.0..width).contains(&u) {
                (std::f64::consts::PI * u / width).sin()
            } else {
                0.0
            }
        });

        out.push(envelope * voiced + 2.0 * burst * y);
    }

    // 10 ms fades that never reach zero
    let fade = ((0.01 * sr) as usize).min(len / 2);
    for k in 0..fade {
        let g = (k + 1) as f64 / (fade + 1) as f64;
        out[k] *= g;
        out[len - 1 - k] *= g;
    }

    let mut silent = vec![false; len];
    if style == UtteranceStyle::Phrased {
        let margin = (0.4 * sr) as usize;
        let pauses = if len as f64 / sr >= 1.6 { rng.gen_range(1..=2) } else { 1 };
        let mut placed: Vec<(usize, usize)> = Vec::new();
        for _ in 0..pauses {
            for _attempt in 0..20 {
                let plen = (rng.gen_range(0.15..0.9) * sr) as usize;
                if len < 2 * margin + plen {
                    continue;
                }
                let start = rng.gen_range(margin..=len - margin - plen);
                let clear = placed
                    .iter()
                    .all(|&(s, e)| start + plen + margin <= s || e + margin <= start);
                if clear {
                    placed.push((start, start + plen));
                    break;
                }
            }
        }
        let ramp = (0.005 * sr) as usize;
        for &(s, e) in &placed {
            for k in 0..ramp.min(s) {
                let g = (k + 1) as f64 / (ramp + 1) as f64;
                out[s - 1 - k] *= g;
                if e + k < len {
                    out[e + k] *= g;
                }
            }
            silent[s..e].fill(true);
        }
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for (v, &quiet) in out.iter_mut().zip(&silent) {
        *v = if quiet {
            0.0
        } else if *v == 0.0 {
            1e-6
        } else {
            *v / peak
        };
    }
    out
}

/// Speech-like utterance of `duration_seconds`.
pub fn synth_utterance<T: Real>(
    duration_seconds: f64,
    seed: u64,
    sample_rate: u32,
    style: UtteranceStyle,
) -> Result<AudioBuffer<T>, MixgenError> {
    if !(MIN_UTTERANCE_SECONDS..=MAX_UTTERANCE_SECONDS).contains(&duration_seconds) {
        return Err(MixgenError::Duration(duration_seconds));
    }
    let len = (duration_seconds * f64::from(sample_rate)).round() as usize;
    let samples = synth_samples(len, seed, sample_rate, style);
    Ok(AudioBuffer::mono(samples.into_iter().map(T::lit).collect(), sample_rate)?)
}

/// Deterministic sub-seed for stream `stream`, item `index`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRef {
    pub seed: u64,
    pub length_samples: usize,
}

/// Utterances available to one speaker, rendered on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtterancePool {
    pub speaker: usize,
    pub sample_rate: u32,
    pub style: UtteranceStyle,
    pub utterances: Vec<UtteranceRef>,
}

impl UtterancePool {
    /// `count` utterances with durations uniform in `[min_seconds, max_seconds]`.
    pub fn generate(
        speaker: usize,
        count: usize,
        (min_seconds, max_seconds): (f64, f64),
        sample_rate: u32,
        style: UtteranceStyle,
        seed: u64,
    ) -> Result<Self, MixgenError> {
        if !(MIN_UTTERANCE_SECONDS <= min_seconds && min_seconds <= max_seconds && max_seconds <= MAX_UTTERANCE_SECONDS) {
            return Err(MixgenError::Duration(if min_seconds < MIN_UTTERANCE_SECONDS { min_seconds } else { max_seconds }));
        }
        let sr = f64::from(sample_rate);
        let lo = (min_seconds * sr).ceil() as usize;
        let hi = (max_seconds * sr).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let utterances = (0..count)
            .map(|_| UtteranceRef {
                seed: rng.next_u64(),
                length_samples: rng.gen_range(lo..=hi),
            })
            .collect();
        Ok(Self {
            speaker,
            sample_rate,
            style,
            utterances,
        })
    }

    pub fn render(&self, utterance: &UtteranceRef) -> Vec<f64> {
        synth_samples(utterance.length_samples, utterance.seed, self.sample_rate, self.style)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub target_overlap: f64,
    pub min_length_seconds: f64,
    pub pause_seconds: f64,
    pub gain_db_range: (f64, f64),
    pub tolerance: f64,
    /// Utterances considered at each placement step.
    pub candidates: usize,
    pub max_utterances: usize,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(target_overlap: f64, seed: u64) -> Self {
        Self {
            target_overlap,
            min_length_seconds: 15.0,
            pause_seconds: 0.05,
            gain_db_range: (-33.0, -25.0),
            tolerance: 0.02,
            candidates: 16,
            max_utterances: 40,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub speaker: usize,
    pub onset_sample: usize,
    pub length_samples: usize,
    pub gain_db: f64,
    pub seed: u64,
}

impl UtteranceRecord {
    pub fn end_sample(&self) -> usize {
        self.onset_sample + self.length_samples
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationManifest {
    pub id: String,
    pub sr: u32,
    pub duration_samples: usize,
    pub target_overlap: f64,
    pub realized_overlap: f64,
    #[serde(default)]
    pub style: UtteranceStyle,
    pub utterances: Vec<UtteranceRecord>,
}

impl ConversationManifest {
    pub fn duration_seconds(&self) -> f64 {
        self.duration_samples as f64 / f64::from(self.sr)
    }

    pub fn to_json(&self) -> Result<String, MixgenError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, MixgenError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Samples where both speakers are active divided by the mixture length,
/// from the utterance intervals.
pub fn overlap_ratio(manifest: &ConversationManifest) -> f64 {
    if manifest.duration_samples == 0 {
        return 0.0;
    }
    let of = |s: usize| manifest.utterances.iter().filter(move |u| u.speaker == s);
    let mut both = 0usize;
    for a in of(0) {
        for b in of(1) {
            let lo = a.onset_sample.max(b.onset_sample);
            let hi = a.end_sample().min(b.end_sample());
            both += hi.saturating_sub(lo);
        }
    }
    both as f64 / manifest.duration_samples as f64
}

/// The same ratio measured from per-speaker activity (`|x| > 0`).
pub fn activity_overlap_ratio<T: Real>(clean: &[Vec<T>]) -> f64 {
    let len = clean.iter().map(Vec::len).max().unwrap_or(0);
    if len == 0 || clean.len() < 2 {
        return 0.0;
    }
    let active = |c: &Vec<T>, t: usize| c.get(t).is_some_and(|v| *v != T::zero());
    let both = (0..len).filter(|&t| active(&clean[0], t) && active(&clean[1], t)).count();
    both as f64 / len as f64
}

/// A rendered conversation: the mixture is exactly the sum of `clean`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation<T> {
    pub mixture: AudioBuffer<T>,
    pub clean: Vec<Vec<T>>,
    pub manifest: ConversationManifest,
}

/// Renders the audio described by a manifest.
pub fn render_conversation<T: Real>(manifest: &ConversationManifest) -> Result<Conversation<T>, MixgenError> {
    let len = manifest.duration_samples;
    let mut clean = vec![vec![T::zero(); len]; 2];
    for u in &manifest.utterances {
        if u.speaker > 1 {
            return Err(MixgenError::InvalidSpec(format!("speaker {} in a two-speaker manifest", u.speaker)));
        }
        if u.end_sample() > len {
            return Err(MixgenError::InvalidSpec(format!("utterance ends at {} past {len}", u.end_sample())));
        }
        let gain = T::lit(10f64.powf(u.gain_db / 20.0));
        let samples = synth_samples(u.length_samples, u.seed, manifest.sr, manifest.style);
        for (dst, v) in clean[u.speaker][u.onset_sample..].iter_mut().zip(samples) {
            *dst = *dst + T::lit(v) * gain;
        }
    }
    let mixture: Vec<T> = clean[0].iter().zip(&clean[1]).map(|(&a, &b)| a + b).collect();
    Ok(Conversation {
        mixture: AudioBuffer::mono(mixture, manifest.sr)?,
        clean,
        manifest: manifest.clone(),
    })
}

struct Placement {
    speaker: usize,
    onset: usize,
    length: usize,
    pool_index: usize,
}

/// Greedy placement of alternating utterances. Each new utterance starts no
/// earlier than the previous one and never overlaps its own speaker; among a
/// handful of candidate utterances and onsets, the one bringing the running
/// overlap closest to `target * duration` is kept.
fn plan(pools: [&UtterancePool; 2], spec: &MixtureSpec, rng: &mut ChaCha8Rng) -> Vec<Placement> {
    let sr = f64::from(pools[0].sample_rate);
    let min_len = (spec.min_length_seconds * sr).ceil() as usize;
    let pause = (spec.pause_seconds * sr).round() as usize;
    let r = spec.target_overlap;
    let step = ((sr / 1000.0) as usize).max(1);

    let mut used: [Vec<bool>; 2] = [vec![false; pools[0].utterances.len()], vec![false; pools[1].utterances.len()]];
    let mut placed: Vec<Placement> = Vec::new();
    let mut last_end = [0usize; 2];
    let (mut overlap, mut total) = (0usize, 0usize);

    let done = |placed: &[Placement], overlap: usize, total: usize, slack: f64| {
        placed.len() >= 2 && total >= min_len && (overlap as f64 / total as f64 - r).abs() <= slack
    };
    while placed.len() < spec.max_utterances {
        let halfway = placed.len() >= spec.max_utterances / 2;
        let slack = if r == 0.0 { 0.0 } else if halfway { spec.tolerance } else { spec.tolerance / 2.0 };
        if done(&placed, overlap, total, slack) {
            break;
        }
        let speaker = placed.len() % 2;
        let pool = pools[speaker];
        let free: Vec<usize> = (0..pool.utterances.len()).filter(|&i| !used[speaker][i]).collect();
        if free.is_empty() {
            used[speaker].fill(false);
            continue;
        }
        let take = if r == 0.0 { 1 } else { spec.candidates.min(free.len()) };
        let candidates: Vec<usize> = sample_indices(rng, free.len(), take).into_iter().map(|i| free[i]).collect();

        let choice = match placed.last() {
            None => (candidates[0], 0),
            Some(prev) => {
                let prev_end = prev.onset + prev.length;
                let hi = prev_end + pause;
                if r == 0.0 {
                    (candidates[0], hi)
                } else {
                    let lo = last_end[speaker].max(prev.onset);
                    let mut best = (f64::INFINITY, candidates[0], hi);
                    for &c in &candidates {
                        let len = pool.utterances[c].length_samples;
                        let mut t = hi;
                        loop {
                            let added = prev_end.min(t + len).saturating_sub(t);
                            let new_total = total.max(t + len);
                            let err = ((overlap + added) as f64 - r * new_total as f64).abs();
                            if err < best.0 {
                                best = (err, c, t);
                            }
                            if t == lo {
                                break;
                            }
                            t = t.saturating_sub(step).max(lo);
                        }
                    }
                    (best.1, best.2)
                }
            }
        };
        let (pool_index, onset) = choice;
        let length = pool.utterances[pool_index].length_samples;
        if let Some(prev) = placed.last() {
            overlap += (prev.onset + prev.length).min(onset + length).saturating_sub(onset);
        }
        total = total.max(onset + length);
        last_end[speaker] = onset + length;
        used[speaker][pool_index] = true;
        placed.push(Placement {
            speaker,
            onset,
            length,
            pool_index,
        });
    }
    placed
}

/// Draws one conversation from two speaker pools.
pub fn build_conversation<T: Real>(
    pools: [&UtterancePool; 2],
    spec: &MixtureSpec,
) -> Result<Conversation<T>, MixgenError> {
    let manifest = plan_conversation(pools, spec)?;
    render_conversation(&manifest)
}

/// The manifest of [`build_conversation`] without rendering any audio.
pub fn plan_conversation(pools: [&UtterancePool; 2], spec: &MixtureSpec) -> Result<ConversationManifest, MixgenError> {
    if !(0.0..=1.0).contains(&spec.target_overlap) {
        return Err(MixgenError::OverlapRange(spec.target_overlap));
    }
    for (s, p) in pools.iter().enumerate() {
        if p.utterances.is_empty() {
            return Err(MixgenError::EmptyPool(s));
        }
    }
    if pools[0].sample_rate != pools[1].sample_rate {
        return Err(AudioError::SampleRateMismatch {
            expected: pools[0].sample_rate,
            found: pools[1].sample_rate,
        }
        .into());
    }
    let (g_lo, g_hi) = spec.gain_db_range;
    if !(g_lo <= g_hi) {
        return Err(MixgenError::InvalidSpec(format!("gain range {g_lo}..{g_hi}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let placements = plan(pools, spec, &mut rng);
    let utterances: Vec<UtteranceRecord> = placements
        .iter()
        .map(|p| UtteranceRecord {
            speaker: p.speaker,
            onset_sample: p.onset,
            length_samples: p.length,
            gain_db: if g_lo == g_hi { g_lo } else { rng.gen_range(g_lo..=g_hi) },
            seed: pools[p.speaker].utterances[p.pool_index].seed,
        })
        .collect();
    let mut manifest = ConversationManifest {
        id: format!("conv-{:016x}", spec.seed),
        sr: pools[0].sample_rate,
        duration_samples: utterances.iter().map(UtteranceRecord::end_sample).max().unwrap_or(0),
        target_overlap: spec.target_overlap,
        realized_overlap: 0.0,
        style: pools[0].style,
        utterances,
    };
    manifest.realized_overlap = overlap_ratio(&manifest);
    if (manifest.realized_overlap - spec.target_overlap).abs() > spec.tolerance {
        return Err(MixgenError::InfeasibleTarget {
            target: spec.target_overlap,
            realized: manifest.realized_overlap,
        });
    }
    Ok(manifest)
}

/// Two-utterance, fully overlapped example in the style of a separation
/// training set: both utterances at least `min_seconds` long and starting
/// together, with overlap ratio at least `floor`.
pub fn plan_fully_overlapped(
    pools: [&UtterancePool; 2],
    min_seconds: f64,
    floor: f64,
    gain_db_range: (f64, f64),
    seed: u64,
) -> Result<ConversationManifest, MixgenError> {
    if !(0.0..=1.0).contains(&floor) {
        return Err(MixgenError::OverlapRange(floor));
    }
    let sr = pools[0].sample_rate;
    let min_len = (min_seconds * f64::from(sr)).ceil() as usize;
    let long_enough = |p: &UtterancePool| -> Vec<UtteranceRef> {
        p.utterances.iter().copied().filter(|u| u.length_samples >= min_len).collect()
    };
    let (a_pool, b_pool) = (long_enough(pools[0]), long_enough(pools[1]));
    if a_pool.is_empty() {
        return Err(MixgenError::EmptyPool(0));
    }
    if b_pool.is_empty() {
        return Err(MixgenError::EmptyPool(1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = a_pool[rng.gen_range(0..a_pool.len())];
    let ratio = |b: &UtteranceRef| {
        a.length_samples.min(b.length_samples) as f64 / a.length_samples.max(b.length_samples) as f64
    };
    let eligible: Vec<&UtteranceRef> = b_pool.iter().filter(|b| ratio(b) >= floor).collect();
    let b = if eligible.is_empty() {
        let best = b_pool.iter().max_by(|x, y| ratio(x).total_cmp(&ratio(y))).expect("nonempty");
        return Err(MixgenError::InfeasibleTarget {
            target: floor,
            realized: ratio(best),
        });
    } else {
        *eligible[rng.gen_range(0..eligible.len())]
    };
    let (g_lo, g_hi) = gain_db_range;
    let utterances: Vec<UtteranceRecord> = [(0, a), (1, b)]
        .into_iter()
        .map(|(speaker, u)| UtteranceRecord {
            speaker,
            onset_sample: 0,
            length_samples: u.length_samples,
            gain_db: rng.gen_range(g_lo..=g_hi),
            seed: u.seed,
        })
        .collect();
    let mut manifest = ConversationManifest {
        id: format!("full-{seed:016x}"),
        sr,
        duration_samples: a.length_samples.max(b.length_samples),
        target_overlap: 1.0,
        realized_overlap: 0.0,
        style: pools[0].style,
        utterances,
    };
    manifest.realized_overlap = overlap_ratio(&manifest);
    Ok(manifest)
}

/// Pools used for conversation `index` of a dataset. They do not depend on
/// the overlap ratio, so every ratio reuses the same utterance material.
pub fn conversation_pools(
    base_seed: u64,
    index: u64,
    sample_rate: u32,
    style: UtteranceStyle,
) -> Result<[UtterancePool; 2], MixgenError> {
    let pool = |speaker: usize| {
        UtterancePool::generate(speaker, 48, (2.0, 5.0), sample_rate, style, derive_seed(base_seed, 1 + speaker as u64, index))
    };
    Ok([pool(0)?, pool(1)?])
}

/// Placement draws tried per dataset conversation before giving up.
pub const PLAN_ATTEMPTS: u64 = 16;

/// Manifest for conversation `index` at one overlap ratio. A draw that
/// misses the tolerance is redrawn with the next derived seed.
pub fn dataset_manifest(
    base_seed: u64,
    target_overlap: f64,
    index: u64,
    sample_rate: u32,
    style: UtteranceStyle,
) -> Result<ConversationManifest, MixgenError> {
    let pools = conversation_pools(base_seed, index, sample_rate, style)?;
    let permille = (target_overlap * 1000.0).round() as u64;
    let plan_seed = derive_seed(base_seed, 16 + permille, index);
    let mut attempt = 0;
    let mut manifest = loop {
        let spec = MixtureSpec::new(target_overlap, derive_seed(plan_seed, 0, attempt));
        match plan_conversation([&pools[0], &pools[1]], &spec) {
            Err(MixgenError::InfeasibleTarget { .. }) if attempt + 1 < PLAN_ATTEMPTS => attempt += 1,
            other => break other?,
        }
    };
    manifest.id = format!("ov{:03}-{index:04}", (target_overlap * 100.0).round() as u32);
    Ok(manifest)
}

/// One line of the dataset index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    /// Manifest path relative to the index file.
    pub manifest: String,
    pub target_overlap: f64,
    pub realized_overlap: f64,
    pub duration_samples: usize,
    pub sr: u32,
}

pub const MIXTURE_FILE: &str = "mixture.wav";

pub fn source_file(speaker: usize) -> String {
    format!("s{}.wav", speaker + 1)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MixgenError + '_ {
    move |source| MixgenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `manifest.json`, the mixture and both clean sources (32-bit float,
/// rendered in `f32` so the files sum exactly) under `dir/<id>/`.
pub fn write_conversation(dir: &Path, manifest: &ConversationManifest) -> Result<IndexEntry, MixgenError> {
    let conv_dir = dir.join(&manifest.id);
    fs::create_dir_all(&conv_dir).map_err(io_err(&conv_dir))?;
    let conv = render_conversation::<f32>(manifest)?;
    write_wav(&conv.mixture, conv_dir.join(MIXTURE_FILE))?;
    for (s, clean) in conv.clean.iter().enumerate() {
        write_wav(&AudioBuffer::mono(clean.clone(), manifest.sr)?, conv_dir.join(source_file(s)))?;
    }
    let path = conv_dir.join("manifest.json");
    fs::write(&path, manifest.to_json()?).map_err(io_err(&path))?;
    Ok(IndexEntry {
        id: manifest.id.clone(),
        manifest: format!("{}/manifest.json", manifest.id),
        target_overlap: manifest.target_overlap,
        realized_overlap: manifest.realized_overlap,
        duration_samples: manifest.duration_samples,
        sr: manifest.sr,
    })
}

/// Generates `per_overlap` conversations per ratio into `dir`, writing an
/// `index.jsonl`. Conversations are rendered in parallel; the output does
/// not depend on the worker count.
pub fn generate_dataset(
    dir: &Path,
    overlaps: &[f64],
    per_overlap: usize,
    seed: u64,
    sample_rate: u32,
    style: UtteranceStyle,
) -> Result<Vec<IndexEntry>, MixgenError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let jobs: Vec<(f64, u64)> = overlaps
        .iter()
        .flat_map(|&o| (0..per_overlap as u64).map(move |i| (o, i)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(overlap, index)| {
            let manifest = dataset_manifest(seed, overlap, index, sample_rate, style)?;
            write_conversation(dir, &manifest)
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_index(&dir.join(INDEX_FILE), &entries)?;
    Ok(entries)
}

pub const INDEX_FILE: &str = "index.jsonl";

pub fn write_index(path: &Path, entries: &[IndexEntry]) -> Result<(), MixgenError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_index(path: &Path) -> Result<Vec<IndexEntry>, MixgenError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    io::BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|line| Ok(serde_json::from_str(&line.map_err(io_err(path))?)?))
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<ConversationManifest, MixgenError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ConversationManifest::from_json(&text)
}
