//! Scale-invariant SDR scoring and report aggregation.
//!
//! `si_sdr` returns `+inf` when the estimate is an exact scaled copy of the
//! target and `-inf` when it is orthogonal to it. Aggregates clamp every
//! per-example value to `±SENTINEL_CAP_DB` so means stay finite.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{dot, energy, Real};

/// Clamp applied to per-example scores before they enter an aggregate.
pub const SENTINEL_CAP_DB: f64 = 100.0;

pub const STD_CONVENTION: &str = "sample (n-1)";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("target is all zeros; SI-SDR is undefined")]
    ZeroTarget,
    #[error("length mismatch: target {target}, estimate {estimate}")]
    LengthMismatch { target: usize, estimate: usize },
    #[error("channel mismatch: {targets} targets, {estimates} estimates")]
    ChannelMismatch { targets: usize, estimates: usize },
    #[error("nothing to aggregate")]
    EmptyGroup,
    #[error("report i/o: {0}")]
    Io(#[from] io::Error),
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn si_sdr<T: Real>(target: &[T], estimate: &[T]) -> Result<T, EvalError> {
    if target.len() != estimate.len() {
        return Err(EvalError::LengthMismatch {
            target: target.len(),
            estimate: estimate.len(),
        });
    }
    let target_energy = energy(target);
    if target_energy == T::zero() {
        return Err(EvalError::ZeroTarget);
    }
    let projection = dot(target, estimate);
    if projection == T::zero() {
        return Ok(T::neg_infinity());
    }
    let alpha = projection / target_energy;
    let (signal, error) = target
        .iter()
        .zip(estimate)
        .fold((T::zero(), T::zero()), |(s, e), (&x, &y)| {
            let scaled = alpha * x;
            let diff = scaled - y;
            (s + scaled * scaled, e + diff * diff)
        });
    if error == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (signal / error).log10())
}

pub fn cap_db<T: Real>(value: T) -> T {
    let cap = T::lit(SENTINEL_CAP_DB);
    value.max(-cap).min(cap)
}

/// Orders score vectors that may contain infinite sentinels: more `+inf`
/// (net of `-inf`) wins, then the sum of finite values.
fn sentinel_key<T: Real>(values: &[T]) -> (i64, T) {
    values.iter().fold((0i64, T::zero()), |(net, sum), &v| {
        if v == T::infinity() {
            (net + 1, sum)
        } else if v == T::neg_infinity() {
            (net - 1, sum)
        } else {
            (net, sum + v)
        }
    })
}

/// Mean of values that may include infinite sentinels. Any net surplus of
/// `+inf` or `-inf` dominates; otherwise the finite values are averaged.
pub fn sentinel_mean<T: Real>(values: &[T]) -> T {
    let (net, sum) = sentinel_key(values);
    let finite = values.iter().filter(|v| v.is_finite()).count();
    match net.cmp(&0) {
        std::cmp::Ordering::Greater => T::infinity(),
        std::cmp::Ordering::Less => T::neg_infinity(),
        std::cmp::Ordering::Equal if finite == 0 => T::zero(),
        std::cmp::Ordering::Equal => sum / T::from_usize_lossy(finite),
    }
}

/// Best channel assignment between targets and estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SiSdrResult<T> {
    /// SI-SDR of target `c` against its assigned estimate.
    pub per_channel: Vec<T>,
    /// `permutation[c]` is the estimate assigned to target `c`.
    pub permutation: Vec<usize>,
    pub mean: T,
}

pub fn pit_si_sdr<T: Real>(
    targets: &[Vec<T>],
    estimates: &[Vec<T>],
) -> Result<SiSdrResult<T>, EvalError> {
    if targets.len() != estimates.len() {
        return Err(EvalError::ChannelMismatch {
            targets: targets.len(),
            estimates: estimates.len(),
        });
    }
    // pairwise table, each pair scored once
    let table: Vec<Vec<T>> = targets
        .iter()
        .map(|t| estimates.iter().map(|e| si_sdr(t, e)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;

    let mut best: Option<(Vec<usize>, Vec<T>, (i64, T))> = None;
    for perm in (0..targets.len()).permutations(targets.len()) {
        let scores: Vec<T> = perm.iter().enumerate().map(|(c, &e)| table[c][e]).collect();
        let key = sentinel_key(&scores);
        let better = match &best {
            None => true,
            Some((_, _, k)) => key.0 > k.0 || (key.0 == k.0 && key.1 > k.1),
        };
        if better {
            best = Some((perm, scores, key));
        }
    }
    let (permutation, per_channel, _) = best.ok_or(EvalError::EmptyGroup)?;
    Ok(SiSdrResult {
        mean: sentinel_mean(&per_channel),
        per_channel,
        permutation,
    })
}

/// PIT SI-SDR of the estimates minus the mean SI-SDR of the unprocessed
/// mixture against each target.
pub fn si_sdr_improvement<T: Real>(
    targets: &[Vec<T>],
    estimates: &[Vec<T>],
    mixture: &[T],
) -> Result<T, EvalError> {
    let separated = pit_si_sdr(targets, estimates)?;
    let baseline: Vec<T> = targets
        .iter()
        .map(|t| si_sdr(t, mixture))
        .collect::<Result<_, _>>()?;
    let baseline = sentinel_mean(&baseline);
    if separated.mean.is_infinite() && baseline.is_infinite() && separated.mean == baseline {
        return Ok(T::zero());
    }
    Ok(separated.mean - baseline)
}

/// How a run's results are grouped into report rows.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    /// Target overlap ratio in per mille.
    pub overlap_permille: u32,
    pub window: usize,
    pub hop: usize,
    pub sample_rate: u32,
    /// `None` means offline (every estimate of a segment used).
    pub n_seg: Option<usize>,
    pub mode: String,
    pub separator: String,
}

impl GroupKey {
    pub fn overlap(&self) -> f64 {
        f64::from(self.overlap_permille) / 1000.0
    }

    pub fn window_seconds(&self) -> f64 {
        self.window as f64 / f64::from(self.sample_rate)
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate)
    }

    pub fn n_seg_label(&self) -> String {
        self.n_seg.map_or_else(|| "offline".to_owned(), |n| n.to_string())
    }
}

pub fn overlap_permille(ratio: f64) -> u32 {
    (ratio * 1000.0).round().max(0.0) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub id: String,
    pub key: GroupKey,
    pub sisdri_db: f64,
}

/// One row of the CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub overlap: f64,
    pub window_s: f64,
    pub hop_s: f64,
    pub n_seg: String,
    pub mode: String,
    pub separator: String,
    pub count: usize,
    pub mean_sisdri_db: f64,
    pub std_sisdri_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub cap_db: f64,
    pub std_convention: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
}

/// Sample mean and sample standard deviation (`n - 1`); zero spread for a
/// single value.
pub fn mean_and_std(values: &[f64]) -> Result<(f64, f64), EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyGroup);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Groups per-example results by key, capping each value first.
pub fn aggregate(results: &[ExampleResult], seed: Option<u64>) -> Result<EvalReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyGroup);
    }
    let mut groups: BTreeMap<&GroupKey, Vec<f64>> = BTreeMap::new();
    for r in results {
        groups.entry(&r.key).or_default().push(cap_db(r.sisdri_db));
    }
    let rows = groups
        .into_iter()
        .map(|(key, values)| {
            let (mean, std) = mean_and_std(&values)?;
            Ok(ReportRow {
                overlap: key.overlap(),
                window_s: key.window_seconds(),
                hop_s: key.hop_seconds(),
                n_seg: key.n_seg_label(),
                mode: key.mode.clone(),
                separator: key.separator.clone(),
                count: values.len(),
                mean_sisdri_db: mean,
                std_sisdri_db: std,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalReport {
        metadata: ReportMetadata {
            cap_db: SENTINEL_CAP_DB,
            std_convention: STD_CONVENTION.to_owned(),
            seed,
        },
        rows,
    })
}

impl EvalReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(io::BufWriter::new(file), self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn key(overlap: f64) -> GroupKey {
        GroupKey {
            overlap_permille: overlap_permille(overlap),
            window: 40000,
            hop: 20000,
            sample_rate: 8000,
            n_seg: None,
            mode: "cross_correlation".into(),
            separator: "identity".into(),
        }
    }

    #[test]
    fn exact_and_scaled_copies_are_infinite() {
        let x = noise(64, 1);
        assert_eq!(si_sdr(&x, &x).unwrap(), f64::INFINITY);
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&x, &doubled).unwrap(), f64::INFINITY);
    }

    #[test]
    fn hand_evaluated_case() {
        // alpha = 1, x_err = [0, -1], ratio 1/1
        assert_eq!(si_sdr(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn sentinels_and_errors() {
        assert_eq!(si_sdr(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(si_sdr(&[0.0, 0.0], &[1.0, 1.0]), Err(EvalError::ZeroTarget)));
        assert!(matches!(
            si_sdr(&[1.0], &[1.0, 2.0]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn swapped_estimates_pick_swap() {
        let a = noise(100, 2);
        let b = noise(100, 3);
        let r = pit_si_sdr(&[a.clone(), b.clone()], &[b, a]).unwrap();
        assert_eq!(r.permutation, vec![1, 0]);
        assert_eq!(r.mean, f64::INFINITY);
    }

    #[test]
    fn pit_matches_brute_force_for_two_channels() {
        for seed in 0..20 {
            let t = vec![noise(50, seed), noise(50, seed + 100)];
            let e = vec![noise(50, seed + 200), noise(50, seed + 300)];
            let straight = (si_sdr(&t[0], &e[0]).unwrap() + si_sdr(&t[1], &e[1]).unwrap()) / 2.0;
            let crossed = (si_sdr(&t[0], &e[1]).unwrap() + si_sdr(&t[1], &e[0]).unwrap()) / 2.0;
            let r = pit_si_sdr(&t, &e).unwrap();
            assert_abs_diff_eq!(r.mean, straight.max(crossed), epsilon = 1e-12);
            assert!(r.mean >= straight && r.mean >= crossed);
        }
    }

    #[test]
    fn mixture_baseline_improvement_is_zero() {
        let a = noise(200, 4);
        let b = noise(200, 5);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let imp = si_sdr_improvement(&[a.clone(), b.clone()], &[mix.clone(), mix.clone()], &mix).unwrap();
        assert_abs_diff_eq!(imp, 0.0, epsilon = 1e-12);
        let perfect = si_sdr_improvement(&[a.clone(), b.clone()], &[a, b], &mix).unwrap();
        assert_eq!(perfect, f64::INFINITY);
        assert_eq!(cap_db(perfect), SENTINEL_CAP_DB);
    }

    #[test]
    fn improvement_matches_direct_formula() {
        let a = noise(300, 6);
        let b = noise(300, 7);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let est = vec![noise(300, 8), noise(300, 9)];
        let direct = |x: &[f64], y: &[f64]| {
            let xx: f64 = x.iter().map(|v| v * v).sum();
            let xy: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            let s = xy * xy / xx;
            10.0 * (s / (yy - s)).log10()
        };
        let straight = (direct(&a, &est[0]) + direct(&b, &est[1])) / 2.0;
        let crossed = (direct(&a, &est[1]) + direct(&b, &est[0])) / 2.0;
        let base = (direct(&a, &mix) + direct(&b, &mix)) / 2.0;
        let imp = si_sdr_improvement(&[a, b], &est, &mix).unwrap();
        assert_abs_diff_eq!(imp, straight.max(crossed) - base, epsilon = 1e-8);
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let results = vec![
            ExampleResult { id: "a".into(), key: key(0.0), sisdri_db: 10.0 },
            ExampleResult { id: "b".into(), key: key(0.0), sisdri_db: 14.0 },
            ExampleResult { id: "c".into(), key: key(0.1), sisdri_db: f64::INFINITY },
        ];
        let report = aggregate(&results, Some(3)).unwrap();
        assert_eq!(report.rows.len(), 2);
        let first = &report.rows[0];
        assert_eq!((first.count, first.mean_sisdri_db), (2, 12.0));
        assert_abs_diff_eq!(first.std_sisdri_db, 8f64.sqrt(), epsilon = 1e-12);
        let single = &report.rows[1];
        assert_eq!((single.count, single.mean_sisdri_db, single.std_sisdri_db), (1, 100.0, 0.0));
        assert_eq!(report.metadata.cap_db, 100.0);
        assert!(aggregate(&[], None).is_err());
    }

    #[test]
    fn table_layout_rows() {
        // overlap ratios x windows x stitch modes, one row per cell
        let mut results = Vec::new();
        for overlap in [0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0] {
            for window_s in [1usize, 3, 5, 15] {
                for mode in ["cross_correlation", "oracle"] {
                    for i in 0..3 {
                        results.push(ExampleResult {
                            id: format!("{i}"),
                            key: GroupKey {
                                window: window_s * 8000,
                                hop: window_s * 4000,
                                mode: mode.into(),
                                ..key(overlap)
                            },
                            sisdri_db: i as f64,
                        });
                    }
                }
            }
        }
        let report = aggregate(&results, None).unwrap();
        assert_eq!(report.rows.len(), 7 * 4 * 2);
        assert!(report.rows.iter().all(|r| r.count == 3 && r.hop_s * 2.0 == r.window_s));
    }

    #[test]
    fn csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let report = aggregate(
            &[ExampleResult { id: "a".into(), key: key(0.4), sisdri_db: 3.0 }],
            None,
        )
        .unwrap();
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "overlap,window_s,hop_s,n_seg,mode,separator,count,mean_sisdri_db,std_sisdri_db"
        );
        assert_eq!(lines.next().unwrap(), "0.4,5.0,2.5,offline,cross_correlation,identity,1,3.0,0.0");
    }

    proptest! {
        #[test]
        fn scale_invariance(seed in any::<u64>(), alpha in 0.01f64..100.0) {
            let x = noise(128, seed);
            let y = noise(128, seed ^ 0xABCD);
            let base = si_sdr(&x, &y).unwrap();
            let scaled: Vec<f64> = y.iter().map(|v| alpha * v).collect();
            prop_assert!((si_sdr(&x, &scaled).unwrap() - base).abs() < 1e-9);
            let scaled_target: Vec<f64> = x.iter().map(|v| alpha * v).collect();
            prop_assert!((si_sdr(&scaled_target, &y).unwrap() - base).abs() < 1e-9);
        }

        #[test]
        fn pit_is_symmetric_in_target_order(seed in any::<u64>()) {
            let t = vec![noise(64, seed), noise(64, seed ^ 1)];
            let e = vec![noise(64, seed ^ 2), noise(64, seed ^ 3)];
            let forward = pit_si_sdr(&t, &e).unwrap().mean;
            let swapped = pit_si_sdr(&[t[1].clone(), t[0].clone()], &e).unwrap().mean;
            prop_assert!((forward - swapped).abs() < 1e-9);
        }
    }
}
