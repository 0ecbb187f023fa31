//! Grid runs over window, hop, `n_seg` and stitch mode, scored with SI-SDRi.
//!
//! For each conversation and window the separator and the aligner run once;
//! every `n_seg` is then produced from the same aligned frames.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::eval::{overlap_permille, si_sdr_improvement, EvalError, EvalReport, ExampleResult, GroupKey};
use crate::framing::FramingConfig;
use crate::pipeline::{separate_and_align, PipelineError};
use crate::scalar::Real;
use crate::scheduler::{emit_all, predict_cost, CostModel, ScheduleError};
use crate::separator::{GroundTruth, SeparatorError, SeparatorKind, SeparatorSpec};
use crate::stitcher::{overlap_add, StitchConfig, StitchMode};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("conversation {id}: {source}")]
    Pipeline { id: String, source: PipelineError },
    #[error("conversation {id}: {source}")]
    Eval { id: String, source: EvalError },
    #[error(transparent)]
    Separator(#[from] SeparatorError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Report(#[from] EvalError),
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Which emission settings to score for each window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentSelection {
    /// Whole-window overlap-add only.
    Offline,
    /// `n_seg = 1..=W/H`.
    All,
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub sample_rate: u32,
    pub framings: Vec<FramingConfig>,
    pub segments: SegmentSelection,
    pub modes: Vec<StitchMode>,
    pub separator: SeparatorKind,
    pub channels: usize,
    pub timeout_seconds: f64,
}

impl SweepPlan {
    fn n_segs(&self, framing: &FramingConfig) -> Vec<Option<usize>> {
        match &self.segments {
            SegmentSelection::Offline => vec![None],
            SegmentSelection::All => (1..=framing.segments_per_window()).map(Some).collect(),
            SegmentSelection::List(list) => list.iter().copied().map(Some).collect(),
        }
    }

    fn spec(&self, framing: &FramingConfig) -> SeparatorSpec {
        SeparatorSpec {
            kind: self.separator.clone(),
            channels: self.channels,
            sample_rate: self.sample_rate,
            window: framing.window(),
            timeout_seconds: self.timeout_seconds,
        }
    }
}

/// One conversation with its ground truth.
#[derive(Debug, Clone)]
pub struct SweepCase<T> {
    pub id: String,
    pub target_overlap: f64,
    pub mixture: AudioBuffer<T>,
    pub truth: GroundTruth<T>,
}

/// Every cell of the grid for one conversation, in plan order.
pub fn run_case<T: Real>(case: &SweepCase<T>, plan: &SweepPlan) -> Result<Vec<ExampleResult>, SweepError> {
    let pipeline_err = |source: PipelineError| SweepError::Pipeline { id: case.id.clone(), source };
    let eval_err = |source: EvalError| SweepError::Eval { id: case.id.clone(), source };
    let len = case.mixture.len();
    let mixture = case.mixture.samples();
    let mut results = Vec::new();
    for framing in &plan.framings {
        for &mode in &plan.modes {
            let stitch = StitchConfig {
                framing: *framing,
                mode,
                sample_rate: plan.sample_rate,
            };
            let mut separator = plan.spec(framing).build(Some(&case.truth), len)?;
            let (aligned, _, _) =
                separate_and_align(&case.mixture, &stitch, separator.as_mut(), Some(&case.truth)).map_err(pipeline_err)?;
            drop(separator);
            for n_seg in plan.n_segs(framing) {
                let estimates = match n_seg {
                    None => overlap_add(&aligned, len, &stitch)
                        .map_err(|e| pipeline_err(e.into()))?
                        .to_channels(),
                    Some(n) => emit_all(&aligned, *framing, n, len).map_err(|e| pipeline_err(e.into()))?,
                };
                let sisdri = si_sdr_improvement(case.truth.sources(), &estimates, mixture).map_err(eval_err)?;
                results.push(ExampleResult {
                    id: case.id.clone(),
                    key: GroupKey {
                        overlap_permille: overlap_permille(case.target_overlap),
                        window: framing.window(),
                        hop: framing.hop(),
                        sample_rate: plan.sample_rate,
                        n_seg,
                        mode: mode.label().to_owned(),
                        separator: plan.separator.to_string(),
                    },
                    sisdri_db: sisdri.to_f64_lossy(),
                });
            }
        }
    }
    Ok(results)
}

/// Runs all cases on the current rayon pool; results keep case order.
pub fn run_sweep<T: Real>(cases: &[SweepCase<T>], plan: &SweepPlan) -> Result<Vec<ExampleResult>, SweepError> {
    let per_case = cases
        .par_iter()
        .map(|case| run_case(case, plan))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_case.into_iter().flatten().collect())
}

/// One point of a latency / quality curve, with the predicted cost of the
/// window that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub overlap: f64,
    pub window_s: f64,
    pub hop_s: f64,
    pub n_seg: usize,
    pub latency_s: f64,
    pub mode: String,
    pub separator: String,
    pub count: usize,
    pub mean_sisdri_db: f64,
    pub std_sisdri_db: f64,
    pub gflops: f64,
    pub memory_gb: f64,
}

/// Turns the online rows of a report into curves; offline rows are skipped.
pub fn curve_points(report: &EvalReport, cost: &CostModel) -> Result<Vec<CurvePoint>, SweepError> {
    report
        .rows
        .iter()
        .filter_map(|row| row.n_seg.parse::<usize>().ok().map(|n| (row, n)))
        .map(|(row, n_seg)| {
            let predicted = predict_cost(row.window_s, cost)?;
            Ok(CurvePoint {
                overlap: row.overlap,
                window_s: row.window_s,
                hop_s: row.hop_s,
                n_seg,
                latency_s: n_seg as f64 * row.hop_s,
                mode: row.mode.clone(),
                separator: row.separator.clone(),
                count: row.count,
                mean_sisdri_db: row.mean_sisdri_db,
                std_sisdri_db: row.std_sisdri_db,
                gflops: predicted.flops / 1e9,
                memory_gb: predicted.memory_bytes / 1e9,
            })
        })
        .collect()
}

pub fn write_curves_csv(points: &[CurvePoint], path: impl AsRef<Path>) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| SweepError::Csv(e.into()))?;
    Ok(())
}
