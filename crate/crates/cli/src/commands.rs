use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use css_core::eval::{aggregate, overlap_permille, si_sdr_improvement, EvalReport, ExampleResult, GroupKey};
use css_core::framing::{seconds_to_samples, FramingConfig};
use css_core::mixgen::generate_dataset;
use css_core::pipeline::{run_offline, run_online, FrameTiming, PipelineConfig, SegmentTiming};
use css_core::sweep::{curve_points, run_sweep, write_curves_csv, SegmentSelection, SweepCase, SweepPlan};
use css_core::{read_wav, write_wav, AudioBuffer, CostModel, EmitMode, SeparatorKind, SeparatorSpec};

use crate::dataset::{estimate_paths, limit_per_overlap, load_index, Entry};
use crate::errors::{ConfigError, DataError};
use crate::{plot, EvaluateArgs, GenerateArgs, SeparateArgs, SweepArgs};

pub const RUN_FILE: &str = "run.json";
pub const TIMING_FILE: &str = "timing.json";

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// `shuffle:<kind>` without a seed takes `seed`.
fn parse_separator(spec: &str, seed: u64) -> Result<SeparatorKind> {
    let spec = spec.trim();
    let expanded = match spec.strip_prefix("shuffle:") {
        Some(rest) if rest.split(':').next().is_some_and(|s| s.parse::<u64>().is_err()) => {
            format!("shuffle:{seed}:{rest}")
        }
        _ => spec.to_owned(),
    };
    Ok(expanded.parse()?)
}

fn framing(window_s: f64, hop_s: f64, sample_rate: u32) -> Result<FramingConfig> {
    FramingConfig::from_seconds(window_s, hop_s, sample_rate)
        .with_context(|| format!("window {window_s} s / hop {hop_s} s at {sample_rate} Hz"))
}

fn parse_emit(nseg: &str, framing: &FramingConfig) -> Result<EmitMode> {
    if nseg.trim() == "offline" {
        return Ok(EmitMode::Offline);
    }
    let n: usize = nseg
        .trim()
        .parse()
        .map_err(|_| config_err(format!("--nseg must be `offline` or a count, got {nseg}")))?;
    let max = framing.segments_per_window();
    if !(1..=max).contains(&n) {
        return Err(config_err(format!("--nseg {n} outside 1..={max}")));
    }
    Ok(EmitMode::Online { n_seg: n })
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let overlaps = args
        .overlaps
        .iter()
        .map(|&p| {
            if (0.0..=100.0).contains(&p) {
                Ok(p / 100.0)
            } else {
                Err(config_err(format!("overlap {p}% outside 0..=100")))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let entries = generate_dataset(&args.out, &overlaps, args.per_overlap, args.seed, args.sample_rate, args.style.into())
        .with_context(|| format!("generating into {}", args.out.display()))?;

    let samples: usize = entries.iter().map(|e| e.duration_samples).sum();
    println!(
        "{} conversations, {:.3} h of audio in {}",
        entries.len(),
        samples as f64 / f64::from(args.sample_rate) / 3600.0,
        args.out.display()
    );
    for &target in &overlaps {
        let realized: Vec<f64> = entries
            .iter()
            .filter(|e| e.target_overlap == target)
            .map(|e| e.realized_overlap)
            .collect();
        if realized.is_empty() {
            continue;
        }
        let mean = realized.iter().sum::<f64>() / realized.len() as f64;
        let lo = realized.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = realized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "  target {:5.1}%: realized mean {:6.2}%  min {:6.2}%  max {:6.2}%",
            target * 100.0,
            mean * 100.0,
            lo * 100.0,
            hi * 100.0
        );
    }
    Ok(())
}

/// Settings of a `separate` run, stored next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub window: usize,
    pub hop: usize,
    /// `None` for offline overlap-add.
    pub n_seg: Option<usize>,
    pub mode: String,
    pub separator: String,
    pub channels: usize,
    pub sample_rate: u32,
    pub seed: u64,
    pub inputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct TimingLog<'a> {
    id: &'a str,
    frames: &'a [FrameTiming],
    segments: &'a [SegmentTiming],
}

struct Input {
    id: String,
    mixture: PathBuf,
    entry: Option<Entry>,
}

fn separate_inputs(args: &SeparateArgs) -> Result<(Vec<Input>, Option<u32>)> {
    if let Some(index) = &args.index {
        let entries = load_index(index)?;
        let sr = entries[0].index.sr;
        if let Some(bad) = entries.iter().find(|e| e.index.sr != sr) {
            return Err(DataError(format!("{} is at {} Hz, expected {sr} Hz", bad.index.id, bad.index.sr)).into());
        }
        let inputs = entries
            .into_iter()
            .map(|e| Input {
                id: e.index.id.clone(),
                mixture: e.dir.join(css_core::mixgen::MIXTURE_FILE),
                entry: Some(e),
            })
            .collect();
        return Ok((inputs, Some(sr)));
    }
    let inputs = args
        .input
        .iter()
        .map(|path| {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| config_err(format!("no file name in {}", path.display())))?;
            Ok(Input {
                id,
                mixture: path.clone(),
                entry: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((inputs, None))
}

pub fn separate(args: &SeparateArgs) -> Result<()> {
    let (inputs, index_sr) = separate_inputs(args)?;
    let mut ids: Vec<&str> = inputs.iter().map(|i| i.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(config_err("two inputs share a file name"));
    }
    let sample_rate = match (args.sample_rate, index_sr) {
        (Some(flag), Some(sr)) if flag != sr => {
            return Err(DataError(format!("--sample-rate {flag} but the dataset is at {sr} Hz")).into())
        }
        (Some(sr), _) | (None, Some(sr)) => sr,
        (None, None) => read_wav::<f64>(&inputs[0].mixture)
            .with_context(|| format!("reading {}", inputs[0].mixture.display()))?
            .sample_rate(),
    };
    let framing = framing(args.window, args.hop, sample_rate)?;
    let emit = parse_emit(&args.nseg, &framing)?;
    let chunk = match args.chunk {
        Some(s) => seconds_to_samples(s, sample_rate).context("--chunk")?,
        None => framing.hop(),
    };
    if chunk == 0 {
        return Err(config_err("--chunk must be positive"));
    }
    let kind = parse_separator(&args.separator, args.seed)?;
    let needs_truth = kind.needs_ground_truth() || args.stitch == css_core::StitchMode::Oracle;
    if needs_truth && args.index.is_none() {
        return Err(DataError(format!("{} needs a dataset index for ground truth", args.separator)).into());
    }
    let config = PipelineConfig {
        framing,
        stitch: args.stitch,
        emit,
        sample_rate,
    };
    let spec = SeparatorSpec {
        kind: kind.clone(),
        channels: args.channels,
        sample_rate,
        window: framing.window(),
        timeout_seconds: args.timeout,
    };

    create_dir(&args.out)?;
    let run = RunConfig {
        window_s: args.window,
        hop_s: args.hop,
        window: framing.window(),
        hop: framing.hop(),
        n_seg: match emit {
            EmitMode::Offline => None,
            EmitMode::Online { n_seg } => Some(n_seg),
        },
        mode: args.stitch.label().to_owned(),
        separator: kind.to_string(),
        channels: args.channels,
        sample_rate,
        seed: args.seed,
        inputs: inputs.iter().map(|i| i.id.clone()).collect(),
    };

    let summaries = inputs
        .par_iter()
        .map(|input| -> Result<(f64, f64)> {
            let mixture = read_wav::<f64>(&input.mixture)
                .with_context(|| format!("reading {}", input.mixture.display()))?;
            if mixture.sample_rate() != sample_rate {
                return Err(DataError(format!(
                    "{} is at {} Hz, expected {sample_rate} Hz",
                    input.mixture.display(),
                    mixture.sample_rate()
                ))
                .into());
            }
            let truth = match (&input.entry, needs_truth) {
                (Some(entry), true) => Some(entry.clean(args.channels)?),
                _ => None,
            };
            let mut separator = spec.build(truth.as_ref(), mixture.len())?;
            let out = match emit {
                EmitMode::Offline => run_offline(&mixture, &config, separator.as_mut(), truth.as_ref()),
                EmitMode::Online { .. } => run_online(&mixture, &config, separator.as_mut(), truth.as_ref(), chunk),
            }
            .with_context(|| format!("separating {}", input.id))?;
            drop(separator);

            let dir = args.out.join(&input.id);
            create_dir(&dir)?;
            for (c, path) in estimate_paths(&args.out, &input.id, out.estimates.channels()).iter().enumerate() {
                let channel = AudioBuffer::mono(out.estimates.channel(c), sample_rate)?;
                write_wav(&channel, path).with_context(|| format!("writing {}", path.display()))?;
            }
            let log = TimingLog {
                id: &input.id,
                frames: &out.frame_timings,
                segments: &out.segment_timings,
            };
            write_file(&dir.join(TIMING_FILE), serde_json::to_string_pretty(&log)?)?;
            let processing: f64 = out.frame_timings.iter().map(|t| t.processing_seconds).sum();
            let worst = out
                .segment_timings
                .iter()
                .map(|s| s.total_latency_seconds)
                .fold(0.0, f64::max);
            Ok((processing / out.frame_timings.len().max(1) as f64, worst))
        })
        .collect::<Result<Vec<_>>>()?;
    write_file(&args.out.join(RUN_FILE), serde_json::to_string_pretty(&run)?)?;

    let mean_proc = summaries.iter().map(|s| s.0).sum::<f64>() / summaries.len() as f64;
    let worst = summaries.iter().map(|s| s.1).fold(0.0, f64::max);
    println!(
        "{} conversations -> {}; n_seg {}, algorithmic latency {:.3} s, mean t_proc {:.3} ms, worst total latency {:.3} s",
        summaries.len(),
        args.out.display(),
        run.n_seg.map_or_else(|| "offline".to_owned(), |n| n.to_string()),
        config.n_seg() as f64 * framing.hop() as f64 / f64::from(sample_rate),
        mean_proc * 1e3,
        worst
    );
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!(
        "{:>8} {:>8} {:>6} {:>8} {:>18} {:>6} {:>10} {:>8}",
        "overlap", "window", "hop", "n_seg", "mode", "count", "SI-SDRi", "std"
    );
    for r in &report.rows {
        println!(
            "{:>8.2} {:>8.2} {:>6.2} {:>8} {:>18} {:>6} {:>10.3} {:>8.3}",
            r.overlap, r.window_s, r.hop_s, r.n_seg, r.mode, r.count, r.mean_sisdri_db, r.std_sisdri_db
        );
    }
}

fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    report.write_csv(dir.join("report.csv"))?;
    report.write_json(dir.join("report.json"))?;
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let entries = load_index(&args.index)?;
    let run_path = args.estimates.join(RUN_FILE);
    let run: Option<RunConfig> = if run_path.exists() {
        let text = fs::read_to_string(&run_path).with_context(|| format!("reading {}", run_path.display()))?;
        Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", run_path.display()))?)
    } else {
        None
    };

    let results = entries
        .par_iter()
        .map(|entry| -> Result<ExampleResult> {
            let id = &entry.index.id;
            let mixture = entry.mixture()?;
            let clean = entry.clean(run.as_ref().map_or(2, |r| r.channels))?;
            let estimates = estimate_paths(&args.estimates, id, clean.source_count())
                .iter()
                .map(|path| {
                    if !path.exists() {
                        return Err(DataError(format!("missing estimate {} for {id}", path.display())).into());
                    }
                    Ok(read_wav::<f64>(path)?.into_samples())
                })
                .collect::<Result<Vec<_>>>()?;
            let sisdri = si_sdr_improvement(clean.sources(), &estimates, mixture.samples())
                .with_context(|| format!("scoring {id}"))?;
            Ok(ExampleResult {
                id: id.clone(),
                key: GroupKey {
                    overlap_permille: overlap_permille(entry.index.target_overlap),
                    window: run.as_ref().map_or(0, |r| r.window),
                    hop: run.as_ref().map_or(0, |r| r.hop),
                    sample_rate: entry.index.sr,
                    n_seg: run.as_ref().and_then(|r| r.n_seg),
                    mode: run.as_ref().map_or_else(|| "none".to_owned(), |r| r.mode.clone()),
                    separator: run.as_ref().map_or_else(|| "unknown".to_owned(), |r| r.separator.clone()),
                },
                sisdri_db: sisdri,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = aggregate(&results, args.seed.or(run.as_ref().map(|r| r.seed)))?;
    let out = args.out.clone().unwrap_or_else(|| args.estimates.clone());
    write_report(&report, &out)?;
    print_report(&report);
    Ok(())
}

fn segment_selection(nseg: &str) -> Result<SegmentSelection> {
    Ok(match nseg.trim() {
        "all" => SegmentSelection::All,
        "offline" => SegmentSelection::Offline,
        list => SegmentSelection::List(
            list.split(',')
                .map(|s| s.trim().parse::<usize>().ok().filter(|&n| n > 0))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| config_err(format!("--nseg must be all, offline or a list of counts, got {nseg}")))?,
        ),
    })
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let entries = limit_per_overlap(load_index(&args.index)?, args.limit);
    if entries.is_empty() {
        return Err(DataError("no conversations selected".into()).into());
    }
    let sample_rate = entries[0].index.sr;
    if let Some(bad) = entries.iter().find(|e| e.index.sr != sample_rate) {
        return Err(DataError(format!("{} is at {} Hz, expected {sample_rate} Hz", bad.index.id, bad.index.sr)).into());
    }
    let framings = args
        .windows
        .iter()
        .map(|&w| {
            let hop = match (args.hop, args.hop_fraction) {
                (Some(h), _) => h,
                (None, Some(f)) => w * f,
                (None, None) => w / 2.0,
            };
            framing(w, hop, sample_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    let segments = segment_selection(&args.nseg)?;
    if let SegmentSelection::List(list) = &segments {
        for f in &framings {
            if let Some(n) = list.iter().find(|&&n| n > f.segments_per_window()) {
                return Err(config_err(format!(
                    "n_seg {n} exceeds W/H = {} for a {} sample window",
                    f.segments_per_window(),
                    f.window()
                )));
            }
        }
    }
    let cost = match &args.cost_model {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<CostModel>(&text)
                .map_err(|e| config_err(format!("cost model {}: {e}", path.display())))?
        }
        None => CostModel::default(),
    };
    let plan = SweepPlan {
        sample_rate,
        framings,
        segments,
        modes: args.modes.clone(),
        separator: parse_separator(&args.separator, args.seed)?,
        channels: args.channels,
        timeout_seconds: args.timeout,
    };

    let cases = entries
        .par_iter()
        .map(|e| -> Result<SweepCase<f64>> {
            Ok(SweepCase {
                id: e.index.id.clone(),
                target_overlap: e.index.target_overlap,
                mixture: e.mixture()?,
                truth: e.clean(args.channels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let results = run_sweep(&cases, &plan)?;
    let report = aggregate(&results, Some(args.seed))?;
    write_report(&report, &args.out)?;
    let curves = curve_points(&report, &cost)?;
    write_curves_csv(&curves, args.out.join("curves.csv"))?;
    write_file(&args.out.join("curves.svg"), plot::render(&curves))?;
    print_report(&report);
    println!("{} conversations, {} report rows, {} curve points -> {}", cases.len(), report.rows.len(), curves.len(), args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_takes_the_run_seed_when_unseeded() {
        assert_eq!(
            parse_separator("shuffle:oracle_source", 9).unwrap(),
            SeparatorKind::Shuffle {
                inner: Box::new(SeparatorKind::OracleSource),
                seed: 9
            }
        );
        assert_eq!(
            parse_separator("shuffle:3:identity", 9).unwrap(),
            SeparatorKind::Shuffle {
                inner: Box::new(SeparatorKind::Identity),
                seed: 3
            }
        );
    }

    #[test]
    fn nseg_is_checked_against_the_window() {
        let f = FramingConfig::new(10, 2).unwrap();
        assert_eq!(parse_emit("offline", &f).unwrap(), EmitMode::Offline);
        assert_eq!(parse_emit("5", &f).unwrap(), EmitMode::Online { n_seg: 5 });
        assert!(parse_emit("6", &f).is_err());
        assert!(parse_emit("0", &f).is_err());
        assert!(parse_emit("two", &f).is_err());
    }

    #[test]
    fn segment_lists() {
        assert_eq!(segment_selection("all").unwrap(), SegmentSelection::All);
        assert_eq!(segment_selection("1, 3").unwrap(), SegmentSelection::List(vec![1, 3]));
        assert!(segment_selection("1,0").is_err());
    }
}
