//! Parallel protocol sweeps with a resumable JSONL checkpoint.
//!
//! Configs are dealt to workers by index (worker `w` takes every config with
//! `index % workers == w`). Finished records stream to the checkpoint file in
//! completion order; when the sweep ends the file is rewritten in config
//! order, so the final bytes do not depend on the worker count.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{analyze, cluster_exit_sites, ExitPoint, ReentryEvent, RiskZone};
use crate::engine::{simulate, EngineParams};
use crate::protocol::{build_schedule, enumerate_configs, ProtocolError, ProtocolSpec, SweepConfig};
use crate::restitution::{apply_beta_blocker, RestitutionSet};
use crate::voxel::DigitalTwin;

/// Checkpoint lines are fsynced in batches of this size.
pub const FSYNC_BATCH: usize = 50;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("twin is not preprocessed")]
    NotPreprocessed,
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    BetaBlocker,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    #[serde(flatten)]
    pub config: SweepConfig,
    pub effective: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub reentry: Option<ReentryEvent>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub workers: usize,
    /// JSONL file receiving one record per finished config.
    pub checkpoint: Option<PathBuf>,
    /// Reuse records already present in the checkpoint.
    pub resume: bool,
}

impl SweepOptions {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub scenario: Scenario,
    pub workers: usize,
    /// One record per config, ordered by config index.
    pub records: Vec<SweepRecord>,
    /// Records taken over from the checkpoint.
    pub resumed: usize,
    pub wall_clock_s: f64,
}

fn simulate_config(
    twin: &DigitalTwin,
    set: &RestitutionSet,
    spec: &ProtocolSpec,
    params: &EngineParams,
    config: &SweepConfig,
) -> SweepRecord {
    let failed = |e: String| SweepRecord {
        config: *config,
        effective: false,
        error: Some(e),
        reentry: None,
    };
    let schedule = match build_schedule(config, spec) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    let scaled = set.scaled(config.apd_factor, config.cv_factor);
    match simulate(twin, &scaled, &schedule, params) {
        Ok(result) => SweepRecord {
            config: *config,
            effective: result.effective,
            error: None,
            reentry: analyze(&result, twin, schedule.last_time(), scaled.apd_max_global()),
        },
        Err(e) => failed(e.to_string()),
    }
}

fn read_checkpoint(
    path: &Path,
    configs: &[SweepConfig],
) -> Result<BTreeMap<usize, SweepRecord>, SweepError> {
    let mut done = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(e.into()),
    };
    let bad = |message: String| SweepError::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SweepRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            // a torn final line from an interrupted run
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(bad(format!("line {}: {e}", i + 1))),
        };
        let idx = rec.config.config_index;
        if configs.get(idx) != Some(&rec.config) {
            return Err(bad(format!(
                "line {}: config {idx} does not match the protocol",
                i + 1
            )));
        }
        done.insert(idx, rec);
    }
    Ok(done)
}

fn write_sorted(path: &Path, records: &[SweepRecord]) -> Result<(), SweepError> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Writes records as JSONL in the given order.
pub fn write_records(records: &[SweepRecord], mut w: impl Write) -> Result<(), SweepError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<SweepRecord>, SweepError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Simulates and analyzes every config of `spec`. Failing configs are
/// recorded as non-effective; they never abort the sweep.
pub fn run_sweep(
    twin: &DigitalTwin,
    set: &RestitutionSet,
    spec: &ProtocolSpec,
    params: &EngineParams,
    scenario: Scenario,
    opts: &SweepOptions,
) -> Result<SweepRun, SweepError> {
    if !twin.is_preprocessed() {
        return Err(SweepError::NotPreprocessed);
    }
    if opts.workers == 0 {
        return Err(SweepError::NoWorkers);
    }
    spec.validate()?;
    let start = Instant::now();
    let configs = enumerate_configs(spec)?;
    let mut params = *params;
    params.t_end_ms = spec.t_end_ms;

    let mut done = match (&opts.checkpoint, opts.resume) {
        (Some(path), true) => read_checkpoint(path, &configs)?,
        _ => BTreeMap::new(),
    };
    let resumed = done.len();
    let todo: Vec<&SweepConfig> = configs
        .iter()
        .filter(|c| !done.contains_key(&c.config_index))
        .collect();

    let mut sink = match &opts.checkpoint {
        Some(path) => {
            // rewrite what was kept so torn lines do not linger
            let kept: Vec<SweepRecord> = done.values().cloned().collect();
            write_sorted(path, &kept)?;
            Some(OpenOptions::new().append(true).open(path)?)
        }
        None => None,
    };

    let workers = opts.workers.min(todo.len().max(1));
    let (tx, rx) = mpsc::channel::<SweepRecord>();
    std::thread::scope(|scope| -> Result<(), SweepError> {
        for w in 0..workers {
            let tx = tx.clone();
            let mine: Vec<&SweepConfig> = todo.iter().skip(w).step_by(workers).copied().collect();
            let params = &params;
            scope.spawn(move || {
                for c in mine {
                    if tx.send(simulate_config(twin, set, spec, params, c)).is_err() {
                        return;
                    }
                }
            });
        }
        drop(tx);
        let mut unsynced = 0;
        for rec in rx {
            if let Some(f) = sink.as_mut() {
                let mut line = serde_json::to_vec(&rec)?;
                line.push(b'\n');
                f.write_all(&line)?;
                unsynced += 1;
                if unsynced == FSYNC_BATCH {
                    f.sync_data()?;
                    unsynced = 0;
                }
            }
            done.insert(rec.config.config_index, rec);
        }
        Ok(())
    })?;

    let records: Vec<SweepRecord> = done.into_values().collect();
    debug_assert_eq!(records.len(), configs.len());
    if let Some(path) = &opts.checkpoint {
        drop(sink);
        write_sorted(path, &records)?;
    }
    Ok(SweepRun {
        scenario,
        workers: opts.workers,
        records,
        resumed,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveConfig {
    pub config_index: usize,
    pub pacing_site_id: u32,
    pub reentry: ReentryEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub scenario: Scenario,
    pub total_configs: usize,
    pub effective_count: usize,
    pub positive_count: usize,
    /// Positives among configs with both factors at 1.
    pub positive_baseline: usize,
    pub reentries: Vec<PositiveConfig>,
    pub zones: Vec<RiskZone>,
    /// Not serialized, so summaries compare equal across machines.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

/// Counts, reentry list and exit-site zones of a finished sweep.
pub fn summarize(
    run: &SweepRun,
    twin: &DigitalTwin,
    cluster_radius_mm: f64,
) -> Result<PatientSummary, SweepError> {
    let effective: Vec<&SweepRecord> = run.records.iter().filter(|r| r.effective).collect();
    let reentries: Vec<PositiveConfig> = effective
        .iter()
        .filter_map(|r| {
            r.reentry.as_ref().map(|ev| PositiveConfig {
                config_index: r.config.config_index,
                pacing_site_id: r.config.pacing_site_id,
                reentry: ev.clone(),
            })
        })
        .collect();
    let positive_baseline = reentries
        .iter()
        .filter(|p| run.records[p.config_index].config.is_baseline())
        .count();
    let exits: Vec<ExitPoint> = reentries
        .iter()
        .filter_map(|p| p.reentry.exit_node)
        .map(|node| ExitPoint {
            position_mm: twin.grid.position_mm(node as usize),
            aha_segment: twin.segment(node as usize),
        })
        .collect();
    Ok(PatientSummary {
        scenario: run.scenario,
        total_configs: run.records.len(),
        effective_count: effective.len(),
        positive_count: reentries.len(),
        positive_baseline,
        zones: cluster_exit_sites(&exits, cluster_radius_mm)?,
        reentries,
        wall_clock_s: run.wall_clock_s,
    })
}

/// Repeats the sweep with beta-blocker scaling applied to `set`.
pub fn run_beta_blocker_followup(
    twin: &DigitalTwin,
    set: &RestitutionSet,
    spec: &ProtocolSpec,
    params: &EngineParams,
    opts: &SweepOptions,
    cluster_radius_mm: f64,
) -> Result<PatientSummary, SweepError> {
    let run = run_sweep(
        twin,
        &apply_beta_blocker(set),
        spec,
        params,
        Scenario::BetaBlocker,
        opts,
    )?;
    summarize(&run, twin, cluster_radius_mm)
}
