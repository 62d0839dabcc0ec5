//! Event-driven anisotropic cellular-automaton propagation.
//!
//! Events are (time, target, source) triples popped in that lexicographic
//! order. An event activates its target when the target is excitable tissue
//! and its diastolic interval has reached the curve's `di_min`. Activation
//! sets the node's APD (restitution, then electrotonic blending with
//! depolarized neighbors) and CV (restitution, then memory) and schedules
//! arrivals at every neighbor after `distance / edge_speed`.
//!
//! A wavefront that meets refractory tissue is extinguished there: an arrival
//! within `block_window_ms` after a refractory rejection at the same node is
//! rejected too, so the delayed tail of a blocked front cannot re-excite the
//! node the moment it recovers.
//!
//! Arrivals that are certain to be rejected are not queued, and for each node
//! only the earliest arrival that is certain to activate it is kept. Both
//! shortcuts give the same log as queueing everything; they are used only
//! when the parameters prove it (edge delay plus block window shorter than
//! the shortest refractory period).

mod kernels;

pub use kernels::{cv_with_memory, edge_speed, electrotonic_apd};

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::StimulusSchedule;
use crate::restitution::{ApdCurve, CvCurve, RestitutionError, RestitutionSet};
use crate::voxel::DigitalTwin;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("twin is missing {0}; run preprocessing first")]
    NotPreprocessed(&'static str),
    #[error("pacing site {0} is not defined on the twin")]
    UnknownSite(u32),
    #[error("invalid engine parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Restitution(#[from] RestitutionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    Six,
    TwentySix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    /// Longitudinal over transverse speed.
    pub anisotropy_ratio: f64,
    pub electrotonic_weight: f64,
    pub cv_memory_weight: f64,
    pub t_end_ms: f64,
    pub capture_radius_mm: f64,
    pub neighborhood: Neighborhood,
    /// Stop as soon as one stimulus fails to capture; the result is then
    /// non-effective and its log truncated.
    pub stop_on_capture_failure: bool,
    /// How long a node keeps rejecting arrivals after a refractory rejection.
    pub block_window_ms: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            anisotropy_ratio: 2.5,
            electrotonic_weight: 0.85,
            cv_memory_weight: 0.05,
            t_end_ms: 6000.0,
            capture_radius_mm: 2.0,
            neighborhood: Neighborhood::TwentySix,
            stop_on_capture_failure: true,
            block_window_ms: 20.0,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        let unit = 0.0..=1.0;
        if !(self.anisotropy_ratio >= 1.0) {
            return Err(EngineError::InvalidParams("anisotropy_ratio must be >= 1".into()));
        }
        if !unit.contains(&self.electrotonic_weight) || !unit.contains(&self.cv_memory_weight) {
            return Err(EngineError::InvalidParams("weights must lie in [0, 1]".into()));
        }
        if !(self.block_window_ms >= 0.0) || !self.block_window_ms.is_finite() {
            return Err(EngineError::InvalidParams("block_window_ms must be >= 0".into()));
        }
        if !(self.t_end_ms > 0.0) || !(self.capture_radius_mm >= 0.0) {
            return Err(EngineError::InvalidParams(
                "t_end and capture radius must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// What caused an activation. Stimuli order before nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Index into the stimulus schedule.
    Stimulus(u32),
    Node(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t_ms: f64,
    pub node: u32,
    pub source: Source,
    /// APD assigned at this activation.
    pub apd_ms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub events_queued: u64,
    pub events_processed: u64,
    pub activations: u64,
    pub refractory_rejections: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub effective: bool,
    /// One flag per programmed stimulus.
    pub captured: Vec<bool>,
    /// Sorted by (time, node, source).
    pub log: Vec<LogRecord>,
    pub counters: Counters,
    /// False when the run stopped early on a capture failure.
    pub completed: bool,
}

impl SimulationResult {
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for rec in &self.log {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    target: u32,
    source: Source,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.target.cmp(&other.target))
            .then(self.source.cmp(&other.source))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Offset {
    d: [i64; 3],
    dir: [f64; 3],
    dist: f64,
}

fn offsets(spacing: [f64; 3], hood: Neighborhood) -> Vec<Offset> {
    let mut out = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let manhattan = dx.abs() + dy.abs() + dz.abs();
                if manhattan == 0 || (hood == Neighborhood::Six && manhattan != 1) {
                    continue;
                }
                let v = [
                    dx as f64 * spacing[0],
                    dy as f64 * spacing[1],
                    dz as f64 * spacing[2],
                ];
                let dist = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                out.push(Offset {
                    d: [dx, dy, dz],
                    dir: [v[0] / dist, v[1] / dist, v[2] / dist],
                    dist,
                });
            }
        }
    }
    out
}

/// Excitable voxels within `radius_mm` of the site voxel center.
pub fn capture_region(twin: &DigitalTwin, site_voxel: [usize; 3], radius_mm: f64) -> Vec<usize> {
    let g = &twin.grid;
    let center = g.position_mm(g.index(site_voxel[0], site_voxel[1], site_voxel[2]));
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let r = (radius_mm / g.spacing_mm[a]).floor() as usize;
        lo[a] = site_voxel[a].saturating_sub(r);
        hi[a] = (site_voxel[a] + r).min(g.dims[a] - 1);
    }
    let mut out = Vec::new();
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let v = g.index(i, j, k);
                if g.labels[v].is_excitable()
                    && crate::voxel::dist(g.position_mm(v), center) <= radius_mm + 1e-9
                {
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Simulates one stimulus schedule. A pacing site without excitable tissue in
/// its capture region yields a non-effective result with an empty log.
pub fn simulate(
    twin: &DigitalTwin,
    set: &RestitutionSet,
    schedule: &StimulusSchedule,
    params: &EngineParams,
) -> Result<SimulationResult, EngineError> {
    params.validate()?;
    let site = twin
        .site(schedule.site_id)
        .ok_or(EngineError::UnknownSite(schedule.site_id))?;
    let capture = capture_region(twin, site.center_voxel, params.capture_radius_mm);
    simulate_region(twin, set, &schedule.times_ms, &capture, params)
}

/// Like [`simulate`], with every stimulus applied to an explicit voxel set.
pub fn simulate_region(
    twin: &DigitalTwin,
    set: &RestitutionSet,
    times_ms: &[f64],
    region: &[usize],
    params: &EngineParams,
) -> Result<SimulationResult, EngineError> {
    run(twin, set, times_ms, region, params, true)
}

fn run(
    twin: &DigitalTwin,
    set: &RestitutionSet,
    times_ms: &[f64],
    region: &[usize],
    params: &EngineParams,
    allow_prune: bool,
) -> Result<SimulationResult, EngineError> {
    params.validate()?;
    let layers = twin.layers.as_ref().ok_or(EngineError::NotPreprocessed("layers"))?;
    let fibers = twin.fibers.as_ref().ok_or(EngineError::NotPreprocessed("fibers"))?;
    if !times_ms.windows(2).all(|w| w[0] < w[1]) {
        return Err(EngineError::InvalidParams("stimulus times must increase".into()));
    }
    if times_ms.last().is_some_and(|&t| t >= params.t_end_ms) {
        return Err(EngineError::InvalidParams(
            "t_end must exceed the last stimulus time".into(),
        ));
    }
    let grid = &twin.grid;
    let n = grid.len();
    let n_stim = times_ms.len();

    let capture: Vec<usize> = region
        .iter()
        .copied()
        .filter(|&v| grid.labels[v].is_excitable())
        .collect();
    if capture.is_empty() {
        return Ok(SimulationResult {
            effective: false,
            captured: vec![false; n_stim],
            log: Vec::new(),
            counters: Counters::default(),
            completed: true,
        });
    }

    // per-node curves, indexed into small tables
    let mut apd_curves: Vec<ApdCurve> = Vec::new();
    let mut cv_curves: Vec<CvCurve> = Vec::new();
    let mut apd_of = vec![u8::MAX; n];
    let mut cv_of = vec![u8::MAX; n];
    for v in 0..n {
        let label = grid.labels[v];
        if !label.is_excitable() {
            continue;
        }
        let a = *set.apd_curve(label, layers[v])?;
        let c = *set.cv_curve(label)?;
        apd_of[v] = intern(&mut apd_curves, a);
        cv_of[v] = intern(&mut cv_curves, c);
    }
    let fiber: Vec<[f64; 3]> = fibers
        .iter()
        .map(|f| [f[0] as f64, f[1] as f64, f[2] as f64])
        .collect();
    let hood = offsets(grid.spacing_mm, params.neighborhood);

    let k = params.anisotropy_ratio;
    let tau = params.block_window_ms;
    let min_refractory = apd_curves
        .iter()
        .map(|c| set.apd_factor * c.eval(c.di_min_ms))
        .fold(f64::INFINITY, f64::min)
        + apd_curves.iter().map(|c| c.di_min_ms).fold(f64::INFINITY, f64::min);
    let min_cv = cv_curves
        .iter()
        .map(|c| set.cv_factor * c.eval(c.di_min_ms))
        .fold(f64::INFINITY, f64::min);
    let max_delay = hood.iter().map(|o| o.dist).fold(0.0, f64::max) * k / min_cv;
    let prune = allow_prune && max_delay + tau < min_refractory;
    // latest refractory rejection per node, including ones not queued
    let mut rmax = vec![f64::NEG_INFINITY; n];
    let mut last = vec![f64::NEG_INFINITY; n];
    let mut apd = vec![0.0f64; n];
    let mut prev_cv = vec![f64::NAN; n];
    let mut pending: Vec<(f64, Source)> = vec![(f64::INFINITY, Source::Node(u32::MAX)); n];

    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut counters = Counters::default();
    for (s, &t) in times_ms.iter().enumerate() {
        for &v in &capture {
            heap.push(Reverse(Event {
                time: t,
                target: v as u32,
                source: Source::Stimulus(s as u32),
            }));
            counters.events_queued += 1;
        }
    }
    let mut outstanding = vec![capture.len(); n_stim];
    let mut captured = vec![false; n_stim];
    let mut log = Vec::new();
    let mut completed = true;
    let mut neighbor_apds: Vec<f64> = Vec::with_capacity(hood.len());
    let dims = grid.dims.map(|d| d as i64);

    let di_of = |v: usize, t: f64, last: &[f64], apd: &[f64]| -> f64 {
        if last[v] == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            t - last[v] - apd[v]
        }
    };

    while let Some(Reverse(ev)) = heap.pop() {
        counters.events_processed += 1;
        let v = ev.target as usize;
        let t = ev.time;
        let di = di_of(v, t, &last, &apd);
        let curve = apd_curves[apd_of[v] as usize];
        let refractory = di < curve.di_min_ms;
        if refractory {
            rmax[v] = rmax[v].max(t);
        }
        let accepted = !refractory && t - rmax[v] > tau;

        if let Source::Stimulus(s) = ev.source {
            let s = s as usize;
            outstanding[s] -= 1;
            captured[s] |= accepted;
            if outstanding[s] == 0 && !captured[s] && params.stop_on_capture_failure {
                completed = false;
                break;
            }
        }
        if !accepted {
            counters.refractory_rejections += 1;
            continue;
        }

        // activation
        let apd_local = set.apd_factor * curve.eval(di);
        let [i, j, kk] = grid.coords(v).map(|c| c as i64);
        neighbor_apds.clear();
        for o in &hood {
            let (a, b, c) = (i + o.d[0], j + o.d[1], kk + o.d[2]);
            if a < 0 || b < 0 || c < 0 || a >= dims[0] || b >= dims[1] || c >= dims[2] {
                continue;
            }
            let u = (a + dims[0] * (b + dims[1] * c)) as usize;
            if last[u] <= t && t < last[u] + apd[u] {
                neighbor_apds.push(apd[u]);
            }
        }
        let new_apd = electrotonic_apd(apd_local, &neighbor_apds, params.electrotonic_weight);
        let cv_new = set.cv_factor * cv_curves[cv_of[v] as usize].eval(di);
        let prev = if prev_cv[v].is_nan() { None } else { Some(prev_cv[v]) };
        let cv = cv_with_memory(cv_new, prev, params.cv_memory_weight);
        last[v] = t;
        apd[v] = new_apd;
        prev_cv[v] = cv;
        pending[v] = (f64::INFINITY, Source::Node(u32::MAX));
        counters.activations += 1;
        log.push(LogRecord {
            t_ms: t,
            node: v as u32,
            source: ev.source,
            apd_ms: new_apd,
        });

        let src = Source::Node(v as u32);
        for o in &hood {
            let (a, b, c) = (i + o.d[0], j + o.d[1], kk + o.d[2]);
            if a < 0 || b < 0 || c < 0 || a >= dims[0] || b >= dims[1] || c >= dims[2] {
                continue;
            }
            let u = (a + dims[0] * (b + dims[1] * c)) as usize;
            if apd_of[u] == u8::MAX {
                continue;
            }
            let t_arr = t + o.dist / edge_speed(cv, o.dir, fiber[v], k);
            if t_arr > params.t_end_ms {
                continue;
            }
            if prune {
                let di = di_of(u, t_arr, &last, &apd);
                let di_min = apd_curves[apd_of[u] as usize].di_min_ms;
                if di < di_min {
                    rmax[u] = rmax[u].max(t_arr);
                    counters.refractory_rejections += 1;
                    continue;
                }
                // past the block window the arrival activates unless an
                // earlier one does; arrivals inside it are always queued
                if di >= di_min + tau + 1e-6 {
                    if (t_arr, src) >= pending[u] {
                        continue;
                    }
                    pending[u] = (t_arr, src);
                }
            }
            heap.push(Reverse(Event {
                time: t_arr,
                target: u as u32,
                source: src,
            }));
            counters.events_queued += 1;
        }
    }

    Ok(SimulationResult {
        effective: completed && captured.iter().all(|&c| c),
        captured,
        log,
        counters,
        completed,
    })
}

fn intern<T: PartialEq + Copy>(table: &mut Vec<T>, item: T) -> u8 {
    match table.iter().position(|x| *x == item) {
        Some(i) => i as u8,
        None => {
            table.push(item);
            (table.len() - 1) as u8
        }
    }
}
