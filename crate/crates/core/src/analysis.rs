//! Reentry detection, exit sites and risk-zone clustering over activation
//! logs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{SimulationResult, Source};
use crate::voxel::{DigitalTwin, TissueLabel};

/// Cycles a node must show before a reentry counts as sustained.
pub const MIN_CYCLES: usize = 10;
/// Largest allowed spread of inter-activation intervals, relative to their
/// median.
pub const PERIODICITY_TOLERANCE: f64 = 0.2;
/// Cycle lengths outside this window are not considered reentry.
pub const CL_WINDOW_MS: (f64, f64) = (120.0, 500.0);
pub const DEFAULT_CLUSTER_RADIUS_MM: f64 = 10.0;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no border-zone to healthy activation after reentry onset")]
    NoExitFound,
    #[error("cluster radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReentryEvent {
    pub initiating_node: u32,
    pub onset_ms: f64,
    /// Median inter-activation interval of the tracked node.
    pub cycle_length_ms: f64,
    /// Post-onset activations of the tracked node.
    pub n_cycles: usize,
    pub tracked_node: u32,
    pub exit_node: Option<u32>,
    pub exit_aha_segment: Option<u8>,
    pub sustained: bool,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Sustained reentry in `result`, if any. Exit fields are left empty; see
/// [`find_exit_site`] and [`analyze`].
pub fn detect_reentry(
    result: &SimulationResult,
    t_last_stim: f64,
    apd_max_global: f64,
) -> Option<ReentryEvent> {
    if !result.effective {
        return None;
    }
    let horizon = t_last_stim + apd_max_global;
    let start = result.log.partition_point(|r| r.t_ms <= horizon);
    let post = &result.log[start..];
    let first = post.first()?;

    let mut times: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in post {
        times.entry(r.node).or_default().push(r.t_ms);
    }
    // (activations, node, median interval)
    let mut best: Option<(usize, u32, f64)> = None;
    for (&node, t) in &times {
        if t.len() < MIN_CYCLES {
            continue;
        }
        let mut iv: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        iv.sort_by(f64::total_cmp);
        let med = median(&iv);
        let spread = iv[iv.len() - 1] - iv[0];
        if spread > PERIODICITY_TOLERANCE * med {
            continue;
        }
        if !(CL_WINDOW_MS.0..=CL_WINDOW_MS.1).contains(&med) {
            continue;
        }
        if best.is_none_or(|(n, _, _)| t.len() > n) {
            best = Some((t.len(), node, med));
        }
    }
    let (n_cycles, tracked_node, cycle_length_ms) = best?;
    Some(ReentryEvent {
        initiating_node: first.node,
        onset_ms: first.t_ms,
        cycle_length_ms,
        n_cycles,
        tracked_node,
        exit_node: None,
        exit_aha_segment: None,
        sustained: true,
    })
}

/// First healthy node activated from a border-zone node after the onset,
/// with its AHA segment.
pub fn find_exit_site(
    result: &SimulationResult,
    twin: &DigitalTwin,
    reentry: &ReentryEvent,
) -> Result<(u32, u8), AnalysisError> {
    let start = result.log.partition_point(|r| r.t_ms < reentry.onset_ms);
    result.log[start..]
        .iter()
        .find(|r| match r.source {
            Source::Node(src) => {
                twin.label(r.node as usize) == TissueLabel::Healthy
                    && twin.label(src as usize) == TissueLabel::BorderZone
            }
            Source::Stimulus(_) => false,
        })
        .map(|r| (r.node, twin.segment(r.node as usize)))
        .ok_or(AnalysisError::NoExitFound)
}

/// Detection plus exit site. A reentry without an exit is kept with empty
/// exit fields.
pub fn analyze(
    result: &SimulationResult,
    twin: &DigitalTwin,
    t_last_stim: f64,
    apd_max_global: f64,
) -> Option<ReentryEvent> {
    let mut ev = detect_reentry(result, t_last_stim, apd_max_global)?;
    if let Ok((node, seg)) = find_exit_site(result, twin, &ev) {
        ev.exit_node = Some(node);
        ev.exit_aha_segment = Some(seg);
    }
    Some(ev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitPoint {
    pub position_mm: [f64; 3],
    pub aha_segment: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskZone {
    pub zone_id: u32,
    /// Sorted lexicographically by position.
    pub members: Vec<ExitPoint>,
    pub centroid_mm: [f64; 3],
    /// Segments ordered by how many members they hold, then by number.
    pub aha_segments: Vec<u8>,
    pub support: usize,
}

fn cmp_points(a: &ExitPoint, b: &ExitPoint) -> std::cmp::Ordering {
    (0..3)
        .map(|i| a.position_mm[i].total_cmp(&b.position_mm[i]))
        .find(|o| o.is_ne())
        .unwrap_or(a.aha_segment.cmp(&b.aha_segment))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage clustering: points closer than `radius_mm` share a zone.
/// Zones are ordered by support, largest first.
pub fn cluster_exit_sites(
    points: &[ExitPoint],
    radius_mm: f64,
) -> Result<Vec<RiskZone>, AnalysisError> {
    if !(radius_mm > 0.0) {
        return Err(AnalysisError::InvalidRadius(radius_mm));
    }
    let mut pts = points.to_vec();
    pts.sort_by(cmp_points);
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            if crate::voxel::dist(pts[a].position_mm, pts[b].position_mm) <= radius_mm {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<ExitPoint>> = BTreeMap::new();
    for i in 0..pts.len() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(pts[i]);
    }
    // BTreeMap keys are the smallest member index, so ties keep point order
    let mut zones: Vec<Vec<ExitPoint>> = groups.into_values().collect();
    zones.sort_by_key(|z| std::cmp::Reverse(z.len()));
    Ok(zones
        .into_iter()
        .enumerate()
        .map(|(i, members)| {
            let mut centroid = [0.0; 3];
            let mut seg_counts: BTreeMap<u8, usize> = BTreeMap::new();
            for m in &members {
                for a in 0..3 {
                    centroid[a] += m.position_mm[a] / members.len() as f64;
                }
                *seg_counts.entry(m.aha_segment).or_default() += 1;
            }
            let mut segs: Vec<(u8, usize)> = seg_counts.into_iter().collect();
            segs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            RiskZone {
                zone_id: i as u32 + 1,
                support: members.len(),
                centroid_mm: centroid,
                aha_segments: segs.into_iter().map(|s| s.0).collect(),
                members,
            }
        })
        .collect())
}

pub fn save_zones(zones: &[RiskZone], path: impl AsRef<Path>) -> Result<(), AnalysisError> {
    std::fs::write(path, serde_json::to_vec_pretty(zones)?)?;
    Ok(())
}
