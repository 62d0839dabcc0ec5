//! Slow-conduction-channel (SCC) extraction.
//!
//! A border-zone voxel belongs to a channel corridor when, along some grid
//! axis, the border zone around it is closed off on both sides by core zone
//! (one side may be the anatomical surface). Corridors are grouped into
//! 26-connected components, thinned to a curve, and the centerline is traced
//! between the two mouths and extended through the border zone until it
//! touches healthy tissue.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::thinning::thin_to_curve;
use super::AnatomyError;
use crate::voxel::{DigitalTwin, TissueLabel, MYOCARDIAL_DENSITY_G_PER_ML};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SccOptions {
    /// Channels shorter than this are not reported.
    pub min_length_mm: f64,
    /// Widest corridor still considered a channel.
    pub max_width_mm: f64,
}

impl Default for SccOptions {
    fn default() -> Self {
        Self {
            min_length_mm: 3.0,
            max_width_mm: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scc {
    pub id: u32,
    /// Voxel chain, each step 26-adjacent, as (i, j, k).
    pub centerline: Vec<[usize; 3]>,
    pub length_mm: f64,
    pub mass_g: f64,
    pub endpoints: [[usize; 3]; 2],
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flank {
    Core,
    Surface,
    Open,
}

fn flank(twin: &DigitalTwin, start: [usize; 3], axis: usize, step: i64, max_steps: usize) -> Flank {
    let grid = &twin.grid;
    let mut c = [start[0] as i64, start[1] as i64, start[2] as i64];
    for _ in 0..=max_steps {
        c[axis] += step;
        if c[axis] < 0 || c[axis] >= grid.dims[axis] as i64 {
            return Flank::Surface;
        }
        let v = grid.index(c[0] as usize, c[1] as usize, c[2] as usize);
        match grid.labels[v] {
            TissueLabel::BorderZone => continue,
            TissueLabel::CoreZone => return Flank::Core,
            TissueLabel::Outside => return Flank::Surface,
            TissueLabel::Healthy => return Flank::Open,
        }
    }
    Flank::Open
}

fn flanked_mask(twin: &DigitalTwin, opts: &SccOptions) -> Vec<bool> {
    let grid = &twin.grid;
    (0..grid.len())
        .map(|v| {
            if grid.labels[v] != TissueLabel::BorderZone {
                return false;
            }
            let c = grid.coords(v);
            (0..3).any(|axis| {
                let max_steps = (opts.max_width_mm / grid.spacing_mm[axis]).ceil() as usize;
                let a = flank(twin, c, axis, -1, max_steps);
                let b = flank(twin, c, axis, 1, max_steps);
                a != Flank::Open
                    && b != Flank::Open
                    && (a == Flank::Core || b == Flank::Core)
            })
        })
        .collect()
}

fn components(twin: &DigitalTwin, mask: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let v = comp[head];
            head += 1;
            for n in twin.grid.neighbors26(v) {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    comp.push(n);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Hop-count BFS over voxels accepted by `pass`, from `sources` until `goal`.
/// Returns the path from a source to the first goal voxel reached.
fn bfs_path(
    twin: &DigitalTwin,
    sources: &[usize],
    pass: impl Fn(usize) -> bool,
    goal: impl Fn(usize) -> bool,
) -> Option<Vec<usize>> {
    let n = twin.grid.len();
    let mut prev = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for &s in sources {
        if prev[s] == usize::MAX {
            prev[s] = s;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        if goal(v) {
            let mut path = vec![v];
            let mut c = v;
            while prev[c] != c {
                c = prev[c];
                path.push(c);
            }
            path.reverse();
            return Some(path);
        }
        for u in twin.grid.neighbors26(v) {
            if prev[u] == usize::MAX && pass(u) {
                prev[u] = v;
                queue.push_back(u);
            }
        }
    }
    None
}

fn touches_healthy(twin: &DigitalTwin, v: usize) -> bool {
    twin.grid
        .neighbors26(v)
        .any(|n| twin.grid.labels[n] == TissueLabel::Healthy)
}

pub fn extract_sccs(twin: &DigitalTwin, opts: &SccOptions) -> Vec<Scc> {
    let grid = &twin.grid;
    let mask = flanked_mask(twin, opts);
    let mut sccs = Vec::new();
    for comp in components(twin, &mask) {
        let mut in_comp = vec![false; grid.len()];
        for &v in &comp {
            in_comp[v] = true;
        }
        // mouth voxels: corridor voxels next to excitable tissue outside it
        let mouth: Vec<bool> = (0..grid.len())
            .map(|v| {
                in_comp[v]
                    && grid
                        .neighbors26(v)
                        .any(|n| !in_comp[n] && grid.labels[n].is_excitable())
            })
            .collect();
        let mouths = components(twin, &mouth);
        if mouths.len() < 2 {
            continue;
        }
        // every mouth must lead to healthy tissue through the border zone
        let reaches_healthy = |m: &Vec<usize>| {
            bfs_path(
                twin,
                m,
                |u| grid.labels[u] == TissueLabel::BorderZone,
                |u| touches_healthy(twin, u),
            )
            .is_some()
        };
        let open: Vec<&Vec<usize>> = mouths.iter().filter(|m| reaches_healthy(m)).collect();
        if open.len() < 2 {
            continue;
        }
        // the two mouths farthest apart
        let centroid = |m: &Vec<usize>| {
            let mut c = [0.0; 3];
            for &v in m {
                let p = grid.position_mm(v);
                for a in 0..3 {
                    c[a] += p[a] / m.len() as f64;
                }
            }
            c
        };
        let centroids: Vec<[f64; 3]> = open.iter().map(|m| centroid(m)).collect();
        let mut pair = (0, 1);
        let mut best = -1.0;
        for a in 0..open.len() {
            for b in a + 1..open.len() {
                let d = crate::voxel::dist(centroids[a], centroids[b]);
                if d > best {
                    best = d;
                    pair = (a, b);
                }
            }
        }

        let mut skeleton = in_comp.clone();
        thin_to_curve(&mut skeleton, grid.dims);
        let skel: Vec<usize> = (0..grid.len()).filter(|&v| skeleton[v]).collect();
        // skeleton voxels nearest to each mouth
        let nearest = |c: [f64; 3]| {
            *skel
                .iter()
                .min_by(|&&a, &&b| {
                    crate::voxel::dist(grid.position_mm(a), c)
                        .total_cmp(&crate::voxel::dist(grid.position_mm(b), c))
                })
                .expect("thinning keeps at least one voxel")
        };
        let sa = nearest(centroids[pair.0]);
        let sb = nearest(centroids[pair.1]);
        let Some(core) = bfs_path(twin, &[sa], |u| skeleton[u], |u| u == sb) else {
            continue;
        };
        // extend both ends through the border zone to healthy tissue
        let extend = |from: usize, avoid: &[usize]| {
            bfs_path(
                twin,
                &[from],
                |u| grid.labels[u] == TissueLabel::BorderZone && !avoid.contains(&u),
                |u| touches_healthy(twin, u),
            )
        };
        let Some(head) = extend(sa, &core[1..]) else {
            continue;
        };
        let Some(tail) = extend(sb, &core[..core.len() - 1]) else {
            continue;
        };
        let mut chain: Vec<usize> = head.iter().rev().copied().collect();
        chain.extend_from_slice(&core[1..]);
        chain.extend(tail.iter().skip(1));

        let length_mm: f64 = chain
            .windows(2)
            .map(|w| grid.distance_mm(w[0], w[1]))
            .sum();
        if length_mm < opts.min_length_mm {
            continue;
        }
        let mass_g = comp.len() as f64 * grid.voxel_volume_ml() * MYOCARDIAL_DENSITY_G_PER_ML;
        let centerline: Vec<[usize; 3]> = chain.iter().map(|&v| grid.coords(v)).collect();
        sccs.push(Scc {
            id: sccs.len() as u32 + 1,
            endpoints: [centerline[0], centerline[centerline.len() - 1]],
            centerline,
            length_mm,
            mass_g,
        });
    }
    sccs
}

pub fn save_sccs(sccs: &[Scc], path: impl AsRef<Path>) -> Result<(), AnatomyError> {
    std::fs::write(path, serde_json::to_vec_pretty(sccs)?)?;
    Ok(())
}
