//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use vtrisk_core::engine::{
    capture_region, cv_with_memory, edge_speed, electrotonic_apd, simulate_region, EngineParams,
};
use vtrisk_core::{generate_phantom, preprocess, DigitalTwin, PhantomSpec, RestitutionSet, TissueLabel};

pub const DT: f64 = 0.1;

pub struct Activation {
    pub t: f64,
    pub apd: f64,
}

/// Per-node activation times from the time-stepped rules.
pub fn dense_oracle(
    twin: &DigitalTwin,
    set: &RestitutionSet,
    stim_times: &[f64],
    region: &[usize],
    params: &EngineParams,
) -> Vec<Vec<Activation>> {
    let g = &twin.grid;
    let n = g.len();
    let layers = twin.layers.as_ref().unwrap();
    let fibers = twin.fibers.as_ref().unwrap();
    let k = params.anisotropy_ratio;
    let excitable: Vec<bool> = g.labels.iter().map(|l| l.is_excitable()).collect();

    // neighbour lists with edge geometry
    let mut nbrs: Vec<Vec<(usize, f64, [f64; 3])>> = vec![Vec::new(); n];
    for v in 0..n {
        let pv = g.position_mm(v);
        for u in g.neighbors26(v) {
            let pu = g.position_mm(u);
            let d = [pv[0] - pu[0], pv[1] - pu[1], pv[2] - pu[2]];
            let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            // direction of travel u -> v
            nbrs[v].push((u, dist, [d[0] / dist, d[1] / dist, d[2] / dist]));
        }
    }

    let mut acts: Vec<Vec<Activation>> = (0..n).map(|_| Vec::new()).collect();
    let mut cv_at = vec![0.0f64; n];
    let mut rmax = vec![f64::NEG_INFINITY; n];
    let steps = (params.t_end_ms / DT).round() as usize;
    let mut stim_iter = 0usize;

    for step in 1..=steps {
        let (t0, t1) = ((step - 1) as f64 * DT, step as f64 * DT);
        // (time, node, source rank) for every arrival inside (t0, t1]
        let mut arrivals: Vec<(f64, usize, u64)> = Vec::new();
        while stim_iter < stim_times.len() && stim_times[stim_iter] <= t1 {
            for &v in region {
                if excitable[v] {
                    arrivals.push((stim_times[stim_iter], v, stim_iter as u64));
                }
            }
            stim_iter += 1;
        }
        for v in 0..n {
            if !excitable[v] {
                continue;
            }
            for &(u, dist, dir) in &nbrs[v] {
                let Some(last) = acts[u].last() else { continue };
                let f = fibers[u];
                let fiber = [f[0] as f64, f[1] as f64, f[2] as f64];
                let ta = last.t + dist / edge_speed(cv_at[u], dir, fiber, k);
                if ta > t0 && ta <= t1 && ta <= params.t_end_ms {
                    arrivals.push((ta, v, 1 << 32 | u as u64));
                }
            }
        }
        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (t, v, _) in arrivals {
            let curve = set.apd_curve(g.labels[v], layers[v]).unwrap();
            let di = match acts[v].last() {
                Some(a) => t - a.t - a.apd,
                None => f64::INFINITY,
            };
            if di < curve.di_min_ms {
                rmax[v] = rmax[v].max(t);
                continue;
            }
            if t - rmax[v] <= params.block_window_ms {
                continue;
            }
            let local = set.apd_factor * curve.eval(di);
            let depolarized: Vec<f64> = g
                .neighbors26(v)
                .filter_map(|u| acts[u].last())
                .filter(|a| a.t <= t && t < a.t + a.apd)
                .map(|a| a.apd)
                .collect();
            let apd = electrotonic_apd(local, &depolarized, params.electrotonic_weight);
            let cv_new = set.cv_factor * set.cv_curve(g.labels[v]).unwrap().eval(di);
            let prev = if acts[v].is_empty() { None } else { Some(cv_at[v]) };
            cv_at[v] = cv_with_memory(cv_new, prev, params.cv_memory_weight);
            acts[v].push(Activation { t, apd });
        }
    }
    acts
}

pub fn slab_with_x_fibers(dims: [usize; 3]) -> DigitalTwin {
    let mut twin = preprocess(&generate_phantom(&PhantomSpec::slab(dims)).unwrap()).unwrap();
    twin.fibers = Some(vec![[1.0, 0.0, 0.0]; twin.grid.len()]);
    twin
}

/// Front speed between two planes normal to `axis`, stimulating plane 0.
pub fn planar_speed(twin: &DigitalTwin, set: &RestitutionSet, axis: usize, a: usize, b: usize) -> f64 {
    let g = &twin.grid;
    let plane = |p: usize| (0..g.len()).filter(move |&v| g.coords(v)[axis] == p);
    let region: Vec<usize> = plane(0).collect();
    let params = EngineParams {
        t_end_ms: 400.0,
        ..Default::default()
    };
    let res = simulate_region(twin, set, &[0.0], &region, &params).unwrap();
    let mut first = vec![f64::NAN; g.len()];
    for r in &res.log {
        if first[r.node as usize].is_nan() {
            first[r.node as usize] = r.t_ms;
        }
    }
    let mean = |p: usize| {
        let ts: Vec<f64> = plane(p).map(|v| first[v]).collect();
        assert!(ts.iter().all(|t| t.is_finite()), "plane {p} not reached");
        ts.iter().sum::<f64>() / ts.len() as f64
    };
    (b - a) as f64 * g.spacing_mm[axis] / (mean(b) - mean(a))
}

/// Fewest voxels on a 26-connected border-zone path that starts and ends
/// next to healthy tissue on opposite sides of the core zone along x.
pub fn bfs_channel_voxels(twin: &DigitalTwin) -> usize {
    let g = &twin.grid;
    let is = |v: usize, l: TissueLabel| g.labels[v] == l;
    let core_x: Vec<usize> = (0..g.len())
        .filter(|&v| is(v, TissueLabel::CoreZone))
        .map(|v| g.coords(v)[0])
        .collect();
    let mid = (core_x.iter().min().unwrap() + core_x.iter().max().unwrap()) / 2;
    let mouth = |v: usize, side_lo: bool| {
        is(v, TissueLabel::BorderZone)
            && g.neighbors26(v).any(|u| is(u, TissueLabel::Healthy))
            && if side_lo { g.coords(v)[0] <= mid } else { g.coords(v)[0] > mid }
    };
    let mut dist = vec![usize::MAX; g.len()];
    let mut queue = VecDeque::new();
    for v in (0..g.len()).filter(|&v| mouth(v, true)) {
        dist[v] = 1;
        queue.push_back(v);
    }
    while let Some(v) = queue.pop_front() {
        if mouth(v, false) {
            return dist[v];
        }
        for u in g.neighbors26(v) {
            if is(u, TissueLabel::BorderZone) && dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    panic!("no border-zone path across the core zone");
}

/// Brute-force density crossing: fine scan over the whole sample range with
/// a separately written kernel.
pub fn grid_crossing(low: &[f64], high: &[f64], h_low: f64, h_high: f64) -> f64 {
    let dens = |xs: &[f64], h: f64, t: f64| {
        xs.iter()
            .map(|x| {
                let z = (t - x) / h;
                (-z * z / 2.0).exp() / (h * (2.0 * std::f64::consts::PI).sqrt())
            })
            .sum::<f64>()
            / xs.len() as f64
    };
    let m = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (a, b) = (m(low), m(high));
    let n = 200_000;
    let mut best = (f64::INFINITY, a);
    for i in 0..=n {
        let t = a + (b - a) * i as f64 / n as f64;
        let d = (dens(low, h_low, t) - dens(high, h_high, t)).abs();
        if d < best.0 {
            best = (d, t);
        }
    }
    best.1
}

pub fn spread(center: f64, scale: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| center + scale * (i as f64 / (n - 1) as f64 * 3.0 - 1.5))
        .collect()
}

pub fn slab(nx: usize, ny: usize, nz: usize) -> DigitalTwin {
    preprocess(&generate_phantom(&PhantomSpec::slab([nx, ny, nz])).unwrap()).unwrap()
}

/// Largest activation-time gap between the engine and the dense oracle.
pub fn oracle_max_deviation(twin: &DigitalTwin, stim: &[f64], t_end: f64) -> f64 {
    let set = RestitutionSet::default();
    let params = EngineParams {
        t_end_ms: t_end,
        ..Default::default()
    };
    let region = capture_region(twin, [2, 2, 0], params.capture_radius_mm);
    let res = simulate_region(twin, &set, stim, &region, &params).unwrap();
    assert!(res.effective);
    let oracle = dense_oracle(twin, &set, stim, &region, &params);
    let mut per_node: Vec<Vec<f64>> = vec![Vec::new(); twin.grid.len()];
    for r in &res.log {
        per_node[r.node as usize].push(r.t_ms);
    }
    let mut worst = 0.0f64;
    for v in 0..twin.grid.len() {
        assert_eq!(
            per_node[v].len(),
            oracle[v].len(),
            "activation count differs at node {v}"
        );
        for (a, b) in per_node[v].iter().zip(&oracle[v]) {
            worst = worst.max((a - b.t).abs());
        }
    }
    worst
}
