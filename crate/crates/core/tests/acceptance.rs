//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use vtrisk_core::analysis::DEFAULT_CLUSTER_RADIUS_MM;
use vtrisk_core::anatomy::{extract_sccs, helix_angle_deg, transmural_depth, SccOptions};
use vtrisk_core::engine::capture_region;
use vtrisk_core::fixtures;
use vtrisk_core::phantom::PhantomKind;
use vtrisk_core::protocol::SweepRange;
use vtrisk_core::restitution::{BETA_BLOCKER_APD, BETA_BLOCKER_CV};
use vtrisk_core::risk::{
    apply_relabels, concordance, estimate_threshold, score_cohort, scores_by_clinical_class,
    silverman_bandwidth, Bandwidth, KdeOptions, DEFAULT_THETA,
};
use vtrisk_core::sweep::{write_records, SweepOptions};
use vtrisk_core::voxel::Surface;
use vtrisk_core::{
    apply_beta_blocker, build_schedule, classify, enumerate_configs, generate_phantom, preprocess,
    run_sweep, simulate, summarize, DigitalTwin, EngineParams, Layer, PatientSummary,
    PhantomSpec, ProtocolSpec, RestitutionSet, RiskClass, Scenario, Source, SweepRun, TissueLabel,
};

struct Channel {
    twin: DigitalTwin,
    run: SweepRun,
    summary: PatientSummary,
}

fn channel() -> &'static Channel {
    static CELL: OnceLock<Channel> = OnceLock::new();
    CELL.get_or_init(|| {
        let twin = fixtures::channel_phantom();
        let run = run_sweep(
            &twin,
            &RestitutionSet::default(),
            &ProtocolSpec::default(),
            &EngineParams::default(),
            Scenario::Baseline,
            &SweepOptions::with_workers(8),
        )
        .unwrap();
        let summary = summarize(&run, &twin, DEFAULT_CLUSTER_RADIUS_MM).unwrap();
        Channel { twin, run, summary }
    })
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_config_count() -> Result<String, String> {
    let n = enumerate_configs(&ProtocolSpec::default()).map_err(|e| e.to_string())?.len();
    check(n == 3672, format!("{n} configs"))?;
    Ok(format!("{n} configs"))
}

fn c2_table_replay() -> Result<String, String> {
    let mut cohort = fixtures::cohort();
    let scores = score_cohort(&cohort, DEFAULT_THETA).map_err(|e| e.to_string())?;
    let matches = scores.iter().filter(|s| s.published == Some(s.result.arrisk)).count();
    check(matches == 51 && scores.len() == 51, format!("{matches}/{} match", scores.len()))?;
    let count = |c| scores.iter().filter(|s| s.result.arrisk == c).count();
    let counts = (count(RiskClass::Zero), count(RiskClass::Low), count(RiskClass::High));
    check(counts == (21, 18, 12), format!("class counts {counts:?}"))?;
    let row = |id: &str| scores.iter().find(|s| s.patient_id == id).unwrap().result;
    let (p16, p38) = (row("P16"), row("P38"));
    check(
        (p16.ar_index - 0.6708).abs() < 1e-4 && p16.arrisk == RiskClass::Low,
        format!("P16 {p16:?}"),
    )?;
    check(
        (p38.ar_index - 0.9073).abs() < 1e-4 && p38.arrisk == RiskClass::High,
        format!("P38 {p38:?}"),
    )?;
    apply_relabels(&mut cohort, &fixtures::followup_relabels()).map_err(|e| e.to_string())?;
    let pairs: Vec<_> = score_cohort(&cohort, DEFAULT_THETA)
        .unwrap()
        .iter()
        .map(|s| (s.result.arrisk, s.clinical_risk))
        .collect();
    let c = concordance(&pairs).map_err(|e| e.to_string())?;
    check(
        (c.negative_agreement, c.negatives) == (20, 37),
        format!("negatives {}/{}", c.negative_agreement, c.negatives),
    )?;
    check(
        (c.positive_agreement, c.positives) == (13, 14),
        format!("positives {}/{}", c.positive_agreement, c.positives),
    )?;
    Ok(format!(
        "51/51 classes, counts {counts:?}, negatives 20/37, positives 13/14"
    ))
}

fn c3_planar_conduction() -> Result<String, String> {
    let twin = common::slab_with_x_fibers([80, 40, 10]);
    let k = EngineParams::default().anisotropy_ratio;
    let mut out = Vec::new();
    for factor in [1.0, 1.25] {
        let start = Instant::now();
        let set = RestitutionSet::default().scaled(1.0, factor);
        let cv = set.cv(TissueLabel::Healthy, f64::INFINITY).unwrap();
        let along = common::planar_speed(&twin, &set, 0, 20, 60) / cv - 1.0;
        let across = common::planar_speed(&twin, &set, 1, 10, 30) / (cv / k) - 1.0;
        let secs = start.elapsed().as_secs_f64();
        check(along.abs() < 0.05, format!("cv x{factor}: along error {along:+.4}"))?;
        check(across.abs() < 0.05, format!("cv x{factor}: across error {across:+.4}"))?;
        check(secs < 10.0, format!("cv x{factor}: {secs:.1} s"))?;
        out.push(format!("x{factor}: {along:+.4}/{across:+.4}"));
    }
    Ok(format!("relative speed errors along/across {}", out.join(", ")))
}

/// Smallest distance from the site's capture region to scar tissue.
fn site_scar_distance(twin: &DigitalTwin, site_id: u32) -> f64 {
    let g = &twin.grid;
    let site = twin.site(site_id).unwrap();
    let region = capture_region(twin, site.center_voxel, EngineParams::default().capture_radius_mm);
    let scar: Vec<usize> = (0..g.len())
        .filter(|&v| matches!(g.labels[v], TissueLabel::BorderZone | TissueLabel::CoreZone))
        .collect();
    region
        .iter()
        .flat_map(|&a| scar.iter().map(move |&b| (a, b)))
        .map(|(a, b)| g.distance_mm(a, b))
        .fold(f64::INFINITY, f64::min)
}

fn c4_reentry_induction() -> Result<String, String> {
    let ch = channel();
    let s = &ch.summary;
    check(s.total_configs == 3672, format!("{} configs", s.total_configs))?;
    check(s.effective_count >= 1500, format!("{} effective", s.effective_count))?;
    check(s.positive_count >= 1, "no sustained reentry on the channel phantom")?;
    for p in &s.reentries {
        let ev = &p.reentry;
        check(
            ev.sustained && ev.n_cycles >= 10,
            format!("config {} has {} cycles", p.config_index, ev.n_cycles),
        )?;
        check(
            (200.0..=400.0).contains(&ev.cycle_length_ms),
            format!("config {} CL {:.1}", p.config_index, ev.cycle_length_ms),
        )?;
    }
    let sites: BTreeSet<u32> = s.reentries.iter().map(|p| p.pacing_site_id).collect();
    let mut far = 0.0f64;
    for &id in &sites {
        let d = site_scar_distance(&ch.twin, id);
        far = far.max(d);
        check(d <= 10.0, format!("site {id} is {d:.1} mm from scar"))?;
    }

    let control = fixtures::control_phantom();
    let run = run_sweep(
        &control,
        &RestitutionSet::default(),
        &ProtocolSpec::default(),
        &EngineParams::default(),
        Scenario::Baseline,
        &SweepOptions::with_workers(8),
    )
    .map_err(|e| e.to_string())?;
    let cs = summarize(&run, &control, DEFAULT_CLUSTER_RADIUS_MM).unwrap();
    check(cs.positive_count == 0, format!("control phantom: {} reentries", cs.positive_count))?;
    let cls: Vec<String> = s
        .reentries
        .iter()
        .map(|p| format!("{:.0}", p.reentry.cycle_length_ms))
        .collect();
    Ok(format!(
        "channel {} effective, {} reentries (CL {} ms) from sites {:?} (max {:.1} mm from scar); control 0 of {} effective; sweep {:.0} s",
        s.effective_count,
        s.positive_count,
        cls.join("/"),
        sites,
        far,
        cs.effective_count,
        ch.run.wall_clock_s
    ))
}

fn c5_exit_sites() -> Result<String, String> {
    let ch = channel();
    let zones = &ch.summary.zones;
    check(!zones.is_empty() && zones.len() <= 3, format!("{} zones", zones.len()))?;
    let spec = ProtocolSpec::default();
    let params = EngineParams {
        t_end_ms: spec.t_end_ms,
        ..Default::default()
    };
    let g = &ch.twin.grid;
    let mut oracle_exits = BTreeSet::new();
    for p in &ch.summary.reentries {
        let config = ch.run.records[p.config_index].config;
        let schedule = build_schedule(&config, &spec).unwrap();
        let set = RestitutionSet::default().scaled(config.apd_factor, config.cv_factor);
        let result = simulate(&ch.twin, &set, &schedule, &params).unwrap();
        // brute force: first BZ -> HEALTHY edge after the first activation
        // that follows the last stimulus by more than any APD
        let onset = schedule.last_time() + set.apd_max_global();
        let exit = result
            .log
            .iter()
            .filter(|r| r.t_ms > onset)
            .find(|r| {
                g.labels[r.node as usize] == TissueLabel::Healthy
                    && matches!(r.source, Source::Node(u) if g.labels[u as usize] == TissueLabel::BorderZone)
            })
            .map(|r| r.node)
            .ok_or("oracle found no exit")?;
        check(
            p.reentry.exit_node == Some(exit),
            format!("config {}: detector {:?}, oracle {exit}", p.config_index, p.reentry.exit_node),
        )?;
        oracle_exits.insert(exit);
    }
    let dominant = &zones[0];
    let members: Vec<[f64; 3]> = dominant.members.iter().map(|m| m.position_mm).collect();
    let mouth = oracle_exits
        .iter()
        .find(|&&v| members.contains(&g.position_mm(v as usize)))
        .ok_or("dominant zone holds no oracle exit")?;
    Ok(format!(
        "{} zone(s), dominant support {} contains oracle mouth at voxel {:?} (segment {})",
        zones.len(),
        dominant.support,
        g.coords(*mouth as usize),
        ch.twin.segment(*mouth as usize)
    ))
}

fn c6_engine_invariants() -> Result<String, String> {
    let ch = channel();
    let spec = ProtocolSpec::default();
    let params = EngineParams {
        t_end_ms: spec.t_end_ms,
        ..Default::default()
    };
    let g = &ch.twin.grid;
    let p = ch.summary.reentries.first().ok_or("no reentrant config to check")?;
    let config = ch.run.records[p.config_index].config;
    let schedule = build_schedule(&config, &spec).unwrap();
    let set = RestitutionSet::default();
    let r = simulate(&ch.twin, &set, &schedule, &params).unwrap();
    check(
        r.log.windows(2).all(|w| (w[0].t_ms, w[0].node, w[0].source) <= (w[1].t_ms, w[1].node, w[1].source)),
        "log out of order",
    )?;
    let mut last: Vec<Option<(f64, f64)>> = vec![None; g.len()];
    for rec in &r.log {
        let v = rec.node as usize;
        check(g.labels[v].is_excitable(), format!("non-excitable node {v} active"))?;
        if let Some((t, apd)) = last[v] {
            check(rec.t_ms - t >= apd + 20.0 - 1e-9, format!("node {v} re-excited early"))?;
        }
        if let Source::Node(u) = rec.source {
            let (tu, _) = last[u as usize].ok_or("source never activated")?;
            check(tu < rec.t_ms, "source activated after target")?;
            check(g.neighbors26(v).any(|w| w == u as usize), "source not adjacent")?;
        }
        last[v] = Some((rec.t_ms, rec.apd_ms));
    }
    let again = simulate(&ch.twin, &set, &schedule, &params).unwrap();
    check(again == r, "repeat run differs")?;

    let reduced = ProtocolSpec {
        pacing_sites: SweepRange::new(2.0, 26.0, 6.0),
        s2_bcl_ms: SweepRange::new(275.0, 285.0, 5.0),
        n_s2: SweepRange::new(1.0, 2.0, 1.0),
        cv_factors: SweepRange::single(1.0),
        apd_factors: SweepRange::single(1.0),
        ..Default::default()
    };
    let bytes = |workers: usize| {
        let run = run_sweep(
            &ch.twin,
            &set,
            &reduced,
            &EngineParams::default(),
            Scenario::Baseline,
            &SweepOptions::with_workers(workers),
        )
        .unwrap();
        let mut out = Vec::new();
        write_records(&run.records, &mut out).unwrap();
        out
    };
    let (one, eight) = (bytes(1), bytes(8));
    check(one == eight, "sweep.jsonl differs between 1 and 8 workers")?;
    Ok(format!(
        "{} activations checked; 1 vs 8 workers identical over {} bytes",
        r.log.len(),
        one.len()
    ))
}

fn c7_dense_oracle() -> Result<String, String> {
    let twin = common::slab(30, 30, 5);
    let s1 = common::oracle_max_deviation(&twin, &[0.0], 400.0);
    let s12 = common::oracle_max_deviation(&twin, &[0.0, 330.0], 800.0);
    check(s1 <= 2.0, format!("S1 deviation {s1} ms"))?;
    check(s12 <= 2.0, format!("S1-S2 deviation {s12} ms"))?;
    Ok(format!("max deviation S1 {s1:.3} ms, S1-S2 {s12:.3} ms"))
}

fn c8_beta_blocker() -> Result<String, String> {
    let base = RestitutionSet::default();
    let bb = apply_beta_blocker(&base);
    for tissue in [TissueLabel::Healthy, TissueLabel::BorderZone] {
        for di in [20.0, 35.0, 80.0, 150.0, 400.0, f64::INFINITY] {
            for layer in [Layer::Endo, Layer::Mid, Layer::Epi] {
                let (a, b) = (base.apd(tissue, layer, di).unwrap(), bb.apd(tissue, layer, di).unwrap());
                check(b == BETA_BLOCKER_APD * a, format!("apd {a} -> {b}"))?;
            }
            let (a, b) = (base.cv(tissue, di).unwrap(), bb.cv(tissue, di).unwrap());
            check(b == BETA_BLOCKER_CV * a, format!("cv {a} -> {b}"))?;
        }
    }
    check(BETA_BLOCKER_APD == 1.45 && BETA_BLOCKER_CV == 0.94, "scaling constants")?;

    let twin = fixtures::marginal_phantom();
    let spec = ProtocolSpec {
        cv_factors: SweepRange::single(1.0),
        apd_factors: SweepRange::single(1.0),
        ..Default::default()
    };
    let count = |set: &RestitutionSet, scenario| {
        let run = run_sweep(&twin, set, &spec, &EngineParams::default(), scenario, &SweepOptions::with_workers(8))
            .unwrap();
        summarize(&run, &twin, DEFAULT_CLUSTER_RADIUS_MM).unwrap()
    };
    let b = count(&base, Scenario::Baseline);
    let t = count(&bb, Scenario::BetaBlocker);
    check(
        t.positive_count <= b.positive_count,
        format!("beta-blocker {} > baseline {}", t.positive_count, b.positive_count),
    )?;
    Ok(format!(
        "pointwise x1.45 / x0.94 exact; marginal phantom positives baseline {} ({} effective), beta-blocker {} ({} effective)",
        b.positive_count, b.effective_count, t.positive_count, t.effective_count
    ))
}

fn c9_threshold() -> Result<String, String> {
    let low = common::spread(0.4, 0.3, 7);
    let high = common::spread(1.4, 0.8, 11);
    let mut worst = 0.0f64;
    for bw in [Bandwidth::Fixed(0.2), Bandwidth::Silverman] {
        let opts = KdeOptions {
            bandwidth: bw,
            ..Default::default()
        };
        let h = |x: &[f64]| match bw {
            Bandwidth::Fixed(h) => h,
            Bandwidth::Silverman => silverman_bandwidth(x),
        };
        let theta = estimate_threshold(&low, &high, &opts).map_err(|e| e.to_string())?;
        let oracle = common::grid_crossing(&low, &high, h(&low), h(&high));
        worst = worst.max((theta - oracle).abs());
    }
    check(worst < 0.05, format!("synthetic threshold off by {worst}"))?;

    let mut cohort = fixtures::cohort();
    apply_relabels(&mut cohort, &fixtures::followup_relabels()).unwrap();
    let scores = score_cohort(&cohort, DEFAULT_THETA).unwrap();
    let (l, h) = scores_by_clinical_class(&scores);
    let theta = estimate_threshold(&l, &h, &KdeOptions::default()).map_err(|e| e.to_string())?;
    check((0.5..=1.0).contains(&theta), format!("cohort theta {theta}"))?;
    let changed = scores
        .iter()
        .filter(|s| classify(s.result.ar_index, theta) != s.result.arrisk)
        .count();
    check(changed <= 2, format!("{changed} labels change"))?;
    Ok(format!(
        "synthetic error {worst:.2e}; cohort theta {theta:.4}, {changed} labels change"
    ))
}

fn c10_anatomy() -> Result<String, String> {
    let ch = channel();
    let sccs = extract_sccs(&ch.twin, &SccOptions::default());
    check(sccs.len() == 1, format!("{} SCCs on the channel phantom", sccs.len()))?;
    let control = extract_sccs(&fixtures::control_phantom(), &SccOptions::default());
    check(control.is_empty(), format!("{} SCCs on the control", control.len()))?;
    let oracle = common::bfs_channel_voxels(&ch.twin) as i64;
    let got = sccs[0].centerline.len() as i64;
    check((got - oracle).abs() <= 2, format!("centerline {got} voxels, oracle {oracle}"))?;

    let shell = PhantomSpec {
        kind: PhantomKind::EllipsoidShell,
        wall_mm: 7.0,
        ..PhantomSpec::slab([44, 44, 56])
    };
    let shell = preprocess(&generate_phantom(&shell).unwrap()).map_err(|e| e.to_string())?;
    let mut worst_helix = 0.0f64;
    for twin in [&ch.twin, &shell] {
        let pairs: BTreeSet<(u8, bool)> = twin
            .pacing_sites
            .iter()
            .map(|s| (s.aha_segment, s.surface == Surface::Endo))
            .collect();
        check(
            twin.pacing_sites.len() == 34 && pairs.len() == 34,
            format!("{} sites, {} pairs", twin.pacing_sites.len(), pairs.len()),
        )?;
        let fibers = twin.fibers.as_ref().unwrap();
        for v in 0..twin.grid.len() {
            if twin.grid.labels[v].is_excitable() {
                let f = fibers[v];
                let n = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
                check((n - 1.0).abs() < 1e-5, format!("fiber norm {n}"))?;
            }
        }
        let depth = transmural_depth(twin);
        for target in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let v = (0..twin.grid.len())
                .filter(|&v| twin.grid.labels[v].is_excitable())
                .min_by(|&a, &b| (depth[a] - target).abs().total_cmp(&(depth[b] - target).abs()))
                .unwrap();
            let err = (helix_angle_deg(twin, v).unwrap() - (60.0 - 120.0 * depth[v])).abs();
            worst_helix = worst_helix.max(err);
        }
    }
    check(worst_helix < 1.0, format!("helix off by {worst_helix} deg"))?;
    Ok(format!(
        "1 SCC ({got} voxels, oracle {oracle}), control 0; 34 sites on slab and shell; helix error {worst_helix:.2e} deg"
    ))
}

type Criterion = (u32, &'static str, fn() -> Result<String, String>);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "protocol enumeration", c1_config_count),
        (2, "cohort table replay", c2_table_replay),
        (3, "planar conduction", c3_planar_conduction),
        (4, "reentry induction and absence", c4_reentry_induction),
        (5, "exit-site stability", c5_exit_sites),
        (6, "engine invariants and worker independence", c6_engine_invariants),
        (7, "dense time-stepped oracle", c7_dense_oracle),
        (8, "beta-blocker scaling", c8_beta_blocker),
        (9, "threshold estimation", c9_threshold),
        (10, "anatomy", c10_anatomy),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, f) in criteria {
        let label = format!("criterion {id:>2} {name}");
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{label}: PASS ({secs:.1} s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("{label}: FAIL ({secs:.1} s) {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
