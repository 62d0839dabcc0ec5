use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vtrisk_core::analysis::{save_zones, DEFAULT_CLUSTER_RADIUS_MM};
use vtrisk_core::anatomy::{extract_sccs, save_sccs, SccOptions};
use vtrisk_core::report::{cohort_markdown, patient_markdown, RiskReport};
use vtrisk_core::risk::{
    apply_relabels, concordance, load_cohort, read_relabels, score, score_cohort,
    write_scores_csv, DEFAULT_THETA,
};
use vtrisk_core::sweep::{read_records, SweepOptions};
use vtrisk_core::{
    apply_beta_blocker, generate_phantom, load_twin, preprocess, run_sweep, save_twin, summarize,
    EngineParams, PatientSummary, PhantomSpec, ProtocolSpec, RestitutionSet,
    Scc, Scenario, SweepRun,
};

#[derive(Parser)]
#[command(name = "vtrisk", version, about = "Arrhythmic risk from voxel digital twins")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic twin from a phantom spec.
    Phantom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill in layers, fibers, AHA segments and pacing sites; extract SCCs.
    Preprocess {
        twin: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pacing sweep and write sweep.jsonl.
    Sweep(SweepArgs),
    /// Summarize a sweep.jsonl into summary.json and zones.json.
    Analyze {
        sweep: PathBuf,
        #[arg(long)]
        twin: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a summary.json.
    Risk {
        summary: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Preprocess, sweep, analyze and score in one go.
    Pipeline {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
    },
    /// Score a cohort CSV and compare with clinical labels.
    Cohort {
        cohort: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        /// CSV of updated clinical labels (patient_id,clinical_risk).
        #[arg(long)]
        relabels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    twin: PathBuf,
    #[arg(long)]
    protocol: Option<PathBuf>,
    /// Restitution, engine and clustering settings (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Baseline)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Reserved; the pipeline uses no randomness.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from an existing sweep.jsonl in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    patient: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Baseline,
    BetaBlocker,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    restitution: RestitutionSet,
    engine: EngineParams,
    cluster_radius_mm: Option<f64>,
}

#[derive(Debug, Serialize)]
struct OutputFile {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    tool_version: &'static str,
    command: &'static str,
    config_hash: String,
    input_twin_hash: Option<String>,
    scenario: Option<Scenario>,
    restitution_hash: Option<String>,
    started_unix_s: u64,
    finished_unix_s: u64,
    wall_clock_s: f64,
    outputs: Vec<OutputFile>,
}

/// Failure with the stage it happened in and the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    stage: &'static str,
    error: anyhow::Error,
}

const CONFIG_ERROR: u8 = 2;
const INPUT_ERROR: u8 = 3;
const STAGE_ERROR: u8 = 4;

trait StageExt<T> {
    fn stage(self, code: u8, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, code: u8, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            stage,
            error: e.into(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error in {}: {:#}", f.stage, f.error);
            ExitCode::from(f.code)
        }
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash over every file of a twin directory, in name order.
fn twin_hash(dir: &Path) -> Result<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    names.retain(|p| p.is_file());
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
        h.update(fs::read(&p)?);
    }
    Ok(hex::encode(h.finalize()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg: RunConfig = match path {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    cfg.restitution.validate()?;
    cfg.engine.validate()?;
    if let Some(r) = cfg.cluster_radius_mm {
        if !(r > 0.0) {
            bail!("cluster_radius_mm must be positive");
        }
    }
    Ok(cfg)
}

fn load_protocol(path: Option<&Path>) -> Result<ProtocolSpec> {
    let spec = match path {
        Some(p) => ProtocolSpec::load(p)?,
        None => ProtocolSpec::default(),
    };
    spec.validate()?;
    Ok(spec)
}

fn config_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn write_manifest(
    out: &Path,
    mut manifest: RunManifest,
    outputs: &[&str],
    started: std::time::Instant,
) -> Result<()> {
    for name in outputs {
        let bytes = fs::read(out.join(name))?;
        manifest.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    manifest.finished_unix_s = now();
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    write_json(&out.join("manifest.json"), &manifest)
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .stage(STAGE_ERROR, "output")
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Phantom { config, out } => {
            let spec: PhantomSpec = read_json(&config).stage(CONFIG_ERROR, "phantom spec")?;
            let twin = generate_phantom(&spec).stage(CONFIG_ERROR, "phantom")?;
            save_twin(&twin, &out).stage(STAGE_ERROR, "save twin")?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Preprocess { twin, out } => {
            let t = load_twin(&twin).stage(INPUT_ERROR, "load twin")?;
            let t = preprocess(&t).stage(STAGE_ERROR, "preprocess")?;
            save_twin(&t, &out).stage(STAGE_ERROR, "save twin")?;
            let sccs = extract_sccs(&t, &SccOptions::default());
            save_sccs(&sccs, out.join("sccs.json")).stage(STAGE_ERROR, "scc")?;
            println!("wrote {} ({} SCCs)", out.display(), sccs.len());
            Ok(())
        }
        Command::Sweep(args) => {
            let (ctx, summary) = sweep_stage(&args, false)?;
            write_manifest(
                &args.out,
                ctx.manifest,
                &["sweep.jsonl", "summary.json", "zones.json"],
                ctx.started,
            )
            .stage(STAGE_ERROR, "manifest")?;
            print_summary(&summary);
            Ok(())
        }
        Command::Analyze {
            sweep,
            twin,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref()).stage(CONFIG_ERROR, "config")?;
            let t = load_twin(&twin).stage(INPUT_ERROR, "load twin")?;
            let t = preprocess(&t).stage(STAGE_ERROR, "preprocess")?;
            let records = read_records(&sweep).stage(INPUT_ERROR, "read sweep")?;
            let run = SweepRun {
                scenario: Scenario::Custom,
                workers: 0,
                resumed: 0,
                wall_clock_s: 0.0,
                records,
            };
            ensure_dir(&out)?;
            let radius = cfg.cluster_radius_mm.unwrap_or(DEFAULT_CLUSTER_RADIUS_MM);
            let summary = summarize(&run, &t, radius).stage(STAGE_ERROR, "analysis")?;
            write_json(&out.join("summary.json"), &summary).stage(STAGE_ERROR, "analysis")?;
            save_zones(&summary.zones, out.join("zones.json")).stage(STAGE_ERROR, "analysis")?;
            print_summary(&summary);
            Ok(())
        }
        Command::Risk {
            summary,
            theta,
            out,
        } => {
            let s: PatientSummary = read_json(&summary).stage(INPUT_ERROR, "read summary")?;
            let r = score(s.positive_count as u64, s.effective_count as u64, theta)
                .stage(STAGE_ERROR, "risk")?;
            ensure_dir(&out)?;
            let report = RiskReport {
                patient_id: "patient".into(),
                effective_count: s.effective_count,
                positive_count: s.positive_count,
                positive_baseline: s.positive_baseline,
                result: r,
            };
            write_json(&out.join("risk_report.json"), &report).stage(STAGE_ERROR, "risk")?;
            println!("AR-index {:.4} ARRISK {}", r.ar_index, r.arrisk);
            Ok(())
        }
        Command::Pipeline { sweep, theta } => pipeline(&sweep, theta),
        Command::Cohort {
            cohort,
            theta,
            relabels,
            out,
        } => {
            if !(theta > 0.0) {
                return Err(Failure {
                    code: CONFIG_ERROR,
                    stage: "cohort",
                    error: anyhow::anyhow!("theta must be positive"),
                });
            }
            let mut rows = load_cohort(&cohort).stage(INPUT_ERROR, "cohort")?;
            if let Some(p) = relabels {
                let file = fs::File::open(&p)
                    .with_context(|| format!("opening {}", p.display()))
                    .stage(INPUT_ERROR, "relabels")?;
                let rel = read_relabels(file).stage(INPUT_ERROR, "relabels")?;
                apply_relabels(&mut rows, &rel).stage(INPUT_ERROR, "relabels")?;
            }
            let scores = score_cohort(&rows, theta).stage(INPUT_ERROR, "cohort")?;
            let pairs: Vec<_> = scores
                .iter()
                .map(|s| (s.result.arrisk, s.clinical_risk))
                .collect();
            let conc = concordance(&pairs).stage(STAGE_ERROR, "concordance")?;
            ensure_dir(&out)?;
            let csv_file = fs::File::create(out.join("cohort_scores.csv"))
                .map_err(anyhow::Error::from)
                .stage(STAGE_ERROR, "cohort output")?;
            write_scores_csv(&scores, csv_file).stage(STAGE_ERROR, "cohort output")?;
            write_json(&out.join("concordance.json"), &conc).stage(STAGE_ERROR, "cohort output")?;
            fs::write(out.join("cohort_report.md"), cohort_markdown(&scores, &conc, theta))
                .map_err(anyhow::Error::from)
                .stage(STAGE_ERROR, "cohort output")?;
            let published = scores
                .iter()
                .filter(|s| s.published.is_some_and(|p| p == s.result.arrisk))
                .count();
            println!(
                "{} patients, {published} match the published ARRISK; positives {}/{}, negatives {}/{}",
                scores.len(),
                conc.positive_agreement,
                conc.positives,
                conc.negative_agreement,
                conc.negatives
            );
            Ok(())
        }
    }
}

fn print_summary(s: &PatientSummary) {
    println!(
        "{} configs, {} effective, {} reentries ({} at default parameters), {} zones",
        s.total_configs,
        s.effective_count,
        s.positive_count,
        s.positive_baseline,
        s.zones.len()
    );
}

struct SweepContext {
    sccs: Vec<Scc>,
    manifest: RunManifest,
    started: std::time::Instant,
}

fn sweep_stage(args: &SweepArgs, pipeline: bool) -> Result<(SweepContext, PatientSummary), Failure> {
    let started = std::time::Instant::now();
    let started_unix_s = now();
    if args.threads == 0 {
        return Err(Failure {
            code: CONFIG_ERROR,
            stage: "sweep",
            error: anyhow::anyhow!("--threads must be at least 1"),
        });
    }
    let cfg = load_config(args.config.as_deref()).stage(CONFIG_ERROR, "config")?;
    let spec = load_protocol(args.protocol.as_deref()).stage(CONFIG_ERROR, "protocol")?;
    let raw = load_twin(&args.twin).stage(INPUT_ERROR, "load twin")?;
    let twin_hash = twin_hash(&args.twin).stage(INPUT_ERROR, "load twin")?;
    let twin = preprocess(&raw).stage(STAGE_ERROR, "preprocess")?;
    ensure_dir(&args.out)?;

    let mut sccs = Vec::new();
    if pipeline {
        sccs = extract_sccs(&twin, &SccOptions::default());
        save_sccs(&sccs, args.out.join("sccs.json")).stage(STAGE_ERROR, "scc")?;
    }

    let (scenario, set) = match args.scenario {
        ScenarioArg::Baseline => (Scenario::Baseline, cfg.restitution.clone()),
        ScenarioArg::BetaBlocker => (Scenario::BetaBlocker, apply_beta_blocker(&cfg.restitution)),
    };
    let cfg_json = serde_json::to_vec(&cfg).stage(STAGE_ERROR, "config")?;
    let spec_json = serde_json::to_vec(&spec).stage(STAGE_ERROR, "config")?;
    let set_json = serde_json::to_vec(&set).stage(STAGE_ERROR, "config")?;
    let scenario_tag = format!("{scenario:?}");
    let opts = SweepOptions {
        workers: args.threads,
        checkpoint: Some(args.out.join("sweep.jsonl")),
        resume: args.resume,
    };
    let run = run_sweep(&twin, &set, &spec, &cfg.engine, scenario, &opts).stage(STAGE_ERROR, "sweep")?;
    let radius = cfg.cluster_radius_mm.unwrap_or(DEFAULT_CLUSTER_RADIUS_MM);
    let summary = summarize(&run, &twin, radius).stage(STAGE_ERROR, "analysis")?;
    write_json(&args.out.join("summary.json"), &summary).stage(STAGE_ERROR, "analysis")?;
    save_zones(&summary.zones, args.out.join("zones.json")).stage(STAGE_ERROR, "analysis")?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: if pipeline { "pipeline" } else { "sweep" },
        config_hash: config_hash(&[&cfg_json, &spec_json, scenario_tag.as_bytes()]),
        input_twin_hash: Some(twin_hash),
        scenario: Some(scenario),
        restitution_hash: Some(sha256_hex(&set_json)),
        started_unix_s,
        finished_unix_s: 0,
        wall_clock_s: 0.0,
        outputs: Vec::new(),
    };
    Ok((
        SweepContext {
            sccs,
            manifest,
            started,
        },
        summary,
    ))
}

fn pipeline(args: &SweepArgs, theta: f64) -> Result<(), Failure> {
    if !(theta > 0.0) {
        return Err(Failure {
            code: CONFIG_ERROR,
            stage: "risk",
            error: anyhow::anyhow!("theta must be positive"),
        });
    }
    let (ctx, summary) = sweep_stage(args, true)?;
    let patient = args.patient.clone().unwrap_or_else(|| {
        args.twin
            .file_name()
            .map_or("patient".into(), |n| n.to_string_lossy().into_owned())
    });
    let r = score(
        summary.positive_count as u64,
        summary.effective_count as u64,
        theta,
    )
    .stage(STAGE_ERROR, "risk")?;
    let report = RiskReport {
        patient_id: patient.clone(),
        effective_count: summary.effective_count,
        positive_count: summary.positive_count,
        positive_baseline: summary.positive_baseline,
        result: r,
    };
    write_json(&args.out.join("risk_report.json"), &report).stage(STAGE_ERROR, "risk")?;
    fs::write(
        args.out.join("report.md"),
        patient_markdown(&patient, &summary, &r, &ctx.sccs),
    )
    .map_err(anyhow::Error::from)
    .stage(STAGE_ERROR, "report")?;
    write_manifest(
        &args.out,
        ctx.manifest,
        &[
            "sccs.json",
            "sweep.jsonl",
            "summary.json",
            "zones.json",
            "risk_report.json",
            "report.md",
        ],
        ctx.started,
    )
    .stage(STAGE_ERROR, "manifest")?;
    print_summary(&summary);
    println!("AR-index {:.4} ARRISK {}", r.ar_index, r.arrisk);
    Ok(())
}
