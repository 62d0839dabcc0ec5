//! AR-index, ARRISK classes, threshold estimation and cohort concordance.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Threshold between LOW and HIGH on the AR-index scale.
pub const DEFAULT_THETA: f64 = 0.738;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("no effective simulations")]
    NoEffectiveSimulations,
    #[error("{positives} positives out of {effective} effective simulations")]
    InvalidCounts { positives: u64, effective: u64 },
    #[error("threshold must be positive, got {0}")]
    InvalidTheta(f64),
    #[error("score densities do not cross between the group means")]
    NoIntersection,
    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),
    #[error("row {row}: {message}")]
    RowParse { row: usize, message: String },
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("unknown patient {0}")]
    UnknownPatient(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RiskClass {
    Zero,
    Low,
    High,
}

impl RiskClass {
    pub const ALL: [RiskClass; 3] = [RiskClass::Zero, RiskClass::Low, RiskClass::High];

    pub fn is_positive(self) -> bool {
        self != RiskClass::Zero
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskClass::Zero => "ZERO",
            RiskClass::Low => "LOW",
            RiskClass::High => "HIGH",
        })
    }
}

impl FromStr for RiskClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ZERO" => Ok(RiskClass::Zero),
            "LOW" => Ok(RiskClass::Low),
            "HIGH" => Ok(RiskClass::High),
            other => Err(format!("unknown risk class {other:?}")),
        }
    }
}

/// Percentage of effective simulations that produced a sustained reentry.
pub fn ar_index(positives: u64, effective: u64) -> Result<f64, RiskError> {
    if effective == 0 {
        return Err(RiskError::NoEffectiveSimulations);
    }
    if positives > effective {
        return Err(RiskError::InvalidCounts {
            positives,
            effective,
        });
    }
    Ok(100.0 * positives as f64 / effective as f64)
}

/// ZERO at 0, LOW up to and including `theta`, HIGH above.
pub fn classify(ar: f64, theta: f64) -> RiskClass {
    debug_assert!(theta > 0.0);
    if ar <= 0.0 {
        RiskClass::Zero
    } else if ar <= theta {
        RiskClass::Low
    } else {
        RiskClass::High
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArResult {
    pub ar_index: f64,
    pub arrisk: RiskClass,
    pub theta: f64,
}

pub fn score(positives: u64, effective: u64, theta: f64) -> Result<ArResult, RiskError> {
    if !(theta > 0.0) {
        return Err(RiskError::InvalidTheta(theta));
    }
    let ar = ar_index(positives, effective)?;
    Ok(ArResult {
        ar_index: ar,
        arrisk: classify(ar, theta),
        theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `1.06 σ n^(-1/5)` per group.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeOptions {
    pub bandwidth: Bandwidth,
    pub grid_step: f64,
}

impl Default for KdeOptions {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Silverman,
            grid_step: 1e-4,
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    1.06 * std_dev(x) * (x.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate at `t`.
pub fn kde(samples: &[f64], h: f64, t: f64) -> f64 {
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    norm * samples
        .iter()
        .map(|&s| (-0.5 * ((t - s) / h).powi(2)).exp())
        .sum::<f64>()
}

/// Point between the two group means where the LOW and HIGH score densities
/// cross.
pub fn estimate_threshold(
    low: &[f64],
    high: &[f64],
    opts: &KdeOptions,
) -> Result<f64, RiskError> {
    if low.is_empty() || high.is_empty() {
        return Err(RiskError::DegenerateSamples("empty group".into()));
    }
    let bandwidth = |x: &[f64]| match opts.bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(x),
        Bandwidth::Fixed(h) => h,
    };
    let (hl, hh) = (bandwidth(low), bandwidth(high));
    if !(hl > 0.0 && hh > 0.0) {
        return Err(RiskError::DegenerateSamples("zero bandwidth".into()));
    }
    let (ml, mh) = (mean(low), mean(high));
    if ml == mh {
        return Err(RiskError::DegenerateSamples("equal group means".into()));
    }
    let (a, b) = (ml.min(mh), ml.max(mh));
    let diff = |t: f64| kde(low, hl, t) - kde(high, hh, t);
    let steps = ((b - a) / opts.grid_step).ceil() as usize;
    let mut prev_t = a;
    let mut prev = diff(a);
    for i in 1..=steps {
        let t = (a + i as f64 * opts.grid_step).min(b);
        let d = diff(t);
        if prev == 0.0 {
            return Ok(prev_t);
        }
        if prev.signum() != d.signum() {
            // linear interpolation inside the grid cell
            return Ok(prev_t + (t - prev_t) * prev / (prev - d));
        }
        prev_t = t;
        prev = d;
    }
    Err(RiskError::NoIntersection)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub patient_id: String,
    pub lv_mass_g: f64,
    pub bz_g: f64,
    pub cz_g: f64,
    pub scc_g: f64,
    pub lvef_pct: f64,
    pub age: u32,
    pub sex: String,
    /// Three letters: experienced VT, clinical inducibility, simulated VT.
    pub vt_flags: String,
    pub sim_time_h: f64,
    pub effective_sims: u64,
    pub vt_count: u64,
    pub vt_baseline: u64,
    /// Published class, kept for comparison.
    pub arrisk: Option<RiskClass>,
    pub clinical_risk: RiskClass,
}

fn parse_rows<T: for<'de> Deserialize<'de>>(reader: impl Read) -> Result<Vec<T>, RiskError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        out.push(row.map_err(|e: csv::Error| RiskError::RowParse {
            row: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_cohort(reader: impl Read) -> Result<Vec<CohortRecord>, RiskError> {
    let rows: Vec<CohortRecord> = parse_rows(reader)?;
    if rows.is_empty() {
        return Err(RiskError::EmptyCohort);
    }
    for (i, r) in rows.iter().enumerate() {
        if r.vt_count > r.effective_sims || r.vt_baseline > r.vt_count {
            return Err(RiskError::RowParse {
                row: i + 1,
                message: format!(
                    "{}: counts baseline {} <= positives {} <= effective {} violated",
                    r.patient_id, r.vt_baseline, r.vt_count, r.effective_sims
                ),
            });
        }
    }
    Ok(rows)
}

pub fn load_cohort(path: impl AsRef<Path>) -> Result<Vec<CohortRecord>, RiskError> {
    read_cohort(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relabel {
    pub patient_id: String,
    pub clinical_risk: RiskClass,
}

pub fn read_relabels(reader: impl Read) -> Result<Vec<Relabel>, RiskError> {
    parse_rows(reader)
}

/// Applies updated clinical labels; every relabeled patient must exist.
pub fn apply_relabels(cohort: &mut [CohortRecord], relabels: &[Relabel]) -> Result<(), RiskError> {
    let index: HashMap<&str, usize> = cohort
        .iter()
        .enumerate()
        .map(|(i, r)| (r.patient_id.as_str(), i))
        .collect();
    let mut updates = Vec::new();
    for r in relabels {
        let i = *index
            .get(r.patient_id.as_str())
            .ok_or_else(|| RiskError::UnknownPatient(r.patient_id.clone()))?;
        updates.push((i, r.clinical_risk));
    }
    for (i, c) in updates {
        cohort[i].clinical_risk = c;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortScore {
    pub patient_id: String,
    pub result: ArResult,
    pub clinical_risk: RiskClass,
    pub published: Option<RiskClass>,
}

pub fn score_cohort(cohort: &[CohortRecord], theta: f64) -> Result<Vec<CohortScore>, RiskError> {
    cohort
        .iter()
        .map(|r| {
            Ok(CohortScore {
                patient_id: r.patient_id.clone(),
                result: score(r.vt_count, r.effective_sims, theta)?,
                clinical_risk: r.clinical_risk,
                published: r.arrisk,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub total: usize,
    pub exact_matches: usize,
    /// Clinically positive (LOW or HIGH) cases.
    pub positives: usize,
    /// Clinically positive cases with a nonzero ARRISK.
    pub positive_agreement: usize,
    pub negatives: usize,
    /// Clinically negative cases with ARRISK ZERO.
    pub negative_agreement: usize,
    /// `confusion[clinical][arrisk]`, indexed ZERO, LOW, HIGH.
    pub confusion: [[usize; 3]; 3],
}

/// Agreement between predicted classes and clinical labels, given as
/// (predicted, clinical) pairs.
pub fn concordance(pairs: &[(RiskClass, RiskClass)]) -> Result<ConcordanceReport, RiskError> {
    if pairs.is_empty() {
        return Err(RiskError::EmptyCohort);
    }
    let mut rep = ConcordanceReport {
        total: pairs.len(),
        exact_matches: 0,
        positives: 0,
        positive_agreement: 0,
        negatives: 0,
        negative_agreement: 0,
        confusion: [[0; 3]; 3],
    };
    for &(pred, clin) in pairs {
        rep.confusion[clin.index()][pred.index()] += 1;
        rep.exact_matches += (pred == clin) as usize;
        if clin.is_positive() {
            rep.positives += 1;
            rep.positive_agreement += pred.is_positive() as usize;
        } else {
            rep.negatives += 1;
            rep.negative_agreement += (!pred.is_positive()) as usize;
        }
    }
    Ok(rep)
}

/// AR-indices of the clinically LOW and HIGH patients.
pub fn scores_by_clinical_class(scores: &[CohortScore]) -> (Vec<f64>, Vec<f64>) {
    let pick = |c: RiskClass| {
        scores
            .iter()
            .filter(|s| s.clinical_risk == c)
            .map(|s| s.result.ar_index)
            .collect::<Vec<f64>>()
    };
    (pick(RiskClass::Low), pick(RiskClass::High))
}

/// Writes scored rows as CSV.
pub fn write_scores_csv(scores: &[CohortScore], w: impl std::io::Write) -> Result<(), RiskError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| RiskError::Io(std::io::Error::other(e));
    wtr.write_record(["patient_id", "ar_index", "arrisk", "published_arrisk", "clinical_risk"])
        .map_err(io)?;
    for s in scores {
        wtr.write_record([
            s.patient_id.clone(),
            format!("{:.4}", s.result.ar_index),
            s.result.arrisk.to_string(),
            s.published.map(|c| c.to_string()).unwrap_or_default(),
            s.clinical_risk.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}
