//! Markdown and JSON reports.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::anatomy::Scc;
use crate::risk::{ArResult, CohortScore, ConcordanceReport, RiskClass};
use crate::sweep::PatientSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub patient_id: String,
    pub effective_count: usize,
    pub positive_count: usize,
    pub positive_baseline: usize,
    pub result: ArResult,
}

pub fn patient_markdown(
    patient_id: &str,
    summary: &PatientSummary,
    risk: &ArResult,
    sccs: &[Scc],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Arrhythmic risk report: {patient_id}\n");
    let _ = writeln!(s, "Scenario: {:?}\n", summary.scenario);
    let _ = writeln!(s, "| quantity | value |");
    let _ = writeln!(s, "|---|---|");
    let _ = writeln!(s, "| configurations | {} |", summary.total_configs);
    let _ = writeln!(s, "| effective simulations | {} |", summary.effective_count);
    let _ = writeln!(s, "| sustained reentries | {} |", summary.positive_count);
    let _ = writeln!(s, "| reentries at default parameters | {} |", summary.positive_baseline);
    let _ = writeln!(s, "| AR-index | {:.4} |", risk.ar_index);
    let _ = writeln!(s, "| ARRISK | {} (theta {}) |", risk.arrisk, risk.theta);

    let _ = writeln!(s, "\n## Risk zones\n");
    if summary.zones.is_empty() {
        let _ = writeln!(s, "No exit sites.");
    } else {
        let _ = writeln!(s, "| zone | support | centroid (mm) | AHA segments |");
        let _ = writeln!(s, "|---|---|---|---|");
        for z in &summary.zones {
            let segs: Vec<String> = z.aha_segments.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(
                s,
                "| {} | {} | ({:.1}, {:.1}, {:.1}) | {} |",
                z.zone_id,
                z.support,
                z.centroid_mm[0],
                z.centroid_mm[1],
                z.centroid_mm[2],
                segs.join(", ")
            );
        }
    }

    let _ = writeln!(s, "\n## Reentries\n");
    if summary.reentries.is_empty() {
        let _ = writeln!(s, "None.");
    } else {
        let _ = writeln!(s, "| config | site | onset (ms) | CL (ms) | cycles | exit segment |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for p in &summary.reentries {
            let ev = &p.reentry;
            let _ = writeln!(
                s,
                "| {} | {} | {:.1} | {:.1} | {} | {} |",
                p.config_index,
                p.pacing_site_id,
                ev.onset_ms,
                ev.cycle_length_ms,
                ev.n_cycles,
                ev.exit_aha_segment.map_or("-".to_string(), |x| x.to_string())
            );
        }
    }

    let _ = writeln!(s, "\n## Slow conduction channels\n");
    if sccs.is_empty() {
        let _ = writeln!(s, "None.");
    } else {
        let _ = writeln!(s, "| id | length (mm) | mass (g) |");
        let _ = writeln!(s, "|---|---|---|");
        for c in sccs {
            let _ = writeln!(s, "| {} | {:.1} | {:.3} |", c.id, c.length_mm, c.mass_g);
        }
    }
    s
}

pub fn cohort_markdown(scores: &[CohortScore], conc: &ConcordanceReport, theta: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Cohort risk report\n");
    let _ = writeln!(s, "theta = {theta}\n");
    let _ = writeln!(s, "| patient | AR-index | ARRISK | published | clinical |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for r in scores {
        let _ = writeln!(
            s,
            "| {} | {:.4} | {} | {} | {} |",
            r.patient_id,
            r.result.ar_index,
            r.result.arrisk,
            r.published.map_or("-".to_string(), |c| c.to_string()),
            r.clinical_risk
        );
    }
    let _ = writeln!(s, "\n## Concordance\n");
    let _ = writeln!(s, "- exact class matches: {}/{}", conc.exact_matches, conc.total);
    let _ = writeln!(
        s,
        "- clinically positive with nonzero ARRISK: {}/{}",
        conc.positive_agreement, conc.positives
    );
    let _ = writeln!(
        s,
        "- clinically negative with ARRISK ZERO: {}/{}",
        conc.negative_agreement, conc.negatives
    );
    let _ = writeln!(s, "\n| clinical \\ ARRISK | ZERO | LOW | HIGH |");
    let _ = writeln!(s, "|---|---|---|---|");
    for c in RiskClass::ALL {
        let row = conc.confusion[c as usize];
        let _ = writeln!(s, "| {c} | {} | {} | {} |", row[0], row[1], row[2]);
    }
    s
}
