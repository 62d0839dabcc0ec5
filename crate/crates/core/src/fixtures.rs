//! Data files shipped with the crate.

use crate::anatomy::preprocess;
use crate::phantom::{generate_phantom, PhantomSpec};
use crate::risk::{read_cohort, read_relabels, CohortRecord, Relabel, RiskClass, RiskError};
use crate::voxel::DigitalTwin;

pub const TABLE1_COHORT_CSV: &str = include_str!("../data/table1_cohort.csv");
pub const FOLLOWUP_RELABELS_CSV: &str = include_str!("../data/followup_relabels.csv");
pub const BETA_BLOCKER_CSV: &str = include_str!("../data/table3_beta_blocker.csv");

/// 51-patient reference cohort.
pub fn cohort() -> Vec<CohortRecord> {
    read_cohort(TABLE1_COHORT_CSV.as_bytes()).expect("shipped cohort parses")
}

/// Clinical labels updated at follow-up.
pub fn followup_relabels() -> Vec<Relabel> {
    read_relabels(FOLLOWUP_RELABELS_CSV.as_bytes()).expect("shipped relabels parse")
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct BetaBlockerRow {
    pub patient_id: String,
    pub clinical_risk: RiskClass,
    pub arrisk: RiskClass,
    pub arrisk_beta_blocker: RiskClass,
}

/// Published classes before and after the beta-blocker re-simulation.
pub fn beta_blocker_rows() -> Result<Vec<BetaBlockerRow>, RiskError> {
    csv::Reader::from_reader(BETA_BLOCKER_CSV.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e: csv::Error| RiskError::RowParse {
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub const CHANNEL_PHANTOM_JSON: &str = include_str!("../data/phantoms/channel.json");
pub const CONTROL_PHANTOM_JSON: &str = include_str!("../data/phantoms/control.json");
pub const MARGINAL_PHANTOM_JSON: &str = include_str!("../data/phantoms/marginal.json");

/// Parsed phantom spec of one of the shipped phantoms.
pub fn phantom_spec(json: &str) -> PhantomSpec {
    serde_json::from_str(json).expect("shipped phantom spec parses")
}

fn phantom(json: &str) -> DigitalTwin {
    preprocess(&generate_phantom(&phantom_spec(json)).expect("shipped phantom builds"))
        .expect("shipped phantom preprocesses")
}

/// Slab with a core zone crossed by one border-zone channel; reentrant
/// under the default parameters.
pub fn channel_phantom() -> DigitalTwin {
    phantom(CHANNEL_PHANTOM_JSON)
}

/// Same slab without scar.
pub fn control_phantom() -> DigitalTwin {
    phantom(CONTROL_PHANTOM_JSON)
}

/// Taller core zone around the same channel; reentry is rare at baseline.
pub fn marginal_phantom() -> DigitalTwin {
    phantom(MARGINAL_PHANTOM_JSON)
}
