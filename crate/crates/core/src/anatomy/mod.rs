//! Automated preprocessing of a labeled twin: transmural layers, rule-based
//! fibers, AHA segments with pacing sites, and slow-conduction-channel
//! extraction.

mod aha;
mod fibers;
mod frame;
mod layers;
mod scc;
mod thinning;

pub use aha::{aha_partition, surface_of};
pub use fibers::{assign_fibers, helix_angle_deg, FiberReport, FiberRule};
pub use frame::{local_frame, transmural_depth, LocalFrame};
pub use layers::{assign_layers, layer_for_depth};
pub use scc::{extract_sccs, save_sccs, SccOptions, Scc};
pub use thinning::{is_simple, thin_to_curve};

use thiserror::Error;

use crate::voxel::DigitalTwin;

#[derive(Debug, Error)]
pub enum AnatomyError {
    #[error("no myocardial voxels to layer")]
    NoWallFound,
    #[error("transmural depth unavailable: run assign_layers first")]
    MissingLayers,
    #[error("long axis undefined: {0}")]
    AxisUndefined(String),
    #[error("AHA segment {segment} has no {surface} surface voxel")]
    EmptySegment { segment: u8, surface: &'static str },
    #[error("sccs.json: {0}")]
    Io(#[from] std::io::Error),
    #[error("sccs.json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Runs every preprocessing pass whose output is missing.
pub fn preprocess(twin: &DigitalTwin) -> Result<DigitalTwin, AnatomyError> {
    let mut out = twin.clone();
    if out.layers.is_none() {
        out = assign_layers(&out)?;
    }
    if out.fibers.is_none() {
        out = assign_fibers(&out, &FiberRule::default())?.0;
    }
    if out.aha_segment.is_none() || out.pacing_sites.len() != 34 {
        out = aha_partition(&out)?;
    }
    Ok(out)
}
