use serde::{Deserialize, Serialize};

use super::frame::dot;
use super::{local_frame, transmural_depth, AnatomyError};
use crate::voxel::DigitalTwin;

/// Linear transmural helix-angle rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberRule {
    pub endo_helix_deg: f64,
    pub epi_helix_deg: f64,
}

impl Default for FiberRule {
    fn default() -> Self {
        Self {
            endo_helix_deg: 60.0,
            epi_helix_deg: -60.0,
        }
    }
}

impl FiberRule {
    pub fn helix_deg(&self, depth: f64) -> f64 {
        self.endo_helix_deg + (self.epi_helix_deg - self.endo_helix_deg) * depth
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FiberReport {
    /// Voxels whose frame fell back to the grid axes.
    pub degenerate_frames: usize,
}

/// Fibers in the local tangent plane rotated by the helix angle from the
/// circumferential direction. Non-excitable voxels get the zero vector.
pub fn assign_fibers(
    twin: &DigitalTwin,
    rule: &FiberRule,
) -> Result<(DigitalTwin, FiberReport), AnatomyError> {
    if twin.layers.is_none() {
        return Err(AnatomyError::MissingLayers);
    }
    let depth = transmural_depth(twin);
    let mut report = FiberReport::default();
    let fibers = (0..twin.grid.len())
        .map(|idx| {
            if !twin.label(idx).is_excitable() {
                return [0.0f32; 3];
            }
            let frame = local_frame(twin, idx);
            if frame.degenerate {
                report.degenerate_frames += 1;
            }
            let a = rule.helix_deg(depth[idx]).to_radians();
            let (s, c) = a.sin_cos();
            let v = [0, 1, 2].map(|k| c * frame.circ[k] + s * frame.long[k]);
            let n = dot(v, v).sqrt();
            [0, 1, 2].map(|k| (v[k] / n) as f32)
        })
        .collect();
    let mut out = twin.clone();
    out.fibers = Some(fibers);
    Ok((out, report))
}

/// Helix angle of a stored fiber in its local frame, in degrees.
pub fn helix_angle_deg(twin: &DigitalTwin, idx: usize) -> Option<f64> {
    let f = twin.fibers.as_ref()?[idx];
    let f = [f[0] as f64, f[1] as f64, f[2] as f64];
    let frame = local_frame(twin, idx);
    Some(dot(f, frame.long).atan2(dot(f, frame.circ)).to_degrees())
}
