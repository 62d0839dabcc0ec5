//! 17-segment partition and pacing-site placement.
//!
//! Along the long axis the wall is cut into basal, mid and apical bands of
//! equal height with an apical cap (segment 17) over the last 15 %. Basal and
//! mid bands hold six 60° sectors, the apical band four 90° sectors.

use super::AnatomyError;
use crate::voxel::{DigitalTwin, Geometry, Layer, PacingSite, Surface, TissueLabel};

const APEX_CAP_START: f64 = 0.85;

/// Segment id for a normalized long-axis position (0 base, 1 apex) and a
/// circumferential fraction in [0, 1).
pub(crate) fn segment_for(long: f64, circ: f64) -> u8 {
    let circ = circ.rem_euclid(1.0);
    let band = APEX_CAP_START / 3.0;
    if long >= APEX_CAP_START {
        17
    } else if long < band {
        1 + (circ * 6.0).floor().min(5.0) as u8
    } else if long < 2.0 * band {
        7 + (circ * 6.0).floor().min(5.0) as u8
    } else {
        13 + (circ * 4.0).floor().min(3.0) as u8
    }
}

/// (long-axis fraction, circumferential fraction) of a voxel.
fn wall_coordinates(twin: &DigitalTwin, idx: usize) -> Result<(f64, f64), AnatomyError> {
    let grid = &twin.grid;
    match &twin.geometry {
        Geometry::Slab => {
            let [i, j, _] = grid.coords(idx);
            if grid.dims[1] < 2 {
                return Err(AnatomyError::AxisUndefined(
                    "slab needs at least two voxels along y".into(),
                ));
            }
            Ok((
                j as f64 / grid.dims[1] as f64,
                i as f64 / grid.dims[0] as f64,
            ))
        }
        Geometry::EllipsoidShell {
            center_mm: c,
            outer_radii_mm: r,
            ..
        } => {
            if r[2] <= 0.0 {
                return Err(AnatomyError::AxisUndefined("zero long radius".into()));
            }
            let p = grid.position_mm(idx);
            let long = ((c[2] - p[2]) / r[2]).clamp(0.0, 1.0);
            let phi = (p[1] - c[1]).atan2(p[0] - c[0]);
            Ok((long, phi / std::f64::consts::TAU))
        }
    }
}

/// Which wall surface a voxel lies on, if any.
pub fn surface_of(twin: &DigitalTwin, idx: usize) -> Option<Surface> {
    let grid = &twin.grid;
    if !grid.labels[idx].is_myocardium() {
        return None;
    }
    match &twin.geometry {
        Geometry::Slab => {
            let k = grid.coords(idx)[2];
            if k == 0 {
                Some(Surface::Endo)
            } else if k == grid.dims[2] - 1 {
                Some(Surface::Epi)
            } else {
                None
            }
        }
        Geometry::EllipsoidShell {
            center_mm: c,
            outer_radii_mm: r,
            wall_mm,
        } => {
            let inner = [r[0] - wall_mm, r[1] - wall_mm, r[2] - wall_mm];
            let rho = |p: [f64; 3], radii: [f64; 3]| -> f64 {
                (0..3).map(|a| ((p[a] - c[a]) / radii[a]).powi(2)).sum()
            };
            let mut epi = grid.neighbors6(idx).count() < 6;
            let mut endo = false;
            for n in grid.neighbors6(idx) {
                if grid.labels[n] != TissueLabel::Outside {
                    continue;
                }
                let p = grid.position_mm(n);
                if p[2] <= c[2] && rho(p, inner) <= 1.0 {
                    endo = true;
                } else if rho(p, *r) > 1.0 {
                    epi = true;
                }
            }
            if endo {
                Some(Surface::Endo)
            } else if epi {
                Some(Surface::Epi)
            } else {
                None
            }
        }
    }
}

/// Labels every myocardial voxel with its segment and places one endocardial
/// and one epicardial pacing site per segment. Endocardial sites get ids
/// 1–17, epicardial sites 18–34 (both ordered by segment).
pub fn aha_partition(twin: &DigitalTwin) -> Result<DigitalTwin, AnatomyError> {
    let layers = twin.layers.as_ref().ok_or(AnatomyError::MissingLayers)?;
    let grid = &twin.grid;
    let mut aha = vec![0u8; grid.len()];
    let mut sums = [[0.0f64; 4]; 18];
    for (idx, seg) in aha.iter_mut().enumerate() {
        if !grid.labels[idx].is_myocardium() {
            continue;
        }
        let (long, circ) = wall_coordinates(twin, idx)?;
        *seg = segment_for(long, circ);
        let p = grid.position_mm(idx);
        let s = &mut sums[*seg as usize];
        s[0] += p[0];
        s[1] += p[1];
        s[2] += p[2];
        s[3] += 1.0;
    }

    let mut sites = Vec::with_capacity(34);
    for (surface, wanted, id_base) in [
        (Surface::Endo, Layer::Endo, 0u32),
        (Surface::Epi, Layer::Epi, 17u32),
    ] {
        for seg in 1..=17u8 {
            let s = sums[seg as usize];
            if s[3] == 0.0 {
                return Err(AnatomyError::EmptySegment {
                    segment: seg,
                    surface: if surface == Surface::Endo { "endocardial" } else { "epicardial" },
                });
            }
            let centroid = [s[0] / s[3], s[1] / s[3], s[2] / s[3]];
            let mut best: Option<(f64, usize)> = None;
            for idx in 0..grid.len() {
                if aha[idx] != seg || layers[idx] != wanted {
                    continue;
                }
                if surface_of(twin, idx) != Some(surface) {
                    continue;
                }
                let d = crate::voxel::dist(grid.position_mm(idx), centroid);
                // strict < keeps the lowest index on ties
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, idx));
                }
            }
            let Some((_, idx)) = best else {
                return Err(AnatomyError::EmptySegment {
                    segment: seg,
                    surface: if surface == Surface::Endo { "endocardial" } else { "epicardial" },
                });
            };
            sites.push(PacingSite {
                id: id_base + seg as u32,
                aha_segment: seg,
                surface,
                center_voxel: grid.coords(idx),
                capture_radius_mm: 2.0,
            });
        }
    }
    let mut out = twin.clone();
    out.aha_segment = Some(aha);
    out.pacing_sites = sites;
    Ok(out)
}
