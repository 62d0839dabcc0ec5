//! Synthetic ventricular phantoms: flat slabs and half-ellipsoid shells with
//! an optional scar made of a core-zone block crossed by a border-zone
//! channel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::voxel::{DigitalTwin, Geometry, ModelError, TissueLabel, VoxelGrid};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("scar does not fit: {0}")]
    ScarDoesNotFit(String),
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Slab,
    EllipsoidShell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScarSpec {
    /// Core-zone block extent. For slabs: x (along the channel), y, z
    /// (from the endocardial face). For shells: arc length, height, ignored.
    pub cz_extent_mm: [f64; 3],
    pub channel_width_mm: f64,
    /// Defaults to the block extent along the channel.
    #[serde(default)]
    pub channel_length_mm: Option<f64>,
    #[serde(default)]
    pub bz_rim_mm: f64,
    /// Block center in the wall plane; defaults to the middle of the wall.
    #[serde(default)]
    pub center_mm: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub dims: [usize; 3],
    #[serde(default = "unit_spacing")]
    pub spacing_mm: [f64; 3],
    #[serde(default)]
    pub scar: Option<ScarSpec>,
    /// Shell wall thickness.
    #[serde(default = "default_wall")]
    pub wall_mm: f64,
}

fn unit_spacing() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

fn default_wall() -> f64 {
    8.0
}

impl PhantomSpec {
    pub fn slab(dims: [usize; 3]) -> Self {
        Self {
            kind: PhantomKind::Slab,
            dims,
            spacing_mm: unit_spacing(),
            scar: None,
            wall_mm: default_wall(),
        }
    }

    pub fn with_scar(mut self, scar: ScarSpec) -> Self {
        self.scar = Some(scar);
        self
    }

    fn validate(&self) -> Result<(), PhantomError> {
        if self.dims.contains(&0) {
            return Err(PhantomError::InvalidSpec(format!("dims {:?}", self.dims)));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(PhantomError::InvalidSpec(format!(
                "spacing {:?}",
                self.spacing_mm
            )));
        }
        if let Some(scar) = &self.scar {
            if !(scar.channel_width_mm > 0.0) {
                return Err(PhantomError::InvalidSpec(
                    "channel_width_mm must be positive".into(),
                ));
            }
            if scar.cz_extent_mm.iter().any(|&e| !(e > 0.0)) {
                return Err(PhantomError::InvalidSpec(
                    "cz_extent_mm must be positive".into(),
                ));
            }
            if scar.bz_rim_mm < 0.0 {
                return Err(PhantomError::InvalidSpec("bz_rim_mm must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Builds the label volume described by `spec`. Layers, fibers and AHA
/// segments are left for [`crate::anatomy::preprocess`].
pub fn generate_phantom(spec: &PhantomSpec) -> Result<DigitalTwin, PhantomError> {
    spec.validate()?;
    let (labels, geometry) = match spec.kind {
        PhantomKind::Slab => (slab_labels(spec)?, Geometry::Slab),
        PhantomKind::EllipsoidShell => shell_labels(spec)?,
    };
    let grid = VoxelGrid::new(spec.dims, spec.spacing_mm, [0.0; 3], labels)?;
    Ok(DigitalTwin::from_grid(grid, geometry))
}

/// Half-open voxel range `[start, end)` along one axis.
#[derive(Debug, Clone, Copy)]
struct Span {
    start: i64,
    end: i64,
}

impl Span {
    fn centered(center_vox: f64, count: i64) -> Self {
        let start = (center_vox - count as f64 / 2.0).round() as i64;
        Self {
            start,
            end: start + count,
        }
    }

    fn contains(&self, v: i64) -> bool {
        v >= self.start && v < self.end
    }

    fn len(&self) -> i64 {
        self.end - self.start
    }
}

fn voxels(extent_mm: f64, spacing: f64) -> i64 {
    ((extent_mm / spacing).round() as i64).max(1)
}

fn slab_labels(spec: &PhantomSpec) -> Result<Vec<TissueLabel>, PhantomError> {
    let [nx, ny, nz] = spec.dims;
    let s = spec.spacing_mm;
    let mut labels = vec![TissueLabel::Healthy; nx * ny * nz];
    let Some(scar) = &spec.scar else {
        return Ok(labels);
    };

    let center_vox = match scar.center_mm {
        Some([cx, cy]) => [cx / s[0], cy / s[1]],
        None => [nx as f64 / 2.0, ny as f64 / 2.0],
    };
    let bx = Span::centered(center_vox[0], voxels(scar.cz_extent_mm[0], s[0]));
    let by = Span::centered(center_vox[1], voxels(scar.cz_extent_mm[1], s[1]));
    let nzc = voxels(scar.cz_extent_mm[2], s[2]);
    if nzc > nz as i64 {
        return Err(PhantomError::ScarDoesNotFit(format!(
            "core zone depth {nzc} voxels exceeds wall of {nz}"
        )));
    }
    let bz = Span { start: 0, end: nzc };
    // healthy tissue must remain on both channel ends
    if bx.start < 1 || bx.end > nx as i64 - 1 || by.start < 0 || by.end > ny as i64 {
        return Err(PhantomError::ScarDoesNotFit(format!(
            "core zone x {:?} y {:?} in a {}x{} wall",
            (bx.start, bx.end),
            (by.start, by.end),
            nx,
            ny
        )));
    }
    let width = voxels(scar.channel_width_mm, s[1]);
    if width > by.len() - 2 {
        return Err(PhantomError::ScarDoesNotFit(format!(
            "channel of {width} voxels leaves no core zone beside it"
        )));
    }
    let length = match scar.channel_length_mm {
        Some(l) => voxels(l, s[0]),
        None => bx.len(),
    };
    if length < bx.len() {
        return Err(PhantomError::ScarDoesNotFit(
            "channel shorter than the core zone does not cross it".into(),
        ));
    }
    let cy = Span {
        start: by.start + (by.len() - width) / 2,
        end: by.start + (by.len() - width) / 2 + width,
    };
    let cx = Span {
        start: bx.start - (length - bx.len()) / 2,
        end: bx.start - (length - bx.len()) / 2 + length,
    };
    if cx.start < 0 || cx.end > nx as i64 {
        return Err(PhantomError::ScarDoesNotFit("channel leaves the grid".into()));
    }

    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let (ii, jj, kk) = (i as i64, j as i64, k as i64);
                if !bz.contains(kk) {
                    continue;
                }
                if cx.contains(ii) && cy.contains(jj) {
                    labels[idx(i, j, k)] = TissueLabel::BorderZone;
                } else if bx.contains(ii) && by.contains(jj) {
                    labels[idx(i, j, k)] = TissueLabel::CoreZone;
                }
            }
        }
    }

    if scar.bz_rim_mm > 0.0 {
        // distance from each voxel center to the core-zone box
        let lo = [bx.start as f64 * s[0], by.start as f64 * s[1], 0.0];
        let hi = [
            (bx.end - 1) as f64 * s[0],
            (by.end - 1) as f64 * s[1],
            (bz.end - 1) as f64 * s[2],
        ];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let p = [i as f64 * s[0], j as f64 * s[1], k as f64 * s[2]];
                    let d2: f64 = (0..3)
                        .map(|a| {
                            let d = (lo[a] - p[a]).max(p[a] - hi[a]).max(0.0);
                            d * d
                        })
                        .sum();
                    let v = &mut labels[idx(i, j, k)];
                    if *v == TissueLabel::Healthy && d2.sqrt() <= scar.bz_rim_mm + 1e-9 {
                        *v = TissueLabel::BorderZone;
                    }
                }
            }
        }
    }
    Ok(labels)
}

/// Geometry of the half-ellipsoid shell inscribed in the grid.
fn shell_geometry(spec: &PhantomSpec) -> Result<Geometry, PhantomError> {
    let [nx, ny, nz] = spec.dims;
    let s = spec.spacing_mm;
    let ex = (nx - 1) as f64 * s[0];
    let ey = (ny - 1) as f64 * s[1];
    let ez = (nz - 1) as f64 * s[2];
    let margin = s.iter().cloned().fold(0.0, f64::max);
    let radius = (ex.min(ey) / 2.0 - margin).max(0.0);
    let long = (ez - 2.0 * margin).max(0.0);
    if spec.wall_mm <= 0.0 || radius <= spec.wall_mm || long <= spec.wall_mm {
        return Err(PhantomError::InvalidSpec(format!(
            "grid too small for a shell with {} mm wall",
            spec.wall_mm
        )));
    }
    Ok(Geometry::EllipsoidShell {
        center_mm: [ex / 2.0, ey / 2.0, ez - margin],
        outer_radii_mm: [radius, radius, long],
        wall_mm: spec.wall_mm,
    })
}

fn ellipsoid_rho(p: [f64; 3], c: [f64; 3], r: [f64; 3]) -> f64 {
    (0..3).map(|a| ((p[a] - c[a]) / r[a]).powi(2)).sum::<f64>()
}

fn shell_labels(spec: &PhantomSpec) -> Result<(Vec<TissueLabel>, Geometry), PhantomError> {
    let geometry = shell_geometry(spec)?;
    let Geometry::EllipsoidShell {
        center_mm: c,
        outer_radii_mm: r,
        wall_mm,
    } = geometry
    else {
        unreachable!()
    };
    let inner = [r[0] - wall_mm, r[1] - wall_mm, r[2] - wall_mm];
    let [nx, ny, nz] = spec.dims;
    let s = spec.spacing_mm;
    let mut labels = vec![TissueLabel::Outside; nx * ny * nz];

    let mid_radius = r[0] - wall_mm / 2.0;
    let scar = spec.scar.as_ref();
    let (arc0, h0) = match scar.and_then(|sc| sc.center_mm) {
        Some([a, h]) => (a, h),
        None => (0.0, c[2] - r[2] / 2.0),
    };
    if let Some(sc) = scar {
        if sc.cz_extent_mm[0] / mid_radius > std::f64::consts::PI {
            return Err(PhantomError::ScarDoesNotFit(
                "core zone wraps around the shell".into(),
            ));
        }
        if h0 + sc.cz_extent_mm[1] / 2.0 > c[2] || h0 - sc.cz_extent_mm[1] / 2.0 < c[2] - r[2] {
            return Err(PhantomError::ScarDoesNotFit(
                "core zone leaves the shell along its axis".into(),
            ));
        }
        if sc.channel_width_mm >= sc.cz_extent_mm[1] - 2.0 * s[2] {
            return Err(PhantomError::ScarDoesNotFit(
                "channel leaves no core zone beside it".into(),
            ));
        }
    }

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let p = [i as f64 * s[0], j as f64 * s[1], k as f64 * s[2]];
                if p[2] > c[2] || ellipsoid_rho(p, c, r) > 1.0 || ellipsoid_rho(p, c, inner) <= 1.0
                {
                    continue;
                }
                let idx = i + nx * (j + ny * k);
                labels[idx] = TissueLabel::Healthy;
                let Some(sc) = scar else { continue };
                let arc = (p[1] - c[1]).atan2(p[0] - c[0]) * mid_radius;
                let (da, dh) = ((arc - arc0).abs(), (p[2] - h0).abs());
                let half_len = sc.channel_length_mm.unwrap_or(sc.cz_extent_mm[0]) / 2.0;
                let in_block = da <= sc.cz_extent_mm[0] / 2.0 && dh <= sc.cz_extent_mm[1] / 2.0;
                let in_channel = da <= half_len && dh < sc.channel_width_mm / 2.0;
                if in_channel {
                    labels[idx] = TissueLabel::BorderZone;
                } else if in_block {
                    labels[idx] = TissueLabel::CoreZone;
                } else if sc.bz_rim_mm > 0.0 {
                    let ga = (da - sc.cz_extent_mm[0] / 2.0).max(0.0);
                    let gh = (dh - sc.cz_extent_mm[1] / 2.0).max(0.0);
                    if (ga * ga + gh * gh).sqrt() <= sc.bz_rim_mm {
                        labels[idx] = TissueLabel::BorderZone;
                    }
                }
            }
        }
    }
    Ok((labels, geometry))
}
