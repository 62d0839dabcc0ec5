use crate::voxel::{DigitalTwin, Geometry, TissueLabel};

/// Orthonormal wall frame at a voxel: circumferential and longitudinal
/// directions span the tangent plane, `normal` points endo → epi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub circ: [f64; 3],
    pub long: [f64; 3],
    pub normal: [f64; 3],
    /// No tangent plane could be derived; axes fall back to the grid.
    pub degenerate: bool,
}

const GRID_FRAME: LocalFrame = LocalFrame {
    circ: [1.0, 0.0, 0.0],
    long: [0.0, 1.0, 0.0],
    normal: [0.0, 0.0, 1.0],
    degenerate: false,
};

/// Normalized transmural depth, 0 at the endocardium and 1 at the
/// epicardium. OUTSIDE voxels get NaN.
pub fn transmural_depth(twin: &DigitalTwin) -> Vec<f64> {
    let grid = &twin.grid;
    (0..grid.len())
        .map(|idx| {
            if grid.labels[idx] == TissueLabel::Outside {
                f64::NAN
            } else {
                depth_at(twin, idx)
            }
        })
        .collect()
}

fn depth_at(twin: &DigitalTwin, idx: usize) -> f64 {
    let grid = &twin.grid;
    match &twin.geometry {
        Geometry::Slab => {
            let nz = grid.dims[2];
            if nz == 1 {
                0.0
            } else {
                grid.coords(idx)[2] as f64 / (nz - 1) as f64
            }
        }
        Geometry::EllipsoidShell {
            center_mm,
            outer_radii_mm,
            wall_mm,
        } => shell_depth(grid.position_mm(idx), *center_mm, *outer_radii_mm, *wall_mm),
    }
}

fn rho(p: [f64; 3], c: [f64; 3], r: [f64; 3]) -> f64 {
    (0..3).map(|a| ((p[a] - c[a]) / r[a]).powi(2)).sum()
}

/// Fraction s ∈ [0, 1] such that `p` lies on the ellipsoid whose radii are
/// the inner radii grown by `s · wall`.
fn shell_depth(p: [f64; 3], c: [f64; 3], outer: [f64; 3], wall: f64) -> f64 {
    let radii = |s: f64| [0, 1, 2].map(|a| outer[a] - wall + s * wall);
    if rho(p, c, radii(0.0)) <= 1.0 {
        return 0.0;
    }
    if rho(p, c, radii(1.0)) >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rho(p, c, radii(mid)) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 1e-9).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn local_frame(twin: &DigitalTwin, idx: usize) -> LocalFrame {
    match &twin.geometry {
        Geometry::Slab => GRID_FRAME,
        Geometry::EllipsoidShell {
            center_mm: c,
            outer_radii_mm: r,
            wall_mm,
        } => {
            let p = twin.grid.position_mm(idx);
            let s = shell_depth(p, *c, *r, *wall_mm);
            let radii = [0, 1, 2].map(|a| r[a] - wall_mm + s * wall_mm);
            let grad = [0, 1, 2].map(|a| (p[a] - c[a]) / (radii[a] * radii[a]));
            let Some(normal) = normalize(grad) else {
                return LocalFrame {
                    degenerate: true,
                    ..GRID_FRAME
                };
            };
            // circumferential = axis × normal; undefined on the axis itself
            match normalize(cross([0.0, 0.0, 1.0], normal)) {
                Some(circ) => {
                    let long = cross(normal, circ);
                    LocalFrame {
                        circ,
                        long,
                        normal,
                        degenerate: false,
                    }
                }
                None => LocalFrame {
                    degenerate: true,
                    ..GRID_FRAME
                },
            }
        }
    }
}
