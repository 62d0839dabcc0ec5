//! Pointwise rules used by the propagation engine.

/// Front speed along a grid edge for an elliptic (Riemannian) anisotropy
/// metric with longitudinal speed `cv` and transverse speed `cv / k`.
///
/// `c = |edge_dir · fiber|`; the speed is `cv / sqrt(c² + k²(1 − c²))`.
#[inline]
pub fn edge_speed(cv: f64, edge_dir: [f64; 3], fiber: [f64; 3], k: f64) -> f64 {
    let c = (edge_dir[0] * fiber[0] + edge_dir[1] * fiber[1] + edge_dir[2] * fiber[2]).abs();
    let c2 = (c * c).min(1.0);
    cv / (c2 + k * k * (1.0 - c2)).sqrt()
}

/// Blend of the local APD with the mean APD of depolarized neighbors.
pub fn electrotonic_apd(apd_local: f64, neighbor_apds: &[f64], w_e: f64) -> f64 {
    if neighbor_apds.is_empty() {
        return apd_local;
    }
    let mean = neighbor_apds.iter().sum::<f64>() / neighbor_apds.len() as f64;
    (1.0 - w_e) * apd_local + w_e * mean
}

pub fn cv_with_memory(cv_new: f64, prev_cv: Option<f64>, w_m: f64) -> f64 {
    match prev_cv {
        Some(prev) => (1.0 - w_m) * cv_new + w_m * prev,
        None => cv_new,
    }
}
