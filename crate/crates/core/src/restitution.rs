//! APD and CV restitution curves per tissue and layer.
//!
//! Both curves are single exponentials in the diastolic interval (DI):
//!
//! ```text
//! APD(DI) = apd_max − a · exp(−DI / tau)
//! CV(DI)  = cv_max · (1 − b · exp(−DI / tau_c))
//! ```
//!
//! A set carries global multipliers (`apd_factor`, `cv_factor`) which are
//! applied as a single multiplication after the curve is evaluated.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::voxel::{Layer, TissueLabel};

pub const BETA_BLOCKER_APD: f64 = 1.45;
pub const BETA_BLOCKER_CV: f64 = 0.94;

#[derive(Debug, Error)]
pub enum RestitutionError {
    #[error("{0:?} tissue is not excitable")]
    NotExcitable(TissueLabel),
    #[error("no APD curve for layer {0:?}")]
    NoLayer(Layer),
    #[error("invalid curve {name}: {reason}")]
    InvalidCurve { name: String, reason: String },
    #[error("restitution file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("restitution file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApdCurve {
    pub apd_max_ms: f64,
    pub amplitude_ms: f64,
    pub tau_ms: f64,
    pub di_min_ms: f64,
}

impl ApdCurve {
    #[inline]
    pub fn eval(&self, di: f64) -> f64 {
        self.apd_max_ms - self.amplitude_ms * (-di / self.tau_ms).exp()
    }

    fn check(&self, name: &str) -> Result<(), RestitutionError> {
        let bad = |reason: &str| {
            Err(RestitutionError::InvalidCurve {
                name: name.to_string(),
                reason: reason.to_string(),
            })
        };
        if !(self.apd_max_ms > 0.0 && self.tau_ms > 0.0 && self.di_min_ms >= 0.0) {
            return bad("apd_max, tau must be positive and di_min non-negative");
        }
        if !(self.amplitude_ms >= 0.0) {
            return bad("amplitude must be non-negative");
        }
        if self.eval(self.di_min_ms) <= 0.0 {
            return bad("APD not positive at di_min");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvCurve {
    /// mm/ms
    pub cv_max: f64,
    pub amplitude: f64,
    pub tau_ms: f64,
    pub di_min_ms: f64,
}

impl CvCurve {
    #[inline]
    pub fn eval(&self, di: f64) -> f64 {
        self.cv_max * (1.0 - self.amplitude * (-di / self.tau_ms).exp())
    }

    fn check(&self, name: &str) -> Result<(), RestitutionError> {
        if !(self.cv_max > 0.0 && self.tau_ms > 0.0 && self.di_min_ms >= 0.0) {
            return Err(RestitutionError::InvalidCurve {
                name: name.to_string(),
                reason: "cv_max, tau must be positive and di_min non-negative".into(),
            });
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return Err(RestitutionError::InvalidCurve {
                name: name.to_string(),
                reason: "amplitude must lie in [0, 1)".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCurves {
    pub endo: ApdCurve,
    pub mid: ApdCurve,
    pub epi: ApdCurve,
}

impl LayerCurves {
    fn get(&self, layer: Layer) -> Option<&ApdCurve> {
        match layer {
            Layer::Endo => Some(&self.endo),
            Layer::Mid => Some(&self.mid),
            Layer::Epi => Some(&self.epi),
            Layer::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApdTable {
    pub healthy: LayerCurves,
    pub border_zone: LayerCurves,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvTable {
    pub healthy: CvCurve,
    pub border_zone: CvCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestitutionSet {
    pub apd: ApdTable,
    pub cv: CvTable,
    #[serde(default = "one")]
    pub apd_factor: f64,
    #[serde(default = "one")]
    pub cv_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for RestitutionSet {
    fn default() -> Self {
        let apd = |apd_max_ms: f64| ApdCurve {
            apd_max_ms,
            amplitude_ms: 0.5 * apd_max_ms,
            tau_ms: 80.0,
            di_min_ms: 20.0,
        };
        let bz = |healthy: f64| apd(healthy * 1.15);
        let cv = |cv_max: f64| CvCurve {
            cv_max,
            amplitude: 0.4,
            tau_ms: 60.0,
            di_min_ms: 20.0,
        };
        Self {
            apd: ApdTable {
                healthy: LayerCurves {
                    endo: apd(252.0),
                    mid: apd(279.0),
                    epi: apd(243.0),
                },
                border_zone: LayerCurves {
                    endo: bz(252.0),
                    mid: bz(279.0),
                    epi: bz(243.0),
                },
            },
            cv: CvTable {
                healthy: cv(0.7),
                border_zone: cv(0.35),
            },
            apd_factor: 1.0,
            cv_factor: 1.0,
        }
    }
}

impl RestitutionSet {
    pub fn from_json(text: &str) -> Result<Self, RestitutionError> {
        let set: Self = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RestitutionError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), RestitutionError> {
        for (tissue, table) in [
            ("healthy", &self.apd.healthy),
            ("border_zone", &self.apd.border_zone),
        ] {
            table.endo.check(&format!("apd.{tissue}.endo"))?;
            table.mid.check(&format!("apd.{tissue}.mid"))?;
            table.epi.check(&format!("apd.{tissue}.epi"))?;
        }
        self.cv.healthy.check("cv.healthy")?;
        self.cv.border_zone.check("cv.border_zone")?;
        for (name, f) in [("apd_factor", self.apd_factor), ("cv_factor", self.cv_factor)] {
            if !(f > 0.0 && f.is_finite()) {
                return Err(RestitutionError::InvalidCurve {
                    name: name.into(),
                    reason: format!("factor {f} must be positive"),
                });
            }
        }
        Ok(())
    }

    pub fn apd_curve(&self, tissue: TissueLabel, layer: Layer) -> Result<&ApdCurve, RestitutionError> {
        let table = match tissue {
            TissueLabel::Healthy => &self.apd.healthy,
            TissueLabel::BorderZone => &self.apd.border_zone,
            other => return Err(RestitutionError::NotExcitable(other)),
        };
        table.get(layer).ok_or(RestitutionError::NoLayer(layer))
    }

    pub fn cv_curve(&self, tissue: TissueLabel) -> Result<&CvCurve, RestitutionError> {
        match tissue {
            TissueLabel::Healthy => Ok(&self.cv.healthy),
            TissueLabel::BorderZone => Ok(&self.cv.border_zone),
            other => Err(RestitutionError::NotExcitable(other)),
        }
    }

    /// Scaled APD in ms. Pass `f64::INFINITY` for the plateau value.
    pub fn apd(&self, tissue: TissueLabel, layer: Layer, di: f64) -> Result<f64, RestitutionError> {
        Ok(self.apd_factor * self.apd_curve(tissue, layer)?.eval(di))
    }

    /// Scaled conduction velocity in mm/ms.
    pub fn cv(&self, tissue: TissueLabel, di: f64) -> Result<f64, RestitutionError> {
        Ok(self.cv_factor * self.cv_curve(tissue)?.eval(di))
    }

    /// Upper bound of any APD this set can produce.
    pub fn apd_max_global(&self) -> f64 {
        let t = &self.apd;
        let m = [
            t.healthy.endo,
            t.healthy.mid,
            t.healthy.epi,
            t.border_zone.endo,
            t.border_zone.mid,
            t.border_zone.epi,
        ]
        .iter()
        .map(|c| c.apd_max_ms)
        .fold(0.0, f64::max);
        self.apd_factor * m
    }

    /// Copy with both multipliers scaled.
    pub fn scaled(&self, apd_mult: f64, cv_mult: f64) -> Self {
        let mut out = self.clone();
        out.apd_factor *= apd_mult;
        out.cv_factor *= cv_mult;
        out
    }
}

/// APD +45 %, CV −6 %.
pub fn apply_beta_blocker(set: &RestitutionSet) -> RestitutionSet {
    set.scaled(BETA_BLOCKER_APD, BETA_BLOCKER_CV)
}
