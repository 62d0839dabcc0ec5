//! S1-S2 sweep enumeration and stimulus schedules.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("range {axis} is empty or has a non-positive increment")]
    EmptyRange { axis: &'static str },
    #[error("stimulus at {time_ms} ms does not precede the {t_end_ms} ms horizon")]
    ScheduleExceedsHorizon { time_ms: f64, t_end_ms: f64 },
    #[error("invalid protocol: {0}")]
    Invalid(String),
    #[error("protocol file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("protocol file: {0}")]
    Io(#[from] std::io::Error),
}

/// Inclusive range `initial, initial + increment, …, final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    pub increment: f64,
}

impl SweepRange {
    pub const fn new(initial: f64, last: f64, increment: f64) -> Self {
        Self {
            initial,
            last,
            increment,
        }
    }

    pub const fn single(value: f64) -> Self {
        Self::new(value, value, 1.0)
    }

    pub fn values(&self, axis: &'static str) -> Result<Vec<f64>, ProtocolError> {
        let ok = self.initial.is_finite()
            && self.last.is_finite()
            && self.increment > 0.0
            && self.last >= self.initial;
        if !ok {
            return Err(ProtocolError::EmptyRange { axis });
        }
        // tolerate rounding in the step count, then compute each value
        // directly rather than by accumulation
        let n = ((self.last - self.initial) / self.increment + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|i| self.initial + i as f64 * self.increment)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSpec {
    pub pacing_sites: SweepRange,
    pub s2_bcl_ms: SweepRange,
    pub n_s2: SweepRange,
    pub cv_factors: SweepRange,
    pub apd_factors: SweepRange,
    pub s1_bcl_ms: f64,
    pub n_s1: u32,
    /// Gap between consecutive S2 stimuli; `None` repeats the S2 BCL.
    pub s2_spacing_ms: Option<f64>,
    pub t_end_ms: f64,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            pacing_sites: SweepRange::new(1.0, 34.0, 1.0),
            s2_bcl_ms: SweepRange::new(270.0, 295.0, 5.0),
            n_s2: SweepRange::new(1.0, 3.0, 1.0),
            cv_factors: SweepRange::new(1.0, 1.25, 0.25),
            apd_factors: SweepRange::new(0.75, 1.25, 0.25),
            s1_bcl_ms: 600.0,
            n_s1: 6,
            s2_spacing_ms: None,
            t_end_ms: 6000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub config_index: usize,
    pub pacing_site_id: u32,
    pub s2_bcl_ms: f64,
    pub n_s2: u32,
    pub cv_factor: f64,
    pub apd_factor: f64,
}

impl SweepConfig {
    /// Default-parameter config (both factors exactly 1).
    pub fn is_baseline(&self) -> bool {
        self.cv_factor == 1.0 && self.apd_factor == 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSchedule {
    pub site_id: u32,
    pub times_ms: Vec<f64>,
}

impl StimulusSchedule {
    pub fn last_time(&self) -> f64 {
        self.times_ms.last().copied().unwrap_or(0.0)
    }
}

fn integral(values: Vec<f64>, axis: &'static str) -> Result<Vec<u32>, ProtocolError> {
    values
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u32)
            } else {
                Err(ProtocolError::Invalid(format!("{axis} value {v} is not a whole number")))
            }
        })
        .collect()
}

impl ProtocolSpec {
    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProtocolError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let sites = integral(self.pacing_sites.values("pacing_sites")?, "pacing_sites")?;
        if sites.contains(&0) {
            return Err(ProtocolError::Invalid("pacing site ids start at 1".into()));
        }
        let n_s2 = integral(self.n_s2.values("n_s2")?, "n_s2")?;
        self.s2_bcl_ms.values("s2_bcl_ms")?;
        for (axis, r) in [("cv_factors", &self.cv_factors), ("apd_factors", &self.apd_factors)] {
            if r.values(axis)?.iter().any(|&f| f <= 0.0) {
                return Err(ProtocolError::Invalid(format!("{axis} must be positive")));
            }
        }
        if self.n_s1 == 0 || !(self.s1_bcl_ms > 0.0) {
            return Err(ProtocolError::Invalid("need at least one S1 with positive BCL".into()));
        }
        if self.s2_spacing_ms.is_some_and(|s| !(s > 0.0)) {
            return Err(ProtocolError::Invalid("s2_spacing_ms must be positive".into()));
        }
        if self.s2_bcl_ms.initial <= 0.0 {
            return Err(ProtocolError::Invalid("S2 BCL must be positive".into()));
        }
        // the latest schedule must fit the horizon
        let worst = self.s1_bcl_ms * (self.n_s1 - 1) as f64
            + self.s2_bcl_ms.values("s2_bcl_ms")?.last().copied().unwrap_or(0.0)
            + self.s2_spacing_ms.unwrap_or(self.s2_bcl_ms.last)
                * (n_s2.iter().max().copied().unwrap_or(1).saturating_sub(1)) as f64;
        if worst >= self.t_end_ms {
            return Err(ProtocolError::ScheduleExceedsHorizon {
                time_ms: worst,
                t_end_ms: self.t_end_ms,
            });
        }
        Ok(())
    }

    /// Time of the last S1.
    pub fn last_s1_ms(&self) -> f64 {
        self.s1_bcl_ms * (self.n_s1 - 1) as f64
    }
}

/// Cartesian product in lexicographic order over
/// (site, S2 BCL, number of S2, CV factor, APD factor).
pub fn enumerate_configs(spec: &ProtocolSpec) -> Result<Vec<SweepConfig>, ProtocolError> {
    let sites = integral(spec.pacing_sites.values("pacing_sites")?, "pacing_sites")?;
    let bcls = spec.s2_bcl_ms.values("s2_bcl_ms")?;
    let n_s2 = integral(spec.n_s2.values("n_s2")?, "n_s2")?;
    let cvs = spec.cv_factors.values("cv_factors")?;
    let apds = spec.apd_factors.values("apd_factors")?;
    let mut out = Vec::with_capacity(sites.len() * bcls.len() * n_s2.len() * cvs.len() * apds.len());
    for &site in &sites {
        for &bcl in &bcls {
            for &n in &n_s2 {
                for &cv in &cvs {
                    for &apd in &apds {
                        out.push(SweepConfig {
                            config_index: out.len(),
                            pacing_site_id: site,
                            s2_bcl_ms: bcl,
                            n_s2: n,
                            cv_factor: cv,
                            apd_factor: apd,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// S1 train from 0 ms, then `n_s2` stimuli: the first one S2 BCL after the
/// last S1, each following one `s2_spacing_ms` (default: the S2 BCL) later.
pub fn build_schedule(
    config: &SweepConfig,
    spec: &ProtocolSpec,
) -> Result<StimulusSchedule, ProtocolError> {
    let mut times: Vec<f64> = (0..spec.n_s1).map(|i| i as f64 * spec.s1_bcl_ms).collect();
    let spacing = spec.s2_spacing_ms.unwrap_or(config.s2_bcl_ms);
    let last_s1 = spec.last_s1_ms();
    for i in 0..config.n_s2 {
        times.push(last_s1 + config.s2_bcl_ms + i as f64 * spacing);
    }
    let last = times.last().copied().unwrap_or(0.0);
    if last >= spec.t_end_ms {
        return Err(ProtocolError::ScheduleExceedsHorizon {
            time_ms: last,
            t_end_ms: spec.t_end_ms,
        });
    }
    Ok(StimulusSchedule {
        site_id: config.pacing_site_id,
        times_ms: times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_cardinality() {
        let configs = enumerate_configs(&ProtocolSpec::default()).unwrap();
        assert_eq!(configs.len(), 34 * 6 * 3 * 2 * 3);
        assert_eq!(configs.len(), 3672);
        assert_eq!(configs.iter().filter(|c| c.is_baseline()).count(), 34 * 6 * 3);
        for (i, c) in configs.iter().enumerate() {
            assert_eq!(c.config_index, i);
        }
        // lexicographic: apd fastest, site slowest
        assert_eq!(configs[1].apd_factor, 1.0);
        assert_eq!(configs[3].cv_factor, 1.25);
        assert_eq!(configs[3672 - 1].pacing_site_id, 34);
    }

    #[test]
    fn s2_axis_has_six_values() {
        let v = ProtocolSpec::default().s2_bcl_ms.values("s2").unwrap();
        assert_eq!(v, vec![270.0, 275.0, 280.0, 285.0, 290.0, 295.0]);
    }

    #[test]
    fn single_values() {
        let spec = ProtocolSpec {
            pacing_sites: SweepRange::single(3.0),
            s2_bcl_ms: SweepRange::single(280.0),
            n_s2: SweepRange::single(2.0),
            cv_factors: SweepRange::single(1.0),
            apd_factors: SweepRange::single(1.0),
            ..Default::default()
        };
        assert_eq!(enumerate_configs(&spec).unwrap().len(), 1);
    }

    #[test]
    fn empty_range() {
        let spec = ProtocolSpec {
            n_s2: SweepRange::new(3.0, 1.0, 1.0),
            ..Default::default()
        };
        assert!(matches!(enumerate_configs(&spec), Err(ProtocolError::EmptyRange { axis: "n_s2" })));
        let spec = ProtocolSpec {
            cv_factors: SweepRange::new(1.0, 2.0, 0.0),
            ..Default::default()
        };
        assert!(matches!(enumerate_configs(&spec), Err(ProtocolError::EmptyRange { .. })));
    }

    fn config(bcl: f64, n: u32) -> SweepConfig {
        SweepConfig {
            config_index: 0,
            pacing_site_id: 1,
            s2_bcl_ms: bcl,
            n_s2: n,
            cv_factor: 1.0,
            apd_factor: 1.0,
        }
    }

    #[test]
    fn schedules() {
        let spec = ProtocolSpec::default();
        let s = build_schedule(&config(270.0, 1), &spec).unwrap();
        assert_eq!(s.times_ms, vec![0.0, 600.0, 1200.0, 1800.0, 2400.0, 3000.0, 3270.0]);
        let s = build_schedule(&config(295.0, 3), &spec).unwrap();
        assert_eq!(s.last_time(), 3885.0);
        assert_eq!(s.times_ms.len(), 9);
    }

    #[test]
    fn horizon() {
        let spec = ProtocolSpec {
            t_end_ms: 3500.0,
            ..Default::default()
        };
        assert!(matches!(
            build_schedule(&config(295.0, 3), &spec),
            Err(ProtocolError::ScheduleExceedsHorizon { .. })
        ));
        assert!(spec.validate().is_err());
        ProtocolSpec::default().validate().unwrap();
    }

    #[test]
    fn json_overrides_one_axis() {
        let spec = ProtocolSpec::from_json(r#"{"n_s2": {"initial": 1, "final": 1, "increment": 1}}"#).unwrap();
        assert_eq!(enumerate_configs(&spec).unwrap().len(), 34 * 6 * 2 * 3);
        assert!(ProtocolSpec::from_json(r#"{"bogus": 1}"#).is_err());
    }

    proptest! {
        #[test]
        fn product_of_axes(
            sites in 1u32..6, bcl in 1usize..5, n2 in 1u32..4, cv in 1usize..3, apd in 1usize..4,
        ) {
            let spec = ProtocolSpec {
                pacing_sites: SweepRange::new(1.0, sites as f64, 1.0),
                s2_bcl_ms: SweepRange::new(250.0, 250.0 + 10.0 * (bcl - 1) as f64, 10.0),
                n_s2: SweepRange::new(1.0, n2 as f64, 1.0),
                cv_factors: SweepRange::new(1.0, 1.0 + 0.1 * (cv - 1) as f64, 0.1),
                apd_factors: SweepRange::new(0.5, 0.5 + 0.25 * (apd - 1) as f64, 0.25),
                ..Default::default()
            };
            let configs = enumerate_configs(&spec).unwrap();
            prop_assert_eq!(configs.len(), sites as usize * bcl * n2 as usize * cv * apd);
            let again = enumerate_configs(&spec).unwrap();
            prop_assert_eq!(&configs, &again);
            let mut keys: Vec<_> = configs
                .iter()
                .map(|c| (c.pacing_site_id, c.s2_bcl_ms.to_bits(), c.n_s2, c.cv_factor.to_bits(), c.apd_factor.to_bits()))
                .collect();
            keys.dedup();
            prop_assert_eq!(keys.len(), configs.len());
            for c in &configs {
                let s = build_schedule(c, &spec).unwrap();
                prop_assert!(s.times_ms.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(s.last_time() < spec.t_end_ms);
            }
        }
    }
}
