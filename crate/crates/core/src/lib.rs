//! Voxel digital twins, an event-driven eikonal cellular automaton, S1-S2
//! pacing sweeps, reentry detection and arrhythmic risk scoring.

pub mod analysis;
pub mod anatomy;
pub mod engine;
pub mod fixtures;
pub mod phantom;
pub mod protocol;
pub mod report;
pub mod restitution;
pub mod risk;
pub mod sweep;
pub mod voxel;

pub use analysis::{ReentryEvent, RiskZone};
pub use anatomy::{preprocess, Scc};
pub use engine::{simulate, EngineParams, LogRecord, SimulationResult, Source};
pub use phantom::{generate_phantom, PhantomSpec, ScarSpec};
pub use protocol::{build_schedule, enumerate_configs, ProtocolSpec, StimulusSchedule, SweepConfig};
pub use restitution::{apply_beta_blocker, RestitutionSet};
pub use risk::{ar_index, classify, ArResult, RiskClass};
pub use sweep::{run_sweep, summarize, PatientSummary, Scenario, SweepRecord, SweepRun};
pub use voxel::{load_twin, save_twin, DigitalTwin, Layer, PacingSite, TissueLabel};
