//! Multi-round simulation, sweeps and report emission.

pub mod config;
pub mod report;
pub mod round;
pub mod scenario;
pub mod sweep;

pub use config::ScenarioConfig;
pub use report::{emit_reports, fmt_num, OutputFormat};
pub use round::{run_round, run_simulation, ClientRow, RoundReport};
pub use scenario::{advance_mobility, generate_fleet, Scenario};
pub use sweep::{oracle_check, sweep_resources, sweep_ste_curve, CurvePoint, ResourceCell};
