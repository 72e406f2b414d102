//! Scenario configuration, the simulation loop, monitors and outputs.
//!
//! Each step processes due entries through the admission gate, records
//! the monitors, computes controls and integrates. Fleet snapshots go to
//! the trajectory log every snapshot interval, at entries and at the end.

mod config;
mod monitor;
mod output;
mod run;

pub use config::{AdmissionSettings, EntrySchedule, FleetSpec, ScenarioConfig};
pub use monitor::{
    evaluate, monitor_constraints, parse_final_fleet, parse_monitors, replay, ConstraintVerdict,
    MonitorSeries, Verdicts, CLEARANCE_SLACK, CONVERGED_POTENTIAL_TOL, CONVERGED_SPEED_TOL,
    CONVERGENCE_MIN_PRESENCE,
};
pub use output::{fmt_num, monitors_csv, report_text, trajectory_csv, write_outputs};
pub use run::{
    admission_budget, calibrate_lambda, free_run, initial_fleet, planned_entry_energy,
    rate_check, run_scenario, RateCheck, EntryRecord, FinalVehicle, MonitorRow, PeakInputs, SimReport, TrajectoryRow,
};
