//! Scenario files.
//!
//! Scenarios are TOML documents. A minimal file:
//!
//! ```toml
//! seed = 1
//! dt = 0.01
//! duration = 200.0
//! damping = 0.1
//!
//! [link]
//! v_hat = [10.0, 0.0, 0.0]
//! d_hat = 10.0
//! d_min = 1.5
//! d_b_hat = 20.0
//! d_b_min = 0.0
//! v_upper = 25.0
//! v_lower = 5.0
//! walls = [{ normal = [0.0, 1.0, 0.0], offset = 40.0 }]
//! gates = [{ normal = [-1.0, 0.0, 0.0], offset = 0.0 }]
//!
//! [potentials]
//! epsilon = 0.9
//!
//! [fleet]
//! count = 6
//! spacing = 10.0
//! speed_jitter = 2.0
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::admission::AdmissionMode;
use crate::control::ProtocolParams;
use crate::dynamics::FlatState;
use crate::geometry::{validate_link, HalfSpace, LinkSpec, Violation};
use crate::potential::PotentialConfig;
use crate::{Error, Result, Vec3};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: u64,
    dt: f64,
    duration: f64,
    damping: f64,
    #[serde(default = "default_snapshot")]
    snapshot_interval: f64,
    #[serde(default)]
    exit_drop: bool,
    link: RawLink,
    #[serde(default)]
    potentials: RawPotentials,
    #[serde(default)]
    fleet: RawFleet,
    schedule: Option<RawSchedule>,
    #[serde(default)]
    admission: RawAdmission,
}

fn default_snapshot() -> f64 {
    20.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    v_hat: [f64; 3],
    d_hat: f64,
    d_min: f64,
    d_b_hat: f64,
    d_b_min: f64,
    v_upper: f64,
    v_lower: f64,
    walls: Vec<RawPlane>,
    #[serde(default)]
    gates: Vec<RawPlane>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlane {
    normal: [f64; 3],
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotentials {
    #[serde(default = "default_family")]
    family: String,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

impl Default for RawPotentials {
    fn default() -> Self {
        Self {
            family: default_family(),
            epsilon: default_epsilon(),
        }
    }
}

fn default_family() -> String {
    "log-cosh".into()
}

fn default_epsilon() -> f64 {
    0.9
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFleet {
    #[serde(default)]
    count: usize,
    #[serde(default = "default_spacing")]
    spacing: f64,
    #[serde(default)]
    speed_jitter: f64,
    origin: Option<[f64; 3]>,
    vehicles: Option<Vec<RawVehicle>>,
}

impl Default for RawFleet {
    fn default() -> Self {
        Self {
            count: 0,
            spacing: default_spacing(),
            speed_jitter: 0.0,
            origin: None,
            vehicles: None,
        }
    }
}

fn default_spacing() -> f64 {
    10.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVehicle {
    q: [f64; 3],
    qdot: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    start: f64,
    period: f64,
    group_size: usize,
    #[serde(default)]
    speed_jitter: f64,
    #[serde(default = "default_t_epsilon")]
    t_epsilon: f64,
    #[serde(default = "default_spawn_spacing")]
    spawn_spacing: f64,
    velocity_offsets: Option<Vec<[f64; 3]>>,
}

fn default_t_epsilon() -> f64 {
    0.5
}

fn default_spawn_spacing() -> f64 {
    15.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdmission {
    #[serde(default = "default_mode")]
    mode: String,
    lambda: Option<f64>,
    #[serde(default = "default_horizon")]
    calibration_horizon: f64,
    #[serde(default = "default_lambda_margin")]
    lambda_margin: f64,
}

impl Default for RawAdmission {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            lambda: None,
            calibration_horizon: default_horizon(),
            lambda_margin: default_lambda_margin(),
        }
    }
}

fn default_mode() -> String {
    "enforce".into()
}

fn default_horizon() -> f64 {
    100.0
}

fn default_lambda_margin() -> f64 {
    1.2
}

/// How the initial fleet is laid out.
#[derive(Clone, Debug, PartialEq)]
pub enum FleetSpec {
    /// `count` vehicles on a square lattice in the plane normal to v̂,
    /// filled center-out, with velocities v̂ plus a random perturbation of
    /// magnitude below `speed_jitter`. Redrawn until H(0) ≤ c*.
    Lattice {
        count: usize,
        spacing: f64,
        speed_jitter: f64,
        origin: Option<Vec3>,
    },
    Explicit(Vec<FlatState>),
}

/// Periodic entry groups.
#[derive(Clone, Debug, PartialEq)]
pub struct EntrySchedule {
    pub start: f64,
    /// T
    pub period: f64,
    pub group_size: usize,
    pub speed_jitter: f64,
    pub t_epsilon: f64,
    pub spawn_spacing: f64,
    /// Fixed velocity offsets from v̂ per entrant slot; overrides the jitter.
    pub velocity_offsets: Option<Vec<Vec3>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissionSettings {
    pub mode: AdmissionMode,
    /// Fixed λ for the budget; otherwise calibrated.
    pub lambda: Option<f64>,
    pub calibration_horizon: f64,
    /// Factor applied to the calibrated λ̂.
    pub lambda_margin: f64,
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub link: LinkSpec,
    pub potentials: PotentialConfig,
    pub damping: f64,
    pub dt: f64,
    pub duration: f64,
    pub snapshot_interval: f64,
    pub fleet: FleetSpec,
    pub schedule: Option<EntrySchedule>,
    pub admission: AdmissionSettings,
    pub seed: u64,
    /// Drop vehicles once they pass the exit gate.
    pub exit_drop: bool,
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawScenario) -> Result<Self> {
        let plane = |p: &RawPlane| HalfSpace::new(Vec3::from(p.normal), p.offset);
        let l = &raw.link;
        let link = LinkSpec {
            walls: l.walls.iter().map(plane).collect::<Result<_>>()?,
            gates: l.gates.iter().map(plane).collect::<Result<_>>()?,
            v_hat: Vec3::from(l.v_hat),
            d_hat: l.d_hat,
            d_min: l.d_min,
            d_b_hat: l.d_b_hat,
            d_b_min: l.d_b_min,
            v_upper: l.v_upper,
            v_lower: l.v_lower,
        };
        if raw.potentials.family != "log-cosh" {
            return Err(Error::Parse(format!(
                "unknown potential family '{}' (expected log-cosh)",
                raw.potentials.family
            )));
        }
        let potentials = PotentialConfig::log_cosh(link.d_hat, link.d_b_hat, raw.potentials.epsilon);
        let fleet = match raw.fleet.vehicles {
            Some(v) => FleetSpec::Explicit(
                v.iter()
                    .map(|v| FlatState::new(Vec3::from(v.q), Vec3::from(v.qdot)))
                    .collect(),
            ),
            None => FleetSpec::Lattice {
                count: raw.fleet.count,
                spacing: raw.fleet.spacing,
                speed_jitter: raw.fleet.speed_jitter,
                origin: raw.fleet.origin.map(Vec3::from),
            },
        };
        let schedule = raw.schedule.map(|s| EntrySchedule {
            start: s.start,
            period: s.period,
            group_size: s.group_size,
            speed_jitter: s.speed_jitter,
            t_epsilon: s.t_epsilon,
            spawn_spacing: s.spawn_spacing,
            velocity_offsets: s.velocity_offsets.map(|o| o.into_iter().map(Vec3::from).collect()),
        });
        let mode = match raw.admission.mode.as_str() {
            "enforce" => AdmissionMode::Enforce,
            "observe" => AdmissionMode::Observe,
            other => {
                return Err(Error::Parse(format!(
                    "unknown admission mode '{other}' (expected enforce or observe)"
                )))
            }
        };
        Ok(Self {
            link,
            potentials,
            damping: raw.damping,
            dt: raw.dt,
            duration: raw.duration,
            snapshot_interval: raw.snapshot_interval,
            fleet,
            schedule,
            admission: AdmissionSettings {
                mode,
                lambda: raw.admission.lambda,
                calibration_horizon: raw.admission.calibration_horizon,
                lambda_margin: raw.admission.lambda_margin,
            },
            seed: raw.seed,
            exit_drop: raw.exit_drop,
        })
    }

    pub fn params(&self) -> ProtocolParams {
        ProtocolParams::new(self.link.clone(), self.potentials.clone(), self.damping)
    }

    /// Link violations followed by scenario-level ones.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = validate_link(&self.link);
        let mut bad = |msg: String| v.push(Violation::Scenario(msg));
        if !(self.dt > 0.0) {
            bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration >= self.dt) {
            bad(format!("duration {} must be at least dt {}", self.duration, self.dt));
        }
        if !(self.damping > 0.0) {
            bad(format!("damping must be positive, got {}", self.damping));
        }
        if !(self.snapshot_interval > 0.0) {
            bad(format!("snapshot_interval must be positive, got {}", self.snapshot_interval));
        }
        if !(self.potentials.epsilon() > 0.0) {
            bad(format!("epsilon must be positive, got {}", self.potentials.epsilon()));
        }
        match &self.fleet {
            FleetSpec::Lattice {
                spacing, speed_jitter, ..
            } => {
                if !(*spacing > 0.0) {
                    bad(format!("fleet spacing must be positive, got {spacing}"));
                }
                if !(*speed_jitter >= 0.0) {
                    bad(format!("fleet speed_jitter must be non-negative, got {speed_jitter}"));
                }
            }
            FleetSpec::Explicit(states) => {
                if let Some(i) = states.iter().position(|s| !s.is_finite()) {
                    bad(format!("vehicle {i} has a non-finite state"));
                }
            }
        }
        if let Some(s) = &self.schedule {
            if !(s.period > 0.0) {
                bad(format!("schedule period must be positive, got {}", s.period));
            }
            if !(s.start >= 0.0) {
                bad(format!("schedule start must be non-negative, got {}", s.start));
            }
            if s.group_size == 0 {
                bad("schedule group_size must be at least 1".into());
            }
            if !(s.t_epsilon >= 0.0 && s.t_epsilon <= s.period / 10.0) {
                bad(format!("t_epsilon {} must lie in [0, period/10]", s.t_epsilon));
            }
            if !(s.spawn_spacing > 0.0) {
                bad(format!("spawn_spacing must be positive, got {}", s.spawn_spacing));
            }
            if !(s.speed_jitter >= 0.0) {
                bad(format!("schedule speed_jitter must be non-negative, got {}", s.speed_jitter));
            }
            if self.link.entrance().is_none() {
                bad("entry schedule needs an entrance gate (normal opposing v_hat)".into());
            }
        }
        let a = &self.admission;
        if let Some(l) = a.lambda {
            if !(l >= 0.0) {
                bad(format!("admission lambda must be non-negative, got {l}"));
            }
        }
        if !(a.calibration_horizon > 0.0) {
            bad(format!("calibration_horizon must be positive, got {}", a.calibration_horizon));
        }
        if !(a.lambda_margin >= 1.0) {
            bad(format!("lambda_margin must be at least 1, got {}", a.lambda_margin));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
dt = 0.01
duration = 1.0
damping = 0.1

[link]
v_hat = [10.0, 0.0, 0.0]
d_hat = 10.0
d_min = 1.5
d_b_hat = 20.0
d_b_min = 0.0
v_upper = 25.0
v_lower = 5.0
walls = [
  { normal = [0.0, 1.0, 0.0], offset = 40.0 },
  { normal = [0.0, -1.0, 0.0], offset = 40.0 },
]
"#;

    #[test]
    fn parses_minimal_file_with_defaults() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.potentials.epsilon(), 0.9);
        assert_eq!(cfg.snapshot_interval, 20.0);
        assert_eq!(cfg.admission.mode, AdmissionMode::Enforce);
        assert!(cfg.schedule.is_none());
        assert!(matches!(cfg.fleet, FleetSpec::Lattice { count: 0, .. }));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_modes() {
        let typo = MINIMAL.replace("damping", "dampning");
        assert!(matches!(ScenarioConfig::parse(&typo), Err(Error::Parse(_))));
        let mode = format!("{MINIMAL}\n[admission]\nmode = \"maybe\"\n");
        assert!(matches!(ScenarioConfig::parse(&mode), Err(Error::Parse(_))));
    }

    #[test]
    fn reports_link_and_scenario_violations() {
        let bad = MINIMAL.replace("v_hat = [10.0, 0.0, 0.0]", "v_hat = [0.0, 10.0, 0.0]").replace("dt = 0.01", "dt = 0.0");
        let cfg = ScenarioConfig::parse(&bad).unwrap();
        let v = cfg.violations();
        assert!(v.iter().any(|v| matches!(v, Violation::VelocityNotParallel { .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::Scenario(_))));
        assert!(matches!(cfg.validate(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn schedule_needs_entrance_gate() {
        let text = format!("{MINIMAL}\n[schedule]\nstart = 0.0\nperiod = 20.0\ngroup_size = 2\n");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        let v = cfg.violations();
        assert_eq!(v.len(), 1, "{v:?}");
    }
}
