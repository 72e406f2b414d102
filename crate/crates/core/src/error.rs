use thiserror::Error;

use crate::geometry::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("half-space normal has zero length")]
    DegenerateNormal,

    #[error("horizontal speed {speed} m/s is at or below the {floor} m/s floor")]
    DegenerateHorizontalSpeed { speed: f64, floor: f64 },

    #[error("length mismatch: {states} states but {inputs} inputs")]
    LengthMismatch { states: usize, inputs: usize },

    #[error("sample box has zero volume")]
    DegenerateSamples,

    #[error("damping K={damping} does not exceed sqrt(1/(4L)) with L={lipschitz}")]
    AssumptionViolated { damping: f64, lipschitz: f64 },

    #[error("entrant {entrant} is inside the separation potential support of resident {resident} (sigma distance {sigma_distance})")]
    ResidentsTooClose {
        entrant: usize,
        resident: usize,
        sigma_distance: f64,
    },

    #[error("entry budget invalid: h_eps={h_eps} must lie in [0, h0={h0})")]
    InvalidBudget { h0: f64, h_eps: f64 },

    #[error("transition region between the links is empty")]
    DisconnectedLinks,

    #[error("window contains an entry event at t={t}")]
    EntryInWindow { t: f64 },

    #[error("entry group is empty")]
    EmptyEntryGroup,

    #[error("invalid configuration: {}", format_violations(.0))]
    ConfigInvalid(Vec<Violation>),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
