//! Fixed-wing kinematics and the double-integrator form it linearizes to.
//!
//! The simulation runs in flat coordinates `(q, q̇)` with inputs `u = q̈`.
//! Body inputs `(a, φ, δ)` are recovered only for reporting.

use crate::{Error, Result, Vec3};

/// Smallest horizontal speed at which the linearization is evaluated, m/s.
pub const V_FLOOR: f64 = 0.1;

/// Fixed-wing kinematic state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Horizontal speed, m/s.
    pub v: f64,
    /// Heading, rad.
    pub theta: f64,
    /// Vertical speed, m/s.
    pub w: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatState {
    pub q: Vec3,
    pub qdot: Vec3,
}

impl FlatState {
    pub fn new(q: Vec3, qdot: Vec3) -> Self {
        Self { q, qdot }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|x| x.is_finite())
    }
}

/// Body-frame inputs: longitudinal acceleration, turn rate and vertical
/// acceleration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyInput {
    pub a: f64,
    pub phi_rate: f64,
    pub delta: f64,
}

/// Flat input `u = (u_x, u_y, δ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatInput {
    pub u: Vec3,
}

impl FlatInput {
    pub fn zero() -> Self {
        Self { u: Vec3::zeros() }
    }
}

pub fn kinematic_to_flat(s: &KinematicState) -> FlatState {
    let (sin, cos) = s.theta.sin_cos();
    FlatState {
        q: Vec3::new(s.x, s.y, s.z),
        qdot: Vec3::new(s.v * cos, s.v * sin, s.w),
    }
}

pub fn flat_to_kinematic(s: &FlatState) -> Result<KinematicState> {
    let v = s.qdot.x.hypot(s.qdot.y);
    if v <= V_FLOOR {
        return Err(Error::DegenerateHorizontalSpeed {
            speed: v,
            floor: V_FLOOR,
        });
    }
    Ok(KinematicState {
        x: s.q.x,
        y: s.q.y,
        z: s.q.z,
        v,
        theta: s.qdot.y.atan2(s.qdot.x),
        w: s.qdot.z,
    })
}

/// Inverts the linearizing transform: the body inputs that produce flat
/// acceleration `u` at state `s`.
pub fn flat_to_body_input(s: &KinematicState, u: &FlatInput) -> Result<BodyInput> {
    if s.v <= V_FLOOR {
        return Err(Error::DegenerateHorizontalSpeed {
            speed: s.v,
            floor: V_FLOOR,
        });
    }
    let (sin, cos) = s.theta.sin_cos();
    Ok(BodyInput {
        a: cos * u.u.x + sin * u.u.y,
        phi_rate: (-sin * u.u.x + cos * u.u.y) / s.v,
        delta: u.u.z,
    })
}

/// Forward transform: `[v̇_x, v̇_y] = [[cos θ, −v sin θ], [sin θ, v cos θ]] [a, φ]`.
pub fn body_to_flat_input(s: &KinematicState, b: &BodyInput) -> FlatInput {
    let (sin, cos) = s.theta.sin_cos();
    FlatInput {
        u: Vec3::new(
            cos * b.a - s.v * sin * b.phi_rate,
            sin * b.a + s.v * cos * b.phi_rate,
            b.delta,
        ),
    }
}

/// Advances each vehicle by one classical RK4 step of `q̈ = u` with `u`
/// held constant over the step.
pub fn step(states: &[FlatState], inputs: &[FlatInput], dt: f64) -> Result<Vec<FlatState>> {
    if states.len() != inputs.len() {
        return Err(Error::LengthMismatch {
            states: states.len(),
            inputs: inputs.len(),
        });
    }
    Ok(states
        .iter()
        .zip(inputs)
        .map(|(s, u)| rk4(s, &u.u, dt))
        .collect())
}

#[inline]
fn rk4(s: &FlatState, u: &Vec3, dt: f64) -> FlatState {
    let half = 0.5 * dt;
    let (k1q, k1v) = (s.qdot, *u);
    let (k2q, k2v) = (s.qdot + k1v * half, *u);
    let (k3q, k3v) = (s.qdot + k2v * half, *u);
    let (k4q, k4v) = (s.qdot + k3v * dt, *u);
    FlatState {
        q: s.q + (k1q + (k2q + k3q) * 2.0 + k4q) * (dt / 6.0),
        qdot: s.qdot + (k1v + (k2v + k3v) * 2.0 + k4v) * (dt / 6.0),
    }
}
