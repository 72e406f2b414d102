//! Hamiltonian bookkeeping and the certificates built on it.
//!
//! `H = V_p + V_b + V_k` with
//!
//! - `V_p = ½ Σ_i Σ_{j≠i} ψ(‖q_ij‖_σ)` (separation),
//! - `V_b = Σ_i Σ_n ψ_b(d_in)` (boundary clearance),
//! - `V_k = ½ Σ_i ‖q̇_i − v̂‖²` (velocity error).
//!
//! Level sets of H certify the separation, speed and clearance constraints
//! ([`thresholds`]). The rate certificate treats the closed loop in the
//! frame moving with v̂ as the damped gradient system
//! `q̈ + K q̇ + ∇Ψ(q) = 0` with `Ψ = V_p + V_b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{potential_forces, ProtocolParams};
use crate::dynamics::FlatState;
use crate::geometry::{wall_distance, LinkSpec};
use crate::potential::{sigma_of_length, PotentialConfig};
use crate::{Error, Result};

/// Per-step allowance on H increases, relative to `1 + H`.
pub const DISSIPATION_TOL: f64 = 1e-6;
/// RMS relative error allowed between the finite-difference dH/dt and the
/// predicted dissipation.
pub const DISSIPATION_RATE_TOL: f64 = 0.02;
/// Relative slack on the sampled O(1/t) bound.
pub const RATE_BOUND_MARGIN: f64 = 1e-3;
/// Per-step allowance on increases of the Lyapunov sum V₁ + V₂ + V₃.
pub const LYAPUNOV_TOL: f64 = 1e-6;
/// Inflation applied to the largest sampled gradient-difference ratio.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;
/// Reference c* quoted for the reference parameter set. It equals ln cosh 9,
/// whereas ψ(‖d_min‖_σ) evaluates to ≈ 8.485461.
pub const REFERENCE_C_STAR: f64 = 8.3069;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub t: f64,
    pub v_p: f64,
    pub v_b: f64,
    pub v_k: f64,
    pub h: f64,
}

pub fn collision_potential(states: &[FlatState], potentials: &PotentialConfig) -> f64 {
    let mut v_p = 0.0;
    for i in 0..states.len() {
        for j in (i + 1)..states.len() {
            // ½ Σ_i Σ_{j≠i} counts each unordered pair once
            v_p += potentials.pair_potential(&(states[i].q - states[j].q));
        }
    }
    v_p
}

pub fn boundary_potential(states: &[FlatState], link: &LinkSpec, potentials: &PotentialConfig) -> f64 {
    states
        .iter()
        .map(|s| {
            link.walls
                .iter()
                .map(|w| potentials.psi_b(wall_distance(&s.q, w)))
                .sum::<f64>()
        })
        .sum()
}

pub fn kinetic_energy(states: &[FlatState], link: &LinkSpec) -> f64 {
    0.5 * states
        .iter()
        .map(|s| (s.qdot - link.v_hat).norm_squared())
        .sum::<f64>()
}

pub fn energy(states: &[FlatState], params: &ProtocolParams, t: f64) -> EnergyBreakdown {
    let v_p = collision_potential(states, &params.potentials);
    let v_b = boundary_potential(states, &params.link, &params.potentials);
    let v_k = kinetic_energy(states, &params.link);
    EnergyBreakdown {
        t,
        v_p,
        v_b,
        v_k,
        h: v_p + v_b + v_k,
    }
}

/// Instantaneous dissipation `Σ K_i ‖q̇_i − v̂‖²`, equal to −Ḣ in continuous time.
pub fn dissipation_rate(states: &[FlatState], params: &ProtocolParams) -> f64 {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| params.damping.gain(i) * (s.qdot - params.link.v_hat).norm_squared())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyThresholds {
    /// ψ(‖d_min‖_σ): H at or below this keeps every pair beyond d_min.
    pub c1: f64,
    /// ½ṽ² with ṽ = min(v̄ − ‖v̂‖, ‖v̂‖ − v_): keeps speeds in the envelope.
    pub c2: f64,
    /// ψ_b(d_b,min): keeps wall clearances above d_b,min.
    pub c3: f64,
    pub c_star: f64,
}

pub fn thresholds(link: &LinkSpec, potentials: &PotentialConfig) -> SafetyThresholds {
    let c1 = potentials.psi(sigma_of_length(link.d_min, potentials.epsilon()));
    let speed = link.v_hat.norm();
    let v_tilde = (link.v_upper - speed).min(speed - link.v_lower);
    let c2 = 0.5 * v_tilde * v_tilde;
    let c3 = potentials.psi_b(link.d_b_min);
    SafetyThresholds {
        c1,
        c2,
        c3,
        c_star: c1.min(c2).min(c3),
    }
}

/// One sample of an energy trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySample {
    pub energy: EnergyBreakdown,
    /// `Σ K_i ‖δv_i‖²` at the sample.
    pub dissipation: f64,
    /// Vehicles were injected at this sample.
    pub entry: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DissipationReport {
    pub steps: usize,
    /// Largest `H(t_{k+1}) − H(t_k)` observed (may be negative).
    pub max_increase: f64,
    /// Largest excess over the per-step allowance; ≤ 0 means monotone.
    pub max_violation: f64,
    pub first_violation_t: Option<f64>,
    pub monotone: bool,
    /// RMS of `(ΔH/Δt + D̄)` over RMS of `D̄`, with `D̄` the trapezoidal
    /// mean dissipation over the step.
    pub rms_rate_error: f64,
    pub rate_matches: bool,
}

/// Checks `Ḣ ≤ 0` and `Ḣ = −Σ K_i‖δv_i‖²` on a trace with no entry events
/// after its first sample.
pub fn check_dissipation(trace: &[EnergySample]) -> Result<DissipationReport> {
    if let Some(s) = trace.iter().skip(1).find(|s| s.entry) {
        return Err(Error::EntryInWindow { t: s.energy.t });
    }
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_violation = f64::NEG_INFINITY;
    let mut first_violation_t = None;
    let (mut err2, mut ref2) = (0.0, 0.0);
    for w in trace.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dh = b.energy.h - a.energy.h;
        let allowance = DISSIPATION_TOL * (1.0 + a.energy.h);
        max_increase = max_increase.max(dh);
        let excess = dh - allowance;
        if excess > max_violation {
            max_violation = excess;
        }
        if excess > 0.0 && first_violation_t.is_none() {
            first_violation_t = Some(b.energy.t);
        }
        let dt = b.energy.t - a.energy.t;
        let predicted = -0.5 * (a.dissipation + b.dissipation);
        err2 += (dh / dt - predicted).powi(2);
        ref2 += predicted * predicted;
    }
    let steps = trace.len().saturating_sub(1);
    let rms_rate_error = if ref2 > 0.0 {
        (err2 / ref2).sqrt()
    } else if err2 > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(DissipationReport {
        steps,
        max_increase: if steps == 0 { 0.0 } else { max_increase },
        max_violation: if steps == 0 { 0.0 } else { max_violation },
        first_violation_t,
        monotone: first_violation_t.is_none(),
        rms_rate_error,
        rate_matches: rms_rate_error <= DISSIPATION_RATE_TOL,
    })
}

/// λ̂ with `H(t) ≤ λ̂/(t − t₀) · H(t₀)` on the sampled trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaEstimate {
    pub lambda: f64,
    /// Sample time attaining the supremum.
    pub t_at: f64,
}

/// Estimates λ as `sup_t (t − t₀) H(t)/H(t₀)` over the trace; zero when
/// `H(t₀) = 0`.
pub fn estimate_lambda(trace: &[EnergyBreakdown]) -> LambdaEstimate {
    let Some(first) = trace.first() else {
        return LambdaEstimate { lambda: 0.0, t_at: 0.0 };
    };
    if !(first.h > 0.0) {
        return LambdaEstimate {
            lambda: 0.0,
            t_at: first.t,
        };
    }
    trace
        .iter()
        .skip(1)
        .map(|e| ((e.t - first.t) * e.h / first.h, e.t))
        .fold(
            LambdaEstimate {
                lambda: 0.0,
                t_at: first.t,
            },
            |best, (lambda, t)| {
                if lambda > best.lambda {
                    LambdaEstimate { lambda, t_at: t }
                } else {
                    best
                }
            },
        )
}

/// A scalar potential on ℝⁿ with its gradient.
pub trait PotentialField {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// `Ψ = V_p + V_b` over the stacked positions of `vehicles` vehicles.
pub struct LinkPotentialField<'a> {
    pub params: &'a ProtocolParams,
    pub vehicles: usize,
}

impl LinkPotentialField<'_> {
    fn states(&self, x: &[f64]) -> Vec<FlatState> {
        x.chunks_exact(3)
            .map(|c| FlatState::new(crate::Vec3::new(c[0], c[1], c[2]), self.params.link.v_hat))
            .collect()
    }
}

impl PotentialField for LinkPotentialField<'_> {
    fn dim(&self) -> usize {
        3 * self.vehicles
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = self.states(x);
        collision_potential(&s, &self.params.potentials)
            + boundary_potential(&s, &self.params.link, &self.params.potentials)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        potential_forces(&self.states(x), self.params)
            .iter()
            .flat_map(|f| [-f.x, -f.y, -f.z])
            .collect()
    }
}

/// Axis-aligned box in ℝⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi }
    }

    pub fn has_volume(&self) -> bool {
        self.lo.len() == self.hi.len()
            && !self.lo.is_empty()
            && self.lo.iter().zip(&self.hi).all(|(l, h)| h > l)
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| rng.gen_range(l..h))
            .collect()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Estimates a Lipschitz constant of `∇Ψ` over `region`.
///
/// Each of `samples` draws contributes one uniform pair and a short power
/// iteration of finite-difference Hessian-vector products around a uniform
/// point, which seeks the locally steepest direction. The largest ratio
/// `‖∇Ψ(a) − ∇Ψ(b)‖ / ‖a − b‖` is inflated by [`LIPSCHITZ_SAFETY`].
pub fn estimate_lipschitz(
    field: &dyn PotentialField,
    region: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !region.has_volume() || region.lo.len() != field.dim() {
        return Err(Error::DegenerateSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = field.dim();
    let mean_width = region
        .lo
        .iter()
        .zip(&region.hi)
        .map(|(l, h)| h - l)
        .sum::<f64>()
        / n as f64;
    let h = 1e-4 * mean_width;
    let mut best = 0.0f64;
    let ratio = |a: &[f64], ga: &[f64], b: &[f64]| {
        let gb = field.gradient(b);
        let d = dist(a, b);
        if d > 0.0 {
            dist(ga, &gb) / d
        } else {
            0.0
        }
    };
    for _ in 0..samples {
        let a = region.sample(&mut rng);
        let ga = field.gradient(&a);
        let b = region.sample(&mut rng);
        best = best.max(ratio(&a, &ga, &b));

        let mut dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..6 {
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                break;
            }
            let b: Vec<f64> = a.iter().zip(&dir).map(|(x, d)| x + h * d / norm).collect();
            let gb = field.gradient(&b);
            let step = dist(&a, &b);
            let diff: Vec<f64> = gb.iter().zip(&ga).map(|(x, y)| x - y).collect();
            best = best.max(dist(&gb, &ga) / step);
            dir = diff;
        }
    }
    Ok(LIPSCHITZ_SAFETY * best)
}

/// Constants of the O(1/t) bound for `q̈ + K q̇ + ∇Ψ(q) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateCertificate {
    pub lipschitz: f64,
    pub damping: f64,
    /// `(2KL − K²)/(4L²)`
    pub p: f64,
    /// `K/4`
    pub r: f64,
    /// `K/(2L)`
    pub alpha: f64,
    /// `½‖α∇Ψ(q₀) + q̇₀‖² + (α + K)Ψ(q₀)`
    pub rhs_numerator: f64,
    /// Same with `(αK + 1)Ψ(q₀)`, the V₂ weight the monotone sum uses.
    pub rhs_numerator_v2: f64,
}

impl RateCertificate {
    /// Fails unless `K > √(1/(4L))`.
    pub fn new(damping: f64, lipschitz: f64, psi0: f64, grad0: &[f64], qdot0: &[f64]) -> Result<Self> {
        if !(lipschitz > 0.0) || !(damping > (1.0 / (4.0 * lipschitz)).sqrt()) {
            return Err(Error::AssumptionViolated { damping, lipschitz });
        }
        let (k, l) = (damping, lipschitz);
        let alpha = k / (2.0 * l);
        let p = (2.0 * k * l - k * k) / (4.0 * l * l);
        let r = k / 4.0;
        let v1 = 0.5
            * grad0
                .iter()
                .zip(qdot0)
                .map(|(g, v)| (alpha * g + v).powi(2))
                .sum::<f64>();
        Ok(Self {
            lipschitz,
            damping,
            p,
            r,
            alpha,
            rhs_numerator: v1 + (alpha + k) * psi0,
            rhs_numerator_v2: v1 + (alpha * k + 1.0) * psi0,
        })
    }

    /// Like [`RateCertificate::new`] but raises `lipschitz` to just above
    /// `1/(4K²)` when needed. Any upper bound on the true constant is a
    /// valid L, so lifting keeps the certificate sound.
    pub fn with_lifted_lipschitz(
        damping: f64,
        lipschitz: f64,
        psi0: f64,
        grad0: &[f64],
        qdot0: &[f64],
    ) -> Result<Self> {
        let floor = 1.01 / (4.0 * damping * damping);
        Self::new(damping, lipschitz.max(floor), psi0, grad0, qdot0)
    }
}

/// State of a damped gradient flow at one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSample {
    pub t: f64,
    pub psi: f64,
    pub grad: Vec<f64>,
    pub velocity: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub samples: usize,
    /// Smallest `(bound − inf)/bound` over the sampled horizon.
    pub worst_margin: f64,
    pub holds: bool,
    pub first_violation_t: Option<f64>,
    /// Same check with `rhs_numerator_v2`.
    pub holds_v2: bool,
    pub max_lyapunov_increase: f64,
    pub lyapunov_monotone: bool,
}

/// Checks `inf_{τ≤t} [p‖∇Ψ‖² + r‖q̇‖²] ≤ rhs/t` at every sample and that
/// `V₁ + V₂ + V₃` never increases by more than [`LYAPUNOV_TOL`].
///
/// Time is measured from the first sample.
pub fn verify_rate_bound(trace: &[RateSample], cert: &RateCertificate) -> Result<RateReport> {
    if !(cert.lipschitz > 0.0) || !(cert.damping > (1.0 / (4.0 * cert.lipschitz)).sqrt()) {
        return Err(Error::AssumptionViolated {
            damping: cert.damping,
            lipschitz: cert.lipschitz,
        });
    }
    let integrand = |s: &RateSample| {
        let g2: f64 = s.grad.iter().map(|g| g * g).sum();
        let v2: f64 = s.velocity.iter().map(|v| v * v).sum();
        cert.p * g2 + cert.r * v2
    };
    let lyapunov_head = |s: &RateSample| {
        let v1: f64 = 0.5
            * s.grad
                .iter()
                .zip(&s.velocity)
                .map(|(g, v)| (cert.alpha * g + v).powi(2))
                .sum::<f64>();
        v1 + (cert.alpha * cert.damping + 1.0) * s.psi
    };

    let Some(first) = trace.first() else {
        return Ok(RateReport {
            samples: 0,
            worst_margin: f64::INFINITY,
            holds: true,
            first_violation_t: None,
            holds_v2: true,
            max_lyapunov_increase: 0.0,
            lyapunov_monotone: true,
        });
    };
    let t0 = first.t;
    let mut running_inf = f64::INFINITY;
    let mut worst_margin = f64::INFINITY;
    let mut first_violation_t = None;
    let mut holds_v2 = true;
    let mut integral = 0.0;
    let mut max_inc = f64::NEG_INFINITY;
    let mut prev_v = lyapunov_head(first);

    for w in trace.windows(2) {
        let (a, s) = (&w[0], &w[1]);
        let tau = s.t - t0;
        let f = integrand(s);
        running_inf = running_inf.min(f);
        let bound = cert.rhs_numerator / tau;
        let margin = if bound > 0.0 {
            (bound - running_inf) / bound
        } else if running_inf <= 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        worst_margin = worst_margin.min(margin);
        if margin < -RATE_BOUND_MARGIN && first_violation_t.is_none() {
            first_violation_t = Some(s.t);
        }
        if running_inf > cert.rhs_numerator_v2 / tau * (1.0 + RATE_BOUND_MARGIN) {
            holds_v2 = false;
        }

        // V₃ by the trapezoid rule
        integral += 0.5 * (integrand(a) + f) * (s.t - a.t);
        let v = lyapunov_head(s) + integral;
        max_inc = max_inc.max(v - prev_v);
        prev_v = v;
    }
    let max_lyapunov_increase = if trace.len() > 1 { max_inc } else { 0.0 };
    Ok(RateReport {
        samples: trace.len(),
        worst_margin,
        holds: first_violation_t.is_none(),
        first_violation_t,
        holds_v2,
        max_lyapunov_increase,
        lyapunov_monotone: max_lyapunov_increase <= LYAPUNOV_TOL,
    })
}

/// Rate samples for a link trajectory in the frame moving with v̂:
/// positions are unchanged (Ψ is invariant along v̂) and velocities become
/// `q̇_i − v̂`.
pub fn link_rate_samples(frames: &[(f64, Vec<FlatState>)], params: &ProtocolParams) -> Vec<RateSample> {
    frames
        .iter()
        .map(|(t, states)| {
            let field = LinkPotentialField {
                params,
                vehicles: states.len(),
            };
            let x: Vec<f64> = states.iter().flat_map(|s| [s.q.x, s.q.y, s.q.z]).collect();
            RateSample {
                t: *t,
                psi: field.value(&x),
                grad: field.gradient(&x),
                velocity: states
                    .iter()
                    .flat_map(|s| {
                        let dv = s.qdot - params.link.v_hat;
                        [dv.x, dv.y, dv.z]
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Integrates `q̈ + K q̇ + ∇Ψ(q) = 0` with classical RK4 and returns
/// `steps + 1` samples starting at t = 0.
pub fn integrate_gradient_flow(
    field: &dyn PotentialField,
    q0: &[f64],
    qdot0: &[f64],
    damping: f64,
    dt: f64,
    steps: usize,
) -> Vec<RateSample> {
    let accel = |q: &[f64], v: &[f64]| -> Vec<f64> {
        field
            .gradient(q)
            .iter()
            .zip(v)
            .map(|(g, v)| -g - damping * v)
            .collect()
    };
    let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| x + a * y).collect() };
    let sample = |t: f64, q: &[f64], v: &[f64]| RateSample {
        t,
        psi: field.value(q),
        grad: field.gradient(q),
        velocity: v.to_vec(),
    };

    let (mut q, mut v) = (q0.to_vec(), qdot0.to_vec());
    let mut out = Vec::with_capacity(steps + 1);
    out.push(sample(0.0, &q, &v));
    for k in 1..=steps {
        let (k1q, k1v) = (v.clone(), accel(&q, &v));
        let (q2, v2) = (axpy(&q, 0.5 * dt, &k1q), axpy(&v, 0.5 * dt, &k1v));
        let (k2q, k2v) = (v2.clone(), accel(&q2, &v2));
        let (q3, v3) = (axpy(&q, 0.5 * dt, &k2q), axpy(&v, 0.5 * dt, &k2v));
        let (k3q, k3v) = (v3.clone(), accel(&q3, &v3));
        let (q4, v4) = (axpy(&q, dt, &k3q), axpy(&v, dt, &k3v));
        let (k4q, k4v) = (v4.clone(), accel(&q4, &v4));
        for d in 0..q.len() {
            q[d] += dt / 6.0 * (k1q[d] + 2.0 * (k2q[d] + k3q[d]) + k4q[d]);
            v[d] += dt / 6.0 * (k1v[d] + 2.0 * (k2v[d] + k3v[d]) + k4v[d]);
        }
        out.push(sample(k as f64 * dt, &q, &v));
    }
    out
}

/// `Ψ(q) = ½‖q‖²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuadraticBowl {
    pub dim: usize,
}

impl PotentialField for QuadraticBowl {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}
