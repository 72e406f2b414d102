//! Entry admission for a link.
//!
//! A group of M entrants raises H by at most `Mκ + M(M−1)γ`, where κ bounds
//! each entrant's kinetic plus boundary energy and γ bounds half of each
//! entrant pair's separation potential. If the link's energy has decayed
//! to `c*λ/T` by the next entry, groups obeying
//! `Mκ + M(M−1)γ ≤ c*(1 − λ/T)` keep H under c*.

use std::fmt;

use crate::dynamics::FlatState;
use crate::geometry::{transition_core, wall_distance, LinkSpec};
use crate::potential::{sigma_norm, sigma_of_length, PotentialConfig};
use crate::{Error, Result};

/// Slack on the entry-period comparison, seconds.
const PERIOD_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EntryEvent {
    pub t_k: f64,
    pub entrants: Vec<(FlatState, u32)>,
    /// Width of the multiple-entry window.
    pub t_epsilon: f64,
}

impl EntryEvent {
    pub fn states(&self) -> Vec<FlatState> {
        self.entrants.iter().map(|(s, _)| *s).collect()
    }
}

/// κ and γ of an entering group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntryEnergy {
    pub kappa: f64,
    pub gamma: f64,
}

impl EntryEnergy {
    /// `Mκ + M(M−1)γ`.
    pub fn group_bound(&self, m: usize) -> f64 {
        let m = m as f64;
        m * self.kappa + m * (m - 1.0) * self.gamma
    }
}

/// κ and γ from the entrants alone, without the resident check.
pub fn entrant_energy(entrants: &[FlatState], link: &LinkSpec, potentials: &PotentialConfig) -> EntryEnergy {
    let kappa = entrants
        .iter()
        .map(|s| {
            let kinetic = 0.5 * (s.qdot - link.v_hat).norm_squared();
            let boundary: f64 = link
                .walls
                .iter()
                .map(|w| potentials.psi_b(wall_distance(&s.q, w)))
                .sum();
            kinetic + boundary
        })
        .fold(0.0, f64::max);
    let mut gamma = 0.0f64;
    for i in 0..entrants.len() {
        for j in (i + 1)..entrants.len() {
            gamma = gamma.max(0.5 * potentials.pair_potential(&(entrants[i].q - entrants[j].q)));
        }
    }
    EntryEnergy { kappa, gamma }
}

/// Fails when an entrant sits inside the separation support of a resident.
pub fn check_resident_clearance(
    entrants: &[FlatState],
    residents: &[FlatState],
    potentials: &PotentialConfig,
) -> Result<()> {
    let eps = potentials.epsilon();
    for (i, e) in entrants.iter().enumerate() {
        for (j, r) in residents.iter().enumerate() {
            let sigma_distance = sigma_norm(&(e.q - r.q), eps);
            if potentials.psi(sigma_distance) > 0.0 {
                return Err(Error::ResidentsTooClose {
                    entrant: i,
                    resident: j,
                    sigma_distance,
                });
            }
        }
    }
    Ok(())
}

/// κ and γ of an entering group, after checking that no entrant interacts
/// with a resident.
pub fn entry_kappa_gamma(
    entrants: &[FlatState],
    residents: &[FlatState],
    link: &LinkSpec,
    potentials: &PotentialConfig,
) -> Result<EntryEnergy> {
    if entrants.is_empty() {
        return Err(Error::EmptyEntryGroup);
    }
    check_resident_clearance(entrants, residents, potentials)?;
    Ok(entrant_energy(entrants, link, potentials))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryCapacity {
    Bounded(u64),
    Unbounded,
}

impl EntryCapacity {
    pub fn admits(&self, m: usize) -> bool {
        match self {
            EntryCapacity::Bounded(max) => (m as u64) <= *max,
            EntryCapacity::Unbounded => true,
        }
    }
}

impl fmt::Display for EntryCapacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryCapacity::Bounded(m) => write!(f, "{m}"),
            EntryCapacity::Unbounded => write!(f, "unbounded"),
        }
    }
}

/// Largest M with `Mκ + M(M−1)γ ≤ c*(1 − λ/T)`.
pub fn max_entry_count(kappa: f64, gamma: f64, c_star: f64, lambda: f64, period: f64) -> EntryCapacity {
    let rhs = c_star * (1.0 - lambda / period);
    if !(rhs > 0.0) {
        return EntryCapacity::Bounded(0);
    }
    if kappa <= 0.0 && gamma <= 0.0 {
        return EntryCapacity::Unbounded;
    }
    let fits = |m: f64| m * kappa + m * (m - 1.0) * gamma <= rhs;
    // root of γM² + (κ − γ)M − rhs = 0, then corrected to the exact integer
    let estimate = if gamma > 0.0 {
        let b = kappa - gamma;
        (-b + (b * b + 4.0 * gamma * rhs).sqrt()) / (2.0 * gamma)
    } else {
        rhs / kappa
    };
    let mut m = estimate.floor().max(0.0);
    while m > 0.0 && !fits(m) {
        m -= 1.0;
    }
    while fits(m + 1.0) {
        m += 1.0;
    }
    EntryCapacity::Bounded(m as u64)
}

/// Shortest entry period `λh₀/(h₀ − h_ε)` that keeps H below h₀ when each
/// entry adds at most h_ε.
pub fn min_entry_period(lambda: f64, h0: f64, h_eps: f64) -> Result<f64> {
    if !(h_eps >= 0.0 && h_eps < h0) {
        return Err(Error::InvalidBudget { h0, h_eps });
    }
    Ok(lambda * h0 / (h0 - h_eps))
}

/// κ and γ for vehicles crossing from an upstream link at equilibrium into
/// a downstream link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionBudget {
    /// `½‖v̂₁ − v̂₂‖²`
    pub kappa: f64,
    /// `½ψ₂(d̂₁)`, reading d̂₁ as the σ-distance upstream pairs settle at.
    pub gamma: f64,
    /// `½ψ₂(‖d̂₁‖_σ)`, reading d̂₁ as a Euclidean spacing instead.
    pub gamma_euclidean: f64,
}

impl TransitionBudget {
    pub fn energy(&self) -> EntryEnergy {
        EntryEnergy {
            kappa: self.kappa,
            gamma: self.gamma,
        }
    }
}

pub fn transition_kappa_gamma(
    upstream: (&LinkSpec, &PotentialConfig),
    downstream: (&LinkSpec, &PotentialConfig),
) -> Result<TransitionBudget> {
    let (up, _) = upstream;
    let (down, down_pot) = downstream;
    if !transition_core(up, down).nonempty {
        return Err(Error::DisconnectedLinks);
    }
    let kappa = 0.5 * (up.v_hat - down.v_hat).norm_squared();
    let gamma = 0.5 * down_pot.psi(up.d_hat);
    let gamma_euclidean = 0.5 * down_pot.psi(sigma_of_length(up.d_hat, down_pot.epsilon()));
    Ok(TransitionBudget {
        kappa,
        gamma,
        gamma_euclidean,
    })
}

/// Energy budget for one link's entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissionBudget {
    pub c_star: f64,
    pub lambda_hat: f64,
    /// Minimum time between entry events, T.
    pub period: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub m_max: EntryCapacity,
}

impl AdmissionBudget {
    pub fn new(c_star: f64, lambda_hat: f64, period: f64, planned: EntryEnergy) -> Self {
        Self {
            c_star,
            lambda_hat,
            period,
            kappa: planned.kappa,
            gamma: planned.gamma,
            m_max: max_entry_count(planned.kappa, planned.gamma, c_star, lambda_hat, period),
        }
    }

    /// `c*(1 − λ/T)`
    pub fn entry_allowance(&self) -> f64 {
        self.c_star * (1.0 - self.lambda_hat / self.period)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdmissionMode {
    /// Rejected groups are not injected.
    Enforce,
    /// Every group is injected; verdicts are only logged.
    Observe,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RejectReason {
    Period { elapsed: f64, required: f64 },
    Count { entrants: usize, m_max: EntryCapacity },
    Budget { group_energy: f64, allowance: f64 },
    ResidentsTooClose { entrant: usize, resident: usize, sigma_distance: f64 },
    Headroom { h_after: f64, c_star: f64 },
}

impl RejectReason {
    pub fn tag(&self) -> &'static str {
        match self {
            RejectReason::Period { .. } => "period",
            RejectReason::Count { .. } => "count",
            RejectReason::Budget { .. } => "budget",
            RejectReason::ResidentsTooClose { .. } => "residents-too-close",
            RejectReason::Headroom { .. } => "headroom",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Period { elapsed, required } => {
                write!(f, "period: {elapsed} s since last entry < T={required} s")
            }
            RejectReason::Count { entrants, m_max } => {
                write!(f, "count: {entrants} entrants > m_max={m_max}")
            }
            RejectReason::Budget {
                group_energy,
                allowance,
            } => write!(f, "budget: M*kappa+M(M-1)*gamma={group_energy} > c*(1-lambda/T)={allowance}"),
            RejectReason::ResidentsTooClose {
                entrant,
                resident,
                sigma_distance,
            } => write!(
                f,
                "residents-too-close: entrant {entrant} at sigma distance {sigma_distance} of resident {resident}"
            ),
            RejectReason::Headroom { h_after, c_star } => {
                write!(f, "headroom: H after entry could reach {h_after} > c*={c_star}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Admit,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_admit(&self) -> bool {
        matches!(self, Verdict::Admit)
    }
}

/// Outcome of one admission request.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissionDecision {
    pub verdict: Verdict,
    /// Whether the group goes in; differs from the verdict in observe mode.
    pub inject: bool,
    pub energy: EntryEnergy,
}

/// Run-local admission gate. Holds the time of the last injected group.
#[derive(Clone, Debug)]
pub struct AdmissionGate {
    pub budget: AdmissionBudget,
    pub mode: AdmissionMode,
    last_entry: Option<f64>,
}

impl AdmissionGate {
    pub fn new(budget: AdmissionBudget, mode: AdmissionMode) -> Self {
        Self {
            budget,
            mode,
            last_entry: None,
        }
    }

    pub fn last_entry(&self) -> Option<f64> {
        self.last_entry
    }

    /// Decides on `event` given the residents and the link energy just
    /// before the entry. The first failing clause is reported, in the order
    /// period, count, budget, resident clearance, energy headroom.
    pub fn admit(
        &mut self,
        current_h: f64,
        event: &EntryEvent,
        residents: &[FlatState],
        link: &LinkSpec,
        potentials: &PotentialConfig,
    ) -> AdmissionDecision {
        let entrants = event.states();
        let energy = entrant_energy(&entrants, link, potentials);
        let verdict = self.evaluate(current_h, event.t_k, &entrants, energy, residents, potentials);
        let inject = match self.mode {
            AdmissionMode::Enforce => verdict.is_admit(),
            AdmissionMode::Observe => true,
        };
        if inject && !entrants.is_empty() {
            self.last_entry = Some(event.t_k);
        }
        AdmissionDecision {
            verdict,
            inject,
            energy,
        }
    }

    fn evaluate(
        &self,
        current_h: f64,
        t: f64,
        entrants: &[FlatState],
        energy: EntryEnergy,
        residents: &[FlatState],
        potentials: &PotentialConfig,
    ) -> Verdict {
        let budget = &self.budget;
        if let Some(last) = self.last_entry {
            let elapsed = t - last;
            if elapsed < budget.period - PERIOD_TOL {
                return Verdict::Reject(RejectReason::Period {
                    elapsed,
                    required: budget.period,
                });
            }
        }
        let m = entrants.len();
        if !budget.m_max.admits(m) {
            return Verdict::Reject(RejectReason::Count {
                entrants: m,
                m_max: budget.m_max,
            });
        }
        let group_energy = energy.group_bound(m);
        let allowance = budget.entry_allowance();
        if group_energy > allowance {
            return Verdict::Reject(RejectReason::Budget {
                group_energy,
                allowance,
            });
        }
        if let Err(Error::ResidentsTooClose {
            entrant,
            resident,
            sigma_distance,
        }) = check_resident_clearance(entrants, residents, potentials)
        {
            return Verdict::Reject(RejectReason::ResidentsTooClose {
                entrant,
                resident,
                sigma_distance,
            });
        }
        let h_after = current_h + group_energy;
        if h_after > budget.c_star {
            return Verdict::Reject(RejectReason::Headroom {
                h_after,
                c_star: budget.c_star,
            });
        }
        Verdict::Admit
    }
}
