//! The simulation loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EntrySchedule, FleetSpec, ScenarioConfig};
use super::monitor::{monitor_constraints, Verdicts};
use crate::admission::{
    entrant_energy, AdmissionBudget, AdmissionGate, EntryEnergy, EntryEvent, Verdict,
};
use crate::control::{control_all, ProtocolParams};
use crate::dynamics::{flat_to_body_input, flat_to_kinematic, step, FlatInput, FlatState};
use crate::energy::{
    dissipation_rate, energy, estimate_lambda, estimate_lipschitz, link_rate_samples, thresholds,
    verify_rate_bound, EnergyBreakdown, LambdaEstimate, LinkPotentialField, RateCertificate,
    RateReport, SafetyThresholds, SampleBox,
};
use crate::geometry::{core_region_nonempty, wall_distance, LinkSpec};
use crate::{Error, Result, Vec3};

/// Lattice draws tried before giving up on H(0) ≤ c*.
const MAX_FLEET_DRAWS: usize = 1000;

/// Monitor values at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorRow {
    pub t: f64,
    /// Smallest pairwise Euclidean distance; +∞ with fewer than two vehicles.
    pub min_sep: f64,
    /// +∞ for an empty fleet.
    pub min_speed: f64,
    /// 0 for an empty fleet.
    pub max_speed: f64,
    /// Smallest wall distance over vehicles; +∞ for an empty fleet.
    pub min_wall_dist: f64,
    pub energy: EnergyBreakdown,
    /// `Σ K_i ‖q̇_i − v̂‖²`
    pub dissipation: f64,
    /// Vehicles were injected at this step.
    pub entry: bool,
    pub vehicles: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub id: u32,
    pub state: FlatState,
    pub u: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryRecord {
    pub t: f64,
    pub ids: Vec<u32>,
    pub verdict: Verdict,
    pub injected: bool,
    pub energy: EntryEnergy,
    /// H just before the entry.
    pub h_before: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinalVehicle {
    pub id: u32,
    pub state: FlatState,
    pub entered_at: f64,
}

/// Largest control magnitudes seen during the run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PeakInputs {
    /// max ‖u_i‖
    pub accel: f64,
    pub longitudinal: f64,
    pub turn_rate: f64,
    pub vertical: f64,
}

#[derive(Clone, Debug)]
pub struct SimReport {
    pub monitors: Vec<MonitorRow>,
    pub trajectory: Vec<TrajectoryRow>,
    pub entries: Vec<EntryRecord>,
    /// Scheduled groups that found no free spawn slot.
    pub blocked_groups: usize,
    pub final_t: f64,
    pub final_fleet: Vec<FinalVehicle>,
    pub link: LinkSpec,
    pub thresholds: SafetyThresholds,
    /// Calibrated λ̂ when the run has an entry schedule.
    pub lambda: Option<LambdaEstimate>,
    pub budget: Option<AdmissionBudget>,
    pub peak: PeakInputs,
    pub verdicts: Verdicts,
}

impl SimReport {
    pub fn admitted_entrants(&self) -> usize {
        self.entries.iter().filter(|e| e.injected).map(|e| e.ids.len()).sum()
    }
}

/// Integer lattice points ordered by distance from the origin, then angle.
fn ring_order(radius: i32) -> Vec<(i32, i32)> {
    let mut pts: Vec<(i32, i32)> = (-radius..=radius)
        .flat_map(|a| (-radius..=radius).map(move |b| (a, b)))
        .collect();
    pts.sort_by(|p, q| {
        let key = |&(a, b): &(i32, i32)| (a * a + b * b, (b as f64).atan2(a as f64));
        let (kp, kq) = (key(p), key(q));
        kp.0.cmp(&kq.0).then(kp.1.total_cmp(&kq.1))
    });
    pts
}

/// Orthonormal pair spanning the plane normal to `n`.
fn plane_basis(n: &Vec3) -> (Vec3, Vec3) {
    let n = n.normalize();
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Candidate positions on a lattice around `center` in the plane normal to
/// `normal`, inside the core region, nearest first.
fn lattice_slots(link: &LinkSpec, center: Vec3, normal: &Vec3, spacing: f64, wanted: usize) -> Vec<Vec3> {
    let (e1, e2) = plane_basis(normal);
    let mut radius = 1;
    loop {
        let slots: Vec<Vec3> = ring_order(radius)
            .into_iter()
            .map(|(a, b)| center + (e1 * a as f64 + e2 * b as f64) * spacing)
            .filter(|q| link.in_core(q))
            .collect();
        if slots.len() >= wanted || radius > 64 {
            return slots;
        }
        radius *= 2;
    }
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// v̂ plus a perturbation of uniform magnitude in `[0, jitter)`.
fn jittered_velocity(v_hat: Vec3, jitter: f64, rng: &mut impl Rng) -> Vec3 {
    if jitter > 0.0 {
        let dir = random_unit(rng);
        v_hat + dir * rng.gen_range(0.0..jitter)
    } else {
        v_hat
    }
}

fn scenario_error(msg: String) -> Error {
    Error::ConfigInvalid(vec![crate::geometry::Violation::Scenario(msg)])
}

/// Initial fleet of a validated scenario.
pub fn initial_fleet(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<Vec<FlatState>> {
    let (count, spacing, jitter, origin) = match &cfg.fleet {
        FleetSpec::Explicit(states) => return Ok(states.clone()),
        FleetSpec::Lattice {
            count,
            spacing,
            speed_jitter,
            origin,
        } => (*count, *spacing, *speed_jitter, *origin),
    };
    if count == 0 {
        return Ok(Vec::new());
    }
    let link = &cfg.link;
    let center = origin.unwrap_or_else(|| core_region_nonempty(link).witness);
    let slots = lattice_slots(link, center, &link.v_hat, spacing, count);
    if slots.len() < count {
        return Err(scenario_error(format!(
            "only {} lattice slots fit in the core region for {count} vehicles",
            slots.len()
        )));
    }
    let params = cfg.params();
    let c_star = thresholds(link, &cfg.potentials).c_star;
    for _ in 0..MAX_FLEET_DRAWS {
        let fleet: Vec<FlatState> = slots[..count]
            .iter()
            .map(|q| FlatState::new(*q, jittered_velocity(link.v_hat, jitter, rng)))
            .collect();
        if energy(&fleet, &params, 0.0).h <= c_star {
            return Ok(fleet);
        }
    }
    Err(scenario_error(format!(
        "no lattice draw with H(0) <= c* = {c_star} in {MAX_FLEET_DRAWS} tries"
    )))
}

/// Runs the protocol without entries, calling `visit` on the fleet at every
/// step including t = 0.
pub fn free_run(
    params: &ProtocolParams,
    states: &[FlatState],
    dt: f64,
    steps: usize,
    mut visit: impl FnMut(f64, &[FlatState]),
) -> Result<Vec<FlatState>> {
    let mut s = states.to_vec();
    for k in 0..=steps {
        visit(k as f64 * dt, &s);
        if k < steps {
            let u = control_all(&s, params);
            s = step(&s, &u, dt)?;
        }
    }
    Ok(s)
}

/// λ̂ from a no-entry run of `fleet` over the calibration horizon.
pub fn calibrate_lambda(cfg: &ScenarioConfig, fleet: &[FlatState]) -> Result<LambdaEstimate> {
    let params = cfg.params();
    let steps = (cfg.admission.calibration_horizon / cfg.dt).round() as usize;
    let mut trace = Vec::with_capacity(steps + 1);
    free_run(&params, fleet, cfg.dt, steps, |t, s| trace.push(energy(s, &params, t)))?;
    Ok(estimate_lambda(&trace))
}

/// Rate-bound check on a no-entry run of the initial fleet.
#[derive(Clone, Debug)]
pub struct RateCheck {
    /// Sampled Lipschitz estimate before any lift.
    pub lipschitz_estimate: f64,
    pub certificate: RateCertificate,
    pub report: RateReport,
}

/// Runs the initial fleet without entries for the scenario duration and
/// checks the O(1/t) bound, with L estimated over the box the trajectory
/// visits (padded by 1 m) and lifted to satisfy the damping assumption.
pub fn rate_check(cfg: &ScenarioConfig, lipschitz_samples: usize) -> Result<RateCheck> {
    cfg.validate()?;
    let params = cfg.params();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fleet = initial_fleet(cfg, &mut rng)?;
    if fleet.is_empty() {
        return Err(Error::DegenerateSamples);
    }
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let n = 3 * fleet.len();
    let (mut lo, mut hi) = (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]);
    let mut frames = Vec::with_capacity(steps + 1);
    free_run(&params, &fleet, cfg.dt, steps, |t, s| {
        for (i, st) in s.iter().enumerate() {
            for c in 0..3 {
                lo[3 * i + c] = lo[3 * i + c].min(st.q[c]);
                hi[3 * i + c] = hi[3 * i + c].max(st.q[c]);
            }
        }
        frames.push((t, s.to_vec()));
    })?;
    let region = SampleBox::new(lo.iter().map(|x| x - 1.0).collect(), hi.iter().map(|x| x + 1.0).collect());
    let field = LinkPotentialField {
        params: &params,
        vehicles: fleet.len(),
    };
    let lipschitz_estimate = estimate_lipschitz(&field, &region, lipschitz_samples, cfg.seed)?;
    let trace = link_rate_samples(&frames, &params);
    let first = &trace[0];
    let certificate = RateCertificate::with_lifted_lipschitz(
        cfg.damping,
        lipschitz_estimate,
        first.psi,
        &first.grad,
        &first.velocity,
    )?;
    let report = verify_rate_bound(&trace, &certificate)?;
    Ok(RateCheck {
        lipschitz_estimate,
        certificate,
        report,
    })
}

fn spawn_center(link: &LinkSpec) -> Option<(Vec3, Vec3)> {
    let gate = link.entrance()?;
    let w = core_region_nonempty(link).witness;
    let n = gate.normal();
    Some((w + n * (gate.offset() - n.dot(&w)), n))
}

fn spawn_slots(link: &LinkSpec, schedule: &EntrySchedule) -> Vec<Vec3> {
    match spawn_center(link) {
        Some((center, n)) => lattice_slots(link, center, &n, schedule.spawn_spacing, schedule.group_size),
        None => Vec::new(),
    }
}

fn entrant_offset(schedule: &EntrySchedule, slot: usize) -> Option<Vec3> {
    schedule
        .velocity_offsets
        .as_ref()
        .filter(|o| !o.is_empty())
        .map(|o| o[slot % o.len()])
}

/// κ and γ of a nominal group: the first spawn slots with the largest
/// scheduled velocity perturbation.
pub fn planned_entry_energy(cfg: &ScenarioConfig, schedule: &EntrySchedule) -> EntryEnergy {
    let link = &cfg.link;
    let slots = spawn_slots(link, schedule);
    let group: Vec<FlatState> = slots
        .iter()
        .take(schedule.group_size)
        .enumerate()
        .map(|(k, q)| {
            let dv = entrant_offset(schedule, k).unwrap_or_else(|| Vec3::x() * schedule.speed_jitter);
            FlatState::new(*q, link.v_hat + dv)
        })
        .collect();
    entrant_energy(&group, link, &cfg.potentials)
}

/// Admission budget for a scenario with an entry schedule.
pub fn admission_budget(cfg: &ScenarioConfig, fleet: &[FlatState]) -> Result<Option<(AdmissionBudget, Option<LambdaEstimate>)>> {
    let Some(schedule) = &cfg.schedule else {
        return Ok(None);
    };
    let c_star = thresholds(&cfg.link, &cfg.potentials).c_star;
    let (lambda, estimate) = match cfg.admission.lambda {
        Some(l) => (l, None),
        None => {
            let est = calibrate_lambda(cfg, fleet)?;
            (est.lambda * cfg.admission.lambda_margin, Some(est))
        }
    };
    let planned = planned_entry_energy(cfg, schedule);
    Ok(Some((AdmissionBudget::new(c_star, lambda, schedule.period, planned), estimate)))
}

fn monitor_row(t: f64, states: &[FlatState], params: &ProtocolParams, entry: bool) -> MonitorRow {
    let mut min_sep = f64::INFINITY;
    for i in 0..states.len() {
        for j in (i + 1)..states.len() {
            min_sep = min_sep.min((states[i].q - states[j].q).norm());
        }
    }
    let speeds = states.iter().map(|s| s.qdot.norm());
    MonitorRow {
        t,
        min_sep,
        min_speed: speeds.clone().fold(f64::INFINITY, f64::min),
        max_speed: speeds.fold(0.0, f64::max),
        min_wall_dist: states
            .iter()
            .map(|s| params.link.min_wall_distance(&s.q))
            .fold(f64::INFINITY, f64::min),
        energy: energy(states, params, t),
        dissipation: dissipation_rate(states, params),
        entry,
        vehicles: states.len(),
    }
}

fn update_peaks(peak: &mut PeakInputs, states: &[FlatState], inputs: &[FlatInput]) {
    for (s, u) in states.iter().zip(inputs) {
        peak.accel = peak.accel.max(u.u.norm());
        if let Some(b) = flat_to_kinematic(s).ok().and_then(|k| flat_to_body_input(&k, u).ok()) {
            peak.longitudinal = peak.longitudinal.max(b.a.abs());
            peak.turn_rate = peak.turn_rate.max(b.phi_rate.abs());
            peak.vertical = peak.vertical.max(b.delta.abs());
        }
    }
}

struct Fleet {
    states: Vec<FlatState>,
    ids: Vec<u32>,
    entered_at: Vec<f64>,
}

/// Picks spawn slots clear of the residents and of each other.
fn spawn_group(
    cfg: &ScenarioConfig,
    schedule: &EntrySchedule,
    slots: &[Vec3],
    residents: &[FlatState],
    rng: &mut impl Rng,
) -> Vec<FlatState> {
    let pot = &cfg.potentials;
    let mut group: Vec<FlatState> = Vec::with_capacity(schedule.group_size);
    for q in slots {
        if group.len() == schedule.group_size {
            break;
        }
        let clear = residents
            .iter()
            .chain(group.iter())
            .all(|r| pot.pair_potential(&(q - r.q)) == 0.0);
        if clear {
            group.push(FlatState::new(*q, cfg.link.v_hat));
        }
    }
    for (k, s) in group.iter_mut().enumerate() {
        s.qdot = match entrant_offset(schedule, k) {
            Some(dv) => cfg.link.v_hat + dv,
            None => jittered_velocity(cfg.link.v_hat, schedule.speed_jitter, rng),
        };
    }
    group
}

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimReport> {
    cfg.validate()?;
    let params = cfg.params();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial = initial_fleet(cfg, &mut rng)?;
    let budget = admission_budget(cfg, &initial)?;
    let mut gate = budget
        .as_ref()
        .map(|(b, _)| AdmissionGate::new(*b, cfg.admission.mode));
    let slots = cfg
        .schedule
        .as_ref()
        .map(|s| spawn_slots(&cfg.link, s))
        .unwrap_or_default();

    let dt = cfg.dt;
    let steps = (cfg.duration / dt).round() as usize;
    let snap_every = ((cfg.snapshot_interval / dt).round() as usize).max(1);
    // entries land on the step grid at a stride of at least T
    let to_step = |t: f64| (t / dt - 1e-9).ceil().max(0.0) as usize;
    let entry_step = |k: usize| -> Option<usize> {
        let s = cfg.schedule.as_ref()?;
        let step = to_step(s.start) + k * to_step(s.period);
        (step < steps).then_some(step)
    };

    let mut fleet = Fleet {
        ids: (0..initial.len() as u32).collect(),
        entered_at: vec![0.0; initial.len()],
        states: initial,
    };
    let mut next_id = fleet.states.len() as u32;
    let mut next_entry = 0usize;
    let mut monitors = Vec::with_capacity(steps + 1);
    let mut trajectory = Vec::new();
    let mut entries = Vec::new();
    let mut blocked_groups = 0;
    let mut peak = PeakInputs::default();

    for k in 0..=steps {
        let t = k as f64 * dt;
        let mut entered = false;
        if entry_step(next_entry) == Some(k) {
            next_entry += 1;
            let schedule = cfg.schedule.as_ref().expect("entry step implies schedule");
            let group = spawn_group(cfg, schedule, &slots, &fleet.states, &mut rng);
            if group.is_empty() {
                blocked_groups += 1;
            } else if let Some(gate) = gate.as_mut() {
                let h_before = energy(&fleet.states, &params, t).h;
                let event = EntryEvent {
                    t_k: t,
                    entrants: group
                        .iter()
                        .enumerate()
                        .map(|(j, s)| (*s, next_id + j as u32))
                        .collect(),
                    t_epsilon: schedule.t_epsilon,
                };
                let decision = gate.admit(h_before, &event, &fleet.states, &cfg.link, &cfg.potentials);
                let ids: Vec<u32> = event.entrants.iter().map(|(_, id)| *id).collect();
                next_id += ids.len() as u32;
                if decision.inject {
                    for (s, id) in &event.entrants {
                        fleet.states.push(*s);
                        fleet.ids.push(*id);
                        fleet.entered_at.push(t);
                    }
                    entered = true;
                }
                entries.push(EntryRecord {
                    t,
                    ids,
                    verdict: decision.verdict,
                    injected: decision.inject,
                    energy: decision.energy,
                    h_before,
                });
            }
        }

        monitors.push(monitor_row(t, &fleet.states, &params, entered));
        let inputs = control_all(&fleet.states, &params);
        if k % snap_every == 0 || entered || k == steps {
            for ((s, id), u) in fleet.states.iter().zip(&fleet.ids).zip(&inputs) {
                trajectory.push(TrajectoryRow {
                    t,
                    id: *id,
                    state: *s,
                    u: u.u,
                });
            }
        }
        if k == steps {
            break;
        }
        update_peaks(&mut peak, &fleet.states, &inputs);
        fleet.states = step(&fleet.states, &inputs, dt)?;
        if cfg.exit_drop {
            if let Some(exit) = cfg.link.exit() {
                let mut keep = 0;
                for i in 0..fleet.states.len() {
                    if wall_distance(&fleet.states[i].q, exit) >= 0.0 {
                        fleet.states.swap(keep, i);
                        fleet.ids.swap(keep, i);
                        fleet.entered_at.swap(keep, i);
                        keep += 1;
                    }
                }
                fleet.states.truncate(keep);
                fleet.ids.truncate(keep);
                fleet.entered_at.truncate(keep);
            }
        }
    }

    let final_t = steps as f64 * dt;
    let final_fleet = fleet
        .states
        .iter()
        .zip(&fleet.ids)
        .zip(&fleet.entered_at)
        .map(|((s, id), at)| FinalVehicle {
            id: *id,
            state: *s,
            entered_at: *at,
        })
        .collect();
    let (budget, lambda) = match budget {
        Some((b, l)) => (Some(b), l),
        None => (None, None),
    };
    let mut report = SimReport {
        monitors,
        trajectory,
        entries,
        blocked_groups,
        final_t,
        final_fleet,
        link: cfg.link.clone(),
        thresholds: thresholds(&cfg.link, &cfg.potentials),
        lambda,
        budget,
        peak,
        verdicts: Verdicts::default(),
    };
    report.verdicts = monitor_constraints(&report);
    Ok(report)
}
