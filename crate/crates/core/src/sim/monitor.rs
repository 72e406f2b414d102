//! Constraint and objective verdicts over a finished run.
//!
//! Verdicts depend only on the monitor series, the final fleet and the
//! link, so they can be recomputed from the CSV outputs ([`replay`]).

use std::collections::HashMap;

use super::run::{FinalVehicle, MonitorRow, SimReport};
use crate::dynamics::FlatState;
use crate::energy::EnergyBreakdown;
use crate::geometry::{wall_distance, LinkSpec};
use crate::{Error, Result, Vec3};

/// Largest final ‖q̇_i − v̂‖ for velocity convergence, m/s.
pub const CONVERGED_SPEED_TOL: f64 = 0.1;
/// Vehicles younger than this at the end are exempt from velocity convergence, s.
pub const CONVERGENCE_MIN_PRESENCE: f64 = 50.0;
/// Largest final V_p for separation convergence.
pub const CONVERGED_POTENTIAL_TOL: f64 = 1e-3;
/// Allowed shortfall of final wall clearance below d̂_b, m.
pub const CLEARANCE_SLACK: f64 = 0.1;

/// Slack on presence and time comparisons, s.
const TIME_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintVerdict {
    pub pass: bool,
    pub first_violation_t: Option<f64>,
    /// Extreme value of the monitored quantity (NaN when vacuous).
    pub worst: f64,
}

impl ConstraintVerdict {
    fn vacuous() -> Self {
        Self {
            pass: true,
            first_violation_t: None,
            worst: f64::NAN,
        }
    }
}

impl Default for ConstraintVerdict {
    fn default() -> Self {
        Self::vacuous()
    }
}

/// C₁–C₃ hold at every step; O₁–O₃ hold at the end of the run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Verdicts {
    /// Every speed within `[v_, v̄]`; `worst` is the largest excursion
    /// outside the envelope (negative when inside).
    pub c1: ConstraintVerdict,
    /// Minimum pairwise separation ≥ d_min; `worst` is the minimum.
    pub c2: ConstraintVerdict,
    /// Minimum wall distance ≥ d_b,min; `worst` is the minimum.
    pub c3: ConstraintVerdict,
    /// `worst` is the largest final ‖q̇_i − v̂‖ among vehicles old enough.
    pub o1: ConstraintVerdict,
    /// `worst` is the final V_p.
    pub o2: ConstraintVerdict,
    /// `worst` is the smallest final wall clearance.
    pub o3: ConstraintVerdict,
}

impl Verdicts {
    pub fn constraints_pass(&self) -> bool {
        self.c1.pass && self.c2.pass && self.c3.pass
    }

    pub fn objectives_pass(&self) -> bool {
        self.o1.pass && self.o2.pass && self.o3.pass
    }

    pub fn named(&self) -> [(&'static str, &ConstraintVerdict); 6] {
        [
            ("C1 speed envelope", &self.c1),
            ("C2 minimum separation", &self.c2),
            ("C3 wall clearance", &self.c3),
            ("O1 velocity convergence", &self.o1),
            ("O2 separation convergence", &self.o2),
            ("O3 clearance convergence", &self.o3),
        ]
    }

    /// Same pass flags, with violation times and worst values within `tol`.
    pub fn agrees_with(&self, other: &Verdicts, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= tol * (1.0 + a.abs());
        self.named().iter().zip(other.named().iter()).all(|((_, a), (_, b))| {
            a.pass == b.pass
                && close(a.worst, b.worst)
                && match (a.first_violation_t, b.first_violation_t) {
                    (None, None) => true,
                    (Some(x), Some(y)) => close(x, y),
                    _ => false,
                }
        })
    }
}

/// Inputs the verdicts are computed from.
pub struct MonitorSeries<'a> {
    pub rows: &'a [MonitorRow],
    pub final_t: f64,
    pub final_fleet: &'a [FinalVehicle],
    pub link: &'a LinkSpec,
}

fn stepwise(rows: &[MonitorRow], value: impl Fn(&MonitorRow) -> f64, ok: impl Fn(f64) -> bool, pick_min: bool) -> ConstraintVerdict {
    let mut v = ConstraintVerdict::vacuous();
    for r in rows {
        let x = value(r);
        if x.is_infinite() {
            continue;
        }
        v.worst = if v.worst.is_nan() {
            x
        } else if pick_min {
            v.worst.min(x)
        } else {
            v.worst.max(x)
        };
        if !ok(x) && v.pass {
            v.pass = false;
            v.first_violation_t = Some(r.t);
        }
    }
    v
}

fn final_check(final_t: f64, worst: f64, pass: bool) -> ConstraintVerdict {
    ConstraintVerdict {
        pass,
        first_violation_t: (!pass).then_some(final_t),
        worst,
    }
}

pub fn evaluate(series: &MonitorSeries) -> Verdicts {
    let link = series.link;
    let rows = series.rows;
    let (lo, hi) = (link.v_lower, link.v_upper);
    // excursion outside [lo, hi]; rows of an empty fleet are skipped
    let excursion = |r: &MonitorRow| {
        if r.vehicles == 0 && r.min_speed.is_infinite() {
            f64::INFINITY
        } else {
            (lo - r.min_speed).max(r.max_speed - hi)
        }
    };
    let c1 = stepwise(rows, excursion, |x| x <= 0.0, false);
    let c2 = stepwise(rows, |r| r.min_sep, |x| x >= link.d_min, true);
    let c3 = stepwise(rows, |r| r.min_wall_dist, |x| x >= link.d_b_min, true);

    let old_enough = series
        .final_fleet
        .iter()
        .filter(|v| series.final_t - v.entered_at >= CONVERGENCE_MIN_PRESENCE - TIME_TOL);
    let o1 = old_enough
        .map(|v| (v.state.qdot - link.v_hat).norm())
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    let o1 = match o1 {
        Some(w) => final_check(series.final_t, w, w <= CONVERGED_SPEED_TOL),
        None => ConstraintVerdict::vacuous(),
    };
    let o2 = match rows.last() {
        Some(r) if !series.final_fleet.is_empty() => {
            final_check(series.final_t, r.energy.v_p, r.energy.v_p <= CONVERGED_POTENTIAL_TOL)
        }
        _ => ConstraintVerdict::vacuous(),
    };
    let clearance = series
        .final_fleet
        .iter()
        .flat_map(|v| link.walls.iter().map(move |w| wall_distance(&v.state.q, w)))
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))));
    let o3 = match clearance {
        Some(w) => final_check(series.final_t, w, w >= link.d_b_hat - CLEARANCE_SLACK),
        None => ConstraintVerdict::vacuous(),
    };
    Verdicts { c1, c2, c3, o1, o2, o3 }
}

pub fn monitor_constraints(report: &SimReport) -> Verdicts {
    evaluate(&MonitorSeries {
        rows: &report.monitors,
        final_t: report.final_t,
        final_fleet: &report.final_fleet,
        link: &report.link,
    })
}

fn fields(line: &str, expect: usize, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = line
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("{what}: {e} in line '{line}'")))?;
    if v.len() != expect {
        return Err(Error::Parse(format!("{what}: expected {expect} columns, got {}", v.len())));
    }
    Ok(v)
}

/// Monitor rows read back from `monitors.csv`.
pub fn parse_monitors(csv: &str) -> Result<Vec<MonitorRow>> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f = fields(l, 9, "monitors.csv")?;
            Ok(MonitorRow {
                t: f[0],
                min_sep: f[1],
                min_speed: f[2],
                max_speed: f[3],
                min_wall_dist: f[4],
                energy: EnergyBreakdown {
                    t: f[0],
                    v_p: f[5],
                    v_b: f[6],
                    v_k: f[7],
                    h: f[8],
                },
                dissipation: f64::NAN,
                entry: false,
                vehicles: if f[2].is_infinite() { 0 } else { 1 },
            })
        })
        .collect()
}

/// Final fleet read back from `trajectory.csv`: the rows at the last time,
/// with each vehicle's entry time taken as its first appearance.
pub fn parse_final_fleet(csv: &str) -> Result<(f64, Vec<FinalVehicle>)> {
    let mut first_seen: HashMap<u32, f64> = HashMap::new();
    let mut last_t = f64::NEG_INFINITY;
    let mut last_rows: Vec<(u32, FlatState)> = Vec::new();
    for line in csv.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f = fields(line, 11, "trajectory.csv")?;
        let (t, id) = (f[0], f[1] as u32);
        first_seen.entry(id).or_insert(t);
        if t > last_t {
            last_t = t;
            last_rows.clear();
        }
        let state = FlatState::new(Vec3::new(f[2], f[3], f[4]), Vec3::new(f[5], f[6], f[7]));
        last_rows.push((id, state));
    }
    let fleet = last_rows
        .into_iter()
        .map(|(id, state)| FinalVehicle {
            id,
            state,
            entered_at: first_seen[&id],
        })
        .collect();
    Ok((last_t.max(0.0), fleet))
}

/// Recomputes the verdicts from the contents of `monitors.csv` and
/// `trajectory.csv`.
pub fn replay(monitors_csv: &str, trajectory_csv: &str, link: &LinkSpec) -> Result<Verdicts> {
    let rows = parse_monitors(monitors_csv)?;
    let (final_t, final_fleet) = parse_final_fleet(trajectory_csv)?;
    let final_t = rows.last().map_or(final_t, |r| r.t);
    Ok(evaluate(&MonitorSeries {
        rows: &rows,
        final_t,
        final_fleet: &final_fleet,
        link,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tests::reference_link;

    fn row(t: f64, min_sep: f64, min_speed: f64, max_speed: f64, wall: f64) -> MonitorRow {
        MonitorRow {
            t,
            min_sep,
            min_speed,
            max_speed,
            min_wall_dist: wall,
            energy: EnergyBreakdown {
                t,
                v_p: 0.0,
                v_b: 0.0,
                v_k: 0.0,
                h: 0.0,
            },
            dissipation: 0.0,
            entry: false,
            vehicles: 2,
        }
    }

    fn eval(rows: &[MonitorRow], fleet: &[FinalVehicle]) -> Verdicts {
        let link = reference_link();
        evaluate(&MonitorSeries {
            rows,
            final_t: rows.last().map_or(0.0, |r| r.t),
            final_fleet: fleet,
            link: &link,
        })
    }

    #[test]
    fn empty_run_is_vacuous() {
        let v = eval(&[], &[]);
        assert!(v.constraints_pass() && v.objectives_pass());
    }

    #[test]
    fn first_violation_times() {
        let rows = [
            row(0.0, 10.0, 9.0, 11.0, 30.0),
            row(1.0, 1.0, 4.0, 11.0, 30.0),
            row(2.0, 1.2, 9.0, 26.0, -1.0),
        ];
        let v = eval(&rows, &[]);
        assert_eq!(v.c1.first_violation_t, Some(1.0));
        assert_eq!(v.c1.worst, 1.0);
        assert_eq!(v.c2.first_violation_t, Some(1.0));
        assert_eq!(v.c2.worst, 1.0);
        assert_eq!(v.c3.first_violation_t, Some(2.0));
        assert!(!v.constraints_pass());
    }

    #[test]
    fn objectives_use_final_fleet() {
        let rows = [row(0.0, 20.0, 10.0, 10.0, 40.0), row(60.0, 20.0, 10.0, 10.5, 40.0)];
        let v_hat = Vec3::new(10.0, 0.0, 0.0);
        let young = FinalVehicle {
            id: 1,
            state: FlatState::new(Vec3::new(0.0, 0.0, 0.0), v_hat + Vec3::new(0.5, 0.0, 0.0)),
            entered_at: 40.0,
        };
        let old = FinalVehicle {
            id: 0,
            state: FlatState::new(Vec3::new(0.0, 30.0, 0.0), v_hat),
            entered_at: 0.0,
        };
        let v = eval(&rows, &[old, young]);
        assert!(v.o1.pass, "young vehicle must be exempt");
        assert!(!v.o3.pass);
        assert_eq!(v.o3.worst, 10.0);
        assert!(v.o2.pass);
    }
}
