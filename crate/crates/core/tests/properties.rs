use proptest::prelude::*;

use linkflow::admission::{max_entry_count, min_entry_period, EntryCapacity};
use linkflow::control::{control_all, ProtocolParams};
use linkflow::dynamics::FlatState;
use linkflow::energy::{energy, thresholds};
use linkflow::geometry::{HalfSpace, LinkSpec};
use linkflow::potential::{sigma_norm, PotentialConfig};
use linkflow::Vec3;

fn link() -> LinkSpec {
    let hs = |n: [f64; 3], b: f64| HalfSpace::new(Vec3::from(n), b).unwrap();
    LinkSpec {
        walls: vec![
            hs([0.0, 1.0, 0.0], 40.0),
            hs([0.0, -1.0, 0.0], 40.0),
            hs([0.0, 0.0, 1.0], 40.0),
            hs([0.0, 0.0, -1.0], 40.0),
        ],
        gates: vec![hs([-1.0, 0.0, 0.0], 0.0), hs([1.0, 0.0, 0.0], 1000.0)],
        v_hat: Vec3::new(10.0, 0.0, 0.0),
        d_hat: 10.0,
        d_min: 1.5,
        d_b_hat: 20.0,
        d_b_min: 0.0,
        v_upper: 25.0,
        v_lower: 5.0,
    }
}

fn params() -> ProtocolParams {
    ProtocolParams::new(link(), PotentialConfig::log_cosh(10.0, 20.0, 0.9), 0.1)
}

fn vehicle() -> impl Strategy<Value = FlatState> {
    (
        (0.0..60.0f64, -38.0..38.0f64, -38.0..38.0f64),
        (5.0..15.0f64, -3.0..3.0f64, -3.0..3.0f64),
    )
        .prop_map(|((x, y, z), (vx, vy, vz))| FlatState::new(Vec3::new(x, y, z), Vec3::new(vx, vy, vz)))
}

/// Mostly inside the low-energy region, so few cases are discarded.
fn calm_vehicle() -> impl Strategy<Value = FlatState> {
    (
        (0.0..300.0f64, -24.0..24.0f64, -24.0..24.0f64),
        (7.0..13.0f64, -2.0..2.0f64, -2.0..2.0f64),
    )
        .prop_map(|((x, y, z), (vx, vy, vz))| FlatState::new(Vec3::new(x, y, z), Vec3::new(vx, vy, vz)))
}

fn capacity(c: EntryCapacity) -> u64 {
    match c {
        EntryCapacity::Bounded(m) => m,
        EntryCapacity::Unbounded => u64::MAX,
    }
}

proptest! {
    #[test]
    fn hamiltonian_is_nonnegative_and_permutation_invariant(fleet in prop::collection::vec(vehicle(), 0..7)) {
        let p = params();
        let e = energy(&fleet, &p, 0.0);
        prop_assert!(e.v_p >= 0.0 && e.v_b >= 0.0 && e.v_k >= 0.0);
        let mut rev = fleet.clone();
        rev.reverse();
        let r = energy(&rev, &p, 0.0);
        prop_assert!((r.h - e.h).abs() <= 1e-12 * (1.0 + e.h));
    }

    #[test]
    fn pair_forces_sum_to_zero(fleet in prop::collection::vec(vehicle(), 2..7)) {
        // clamped clear of the walls, the pair terms are the only forces
        let p = params();
        let inner: Vec<FlatState> = fleet
            .iter()
            .map(|s| FlatState::new(Vec3::new(s.q.x, s.q.y.clamp(-19.0, 19.0), s.q.z.clamp(-19.0, 19.0)), p.link.v_hat))
            .collect();
        let total = control_all(&inner, &p).iter().fold(Vec3::zeros(), |a, u| a + u.u);
        prop_assert!(total.norm() < 1e-9, "{total:?}");
    }

    #[test]
    fn h_below_c_star_keeps_constraints(fleet in prop::collection::vec(calm_vehicle(), 1..6)) {
        let p = params();
        let th = thresholds(&p.link, &p.potentials);
        let e = energy(&fleet, &p, 0.0);
        prop_assume!(e.h <= th.c_star);
        for (i, a) in fleet.iter().enumerate() {
            let speed = a.qdot.norm();
            prop_assert!(speed >= p.link.v_lower && speed <= p.link.v_upper);
            prop_assert!(p.link.min_wall_distance(&a.q) >= p.link.d_b_min);
            for b in &fleet[i + 1..] {
                prop_assert!((a.q - b.q).norm() >= p.link.d_min);
            }
        }
    }

    #[test]
    fn sigma_norm_is_symmetric_and_increasing(x in -50.0..50.0f64, y in -50.0..50.0f64, s in 1.0..3.0f64) {
        let z = Vec3::new(x, y, 1.0);
        prop_assert_eq!(sigma_norm(&z, 0.9), sigma_norm(&-z, 0.9));
        prop_assert!(sigma_norm(&(z * s), 0.9) >= sigma_norm(&z, 0.9));
    }

    #[test]
    fn entry_count_is_monotone(
        kappa in 0.01..5.0f64, gamma in 0.0..3.0f64, c in 0.5..20.0f64,
        lambda in 0.0..10.0f64, period in 1.0..40.0f64, bump in 0.0..2.0f64,
    ) {
        let base = capacity(max_entry_count(kappa, gamma, c, lambda, period));
        prop_assert!(capacity(max_entry_count(kappa + bump, gamma, c, lambda, period)) <= base);
        prop_assert!(capacity(max_entry_count(kappa, gamma + bump, c, lambda, period)) <= base);
        prop_assert!(capacity(max_entry_count(kappa, gamma, c + bump, lambda, period)) >= base);
        prop_assert!(capacity(max_entry_count(kappa, gamma, c, lambda + bump, period)) <= base);
        prop_assert!(capacity(max_entry_count(kappa, gamma, c, lambda, period + bump)) >= base);
    }

    #[test]
    fn entry_period_is_monotone(lambda in 0.1..10.0f64, h0 in 1.0..20.0f64, frac in 0.0..0.9f64, bump in 0.0..0.09f64) {
        let p = min_entry_period(lambda, h0, frac * h0).unwrap();
        prop_assert!(p >= lambda);
        prop_assert!(min_entry_period(lambda, h0, (frac + bump) * h0).unwrap() >= p);
        prop_assert!(min_entry_period(lambda * 1.5, h0, frac * h0).unwrap() >= p);
    }
}
