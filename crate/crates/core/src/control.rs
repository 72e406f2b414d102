//! Damped gradient control law.
//!
//! Each vehicle follows `u_i = −∇_{q_i}(V_p + V_b) − K_i (q̇_i − v̂)`, so along
//! continuous-time trajectories `Ḣ = −Σ K_i ‖q̇_i − v̂‖²`.

use crate::dynamics::{FlatInput, FlatState};
use crate::geometry::{wall_distance, LinkSpec};
use crate::potential::{sigma_grad, sigma_norm, PotentialConfig};
use crate::Vec3;

/// Velocity damping gains K_i, 1/s.
#[derive(Clone, Debug, PartialEq)]
pub enum Damping {
    Uniform(f64),
    PerVehicle(Vec<f64>),
}

impl Damping {
    /// Gain for vehicle `i`; vehicles past the end of a per-vehicle list
    /// reuse the last entry.
    pub fn gain(&self, i: usize) -> f64 {
        match self {
            Damping::Uniform(k) => *k,
            Damping::PerVehicle(ks) => ks.get(i).or(ks.last()).copied().unwrap_or(0.0),
        }
    }

    pub fn uniform(&self) -> Option<f64> {
        match self {
            Damping::Uniform(k) => Some(*k),
            Damping::PerVehicle(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProtocolParams {
    pub link: LinkSpec,
    pub potentials: PotentialConfig,
    pub damping: Damping,
}

impl ProtocolParams {
    pub fn new(link: LinkSpec, potentials: PotentialConfig, damping: f64) -> Self {
        Self {
            link,
            potentials,
            damping: Damping::Uniform(damping),
        }
    }
}

/// Force of the pair term on vehicle `i` from vehicle `j`, i.e.
/// `−φ(‖q_ij‖_σ) ∇‖q_ij‖_σ`. The force on `j` is its negation.
#[inline]
pub fn pair_force(qi: &Vec3, qj: &Vec3, potentials: &PotentialConfig) -> Vec3 {
    let eps = potentials.epsilon();
    let qij = qi - qj;
    let phi = potentials.phi(sigma_norm(&qij, eps));
    if phi == 0.0 {
        return Vec3::zeros();
    }
    -phi * sigma_grad(&qij, eps)
}

/// Boundary force `Σ_n φ_b(d_in) n_n` on a vehicle at `q`; points away from
/// walls closer than d̂_b.
#[inline]
pub fn boundary_force(q: &Vec3, link: &LinkSpec, potentials: &PotentialConfig) -> Vec3 {
    link.walls.iter().fold(Vec3::zeros(), |acc, w| {
        let phi = potentials.phi_b(wall_distance(q, w));
        acc + w.normal() * phi
    })
}

/// `∇_{q_i}(V_p + V_b)` for vehicle `i`.
pub fn potential_gradient(i: usize, states: &[FlatState], params: &ProtocolParams) -> Vec3 {
    let qi = &states[i].q;
    let mut force = boundary_force(qi, &params.link, &params.potentials);
    for (j, sj) in states.iter().enumerate() {
        if j != i {
            force += pair_force(qi, &sj.q, &params.potentials);
        }
    }
    -force
}

/// Control acceleration of vehicle `i`.
pub fn control_accel(i: usize, states: &[FlatState], params: &ProtocolParams) -> FlatInput {
    let dv = states[i].qdot - params.link.v_hat;
    let u = -potential_gradient(i, states, params) - dv * params.damping.gain(i);
    FlatInput { u }
}

/// Controls for every vehicle. Pair forces are computed once per unordered
/// pair and accumulated in index order.
pub fn control_all(states: &[FlatState], params: &ProtocolParams) -> Vec<FlatInput> {
    let forces = potential_forces(states, params);
    forces
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let dv = states[i].qdot - params.link.v_hat;
            FlatInput {
                u: f - dv * params.damping.gain(i),
            }
        })
        .collect()
}

/// `−∇_{q_i}(V_p + V_b)` for every vehicle.
pub fn potential_forces(states: &[FlatState], params: &ProtocolParams) -> Vec<Vec3> {
    let n = states.len();
    let mut forces: Vec<Vec3> = states
        .iter()
        .map(|s| boundary_force(&s.q, &params.link, &params.potentials))
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let f = pair_force(&states[i].q, &states[j].q, &params.potentials);
            forces[i] += f;
            forces[j] -= f;
        }
    }
    forces
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tests::reference_link;

    fn params(k: f64) -> ProtocolParams {
        ProtocolParams::new(reference_link(), PotentialConfig::log_cosh(10.0, 20.0, 0.9), k)
    }

    fn at(q: [f64; 3], qdot: [f64; 3]) -> FlatState {
        FlatState::new(Vec3::from(q), Vec3::from(qdot))
    }

    #[test]
    fn equilibrium_is_force_free() {
        let p = params(0.1);
        let s = [at([0.0, 0.0, 0.0], [10.0, 0.0, 0.0])];
        assert_eq!(control_accel(0, &s, &p).u, Vec3::zeros());
        assert_eq!(control_all(&s, &p), vec![FlatInput::zero()]);
    }

    #[test]
    fn damping_only() {
        let p = params(0.1);
        let s = [at([0.0, 0.0, 0.0], [11.0, 0.0, 0.0])];
        let u = control_accel(0, &s, &p).u;
        assert!((u - Vec3::new(-0.1, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn symmetric_pair() {
        let p = params(0.1);
        let s = [at([0.0, 0.0, 0.0], [10.0, 0.0, 0.0]), at([8.0, 0.0, 0.0], [10.0, 0.0, 0.0])];
        let u = control_all(&s, &p);
        // σ(8) = (√58.6 − 1)/0.9, φ = tanh(σ − 10), grad factor 8/√58.6
        let sig = (58.6f64.sqrt() - 1.0) / 0.9;
        let expect = (sig - 10.0).tanh() * 8.0 / 58.6f64.sqrt();
        assert!((u[0].u.x - expect).abs() < 1e-12);
        assert!((u[0].u.x + 1.0337).abs() < 1e-4, "{}", u[0].u.x);
        assert_eq!(u[0].u.y, 0.0);
        assert_eq!(u[1].u, -u[0].u);
        assert_eq!(control_accel(0, &s, &p).u, u[0].u);
    }

    #[test]
    fn wall_push_points_inward() {
        let p = params(0.1);
        let s = [at([0.0, 30.0, 0.0], [10.0, 0.0, 0.0])];
        let u = control_accel(0, &s, &p).u;
        assert!((u.y - (-10.0f64).tanh()).abs() < 1e-15);
        assert!((u.y + 1.0).abs() < 1e-8);
        assert_eq!((u.x, u.z), (0.0, 0.0));
    }

    #[test]
    fn permutation_equivariance() {
        let p = params(0.3);
        let s = vec![
            at([0.0, 0.0, 0.0], [10.0, 1.0, 0.0]),
            at([5.0, 3.0, 0.0], [9.0, 0.0, 0.0]),
            at([2.0, -4.0, 1.0], [10.0, 0.0, -1.0]),
        ];
        let u = control_all(&s, &p);
        let perm = [2, 0, 1];
        let sp: Vec<_> = perm.iter().map(|&k| s[k]).collect();
        let up = control_all(&sp, &p);
        for (slot, &k) in perm.iter().enumerate() {
            assert!((up[slot].u - u[k].u).norm() < 1e-14);
        }
    }

    #[test]
    fn per_vehicle_damping() {
        let d = Damping::PerVehicle(vec![0.1, 0.2]);
        assert_eq!(d.gain(0), 0.1);
        assert_eq!(d.gain(5), 0.2);
        assert_eq!(d.uniform(), None);
    }
}
