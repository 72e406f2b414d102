//! Links as convex polyhedra.
//!
//! A link Ω is the intersection of wall half-spaces `⟨n, x⟩ ≤ b` (the
//! corridor sides) and gate half-spaces (entrance/exit faces). Normals are
//! stored unit-length so that `b − ⟨n, q⟩` is a true Euclidean distance,
//! positive strictly inside.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Vector4};

use crate::{Error, Result, Vec3};

/// Tolerance for the wall-parallel velocity check.
pub const PARALLEL_TOL: f64 = 1e-9;
/// Feasibility tolerance for the core-region search, meters.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Closed half-space `⟨normal, x⟩ ≤ offset` with a unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace {
    normal: Vec3,
    offset: f64,
}

impl HalfSpace {
    /// Builds the half-space and rescales `(normal, offset)` so the normal is
    /// unit-length; the set of points it describes is unchanged.
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let norm = normal.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateNormal);
        }
        Ok(Self {
            normal: normal / norm,
            offset: offset / norm,
        })
    }

    #[inline]
    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    #[inline]
    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    pub fn contains(&self, q: &Vec3) -> bool {
        wall_distance(q, self) >= 0.0
    }
}

/// Signed distance from `q` to the plane of `wall`: positive inside the
/// half-space, zero on the plane, negative outside.
#[inline]
pub fn wall_distance(q: &Vec3, wall: &HalfSpace) -> f64 {
    wall.offset - wall.normal.dot(q)
}

/// A traffic link: geometry plus the separation and speed parameters the
/// protocol regulates to.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSpec {
    pub walls: Vec<HalfSpace>,
    pub gates: Vec<HalfSpace>,
    /// Desired velocity v̂, m/s.
    pub v_hat: Vec3,
    /// Desired inter-vehicle separation d̂, m.
    pub d_hat: f64,
    pub d_min: f64,
    /// Desired boundary clearance d̂_b, m.
    pub d_b_hat: f64,
    pub d_b_min: f64,
    pub v_upper: f64,
    pub v_lower: f64,
}

impl LinkSpec {
    /// Smallest wall distance of `q`, or `+∞` for a link without walls.
    pub fn min_wall_distance(&self, q: &Vec3) -> f64 {
        self.walls
            .iter()
            .map(|w| wall_distance(q, w))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every wall clearance of `q` is at least d̂_b.
    pub fn in_core(&self, q: &Vec3) -> bool {
        self.walls
            .iter()
            .all(|w| wall_distance(q, w) >= self.d_b_hat - FEASIBILITY_TOL)
    }

    /// True when `q` satisfies every wall and gate constraint.
    pub fn contains(&self, q: &Vec3) -> bool {
        self.walls.iter().chain(&self.gates).all(|h| h.contains(q))
    }

    /// Entrance gate: the gate whose outward normal opposes v̂.
    pub fn entrance(&self) -> Option<&HalfSpace> {
        self.gates.iter().find(|g| g.normal.dot(&self.v_hat) < 0.0)
    }

    /// Exit gate: the gate whose outward normal follows v̂.
    pub fn exit(&self) -> Option<&HalfSpace> {
        self.gates.iter().find(|g| g.normal.dot(&self.v_hat) > 0.0)
    }
}

/// One failed link or scenario invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonFinite { field: &'static str },
    SeparationOrdering { d_min: f64, d_hat: f64 },
    BoundaryOrdering { d_b_min: f64, d_b_hat: f64 },
    SpeedEnvelope { lower: f64, speed: f64, upper: f64 },
    VelocityNotParallel { wall: usize, dot: f64 },
    EmptyCore { margin: f64 },
    Scenario(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { field } => write!(f, "non-finite value in {field}"),
            Violation::SeparationOrdering { d_min, d_hat } => write!(
                f,
                "separation-ordering violated: need 0 <= d_min={d_min} < d_hat={d_hat}"
            ),
            Violation::BoundaryOrdering { d_b_min, d_b_hat } => write!(
                f,
                "boundary-ordering violated: need 0 <= d_b_min={d_b_min} < d_b_hat={d_b_hat}"
            ),
            Violation::SpeedEnvelope {
                lower,
                speed,
                upper,
            } => write!(
                f,
                "speed-envelope violated: need 0 < v_lower={lower} < |v_hat|={speed} < v_upper={upper}"
            ),
            Violation::VelocityNotParallel { wall, dot } => {
                write!(f, "velocity-not-parallel: <v_hat, n_{wall}>={dot}")
            }
            Violation::EmptyCore { margin } => {
                write!(f, "core-region-empty: best clearance margin {margin} m")
            }
            Violation::Scenario(msg) => write!(f, "{msg}"),
        }
    }
}

/// Outcome of the core-region search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoreRegion {
    pub nonempty: bool,
    /// Point with the largest minimum wall clearance.
    pub witness: Vec3,
    /// Minimum wall clearance at the witness minus d̂_b.
    pub margin: f64,
}

/// Cap on the margin variable; keeps the LP bounded for links whose core
/// is unbounded in every direction.
const MARGIN_CAP: f64 = 1e6;

/// Decides whether the core 𝒜 = {q : wall_distance(q, n) ≥ d̂_b ∀n} is
/// non-empty.
///
/// Solves `max t  s.t. ⟨n_k, q⟩ + t ≤ b_k − d̂_b` exactly by enumerating
/// vertices of the (q, t) polyhedron. Directions in the null space of the
/// wall normals are pinned to zero, so the witness is the max-margin
/// center with no component along free directions.
pub fn core_region_nonempty(link: &LinkSpec) -> CoreRegion {
    let null = wall_null_space(&link.walls);
    let rank = 3 - null.len();

    // rows: (n, 1) · (q, t) ≤ c
    let mut rows: Vec<(Vec3, f64, f64)> = link
        .walls
        .iter()
        .map(|w| (w.normal, 1.0, w.offset - link.d_b_hat))
        .collect();
    rows.push((Vec3::zeros(), 1.0, MARGIN_CAP));

    let mut best: Option<(Vec3, f64)> = None;
    let mut subset = Vec::with_capacity(rank + 1);
    for_each_subset(rows.len(), rank + 1, &mut subset, &mut |idx| {
        let mut m = Matrix4::zeros();
        let mut rhs = Vector4::zeros();
        for (r, &k) in idx.iter().enumerate() {
            let (n, tc, c) = rows[k];
            m.fixed_view_mut::<1, 3>(r, 0).copy_from(&n.transpose());
            m[(r, 3)] = tc;
            rhs[r] = c;
        }
        for (r, v) in null.iter().enumerate() {
            let row = idx.len() + r;
            m.fixed_view_mut::<1, 3>(row, 0).copy_from(&v.transpose());
        }
        let Some(sol) = m.lu().solve(&rhs) else {
            return;
        };
        if !sol.iter().all(|x| x.is_finite()) {
            return;
        }
        let q = Vec3::new(sol[0], sol[1], sol[2]);
        let t = sol[3];
        let feasible = rows
            .iter()
            .all(|(n, tc, c)| n.dot(&q) + tc * t <= c + FEASIBILITY_TOL);
        if feasible && best.is_none_or(|(_, bt)| t > bt + FEASIBILITY_TOL) {
            best = Some((q, t));
        }
    });

    match best {
        Some((witness, t)) => {
            let margin = link.min_wall_distance(&witness).min(MARGIN_CAP) - link.d_b_hat;
            CoreRegion {
                nonempty: t >= -FEASIBILITY_TOL,
                witness,
                margin,
            }
        }
        None => CoreRegion {
            nonempty: false,
            witness: Vec3::zeros(),
            margin: f64::NEG_INFINITY,
        },
    }
}

/// Orthonormal basis of the directions no wall constrains.
fn wall_null_space(walls: &[HalfSpace]) -> Vec<Vec3> {
    let gram: Matrix3<f64> = walls
        .iter()
        .fold(Matrix3::zeros(), |acc, w| acc + w.normal * w.normal.transpose());
    let eig = gram.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut null: Vec<(usize, Vec3)> = (0..3)
        .filter(|&k| eig.eigenvalues[k] <= 1e-10 * scale)
        .map(|k| (k, eig.eigenvectors.column(k).into_owned()))
        .collect();
    null.sort_by_key(|(k, _)| *k);
    null.into_iter().map(|(_, v)| v).collect()
}

fn for_each_subset(n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    let start = cur.last().map_or(0, |&l| l + 1);
    for i in start..n {
        if n - i < k - cur.len() {
            break;
        }
        cur.push(i);
        for_each_subset(n, k, cur, f);
        cur.pop();
    }
}

/// Checks every [`LinkSpec`] invariant; an empty list means the link is
/// well-formed.
pub fn validate_link(link: &LinkSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let scalars = [
        ("d_hat", link.d_hat),
        ("d_min", link.d_min),
        ("d_b_hat", link.d_b_hat),
        ("d_b_min", link.d_b_min),
        ("v_upper", link.v_upper),
        ("v_lower", link.v_lower),
    ];
    for (field, v) in scalars {
        if !v.is_finite() {
            out.push(Violation::NonFinite { field });
        }
    }
    if !link.v_hat.iter().all(|x| x.is_finite()) {
        out.push(Violation::NonFinite { field: "v_hat" });
    }
    if !out.is_empty() {
        return out;
    }

    if !(0.0 <= link.d_min && link.d_min < link.d_hat) {
        out.push(Violation::SeparationOrdering {
            d_min: link.d_min,
            d_hat: link.d_hat,
        });
    }
    if !(0.0 <= link.d_b_min && link.d_b_min < link.d_b_hat) {
        out.push(Violation::BoundaryOrdering {
            d_b_min: link.d_b_min,
            d_b_hat: link.d_b_hat,
        });
    }
    let speed = link.v_hat.norm();
    if !(0.0 < link.v_lower && link.v_lower < speed && speed < link.v_upper) {
        out.push(Violation::SpeedEnvelope {
            lower: link.v_lower,
            speed,
            upper: link.v_upper,
        });
    }
    for (k, wall) in link.walls.iter().enumerate() {
        let dot = link.v_hat.dot(&wall.normal);
        if dot.abs() > PARALLEL_TOL {
            out.push(Violation::VelocityNotParallel { wall: k, dot });
        }
    }
    let core = core_region_nonempty(link);
    if !core.nonempty {
        out.push(Violation::EmptyCore {
            margin: core.margin,
        });
    }
    out
}

/// True when `q` lies in the core of both links, the region where a vehicle
/// may switch from the upstream protocol to the downstream one.
pub fn in_transition_region(q: &Vec3, upstream: &LinkSpec, downstream: &LinkSpec) -> bool {
    upstream.in_core(q) && downstream.in_core(q)
}

/// Core of the intersection 𝒜₁ ∩ 𝒜₂, found by merging both wall sets with
/// each link's clearance folded into the offsets.
pub fn transition_core(upstream: &LinkSpec, downstream: &LinkSpec) -> CoreRegion {
    let shift = |link: &LinkSpec| {
        link.walls
            .iter()
            .map(|w| HalfSpace {
                normal: w.normal,
                offset: w.offset - link.d_b_hat,
            })
            .collect::<Vec<_>>()
    };
    let mut walls = shift(upstream);
    walls.extend(shift(downstream));
    let merged = LinkSpec {
        walls,
        gates: Vec::new(),
        d_b_hat: 0.0,
        ..downstream.clone()
    };
    core_region_nonempty(&merged)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn hs(n: [f64; 3], b: f64) -> HalfSpace {
        HalfSpace::new(Vec3::from(n), b).unwrap()
    }

    /// Reference box with the wall offsets read as y, z ∈ [−40, 40].
    pub(crate) fn reference_link() -> LinkSpec {
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

    #[test]
    fn wall_distance_examples() {
        let wall = hs([0.0, 1.0, 0.0], 40.0);
        assert_eq!(wall_distance(&Vec3::zeros(), &wall), 40.0);
        assert_eq!(wall_distance(&Vec3::new(0.0, 40.0, 0.0), &wall), 0.0);
        assert_eq!(wall_distance(&Vec3::new(0.0, 45.0, 0.0), &wall), -5.0);
    }

    #[test]
    fn halfspace_normalizes() {
        let h = HalfSpace::new(Vec3::new(0.0, 3.0, 4.0), 10.0).unwrap();
        assert!((h.normal().norm() - 1.0).abs() < 1e-12);
        assert!((h.offset() - 2.0).abs() < 1e-12);
        assert!(matches!(
            HalfSpace::new(Vec3::zeros(), 1.0),
            Err(Error::DegenerateNormal)
        ));
    }

    #[test]
    fn reference_core_is_centered() {
        let core = core_region_nonempty(&reference_link());
        assert!(core.nonempty);
        assert!(core.witness.norm() < 1e-9, "{:?}", core.witness);
        assert!((core.margin - 20.0).abs() < 1e-9);
    }

    #[test]
    fn core_too_narrow() {
        let link = LinkSpec {
            d_b_hat: 41.0,
            ..reference_link()
        };
        assert!(!core_region_nonempty(&link).nonempty);
    }

    #[test]
    fn core_exactly_two_clearances_wide() {
        let link = LinkSpec {
            walls: vec![hs([0.0, 1.0, 0.0], 30.0), hs([0.0, -1.0, 0.0], 10.0)],
            ..reference_link()
        };
        let core = core_region_nonempty(&link);
        assert!(core.nonempty);
        assert!((core.witness - Vec3::new(0.0, 10.0, 0.0)).norm() < 1e-9);
        assert!(core.margin.abs() < 1e-9);
    }

    #[test]
    fn core_without_walls() {
        let link = LinkSpec {
            walls: vec![],
            ..reference_link()
        };
        let core = core_region_nonempty(&link);
        assert!(core.nonempty);
        assert_eq!(core.witness, Vec3::zeros());
    }

    #[test]
    fn single_wall_core() {
        let link = LinkSpec {
            walls: vec![hs([0.0, 1.0, 0.0], 40.0)],
            ..reference_link()
        };
        let core = core_region_nonempty(&link);
        assert!(core.nonempty);
        assert!(link.in_core(&core.witness));
    }

    #[test]
    fn validate_reference() {
        assert_eq!(validate_link(&reference_link()), vec![]);
    }

    #[test]
    fn validate_non_parallel_velocity() {
        let mut link = reference_link();
        link.walls.push(hs([1.0, 0.0, 0.0], 5000.0));
        let v = validate_link(&link);
        assert_eq!(v, vec![Violation::VelocityNotParallel { wall: 4, dot: 10.0 }]);
    }

    #[test]
    fn validate_separation_ordering() {
        let link = LinkSpec {
            d_min: 10.0,
            ..reference_link()
        };
        assert_eq!(
            validate_link(&link),
            vec![Violation::SeparationOrdering {
                d_min: 10.0,
                d_hat: 10.0
            }]
        );
    }

    #[test]
    fn validate_speed_envelope_and_boundary() {
        let link = LinkSpec {
            v_lower: 12.0,
            d_b_min: 20.0,
            ..reference_link()
        };
        let v = validate_link(&link);
        assert_eq!(v.len(), 2);
        assert!(matches!(v[0], Violation::BoundaryOrdering { .. }));
        assert!(matches!(v[1], Violation::SpeedEnvelope { .. }));
    }

    #[test]
    fn transition_region_examples() {
        let a = reference_link();
        assert!(in_transition_region(&Vec3::zeros(), &a, &a));
        assert!(!in_transition_region(&Vec3::new(0.0, 25.0, 0.0), &a, &a));

        let mut b = reference_link();
        b.walls = vec![
            hs([0.0, 1.0, 0.0], 140.0),
            hs([0.0, -1.0, 0.0], -60.0),
            hs([0.0, 0.0, 1.0], 40.0),
            hs([0.0, 0.0, -1.0], 40.0),
        ];
        assert!(!transition_core(&a, &b).nonempty);
        for y in [-40.0, -20.0, 0.0, 20.0, 60.0, 80.0, 100.0, 120.0] {
            assert!(!in_transition_region(&Vec3::new(0.0, y, 0.0), &a, &b));
        }
        assert!(transition_core(&a, &a).nonempty);
    }

    #[test]
    fn gates_pick_entrance_and_exit() {
        let link = reference_link();
        assert_eq!(link.entrance().unwrap().normal(), Vec3::new(-1.0, 0.0, 0.0));
        assert_eq!(link.exit().unwrap().offset(), 1000.0);
        assert!(link.contains(&Vec3::new(10.0, 0.0, 0.0)));
        assert!(!link.contains(&Vec3::new(-1.0, 0.0, 0.0)));
    }
}
