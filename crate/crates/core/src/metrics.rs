//! Evaluation quantities over a simulation log: tumble stability margin,
//! gravito-inertial acceleration margin, cost of transport and per-sample
//! peak loads.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DVector, Vector2, Vector3};
use thiserror::Error;

use crate::contact::ContactMode;
use crate::spatial::{Pose, Twist, Wrench};

/// Largest GIA scale reported; unloaded robots sit at this cap.
pub const GIAM_CAP: f64 = 100.0;

/// Base travel below which the cost of transport is undefined [m].
pub const DISTANCE_EPSILON: f64 = 1e-6;

/// Net force below which the tumble margin is undefined [N]. Far below the
/// weight of any robot in micro-gravity, far above round-off.
pub const LOAD_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LogSample {
    pub t: f64,
    /// Contact wrench on the robot at each foot.
    pub foot_wrenches: Vec<Wrench>,
    pub torque: Vec<f64>,
    pub base_pose: Pose,
    pub base_twist: Twist,
    pub contact_modes: Vec<ContactMode>,
    /// Unsigned joint power `sum |tau_j qd_j|` [W].
    pub power: f64,
    pub tsm: Option<f64>,
    pub giam: Option<GiaMargin>,
    /// Limbs whose grasp broke during this step.
    pub detach_events: Vec<usize>,
    pub control_fault: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimulationLog {
    pub dt: f64,
    pub samples: Vec<LogSample>,
}

impl SimulationLog {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: LogSample) {
        if let Some(last) = self.samples.last() {
            debug_assert!(sample.t > last.t);
        }
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn detach_events(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.samples
            .iter()
            .flat_map(|s| s.detach_events.iter().map(move |limb| (s.t, *limb)))
    }

    pub fn fault_count(&self) -> usize {
        self.samples.iter().filter(|s| s.control_fault.is_some()).count()
    }

    /// Samples with `start <= t < end`.
    pub fn window(&self, start: f64, end: f64) -> impl Iterator<Item = &LogSample> + '_ {
        self.samples.iter().filter(move |s| s.t >= start && s.t < end)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("base travelled {distance:.3e} m, too little for a cost of transport")]
    ZeroDistance { distance: f64 },
    #[error("non-positive gravity magnitude {0}")]
    NonPositiveGravity(f64),
    #[error("empty log")]
    EmptyLog,
}

fn plane_basis(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let seed = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = (seed - normal * normal.dot(&seed)).normalize();
    (u, normal.cross(&u))
}

/// Indices of the convex hull of `points`, counter-clockwise. Collinear
/// points on edges are dropped.
fn convex_hull(points: &[Vector2<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
    });
    idx.dedup_by(|a, b| (points[*a] - points[*b]).norm() < 1e-12);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| {
        let (o, a, b) = (points[o], points[a], points[b]);
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(idx.iter())
        } else {
            Box::new(idx.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Smallest moment margin about any support-polygon edge, per unit applied
/// force [m].
///
/// For an edge from anchor `p_i` to `p_{i+1}` (counter-clockwise seen from
/// `normal`) with unit axis `a`, the load `(F, M)` at the COM `c` tips the
/// robot with moment `a . ((c - p_i) x F + M)`. Every other anchor can hold
/// down with up to `grip_force_max`, resisting with `grip_force_max` times its
/// distance from the axis. The margin is the resisting moment minus the
/// tipping moment, divided by `|F|`; zero marks the tumble boundary.
/// `None` with fewer than two distinct anchors or a force below
/// [`LOAD_EPSILON`].
pub fn tumble_stability_margin(
    anchors: &[Vector3<f64>],
    com: &Vector3<f64>,
    load: &Wrench,
    normal: &Vector3<f64>,
    grip_force_max: f64,
) -> Option<f64> {
    let force = load.force.norm();
    if anchors.len() < 2 || !(force >= LOAD_EPSILON) {
        return None;
    }
    let (u, v) = plane_basis(normal);
    let planar: Vec<Vector2<f64>> = anchors.iter().map(|p| Vector2::new(p.dot(&u), p.dot(&v))).collect();
    let hull = convex_hull(&planar);
    if hull.len() < 2 {
        return None;
    }
    let mut margin = f64::INFINITY;
    for k in 0..hull.len() {
        let p = anchors[hull[k]];
        let q = anchors[hull[(k + 1) % hull.len()]];
        let edge = q - p;
        let axis = (edge - normal * normal.dot(&edge)).normalize();
        let tipping = axis.dot(&((com - p).cross(&load.force) + load.moment));
        let holding: f64 = anchors
            .iter()
            .map(|r| axis.dot(&(r - p).cross(normal)).max(0.0))
            .sum::<f64>()
            * grip_force_max;
        margin = margin.min((holding - tipping) / force);
    }
    Some(margin)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GiaStatus {
    Feasible,
    /// No load to scale, or the scale exceeds [`GIAM_CAP`].
    Capped,
    /// The present load already exceeds the grip limits.
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GiaMargin {
    pub value: f64,
    pub status: GiaStatus,
}

/// Smallest achievable largest foot-force norm, `min max_j |f_j|`, over foot
/// forces holding `load` at `com`: `sum f_j = -F`, `sum (p_j - c) x f_j = -M`.
/// `None` when no foot forces can balance the load.
pub fn min_peak_foot_force(anchors: &[Vector3<f64>], com: &Vector3<f64>, load: &Wrench) -> Option<f64> {
    let k = anchors.len();
    let n = 3 * k + 1;
    let t = 3 * k;
    // equality rows, then one second-order cone [t; f_j] per foot
    let mut rows: Vec<Vec<f64>> = vec![vec![0.0; n]; 6 + 4 * k];
    for (j, p) in anchors.iter().enumerate() {
        let r = p - com;
        for axis in 0..3 {
            rows[axis][3 * j + axis] = 1.0;
        }
        // (r x f) = skew(r) f
        let skew = [[0.0, -r.z, r.y], [r.z, 0.0, -r.x], [-r.y, r.x, 0.0]];
        for (row, values) in skew.iter().enumerate() {
            for (col, value) in values.iter().enumerate() {
                rows[3 + row][3 * j + col] = *value;
            }
        }
        let base = 6 + 4 * j;
        rows[base][t] = -1.0;
        for axis in 0..3 {
            rows[base + 1 + axis][3 * j + axis] = -1.0;
        }
    }
    let mut b = vec![0.0; 6 + 4 * k];
    b[..3].copy_from_slice((-load.force).as_slice());
    b[3..6].copy_from_slice((-load.moment).as_slice());

    let scale = load.force.norm().max(load.moment.norm()).max(1e-300);
    for value in b.iter_mut() {
        *value /= scale;
    }

    let mut q = vec![0.0; n];
    q[t] = 1.0;
    let p_mat = CscMatrix::<f64>::zeros((n, n));
    let a_mat = CscMatrix::from(rows.iter());
    let mut cones = vec![SupportedConeT::ZeroConeT(6)];
    cones.extend(std::iter::repeat_n(SupportedConeT::SecondOrderConeT(4), k));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .build()
        .ok()?;
    let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Some(solver.solution.x[t].max(0.0) * scale),
        _ => None,
    }
}

/// Largest `s >= 0` such that `(1 + s)` times the gravito-inertial load is
/// still held with every foot force within `grip_force_max`.
///
/// Scaling the load scales the optimal foot forces, so the feasibility
/// boundary of the one-dimensional search over `s` sits exactly at
/// `grip_force_max / min_peak_foot_force - 1`.
pub fn gia_margin(anchors: &[Vector3<f64>], com: &Vector3<f64>, load: &Wrench, grip_force_max: f64) -> GiaMargin {
    let infeasible = GiaMargin {
        value: 0.0,
        status: GiaStatus::Infeasible,
    };
    let capped = GiaMargin {
        value: GIAM_CAP,
        status: GiaStatus::Capped,
    };
    if load.force.norm() == 0.0 && load.moment.norm() == 0.0 {
        return capped;
    }
    if anchors.is_empty() {
        return infeasible;
    }
    let Some(peak) = min_peak_foot_force(anchors, com, load) else {
        return infeasible;
    };
    if peak > grip_force_max {
        return infeasible;
    }
    if grip_force_max >= (1.0 + GIAM_CAP) * peak {
        return capped;
    }
    GiaMargin {
        value: grip_force_max / peak - 1.0,
        status: GiaStatus::Feasible,
    }
}

/// Mechanical energy over weight times in-plane base displacement.
pub fn cost_of_transport(
    log: &SimulationLog,
    total_mass: f64,
    gravity: f64,
    normal: &Vector3<f64>,
) -> Result<f64, MetricsError> {
    if !(gravity > 0.0) {
        return Err(MetricsError::NonPositiveGravity(gravity));
    }
    let (Some(first), Some(last)) = (log.samples.first(), log.samples.last()) else {
        return Err(MetricsError::EmptyLog);
    };
    let d = last.base_pose.position - first.base_pose.position;
    let distance = (d - normal * normal.dot(&d)).norm();
    if distance < DISTANCE_EPSILON {
        return Err(MetricsError::ZeroDistance { distance });
    }
    let energy: f64 = log.samples.iter().map(|s| s.power * log.dt).sum();
    Ok(energy / (total_mass * gravity * distance))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeakSeries {
    pub force: Vec<f64>,
    pub torque: Vec<f64>,
    pub peak_force: f64,
    pub peak_torque: f64,
}

/// Per-sample largest foot force norm and largest absolute joint torque.
pub fn rolling_maxima(log: &SimulationLog) -> Result<PeakSeries, MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let force: Vec<f64> = log
        .samples
        .iter()
        .map(|s| s.foot_wrenches.iter().map(|w| w.force.norm()).fold(0.0, f64::max))
        .collect();
    let torque: Vec<f64> = log
        .samples
        .iter()
        .map(|s| s.torque.iter().map(|t| t.abs()).fold(0.0, f64::max))
        .collect();
    Ok(PeakSeries {
        peak_force: force.iter().copied().fold(0.0, f64::max),
        peak_torque: torque.iter().copied().fold(0.0, f64::max),
        force,
        torque,
    })
}

/// Unsigned joint power.
pub fn joint_power(torque: &DVector<f64>, rates: &DVector<f64>) -> f64 {
    torque.iter().zip(rates.iter()).map(|(t, w)| (t * w).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, Rotation3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(half: f64) -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(half, half, 0.0),
            Vector3::new(-half, half, 0.0),
            Vector3::new(-half, -half, 0.0),
            Vector3::new(half, -half, 0.0),
        ]
    }

    fn weight(w: f64) -> Wrench {
        Wrench::from_force(Vector3::new(0.0, 0.0, -w))
    }

    #[test]
    fn tsm_centred_over_square_is_half_width() {
        let m = tumble_stability_margin(&square(0.1), &Vector3::new(0.0, 0.0, 0.08), &weight(19.62), &Vector3::z(), 0.0);
        assert!((m.unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn tsm_zero_on_edge() {
        let m = tumble_stability_margin(&square(0.1), &Vector3::new(0.1, 0.03, 0.05), &weight(5.0), &Vector3::z(), 0.0);
        assert!(m.unwrap().abs() < 1e-12);
    }

    #[test]
    fn tsm_undefined_cases() {
        let c = Vector3::new(0.0, 0.0, 0.05);
        assert_eq!(tumble_stability_margin(&square(0.1)[..1], &c, &weight(1.0), &Vector3::z(), 15.0), None);
        assert_eq!(tumble_stability_margin(&square(0.1), &c, &Wrench::zero(), &Vector3::z(), 15.0), None);
    }

    #[test]
    fn tsm_grip_adds_held_moment() {
        // on a wall with gravity along -x the upper feet must hold the robot on
        let c = Vector3::new(0.0, 0.0, 0.08);
        let load = Wrench::from_force(Vector3::new(-20.0, 0.0, 0.0));
        let bare = tumble_stability_margin(&square(0.1), &c, &load, &Vector3::z(), 0.0).unwrap();
        assert!((bare + 0.08).abs() < 1e-12);
        let held = tumble_stability_margin(&square(0.1), &c, &load, &Vector3::z(), 15.0).unwrap();
        // two feet 0.2 m from the lower edge, 15 N each
        assert!((held - (2.0 * 15.0 * 0.2 - 20.0 * 0.08) / 20.0).abs() < 1e-12);
    }

    #[test]
    fn tsm_ignores_interior_and_collinear_anchors_in_the_hull() {
        let mut pts = square(0.1);
        pts.push(Vector3::new(0.1, 0.0, 0.0));
        pts.push(Vector3::new(0.0, 0.02, 0.0));
        let c = Vector3::new(0.03, 0.0, 0.05);
        let m = tumble_stability_margin(&pts, &c, &weight(3.0), &Vector3::z(), 0.0).unwrap();
        assert!((m - 0.07).abs() < 1e-12);
    }

    #[test]
    fn tsm_with_two_anchors_uses_both_directions() {
        let pts = vec![Vector3::new(0.1, 0.0, 0.0), Vector3::new(-0.1, 0.0, 0.0)];
        let c = Vector3::new(0.0, 0.02, 0.05);
        let m = tumble_stability_margin(&pts, &c, &weight(1.0), &Vector3::z(), 0.0).unwrap();
        assert!((m + 0.02).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn tsm_invariant_under_force_scale_and_rotation(
            pts in prop::collection::vec(prop::array::uniform2(-0.2f64..0.2), 3..6),
            com in prop::array::uniform3(-0.1f64..0.1),
            f in prop::array::uniform3(-10.0f64..10.0),
            mo in prop::array::uniform3(-1.0f64..1.0),
            scale in 0.01f64..100.0,
            rot in prop::array::uniform3(-3.0f64..3.0),
            grip in 0.0f64..20.0,
        ) {
            let anchors: Vec<_> = pts.iter().map(|p| Vector3::new(p[0], p[1], 0.0)).collect();
            let com = Vector3::from(com);
            let load = Wrench::new(Vector3::from(f), Vector3::from(mo));
            prop_assume!(load.force.norm() > 1e-3);
            let base = tumble_stability_margin(&anchors, &com, &load, &Vector3::z(), grip);
            let scaled = Wrench::new(load.force * scale, load.moment * scale);
            let s = tumble_stability_margin(&anchors, &com, &scaled, &Vector3::z(), grip * scale);
            let r = Rotation3::from_scaled_axis(Vector3::from(rot));
            let rotated: Vec<_> = anchors.iter().map(|p| r * p).collect();
            let rl = Wrench::new(r * load.force, r * load.moment);
            let rr = tumble_stability_margin(&rotated, &(r * com), &rl, &(r * Vector3::z()), grip);
            match (base, s, rr) {
                (Some(a), Some(b), Some(c)) => {
                    prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
                    prop_assert!((a - c).abs() < 1e-9 * (1.0 + a.abs()));
                }
                (None, None, None) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }

        #[test]
        fn tsm_zero_on_polygon_boundary(edge in 0usize..4, along in 0.0f64..1.0, h in 0.01f64..0.2) {
            let sq = square(0.1);
            let (a, b) = (sq[edge], sq[(edge + 1) % 4]);
            let p = a + (b - a) * along;
            let c = Vector3::new(p.x, p.y, h);
            let m = tumble_stability_margin(&sq, &c, &weight(7.0), &Vector3::z(), 0.0).unwrap();
            prop_assert!(m.abs() < 1e-9);
        }
    }

    #[test]
    fn giam_caps_without_load() {
        let g = gia_margin(&square(0.1), &Vector3::zeros(), &Wrench::zero(), 15.0);
        assert_eq!(g, GiaMargin { value: GIAM_CAP, status: GiaStatus::Capped });
        let tiny = weight(19.62e-6);
        assert_eq!(gia_margin(&square(0.1), &Vector3::new(0.0, 0.0, 0.05), &tiny, 15.0).status, GiaStatus::Capped);
    }

    #[test]
    fn giam_zero_without_grip() {
        let g = gia_margin(&square(0.1), &Vector3::new(0.0, 0.0, 0.05), &weight(10.0), 0.0);
        assert_eq!(g, GiaMargin { value: 0.0, status: GiaStatus::Infeasible });
    }

    #[test]
    fn giam_symmetric_square() {
        // weight shared equally: 4 feet at 5 N, limit 15 N, so the load can triple
        let g = gia_margin(&square(0.1), &Vector3::new(0.0, 0.0, 0.05), &weight(20.0), 15.0);
        assert_eq!(g.status, GiaStatus::Feasible);
        assert!((g.value - 2.0).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn giam_unbalanceable_load_is_infeasible() {
        // a moment about the line through two anchors cannot be produced
        let pts = vec![Vector3::new(0.1, 0.0, 0.0), Vector3::new(-0.1, 0.0, 0.0)];
        let load = Wrench::new(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(gia_margin(&pts, &Vector3::zeros(), &load, 15.0).status, GiaStatus::Infeasible);
    }

    #[test]
    fn giam_monotone_in_grip() {
        let c = Vector3::new(0.02, -0.01, 0.06);
        let load = Wrench::new(Vector3::new(3.0, -12.0, -8.0), Vector3::new(0.1, 0.0, -0.2));
        let mut prev = -1.0;
        for grip in [0.0, 2.0, 5.0, 8.0, 12.0, 15.0, 30.0, 100.0, 1000.0] {
            let g = gia_margin(&square(0.1), &c, &load, grip).value;
            assert!(g >= prev, "{grip}");
            prev = g;
        }
    }

    /// `min max_j |f_j|` over the balancing foot forces, by coarse-to-fine
    /// grid search on the null space of the balance equations (the peak norm
    /// is convex there, so shrinking around the best node is safe).
    fn grid_min_peak(anchors: &[Vector3<f64>], com: &Vector3<f64>, load: &Wrench) -> f64 {
        let k = anchors.len();
        let mut a = DMatrix::zeros(6, 3 * k);
        for (j, p) in anchors.iter().enumerate() {
            a.view_mut((0, 3 * j), (3, 3)).fill_with_identity();
            a.view_mut((3, 3 * j), (3, 3)).copy_from(&crate::spatial::skew(&(p - com)));
        }
        let b = DVector::from_vec(vec![
            -load.force.x, -load.force.y, -load.force.z, -load.moment.x, -load.moment.y, -load.moment.z,
        ]);
        let f0 = a.transpose() * (&a * a.transpose()).try_inverse().unwrap() * &b;
        let svd = (a.transpose() * &a).symmetric_eigen();
        let null: Vec<DVector<f64>> = (0..3 * k)
            .filter(|&i| svd.eigenvalues[i].abs() < 1e-9)
            .map(|i| svd.eigenvectors.column(i).into_owned())
            .collect();
        assert_eq!(null.len(), 3 * k - 6);
        let peak = |z: &[f64]| {
            let mut f = f0.clone();
            for (zi, n) in z.iter().zip(&null) {
                f += n * *zi;
            }
            (0..k).map(|j| f.rows(3 * j, 3).norm()).fold(0.0, f64::max)
        };
        let mut centre = vec![0.0; null.len()];
        let mut half = 4.0 * f0.norm() + 1.0;
        let steps = 10i32;
        let mut best = peak(&centre);
        while half > 1e-9 {
            let h = half / steps as f64;
            let mut best_z = centre.clone();
            let dims = null.len() as u32;
            for code in 0..(2 * steps + 1).pow(dims) {
                let mut z = centre.clone();
                let mut c = code;
                for zi in z.iter_mut() {
                    *zi += ((c % (2 * steps + 1)) - steps) as f64 * h;
                    c /= 2 * steps + 1;
                }
                let v = peak(&z);
                if v < best {
                    best = v;
                    best_z = z;
                }
            }
            centre = best_z;
            half = 2.0 * h;
        }
        best
    }

    fn grid_margin(anchors: &[Vector3<f64>], com: &Vector3<f64>, load: &Wrench, grip: f64) -> f64 {
        let min_peak = grid_min_peak(anchors, com, load);
        let feasible = |s: f64| min_peak <= grip / (1.0 + s);
        if !feasible(0.0) {
            return 0.0;
        }
        let mut lo = 0.0;
        let mut step = 0.5;
        // exhaustive sweep, refined around the last feasible grid point
        while step > 2e-5 {
            let mut s = lo;
            while s + step <= GIAM_CAP && feasible(s + step) {
                s += step;
            }
            lo = s;
            step /= 10.0;
        }
        lo
    }

    #[test]
    fn giam_matches_brute_force_on_random_three_anchor_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 8 {
            let anchors: Vec<_> = (0..3)
                .map(|_| Vector3::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), 0.0))
                .collect();
            let area = (anchors[1] - anchors[0]).cross(&(anchors[2] - anchors[0])).norm();
            if area < 0.005 {
                continue;
            }
            let com = Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.03..0.1));
            let load = Wrench::new(
                Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-15.0..0.0)),
                Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
            );
            let g = gia_margin(&anchors, &com, &load, 15.0);
            if g.status == GiaStatus::Capped {
                continue;
            }
            let oracle = grid_margin(&anchors, &com, &load, 15.0);
            assert!((g.value - oracle).abs() < 1e-3, "{g:?} vs {oracle}");
            checked += 1;
        }
    }

    fn sample(t: f64, x: f64, power: f64) -> LogSample {
        LogSample {
            t,
            foot_wrenches: vec![Wrench::zero(); 4],
            torque: vec![0.0; 12],
            base_pose: Pose::from_position(Vector3::new(x, 0.0, 0.08)),
            base_twist: Twist::zero(),
            contact_modes: vec![ContactMode::Swing; 4],
            power,
            tsm: None,
            giam: None,
            detach_events: Vec::new(),
            control_fault: None,
        }
    }

    fn uniform_log(n: usize, dt: f64, distance: f64, power: f64) -> SimulationLog {
        let mut log = SimulationLog::new(dt);
        for i in 0..n {
            log.push(sample((i + 1) as f64 * dt, distance * i as f64 / (n - 1) as f64, power));
        }
        log
    }

    #[test]
    fn cot_arithmetic() {
        let log = uniform_log(10_000, 1e-3, 0.5, 1.0);
        let cot = cost_of_transport(&log, 2.0, 9.81, &Vector3::z()).unwrap();
        assert!((cot - 10.0 / (2.0 * 9.81 * 0.5)).abs() < 1e-9);
        assert!((cot - 1.019).abs() < 1e-3);
    }

    #[test]
    fn cot_needs_travel() {
        let log = uniform_log(100, 1e-3, 0.0, 1.0);
        assert!(matches!(
            cost_of_transport(&log, 2.0, 9.81, &Vector3::z()),
            Err(MetricsError::ZeroDistance { .. })
        ));
        // motion along the normal is not travel
        let mut log = uniform_log(100, 1e-3, 0.0, 1.0);
        log.samples.last_mut().unwrap().base_pose.position.z += 0.1;
        assert!(cost_of_transport(&log, 2.0, 9.81, &Vector3::z()).is_err());
    }

    #[test]
    fn cot_invariant_under_reparameterization() {
        let fast = uniform_log(1000, 1e-3, 0.2, 2.0);
        let slow = uniform_log(2000, 1e-3, 0.2, 1.0);
        let a = cost_of_transport(&fast, 2.0, 9.81, &Vector3::z()).unwrap();
        let b = cost_of_transport(&slow, 2.0, 9.81, &Vector3::z()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn cot_micro_gravity_is_large() {
        let log = uniform_log(10_000, 1e-3, 0.1, 0.05);
        assert!(cost_of_transport(&log, 3.0, 9.81e-6, &Vector3::z()).unwrap() > 1e3);
    }

    #[test]
    fn maxima_single_sample() {
        let mut s = sample(0.001, 0.0, 0.0);
        s.foot_wrenches[2] = Wrench::from_force(Vector3::new(3.0, 4.0, 0.0));
        s.torque[5] = -1.5;
        let mut log = SimulationLog::new(1e-3);
        log.push(s);
        let m = rolling_maxima(&log).unwrap();
        assert_eq!(m.force, vec![5.0]);
        assert_eq!(m.torque, vec![1.5]);
        assert_eq!((m.peak_force, m.peak_torque), (5.0, 1.5));
    }

    #[test]
    fn maxima_three_samples() {
        let mut log = SimulationLog::new(1e-3);
        let forces = [[1.0, 0.0, 2.0], [0.0, 0.0, 0.0], [0.5, 7.0, 0.1]];
        let torques = [[0.1, -0.4], [2.0, 0.0], [-0.3, 0.2]];
        for i in 0..3 {
            let mut s = sample((i + 1) as f64 * 1e-3, 0.0, 0.0);
            for (j, f) in forces[i].iter().enumerate() {
                s.foot_wrenches[j] = Wrench::from_force(Vector3::new(0.0, *f, 0.0));
            }
            s.torque = torques[i].to_vec();
            log.push(s);
        }
        let m = rolling_maxima(&log).unwrap();
        assert_eq!(m.force, vec![2.0, 0.0, 7.0]);
        assert_eq!(m.torque, vec![0.4, 2.0, 0.3]);
        assert_eq!((m.peak_force, m.peak_torque), (7.0, 2.0));
    }

    #[test]
    fn maxima_of_zero_log_are_zero() {
        let log = uniform_log(5, 1e-3, 0.0, 0.0);
        let m = rolling_maxima(&log).unwrap();
        assert!(m.force.iter().chain(&m.torque).all(|v| *v == 0.0));
        assert!(rolling_maxima(&SimulationLog::new(1e-3)).is_err());
    }

    #[test]
    fn joint_power_is_unsigned() {
        let t = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let w = DVector::from_vec(vec![0.5, 0.5, -4.0]);
        assert_eq!(joint_power(&t, &w), 0.5 + 1.0 + 2.0);
    }

    #[test]
    fn hull_is_counter_clockwise() {
        let pts: Vec<_> = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]
            .iter()
            .map(|(x, y)| Vector2::new(*x, *y))
            .collect();
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        let area: f64 = (0..h.len())
            .map(|i| {
                let (a, b) = (pts[h[i]], pts[h[(i + 1) % h.len()]]);
                a.x * b.y - a.y * b.x
            })
            .sum();
        assert!(area > 0.0);
    }
}
