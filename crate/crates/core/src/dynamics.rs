//! Floating-base equation of motion
//!
//! ```text
//! [H_b   H_bm] [a_b ]   [c_b]   [F_b]   [J_b^T]
//! [H_bm^T H_m] [phi''] + [c_m] = [tau] + [J_m^T] F_e
//! ```
//!
//! Generalized velocity is `[v_b; w_b; phi']`: the base COM velocity and base
//! angular velocity, both in world coordinates, followed by the joint rates.
//! Gravity is folded into `c_b`/`c_m`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::kinematics::{limb_frames, JointVector};
use crate::spatial::{skew, Pose, RobotModel, Twist, Wrench, JOINTS_PER_LIMB};

/// Relative residual accepted from the mass-matrix solve.
const SOLVE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub base_pose: Pose,
    pub base_twist: Twist,
    pub joints: JointVector,
    pub joint_rates: DVector<f64>,
}

impl SystemState {
    pub fn at_rest(base_pose: Pose, joints: JointVector) -> Self {
        let n = joints.len();
        Self {
            base_pose,
            base_twist: Twist::zero(),
            joints,
            joint_rates: DVector::zeros(n),
        }
    }

    /// Generalized velocity `[v_b; w_b; phi']`.
    pub fn velocity(&self) -> DVector<f64> {
        let n = self.joint_rates.len();
        let mut v = DVector::zeros(6 + n);
        v.fixed_rows_mut::<6>(0).copy_from(&self.base_twist.to_vector());
        v.rows_mut(6, n).copy_from(&self.joint_rates);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.base_pose.is_finite()
            && self.base_twist.is_finite()
            && self.joints.is_finite()
            && self.joint_rates.iter().all(|v| v.is_finite())
    }
}

/// Blocks of the equation of motion at one state.
#[derive(Clone, Debug)]
pub struct EomTerms {
    pub h_b: Matrix6<f64>,
    pub h_bm: DMatrix<f64>,
    pub h_m: DMatrix<f64>,
    pub c_b: Vector6<f64>,
    pub c_m: DVector<f64>,
}

impl EomTerms {
    pub fn dof(&self) -> usize {
        6 + self.c_m.len()
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let n = self.c_m.len();
        let mut h = DMatrix::zeros(6 + n, 6 + n);
        h.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.h_b);
        h.view_mut((0, 6), (6, n)).copy_from(&self.h_bm);
        h.view_mut((6, 0), (n, 6)).copy_from(&self.h_bm.transpose());
        h.view_mut((6, 6), (n, n)).copy_from(&self.h_m);
        h
    }

    pub fn bias(&self) -> DVector<f64> {
        let n = self.c_m.len();
        let mut c = DVector::zeros(6 + n);
        c.fixed_rows_mut::<6>(0).copy_from(&self.c_b);
        c.rows_mut(6, n).copy_from(&self.c_m);
        c
    }
}

/// Actuation side of the equation: external base wrench `F_b` (at the base
/// COM, world frame) and joint torques.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedForce {
    pub base: Wrench,
    pub joint: DVector<f64>,
}

impl GeneralizedForce {
    pub fn zero(n: usize) -> Self {
        Self {
            base: Wrench::zero(),
            joint: DVector::zeros(n),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.joint.len();
        let mut v = DVector::zeros(6 + n);
        v.fixed_rows_mut::<6>(0).copy_from(&self.base.to_vector());
        v.rows_mut(6, n).copy_from(&self.joint);
        v
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("mass matrix solve failed (relative residual {residual:.3e})")]
    SolveFailure { residual: f64 },
}

/// Kinematic quantities of one rigid body, all in world coordinates.
#[derive(Clone, Debug)]
pub struct BodyState {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia_world: Matrix3<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    /// COM acceleration when the generalized acceleration is zero.
    pub linear_bias: Vector3<f64>,
    pub angular_bias: Vector3<f64>,
    /// Maps the generalized velocity to `[v_com; w]` (6 x (6+n)).
    pub jacobian: DMatrix<f64>,
}

/// Base followed by the links of every limb in limb-major order.
pub fn body_states(model: &RobotModel, state: &SystemState) -> Vec<BodyState> {
    let n = model.joints_total;
    let dof = 6 + n;
    let base = &state.base_pose;
    let rb = base.rotation();
    let vb = state.base_twist.linear;
    let wb = state.base_twist.angular;

    let mut bodies = Vec::with_capacity(1 + JOINTS_PER_LIMB * model.limb_count());
    let mut jac = DMatrix::zeros(6, dof);
    jac.fixed_view_mut::<6, 6>(0, 0).fill_with_identity();
    bodies.push(BodyState {
        mass: model.base_mass,
        com: base.position,
        inertia_world: rb * model.base_inertia_matrix() * rb.transpose(),
        linear_velocity: vb,
        angular_velocity: wb,
        linear_bias: Vector3::zeros(),
        angular_bias: Vector3::zeros(),
        jacobian: jac,
    });

    for (i, limb) in model.limbs.iter().enumerate() {
        let frames = limb_frames(limb, base, state.joints.limb(i));
        let rates = &state.joint_rates;

        let mut ref_point = base.position;
        let mut ref_vel = vb;
        let mut ref_acc = Vector3::zeros();
        let mut omega = wb;
        let mut alpha = Vector3::zeros();

        for j in 0..JOINTS_PER_LIMB {
            let col = JOINTS_PER_LIMB * i + j;
            let origin = frames.joint_origins[j];
            let axis = frames.joint_axes[j];
            let rate = rates[col];

            // joint origin as a point of the parent body
            let lever = origin - ref_point;
            let origin_vel = ref_vel + omega.cross(&lever);
            let origin_acc = ref_acc + alpha.cross(&lever) + omega.cross(&omega.cross(&lever));

            let child_omega = omega + axis * rate;
            let child_alpha = alpha + omega.cross(&(axis * rate));

            let com = frames.link_coms[j];
            let r = com - origin;
            let com_vel = origin_vel + child_omega.cross(&r);
            let com_acc =
                origin_acc + child_alpha.cross(&r) + child_omega.cross(&child_omega.cross(&r));

            let mut jac = DMatrix::zeros(6, dof);
            jac.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
            jac.fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&(-skew(&(com - base.position))));
            jac.fixed_view_mut::<3, 3>(3, 3).fill_with_identity();
            for k in 0..=j {
                let c = 6 + JOINTS_PER_LIMB * i + k;
                let lin = frames.joint_axes[k].cross(&(com - frames.joint_origins[k]));
                jac.fixed_view_mut::<3, 1>(0, c).copy_from(&lin);
                jac.fixed_view_mut::<3, 1>(3, c).copy_from(&frames.joint_axes[k]);
            }

            let rot = frames.link_rotations[j];
            bodies.push(BodyState {
                mass: limb.link_masses[j],
                com,
                inertia_world: rot * limb.link_inertia(j) * rot.transpose(),
                linear_velocity: com_vel,
                angular_velocity: child_omega,
                linear_bias: com_acc,
                angular_bias: child_alpha,
                jacobian: jac,
            });

            ref_point = origin;
            ref_vel = origin_vel;
            ref_acc = origin_acc;
            omega = child_omega;
            alpha = child_alpha;
        }
    }
    bodies
}

pub fn assemble_eom(model: &RobotModel, state: &SystemState, gravity: &Vector3<f64>) -> EomTerms {
    let n = model.joints_total;
    let dof = 6 + n;
    let mut h = DMatrix::<f64>::zeros(dof, dof);
    let mut c = DVector::<f64>::zeros(dof);

    for body in body_states(model, state) {
        let mut spatial_inertia = Matrix6::zeros();
        spatial_inertia
            .fixed_view_mut::<3, 3>(0, 0)
            .fill_diagonal(body.mass);
        spatial_inertia
            .fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&body.inertia_world);
        let jt = body.jacobian.transpose();
        h += &jt * (spatial_inertia * &body.jacobian);

        let w = body.angular_velocity;
        let force = body.mass * (body.linear_bias - gravity);
        let moment = body.inertia_world * body.angular_bias + w.cross(&(body.inertia_world * w));
        let mut wrench = DVector::zeros(6);
        wrench.fixed_rows_mut::<3>(0).copy_from(&force);
        wrench.fixed_rows_mut::<3>(3).copy_from(&moment);
        c += jt * wrench;
    }

    // remove round-off asymmetry
    let h = (&h + h.transpose()) * 0.5;
    EomTerms {
        h_b: h.fixed_view::<6, 6>(0, 0).into_owned(),
        h_bm: h.view((0, 6), (6, n)).into_owned(),
        h_m: h.view((6, 6), (n, n)).into_owned(),
        c_b: c.fixed_rows::<6>(0).into_owned(),
        c_m: c.rows(6, n).into_owned(),
    }
}

/// Generalized force `[J_b^T; J_m^T] F_e` of stacked foot wrenches.
pub fn contact_generalized_force(
    jb: &DMatrix<f64>,
    jm: &DMatrix<f64>,
    foot_wrenches: &[Wrench],
) -> DVector<f64> {
    let mut fe = DVector::zeros(6 * foot_wrenches.len());
    for (i, w) in foot_wrenches.iter().enumerate() {
        fe.fixed_rows_mut::<6>(6 * i).copy_from(&w.to_vector());
    }
    let n = jm.ncols();
    let mut out = DVector::zeros(6 + n);
    out.rows_mut(0, 6).copy_from(&(jb.transpose() * &fe));
    out.rows_mut(6, n).copy_from(&(jm.transpose() * &fe));
    out
}

/// Solves the equation of motion for `[a_b; phi'']`.
pub fn forward_dynamics(
    terms: &EomTerms,
    applied: &GeneralizedForce,
    jb: &DMatrix<f64>,
    jm: &DMatrix<f64>,
    foot_wrenches: &[Wrench],
) -> Result<DVector<f64>, DynamicsError> {
    let rhs = applied.to_vector() + contact_generalized_force(jb, jm, foot_wrenches);
    let h = terms.mass_matrix();
    let target = &rhs - terms.bias();
    let Some(chol) = h.clone().cholesky() else {
        return Err(DynamicsError::SolveFailure {
            residual: f64::INFINITY,
        });
    };
    let acc = chol.solve(&target);
    let residual = (&h * &acc - &target).norm() / rhs.norm().max(terms.bias().norm()).max(1.0);
    if !(residual < SOLVE_TOLERANCE) {
        return Err(DynamicsError::SolveFailure { residual });
    }
    Ok(acc)
}

/// Semi-implicit Euler: velocities first, then positions with the updated
/// velocities. Orientation advances by the exponential map of `w dt`.
pub fn integrate_step(state: &SystemState, accelerations: &DVector<f64>, dt: f64) -> SystemState {
    debug_assert!(dt > 0.0);
    let n = state.joint_rates.len();
    let linear = state.base_twist.linear + accelerations.fixed_rows::<3>(0) * dt;
    let angular = state.base_twist.angular + accelerations.fixed_rows::<3>(3) * dt;
    let joint_rates = &state.joint_rates + accelerations.rows(6, n) * dt;

    let orientation = UnitQuaternion::from_scaled_axis(angular * dt) * state.base_pose.orientation;
    SystemState {
        base_pose: Pose::new(state.base_pose.position + linear * dt, orientation),
        base_twist: Twist::new(linear, angular),
        joints: JointVector(&state.joints.0 + &joint_rates * dt),
        joint_rates,
    }
}

pub fn center_of_mass(bodies: &[BodyState]) -> Vector3<f64> {
    let mass: f64 = bodies.iter().map(|b| b.mass).sum();
    bodies.iter().map(|b| b.com * b.mass).sum::<Vector3<f64>>() / mass
}

/// Linear momentum and angular momentum about the world origin.
pub fn momentum(bodies: &[BodyState]) -> (Vector3<f64>, Vector3<f64>) {
    let mut linear = Vector3::zeros();
    let mut angular = Vector3::zeros();
    for b in bodies {
        let p = b.linear_velocity * b.mass;
        linear += p;
        angular += b.com.cross(&p) + b.inertia_world * b.angular_velocity;
    }
    (linear, angular)
}

pub fn kinetic_energy(bodies: &[BodyState]) -> f64 {
    bodies
        .iter()
        .map(|b| {
            0.5 * b.mass * b.linear_velocity.norm_squared()
                + 0.5 * b.angular_velocity.dot(&(b.inertia_world * b.angular_velocity))
        })
        .sum()
}

pub fn potential_energy(bodies: &[BodyState], gravity: &Vector3<f64>) -> f64 {
    bodies.iter().map(|b| -b.mass * gravity.dot(&b.com)).sum()
}

/// COM acceleration of the whole robot for a generalized acceleration.
pub fn com_acceleration(bodies: &[BodyState], accelerations: &DVector<f64>) -> Vector3<f64> {
    let mass: f64 = bodies.iter().map(|b| b.mass).sum();
    bodies
        .iter()
        .map(|b| (b.jacobian.rows(0, 3) * accelerations + b.linear_bias) * b.mass)
        .sum::<Vector3<f64>>()
        / mass
}
