//! Admittance filters and the joint-level PD loop.
//!
//! Every mode ends in joint position control. `Baseline` tracks the gait's
//! nominal base pose. `BaseAdmittance` lets the base deviate from that pose
//! through `M d'' + D d' + K d = w`, with `w` the reaction the grippers
//! measure mapped to the base. `EndEffectorAdmittance` runs the same law on
//! each foot target instead.
//!
//! The filter holds its drive constant over a step and advances each axis by
//! the exact transition of its second-order ODE, which is stable for any
//! gains and step size.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, UnitQuaternion, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::SystemState;
use crate::gait::GaitTargets;
use crate::kinematics::{leg_inverse_kinematics, JointVector, KinematicsError};
use crate::spatial::{Pose, RobotModel, Wrench};

/// Diagonal virtual inertia, damping and stiffness, one entry per axis
/// (x, y, z, rx, ry, rz).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmittanceParams {
    pub mass: [f64; 6],
    pub damping: [f64; 6],
    pub stiffness: [f64; 6],
}

impl AdmittanceParams {
    pub fn uniform(mass: f64, damping: f64, stiffness: f64) -> Self {
        Self {
            mass: [mass; 6],
            damping: [damping; 6],
            stiffness: [stiffness; 6],
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !self.mass.iter().all(|m| *m > 0.0 && m.is_finite()) {
            return Err(ControlError::InvalidParams("admittance mass must be positive"));
        }
        let non_negative = |v: &[f64; 6]| v.iter().all(|x| *x >= 0.0 && x.is_finite());
        if !non_negative(&self.damping) || !non_negative(&self.stiffness) {
            return Err(ControlError::InvalidParams("admittance damping and stiffness must be non-negative"));
        }
        Ok(())
    }
}

/// Deviation from equilibrium: translation then rotation vector.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AdmittanceState {
    pub deviation: Vector6<f64>,
    pub rate: Vector6<f64>,
}

impl AdmittanceState {
    pub fn is_finite(&self) -> bool {
        self.deviation.iter().chain(self.rate.iter()).all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self { kp: 50.0, kd: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    Baseline,
    BaseAdmittance,
    EndEffectorAdmittance,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("invalid controller parameters: {0}")]
    InvalidParams(&'static str),
}

/// State transition of `m x'' + d x' + k x = w` over `dt` with `w` held:
/// `[x; v]' = phi [x; v] + gamma w`.
fn axis_transition(m: f64, d: f64, k: f64, dt: f64) -> (Matrix2<f64>, Vector2<f64>) {
    #[rustfmt::skip]
    let augmented = Matrix3::new(
        0.0,     1.0,     0.0,
        -k / m,  -d / m,  1.0 / m,
        0.0,     0.0,     0.0,
    ) * dt;
    let e = augmented.exp();
    (
        e.fixed_view::<2, 2>(0, 0).into_owned(),
        e.fixed_view::<2, 1>(0, 2).into_owned(),
    )
}

pub fn admittance_update(
    params: &AdmittanceParams,
    state: &AdmittanceState,
    drive: &Vector6<f64>,
    dt: f64,
) -> AdmittanceState {
    debug_assert!(dt > 0.0);
    let mut next = *state;
    for axis in 0..6 {
        let (phi, gamma) = axis_transition(params.mass[axis], params.damping[axis], params.stiffness[axis], dt);
        let x = phi * Vector2::new(state.deviation[axis], state.rate[axis]) + gamma * drive[axis];
        next.deviation[axis] = x.x;
        next.rate[axis] = x.y;
    }
    next
}

/// `J_b^T F_e`: the foot wrenches summed about the base COM.
pub fn base_internal_wrench(jb: &DMatrix<f64>, foot_wrenches: &[Wrench]) -> Vector6<f64> {
    debug_assert_eq!(jb.nrows(), 6 * foot_wrenches.len());
    let mut fe = DVector::zeros(6 * foot_wrenches.len());
    for (i, w) in foot_wrenches.iter().enumerate() {
        fe.fixed_rows_mut::<6>(6 * i).copy_from(&w.to_vector());
    }
    let out = jb.transpose() * fe;
    Vector6::from_iterator(out.iter().copied())
}

/// Drive of the base filter. The grippers measure the load the robot puts
/// on the surface, the opposite of the contact wrench on the robot; its
/// moment is expressed in the equilibrium frame like the rotational deviation.
pub fn base_drive(jb: &DMatrix<f64>, wrenches_on_robot: &[Wrench], equilibrium: &Pose) -> Vector6<f64> {
    let w = -base_internal_wrench(jb, wrenches_on_robot);
    let moment = equilibrium.orientation.inverse() * Vector3::new(w[3], w[4], w[5]);
    Vector6::new(w[0], w[1], w[2], moment.x, moment.y, moment.z)
}

pub fn desired_base_pose(equilibrium: &Pose, state: &AdmittanceState) -> Pose {
    if state.deviation == Vector6::zeros() {
        return *equilibrium;
    }
    let translation = state.deviation.fixed_rows::<3>(0).into_owned();
    let rotation = UnitQuaternion::from_scaled_axis(state.deviation.fixed_rows::<3>(3).into_owned());
    Pose::new(equilibrium.position + translation, equilibrium.orientation * rotation)
}

/// Deviation of `pose` from `equilibrium`, the inverse of [`desired_base_pose`].
pub fn pose_deviation(equilibrium: &Pose, pose: &Pose) -> Vector6<f64> {
    let d = pose.position - equilibrium.position;
    let r = (equilibrium.orientation.inverse() * pose.orientation).scaled_axis();
    Vector6::new(d.x, d.y, d.z, r.x, r.y, r.z)
}

pub fn resolve_limb_target(
    model: &RobotModel,
    desired_base: &Pose,
    limb: usize,
    foot_world: &Vector3<f64>,
) -> Result<[f64; 3], KinematicsError> {
    leg_inverse_kinematics(model, limb, &desired_base.inverse_transform_point(foot_world))
}

/// IK of every foot target (world frame) from the desired base pose.
pub fn resolve_joint_targets(
    model: &RobotModel,
    desired_base: &Pose,
    foot_targets: &[Vector3<f64>],
) -> Result<JointVector, KinematicsError> {
    let mut joints = JointVector::zeros(model.joints_total);
    for (limb, target) in foot_targets.iter().enumerate() {
        joints.set_limb(limb, resolve_limb_target(model, desired_base, limb, target)?);
    }
    Ok(joints)
}

/// `k_p (q_des - q) + k_d (qd_des - qd)`, clipped to `+-limit` per joint.
pub fn pd_joint_torque(
    gains: &PdGains,
    q_des: &DVector<f64>,
    q: &DVector<f64>,
    qd_des: &DVector<f64>,
    qd: &DVector<f64>,
    limit: f64,
) -> DVector<f64> {
    let raw = (q_des - q) * gains.kp + (qd_des - qd) * gains.kd;
    raw.map(|t| t.clamp(-limit, limit))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    pub admittance: AdmittanceParams,
    pub pd: PdGains,
    pub torque_limit: f64,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        self.admittance.validate()?;
        if !(self.pd.kp > 0.0 && self.pd.kd >= 0.0 && self.pd.kp.is_finite() && self.pd.kd.is_finite()) {
            return Err(ControlError::InvalidParams("pd gains need kp > 0 and kd >= 0"));
        }
        if !(self.torque_limit > 0.0) {
            return Err(ControlError::InvalidParams("torque_limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub base: AdmittanceState,
    pub feet: Vec<AdmittanceState>,
    /// Last joint targets that resolved; reused for limbs whose IK fails.
    pub joint_targets: JointVector,
}

impl ControllerState {
    pub fn new(initial_targets: JointVector, limbs: usize) -> Self {
        Self {
            base: AdmittanceState::default(),
            feet: vec![AdmittanceState::default(); limbs],
            joint_targets: initial_targets,
        }
    }
}

pub struct ControlInputs<'a> {
    pub targets: &'a GaitTargets,
    /// Anchor of each attached foot; attached feet hold their anchor.
    pub anchors: &'a [Option<Vector3<f64>>],
    /// Contact wrench on the robot at each foot.
    pub foot_wrenches: &'a [Wrench],
    pub jb: &'a DMatrix<f64>,
    pub state: &'a SystemState,
}

/// IK failure during a control step; the limb keeps its previous targets.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlFault {
    pub error: KinematicsError,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlOutput {
    pub torque: DVector<f64>,
    pub desired_base: Pose,
    pub joint_targets: JointVector,
    pub fault: Option<ControlFault>,
}

/// World-frame foot targets: anchors while attached, gait targets otherwise.
pub fn foot_targets(targets: &GaitTargets, anchors: &[Option<Vector3<f64>>]) -> Vec<Vector3<f64>> {
    targets
        .feet
        .iter()
        .zip(anchors)
        .map(|(t, a)| a.unwrap_or(t.position))
        .collect()
}

pub fn control_step(
    model: &RobotModel,
    config: &ControllerConfig,
    previous: &ControllerState,
    inputs: &ControlInputs,
    dt: f64,
) -> (ControlOutput, ControllerState) {
    let mut next = previous.clone();
    let equilibrium = inputs.targets.base;
    let mut feet = foot_targets(inputs.targets, inputs.anchors);

    let desired_base = match config.mode {
        ControllerMode::Baseline => equilibrium,
        ControllerMode::BaseAdmittance => {
            let drive = base_drive(inputs.jb, inputs.foot_wrenches, &equilibrium);
            next.base = admittance_update(&config.admittance, &previous.base, &drive, dt);
            desired_base_pose(&equilibrium, &next.base)
        }
        ControllerMode::EndEffectorAdmittance => {
            for (i, w) in inputs.foot_wrenches.iter().enumerate() {
                let drive = Vector6::new(w.force.x, w.force.y, w.force.z, 0.0, 0.0, 0.0);
                next.feet[i] = admittance_update(&config.admittance, &previous.feet[i], &drive, dt);
                feet[i] += next.feet[i].deviation.fixed_rows::<3>(0);
            }
            equilibrium
        }
    };

    let mut fault = None;
    for (limb, target) in feet.iter().enumerate() {
        match resolve_limb_target(model, &desired_base, limb, target) {
            Ok(q) => next.joint_targets.set_limb(limb, q),
            Err(error) => {
                fault.get_or_insert(ControlFault { error });
            }
        }
    }

    let n = model.joints_total;
    let torque = pd_joint_torque(
        &config.pd,
        &next.joint_targets.0,
        &inputs.state.joints.0,
        &DVector::zeros(n),
        &inputs.state.joint_rates,
        config.torque_limit,
    );
    (
        ControlOutput {
            torque,
            desired_base,
            joint_targets: next.joint_targets.clone(),
            fault,
        },
        next,
    )
}
