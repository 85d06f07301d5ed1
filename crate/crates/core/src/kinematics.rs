//! Forward kinematics, per-limb analytic inverse kinematics and the base/limb
//! Jacobians of the floating-base equation of motion.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use thiserror::Error;

use crate::spatial::{skew, LimbModel, Pose, RobotModel, JOINTS_PER_LIMB};

/// Tolerance on joint limits and on the reach test in IK.
const LIMIT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("limb {limb}: target unreachable by {distance_excess:.3e} m")]
    Unreachable { limb: usize, distance_excess: f64 },
    #[error("limb {limb}: joint {joint} outside its limits")]
    JointLimitViolation { limb: usize, joint: usize },
}

impl KinematicsError {
    pub fn limb(&self) -> usize {
        match *self {
            KinematicsError::Unreachable { limb, .. } => limb,
            KinematicsError::JointLimitViolation { limb, .. } => limb,
        }
    }
}

/// Joint angles in limb-major order (limb 0 joints, then limb 1, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct JointVector(pub DVector<f64>);

impl JointVector {
    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_column_slice(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn limb(&self, limb: usize) -> [f64; 3] {
        let k = JOINTS_PER_LIMB * limb;
        [self.0[k], self.0[k + 1], self.0[k + 2]]
    }

    pub fn set_limb(&mut self, limb: usize, q: [f64; 3]) {
        let k = JOINTS_PER_LIMB * limb;
        self.0.rows_mut(k, JOINTS_PER_LIMB).copy_from_slice(&q);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// World-frame foot position of every limb.
#[derive(Clone, Debug, PartialEq)]
pub struct FootPlacement(pub Vec<Vector3<f64>>);

impl FootPlacement {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// World-frame geometry of one limb at a configuration.
#[derive(Clone, Debug)]
pub struct LimbFrames {
    /// Joint origins; joint 0 is the hip.
    pub joint_origins: [Vector3<f64>; 3],
    pub joint_axes: [Vector3<f64>; 3],
    /// Orientation of each link frame (x along the link).
    pub link_rotations: [Matrix3<f64>; 3],
    pub link_coms: [Vector3<f64>; 3],
    pub foot: Vector3<f64>,
}

fn rot_z(a: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a).into_inner()
}

fn rot_y(a: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), a).into_inner()
}

pub fn limb_frames(limb: &LimbModel, base: &Pose, q: [f64; 3]) -> LimbFrames {
    let base_rot = base.rotation();
    let mount = base_rot * rot_z(limb.mount_yaw());
    let hip = base.transform_point(&limb.hip_offset());
    let [l0, l1, l2] = limb.link_lengths;

    let r0 = mount * rot_z(q[0]);
    let r1 = r0 * rot_y(q[1]);
    let r2 = r1 * rot_y(q[2]);

    let x0 = r0.column(0).into_owned();
    let x1 = r1.column(0).into_owned();
    let x2 = r2.column(0).into_owned();

    let o1 = hip + l0 * x0;
    let o2 = o1 + l1 * x1;
    let foot = o2 + l2 * x2;

    LimbFrames {
        joint_origins: [hip, o1, o2],
        joint_axes: [
            mount.column(2).into_owned(),
            r0.column(1).into_owned(),
            r1.column(1).into_owned(),
        ],
        link_rotations: [r0, r1, r2],
        link_coms: [hip + 0.5 * l0 * x0, o1 + 0.5 * l1 * x1, o2 + 0.5 * l2 * x2],
        foot,
    }
}

pub fn forward_kinematics(model: &RobotModel, base: &Pose, joints: &JointVector) -> FootPlacement {
    FootPlacement(
        model
            .limbs
            .iter()
            .enumerate()
            .map(|(i, limb)| limb_frames(limb, base, joints.limb(i)).foot)
            .collect(),
    )
}

/// Foot position of one limb in the base frame.
pub fn foot_in_base(limb: &LimbModel, q: [f64; 3]) -> Vector3<f64> {
    limb_frames(limb, &Pose::identity(), q).foot
}

/// Analytic IK of one limb for a base-frame foot target, knee-down branch
/// (third joint non-negative; the straight-leg tie resolves to zero).
pub fn leg_inverse_kinematics(
    model: &RobotModel,
    limb_id: usize,
    foot_in_base: &Vector3<f64>,
) -> Result<[f64; 3], KinematicsError> {
    let limb = &model.limbs[limb_id];
    let [l0, l1, l2] = limb.link_lengths;
    let rel = rot_z(-limb.mount_yaw()) * (foot_in_base - limb.hip_offset());

    let excess = rel.norm() - limb.reach();
    if excess > LIMIT_TOLERANCE {
        return Err(KinematicsError::Unreachable {
            limb: limb_id,
            distance_excess: excess,
        });
    }

    let yaw = rel.y.atan2(rel.x);
    let radial = rel.x.hypot(rel.y) - l0;
    let down = -rel.z;
    let d2 = radial * radial + down * down;
    let d = d2.sqrt();
    if d > l1 + l2 + LIMIT_TOLERANCE || d < (l1 - l2).abs() - LIMIT_TOLERANCE {
        let distance_excess = if d > l1 + l2 {
            d - (l1 + l2)
        } else {
            (l1 - l2).abs() - d
        };
        return Err(KinematicsError::Unreachable {
            limb: limb_id,
            distance_excess,
        });
    }

    let cos_knee = ((d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = cos_knee.acos();
    let femur = down.atan2(radial) - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
    let q = [yaw, femur, knee];

    for (joint, (angle, [lo, hi])) in q.iter().zip(limb.joint_limits).enumerate() {
        if *angle < lo - LIMIT_TOLERANCE || *angle > hi + LIMIT_TOLERANCE {
            return Err(KinematicsError::JointLimitViolation {
                limb: limb_id,
                joint,
            });
        }
    }
    Ok(q)
}

/// Stacked base Jacobian `J_b` (6N x 6); block i is `[I, -[r_i - r_b]x; 0, I]`.
pub fn base_jacobian(model: &RobotModel, base: &Pose, feet: &FootPlacement) -> DMatrix<f64> {
    debug_assert_eq!(feet.len(), model.limb_count());
    let mut jb = DMatrix::zeros(6 * feet.len(), 6);
    for (i, foot) in feet.0.iter().enumerate() {
        let r = foot - base.position;
        jb.fixed_view_mut::<3, 3>(6 * i, 0).fill_with_identity();
        jb.fixed_view_mut::<3, 3>(6 * i, 3).copy_from(&(-skew(&r)));
        jb.fixed_view_mut::<3, 3>(6 * i + 3, 3).fill_with_identity();
    }
    jb
}

/// Stacked limb Jacobian `J_m` (6N x n). Linear rows give the foot velocity,
/// angular rows the angular velocity of the distal link.
pub fn limb_jacobian(model: &RobotModel, base: &Pose, joints: &JointVector) -> DMatrix<f64> {
    let n = model.joints_total;
    let mut jm = DMatrix::zeros(6 * model.limb_count(), n);
    for (i, limb) in model.limbs.iter().enumerate() {
        let frames = limb_frames(limb, base, joints.limb(i));
        for j in 0..JOINTS_PER_LIMB {
            let axis = frames.joint_axes[j];
            let lin = axis.cross(&(frames.foot - frames.joint_origins[j]));
            let col = JOINTS_PER_LIMB * i + j;
            jm.fixed_view_mut::<3, 1>(6 * i, col).copy_from(&lin);
            jm.fixed_view_mut::<3, 1>(6 * i + 3, col).copy_from(&axis);
        }
    }
    jm
}
