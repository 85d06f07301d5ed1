//! Anchor-based grasp model.
//!
//! An attached foot is tied to its anchor by a spring-damper on each axis,
//! `F = K_s (anchor - p) - D_s v`. The grip holds in every direction; it lets
//! go only when the pull along the outward surface normal exceeds the limit.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial::Wrench;

/// Largest foot-to-surface distance at which a grasp can be acquired [m].
pub const ATTACH_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    pub stiffness: [f64; 3],
    pub damping: [f64; 3],
    pub pull_off_force: f64,
    pub surface_normal: [f64; 3],
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: [1e4; 3],
            damping: [20.0; 3],
            pull_off_force: 15.0,
            surface_normal: [0.0, 0.0, 1.0],
        }
    }
}

impl ContactParams {
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::from(self.surface_normal)
    }

    pub fn validate(&self) -> Result<(), ContactError> {
        if !self.stiffness.iter().all(|k| *k > 0.0 && k.is_finite()) {
            return Err(ContactError::InvalidParams("stiffness must be positive"));
        }
        if !self.damping.iter().all(|d| *d >= 0.0 && d.is_finite()) {
            return Err(ContactError::InvalidParams("damping must be non-negative"));
        }
        if !(self.pull_off_force > 0.0 && self.pull_off_force.is_finite()) {
            return Err(ContactError::InvalidParams("pull_off_force must be positive"));
        }
        if (self.normal().norm() - 1.0).abs() > 1e-9 {
            return Err(ContactError::InvalidParams("surface_normal must be a unit vector"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ContactMode {
    Swing,
    Attached { anchor: Vector3<f64> },
    Detached,
}

/// Grasp state of one foot. Penetration and its rate are meaningful only
/// while attached and are zero otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootContact {
    pub mode: ContactMode,
    pub penetration: Vector3<f64>,
    pub penetration_rate: Vector3<f64>,
}

impl FootContact {
    pub fn swing() -> Self {
        Self::with_mode(ContactMode::Swing)
    }

    pub fn detached() -> Self {
        Self::with_mode(ContactMode::Detached)
    }

    pub fn attached(anchor: Vector3<f64>) -> Self {
        Self::with_mode(ContactMode::Attached { anchor })
    }

    fn with_mode(mode: ContactMode) -> Self {
        Self {
            mode,
            penetration: Vector3::zeros(),
            penetration_rate: Vector3::zeros(),
        }
    }

    pub fn anchor(&self) -> Option<Vector3<f64>> {
        match self.mode {
            ContactMode::Attached { anchor } => Some(anchor),
            _ => None,
        }
    }

    pub fn is_attached(&self) -> bool {
        matches!(self.mode, ContactMode::Attached { .. })
    }

    /// Records the penetration seen at the current foot state.
    pub fn tracked(mut self, foot_pos: &Vector3<f64>, foot_vel: &Vector3<f64>) -> Self {
        if let Some(anchor) = self.anchor() {
            self.penetration = anchor - foot_pos;
            self.penetration_rate = -foot_vel;
        }
        self
    }
}

/// Emitted when a grasp lets go; `pull_force` is the normal pull that broke it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetachEvent {
    pub pull_force: f64,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ContactError {
    #[error("foot is {distance:.4} m from the surface, beyond the attach tolerance")]
    AttachTooFar { distance: f64 },
    #[error("invalid contact parameters: {0}")]
    InvalidParams(&'static str),
}

/// Planar climbing surface through `point` with outward unit `normal`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Terrain {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl Terrain {
    /// The plane z = 0 facing +z.
    pub fn flat() -> Self {
        Self {
            point: Vector3::zeros(),
            normal: Vector3::z(),
        }
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    pub fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.normal * self.signed_distance(p)
    }
}

/// Force on the robot from one foot's grasp; zero unless attached.
pub fn contact_wrench(
    params: &ContactParams,
    contact: &FootContact,
    foot_pos: &Vector3<f64>,
    foot_vel: &Vector3<f64>,
) -> Wrench {
    let Some(anchor) = contact.anchor() else {
        return Wrench::zero();
    };
    let delta = anchor - foot_pos;
    let rate = -foot_vel;
    let k = Vector3::from(params.stiffness);
    let d = Vector3::from(params.damping);
    Wrench::from_force(k.component_mul(&delta) + d.component_mul(&rate))
}

/// Releases the grasp when the pull away from the surface strictly exceeds
/// the pull-off limit. Non-attached contacts pass through unchanged.
pub fn update_attachment(
    params: &ContactParams,
    contact: &FootContact,
    wrench_on_robot: &Wrench,
) -> (FootContact, Option<DetachEvent>) {
    if !contact.is_attached() {
        return (*contact, None);
    }
    // The surface pulls the robot inward when the foot is being torn off.
    let pull = -wrench_on_robot.force.dot(&params.normal());
    if pull > params.pull_off_force {
        (FootContact::detached(), Some(DetachEvent { pull_force: pull }))
    } else {
        (*contact, None)
    }
}

/// Acquires a grasp at the surface projection of `foot_pos`. A foot at or
/// below the surface is touching it.
pub fn attach(foot_pos: &Vector3<f64>, terrain: &Terrain) -> Result<FootContact, ContactError> {
    let distance = terrain.signed_distance(foot_pos);
    if distance > ATTACH_TOLERANCE {
        return Err(ContactError::AttachTooFar { distance });
    }
    Ok(FootContact::attached(terrain.project(foot_pos)))
}
