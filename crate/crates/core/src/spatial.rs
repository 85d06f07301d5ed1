//! Geometric and inertial value types, and the robot description consumed by
//! every other module.

use std::ops::{Add, AddAssign, Neg};

use nalgebra::{Cholesky, Matrix3, Quaternion, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reference robot description shipped with the crate.
pub const REFERENCE_MODEL_TOML: &str = include_str!("../models/reference_quadruped.toml");

/// Rigid placement of a frame: position plus unit-quaternion orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::new_normalize(orientation.into_inner()),
        }
    }

    /// Builds a pose from a raw (possibly non-unit) quaternion, renormalizing it.
    pub fn from_quaternion(position: Vector3<f64>, q: Quaternion<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::new_normalize(q),
        }
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn identity() -> Self {
        Self::from_position(Vector3::zeros())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// Maps a point expressed in this frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    /// Maps a parent-frame point into this frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * (p - self.position)
    }

    pub fn translated(&self, d: &Vector3<f64>) -> Self {
        Self {
            position: self.position + d,
            orientation: self.orientation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Linear and angular velocity of a frame, both in world coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            linear: v.fixed_rows::<3>(0).into_owned(),
            angular: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }
}

/// Force and moment, stacked `[force; moment]` when flattened.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl Wrench {
    pub fn new(force: Vector3<f64>, moment: Vector3<f64>) -> Self {
        Self { force, moment }
    }

    pub fn from_force(force: Vector3<f64>) -> Self {
        Self {
            force,
            moment: Vector3::zeros(),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.moment.x,
            self.moment.y,
            self.moment.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            force: v.fixed_rows::<3>(0).into_owned(),
            moment: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    /// Re-expresses this wrench (applied at `from`) as an equivalent wrench about `to`.
    pub fn transported(&self, from: &Vector3<f64>, to: &Vector3<f64>) -> Self {
        Self {
            force: self.force,
            moment: self.moment + (from - to).cross(&self.force),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.moment.iter()).all(|v| v.is_finite())
    }
}

impl Add for Wrench {
    type Output = Wrench;

    fn add(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force + rhs.force,
            moment: self.moment + rhs.moment,
        }
    }
}

impl AddAssign for Wrench {
    fn add_assign(&mut self, rhs: Wrench) {
        self.force += rhs.force;
        self.moment += rhs.moment;
    }
}

impl Neg for Wrench {
    type Output = Wrench;

    fn neg(self) -> Wrench {
        Wrench {
            force: -self.force,
            moment: -self.moment,
        }
    }
}

/// One yaw-pitch-pitch limb.
///
/// The limb's zero axis points radially outward along the horizontal
/// projection of `hip_offset_in_base`. Link 0 (coxa) rotates about the base z
/// axis; links 1 and 2 rotate about the axis perpendicular to the limb plane,
/// positive angles bending the distal link toward base -z. Each link's centre
/// of mass sits at its midpoint and its inertia tensor is given in the link
/// frame (x along the link).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimbModel {
    pub hip_offset_in_base: [f64; 3],
    pub link_lengths: [f64; 3],
    pub link_masses: [f64; 3],
    pub link_inertias: [[[f64; 3]; 3]; 3],
    pub joint_limits: [[f64; 2]; 3],
}

impl LimbModel {
    pub fn hip_offset(&self) -> Vector3<f64> {
        Vector3::from(self.hip_offset_in_base)
    }

    /// Yaw of the limb's zero axis in the base frame.
    pub fn mount_yaw(&self) -> f64 {
        self.hip_offset_in_base[1].atan2(self.hip_offset_in_base[0])
    }

    pub fn link_inertia(&self, link: usize) -> Matrix3<f64> {
        matrix_from_rows(&self.link_inertias[link])
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn mass(&self) -> f64 {
        self.link_masses.iter().sum()
    }
}

/// Kinematic and inertial description of a base plus `N` three-joint limbs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    pub base_mass: f64,
    pub base_inertia: [[f64; 3]; 3],
    pub limbs: Vec<LimbModel>,
    pub grip_force_max: f64,
    pub joints_total: usize,
}

pub const JOINTS_PER_LIMB: usize = 3;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parse failure at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invariant violation: {rule}{}", limb.map(|l| format!(" (limb {l})")).unwrap_or_default())]
    Invariant {
        rule: &'static str,
        limb: Option<usize>,
    },
    #[error("serialization failure: {0}")]
    Serialize(String),
}

impl ModelError {
    fn invariant(rule: &'static str, limb: Option<usize>) -> Self {
        Self::Invariant { rule, limb }
    }
}

impl RobotModel {
    /// The in-repo reference quadruped (2.0 kg, 15 N grip limit).
    pub fn reference() -> Self {
        load_robot_model(REFERENCE_MODEL_TOML).expect("shipped reference model is valid")
    }

    pub fn limb_count(&self) -> usize {
        self.limbs.len()
    }

    pub fn base_inertia_matrix(&self) -> Matrix3<f64> {
        matrix_from_rows(&self.base_inertia)
    }

    /// Copy of the model with a point mass rigidly fixed at the base centre of mass.
    pub fn with_added_base_mass(&self, mass: f64) -> Self {
        let mut m = self.clone();
        m.base_mass += mass;
        m
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.limbs.is_empty() {
            return Err(ModelError::invariant("at least one limb", None));
        }
        if !(self.base_mass.is_finite() && self.base_mass > 0.0) {
            return Err(ModelError::invariant("base_mass > 0", None));
        }
        if !is_spd(&self.base_inertia_matrix()) {
            return Err(ModelError::invariant("base_inertia symmetric positive definite", None));
        }
        if !(self.grip_force_max.is_finite() && self.grip_force_max > 0.0) {
            return Err(ModelError::invariant("grip_force_max > 0", None));
        }
        if self.joints_total != JOINTS_PER_LIMB * self.limbs.len() {
            return Err(ModelError::invariant("joints_total = 3 * limb count", None));
        }
        for (i, limb) in self.limbs.iter().enumerate() {
            let limb_err = |rule| Err(ModelError::invariant(rule, Some(i)));
            if !limb.hip_offset_in_base.iter().all(|v| v.is_finite()) {
                return limb_err("hip_offset_in_base finite");
            }
            if !limb.link_lengths.iter().all(|l| l.is_finite() && *l > 0.0) {
                return limb_err("link_lengths > 0");
            }
            if !limb.link_masses.iter().all(|m| m.is_finite() && *m > 0.0) {
                return limb_err("link_masses > 0");
            }
            if !(0..JOINTS_PER_LIMB).all(|j| is_spd(&limb.link_inertia(j))) {
                return limb_err("link_inertias symmetric positive definite");
            }
            if !limb
                .joint_limits
                .iter()
                .all(|[lo, hi]| lo.is_finite() && hi.is_finite() && lo < hi)
            {
                return limb_err("joint limit lower < upper");
            }
        }
        Ok(())
    }
}

/// Parses and validates a robot description (TOML).
pub fn load_robot_model(description: &str) -> Result<RobotModel, ModelError> {
    let model: RobotModel =
        toml::from_str(description).map_err(|e| parse_error(description, &e))?;
    model.validate()?;
    Ok(model)
}

pub fn serialize_robot_model(model: &RobotModel) -> Result<String, ModelError> {
    toml::to_string(model).map_err(|e| ModelError::Serialize(e.to_string()))
}

pub fn total_mass(model: &RobotModel) -> f64 {
    model.base_mass + model.limbs.iter().map(LimbModel::mass).sum::<f64>()
}

pub(crate) fn parse_error(text: &str, err: &toml::de::Error) -> ModelError {
    let (line, column) = err
        .span()
        .map(|span| line_column(text, span.start))
        .unwrap_or((0, 0));
    ModelError::Parse {
        line,
        column,
        message: err.message().to_string(),
    }
}

/// 1-based line and column of a byte offset.
pub(crate) fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let prefix = &text[..offset.min(text.len())];
    let line = prefix.matches('\n').count() + 1;
    let column = prefix.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub(crate) fn matrix_from_rows(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| rows[r][c])
}

fn is_spd(m: &Matrix3<f64>) -> bool {
    if !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return false;
    }
    Cholesky::new(*m).is_some()
}

/// Skew-symmetric cross-product matrix: `skew(a) * b == a x b`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_model_mass_and_grip_limit() {
        let model = RobotModel::reference();
        assert_eq!(model.limb_count(), 4);
        assert_eq!(model.joints_total, 12);
        assert_eq!(model.grip_force_max, 15.0);
        assert!((total_mass(&model) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_link_length_is_rejected() {
        let text = REFERENCE_MODEL_TOML.replacen("link_lengths = [0.06,", "link_lengths = [0.0,", 1);
        assert_ne!(text, REFERENCE_MODEL_TOML);
        let err = load_robot_model(&text).unwrap_err();
        assert!(
            err.to_string().starts_with("invariant violation: link_lengths > 0"),
            "{err}"
        );
    }

    #[test]
    fn unknown_key_reports_location() {
        let text = format!("{REFERENCE_MODEL_TOML}\nbase_mas = 1.0\n");
        match load_robot_model(&text).unwrap_err() {
            ModelError::Parse { line, message, .. } => {
                assert!(line > 1);
                assert!(message.contains("base_mas"), "{message}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn missing_field_is_a_parse_error() {
        let text = REFERENCE_MODEL_TOML.replacen("grip_force_max = 15.0", "", 1);
        assert!(matches!(
            load_robot_model(&text),
            Err(ModelError::Parse { .. })
        ));
    }

    #[test]
    fn round_trip_is_lossless() {
        let model = RobotModel::reference();
        let text = serialize_robot_model(&model).unwrap();
        assert_eq!(load_robot_model(&text).unwrap(), model);
    }

    #[test]
    fn total_mass_examples() {
        let mut model = RobotModel::reference();
        for limb in &mut model.limbs {
            limb.link_masses = [0.0; 3];
        }
        model.base_mass = 1.0;
        assert_eq!(total_mass(&model), 1.0);

        for limb in &mut model.limbs {
            limb.link_masses = [1.0 / 12.0; 3];
        }
        assert!((total_mass(&model) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pose_constructors_normalize() {
        let p = Pose::from_quaternion(Vector3::zeros(), Quaternion::new(2.0, 0.3, -1.0, 0.5));
        assert!((p.orientation.norm() - 1.0).abs() <= 1e-9);
        let q = UnitQuaternion::new_unchecked(Quaternion::new(1.0 + 1e-6, 0.0, 0.0, 0.0));
        assert!((Pose::new(Vector3::zeros(), q).orientation.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn wrench_transport_adds_lever_moment() {
        let w = Wrench::from_force(Vector3::new(0.0, 0.0, -5.0));
        let t = w.transported(&Vector3::new(0.1, 0.0, 0.0), &Vector3::zeros());
        assert!((t.moment - Vector3::new(0.0, 0.5, 0.0)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn total_mass_is_invariant_under_limb_reordering(
            masses in proptest::collection::vec(0.01f64..2.0, 12),
            seed in 0usize..24,
        ) {
            let mut model = RobotModel::reference();
            for (i, limb) in model.limbs.iter_mut().enumerate() {
                limb.link_masses.copy_from_slice(&masses[3 * i..3 * i + 3]);
            }
            let before = total_mass(&model);
            // walk through the 24 permutations of four limbs
            let mut order: Vec<usize> = (0..4).collect();
            let mut k = seed;
            for i in (1..=4).rev() {
                order.swap(i - 1, k % i);
                k /= i;
            }
            model.limbs = order.iter().map(|&i| model.limbs[i].clone()).collect();
            prop_assert!((total_mass(&model) - before).abs() <= 1e-12 * before);
        }

        #[test]
        fn round_trip_preserves_finite_values(
            base_mass in 1e-3f64..1e3,
            grip in 1e-3f64..1e3,
            lengths in proptest::array::uniform3(1e-4f64..1.0),
            hip in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let mut model = RobotModel::reference();
            model.base_mass = base_mass;
            model.grip_force_max = grip;
            model.limbs[1].link_lengths = lengths;
            model.limbs[2].hip_offset_in_base = hip;
            let text = serialize_robot_model(&model).unwrap();
            prop_assert_eq!(load_robot_model(&text).unwrap(), model);
        }
    }
}
