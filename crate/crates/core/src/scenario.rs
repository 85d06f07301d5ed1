//! Scenario files and the shipped presets.
//!
//! A scenario is a TOML document. Unknown and duplicate keys are rejected.
//! Vectors in `gravity` and in base-wrench disturbances are given in the
//! world frame (z up); the terrain is that frame pitched by `slope` about y,
//! so `slope = pi/2` is a vertical wall climbed along +x and `slope = pi` a
//! ceiling.

use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::ContactParams;
use crate::control::{AdmittanceParams, ControllerConfig, ControllerMode, PdGains};
use crate::gait::GaitParams;
use crate::spatial::{load_robot_model, ModelError, RobotModel, Wrench};

pub const BUILTIN_ROBOT: &str = "builtin:reference";

/// Shipped presets as `(name, toml)`.
pub const PRESETS: [(&str, &str); 3] = [
    ("case1_earth", include_str!("../scenarios/case1_earth.toml")),
    ("case1_lunar", include_str!("../scenarios/case1_lunar.toml")),
    ("case2_micro", include_str!("../scenarios/case2_micro.toml")),
];

/// Standard gravity [m/s^2].
pub const G: f64 = 9.81;

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_robot")]
    pub robot: String,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub slope: f64,
    pub gravity: GravitySpec,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub contact: ContactParams,
    #[serde(default)]
    pub gait: GaitSpec,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceEvent>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_robot() -> String {
    BUILTIN_ROBOT.to_string()
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravitySpec {
    pub magnitude: f64,
    #[serde(default = "down")]
    pub direction: [f64; 3],
}

fn down() -> [f64; 3] {
    [0.0, 0.0, -1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub mode: ControllerMode,
    #[serde(default = "default_torque_limit")]
    pub torque_limit: f64,
    pub admittance: AdmittanceGains,
    #[serde(default)]
    pub pd: PdGains,
}

fn default_torque_limit() -> f64 {
    2.0
}

/// Scalar gains applied to all six admittance axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmittanceGains {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitSpec {
    pub cycle_time: f64,
    pub duty_factor: f64,
    pub stride: f64,
    pub swing_height: f64,
    pub leg_order: Vec<usize>,
    pub heading: [f64; 2],
    /// Standing time before the first swing [s].
    pub settle_time: f64,
    /// Number of single-leg swings to plan.
    pub swings: usize,
    /// Nominal base COM height over the surface [m].
    pub base_height: f64,
    /// Foot distance beyond the hip along the mount direction [m].
    pub foot_radial: f64,
}

impl Default for GaitSpec {
    fn default() -> Self {
        let p = GaitParams::default();
        Self {
            cycle_time: p.cycle_time,
            duty_factor: p.duty_factor,
            stride: p.stride,
            swing_height: p.swing_height,
            leg_order: p.leg_order,
            heading: p.heading,
            settle_time: 0.5,
            swings: 8,
            base_height: 0.08,
            foot_radial: 0.12,
        }
    }
}

impl GaitSpec {
    pub fn params(&self) -> GaitParams {
        GaitParams {
            cycle_time: self.cycle_time,
            duty_factor: self.duty_factor,
            stride: self.stride,
            swing_height: self.swing_height,
            leg_order: self.leg_order.clone(),
            heading: self.heading,
        }
    }
}

/// Active on `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceEvent {
    /// Point mass rigidly fixed at the base COM.
    AddedMass { mass: f64, start: f64, end: f64 },
    /// Wrench at the base COM, world frame.
    BaseWrench {
        force: [f64; 3],
        #[serde(default)]
        moment: [f64; 3],
        start: f64,
        end: f64,
    },
}

impl DisturbanceEvent {
    pub fn window(&self) -> (f64, f64) {
        match self {
            Self::AddedMass { start, end, .. } | Self::BaseWrench { start, end, .. } => (*start, *end),
        }
    }

    pub fn active(&self, t: f64) -> bool {
        let (start, end) = self.window();
        start <= t && t < end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: "out".to_string() }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("robot model `{path}`: {source}")]
    Robot { path: String, source: ModelError },
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Summed disturbance at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActiveDisturbance {
    pub added_mass: f64,
    /// World frame.
    pub base_wrench: Wrench,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if !self.duration.is_finite() || self.duration < self.gait.cycle_time {
            return Err(invalid("duration", "must cover at least one gait cycle"));
        }
        if !self.slope.is_finite() {
            return Err(invalid("slope", "must be finite"));
        }
        if !(self.gravity.magnitude >= 0.0 && self.gravity.magnitude.is_finite()) {
            return Err(invalid("gravity.magnitude", "must be non-negative"));
        }
        let dir = Vector3::from(self.gravity.direction);
        if !((dir.norm() - 1.0).abs() < 1e-9) {
            return Err(invalid("gravity.direction", "must be a unit vector"));
        }
        self.controller_config()
            .validate()
            .map_err(|e| invalid("controller", e.to_string()))?;
        self.contact.validate().map_err(|e| invalid("contact", e.to_string()))?;
        self.gait
            .params()
            .validate()
            .map_err(|e| invalid("gait", e.to_string()))?;
        if !(self.gait.settle_time >= 0.0) {
            return Err(invalid("gait.settle_time", "must be non-negative"));
        }
        if !(self.gait.base_height > 0.0 && self.gait.foot_radial > 0.0) {
            return Err(invalid("gait", "base_height and foot_radial must be positive"));
        }
        for (i, d) in self.disturbances.iter().enumerate() {
            let (start, end) = d.window();
            if !(start < end) {
                return Err(invalid(&format!("disturbances[{i}]"), "start must precede end"));
            }
            if let DisturbanceEvent::AddedMass { mass, .. } = d {
                if !(*mass > 0.0 && mass.is_finite()) {
                    return Err(invalid(&format!("disturbances[{i}].mass"), "must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn controller_config(&self) -> ControllerConfig {
        let g = self.controller.admittance;
        ControllerConfig {
            mode: self.controller.mode,
            admittance: AdmittanceParams::uniform(g.mass, g.damping, g.stiffness),
            pd: self.controller.pd,
            torque_limit: self.controller.torque_limit,
        }
    }

    /// World-to-terrain rotation.
    pub fn terrain_rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::y_axis(), self.slope)
    }

    /// Gravity in the terrain frame.
    pub fn terrain_gravity(&self) -> Vector3<f64> {
        self.terrain_rotation() * (Vector3::from(self.gravity.direction) * self.gravity.magnitude)
    }

    pub fn robot_model(&self) -> Result<RobotModel, ScenarioError> {
        if self.robot == BUILTIN_ROBOT {
            return Ok(RobotModel::reference());
        }
        let robot_error = |source| ScenarioError::Robot {
            path: self.robot.clone(),
            source,
        };
        let text = std::fs::read_to_string(Path::new(&self.robot)).map_err(|e| {
            robot_error(ModelError::Parse {
                line: 0,
                column: 0,
                message: e.to_string(),
            })
        })?;
        load_robot_model(&text).map_err(robot_error)
    }

    pub fn with_mode(mut self, mode: ControllerMode) -> Self {
        self.controller.mode = mode;
        self
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map_or((0, 0), |s| crate::spatial::line_column(text, s.start));
        let mut message = e.message().to_string();
        // toml reports a duplicate without naming it; the span covers the key
        if let Some(key) = e.span().and_then(|s| text.get(s)).map(str::trim) {
            if !key.is_empty() && !message.contains(key) && !key.contains('\n') {
                message = format!("{message} `{key}`");
            }
        }
        ScenarioError::Parse { line, column, message }
    })?;
    scenario.validate()?;
    scenario.robot_model()?;
    Ok(scenario)
}

pub fn disturbance_at(scenario: &Scenario, t: f64) -> ActiveDisturbance {
    let mut out = ActiveDisturbance {
        added_mass: 0.0,
        base_wrench: Wrench::zero(),
    };
    for d in scenario.disturbances.iter().filter(|d| d.active(t)) {
        match d {
            DisturbanceEvent::AddedMass { mass, .. } => out.added_mass += mass,
            DisturbanceEvent::BaseWrench { force, moment, .. } => {
                out.base_wrench += Wrench::new(Vector3::from(*force), Vector3::from(*moment));
            }
        }
    }
    out
}
