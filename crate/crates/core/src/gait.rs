//! Periodic crawl gait on a plane.
//!
//! Everything here lives in the terrain frame: the surface is z = 0 with +z
//! pointing away from it, and headings are directions in the surface plane.
//! One leg swings at a time. The nominal base moves at a constant
//! `stride / cycle_time` while the walk lasts.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::leg_inverse_kinematics;
use crate::spatial::{Pose, RobotModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitParams {
    pub cycle_time: f64,
    pub duty_factor: f64,
    pub stride: f64,
    pub swing_height: f64,
    /// Limb indices in swing order.
    pub leg_order: Vec<usize>,
    pub heading: [f64; 2],
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            cycle_time: 4.0,
            duty_factor: 0.75,
            stride: 0.05,
            swing_height: 0.03,
            // LF, RH, RF, LH
            leg_order: vec![0, 3, 1, 2],
            heading: [1.0, 0.0],
        }
    }
}

impl GaitParams {
    pub fn legs(&self) -> usize {
        self.leg_order.len()
    }

    /// Interval between successive swing starts.
    pub fn slot(&self) -> f64 {
        self.cycle_time / self.legs() as f64
    }

    pub fn swing_duration(&self) -> f64 {
        (1.0 - self.duty_factor) * self.cycle_time
    }

    pub fn heading3(&self) -> Vector3<f64> {
        let h = Vector2::from(self.heading).normalize();
        Vector3::new(h.x, h.y, 0.0)
    }

    pub fn base_speed(&self) -> f64 {
        self.stride / self.cycle_time
    }

    pub fn validate(&self) -> Result<(), GaitError> {
        let n = self.legs();
        if n == 0 {
            return Err(GaitError::InvalidParams("leg_order is empty"));
        }
        let mut seen = vec![false; n];
        for &leg in &self.leg_order {
            if leg >= n || seen[leg] {
                return Err(GaitError::InvalidParams("leg_order must be a permutation"));
            }
            seen[leg] = true;
        }
        if !(self.cycle_time > 0.0 && self.cycle_time.is_finite()) {
            return Err(GaitError::InvalidParams("cycle_time must be positive"));
        }
        if !(0.5..1.0).contains(&self.duty_factor) {
            return Err(GaitError::InvalidParams("duty_factor must lie in [0.5, 1)"));
        }
        // one leg in the air at a time
        if self.duty_factor < 1.0 - 1.0 / n as f64 - 1e-12 {
            return Err(GaitError::InvalidParams("duty_factor too low for one swing at a time"));
        }
        if !(self.stride >= 0.0 && self.stride.is_finite()) {
            return Err(GaitError::InvalidParams("stride must be non-negative"));
        }
        if !(self.swing_height >= 0.0 && self.swing_height.is_finite()) {
            return Err(GaitError::InvalidParams("swing_height must be non-negative"));
        }
        let h = Vector2::from(self.heading);
        if !((h.norm() - 1.0).abs() < 1e-9) {
            return Err(GaitError::InvalidParams("heading must be a unit vector"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum GaitError {
    #[error("invalid gait parameters: {0}")]
    InvalidParams(&'static str),
    #[error("foothold of limb {limb} is out of reach at t = {time:.3} s")]
    StrideUnreachable { limb: usize, time: f64 },
}

/// Standing posture the crawl starts from.
#[derive(Clone, Debug, PartialEq)]
pub struct CrawlStart {
    pub base: Pose,
    pub footholds: Vec<Vector3<f64>>,
    /// Time spent standing before the first swing.
    pub settle_time: f64,
}

impl CrawlStart {
    /// Base level at `height` over the origin; each foot placed `radial` beyond
    /// its hip along the mount direction and shifted along the heading so that
    /// every leg's stance is centred on its nominal point.
    pub fn staggered(model: &RobotModel, params: &GaitParams, height: f64, radial: f64, settle_time: f64) -> Self {
        let n = params.legs() as f64;
        let heading = params.heading3();
        let mut footholds = vec![Vector3::zeros(); model.limb_count()];
        for (slot, &limb) in params.leg_order.iter().enumerate() {
            let l = &model.limbs[limb];
            let yaw = l.mount_yaw();
            let hip = l.hip_offset();
            let nominal = Vector3::new(hip.x + radial * yaw.cos(), hip.y + radial * yaw.sin(), 0.0);
            let stagger = params.stride * (slot as f64 / n - params.duty_factor / 2.0);
            footholds[limb] = nominal + heading * stagger;
        }
        Self {
            base: Pose::from_position(Vector3::new(0.0, 0.0, height)),
            footholds,
            settle_time,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwingPlan {
    pub limb: usize,
    pub start_time: f64,
    pub end_time: f64,
    pub from: Vector3<f64>,
    pub to: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrawlSchedule {
    pub params: GaitParams,
    pub start: CrawlStart,
    pub swings: Vec<SwingPlan>,
}

impl CrawlSchedule {
    pub fn walk_start(&self) -> f64 {
        self.start.settle_time
    }

    /// End of the base motion; the last swing ends at or before it.
    pub fn walk_end(&self) -> f64 {
        self.start.settle_time + self.swings.len() as f64 * self.params.slot()
    }

    pub fn nominal_base(&self, t: f64) -> Pose {
        let travel = (t - self.walk_start()).clamp(0.0, self.walk_end() - self.walk_start());
        self.start
            .base
            .translated(&(self.params.heading3() * (self.params.base_speed() * travel)))
    }

    /// Foothold of `limb` once every swing finishing by `t` has landed.
    pub fn foothold(&self, limb: usize, t: f64) -> Vector3<f64> {
        self.swings
            .iter()
            .rev()
            .find(|s| s.limb == limb && s.end_time <= t)
            .map_or(self.start.footholds[limb], |s| s.to)
    }

    pub fn active_swing(&self, limb: usize, t: f64) -> Option<&SwingPlan> {
        self.swings
            .iter()
            .find(|s| s.limb == limb && s.start_time <= t && t < s.end_time)
    }
}

/// Schedules `n_swings` single-leg swings in `leg_order`.
pub fn plan_swings(
    model: &RobotModel,
    params: &GaitParams,
    start: &CrawlStart,
    n_swings: usize,
) -> Result<CrawlSchedule, GaitError> {
    params.validate()?;
    if params.legs() != model.limb_count() || start.footholds.len() != model.limb_count() {
        return Err(GaitError::InvalidParams("leg count does not match the model"));
    }
    let mut schedule = CrawlSchedule {
        params: params.clone(),
        start: start.clone(),
        swings: Vec::with_capacity(n_swings),
    };
    let step = params.heading3() * params.stride;
    let mut current = start.footholds.clone();
    for k in 0..n_swings {
        let limb = params.leg_order[k % params.legs()];
        let start_time = start.settle_time + k as f64 * params.slot();
        let from = current[limb];
        let to = from + step;
        current[limb] = to;
        schedule.swings.push(SwingPlan {
            limb,
            start_time,
            end_time: start_time + params.swing_duration(),
            from,
            to,
        });
    }
    check_reach(model, &schedule)?;
    Ok(schedule)
}

/// Crawl of whole cycles: one swing per leg per cycle.
pub fn plan_crawl(
    model: &RobotModel,
    params: &GaitParams,
    start: &CrawlStart,
    n_cycles: usize,
) -> Result<CrawlSchedule, GaitError> {
    plan_swings(model, params, start, n_cycles * params.legs())
}

// Stance is longest-stretched just before lift-off and just after touchdown.
fn check_reach(model: &RobotModel, schedule: &CrawlSchedule) -> Result<(), GaitError> {
    let reach = |limb: usize, foot: &Vector3<f64>, t: f64| {
        let local = schedule.nominal_base(t).inverse_transform_point(foot);
        leg_inverse_kinematics(model, limb, &local)
            .map(|_| ())
            .map_err(|_| GaitError::StrideUnreachable { limb, time: t })
    };
    for (limb, foot) in schedule.start.footholds.iter().enumerate() {
        reach(limb, foot, 0.0)?;
    }
    for s in &schedule.swings {
        reach(s.limb, &s.from, s.start_time)?;
        reach(s.limb, &s.to, s.end_time)?;
    }
    let end = schedule.walk_end();
    for limb in 0..model.limb_count() {
        reach(limb, &schedule.foothold(limb, end), end)?;
    }
    Ok(())
}

/// Quintic blend in the plane plus a `sin^2` bump along +z; zero velocity
/// and acceleration at both ends, apex `height` above the midpoint.
pub fn swing_trajectory(start: &Vector3<f64>, goal: &Vector3<f64>, height: f64, progress: f64) -> Vector3<f64> {
    let p = progress.clamp(0.0, 1.0);
    let blend = p * p * p * (10.0 - 15.0 * p + 6.0 * p * p);
    let bump = (std::f64::consts::PI * p).sin().powi(2);
    start + (goal - start) * blend + Vector3::z() * (height * bump)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GaitPhase {
    Stance,
    Swing { progress: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootTarget {
    pub phase: GaitPhase,
    pub position: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaitTargets {
    pub feet: Vec<FootTarget>,
    pub base: Pose,
}

impl GaitTargets {
    pub fn swinging(&self) -> impl Iterator<Item = usize> + '_ {
        self.feet
            .iter()
            .enumerate()
            .filter(|(_, f)| matches!(f.phase, GaitPhase::Swing { .. }))
            .map(|(i, _)| i)
    }
}

pub fn gait_targets(schedule: &CrawlSchedule, t: f64) -> GaitTargets {
    let feet = (0..schedule.start.footholds.len())
        .map(|limb| match schedule.active_swing(limb, t) {
            Some(s) => {
                let progress = (t - s.start_time) / (s.end_time - s.start_time);
                FootTarget {
                    phase: GaitPhase::Swing { progress },
                    position: swing_trajectory(&s.from, &s.to, schedule.params.swing_height, progress),
                }
            }
            None => FootTarget {
                phase: GaitPhase::Stance,
                position: schedule.foothold(limb, t),
            },
        })
        .collect();
    GaitTargets {
        feet,
        base: schedule.nominal_base(t),
    }
}
