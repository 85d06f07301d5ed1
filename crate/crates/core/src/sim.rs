//! Fixed-step closed-loop rollout.
//!
//! The simulation runs in the terrain frame (surface z = 0, normal +z). Each
//! step: gait targets, grasp forces from the current state, controller,
//! forward dynamics with the active disturbances, semi-implicit Euler, then
//! grasp bookkeeping. Sample `k` holds the state at `t = k dt` together with
//! the forces and commands applied over the following step.

use nalgebra::Vector3;
use thiserror::Error;

use crate::contact::{attach, contact_wrench, update_attachment, ContactMode, FootContact, Terrain};
use crate::control::{control_step, resolve_joint_targets, ControlInputs, ControllerState};
use crate::dynamics::{
    assemble_eom, body_states, center_of_mass, forward_dynamics, integrate_step, DynamicsError, GeneralizedForce,
    SystemState,
};
use crate::gait::{gait_targets, plan_swings, CrawlSchedule, CrawlStart, GaitError, GaitPhase};
use crate::kinematics::{base_jacobian, forward_kinematics, limb_jacobian, KinematicsError};
use crate::metrics::{gia_margin, joint_power, tumble_stability_margin, LogSample, SimulationLog};
use crate::scenario::{disturbance_at, Scenario, ScenarioError};
use crate::spatial::{RobotModel, Wrench};

/// Speed at which a foot that missed the surface keeps reaching for it [m/s].
const TOUCHDOWN_SPEED: f64 = 0.02;
/// Deepest a touchdown search reaches below the planned foothold [m].
const TOUCHDOWN_DEPTH: f64 = 0.02;
/// Swing progress after which an early touchdown may grasp.
const EARLY_GRASP_PROGRESS: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error("initial posture: {0}")]
    Posture(#[from] KinematicsError),
    #[error("numerical divergence at t = {t:.4} s ({cause})")]
    NumericalDivergence {
        t: f64,
        cause: String,
        log: Box<SimulationLog>,
    },
}

pub fn crawl_schedule(model: &RobotModel, scenario: &Scenario) -> Result<CrawlSchedule, SimError> {
    let params = scenario.gait.params();
    let start = CrawlStart::staggered(
        model,
        &params,
        scenario.gait.base_height,
        scenario.gait.foot_radial,
        scenario.gait.settle_time,
    );
    Ok(plan_swings(model, &params, &start, scenario.gait.swings)?)
}

fn last_touchdown(schedule: &CrawlSchedule, limb: usize, t: f64) -> Option<f64> {
    schedule
        .swings
        .iter()
        .rev()
        .find(|s| s.limb == limb && s.end_time <= t)
        .map(|s| s.end_time)
}

pub fn run_simulation(model: &RobotModel, scenario: &Scenario) -> Result<SimulationLog, SimError> {
    scenario.validate()?;
    let schedule = crawl_schedule(model, scenario)?;
    let config = scenario.controller_config();
    let contact = &scenario.contact;
    let normal = contact.normal();
    let terrain = Terrain {
        point: Vector3::zeros(),
        normal,
    };
    let gravity = scenario.terrain_gravity();
    let to_terrain = scenario.terrain_rotation();
    let dt = scenario.dt;
    let limbs = model.limb_count();

    let joints = resolve_joint_targets(model, &schedule.start.base, &schedule.start.footholds)?;
    let mut state = SystemState::at_rest(schedule.start.base, joints.clone());
    let mut contacts: Vec<FootContact> = schedule.start.footholds.iter().map(|p| FootContact::attached(*p)).collect();
    let mut controller = ControllerState::new(joints, limbs);
    let mut log = SimulationLog::new(dt);
    let mut loaded = (0.0, model.clone());

    let steps = (scenario.duration / dt).round() as usize;
    for k in 0..steps {
        let t = k as f64 * dt;
        let mut targets = gait_targets(&schedule, t);

        // the gripper opens at lift-off, whatever state it was in
        for (limb, foot) in targets.feet.iter().enumerate() {
            if matches!(foot.phase, GaitPhase::Swing { .. }) && contacts[limb].mode != ContactMode::Swing {
                contacts[limb] = FootContact::swing();
            }
        }
        // a landed swing that has not grasped yet keeps reaching along -n
        for (limb, foot) in targets.feet.iter_mut().enumerate() {
            if foot.phase == GaitPhase::Stance && contacts[limb].mode == ContactMode::Swing {
                let since = last_touchdown(&schedule, limb, t).map_or(0.0, |end| t - end);
                foot.position -= normal * (TOUCHDOWN_SPEED * since).min(TOUCHDOWN_DEPTH);
            }
        }

        let feet = forward_kinematics(model, &state.base_pose, &state.joints);
        let jb = base_jacobian(model, &state.base_pose, &feet);
        let jm = limb_jacobian(model, &state.base_pose, &state.joints);
        let foot_twists = &jb * state.base_twist.to_vector() + &jm * &state.joint_rates;
        let mut wrenches = Vec::with_capacity(limbs);
        for (limb, (grasp, foot)) in contacts.iter_mut().zip(&feet.0).enumerate() {
            let v = foot_twists.fixed_rows::<3>(6 * limb).into_owned();
            *grasp = grasp.tracked(foot, &v);
            wrenches.push(contact_wrench(contact, grasp, foot, &v));
        }

        let anchors: Vec<Option<Vector3<f64>>> = contacts.iter().map(|c| c.anchor()).collect();
        let inputs = ControlInputs {
            targets: &targets,
            anchors: &anchors,
            foot_wrenches: &wrenches,
            jb: &jb,
            state: &state,
        };
        let (command, next_controller) = control_step(model, &config, &controller, &inputs, dt);
        controller = next_controller;

        let disturbance = disturbance_at(scenario, t);
        if disturbance.added_mass != loaded.0 {
            loaded = (disturbance.added_mass, model.with_added_base_mass(disturbance.added_mass));
        }
        let dynamics_model = &loaded.1;
        let terms = assemble_eom(dynamics_model, &state, &gravity);
        let applied = GeneralizedForce {
            base: Wrench::new(
                to_terrain * disturbance.base_wrench.force,
                to_terrain * disturbance.base_wrench.moment,
            ),
            joint: command.torque.clone(),
        };
        let divergence = |cause: String, log: SimulationLog| SimError::NumericalDivergence {
            t,
            cause,
            log: Box::new(log),
        };
        let acc = match forward_dynamics(&terms, &applied, &jb, &jm, &wrenches) {
            Ok(acc) => acc,
            Err(DynamicsError::SolveFailure { residual }) => {
                return Err(divergence(format!("solve residual {residual:.3e}"), log));
            }
        };

        // gravito-inertial load the grasps hold: minus the grasp wrenches at the COM
        let com = center_of_mass(&body_states(dynamics_model, &state));
        let mut load = Wrench::zero();
        let mut held = Vec::with_capacity(limbs);
        for limb in 0..limbs {
            load += -wrenches[limb].transported(&feet.0[limb], &com);
            if let Some(anchor) = anchors[limb] {
                held.push(anchor);
            }
        }
        let tsm = tumble_stability_margin(&held, &com, &load, &normal, model.grip_force_max);
        let giam = (!held.is_empty()).then(|| gia_margin(&held, &com, &load, model.grip_force_max));

        let next = integrate_step(&state, &acc, dt);

        let mut detach_events = Vec::new();
        for limb in 0..limbs {
            let (updated, event) = update_attachment(contact, &contacts[limb], &wrenches[limb]);
            contacts[limb] = updated;
            if event.is_some() {
                detach_events.push(limb);
            }
        }
        let next_feet = forward_kinematics(model, &next.base_pose, &next.joints);
        for (limb, foot) in targets.feet.iter().enumerate() {
            let may_grasp = match foot.phase {
                GaitPhase::Stance => true,
                GaitPhase::Swing { progress } => progress >= EARLY_GRASP_PROGRESS,
            };
            if may_grasp && contacts[limb].mode == ContactMode::Swing {
                if let Ok(grasp) = attach(&next_feet.0[limb], &terrain) {
                    contacts[limb] = grasp;
                }
            }
        }

        log.push(LogSample {
            t,
            foot_wrenches: wrenches,
            torque: command.torque.iter().copied().collect(),
            base_pose: state.base_pose,
            base_twist: state.base_twist,
            contact_modes: contacts.iter().map(|c| c.mode).collect(),
            power: joint_power(&command.torque, &state.joint_rates),
            tsm,
            giam,
            detach_events,
            control_fault: command.fault.map(|f| f.error.limb()),
        });

        if !next.is_finite() || !controller.base.is_finite() {
            return Err(divergence("non-finite state".to_string(), log));
        }
        state = next;
    }
    Ok(log)
}
