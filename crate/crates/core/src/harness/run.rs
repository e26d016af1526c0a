use serde::Serialize;

use super::scenario::{ScenarioConfig, PLANT_STEP};
use crate::control::{ControlOutput, Controller};
use crate::dynamics::{step, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::planner::{Plan, Planner, Termination, PROJECTION_REACH};
use crate::track::{Obstacle, RefPath};
use crate::GRAVITY;

/// Length of straight path appended after the track end (m).
pub const RUNOUT: f64 = 100.0;
/// Solve-time budget per replan (ms).
pub const REPLAN_BUDGET_MS: f64 = 100.0;

/// One control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub roll: f64,
    pub pitch: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub omega_fl: f64,
    pub omega_fr: f64,
    pub omega_rl: f64,
    pub omega_rr: f64,
    pub steer: f64,
    pub s0: f64,
    pub lateral_error: f64,
    pub v_max_local: f64,
    pub v_curvature: f64,
    pub target_speed: f64,
    pub torque_fl: f64,
    pub torque_fr: f64,
    pub torque_rl: f64,
    pub torque_rr: f64,
    pub steer_cmd: f64,
    pub replan: bool,
    pub sqp_iterations: usize,
    pub degraded: bool,
    pub stale: bool,
    pub active_obstacles: usize,
    /// Smallest distance from the CoM to an obstacle edge (m).
    pub min_obstacle_distance: f64,
}

/// One replanning event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplanRecord {
    pub index: usize,
    pub t: f64,
    pub s0: f64,
    pub wall_ms: f64,
    pub sqp_iterations: usize,
    pub qp_iterations: usize,
    pub termination: &'static str,
    pub degraded: bool,
    pub objective: f64,
    pub obstacles: usize,
    /// Largest planned longitudinal speed over the window's speed limit.
    pub plan_speed_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Completion {
    Completed,
    Timeout,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub completion: Completion,
    pub rms_lateral_error: f64,
    pub max_lateral_error: f64,
    pub average_speed: f64,
    /// Only when the scenario has obstacles.
    pub min_obstacle_clearance: Option<f64>,
    pub collision_ticks: usize,
    pub max_solve_ms: f64,
    pub median_solve_ms: f64,
    pub late_replan_fraction: f64,
    pub replans: usize,
    pub degraded_replans: usize,
    pub stale_ticks: usize,
    /// Largest commanded speed over the curvature speed bound.
    pub max_speed_bound_ratio: f64,
    /// Largest planned speed over the window speed limit, before capping.
    pub max_plan_speed_ratio: f64,
    /// Largest steering command change per second between ticks.
    pub max_steer_rate: f64,
    pub max_sqp_iterations: usize,
    pub final_time: f64,
    pub final_s: f64,
}

impl RunMetrics {
    /// Numeric metrics in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("rms_lateral_error", self.rms_lateral_error),
            ("max_lateral_error", self.max_lateral_error),
            ("average_speed", self.average_speed),
            ("min_obstacle_clearance", self.min_obstacle_clearance.unwrap_or(f64::NAN)),
            ("collision_ticks", self.collision_ticks as f64),
            ("max_solve_ms", self.max_solve_ms),
            ("median_solve_ms", self.median_solve_ms),
            ("late_replan_fraction", self.late_replan_fraction),
            ("replans", self.replans as f64),
            ("degraded_replans", self.degraded_replans as f64),
            ("stale_ticks", self.stale_ticks as f64),
            ("max_speed_bound_ratio", self.max_speed_bound_ratio),
            ("max_plan_speed_ratio", self.max_plan_speed_ratio),
            ("max_steer_rate", self.max_steer_rate),
            ("max_sqp_iterations", self.max_sqp_iterations as f64),
            ("final_time", self.final_time),
            ("final_s", self.final_s),
        ]
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: String,
    pub path: RefPath,
    pub obstacles: Vec<Obstacle>,
    pub trace: Vec<TraceRow>,
    pub replans: Vec<ReplanRecord>,
    pub plans: Vec<Plan>,
    pub metrics: RunMetrics,
    /// Why the run stopped early.
    pub diagnostic: Option<String>,
    pub mu: f64,
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::KktTolerance => "kkt",
        Termination::Stalled => "stalled",
        Termination::NumericalFailure => "numerical_failure",
        Termination::IterationCap => "iteration_cap",
    }
}

fn plan_speed_ratio(plan: &Plan) -> f64 {
    let v = plan.solution.states.iter().map(|s| s.vx).fold(0.0, f64::max);
    v / plan.window.v_max
}

fn initial_state(path: &RefPath, offset: f64, speed: f64, params: &VehicleParams) -> VehicleState {
    let p = path.point_at(0.0);
    let (s, c) = p.heading.sin_cos();
    VehicleState::rolling(p.x - offset * s, p.y + offset * c, p.heading, speed, 0.0, params)
}

/// Runs a scenario to completion, timeout or abort. Errors are reserved for
/// invalid configurations; a vehicle leaving the corridor ends the run with
/// [`Completion::Aborted`] and a diagnostic.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput> {
    config.validate()?;
    let params = config.load_vehicle()?;
    params.validate()?;
    let envelope = config.load_envelope()?;
    envelope.validate()?;
    let mpc = config.mpc_config();
    let ctl_cfg = config.controller;
    let mu = params.mu;

    let track = RefPath::from_segments(&config.segments(), 0.0, 0.0, 0.0)?;
    let path = track.with_runout(RUNOUT);
    let (specs, offset) = config.jittered();
    let obstacles = specs
        .iter()
        .map(|o| Obstacle::place(&path, o))
        .collect::<Result<Vec<_>>>()?;

    let mut planner = Planner::new(config.model, mpc, envelope, params.clone(), mu);
    let mut controller = Controller::new(ctl_cfg, params.clone());
    let mut state = initial_state(&path, offset, config.initial_speed, &params);

    let plant_steps = (ctl_cfg.period / PLANT_STEP).round() as usize;
    let replan_every = (mpc.replan_period / ctl_cfg.period).round() as usize;
    let max_ticks = (config.duration / ctl_cfg.period).ceil() as usize;

    let mut trace = Vec::with_capacity(max_ticks.min(100_000));
    let mut replans = Vec::new();
    let mut plans = Vec::new();
    let mut active: Option<Plan> = None;
    let mut pending: Option<Plan> = None;
    let mut completion = Completion::Timeout;
    let mut diagnostic = None;
    let mut s_prev = 0.0;

    for tick in 0..max_ticks {
        let t = tick as f64 * ctl_cfg.period;
        let projection = match path.project_between(state.x, state.y, s_prev - PROJECTION_REACH, s_prev + PROJECTION_REACH) {
            Ok(p) => p,
            Err(Error::OffPath { distance, .. }) => {
                completion = Completion::Aborted;
                diagnostic = Some(Error::VehicleLost { t, distance }.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        s_prev = projection.s;
        if projection.s >= track.track_length() {
            completion = Completion::Completed;
            break;
        }

        let replan = tick % replan_every == 0;
        let mut sqp_iterations = 0;
        let mut degraded = false;
        if replan {
            if config.real_time {
                if let Some(p) = pending.take() {
                    if !p.solution.degraded || active.is_none() {
                        active = Some(p);
                    }
                }
            }
            let plan = match planner.plan(t, &state, &path, &obstacles) {
                Ok(p) => p,
                Err(Error::OffPath { distance, .. }) => {
                    completion = Completion::Aborted;
                    diagnostic = Some(Error::VehicleLost { t, distance }.to_string());
                    break;
                }
                Err(e) => return Err(e),
            };
            let stats = plan.solution.stats;
            sqp_iterations = stats.sqp_iterations;
            degraded = plan.solution.degraded;
            replans.push(ReplanRecord {
                index: replans.len(),
                t,
                s0: plan.s0,
                wall_ms: stats.wall_ms,
                sqp_iterations,
                qp_iterations: stats.qp_iterations,
                termination: termination_name(stats.termination),
                degraded,
                objective: plan.solution.objective,
                obstacles: plan.obstacles_considered,
                plan_speed_ratio: plan_speed_ratio(&plan),
            });
            if config.dump_plans {
                plans.push(plan.clone());
            }
            if config.real_time {
                pending = Some(plan);
            } else if !degraded || active.is_none() {
                active = Some(plan);
            }
        }

        let out: ControlOutput = controller.track(t, &state, active.as_ref());
        let (v_max_local, v_curvature, active_obstacles) = match &active {
            Some(p) => (
                p.window.v_max,
                (mu * GRAVITY / p.window.kappa_max.max(1e-9)).sqrt(),
                p.obstacles_considered,
            ),
            None => (f64::NAN, f64::NAN, 0),
        };
        let min_obstacle_distance = obstacles
            .iter()
            .map(|o| o.clearance(state.x, state.y))
            .fold(f64::INFINITY, f64::min);

        let u = out.input;
        trace.push(TraceRow {
            t,
            x: state.x,
            y: state.y,
            yaw: state.yaw,
            roll: state.roll,
            pitch: state.pitch,
            vx: state.vx,
            vy: state.vy,
            yaw_rate: state.yaw_rate,
            roll_rate: state.roll_rate,
            pitch_rate: state.pitch_rate,
            omega_fl: state.wheel_speed[0],
            omega_fr: state.wheel_speed[1],
            omega_rl: state.wheel_speed[2],
            omega_rr: state.wheel_speed[3],
            steer: state.steer,
            s0: projection.s,
            lateral_error: projection.offset,
            v_max_local,
            v_curvature,
            target_speed: out.target_speed,
            torque_fl: u.torque[0],
            torque_fr: u.torque[1],
            torque_rl: u.torque[2],
            torque_rr: u.torque[3],
            steer_cmd: u.steer_cmd,
            replan,
            sqp_iterations,
            degraded,
            stale: out.stale,
            active_obstacles,
            min_obstacle_distance: if obstacles.is_empty() { f64::NAN } else { min_obstacle_distance },
        });

        for _ in 0..plant_steps {
            state = step(&state, &u, &params, PLANT_STEP)?;
        }
        if !state.is_finite() || state.vx < 0.0 {
            completion = Completion::Aborted;
            diagnostic = Some(format!("vehicle state became invalid at t = {:.2} s", t + ctl_cfg.period));
            break;
        }
    }

    let metrics = compute_metrics(&trace, &replans, completion, ctl_cfg.period, !obstacles.is_empty(), &track);
    Ok(RunOutput {
        name: config.name.clone(),
        path,
        obstacles,
        trace,
        replans,
        plans,
        metrics,
        diagnostic,
        mu,
    })
}

fn compute_metrics(
    trace: &[TraceRow],
    replans: &[ReplanRecord],
    completion: Completion,
    period: f64,
    has_obstacles: bool,
    track: &RefPath,
) -> RunMetrics {
    let on_track: Vec<&TraceRow> = trace.iter().filter(|r| r.s0 <= track.track_length()).collect();
    let n = on_track.len().max(1) as f64;
    let rms_lateral_error = (on_track.iter().map(|r| r.lateral_error.powi(2)).sum::<f64>() / n).sqrt();
    let max_lateral_error = on_track.iter().map(|r| r.lateral_error.abs()).fold(0.0, f64::max);
    let average_speed = on_track.iter().map(|r| r.vx.hypot(r.vy)).sum::<f64>() / n;

    let min_obstacle_clearance = has_obstacles.then(|| {
        trace
            .iter()
            .map(|r| r.min_obstacle_distance)
            .fold(f64::INFINITY, f64::min)
    });
    let collision_ticks = trace.iter().filter(|r| r.min_obstacle_distance <= 0.0).count();

    let mut times: Vec<f64> = replans.iter().map(|r| r.wall_ms).collect();
    times.sort_by(f64::total_cmp);
    let median_solve_ms = match times.len() {
        0 => 0.0,
        m if m % 2 == 1 => times[m / 2],
        m => 0.5 * (times[m / 2 - 1] + times[m / 2]),
    };
    let max_solve_ms = times.last().copied().unwrap_or(0.0);
    let late_replan_fraction = if times.is_empty() {
        0.0
    } else {
        times.iter().filter(|t| **t > REPLAN_BUDGET_MS).count() as f64 / times.len() as f64
    };

    let max_speed_bound_ratio = trace
        .iter()
        .filter(|r| r.target_speed.is_finite() && r.v_curvature.is_finite())
        .map(|r| r.target_speed / r.v_curvature)
        .fold(0.0, f64::max);
    let max_steer_rate = trace
        .windows(2)
        .map(|w| (w[1].steer_cmd - w[0].steer_cmd).abs() / period)
        .fold(0.0, f64::max);

    let last = trace.last();
    RunMetrics {
        completion,
        rms_lateral_error,
        max_lateral_error,
        average_speed,
        min_obstacle_clearance,
        collision_ticks,
        max_solve_ms,
        median_solve_ms,
        late_replan_fraction,
        replans: replans.len(),
        degraded_replans: replans.iter().filter(|r| r.degraded).count(),
        stale_ticks: trace.iter().filter(|r| r.stale).count(),
        max_speed_bound_ratio,
        max_plan_speed_ratio: replans.iter().map(|r| r.plan_speed_ratio).fold(0.0, f64::max),
        max_steer_rate,
        max_sqp_iterations: replans.iter().map(|r| r.sqp_iterations).max().unwrap_or(0),
        final_time: last.map_or(0.0, |r| r.t),
        final_s: last.map_or(0.0, |r| r.s0),
    }
}
