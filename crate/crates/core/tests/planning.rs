use std::path::PathBuf;

use limitdrive::dynamics::{VehicleParams, VehicleState};
use limitdrive::envelope::EnvelopeFit;
use limitdrive::planner::{ModelKind, MpcConfig, Plan, Planner, IS};
use limitdrive::track::{Obstacle, ObstacleSpec, RefPath};
use proptest::prelude::*;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn setup(kind: ModelKind) -> (Planner, VehicleParams, RefPath) {
    let params = VehicleParams::from_file(configs().join("vehicle.toml")).unwrap();
    let fit = EnvelopeFit::from_file(configs().join("envelope.cfg")).unwrap();
    let config = match kind {
        ModelKind::Proposed => MpcConfig::default(),
        ModelKind::Kinematic => MpcConfig::kinematic(),
    };
    let planner = Planner::new(kind, config, fit, params.clone(), params.mu);
    (planner, params, RefPath::reference_track().with_runout(100.0))
}

fn state_on(path: &RefPath, s: f64, offset: f64, v: f64, params: &VehicleParams) -> VehicleState {
    let p = path.point_at(s);
    let (sn, cs) = p.heading.sin_cos();
    VehicleState::rolling(p.x - offset * sn, p.y + offset * cs, p.heading, v, 0.0, params)
}

fn check_plan(plan: &Plan, fit: &EnvelopeFit, kind: ModelKind, steer_max: f64) {
    let sol = &plan.solution;
    assert_eq!(sol.states.len(), sol.controls.len() + 1);
    assert!(sol.dynamics_residual() <= 1e-6, "{}", sol.dynamics_residual());
    for (k, u) in sol.controls.iter().enumerate() {
        let x = sol.states[k].to_vec();
        let next = sol.model.step(&x, u, sol.h);
        let err = (next - sol.states[k + 1].to_vec()).amax();
        assert!(err <= 1e-6, "step {k}: {err}");
        match kind {
            ModelKind::Proposed => {
                let v = fit.violation(sol.states[0].vx, u[0], u[1]);
                assert!(v <= 1e-6, "step {k}: envelope violation {v}");
            }
            ModelKind::Kinematic => {
                let v0 = sol.states[0].vx;
                assert!(u[0] >= fit.ax_min(v0) - 1e-6 && u[0] <= fit.ax_max(v0) + 1e-6);
                assert!(u[1].abs() <= steer_max + 1e-9);
            }
        }
    }
    let slacks = sol.v_tol.iter().chain(&sol.x_tol).chain(&sol.y_tol).chain(sol.o_tol.iter().flatten());
    assert!(slacks.clone().all(|v| *v >= 0.0 && v.is_finite()));
    for w in sol.states.windows(2) {
        assert!(w[1].to_vec()[IS] >= w[0].to_vec()[IS] - 1e-9);
    }
}

#[test]
fn plans_on_the_track_are_consistent() {
    for kind in [ModelKind::Proposed, ModelKind::Kinematic] {
        let (mut planner, params, path) = setup(kind);
        let fit = EnvelopeFit::from_file(configs().join("envelope.cfg")).unwrap();
        for (s, offset, v) in [(5.0, 0.0, 10.0), (70.0, 0.4, 12.0), (200.0, -0.5, 25.0), (330.0, 0.2, 15.0)] {
            planner.reset();
            let plan = planner.plan(0.0, &state_on(&path, s, offset, v, &params), &path, &[]).unwrap();
            check_plan(&plan, &fit, kind, params.steer_max);
            assert_eq!(plan.obstacles_considered, 0);
        }
    }
}

#[test]
fn plan_steers_around_an_obstacle_ahead() {
    let (mut planner, params, path) = setup(ModelKind::Proposed);
    let spec = ObstacleSpec {
        s: 30.0,
        offset: 0.0,
        radius: 1.0,
        side: None,
    };
    let obstacle = Obstacle::place(&path, &spec).unwrap();
    let plan = planner
        .plan(0.0, &state_on(&path, 5.0, 0.0, 10.0, &params), &path, &[obstacle])
        .unwrap();
    assert_eq!(plan.obstacles_considered, 1);
    let closest = plan
        .solution
        .states
        .windows(2)
        .flat_map(|w| (0..=10).map(move |i| (w[0], w[1], i as f64 / 10.0)))
        .map(|(a, b, f)| obstacle.clearance(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)))
        .fold(f64::INFINITY, f64::min);
    assert!(closest > 0.0, "planned clearance {closest}");
}

#[test]
fn replanning_from_the_planned_state_is_warm_and_close() {
    let (mut planner, params, path) = setup(ModelKind::Proposed);
    let start = state_on(&path, 10.0, 0.0, 12.0, &params);
    let first = planner.plan(0.0, &start, &path, &[]).unwrap();
    let next = first.solution.state_at(0.1);
    let mut state = start;
    state.x = next.x;
    state.y = next.y;
    state.yaw = next.psi;
    state.vx = next.vx;
    state.vy = next.vy;
    state.yaw_rate = next.vpsi;
    let second = planner.plan(0.1, &state, &path, &[]).unwrap();
    assert!(second.solution.stats.sqp_iterations <= first.solution.stats.sqp_iterations.max(1) + 1);
    let a = first.solution.state_at(1.0);
    let b = second.solution.state_at(0.9);
    assert!((a.x - b.x).hypot(a.y - b.y) < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_starts_give_admissible_plans(
        s in 0.0f64..450.0,
        offset in -1.0f64..1.0,
        v in 8.0f64..30.0,
        kinematic in any::<bool>(),
    ) {
        let kind = if kinematic { ModelKind::Kinematic } else { ModelKind::Proposed };
        let (mut planner, params, path) = setup(kind);
        let fit = EnvelopeFit::from_file(configs().join("envelope.cfg")).unwrap();
        let plan = planner.plan(0.0, &state_on(&path, s, offset, v, &params), &path, &[]).unwrap();
        check_plan(&plan, &fit, kind, params.steer_max);
        prop_assert!(plan.solution.objective.is_finite());
    }
}
