use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::qp::{qp_solve, QpSubproblem};
use crate::planner::{ControlBounds, ControlVec, MpcProblem, MpcSolution, SolveStats, Termination, NU};

/// Steps below this infinity norm count as converged.
pub const STEP_TOLERANCE: f64 = 1e-8;
/// Levenberg increases tried before giving up on an iteration.
pub const MAX_LEVENBERG_RETRIES: usize = 3;
/// Tangent lines of the polygon circumscribing the ellipse.
const ELLIPSE_FACETS: usize = 8;

fn control_rows(bounds: &ControlBounds, u: &ControlVec, rows: &mut Vec<([f64; 2], f64)>) {
    let mut push = |n: [f64; 2], b: f64| rows.push((n, b - n[0] * u[0] - n[1] * u[1]));
    if bounds.u0.1.is_finite() {
        push([1.0, 0.0], bounds.u0.1);
    }
    if bounds.u0.0.is_finite() {
        push([-1.0, 0.0], -bounds.u0.0);
    }
    if bounds.u1.1.is_finite() {
        push([0.0, 1.0], bounds.u1.1);
    }
    if bounds.u1.0.is_finite() {
        push([0.0, -1.0], -bounds.u1.0);
    }
    for (n, b) in &bounds.half_planes {
        push(*n, *b);
    }
    if let Some((a, b)) = bounds.ellipse {
        for i in 0..ELLIPSE_FACETS {
            let th = i as f64 * std::f64::consts::TAU / ELLIPSE_FACETS as f64;
            push([th.cos() / a, th.sin() / b], 1.0);
        }
        let rho = bounds.ellipse_ratio(u);
        if rho > 1e-6 {
            let q = u / rho;
            let n = [q[0] / (a * a), q[1] / (b * b)];
            push(n, n[0] * q[0] + n[1] * q[1]);
        }
    }
}

struct Subproblem {
    qp: QpSubproblem,
    /// Hessian without the Levenberg shift.
    hessian: DMatrix<f64>,
}

fn build_subproblem(problem: &MpcProblem, controls: &[ControlVec]) -> (Subproblem, f64) {
    let lin = problem.linearize(controls);
    let nu = problem.n_controls();
    let k = problem.steps();
    let n_obs = problem.obstacles.len();
    let nz = nu + n_obs * k;
    let w_o = problem.config.w_o;

    let jt = lin.jacobian.transpose();
    let r = DVector::from_vec(lin.residuals.clone());
    let mut h = DMatrix::zeros(nz, nz);
    h.view_mut((0, 0), (nu, nu)).copy_from(&(2.0 * &jt * &lin.jacobian));
    let mut c = DVector::zeros(nz);
    c.rows_mut(0, nu).copy_from(&(2.0 * &jt * &r));
    let m = problem.obstacle_samples();
    let slacks = problem.obstacle_slacks(&lin.obstacle_values);
    for o in 0..n_obs {
        for step in 0..k {
            let idx = nu + o * k + step;
            h[(idx, idx)] = 2.0 * w_o.max(1e-9);
            c[idx] = 2.0 * w_o * slacks[o][step];
        }
    }

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut local = Vec::new();
    for (step, u) in controls.iter().enumerate() {
        local.clear();
        control_rows(&problem.bounds, u, &mut local);
        for (n, b) in &local {
            rows.push((vec![(NU * step, n[0]), (NU * step + 1, n[1])], *b));
        }
    }
    for o in 0..n_obs {
        for step in 0..k {
            let idx = nu + o * k + step;
            let slack = slacks[o][step];
            for j in step * m..(step + 1) * m {
                // slack + d_slack >= p + grad . d_u
                let p = lin.obstacle_values[o][j];
                let mut entries: Vec<(usize, f64)> = lin.obstacle_gradients[o][j]
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| **g != 0.0)
                    .map(|(i, g)| (i, *g))
                    .collect();
                entries.push((idx, -1.0));
                rows.push((entries, slack - p));
            }
            rows.push((vec![(idx, -1.0)], slack));
        }
    }
    let mut a = DMatrix::zeros(rows.len(), nz);
    let mut b = DVector::zeros(rows.len());
    for (i, (entries, rhs)) in rows.iter().enumerate() {
        for &(col, v) in entries {
            a[(i, col)] = v;
        }
        b[i] = *rhs;
    }
    let objective = problem.objective_of(&lin.states, controls);
    (
        Subproblem {
            qp: QpSubproblem::new(h.clone(), c).with_inequalities(a, b),
            hessian: h,
        },
        objective,
    )
}

fn apply_step(problem: &MpcProblem, controls: &[ControlVec], dz: &DVector<f64>) -> Vec<ControlVec> {
    controls
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let next = u + ControlVec::from([dz[NU * k], dz[NU * k + 1]]);
            problem.bounds.pull_inside(&next)
        })
        .collect()
}

/// Gauss-Newton SQP with a Levenberg safeguard. `guess` is made admissible
/// before the first iteration.
pub fn sqp_solve(problem: &MpcProblem, guess: &[ControlVec], max_iterations: usize) -> MpcSolution {
    let start = Instant::now();
    let k = problem.steps();
    let mut controls: Vec<ControlVec> = (0..k)
        .map(|i| {
            let u = guess.get(i).copied().unwrap_or_else(ControlVec::zeros);
            problem.bounds.pull_inside(&u)
        })
        .collect();
    let mut stats = SolveStats {
        sqp_iterations: 0,
        qp_iterations: 0,
        kkt_residual: f64::INFINITY,
        wall_ms: 0.0,
        termination: Termination::IterationCap,
    };
    let mut degraded = false;
    let mut lambda = 0.0;

    'iterations: while stats.sqp_iterations < max_iterations {
        stats.sqp_iterations += 1;
        let (sub, objective) = build_subproblem(problem, &controls);
        let base_scale = sub.hessian.diagonal().amax().max(1.0);
        let mut last_error = false;
        for attempt in 0..=MAX_LEVENBERG_RETRIES {
            let mut qp = sub.qp.clone();
            for i in 0..qp.g.nrows() {
                qp.g[(i, i)] += lambda;
            }
            match qp_solve(&qp) {
                Ok(sol) => {
                    last_error = false;
                    stats.qp_iterations += sol.iterations;
                    let step = sol.x.amax();
                    if attempt == 0 {
                        stats.kkt_residual = (&sub.hessian * &sol.x).amax();
                    }
                    if step <= STEP_TOLERANCE {
                        stats.kkt_residual = (&sub.hessian * &sol.x).amax();
                        stats.termination = Termination::KktTolerance;
                        break 'iterations;
                    }
                    let candidate = apply_step(problem, &controls, &sol.x);
                    let value = problem.objective(&candidate);
                    if value.is_finite() && value <= objective {
                        controls = candidate;
                        lambda *= 0.1;
                        if lambda < 1e-10 * base_scale {
                            lambda = 0.0;
                        }
                        continue 'iterations;
                    }
                }
                Err(_) => last_error = true,
            }
            lambda = if lambda == 0.0 { 1e-4 * base_scale } else { 10.0 * lambda };
        }
        if last_error {
            stats.termination = Termination::NumericalFailure;
            degraded = true;
        } else {
            stats.termination = Termination::Stalled;
        }
        break;
    }
    stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    MpcSolution::from_controls(problem, controls, stats, degraded)
}

/// Largest relative discrepancy between the analytic residual and obstacle
/// Jacobians and central finite differences.
pub fn gradient_check(problem: &MpcProblem, controls: &[ControlVec]) -> f64 {
    let lin = problem.linearize(controls);
    let nu = problem.n_controls();
    let mut worst: f64 = 0.0;
    let mut compare = |analytic: f64, fd: f64| {
        let scale = analytic.abs().max(fd.abs()).max(1.0);
        worst = worst.max((analytic - fd).abs() / scale);
    };
    for col in 0..nu {
        let (k, j) = (col / NU, col % NU);
        let e = 1e-6 * controls[k][j].abs().max(1.0);
        let mut plus = controls.to_vec();
        let mut minus = controls.to_vec();
        plus[k][j] += e;
        minus[k][j] -= e;
        let (sp, sm) = (problem.rollout(&plus), problem.rollout(&minus));
        let rp = problem.residuals(&sp, &plus);
        let rm = problem.residuals(&sm, &minus);
        for row in 0..rp.len() {
            compare(lin.jacobian[(row, col)], (rp[row] - rm[row]) / (2.0 * e));
        }
        let (op, om) = (problem.obstacle_values(&sp), problem.obstacle_values(&sm));
        for o in 0..problem.obstacles.len() {
            for j in 0..op[o].len() {
                compare(lin.obstacle_gradients[o][j][col], (op[o][j] - om[o][j]) / (2.0 * e));
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::EnvelopeFit;
    use crate::planner::{build_problem, MpcConfig, PlanModel, PlannerState, IVX};
    use crate::track::{build_parabola, PathWindow, RefPath, Segment};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight_window(heading: f64, origin: (f64, f64)) -> PathWindow {
        let path = RefPath::from_segments(&[Segment::Straight { length: 200.0 }], origin.0, origin.1, heading).unwrap();
        PathWindow::fit(&path, 0.0, 60.0).unwrap()
    }

    fn unconstrained(mut problem: crate::planner::MpcProblem) -> crate::planner::MpcProblem {
        problem.bounds = ControlBounds {
            u0: (-1e6, 1e6),
            u1: (-1e6, 1e6),
            ellipse: None,
            half_planes: Vec::new(),
        };
        problem
    }

    fn straight_problem(v0: f64, v_ref: f64) -> crate::planner::MpcProblem {
        let xi0 = PlannerState {
            vx: v0,
            ..Default::default()
        };
        let mut p = build_problem(
            PlanModel::Proposed { gamma: 0.0 },
            &xi0,
            straight_window(0.0, (0.0, 0.0)),
            &EnvelopeFit::reference(),
            0.5,
            Vec::new(),
            MpcConfig::default(),
        );
        p.v_ref = v_ref;
        p
    }

    /// Closed-form optimum of the speed-tracking least squares: the X
    /// residual vanishes identically on a straight aligned with the axis.
    fn speed_ls_oracle(p: &crate::planner::MpcProblem) -> Vec<f64> {
        let k = p.steps();
        let h = p.config.h;
        let (wv, wu) = (p.config.w_v.sqrt(), p.config.w_u.sqrt());
        let mut a = DMatrix::zeros(2 * k, k);
        let mut b = DVector::zeros(2 * k);
        for i in 0..k {
            for j in 0..=i {
                a[(i, j)] = wv * h;
            }
            b[i] = wv * (p.v_ref - p.x0[IVX]);
            a[(k + i, i)] = wu;
        }
        let ata = a.transpose() * &a;
        let atb = a.transpose() * b;
        ata.cholesky().unwrap().solve(&atb).iter().copied().collect()
    }

    #[test]
    fn matches_least_squares_oracle_in_one_iteration() {
        let p = unconstrained(straight_problem(10.0, 13.0));
        let oracle = speed_ls_oracle(&p);
        let sol = sqp_solve(&p, &vec![ControlVec::zeros(); p.steps()], 1);
        for (k, u) in sol.controls.iter().enumerate() {
            assert!((u[0] - oracle[k]).abs() < 1e-6, "step {k}: {} vs {}", u[0], oracle[k]);
            assert!(u[1].abs() < 1e-9);
        }
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let p = unconstrained(straight_problem(10.0, 13.0));
        let first = sqp_solve(&p, &vec![ControlVec::zeros(); p.steps()], 5);
        let again = sqp_solve(&p, &first.controls, 5);
        assert_eq!(again.stats.sqp_iterations, 1);
        assert_eq!(again.stats.termination, Termination::KktTolerance);
        assert!(again.stats.kkt_residual < 1e-6);
    }

    #[test]
    fn accelerates_at_the_limit_from_rest_on_a_straight() {
        let p = straight_problem(0.0, 14.0);
        let ax_max = EnvelopeFit::reference().ax_max(0.0);
        let sol = sqp_solve(&p, &vec![ControlVec::zeros(); p.steps()], 5);
        let u = sol.controls[0][0];
        assert!(u >= 0.8 * ax_max && u <= ax_max + 1e-9, "u_x {u}, ax_max {ax_max}");
        assert!(sol.controls[0][1].abs() <= 0.1);
        assert!(sol.controls.iter().all(|u| p.bounds.violation(u) <= 1e-9));
    }

    fn grid_problem() -> crate::planner::MpcProblem {
        let config = MpcConfig {
            h: 0.4,
            steps: 2,
            ..MpcConfig::default()
        };
        let xi0 = PlannerState {
            vx: 10.0,
            ..Default::default()
        };
        let obstacle = build_parabola((8.0, 1.5), 0.5, 1.2, (0.0, -1.0));
        let mut p = build_problem(
            PlanModel::Proposed { gamma: 0.3 },
            &xi0,
            straight_window(0.0, (0.0, 0.0)),
            &EnvelopeFit::reference(),
            0.5,
            vec![obstacle],
            config,
        );
        p.v_ref = 10.0;
        p
    }

    #[test]
    fn two_step_problem_matches_grid_search() {
        let p = grid_problem();
        let sol = sqp_solve(&p, &[ControlVec::zeros(); 2], 30);
        let mut free = p.clone();
        free.obstacles.clear();
        assert!(sqp_solve(&free, &[ControlVec::zeros(); 2], 30).objective < sol.objective - 0.1);
        let admissible = |u: &[ControlVec]| u.iter().all(|u| p.bounds.violation(u) <= 0.0);
        assert!(admissible(&sol.controls));

        let eval = |z: &[f64; 4]| {
            let u = [ControlVec::from([z[0], z[1]]), ControlVec::from([z[2], z[3]])];
            if admissible(&u) {
                p.objective(&u)
            } else {
                f64::INFINITY
            }
        };
        let mut best = [0.0; 4];
        let mut best_value = eval(&best);
        let coarse: Vec<f64> = (-10..=10).map(|i| i as f64).collect();
        for &a in &coarse {
            for &b in &coarse {
                for &c in &coarse {
                    for &d in &coarse {
                        let z = [a, b, c, d];
                        let v = eval(&z);
                        if v < best_value {
                            best_value = v;
                            best = z;
                        }
                    }
                }
            }
        }
        for step in [0.25, 0.05] {
            loop {
                let mut improved = false;
                for i in 0..4 {
                    for sign in [-1.0, 1.0] {
                        let mut z = best;
                        z[i] += sign * step;
                        let v = eval(&z);
                        if v < best_value - 1e-12 {
                            best_value = v;
                            best = z;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
        }
        assert!(
            sol.objective <= best_value + 1e-3,
            "sqp {} vs grid {} at {:?}",
            sol.objective,
            best_value,
            best
        );
    }

    #[test]
    fn invariant_under_rigid_motion_of_the_scene() {
        let base = straight_problem(10.0, 12.0);
        let base_sol = sqp_solve(&base, &vec![ControlVec::zeros(); base.steps()], 5);
        let (heading, origin) = (0.7, (35.0, -12.0));
        let xi0 = PlannerState {
            x: origin.0,
            y: origin.1,
            psi: heading,
            vx: 10.0,
            ..Default::default()
        };
        let mut moved = build_problem(
            PlanModel::Proposed { gamma: 0.0 },
            &xi0,
            straight_window(heading, origin),
            &EnvelopeFit::reference(),
            0.5,
            Vec::new(),
            MpcConfig::default(),
        );
        moved.v_ref = 12.0;
        let moved_sol = sqp_solve(&moved, &vec![ControlVec::zeros(); moved.steps()], 5);
        for (a, b) in base_sol.controls.iter().zip(&moved_sol.controls) {
            assert!((a - b).amax() < 1e-6);
        }
        assert!((base_sol.objective - moved_sol.objective).abs() < 1e-6);
    }

    #[test]
    fn warm_repeat_solve_is_cheap() {
        let p = grid_problem();
        let first = sqp_solve(&p, &[ControlVec::zeros(); 2], 30);
        let again = sqp_solve(&p, &first.controls, 30);
        assert!(again.stats.sqp_iterations <= 2, "{:?}", again.stats);
        assert!((again.objective - first.objective).abs() <= 1e-4);
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let path = RefPath::reference_track();
        for model in [PlanModel::Proposed { gamma: 0.5 }, PlanModel::Kinematic { lf: 1.2, lr: 1.4 }] {
            for _ in 0..5 {
                let s0 = rng.random_range(0.0..300.0);
                let pt = path.point_at(s0);
                let xi0 = PlannerState {
                    x: pt.x + rng.random_range(-0.5..0.5),
                    y: pt.y + rng.random_range(-0.5..0.5),
                    psi: pt.heading + rng.random_range(-0.1..0.1),
                    vx: rng.random_range(8.0..20.0),
                    s: s0,
                    ..Default::default()
                };
                let window = PathWindow::fit(&path, s0, 40.0).unwrap();
                let obstacle = build_parabola((pt.x + 10.0 * pt.heading.cos(), pt.y + 10.0 * pt.heading.sin()), 0.5, 1.2, (0.0, 1.0));
                let p = build_problem(model, &xi0, window, &EnvelopeFit::reference(), 0.5, vec![obstacle], MpcConfig::default());
                let controls: Vec<ControlVec> = (0..p.steps())
                    .map(|_| p.bounds.pull_inside(&ControlVec::from([rng.random_range(-3.0..3.0), rng.random_range(-0.3..0.3)])))
                    .collect();
                let err = gradient_check(&p, &controls);
                assert!(err <= 1e-4, "{model:?}: {err}");
            }
        }
    }
}
