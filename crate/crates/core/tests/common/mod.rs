#![allow(dead_code)]

use std::path::PathBuf;

use limitdrive::dynamics::{state_derivative, step, tire_states, ControlInput, VehicleParams, VehicleState};
use limitdrive::envelope::EnvelopeFit;
use limitdrive::planner::{build_problem, ControlVec, MpcConfig, MpcProblem, PlanModel, PlannerState};
use limitdrive::solver::QpSubproblem;
use limitdrive::track::{build_parabola, PathWindow, RefPath, Segment};
use limitdrive::GRAVITY;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn params() -> VehicleParams {
    VehicleParams::from_file(configs().join("vehicle.toml")).unwrap()
}

/// Piecewise-constant random inputs, one per 0.2 s.
pub fn random_inputs(p: &VehicleParams, rng: &mut ChaCha8Rng, pieces: usize) -> Vec<ControlInput> {
    (0..pieces)
        .map(|_| ControlInput {
            torque: std::array::from_fn(|_| rng.random_range(p.torque_min..=p.torque_max)),
            steer_cmd: rng.random_range(-p.steer_max..=p.steer_max),
        })
        .collect()
}

/// Worst friction-circle ratio `|F_w| / (mu F_z)`, smallest normal load and
/// worst quasi-static load-sum error over random 2 s maneuvers.
pub fn tire_properties(p: &VehicleParams, seed: u64, maneuvers: usize) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = p.mass * GRAVITY;
    let (mut ratio, mut min_fz, mut load_err) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..maneuvers {
        let v0 = rng.random_range(5.0..30.0);
        let mut s = VehicleState::rolling(0.0, 0.0, 0.0, v0, 0.0, p);
        for u in random_inputs(p, &mut rng, 10) {
            for _ in 0..200 {
                s = step(&s, &u, p, 0.001).unwrap();
                if !s.is_finite() || s.vx < 1.0 {
                    break;
                }
                let tires = tire_states(&s, p);
                let mut sum = 0.0;
                for t in &tires {
                    min_fz = min_fz.min(t.fz);
                    sum += t.fz;
                    if t.fz > 0.0 {
                        ratio = ratio.max(t.fx_wheel.hypot(t.fy_wheel) / (p.mu * t.fz));
                    }
                }
                let d = state_derivative(&s, &u, p);
                if d.roll_rate.abs() < 0.1 && d.pitch_rate.abs() < 0.1 {
                    load_err = load_err.max((sum - weight).abs() / weight);
                }
            }
        }
    }
    (ratio, min_fz, load_err)
}

fn run(p: &VehicleParams, start: VehicleState, inputs: &[ControlInput], dt: f64, duration: f64) -> VehicleState {
    let n = (duration / dt).round() as usize;
    let per = n / inputs.len();
    let mut s = start;
    for k in 0..n {
        s = step(&s, &inputs[(k / per).min(inputs.len() - 1)], p, dt).unwrap();
    }
    s
}

/// Largest pose difference between a random 1 s maneuver mirrored after the
/// fact and the same maneuver driven with mirrored inputs.
pub fn mirror_error(p: &VehicleParams, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = random_inputs(p, &mut rng, 5);
    let mirrored: Vec<ControlInput> = inputs.iter().map(|u| u.mirrored()).collect();
    let start = VehicleState::rolling(0.0, 0.0, 0.0, 15.0, 0.0, p);
    let a = run(p, start, &inputs, 0.001, 1.0).mirrored();
    let b = run(p, start, &mirrored, 0.001, 1.0);
    let (a, b) = (a.to_array(), b.to_array());
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Observed integration order from position errors at 2, 1 and 0.5 ms.
pub fn rk4_order(p: &VehicleParams) -> f64 {
    let mut start = VehicleState::rolling(0.0, 0.0, 0.0, 15.0, 0.0, p);
    start.steer = 0.05;
    let u = [ControlInput::even(400.0, 0.05)];
    let pos = |dt: f64| {
        let s = run(p, start, &u, dt, 1.0);
        (s.x, s.y)
    };
    let (a, b, c) = (pos(0.002), pos(0.001), pos(0.0005));
    let e1 = (a.0 - b.0).hypot(a.1 - b.1);
    let e2 = (b.0 - c.0).hypot(b.1 - c.1);
    (e1 / e2).log2()
}

/// Largest |v_y| and |yaw rate| while coasting straight for 5 s.
pub fn coast_drift(p: &VehicleParams) -> f64 {
    let mut s = VehicleState::rolling(0.0, 0.0, 0.0, 20.0, 0.0, p);
    let u = ControlInput::default();
    let mut worst: f64 = 0.0;
    for _ in 0..5000 {
        s = step(&s, &u, p, 0.001).unwrap();
        worst = worst.max(s.vy.abs()).max(s.yaw_rate.abs());
    }
    worst
}

/// Strictly convex QP with a feasible random inequality set.
pub fn random_qp(rng: &mut ChaCha8Rng) -> QpSubproblem {
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=8);
    let mm = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let g = &mm * mm.transpose() + DMatrix::identity(n, n) * 0.1;
    let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * &x0 + DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
    QpSubproblem::new(g, c).with_inequalities(a, b)
}

/// QP optimum by trying every active set.
pub fn enumerate_qp(qp: &QpSubproblem) -> Option<DVector<f64>> {
    let n = qp.c.len();
    let m = qp.b_in.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > n {
            continue;
        }
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.g);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&qp.c));
        for (j, &i) in rows.iter().enumerate() {
            for col in 0..n {
                kkt[(n + j, col)] = qp.a_in[(i, col)];
                kkt[(col, n + j)] = qp.a_in[(i, col)];
            }
            rhs[n + j] = qp.b_in[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let feasible = (&qp.a_in * &x - &qp.b_in).iter().all(|v| *v <= 1e-9);
        let dual_ok = (0..k).all(|j| sol[n + j] >= -1e-9);
        if feasible && dual_ok {
            let f = qp.objective(&x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
    }
    best.map(|(_, x)| x)
}

/// Random planning instance on the reference track with one obstacle ahead
/// and admissible random controls.
pub fn random_iterate(rng: &mut ChaCha8Rng, model: PlanModel) -> (MpcProblem, Vec<ControlVec>) {
    let path = RefPath::reference_track();
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
    let ahead = rng.random_range(5.0..20.0);
    let center = (pt.x + ahead * pt.heading.cos(), pt.y + ahead * pt.heading.sin());
    let obstacle = build_parabola(center, 0.5, 1.2, (-pt.heading.sin(), pt.heading.cos()));
    let p = build_problem(model, &xi0, window, &EnvelopeFit::reference(), 0.5, vec![obstacle], MpcConfig::default());
    let controls = (0..p.steps())
        .map(|_| p.bounds.pull_inside(&ControlVec::from([rng.random_range(-3.0..3.0), rng.random_range(-0.3..0.3)])))
        .collect();
    (p, controls)
}

/// Two-step instance whose obstacle intrudes into the lane.
pub fn grid_problem() -> MpcProblem {
    let config = MpcConfig {
        h: 0.4,
        steps: 2,
        ..MpcConfig::default()
    };
    let xi0 = PlannerState {
        vx: 10.0,
        ..Default::default()
    };
    let path = RefPath::from_segments(&[Segment::Straight { length: 200.0 }], 0.0, 0.0, 0.0).unwrap();
    let window = PathWindow::fit(&path, 0.0, 60.0).unwrap();
    let obstacle = build_parabola((8.0, 1.5), 0.5, 1.2, (0.0, -1.0));
    let mut p = build_problem(
        PlanModel::Proposed { gamma: 0.3 },
        &xi0,
        window,
        &EnvelopeFit::reference(),
        0.5,
        vec![obstacle],
        config,
    );
    p.v_ref = 10.0;
    p
}

/// Best admissible objective of a two-step problem: integer grid over
/// [-10, 10]⁴, then pattern search at 0.25 and 0.05.
pub fn grid_search(p: &MpcProblem) -> f64 {
    let admissible = |u: &[ControlVec]| u.iter().all(|u| p.bounds.violation(u) <= 0.0);
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
    for a in -10..=10 {
        for b in -10..=10 {
            for c in -10..=10 {
                for d in -10..=10 {
                    let z = [a as f64, b as f64, c as f64, d as f64];
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
    best_value
}
