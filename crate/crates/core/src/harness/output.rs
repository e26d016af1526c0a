use std::fs;
use std::path::Path;

use super::run::{run_scenario, Completion, RunMetrics, RunOutput, TraceRow};
use super::scenario::ScenarioConfig;
use crate::error::{Error, Result};
use crate::planner::IS;

/// Bin width of the arc-length aligned comparison series (m).
pub const ALIGN_BIN: f64 = 1.0;

fn completion_name(c: Completion) -> &'static str {
    match c {
        Completion::Completed => "completed",
        Completion::Timeout => "timeout",
        Completion::Aborted => "aborted",
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn flush<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trace(trace: &[TraceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in trace {
        w.serialize(row)?;
    }
    flush(w, path)
}

pub fn write_metrics(metrics: &RunMetrics, diagnostic: Option<&str>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    w.write_record(["completion", completion_name(metrics.completion)])?;
    for (name, value) in metrics.entries() {
        w.write_record([name, &value.to_string()])?;
    }
    if let Some(d) = diagnostic {
        w.write_record(["diagnostic", d])?;
    }
    flush(w, path)
}

/// Writes `trace.csv`, `metrics.csv`, `track.csv`, `obstacles.csv`,
/// `plans.csv` (when plans were kept) and the `plotdata/` series.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_trace(&out.trace, &dir.join("trace.csv"))?;
    write_metrics(&out.metrics, out.diagnostic.as_deref(), &dir.join("metrics.csv"))?;
    out.path.write_csv(dir.join("track.csv"))?;

    let path = dir.join("obstacles.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["s", "offset", "x", "y", "radius", "side"])?;
    for o in &out.obstacles {
        w.write_record([
            o.s.to_string(),
            o.offset.to_string(),
            o.center.0.to_string(),
            o.center.1.to_string(),
            o.radius.to_string(),
            format!("{:?}", o.side).to_lowercase(),
        ])?;
    }
    flush(w, &path)?;

    if !out.plans.is_empty() {
        write_plans(out, &dir.join("plans.csv"))?;
    }

    let plot = dir.join("plotdata");
    create_dir(&plot)?;
    let path = plot.join("speed_vs_s.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["s", "speed", "target_speed", "v_max_local", "v_curvature"])?;
    for r in &out.trace {
        w.write_record([r.s0, r.vx.hypot(r.vy), r.target_speed, r.v_max_local, r.v_curvature].map(|v| v.to_string()))?;
    }
    flush(w, &path)?;

    let path = plot.join("lateral_error_vs_s.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["s", "lateral_error"])?;
    for r in &out.trace {
        w.write_record([r.s0, r.lateral_error].map(|v| v.to_string()))?;
    }
    flush(w, &path)?;

    let path = plot.join("solve_time.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &out.replans {
        w.serialize(r)?;
    }
    flush(w, &path)
}

fn write_plans(out: &RunOutput, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "replan", "t0", "node", "x", "y", "psi", "vx", "vy", "vpsi", "s", "u0", "u1", "v_tol", "x_tol", "y_tol", "o_tol",
    ])?;
    for (i, plan) in out.plans.iter().enumerate() {
        let sol = &plan.solution;
        for (k, st) in sol.states.iter().enumerate() {
            let u = sol.controls.get(k).map_or([f64::NAN; 2], |u| [u[0], u[1]]);
            let tol = |v: &Vec<f64>| if k == 0 { f64::NAN } else { v[k - 1] };
            let o_tol = if k == 0 {
                f64::NAN
            } else {
                sol.o_tol.iter().map(|row| row[k - 1]).fold(0.0, f64::max)
            };
            let mut rec = vec![i.to_string(), plan.t0.to_string(), k.to_string()];
            let sv = st.to_vec();
            rec.extend([sv[0], sv[1], sv[2], sv[3], sv[4], sv[5], sv[IS]].map(|v| v.to_string()));
            rec.extend(
                [u[0], u[1], tol(&sol.v_tol), tol(&sol.x_tol), tol(&sol.y_tol), o_tol].map(|v| v.to_string()),
            );
            w.write_record(&rec)?;
        }
    }
    flush(w, path)
}

/// Mean lateral error and speed per arc-length bin; `NaN` where the run
/// has no samples.
pub fn aligned_series(trace: &[TraceRow], length: f64) -> Vec<(f64, f64, f64)> {
    let bins = (length / ALIGN_BIN).ceil().max(1.0) as usize;
    let mut acc = vec![(0.0, 0.0, 0usize); bins];
    for r in trace {
        if r.s0 < 0.0 {
            continue;
        }
        let b = (r.s0 / ALIGN_BIN) as usize;
        if b < bins {
            acc[b].0 += r.lateral_error;
            acc[b].1 += r.vx.hypot(r.vy);
            acc[b].2 += 1;
        }
    }
    acc.iter()
        .enumerate()
        .map(|(i, &(e, v, n))| {
            let s = (i as f64 + 0.5) * ALIGN_BIN;
            if n == 0 {
                (s, f64::NAN, f64::NAN)
            } else {
                (s, e / n as f64, v / n as f64)
            }
        })
        .collect()
}

/// Two runs of scenarios sharing track and obstacles.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub a: RunOutput,
    pub b: RunOutput,
}

impl Comparison {
    /// `(metric, a, b, b - a)` rows.
    pub fn deltas(&self) -> Vec<(&'static str, f64, f64, f64)> {
        self.a
            .metrics
            .entries()
            .into_iter()
            .zip(self.b.metrics.entries())
            .map(|((name, a), (_, b))| (name, a, b, b - a))
            .collect()
    }
}

/// Runs both scenarios one after the other so that solve times are not
/// disturbed by each other.
pub fn compare(a: &ScenarioConfig, b: &ScenarioConfig) -> Result<Comparison> {
    if a.segments() != b.segments() || a.obstacles != b.obstacles {
        return Err(Error::InvalidParameter("compared scenarios must share track and obstacles".into()));
    }
    Ok(Comparison {
        a: run_scenario(a)?,
        b: run_scenario(b)?,
    })
}

/// Writes each run to `a/` and `b/`, the metric table to `compare.csv` and
/// the arc-length aligned series to `plotdata/aligned.csv`.
pub fn write_comparison(cmp: &Comparison, dir: &Path) -> Result<()> {
    write_run(&cmp.a, &dir.join("a"))?;
    write_run(&cmp.b, &dir.join("b"))?;

    let path = dir.join("compare.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["metric", "a", "b", "delta"])?;
    w.write_record(["scenario", &cmp.a.name, &cmp.b.name, ""])?;
    w.write_record([
        "completion",
        completion_name(cmp.a.metrics.completion),
        completion_name(cmp.b.metrics.completion),
        "",
    ])?;
    for (name, a, b, d) in cmp.deltas() {
        w.write_record([name.to_string(), a.to_string(), b.to_string(), d.to_string()])?;
    }
    flush(w, &path)?;

    let plot = dir.join("plotdata");
    create_dir(&plot)?;
    let length = cmp.a.path.track_length();
    let path = plot.join("aligned.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["s", "lateral_error_a", "lateral_error_b", "speed_a", "speed_b"])?;
    for ((s, ea, va), (_, eb, vb)) in aligned_series(&cmp.a.trace, length)
        .into_iter()
        .zip(aligned_series(&cmp.b.trace, length))
    {
        w.write_record([s, ea, eb, va, vb].map(|v| v.to_string()))?;
    }
    flush(w, &path)
}
