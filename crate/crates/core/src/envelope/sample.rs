use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{step, ControlInput, VehicleParams, VehicleState};
use crate::error::{Error, Result};

/// Speeds of the identification grid (m/s).
pub const SPEED_GRID: [f64; 6] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
/// Integration horizon of one sample (s).
pub const SAMPLE_DURATION: f64 = 0.1;
pub const SAMPLE_DT: f64 = 0.001;
/// Initial lateral speed is drawn within this fraction of the longitudinal one.
pub const LATERAL_SPEED_FRACTION: f64 = 0.2;
/// Wheel speeds above this multiple of the free-rolling speed reject a sample.
pub const WHEEL_SPEED_LIMIT: f64 = 5.0;

/// Averaged body accelerations of one open-loop simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub vx0: f64,
    pub vy0: f64,
    pub ax: f64,
    pub ay: f64,
    pub apsi: f64,
}

#[derive(Debug, Clone)]
pub struct SampleSet {
    pub vx0: f64,
    pub samples: Vec<AccelSample>,
    pub rejected: usize,
}

impl SampleSet {
    pub fn rejection_rate(&self) -> f64 {
        let total = self.samples.len() + self.rejected;
        if total == 0 {
            0.0
        } else {
            self.rejected as f64 / total as f64
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_seed(seed: u64, vx0: f64, index: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(vx0.to_bits())) ^ index as u64)
}

/// One random open-loop simulation. `None` when the run diverged.
pub fn simulate_sample(params: &VehicleParams, vx0: f64, rng: &mut impl Rng) -> Option<AccelSample> {
    let mut torque = [0.0; 4];
    for t in &mut torque {
        *t = rng.random_range(params.torque_min..=params.torque_max);
    }
    let steer = rng.random_range(-params.steer_max..=params.steer_max);
    let vy0 = rng.random_range(-LATERAL_SPEED_FRACTION..=LATERAL_SPEED_FRACTION) * vx0;

    let mut s = VehicleState::rolling(0.0, 0.0, 0.0, vx0, vy0, params);
    s.steer = steer;
    let u = ControlInput { torque, steer_cmd: steer };
    let omega_limit = WHEEL_SPEED_LIMIT * vx0 / params.wheel_radius;
    let start = s;
    let n = (SAMPLE_DURATION / SAMPLE_DT).round() as usize;
    let (mut sum_ax, mut sum_ay) = (0.0, 0.0);
    for _ in 0..n {
        let next = step(&s, &u, params, SAMPLE_DT).ok()?;
        if !next.is_finite() || next.wheel_speed.iter().any(|w| w.abs() > omega_limit) {
            return None;
        }
        let rate = 0.5 * (s.yaw_rate + next.yaw_rate);
        let vx = 0.5 * (s.vx + next.vx);
        let vy = 0.5 * (s.vy + next.vy);
        sum_ax += (next.vx - s.vx) / SAMPLE_DT - rate * vy;
        sum_ay += (next.vy - s.vy) / SAMPLE_DT + rate * vx;
        s = next;
    }
    Some(AccelSample {
        vx0,
        vy0,
        ax: sum_ax / n as f64,
        ay: sum_ay / n as f64,
        apsi: (s.yaw_rate - start.yaw_rate) / SAMPLE_DURATION,
    })
}

/// Draws `n` accepted samples at initial speed `vx0`.
///
/// Each draw has its own seed so the result is independent of thread count.
pub fn sample_envelope(params: &VehicleParams, vx0: f64, n: usize, seed: u64) -> Result<SampleSet> {
    if !(vx0 > 0.0) {
        return Err(Error::InvalidParameter(format!("sampling speed must be positive, got {vx0}")));
    }
    let mut samples = Vec::with_capacity(n);
    let mut rejected = 0;
    let mut next = 0usize;
    while samples.len() < n {
        let batch = n - samples.len();
        let drawn: Vec<Option<AccelSample>> = (next..next + batch)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, vx0, i));
                simulate_sample(params, vx0, &mut rng)
            })
            .collect();
        next += batch;
        for d in drawn {
            match d {
                Some(s) => samples.push(s),
                None => rejected += 1,
            }
        }
        if rejected > 10 * n.max(1) {
            return Err(Error::InvalidParameter(format!("too many diverged samples at {vx0} m/s")));
        }
    }
    Ok(SampleSet { vx0, samples, rejected })
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[AccelSample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<AccelSample>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
