use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::ControllerConfig;
use crate::dynamics::VehicleParams;
use crate::envelope::EnvelopeFit;
use crate::error::{read_toml, Error, Result};
use crate::planner::{MpcConfig, ModelKind};
use crate::track::{reference_segments, ObstacleSpec, Segment};

/// Half-range of the seeded obstacle arc-length perturbation (m).
pub const OBSTACLE_JITTER: f64 = 2.0;
/// Half-range of the seeded initial lateral offset perturbation (m).
pub const OFFSET_JITTER: f64 = 0.2;

/// A closed-loop scenario as read from TOML. Relative file references are
/// resolved against the scenario file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub vehicle: PathBuf,
    pub envelope: PathBuf,
    /// Overrides the vehicle's friction coefficient.
    #[serde(default)]
    pub mu: Option<f64>,
    pub model: ModelKind,
    #[serde(default)]
    pub seed: u64,
    /// Perturb obstacle positions and the initial offset from `seed`.
    #[serde(default)]
    pub jitter: bool,
    /// Simulated time limit (s).
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_initial_speed")]
    pub initial_speed: f64,
    /// Initial lateral offset from the path, positive to the left (m).
    #[serde(default)]
    pub initial_offset: f64,
    /// Apply each plan one replanning period after it was requested.
    #[serde(default)]
    pub real_time: bool,
    /// Write every solved plan to `plans.csv`.
    #[serde(default)]
    pub dump_plans: bool,
    /// Track segments; the reference track when empty.
    #[serde(default)]
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    /// Planner settings; defaults depend on `model`.
    #[serde(default)]
    pub mpc: Option<MpcConfig>,
    #[serde(default)]
    pub controller: ControllerConfig,
}

fn default_duration() -> f64 {
    120.0
}

fn default_initial_speed() -> f64 {
    10.0
}

impl ScenarioConfig {
    /// Minimal scenario on the reference track.
    pub fn new(vehicle: impl Into<PathBuf>, envelope: impl Into<PathBuf>, model: ModelKind) -> Self {
        ScenarioConfig {
            name: String::new(),
            vehicle: vehicle.into(),
            envelope: envelope.into(),
            mu: None,
            model,
            seed: 0,
            jitter: false,
            duration: default_duration(),
            initial_speed: default_initial_speed(),
            initial_offset: 0.0,
            real_time: false,
            dump_plans: false,
            segments: Vec::new(),
            obstacles: Vec::new(),
            mpc: None,
            controller: ControllerConfig::default(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: ScenarioConfig = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.vehicle = base.join(&cfg.vehicle);
        cfg.envelope = base.join(&cfg.envelope);
        if cfg.name.is_empty() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(cfg)
    }

    pub fn mpc_config(&self) -> MpcConfig {
        self.mpc.unwrap_or(match self.model {
            ModelKind::Proposed => MpcConfig::default(),
            ModelKind::Kinematic => MpcConfig::kinematic(),
        })
    }

    pub fn segments(&self) -> Vec<Segment> {
        if self.segments.is_empty() {
            reference_segments()
        } else {
            self.segments.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for file in [&self.vehicle, &self.envelope] {
            if !file.exists() {
                return Err(Error::InvalidParameter(format!("{} does not exist", file.display())));
            }
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidParameter("duration must be positive".into()));
        }
        if !(self.initial_speed > 2.0) {
            return Err(Error::InvalidParameter("initial_speed must exceed 2 m/s".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::InvalidParameter("mu must be positive".into()));
            }
        }
        let mpc = self.mpc_config();
        if mpc.steps == 0 || !(mpc.h > 0.0) || !(mpc.replan_period > 0.0) {
            return Err(Error::InvalidParameter("mpc needs steps > 0, h > 0 and replan_period > 0".into()));
        }
        let ratio = mpc.replan_period / self.controller.period;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::InvalidParameter("replan_period must be a multiple of the control period".into()));
        }
        let ratio = self.controller.period / PLANT_STEP;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::InvalidParameter("control period must be a multiple of 1 ms".into()));
        }
        self.controller.validate()
    }

    pub fn load_vehicle(&self) -> Result<VehicleParams> {
        let mut params = VehicleParams::from_file(&self.vehicle)?;
        if let Some(mu) = self.mu {
            params.mu = mu;
        }
        Ok(params)
    }

    pub fn load_envelope(&self) -> Result<EnvelopeFit> {
        EnvelopeFit::from_file(&self.envelope)
    }

    /// Obstacles and initial offset after the seeded perturbation.
    pub fn jittered(&self) -> (Vec<ObstacleSpec>, f64) {
        if !self.jitter {
            return (self.obstacles.clone(), self.initial_offset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| ObstacleSpec {
                s: o.s + rng.random_range(-OBSTACLE_JITTER..=OBSTACLE_JITTER),
                ..*o
            })
            .collect();
        let offset = self.initial_offset + rng.random_range(-OFFSET_JITTER..=OFFSET_JITTER);
        (obstacles, offset)
    }
}

/// Plant integration step (s).
pub const PLANT_STEP: f64 = 0.001;
