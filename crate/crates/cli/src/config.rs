//! Run configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use fsmpc_core::ann::TrainConfig;
use fsmpc_core::control::ControllerParams;
use fsmpc_core::plant::LoadSpec;
use fsmpc_core::sim::{SimSetup, StepTestScenario};
use fsmpc_core::tuner::{
    grid_points, ObjectiveSpec, OperatingPoint, StartStrategy, ThetaBounds, TuneOptions, TuningSetup,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub omega0: f64,
    pub omega_ref: f64,
    /// Defaults to flux ramp + settle + evaluation window.
    #[serde(default)]
    pub duration: Option<f64>,
    /// Defaults to the run's θ0.
    #[serde(default)]
    pub theta: Option<ControllerParams>,
    /// Defaults to the run's load.
    #[serde(default)]
    pub load: Option<LoadSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Operating points to evaluate; defaults to the tuning grid.
    pub points: Option<Vec<OperatingPoint>>,
    /// Online rate limit as a fraction of each parameter's range; `null`
    /// disables it.
    pub rate_limit: Option<f64>,
    /// Write per-point time series for plotting.
    pub plot_csv: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { points: None, rate_limit: Some(fsmpc_core::ann::DEFAULT_RATE_LIMIT), plot_csv: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimSetup,
    pub load: LoadSpec,
    /// Controller parameters for fixed-θ runs and the start of every tune;
    /// defaults to the pole-placement PI guess with `lambda_xy0`, `lambda_sc0`.
    pub theta0: Option<ControllerParams>,
    pub scenarios: Vec<ScenarioConfig>,
    pub objective: ObjectiveSpec,
    pub bounds: ThetaBounds,
    pub tune: TuneOptions,
    /// Speed-loop bandwidth for the initial PI guess (rad/s).
    pub pi_bandwidth: f64,
    pub lambda_xy0: f64,
    pub lambda_sc0: f64,
    /// Speeds spanning the operating-point grid (rad/s); all ordered pairs
    /// with distinct start and target are tuned.
    pub grid: Vec<f64>,
    pub start: StartStrategy,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TuningSetup::default();
        RunConfig {
            sim: t.sim,
            load: t.load,
            theta0: None,
            scenarios: vec![ScenarioConfig {
                omega0: 0.0,
                omega_ref: 100.0,
                duration: None,
                theta: None,
                load: None,
            }],
            objective: t.objective,
            bounds: t.bounds,
            tune: t.options,
            pi_bandwidth: t.pi_bandwidth,
            lambda_xy0: t.lambda_xy0,
            lambda_sc0: t.lambda_sc0,
            grid: vec![0.0, 37.5, 75.0, 112.5, 150.0],
            start: StartStrategy::WarmStart,
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn tuning_setup(&self) -> TuningSetup {
        TuningSetup {
            sim: self.sim.clone(),
            objective: self.objective.clone(),
            bounds: self.bounds.clone(),
            options: self.tune.clone(),
            pi_bandwidth: self.pi_bandwidth,
            lambda_xy0: self.lambda_xy0,
            lambda_sc0: self.lambda_sc0,
            theta0: self.theta0,
            load: self.load.clone(),
        }
    }

    pub fn theta0(&self) -> ControllerParams {
        self.tuning_setup().nominal_theta()
    }

    pub fn scenarios(&self) -> Vec<StepTestScenario> {
        self.scenarios
            .iter()
            .map(|s| StepTestScenario {
                omega0: s.omega0,
                omega_ref: s.omega_ref,
                load: s.load.clone().unwrap_or_else(|| self.load.clone()),
                duration: s.duration.unwrap_or_else(|| self.sim.default_duration()),
                theta: s.theta.unwrap_or_else(|| self.theta0()),
            })
            .collect()
    }

    pub fn grid_points(&self) -> Vec<OperatingPoint> {
        grid_points(&self.grid)
    }

    pub fn evaluation_points(&self) -> Vec<OperatingPoint> {
        self.evaluate.points.clone().unwrap_or_else(|| self.grid_points())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.tuning_setup().validate()?;
        self.train.validate()?;
        for (i, sc) in self.scenarios().iter().enumerate() {
            sc.validate(&self.sim)
                .map_err(|e| CliError::Config(format!("scenarios[{i}]: {e}")))?;
        }
        if self.grid.iter().any(|w| !w.is_finite()) {
            return Err(CliError::Config("grid speeds must be finite".into()));
        }
        if let Some(r) = self.evaluate.rate_limit {
            if !(r > 0.0 && r <= 1.0) {
                return Err(CliError::Config("evaluate.rate_limit must lie in (0, 1]".into()));
            }
        }
        for p in self.evaluate.points.iter().flatten() {
            if !(p.omega0.is_finite() && p.omega_ref.is_finite()) || p.omega0 == p.omega_ref {
                return Err(CliError::Config(format!("evaluate point {p:?} must have distinct finite speeds")));
            }
        }
        Ok(())
    }
}
