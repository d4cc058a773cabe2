//! Closed-loop step tests: flux ramp, settling at the initial speed, speed
//! reference step, evaluation window.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{ControllerConfig, ControllerParams, DriveController};
use crate::error::{Error, Result};
use crate::plant::{load_torque, step_plant_with, LoadSpec, MachineParams, PlantState};
use crate::trace::{Trace, TraceRow};
use crate::transforms::VoltageTable;

/// Everything about a step test that is not being tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSetup {
    pub machine: MachineParams,
    pub controller: ControllerConfig,
    /// Time spent at the initial speed after the flux ramp (s).
    pub settle: f64,
    /// Indicator evaluation window after the step (s).
    pub window: f64,
    /// Standard deviation of additive speed-measurement noise (rad/s).
    pub speed_noise: f64,
}

impl Default for SimSetup {
    fn default() -> Self {
        SimSetup {
            machine: MachineParams::default(),
            controller: ControllerConfig::default(),
            settle: 0.6,
            window: 2.0,
            speed_noise: 0.0,
        }
    }
}

impl SimSetup {
    pub fn validate(&self) -> Result<()> {
        self.machine.validate()?;
        self.controller.validate()?;
        if !(self.settle.is_finite() && self.settle >= 0.0) {
            return Err(Error::Config("settle must be non-negative".into()));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::Config("window must be positive".into()));
        }
        if !(self.speed_noise.is_finite() && self.speed_noise >= 0.0) {
            return Err(Error::Config("speed_noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Time at which the speed reference steps.
    pub fn step_time(&self) -> f64 {
        self.controller.flux_ramp + self.settle
    }

    /// Default test duration: step time plus evaluation window.
    pub fn default_duration(&self) -> f64 {
        self.step_time() + self.window
    }

    pub fn steps(&self, seconds: f64) -> usize {
        (seconds / self.machine.ts).round() as usize
    }
}

/// One speed-reference step experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepTestScenario {
    /// Initial speed (rad/s).
    pub omega0: f64,
    /// Target speed (rad/s).
    pub omega_ref: f64,
    #[serde(default)]
    pub load: LoadSpec,
    /// Total simulated time (s); the trace holds `duration/Ts + 1` rows.
    pub duration: f64,
    pub theta: ControllerParams,
}

impl StepTestScenario {
    pub fn validate(&self, setup: &SimSetup) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Config("scenario.duration must be positive".into()));
        }
        if self.omega_ref == self.omega0 {
            return Err(Error::Config("scenario.omega_ref must differ from omega0".into()));
        }
        if !(self.omega0.is_finite() && self.omega_ref.is_finite()) {
            return Err(Error::Config("scenario speeds must be finite".into()));
        }
        if setup.steps(self.duration) <= setup.steps(setup.step_time()) {
            return Err(Error::Config("scenario.duration ends before the speed step".into()));
        }
        self.load.validate()?;
        self.theta.validate()
    }
}

/// Supplies controller parameters online; called on every speed-loop tick
/// with the measured speed and the active reference.
pub trait ThetaSchedule {
    fn theta(&mut self, omega_m: f64, omega_ref: f64) -> ControllerParams;
}

/// Runs a step test with fixed controller parameters.
pub fn run_step_test(setup: &SimSetup, sc: &StepTestScenario, seed: u64) -> Result<Trace> {
    run(setup, sc, seed, None)
}

/// Runs a step test with parameters supplied by `schedule` at every speed tick.
pub fn run_step_test_scheduled(
    setup: &SimSetup,
    sc: &StepTestScenario,
    seed: u64,
    schedule: &mut dyn ThetaSchedule,
) -> Result<Trace> {
    run(setup, sc, seed, Some(schedule))
}

fn run(
    setup: &SimSetup,
    sc: &StepTestScenario,
    seed: u64,
    mut schedule: Option<&mut dyn ThetaSchedule>,
) -> Result<Trace> {
    setup.validate()?;
    sc.validate(setup)?;
    let p = &setup.machine;
    let n_steps = setup.steps(sc.duration);
    let onset = setup.steps(setup.step_time());
    let window = setup.steps(setup.window).min(n_steps - onset);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = rand_distr_normal(setup.speed_noise);
    let table = VoltageTable::new(p.vdc);
    let mut ctrl = DriveController::new(p.clone(), setup.controller.clone(), sc.theta);
    let mut plant = PlantState::default();
    let mut rows = Vec::with_capacity(n_steps + 1);
    let mut sc_prev_u = ctrl.u_applied();

    for k in 0..=n_steps {
        let omega_ref = if k < onset { sc.omega0 } else { sc.omega_ref };
        let measured = plant.omega_m + noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        if ctrl.is_speed_tick() {
            if let Some(s) = schedule.as_deref_mut() {
                ctrl.set_theta(s.theta(measured, omega_ref));
            }
        }
        let u_k = ctrl.u_applied();
        let i_meas = plant.stator_currents();
        let log = ctrl.step(omega_ref, &i_meas, measured)?;
        let t_l = load_torque(&sc.load, plant.omega_m, plant.t);
        rows.push(TraceRow {
            t: k as f64 * p.ts,
            omega_ref,
            omega_m: plant.omega_m,
            i_d_ref: log.i_d_ref,
            i_q_ref: log.i_q_ref,
            i_ref: log.i_ref.controlled(),
            i_meas: i_meas.controlled(),
            u: u_k,
            sc: crate::control::switch_changes(sc_prev_u, u_k),
            j_ab: log.cost.e_ab_sq,
            j_xy: log.cost.e_xy_sq,
            j_total: log.cost.total,
            torque: plant.torque(p),
            torque_ref: log.torque_ref,
            load_torque: t_l,
        });
        sc_prev_u = u_k;
        if k < n_steps {
            plant = step_plant_with(&plant, table.get(u_k), &sc.load, p)?;
        }
    }

    Ok(Trace { ts: p.ts, step_onset: onset, window, omega_start: sc.omega0, rows })
}

fn rand_distr_normal(std: f64) -> Option<Normal<f64>> {
    (std > 0.0).then(|| Normal::new(0.0, std).expect("finite positive std"))
}
