//! Controller parameter tuning from step tests.
//!
//! The constrained problem "minimise `c2·Tr + c3·ITAE + c4·Rt + c5·Exy`
//! subject to `PO ≤ U_PO`, `ASF ≤ U_ASF`" is scalarised with a quadratic
//! penalty and minimised by finite-difference gradient descent in a
//! normalised parameter space:
//!
//! * `kp`, `ki` map linearly from their bounds onto `[0, 1]`,
//! * `λ_xy`, `λ_sc` map from `log10` of their bounds onto `[0, 1]`.
//!
//! Each coordinate's step is scaled by its central-difference curvature when
//! that is positive (a diagonal Newton step) and the step length is then
//! backtracked until the penalised objective strictly decreases.

use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControllerParams;
use crate::error::{Error, Result};
use crate::metrics::{compute_all, finite_or_null, IndicatorVector};
use crate::plant::MachineParams;
use crate::sim::{run_step_test, SimSetup, StepTestScenario};

/// Objective weights and constraint limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    /// Overshoot limit (%).
    pub u_po: f64,
    /// Average switching frequency limit (Hz).
    pub u_asf: f64,
    /// Penalty weight.
    pub mu: f64,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec { c2: 1.0, c3: 1.0, c4: 1.0, c5: 1.0, u_po: 5.0, u_asf: 1000.0, mu: 100.0 }
    }
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        let c = [self.c2, self.c3, self.c4, self.c5];
        if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("objective weights must be non-negative".into()));
        }
        if !c.iter().any(|v| *v > 0.0) {
            return Err(Error::Config("at least one objective weight must be positive".into()));
        }
        if !(self.u_po > 0.0 && self.u_asf > 0.0) {
            return Err(Error::Config("constraint limits u_po and u_asf must be positive".into()));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::Config("penalty weight mu must be positive".into()));
        }
        Ok(())
    }

    pub fn is_feasible(&self, pi: &IndicatorVector) -> bool {
        !pi.is_failed() && pi.po <= self.u_po && pi.asf <= self.u_asf
    }

    /// Per-point normalisation: objective terms divided by the baseline
    /// indicators, constraints measured relative to their limits.
    pub fn normalized(&self, baseline: &IndicatorVector) -> NormalizedObjective {
        NormalizedObjective { spec: self.clone(), baseline: *baseline }
    }
}

/// `Ξ = c2·π2 + c3·π3 + c4·π4 + c5·π5`.
pub fn raw_objective(pi: &IndicatorVector, spec: &ObjectiveSpec) -> f64 {
    if pi.is_failed() {
        return f64::INFINITY;
    }
    spec.c2 * pi.tr + spec.c3 * pi.itae + spec.c4 * pi.rt + spec.c5 * pi.exy
}

/// `Ξ_p = Ξ + μ·(max(0, π1 − U_PO)² + max(0, π6 − U_ASF)²)`.
pub fn penalized_objective(pi: &IndicatorVector, spec: &ObjectiveSpec) -> f64 {
    if pi.is_failed() {
        return f64::INFINITY;
    }
    let v_po = (pi.po - spec.u_po).max(0.0);
    let v_asf = (pi.asf - spec.u_asf).max(0.0);
    raw_objective(pi, spec) + spec.mu * (v_po * v_po + v_asf * v_asf)
}

/// Objective normalised against a baseline step test.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedObjective {
    pub spec: ObjectiveSpec,
    pub baseline: IndicatorVector,
}

impl NormalizedObjective {
    fn scaled(&self, pi: &IndicatorVector) -> (IndicatorVector, ObjectiveSpec) {
        let floor = |v: f64| if v.abs() > 1e-12 { v.abs() } else { 1.0 };
        let b = &self.baseline;
        let scaled = IndicatorVector {
            po: pi.po / self.spec.u_po,
            tr: pi.tr / floor(b.tr),
            itae: pi.itae / floor(b.itae),
            rt: pi.rt / floor(b.rt),
            exy: pi.exy / floor(b.exy),
            asf: pi.asf / self.spec.u_asf,
            rose: pi.rose,
        };
        let spec = ObjectiveSpec { u_po: 1.0, u_asf: 1.0, ..self.spec.clone() };
        (scaled, spec)
    }

    pub fn raw(&self, pi: &IndicatorVector) -> f64 {
        let (s, spec) = self.scaled(pi);
        raw_objective(&s, &spec)
    }

    pub fn penalized(&self, pi: &IndicatorVector) -> f64 {
        let (s, spec) = self.scaled(pi);
        penalized_objective(&s, &spec)
    }
}

/// Componentwise bounds on θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaBounds {
    pub lo: ControllerParams,
    pub hi: ControllerParams,
}

impl Default for ThetaBounds {
    fn default() -> Self {
        ThetaBounds {
            lo: ControllerParams::new(0.001, 0.001, 1e-3, 1e-4),
            hi: ControllerParams::new(10.0, 50.0, 10.0, 1.0),
        }
    }
}

/// Components handled in log10 space (λ_xy, λ_sc).
pub const LOG_COMPONENTS: [bool; 4] = [false, false, true, true];

impl ThetaBounds {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.lo.to_array(), self.hi.to_array());
        for i in 0..4 {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
                return Err(Error::Config(format!("bounds component {i} must satisfy lo < hi")));
            }
            if LOG_COMPONENTS[i] && lo[i] <= 0.0 {
                return Err(Error::Config(format!("bounds component {i} must be positive")));
            }
            if lo[i] < 0.0 {
                return Err(Error::Config(format!("bounds component {i} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, t: &ControllerParams) -> bool {
        let (lo, hi, v) = (self.lo.to_array(), self.hi.to_array(), t.to_array());
        (0..4).all(|i| v[i] >= lo[i] && v[i] <= hi[i])
    }

    pub fn clip(&self, t: &ControllerParams) -> ControllerParams {
        let (lo, hi, v) = (self.lo.to_array(), self.hi.to_array(), t.to_array());
        ControllerParams::from_array(std::array::from_fn(|i| v[i].clamp(lo[i], hi[i])))
    }

    /// Width of each component's range in the units the component is
    /// represented in (linear, or decades for log components).
    pub fn span(&self) -> [f64; 4] {
        let (lo, hi) = (self.lo.to_array(), self.hi.to_array());
        std::array::from_fn(|i| {
            if LOG_COMPONENTS[i] {
                hi[i].log10() - lo[i].log10()
            } else {
                hi[i] - lo[i]
            }
        })
    }

    pub fn to_normalized(&self, t: &ControllerParams) -> [f64; 4] {
        let (lo, hi, v) = (self.lo.to_array(), self.hi.to_array(), t.to_array());
        std::array::from_fn(|i| {
            let z = if LOG_COMPONENTS[i] {
                (v[i].log10() - lo[i].log10()) / (hi[i].log10() - lo[i].log10())
            } else {
                (v[i] - lo[i]) / (hi[i] - lo[i])
            };
            z.clamp(0.0, 1.0)
        })
    }

    pub fn from_normalized(&self, z: &[f64; 4]) -> ControllerParams {
        let (lo, hi) = (self.lo.to_array(), self.hi.to_array());
        let v = std::array::from_fn(|i| {
            let zi = z[i].clamp(0.0, 1.0);
            let x = if LOG_COMPONENTS[i] {
                10f64.powf(lo[i].log10() + zi * (hi[i].log10() - lo[i].log10()))
            } else {
                lo[i] + zi * (hi[i] - lo[i])
            };
            x.clamp(lo[i], hi[i])
        });
        ControllerParams::from_array(v)
    }
}

/// Outcome of evaluating one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub penalized: f64,
    pub raw: f64,
    pub indicators: Option<IndicatorVector>,
}

/// Anything the descent can minimise.
pub trait Objective: Sync {
    fn evaluate(&self, theta: &ControllerParams) -> Evaluation;
}

/// Step-test objective at one operating point.
pub struct StepTestObjective {
    pub setup: SimSetup,
    pub scenario: StepTestScenario,
    pub objective: NormalizedObjective,
    pub seed: u64,
    runs: AtomicUsize,
}

impl StepTestObjective {
    pub fn new(setup: SimSetup, scenario: StepTestScenario, objective: NormalizedObjective, seed: u64) -> Self {
        StepTestObjective { setup, scenario, objective, seed, runs: AtomicUsize::new(0) }
    }

    /// Step tests run so far.
    pub fn runs(&self) -> usize {
        self.runs.load(Ordering::Relaxed)
    }
}

impl Objective for StepTestObjective {
    fn evaluate(&self, theta: &ControllerParams) -> Evaluation {
        self.runs.fetch_add(1, Ordering::Relaxed);
        let sc = StepTestScenario { theta: *theta, ..self.scenario.clone() };
        let pi = indicators_or_failed(&self.setup, &sc, self.seed);
        Evaluation {
            penalized: self.objective.penalized(&pi),
            raw: self.objective.raw(&pi),
            indicators: Some(pi),
        }
    }
}

/// `Ξ_p(θ) = ‖θ − target‖²` in raw parameter units, without simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticSurrogate {
    pub target: ControllerParams,
}

impl Objective for QuadraticSurrogate {
    fn evaluate(&self, theta: &ControllerParams) -> Evaluation {
        let (a, b) = (theta.to_array(), self.target.to_array());
        let f = (0..4).map(|i| (a[i] - b[i]).powi(2)).sum();
        Evaluation { penalized: f, raw: f, indicators: None }
    }
}

/// Runs a step test and computes its indicators; a diverged or otherwise
/// failed run yields [`IndicatorVector::failed`].
pub fn indicators_or_failed(setup: &SimSetup, sc: &StepTestScenario, seed: u64) -> IndicatorVector {
    run_step_test(setup, sc, seed)
        .and_then(|tr| compute_all(&tr))
        .unwrap_or_else(|_| IndicatorVector::failed())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneOptions {
    pub max_iters: usize,
    /// Central-difference half-width in normalised units.
    pub fd_step: f64,
    /// Smallest stencil before the search gives up.
    pub fd_step_min: f64,
    /// Largest move per coordinate and iteration in normalised units.
    pub max_move: f64,
    /// Backtracking halvings per iteration.
    pub max_backtracks: usize,
    /// Minimum accepted step length in normalised units.
    pub min_step: f64,
    /// Relative-improvement stopping tolerance.
    pub tol: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            max_iters: 12,
            fd_step: 0.05,
            fd_step_min: 0.01,
            max_move: 0.25,
            max_backtracks: 3,
            min_step: 1e-4,
            tol: 1e-3,
        }
    }
}

impl TuneOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0 && self.fd_step_min > 0.0 && self.fd_step_min <= self.fd_step) {
            return Err(Error::Config("need 0 < fd_step_min <= fd_step".into()));
        }
        if !(self.max_move > 0.0 && self.min_step >= 0.0 && self.tol >= 0.0) {
            return Err(Error::Config("max_move must be positive, min_step and tol non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    StepFloor,
    Converged,
    AllProbesFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub theta: ControllerParams,
    #[serde(with = "finite_or_null")]
    pub xi_penalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub theta_star: ControllerParams,
    pub indicators_star: Option<IndicatorVector>,
    /// Unpenalised objective at `theta_star`.
    #[serde(with = "finite_or_null")]
    pub xi_star: f64,
    #[serde(with = "finite_or_null")]
    pub xi_penalized: f64,
    pub feasible: bool,
    pub iterations: usize,
    /// Objective evaluations (step tests) spent, probes included.
    pub evaluations: usize,
    pub stop_reason: StopReason,
    /// Accepted iterates, starting with θ0.
    pub history: Vec<HistoryEntry>,
}

/// Penalised finite-difference descent from `theta0` within `bounds`.
///
/// `feasible` is decided by `is_feasible` on the final indicators; objectives
/// without indicators count as feasible whenever their value is finite.
pub fn descend(
    objective: &dyn Objective,
    theta0: &ControllerParams,
    bounds: &ThetaBounds,
    opts: &TuneOptions,
    is_feasible: &dyn Fn(&IndicatorVector) -> bool,
) -> TuneResult {
    let evals = AtomicUsize::new(0);
    let eval = |z: &[f64; 4]| {
        evals.fetch_add(1, Ordering::Relaxed);
        objective.evaluate(&bounds.from_normalized(z))
    };

    let mut theta = bounds.clip(theta0);
    let mut z = bounds.to_normalized(&theta);
    evals.fetch_add(1, Ordering::Relaxed);
    let mut current = objective.evaluate(&theta);
    let mut history = vec![HistoryEntry { theta, xi_penalized: current.penalized }];
    let mut h = opts.fd_step;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    while iterations < opts.max_iters {
        iterations += 1;
        let f0 = current.penalized;

        let probes: Vec<[f64; 4]> = (0..4)
            .flat_map(|i| {
                [1.0, -1.0].map(|s| {
                    let mut p = z;
                    p[i] = (z[i] + s * h).clamp(0.0, 1.0);
                    p
                })
            })
            .collect();
        let values: Vec<f64> = probes.par_iter().map(|p| eval(p).penalized).collect();

        if !f0.is_finite() && values.iter().all(|v| !v.is_finite()) {
            stop = StopReason::AllProbesFailed;
            break;
        }

        let mut direction = [0.0; 4];
        for i in 0..4 {
            let (zp, zm) = (probes[2 * i][i], probes[2 * i + 1][i]);
            let (fp, fm) = (values[2 * i], values[2 * i + 1]);
            let (a, b) = (z[i] - zm, zp - z[i]);
            let grad = match (fp.is_finite() && b > 0.0, fm.is_finite() && a > 0.0, f0.is_finite()) {
                // three-point derivative at z, exact for quadratics on a clipped stencil
                (true, true, true) => (a * a * fp - b * b * fm - (a * a - b * b) * f0) / (a * b * (a + b)),
                (true, true, false) => (fp - fm) / (a + b),
                (true, false, true) => (fp - f0) / b,
                (false, true, true) => (f0 - fm) / a,
                (false, false, _) | (true, false, false) | (false, true, false) => 0.0,
            };
            let curvature = if fp.is_finite() && fm.is_finite() && f0.is_finite() && a > 0.0 && b > 0.0 {
                2.0 * (fp * a + fm * b - f0 * (a + b)) / (a * b * (a + b))
            } else {
                0.0
            };
            let newton = if curvature > 0.0 { -grad / curvature } else { f64::NAN };
            let d = if newton.is_finite() {
                newton
            } else {
                // no usable curvature: move the full allowed distance downhill
                -grad.signum() * opts.max_move
            };
            direction[i] = d.clamp(-opts.max_move, opts.max_move);
        }

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..=opts.max_backtracks {
            let cand: [f64; 4] = std::array::from_fn(|i| (z[i] + alpha * direction[i]).clamp(0.0, 1.0));
            let moved = cand.iter().zip(z.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if moved < opts.min_step {
                break;
            }
            let e = eval(&cand);
            if e.penalized < f0 || (!f0.is_finite() && e.penalized.is_finite()) {
                accepted = Some((cand, e));
                break;
            }
            alpha *= 0.5;
        }

        match accepted {
            Some((cand, e)) => {
                let improvement = if f0.is_finite() {
                    (f0 - e.penalized) / f0.abs().max(1e-300)
                } else {
                    f64::INFINITY
                };
                z = cand;
                theta = bounds.from_normalized(&z);
                current = e;
                history.push(HistoryEntry { theta, xi_penalized: e.penalized });
                if improvement < opts.tol {
                    stop = StopReason::Converged;
                    break;
                }
            }
            None => {
                h *= 0.5;
                if h < opts.fd_step_min {
                    stop = StopReason::StepFloor;
                    break;
                }
            }
        }
    }

    let feasible = match &current.indicators {
        Some(pi) => is_feasible(pi),
        None => current.penalized.is_finite(),
    };
    TuneResult {
        theta_star: theta,
        indicators_star: current.indicators,
        xi_star: current.raw,
        xi_penalized: current.penalized,
        feasible,
        iterations,
        evaluations: evals.load(Ordering::Relaxed),
        stop_reason: stop,
        history,
    }
}

/// Speed operating point `x = (ω0, ω*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    pub omega0: f64,
    pub omega_ref: f64,
}

/// All ordered pairs of grid speeds with distinct start and target.
pub fn grid_points(speeds: &[f64]) -> Vec<OperatingPoint> {
    let mut out = Vec::new();
    for &omega0 in speeds {
        for &omega_ref in speeds {
            if omega0 != omega_ref {
                out.push(OperatingPoint { omega0, omega_ref });
            }
        }
    }
    out
}

/// Second-order pole placement of the speed loop.
///
/// With the current loop taken as unity gain and friction neglected, the loop
/// `k_T/(Jm·s)` under PI control has characteristic polynomial
/// `Jm·s² + k_T·kp·s + k_T·ki`; a double pole at `−bandwidth` gives
/// `kp = 2·bandwidth·Jm/k_T`, `ki = bandwidth²·Jm/k_T`.
pub fn initial_guess_pi(p: &MachineParams, i_d_ref: f64, bandwidth: f64) -> (f64, f64) {
    let kt = p.torque_constant(i_d_ref);
    (2.0 * bandwidth * p.jm / kt, bandwidth * bandwidth * p.jm / kt)
}

/// Where each grid point's search starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStrategy {
    /// Every point starts from the nominal θ0.
    Cold,
    /// Each point starts from the previous point's result.
    WarmStart,
}

/// Settings shared by every tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSetup {
    pub sim: SimSetup,
    pub objective: ObjectiveSpec,
    pub bounds: ThetaBounds,
    pub options: TuneOptions,
    /// Speed-loop bandwidth for the initial PI guess (rad/s).
    pub pi_bandwidth: f64,
    /// Initial weighting factors.
    pub lambda_xy0: f64,
    pub lambda_sc0: f64,
    /// Explicit θ0; overrides the pole-placement guess and the λ defaults.
    pub theta0: Option<ControllerParams>,
    pub load: crate::plant::LoadSpec,
}

impl Default for TuningSetup {
    fn default() -> Self {
        TuningSetup {
            sim: SimSetup::default(),
            objective: ObjectiveSpec::default(),
            bounds: ThetaBounds::default(),
            options: TuneOptions::default(),
            pi_bandwidth: 20.0,
            lambda_xy0: 0.1,
            lambda_sc0: 0.02,
            theta0: None,
            load: Default::default(),
        }
    }
}

impl TuningSetup {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.objective.validate()?;
        self.bounds.validate()?;
        self.options.validate()?;
        if !(self.pi_bandwidth.is_finite() && self.pi_bandwidth > 0.0) {
            return Err(Error::Config("pi_bandwidth must be positive".into()));
        }
        let theta0 = self.nominal_theta();
        if !self.bounds.contains(&theta0) {
            return Err(Error::Config(format!("nominal theta {theta0:?} outside bounds")));
        }
        Ok(())
    }

    /// θ0: the explicit one if configured, else the pole-placement PI guess
    /// with the configured weighting factors.
    pub fn nominal_theta(&self) -> ControllerParams {
        if let Some(t) = self.theta0 {
            return t;
        }
        let (kp, ki) = initial_guess_pi(&self.sim.machine, self.sim.controller.i_d_ref, self.pi_bandwidth);
        ControllerParams::new(kp, ki, self.lambda_xy0, self.lambda_sc0)
    }

    pub fn scenario(&self, x: &OperatingPoint, theta: ControllerParams) -> StepTestScenario {
        StepTestScenario {
            omega0: x.omega0,
            omega_ref: x.omega_ref,
            load: self.load.clone(),
            duration: self.sim.default_duration(),
            theta,
        }
    }

    /// Indicators of the nominal θ0 at `x`; the per-point normalisation basis.
    pub fn baseline(&self, x: &OperatingPoint, seed: u64) -> Result<IndicatorVector> {
        let sc = self.scenario(x, self.nominal_theta());
        let tr = run_step_test(&self.sim, &sc, seed)?;
        compute_all(&tr)
    }

    pub fn objective_at(&self, x: &OperatingPoint, seed: u64) -> Result<StepTestObjective> {
        let baseline = self.baseline(x, seed)?;
        Ok(StepTestObjective::new(
            self.sim.clone(),
            self.scenario(x, self.nominal_theta()),
            self.objective.normalized(&baseline),
            seed,
        ))
    }
}

/// Tunes θ at one operating point starting from `theta0`.
pub fn gradient_descent_tune(
    setup: &TuningSetup,
    x: &OperatingPoint,
    theta0: &ControllerParams,
    seed: u64,
) -> Result<TuneResult> {
    setup.validate()?;
    if !setup.bounds.contains(theta0) {
        return Err(Error::Config(format!("theta0 {theta0:?} outside bounds")));
    }
    let obj = setup.objective_at(x, seed)?;
    let spec = setup.objective.clone();
    let mut res = descend(&obj, theta0, &setup.bounds, &setup.options, &|pi| spec.is_feasible(pi));
    // the baseline run counts as a step test too
    res.evaluations += 1;
    Ok(res)
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub x: OperatingPoint,
    pub theta_star: ControllerParams,
    pub indicators_star: IndicatorVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub x: OperatingPoint,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutcome {
    pub records: Vec<DatasetRecord>,
    /// Per-point results in grid order (successful points only).
    pub results: Vec<TuneResult>,
    pub failures: Vec<PointFailure>,
    /// Step tests run over the whole sweep.
    pub evaluations: usize,
}

/// Seed used for grid point `index`.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// Tunes every grid point and collects the dataset.
///
/// `WarmStart` runs the grid sequentially, seeding each search with the
/// previous point's θ*. `Cold` points are independent and run concurrently.
/// All simulations share a pool of `workers` threads; output order is grid
/// order either way.
pub fn build_dataset(
    setup: &TuningSetup,
    grid: &[OperatingPoint],
    strategy: StartStrategy,
    seed: u64,
    workers: usize,
) -> Result<DatasetOutcome> {
    setup.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("operating-point grid is empty".into()));
    }
    let nominal = setup.nominal_theta();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<TuneResult>> = pool.install(|| match strategy {
        StartStrategy::WarmStart => {
            let mut start = nominal;
            let mut out = Vec::with_capacity(grid.len());
            for (i, x) in grid.iter().enumerate() {
                let r = gradient_descent_tune(setup, x, &start, point_seed(seed, i));
                if let Ok(res) = &r {
                    if res.indicators_star.is_some_and(|pi| !pi.is_failed()) {
                        start = res.theta_star;
                    }
                }
                out.push(r);
            }
            out
        }
        StartStrategy::Cold => grid
            .par_iter()
            .enumerate()
            .map(|(i, x)| gradient_descent_tune(setup, x, &nominal, point_seed(seed, i)))
            .collect(),
    });

    let mut records = Vec::new();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut evaluations = 0;
    for (x, r) in grid.iter().zip(outcomes) {
        match r {
            Ok(res) => {
                evaluations += res.evaluations;
                match res.indicators_star {
                    Some(pi) if !pi.is_failed() => {
                        records.push(DatasetRecord { x: *x, theta_star: res.theta_star, indicators_star: pi });
                        results.push(res);
                    }
                    _ => failures.push(PointFailure {
                        x: *x,
                        message: format!("no successful step test ({:?})", res.stop_reason),
                    }),
                }
            }
            Err(e) => failures.push(PointFailure { x: *x, message: e.to_string() }),
        }
    }
    Ok(DatasetOutcome { records, results, failures, evaluations })
}

pub const DATASET_HEADER: &str = "omega0,omega_ref,kp,ki,lambda_xy,lambda_sc,PO,Tr,ITAE,Rt,Exy,ASF";

pub fn write_dataset<W: Write>(records: &[DatasetRecord], mut w: W) -> Result<()> {
    writeln!(w, "{DATASET_HEADER}")?;
    for r in records {
        let t = &r.theta_star;
        let p = &r.indicators_star;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.x.omega0, r.x.omega_ref, t.kp, t.ki, t.lambda_xy, t.lambda_sc, p.po, p.tr, p.itae, p.rt, p.exy, p.asf
        )?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<DatasetRecord>> {
    let err = |line: usize, message: String| Error::Parse { what: "dataset", line, message };
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| err(1, "empty file".into()))??;
    if header.trim() != DATASET_HEADER {
        return Err(err(1, format!("expected header '{DATASET_HEADER}'")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(lineno, e.to_string()))?;
        if v.len() != 12 {
            return Err(err(lineno, format!("expected 12 fields, got {}", v.len())));
        }
        out.push(DatasetRecord {
            x: OperatingPoint { omega0: v[0], omega_ref: v[1] },
            theta_star: ControllerParams::new(v[2], v[3], v[4], v[5]),
            indicators_star: IndicatorVector::from_array([v[6], v[7], v[8], v[9], v[10], v[11]]),
        });
    }
    Ok(out)
}
