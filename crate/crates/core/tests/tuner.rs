use std::sync::Mutex;

use fsmpc_core::control::ControllerParams;
use fsmpc_core::metrics::IndicatorVector;
use fsmpc_core::sim::SimSetup;
use fsmpc_core::tuner::*;

fn surrogate_opts() -> TuneOptions {
    TuneOptions { max_iters: 200, min_step: 1e-12, tol: 0.0, fd_step_min: 1e-6, ..Default::default() }
}

fn dist(a: &ControllerParams, b: &ControllerParams) -> f64 {
    let (a, b) = (a.to_array(), b.to_array());
    (0..4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn surrogate_converges_to_minimiser() {
    let bounds = ThetaBounds::default();
    let targets = [
        ControllerParams::new(0.6, 7.5, 0.3, 0.005),
        ControllerParams::new(3.0, 40.0, 2.0, 0.2),
        ControllerParams::new(0.01, 0.2, 0.002, 0.0003),
    ];
    for target in targets {
        let obj = QuadraticSurrogate { target };
        let start = ControllerParams::new(0.175, 1.75, 0.1, 0.02);
        let r = descend(&obj, &start, &bounds, &surrogate_opts(), &|_| true);
        assert!(r.iterations <= 200);
        assert!(dist(&r.theta_star, &target) < 1e-3, "{target:?} -> {:?} ({:?})", r.theta_star, r.stop_reason);
    }
}

#[test]
fn stationary_start_returns_theta0() {
    let target = ControllerParams::new(0.5, 5.0, 0.1, 0.01);
    let bounds = ThetaBounds::default();
    // exactly representable after the normalise/denormalise round trip
    let start = bounds.from_normalized(&bounds.to_normalized(&target));
    let obj = QuadraticSurrogate { target: start };
    let r = descend(&obj, &start, &bounds, &TuneOptions::default(), &|_| true);
    assert_eq!(r.theta_star, start);
    assert_eq!(r.history.len(), 1);
}

#[test]
fn history_is_monotone() {
    let obj = QuadraticSurrogate { target: ControllerParams::new(2.0, 30.0, 1.0, 0.001) };
    let r = descend(&obj, &ControllerParams::new(0.2, 2.0, 0.1, 0.02), &ThetaBounds::default(), &surrogate_opts(), &|_| true);
    assert!(r.history.windows(2).all(|w| w[1].xi_penalized <= w[0].xi_penalized));
    assert!(r.xi_penalized <= r.history[0].xi_penalized);
}

/// Records every θ the descent asks for.
struct Recording<O> {
    inner: O,
    seen: Mutex<Vec<ControllerParams>>,
}

impl<O: Objective> Objective for Recording<O> {
    fn evaluate(&self, theta: &ControllerParams) -> Evaluation {
        self.seen.lock().unwrap().push(*theta);
        self.inner.evaluate(theta)
    }
}

#[test]
fn probes_respect_bounds() {
    let bounds = ThetaBounds::default();
    // minimiser outside the box pushes the search onto the boundary
    let obj = Recording {
        inner: QuadraticSurrogate { target: ControllerParams::new(20.0, -5.0, 100.0, 1e-6) },
        seen: Mutex::new(Vec::new()),
    };
    let r = descend(&obj, &ControllerParams::new(9.9, 0.01, 9.0, 2e-4), &bounds, &surrogate_opts(), &|_| true);
    let seen = obj.seen.lock().unwrap();
    assert_eq!(seen.len(), r.evaluations);
    assert!(seen.iter().all(|t| bounds.contains(t)));
}

/// Objective whose every evaluation fails.
struct AlwaysFails;

impl Objective for AlwaysFails {
    fn evaluate(&self, _: &ControllerParams) -> Evaluation {
        Evaluation { penalized: f64::INFINITY, raw: f64::INFINITY, indicators: Some(IndicatorVector::failed()) }
    }
}

#[test]
fn all_probes_failing_is_reported() {
    let spec = ObjectiveSpec::default();
    let start = ControllerParams::new(0.2, 2.0, 0.1, 0.02);
    let r = descend(&AlwaysFails, &start, &ThetaBounds::default(), &TuneOptions::default(), &|pi| spec.is_feasible(pi));
    assert_eq!(r.stop_reason, StopReason::AllProbesFailed);
    assert!(!r.feasible);
}

#[test]
fn normalised_penalty_is_exact_when_feasible() {
    let spec = ObjectiveSpec::default();
    let base = IndicatorVector::from_array([3.0, 0.2, 30.0, 1.5, 0.7, 300.0]);
    let n = spec.normalized(&base);
    assert_eq!(n.raw(&base), 4.0);
    assert_eq!(n.penalized(&base), n.raw(&base));
}

/// Shorter windows keep the real-simulator tests quick.
fn quick_setup() -> TuningSetup {
    TuningSetup {
        sim: SimSetup { settle: 0.3, window: 0.8, ..Default::default() },
        options: TuneOptions { max_iters: 4, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn real_tune_is_monotone_and_honest_about_feasibility() {
    let setup = quick_setup();
    let x = OperatingPoint { omega0: 0.0, omega_ref: 75.0 };
    let r = gradient_descent_tune(&setup, &x, &setup.nominal_theta(), 3).unwrap();
    assert!(r.history.windows(2).all(|w| w[1].xi_penalized <= w[0].xi_penalized));
    assert!(setup.bounds.contains(&r.theta_star));
    let pi = r.indicators_star.unwrap();
    assert_eq!(r.feasible, pi.po <= setup.objective.u_po && pi.asf <= setup.objective.u_asf);
}

#[test]
fn one_point_dataset_matches_standalone_tune() {
    let setup = quick_setup();
    let x = OperatingPoint { omega0: 75.0, omega_ref: 0.0 };
    let ds = build_dataset(&setup, &[x], StartStrategy::WarmStart, 7, 1).unwrap();
    let r = gradient_descent_tune(&setup, &x, &setup.nominal_theta(), point_seed(7, 0)).unwrap();
    assert_eq!(ds.records.len(), 1);
    assert_eq!(ds.records[0].theta_star, r.theta_star);
    assert_eq!(Some(ds.records[0].indicators_star), r.indicators_star);
    assert_eq!(ds.evaluations, r.evaluations);
}

#[test]
fn dataset_is_byte_deterministic() {
    let setup = quick_setup();
    let grid = [OperatingPoint { omega0: 0.0, omega_ref: 50.0 }, OperatingPoint { omega0: 50.0, omega_ref: 0.0 }];
    let bytes = || {
        let ds = build_dataset(&setup, &grid, StartStrategy::WarmStart, 1, 1).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds.records, &mut buf).unwrap();
        buf
    };
    assert_eq!(bytes(), bytes());
}

#[test]
fn warm_start_needs_fewer_simulations() {
    let setup = TuningSetup {
        options: TuneOptions { max_iters: 30, ..Default::default() },
        ..quick_setup()
    };
    let grid = [
        OperatingPoint { omega0: 0.0, omega_ref: 100.0 },
        OperatingPoint { omega0: 0.0, omega_ref: 110.0 },
        OperatingPoint { omega0: 0.0, omega_ref: 120.0 },
    ];
    let warm = build_dataset(&setup, &grid, StartStrategy::WarmStart, 0, 1).unwrap();
    let cold = build_dataset(&setup, &grid, StartStrategy::Cold, 0, 1).unwrap();
    assert!(warm.evaluations < cold.evaluations, "warm {} cold {}", warm.evaluations, cold.evaluations);
}

#[test]
fn initial_guess_overshoot_is_moderate() {
    let setup = TuningSetup::default();
    let x = OperatingPoint { omega0: 0.0, omega_ref: 100.0 };
    let pi = setup.baseline(&x, 0).unwrap();
    assert!(pi.po < 50.0, "{pi:?}");
}

