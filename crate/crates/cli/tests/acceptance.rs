//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fsmpc_cli::commands::{DatasetSummary, EvaluationReport};
use fsmpc_core::ann::*;
use fsmpc_core::control::*;
use fsmpc_core::metrics::*;
use fsmpc_core::plant::*;
use fsmpc_core::sim::{run_step_test, SimSetup, StepTestScenario};
use fsmpc_core::trace::{Trace, TraceRow};
use fsmpc_core::transforms::*;
use fsmpc_core::tuner::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- transforms

fn transforms() -> Outcome {
    for u in enumerate_switch_states() {
        let s: f64 = phase_voltages(u, 300.0).0.iter().sum();
        check(s.abs() < 1e-12, || format!("state {} phase voltages sum to {s}", u.index()))?;
    }
    for u in [SwitchState::ALL_OFF, SwitchState::ALL_ON] {
        let v = phase_voltages(u, 300.0).0;
        check(v.iter().all(|x| *x == 0.0), || format!("state {} gives {v:?}", u.index()))?;
    }
    let m = clarke_matrix();
    let mut worst_orth = 0.0f64;
    for i in 0..4 {
        for j in (i + 1)..4 {
            worst_orth = worst_orth.max((0..5).map(|k| m[i][k] * m[j][k]).sum::<f64>().abs());
        }
    }
    check(worst_orth < 1e-12, || format!("row dot product {worst_orth:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_lin, mut worst_park) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let v: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let w: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let combo: [f64; 5] = std::array::from_fn(|k| a * v[k] + b * w[k]);
        let (l, cv, cw) = (clarke(&combo).to_array(), clarke(&v).to_array(), clarke(&w).to_array());
        for i in 0..5 {
            worst_lin = worst_lin.max((l[i] - (a * cv[i] + b * cw[i])).abs());
        }
        let sigma = rng.gen_range(0.0..TAU);
        let (al, be) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let back = inverse_park(park(AlphaBetaXY::new(al, be, 0.0, 0.0), sigma), sigma);
        worst_park = worst_park.max((back.alpha - al).abs()).max((back.beta - be).abs());
    }
    check(worst_lin < 1e-12, || format!("clarke linearity error {worst_lin:e}"))?;
    check(worst_park < 1e-12, || format!("park round-trip error {worst_park:e}"))?;
    Ok(format!(
        "row dot {worst_orth:.1e}, linearity {worst_lin:.1e}, park round trip {worst_park:.1e}"
    ))
}

// ------------------------------------------------------------------- fsmpc

fn legs_differing(a: SwitchState, b: SwitchState) -> u32 {
    (0..5).filter(|h| a.leg(*h) != b.leg(*h)).count() as u32
}

fn fsmpc() -> Outcome {
    let p = MachineParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut scaled_checks = 0;
    for inst in 0..1000 {
        let i = AlphaBetaXY::new(
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let ir = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
        let u = SwitchState::from_index(rng.gen_range(0..32)).unwrap();
        let refs = AlphaBetaXY::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), 0.0, 0.0);
        let omega_e = rng.gen_range(-1500.0..1500.0);
        let theta = ControllerParams::new(
            0.5,
            5.0,
            10f64.powf(rng.gen_range(-3.0..1.0)),
            10f64.powf(rng.gen_range(-4.0..0.0)),
        );
        let pm = build_prediction_model(omega_e, &p);
        let d = fsmpc_select(&i, ir, u, &refs, &pm, &theta).map_err(|e| e.to_string())?;

        let z = [i.alpha, i.beta, i.x, i.y, ir[0], ir[1]];
        let z1 = pm.predict(&z, u);
        let cost = |c: SwitchState, w: [f64; 3]| {
            let z2 = pm.predict(&z1, c);
            let (ea, eb, ex, ey) = (refs.alpha - z2[0], refs.beta - z2[1], refs.x - z2[2], refs.y - z2[3]);
            w[0] * (ea * ea + eb * eb) + w[1] * (ex * ex + ey * ey) + w[2] * f64::from(legs_differing(u, c))
        };
        let w = [1.0, theta.lambda_xy, theta.lambda_sc];
        let min = enumerate_switch_states().into_iter().map(|c| cost(c, w)).fold(f64::INFINITY, f64::min);
        check(d.cost.total.to_bits() == min.to_bits(), || {
            format!("instance {inst}: selected J {} vs exhaustive {min}", d.cost.total)
        })?;

        let argmin = |w: [f64; 3]| {
            let costs: Vec<f64> = enumerate_switch_states().into_iter().map(|c| cost(c, w)).collect();
            let m = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            costs.iter().enumerate().filter(|(_, c)| **c == m).map(|(n, _)| n).collect::<Vec<_>>()
        };
        let base = argmin(w);
        for k in [-7, -1, 1, 5] {
            let c = 2f64.powi(k);
            check(argmin(w.map(|x| c * x)) == base, || format!("instance {inst}: argmin set changes under ×2^{k}"))?;
            scaled_checks += 1;
        }
    }
    Ok(format!("1000 instances bit-exact, {scaled_checks} scaled argmin sets unchanged"))
}

// ------------------------------------------------------------------- plant

fn expm2(a: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (tr * tr / 4.0 - det).sqrt();
    let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    let (e1, e2) = ((l1 * t).exp(), (l2 * t).exp());
    let c0 = (l1 * e2 - l2 * e1) / (l1 - l2);
    let c1 = (e1 - e2) / (l1 - l2);
    [[c0 + c1 * a[0][0], c1 * a[0][1]], [c1 * a[1][0], c0 + c1 * a[1][1]]]
}

fn plant_distance(a: &PlantState, b: &PlantState) -> f64 {
    let (x, y) = (a.currents(), b.currents());
    let d: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum();
    (d + (a.omega_m - b.omega_m).powi(2)).sqrt()
}

fn plant() -> Outcome {
    let base = MachineParams { ts: 1e-3, ..Default::default() };
    let s0 = PlantState {
        is_alpha: 0.8,
        is_beta: -0.6,
        is_x: 0.2,
        is_y: -0.1,
        ir_alpha: -0.3,
        ir_beta: 0.5,
        omega_m: 60.0,
        t: 0.0,
    };
    let seq = [25, 24, 28, 12, 14, 6, 7, 3, 19, 17];
    let run = |n: u32| {
        let p = MachineParams { substeps: n, ..base.clone() };
        let table = VoltageTable::new(p.vdc);
        let mut s = s0.clone();
        for k in 0..20 {
            let u = SwitchState::from_index(seq[(k / 2) % 10]).unwrap();
            s = step_plant_with(&s, table.get(u), &LoadSpec::viscous(0.5, 0.01), &p).map_err(|e| e.to_string())?;
        }
        Ok::<_, String>(s)
    };
    let (a, b, c) = (run(1)?, run(2)?, run(4)?);
    let ratio = plant_distance(&a, &b) / plant_distance(&b, &c);
    check((12.0..=20.0).contains(&ratio), || format!("RK4 error ratio {ratio}"))?;

    let p = MachineParams { jm: 1e12, ..Default::default() };
    let v = 40.0;
    let (ls, lr, lm) = (p.lls + p.lm, p.llr + p.lm, p.lm);
    let det = ls * lr - lm * lm;
    let linv = [[lr / det, -lm / det], [-lm / det, ls / det]];
    let am = [[-linv[0][0] * p.rs, -linv[0][1] * p.rr], [-linv[1][0] * p.rs, -linv[1][1] * p.rr]];
    let bv = [linv[0][0] * v, linv[1][0] * v];
    let t = 0.01;
    let e = expm2(am, t);
    let mm = [[e[0][0] - 1.0, e[0][1]], [e[1][0], e[1][1] - 1.0]];
    let w = [mm[0][0] * bv[0] + mm[0][1] * bv[1], mm[1][0] * bv[0] + mm[1][1] * bv[1]];
    let adet = am[0][0] * am[1][1] - am[0][1] * am[1][0];
    let expect_is = (am[1][1] * w[0] - am[0][1] * w[1]) / adet;
    let expect_ir = (-am[1][0] * w[0] + am[0][0] * w[1]) / adet;
    let mut s = PlantState::default();
    let vin = AlphaBetaXY::new(v, 0.0, 0.0, 0.0);
    for _ in 0..(t / p.ts).round() as usize {
        s = step_plant_with(&s, vin, &LoadSpec::default(), &p).map_err(|e| e.to_string())?;
    }
    let rel_is = (s.is_alpha - expect_is).abs() / expect_is.abs();
    let rel_ir = (s.ir_alpha - expect_ir).abs() / expect_ir.abs();
    check(rel_is <= 1e-3 && rel_ir <= 1e-3, || format!("locked rotor relative errors {rel_is:e}, {rel_ir:e}"))?;
    Ok(format!("RK4 ratio {ratio:.2}, locked rotor errors {rel_is:.1e} / {rel_ir:.1e}"))
}

// -------------------------------------------------------------- indicators

const TS: f64 = 1e-4;

/// Window of `n` samples after a step from `start` to `target` at row 0.
fn synthetic(n: usize, start: f64, target: f64, row: impl Fn(usize) -> TraceRow) -> Trace {
    let mut rows = vec![TraceRow { omega_ref: target, omega_m: start, ..Default::default() }];
    rows.extend((1..=n).map(|j| TraceRow { t: j as f64 * TS, omega_ref: target, ..row(j) }));
    Trace { ts: TS, step_onset: 0, window: n, omega_start: start, rows }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn indicators() -> Outcome {
    let e = |r: fsmpc_core::Result<f64>| r.map_err(|e| e.to_string());
    let n = 4000;

    // constant at target
    let flat = synthetic(n, 0.0, 100.0, |_| TraceRow { omega_m: 100.0, ..Default::default() });
    check(e(overshoot(&flat))? == 0.0, || "PO of constant trace".into())?;
    check(rise_time(&flat).map_err(|e| e.to_string())? == (TS, true), || "Tr of constant trace".into())?;
    check(e(itae(&flat))? == 0.0, || "ITAE of constant trace".into())?;

    // ramp reaching the target at sample r, then holding
    let r = 1000usize;
    let ramp = synthetic(n, 0.0, 100.0, |j| TraceRow {
        omega_m: 100.0 * (j.min(r) as f64) / r as f64,
        ..Default::default()
    });
    let (tr, rose) = rise_time(&ramp).map_err(|e| e.to_string())?;
    check(rose && tr == r as f64 * TS, || format!("ramp Tr {tr}"))?;
    let itae_oracle = ((r + 1) * (r - 1)) as f64 / 6.0 / n as f64;
    let itae_got = e(itae(&ramp))?;
    check(rel(itae_got, itae_oracle) < 1e-12, || format!("ramp ITAE {itae_got} vs {itae_oracle}"))?;
    check(e(overshoot(&ramp))? == 0.0, || "ramp PO".into())?;

    // overshoot peaks, rising and falling
    let up = synthetic(n, 0.0, 100.0, |j| TraceRow { omega_m: if j == 50 { 107.0 } else { 100.0 }, ..Default::default() });
    check(e(overshoot(&up))? == 7.0, || "rising PO".into())?;
    let down = synthetic(n, 100.0, 20.0, |j| TraceRow { omega_m: if j == 50 { 15.0 } else { 20.0 }, ..Default::default() });
    check(e(overshoot(&down))? == 6.25, || "falling PO".into())?;

    // torque and x–y errors: constants exact, sinusoids within 1%
    let c_err = synthetic(n, 0.0, 100.0, |_| TraceRow { torque_ref: 2.0, torque: 1.25, i_ref: [0.0, 0.0, 0.0, 0.0], i_meas: [0.0, 0.0, 0.3, -0.4], ..Default::default() });
    check(e(torque_ripple(&c_err))? == 0.75, || "constant Rt".into())?;
    check(rel(e(harmonic_content(&c_err))?, 0.5) < 1e-15, || "constant Exy".into())?;
    let amp = 0.8;
    let sine = synthetic(6000, 0.0, 100.0, |j| {
        let ph = TAU * j as f64 / 50.0;
        TraceRow {
            torque_ref: 2.0,
            torque: 2.0 + amp * ph.sin(),
            i_meas: [0.0, 0.0, 0.35 * ph.sin(), 0.35 * ph.cos()],
            ..Default::default()
        }
    });
    let rt = e(torque_ripple(&sine))?;
    check(rel(rt, amp / 2f64.sqrt()) < 0.01, || format!("sinusoidal Rt {rt}"))?;
    let exy = e(harmonic_content(&sine))?;
    check(rel(exy, 0.35) < 0.01, || format!("rotating Exy {exy}"))?;

    // switching count
    let sw = synthetic(n, 0.0, 100.0, |j| TraceRow { sc: if j % 2 == 0 { 2 } else { 0 }, ..Default::default() });
    let asf = e(avg_switching_freq(&sw))?;
    check(rel(asf, 1.0 / (5.0 * TS)) < 1e-12, || format!("ASF {asf}"))?;

    // ASF bounds on simulated traces
    let setup = SimSetup { settle: 0.3, window: 0.5, ..Default::default() };
    let mut worst = 0.0f64;
    for (w0, w1, lsc) in [(0.0, 100.0, 0.0), (100.0, 20.0, 0.02), (50.0, 150.0, 1.0), (150.0, 0.0, 1e-4)] {
        let sc = StepTestScenario {
            omega0: w0,
            omega_ref: w1,
            load: LoadSpec::default(),
            duration: setup.default_duration(),
            theta: ControllerParams::new(0.3, 3.0, 0.1, lsc),
        };
        let tr = run_step_test(&setup, &sc, 0).map_err(|e| e.to_string())?;
        let asf = e(avg_switching_freq(&tr))?;
        check((0.0..=1.0 / setup.machine.ts).contains(&asf), || format!("simulated ASF {asf}"))?;
        worst = worst.max(asf);
    }
    Ok(format!("synthetic oracles matched, simulated ASF ≤ {worst:.0} Hz"))
}

// -------------------------------------------------------------- closed loop

fn closed_loop() -> Outcome {
    let setup = SimSetup { window: 2.0, ..Default::default() };
    let (kp, ki) = initial_guess_pi(&setup.machine, setup.controller.i_d_ref, 20.0);
    let theta = ControllerParams::new(kp, ki, 0.1, 0.02);
    let sc = StepTestScenario {
        omega0: 0.0,
        omega_ref: 100.0,
        load: LoadSpec::default(),
        duration: setup.default_duration(),
        theta,
    };
    let tr = run_step_test(&setup, &sc, 0).map_err(|e| e.to_string())?;
    let pi = compute_all(&tr).map_err(|e| e.to_string())?;
    check(pi.rose && pi.tr.is_finite(), || format!("reference not reached: {pi:?}"))?;
    let rows = tr.window_rows();
    let tail = &rows[rows.len() - setup.steps(0.2)..];
    let worst = tail.iter().map(|r| (r.omega_m - 100.0).abs() / 100.0).fold(0.0, f64::max);
    check(worst < 0.02, || format!("steady-state error {:.2}%", 100.0 * worst))?;
    Ok(format!("Tr {:.4} s, PO {:.2}%, steady-state error {:.3}%", pi.tr, pi.po, 100.0 * worst))
}

// ------------------------------------------------------------------- tuner

fn tuner() -> Outcome {
    let bounds = ThetaBounds::default();
    let opts = TuneOptions { max_iters: 200, min_step: 1e-12, tol: 0.0, fd_step_min: 1e-6, ..Default::default() };
    let start = ControllerParams::new(0.175, 1.75, 0.1, 0.02);
    let mut worst = 0.0f64;
    for target in [
        ControllerParams::new(0.6, 7.5, 0.3, 0.005),
        ControllerParams::new(3.0, 40.0, 2.0, 0.2),
        ControllerParams::new(0.01, 0.2, 0.002, 0.0003),
    ] {
        let r = descend(&QuadraticSurrogate { target }, &start, &bounds, &opts, &|_| true);
        let (a, b) = (r.theta_star.to_array(), target.to_array());
        let d = (0..4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
        check(r.iterations <= 200 && d < 1e-3, || format!("surrogate {target:?}: distance {d:e} after {} iterations", r.iterations))?;
        worst = worst.max(d);
    }

    let setup = TuningSetup::default();
    let grid = [
        OperatingPoint { omega0: 0.0, omega_ref: 75.0 },
        OperatingPoint { omega0: 75.0, omega_ref: 150.0 },
        OperatingPoint { omega0: 150.0, omega_ref: 0.0 },
    ];
    let t0 = Instant::now();
    let ds = build_dataset(&setup, &grid, StartStrategy::WarmStart, 0, 1).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    check(ds.failures.is_empty(), || format!("failed points {:?}", ds.failures))?;
    let mut feasible = 0;
    for (rec, r) in ds.records.iter().zip(&ds.results) {
        check(r.history.windows(2).all(|w| w[1].xi_penalized <= w[0].xi_penalized), || {
            format!("{:?}: accepted history increases", rec.x)
        })?;
        if r.feasible {
            let pi = rec.indicators_star;
            check(pi.po <= setup.objective.u_po && pi.asf <= setup.objective.u_asf, || {
                format!("{:?}: reported feasible but {pi:?}", rec.x)
            })?;
            feasible += 1;
        }
    }
    check(elapsed < Duration::from_secs(600), || format!("3-point grid took {elapsed:?}"))?;
    Ok(format!(
        "surrogate distance ≤ {worst:.1e}; 3-point grid in {:.1} s, {feasible}/3 feasible, histories monotone",
        elapsed.as_secs_f64()
    ))
}

// --------------------------------------------------------------------- ann

fn synthetic_theta(x: [f64; 2]) -> ControllerParams {
    let (a, b) = (x[0] / 150.0, x[1] / 150.0);
    ControllerParams::new(
        0.3 + 0.4 * a + 0.2 * b,
        3.0 + 4.0 * b - 1.0 * a,
        10f64.powf(-1.5 + 0.8 * a - 0.3 * b),
        10f64.powf(-2.5 + 0.5 * b + 0.4 * a),
    )
}

fn synthetic_samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = [rng.gen_range(0.0..150.0), rng.gen_range(0.0..150.0)];
            (x, synthetic_theta(x))
        })
        .collect()
}

fn ann() -> Outcome {
    let bounds = ThetaBounds::default();
    let mut worst_grad = 0.0f64;
    for seed in 0..5u64 {
        for h in [2usize, 8] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = MlpModel::random(h, bounds.clone(), &mut rng).map_err(|e| e.to_string())?;
            m.x_mean = [75.0, 75.0];
            m.x_std = [50.0, 50.0];
            m.y_mean = [0.8, 8.0, -1.0, -2.0];
            m.y_std = [0.5, 5.0, 0.7, 0.9];
            let batch = synthetic_samples(12, seed + 100);
            let (_, g) = m.loss_and_gradient(&batch).map_err(|e| e.to_string())?;
            let w0 = m.weights().to_vec();
            let mut probe = m.clone();
            let step = 1e-5;
            for k in 0..w0.len() {
                let mut w = w0.clone();
                w[k] = w0[k] + step;
                probe.set_weights(&w).map_err(|e| e.to_string())?;
                let fp = probe.loss(&batch).map_err(|e| e.to_string())?;
                w[k] = w0[k] - step;
                probe.set_weights(&w).map_err(|e| e.to_string())?;
                let fm = probe.loss(&batch).map_err(|e| e.to_string())?;
                let fd = (fp - fm) / (2.0 * step);
                worst_grad = worst_grad.max((g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-4));
            }
        }
    }
    check(worst_grad < 1e-6, || format!("gradient relative error {worst_grad:e}"))?;

    let (model, _) = train(&synthetic_samples(60, 1), &bounds, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let held_out = synthetic_samples(200, 99);
    let rmse = model.rmse(&held_out);
    let outs: Vec<[f64; 4]> = held_out.iter().map(|(_, t)| theta_to_output(t)).collect();
    let mut worst_frac = 0.0f64;
    for o in 0..4 {
        let mean = outs.iter().map(|y| y[o]).sum::<f64>() / outs.len() as f64;
        let std = (outs.iter().map(|y| (y[o] - mean).powi(2)).sum::<f64>() / outs.len() as f64).sqrt();
        worst_frac = worst_frac.max(rmse[o] / std);
    }
    check(worst_frac < 0.05, || format!("held-out RMSE {:.2}% of std", 100.0 * worst_frac))?;

    let mut a = Vec::new();
    model.save(&mut a).map_err(|e| e.to_string())?;
    let back = MlpModel::load(a.as_slice()).map_err(|e| e.to_string())?;
    let mut b = Vec::new();
    back.save(&mut b).map_err(|e| e.to_string())?;
    check(a == b && back.weights().iter().zip(model.weights()).all(|(x, y)| x.to_bits() == y.to_bits()), || {
        "model round trip not bit-exact".into()
    })?;
    Ok(format!(
        "gradient error {worst_grad:.1e}, held-out RMSE ≤ {:.2}% of std, round trip bit-exact",
        100.0 * worst_frac
    ))
}

// ---------------------------------------------------------------- pipeline

fn fsmpc_bin(args: &[&str], out: &Path) -> Result<(), String> {
    let st = Command::new(env!("CARGO_BIN_EXE_fsmpc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    check(st.status.success(), || {
        format!("fsmpc {args:?} exited with {}: {}", st.status, String::from_utf8_lossy(&st.stderr))
    })
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path();
    let dataset = out.join("dataset.csv");
    let model = out.join("model.txt");
    let t0 = Instant::now();
    fsmpc_bin(&["dataset"], out)?;
    fsmpc_bin(&["train", "--dataset", dataset.to_str().unwrap()], out)?;
    fsmpc_bin(&["evaluate", "--model", model.to_str().unwrap(), "--dataset", dataset.to_str().unwrap()], out)?;
    let elapsed = t0.elapsed();

    let read = |name: &str| std::fs::read_to_string(out.join(name)).map_err(|e| e.to_string());
    let summary: DatasetSummary = serde_json::from_str(&read("dataset_summary.json")?).map_err(|e| e.to_string())?;
    let report: EvaluationReport = serde_json::from_str(&read("evaluation.json")?).map_err(|e| e.to_string())?;
    let ratios: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| r.tuned.as_ref())
        .map(|t| format!("{:.2}", t.xi_ratio))
        .collect();
    let detail = format!(
        "{} records in {:.0} s; Ξ_ann ≤ 1.2·Ξ* at {}/{} points (ratios {}); constraint satisfaction {:.0}% (fixed θ0 {:.0}%)",
        summary.succeeded,
        elapsed.as_secs_f64(),
        report.within_20pct_of_tuned,
        report.points,
        ratios.join(" "),
        100.0 * report.ann_constraint_satisfaction,
        100.0 * report.fixed_constraint_satisfaction,
    );
    let ok = summary.succeeded >= 20
        && report.compared_with_tuned == report.points
        && report.within_20pct_of_tuned == report.points
        && report.ann_constraint_satisfaction >= 0.9
        && elapsed < Duration::from_secs(1800);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("transforms", Duration::from_secs(1), transforms),
        ("fsmpc optimality", Duration::from_secs(10), fsmpc),
        ("plant integrity", Duration::from_secs(10), plant),
        ("indicators", Duration::from_secs(5), indicators),
        ("closed loop", Duration::from_secs(60), closed_loop),
        ("tuner", Duration::from_secs(600), tuner),
        ("ann", Duration::from_secs(60), ann),
        ("end-to-end pipeline", Duration::from_secs(1800), end_to_end),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let t0 = Instant::now();
        let mut outcome = run();
        let elapsed = t0.elapsed();
        if outcome.is_ok() && elapsed > budget {
            outcome = Err(format!("took {:.1} s, budget {} s", elapsed.as_secs_f64(), budget.as_secs()));
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {name} ({:.2} s): {detail}", elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
