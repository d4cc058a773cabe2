//! The five pipeline subcommands as library functions. Each returns the
//! values it wrote so callers and tests can compare against direct library
//! calls.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use fsmpc_core::ann::{samples_from_dataset, train, MlpModel, OnlineTuner, TrainReport};
use fsmpc_core::control::ControllerParams;
use fsmpc_core::metrics::{compute_all, IndicatorVector};
use fsmpc_core::sim::{run_step_test, run_step_test_scheduled, StepTestScenario};
use fsmpc_core::trace::Trace;
use fsmpc_core::tuner::{
    build_dataset, descend, gradient_descent_tune, point_seed, read_dataset, write_dataset, DatasetOutcome,
    DatasetRecord, OperatingPoint, PointFailure, QuadraticSurrogate, StartStrategy, StopReason, TuneResult,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{write_atomic, write_json};

pub const DATASET_FILE: &str = "dataset.csv";
pub const DATASET_SUMMARY_FILE: &str = "dataset_summary.json";
pub const MODEL_FILE: &str = "model.txt";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const TUNE_FILE: &str = "tune_result.json";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const EVALUATION_TABLE_FILE: &str = "evaluation_table.csv";

/// Resolved settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

impl Context {
    /// `out` and `seed` override the configuration's values.
    pub fn new(config: RunConfig, out: Option<PathBuf>, seed: Option<u64>, workers: usize) -> Self {
        let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
        let seed = seed.unwrap_or(config.seed);
        Context { config, out_dir, seed, workers: workers.max(1) }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn pool(&self) -> CliResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorFile {
    pub scenario: StepTestScenario,
    pub seed: u64,
    pub indicators: IndicatorVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    pub traces: Vec<Trace>,
    pub indicators: Vec<IndicatorVector>,
}

pub fn trace_file(i: usize) -> String {
    format!("trace_{i}.csv")
}

pub fn indicator_file(i: usize) -> String {
    format!("indicators_{i}.json")
}

/// Runs every configured scenario; writes `trace_<i>.csv` and
/// `indicators_<i>.json`.
pub fn cmd_simulate(ctx: &Context) -> CliResult<SimulateOutput> {
    let cfg = &ctx.config;
    let scenarios = cfg.scenarios();
    if scenarios.is_empty() {
        return Err(CliError::Config("no scenarios configured".into()));
    }
    let runs: Vec<CliResult<(Trace, IndicatorVector)>> = ctx.pool()?.install(|| {
        scenarios
            .par_iter()
            .enumerate()
            .map(|(i, sc)| {
                let tr = run_step_test(&cfg.sim, sc, point_seed(ctx.seed, i))?;
                let pi = compute_all(&tr)?;
                Ok((tr, pi))
            })
            .collect()
    });
    let mut out = SimulateOutput { traces: Vec::new(), indicators: Vec::new() };
    for (i, (run, sc)) in runs.into_iter().zip(&scenarios).enumerate() {
        let (tr, pi) = run?;
        write_atomic(&ctx.path(&trace_file(i)), |w| Ok(tr.write_csv(w)?))?;
        let file = IndicatorFile { scenario: sc.clone(), seed: point_seed(ctx.seed, i), indicators: pi };
        write_json(&ctx.path(&indicator_file(i)), &file)?;
        out.traces.push(tr);
        out.indicators.push(pi);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuneTarget {
    /// Tune on closed-loop step tests at an operating point.
    Simulation(OperatingPoint),
    /// Minimise `‖θ − target‖²` without simulating.
    Surrogate(ControllerParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneFile {
    pub x: Option<OperatingPoint>,
    pub surrogate_target: Option<ControllerParams>,
    pub theta0: ControllerParams,
    pub seed: u64,
    pub result: TuneResult,
}

/// Tunes θ from θ0 and writes `tune_result.json`. An infeasible result is
/// not an error.
pub fn cmd_tune(ctx: &Context, target: TuneTarget) -> CliResult<TuneFile> {
    let setup = ctx.config.tuning_setup();
    let theta0 = setup.nominal_theta();
    let result = match target {
        TuneTarget::Simulation(x) => ctx.pool()?.install(|| gradient_descent_tune(&setup, &x, &theta0, ctx.seed))?,
        TuneTarget::Surrogate(t) => {
            setup.validate()?;
            descend(&QuadraticSurrogate { target: t }, &theta0, &setup.bounds, &setup.options, &|_| true)
        }
    };
    let file = TuneFile {
        x: match target {
            TuneTarget::Simulation(x) => Some(x),
            TuneTarget::Surrogate(_) => None,
        },
        surrogate_target: match target {
            TuneTarget::Surrogate(t) => Some(t),
            TuneTarget::Simulation(_) => None,
        },
        theta0,
        seed: ctx.seed,
        result,
    };
    write_json(&ctx.path(TUNE_FILE), &file)?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub x: OperatingPoint,
    pub theta_star: ControllerParams,
    pub xi_star: f64,
    pub xi_penalized: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub attempted: usize,
    pub succeeded: usize,
    pub feasible: usize,
    /// Step tests run over the sweep.
    pub evaluations: usize,
    pub start: StartStrategy,
    pub seed: u64,
    pub failures: Vec<PointFailure>,
    pub points: Vec<PointSummary>,
}

/// Tunes every grid point; writes `dataset.csv` and `dataset_summary.json`.
pub fn cmd_dataset(ctx: &Context) -> CliResult<DatasetOutcome> {
    let cfg = &ctx.config;
    let grid = cfg.grid_points();
    if grid.is_empty() {
        return Err(CliError::Config("grid yields no operating points".into()));
    }
    let outcome = build_dataset(&cfg.tuning_setup(), &grid, cfg.start, ctx.seed, ctx.workers)?;
    write_atomic(&ctx.path(DATASET_FILE), |w| Ok(write_dataset(&outcome.records, w)?))?;
    let points: Vec<PointSummary> = outcome
        .records
        .iter()
        .zip(&outcome.results)
        .map(|(rec, r)| PointSummary {
            x: rec.x,
            theta_star: r.theta_star,
            xi_star: r.xi_star,
            xi_penalized: r.xi_penalized,
            feasible: r.feasible,
            iterations: r.iterations,
            evaluations: r.evaluations,
            stop_reason: r.stop_reason,
        })
        .collect();
    let summary = DatasetSummary {
        attempted: grid.len(),
        succeeded: outcome.records.len(),
        feasible: points.iter().filter(|p| p.feasible).count(),
        evaluations: outcome.evaluations,
        start: cfg.start,
        seed: ctx.seed,
        failures: outcome.failures.clone(),
        points,
    };
    write_json(&ctx.path(DATASET_SUMMARY_FILE), &summary)?;
    Ok(outcome)
}

pub fn load_dataset(path: &Path) -> CliResult<Vec<DatasetRecord>> {
    let f = File::open(path).map_err(|e| data_err(path, e))?;
    read_dataset(BufReader::new(f)).map_err(|e| data_err(path, e))
}

pub fn load_model(path: &Path) -> CliResult<MlpModel> {
    let f = File::open(path).map_err(|e| data_err(path, e))?;
    MlpModel::load(BufReader::new(f)).map_err(|e| match CliError::from(e) {
        CliError::Compatibility(m) => CliError::Compatibility(format!("{}: {m}", path.display())),
        other => data_err(path, other),
    })
}

/// Trains the network on a dataset file; writes `model.txt` and
/// `train_report.json`.
pub fn cmd_train(ctx: &Context, dataset: &Path) -> CliResult<(MlpModel, TrainReport)> {
    let records = load_dataset(dataset)?;
    let samples = samples_from_dataset(&records);
    let (model, report) = train(&samples, &ctx.config.bounds, &ctx.config.train)?;
    write_atomic(&ctx.path(MODEL_FILE), |w| Ok(model.save(w)?))?;
    write_json(&ctx.path(TRAIN_REPORT_FILE), &report)?;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedReference {
    pub theta_star: ControllerParams,
    pub indicators_star: IndicatorVector,
    pub xi_star: f64,
    /// `Ξ_ann / Ξ_star`.
    pub xi_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub x: OperatingPoint,
    pub seed: u64,
    pub theta0: ControllerParams,
    /// Network output at `(ω0, ω*)`.
    pub theta_ann_at_step: ControllerParams,
    /// Online tuner state at the end of the run.
    pub theta_ann_final: ControllerParams,
    pub fixed: IndicatorVector,
    pub ann: IndicatorVector,
    /// Objective values normalised by the fixed-θ0 run at the same point.
    pub xi_fixed: f64,
    pub xi_ann: f64,
    pub fixed_feasible: bool,
    pub ann_feasible: bool,
    pub tuned: Option<TunedReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rate_limit: Option<f64>,
    pub points: usize,
    pub fixed_constraint_satisfaction: f64,
    pub ann_constraint_satisfaction: f64,
    /// Points with a matching dataset record.
    pub compared_with_tuned: usize,
    /// Of those, points where `Ξ_ann ≤ 1.2·Ξ_star`.
    pub within_20pct_of_tuned: usize,
    pub max_xi_ratio: Option<f64>,
    pub rows: Vec<EvaluationRow>,
}

pub fn plot_file(i: usize, which: &str) -> String {
    format!("plot_{i}_{which}.csv")
}

fn write_plot(path: &Path, tr: &Trace, stride: usize) -> CliResult<()> {
    write_atomic(path, |w| {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        writeln!(w, "t,omega_ref,omega_m,i_alpha,i_beta,i_x,i_y,u").map_err(io)?;
        for r in tr.rows.iter().step_by(stride.max(1)) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.t, r.omega_ref, r.omega_m, r.i_meas[0], r.i_meas[1], r.i_meas[2], r.i_meas[3],
                r.u.bit_string()
            )
            .map_err(io)?;
        }
        Ok(())
    })
}

/// Decimation of the plot time series.
pub const PLOT_STRIDE: usize = 10;

struct PointRun {
    row: EvaluationRow,
    fixed_trace: Trace,
    ann_trace: Trace,
}

/// Closed-loop comparison of fixed θ0 against the online ANN tuner; writes
/// `evaluation.json`, `evaluation_table.csv` and, if enabled, per-point
/// plot series.
pub fn cmd_evaluate(ctx: &Context, model_path: &Path, dataset: Option<&Path>) -> CliResult<EvaluationReport> {
    let cfg = &ctx.config;
    let model = load_model(model_path)?;
    if model.bounds != cfg.bounds {
        return Err(CliError::Compatibility(format!(
            "model bounds {:?} differ from configured bounds {:?}",
            model.bounds, cfg.bounds
        )));
    }
    let tuned: HashMap<(u64, u64), DatasetRecord> = match dataset {
        Some(p) => load_dataset(p)?
            .into_iter()
            .map(|r| ((r.x.omega0.to_bits(), r.x.omega_ref.to_bits()), r))
            .collect(),
        None => HashMap::new(),
    };
    let points = cfg.evaluation_points();
    if points.is_empty() {
        return Err(CliError::Config("no evaluation points".into()));
    }
    let setup = cfg.tuning_setup();
    let theta0 = setup.nominal_theta();
    let rate_limit = cfg.evaluate.rate_limit;

    let runs: Vec<CliResult<PointRun>> = ctx.pool()?.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, x)| -> CliResult<PointRun> {
                let seed = point_seed(ctx.seed, i);
                let sc = setup.scenario(x, theta0);
                let fixed_trace = run_step_test(&cfg.sim, &sc, seed)?;
                let fixed = compute_all(&fixed_trace)?;
                let mut tuner = OnlineTuner::new(&model, theta0, rate_limit);
                let ann_trace = run_step_test_scheduled(&cfg.sim, &sc, seed, &mut tuner)?;
                let ann = compute_all(&ann_trace)?;
                let norm = cfg.objective.normalized(&fixed);
                let xi_ann = norm.raw(&ann);
                let tuned = tuned.get(&(x.omega0.to_bits(), x.omega_ref.to_bits())).map(|r| {
                    let xi_star = norm.raw(&r.indicators_star);
                    TunedReference {
                        theta_star: r.theta_star,
                        indicators_star: r.indicators_star,
                        xi_star,
                        xi_ratio: xi_ann / xi_star,
                    }
                });
                let row = EvaluationRow {
                    x: *x,
                    seed,
                    theta0,
                    theta_ann_at_step: model.forward(x.omega0, x.omega_ref),
                    theta_ann_final: tuner.current(),
                    fixed,
                    ann,
                    xi_fixed: norm.raw(&fixed),
                    xi_ann,
                    fixed_feasible: cfg.objective.is_feasible(&fixed),
                    ann_feasible: cfg.objective.is_feasible(&ann),
                    tuned,
                };
                Ok(PointRun { row, fixed_trace, ann_trace })
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(points.len());
    for (i, run) in runs.into_iter().enumerate() {
        let run = run?;
        if cfg.evaluate.plot_csv {
            write_plot(&ctx.path(&plot_file(i, "fixed")), &run.fixed_trace, PLOT_STRIDE)?;
            write_plot(&ctx.path(&plot_file(i, "ann")), &run.ann_trace, PLOT_STRIDE)?;
        }
        rows.push(run.row);
    }

    let n = rows.len() as f64;
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.tuned.as_ref().map(|t| t.xi_ratio)).collect();
    let report = EvaluationReport {
        rate_limit,
        points: rows.len(),
        fixed_constraint_satisfaction: rows.iter().filter(|r| r.fixed_feasible).count() as f64 / n,
        ann_constraint_satisfaction: rows.iter().filter(|r| r.ann_feasible).count() as f64 / n,
        compared_with_tuned: ratios.len(),
        within_20pct_of_tuned: ratios.iter().filter(|r| **r <= 1.2).count(),
        max_xi_ratio: ratios.iter().cloned().reduce(f64::max),
        rows,
    };
    write_json(&ctx.path(EVALUATION_FILE), &report)?;
    write_atomic(&ctx.path(EVALUATION_TABLE_FILE), |w| write_table(w, &report.rows))?;
    Ok(report)
}

fn write_table(w: &mut dyn Write, rows: &[EvaluationRow]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let names = ["PO", "Tr", "ITAE", "Rt", "Exy", "ASF"];
    let fixed: Vec<String> = names.iter().map(|n| format!("fixed_{n}")).collect();
    let ann: Vec<String> = names.iter().map(|n| format!("ann_{n}")).collect();
    writeln!(w, "omega0,omega_ref,{},{},xi_fixed,xi_ann,xi_star", fixed.join(","), ann.join(",")).map_err(io)?;
    let join = |v: [f64; 6]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    for r in rows {
        let star = r.tuned.as_ref().map(|t| t.xi_star.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.x.omega0,
            r.x.omega_ref,
            join(r.fixed.to_array()),
            join(r.ann.to_array()),
            r.xi_fixed,
            r.xi_ann,
            star
        )
        .map_err(io)?;
    }
    Ok(())
}
