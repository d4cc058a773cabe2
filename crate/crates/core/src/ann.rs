//! Multilayer perceptron `θ = f(ω, ω*)`.
//!
//! Topology 2 → H → 4: logistic hidden units, linear outputs, biases on every
//! unit. Inputs and outputs are standardised with statistics taken from the
//! training split; the weighting factors are regressed as `log10 λ`.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::ControllerParams;
use crate::error::{Error, Result};
use crate::sim::ThetaSchedule;
use crate::tuner::{DatasetRecord, ThetaBounds, LOG_COMPONENTS};

pub const MODEL_FORMAT: &str = "fsmpc-mlp";
pub const MODEL_VERSION: u32 = 1;

/// One training pair: `x = (ω, ω*)` and the target θ.
pub type Sample = ([f64; 2], ControllerParams);

/// Logistic function.
pub fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    hidden: usize,
    /// `[w1 (H×2, row-major), b1 (H), w2 (4×H, row-major), b2 (4)]`.
    weights: Vec<f64>,
    pub x_mean: [f64; 2],
    pub x_std: [f64; 2],
    pub y_mean: [f64; 4],
    pub y_std: [f64; 4],
    /// Output clipping range; also what the model is compatible with.
    pub bounds: ThetaBounds,
}

/// Number of trainable parameters for `hidden` units.
pub fn param_count(hidden: usize) -> usize {
    7 * hidden + 4
}

/// θ in regression space: `(kp, ki, log10 λxy, log10 λsc)`.
pub fn theta_to_output(t: &ControllerParams) -> [f64; 4] {
    let v = t.to_array();
    std::array::from_fn(|i| if LOG_COMPONENTS[i] { v[i].log10() } else { v[i] })
}

pub fn output_to_theta(y: &[f64; 4]) -> ControllerParams {
    ControllerParams::from_array(std::array::from_fn(|i| if LOG_COMPONENTS[i] { 10f64.powf(y[i]) } else { y[i] }))
}

impl MlpModel {
    /// Model with all weights zero and identity normalisation.
    pub fn zeros(hidden: usize, bounds: ThetaBounds) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Training("hidden layer needs at least one unit".into()));
        }
        Ok(MlpModel {
            hidden,
            weights: vec![0.0; param_count(hidden)],
            x_mean: [0.0; 2],
            x_std: [1.0; 2],
            y_mean: [0.0; 4],
            y_std: [1.0; 4],
            bounds,
        })
    }

    /// Uniform `±1/√fan_in` initialisation.
    pub fn random(hidden: usize, bounds: ThetaBounds, rng: &mut impl Rng) -> Result<Self> {
        let mut m = Self::zeros(hidden, bounds)?;
        let h = hidden;
        let s1 = 1.0 / 2f64.sqrt();
        let s2 = 1.0 / (h as f64).sqrt();
        for (k, w) in m.weights.iter_mut().enumerate() {
            let scale = if k < 3 * h { s1 } else { s2 };
            *w = rng.gen_range(-scale..scale);
        }
        Ok(m)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.weights.len() {
            return Err(Error::Training(format!("expected {} weights, got {}", self.weights.len(), w.len())));
        }
        self.weights.copy_from_slice(w);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Training(m.into()));
        if self.hidden == 0 || self.weights.len() != param_count(self.hidden) {
            return bad("inconsistent layer sizes");
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return bad("non-finite weight");
        }
        if self.x_std.iter().chain(&self.y_std).any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("normalisation std must be positive");
        }
        if self.x_mean.iter().chain(&self.y_mean).any(|m| !m.is_finite()) {
            return bad("non-finite normalisation mean");
        }
        self.bounds.validate()
    }

    fn normalize_x(&self, x: &[f64; 2]) -> [f64; 2] {
        std::array::from_fn(|i| (x[i] - self.x_mean[i]) / self.x_std[i])
    }

    fn normalize_y(&self, y: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|o| (y[o] - self.y_mean[o]) / self.y_std[o])
    }

    /// Network output in normalised space, plus the hidden activations.
    fn propagate(&self, xn: &[f64; 2], hidden: &mut [f64]) -> [f64; 4] {
        let h = self.hidden;
        let (w1, rest) = self.weights.split_at(2 * h);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(4 * h);
        for j in 0..h {
            hidden[j] = sigmoid(w1[2 * j] * xn[0] + w1[2 * j + 1] * xn[1] + b1[j]);
        }
        std::array::from_fn(|o| b2[o] + (0..h).map(|j| w2[o * h + j] * hidden[j]).sum::<f64>())
    }

    /// Unclipped output in regression space.
    pub fn predict_output(&self, omega: f64, omega_ref: f64) -> [f64; 4] {
        let mut hid = vec![0.0; self.hidden];
        let yn = self.propagate(&self.normalize_x(&[omega, omega_ref]), &mut hid);
        std::array::from_fn(|o| yn[o] * self.y_std[o] + self.y_mean[o])
    }

    /// `θ = f(ω, ω*)`, clipped to the model's bounds.
    pub fn forward(&self, omega: f64, omega_ref: f64) -> ControllerParams {
        let y = self.predict_output(omega, omega_ref);
        // a non-finite output clips to the lower bound
        let t = output_to_theta(&y);
        let v = t.to_array().map(|c| if c.is_nan() { f64::NEG_INFINITY } else { c });
        self.bounds.clip(&ControllerParams::from_array(v))
    }

    /// Mean squared error over samples and outputs in normalised output
    /// space, and its gradient with respect to [`MlpModel::weights`].
    pub fn loss_and_gradient(&self, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Training("empty batch".into()));
        }
        let h = self.hidden;
        let mut grad = vec![0.0; self.weights.len()];
        let mut hid = vec![0.0; h];
        let w2 = &self.weights[3 * h..7 * h];
        let scale = 1.0 / (4 * batch.len()) as f64;
        let mut loss = 0.0;
        for (x, t) in batch {
            let xn = self.normalize_x(x);
            let tn = self.normalize_y(&theta_to_output(t));
            let yn = self.propagate(&xn, &mut hid);
            let mut delta_out = [0.0; 4];
            for o in 0..4 {
                let e = yn[o] - tn[o];
                loss += e * e;
                delta_out[o] = 2.0 * e * scale;
            }
            let (g1, rest) = grad.split_at_mut(2 * h);
            let (gb1, rest) = rest.split_at_mut(h);
            let (g2, gb2) = rest.split_at_mut(4 * h);
            for o in 0..4 {
                gb2[o] += delta_out[o];
                for j in 0..h {
                    g2[o * h + j] += delta_out[o] * hid[j];
                }
            }
            for j in 0..h {
                let back: f64 = (0..4).map(|o| delta_out[o] * w2[o * h + j]).sum();
                let d = back * hid[j] * (1.0 - hid[j]);
                gb1[j] += d;
                g1[2 * j] += d * xn[0];
                g1[2 * j + 1] += d * xn[1];
            }
        }
        Ok((loss * scale, grad))
    }

    pub fn loss(&self, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Training("empty batch".into()));
        }
        let mut hid = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for (x, t) in batch {
            let tn = self.normalize_y(&theta_to_output(t));
            let yn = self.propagate(&self.normalize_x(x), &mut hid);
            loss += (0..4).map(|o| (yn[o] - tn[o]).powi(2)).sum::<f64>();
        }
        Ok(loss / (4 * batch.len()) as f64)
    }

    /// Per-output RMS error in regression space (unclipped).
    pub fn rmse(&self, batch: &[Sample]) -> [f64; 4] {
        let mut acc = [0.0; 4];
        for (x, t) in batch {
            let y = self.predict_output(x[0], x[1]);
            let target = theta_to_output(t);
            for o in 0..4 {
                acc[o] += (y[o] - target[o]).powi(2);
            }
        }
        acc.map(|a| (a / batch.len().max(1) as f64).sqrt())
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let h = self.hidden;
        let row = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(w, "{MODEL_FORMAT} {MODEL_VERSION}")?;
        writeln!(w, "layers 2 {h} 4")?;
        writeln!(w, "bounds_lo {}", row(&self.bounds.lo.to_array()))?;
        writeln!(w, "bounds_hi {}", row(&self.bounds.hi.to_array()))?;
        writeln!(w, "x_mean {}", row(&self.x_mean))?;
        writeln!(w, "x_std {}", row(&self.x_std))?;
        writeln!(w, "y_mean {}", row(&self.y_mean))?;
        writeln!(w, "y_std {}", row(&self.y_std))?;
        let (w1, rest) = self.weights.split_at(2 * h);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(4 * h);
        for r in w1.chunks(2) {
            writeln!(w, "w1 {}", row(r))?;
        }
        writeln!(w, "b1 {}", row(b1))?;
        for r in w2.chunks(h) {
            writeln!(w, "w2 {}", row(r))?;
        }
        writeln!(w, "b2 {}", row(b2))?;
        writeln!(w, "end")?;
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut last_line = 0;
        let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
            let (n, line) = lines.next().ok_or_else(|| Error::ModelFormat {
                line: last_line + 1,
                message: format!("unexpected end of file, expected '{key}'"),
            })?;
            last_line = n;
            let line = line?;
            let mut it = line.split_whitespace().map(str::to_owned);
            match it.next() {
                Some(k) if k == key => Ok((n, it.collect())),
                other => Err(Error::ModelFormat {
                    line: n,
                    message: format!("expected '{key}', found '{}'", other.unwrap_or_default()),
                }),
            }
        };
        let nums = |(n, f): (usize, Vec<String>), len: usize| -> Result<Vec<f64>> {
            if f.len() != len {
                return Err(Error::ModelFormat { line: n, message: format!("expected {len} values, got {}", f.len()) });
            }
            f.iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::ModelFormat { line: n, message: format!("'{s}': {e}") }))
                .collect()
        };

        let (n, head) = next(MODEL_FORMAT)?;
        let version: u32 = head
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::ModelFormat { line: n, message: "missing version".into() })?;
        if version != MODEL_VERSION {
            return Err(Error::ModelVersion { found: version, expected: MODEL_VERSION });
        }
        let layers = next("layers")?;
        let ln = layers.0;
        let sizes: Vec<usize> = layers
            .1
            .iter()
            .map(|s| s.parse().map_err(|_| Error::ModelFormat { line: ln, message: format!("bad layer size '{s}'") }))
            .collect::<Result<_>>()?;
        if sizes.len() != 3 || sizes[0] != 2 || sizes[2] != 4 || sizes[1] == 0 {
            return Err(Error::ModelFormat { line: ln, message: "layers must be '2 H 4' with H >= 1".into() });
        }
        let h = sizes[1];
        let arr4 = |v: Vec<f64>| -> [f64; 4] { std::array::from_fn(|i| v[i]) };
        let lo = arr4(nums(next("bounds_lo")?, 4)?);
        let hi = arr4(nums(next("bounds_hi")?, 4)?);
        let xm = nums(next("x_mean")?, 2)?;
        let xs = nums(next("x_std")?, 2)?;
        let ym = arr4(nums(next("y_mean")?, 4)?);
        let ys = arr4(nums(next("y_std")?, 4)?);
        let mut weights = Vec::with_capacity(param_count(h));
        for _ in 0..h {
            weights.extend(nums(next("w1")?, 2)?);
        }
        weights.extend(nums(next("b1")?, h)?);
        for _ in 0..4 {
            weights.extend(nums(next("w2")?, h)?);
        }
        weights.extend(nums(next("b2")?, 4)?);
        let (end_line, _) = next("end")?;
        let m = MlpModel {
            hidden: h,
            weights,
            x_mean: [xm[0], xm[1]],
            x_std: [xs[0], xs[1]],
            y_mean: ym,
            y_std: ys,
            bounds: ThetaBounds { lo: ControllerParams::from_array(lo), hi: ControllerParams::from_array(hi) },
        };
        m.validate().map_err(|e| Error::ModelFormat { line: end_line, message: e.to_string() })?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Step growth after an accepted epoch.
    pub lr_grow: f64,
    /// Step shrink after a rejected epoch.
    pub lr_shrink: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    /// Held out for the final test evaluation; never used for selection.
    pub test_fraction: f64,
    /// Record every n-th epoch in the reported curves.
    pub curve_stride: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_sizes: vec![2, 4, 8, 16],
            max_epochs: 20_000,
            learning_rate: 0.1,
            lr_grow: 1.05,
            lr_shrink: 0.5,
            patience: 2_000,
            validation_fraction: 0.2,
            test_fraction: 0.1,
            curve_stride: 10,
            seed: 0,
        }
    }
}

/// Smallest dataset `train` accepts.
pub const MIN_DATASET: usize = 10;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad("hidden_sizes must be non-empty and positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return bad("validation_fraction must lie in (0, 0.5]");
        }
        if !(self.test_fraction >= 0.0 && self.validation_fraction + self.test_fraction < 1.0) {
            return bad("test_fraction must be non-negative and leave training samples");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.lr_grow >= 1.0 && self.lr_shrink > 0.0 && self.lr_shrink < 1.0) {
            return bad("need learning_rate > 0, lr_grow >= 1, 0 < lr_shrink < 1");
        }
        if self.curve_stride == 0 {
            return bad("curve_stride must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub hidden: usize,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub final_train_loss: f64,
    /// `(epoch, train loss, validation loss, best validation loss so far)`.
    pub curve: Vec<(usize, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub candidates: Vec<CandidateReport>,
    pub selected_hidden: usize,
    /// Per-output RMS error of the selected model in regression space.
    pub validation_rmse: [f64; 4],
    pub test_rmse: Option<[f64; 4]>,
    /// Per-output standard deviation of the training targets.
    pub output_std: [f64; 4],
}

/// Pairs `((ω0, ω*), θ*)` from dataset records.
pub fn samples_from_dataset(records: &[DatasetRecord]) -> Vec<Sample> {
    records.iter().map(|r| ([r.x.omega0, r.x.omega_ref], r.theta_star)).collect()
}

fn mean_std<const N: usize>(rows: impl Iterator<Item = [f64; N]> + Clone) -> ([f64; N], [f64; N]) {
    let n = rows.clone().count().max(1) as f64;
    let mut mean = [0.0; N];
    for r in rows.clone() {
        for i in 0..N {
            mean[i] += r[i] / n;
        }
    }
    let mut var = [0.0; N];
    for r in rows {
        for i in 0..N {
            var[i] += (r[i] - mean[i]).powi(2) / n;
        }
    }
    let std = var.map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
    (mean, std)
}

/// Seeded train/validation/test split.
pub fn split(samples: &[Sample], cfg: &TrainConfig) -> (Vec<Sample>, Vec<Sample>, Vec<Sample>) {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n = samples.len();
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).max(1);
    let n_test = (n as f64 * cfg.test_fraction).round() as usize;
    let pick = |r: &[usize]| r.iter().map(|&i| samples[i]).collect::<Vec<_>>();
    (pick(&idx[n_val + n_test..]), pick(&idx[..n_val]), pick(&idx[n_val..n_val + n_test]))
}

/// Trains one candidate with full-batch gradient descent and early stopping;
/// returns the best-validation weights.
fn train_candidate(
    init: MlpModel,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<(MlpModel, CandidateReport)> {
    let mut model = init;
    let (mut loss, mut grad) = model.loss_and_gradient(train)?;
    let mut lr = cfg.learning_rate;
    let mut best = model.weights.clone();
    let mut best_val = model.loss(val)?;
    let mut best_epoch = 0;
    let mut curve = vec![(0, loss, best_val, best_val)];
    let mut epoch = 0;
    let mut trial = model.clone();
    while epoch < cfg.max_epochs && epoch - best_epoch < cfg.patience {
        epoch += 1;
        for (t, (w, g)) in trial.weights.iter_mut().zip(model.weights.iter().zip(&grad)) {
            *t = w - lr * g;
        }
        let (l, g) = trial.loss_and_gradient(train)?;
        if l < loss {
            std::mem::swap(&mut model, &mut trial);
            loss = l;
            grad = g;
            lr *= cfg.lr_grow;
        } else {
            lr *= cfg.lr_shrink;
            if lr < 1e-300 {
                break;
            }
        }
        let v = model.loss(val)?;
        if v < best_val {
            best_val = v;
            best_epoch = epoch;
            best.copy_from_slice(&model.weights);
        }
        if epoch % cfg.curve_stride == 0 {
            curve.push((epoch, loss, v, best_val));
        }
    }
    if !loss.is_finite() {
        return Err(Error::Training(format!("training loss diverged for H={}", model.hidden)));
    }
    model.weights = best;
    let report = CandidateReport {
        hidden: model.hidden,
        best_val_loss: best_val,
        best_epoch,
        stop_epoch: epoch,
        final_train_loss: loss,
        curve,
    };
    Ok((model, report))
}

/// Cross-validated training over the candidate hidden sizes.
pub fn train(samples: &[Sample], bounds: &ThetaBounds, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    bounds.validate()?;
    if samples.len() < MIN_DATASET {
        return Err(Error::Training(format!(
            "dataset has {} samples, at least {MIN_DATASET} required",
            samples.len()
        )));
    }
    if samples.iter().any(|(x, t)| x.iter().chain(&t.to_array()).any(|v| !v.is_finite())) {
        return Err(Error::Training("dataset contains non-finite values".into()));
    }
    let (tr, val, test) = split(samples, cfg);
    let (x_mean, x_std) = mean_std(tr.iter().map(|(x, _)| *x));
    let (y_mean, y_std) = mean_std(tr.iter().map(|(_, t)| theta_to_output(t)));

    let mut best: Option<MlpModel> = None;
    let mut candidates = Vec::new();
    for (c, &h) in cfg.hidden_sizes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1 + c as u64));
        let mut init = MlpModel::random(h, bounds.clone(), &mut rng)?;
        init.x_mean = x_mean;
        init.x_std = x_std;
        init.y_mean = y_mean;
        init.y_std = y_std;
        let (m, rep) = train_candidate(init, &tr, &val, cfg)?;
        let better = candidates
            .iter()
            .all(|r: &CandidateReport| rep.best_val_loss < r.best_val_loss);
        if better {
            best = Some(m);
        }
        candidates.push(rep);
    }
    let model = best.ok_or_else(|| Error::Training("no candidate trained".into()))?;
    let report = TrainReport {
        n_train: tr.len(),
        n_validation: val.len(),
        n_test: test.len(),
        selected_hidden: model.hidden,
        validation_rmse: model.rmse(&val),
        test_rmse: (!test.is_empty()).then(|| model.rmse(&test)),
        output_std: y_std,
        candidates,
    };
    Ok((model, report))
}

/// Largest per-call change of a θ component as a fraction of its range.
pub const DEFAULT_RATE_LIMIT: f64 = 0.1;

/// ANN tuner for closed-loop use.
///
/// Each call moves θ towards `f(ω, ω*)` by at most `rate_limit` of every
/// component's range, measured in the normalised parameter space (linear for
/// gains, decades for weighting factors). `None` disables the limiter.
#[derive(Debug, Clone)]
pub struct OnlineTuner<'a> {
    model: &'a MlpModel,
    rate_limit: Option<f64>,
    current: ControllerParams,
}

impl<'a> OnlineTuner<'a> {
    pub fn new(model: &'a MlpModel, initial: ControllerParams, rate_limit: Option<f64>) -> Self {
        OnlineTuner { model, rate_limit, current: model.bounds.clip(&initial) }
    }

    pub fn current(&self) -> ControllerParams {
        self.current
    }

    pub fn online_tune(&mut self, omega: f64, omega_ref: f64) -> ControllerParams {
        let target = self.model.forward(omega, omega_ref);
        self.current = match self.rate_limit {
            None => target,
            Some(r) => {
                let b = &self.model.bounds;
                let (z0, z1) = (b.to_normalized(&self.current), b.to_normalized(&target));
                let z: [f64; 4] = std::array::from_fn(|i| z0[i] + (z1[i] - z0[i]).clamp(-r, r));
                if z == z1 {
                    target
                } else {
                    b.from_normalized(&z)
                }
            }
        };
        self.current
    }
}

impl ThetaSchedule for OnlineTuner<'_> {
    fn theta(&mut self, omega_m: f64, omega_ref: f64) -> ControllerParams {
        self.online_tune(omega_m, omega_ref)
    }
}
