//! Cascade drive control: PI speed loop, indirect field orientation and the
//! finite-state predictive current controller.
//!
//! Reference convention: the d axis sits at the flux angle `σ`, so the
//! stationary current reference is `inverse_park((i*_d, i*_q), σ)`, i.e.
//! `i*_α = I*·cos(σ + δ)`, `i*_β = I*·sin(σ + δ)` with `δ = atan2(i*_q, i*_d)`.
//! This is the same rotating vector as the sin/cos form with the angle origin
//! shifted by a quarter turn.
//!
//! Order of operations inside one controller tick `k` (see
//! [`DriveController::step`]):
//!
//! 1. speed PI (every `speed_decimation` ticks, after the flux ramp),
//! 2. `ifoc_update`, advancing `σ` to tick `k+1`,
//! 3. `generate_current_refs` at the k+2 angle `σ(k+1) + ω_e·Ts`,
//! 4. `fsmpc_select` with the committed `U(k)` and the observer's rotor
//!    current estimate,
//! 5. rotor observer advance using the measured `i(k)` and `U(k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{build_prediction_model, MachineParams, PredictionModel, NX};
use crate::transforms::{
    enumerate_switch_states, inverse_park, wrap_angle, AlphaBetaXY, DqFrame, SwitchState,
    NUM_STATES,
};

/// Tuned controller parameters `θ = (kp, ki, λ_xy, λ_sc)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    pub kp: f64,
    pub ki: f64,
    pub lambda_xy: f64,
    pub lambda_sc: f64,
}

impl ControllerParams {
    pub fn new(kp: f64, ki: f64, lambda_xy: f64, lambda_sc: f64) -> Self {
        ControllerParams { kp, ki, lambda_xy, lambda_sc }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.kp, self.ki, self.lambda_xy, self.lambda_sc]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ControllerParams::new(a[0], a[1], a[2], a[3])
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in ["kp", "ki", "lambda_xy", "lambda_sc"].iter().zip(self.to_array()) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("theta.{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Speed PI integrator state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiState {
    /// Accumulated speed error (rad).
    pub integral: f64,
    /// Symmetric saturation on `i*_q` (A).
    pub output_limit: f64,
    prev_error: Option<f64>,
}

impl PiState {
    pub fn new(output_limit: f64) -> Self {
        PiState { integral: 0.0, output_limit, prev_error: None }
    }
}

/// One PI update: `i*_q = kp·e + ki·∫e`, trapezoidal integration, saturated at
/// `±output_limit`. The integrator is frozen when the output saturates and the
/// error pushes further into saturation.
pub fn pi_speed_step(
    omega_ref: f64,
    omega_m: f64,
    st: &mut PiState,
    theta: &ControllerParams,
    dt: f64,
) -> f64 {
    let e = omega_ref - omega_m;
    let prev = st.prev_error.unwrap_or(e);
    st.prev_error = Some(e);
    let limit = st.output_limit;

    let candidate = st.integral + 0.5 * (prev + e) * dt;
    let unsat = theta.kp * e + theta.ki * candidate;
    let pushing = (unsat > limit && e > 0.0) || (unsat < -limit && e < 0.0);
    if !pushing {
        st.integral = candidate;
    }
    if theta.ki > 0.0 {
        let cap = limit / theta.ki;
        st.integral = st.integral.clamp(-cap, cap);
    }
    (theta.kp * e + theta.ki * st.integral).clamp(-limit, limit)
}

/// Field-orientation state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IfocState {
    /// Flux-producing current command (A).
    pub i_d_ref: f64,
    /// Flux angle (rad), in `[0, 2π)`.
    pub sigma: f64,
    /// Synchronous electrical speed (rad/s).
    pub omega_e: f64,
}

impl IfocState {
    pub fn new(i_d_ref: f64) -> Self {
        IfocState { i_d_ref, sigma: 0.0, omega_e: 0.0 }
    }
}

/// Slip estimate `ω_sl = (Rr/Lr)·i*_q/i*_d`, `ω_e = P·ω_m + ω_sl`, `σ += ω_e·dt`.
pub fn ifoc_update(
    st: &IfocState,
    i_q_ref: f64,
    omega_m: f64,
    p: &MachineParams,
    dt: f64,
) -> Result<IfocState> {
    if st.i_d_ref == 0.0 {
        return Err(Error::FluxNotEstablished);
    }
    let slip = p.rr / p.lr() * (i_q_ref / st.i_d_ref);
    let omega_e = f64::from(p.pole_pairs) * omega_m + slip;
    Ok(IfocState {
        i_d_ref: st.i_d_ref,
        sigma: wrap_angle(st.sigma + omega_e * dt),
        omega_e,
    })
}

/// Stationary current references at the state's angle. x–y references are
/// always zero.
pub fn generate_current_refs(st: &IfocState, i_q_ref: f64) -> AlphaBetaXY {
    current_refs_at(st.i_d_ref, i_q_ref, st.sigma)
}

fn current_refs_at(i_d: f64, i_q: f64, sigma: f64) -> AlphaBetaXY {
    let ab = inverse_park(DqFrame::new(i_d, i_q, sigma), sigma);
    AlphaBetaXY { alpha: ab.alpha, beta: ab.beta, x: 0.0, y: 0.0, z: 0.0 }
}

/// Number of legs that toggle between two states.
pub fn switch_changes(u_prev: SwitchState, u_next: SwitchState) -> u32 {
    (u_prev.index() ^ u_next.index()).count_ones()
}

/// Weights of the three cost terms. The controller uses `ab = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub ab: f64,
    pub xy: f64,
    pub sc: f64,
}

impl From<&ControllerParams> for CostWeights {
    fn from(t: &ControllerParams) -> Self {
        CostWeights { ab: 1.0, xy: t.lambda_xy, sc: t.lambda_sc }
    }
}

/// Cost breakdown of one candidate: `J = ab·‖Ê_αβ‖² + λ_xy·‖Ê_xy‖² + λ_sc·SC`.
/// Units are mixed (A² and a switch count) and summed raw.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTerms {
    pub e_ab_sq: f64,
    pub e_xy_sq: f64,
    pub sc: u32,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsmpcDecision {
    pub u_next: SwitchState,
    pub cost: CostTerms,
    /// Predicted extended current state at k+1 under the committed `U(k)`.
    pub predicted_k1: [f64; NX],
}

/// Costs of all 32 candidates for `U(k+1)`, in enumeration order.
pub fn evaluate_candidates(
    z_k: &[f64; NX],
    u_applied: SwitchState,
    refs_k2: &AlphaBetaXY,
    pm: &PredictionModel,
    weights: CostWeights,
) -> ([f64; NX], [CostTerms; NUM_STATES]) {
    let z_k1 = pm.predict(z_k, u_applied);
    let free = pm.free_response(&z_k1);
    let costs = std::array::from_fn(|n| {
        let u = SwitchState::from_index(n).unwrap_or_default();
        let inc = pm.input_increment(u);
        let ea = refs_k2.alpha - (free[0] + inc[0]);
        let eb = refs_k2.beta - (free[1] + inc[1]);
        let ex = refs_k2.x - (free[2] + inc[2]);
        let ey = refs_k2.y - (free[3] + inc[3]);
        let e_ab_sq = ea * ea + eb * eb;
        let e_xy_sq = ex * ex + ey * ey;
        let sc = switch_changes(u_applied, u);
        let total = weights.ab * e_ab_sq + weights.xy * e_xy_sq + weights.sc * f64::from(sc);
        CostTerms { e_ab_sq, e_xy_sq, sc, total }
    });
    (z_k1, costs)
}

/// Exhaustive FSMPC selection with two-step delay compensation.
///
/// `i_meas` is the measured stator current at k, `rotor_est` the estimated
/// rotor current, `u_applied` the state already committed for period k.
/// Ties go to the lowest enumeration index.
pub fn fsmpc_select(
    i_meas: &AlphaBetaXY,
    rotor_est: [f64; 2],
    u_applied: SwitchState,
    refs_k2: &AlphaBetaXY,
    pm: &PredictionModel,
    theta: &ControllerParams,
) -> Result<FsmpcDecision> {
    let z_k = [
        i_meas.alpha,
        i_meas.beta,
        i_meas.x,
        i_meas.y,
        rotor_est[0],
        rotor_est[1],
    ];
    let (z_k1, costs) = evaluate_candidates(&z_k, u_applied, refs_k2, pm, theta.into());
    if z_k1.iter().any(|v| !v.is_finite()) {
        return Err(Error::ControllerFault(format!("non-finite prediction {z_k1:?}")));
    }
    let mut best = 0;
    for (n, c) in costs.iter().enumerate() {
        if !c.total.is_finite() {
            return Err(Error::ControllerFault(format!("non-finite cost for candidate {n}")));
        }
        if c.total < costs[best].total {
            best = n;
        }
    }
    Ok(FsmpcDecision {
        u_next: enumerate_switch_states()[best],
        cost: costs[best],
        predicted_k1: z_k1,
    })
}

/// Open-loop rotor flux observer driven by measured stator current and speed.
///
/// Integrates `dψr/dt = −(Rr/Lr)·ψr + (Rr·LM/Lr)·i_s + ω·J·ψr` with the
/// homogeneous part solved exactly over each period, which stays stable at
/// any speed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorObserver {
    pub psi_r: [f64; 2],
}

impl RotorObserver {
    /// Rotor current estimate `(ψr − LM·i_s)/Lr`.
    pub fn rotor_current(&self, i_s: [f64; 2], p: &MachineParams) -> [f64; 2] {
        let lr = p.lr();
        [
            (self.psi_r[0] - p.lm * i_s[0]) / lr,
            (self.psi_r[1] - p.lm * i_s[1]) / lr,
        ]
    }

    pub fn advance(&mut self, i_s: [f64; 2], omega_e: f64, p: &MachineParams) {
        let tau_inv = p.rr / p.lr();
        let decay = (-tau_inv * p.ts).exp();
        let (s, c) = (omega_e * p.ts).sin_cos();
        let [a, b] = self.psi_r;
        let gain = tau_inv * p.lm * p.ts;
        self.psi_r = [
            decay * (c * a - s * b) + gain * i_s[0],
            decay * (s * a + c * b) + gain * i_s[1],
        ];
    }
}

/// Fixed (non-tuned) controller settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Flux current command after the ramp (A).
    pub i_d_ref: f64,
    /// Duration of the linear flux ramp (s); speed control is off meanwhile.
    pub flux_ramp: f64,
    /// Speed loop period in controller ticks.
    pub speed_decimation: u32,
    /// Saturation of `i*_q` (A).
    pub output_limit: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            i_d_ref: 1.0,
            flux_ramp: 0.2,
            speed_decimation: 10,
            output_limit: 4.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_d_ref.is_finite() && self.i_d_ref > 0.0) {
            return Err(Error::Config("controller.i_d_ref must be positive".into()));
        }
        if !(self.flux_ramp.is_finite() && self.flux_ramp >= 0.0) {
            return Err(Error::Config("controller.flux_ramp must be non-negative".into()));
        }
        if self.speed_decimation < 1 {
            return Err(Error::Config("controller.speed_decimation must be at least 1".into()));
        }
        if !(self.output_limit.is_finite() && self.output_limit > 0.0) {
            return Err(Error::Config("controller.output_limit must be positive".into()));
        }
        Ok(())
    }
}

/// Per-tick controller record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickLog {
    pub t: f64,
    pub omega_ref: f64,
    pub omega_m: f64,
    pub i_d_ref: f64,
    pub i_q_ref: f64,
    /// Stationary references at tick k.
    pub i_ref: AlphaBetaXY,
    pub i_meas: AlphaBetaXY,
    /// State chosen for period k+1.
    pub u_next: SwitchState,
    pub cost: CostTerms,
    pub omega_e: f64,
    pub sigma: f64,
    /// Torque reference `k_T·i*_q`.
    pub torque_ref: f64,
}

/// Complete cascade controller.
#[derive(Debug, Clone)]
pub struct DriveController {
    machine: MachineParams,
    config: ControllerConfig,
    theta: ControllerParams,
    pub pi: PiState,
    pub ifoc: IfocState,
    pub observer: RotorObserver,
    u_applied: SwitchState,
    i_q_ref: f64,
    tick: u64,
}

impl DriveController {
    pub fn new(machine: MachineParams, config: ControllerConfig, theta: ControllerParams) -> Self {
        let pi = PiState::new(config.output_limit);
        let ifoc = IfocState::new(config.i_d_ref);
        DriveController {
            machine,
            config,
            theta,
            pi,
            ifoc,
            observer: RotorObserver::default(),
            u_applied: SwitchState::ALL_OFF,
            i_q_ref: 0.0,
            tick: 0,
        }
    }

    pub fn theta(&self) -> &ControllerParams {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: ControllerParams) {
        self.theta = theta;
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn u_applied(&self) -> SwitchState {
        self.u_applied
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Whether the speed loop runs on this tick.
    pub fn is_speed_tick(&self) -> bool {
        self.tick % u64::from(self.config.speed_decimation) == 0 && !self.in_flux_ramp()
    }

    fn time(&self) -> f64 {
        self.tick as f64 * self.machine.ts
    }

    fn in_flux_ramp(&self) -> bool {
        self.time() < self.config.flux_ramp
    }

    /// d current command at the current tick, ramping linearly during the
    /// flux build-up and never exactly zero.
    fn flux_command(&self) -> f64 {
        if self.config.flux_ramp <= 0.0 {
            return self.config.i_d_ref;
        }
        let frac = ((self.tick + 1) as f64 * self.machine.ts / self.config.flux_ramp).min(1.0);
        self.config.i_d_ref * frac
    }

    /// One controller tick. Returns the switch state for the next period and
    /// the log record; the returned state becomes the committed `U(k+1)`.
    pub fn step(&mut self, omega_ref: f64, i_meas: &AlphaBetaXY, omega_m: f64) -> Result<TickLog> {
        let p = &self.machine;
        let ts = p.ts;

        if self.is_speed_tick() {
            let dt = f64::from(self.config.speed_decimation) * ts;
            self.i_q_ref = pi_speed_step(omega_ref, omega_m, &mut self.pi, &self.theta, dt);
        }
        self.ifoc.i_d_ref = self.flux_command();
        let sigma_k = self.ifoc.sigma;
        let i_ref = generate_current_refs(&self.ifoc, self.i_q_ref);

        self.ifoc = ifoc_update(&self.ifoc, self.i_q_ref, omega_m, p, ts)?;
        let refs_k2 = current_refs_at(
            self.ifoc.i_d_ref,
            self.i_q_ref,
            self.ifoc.sigma + self.ifoc.omega_e * ts,
        );

        let omega_rotor = f64::from(p.pole_pairs) * omega_m;
        let pm = build_prediction_model(omega_rotor, p);
        let i_s = [i_meas.alpha, i_meas.beta];
        let rotor_est = self.observer.rotor_current(i_s, p);
        let decision = fsmpc_select(i_meas, rotor_est, self.u_applied, &refs_k2, &pm, &self.theta)?;
        self.observer.advance(i_s, omega_rotor, p);

        let log = TickLog {
            t: self.time(),
            omega_ref,
            omega_m,
            i_d_ref: self.ifoc.i_d_ref,
            i_q_ref: self.i_q_ref,
            i_ref,
            i_meas: *i_meas,
            u_next: decision.u_next,
            cost: decision.cost,
            omega_e: self.ifoc.omega_e,
            sigma: sigma_k,
            torque_ref: p.torque_constant(self.ifoc.i_d_ref) * self.i_q_ref,
        };
        self.u_applied = decision.u_next;
        self.tick += 1;
        Ok(log)
    }
}
