//! Five-phase induction machine in the stationary frame.
//!
//! The α–β subspace couples stator and rotor through the inductance matrix
//! `[[Ls, LM], [LM, Lr]]`, with the rotor EMF rotating at the electrical speed
//! `ω = P·ω_m`. The x–y subspace is a stator-only series R–L circuit. The
//! mechanical side is a single inertia with viscous friction and a load torque.
//!
//! Extended current state ordering used throughout the crate:
//! `[i_sα, i_sβ, i_sx, i_sy, i_rα, i_rβ]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::{AlphaBetaXY, SwitchState, VoltageTable, PHASES};

/// Dimension of the extended current state.
pub const NX: usize = 6;
/// Number of controlled (measured) stator current components.
pub const NS: usize = 4;

/// Electrical and mechanical constants of the drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineParams {
    /// Stator resistance (Ω).
    pub rs: f64,
    /// Rotor resistance referred to the stator (Ω).
    pub rr: f64,
    /// Stator leakage inductance (H).
    pub lls: f64,
    /// Rotor leakage inductance (H).
    pub llr: f64,
    /// Mutual inductance (H).
    pub lm: f64,
    /// Rotational inertia (kg·m²).
    pub jm: f64,
    /// Pole pairs.
    pub pole_pairs: u32,
    /// DC-link voltage (V).
    pub vdc: f64,
    /// Viscous friction (N·m·s/rad).
    pub bm: f64,
    /// Controller sampling period (s).
    pub ts: f64,
    /// RK4 substeps per sampling period.
    pub substeps: u32,
}

impl Default for MachineParams {
    fn default() -> Self {
        MachineParams {
            rs: 12.85,
            rr: 4.80,
            lls: 0.07993,
            llr: 0.07993,
            lm: 0.6817,
            jm: 0.02,
            pole_pairs: 3,
            vdc: 300.0,
            bm: 0.001,
            ts: 100e-6,
            substeps: 10,
        }
    }
}

impl MachineParams {
    pub fn ls(&self) -> f64 {
        self.lls + self.lm
    }

    pub fn lr(&self) -> f64 {
        self.llr + self.lm
    }

    /// Determinant of the α–β inductance matrix, `Ls·Lr − LM²`.
    pub fn inductance_det(&self) -> f64 {
        self.ls() * self.lr() - self.lm * self.lm
    }

    /// Steady-state torque per ampere of q current at a given d current,
    /// `(5/2)·P·(LM²/Lr)·i_d`.
    pub fn torque_constant(&self, i_d: f64) -> f64 {
        2.5 * f64::from(self.pole_pairs) * self.lm * self.lm / self.lr() * i_d
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rs", self.rs),
            ("rr", self.rr),
            ("lls", self.lls),
            ("llr", self.llr),
            ("lm", self.lm),
            ("jm", self.jm),
            ("vdc", self.vdc),
            ("ts", self.ts),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("machine.{name} must be positive, got {v}")));
            }
        }
        if !(self.bm.is_finite() && self.bm >= 0.0) {
            return Err(Error::Config(format!("machine.bm must be non-negative, got {}", self.bm)));
        }
        if self.pole_pairs < 1 {
            return Err(Error::Config("machine.pole_pairs must be at least 1".into()));
        }
        if self.substeps < 1 {
            return Err(Error::Config("machine.substeps must be at least 1".into()));
        }
        if !(self.inductance_det() > 0.0) {
            return Err(Error::Config("inductance matrix is singular".into()));
        }
        Ok(())
    }
}

/// Continuous plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub is_alpha: f64,
    pub is_beta: f64,
    pub is_x: f64,
    pub is_y: f64,
    pub ir_alpha: f64,
    pub ir_beta: f64,
    /// Mechanical speed (rad/s).
    pub omega_m: f64,
    /// Simulation time (s).
    pub t: f64,
}

impl PlantState {
    pub fn currents(&self) -> [f64; NX] {
        [
            self.is_alpha,
            self.is_beta,
            self.is_x,
            self.is_y,
            self.ir_alpha,
            self.ir_beta,
        ]
    }

    fn from_vector(x: &[f64; 7], t: f64) -> Self {
        PlantState {
            is_alpha: x[0],
            is_beta: x[1],
            is_x: x[2],
            is_y: x[3],
            ir_alpha: x[4],
            ir_beta: x[5],
            omega_m: x[6],
            t,
        }
    }

    fn to_vector(self) -> [f64; 7] {
        [
            self.is_alpha,
            self.is_beta,
            self.is_x,
            self.is_y,
            self.ir_alpha,
            self.ir_beta,
            self.omega_m,
        ]
    }

    /// Measured stator currents in the decoupled frame.
    pub fn stator_currents(&self) -> AlphaBetaXY {
        AlphaBetaXY::new(self.is_alpha, self.is_beta, self.is_x, self.is_y)
    }

    pub fn rotor_currents(&self) -> [f64; 2] {
        [self.ir_alpha, self.ir_beta]
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite()) && self.t.is_finite()
    }

    /// Electromagnetic torque (N·m).
    pub fn torque(&self, p: &MachineParams) -> f64 {
        electromagnetic_torque(
            [self.is_alpha, self.is_beta],
            [self.ir_alpha, self.ir_beta],
            p,
        )
    }
}

/// Time derivative of every continuous state (time itself excluded).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantDerivative {
    pub is_alpha: f64,
    pub is_beta: f64,
    pub is_x: f64,
    pub is_y: f64,
    pub ir_alpha: f64,
    pub ir_beta: f64,
    pub omega_m: f64,
}

impl PlantDerivative {
    fn from_vector(d: &[f64; 7]) -> Self {
        PlantDerivative {
            is_alpha: d[0],
            is_beta: d[1],
            is_x: d[2],
            is_y: d[3],
            ir_alpha: d[4],
            ir_beta: d[5],
            omega_m: d[6],
        }
    }
}

/// `T_e = (5/2)·P·LM·(i_sβ·i_rα − i_sα·i_rβ)`.
pub fn electromagnetic_torque(i_s: [f64; 2], i_r: [f64; 2], p: &MachineParams) -> f64 {
    2.5 * f64::from(p.pole_pairs) * p.lm * (i_s[1] * i_r[0] - i_s[0] * i_r[1])
}

/// State and input matrices of the current dynamics at electrical speed
/// `omega_e`: `di/dt = A·i + B·v` with `v = (v_α, v_β, v_x, v_y)`.
pub fn continuous_matrices(omega_e: f64, p: &MachineParams) -> ([[f64; NX]; NX], [[f64; NS]; NX]) {
    let (ls, lr, lm) = (p.ls(), p.lr(), p.lm);
    let det = p.inductance_det();
    let w = omega_e;
    let mut a = [[0.0; NX]; NX];
    let mut b = [[0.0; NS]; NX];

    // stator α, β
    a[0][0] = -lr * p.rs / det;
    a[0][1] = lm * lm * w / det;
    a[0][4] = lm * p.rr / det;
    a[0][5] = lm * lr * w / det;
    a[1][0] = -lm * lm * w / det;
    a[1][1] = -lr * p.rs / det;
    a[1][4] = -lm * lr * w / det;
    a[1][5] = lm * p.rr / det;
    // rotor α, β
    a[4][0] = lm * p.rs / det;
    a[4][1] = -ls * lm * w / det;
    a[4][4] = -ls * p.rr / det;
    a[4][5] = -ls * lr * w / det;
    a[5][0] = ls * lm * w / det;
    a[5][1] = lm * p.rs / det;
    a[5][4] = ls * lr * w / det;
    a[5][5] = -ls * p.rr / det;
    // x, y
    a[2][2] = -p.rs / p.lls;
    a[3][3] = -p.rs / p.lls;

    b[0][0] = lr / det;
    b[1][1] = lr / det;
    b[4][0] = -lm / det;
    b[5][1] = -lm / det;
    b[2][2] = 1.0 / p.lls;
    b[3][3] = 1.0 / p.lls;
    (a, b)
}

fn derivative_vector(x: &[f64; 7], v: &[f64; NS], load_torque: f64, p: &MachineParams) -> [f64; 7] {
    let omega_e = f64::from(p.pole_pairs) * x[6];
    let (a, b) = continuous_matrices(omega_e, p);
    let mut dx = [0.0; 7];
    for i in 0..NX {
        let mut acc = 0.0;
        for j in 0..NX {
            acc += a[i][j] * x[j];
        }
        for j in 0..NS {
            acc += b[i][j] * v[j];
        }
        dx[i] = acc;
    }
    let te = electromagnetic_torque([x[0], x[1]], [x[4], x[5]], p);
    dx[6] = (te - p.bm * x[6] - load_torque) / p.jm;
    dx
}

/// Time derivative of the plant under stationary-frame voltage `v` and load
/// torque `load_torque`.
pub fn derivative(
    state: &PlantState,
    v: &AlphaBetaXY,
    load_torque: f64,
    p: &MachineParams,
) -> PlantDerivative {
    let dx = derivative_vector(&state.to_vector(), &[v.alpha, v.beta, v.x, v.y], load_torque, p);
    PlantDerivative::from_vector(&dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    #[default]
    Constant,
    Viscous,
    Profile,
}

/// Opposing load torque source.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadSpec {
    pub mode: LoadMode,
    /// Constant part (N·m).
    pub t_l0: f64,
    /// Viscous coefficient (N·m·s/rad).
    pub k_v: f64,
    /// `(t, T_L)` breakpoints, strictly increasing in `t`.
    pub profile: Vec<(f64, f64)>,
}

impl LoadSpec {
    pub fn constant(t_l0: f64) -> Self {
        LoadSpec { mode: LoadMode::Constant, t_l0, ..Default::default() }
    }

    pub fn viscous(t_l0: f64, k_v: f64) -> Self {
        LoadSpec { mode: LoadMode::Viscous, t_l0, k_v, ..Default::default() }
    }

    pub fn profile(points: Vec<(f64, f64)>) -> Self {
        LoadSpec { mode: LoadMode::Profile, profile: points, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == LoadMode::Profile {
            if self.profile.is_empty() {
                return Err(Error::Config("load.profile must not be empty".into()));
            }
            if self.profile.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::Config("load.profile times must be strictly increasing".into()));
            }
        }
        let all = [self.t_l0, self.k_v]
            .into_iter()
            .chain(self.profile.iter().flat_map(|(t, v)| [*t, *v]));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("load values must be finite".into()));
        }
        Ok(())
    }
}

/// Load torque at speed `omega_m` and time `t`. Profiles interpolate
/// linearly and clamp to their end values.
pub fn load_torque(load: &LoadSpec, omega_m: f64, t: f64) -> f64 {
    match load.mode {
        LoadMode::Constant => load.t_l0,
        LoadMode::Viscous => load.t_l0 + load.k_v * omega_m,
        LoadMode::Profile => {
            let pts = &load.profile;
            let Some(first) = pts.first() else {
                return 0.0;
            };
            if t <= first.0 {
                return first.1;
            }
            let last = pts[pts.len() - 1];
            if t >= last.0 {
                return last.1;
            }
            let i = pts.partition_point(|(ti, _)| *ti <= t);
            let (t0, v0) = pts[i - 1];
            let (t1, v1) = pts[i];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

/// Advances the plant one controller period `Ts` under a zero-order-hold
/// switch state using classical RK4 with `substeps` equal substeps.
pub fn step_plant(
    state: &PlantState,
    u: SwitchState,
    load: &LoadSpec,
    p: &MachineParams,
) -> Result<PlantState> {
    let table = VoltageTable::new(p.vdc);
    step_plant_with(state, table.get(u), load, p)
}

/// Same as [`step_plant`] with an explicit stationary-frame voltage.
pub fn step_plant_with(
    state: &PlantState,
    v: AlphaBetaXY,
    load: &LoadSpec,
    p: &MachineParams,
) -> Result<PlantState> {
    let n = p.substeps.max(1);
    let h = p.ts / f64::from(n);
    let v = [v.alpha, v.beta, v.x, v.y];
    let mut x = state.to_vector();
    let t0 = state.t;
    for k in 0..n {
        let t = t0 + f64::from(k) * h;
        let f = |x: &[f64; 7], t: f64| derivative_vector(x, &v, load_torque(load, x[6], t), p);
        let k1 = f(&x, t);
        let k2 = f(&axpy(&x, 0.5 * h, &k1), t + 0.5 * h);
        let k3 = f(&axpy(&x, 0.5 * h, &k2), t + 0.5 * h);
        let k4 = f(&axpy(&x, h, &k3), t + h);
        for i in 0..7 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let next = PlantState::from_vector(&x, t0 + p.ts);
    if !next.is_finite() {
        return Err(Error::Divergence { t: next.t, state: format!("{next:?}") });
    }
    Ok(next)
}

fn axpy(x: &[f64; 7], a: f64, d: &[f64; 7]) -> [f64; 7] {
    std::array::from_fn(|i| x[i] + a * d[i])
}

/// Discrete one-step current model `z(k+1) = Φ·z(k) + Ψ·U(k)` over the
/// extended current state, obtained by forward Euler at period `Ts`.
///
/// `Φ` restricted to its leading 4×4 block acts on the measured stator
/// currents; the last two rows/columns carry the estimated rotor currents.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionModel {
    pub phi: [[f64; NX]; NX],
    /// Acts directly on switch states `u ∈ {0,1}⁵` (the voltage path `M·T·Vdc`
    /// and `Ts` are folded in).
    pub psi: [[f64; PHASES]; NX],
    /// Electrical speed the model was built at (rad/s).
    pub omega_used: f64,
}

impl PredictionModel {
    /// Stator block of `Φ` (4×4).
    pub fn phi_stator(&self) -> [[f64; NS]; NS] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.phi[i][j]))
    }

    /// Stator rows of `Ψ` (4×5).
    pub fn psi_stator(&self) -> [[f64; PHASES]; NS] {
        std::array::from_fn(|i| self.psi[i])
    }

    /// `Ψ·u` for a switch state.
    pub fn input_increment(&self, u: SwitchState) -> [f64; NX] {
        let uv = u.as_vector();
        std::array::from_fn(|i| {
            let mut acc = 0.0;
            for (j, uj) in uv.iter().enumerate() {
                acc += self.psi[i][j] * uj;
            }
            acc
        })
    }

    /// `Φ·z`.
    pub fn free_response(&self, z: &[f64; NX]) -> [f64; NX] {
        std::array::from_fn(|i| {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate() {
                acc += self.phi[i][j] * zj;
            }
            acc
        })
    }

    /// One-step prediction `Φ·z + Ψ·u`.
    pub fn predict(&self, z: &[f64; NX], u: SwitchState) -> [f64; NX] {
        let free = self.free_response(z);
        let inc = self.input_increment(u);
        std::array::from_fn(|i| free[i] + inc[i])
    }
}

/// Builds the Euler prediction model at electrical speed `omega_e`.
pub fn build_prediction_model(omega_e: f64, p: &MachineParams) -> PredictionModel {
    let (a, b) = continuous_matrices(omega_e, p);
    let ts = p.ts;
    let mut phi = [[0.0; NX]; NX];
    for i in 0..NX {
        for j in 0..NX {
            phi[i][j] = if i == j { 1.0 } else { 0.0 } + a[i][j] * ts;
        }
    }
    // voltage per leg: columns of (M·T)[α,β,x,y] scaled by Vdc
    let m = crate::transforms::clarke_matrix();
    let mut mt = [[0.0; PHASES]; NS];
    for r in 0..NS {
        for c in 0..PHASES {
            let mut acc = 0.0;
            for k in 0..PHASES {
                let t_kc = if k == c { 4.0 } else { -1.0 };
                acc += m[r][k] * t_kc;
            }
            mt[r][c] = acc * p.vdc / 5.0;
        }
    }
    let mut psi = [[0.0; PHASES]; NX];
    for i in 0..NX {
        for c in 0..PHASES {
            let mut acc = 0.0;
            for r in 0..NS {
                acc += b[i][r] * mt[r][c];
            }
            psi[i][c] = acc * ts;
        }
    }
    PredictionModel { phi, psi, omega_used: omega_e }
}
