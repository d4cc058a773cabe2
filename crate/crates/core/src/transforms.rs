//! Five-phase inverter voltage map, Clarke decomposition and Park rotation.
//!
//! Switch states are numbered by binary counting with leg 1 as the least
//! significant bit, so state index `n` has `u_h = (n >> (h - 1)) & 1`.
//! The Clarke matrix rows are ordered (α, β, x, y, zero-sequence).

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Number of inverter legs / stator phases.
pub const PHASES: usize = 5;
/// Number of distinct inverter switching states.
pub const NUM_STATES: usize = 1 << PHASES;
/// Spatial displacement between consecutive phases (2π/5).
pub const PHASE_ANGLE: f64 = 2.0 * PI / 5.0;

/// Binary leg states of the five-leg voltage source inverter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SwitchState(u8);

impl SwitchState {
    pub const ALL_OFF: SwitchState = SwitchState(0);
    pub const ALL_ON: SwitchState = SwitchState((NUM_STATES - 1) as u8);

    /// State from its enumeration index. Returns `None` outside `0..32`.
    pub fn from_index(index: usize) -> Option<Self> {
        (index < NUM_STATES).then_some(SwitchState(index as u8))
    }

    /// State from explicit leg values `u1..u5`; any nonzero entry counts as on.
    pub fn from_legs(legs: [u8; PHASES]) -> Self {
        let bits = legs
            .iter()
            .enumerate()
            .fold(0u8, |acc, (h, &u)| acc | (u8::from(u != 0) << h));
        SwitchState(bits)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Leg `h` state, zero-based (`leg(0)` is `u1`).
    pub fn leg(self, h: usize) -> u8 {
        (self.0 >> h) & 1
    }

    pub fn legs(self) -> [u8; PHASES] {
        std::array::from_fn(|h| self.leg(h))
    }

    /// Legs as reals, ready for the voltage matrix.
    pub fn as_vector(self) -> [f64; PHASES] {
        std::array::from_fn(|h| f64::from(self.leg(h)))
    }

    /// Compact `u1u2u3u4u5` string, e.g. `"10100"`.
    pub fn bit_string(self) -> String {
        self.legs().iter().map(|u| if *u == 1 { '1' } else { '0' }).collect()
    }
}

/// All 32 switching states in enumeration order.
pub fn enumerate_switch_states() -> Vec<SwitchState> {
    (0..NUM_STATES).map(|n| SwitchState(n as u8)).collect()
}

/// Stator phase voltages `v1..v5` in volts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseVoltages(pub [f64; PHASES]);

/// Phase voltages produced by a switching state: `v = T·u`, with
/// `T = Vdc/5 · (5·I − 1·1ᵀ)`.
pub fn phase_voltages(u: SwitchState, vdc: f64) -> PhaseVoltages {
    let legs = u.as_vector();
    let mut v = [0.0; PHASES];
    for (i, vi) in v.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, uj) in legs.iter().enumerate() {
            let t_ij = if i == j { 4.0 } else { -1.0 };
            acc += t_ij * uj;
        }
        *vi = vdc / 5.0 * acc;
    }
    PhaseVoltages(v)
}

/// Components in the stationary decoupled frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlphaBetaXY {
    pub alpha: f64,
    pub beta: f64,
    pub x: f64,
    pub y: f64,
    /// Zero-sequence component; ignored by the controller.
    pub z: f64,
}

impl AlphaBetaXY {
    pub fn new(alpha: f64, beta: f64, x: f64, y: f64) -> Self {
        AlphaBetaXY { alpha, beta, x, y, z: 0.0 }
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        AlphaBetaXY { alpha: a[0], beta: a[1], x: a[2], y: a[3], z: a[4] }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.alpha, self.beta, self.x, self.y, self.z]
    }

    /// The four controlled components (α, β, x, y).
    pub fn controlled(self) -> [f64; 4] {
        [self.alpha, self.beta, self.x, self.y]
    }

    pub fn ab_norm(self) -> f64 {
        self.alpha.hypot(self.beta)
    }

    pub fn xy_norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Rotating-frame components at flux angle `sigma`. The harmonic (x, y) and
/// zero-sequence parts are carried through unrotated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DqFrame {
    pub d: f64,
    pub q: f64,
    pub sigma: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl DqFrame {
    pub fn new(d: f64, q: f64, sigma: f64) -> Self {
        DqFrame { d, q, sigma, ..Default::default() }
    }
}

/// The 5×5 decoupling matrix `M` (scaling 2/5).
///
/// Row 3 column 4 is `cos(6ϑ) = cos(ϑ)`, which keeps the x row on the
/// second-harmonic pattern `cos(2hϑ)`.
pub fn clarke_matrix() -> &'static [[f64; PHASES]; PHASES] {
    static MATRIX: OnceLock<[[f64; PHASES]; PHASES]> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut m = [[0.0; PHASES]; PHASES];
        for k in 0..PHASES {
            let a = k as f64 * PHASE_ANGLE;
            m[0][k] = a.cos();
            m[1][k] = a.sin();
            m[2][k] = (2.0 * a).cos();
            m[3][k] = (2.0 * a).sin();
            m[4][k] = 0.5;
        }
        // Exact zeros and ones where the closed form has them.
        m[0][0] = 1.0;
        m[1][0] = 0.0;
        m[2][0] = 1.0;
        m[3][0] = 0.0;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= 2.0 / 5.0;
            }
        }
        m
    })
}

/// `M·v` for any five-phase quantity (voltages or currents).
pub fn clarke(v: &[f64; PHASES]) -> AlphaBetaXY {
    let m = clarke_matrix();
    let mut out = [0.0; PHASES];
    for (o, row) in out.iter_mut().zip(m.iter()) {
        *o = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    }
    AlphaBetaXY::from_array(out)
}

/// Inverse decoupling transform, `M⁻¹·s`.
///
/// The rows of `M` are mutually orthogonal with squared norms 2/5 (1/5 for
/// the zero-sequence row), so the inverse is a row-scaled transpose.
pub fn inverse_clarke(s: AlphaBetaXY) -> [f64; PHASES] {
    let m = clarke_matrix();
    let a = s.to_array();
    let mut v = [0.0; PHASES];
    for (k, vk) in v.iter_mut().enumerate() {
        let mut acc = 0.0;
        for r in 0..4 {
            acc += m[r][k] * a[r];
        }
        acc = acc * 5.0 / 2.0 + a[4];
        *vk = acc;
    }
    v
}

/// Park rotation by `sigma`: `d = α cos σ + β sin σ`, `q = −α sin σ + β cos σ`.
pub fn park(ab: AlphaBetaXY, sigma: f64) -> DqFrame {
    let (s, c) = sigma.sin_cos();
    DqFrame {
        d: c * ab.alpha + s * ab.beta,
        q: -s * ab.alpha + c * ab.beta,
        sigma,
        x: ab.x,
        y: ab.y,
        z: ab.z,
    }
}

/// Inverse Park rotation: `α = d cos σ − q sin σ`, `β = d sin σ + q cos σ`.
pub fn inverse_park(dq: DqFrame, sigma: f64) -> AlphaBetaXY {
    let (s, c) = sigma.sin_cos();
    AlphaBetaXY {
        alpha: c * dq.d - s * dq.q,
        beta: s * dq.d + c * dq.q,
        x: dq.x,
        y: dq.y,
        z: dq.z,
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Stationary-frame voltage `M·T·u` for every switch state at a DC-link voltage.
#[derive(Debug, Clone)]
pub struct VoltageTable {
    vdc: f64,
    vectors: [AlphaBetaXY; NUM_STATES],
}

impl VoltageTable {
    pub fn new(vdc: f64) -> Self {
        let vectors = std::array::from_fn(|n| {
            let u = SwitchState(n as u8);
            clarke(&phase_voltages(u, vdc).0)
        });
        VoltageTable { vdc, vectors }
    }

    pub fn vdc(&self) -> f64 {
        self.vdc
    }

    pub fn get(&self, u: SwitchState) -> AlphaBetaXY {
        self.vectors[u.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn enumeration_order() {
        let states = enumerate_switch_states();
        assert_eq!(states.len(), 32);
        assert_eq!(states[0].legs(), [0, 0, 0, 0, 0]);
        assert_eq!(states[31].legs(), [1, 1, 1, 1, 1]);
        assert_eq!(states[1].legs(), [1, 0, 0, 0, 0]);
        assert_eq!(states[2].legs(), [0, 1, 0, 0, 0]);
        for (n, s) in states.iter().enumerate() {
            assert_eq!(s.index(), n);
            assert_eq!(SwitchState::from_legs(s.legs()), *s);
        }
        assert_eq!(SwitchState::from_index(32), None);
    }

    #[test]
    fn phase_voltage_examples() {
        assert_eq!(phase_voltages(SwitchState::ALL_ON, 300.0).0, [0.0; 5]);
        assert_eq!(phase_voltages(SwitchState::ALL_OFF, 300.0).0, [0.0; 5]);
        let v = phase_voltages(SwitchState::from_legs([1, 0, 0, 0, 0]), 300.0).0;
        assert_eq!(v, [240.0, -60.0, -60.0, -60.0, -60.0]);
    }

    #[test]
    fn phase_voltages_sum_to_zero() {
        for u in enumerate_switch_states() {
            let v = phase_voltages(u, 300.0).0;
            assert_eq!(v.iter().sum::<f64>(), 0.0, "state {}", u.bit_string());
        }
    }

    #[test]
    fn clarke_of_constant_is_zero_sequence() {
        let c = 3.7;
        let s = clarke(&[c; 5]);
        assert!(approx(s.alpha, 0.0, 1e-12));
        assert!(approx(s.beta, 0.0, 1e-12));
        assert!(approx(s.x, 0.0, 1e-12));
        assert!(approx(s.y, 0.0, 1e-12));
        assert!(approx(s.z, c, 1e-12));
    }

    #[test]
    fn clarke_harmonic_sets() {
        let first: [f64; 5] = std::array::from_fn(|k| (k as f64 * PHASE_ANGLE).cos());
        let s = clarke(&first);
        assert!(approx(s.alpha, 1.0, 1e-12));
        assert!(approx(s.beta, 0.0, 1e-12));
        assert!(approx(s.x, 0.0, 1e-12));
        assert!(approx(s.y, 0.0, 1e-12));

        let second: [f64; 5] = std::array::from_fn(|k| (2.0 * k as f64 * PHASE_ANGLE).cos());
        let s = clarke(&second);
        assert!(approx(s.alpha, 0.0, 1e-12));
        assert!(approx(s.beta, 0.0, 1e-12));
        assert!(approx(s.x, 1.0, 1e-12));
        assert!(approx(s.y, 0.0, 1e-12));
    }

    #[test]
    fn inverse_clarke_round_trip() {
        let v = [1.0, -2.5, 0.3, 4.0, -0.7];
        let back = inverse_clarke(clarke(&v));
        for (a, b) in v.iter().zip(back.iter()) {
            assert!(approx(*a, *b, 1e-12));
        }
    }

    #[test]
    fn park_examples() {
        let dq = park(AlphaBetaXY::new(1.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!((dq.d, dq.q), (1.0, 0.0));
        let dq = park(AlphaBetaXY::new(1.0, 0.0, 0.0, 0.0), PI / 2.0);
        assert!(approx(dq.d, 0.0, 1e-15));
        assert!(approx(dq.q, -1.0, 1e-15));
        let ab = inverse_park(DqFrame::new(1.0, 0.0, 0.0), 0.0);
        assert_eq!((ab.alpha, ab.beta), (1.0, 0.0));
    }

    #[test]
    fn park_passes_harmonic_plane_through() {
        let ab = AlphaBetaXY { alpha: 0.3, beta: -1.0, x: 2.0, y: -4.0, z: 0.5 };
        let dq = park(ab, 1.1);
        assert_eq!((dq.x, dq.y, dq.z), (2.0, -4.0, 0.5));
    }

    #[test]
    fn wrap_angle_range() {
        let eps = 1e-9;
        let w = wrap_angle(TAU - eps + 0.01);
        assert!((0.0..TAU).contains(&w));
        assert!(approx(w, 0.01 - eps, 1e-12));
        assert!((0.0..TAU).contains(&wrap_angle(-1e-18)));
        assert!((0.0..TAU).contains(&wrap_angle(-3.0 * TAU - 0.5)));
    }

    #[test]
    fn null_states_project_to_zero() {
        let table = VoltageTable::new(300.0);
        let mut zero = 0;
        for u in enumerate_switch_states() {
            let v = table.get(u);
            if v.ab_norm() < 1e-9 {
                zero += 1;
            }
        }
        assert_eq!(zero, 2);
    }
}
