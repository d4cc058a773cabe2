//! Step-response performance indicators.
//!
//! All indicators read the post-onset window of a [`Trace`]. Speed-relative
//! quantities are scaled by the step size `|ω* − ω_start|`, which reduces to
//! `ω*` for steps from standstill.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

/// Guard for the relative speed error denominator (rad/s).
pub const ITAE_EPSILON: f64 = 1e-3;

/// `Π = (PO, Tr, ITAE, Rt, Exy, ASF)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorVector {
    /// Overshoot (%).
    #[serde(rename = "PO", with = "finite_or_null")]
    pub po: f64,
    /// Rise time (s).
    #[serde(rename = "Tr", with = "finite_or_null")]
    pub tr: f64,
    #[serde(rename = "ITAE", with = "finite_or_null")]
    pub itae: f64,
    /// Torque ripple (N·m).
    #[serde(rename = "Rt", with = "finite_or_null")]
    pub rt: f64,
    /// Harmonic x–y current content (A).
    #[serde(rename = "Exy", with = "finite_or_null")]
    pub exy: f64,
    /// Average switching frequency (Hz).
    #[serde(rename = "ASF", with = "finite_or_null")]
    pub asf: f64,
    /// False when the speed never reached the reference inside the window.
    #[serde(default = "yes")]
    pub rose: bool,
}

fn yes() -> bool {
    true
}

impl IndicatorVector {
    /// Indicator vector of a failed (diverged) run: every entry infinite.
    pub fn failed() -> Self {
        IndicatorVector {
            po: f64::INFINITY,
            tr: f64::INFINITY,
            itae: f64::INFINITY,
            rt: f64::INFINITY,
            exy: f64::INFINITY,
            asf: f64::INFINITY,
            rose: false,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.to_array().iter().any(|v| !v.is_finite())
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.po, self.tr, self.itae, self.rt, self.exy, self.asf]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        IndicatorVector {
            po: a[0],
            tr: a[1],
            itae: a[2],
            rt: a[3],
            exy: a[4],
            asf: a[5],
            rose: true,
        }
    }
}

/// Serializes non-finite values as `null` and reads `null` back as `+∞`.
pub mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

fn step_size(trace: &Trace) -> Result<(f64, f64)> {
    let target = trace.rows[trace.step_onset].omega_ref;
    let delta = target - trace.omega_start;
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::UndefinedIndicator(format!(
            "zero step: reference {target} equals starting speed"
        )));
    }
    Ok((target, delta))
}

/// `PO = 100·max_k s·(ω(k) − ω*)/|Δω|` with `s` the step direction.
pub fn overshoot(trace: &Trace) -> Result<f64> {
    trace.validate()?;
    let (target, delta) = step_size(trace)?;
    let s = delta.signum();
    let peak = trace
        .window_rows()
        .iter()
        .map(|r| s * (r.omega_m - target))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(100.0 * peak / delta.abs())
}

/// First-crossing rise time. Returns `(Tr, rose)`; when the reference is never
/// reached, `Tr` is the window length and `rose` is false.
pub fn rise_time(trace: &Trace) -> Result<(f64, bool)> {
    trace.validate()?;
    let (_, delta) = step_size(trace)?;
    let s = delta.signum();
    let rows = trace.window_rows();
    for (j, r) in rows.iter().enumerate() {
        if s * (r.omega_m - r.omega_ref) >= 0.0 {
            return Ok(((j + 1) as f64 * trace.ts, true));
        }
    }
    Ok((rows.len() as f64 * trace.ts, false))
}

/// `ITAE = (1/N)·Σ_j j·|ω*(j) − ω(j)| / max(|ω*(j) − ω_start|, ε)`, with `j`
/// counting samples from the step onset.
pub fn itae(trace: &Trace) -> Result<f64> {
    trace.validate()?;
    let rows = trace.window_rows();
    let n = rows.len() as f64;
    let mut sum = 0.0;
    for (j, r) in rows.iter().enumerate() {
        let scale = (r.omega_ref - trace.omega_start).abs().max(ITAE_EPSILON);
        sum += (r.omega_ref - r.omega_m).abs() / scale * (j + 1) as f64;
    }
    Ok(sum / n)
}

/// RMS of the torque tracking error.
pub fn torque_ripple(trace: &Trace) -> Result<f64> {
    trace.validate()?;
    let rows = trace.window_rows();
    let n = rows.len() as f64;
    let mut sum = 0.0;
    for r in rows {
        let e = r.torque_ref - r.torque;
        sum += e * e;
    }
    Ok((sum / n).sqrt())
}

/// RMS of the x–y current tracking error magnitude.
pub fn harmonic_content(trace: &Trace) -> Result<f64> {
    trace.validate()?;
    let rows = trace.window_rows();
    let n = rows.len() as f64;
    let mut sum = 0.0;
    for r in rows {
        let ex = r.i_ref[2] - r.i_meas[2];
        let ey = r.i_ref[3] - r.i_meas[3];
        sum += ex * ex + ey * ey;
    }
    Ok((sum / n).sqrt())
}

/// `ASF = Σ SC / (5·N·Ts)`.
pub fn avg_switching_freq(trace: &Trace) -> Result<f64> {
    trace.validate()?;
    let rows = trace.window_rows();
    let total: u64 = rows.iter().map(|r| u64::from(r.sc)).sum();
    Ok(total as f64 / (5.0 * rows.len() as f64 * trace.ts))
}

pub fn compute_all(trace: &Trace) -> Result<IndicatorVector> {
    let (tr, rose) = rise_time(trace)?;
    Ok(IndicatorVector {
        po: overshoot(trace)?,
        tr,
        itae: itae(trace)?,
        rt: torque_ripple(trace)?,
        exy: harmonic_content(trace)?,
        asf: avg_switching_freq(trace)?,
        rose,
    })
}
