//! Per-tick closed-loop records and their CSV form.
//!
//! Row `k` is sampled at `t = k·Ts`: measurements at `t`, the controller
//! outputs computed at tick `k`, the switch state `u` applied during period
//! `k` and `sc`, the number of legs that toggled when `u` was applied.
//!
//! CSV layout: one metadata comment line, one column header line, then one
//! line per row. Floats use the shortest representation that round-trips.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::transforms::SwitchState;

pub const TRACE_FORMAT: &str = "fsmpc-trace";
pub const TRACE_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 21] = [
    "t",
    "omega_ref",
    "omega_m",
    "i_d_ref",
    "i_q_ref",
    "i_ref_alpha",
    "i_ref_beta",
    "i_ref_x",
    "i_ref_y",
    "i_alpha",
    "i_beta",
    "i_x",
    "i_y",
    "u",
    "sc",
    "j_ab",
    "j_xy",
    "j_total",
    "torque",
    "torque_ref",
    "load_torque",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRow {
    pub t: f64,
    pub omega_ref: f64,
    pub omega_m: f64,
    pub i_d_ref: f64,
    pub i_q_ref: f64,
    pub i_ref: [f64; 4],
    pub i_meas: [f64; 4],
    pub u: SwitchState,
    pub sc: u32,
    pub j_ab: f64,
    pub j_xy: f64,
    pub j_total: f64,
    pub torque: f64,
    pub torque_ref: f64,
    pub load_torque: f64,
}

/// Uniformly sampled step-test record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub ts: f64,
    /// Index of the first sample carrying the new speed reference.
    pub step_onset: usize,
    /// Number of post-onset samples the indicators are evaluated on.
    pub window: usize,
    /// Speed before the step (rad/s); scales the relative indicators.
    pub omega_start: f64,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Post-onset evaluation window, samples `onset+1 ..= onset+window`.
    pub fn window_rows(&self) -> &[TraceRow] {
        let start = (self.step_onset + 1).min(self.rows.len());
        let end = (start + self.window).min(self.rows.len());
        &self.rows[start..end]
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < 2 {
            return Err(Error::UndefinedIndicator("trace needs at least two samples".into()));
        }
        if !(self.ts > 0.0) {
            return Err(Error::UndefinedIndicator("trace sampling period must be positive".into()));
        }
        if self.step_onset + 1 >= self.rows.len() {
            return Err(Error::UndefinedIndicator(format!(
                "step onset {} outside trace of {} samples",
                self.step_onset,
                self.rows.len()
            )));
        }
        if self.window_rows().is_empty() {
            return Err(Error::UndefinedIndicator("empty evaluation window".into()));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# {TRACE_FORMAT} v{TRACE_VERSION} ts={} step_onset={} window={} omega_start={}",
            self.ts, self.step_onset, self.window, self.omega_start
        )?;
        writeln!(w, "{}", TRACE_COLUMNS.join(","))?;
        let mut line = String::with_capacity(256);
        for r in &self.rows {
            line.clear();
            let _ = write!(
                line,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.omega_ref,
                r.omega_m,
                r.i_d_ref,
                r.i_q_ref,
                r.i_ref[0],
                r.i_ref[1],
                r.i_ref[2],
                r.i_ref[3],
                r.i_meas[0],
                r.i_meas[1],
                r.i_meas[2],
                r.i_meas[3],
                r.u.bit_string(),
                r.sc,
                r.j_ab,
                r.j_xy,
                r.j_total,
                r.torque,
                r.torque_ref,
                r.load_torque
            );
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Trace> {
        let err = |line: usize, message: String| Error::Parse { what: "trace", line, message };
        let mut lines = r.lines();
        let meta = lines.next().ok_or_else(|| err(1, "empty file".into()))??;
        let rest = meta
            .strip_prefix(&format!("# {TRACE_FORMAT} v{TRACE_VERSION} "))
            .ok_or_else(|| err(1, format!("expected '# {TRACE_FORMAT} v{TRACE_VERSION}' header")))?;
        let mut ts = None;
        let mut onset = None;
        let mut window = None;
        let mut omega_start = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| err(1, format!("bad field '{kv}'")))?;
            let bad = |_| err(1, format!("bad value for {k}"));
            match k {
                "ts" => ts = Some(v.parse::<f64>().map_err(bad)?),
                "step_onset" => onset = Some(v.parse::<usize>().map_err(|_| err(1, "bad step_onset".into()))?),
                "window" => window = Some(v.parse::<usize>().map_err(|_| err(1, "bad window".into()))?),
                "omega_start" => omega_start = Some(v.parse::<f64>().map_err(bad)?),
                _ => return Err(err(1, format!("unknown field '{k}'"))),
            }
        }
        let header = lines.next().ok_or_else(|| err(2, "missing column header".into()))??;
        if header != TRACE_COLUMNS.join(",") {
            return Err(err(2, "unexpected column header".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 3;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != TRACE_COLUMNS.len() {
                return Err(err(lineno, format!("expected {} fields, got {}", TRACE_COLUMNS.len(), f.len())));
            }
            let num = |j: usize| -> Result<f64> {
                f[j].parse::<f64>()
                    .map_err(|_| err(lineno, format!("bad number in column {}", TRACE_COLUMNS[j])))
            };
            let bits = f[13].as_bytes();
            if bits.len() != 5 || bits.iter().any(|b| *b != b'0' && *b != b'1') {
                return Err(err(lineno, "bad switch state".into()));
            }
            let u = SwitchState::from_legs(std::array::from_fn(|h| bits[h] - b'0'));
            rows.push(TraceRow {
                t: num(0)?,
                omega_ref: num(1)?,
                omega_m: num(2)?,
                i_d_ref: num(3)?,
                i_q_ref: num(4)?,
                i_ref: [num(5)?, num(6)?, num(7)?, num(8)?],
                i_meas: [num(9)?, num(10)?, num(11)?, num(12)?],
                u,
                sc: f[14].parse().map_err(|_| err(lineno, "bad sc".into()))?,
                j_ab: num(15)?,
                j_xy: num(16)?,
                j_total: num(17)?,
                torque: num(18)?,
                torque_ref: num(19)?,
                load_torque: num(20)?,
            });
        }
        let missing = |k: &str| err(1, format!("missing {k}"));
        Ok(Trace {
            ts: ts.ok_or_else(|| missing("ts"))?,
            step_onset: onset.ok_or_else(|| missing("step_onset"))?,
            window: window.ok_or_else(|| missing("window"))?,
            omega_start: omega_start.ok_or_else(|| missing("omega_start"))?,
            rows,
        })
    }
}
