//! Pulse programs as CSV: `t_ns,i_mhz,q_mhz`, one row per step, `t` at the
//! end of the step.

use std::path::Path;

use spinmux::dynamics::PulseProgram;

use crate::error::{CliError, CliResult};
use crate::fmt_num;

pub const HEADER: &str = "t_ns,i_mhz,q_mhz";

/// Relative tolerance on the spacing of `t_ns`.
pub const SPACING_TOL: f64 = 1e-6;

pub fn to_csv(pulse: &PulseProgram) -> String {
    let mut out = String::with_capacity(64 * (pulse.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    let dt_ns = pulse.dt() * 1e9;
    for (l, s) in pulse.steps().iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_num((l + 1) as f64 * dt_ns),
            fmt_num(s.i_amp / 1e6),
            fmt_num(s.q_amp / 1e6)
        ));
    }
    out
}

pub fn write(path: &Path, pulse: &PulseProgram) -> CliResult<()> {
    std::fs::write(path, to_csv(pulse)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> CliResult<PulseProgram> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, &path.display().to_string())
}

pub fn parse(text: &str, origin: &str) -> CliResult<PulseProgram> {
    let err = |line: usize, reason: String| CliError::Parse {
        path: origin.to_string(),
        line,
        reason,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((n, h)) => {
            return Err(err(
                n + 1,
                format!("expected header {HEADER:?}, found {:?}", h.trim()),
            ))
        }
        None => return Err(err(1, "empty pulse file".into())),
    }

    let mut t = Vec::new();
    let mut i = Vec::new();
    let mut q = Vec::new();
    for (n, line) in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(err(
                n + 1,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        let mut vals = [0.0; 3];
        for (v, c) in vals.iter_mut().zip(&cols) {
            *v = c
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(n + 1, format!("not a finite number: {c:?}")))?;
        }
        if let Some(&prev) = t.last() {
            if vals[0] <= prev {
                return Err(err(n + 1, "t_ns must be strictly increasing".into()));
            }
        } else if vals[0] <= 0.0 {
            return Err(err(
                n + 1,
                "t_ns is the end of each step and must be > 0".into(),
            ));
        }
        t.push(vals[0]);
        i.push(vals[1] * 1e6);
        q.push(vals[2] * 1e6);
        let k = t.len();
        if k >= 3 {
            let first = t[1] - t[0];
            let this = t[k - 1] - t[k - 2];
            if (this - first).abs() > SPACING_TOL * first {
                return Err(err(
                    n + 1,
                    format!("non-uniform spacing: {this} ns vs {first} ns"),
                ));
            }
        }
    }
    if t.is_empty() {
        return Err(err(2, "no pulse steps".into()));
    }
    let dt_ns = if t.len() == 1 {
        t[0]
    } else {
        (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64
    };
    PulseProgram::from_iq(&i, &q, dt_ns * 1e-9).map_err(|e| err(2, e.to_string()))
}
