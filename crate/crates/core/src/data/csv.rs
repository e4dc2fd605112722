//! Plain CSV exports. Values are written as plain decimals with 17
//! significant digits, which round-trips every `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{write_atomic, Trajectory};
use crate::error::Result;

/// Columns `t, x_0.., u_0..`, one row per sample.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.state_dim().unwrap_or(0);
    let m = traj.control_dim().unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("u_{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..traj.len() {
        let row = std::iter::once(traj.times[i])
            .chain(traj.states[i].iter().copied())
            .chain(traj.controls[i].iter().copied());
        push_row(&mut out, row);
    }
    out
}

/// Columns `step, loss`.
pub fn history_csv(history: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", decimal17(*l));
    }
    out
}

/// Arbitrary numeric table under a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        push_row(&mut out, row.iter().copied());
    }
    out
}

/// Fixed-point rendering with exactly 17 significant digits.
pub(crate) fn decimal17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    // The scientific form gives the decimal exponent after rounding.
    let sci = format!("{v:.16e}");
    let exp: i32 = sci[sci.find('e').map_or(sci.len(), |i| i + 1)..]
        .parse()
        .unwrap_or(0);
    let prec = (16 - exp).max(0) as usize;
    format!("{v:.prec$}")
}

fn push_row(out: &mut String, values: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&decimal17(v));
    }
    out.push('\n');
}

pub fn save_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), trajectory_csv(traj).as_bytes())
}

pub fn save_table_csv(header: &[&str], rows: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), table_csv(header, rows).as_bytes())
}

pub fn save_history_csv(history: &[f64], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), history_csv(history).as_bytes())
}
