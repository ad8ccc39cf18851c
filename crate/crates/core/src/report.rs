//! CSV and JSON writers shared by the CLI and tests.

use std::io::{self, Write};

use serde::Serialize;

use crate::equilibria::{EquilibriaReport, Equilibrium};
use crate::urn::SimulationOutput;

/// Scientific notation with 17 significant digits, enough to round-trip any f64.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn header<W: Write>(w: &mut W, prefix: &str, m: usize) -> io::Result<()> {
    write!(w, "{prefix}")?;
    for i in 1..=m {
        write!(w, ",x_{i}")?;
    }
    writeln!(w)
}

/// `step,x_1,...,x_m`, one row per recorded checkpoint.
pub fn write_trajectory_csv<W: Write>(mut w: W, out: &SimulationOutput) -> io::Result<()> {
    let m = out.final_state.counts.len();
    header(&mut w, "step", m)?;
    for (step, x) in out.steps.iter().zip(&out.trajectory) {
        let row: Vec<String> = x.iter().map(|v| fmt17(*v)).collect();
        writeln!(w, "{step},{}", row.join(","))?;
    }
    Ok(())
}

/// `t,x_1,...,x_m` for a deterministic trajectory.
pub fn write_ode_csv<W: Write>(mut w: W, times: &[f64], states: &[Vec<f64>]) -> io::Result<()> {
    let m = states.first().map_or(0, Vec::len);
    header(&mut w, "t", m)?;
    for (t, x) in times.iter().zip(states) {
        let row: Vec<String> = x.iter().map(|v| fmt17(*v)).collect();
        writeln!(w, "{},{}", fmt17(*t), row.join(","))?;
    }
    Ok(())
}

fn support_label(e: &Equilibrium) -> String {
    e.support
        .iter()
        .map(|v| (v + 1).to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// `support,x_1,...,x_m,classification,max_real_part_nonzero_eig`.
/// Supports are space-separated 1-based labels.
pub fn write_equilibria_csv<W: Write>(
    mut w: W,
    m: usize,
    report: &EquilibriaReport,
) -> io::Result<()> {
    write!(w, "support")?;
    for i in 1..=m {
        write!(w, ",x_{i}")?;
    }
    writeln!(w, ",classification,max_real_part_nonzero_eig")?;
    for e in report.equilibria() {
        let row: Vec<String> = e.point.iter().map(|v| fmt17(*v)).collect();
        let max_re = e
            .assessment
            .max_real_part_nonzero
            .map(fmt17)
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{}",
            support_label(e),
            row.join(","),
            e.assessment.classification.as_str(),
            max_re
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(w: W, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(w, value).map_err(io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [1.0 / 3.0, 0.1, 1e-300, -2.5e17, 0.0] {
            let s = fmt17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt17(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(fmt17(f64::INFINITY), "inf");
    }

    #[test]
    fn ode_csv_header() {
        let mut buf = Vec::new();
        write_ode_csv(&mut buf, &[0.0], &[vec![0.5, 0.5]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x_1,x_2\n0.0000000000000000e0,5.0"));
    }
}
