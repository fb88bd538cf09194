//! CSV and JSON serialization. Numbers are written with 17 significant
//! digits (`{:.16e}`) so identical inputs give byte-identical files.
//!
//! CSV schemas:
//!
//! | file            | columns                                                                |
//! |-----------------|------------------------------------------------------------------------|
//! | backbone        | `a, nu, nu_order1`                                                     |
//! | response curve  | `sigma, forcing_freq, a, beta, gamma, stable, residual, trace_j, det_j` |
//! | trajectory      | `t, u_1..u_n, v_1..v_n` (physical units)                               |
//! | spectrum        | `frequency, magnitude`                                                 |
//! | peaks           | `frequency, magnitude, bin_index`                                      |
//! | convergence     | `epsilon, max_error`                                                   |
//! | peak location   | `epsilon, sigma_scan, sigma_pred, gap, gap_over_eps2, a_scan, a_pred, amp_rel_err` |

use std::io::Write;

use serde::Serialize;

use crate::asymptotic_forced::ResponseCurve;
use crate::model::OscillatorParams;
use crate::spectral::{PeakList, Spectrum};
use crate::validation::{ConvergenceReport, PeakLocationTable};
use crate::{Real, Result};

/// Formats a number with 17 significant digits; `-0` is written as `0`.
pub fn fmt_num<T: Real>(x: T) -> String {
    let v = x.as_f64();
    format!("{:.16e}", if v == 0.0 { 0.0 } else { v })
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Generic numeric table.
pub fn write_table<W: Write, T: Real>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<T>>) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(header)?;
    for row in rows {
        wr.write_record(row.into_iter().map(fmt_num))?;
    }
    wr.flush()?;
    Ok(())
}

/// `a, nu, nu_order1` over an amplitude grid.
pub fn write_backbone<W: Write, T: Real>(w: W, params: &OscillatorParams<T>, amplitudes: &[T]) -> Result<()> {
    use crate::asymptotic_free::{backbone_frequency, backbone_frequency_order1};
    write_table(
        w,
        &["a", "nu", "nu_order1"],
        amplitudes.iter().map(|&a| vec![a, backbone_frequency(a, params), backbone_frequency_order1(a, params)]),
    )
}

pub fn write_response_curve<W: Write, T: Real>(w: W, curve: &ResponseCurve<T>, params: &OscillatorParams<T>) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["sigma", "forcing_freq", "a", "beta", "gamma", "stable", "residual", "trace_j", "det_j"])?;
    for p in &curve.points {
        wr.write_record([
            fmt_num(p.sigma),
            fmt_num(params.omega + params.epsilon * p.sigma),
            fmt_num(p.a),
            fmt_num(p.beta),
            fmt_num(p.gamma()),
            p.stable.to_string(),
            fmt_num(p.residual),
            fmt_num(p.trace_j),
            fmt_num(p.det_j),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Trajectory rows `t, u_1..u_n, v_1..v_n`; `states` use the `[u.., v..]`
/// layout and are written multiplied by `scale`.
pub fn write_trajectory<W: Write, T: Real>(w: W, times: &[T], states: &[Vec<T>], scale: T) -> Result<()> {
    let n = states.first().map_or(0, |s| s.len() / 2);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.extend((1..=n).map(|i| format!("v_{i}")));
    let mut wr = writer(w);
    wr.write_record(&header)?;
    for (t, s) in times.iter().zip(states) {
        let mut row = vec![fmt_num(*t)];
        row.extend(s.iter().map(|&v| fmt_num(v * scale)));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_spectrum<W: Write, T: Real>(w: W, spec: &Spectrum<T>) -> Result<()> {
    write_table(w, &["frequency", "magnitude"], spec.frequencies.iter().zip(&spec.magnitudes).map(|(&f, &m)| vec![f, m]))
}

pub fn write_peaks<W: Write, T: Real>(w: W, peaks: &PeakList<T>) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["frequency", "magnitude", "bin_index"])?;
    for p in &peaks.peaks {
        wr.write_record([fmt_num(p.frequency), fmt_num(p.magnitude), p.bin_index.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_convergence<W: Write, T: Real>(w: W, report: &ConvergenceReport<T>) -> Result<()> {
    write_table(w, &["epsilon", "max_error"], report.epsilons.iter().zip(&report.max_errors).map(|(&e, &m)| vec![e, m]))
}

pub fn write_peak_table<W: Write, T: Real>(w: W, table: &PeakLocationTable<T>) -> Result<()> {
    write_table(
        w,
        &["epsilon", "sigma_scan", "sigma_pred", "gap", "gap_over_eps2", "a_scan", "a_pred", "amp_rel_err"],
        table.rows.iter().map(|r| vec![r.epsilon, r.sigma_scan, r.sigma_pred, r.gap, r.gap_over_eps2, r.a_scan, r.a_pred, r.amp_rel_err]),
    )
}

/// Pretty JSON followed by a newline.
pub fn write_json<W: Write, S: Serialize + ?Sized>(mut w: W, value: &S) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}
