//! CSV and plain-text report formats.
//!
//! Coherence curves are written as `t,re,im,abs[,stderr]` with 17 significant
//! digits, so reading a file produced here gives back bit-identical samples.
//! The reader also accepts `t,abs` (phase taken as zero).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::diagnostics::{DiagnosticPoint, InferenceResult};
use crate::error::{Error, Result};
use crate::functional::PhiCurve;
use crate::model::{CoherenceCurve, CurveMeta};
use crate::scaling::{Backend, ScalingPoint, ScalingResult};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(Error::Io)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_curve_csv<W: Write>(curve: &CoherenceCurve, w: W) -> Result<()> {
    let mut out = writer(w);
    let with_se = curve.stderr.is_some();
    let header: &[&str] = if with_se { &["t", "re", "im", "abs", "stderr"] } else { &["t", "re", "im", "abs"] };
    out.write_record(header).map_err(csv_err)?;
    for (i, c) in curve.samples.iter().enumerate() {
        let mut row = vec![num(curve.time(i)), num(c.re), num(c.im), num(c.norm())];
        if let Some(se) = &curve.stderr {
            row.push(num(se[i]));
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    finish(out)
}

pub fn write_curve_file(curve: &CoherenceCurve, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    write_curve_csv(curve, &mut f)?;
    f.flush()?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Full { stderr: bool },
    Magnitude,
}

fn parse_field(field: &str, line: u64, column: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("column '{column}': cannot parse '{field}' as a number"),
    })
}

/// Reads `t,re,im,abs[,stderr]` or `t,abs`. Times must be uniformly spaced.
pub fn read_curve_csv<R: Read>(r: R) -> Result<CoherenceCurve> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(csv_err)?,
        None => return Err(Error::Parse { line: 1, message: "empty file".into() }),
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let layout = match names.as_slice() {
        ["t", "re", "im", "abs"] => Layout::Full { stderr: false },
        ["t", "re", "im", "abs", "stderr"] => Layout::Full { stderr: true },
        ["t", "abs"] => Layout::Magnitude,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header '{}'; expected t,re,im,abs[,stderr] or t,abs", names.join(",")),
            })
        }
    };
    let width = names.len();
    let mut times = Vec::new();
    let mut samples = Vec::new();
    let mut stderr = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::Parse { line, message: format!("expected {width} fields, found {}", rec.len()) });
        }
        let mut vals = Vec::with_capacity(width);
        for (field, name) in rec.iter().zip(&names) {
            vals.push(parse_field(field, line, name)?);
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line, message: "non-finite value".into() });
        }
        times.push((vals[0], line));
        match layout {
            Layout::Full { stderr: se } => {
                samples.push(Complex64::new(vals[1], vals[2]));
                if se {
                    stderr.push(vals[4]);
                }
            }
            Layout::Magnitude => samples.push(Complex64::new(vals[1], 0.0)),
        }
    }
    if times.len() < 2 {
        return Err(Error::Parse { line: 2, message: "need at least two data rows".into() });
    }
    let t0 = times[0].0;
    let n = times.len();
    let dt = (times[n - 1].0 - t0) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Parse { line: times[1].1, message: "times must increase".into() });
    }
    for (i, &(t, line)) in times.iter().enumerate() {
        let expected = t0 + i as f64 * dt;
        if (t - expected).abs() > 1e-6 * dt + 1e-12 * expected.abs() {
            return Err(Error::Parse { line, message: format!("time {t} breaks uniform spacing (expected {expected})") });
        }
    }
    let curve = CoherenceCurve::new(t0, dt, samples, CurveMeta::default())?;
    if matches!(layout, Layout::Full { stderr: true }) {
        curve.with_stderr(stderr)
    } else {
        Ok(curve)
    }
}

pub fn read_curve_file(path: &Path) -> Result<CoherenceCurve> {
    read_curve_csv(File::open(path)?)
}

pub fn write_phi_csv<W: Write>(phi: &PhiCurve, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "phi"]).map_err(csv_err)?;
    for (i, v) in phi.values.iter().enumerate() {
        out.write_record([num(phi.time(i)), num(*v)]).map_err(csv_err)?;
    }
    finish(out)
}

pub fn write_diagnostics_csv<W: Write>(points: &[DiagnosticPoint], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "purity", "entropy"]).map_err(csv_err)?;
    for p in points {
        out.write_record([num(p.t), num(p.purity), num(p.entropy)]).map_err(csv_err)?;
    }
    finish(out)
}

/// `tau_c,tau_dec,backend`; an absent crossing leaves `tau_dec` empty.
pub fn write_scaling_csv<W: Write>(points: &[ScalingPoint], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["tau_c", "tau_dec", "backend"]).map_err(csv_err)?;
    for p in points {
        let tau_dec = p.tau_dec.map(num).unwrap_or_default();
        out.write_record([num(p.tau_c), tau_dec, p.backend.tag().to_string()]).map_err(csv_err)?;
    }
    finish(out)
}

pub fn read_scaling_csv<R: Read>(r: R) -> Result<Vec<ScalingPoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(csv_err)?,
        None => return Err(Error::Parse { line: 1, message: "empty file".into() }),
    };
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["tau_c", "tau_dec", "backend"] {
        return Err(Error::Parse { line: 1, message: "expected header tau_c,tau_dec,backend".into() });
    }
    let mut points = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(Error::Parse { line, message: format!("expected 3 fields, found {}", rec.len()) });
        }
        let tau_c = parse_field(&rec[0], line, "tau_c")?;
        let tau_dec = if rec[1].trim().is_empty() { None } else { Some(parse_field(&rec[1], line, "tau_dec")?) };
        let backend: Backend = rec[2]
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("unknown backend '{}'", &rec[2]) })?;
        let skipped = tau_dec.is_none().then(|| "no crossing".to_string());
        points.push(ScalingPoint { tau_c, tau_dec, backend, skipped });
    }
    Ok(points)
}

/// Key-value block describing a power-law fit and the excluded points.
pub fn fit_report(result: &ScalingResult) -> String {
    let mut s = String::new();
    s.push_str(&format!("beta = {}\n", num(result.fit.beta)));
    s.push_str(&format!("prefactor = {}\n", num(result.fit.prefactor)));
    s.push_str(&format!("r2 = {}\n", num(result.fit.r2)));
    s.push_str(&format!("fitted_points = {}\n", result.fit.residuals.len()));
    for p in &result.points {
        if let Some(reason) = &p.skipped {
            s.push_str(&format!("skipped = tau_c {} ({reason})\n", p.tau_c));
        }
    }
    s
}

pub fn inference_report(r: &InferenceResult) -> String {
    let mut s = String::new();
    s.push_str(&format!("alpha00_hat = {}\n", num(r.alpha00_hat)));
    s.push_str(&format!(
        "tau_c_hat = {}\n",
        r.tau_c_hat.map(num).unwrap_or_else(|| "undefined".into())
    ));
    s.push_str(&format!("gamma_hat = {}\n", num(r.gamma_hat)));
    s.push_str(&format!("linear_rate = {}\n", num(r.linear_rate)));
    s.push_str(&format!("regime = {}\n", r.regime));
    s.push_str(&format!("reliable = {}\n", r.reliable));
    s.push_str(&format!("fit_window = {} {}\n", num(r.fit_window.0), num(r.fit_window.1)));
    s.push_str(&format!("fit_samples = {}\n", r.residuals.len()));
    s.push_str(&format!("rss_quadratic = {}\n", num(r.rss_quadratic)));
    s.push_str(&format!("rss_linear = {}\n", num(r.rss_linear)));
    s
}

pub fn write_residuals_csv<W: Write>(r: &InferenceResult, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "phi", "quadratic_residual", "linear_residual"]).map_err(csv_err)?;
    for p in &r.residuals {
        out.write_record([num(p.t), num(p.phi), num(p.quadratic), num(p.linear)]).map_err(csv_err)?;
    }
    finish(out)
}

/// Writes `contents` to `path` through a buffered file.
pub fn write_text_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(contents.as_bytes())?;
    f.flush()?;
    Ok(())
}
