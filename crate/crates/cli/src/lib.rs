//! `memkern` command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 numerical failure, 4 I/O or input
//! format failure.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use memkern_core::closure::{markovian_limit_curve, ou_ode_solve};
use memkern_core::diagnostics::{curvature_infer_alpha0, diagnostics_along_curve, extract_tau_dec, scale_to_pure_state};
use memkern_core::functional::{coherence_from_phi, phi_quadrature};
use memkern_core::io;
use memkern_core::model::{CoherenceCurve, Grid};
use memkern_core::plot::{render_plot, Labels, PlotStyle, Series};
use memkern_core::pseudomode::{converge_truncation, PseudomodeConfig};
use memkern_core::scaling::{scaling_study, sweep, Backend, SweepSettings};
use memkern_core::stochastic::{mc_dephasing_average, McConfig};
use memkern_core::Error;
use num_complex::Complex64;

pub use config::{parse_config, BackendChoice, Command, RunConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Clap(clap::Error),
    #[error("usage: {0}")]
    Usage(String),
    /// Failure reading or parsing an input file.
    #[error("{path}: {source}")]
    Input { path: String, source: Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) => match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            },
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input { source, .. } => match source {
                Error::Io(_) | Error::Parse { .. } | Error::Data(_) => EXIT_IO,
                _ => EXIT_NUMERICAL,
            },
            CliError::Core(e) => match e {
                Error::Io(_) => EXIT_IO,
                Error::InvalidParameter(_) | Error::UnsupportedKernel(_) | Error::NoPointwiseValue => EXIT_USAGE,
                _ => EXIT_NUMERICAL,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Caps rayon's global pool at `MEMKERN_THREADS` workers when set.
pub fn init_threads(value: Option<&str>) -> Result<()> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("MEMKERN_THREADS must be a positive integer, got '{v}'")))?;
    // A second call in the same process (tests) keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `argv`, runs the command and returns the exit code. Diagnostics go
/// to `err`; results go to `out` unless an output path is configured.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = init_threads(std::env::var("MEMKERN_THREADS").ok().as_deref())
        .and_then(|_| parse_config(argv))
        .and_then(|cfg| execute(&cfg, out, err));
    match result {
        Ok(()) => 0,
        Err(e @ CliError::Clap(_)) => {
            let code = e.exit_code();
            let CliError::Clap(e) = e else { unreachable!() };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            code
        }
        Err(e) => {
            let _ = writeln!(err, "memkern: error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cfg.command {
        Command::Simulate => simulate(cfg, out, err),
        Command::Sweep => run_sweep(cfg, out, err),
        Command::Infer => infer(cfg, out, err),
        Command::Diagnose => diagnose(cfg, out, err),
        Command::Plot => plot(cfg, err),
    }
}

fn note(err: &mut dyn Write, line: impl std::fmt::Display) {
    let _ = writeln!(err, "{line}");
}

/// Runs `write` against the configured output file, or `out`.
fn emit<F>(path: Option<&Path>, out: &mut dyn Write, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> memkern_core::Result<()>,
{
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| io_error(p, e))?;
            let mut w = BufWriter::new(f);
            write(&mut w)?;
            w.flush().map_err(|e| io_error(p, e))?;
        }
        None => {
            write(out)?;
            out.flush().map_err(Error::Io)?;
        }
    }
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_input(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_string(&mut s))
        .map_err(|e| CliError::Input { path: path.display().to_string(), source: Error::Io(e) })?;
    Ok(s)
}

fn read_curve(path: &Path) -> Result<CoherenceCurve> {
    let text = read_input(path)?;
    io::read_curve_csv(text.as_bytes()).map_err(|source| CliError::Input { path: path.display().to_string(), source })
}

fn simulate_curve(cfg: &RunConfig, err: &mut dyn Write) -> Result<CoherenceCurve> {
    let params = &cfg.params;
    let grid = Grid::from_final(cfg.dt, cfg.t_final)?;
    let curve = match cfg.backend {
        BackendChoice::Markovian => markovian_limit_curve(params, grid),
        BackendChoice::Core(Backend::Functional) => {
            let phi = phi_quadrature(&cfg.kernel_spec()?, params, grid)?;
            coherence_from_phi(&phi, Complex64::new(1.0, 0.0))
        }
        BackendChoice::Core(Backend::OuClosure) => ou_ode_solve(params, cfg.tau_c, grid)?,
        BackendChoice::Core(Backend::Pseudomode) => {
            let pm = PseudomodeConfig::for_ou(params, cfg.tau_c, cfg.coupling, cfg.n_max, cfg.dt, cfg.t_final)?;
            let (curve, cert) = converge_truncation(params, &pm)?;
            note(err, format_args!("truncation = {cert}"));
            curve
        }
        BackendChoice::Core(Backend::Stochastic) => {
            let mc = McConfig::new(params, cfg.n_traj, cfg.dt, cfg.t_final, cfg.seed);
            mc_dephasing_average(&mc, params, &cfg.kernel_spec()?)?.curve
        }
    };
    if let Some(w) = curve.meta.settings.get("warning") {
        note(err, format_args!("warning = {w}"));
    }
    Ok(curve)
}

fn tau_dec_line(curve: &CoherenceCurve) -> Result<String> {
    Ok(match extract_tau_dec(curve)? {
        Some(t) => format!("tau_dec = {t}"),
        None => format!("tau_dec = none (no e^-1 crossing before t = {})", curve.time(curve.len() - 1)),
    })
}

fn curve_series(name: &str, curve: &CoherenceCurve, style: PlotStyle) -> Result<Series> {
    let pts: Vec<(f64, f64)> = curve
        .times()
        .zip(curve.normalized_magnitudes()?)
        .filter(|&(t, c)| style == PlotStyle::Linear || (t > 0.0 && c > 0.0))
        .collect();
    Ok(Series::line(name, pts))
}

fn simulate(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let curve = simulate_curve(cfg, err)?;
    note(err, tau_dec_line(&curve)?);
    emit(cfg.output.as_deref(), out, |w| io::write_curve_csv(&curve, w))?;
    if let Some(path) = &cfg.plot {
        let labels = Labels { title: format!("{} backend", cfg.backend.tag()), x: "t".into(), y: "|C(t)|/|C(0)|".into() };
        render_plot(&[curve_series(cfg.backend.tag(), &curve, cfg.style)?], cfg.style, &labels, path)?;
    }
    Ok(())
}

fn run_sweep(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let BackendChoice::Core(backend) = cfg.backend else {
        return Err(CliError::Usage("--backend markovian has no correlation time to sweep".into()));
    };
    let settings = SweepSettings {
        kernel: cfg.kernel,
        exponent: cfg.p,
        window_factor: cfg.window_factor,
        points: cfg.points,
        n_traj: cfg.n_traj,
        seed: cfg.seed,
        n_max: cfg.n_max,
        coupling: cfg.coupling,
    };
    let points = sweep(backend, &cfg.params, &cfg.tau_c_list, &settings)?;
    emit(cfg.output.as_deref(), out, |w| io::write_scaling_csv(&points, w))?;
    let result = scaling_study(points, cfg.guard)?;
    let _ = write!(err, "{}", io::fit_report(&result));
    if let Some(path) = &cfg.plot {
        let data: Vec<(f64, f64)> = result.points.iter().filter_map(|p| p.tau_dec.map(|t| (p.tau_c, t))).collect();
        let fit: Vec<(f64, f64)> =
            data.iter().map(|&(x, _)| (x, result.fit.prefactor * x.powf(result.fit.beta))).collect();
        let series = [Series::scatter("tau_dec", data), Series::dashed(format!("fit, beta = {:.4}", result.fit.beta), fit)];
        let labels = Labels { title: format!("{} sweep", backend.tag()), x: "tau_c".into(), y: "tau_dec".into() };
        render_plot(&series, PlotStyle::LogLog, &labels, path)?;
    }
    Ok(())
}

fn infer(cfg: &RunConfig, out: &mut dyn Write, _err: &mut dyn Write) -> Result<()> {
    let curve = read_curve(&cfg.input[0])?;
    let r = curvature_infer_alpha0(&curve, &cfg.params)?;
    let report = io::inference_report(&r);
    emit(cfg.output.as_deref(), out, |w| {
        w.write_all(report.as_bytes())?;
        Ok(())
    })?;
    if let Some(path) = &cfg.residuals {
        emit(Some(path), out, |w| io::write_residuals_csv(&r, w))?;
    }
    if let Some(path) = &cfg.plot {
        let data: Vec<(f64, f64)> = r.residuals.iter().map(|p| (p.t, p.phi)).collect();
        let quad: Vec<(f64, f64)> = data.iter().map(|&(t, _)| (t, r.gamma_hat * t * t)).collect();
        let lin: Vec<(f64, f64)> = data.iter().map(|&(t, _)| (t, r.linear_rate * t)).collect();
        let series = [Series::scatter("Phi", data), Series::dashed("gamma t^2", quad), Series::dashed("rate t", lin)];
        let labels = Labels { title: format!("short-time fit ({})", r.regime), x: "t".into(), y: "Phi(t)".into() };
        render_plot(&series, PlotStyle::Linear, &labels, path)?;
    }
    Ok(())
}

fn diagnose(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut curve = read_curve(&cfg.input[0])?;
    let (ll, rr) = (cfg.rho_ll, 1.0 - cfg.rho_ll);
    if cfg.assume_pure {
        curve = scale_to_pure_state(&curve, ll, rr)?;
    }
    note(err, tau_dec_line(&curve)?);
    let points = diagnostics_along_curve(&curve, ll, rr)?;
    emit(cfg.output.as_deref(), out, |w| io::write_diagnostics_csv(&points, w))?;
    if let Some(path) = &cfg.plot {
        let purity = points.iter().map(|p| (p.t, p.purity)).collect();
        let entropy = points.iter().map(|p| (p.t, p.entropy)).collect();
        let labels = Labels { title: "reduced-state diagnostics".into(), x: "t".into(), y: String::new() };
        render_plot(&[Series::line("purity", purity), Series::line("entropy", entropy)], PlotStyle::Linear, &labels, path)?;
    }
    Ok(())
}

fn plot(cfg: &RunConfig, _err: &mut dyn Write) -> Result<()> {
    let mut series = Vec::new();
    let mut scaling = false;
    for path in &cfg.input {
        let text = read_input(path)?;
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let input_err = |source| CliError::Input { path: path.display().to_string(), source };
        if text.trim_start().starts_with("tau_c") {
            scaling = true;
            let pts = io::read_scaling_csv(text.as_bytes()).map_err(input_err)?;
            series.push(Series::scatter(name, pts.iter().filter_map(|p| p.tau_dec.map(|t| (p.tau_c, t))).collect()));
        } else {
            let curve = io::read_curve_csv(text.as_bytes()).map_err(input_err)?;
            series.push(curve_series(&name, &curve, cfg.style)?);
        }
    }
    let labels = if scaling {
        Labels { title: String::new(), x: "tau_c".into(), y: "tau_dec".into() }
    } else {
        Labels { title: String::new(), x: "t".into(), y: "|C(t)|/|C(0)|".into() }
    };
    let path = cfg.output.as_deref().expect("validated");
    render_plot(&series, cfg.style, &labels, path)?;
    Ok(())
}
