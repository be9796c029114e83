//! Run configuration: command-line flags layered over an optional key-value
//! config file, with a canonical text form that parses back to the same
//! configuration.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use memkern_core::model::{KernelKind, KernelSpec, SystemParams};
use memkern_core::plot::PlotStyle;
use memkern_core::pseudomode::Coupling;
use memkern_core::scaling::Backend;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Sweep,
    Infer,
    Diagnose,
    Plot,
}

impl Command {
    pub fn tag(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Infer => "infer",
            Command::Diagnose => "diagnose",
            Command::Plot => "plot",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Command::Simulate, Command::Sweep, Command::Infer, Command::Diagnose, Command::Plot]
            .into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| format!("unknown command '{s}'"))
    }
}

/// Backends selectable from the command line; `markovian` is the memoryless
/// exponential reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Core(Backend),
    Markovian,
}

impl BackendChoice {
    pub fn tag(self) -> &'static str {
        match self {
            BackendChoice::Core(b) => b.tag(),
            BackendChoice::Markovian => "markovian",
        }
    }
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "markovian" {
            return Ok(BackendChoice::Markovian);
        }
        s.parse::<Backend>().map(BackendChoice::Core).map_err(|_| {
            format!("unknown backend '{s}' (expected functional, ou-closure, pseudomode, stochastic or markovian)")
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub backend: BackendChoice,
    pub params: SystemParams,
    pub kernel: KernelKind,
    pub tau_c: f64,
    pub p: Option<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub n_traj: usize,
    pub n_max: usize,
    pub coupling: Coupling,
    pub tau_c_list: Vec<f64>,
    pub window_factor: f64,
    pub points: usize,
    pub guard: bool,
    pub rho_ll: f64,
    pub assume_pure: bool,
    pub style: PlotStyle,
    pub input: Vec<PathBuf>,
    pub output: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub residuals: Option<PathBuf>,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            backend: BackendChoice::Core(Backend::Functional),
            params: SystemParams::default(),
            kernel: KernelKind::OrnsteinUhlenbeck,
            tau_c: 1.0,
            p: None,
            dt: 1e-3,
            t_final: 10.0,
            seed: 42,
            n_traj: 10_000,
            n_max: 8,
            coupling: Coupling::Dephasing,
            tau_c_list: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            window_factor: 3.0,
            points: 2000,
            guard: true,
            rho_ll: 0.5,
            assume_pure: false,
            style: PlotStyle::Linear,
            input: Vec::new(),
            output: None,
            plot: None,
            residuals: None,
        }
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec, CliError> {
        let tau = (self.kernel != KernelKind::Delta).then_some(self.tau_c);
        let p = if self.kernel == KernelKind::SoftPowerLaw { self.p } else { None };
        KernelSpec::from_parts(self.kernel, tau, p).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// One `key = value` line per field in a fixed order; optional fields are
    /// omitted when unset.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("command", self.command.tag().into());
        put("backend", self.backend.tag().into());
        put("a", self.params.a.to_string());
        put("hbar", self.params.hbar.to_string());
        put("d", self.params.d.to_string());
        put("kernel", self.kernel.tag().into());
        put("tau_c", self.tau_c.to_string());
        if let Some(p) = self.p {
            put("p", p.to_string());
        }
        put("dt", self.dt.to_string());
        put("t_final", self.t_final.to_string());
        put("seed", self.seed.to_string());
        put("n_traj", self.n_traj.to_string());
        put("n_max", self.n_max.to_string());
        put("coupling", self.coupling.tag().into());
        put("tau_c_list", self.tau_c_list.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        put("window_factor", self.window_factor.to_string());
        put("points", self.points.to_string());
        put("guard", self.guard.to_string());
        put("rho_ll", self.rho_ll.to_string());
        put("assume_pure", self.assume_pure.to_string());
        put("style", style_tag(self.style).into());
        if !self.input.is_empty() {
            put("input", self.input.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","));
        }
        for (k, v) in [("output", &self.output), ("plot", &self.plot), ("residuals", &self.residuals)] {
            if let Some(path) = v {
                put(k, path.display().to_string());
            }
        }
        s
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.trim().parse().map_err(|_| format!("{key}: cannot parse '{v}'"))
        }
        fn flag(key: &str, v: &str) -> Result<bool, String> {
            match v.trim() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(format!("{key}: expected true or false, got '{v}'")),
            }
        }
        let paths = |v: &str| v.split(',').map(|p| PathBuf::from(p.trim())).collect::<Vec<_>>();
        match key {
            "command" => self.command = value.parse()?,
            "backend" => self.backend = value.parse()?,
            "a" => self.params.a = num(key, value)?,
            "hbar" => self.params.hbar = num(key, value)?,
            "d" => self.params.d = num(key, value)?,
            "kernel" => self.kernel = value.parse().map_err(|e: memkern_core::Error| e.to_string())?,
            "tau_c" => self.tau_c = num(key, value)?,
            "p" => self.p = Some(num(key, value)?),
            "dt" => self.dt = num(key, value)?,
            "t_final" => self.t_final = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "n_traj" => self.n_traj = num(key, value)?,
            "n_max" => self.n_max = num(key, value)?,
            "coupling" => self.coupling = value.parse().map_err(|e: memkern_core::Error| e.to_string())?,
            "tau_c_list" => {
                self.tau_c_list = value
                    .split(',')
                    .map(|v| num::<f64>(key, v))
                    .collect::<Result<_, _>>()?
            }
            "window_factor" => self.window_factor = num(key, value)?,
            "points" => self.points = num(key, value)?,
            "guard" => self.guard = flag(key, value)?,
            "rho_ll" => self.rho_ll = num(key, value)?,
            "assume_pure" => self.assume_pure = flag(key, value)?,
            "style" => self.style = parse_style(value)?,
            "input" => self.input = paths(value),
            "output" => self.output = Some(PathBuf::from(value.trim())),
            "plot" => self.plot = Some(PathBuf::from(value.trim())),
            "residuals" => self.residuals = Some(PathBuf::from(value.trim())),
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Checks ranges and backend/kernel compatibility. Messages name the
    /// offending flag.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if let Err(e) = SystemParams::new(self.params.a, self.params.hbar, self.params.d) {
            return usage(format!("--a/--hbar/--d: {e}"));
        }
        if self.kernel == KernelKind::SoftPowerLaw && self.p.is_none() {
            return usage("--p is required for kernel plaw".into());
        }
        if self.kernel != KernelKind::Delta && !(self.tau_c.is_finite() && self.tau_c > 0.0) {
            return usage(format!("--tau-c must be > 0, got {}", self.tau_c));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return usage(format!("--dt must be > 0, got {}", self.dt));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return usage(format!("--t-final must be > 0, got {}", self.t_final));
        }
        if !(0.0..=1.0).contains(&self.rho_ll) {
            return usage(format!("--rho-ll must lie in [0, 1], got {}", self.rho_ll));
        }
        if self.command == Command::Simulate || self.command == Command::Sweep {
            match self.backend {
                BackendChoice::Core(b @ (Backend::OuClosure | Backend::Pseudomode | Backend::Stochastic))
                    if self.kernel != KernelKind::OrnsteinUhlenbeck =>
                {
                    return usage(format!("--backend {b}: {b} supports OU only (got --kernel {})", self.kernel.tag()));
                }
                BackendChoice::Core(Backend::Functional) if self.kernel == KernelKind::Delta => {
                    return usage("--kernel delta has no pointwise value; use --backend markovian".into());
                }
                BackendChoice::Markovian if self.command == Command::Sweep => {
                    return usage("--backend markovian has no correlation time to sweep".into());
                }
                _ => {}
            }
        }
        if matches!(self.command, Command::Infer | Command::Diagnose) && self.input.len() != 1 {
            return usage(format!("--input: {} needs exactly one input curve", self.command.tag()));
        }
        if self.command == Command::Plot {
            if self.input.is_empty() {
                return usage("--input: plot needs at least one input file".into());
            }
            if self.output.is_none() {
                return usage("--output: plot needs an output path".into());
            }
        }
        if self.command == Command::Sweep && self.tau_c_list.is_empty() {
            return usage("--tau-c-list must not be empty".into());
        }
        Ok(())
    }
}

fn style_tag(s: PlotStyle) -> &'static str {
    match s {
        PlotStyle::Linear => "linear",
        PlotStyle::LogLog => "loglog",
    }
}

fn parse_style(v: &str) -> Result<PlotStyle, String> {
    match v.trim() {
        "linear" => Ok(PlotStyle::Linear),
        "loglog" => Ok(PlotStyle::LogLog),
        other => Err(format!("style: expected linear or loglog, got '{other}'")),
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parses `key = value` lines (`#` starts a comment) into a map, rejecting
/// duplicate keys.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, (usize, String)>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {line_no}: expected key = value")));
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {line_no}: empty key")));
        }
        if out.insert(key.clone(), (line_no, v.trim().to_string())).is_some() {
            return Err(CliError::Usage(format!("config line {line_no}: duplicate key '{key}'")));
        }
    }
    Ok(out)
}

fn apply_map(cfg: &mut RunConfig, map: &BTreeMap<String, (usize, String)>) -> Result<(), CliError> {
    // `command` first so that later keys see the final command.
    if let Some((line, v)) = map.get("command") {
        cfg.set("command", v).map_err(|e| CliError::Usage(format!("config line {line}: {e}")))?;
    }
    for (k, (line, v)) in map {
        if k != "command" {
            cfg.set(k, v).map_err(|e| CliError::Usage(format!("config line {line}: {e}")))?;
        }
    }
    Ok(())
}

/// Parses canonical (or hand-written) config text for `command`.
pub fn parse_config_text(text: &str, command: Command) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::defaults(command);
    apply_map(&mut cfg, &parse_key_values(text)?)?;
    Ok(cfg)
}

#[derive(Parser, Debug)]
#[command(
    name = "memkern",
    version,
    about = "Decoherence under baths with memory: simulate, sweep, infer, diagnose, plot",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Compute one coherence curve and write it as CSV
    Simulate(Opts),
    /// Sweep tau_c, extract tau_dec and fit the power law
    Sweep(Opts),
    /// Infer alpha(0) and tau_c from the short-time curvature of a CSV curve
    Infer(Opts),
    /// Decoherence time, purity and entropy along a CSV curve
    Diagnose(Opts),
    /// Render curve or scaling CSV files as SVG
    Plot(Opts),
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// Key-value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// functional | ou-closure | pseudomode | stochastic | markovian
    #[arg(long)]
    backend: Option<String>,
    /// ou | gauss | plaw | delta
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long = "tau-c")]
    tau_c: Option<f64>,
    /// Power-law exponent (required for plaw)
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    hbar: Option<f64>,
    /// Diffusion constant D
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "n-traj")]
    n_traj: Option<usize>,
    /// Initial pseudomode truncation (doubled until converged)
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// Pseudomode coupling: dephasing | exchange
    #[arg(long)]
    coupling: Option<String>,
    /// Comma-separated correlation times for sweep
    #[arg(long = "tau-c-list")]
    tau_c_list: Option<String>,
    #[arg(long = "window-factor")]
    window_factor: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Fit all crossing points, including tau_dec/tau_c > 1
    #[arg(long = "no-guard")]
    no_guard: bool,
    /// Population of |L> (|R> gets 1 - rho_ll)
    #[arg(long = "rho-ll")]
    rho_ll: Option<f64>,
    /// Rescale the input so C(0) is the pure-state coherence
    #[arg(long = "assume-pure")]
    assume_pure: bool,
    /// linear | loglog
    #[arg(long)]
    style: Option<String>,
    /// Input CSV (comma-separated list for plot)
    #[arg(long, short = 'i')]
    input: Option<String>,
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
    /// Also render an SVG plot to this path
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Write inference residuals CSV to this path
    #[arg(long)]
    residuals: Option<PathBuf>,
}

impl Opts {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut push = |k: &'static str, val: Option<String>| {
            if let Some(x) = val {
                v.push((k, x));
            }
        };
        push("backend", self.backend.clone());
        push("kernel", self.kernel.clone());
        push("tau_c", self.tau_c.map(|x| x.to_string()));
        push("p", self.p.map(|x| x.to_string()));
        push("a", self.a.map(|x| x.to_string()));
        push("hbar", self.hbar.map(|x| x.to_string()));
        push("d", self.d.map(|x| x.to_string()));
        push("dt", self.dt.map(|x| x.to_string()));
        push("t_final", self.t_final.map(|x| x.to_string()));
        push("seed", self.seed.map(|x| x.to_string()));
        push("n_traj", self.n_traj.map(|x| x.to_string()));
        push("n_max", self.n_max.map(|x| x.to_string()));
        push("coupling", self.coupling.clone());
        push("tau_c_list", self.tau_c_list.clone());
        push("window_factor", self.window_factor.map(|x| x.to_string()));
        push("points", self.points.map(|x| x.to_string()));
        push("guard", self.no_guard.then(|| "false".to_string()));
        push("rho_ll", self.rho_ll.map(|x| x.to_string()));
        push("assume_pure", self.assume_pure.then(|| "true".to_string()));
        push("style", self.style.clone());
        push("input", self.input.clone());
        push("output", self.output.as_ref().map(|p| p.display().to_string()));
        push("plot", self.plot.as_ref().map(|p| p.display().to_string()));
        push("residuals", self.residuals.as_ref().map(|p| p.display().to_string()));
        v
    }
}

fn flag_name(key: &str) -> String {
    match key {
        "guard" => "--no-guard".into(),
        other => format!("--{}", other.replace('_', "-")),
    }
}

/// Builds the run configuration from `argv` (including the program name) and
/// the optional `--config` file.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(CliError::Clap)?;
    let (command, opts) = match cli.command {
        Cmd::Simulate(o) => (Command::Simulate, o),
        Cmd::Sweep(o) => (Command::Sweep, o),
        Cmd::Infer(o) => (Command::Infer, o),
        Cmd::Diagnose(o) => (Command::Diagnose, o),
        Cmd::Plot(o) => (Command::Plot, o),
    };
    let mut cfg = RunConfig::defaults(command);
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Core(memkern_core::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))?;
        apply_map(&mut cfg, &parse_key_values(&text)?)?;
        cfg.command = command;
    }
    for (key, value) in opts.overrides() {
        cfg.set(key, &value).map_err(|e| CliError::Usage(format!("{}: {e}", flag_name(key))))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn argv(s: &str) -> Vec<String> {
        std::iter::once("memkern".to_string()).chain(s.split_whitespace().map(String::from)).collect()
    }

    #[test]
    fn simulate_example() {
        let cfg = parse_config(argv("simulate --backend ou-closure --tau-c 1 --t-final 5")).unwrap();
        assert_eq!(cfg.command, Command::Simulate);
        assert_eq!(cfg.backend, BackendChoice::Core(Backend::OuClosure));
        assert_eq!(cfg.t_final, 5.0);
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn pseudomode_rejects_gaussian() {
        let err = parse_config(argv("simulate --backend pseudomode --kernel gauss")).unwrap_err();
        assert!(err.to_string().contains("pseudomode supports OU only"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn usage_errors_name_the_flag() {
        let e = parse_config(argv("simulate --kernel plaw")).unwrap_err();
        assert!(e.to_string().contains("--p"), "{e}");
        let e = parse_config(argv("simulate --bogus 1")).unwrap_err();
        assert!(e.to_string().contains("--bogus"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let e = parse_config(argv("simulate --backend nope")).unwrap_err();
        assert!(e.to_string().contains("--backend"), "{e}");
        assert!(parse_config(argv("")).is_err());
        assert!(parse_config(argv("infer")).unwrap_err().to_string().contains("--input"));
    }

    #[test]
    fn file_values_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# sweep setup\nbackend = ou-closure\ntau_c = 3\nseed = 7\n").unwrap();
        let cfg = parse_config(argv(&format!("simulate --config {} --seed 9", path.display()))).unwrap();
        assert_eq!(cfg.backend, BackendChoice::Core(Backend::OuClosure));
        assert_eq!(cfg.tau_c, 3.0);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn config_file_errors() {
        assert!(parse_config_text("tau_c 3\n", Command::Simulate).is_err());
        let e = parse_config_text("a = 1\nwhat = 2\n", Command::Simulate).unwrap_err();
        assert!(e.to_string().contains("line 2") && e.to_string().contains("what"), "{e}");
        assert!(parse_config_text("a = 1\na = 2\n", Command::Simulate).is_err());
        assert!(parse_config_text("seed = -1\n", Command::Simulate).is_err());
    }

    #[test]
    fn canonical_text_round_trip_of_defaults() {
        for c in [Command::Simulate, Command::Sweep, Command::Infer, Command::Diagnose, Command::Plot] {
            let cfg = RunConfig::defaults(c);
            assert_eq!(parse_config_text(&cfg.to_text(), Command::Simulate).unwrap(), cfg);
        }
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            (0usize..5, 0usize..5, 0usize..4, prop::option::of(1.01f64..8.0)),
            (1e-3f64..1e3, 1e-3f64..1e3, 1e-3f64..1e3, 1e-3f64..1e3),
            (1e-6f64..1.0, 1e-3f64..1e4, any::<u64>(), 100usize..100_000, 2usize..64),
            (prop::collection::vec(1e-3f64..1e3, 1..8), any::<bool>(), any::<bool>(), 0.0f64..=1.0),
            (prop::option::of("[a-z]{1,8}\\.csv"), any::<bool>(), any::<bool>()),
        )
            .prop_map(|(k, u, g, m, paths)| {
                let commands = [Command::Simulate, Command::Sweep, Command::Infer, Command::Diagnose, Command::Plot];
                let backends = [
                    BackendChoice::Core(Backend::Functional),
                    BackendChoice::Core(Backend::OuClosure),
                    BackendChoice::Core(Backend::Pseudomode),
                    BackendChoice::Core(Backend::Stochastic),
                    BackendChoice::Markovian,
                ];
                let kinds = [KernelKind::OrnsteinUhlenbeck, KernelKind::Gaussian, KernelKind::SoftPowerLaw, KernelKind::Delta];
                let mut c = RunConfig::defaults(commands[k.0]);
                c.backend = backends[k.1];
                c.kernel = kinds[k.2];
                c.p = k.3;
                c.params = SystemParams { a: u.0, hbar: u.1, d: u.2 };
                c.tau_c = u.3;
                c.dt = g.0;
                c.t_final = g.1;
                c.seed = g.2;
                c.n_traj = g.3;
                c.n_max = g.4;
                c.tau_c_list = m.0;
                c.guard = m.1;
                c.assume_pure = m.2;
                c.rho_ll = m.3;
                c.coupling = if paths.1 { Coupling::Exchange } else { Coupling::Dephasing };
                c.style = if paths.2 { PlotStyle::LogLog } else { PlotStyle::Linear };
                c.input = paths.0.iter().map(PathBuf::from).collect();
                c.output = paths.0.map(|p| PathBuf::from(format!("out_{p}")));
                c
            })
    }

    proptest! {
        #[test]
        fn canonical_text_round_trips(cfg in arb_config()) {
            let text = cfg.to_text();
            let back = parse_config_text(&text, Command::Simulate).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
