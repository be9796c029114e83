//! Pseudomode simulation of the Ornstein–Uhlenbeck bath: the two-level pointer
//! coupled to one damped harmonic mode, integrated as a Lindblad equation on
//! the truncated space `C^2 (x) C^(n_max+1)`.
//!
//! Two couplings are available:
//!
//! * [`Coupling::Dephasing`]: `H = x (x) hbar g (b + b^dag)` with pointer
//!   eigenvalues `+-a/sqrt(2)`, `g^2 = D/(hbar^2 tau_c)`. The mode force has
//!   correlation `(D/tau_c) exp(-|t|/tau_c)`, so the coherence is exactly
//!   `exp(-Phi)` of the OU functional.
//! * [`Coupling::Exchange`]: `H = hbar g (s+ b + s- b^dag)` with
//!   `g^2 = 2 a^2 D/(hbar^2 tau_c)`. Its coherence obeys the OU closure
//!   equation `C'' + C'/tau_c + (2 a^2 D/(hbar^2 tau_c)) C = 0`.
//!
//! Both use `kappa = 2/tau_c` and start from `(|L> + |R>)/sqrt(2) (x) |0>`,
//! so `C(0) = 1/2`.
//!
//! Basis ordering: index `s * (n_max + 1) + n` for system state `s` (0 = L or
//! upper level, 1 = R or lower level) and mode occupation `n`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CoherenceCurve, CurveMeta, Grid, KernelSpec, SystemParams};
use crate::ode::Dopri5;

/// Relative local error of the master-equation integrator.
pub const EVOLVE_RTOL: f64 = 1e-9;
/// Absolute local error per matrix entry.
pub const EVOLVE_ATOL: f64 = 1e-12;
/// Truncation is accepted when doubling `n_max` moves `C` by at most this.
pub const TRUNCATION_TOLERANCE: f64 = 1e-4;
/// Largest truncation tried by [`converge_truncation`].
pub const MAX_TRUNCATION: usize = 64;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-9;
const POSITIVITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Dephasing,
    Exchange,
}

impl Coupling {
    pub fn tag(self) -> &'static str {
        match self {
            Coupling::Dephasing => "dephasing",
            Coupling::Exchange => "exchange",
        }
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dephasing" => Ok(Coupling::Dephasing),
            "exchange" => Ok(Coupling::Exchange),
            other => Err(Error::invalid(format!("unknown pseudomode coupling '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudomodeConfig {
    /// Highest mode occupation kept.
    pub n_max: usize,
    pub coupling: Coupling,
    /// Coupling rate: `sqrt(D/tau_c)/hbar` for dephasing (multiplies the
    /// pointer eigenvalue), `sqrt(2 D/tau_c) a/hbar` for exchange.
    pub g: f64,
    pub kappa: f64,
    pub dt: f64,
    pub t_final: f64,
}

impl PseudomodeConfig {
    /// Constants that reproduce the OU kernel with correlation time `tau_c`.
    pub fn for_ou(
        params: &SystemParams,
        tau_c: f64,
        coupling: Coupling,
        n_max: usize,
        dt: f64,
        t_final: f64,
    ) -> Result<Self> {
        if !(tau_c.is_finite() && tau_c > 0.0) {
            return Err(Error::invalid(format!("tau_c must be > 0, got {tau_c}")));
        }
        let g = match coupling {
            Coupling::Dephasing => (params.d / tau_c).sqrt() / params.hbar,
            Coupling::Exchange => (2.0 * params.d / tau_c).sqrt() * params.a / params.hbar,
        };
        let cfg = Self { n_max, coupling, g, kappa: 2.0 / tau_c, dt, t_final };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Correlation time implied by `kappa`.
    pub fn tau_c(&self) -> f64 {
        2.0 / self.kappa
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 2 {
            return Err(Error::invalid(format!("n_max must be >= 2, got {}", self.n_max)));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::invalid(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::invalid(format!("g must be finite and >= 0, got {}", self.g)));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::invalid(format!("t_final must be > 0, got {}", self.t_final)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.dt > self.tau_c() {
            return Err(Error::Resolution(format!("dt = {} exceeds tau_c = {}", self.dt, self.tau_c())));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::from_final(self.dt, self.t_final)
    }

    fn with_n_max(&self, n_max: usize) -> Self {
        Self { n_max, ..*self }
    }
}

/// Joint pointer–mode state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DMatrix<Complex64>);

impl DensityMatrix {
    /// `(|L> + |R>)(<L| + <R|)/2 (x) |0><0|`.
    pub fn initial(n_max: usize) -> Self {
        let levels = n_max + 1;
        let dim = 2 * levels;
        let mut m = DMatrix::zeros(dim, dim);
        for &r in &[0, levels] {
            for &c in &[0, levels] {
                m[(r, c)] = Complex64::new(0.5, 0.0);
            }
        }
        Self(m)
    }

    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() || !m.nrows().is_multiple_of(2) || m.nrows() < 6 {
            return Err(Error::invalid(format!("density matrix must be square of even size >= 6, got {}x{}", m.nrows(), m.ncols())));
        }
        Ok(Self(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_max(&self) -> usize {
        self.dim() / 2 - 1
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    /// Reduced pointer state `Tr_mode rho` as `[[LL, LR], [RL, RR]]`.
    pub fn reduced(&self) -> [[Complex64; 2]; 2] {
        let levels = self.n_max() + 1;
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (s, row) in out.iter_mut().enumerate() {
            for (sp, cell) in row.iter_mut().enumerate() {
                *cell = (0..levels).map(|n| self.0[(s * levels + n, sp * levels + n)]).sum();
            }
        }
        out
    }

    /// `<L| Tr_mode rho |R>`.
    pub fn coherence(&self) -> Complex64 {
        self.reduced()[0][1]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }

    /// Hermiticity, unit trace and (optionally) positivity.
    pub fn check_invariants(&self, positivity: bool) -> Result<()> {
        let m = &self.0;
        let dim = m.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..dim {
            for j in i..dim {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        if worst > HERMITIAN_TOL {
            return Err(Error::Data(format!("density matrix lost Hermiticity by {worst:e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > TRACE_TOL {
            return Err(Error::Data(format!("density matrix trace drifted to {tr}")));
        }
        if positivity {
            let min = self.min_eigenvalue();
            if min < -POSITIVITY_TOL {
                return Err(Error::Truncation {
                    n_max: self.n_max(),
                    reason: format!("negative eigenvalue {min:e}"),
                });
            }
        }
        Ok(())
    }
}

/// Nonzero entries `(row, col, value)` of a square matrix.
#[derive(Debug, Clone)]
struct Sparse(Vec<(usize, usize, Complex64)>);

impl Sparse {
    fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)] != Complex64::new(0.0, 0.0) {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self(entries)
    }
}

/// `rho' = -i (K rho - rho K^dag) + kappa J rho J^dag` with the non-Hermitian
/// `K = H/hbar - i kappa/2 J^dag J`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    k: Sparse,
    jump: Sparse,
    kappa: f64,
}

fn annihilation(levels: usize) -> DMatrix<Complex64> {
    let mut b = DMatrix::zeros(levels, levels);
    for n in 1..levels {
        b[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    b
}

impl Liouvillian {
    fn from_parts(h_over_hbar: DMatrix<Complex64>, jump: DMatrix<Complex64>, kappa: f64) -> Self {
        let k = &h_over_hbar - (jump.adjoint() * &jump) * Complex64::new(0.0, 0.5 * kappa);
        Self { dim: k.nrows(), k: Sparse::from_dense(&k), jump: Sparse::from_dense(&jump), kappa }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = self.dim;
        let r = rho.as_slice();
        let mut out = DMatrix::<Complex64>::zeros(d, d);
        let o = out.as_mut_slice();
        let minus_i = Complex64::new(0.0, -1.0);
        // Column-major: element (row, col) lives at col * d + row.
        for &(i, k, v) in &self.k.0 {
            let w = minus_i * v;
            for c in 0..d {
                o[c * d + i] += w * r[c * d + k];
            }
        }
        for &(j, k, v) in &self.k.0 {
            let w = -minus_i * v.conj();
            let (src, dst) = (k * d, j * d);
            for row in 0..d {
                o[dst + row] += w * r[src + row];
            }
        }
        let mut jr = vec![Complex64::new(0.0, 0.0); d * d];
        for &(i, k, v) in &self.jump.0 {
            for c in 0..d {
                jr[c * d + i] += v * r[c * d + k];
            }
        }
        for &(j, k, v) in &self.jump.0 {
            let w = v.conj() * self.kappa;
            let (src, dst) = (k * d, j * d);
            for row in 0..d {
                o[dst + row] += w * jr[src + row];
            }
        }
        out
    }
}

pub fn build_generator(params: &SystemParams, config: &PseudomodeConfig) -> Result<Liouvillian> {
    config.validate()?;
    let levels = config.n_max + 1;
    let b = annihilation(levels);
    let id2 = DMatrix::<Complex64>::identity(2, 2);
    let jump = id2.kronecker(&b);
    let h = match config.coupling {
        Coupling::Dephasing => {
            let x = params.a / std::f64::consts::SQRT_2;
            let pointer = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                Complex64::new(x, 0.0),
                Complex64::new(-x, 0.0),
            ]));
            let quad = &b + b.adjoint();
            pointer.kronecker(&quad) * Complex64::new(config.g, 0.0)
        }
        Coupling::Exchange => {
            // s+ = |0><1| raises the lower level (index 1) to the upper (index 0).
            let mut raise = DMatrix::<Complex64>::zeros(2, 2);
            raise[(0, 1)] = Complex64::new(1.0, 0.0);
            let term = raise.kronecker(&b);
            (&term + term.adjoint()) * Complex64::new(config.g, 0.0)
        }
    };
    Ok(Liouvillian::from_parts(h, jump, config.kappa))
}

fn positivity_stride(dim: usize, n: usize) -> usize {
    // Eigenvalue checks are cubic in the dimension; large spaces are checked
    // on about a hundred snapshots plus the last one.
    if dim <= 40 {
        1
    } else {
        (n / 100).max(1)
    }
}

/// Integrates from `initial` and hands each grid snapshot to `observe` after
/// checking the state invariants.
pub fn evolve_with<O>(generator: &Liouvillian, initial: &DensityMatrix, grid: Grid, mut observe: O) -> Result<DensityMatrix>
where
    O: FnMut(usize, f64, &DensityMatrix) -> Result<()>,
{
    if initial.dim() != generator.dim() {
        return Err(Error::invalid(format!(
            "state dimension {} does not match generator dimension {}",
            initial.dim(),
            generator.dim()
        )));
    }
    let times: Vec<f64> = grid.times().collect();
    let stride = positivity_stride(initial.dim(), times.len());
    let last = times.len() - 1;
    let solver = Dopri5::new(EVOLVE_RTOL, EVOLVE_ATOL);
    let end = solver.integrate(
        |_, rho: &DMatrix<Complex64>| generator.apply(rho),
        grid.t0,
        initial.0.clone(),
        &times,
        |i, t, rho| {
            let state = DensityMatrix(rho.clone());
            state.check_invariants(i % stride == 0 || i == last)?;
            observe(i, t, &state)
        },
    )?;
    Ok(DensityMatrix(end))
}

/// All snapshots on `grid`; memory grows as `grid.n * dim^2`.
pub fn evolve(generator: &Liouvillian, initial: &DensityMatrix, grid: Grid) -> Result<Vec<DensityMatrix>> {
    let mut out = Vec::with_capacity(grid.n);
    evolve_with(generator, initial, grid, |_, _, s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

pub fn extract_coherence(snapshots: &[DensityMatrix], grid: Grid, meta: CurveMeta) -> Result<CoherenceCurve> {
    if snapshots.len() != grid.n {
        return Err(Error::invalid(format!("{} snapshots for a grid of {}", snapshots.len(), grid.n)));
    }
    let samples = snapshots.iter().map(DensityMatrix::coherence).collect();
    CoherenceCurve::new(grid.t0, grid.dt, samples, meta.with("c0", 0.5))
}

fn curve_meta(params: &SystemParams, config: &PseudomodeConfig) -> Result<CurveMeta> {
    Ok(CurveMeta::new("pseudomode", *params, Some(KernelSpec::ou(config.tau_c())?))
        .with("coupling", config.coupling)
        .with("n_max", config.n_max)
        .with("g", config.g)
        .with("kappa", config.kappa))
}

/// Evolves from the standard initial state and returns `C(t)` without storing
/// the snapshots.
pub fn simulate_coherence(params: &SystemParams, config: &PseudomodeConfig) -> Result<CoherenceCurve> {
    let generator = build_generator(params, config)?;
    let grid = config.grid()?;
    let mut samples = Vec::with_capacity(grid.n);
    evolve_with(&generator, &DensityMatrix::initial(config.n_max), grid, |_, _, s| {
        samples.push(s.coherence());
        Ok(())
    })?;
    CoherenceCurve::new(grid.t0, grid.dt, samples, curve_meta(params, config)?.with("c0", 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationCertificate {
    pub converged: bool,
    pub n_used: usize,
    pub sup_delta: f64,
}

impl fmt::Display for TruncationCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "converged={} n_used={} sup_delta={:e} tolerance={:e}",
            self.converged, self.n_used, self.sup_delta, TRUNCATION_TOLERANCE
        )
    }
}

/// Compares runs at `n_max` and `2 n_max`. A failed comparison at
/// `n_max >= MAX_TRUNCATION` is an error.
pub fn truncation_converged(params: &SystemParams, config: &PseudomodeConfig) -> Result<TruncationCertificate> {
    config.validate()?;
    let coarse = simulate_coherence(params, config)?;
    let fine = simulate_coherence(params, &config.with_n_max(2 * config.n_max))?;
    let sup_delta = coarse
        .samples
        .iter()
        .zip(&fine.samples)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let converged = sup_delta <= TRUNCATION_TOLERANCE;
    if !converged && config.n_max >= MAX_TRUNCATION {
        return Err(Error::Truncation {
            n_max: config.n_max,
            reason: format!("doubling still changes C by {sup_delta:e}"),
        });
    }
    Ok(TruncationCertificate { converged, n_used: config.n_max, sup_delta })
}

/// Doubles `n_max` from `config.n_max` until [`truncation_converged`] holds and
/// returns the curve at the accepted truncation with its certificate.
pub fn converge_truncation(
    params: &SystemParams,
    config: &PseudomodeConfig,
) -> Result<(CoherenceCurve, TruncationCertificate)> {
    let mut cfg = *config;
    loop {
        let cert = truncation_converged(params, &cfg)?;
        if cert.converged {
            let mut curve = simulate_coherence(params, &cfg)?;
            curve.meta.settings.insert("truncation".into(), cert.to_string());
            return Ok((curve, cert));
        }
        cfg = cfg.with_n_max((2 * cfg.n_max).min(MAX_TRUNCATION));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::ou_ode_analytic;
    use crate::functional::phi_ou_closed_form;

    fn unit() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn initial_state_properties() {
        let rho = DensityMatrix::initial(4);
        assert_eq!(rho.dim(), 10);
        assert_eq!(rho.coherence(), Complex64::new(0.5, 0.0));
        assert!((rho.purity() - 1.0).abs() < 1e-15);
        rho.check_invariants(true).unwrap();
    }

    #[test]
    fn snapshot_zero_is_initial_state() {
        let cfg = PseudomodeConfig::for_ou(&unit(), 1.0, Coupling::Dephasing, 4, 0.01, 0.05).unwrap();
        let gen = build_generator(&unit(), &cfg).unwrap();
        let snaps = evolve(&gen, &DensityMatrix::initial(4), cfg.grid().unwrap()).unwrap();
        assert_eq!(snaps[0], DensityMatrix::initial(4));
        assert!((snaps[0].purity() - 1.0).abs() < 1e-15);
        let c = extract_coherence(&snaps, cfg.grid().unwrap(), CurveMeta::default()).unwrap();
        assert_eq!(c.samples[0], Complex64::new(0.5, 0.0));
    }

    #[test]
    fn config_errors() {
        assert!(PseudomodeConfig::for_ou(&unit(), 1.0, Coupling::Dephasing, 1, 0.01, 1.0).is_err());
        assert!(matches!(
            PseudomodeConfig::for_ou(&unit(), 1.0, Coupling::Dephasing, 4, 2.0, 10.0),
            Err(Error::Resolution(_))
        ));
        let mut cfg = PseudomodeConfig::for_ou(&unit(), 1.0, Coupling::Dephasing, 4, 0.01, 1.0).unwrap();
        cfg.n_max = 1;
        assert!(build_generator(&unit(), &cfg).is_err());
    }

    #[test]
    fn uncoupled_system_keeps_coherence() {
        for coupling in [Coupling::Dephasing, Coupling::Exchange] {
            let mut cfg = PseudomodeConfig::for_ou(&unit(), 1.0, coupling, 2, 0.05, 3.0).unwrap();
            cfg.g = 0.0;
            let c = simulate_coherence(&unit(), &cfg).unwrap();
            assert!(c.samples.iter().all(|s| (s - 0.5).norm() < 1e-15));
            let cert = truncation_converged(&unit(), &cfg).unwrap();
            assert!(cert.converged);
            assert_eq!(cert.n_used, 2);
            assert_eq!(cert.sup_delta, 0.0);
        }
    }

    #[test]
    fn generator_is_trace_free_and_hermiticity_preserving() {
        let cfg = PseudomodeConfig::for_ou(&unit(), 0.7, Coupling::Dephasing, 5, 0.01, 1.0).unwrap();
        for coupling in [Coupling::Dephasing, Coupling::Exchange] {
            let gen = build_generator(&unit(), &PseudomodeConfig { coupling, ..cfg }).unwrap();
            let dim = gen.dim();
            // Deterministic pseudo-random Hermitian matrix.
            let mut state = 0x2545_f491_4f6c_dd1du64;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let mut m = DMatrix::<Complex64>::zeros(dim, dim);
            for i in 0..dim {
                m[(i, i)] = Complex64::new(next(), 0.0);
                for j in i + 1..dim {
                    let z = Complex64::new(next(), next());
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
            let out = gen.apply(&m);
            assert!(out.trace().norm() < 1e-12, "{}", out.trace());
            assert!((&out - out.adjoint()).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn mode_force_correlation_is_exponential() {
        // Quantum regression on the bare mode: <F(t)F(0)> = Tr[F e^{Lt}(F |0><0|)].
        let tau_c = 0.8;
        let p = unit();
        let cfg = PseudomodeConfig::for_ou(&p, tau_c, Coupling::Dephasing, 6, 0.01, 2.0).unwrap();
        let levels = cfg.n_max + 1;
        let b = annihilation(levels);
        let f = (&b + b.adjoint()) * Complex64::new(p.hbar * cfg.g, 0.0);
        let gen = Liouvillian::from_parts(DMatrix::zeros(levels, levels), b.clone(), cfg.kappa);
        let mut vac = DMatrix::<Complex64>::zeros(levels, levels);
        vac[(0, 0)] = Complex64::new(1.0, 0.0);
        let x0 = &f * &vac;
        let grid = cfg.grid().unwrap();
        let times: Vec<f64> = grid.times().collect();
        let mut worst: f64 = 0.0;
        Dopri5::new(1e-11, 1e-13)
            .integrate(|_, x: &DMatrix<Complex64>| gen.apply(x), 0.0, x0, &times, |_, t, x| {
                let corr = (&f * x).trace();
                let exact = p.d / tau_c * (-t / tau_c).exp();
                worst = worst.max((corr - exact).norm());
                Ok(())
            })
            .unwrap();
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn dephasing_reproduces_functional_exactly() {
        let p = unit();
        for tau_c in [0.5, 1.0, 2.0] {
            let cfg = PseudomodeConfig::for_ou(&p, tau_c, Coupling::Dephasing, 12, 0.01, 3.0).unwrap();
            let c = simulate_coherence(&p, &cfg).unwrap();
            for (i, t) in c.times().enumerate().step_by(10) {
                let exact = 0.5 * (-phi_ou_closed_form(&p, tau_c, t).unwrap()).exp();
                assert!((c.samples[i] - exact).norm() < 1e-6, "tau_c={tau_c} t={t}: {} vs {exact}", c.samples[i]);
            }
        }
    }

    #[test]
    fn exchange_reproduces_closure_equation() {
        let p = unit();
        for tau_c in [0.5, 1.0, 2.0] {
            let cfg = PseudomodeConfig::for_ou(&p, tau_c, Coupling::Exchange, 4, 0.01, 4.0).unwrap();
            let c = simulate_coherence(&p, &cfg).unwrap();
            for (i, t) in c.times().enumerate().step_by(10) {
                let exact = 0.5 * ou_ode_analytic(&p, tau_c, t).unwrap();
                assert!((c.samples[i] - exact).norm() < 1e-7, "tau_c={tau_c} t={t}");
            }
        }
    }

    #[test]
    fn populations_are_constant_under_dephasing() {
        let p = unit();
        let cfg = PseudomodeConfig::for_ou(&p, 1.0, Coupling::Dephasing, 10, 0.02, 4.0).unwrap();
        let gen = build_generator(&p, &cfg).unwrap();
        let mut worst: f64 = 0.0;
        evolve_with(&gen, &DensityMatrix::initial(cfg.n_max), cfg.grid().unwrap(), |_, _, s| {
            let r = s.reduced();
            worst = worst.max((r[0][0].re - 0.5).abs()).max((r[1][1].re - 0.5).abs());
            Ok(())
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn quadratic_onset() {
        let p = unit();
        let tau_c = 1.0;
        for coupling in [Coupling::Dephasing, Coupling::Exchange] {
            let cfg = PseudomodeConfig::for_ou(&p, tau_c, coupling, 6, 1e-3 * tau_c, 1e-2 * tau_c).unwrap();
            let c = simulate_coherence(&p, &cfg).unwrap();
            let m = c.normalized_magnitudes().unwrap();
            let (t1, t2) = (c.time(1), c.time(10));
            let slope = ((1.0 - m[10]).ln() - (1.0 - m[1]).ln()) / (t2.ln() - t1.ln());
            assert!((slope - 2.0).abs() <= 0.05, "{coupling}: {slope}");
        }
    }

    #[test]
    fn markovian_regime_approaches_exponential() {
        // OU weight 2D: the memoryless limit decays as exp(-2 a^2 D t/hbar^2).
        let p = unit();
        let tm = p.tau_markov();
        for coupling in [Coupling::Dephasing, Coupling::Exchange] {
            let cfg = PseudomodeConfig::for_ou(&p, 1e-2 * tm, coupling, 4, 2e-3, 3.0 * tm).unwrap();
            let c = simulate_coherence(&p, &cfg).unwrap();
            let m = c.normalized_magnitudes().unwrap();
            let worst = c
                .times()
                .zip(&m)
                .map(|(t, v)| (v - (-2.0 * t / tm).exp()).abs())
                .fold(0.0, f64::max);
            assert!(worst < 0.02, "{coupling}: {worst}");
        }
    }

    #[test]
    fn truncation_certificate_at_default_settings() {
        let p = unit();
        let cfg = PseudomodeConfig::for_ou(&p, 1.0, Coupling::Dephasing, 8, 0.01, 3.0).unwrap();
        let cert = truncation_converged(&p, &cfg).unwrap();
        assert!(cert.converged, "{cert}");
        assert!(cert.sup_delta < 1e-4);
    }

    #[test]
    fn converge_truncation_doubles_until_accepted() {
        let p = unit();
        let cfg = PseudomodeConfig::for_ou(&p, 4.0, Coupling::Dephasing, 2, 0.02, 3.0).unwrap();
        let (curve, cert) = converge_truncation(&p, &cfg).unwrap();
        assert!(cert.converged);
        assert!(cert.n_used > 2);
        assert!(curve.meta.settings["truncation"].contains("converged=true"));
    }

    #[test]
    fn coupling_text_round_trip() {
        for c in [Coupling::Dephasing, Coupling::Exchange] {
            assert_eq!(c.to_string().parse::<Coupling>().unwrap(), c);
        }
        assert!("jc".parse::<Coupling>().is_err());
    }
}
