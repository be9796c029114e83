//! The time-nonlocal decoherence functional
//! `Phi(t) = (a^2/hbar^2) int_0^t ds int_0^t ds' alpha(s - s')`.
//!
//! For a stationary kernel the double integral reduces to
//! `Phi(t) = (2 a^2/hbar^2) int_0^t (t - tau) alpha(tau) dtau`, which is what
//! runs here; the double integral itself only appears in tests.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CoherenceCurve, CurveMeta, Grid, KernelKind, KernelSpec, SystemParams};
use crate::quad::{self, PHI_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
pub struct PhiMeta {
    pub params: SystemParams,
    pub kernel: KernelSpec,
    pub method: String,
}

/// `Phi(t_i)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCurve {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub meta: PhiMeta,
}

impl PhiCurve {
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

/// Quadratic short-time law `Phi(t) ~ gamma t^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortTimeLaw {
    pub gamma: f64,
    /// Fit horizon, `0.01 tau_c`.
    pub validity_horizon: f64,
}

/// Breakpoints `0, tc, 4tc, 16tc, ...` clipped to `t`.
fn breakpoints(tc: f64, t: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut x = tc;
    while x < t {
        pts.push(x);
        x *= 4.0;
    }
    pts.push(t);
    pts
}

/// `Phi(t)` for a single time by adaptive quadrature.
pub fn phi_at(spec: &KernelSpec, params: &SystemParams, t: f64) -> Result<f64> {
    if spec.kind() == KernelKind::Delta {
        return Err(Error::NoPointwiseValue);
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(format!("Phi needs t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let tc = spec.require_tau()?;
    let r = quad::integrate_with_breakpoints(
        |tau| (t - tau) * spec.shape(params, tc, tau),
        &breakpoints(tc, t),
        PHI_TOLERANCE,
    )?;
    Ok(2.0 * params.coupling() * r.value)
}

/// `Phi` on `grid`; grid points are independent and evaluated in parallel.
pub fn phi_quadrature(spec: &KernelSpec, params: &SystemParams, grid: Grid) -> Result<PhiCurve> {
    if spec.kind() == KernelKind::Delta {
        return Err(Error::UnsupportedKernel(
            "delta (no quadrature path; use markovian_limit_curve)".into(),
        ));
    }
    if grid.n < 2 {
        return Err(Error::invalid("phi_quadrature needs at least two grid points"));
    }
    if grid.t0 < 0.0 {
        return Err(Error::invalid("phi_quadrature grid must start at t0 >= 0"));
    }
    let values = (0..grid.n)
        .into_par_iter()
        .map(|i| phi_at(spec, params, grid.time(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhiCurve {
        t0: grid.t0,
        dt: grid.dt,
        values,
        meta: PhiMeta { params: *params, kernel: *spec, method: "quadrature".into() },
    })
}

/// `x - 1 + exp(-x)` without cancellation at small `x`.
fn ou_shape(x: f64) -> f64 {
    if x < 0.1 {
        // sum_{k>=2} (-x)^k / k!
        let mut term = x * x / 2.0;
        let mut sum: f64 = 0.0;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            k += 1.0;
            term *= -x / k;
        }
        sum
    } else {
        x + (-x).exp_m1()
    }
}

/// Closed form for the symmetric OU kernel,
/// `(2 a^2 D / hbar^2) [t - tau_c (1 - exp(-t/tau_c))]`.
pub fn phi_ou_closed_form(params: &SystemParams, tau_c: f64, t: f64) -> Result<f64> {
    if !(tau_c.is_finite() && tau_c > 0.0) {
        return Err(Error::invalid(format!("tau_c must be > 0, got {tau_c}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(format!("t must be >= 0, got {t}")));
    }
    Ok(2.0 * params.coupling() * params.d * tau_c * ou_shape(t / tau_c))
}

pub fn short_time_gamma(spec: &KernelSpec, params: &SystemParams) -> Result<ShortTimeLaw> {
    if spec.kind() == KernelKind::Delta {
        return Err(Error::Divergent("gamma diverges for the delta kernel".into()));
    }
    let alpha0 = spec.alpha_zero(params)?;
    Ok(ShortTimeLaw { gamma: params.coupling() * alpha0, validity_horizon: 0.01 * spec.require_tau()? })
}

/// `C(t_i) = c0 exp(-Phi(t_i))`. `c0` is expected to satisfy `|c0| <= 1`.
pub fn coherence_from_phi(phi: &PhiCurve, c0: Complex64) -> CoherenceCurve {
    let samples = phi.values.iter().map(|p| c0 * (-p).exp()).collect();
    let meta = CurveMeta::new("functional", phi.meta.params, Some(phi.meta.kernel))
        .with("method", &phi.meta.method);
    CoherenceCurve { t0: phi.t0, dt: phi.dt, samples, stderr: None, meta }
}

/// Crossing `Phi = 1` of the quadratic law, `gamma^{-1/2}`.
pub fn tau_dec_from_quadratic(law: &ShortTimeLaw) -> f64 {
    law.gamma.powf(-0.5)
}
