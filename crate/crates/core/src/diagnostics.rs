//! Decoherence time, purity and entropy of the reduced pointer state, and
//! inference of `alpha(0)` and `tau_c` from the short-time curvature of a
//! measured coherence curve.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CoherenceCurve, SystemParams};

/// Largest `Phi = -ln(|C|/|C(0)|)` included in the curvature fit.
pub const FIT_PHI_MAX: f64 = 0.01;
/// Minimum number of samples (excluding `t = 0`) inside the fit window.
pub const FIT_MIN_SAMPLES: usize = 5;
/// Residual ratio separating the regimes.
pub const REGIME_RATIO: f64 = 10.0;

/// Reduced 2x2 pointer state `[[rho_ll, c], [c*, rho_rr]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingState {
    pub rho_ll: f64,
    pub rho_rr: f64,
    pub c: Complex64,
}

impl DephasingState {
    pub fn new(rho_ll: f64, rho_rr: f64, c: Complex64) -> Result<Self> {
        if !(rho_ll >= 0.0 && rho_rr >= 0.0) || ((rho_ll + rho_rr) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "populations must be non-negative and sum to 1, got {rho_ll} + {rho_rr}"
            )));
        }
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::invalid("coherence must be finite"));
        }
        if c.norm_sqr() > rho_ll * rho_rr * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::Data(format!(
                "|c|^2 = {} exceeds rho_ll * rho_rr = {}",
                c.norm_sqr(),
                rho_ll * rho_rr
            )));
        }
        Ok(Self { rho_ll, rho_rr, c })
    }

    /// Eigenvalues `(lambda_minus, lambda_plus)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let diff = self.rho_ll - self.rho_rr;
        let r = (diff * diff + 4.0 * self.c.norm_sqr()).sqrt().min(1.0);
        // 1 - r^2 = 4 (rho_ll rho_rr - |c|^2) avoids cancellation near purity.
        let minus = (2.0 * (self.rho_ll * self.rho_rr - self.c.norm_sqr())).max(0.0) / (1.0 + r);
        (minus, 1.0 - minus)
    }
}

pub fn purity(state: &DephasingState) -> f64 {
    state.rho_ll * state.rho_ll + state.rho_rr * state.rho_rr + 2.0 * state.c.norm_sqr()
}

/// Von Neumann entropy in nats.
pub fn entropy(state: &DephasingState) -> f64 {
    let (lm, lp) = state.eigenvalues();
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    h(lm) + h(lp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticPoint {
    pub t: f64,
    pub purity: f64,
    pub entropy: f64,
}

/// Purity and entropy at every sample, with constant populations.
pub fn diagnostics_along_curve(curve: &CoherenceCurve, rho_ll: f64, rho_rr: f64) -> Result<Vec<DiagnosticPoint>> {
    curve
        .samples
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let state = DephasingState::new(rho_ll, rho_rr, c).map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("sample {i} (t = {}): {msg}", curve.time(i))),
                other => other,
            })?;
            Ok(DiagnosticPoint { t: curve.time(i), purity: purity(&state), entropy: entropy(&state) })
        })
        .collect()
}

/// Rescales a curve so that `|C(0)| = sqrt(rho_ll rho_rr)`, the coherence of
/// the pure state with those populations.
pub fn scale_to_pure_state(curve: &CoherenceCurve, rho_ll: f64, rho_rr: f64) -> Result<CoherenceCurve> {
    let c0 = curve.samples[0].norm();
    if c0 <= 0.0 {
        return Err(Error::Data("|C(t0)| is zero".into()));
    }
    let k = (rho_ll * rho_rr).sqrt() / c0;
    let mut out = curve.clone();
    for s in &mut out.samples {
        *s *= k;
    }
    Ok(out)
}

/// First time where `|C| <= e^{-1} |C(0)|`, linearly interpolated; `None` if
/// the curve never gets there.
pub fn extract_tau_dec(curve: &CoherenceCurve) -> Result<Option<f64>> {
    if curve.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 samples, got {}", curve.len())));
    }
    let m = curve.normalized_magnitudes()?;
    let level = (-1.0f64).exp();
    let Some(i) = m.iter().position(|&v| v <= level) else {
        return Ok(None);
    };
    if i == 0 {
        return Ok(Some(curve.t0));
    }
    let (a, b) = (m[i - 1], m[i]);
    let w = if a == b { 1.0 } else { (a - level) / (a - b) };
    Ok(Some(curve.time(i - 1) + w * curve.dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Markovian,
    Crossover,
    NonMarkovian,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Regime::Markovian => "markovian",
            Regime::Crossover => "crossover",
            Regime::NonMarkovian => "non-markovian",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResidual {
    pub t: f64,
    pub phi: f64,
    pub quadratic: f64,
    pub linear: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub alpha00_hat: f64,
    /// `D / alpha00_hat`, absent unless `alpha00_hat > 0`.
    pub tau_c_hat: Option<f64>,
    /// Coefficient of `Phi = gamma t^2`.
    pub gamma_hat: f64,
    /// Coefficient of the competing `Phi = rate t`.
    pub linear_rate: f64,
    pub regime: Regime,
    /// `false` unless the quadratic law clearly wins.
    pub reliable: bool,
    pub fit_window: (f64, f64),
    pub rss_quadratic: f64,
    pub rss_linear: f64,
    pub residuals: Vec<FitResidual>,
}

/// Fits `Phi(t) = -ln(|C(t)|/|C(0)|)` by `gamma t^2` and by `rate t` through
/// the origin on the earliest samples with `Phi <= FIT_PHI_MAX`, and reads
/// `alpha(0) = gamma hbar^2 / a^2` off the quadratic fit.
pub fn curvature_infer_alpha0(curve: &CoherenceCurve, params: &SystemParams) -> Result<InferenceResult> {
    if curve.t0 != 0.0 {
        return Err(Error::invalid("inference needs a curve starting at t = 0"));
    }
    let m = curve.normalized_magnitudes()?;
    let mut pts = Vec::new();
    for (i, &v) in m.iter().enumerate().skip(1) {
        let phi = -v.ln();
        if !(phi <= FIT_PHI_MAX) {
            break;
        }
        pts.push((curve.time(i), phi));
    }
    if pts.len() < FIT_MIN_SAMPLES {
        return Err(Error::Resolution(format!(
            "only {} samples with Phi <= {FIT_PHI_MAX} (need {FIT_MIN_SAMPLES}); the quadratic regime is not resolved at dt = {}",
            pts.len(),
            curve.dt
        )));
    }
    let (mut s22, mut s4, mut s11, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for &(t, phi) in &pts {
        s22 += t * t * phi;
        s4 += t.powi(4);
        s11 += t * phi;
        s2 += t * t;
    }
    let gamma_hat = s22 / s4;
    let linear_rate = s11 / s2;
    let residuals: Vec<FitResidual> = pts
        .iter()
        .map(|&(t, phi)| FitResidual { t, phi, quadratic: phi - gamma_hat * t * t, linear: phi - linear_rate * t })
        .collect();
    let rss_quadratic: f64 = residuals.iter().map(|r| r.quadratic * r.quadratic).sum();
    let rss_linear: f64 = residuals.iter().map(|r| r.linear * r.linear).sum();
    let regime = if rss_quadratic * REGIME_RATIO <= rss_linear {
        Regime::NonMarkovian
    } else if rss_linear * REGIME_RATIO <= rss_quadratic {
        Regime::Markovian
    } else {
        Regime::Crossover
    };
    let alpha00_hat = gamma_hat * params.hbar * params.hbar / (params.a * params.a);
    let tau_c_hat = (alpha00_hat > 0.0).then(|| params.d / alpha00_hat);
    Ok(InferenceResult {
        alpha00_hat,
        tau_c_hat,
        gamma_hat,
        linear_rate,
        regime,
        reliable: regime == Regime::NonMarkovian && alpha00_hat > 0.0,
        fit_window: (pts[0].0, pts[pts.len() - 1].0),
        rss_quadratic,
        rss_linear,
        residuals,
    })
}
