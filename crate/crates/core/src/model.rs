//! Physical parameters, the catalog of stationary bath kernels, and the
//! shared coherence-curve container.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Coupling and noise constants. All computation is dimensionless; the
/// default is `a = hbar = D = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Pointer-state separation.
    pub a: f64,
    pub hbar: f64,
    /// Integrated noise strength.
    pub d: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self { a: 1.0, hbar: 1.0, d: 1.0 }
    }
}

impl SystemParams {
    pub fn new(a: f64, hbar: f64, d: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("hbar", hbar), ("D", d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(Self { a, hbar, d })
    }

    /// `a^2 / hbar^2`, the prefactor of the decoherence functional.
    pub fn coupling(&self) -> f64 {
        (self.a / self.hbar).powi(2)
    }

    /// Markovian decoherence time `hbar^2 / (a^2 D)`.
    pub fn tau_markov(&self) -> f64 {
        self.hbar * self.hbar / (self.a * self.a * self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    OrnsteinUhlenbeck,
    Gaussian,
    SoftPowerLaw,
    Delta,
}

impl KernelKind {
    pub fn tag(self) -> &'static str {
        match self {
            KernelKind::OrnsteinUhlenbeck => "ou",
            KernelKind::Gaussian => "gauss",
            KernelKind::SoftPowerLaw => "plaw",
            KernelKind::Delta => "delta",
        }
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ou" => Ok(KernelKind::OrnsteinUhlenbeck),
            "gauss" => Ok(KernelKind::Gaussian),
            "plaw" => Ok(KernelKind::SoftPowerLaw),
            "delta" => Ok(KernelKind::Delta),
            other => Err(Error::invalid(format!("unknown kernel kind '{other}'"))),
        }
    }
}

/// A stationary bath correlation function `alpha(tau)`.
///
/// The closed forms are
///
/// * OU: `(D/tau_c) exp(-|tau|/tau_c)`
/// * Gaussian: `D/(sqrt(pi) tau_c) exp(-tau^2/tau_c^2)`
/// * soft power law: `(D/tau_c) / (1 + (|tau|/tau_c)^p)`
/// * delta: `2 D delta(tau)`, the memoryless limit.
///
/// Their two-sided weights `int alpha dtau` differ: `2D`, `D`,
/// `2D (pi/p)/sin(pi/p)` and `2D` respectively. Nothing is renormalised;
/// [`KernelSpec::total_weight`] reports the actual value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    tau_c: Option<f64>,
    p: Option<f64>,
}

impl KernelSpec {
    pub fn ou(tau_c: f64) -> Result<Self> {
        Self::with_tau(KernelKind::OrnsteinUhlenbeck, tau_c)
    }

    pub fn gaussian(tau_c: f64) -> Result<Self> {
        Self::with_tau(KernelKind::Gaussian, tau_c)
    }

    pub fn soft_power_law(tau_c: f64, p: f64) -> Result<Self> {
        check_tau(tau_c)?;
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::invalid(format!("power-law exponent must satisfy p > 1, got {p}")));
        }
        Ok(Self { kind: KernelKind::SoftPowerLaw, tau_c: Some(tau_c), p: Some(p) })
    }

    pub fn delta() -> Self {
        Self { kind: KernelKind::Delta, tau_c: None, p: None }
    }

    /// Builds a spec of `kind` with correlation time `tau_c` (ignored for
    /// delta) and exponent `p` (power law only).
    pub fn from_parts(kind: KernelKind, tau_c: Option<f64>, p: Option<f64>) -> Result<Self> {
        match kind {
            KernelKind::Delta => {
                if tau_c.is_some() || p.is_some() {
                    return Err(Error::invalid("delta kernel takes no tau_c or p"));
                }
                Ok(Self::delta())
            }
            KernelKind::SoftPowerLaw => {
                let tau_c = tau_c.ok_or_else(|| Error::invalid("plaw kernel requires tau_c"))?;
                let p = p.ok_or_else(|| Error::invalid("plaw kernel requires p"))?;
                Self::soft_power_law(tau_c, p)
            }
            _ => {
                if p.is_some() {
                    return Err(Error::invalid(format!("{} kernel takes no p", kind.tag())));
                }
                let tau_c =
                    tau_c.ok_or_else(|| Error::invalid(format!("{} kernel requires tau_c", kind.tag())))?;
                Self::with_tau(kind, tau_c)
            }
        }
    }

    fn with_tau(kind: KernelKind, tau_c: f64) -> Result<Self> {
        check_tau(tau_c)?;
        Ok(Self { kind, tau_c: Some(tau_c), p: None })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Correlation time; `None` for the delta kernel.
    pub fn tau_c(&self) -> Option<f64> {
        self.tau_c
    }

    pub fn exponent(&self) -> Option<f64> {
        self.p
    }

    pub(crate) fn require_tau(&self) -> Result<f64> {
        self.tau_c.ok_or(Error::NoPointwiseValue)
    }

    /// `alpha(|tau|)`.
    pub fn eval(&self, params: &SystemParams, tau: f64) -> Result<f64> {
        if !tau.is_finite() {
            return Err(Error::invalid(format!("tau must be finite, got {tau}")));
        }
        let tc = self.require_tau()?;
        Ok(self.shape(params, tc, tau.abs()))
    }

    /// Unchecked evaluation for `x = |tau| >= 0` used inside quadratures.
    pub(crate) fn shape(&self, params: &SystemParams, tc: f64, x: f64) -> f64 {
        let u = x / tc;
        match self.kind {
            KernelKind::OrnsteinUhlenbeck => params.d / tc * (-u).exp(),
            KernelKind::Gaussian => params.d / (PI.sqrt() * tc) * (-u * u).exp(),
            KernelKind::SoftPowerLaw => {
                let p = self.p.unwrap_or(2.0);
                params.d / tc / (1.0 + u.powf(p))
            }
            KernelKind::Delta => f64::INFINITY,
        }
    }

    /// `alpha(0)`; the delta kernel diverges.
    pub fn alpha_zero(&self, params: &SystemParams) -> Result<f64> {
        let tc = self.require_tau()?;
        Ok(match self.kind {
            KernelKind::Gaussian => params.d / (PI.sqrt() * tc),
            _ => params.d / tc,
        })
    }

    /// Two-sided weight `int_{-inf}^{inf} alpha(tau) dtau`.
    pub fn total_weight(&self, params: &SystemParams) -> Result<f64> {
        match self.kind {
            KernelKind::OrnsteinUhlenbeck | KernelKind::Delta => Ok(2.0 * params.d),
            KernelKind::Gaussian => Ok(params.d),
            KernelKind::SoftPowerLaw => {
                let p = self.p.unwrap_or(0.0);
                if p <= 1.0 {
                    return Err(Error::Divergent(format!("power-law weight diverges for p = {p}")));
                }
                // 2 D int_0^inf du / (1 + u^p)
                let x = std::f64::consts::PI / p;
                Ok(2.0 * params.d * x / x.sin())
            }
        }
    }
}

fn check_tau(tau_c: f64) -> Result<()> {
    if tau_c.is_finite() && tau_c > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau_c must be finite and > 0, got {tau_c}")))
    }
}

/// Plain-text form: `kind=ou tau_c=1`, `kind=plaw tau_c=1 p=2`, `kind=delta`.
impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kind={}", self.kind.tag())?;
        if let Some(tc) = self.tau_c {
            write!(f, " tau_c={tc}")?;
        }
        if let Some(p) = self.p {
            write!(f, " p={p}")?;
        }
        Ok(())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut kind = None;
        let mut tau_c = None;
        let mut p = None;
        for token in s.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value, got '{token}'")))?;
            let slot_taken = match key {
                "kind" => kind.replace(value.parse::<KernelKind>()?).is_some(),
                "tau_c" => tau_c.replace(parse_f64(key, value)?).is_some(),
                "p" => p.replace(parse_f64(key, value)?).is_some(),
                other => return Err(Error::invalid(format!("unknown kernel key '{other}'"))),
            };
            if slot_taken {
                return Err(Error::invalid(format!("duplicate kernel key '{key}'")));
            }
        }
        let kind = kind.ok_or_else(|| Error::invalid("kernel spec is missing 'kind'"))?;
        KernelSpec::from_parts(kind, tau_c, p)
    }
}

pub(crate) fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::invalid(format!("{key}: '{value}' is not a number")))
}

/// Uniform time grid `t_i = t0 + i dt`, `i < n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) || !t0.is_finite() {
            return Err(Error::invalid(format!("grid needs finite t0 and dt > 0, got t0={t0}, dt={dt}")));
        }
        if n == 0 {
            return Err(Error::invalid("grid must have at least one point"));
        }
        Ok(Self { t0, dt, n })
    }

    /// Grid from 0 to `t_final` (inclusive, rounded to the nearest step).
    pub fn from_final(dt: f64, t_final: f64) -> Result<Self> {
        if !(t_final.is_finite() && t_final >= 0.0) {
            return Err(Error::invalid(format!("t_final must be >= 0, got {t_final}")));
        }
        let steps = (t_final / dt).round();
        Self::new(0.0, dt, steps as usize + 1)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.time(i))
    }

    pub fn t_final(&self) -> f64 {
        self.time(self.n - 1)
    }
}

/// Provenance attached to every generated curve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveMeta {
    pub backend: String,
    pub params: Option<SystemParams>,
    pub kernel: Option<KernelSpec>,
    pub settings: BTreeMap<String, String>,
}

impl CurveMeta {
    pub fn new(backend: impl Into<String>, params: SystemParams, kernel: Option<KernelSpec>) -> Self {
        Self { backend: backend.into(), params: Some(params), kernel, settings: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.settings.insert(key.to_string(), value.to_string());
        self
    }
}

/// Uniformly sampled coherence `C(t_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceCurve {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<Complex64>,
    /// Per-sample standard error, present for Monte Carlo curves.
    pub stderr: Option<Vec<f64>>,
    pub meta: CurveMeta,
}

impl CoherenceCurve {
    pub fn new(t0: f64, dt: f64, samples: Vec<Complex64>, meta: CurveMeta) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) || !t0.is_finite() {
            return Err(Error::invalid(format!("curve needs finite t0 and dt > 0, got dt={dt}")));
        }
        if samples.is_empty() {
            return Err(Error::invalid("curve has no samples"));
        }
        if let Some(i) = samples.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Data(format!("non-finite coherence at sample {i}")));
        }
        Ok(Self { t0, dt, samples, stderr: None, meta })
    }

    pub fn with_stderr(mut self, stderr: Vec<f64>) -> Result<Self> {
        if stderr.len() != self.samples.len() {
            return Err(Error::invalid("stderr length differs from sample count"));
        }
        self.stderr = Some(stderr);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(|i| self.time(i))
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.norm()).collect()
    }

    /// `|C(t_i)| / |C(t_0)|`.
    pub fn normalized_magnitudes(&self) -> Result<Vec<f64>> {
        let c0 = self.samples[0].norm();
        if c0 <= 0.0 {
            return Err(Error::Data("|C(t0)| is zero".into()));
        }
        Ok(self.samples.iter().map(|c| c.norm() / c0).collect())
    }

    /// Linear interpolation of `|C|/|C(0)|` at time `t` inside the grid.
    pub fn normalized_magnitude_at(&self, t: f64) -> Result<f64> {
        let m = self.normalized_magnitudes()?;
        let x = (t - self.t0) / self.dt;
        if x < 0.0 || x > (m.len() - 1) as f64 + 1e-9 {
            return Err(Error::invalid(format!("t = {t} outside the curve window")));
        }
        let i = (x.floor() as usize).min(m.len().saturating_sub(2));
        if m.len() == 1 {
            return Ok(m[0]);
        }
        let w = x - i as f64;
        Ok(m[i] * (1.0 - w) + m[i + 1] * w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::quad::{self, Tolerance};

    fn unit() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn kernel_eval_examples() {
        let p = unit();
        assert_eq!(KernelSpec::ou(0.5).unwrap().eval(&p, 0.0).unwrap(), 2.0);
        let g = KernelSpec::gaussian(1.0).unwrap().eval(&p, 0.0).unwrap();
        assert!((g - 1.0 / PI.sqrt()).abs() < 1e-15);
        let ou1 = KernelSpec::ou(1.0).unwrap().eval(&p, 1.0).unwrap();
        assert!((ou1 - (-1.0f64).exp()).abs() < 1e-16);
        let pl = KernelSpec::soft_power_law(1.0, 2.0).unwrap().eval(&p, 1.0).unwrap();
        assert_eq!(pl, 0.5);
    }

    #[test]
    fn kernel_eval_errors() {
        let p = unit();
        assert!(matches!(KernelSpec::delta().eval(&p, 0.3), Err(Error::NoPointwiseValue)));
        assert!(KernelSpec::ou(1.0).unwrap().eval(&p, f64::NAN).is_err());
        assert!(KernelSpec::ou(1.0).unwrap().eval(&p, f64::INFINITY).is_err());
    }

    #[test]
    fn alpha_zero_examples() {
        assert_eq!(KernelSpec::ou(4.0).unwrap().alpha_zero(&unit()).unwrap(), 0.25);
        let p = SystemParams::new(1.0, 1.0, 3.0).unwrap();
        let g = KernelSpec::gaussian(2.0).unwrap().alpha_zero(&p).unwrap();
        assert!((g - 3.0 / (2.0 * PI.sqrt())).abs() < 1e-15);
        assert!((g - 0.846284).abs() < 1e-6);
        assert!(KernelSpec::delta().alpha_zero(&unit()).is_err());
    }

    #[test]
    fn total_weight_examples() {
        let p = unit();
        assert_eq!(KernelSpec::ou(1.0).unwrap().total_weight(&p).unwrap(), 2.0);
        assert_eq!(KernelSpec::delta().total_weight(&p).unwrap(), 2.0);
        // Gaussian: closed form D, checked against quadrature below.
        let gauss = KernelSpec::gaussian(1.0).unwrap();
        let q = quad::integrate(|x| gauss.eval(&p, x).unwrap(), -50.0, 50.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert!((q.value - gauss.total_weight(&p).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn power_law_weight_matches_closed_form() {
        // int_0^1 du/(1+u^p) plus the tail folded by u = 1/w^2, which leaves
        // the bounded integrand 2 w^(2p-3) / (1 + w^(2p)) on [0, 1].
        let p = unit();
        let tight = Tolerance::new(1e-14, 1e-13);
        for exponent in [1.5, 2.0, 3.0, 4.5] {
            let k = KernelSpec::soft_power_law(0.7, exponent).unwrap();
            let head = quad::integrate(|u: f64| 1.0 / (1.0 + u.powf(exponent)), 0.0, 1.0, tight).unwrap();
            let tail = quad::integrate(
                |w: f64| 2.0 * w.powf(2.0 * exponent - 3.0) / (1.0 + w.powf(2.0 * exponent)),
                0.0,
                1.0,
                tight,
            )
            .unwrap();
            let reference = 2.0 * p.d * (head.value + tail.value);
            let w = k.total_weight(&p).unwrap();
            assert!((w - reference).abs() / reference < 1e-11, "p={exponent}: {w} vs {reference}");
        }
    }

    #[test]
    fn power_law_requires_p_above_one() {
        assert!(KernelSpec::soft_power_law(1.0, 1.0).is_err());
        assert!(KernelSpec::soft_power_law(1.0, 0.5).is_err());
    }

    #[test]
    fn normalization_consistency_with_window_quadrature() {
        let p = unit();
        let tol = Tolerance::new(1e-13, 1e-12);
        for k in [KernelSpec::ou(1.3).unwrap(), KernelSpec::gaussian(0.4).unwrap()] {
            let tc = k.tau_c().unwrap();
            let pts: Vec<f64> = [-50.0, -10.0, -1.0, 0.0, 1.0, 10.0, 50.0].iter().map(|x| x * tc).collect();
            let q = quad::integrate_with_breakpoints(|x| k.eval(&p, x).unwrap(), &pts, tol).unwrap();
            let w = k.total_weight(&p).unwrap();
            assert!((q.value - w).abs() / w < 1e-8, "{k}: {} vs {w}", q.value);
        }
        // p = 3 over [-1e6 tc, 1e6 tc] plus the analytic tail 2 * D/(2 L^2) (L in units of tc).
        let k = KernelSpec::soft_power_law(1.0, 3.0).unwrap();
        let l = 1e6;
        let pts = [0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e5, l];
        let half = quad::integrate_with_breakpoints(|x| k.eval(&p, x).unwrap(), &pts, tol).unwrap().value;
        let tail = 1.0 / (2.0 * l * l);
        let w = k.total_weight(&p).unwrap();
        assert!((2.0 * (half + tail) - w).abs() / w < 1e-8);
    }

    #[test]
    fn kernel_text_examples() {
        assert_eq!("kind=ou tau_c=1.0".parse::<KernelSpec>().unwrap(), KernelSpec::ou(1.0).unwrap());
        assert_eq!("kind=gauss tau_c=1.0".parse::<KernelSpec>().unwrap(), KernelSpec::gaussian(1.0).unwrap());
        assert_eq!(
            "kind=plaw tau_c=1.0 p=2.0".parse::<KernelSpec>().unwrap(),
            KernelSpec::soft_power_law(1.0, 2.0).unwrap()
        );
        assert_eq!("kind=delta".parse::<KernelSpec>().unwrap(), KernelSpec::delta());
        for bad in ["", "kind=ou", "kind=plaw tau_c=1", "kind=delta tau_c=1", "kind=ou tau_c=1 tau_c=2", "kind=ou tau_c=x", "kind=xx", "tau_c=1", "kind=gauss tau_c=1 p=2", "kind=ou tau_c=-1", "kind=ou junk"] {
            assert!(bad.parse::<KernelSpec>().is_err(), "{bad:?} should fail");
        }
    }

    fn any_kernel() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            (1e-3f64..1e3).prop_map(|t| KernelSpec::ou(t).unwrap()),
            (1e-3f64..1e3).prop_map(|t| KernelSpec::gaussian(t).unwrap()),
            (1e-3f64..1e3, 1.01f64..8.0).prop_map(|(t, p)| KernelSpec::soft_power_law(t, p).unwrap()),
            Just(KernelSpec::delta()),
        ]
    }

    fn pointwise_kernel() -> impl Strategy<Value = KernelSpec> {
        any_kernel().prop_filter("pointwise", |k| k.kind() != KernelKind::Delta)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn kernel_is_symmetric(k in pointwise_kernel(), tau in -1e3f64..1e3) {
            let p = SystemParams::default();
            prop_assert_eq!(k.eval(&p, tau).unwrap(), k.eval(&p, -tau).unwrap());
        }
    }

    proptest! {
        #[test]
        fn kernel_text_round_trip(k in any_kernel()) {
            let back: KernelSpec = k.to_string().parse().unwrap();
            prop_assert_eq!(back, k);
        }

        #[test]
        fn kernel_decays_monotonically(k in pointwise_kernel(), x in 0.0f64..50.0, y in 0.0f64..50.0) {
            let p = SystemParams::default();
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            prop_assert!(k.eval(&p, hi).unwrap() <= k.eval(&p, lo).unwrap());
        }

        #[test]
        fn alpha_zero_times_tau_is_scale_free(k in pointwise_kernel(), s in 0.01f64..100.0) {
            let p = SystemParams::default();
            let tc = k.tau_c().unwrap();
            let scaled = KernelSpec::from_parts(k.kind(), Some(tc * s), k.exponent()).unwrap();
            let a = k.alpha_zero(&p).unwrap() * tc;
            let b = scaled.alpha_zero(&p).unwrap() * tc * s;
            prop_assert!((a - b).abs() <= 1e-14 * a.abs());
            prop_assert_eq!(k.eval(&p, 0.0).unwrap(), k.alpha_zero(&p).unwrap());
            if k.kind() == KernelKind::Gaussian {
                prop_assert!((a - 1.0 / PI.sqrt()).abs() < 1e-14);
            } else {
                prop_assert!((a - 1.0).abs() < 1e-14);
            }
        }
    }
}
