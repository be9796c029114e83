//! Exact dynamics for the Ornstein–Uhlenbeck bath: the closed second-order
//! equation
//!
//! ```text
//! C'' + C'/tau_c + (2 a^2 D / (hbar^2 tau_c)) C = 0,   C(0) = 1, C'(0) = 0
//! ```
//!
//! solved numerically and in closed form, plus the Markovian exponential
//! `exp(-a^2 D t / hbar^2)` used as the memoryless reference.
//!
//! The equivalent memory form is
//! `C'(t) = -(2 a^2 D / (hbar^2 tau_c)) int_0^t exp(-(t-s)/tau_c) C(s) ds`;
//! it is only used as a test oracle.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CoherenceCurve, CurveMeta, Grid, KernelSpec, SystemParams};
use crate::ode::Dopri5;

/// Local error tolerance of the closure integrator.
pub const CLOSURE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuOdeCoefficients {
    /// `1/tau_c`
    pub damping: f64,
    /// `2 a^2 D / (hbar^2 tau_c)`
    pub stiffness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DampingRegime {
    Underdamped,
    Critical,
    Overdamped,
}

impl OuOdeCoefficients {
    pub fn new(params: &SystemParams, tau_c: f64) -> Result<Self> {
        if !(tau_c.is_finite() && tau_c > 0.0) {
            return Err(Error::invalid(format!("tau_c must be > 0, got {tau_c}")));
        }
        Ok(Self { damping: 1.0 / tau_c, stiffness: 2.0 * params.coupling() * params.d / tau_c })
    }

    pub fn discriminant(&self) -> f64 {
        self.damping * self.damping - 4.0 * self.stiffness
    }

    pub fn regime(&self) -> DampingRegime {
        let disc = self.discriminant();
        if disc.abs() <= 1e-12 * self.damping * self.damping {
            DampingRegime::Critical
        } else if disc < 0.0 {
            DampingRegime::Underdamped
        } else {
            DampingRegime::Overdamped
        }
    }
}

/// Integrates the closure equation on `grid` (which must start at 0).
pub fn ou_ode_solve(params: &SystemParams, tau_c: f64, grid: Grid) -> Result<CoherenceCurve> {
    let coeffs = OuOdeCoefficients::new(params, tau_c)?;
    if grid.t0 != 0.0 {
        return Err(Error::invalid("closure grid must start at t0 = 0"));
    }
    if grid.dt > tau_c / 50.0 {
        return Err(Error::Resolution(format!(
            "dt = {} exceeds tau_c/50 = {}",
            grid.dt,
            tau_c / 50.0
        )));
    }
    let times: Vec<f64> = grid.times().collect();
    let mut samples = Vec::with_capacity(grid.n);
    let rhs = |_t: f64, y: &Vec<f64>| vec![y[1], -coeffs.damping * y[1] - coeffs.stiffness * y[0]];
    Dopri5::new(CLOSURE_TOLERANCE, CLOSURE_TOLERANCE).integrate(rhs, 0.0, vec![1.0, 0.0], &times, |_, _, y| {
        samples.push(Complex64::new(y[0], 0.0));
        Ok(())
    })?;
    let meta = CurveMeta::new("ou-closure", *params, Some(KernelSpec::ou(tau_c)?))
        .with("method", "dopri5")
        .with("tolerance", CLOSURE_TOLERANCE);
    CoherenceCurve::new(0.0, grid.dt, samples, meta)
}

/// Closed-form solution through the characteristic roots
/// `lambda = (-1/tau_c +- sqrt(disc)) / 2`.
pub fn ou_ode_analytic(params: &SystemParams, tau_c: f64, t: f64) -> Result<f64> {
    let coeffs = OuOdeCoefficients::new(params, tau_c)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(format!("t must be >= 0, got {t}")));
    }
    let half_d = 0.5 * coeffs.damping;
    let envelope = (-half_d * t).exp();
    let disc = coeffs.discriminant();
    Ok(match coeffs.regime() {
        DampingRegime::Critical => envelope * (1.0 + half_d * t),
        DampingRegime::Underdamped => {
            let w = 0.5 * (-disc).sqrt();
            envelope * ((w * t).cos() + half_d / w * (w * t).sin())
        }
        DampingRegime::Overdamped => {
            let r = 0.5 * disc.sqrt();
            // Both exponentials are folded into cosh/sinh around the envelope;
            // for large r*t this form overflows before the product does.
            if r * t < 700.0 {
                envelope * ((r * t).cosh() + half_d / r * (r * t).sinh())
            } else {
                let slow = -half_d + r;
                let fast = -half_d - r;
                (fast * (slow * t).exp() - slow * (fast * t).exp()) / (fast - slow)
            }
        }
    })
}

/// `C(t) = exp(-a^2 D t / hbar^2)`, decay time `tau_M = hbar^2/(a^2 D)`.
pub fn markovian_limit_curve(params: &SystemParams, grid: Grid) -> CoherenceCurve {
    let rate = params.coupling() * params.d;
    let samples = grid.times().map(|t| Complex64::new((-rate * t).exp(), 0.0)).collect();
    let meta = CurveMeta::new("markovian", *params, Some(KernelSpec::delta()));
    CoherenceCurve { t0: grid.t0, dt: grid.dt, samples, stderr: None, meta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> SystemParams {
        SystemParams::default()
    }

    /// `C(1)` at tau_c = 1 from the characteristic roots of
    /// `lambda^2 + lambda + 2 = 0`, written out independently.
    fn reference_c1() -> f64 {
        let w = 7f64.sqrt() / 2.0;
        (-0.5f64).exp() * (w.cos() + w.sin() / 7f64.sqrt())
    }

    #[test]
    fn analytic_spot_value() {
        let c = ou_ode_analytic(&unit(), 1.0, 1.0).unwrap();
        assert!((c - reference_c1()).abs() < 1e-15);
        assert!((c - 0.3710736).abs() < 1e-7);
        assert_eq!(ou_ode_analytic(&unit(), 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn numeric_spot_value_and_initial_conditions() {
        let grid = Grid::from_final(1e-3, 1.0).unwrap();
        let c = ou_ode_solve(&unit(), 1.0, grid).unwrap();
        assert_eq!(c.samples[0].re, 1.0);
        assert!((c.samples[1000].re - reference_c1()).abs() < 1e-9);
        assert!(c.samples.iter().all(|s| s.im == 0.0));
        // Forward difference of C at 0 is O(dt) with C'(0) = 0.
        let slope = (c.samples[1].re - c.samples[0].re) / grid.dt;
        assert!(slope.abs() < 1.1e-3);
        let slope0 = (c.samples[1].re - 1.0) / grid.dt + grid.dt; // remove the -Gamma dt term (Gamma = 1)
        assert!(slope0.abs() < 1e-6);
    }

    #[test]
    fn short_time_value() {
        // 1 - t^2 + t^3/3 - ... at tau_c = 1
        let grid = Grid::from_final(1e-3, 0.01).unwrap();
        let c = ou_ode_solve(&unit(), 1.0, grid).unwrap();
        let c01 = c.samples[10].re;
        assert!((c01 - (1.0 - 1e-4)).abs() < 4e-7);
        assert!((c01 - ou_ode_analytic(&unit(), 1.0, 0.01).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn critical_damping_branch() {
        let p = SystemParams::new(1.0, 1.0, 1.0).unwrap();
        let tau_c = 1.0 / 8.0;
        let coeffs = OuOdeCoefficients::new(&p, tau_c).unwrap();
        assert_eq!(coeffs.regime(), DampingRegime::Critical);
        let grid = Grid::from_final(tau_c / 100.0, 2.0).unwrap();
        let num = ou_ode_solve(&p, tau_c, grid).unwrap();
        for (i, t) in grid.times().enumerate() {
            let exact = (-t / (2.0 * tau_c)).exp() * (1.0 + t / (2.0 * tau_c));
            assert!((ou_ode_analytic(&p, tau_c, t).unwrap() - exact).abs() < 1e-14);
            assert!((num.samples[i].re - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn numeric_matches_analytic_over_ten_markov_times() {
        let p = unit();
        for tau_c in [0.1f64, 1.0, 10.0] {
            let grid = Grid::from_final(tau_c.min(1.0) / 50.0, 10.0 * p.tau_markov()).unwrap();
            let num = ou_ode_solve(&p, tau_c, grid).unwrap();
            let worst = grid
                .times()
                .enumerate()
                .map(|(i, t)| (num.samples[i].re - ou_ode_analytic(&p, tau_c, t).unwrap()).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-6, "tau_c={tau_c}: {worst}");
        }
    }

    #[test]
    fn overdamped_branch_matches_numeric() {
        let p = SystemParams::new(0.1, 1.0, 1.0).unwrap();
        let tau_c = 0.5;
        assert_eq!(OuOdeCoefficients::new(&p, tau_c).unwrap().regime(), DampingRegime::Overdamped);
        let grid = Grid::from_final(0.01, 20.0).unwrap();
        let num = ou_ode_solve(&p, tau_c, grid).unwrap();
        for (i, t) in grid.times().enumerate() {
            assert!((num.samples[i].re - ou_ode_analytic(&p, tau_c, t).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn matches_memory_integral_form() {
        // Trapezoid memory integral: C' = -k int_0^t e^{-(t-s)/tau_c} C(s) ds with
        // k = 2 a^2 D/(hbar^2 tau_c); explicit integration on a fine grid.
        let p = unit();
        let tau_c = 0.8;
        let k = 2.0 * p.coupling() * p.d / tau_c;
        let h = 1e-4;
        let n = 20_000;
        let decay = (-h / tau_c).exp();
        let mut c = vec![1.0f64; n + 1];
        let mut memory = 0.0; // int_0^t e^{-(t-s)/tau_c} C(s) ds
        let mut dc = 0.0;
        for i in 0..n {
            // Heun step on (C, memory).
            let c_pred = c[i] + h * dc;
            let mem_pred = memory * decay + 0.5 * h * (c[i] * decay + c_pred);
            let dc_pred = -k * mem_pred;
            c[i + 1] = c[i] + 0.5 * h * (dc + dc_pred);
            memory = memory * decay + 0.5 * h * (c[i] * decay + c[i + 1]);
            dc = -k * memory;
        }
        for i in (0..=n).step_by(2000) {
            let t = i as f64 * h;
            let exact = ou_ode_analytic(&p, tau_c, t).unwrap();
            assert!((c[i] - exact).abs() < 1e-6, "t={t}: {} vs {exact}", c[i]);
        }
    }

    #[test]
    fn short_time_quadratic_ratio() {
        let p = unit();
        let tau_c = 1.0;
        let gamma = p.coupling() * p.d / tau_c;
        let t = 0.01 * tau_c;
        let ratio = (1.0 - ou_ode_analytic(&p, tau_c, t).unwrap()) / (gamma * t * t);
        assert!((ratio - 1.0).abs() < 0.02);
    }

    #[test]
    fn converges_monotonically_toward_markovian_exponential() {
        let p = unit();
        let tm = p.tau_markov();
        let mut last = f64::INFINITY;
        for tau_c in [1e-1, 1e-2, 1e-3] {
            let grid = Grid::from_final(tau_c / 50.0, 3.0 * tm).unwrap();
            let num = ou_ode_solve(&p, tau_c * tm, grid).unwrap();
            let markov = markovian_limit_curve(&p, grid);
            let dist = num
                .samples
                .iter()
                .zip(&markov.samples)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(dist < last, "tau_c={tau_c}: {dist} !< {last}");
            last = dist;
        }
    }

    #[test]
    fn markovian_examples() {
        let g = Grid::new(0.0, 0.25, 5).unwrap();
        let c = markovian_limit_curve(&unit(), g);
        assert_eq!(c.samples[0].re, 1.0);
        assert!((c.samples[4].re - (-1.0f64).exp()).abs() < 1e-16);
        let a2 = markovian_limit_curve(&SystemParams::new(2.0, 1.0, 1.0).unwrap(), g);
        assert!((a2.samples[1].re - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn resolution_guard() {
        assert!(matches!(
            ou_ode_solve(&unit(), 1.0, Grid::new(0.0, 0.1, 10).unwrap()),
            Err(Error::Resolution(_))
        ));
    }

    proptest! {
        #[test]
        fn regime_matches_discriminant_sign(a in 0.01f64..10.0, d in 0.01f64..10.0, tau_c in 1e-3f64..1e3) {
            let p = SystemParams::new(a, 1.0, d).unwrap();
            let c = OuOdeCoefficients::new(&p, tau_c).unwrap();
            let disc = c.damping * c.damping - 4.0 * c.stiffness;
            let expected = if disc.abs() <= 1e-12 * c.damping * c.damping {
                DampingRegime::Critical
            } else if disc < 0.0 { DampingRegime::Underdamped } else { DampingRegime::Overdamped };
            prop_assert_eq!(c.regime(), expected);
            // Underdamped iff the solution changes sign somewhere.
            let crosses = (1..400).any(|i| ou_ode_analytic(&p, tau_c, i as f64 * 0.05 * tau_c.max(1.0 / c.stiffness.sqrt())).unwrap() < 0.0);
            if disc < -1e-6 * c.damping * c.damping { prop_assert!(crosses); }
            if disc > 0.0 { prop_assert!(!crosses); }
        }
    }
}
