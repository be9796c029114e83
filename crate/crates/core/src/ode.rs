//! Dormand–Prince 5(4) with step-size control, sampling the solution exactly
//! on a caller-supplied increasing set of output times.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Vector-space operations the integrator needs on its state.
pub trait OdeState: Clone {
    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self);
    /// Scaled RMS norm of `err` with weights `atol + rtol * max(|y0|, |y1|)`.
    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64;
}

impl OdeState for Vec<f64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += a * v;
        }
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        let n = err.len().max(1) as f64;
        let sum: f64 = err
            .iter()
            .zip(y0.iter().zip(y1))
            .map(|(e, (a, b))| {
                let sc = atol + rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        (sum / n).sqrt()
    }
}

impl OdeState for DMatrix<Complex64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x.iter()) {
            *s += v * a;
        }
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        let n = err.len().max(1) as f64;
        let sum: f64 = err
            .iter()
            .zip(y0.iter().zip(y1.iter()))
            .map(|(e, (a, b))| {
                let sc = atol + rtol * a.norm().max(b.norm());
                e.norm_sqr() / (sc * sc)
            })
            .sum();
        (sum / n).sqrt()
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, h_max: f64::INFINITY, h_min: 1e-14, max_steps: 10_000_000 }
    }

    /// Integrates `dy/dt = f(t, y)` from `(t0, y0)` and calls `observe(i, t, y)`
    /// at every `times[i]` (which must be `>= t0` and non-decreasing).
    pub fn integrate<S, F, O>(&self, f: F, t0: f64, y0: S, times: &[f64], mut observe: O) -> Result<S>
    where
        S: OdeState,
        F: Fn(f64, &S) -> S,
        O: FnMut(usize, f64, &S) -> Result<()>,
    {
        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y);
        let span = times.last().map_or(0.0, |&e| (e - t0).abs());
        let mut h = if span > 0.0 { (span * 1e-3).min(self.h_max).max(self.h_min * 10.0) } else { 1e-3 };
        let mut steps = 0usize;
        let mut fac_old = 1e-4f64;

        for (i, &target) in times.iter().enumerate() {
            if target < t - 1e-12 * t.abs().max(1.0) {
                return Err(Error::invalid("output times must be non-decreasing and >= t0"));
            }
            while t < target {
                steps += 1;
                if steps > self.max_steps {
                    return Err(Error::TooManySteps { t, steps });
                }
                let remaining = target - t;
                let clipped = h >= remaining;
                let step = if clipped { remaining } else { h };

                let mut yt = y.clone();
                yt.axpy(step * A21, &k1);
                let k2 = f(t + C2 * step, &yt);

                let mut yt = y.clone();
                yt.axpy(step * A31, &k1);
                yt.axpy(step * A32, &k2);
                let k3 = f(t + C3 * step, &yt);

                let mut yt = y.clone();
                yt.axpy(step * A41, &k1);
                yt.axpy(step * A42, &k2);
                yt.axpy(step * A43, &k3);
                let k4 = f(t + C4 * step, &yt);

                let mut yt = y.clone();
                yt.axpy(step * A51, &k1);
                yt.axpy(step * A52, &k2);
                yt.axpy(step * A53, &k3);
                yt.axpy(step * A54, &k4);
                let k5 = f(t + C5 * step, &yt);

                let mut yt = y.clone();
                yt.axpy(step * A61, &k1);
                yt.axpy(step * A62, &k2);
                yt.axpy(step * A63, &k3);
                yt.axpy(step * A64, &k4);
                yt.axpy(step * A65, &k5);
                let k6 = f(t + step, &yt);

                let mut y_new = y.clone();
                y_new.axpy(step * A71, &k1);
                y_new.axpy(step * A73, &k3);
                y_new.axpy(step * A74, &k4);
                y_new.axpy(step * A75, &k5);
                y_new.axpy(step * A76, &k6);
                let k7 = f(t + step, &y_new);

                let mut err = k1.clone();
                err.axpy(step * E1 - 1.0, &k1);
                err.axpy(step * E3, &k3);
                err.axpy(step * E4, &k4);
                err.axpy(step * E5, &k5);
                err.axpy(step * E6, &k6);
                err.axpy(step * E7, &k7);
                let norm = S::error_norm(&err, &y, &y_new, self.atol, self.rtol);
                if !norm.is_finite() {
                    h = step * 0.1;
                    if h < self.h_min {
                        return Err(Error::StepSizeUnderflow { t, h, steps });
                    }
                    continue;
                }

                // PI controller (Hairer's settings for DOPRI5).
                let expo = 0.2 - 0.04 * 0.75;
                let fac11 = norm.powf(expo);
                let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.1, 5.0);
                let h_proposed = (step / fac).min(self.h_max);

                if norm <= 1.0 {
                    fac_old = norm.max(1e-4);
                    t = if clipped { target } else { t + step };
                    y = y_new;
                    k1 = k7;
                    // Do not let a clipped step shrink the working step size.
                    h = if clipped { h.max(h_proposed) } else { h_proposed };
                } else {
                    h = step / (fac11 / 0.9).min(5.0);
                    if h < self.h_min {
                        return Err(Error::StepSizeUnderflow { t, h, steps });
                    }
                }
            }
            observe(i, t, &y)?;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_is_accurate() {
        let solver = Dopri5::new(1e-11, 1e-11);
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let mut max_err: f64 = 0.0;
        solver
            .integrate(|_, y: &Vec<f64>| vec![y[1], -y[0]], 0.0, vec![1.0, 0.0], &times, |_, t, y| {
                max_err = max_err.max((y[0] - t.cos()).abs());
                Ok(())
            })
            .unwrap();
        assert!(max_err < 1e-9, "{max_err}");
    }

    #[test]
    fn hits_output_times_exactly() {
        let solver = Dopri5::new(1e-8, 1e-8);
        let times = [0.0, 0.3, 0.3, 1.7];
        let mut seen = vec![];
        solver
            .integrate(|_, y: &Vec<f64>| vec![-y[0]], 0.0, vec![1.0], &times, |i, t, _| {
                seen.push((i, t));
                Ok(())
            })
            .unwrap();
        assert_eq!(seen, vec![(0, 0.0), (1, 0.3), (2, 0.3), (3, 1.7)]);
    }

    #[test]
    fn blow_up_reports_underflow_or_step_limit() {
        let mut solver = Dopri5::new(1e-10, 1e-10);
        solver.max_steps = 100_000;
        // y' = y^2 blows up at t = 1.
        let r = solver.integrate(|_, y: &Vec<f64>| vec![y[0] * y[0]], 0.0, vec![1.0], &[2.0], |_, _, _| Ok(()));
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. }) | Err(Error::TooManySteps { .. })));
    }
}
