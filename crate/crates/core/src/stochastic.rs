//! Classical colored-noise Monte Carlo: the pointer phase is driven by a
//! stationary OU field `B(t)` with `<B(t) B(s)> = (sigma^2/tau_c) e^{-|t-s|/tau_c}`
//! and `sigma^2 = D`. Each trajectory accumulates
//! `phi(t) = (a sqrt(2)/hbar) int_0^t B(s) ds` and the estimate is
//! `<exp(-i phi(t))>`.
//!
//! Trajectory `k` draws from its own ChaCha stream `k` under the run seed and
//! trajectories are reduced in fixed blocks, in order, so the result does not
//! depend on the number of worker threads.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CoherenceCurve, CurveMeta, Grid, KernelKind, KernelSpec, SystemParams};

pub const MIN_TRAJECTORIES: usize = 100;
const BLOCK: usize = 64;
const BLOCKS_PER_ROUND: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_traj: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Noise amplitude; the stationary variance is `sigma^2 / tau_c`.
    pub sigma: f64,
    /// Largest acceptable standard error; exceeding it adds a warning to the
    /// curve metadata.
    pub target_stderr: Option<f64>,
}

impl McConfig {
    /// `sigma = sqrt(D)`.
    pub fn new(params: &SystemParams, n_traj: usize, dt: f64, t_final: f64, seed: u64) -> Self {
        Self { n_traj, dt, t_final, seed, sigma: params.d.sqrt(), target_stderr: None }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::from_final(self.dt, self.t_final)
    }

    fn validate(&self, tau_c: f64) -> Result<Grid> {
        if self.n_traj < MIN_TRAJECTORIES {
            return Err(Error::invalid(format!("n_traj must be >= {MIN_TRAJECTORIES}, got {}", self.n_traj)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        let grid = self.grid()?;
        if self.dt > tau_c / 20.0 {
            return Err(Error::Resolution(format!("dt = {} exceeds tau_c/20 = {}", self.dt, tau_c / 20.0)));
        }
        Ok(grid)
    }
}

fn ou_tau(spec: &KernelSpec) -> Result<f64> {
    match spec.kind() {
        KernelKind::OrnsteinUhlenbeck => spec.tau_c().ok_or_else(|| Error::invalid("OU kernel needs tau_c")),
        other => Err(Error::UnsupportedKernel(format!("{} (stochastic sampling needs ou)", other.tag()))),
    }
}

/// Stationary deviation and exact one-step `(decay, kick)`.
fn ou_step(config: &McConfig, tau_c: f64) -> (f64, f64, f64) {
    let var = config.sigma * config.sigma / tau_c;
    let decay = (-config.dt / tau_c).exp();
    let kick = (var * -(-2.0 * config.dt / tau_c).exp_m1()).sqrt();
    (var.sqrt(), decay, kick)
}

fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn fill_path(config: &McConfig, tau_c: f64, index: u64, out: &mut [f64]) {
    let (sd, decay, kick) = ou_step(config, tau_c);
    let mut rng = trajectory_rng(config.seed, index);
    let x0: f64 = StandardNormal.sample(&mut rng);
    let mut b = sd * x0;
    out[0] = b;
    for slot in out.iter_mut().skip(1) {
        let xi: f64 = StandardNormal.sample(&mut rng);
        b = b * decay + kick * xi;
        *slot = b;
    }
}

/// Path of trajectory `index` on the config grid, starting from the
/// stationary distribution.
pub fn sample_ou_path_indexed(config: &McConfig, spec: &KernelSpec, index: u64) -> Result<Vec<f64>> {
    let tau_c = ou_tau(spec)?;
    let grid = config.validate(tau_c)?;
    let mut path = vec![0.0; grid.n];
    fill_path(config, tau_c, index, &mut path);
    Ok(path)
}

/// Path of trajectory 0.
pub fn sample_ou_path(config: &McConfig, spec: &KernelSpec) -> Result<Vec<f64>> {
    sample_ou_path_indexed(config, spec, 0)
}

#[derive(Debug, Clone)]
pub struct McOutput {
    pub curve: CoherenceCurve,
    /// Sample variance of `phi(t_i)` across trajectories.
    pub phase_variance: Vec<f64>,
}

#[derive(Clone)]
struct Sums {
    cos: Vec<f64>,
    sin: Vec<f64>,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
    cos_sin: Vec<f64>,
    phi: Vec<f64>,
    phi2: Vec<f64>,
}

impl Sums {
    fn zeros(n: usize) -> Self {
        let z = vec![0.0; n];
        Self { cos: z.clone(), sin: z.clone(), cos2: z.clone(), sin2: z.clone(), cos_sin: z.clone(), phi: z.clone(), phi2: z }
    }

    fn add(&mut self, other: &Sums) {
        let pairs = [
            (&mut self.cos, &other.cos),
            (&mut self.sin, &other.sin),
            (&mut self.cos2, &other.cos2),
            (&mut self.sin2, &other.sin2),
            (&mut self.cos_sin, &other.cos_sin),
            (&mut self.phi, &other.phi),
            (&mut self.phi2, &other.phi2),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn run_block(config: &McConfig, tau_c: f64, c_cal: f64, n: usize, first: usize, last: usize) -> Sums {
    let mut sums = Sums::zeros(n);
    let mut path = vec![0.0; n];
    let half_dt = 0.5 * config.dt;
    for k in first..last {
        fill_path(config, tau_c, k as u64, &mut path);
        let mut integral = 0.0;
        for i in 0..n {
            if i > 0 {
                integral += half_dt * (path[i - 1] + path[i]);
            }
            let phi = c_cal * integral;
            let (s, c) = phi.sin_cos();
            sums.cos[i] += c;
            sums.sin[i] += s;
            sums.cos2[i] += c * c;
            sums.sin2[i] += s * s;
            sums.cos_sin[i] += c * s;
            sums.phi[i] += phi;
            sums.phi2[i] += phi * phi;
        }
    }
    sums
}

/// Monte Carlo estimate of `C(t) = <exp(-i phi(t))>` with standard errors.
pub fn mc_dephasing_average(config: &McConfig, params: &SystemParams, spec: &KernelSpec) -> Result<McOutput> {
    let tau_c = ou_tau(spec)?;
    let grid = config.validate(tau_c)?;
    let n = grid.n;
    let c_cal = params.a * std::f64::consts::SQRT_2 / params.hbar;

    let n_blocks = config.n_traj.div_ceil(BLOCK);
    let mut total = Sums::zeros(n);
    for round in (0..n_blocks).step_by(BLOCKS_PER_ROUND) {
        let blocks: Vec<Sums> = (round..(round + BLOCKS_PER_ROUND).min(n_blocks))
            .into_par_iter()
            .map(|b| {
                let first = b * BLOCK;
                let last = ((b + 1) * BLOCK).min(config.n_traj);
                run_block(config, tau_c, c_cal, n, first, last)
            })
            .collect();
        for s in &blocks {
            total.add(s);
        }
    }

    let nt = config.n_traj as f64;
    let mut samples = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    let mut phase_variance = Vec::with_capacity(n);
    for i in 0..n {
        let mc = total.cos[i] / nt;
        let ms = total.sin[i] / nt;
        let var_c = (total.cos2[i] / nt - mc * mc).max(0.0) * nt / (nt - 1.0);
        let var_s = (total.sin2[i] / nt - ms * ms).max(0.0) * nt / (nt - 1.0);
        let cov = (total.cos_sin[i] / nt - mc * ms) * nt / (nt - 1.0);
        // exp(-i phi) = cos - i sin; the error is taken along the mean.
        let mean = Complex64::new(mc, -ms);
        let norm = mean.norm();
        let var_along = if norm > 0.0 {
            let (u, v) = (mean.re / norm, mean.im / norm);
            u * u * var_c + v * v * var_s - 2.0 * u * v * cov
        } else {
            var_c + var_s
        };
        samples.push(mean);
        stderr.push((var_along.max(0.0) / nt).sqrt());
        let mp = total.phi[i] / nt;
        phase_variance.push((total.phi2[i] / nt - mp * mp).max(0.0) * nt / (nt - 1.0));
    }

    let mut meta = CurveMeta::new("stochastic", *params, Some(*spec))
        .with("n_traj", config.n_traj)
        .with("seed", config.seed)
        .with("sigma", config.sigma)
        .with("c_cal", c_cal);
    if let Some(target) = config.target_stderr {
        let worst = stderr.iter().cloned().fold(0.0, f64::max);
        if worst > target {
            meta = meta.with(
                "warning",
                format!("max standard error {worst:.3e} exceeds target {target:.3e}; increase n_traj"),
            );
        }
    }
    let curve = CoherenceCurve::new(grid.t0, grid.dt, samples, meta)?.with_stderr(stderr)?;
    Ok(McOutput { curve, phase_variance })
}
