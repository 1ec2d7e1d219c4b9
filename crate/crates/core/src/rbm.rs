//! Skorokhod reflection, reflected Brownian motion, and the HGI benchmark.
//!
//! Reflection at the orthant boundary is componentwise: the one-dimensional
//! map is `Gamma(f)(t) = f(t) + sup_{s <= t} (-f(s))^+`, evaluated
//! incrementally with a per-coordinate running maximum, which is exact for
//! the discrete Skorokhod problem and needs O(1) memory per step. The HGI
//! cost functionals integrate `hhat` along reflected paths driven by the
//! network's limit drift and covariance.

use crate::cost::CostOracle;
use crate::estimators::CostEstimate;
use crate::linalg::{psd_factor, Mat};
use crate::model::NetworkSpec;
use crate::rng::{Stream, StreamKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RbmError {
    #[error("bad RBM parameter: {0}")]
    BadParameter(String),
    #[error("covariance is not positive semidefinite: {0}")]
    NotPsd(String),
}

/// Discrete path input for the Skorokhod map. `values[k]` is the path at
/// `times[k]`; the flag records whether the path is meant piecewise linear
/// or piecewise constant between grid points (the grid-point solution is the
/// same either way).
#[derive(Clone, Debug)]
pub struct SkorokhodInput {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub piecewise_linear: bool,
}

impl SkorokhodInput {
    pub fn validate(&self) -> Result<(), RbmError> {
        if self.times.len() != self.values.len() {
            return Err(RbmError::BadParameter("times and values differ in length".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(RbmError::BadParameter("times must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// One-dimensional normal reflection: returns `(phi, regulator)` with
/// `phi_k = f_k + max_{s <= k} (-f_s)^+`.
pub fn skorokhod_1d(f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut running = 0.0f64;
    let mut phi = Vec::with_capacity(f.len());
    let mut reg = Vec::with_capacity(f.len());
    for &x in f {
        running = running.max(-x);
        phi.push(x + running);
        reg.push(running);
    }
    (phi, reg)
}

/// Componentwise reflection of a d-dimensional discrete path.
pub fn skorokhod(input: &SkorokhodInput) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), RbmError> {
    input.validate()?;
    let n = input.values.len();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let d = input.values[0].len();
    let mut phi = vec![vec![0.0; d]; n];
    let mut reg = vec![vec![0.0; d]; n];
    for i in 0..d {
        let coord: Vec<f64> = input.values.iter().map(|v| v[i]).collect();
        let (p, h) = skorokhod_1d(&coord);
        for k in 0..n {
            phi[k][i] = p[k];
            reg[k][i] = h[k];
        }
    }
    Ok((phi, reg))
}

/// Reflected-Brownian-motion simulation parameters.
#[derive(Clone, Debug)]
pub struct RbmConfig {
    pub w0: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma: Mat,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl RbmConfig {
    fn factor(&self) -> Result<Mat, RbmError> {
        let d = self.w0.len();
        if self.theta.len() != d || self.sigma.rows() != d || self.sigma.cols() != d {
            return Err(RbmError::BadParameter("dimension mismatch".into()));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(RbmError::BadParameter(format!(
                "dt = {} and horizon = {} must be positive",
                self.dt, self.horizon
            )));
        }
        if self.w0.iter().any(|&w| w < 0.0) {
            return Err(RbmError::BadParameter("w0 must be nonnegative".into()));
        }
        psd_factor(&self.sigma, 1e-12).map_err(RbmError::NotPsd)
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Streaming Euler walker: `f` accumulates `w0 + theta t + L dB` and the
/// reflected value is `f plus` the per-coordinate running maximum of
/// `(-f)^+`.
pub struct RbmWalker {
    f: Vec<f64>,
    running: Vec<f64>,
    w: Vec<f64>,
    theta_dt: Vec<f64>,
    chol: Mat,
    sqrt_dt: f64,
    stream: Stream,
    normals: Vec<f64>,
}

impl RbmWalker {
    pub fn new(cfg: &RbmConfig, replication: u64) -> Result<Self, RbmError> {
        let chol = cfg.factor()?;
        let d = cfg.w0.len();
        Ok(RbmWalker {
            f: cfg.w0.clone(),
            running: vec![0.0; d],
            w: cfg.w0.clone(),
            theta_dt: cfg.theta.iter().map(|t| t * cfg.dt).collect(),
            chol,
            sqrt_dt: cfg.dt.sqrt(),
            stream: Stream::derive(cfg.seed, replication, StreamKind::Diffusion(0)),
            normals: vec![0.0; d],
        })
    }

    pub fn current(&self) -> &[f64] {
        &self.w
    }

    /// Advances one step with externally supplied standard normals.
    pub fn step_with_normals(&mut self, z: &[f64]) -> &[f64] {
        let shock = self.chol.matvec(z);
        for i in 0..self.f.len() {
            self.f[i] += self.theta_dt[i] + self.sqrt_dt * shock[i];
            self.running[i] = self.running[i].max(-self.f[i]);
            self.w[i] = self.f[i] + self.running[i];
        }
        &self.w
    }

    pub fn step(&mut self) -> &[f64] {
        for z in self.normals.iter_mut() {
            *z = self.stream.standard_normal();
        }
        let z = std::mem::take(&mut self.normals);
        self.step_with_normals(&z);
        self.normals = z;
        &self.w
    }
}

/// Full reflected path on the grid `0, dt, 2 dt, ...` including the start.
pub struct RbmPath {
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
}

impl RbmPath {
    /// CSV dump `t,W_1..W_d` for plotting.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.values.first().map_or(0, Vec::len);
        let header: Vec<String> = (1..=d).map(|i| format!("W_{i}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        for (k, v) in self.values.iter().enumerate() {
            let row: Vec<String> = v.iter().map(f64::to_string).collect();
            writeln!(out, "{},{}", k as f64 * self.dt, row.join(","))?;
        }
        Ok(())
    }
}

pub fn rbm_path(cfg: &RbmConfig, replication: u64) -> Result<RbmPath, RbmError> {
    let mut walker = RbmWalker::new(cfg, replication)?;
    let n = cfg.n_steps();
    let mut values = Vec::with_capacity(n + 1);
    values.push(walker.current().to_vec());
    for _ in 0..n {
        values.push(walker.step().to_vec());
    }
    Ok(RbmPath { dt: cfg.dt, values })
}

/// Monte Carlo estimate of the discounted HGI cost
/// `int_0^inf exp(-vt) E[hhat(W(t))] dt`, truncated at the config horizon;
/// trapezoidal in time, averaged over independent replications.
pub fn hgi_discounted(
    cfg: &RbmConfig,
    varsigma: f64,
    oracle: &CostOracle,
    replications: usize,
) -> Result<CostEstimate, RbmError> {
    if varsigma <= 0.0 {
        return Err(RbmError::BadParameter(format!(
            "discount rate must be positive, got {varsigma}"
        )));
    }
    if replications == 0 {
        return Err(RbmError::BadParameter("need at least one replication".into()));
    }
    let n = cfg.n_steps();
    let mut samples = Vec::with_capacity(replications);
    let mut worst_tail = 0.0f64;
    for rep in 0..replications {
        let mut walker = RbmWalker::new(cfg, rep as u64)?;
        let mut running_max = 0.0f64;
        let mut prev = {
            let (h, _) = oracle.hhat(walker.current());
            running_max = running_max.max(h);
            h
        };
        let mut integral = 0.0;
        for k in 0..n {
            let w = walker.step();
            let (h, _) = oracle.hhat(w);
            running_max = running_max.max(h);
            let t0 = k as f64 * cfg.dt;
            let t1 = t0 + cfg.dt;
            let g0 = (-varsigma * t0).exp() * prev;
            let g1 = (-varsigma * t1).exp() * h;
            integral += 0.5 * (g0 + g1) * cfg.dt;
            prev = h;
        }
        worst_tail = worst_tail.max((-varsigma * cfg.horizon).exp() * running_max / varsigma);
        samples.push(integral);
    }
    let mut est = CostEstimate::from_samples(&samples, cfg.horizon, worst_tail);
    est.truncation_bound = worst_tail;
    Ok(est)
}

/// Monte Carlo estimate of the ergodic HGI cost `int hhat dpi` as the time
/// average of `hhat(W(t))` after discarding the burn-in fraction, averaged
/// over independent replications.
pub fn hgi_ergodic(
    cfg: &RbmConfig,
    oracle: &CostOracle,
    replications: usize,
    burn_in: f64,
) -> Result<CostEstimate, RbmError> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(RbmError::BadParameter(format!("burn-in fraction {burn_in} not in [0,1)")));
    }
    if replications == 0 {
        return Err(RbmError::BadParameter("need at least one replication".into()));
    }
    let n = cfg.n_steps();
    let skip = (n as f64 * burn_in).floor() as usize;
    let mut samples = Vec::with_capacity(replications);
    for rep in 0..replications {
        let mut walker = RbmWalker::new(cfg, rep as u64)?;
        let mut acc = 0.0;
        let mut count = 0usize;
        for k in 0..n {
            let w = walker.step();
            if k >= skip {
                let (h, _) = oracle.hhat(w);
                acc += h;
                count += 1;
            }
        }
        samples.push(acc / count as f64);
    }
    Ok(CostEstimate::from_samples(&samples, cfg.horizon, 0.0))
}

/// Limit drift and covariance of the workload diffusion: `theta = K eta` and
/// `Sigma = K M D M^T K^T` with the renewal-CLT variance rates
/// `D_jj = alpha_j^3 (sigma_u_j)^2 + rho_j beta_j^3 (sigma_v_j)^2`.
pub fn diffusion_coefficients(spec: &NetworkSpec) -> (Vec<f64>, Mat) {
    let theta = spec.theta();
    let rho = spec.rho();
    let d: Vec<f64> = (0..spec.n_classes())
        .map(|j| {
            let a = spec.alpha[j];
            let b = spec.beta[j];
            a.powi(3) * spec.sigma_u[j] * spec.sigma_u[j]
                + rho[j] * b.powi(3) * spec.sigma_v[j] * spec.sigma_v[j]
        })
        .collect();
    let km = spec.k.scale_cols(&spec.m_diag());
    let kmd = km.scale_cols(&d);
    let sigma = kmd.matmul(&km.transpose());
    (theta, sigma)
}

/// RBM configuration induced by a network spec at a given workload start.
pub fn rbm_config_for(spec: &NetworkSpec, w0: Vec<f64>, dt: f64, horizon: f64, seed: u64) -> RbmConfig {
    let (theta, sigma) = diffusion_coefficients(spec);
    RbmConfig { w0, theta, sigma, dt, horizon, seed }
}
