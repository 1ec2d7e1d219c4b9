//! Diffusion-scaled views and cost functionals.
//!
//! Scaling convention: a trajectory simulated on the unscaled clock up to
//! `r^2 T` maps to the diffusion window `[0, T]` via `Qhat(t) = Q(r^2 t)/r`,
//! `What = K M^r Qhat`, `Bbar(t) = B(r^2 t)/r^2`, `Uhat(t) = r(C t - K
//! Bbar(t))`. All integrals here are exact over the piecewise-constant
//! segments; no quadrature grids are involved.

use crate::cost::CostOracle;
use crate::linalg::{dot, Mat};
use crate::simengine::{EventKind, Segment, SimConfig, Trajectory};
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("bad estimator parameter: {0}")]
    BadParameter(String),
    #[error("trajectory spans {have} scaled time units, need {need}")]
    HorizonTooShort { need: f64, have: f64 },
}

/// Monte Carlo estimate with its replication bookkeeping.
#[derive(Clone, Debug, Serialize)]
pub struct CostEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replications: usize,
    pub horizon: f64,
    /// Bound on the mass discarded by truncating an infinite-horizon
    /// integral; zero for ergodic estimates.
    pub truncation_bound: f64,
}

impl CostEstimate {
    pub fn from_samples(samples: &[f64], horizon: f64, truncation_bound: f64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        CostEstimate { value: mean, std_error, replications: n, horizon, truncation_bound }
    }
}

/// Read-only scaled view over a trajectory.
pub struct ScaledView<'a> {
    pub traj: &'a Trajectory,
    r: f64,
    km_r: Mat,
}

/// One piecewise-constant piece of the scaled processes.
#[derive(Clone, Debug)]
pub struct ScaledSegment<'a> {
    pub t_start: f64,
    pub t_end: f64,
    pub q_hat: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub raw: &'a Segment,
}

impl<'a> ScaledView<'a> {
    pub fn new(cfg: &SimConfig, traj: &'a Trajectory) -> Self {
        let km_r = cfg.spec.k.scale_cols(&cfg.instance.m_r_diag);
        ScaledView { traj, r: cfg.instance.r, km_r }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn horizon_scaled(&self) -> f64 {
        self.traj.horizon / (self.r * self.r)
    }

    pub fn q_hat(&self, q: &[u64]) -> Vec<f64> {
        q.iter().map(|&x| x as f64 / self.r).collect()
    }

    pub fn w_hat(&self, q: &[u64]) -> Vec<f64> {
        self.km_r.matvec(&self.q_hat(q))
    }

    pub fn scaled_segments(&self) -> impl Iterator<Item = ScaledSegment<'_>> + '_ {
        let r2 = self.r * self.r;
        self.traj.segments.iter().map(move |seg| {
            let q_hat = self.q_hat(&seg.q);
            let w_hat = self.km_r.matvec(&q_hat);
            ScaledSegment {
                t_start: seg.t_start / r2,
                t_end: seg.t_end / r2,
                q_hat,
                w_hat,
                raw: seg,
            }
        })
    }
}

/// Discounted holding-cost integral of one path:
/// `int_0^T exp(-vt) h . Qhat(t) dt` with the leftover tail reported as
/// `truncation_bound = exp(-vT) max_t(h . Qhat) / v`.
#[derive(Clone, Debug)]
pub struct DiscountedCost {
    pub value: f64,
    pub truncation_bound: f64,
}

pub fn discounted_cost(
    cfg: &SimConfig,
    traj: &Trajectory,
    varsigma: f64,
) -> Result<DiscountedCost, EstimatorError> {
    if varsigma <= 0.0 {
        return Err(EstimatorError::BadParameter(format!(
            "discount rate must be positive, got {varsigma}"
        )));
    }
    let view = ScaledView::new(cfg, traj);
    let h = &cfg.spec.holding_cost;
    let mut value = 0.0;
    let mut running_max = 0.0f64;
    for seg in view.scaled_segments() {
        let cost = dot(h, &seg.q_hat);
        running_max = running_max.max(cost);
        value += cost * ((-varsigma * seg.t_start).exp() - (-varsigma * seg.t_end).exp()) / varsigma;
    }
    let t_end = view.horizon_scaled();
    let truncation_bound = (-varsigma * t_end).exp() * running_max / varsigma;
    Ok(DiscountedCost { value, truncation_bound })
}

/// Time average `1/T int_0^T h . Qhat(t) dt` over the scaled window.
pub fn ergodic_cost(cfg: &SimConfig, traj: &Trajectory, t_scaled: f64) -> Result<f64, EstimatorError> {
    if t_scaled <= 0.0 {
        return Err(EstimatorError::BadParameter(format!(
            "averaging window must be positive, got {t_scaled}"
        )));
    }
    let view = ScaledView::new(cfg, traj);
    if view.horizon_scaled() < t_scaled * (1.0 - 1e-9) {
        return Err(EstimatorError::HorizonTooShort {
            need: t_scaled,
            have: view.horizon_scaled(),
        });
    }
    let h = &cfg.spec.holding_cost;
    let mut acc = 0.0;
    for seg in view.scaled_segments() {
        if seg.t_start >= t_scaled {
            break;
        }
        let end = seg.t_end.min(t_scaled);
        acc += dot(h, &seg.q_hat) * (end - seg.t_start);
    }
    Ok(acc / t_scaled)
}

/// Caching evaluator for the instantaneous optimality gap
/// `h . q - hhat(K M^r q)` at integer queue states. Positive homogeneity of
/// both LPs makes the integer-keyed cache exact: the scaled gap at `Qhat =
/// q/r` is the unscaled gap divided by `r`.
pub struct GapEvaluator {
    oracle: CostOracle,
    h: Vec<f64>,
    cache: HashMap<Vec<u64>, f64>,
    max_entries: usize,
}

impl GapEvaluator {
    pub fn new(oracle: CostOracle, h: Vec<f64>) -> Self {
        GapEvaluator { oracle, h, cache: HashMap::new(), max_entries: 1 << 20 }
    }

    /// Unscaled gap at an integer queue vector.
    pub fn gap_unscaled(&mut self, q: &[u64]) -> f64 {
        if let Some(&g) = self.cache.get(q) {
            return g;
        }
        let qf: Vec<f64> = q.iter().map(|&x| x as f64).collect();
        let (hhat, _) = self.oracle.hhat(&self.oracle.workload(&qf));
        let g = dot(&self.h, &qf) - hhat;
        if self.cache.len() < self.max_entries {
            self.cache.insert(q.to_vec(), g);
        }
        g
    }
}

/// Per-segment values of `h . Qhat(t) - hhat(What(t))`, with `hhat` taken
/// under the same `M^r` weighting as the workload so the gap is
/// sign-definite.
#[derive(Clone, Debug)]
pub struct GapPoint {
    pub t_start: f64,
    pub t_end: f64,
    pub gap: f64,
}

pub fn hgi_gap_series(cfg: &SimConfig, traj: &Trajectory, gaps: &mut GapEvaluator) -> Vec<GapPoint> {
    let r = cfg.instance.r;
    let r2 = r * r;
    traj.segments
        .iter()
        .map(|seg| GapPoint {
            t_start: seg.t_start / r2,
            t_end: seg.t_end / r2,
            gap: gaps.gap_unscaled(&seg.q) / r,
        })
        .collect()
}

/// Scaled workload level above which a resource counts as "has work":
/// `2 J c2 r^(kappa - 1)`.
pub fn idleness_threshold(cfg: &SimConfig) -> f64 {
    2.0 * cfg.spec.n_classes() as f64 * cfg.params.c2 * cfg.instance.r.powf(cfg.params.kappa - 1.0)
}

/// Scaled time measure, per resource, of segments where the workload
/// exceeds the threshold yet the resource is not running at full capacity.
/// Under the policy this requires an excursion-halted feeding class.
pub fn idleness_metric(cfg: &SimConfig, traj: &Trajectory) -> Vec<f64> {
    let view = ScaledView::new(cfg, traj);
    let threshold = idleness_threshold(cfg);
    let n_res = cfg.spec.n_resources();
    let mut measure = vec![0.0; n_res];
    for seg in view.scaled_segments() {
        let kb = cfg.spec.k.matvec(&seg.raw.rate);
        for i in 0..n_res {
            if seg.w_hat[i] >= threshold && kb[i] < cfg.spec.capacity[i] - 1e-9 {
                measure[i] += seg.t_end - seg.t_start;
            }
        }
    }
    measure
}

/// Streaming per-replication metrics used by the experiment driver; one pass
/// over the segments produces the ergodic average, the discounted integral,
/// the mean instantaneous gap, and per-resource idleness, without holding
/// the trajectory in memory.
pub struct MetricsAccumulator {
    r: f64,
    h: Vec<f64>,
    capacity: Vec<f64>,
    k: Mat,
    km_r: Mat,
    idleness_threshold: f64,
    gaps: GapEvaluator,
    varsigma: Option<f64>,
    t_scaled_end: f64,
    cost_integral: f64,
    gap_integral: f64,
    discounted: f64,
    running_max_cost: f64,
    idle_measure: Vec<f64>,
    span: f64,
}

/// Final metrics for one replication.
#[derive(Clone, Debug, Serialize)]
pub struct ReplicationMetrics {
    /// `J_E`: time-average of `h . Qhat` over the scaled horizon.
    pub ergodic_cost: f64,
    /// `J_D` when a discount rate was supplied.
    pub discounted_cost: Option<f64>,
    pub discounted_truncation_bound: Option<f64>,
    /// Time-average of the instantaneous optimality gap.
    pub mean_gap: f64,
    /// Fraction of scaled time each resource idles while holding work.
    pub idle_fraction: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn new(cfg: &SimConfig, varsigma: Option<f64>) -> Self {
        let basis = &cfg.tables.basis;
        let oracle = CostOracle::for_instance(&cfg.spec, basis, &cfg.instance);
        MetricsAccumulator {
            r: cfg.instance.r,
            h: cfg.spec.holding_cost.clone(),
            capacity: cfg.spec.capacity.clone(),
            k: cfg.spec.k.clone(),
            km_r: cfg.spec.k.scale_cols(&cfg.instance.m_r_diag),
            idleness_threshold: idleness_threshold(cfg),
            gaps: GapEvaluator::new(oracle, cfg.spec.holding_cost.clone()),
            varsigma,
            t_scaled_end: cfg.horizon / (cfg.instance.r * cfg.instance.r),
            cost_integral: 0.0,
            gap_integral: 0.0,
            discounted: 0.0,
            running_max_cost: 0.0,
            idle_measure: vec![0.0; cfg.spec.n_resources()],
            span: 0.0,
        }
    }

    pub fn add(&mut self, seg: &Segment) {
        let r2 = self.r * self.r;
        let (a, b) = (seg.t_start / r2, seg.t_end / r2);
        let dt = b - a;
        let cost_unscaled: f64 = dot(&self.h, &seg.q.iter().map(|&x| x as f64).collect::<Vec<_>>());
        let cost = cost_unscaled / self.r;
        self.cost_integral += cost * dt;
        self.running_max_cost = self.running_max_cost.max(cost);
        if let Some(v) = self.varsigma {
            self.discounted += cost * ((-v * a).exp() - (-v * b).exp()) / v;
        }
        self.gap_integral += self.gaps.gap_unscaled(&seg.q) / self.r * dt;

        let q_hat: Vec<f64> = seg.q.iter().map(|&x| x as f64 / self.r).collect();
        let w_hat = self.km_r.matvec(&q_hat);
        let kb = self.k.matvec(&seg.rate);
        for i in 0..self.idle_measure.len() {
            if w_hat[i] >= self.idleness_threshold && kb[i] < self.capacity[i] - 1e-9 {
                self.idle_measure[i] += dt;
            }
        }
        self.span += dt;
    }

    pub fn finish(self) -> ReplicationMetrics {
        let t = self.t_scaled_end;
        ReplicationMetrics {
            ergodic_cost: self.cost_integral / t,
            discounted_cost: self.varsigma.map(|_| self.discounted),
            discounted_truncation_bound: self
                .varsigma
                .map(|v| (-v * t).exp() * self.running_max_cost / v),
            mean_gap: self.gap_integral / t,
            idle_fraction: self.idle_measure.iter().map(|m| m / t).collect(),
        }
    }
}

/// Reconstructs the centered netput at every segment boundary from raw event
/// counts and checks the scaled workload identity
/// `What(t) = what(0) + Xhat(t) + Uhat(t)`; returns the largest absolute
/// residual. A correct simulator satisfies the identity to floating-point
/// resolution because `C = K rho` holds exactly.
pub fn scaled_identity_residual(cfg: &SimConfig, traj: &Trajectory) -> f64 {
    let n = cfg.spec.n_classes();
    let r = cfg.instance.r;
    let r2 = r * r;
    let km_r = cfg.spec.k.scale_cols(&cfg.instance.m_r_diag);
    let rho = cfg.spec.rho();
    let ups_a_bar: Vec<f64> = cfg.init.residual_arrival.iter().map(|u| u / r2).collect();
    let ups_s_bar: Vec<f64> = cfg.init.residual_service.iter().map(|u| u / r2).collect();
    let q0_hat: Vec<f64> = cfg.init.q0.iter().map(|&q| q as f64 / r).collect();
    let w0 = km_r.matvec(&q0_hat);

    let mut arrivals = vec![0u64; n];
    let mut departures = vec![0u64; n];
    let mut b = vec![0.0f64; n];
    let mut worst: f64 = 0.0;

    let mut check = |t_scaled: f64, q: &[u64], arrivals: &[u64], departures: &[u64], b: &[f64]| {
        let mut class_term = vec![0.0; n];
        let mut ind_a = vec![0.0; n];
        let mut ind_s = vec![0.0; n];
        for j in 0..n {
            let b_bar = b[j] / r2;
            let offset_arrived = ups_a_bar[j] > 0.0 && t_scaled >= ups_a_bar[j];
            let offset_served = ups_s_bar[j] > 0.0 && b_bar >= ups_s_bar[j];
            let renewal_arrivals = arrivals[j] as f64 - f64::from(u8::from(offset_arrived));
            let renewal_departures = departures[j] as f64 - f64::from(u8::from(offset_served));
            let a_hat =
                renewal_arrivals / r - r * (t_scaled - ups_a_bar[j]).max(0.0) * cfg.instance.alpha_r[j];
            let s_hat =
                renewal_departures / r - r * (b_bar - ups_s_bar[j]).max(0.0) * cfg.instance.beta_r[j];
            class_term[j] = a_hat - s_hat;
            ind_a[j] = f64::from(u8::from(offset_arrived)) / r;
            ind_s[j] = f64::from(u8::from(offset_served)) / r;
        }
        let mut x_hat = km_r.matvec(&class_term);
        let ia = km_r.matvec(&ind_a);
        let is = km_r.matvec(&ind_s);
        let drift: Vec<f64> = cfg
            .instance
            .rho_r
            .iter()
            .zip(&rho)
            .map(|(rr, l)| r * t_scaled * (rr - l))
            .collect();
        let kd = cfg.spec.k.matvec(&drift);
        let early_a: Vec<f64> = cfg
            .instance
            .rho_r
            .iter()
            .zip(&ups_a_bar)
            .map(|(rr, u)| r * rr * t_scaled.min(*u))
            .collect();
        let ka = cfg.spec.k.matvec(&early_a);
        let early_s: Vec<f64> = ups_s_bar
            .iter()
            .zip(b)
            .map(|(u, bj)| r * (bj / r2).min(*u))
            .collect();
        let ks = cfg.spec.k.matvec(&early_s);
        for i in 0..cfg.spec.n_resources() {
            x_hat[i] += ia[i] - is[i] + kd[i] - ka[i] + ks[i];
        }

        let q_hat: Vec<f64> = q.iter().map(|&x| x as f64 / r).collect();
        let w_hat = km_r.matvec(&q_hat);
        for i in 0..cfg.spec.n_resources() {
            let kb: f64 = (0..n).map(|j| cfg.spec.k.get(i, j) * b[j] / r2).sum();
            let u_hat = r * (cfg.spec.capacity[i] * t_scaled - kb);
            let residual = w_hat[i] - (w0[i] + x_hat[i] + u_hat);
            worst = worst.max(residual.abs());
        }
    };

    for (idx, seg) in traj.segments.iter().enumerate() {
        check(seg.t_start / r2, &seg.q, &arrivals, &departures, &b);
        // apply the closing event
        let ev = &traj.events[idx];
        match ev.kind {
            EventKind::Arrival => arrivals[ev.class.unwrap()] += 1,
            EventKind::Departure => departures[ev.class.unwrap()] += 1,
            EventKind::Horizon => {}
        }
        for j in 0..n {
            b[j] += seg.rate[j] * seg.duration();
        }
    }
    worst
}
