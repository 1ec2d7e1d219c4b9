//! Event-driven simulation of the controlled network.
//!
//! The queue process is piecewise constant and the allocation rate is
//! constant between events, so the simulator advances from event to event in
//! closed form: the next event is either a class's next arrival or the
//! completion of a head-of-line job (remaining work divided by allocated
//! rate). Job sizes are drawn when a job reaches the head of its queue;
//! under FIFO with class-level rate allocation this leaves the queue-length
//! law unchanged and shrinks state from per-job to per-class.
//!
//! The threshold policy: class `j` counts as near-empty while `q_j <
//! c2_tilde r^kappa` (the pattern `z`), and its service halts entirely on
//! hysteresis excursions: halt when `q_j` drops below `c1_tilde r^kappa`,
//! resume once it climbs back to `c2_tilde r^kappa`.

use crate::kernel::{PolicyTables, ZMask};
use crate::model::{DistributionFamily, FittedDistribution, NetworkSpec, TrafficInstance};
use crate::rng::{Stream, StreamKind};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("runtime invariant violated: {0}")]
    Invariant(String),
}

/// Threshold-policy parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PolicyParams {
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
}

/// Initial state: integer queues, residual times, and excursion flags.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InitialCondition {
    pub q0: Vec<u64>,
    /// Time until the first arrival of each class, when positive; zero means
    /// the renewal stream starts immediately.
    pub residual_arrival: Vec<f64>,
    /// Remaining work of the head-of-line job at time zero, when positive.
    pub residual_service: Vec<f64>,
    pub e0: Vec<bool>,
}

impl InitialCondition {
    pub fn empty(n_classes: usize) -> Self {
        InitialCondition {
            q0: vec![0; n_classes],
            residual_arrival: vec![0.0; n_classes],
            residual_service: vec![0.0; n_classes],
            e0: vec![false; n_classes],
        }
    }
}

/// Which allocation rule a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// The threshold policy built from [`PolicyTables`].
    Threshold,
    /// Comparison baseline: nominal rate `rho_j` to every nonempty queue, no
    /// thresholds. Feasible because `K rho = C`.
    Nominal,
}

/// Everything one replication needs. Validated at construction; immutable
/// afterwards so replications can share it across threads.
#[derive(Clone)]
pub struct SimConfig {
    pub spec: NetworkSpec,
    pub instance: TrafficInstance,
    pub tables: Arc<PolicyTables>,
    pub params: PolicyParams,
    /// Unscaled horizon (diffusion horizon times `r^2`).
    pub horizon: f64,
    pub seed: u64,
    pub replication: u64,
    pub init: InitialCondition,
    arrival_shapes: Vec<FittedDistribution>,
    service_shapes: Vec<FittedDistribution>,
    thr_low: f64,
    thr_high: f64,
    /// `x(z) = rho - vc(z) 1{z in M} - vb(z)` for every pattern.
    x_table: Vec<Vec<f64>>,
    /// `min_j min_{z: z_j = 1} (alpha^r_j - beta^r_j x_j(z))`; positive for
    /// `r` large enough, merely reported otherwise.
    pub delta_margin: f64,
}

impl SimConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: &NetworkSpec,
        instance: TrafficInstance,
        tables: Arc<PolicyTables>,
        params: PolicyParams,
        arrival_families: &[DistributionFamily],
        service_families: &[DistributionFamily],
        horizon: f64,
        seed: u64,
        replication: u64,
        init: InitialCondition,
    ) -> Result<Self, SimError> {
        let n = spec.n_classes();
        let cfg_err = |m: String| Err(SimError::Config(m));
        if tables.n_classes() != n {
            return cfg_err("policy tables class count does not match spec".into());
        }
        if !(params.c1 > 0.0 && params.c1 < params.c2) {
            return cfg_err(format!(
                "thresholds must satisfy 0 < c1 < c2, got c1 = {}, c2 = {}",
                params.c1, params.c2
            ));
        }
        if !(params.kappa > 0.0 && params.kappa < 0.25) {
            return cfg_err(format!("kappa must lie in (0, 1/4), got {}", params.kappa));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return cfg_err(format!("horizon must be finite and nonnegative, got {horizon}"));
        }
        let beta_min = spec.beta.iter().cloned().fold(f64::INFINITY, f64::min);
        let r_kappa = instance.r.powf(params.kappa);
        let thr_low = beta_min * params.c1 * r_kappa;
        let thr_high = beta_min * params.c2 * r_kappa;
        if (thr_high - thr_low) <= 1.0 {
            return cfg_err(format!(
                "threshold gap too small: (c2_tilde - c1_tilde) r^kappa = {} must exceed 1",
                thr_high - thr_low
            ));
        }
        let rho = spec.rho();
        let rho_star = spec.rho_star();
        for j in 0..n {
            if (instance.rho_r[j] - rho[j]).abs() >= rho_star / 4.0 {
                return cfg_err(format!(
                    "r = {} is below the heavy-traffic threshold: |rho^r - rho| = {} >= rho*/4 at class {j}",
                    instance.r,
                    (instance.rho_r[j] - rho[j]).abs()
                ));
            }
        }
        let beta_r_min = instance.beta_r.iter().cloned().fold(f64::INFINITY, f64::min);
        if beta_r_min < beta_min / 2.0 {
            return cfg_err(format!(
                "r = {} perturbs service rates too far: min beta^r = {beta_r_min} < min beta / 2",
                instance.r
            ));
        }
        if init.q0.len() != n
            || init.residual_arrival.len() != n
            || init.residual_service.len() != n
            || init.e0.len() != n
        {
            return cfg_err("initial condition length does not match class count".into());
        }
        for j in 0..n {
            if init.e0[j] && (init.q0[j] as f64) >= thr_high {
                return cfg_err(format!(
                    "initial excursion flag set for class {j} but q0 = {} is not below c2_tilde r^kappa = {thr_high}",
                    init.q0[j]
                ));
            }
            if init.residual_service[j] > 0.0 && init.q0[j] == 0 {
                return cfg_err(format!(
                    "class {j} has residual service work but an empty queue"
                ));
            }
            if init.residual_arrival[j] < 0.0 || init.residual_service[j] < 0.0 {
                return cfg_err(format!("negative residual for class {j}"));
            }
        }
        if arrival_families.len() != n || service_families.len() != n {
            return cfg_err("distribution family list length does not match class count".into());
        }
        let mut arrival_shapes = Vec::with_capacity(n);
        let mut service_shapes = Vec::with_capacity(n);
        for j in 0..n {
            arrival_shapes.push(
                arrival_families[j]
                    .fit(1.0 / spec.alpha[j], spec.sigma_u[j])
                    .map_err(|e| SimError::Config(format!("arrival family, class {j}: {e}")))?,
            );
            service_shapes.push(
                service_families[j]
                    .fit(1.0 / spec.beta[j], spec.sigma_v[j])
                    .map_err(|e| SimError::Config(format!("service family, class {j}: {e}")))?,
            );
        }

        // precompute x(z) and the service-slack margin of near-empty classes
        let size = 1usize << n;
        let mut x_table = Vec::with_capacity(size);
        let mut delta_margin = f64::INFINITY;
        for z in 0..size as u32 {
            let mut x = rho.clone();
            if let Some(vc) = tables.vc(z) {
                for j in 0..n {
                    x[j] -= vc[j];
                }
            }
            let vb = tables.vb(z);
            for j in 0..n {
                x[j] -= vb[j];
            }
            for (j, &xj) in x.iter().enumerate() {
                if xj < rho_star / 4.0 - 1e-12 {
                    return Err(SimError::Invariant(format!(
                        "x_{j}({z:#b}) = {xj} falls below rho*/4; policy tables are inconsistent"
                    )));
                }
                if (z >> j) & 1 == 1 {
                    delta_margin = delta_margin.min(instance.alpha_r[j] - instance.beta_r[j] * xj);
                }
            }
            x_table.push(x);
        }

        Ok(SimConfig {
            spec: spec.clone(),
            instance,
            tables,
            params,
            horizon,
            seed,
            replication,
            init,
            arrival_shapes,
            service_shapes,
            thr_low,
            thr_high,
            x_table,
            delta_margin,
        })
    }

    pub fn threshold_low(&self) -> f64 {
        self.thr_low
    }

    pub fn threshold_high(&self) -> f64 {
        self.thr_high
    }

    /// Near-empty pattern for a queue vector: bit `j` set iff
    /// `q_j < c2_tilde r^kappa`.
    pub fn zmask(&self, q: &[u64]) -> ZMask {
        q.iter()
            .enumerate()
            .fold(0, |m, (j, &qj)| if (qj as f64) < self.thr_high { m | (1 << j) } else { m })
    }

    /// Allocation rate vector for the threshold policy in state `(q, e)`.
    pub fn policy_rate(&self, q: &[u64], e: &[bool]) -> Vec<f64> {
        let x = &self.x_table[self.zmask(q) as usize];
        x.iter()
            .zip(e)
            .map(|(&xj, &ej)| if ej { 0.0 } else { xj })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Arrival,
    Departure,
    /// End of the simulated horizon.
    Horizon,
}

/// Marker for the event that closed a segment. `excursion_flip` carries the
/// new flag value when the event toggled the class's excursion state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub kind: EventKind,
    pub class: Option<usize>,
    pub excursion_flip: Option<bool>,
}

/// Maximal interval on which `(q, rate, excursion)` are all constant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub q: Vec<u64>,
    pub rate: Vec<f64>,
    pub excursion: Vec<bool>,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Collected run output: piecewise-constant segments plus event markers.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub r: f64,
    pub horizon: f64,
    pub init: InitialCondition,
    pub segments: Vec<Segment>,
    pub events: Vec<EventRecord>,
}

/// Aggregates available after any run, streaming or collected.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub n_events: u64,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    pub q_end: Vec<u64>,
    pub b_cum: Vec<f64>,
}

struct SimState {
    t: f64,
    q: Vec<u64>,
    head_residual: Vec<f64>,
    next_arrival: Vec<f64>,
    excursion: Vec<bool>,
    b_cum: Vec<f64>,
    arrivals: Vec<u64>,
    departures: Vec<u64>,
}

/// Single sequential run. Deterministic for a fixed `(seed, replication)`:
/// per-class arrival and service streams are derived independently of the
/// traffic parameter and policy, so runs at different `r` share randomness.
pub struct SimRun<'a> {
    cfg: &'a SimConfig,
    policy: PolicyKind,
    state: SimState,
    arrival_streams: Vec<Stream>,
    service_streams: Vec<Stream>,
    scratch: Segment,
    done: bool,
}

impl<'a> SimRun<'a> {
    pub fn new(cfg: &'a SimConfig, policy: PolicyKind) -> Self {
        let n = cfg.spec.n_classes();
        let mut arrival_streams: Vec<Stream> = (0..n)
            .map(|j| Stream::derive(cfg.seed, cfg.replication, StreamKind::Arrival(j)))
            .collect();
        let mut service_streams: Vec<Stream> = (0..n)
            .map(|j| Stream::derive(cfg.seed, cfg.replication, StreamKind::Service(j)))
            .collect();

        let q = cfg.init.q0.clone();
        let mut head_residual = vec![0.0; n];
        let mut next_arrival = vec![0.0; n];
        let mut excursion = cfg.init.e0.clone();
        for j in 0..n {
            next_arrival[j] = if cfg.init.residual_arrival[j] > 0.0 {
                cfg.init.residual_arrival[j]
            } else {
                arrival_streams[j].sample(&cfg.arrival_shapes[j], 1.0 / cfg.instance.alpha_r[j])
            };
            if q[j] > 0 {
                head_residual[j] = if cfg.init.residual_service[j] > 0.0 {
                    cfg.init.residual_service[j]
                } else {
                    service_streams[j].sample(&cfg.service_shapes[j], 1.0 / cfg.instance.beta_r[j])
                };
            }
            // an excursion starts immediately when the queue begins below
            // the low threshold
            if (q[j] as f64) < cfg.thr_low {
                excursion[j] = true;
            }
        }
        SimRun {
            cfg,
            policy,
            state: SimState {
                t: 0.0,
                q,
                head_residual,
                next_arrival,
                excursion,
                b_cum: vec![0.0; n],
                arrivals: vec![0; n],
                departures: vec![0; n],
            },
            arrival_streams,
            service_streams,
            scratch: Segment {
                t_start: 0.0,
                t_end: 0.0,
                q: vec![0; n],
                rate: vec![0.0; n],
                excursion: vec![false; n],
            },
            done: false,
        }
    }

    fn current_rate(&self) -> Vec<f64> {
        match self.policy {
            PolicyKind::Threshold => self.cfg.policy_rate(&self.state.q, &self.state.excursion),
            PolicyKind::Nominal => {
                let rho = self.cfg.spec.rho();
                self.state
                    .q
                    .iter()
                    .zip(rho)
                    .map(|(&qj, rj)| if qj > 0 { rj } else { 0.0 })
                    .collect()
            }
        }
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            n_events: self.state.arrivals.iter().sum::<u64>()
                + self.state.departures.iter().sum::<u64>(),
            arrivals: self.state.arrivals.clone(),
            departures: self.state.departures.clone(),
            q_end: self.state.q.clone(),
            b_cum: self.state.b_cum.clone(),
        }
    }

    /// Advances to the next event. Returns the completed segment and its
    /// closing event, or `None` once the horizon has been emitted.
    pub fn next_segment(&mut self) -> Result<Option<(&Segment, EventRecord)>, SimError> {
        if self.done {
            return Ok(None);
        }
        let n = self.cfg.spec.n_classes();
        let rate = self.current_rate();

        // feasibility: the policy may never over-allocate a resource
        let kb = self.cfg.spec.k.matvec(&rate);
        for (i, &used) in kb.iter().enumerate() {
            if used > self.cfg.spec.capacity[i] + 1e-12 {
                return Err(SimError::Invariant(format!(
                    "allocation exceeds capacity at resource {i}: {used} > {}",
                    self.cfg.spec.capacity[i]
                )));
            }
        }

        // next event: departures take priority at equal timestamps, then
        // arrivals, classes in ascending index
        let mut best_t = f64::INFINITY;
        let mut best_pri = u8::MAX;
        let mut best_class = usize::MAX;
        for j in 0..n {
            if self.state.q[j] > 0 && rate[j] > 0.0 {
                let completion = self.state.t + (self.state.head_residual[j].max(0.0)) / rate[j];
                if completion < best_t || (completion == best_t && (0u8, j) < (best_pri, best_class)) {
                    best_t = completion;
                    best_pri = 0;
                    best_class = j;
                }
            }
        }
        for j in 0..n {
            let ta = self.state.next_arrival[j];
            if ta < best_t || (ta == best_t && (1u8, j) < (best_pri, best_class)) {
                best_t = ta;
                best_pri = 1;
                best_class = j;
            }
        }

        let (event_t, kind, class) = if best_t > self.cfg.horizon {
            (self.cfg.horizon, EventKind::Horizon, None)
        } else {
            (
                best_t,
                if best_pri == 0 { EventKind::Departure } else { EventKind::Arrival },
                Some(best_class),
            )
        };

        // fill the segment from the pre-event state
        let seg = &mut self.scratch;
        seg.t_start = self.state.t;
        seg.t_end = event_t;
        seg.q.copy_from_slice(&self.state.q);
        seg.rate.copy_from_slice(&rate);
        seg.excursion.copy_from_slice(&self.state.excursion);

        // advance work
        let dt = (event_t - self.state.t).max(0.0);
        for j in 0..n {
            if rate[j] > 0.0 {
                self.state.b_cum[j] += rate[j] * dt;
                if self.state.q[j] > 0 {
                    self.state.head_residual[j] -= rate[j] * dt;
                }
            }
        }
        self.state.t = event_t;

        let mut flip = None;
        match kind {
            EventKind::Horizon => {
                self.done = true;
            }
            EventKind::Arrival => {
                let j = class.unwrap();
                self.state.q[j] += 1;
                self.state.arrivals[j] += 1;
                if self.state.q[j] == 1 {
                    self.state.head_residual[j] = self.service_streams[j]
                        .sample(&self.cfg.service_shapes[j], 1.0 / self.cfg.instance.beta_r[j]);
                }
                self.state.next_arrival[j] = self.state.t
                    + self.arrival_streams[j]
                        .sample(&self.cfg.arrival_shapes[j], 1.0 / self.cfg.instance.alpha_r[j]);
                flip = self.update_hysteresis(j);
            }
            EventKind::Departure => {
                let j = class.unwrap();
                self.state.q[j] = self.state.q[j].checked_sub(1).ok_or_else(|| {
                    SimError::Invariant(format!("departure from empty queue {j}"))
                })?;
                self.state.departures[j] += 1;
                self.state.head_residual[j] = if self.state.q[j] > 0 {
                    self.service_streams[j]
                        .sample(&self.cfg.service_shapes[j], 1.0 / self.cfg.instance.beta_r[j])
                } else {
                    0.0
                };
                flip = self.update_hysteresis(j);
            }
        }

        let record = EventRecord { t: event_t, kind, class, excursion_flip: flip };
        Ok(Some((&self.scratch, record)))
    }

    /// Applies the hysteresis rule after class `j` changed length; only used
    /// by the threshold policy.
    fn update_hysteresis(&mut self, j: usize) -> Option<bool> {
        if self.policy != PolicyKind::Threshold {
            return None;
        }
        let qj = self.state.q[j] as f64;
        if !self.state.excursion[j] && qj < self.cfg.thr_low {
            self.state.excursion[j] = true;
            return Some(true);
        }
        if self.state.excursion[j] && qj >= self.cfg.thr_high {
            self.state.excursion[j] = false;
            return Some(false);
        }
        None
    }
}

/// Runs to the horizon, feeding every segment to `sink`.
pub fn run_streaming<F>(cfg: &SimConfig, policy: PolicyKind, mut sink: F) -> Result<RunSummary, SimError>
where
    F: FnMut(&Segment, &EventRecord),
{
    let mut run = SimRun::new(cfg, policy);
    while let Some((seg, ev)) = run.next_segment()? {
        if seg.t_end > seg.t_start {
            sink(seg, &ev);
        }
    }
    Ok(run.summary())
}

/// Runs the threshold policy and collects the full trajectory.
pub fn run(cfg: &SimConfig) -> Result<Trajectory, SimError> {
    collect(cfg, PolicyKind::Threshold)
}

/// Runs the nominal baseline (rate `rho` to nonempty queues) for
/// comparisons.
pub fn run_baseline(cfg: &SimConfig) -> Result<Trajectory, SimError> {
    collect(cfg, PolicyKind::Nominal)
}

fn collect(cfg: &SimConfig, policy: PolicyKind) -> Result<Trajectory, SimError> {
    let mut segments = Vec::new();
    let mut events = Vec::new();
    let mut run = SimRun::new(cfg, policy);
    while let Some((seg, ev)) = run.next_segment()? {
        if seg.t_end > seg.t_start {
            segments.push(seg.clone());
        }
        events.push(ev);
    }
    Ok(Trajectory {
        r: cfg.instance.r,
        horizon: cfg.horizon,
        init: cfg.init.clone(),
        segments,
        events,
    })
}

impl Trajectory {
    /// CSV export with one row per segment; the trailing columns mark the
    /// event that closed the segment (`+flip` when it toggled an excursion
    /// flag).
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.init.q0.len();
        let mut header = String::from("t_start,t_end");
        for j in 1..=n {
            header.push_str(&format!(",q_{j}"));
        }
        for j in 1..=n {
            header.push_str(&format!(",b_{j}"));
        }
        for j in 1..=n {
            header.push_str(&format!(",e_{j}"));
        }
        header.push_str(",event_type,event_class");
        writeln!(out, "{header}")?;
        for (seg, ev) in self.segments.iter().zip(&self.events) {
            let mut row = format!("{},{}", seg.t_start, seg.t_end);
            for q in &seg.q {
                row.push_str(&format!(",{q}"));
            }
            for b in &seg.rate {
                row.push_str(&format!(",{b}"));
            }
            for e in &seg.excursion {
                row.push_str(&format!(",{}", u8::from(*e)));
            }
            let kind = match ev.kind {
                EventKind::Arrival => "arrival",
                EventKind::Departure => "departure",
                EventKind::Horizon => "horizon",
            };
            let flip = if ev.excursion_flip.is_some() { "+flip" } else { "" };
            let class = ev.class.map_or(String::new(), |c| (c + 1).to_string());
            row.push_str(&format!(",{kind}{flip},{class}"));
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}
