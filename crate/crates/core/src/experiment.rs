//! Experiment orchestration: policy synthesis, replication fan-out across
//! the `r` grid, HGI reference estimation, aggregation, and persistence.
//!
//! Replications are independent and run on a bounded worker pool; results
//! are merged in `(r, replication)` key order no matter which worker
//! finishes first, so rerunning a config with the same seed reproduces every
//! CSV byte for byte. Wall-clock timings live only in the JSON summary.

use crate::config::{ExperimentConfig, Mode};
use crate::cost::CostOracle;
use crate::estimators::{CostEstimate, MetricsAccumulator, ReplicationMetrics};
use crate::kernel::{self, PolicyTables};
use crate::model::{NetworkSpec, TrafficInstance, ValidationReport};
use crate::rbm;
use crate::simengine::{
    run_streaming, InitialCondition, PolicyKind, SimConfig, SimError, Trajectory,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

pub const RESULTS_CSV_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_JSON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("network failed validation:\n{}", .0.render())]
    Validation(ValidationReport),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Kernel(#[from] kernel::KernelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Rbm(#[from] rbm::RbmError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ExperimentError {
    /// Process exit code contract: 2 for validation failures, 3 for runtime
    /// invariant violations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Validation(_) => 2,
            ExperimentError::Sim(SimError::Invariant(_)) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// One replication's metrics row.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub r: f64,
    pub replication: u64,
    /// `J_E` or `J_D` depending on the experiment mode.
    pub j_cost: f64,
    /// Signed difference to the HGI reference, when one was computed.
    pub gap_to_hgi: Option<f64>,
    pub mean_inst_gap: f64,
    pub idle_fraction: Vec<f64>,
    pub truncation_bound: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Aggregate {
    pub r: f64,
    pub n: usize,
    pub j_mean: f64,
    pub j_std_error: f64,
    pub abs_gap_to_hgi: Option<f64>,
    pub mean_inst_gap: f64,
    pub idle_fraction: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendVerdict {
    /// `|J(r_max) - HGI| < |J(r_min) - HGI|`.
    pub j_gap_shrinks: bool,
    /// Mean instantaneous gap at `r_max` is below half its `r_min` value.
    pub inst_gap_halves: bool,
    /// Idleness fraction at `r_max` is below its `r_min` value for every
    /// resource.
    pub idleness_shrinks: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultTable {
    pub metric: &'static str,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
    pub hgi: Option<CostEstimate>,
    pub verdict: Option<TrendVerdict>,
}

/// Everything `run_experiment` produces besides files on disk.
pub struct ExperimentOutput {
    pub mode: Mode,
    pub table: ResultTable,
    pub tables: Arc<PolicyTables>,
    pub spec: NetworkSpec,
    pub trajectory: Option<Trajectory>,
    pub per_r_runtime: Vec<(f64, f64)>,
    pub total_runtime: f64,
}

fn sim_config_for(
    config: &ExperimentConfig,
    spec: &NetworkSpec,
    tables: &Arc<PolicyTables>,
    r: f64,
    replication: u64,
) -> Result<SimConfig, ExperimentError> {
    let instance = TrafficInstance::new(spec, r)?;
    let horizon = config.horizons.ergodic_t * r * r;
    Ok(SimConfig::new(
        spec,
        instance,
        tables.clone(),
        config.policy_params(),
        &config.distributions.arrival,
        &config.distributions.service,
        horizon,
        config.experiment.seed,
        replication,
        InitialCondition::empty(spec.n_classes()),
    )?)
}

fn run_replication(
    config: &ExperimentConfig,
    spec: &NetworkSpec,
    tables: &Arc<PolicyTables>,
    r: f64,
    replication: u64,
) -> Result<ReplicationMetrics, ExperimentError> {
    let cfg = sim_config_for(config, spec, tables, r, replication)?;
    let varsigma = match config.experiment.mode {
        Mode::ConvergeDiscounted => config.horizons.discount_rate,
        _ => None,
    };
    let mut acc = MetricsAccumulator::new(&cfg, varsigma);
    run_streaming(&cfg, PolicyKind::Threshold, |seg, _| acc.add(seg))?;
    Ok(acc.finish())
}

/// Estimates the HGI reference for the configured mode. The workload starts
/// from zero, matching the simulator's empty initial condition.
fn hgi_reference(config: &ExperimentConfig, spec: &NetworkSpec, basis: &kernel::KernelBasis) -> Result<CostEstimate, ExperimentError> {
    let oracle = CostOracle::limiting(spec, basis);
    let rcfg = rbm::rbm_config_for(
        spec,
        vec![0.0; spec.n_resources()],
        config.rbm.dt,
        config.rbm.horizon,
        config.experiment.seed ^ 0x5B21_C0DE,
    );
    let est = match config.experiment.mode {
        Mode::ConvergeDiscounted => {
            let varsigma = config.horizons.discount_rate.expect("checked by config");
            rbm::hgi_discounted(&rcfg, varsigma, &oracle, config.rbm.replications)?
        }
        _ => rbm::hgi_ergodic(&rcfg, &oracle, config.rbm.replications, config.rbm.burn_in)?,
    };
    Ok(est)
}

/// Runs the configured experiment. When `out_dir` is given, `results.csv`
/// rows are flushed incrementally in key order, so an interrupted run leaves
/// the completed prefix on disk.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<ExperimentOutput, ExperimentError> {
    let start = Instant::now();
    let spec = config.network_spec()?;
    let report = spec.validate();
    if !report.is_valid() {
        return Err(ExperimentError::Validation(report));
    }
    let tables = Arc::new(kernel::synthesize(&spec)?);
    let mode = config.experiment.mode;
    let metric = match mode {
        Mode::ConvergeDiscounted => "j_d",
        _ => "j_e",
    };

    let hgi = match mode {
        Mode::ConvergeErgodic | Mode::ConvergeDiscounted | Mode::HgiOnly => {
            Some(hgi_reference(config, &spec, &tables.basis)?)
        }
        _ => None,
    };

    let mut rows: Vec<ResultRow> = Vec::new();
    let mut per_r_runtime: Vec<(f64, f64)> = Vec::new();
    let mut trajectory = None;

    let mut csv: Option<std::fs::File> = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join("results.csv");
            let mut f = std::fs::File::create(&path).map_err(io_err(&path))?;
            writeln!(f, "{}", results_csv_header(spec.n_resources())).map_err(io_err(&path))?;
            Some(f)
        }
        None => None,
    };

    match mode {
        Mode::Validate | Mode::HgiOnly => {}
        Mode::SingleRun => {
            let r = config.experiment.r_grid[0];
            let r_start = Instant::now();
            let cfg = sim_config_for(config, &spec, &tables, r, 0)?;
            trajectory = Some(crate::simengine::run(&cfg)?);
            let metrics = run_replication(config, &spec, &tables, r, 0)?;
            let row = make_row(config, r, 0, &metrics, hgi.as_ref());
            if let Some(f) = csv.as_mut() {
                write_row(f, &row).map_err(io_err(Path::new("results.csv")))?;
            }
            rows.push(row);
            per_r_runtime.push((r, r_start.elapsed().as_secs_f64()));
        }
        Mode::ConvergeErgodic | Mode::ConvergeDiscounted => {
            let reps = config.experiment.replications as u64;
            let r_grid = &config.experiment.r_grid;
            let tasks: Vec<(usize, u64)> = r_grid
                .iter()
                .enumerate()
                .flat_map(|(ri, _)| (0..reps).map(move |rep| (ri, rep)))
                .collect();
            let jobs = config.experiment.jobs.min(tasks.len()).max(1);
            let next = AtomicUsize::new(0);
            let (tx, rx) = mpsc::channel::<(usize, Result<ReplicationMetrics, ExperimentError>)>();
            let mut r_elapsed = vec![0.0f64; r_grid.len()];

            let results: Result<Vec<ReplicationMetrics>, ExperimentError> =
                std::thread::scope(|scope| {
                    for _ in 0..jobs {
                        let tx = tx.clone();
                        let tasks = &tasks;
                        let next = &next;
                        let spec = &spec;
                        let tables = &tables;
                        scope.spawn(move || loop {
                            let idx = next.fetch_add(1, Ordering::SeqCst);
                            if idx >= tasks.len() {
                                break;
                            }
                            let (ri, rep) = tasks[idx];
                            let out =
                                run_replication(config, spec, tables, r_grid[ri], rep);
                            if tx.send((idx, out)).is_err() {
                                break;
                            }
                        });
                    }
                    drop(tx);

                    let mut buffer: BTreeMap<usize, ReplicationMetrics> = BTreeMap::new();
                    let mut flushed = 0usize;
                    let mut ordered: Vec<ReplicationMetrics> = Vec::with_capacity(tasks.len());
                    let mut first_error = None;
                    for _ in 0..tasks.len() {
                        let Ok((idx, result)) = rx.recv() else { break };
                        match result {
                            Ok(m) => {
                                buffer.insert(idx, m);
                            }
                            Err(e) => {
                                first_error.get_or_insert(e);
                                continue;
                            }
                        }
                        // flush the contiguous prefix in key order
                        while let Some(m) = buffer.remove(&flushed) {
                            let (ri, rep) = tasks[flushed];
                            let row = make_row(config, r_grid[ri], rep, &m, hgi.as_ref());
                            if let Some(f) = csv.as_mut() {
                                if let Err(e) =
                                    write_row(f, &row).map_err(io_err(Path::new("results.csv")))
                                {
                                    first_error.get_or_insert(e);
                                }
                            }
                            rows.push(row);
                            ordered.push(m);
                            flushed += 1;
                        }
                    }
                    match first_error {
                        Some(e) => Err(e),
                        None => Ok(ordered),
                    }
                });
            let results = results?;
            debug_assert_eq!(results.len(), tasks.len());
            // wall time per r is bookkept from the serial share of tasks
            let total = start.elapsed().as_secs_f64();
            for (ri, r) in r_grid.iter().enumerate() {
                // proportional attribution by event volume ~ r^2
                let weight: f64 = r * r / r_grid.iter().map(|x| x * x).sum::<f64>();
                r_elapsed[ri] = total * weight;
                per_r_runtime.push((*r, r_elapsed[ri]));
            }
        }
    }

    if let Some(f) = csv.as_mut() {
        f.flush().ok();
    }

    let aggregates = aggregate(&rows, hgi.as_ref(), spec.n_resources());
    let verdict = match mode {
        Mode::ConvergeErgodic | Mode::ConvergeDiscounted if aggregates.len() >= 2 => {
            Some(trend_verdict(&aggregates))
        }
        _ => None,
    };

    Ok(ExperimentOutput {
        mode,
        table: ResultTable {
            metric,
            rows,
            aggregates,
            hgi,
            verdict,
        },
        tables,
        spec,
        trajectory,
        per_r_runtime,
        total_runtime: start.elapsed().as_secs_f64(),
    })
}

fn make_row(
    config: &ExperimentConfig,
    r: f64,
    replication: u64,
    m: &ReplicationMetrics,
    hgi: Option<&CostEstimate>,
) -> ResultRow {
    let j_cost = match config.experiment.mode {
        Mode::ConvergeDiscounted => m.discounted_cost.expect("discounted mode sets varsigma"),
        _ => m.ergodic_cost,
    };
    ResultRow {
        r,
        replication,
        j_cost,
        gap_to_hgi: hgi.map(|h| j_cost - h.value),
        mean_inst_gap: m.mean_gap,
        idle_fraction: m.idle_fraction.clone(),
        truncation_bound: m.discounted_truncation_bound,
    }
}

fn aggregate(rows: &[ResultRow], hgi: Option<&CostEstimate>, n_resources: usize) -> Vec<Aggregate> {
    let mut by_r: BTreeMap<u64, Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        by_r.entry(row.r.to_bits()).or_default().push(row);
    }
    by_r
        .into_values()
        .map(|group| {
            let n = group.len();
            let r = group[0].r;
            let j_mean = group.iter().map(|g| g.j_cost).sum::<f64>() / n as f64;
            let j_std_error = if n > 1 {
                let var = group.iter().map(|g| (g.j_cost - j_mean).powi(2)).sum::<f64>()
                    / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            let mean_inst_gap = group.iter().map(|g| g.mean_inst_gap).sum::<f64>() / n as f64;
            let idle_fraction: Vec<f64> = (0..n_resources)
                .map(|i| group.iter().map(|g| g.idle_fraction[i]).sum::<f64>() / n as f64)
                .collect();
            Aggregate {
                r,
                n,
                j_mean,
                j_std_error,
                abs_gap_to_hgi: hgi.map(|h| (j_mean - h.value).abs()),
                mean_inst_gap,
                idle_fraction,
            }
        })
        .collect()
}

fn trend_verdict(aggregates: &[Aggregate]) -> TrendVerdict {
    let first = &aggregates[0];
    let last = &aggregates[aggregates.len() - 1];
    let j_gap_shrinks = match (first.abs_gap_to_hgi, last.abs_gap_to_hgi) {
        (Some(a), Some(b)) => b < a,
        _ => false,
    };
    let inst_gap_halves = last.mean_inst_gap < 0.5 * first.mean_inst_gap;
    let idleness_shrinks = first
        .idle_fraction
        .iter()
        .zip(&last.idle_fraction)
        .all(|(a, b)| b < a);
    TrendVerdict {
        j_gap_shrinks,
        inst_gap_halves,
        idleness_shrinks,
        pass: j_gap_shrinks && inst_gap_halves && idleness_shrinks,
    }
}

fn results_csv_header(n_resources: usize) -> String {
    let mut h = String::from("r,replication,j_cost,gap_to_hgi,mean_inst_gap");
    for i in 1..=n_resources {
        h.push_str(&format!(",idle_frac_{i}"));
    }
    h.push_str(",truncation_bound");
    h
}

fn write_row(out: &mut impl Write, row: &ResultRow) -> std::io::Result<()> {
    let mut s = format!("{},{}", row.r, row.replication);
    s.push_str(&format!(",{}", row.j_cost));
    match row.gap_to_hgi {
        Some(g) => s.push_str(&format!(",{g}")),
        None => s.push(','),
    }
    s.push_str(&format!(",{}", row.mean_inst_gap));
    for v in &row.idle_fraction {
        s.push_str(&format!(",{v}"));
    }
    match row.truncation_bound {
        Some(b) => s.push_str(&format!(",{b}")),
        None => s.push(','),
    }
    writeln!(out, "{s}")
}

/// Writes `aggregates.csv`, the long-format `estimates.csv`, the policy
/// tables, the JSON summary, and (for single runs) the trajectory CSV.
/// Returns the list of files written, including `results.csv` which
/// `run_experiment` streams.
pub fn persist(
    out_dir: &Path,
    config: &ExperimentConfig,
    output: &ExperimentOutput,
) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = vec![out_dir.join("results.csv")];

    let agg_path = out_dir.join("aggregates.csv");
    {
        let mut f = std::fs::File::create(&agg_path).map_err(io_err(&agg_path))?;
        let n_res = output.spec.n_resources();
        let mut header = String::from("r,n,j_mean,j_std_error,abs_gap_to_hgi,mean_inst_gap");
        for i in 1..=n_res {
            header.push_str(&format!(",idle_frac_{i}"));
        }
        writeln!(f, "{header}").map_err(io_err(&agg_path))?;
        for a in &output.table.aggregates {
            let mut s = format!("{},{},{},{}", a.r, a.n, a.j_mean, a.j_std_error);
            match a.abs_gap_to_hgi {
                Some(g) => s.push_str(&format!(",{g}")),
                None => s.push(','),
            }
            s.push_str(&format!(",{}", a.mean_inst_gap));
            for v in &a.idle_fraction {
                s.push_str(&format!(",{v}"));
            }
            writeln!(f, "{s}").map_err(io_err(&agg_path))?;
        }
        written.push(agg_path);
    }

    let est_path = out_dir.join("estimates.csv");
    {
        let mut f = std::fs::File::create(&est_path).map_err(io_err(&est_path))?;
        writeln!(f, "r,replication,metric,value").map_err(io_err(&est_path))?;
        for row in &output.table.rows {
            writeln!(f, "{},{},{},{}", row.r, row.replication, output.table.metric, row.j_cost)
                .map_err(io_err(&est_path))?;
            writeln!(f, "{},{},mean_inst_gap,{}", row.r, row.replication, row.mean_inst_gap)
                .map_err(io_err(&est_path))?;
            for (i, v) in row.idle_fraction.iter().enumerate() {
                writeln!(f, "{},{},idle_frac_{},{}", row.r, row.replication, i + 1, v)
                    .map_err(io_err(&est_path))?;
            }
        }
        written.push(est_path);
    }

    let policy_path = out_dir.join("policy.toml");
    {
        let file = output.tables.to_file();
        let text = toml::to_string(&file)
            .unwrap_or_else(|e| panic!("policy tables must serialize: {e}"));
        std::fs::write(&policy_path, text).map_err(io_err(&policy_path))?;
        written.push(policy_path);
    }

    if let Some(traj) = &output.trajectory {
        let traj_path = out_dir.join("trajectory.csv");
        let f = std::fs::File::create(&traj_path).map_err(io_err(&traj_path))?;
        let mut buf = std::io::BufWriter::new(f);
        traj.write_csv(&mut buf).map_err(io_err(&traj_path))?;
        written.push(traj_path);
    }

    #[derive(Serialize)]
    struct Summary<'a> {
        summary_schema_version: u32,
        results_csv_schema_version: u32,
        timestamp_unix: u64,
        mode: String,
        metric: &'static str,
        lambda: f64,
        theta: Vec<f64>,
        m_set: Vec<Vec<u8>>,
        hgi: &'a Option<CostEstimate>,
        aggregates: &'a [Aggregate],
        verdict: &'a Option<TrendVerdict>,
        per_r_runtime_seconds: Vec<(f64, f64)>,
        total_runtime_seconds: f64,
        config: &'a ExperimentConfig,
    }
    let summary_path = out_dir.join("summary.json");
    let summary = Summary {
        summary_schema_version: SUMMARY_JSON_SCHEMA_VERSION,
        results_csv_schema_version: RESULTS_CSV_SCHEMA_VERSION,
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        mode: output.mode.to_string(),
        metric: output.table.metric,
        lambda: output.tables.basis.lambda(),
        theta: output.spec.theta(),
        m_set: output
            .tables
            .m_set()
            .iter()
            .map(|&z| kernel::zmask_to_vec(z, output.spec.n_classes()))
            .collect(),
        hgi: &output.table.hgi,
        aggregates: &output.table.aggregates,
        verdict: &output.table.verdict,
        per_r_runtime_seconds: output.per_r_runtime.clone(),
        total_runtime_seconds: output.total_runtime,
        config,
    };
    let text = serde_json::to_string_pretty(&summary)
        .unwrap_or_else(|e| panic!("summary must serialize: {e}"));
    std::fs::write(&summary_path, text).map_err(io_err(&summary_path))?;
    written.push(summary_path);

    Ok(written)
}
