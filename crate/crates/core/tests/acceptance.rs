//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured quantities (`cargo test --test acceptance -- --nocapture`).
//!
//! Heavyweight criteria serialize on a shared lock so their wall-clock
//! budgets are measured without contention from sibling tests.

use rsnsim::config::{example_config_toml, ExperimentConfig};
use rsnsim::cost::CostOracle;
use rsnsim::estimators::idleness_threshold;
use rsnsim::experiment::{persist, run_experiment, ExperimentOutput};
use rsnsim::fixtures::{random_valid, single_class, two_link};
use rsnsim::kernel::{compute_basis, synthesize, zmask_to_vec};
use rsnsim::linalg::{norm2, Mat};
use rsnsim::model::{DistributionFamily, NetworkSpec, TrafficInstance};
use rsnsim::rbm::{skorokhod, skorokhod_1d, RbmConfig, RbmWalker, SkorokhodInput};
use rsnsim::rng::SplitMix64;
use rsnsim::simengine::{
    run_streaming, InitialCondition, PolicyKind, PolicyParams, SimConfig,
};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

static HEAVY: Mutex<()> = Mutex::new(());

fn heavy_lock() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn ten_random_networks() -> Vec<NetworkSpec> {
    (0..10).map(|seed| random_valid(seed + 100, 4, 8)).collect()
}

#[test]
fn acceptance_01_gap_identity() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xC1);
    let mut worst: f64 = 0.0;
    for (i, spec) in ten_random_networks().iter().enumerate() {
        let basis = compute_basis(spec);
        let oracle = CostOracle::limiting(spec, &basis);
        let lambda = oracle.lambda().abs();
        for _ in 0..50 {
            let q: Vec<f64> = (0..spec.n_classes()).map(|_| 6.0 * rng.uniform01()).collect();
            let lhs = oracle.cost_gap(&q);
            let rhs = lambda * oracle.dtilde(&q);
            let err = (lhs - rhs).abs() / (1.0 + norm2(&q));
            worst = worst.max(err);
            assert!(
                (lhs - rhs).abs() <= 1e-7 * (1.0 + norm2(&q)),
                "network {i}: identity residual {} vs bound",
                (lhs - rhs).abs()
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "runtime {elapsed:.1}s exceeds 30s");
    println!(
        "criterion 1 PASS: gap identity on 10 networks x 50 states, worst scaled residual {worst:.2e}, {elapsed:.1}s"
    );
}

#[test]
fn acceptance_02_policy_table_invariants() {
    let start = Instant::now();
    let mut patterns = 0usize;
    for (i, spec) in ten_random_networks().iter().enumerate() {
        let tables = synthesize(spec).expect("synthesis must succeed on valid networks");
        let violations = tables.verify(spec);
        assert!(violations.is_empty(), "network {i}: {violations:?}");
        patterns += 1 << spec.n_classes();
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "runtime {elapsed:.1}s exceeds 60s");
    println!(
        "criterion 2 PASS: policy table invariants over {patterns} patterns on 10 networks, {elapsed:.1}s"
    );
}

#[test]
fn acceptance_03_two_link_golden_fixtures() {
    let spec = two_link([1.0, 1.0, 1.0]);
    let tables = synthesize(&spec).unwrap();
    let lambda = tables.basis.lambda();
    let expected = -1.0 / 3f64.sqrt();
    assert!(
        (lambda - expected).abs() <= 1e-12,
        "lambda {lambda} vs {expected}"
    );
    let m: Vec<Vec<u8>> = tables.m_set().iter().map(|&z| zmask_to_vec(z, 3)).collect();
    assert_eq!(m, vec![vec![0, 0, 0], vec![0, 0, 1]], "M mismatch: {m:?}");

    let trivial = two_link([1.0, 1.0, 2.0]);
    let tables = synthesize(&trivial).unwrap();
    assert_eq!(tables.basis.lambda(), 0.0);
    assert!(tables.basis.is_trivial());
    assert!(tables.m_set().is_empty());
    println!(
        "criterion 3 PASS: lambda = {lambda:.15} (= -1/sqrt(3)), M = {{(0,0,0),(0,0,1)}}; trivial variant has lambda = 0 and empty M"
    );
}

#[test]
fn acceptance_04_skorokhod_map() {
    let mut rng = SplitMix64::new(0xC4);
    let mut paths = Vec::new();
    for _ in 0..100 {
        let len = 40 + (rng.uniform01() * 80.0) as usize;
        let mut f = vec![2.0 * rng.uniform01() - 1.0];
        for _ in 1..len {
            f.push(f.last().unwrap() + 0.8 * (rng.uniform01() - 0.5));
        }
        paths.push(f);
    }

    // componentwise map matches the explicit running-max formula computed by
    // an independent quadratic scan
    for f in &paths {
        let input = SkorokhodInput {
            times: (0..f.len()).map(|k| k as f64).collect(),
            values: f.iter().map(|&x| vec![x]).collect(),
            piecewise_linear: false,
        };
        let (phi, _) = skorokhod(&input).unwrap();
        for k in 0..f.len() {
            let sup: f64 = f[..=k].iter().map(|&x| (-x).max(0.0)).fold(0.0, f64::max);
            assert!((phi[k][0] - (f[k] + sup)).abs() <= 1e-12);
        }
    }

    // minimality sandwich: 100 random (h2, h3) families per path
    for f in &paths {
        let (phi1, _) = skorokhod_1d(f);
        for _ in 0..100 {
            let mut h2 = rng.uniform01() * (-f[0]).max(0.0);
            let mut h3 = (-f[0]).max(0.0) + 0.3 * rng.uniform01();
            for (k, &fk) in f.iter().enumerate() {
                if k > 0 {
                    h3 = (h3 + 0.2 * rng.uniform01()).max((-fk).max(0.0));
                }
                let phi2 = fk + h2;
                if phi2 < 0.0 {
                    h2 += rng.uniform01() * (-phi2);
                }
                assert!(fk + h2 <= phi1[k] + 1e-12, "subordinate regulator exceeded the map");
                assert!(fk + h3 >= phi1[k] - 1e-12, "dominating path dipped below the map");
            }
        }
    }

    // Lipschitz ratio on 100 random pairs
    let mut worst_ratio: f64 = 0.0;
    for pair in paths.chunks(2).take(100) {
        if pair.len() < 2 {
            continue;
        }
        let n = pair[0].len().min(pair[1].len());
        let (p1, _) = skorokhod_1d(&pair[0][..n]);
        let (p2, _) = skorokhod_1d(&pair[1][..n]);
        let sup_f: f64 = (0..n).map(|k| (pair[0][k] - pair[1][k]).abs()).fold(0.0, f64::max);
        let sup_p: f64 = (0..n).map(|k| (p1[k] - p2[k]).abs()).fold(0.0, f64::max);
        if sup_f > 0.0 {
            worst_ratio = worst_ratio.max(sup_p / sup_f);
        }
        assert!(sup_p <= 2.0 * sup_f + 1e-9);
    }
    println!(
        "criterion 4 PASS: running-max formula exact, sandwich held for 100x100 regulator families, Lipschitz ratio max {worst_ratio:.3} <= 2"
    );
}

#[test]
fn acceptance_05_rbm_stationary_mean() {
    let _guard = heavy_lock();
    let start = Instant::now();
    let cfg = RbmConfig {
        w0: vec![0.0],
        theta: vec![-1.0],
        sigma: Mat::from_rows(vec![vec![1.0]]),
        dt: 1e-3,
        horizon: 5000.0,
        seed: 2024,
    };
    let n = cfg.n_steps();
    let skip = n / 5; // 20% burn-in
    let reps = 20;
    let mut means = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut walker = RbmWalker::new(&cfg, rep as u64).unwrap();
        let mut acc = 0.0;
        for k in 0..n {
            let w = walker.step()[0];
            if k >= skip {
                acc += w;
            }
        }
        means.push(acc / (n - skip) as f64);
    }
    let mean = means.iter().sum::<f64>() / reps as f64;
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        (mean - 0.5).abs() <= 0.025,
        "stationary mean {mean} outside 5% of 0.5"
    );
    assert!(elapsed < 120.0, "runtime {elapsed:.1}s exceeds 2 min");
    println!(
        "criterion 5 PASS: 1-d RBM stationary mean {mean:.4} within 5% of 0.5 ({reps} reps, {elapsed:.1}s)"
    );
}

struct SafetyTally {
    events: u64,
    qualifying_segments: u64,
    excursion_segments: u64,
}

/// Runs one config through the safety sink, asserting every per-segment
/// clause, and returns the tallies.
fn safety_run(spec: &NetworkSpec, r: f64, horizon: f64, seed: u64) -> SafetyTally {
    let tables = std::sync::Arc::new(synthesize(spec).unwrap());
    let n = spec.n_classes();
    let cfg = SimConfig::new(
        spec,
        TrafficInstance::new(spec, r).unwrap(),
        tables,
        PolicyParams { c1: 1.0, c2: 2.0, kappa: 0.2 },
        &vec![DistributionFamily::Exponential; n],
        &vec![DistributionFamily::Exponential; n],
        horizon,
        seed,
        0,
        InitialCondition::empty(n),
    )
    .unwrap();
    let km_r = cfg.spec.k.scale_cols(&cfg.instance.m_r_diag);
    let w_threshold = idleness_threshold(&cfg) * cfg.instance.r; // unscaled workload level
    let mut qualifying = 0u64;
    let mut excursions = 0u64;
    let summary = run_streaming(&cfg, PolicyKind::Threshold, |seg, _| {
        // queue nonnegativity is structural (unsigned); assert it anyway
        assert!(seg.q.iter().all(|&q| (q as i64) >= 0));
        let kb = spec.k.matvec(&seg.rate);
        for i in 0..spec.n_resources() {
            assert!(
                kb[i] <= spec.capacity[i] + 1e-12,
                "capacity exceeded at resource {i}: {} > {}",
                kb[i],
                spec.capacity[i]
            );
        }
        for j in 0..n {
            if seg.excursion[j] {
                assert_eq!(seg.rate[j], 0.0, "halted class {j} received capacity");
            }
        }
        let qf: Vec<f64> = seg.q.iter().map(|&x| x as f64).collect();
        let w = km_r.matvec(&qf);
        for i in 0..spec.n_resources() {
            let blocked = (0..n).any(|j| spec.k.get(i, j) == 1.0 && seg.excursion[j]);
            if w[i] >= w_threshold && !blocked {
                qualifying += 1;
                assert!(
                    (kb[i] - spec.capacity[i]).abs() <= 1e-12,
                    "full-capacity equality failed at resource {i}: {} vs {}",
                    kb[i],
                    spec.capacity[i]
                );
            }
        }
        if seg.excursion.iter().any(|&e| e) {
            excursions += 1;
        }
    })
    .expect("safety run must not violate engine invariants");
    for j in 0..n {
        let expected = cfg.init.q0[j] as i64 + summary.arrivals[j] as i64
            - summary.departures[j] as i64;
        assert_eq!(expected, summary.q_end[j] as i64, "ledger imbalance for class {j}");
    }
    SafetyTally {
        events: summary.n_events,
        qualifying_segments: qualifying,
        excursion_segments: excursions,
    }
}

#[test]
fn acceptance_06_simulation_safety() {
    let _guard = heavy_lock();
    let mut events = 0u64;
    let mut qualifying = 0u64;
    let mut excursions = 0u64;
    let two = two_link([1.0, 1.0, 1.0]);
    let trivial = two_link([1.0, 1.0, 2.0]);
    let single = single_class();
    let random = random_valid(207, 3, 5);
    for seed in 0..3u64 {
        for (spec, r, horizon) in [
            (&two, 4.0, 15_000.0),
            (&two, 8.0, 30_000.0),
            (&trivial, 8.0, 20_000.0),
            (&single, 8.0, 30_000.0),
            (&random, 8.0, 20_000.0),
        ] {
            let tally = safety_run(spec, r, horizon, 1000 + seed);
            events += tally.events;
            qualifying += tally.qualifying_segments;
            excursions += tally.excursion_segments;
        }
    }
    assert!(events >= 1_000_000, "need at least 1e6 events, saw {events}");
    assert!(qualifying > 0, "full-capacity clause never exercised");
    assert!(excursions > 0, "excursion clause never exercised");
    println!(
        "criterion 6 PASS: {events} events safe (capacity, halt, nonnegativity, ledger); full-capacity equality held on all {qualifying} qualifying segments"
    );
}

struct TrendRun {
    output: ExperimentOutput,
    dir: tempfile::TempDir,
    elapsed: f64,
}

static TREND: OnceLock<TrendRun> = OnceLock::new();

fn trend_config() -> ExperimentConfig {
    let mut config = ExperimentConfig::from_str_toml(example_config_toml()).unwrap();
    config.experiment.jobs = std::thread::available_parallelism().map_or(2, |n| n.get());
    // the ergodic HGI reference needs a long path but not the full default
    config.rbm.horizon = 2000.0;
    config.rbm.replications = 8;
    config
}

fn trend_run() -> &'static TrendRun {
    TREND.get_or_init(|| {
        let _guard = heavy_lock();
        let config = trend_config();
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let output = run_experiment(&config, Some(dir.path())).unwrap();
        persist(dir.path(), &config, &output).unwrap();
        TrendRun { output, dir, elapsed: start.elapsed().as_secs_f64() }
    })
}

#[test]
fn acceptance_07_heavy_traffic_trend() {
    let run = trend_run();
    let aggs = &run.output.table.aggregates;
    assert_eq!(aggs.len(), 4, "expected one aggregate per r in {{4,8,16,32}}");
    let hgi = run.output.table.hgi.as_ref().unwrap();
    let first = &aggs[0];
    let last = &aggs[aggs.len() - 1];
    let gap_first = (first.j_mean - hgi.value).abs();
    let gap_last = (last.j_mean - hgi.value).abs();
    println!(
        "criterion 7 data: HGI_E = {:.3} +/- {:.3}; J_E by r: {:?}; |J-HGI| {:.3} -> {:.3}; mean inst. gap {:.4} -> {:.4} ({:.0}% of r=4); {:.0}s",
        hgi.value,
        hgi.std_error,
        aggs.iter().map(|a| (a.r, (a.j_mean * 1000.0).round() / 1000.0)).collect::<Vec<_>>(),
        gap_first,
        gap_last,
        first.mean_inst_gap,
        last.mean_inst_gap,
        100.0 * last.mean_inst_gap / first.mean_inst_gap,
        run.elapsed
    );
    assert!(
        run.elapsed < 900.0,
        "trend experiment took {:.0}s, budget is 15 min",
        run.elapsed
    );
    assert!(
        last.mean_inst_gap < 0.5 * first.mean_inst_gap,
        "instantaneous gap did not halve: r=4 {} vs r=32 {}",
        first.mean_inst_gap,
        last.mean_inst_gap
    );
    // Known to fail at these constants: with thresholds c1 = 1, c2 = 2 and
    // kappa = 0.2 the hysteresis band is only r^0.2 (about 2) jobs wide, so
    // service halts recur every few time units at every r in the grid
    // (measured ~17% of time per local class, and ~19% even with a 10x
    // stronger repulsion vector). The capacity slack available under the
    // standing assumption |rho^r - rho| < rho*/4 is at most ~2*1.33/r per
    // resource, so for r >= 8 the halt losses exceed the slack, the
    // workload process is supercritical, and J_E^{r,200} grows like
    // r * deficit * T/2 instead of approaching the HGI value. The asymptotic
    // trend needs r^kappa >> sigma^2/(beta vb) ~ 100, i.e. astronomically
    // large r for this network. The assertion is kept as stated rather than
    // weakened.
    assert!(
        gap_last < gap_first,
        "|J - HGI| did not shrink: r=4 gap {gap_first:.3}, r=32 gap {gap_last:.3}; \
         see the comment above this assertion for the structural analysis"
    );
    println!("criterion 7 PASS");
}

#[test]
fn acceptance_08_idleness_trend() {
    let run = trend_run();
    let aggs = &run.output.table.aggregates;
    let first = &aggs[0];
    let last = &aggs[aggs.len() - 1];
    for i in 0..first.idle_fraction.len() {
        assert!(
            last.idle_fraction[i] < first.idle_fraction[i],
            "resource {i}: idleness fraction did not shrink ({} -> {})",
            first.idle_fraction[i],
            last.idle_fraction[i]
        );
    }
    println!(
        "criterion 8 PASS: idleness-while-loaded fraction per resource fell {:?} -> {:?}",
        first.idle_fraction, last.idle_fraction
    );
}

#[test]
fn acceptance_09_deterministic_outputs() {
    // first run comes from the shared trend experiment; rerun the identical
    // config and compare bytes
    let run = trend_run();
    let _guard = heavy_lock();
    let config = trend_config();
    let dir2 = tempfile::tempdir().unwrap();
    let output2 = run_experiment(&config, Some(dir2.path())).unwrap();
    persist(dir2.path(), &config, &output2).unwrap();
    for name in ["results.csv", "aggregates.csv", "estimates.csv"] {
        let a = std::fs::read(run.dir.path().join(name)).unwrap();
        let b = std::fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    println!(
        "criterion 9 PASS: results.csv, aggregates.csv, estimates.csv byte-identical across two runs"
    );
}
