//! Command-line front end.
//!
//! Exit codes: 0 success, 2 network validation failure, 3 runtime invariant
//! violation during simulation, 1 anything else.

use clap::Parser;
use rsnsim::config::{ExperimentConfig, Mode};
use rsnsim::experiment::{persist, run_experiment};
use rsnsim::kernel::{self, zmask_to_vec};
use rsnsim::plots::emit_plots;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "rsnsim",
    about = "Threshold-policy simulation of resource-sharing networks with an RBM cost benchmark",
    version
)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the mode from the config file.
    #[arg(long)]
    mode: Option<Mode>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err((msg, code)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, (String, u8)> {
    let mut config = ExperimentConfig::from_file(&cli.config).map_err(|e| (e.to_string(), 1))?;
    if let Some(mode) = cli.mode {
        config.experiment.mode = mode;
    }
    if let Some(seed) = cli.seed {
        config.experiment.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        config.experiment.jobs = jobs;
    }
    if let Some(out) = cli.out {
        config.experiment.output_dir = out;
    }

    if config.experiment.mode == Mode::Validate {
        return validate(&config);
    }

    let out_dir = config.experiment.output_dir.clone();
    let output = run_experiment(&config, Some(&out_dir))
        .map_err(|e| (e.to_string(), e.exit_code() as u8))?;
    let files = persist(&out_dir, &config, &output).map_err(|e| (e.to_string(), 1))?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    if matches!(config.experiment.mode, Mode::ConvergeErgodic | Mode::ConvergeDiscounted) {
        let plot_files = emit_plots(&output.table, &out_dir).map_err(|e| (e.to_string(), 1))?;
        for f in &plot_files {
            println!("wrote {}", f.display());
        }
        if let Some(v) = &output.table.verdict {
            println!(
                "trend verdict: {} (J-gap shrinks: {}, inst. gap halves: {}, idleness shrinks: {})",
                if v.pass { "PASS" } else { "FAIL" },
                v.j_gap_shrinks,
                v.inst_gap_halves,
                v.idleness_shrinks
            );
        }
    }
    if let Some(hgi) = &output.table.hgi {
        println!("HGI reference: {} (std error {})", hgi.value, hgi.std_error);
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(config: &ExperimentConfig) -> Result<ExitCode, (String, u8)> {
    let spec = config.network_spec().map_err(|e| (e.to_string(), 1))?;
    let report = spec.validate();
    if !report.is_valid() {
        eprintln!("{}", report.render());
        return Ok(ExitCode::from(2));
    }
    println!("network valid: {} resources, {} classes", spec.n_resources(), spec.n_classes());
    println!("theta = {:?}", report.theta);
    let tables = kernel::synthesize(&spec).map_err(|e| (e.to_string(), 1))?;
    println!("lambda = {}", tables.basis.lambda());
    if tables.basis.is_trivial() {
        println!("trivial case: every queue vector is cost-minimal for its workload; M is empty");
    } else {
        let patterns: Vec<String> = tables
            .m_set()
            .iter()
            .map(|&z| {
                let bits: Vec<String> =
                    zmask_to_vec(z, spec.n_classes()).iter().map(u8::to_string).collect();
                format!("({})", bits.join(","))
            })
            .collect();
        println!("M = {{{}}}", patterns.join(", "));
    }
    let bad = tables.verify(&spec);
    if !bad.is_empty() {
        eprintln!("policy table invariant failures:");
        for b in &bad {
            eprintln!("  {b}");
        }
        return Ok(ExitCode::from(2));
    }
    println!("policy tables verified: {} patterns in M", tables.m_set().len());
    Ok(ExitCode::SUCCESS)
}
