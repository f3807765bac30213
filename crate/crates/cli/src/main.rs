use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphlc::harness::experiment::{sample_config_graph, write_outputs};
use graphlc::harness::{compare_outputs, run_experiment, ExperimentConfig, Method, RunStatus};
use graphlc::kernel::build_kernel;
use graphlc::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_GATE: u8 = 3;
const EXIT_SOLVER: u8 = 4;

/// GP learning curves on random graphs: finite-graph simulation and cavity
/// predictions.
#[derive(Debug, Parser)]
#[command(name = "graphlc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated methods for `run` (simulate, cavity_global,
    /// cavity_local, histogram).
    #[arg(long, global = true, value_delimiter = ',')]
    method: Vec<Method>,
    /// Worker threads; 0 picks the number of CPUs. Output does not depend
    /// on this value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes one sampled graph as an edge list (`graph.edges`).
    SampleGraph {
        /// Also write the configured kernel matrix (`kernel.txt`).
        #[arg(long)]
        kernel: bool,
    },
    /// Exact GP learning curves averaged over sampled graphs.
    Simulate,
    /// Cavity prediction with the globally normalized kernel.
    PredictGlobal,
    /// Cavity prediction with the locally normalized kernel.
    PredictLocal,
    /// Population statistics of the global solver.
    Histogram,
    /// Every configured method, or those given by `--method`.
    Run,
    /// Relative deviation of curve file `a` from curve file `b`.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Gate on the maximal relative deviation.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Restrict to one noise level.
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long)]
        nu_min: Option<f64>,
        #[arg(long)]
        nu_max: Option<f64>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli.config.as_deref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run_methods(mut config: ExperimentConfig, methods: Vec<Method>) -> Result<u8, Error> {
    if !methods.is_empty() {
        config.methods = methods;
    }
    let results = run_experiment(&config)?;
    let manifest = write_outputs(&results, &config.output_dir)?;
    for file in &manifest.files {
        println!("wrote {}", config.output_dir.join(file).display());
    }
    if let Some(cal) = results.outputs.iter().find_map(|o| o.calibration.as_ref()) {
        println!("kappa = {}", cal.kappa);
    }
    for f in &manifest.failures {
        eprintln!("failed: {} at sigma2={} nu={}: {}", f.method, f.sigma2, f.nu, f.message);
    }
    println!("status: {:?}", manifest.status);
    Ok(match manifest.status {
        RunStatus::Ok => 0,
        RunStatus::NotConverged | RunStatus::Failed => EXIT_SOLVER,
    })
}

fn sample_graph(config: &ExperimentConfig, with_kernel: bool) -> Result<u8, Error> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    let graph = sample_config_graph(config)?;
    let path = dir.join("graph.edges");
    graph.save(&path)?;
    println!("wrote {} ({} vertices, {} edges)", path.display(), graph.vertex_count(), graph.edge_count());
    if with_kernel {
        let kernel = build_kernel::<f64>(&graph, &config.kernel)?;
        let path = dir.join("kernel.txt");
        kernel.save_text(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn compare(a: &Path, b: &Path, tolerance: f64, sigma2: Option<f64>, nu: (Option<f64>, Option<f64>)) -> Result<u8, Error> {
    let mut report = compare_outputs(a, b)?;
    if let Some(s) = sigma2 {
        report = report.for_sigma2(s);
    }
    report = report.for_nu_range(nu.0.unwrap_or(f64::NEG_INFINITY), nu.1.unwrap_or(f64::INFINITY));
    if report.is_empty() {
        return Err(Error::Config("no keys left to compare after filtering".into()));
    }
    report.write_report(std::io::stdout().lock()).map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
    if report.passes(tolerance) {
        println!("gate passed: max rel dev {:.4} <= {tolerance}", report.max_relative());
        Ok(0)
    } else {
        println!("gate FAILED: max rel dev {:.4} > {tolerance}", report.max_relative());
        Ok(EXIT_GATE)
    }
}

fn dispatch(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::Compare { a, b, tolerance, sigma2, nu_min, nu_max } => {
            compare(a, b, *tolerance, *sigma2, (*nu_min, *nu_max))
        }
        Command::SampleGraph { kernel } => sample_graph(&load_config(cli)?, *kernel),
        Command::Simulate => run_methods(load_config(cli)?, vec![Method::Simulate]),
        Command::PredictGlobal => run_methods(load_config(cli)?, vec![Method::CavityGlobal]),
        Command::PredictLocal => run_methods(load_config(cli)?, vec![Method::CavityLocal]),
        Command::Histogram => run_methods(load_config(cli)?, vec![Method::Histogram]),
        Command::Run => run_methods(load_config(cli)?, cli.method.clone()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: {err}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
