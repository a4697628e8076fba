use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use bzap::bench::{
    self, format_snr, run_bound_check, run_fig1, run_fig2, Algorithm, ExperimentConfig, Instance,
};
use bzap::block::{read_vector, write_vector, BlockStructure, BlockSupport};
use bzap::projection::{read_matrix, SensingSystem, DEFAULT_RANK_TOL};
use bzap::solvers::{bomp_solve, bzap_solve, l21_solve, oracle_solve, zap_solve, SolverConfig, SolverTrace};

#[derive(Parser)]
#[command(name = "bzap", version, about = "Block-sparse recovery by zero-point attracting projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noiseless exact-recovery rate versus block sparsity (fig1.csv)
    Fig1(ExperimentArgs),
    /// Mean-square deviation versus SNR (fig2.csv)
    Fig2(ExperimentArgs),
    /// Check the local stability bound on noisy BZAP solves (bound.csv)
    BoundCheck(ExperimentArgs),
    /// Recover one signal from matrix and measurement files
    Solve(SolveArgs),
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Initial step length
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Step shrink factor on a cost increase
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    /// Maximum number of step reductions
    #[arg(long, default_value_t = 4)]
    c1: usize,
    /// Maximum number of iterations
    #[arg(long, default_value_t = 1200)]
    c2: usize,
    /// Discard steps that raise the cost instead of keeping them
    #[arg(long)]
    rollback: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            kappa0: self.kappa,
            alpha: self.alpha,
            eta: self.eta,
            c1: self.c1,
            c2: self.c2,
            rollback_on_increase: self.rollback,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 40)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long = "block-size", default_value_t = 4)]
    block_size: usize,
    /// Single sparsity level (overrides --k-min/--k-max)
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "k-min")]
    k_min: Option<usize>,
    #[arg(long = "k-max")]
    k_max: Option<usize>,
    /// SNR in dB; repeatable, `inf` for noiseless
    #[arg(long = "snr")]
    snr: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 2011)]
    seed: u64,
    /// Comma-separated subset of bzap,zap,bomp,l21,oracle
    #[arg(long, value_delimiter = ',')]
    algorithms: Vec<Algorithm>,
    /// Output directory for CSV files
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Use the original trial counts (1000 for fig1, 100000 for fig2)
    #[arg(long = "paper-scale")]
    paper_scale: bool,
    /// Also write the BZAP iteration trace of the first instance to trace.csv
    #[arg(long)]
    trace: bool,
    /// Draw one matrix and reuse it for every trial
    #[arg(long = "fix-matrix")]
    fix_matrix: bool,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long = "recovery-tol", default_value_t = bench::DEFAULT_RECOVERY_TOL)]
    recovery_tol: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy)]
enum Experiment {
    Fig1,
    Fig2,
    BoundCheck,
}

impl ExperimentArgs {
    fn config(&self, kind: Experiment) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match kind {
            Experiment::Fig1 => ExperimentConfig::fig1(),
            Experiment::Fig2 => ExperimentConfig::fig2(),
            Experiment::BoundCheck => ExperimentConfig::bound_check(),
        };
        cfg.m = self.m;
        cfg.n = self.n;
        cfg.block_len = self.block_size;
        if let Some(k) = self.k {
            cfg.k_values = vec![k];
        } else if self.k_min.is_some() || self.k_max.is_some() {
            let lo = self.k_min.unwrap_or(1);
            let hi = self.k_max.unwrap_or(lo);
            if lo > hi {
                bail!("--k-min {lo} exceeds --k-max {hi}");
            }
            cfg.k_values = (lo..=hi).collect();
        }
        if !self.snr.is_empty() {
            cfg.snr_db = self.snr.clone();
        }
        if self.paper_scale {
            cfg.trials = match kind {
                Experiment::Fig1 => bench::PAPER_FIG1_TRIALS,
                Experiment::Fig2 => bench::PAPER_FIG2_TRIALS,
                Experiment::BoundCheck => cfg.trials,
            };
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        cfg.base_seed = self.seed;
        if !self.algorithms.is_empty() {
            cfg.algorithms = self.algorithms.clone();
        }
        cfg.solver = self.solver.config();
        cfg.recovery_tol = self.recovery_tol;
        cfg.fix_matrix = self.fix_matrix;
        cfg.threads = self.threads;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Matrix file: `m n` header, then m rows of n values
    #[arg(long)]
    matrix: PathBuf,
    /// Measurement vector file: length, then one value per line
    #[arg(long)]
    measurement: PathBuf,
    #[arg(long = "block-size", default_value_t = 4)]
    block_size: usize,
    #[arg(long, default_value = "bzap")]
    algorithm: Algorithm,
    /// Block sparsity for bomp
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated 1-based block indices for oracle
    #[arg(long, value_delimiter = ',')]
    support: Vec<usize>,
    /// Write the estimate here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-iteration trace CSV here (iterative solvers only)
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn experiment(args: &ExperimentArgs, kind: Experiment) -> anyhow::Result<()> {
    let cfg = args.config(kind)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    match kind {
        Experiment::Fig1 => {
            let report = run_fig1(&cfg)?;
            let path = args.out.join("fig1.csv");
            write_file(&path, &report.fig1_csv())?;
            for p in &report.recovery {
                println!("{:<6} K={:<3} rate={:.3} ({}/{})", p.algorithm, p.k, p.rate(), p.successes, p.trials);
            }
            println!("wrote {}", path.display());
        }
        Experiment::Fig2 => {
            let report = run_fig2(&cfg)?;
            let path = args.out.join("fig2.csv");
            write_file(&path, &report.fig2_csv())?;
            for p in &report.msd {
                println!("{:<14} snr={:<5} msd={:.4e} ({:.2} dB)", p.label(), format_snr(p.snr_db), p.msd, p.msd_db());
            }
            println!("wrote {}", path.display());
        }
        Experiment::BoundCheck => {
            let report = run_bound_check(&cfg)?;
            let path = args.out.join("bound.csv");
            write_file(&path, &report.to_csv())?;
            let ratio = report.rows.iter().find(|r| !r.failed).map_or(f64::NAN, |r| r.leading_ratio);
            println!(
                "trials={} in_ball={} violations={} scalar/block leading coefficient={ratio}",
                report.rows.len(),
                report.in_ball(),
                report.violations()
            );
            println!("wrote {}", path.display());
        }
    }
    if args.trace {
        let k = cfg.k_values[0];
        let snr = match kind {
            Experiment::Fig1 => f64::INFINITY,
            _ => cfg.snr_db[0],
        };
        let inst = Instance::generate(&cfg, 0, k, snr)?;
        let solver = SolverConfig { record_trace: true, ..cfg.solver };
        let (_, trace) = bzap_solve(&inst.system, inst.structure(), &solver)?;
        let path = args.out.join("trace.csv");
        write_file(&path, &trace.to_csv())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn solve(args: &SolveArgs) -> anyhow::Result<()> {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()));
    let a = read_matrix(&read(&args.matrix)?)?;
    let y = read_vector(&read(&args.measurement)?)?;
    let structure = BlockStructure::from_len(a.ncols(), args.block_size)?;
    let sys = SensingSystem::build(a, y, DEFAULT_RANK_TOL)?;
    let solver = SolverConfig {
        record_trace: args.trace.is_some(),
        ..args.solver.config()
    };

    let mut trace: Option<SolverTrace> = None;
    let estimate = match args.algorithm {
        Algorithm::Bzap => {
            let (x, t) = bzap_solve(&sys, structure, &solver)?;
            trace = Some(t);
            x
        }
        Algorithm::Zap => {
            let (x, t) = zap_solve(&sys, &solver)?;
            trace = Some(t);
            x
        }
        Algorithm::L21 => {
            let (x, t) = l21_solve(&sys, structure, &solver)?;
            trace = Some(t);
            x
        }
        Algorithm::Bomp => {
            let k = args.k.context("bomp needs --k")?;
            bomp_solve(&sys, structure, k)?
        }
        Algorithm::Oracle => {
            if args.support.is_empty() {
                bail!("oracle needs --support");
            }
            oracle_solve(&sys, &BlockSupport::new(args.support.iter().copied(), structure)?)?
        }
    };

    let text = write_vector(estimate.values());
    match &args.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &args.trace {
        let t = trace.with_context(|| format!("{} has no iteration trace", args.algorithm))?;
        write_file(path, &t.to_csv())?;
        eprintln!(
            "iterations={} reductions={} stop={:?} cost={:.6e}",
            t.iterations, t.step_reductions, t.stop_reason, t.final_cost
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fig1(args) => experiment(args, Experiment::Fig1),
        Command::Fig2(args) => experiment(args, Experiment::Fig2),
        Command::BoundCheck(args) => experiment(args, Experiment::BoundCheck),
        Command::Solve(args) => solve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
