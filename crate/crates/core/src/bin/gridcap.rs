use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gridcap::config::RunConfig;
use gridcap::cycles::minimal_basis;
use gridcap::generate::{generate, InstanceSpec};
use gridcap::io::{self, SolutionFile};
use gridcap::model::{InvestmentPortfolio, Mode};
use gridcap::network::non_islanding_set;
use gridcap::report::EvaluationReport;
use gridcap::{pipeline, Error, Result};

/// Generation, storage and transmission expansion planning under n-1
/// transmission security.
#[derive(Parser)]
#[command(name = "gridcap", version)]
struct Cli {
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize an instance with the bundle method.
    Solve(SolveArgs),
    /// Total cost of a portfolio under full physics.
    Evaluate(EvaluateArgs),
    /// Make branch capacities consistent with the impedances they imply.
    Corr(CorrArgs),
    /// Minimal cycle basis of a network.
    Mcb(McbArgs),
    /// Write a random instance directory.
    GenInstance(GenArgs),
    /// Load and check an instance without solving.
    Validate { instance: PathBuf },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Couple storage energy to power with this duration in hours.
    #[arg(long)]
    battery_duration: Option<f64>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    instance: PathBuf,
    /// A solution file from `solve`, or a bare portfolio.
    portfolio: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Write the evaluation report here as JSON.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrArgs {
    instance: PathBuf,
    /// Solution file written by `solve`.
    solution: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output directory for `corr.json`, `residuals.csv` and the corrected
    /// solution.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct McbArgs {
    /// Network file or instance directory.
    network: PathBuf,
    /// Write the basis report here instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 6)]
    buses: usize,
    #[arg(long)]
    branches: Option<usize>,
    #[arg(long, default_value_t = 1)]
    scenarios: usize,
    #[arg(long, default_value_t = 6)]
    hours: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Serialize)]
struct BasisReport {
    cycles: usize,
    total_length: usize,
    longest: usize,
    non_islanding_branches: Vec<usize>,
    edge_lists: Vec<Vec<usize>>,
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum PortfolioInput {
    Solution(SolutionFile),
    Bare(InvestmentPortfolio),
}

fn solve(args: SolveArgs) -> Result<i32> {
    let mut cfg = args.common.load()?;
    cfg.mode = args.mode.unwrap_or(cfg.mode);
    cfg.epsilon = args.epsilon.unwrap_or(cfg.epsilon);
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.max_iters = args.max_iters.unwrap_or(cfg.max_iters);
    cfg.threads = args.threads.unwrap_or(cfg.threads);
    cfg.battery_duration = args.battery_duration.or(cfg.battery_duration);
    let inst = io::load_instance(&args.instance)?;
    let run = pipeline::solve(&inst, &cfg)?;
    run.report.emit(&run.outcome.trajectory, &args.out)?;
    io::write_json(&run.solution, &args.out.join("solution.json"))?;
    print!("{}", run.report.summary());
    println!("wrote {}", args.out.display());
    Ok(if run.outcome.converged { 0 } else { 4 })
}

fn evaluate(args: EvaluateArgs) -> Result<i32> {
    let cfg = args.common.load()?;
    let inst = io::load_instance(&args.instance)?;
    let portfolio = match io::read_json::<PortfolioInput>(&args.portfolio)? {
        PortfolioInput::Solution(s) => s.portfolio,
        PortfolioInput::Bare(p) => p,
    };
    let ev = pipeline::evaluate(&inst, &portfolio, &cfg)?;
    let report = EvaluationReport::new(&inst, &portfolio.to_flat(), &ev)?;
    print!("{}", report.summary());
    if let Some(out) = args.out {
        io::write_json(&report, &out)?;
    }
    Ok(0)
}

fn corr(args: CorrArgs) -> Result<i32> {
    let mut cfg = args.common.load()?;
    cfg.corr.tol = args.tol.unwrap_or(cfg.corr.tol);
    cfg.corr.max_iters = args.max_iters.unwrap_or(cfg.corr.max_iters);
    let inst = io::load_instance(&args.instance)?;
    let solution: SolutionFile = io::read_json(&args.solution)?;
    let out = pipeline::correct(&inst, &solution, &cfg)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_json(&out, &args.out.join("corr.json"))?;
    let mut csv = String::from("iteration,residual\n");
    for (k, r) in out.residuals.iter().enumerate() {
        csv.push_str(&format!("{},{:e}\n", k + 1, r));
    }
    std::fs::write(args.out.join("residuals.csv"), csv)?;
    let mut corrected = solution.clone();
    corrected.portfolio.branch = out.x_hat.clone();
    io::write_json(&corrected, &args.out.join("corrected.json"))?;

    println!(
        "{} after {} evaluations, final residual {:.3e}",
        if out.converged { "converged" } else { "not converged" },
        out.residuals.len(),
        out.residuals.last().copied().unwrap_or(0.0)
    );
    println!("{:>6} {:>12} {:>12}", "branch", "bund MW", "corrected MW");
    for (i, (a, b)) in solution.portfolio.branch.iter().zip(&out.x_hat).enumerate() {
        println!("{i:>6} {a:>12.4} {b:>12.4}");
    }
    Ok(0)
}

fn mcb(args: McbArgs) -> Result<i32> {
    let (net, _) = io::load_network(&io::network_path(&args.network))?;
    let (basis, _) = minimal_basis(&net, &Default::default())?;
    let report = BasisReport {
        cycles: basis.len(),
        total_length: basis.total_length(),
        longest: basis.longest(),
        non_islanding_branches: non_islanding_set(&basis),
        edge_lists: basis.edge_lists(),
    };
    match args.out {
        Some(p) => io::write_json(&report, &p)?,
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Validation(e.to_string()))?),
    }
    Ok(0)
}

fn gen_instance(args: GenArgs) -> Result<i32> {
    let spec = InstanceSpec {
        buses: args.buses,
        branches: args.branches,
        scenarios: args.scenarios,
        hours: args.hours,
        seed: args.seed,
    };
    let inst = generate(&spec)?;
    io::save_instance(&inst, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(0)
}

fn validate(dir: &Path) -> Result<i32> {
    let inst = io::load_instance(dir)?;
    let net = &inst.network;
    println!(
        "{}: {} buses, {} branches, {} hvdc, {} generators, {} storage, {} loads",
        dir.display(),
        net.n_buses(),
        net.n_branches(),
        net.hvdc.len(),
        net.generators.len(),
        net.storage.len(),
        net.loads.len()
    );
    println!(
        "cycle space dimension {}, {} scenarios, {} hours",
        net.cycle_space_dim(),
        inst.scenarios.len(),
        inst.hours()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Corr(a) => corr(a),
        Command::Mcb(a) => mcb(a),
        Command::GenInstance(a) => gen_instance(a),
        Command::Validate { instance } => validate(&instance),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
