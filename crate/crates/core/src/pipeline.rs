//! End-to-end stages shared by the command-line tool and the tests.

use std::time::Instant;

use crate::bundle::{run_bund, BundleOutcome};
use crate::config::RunConfig;
use crate::correction::{corr_fixed_point, CorrOutcome, FixedOperations};
use crate::cycles::{minimal_basis, CycleBasis, DirectedCycleBasis};
use crate::error::{Error, Result};
use crate::extensive::{evaluate_portfolio, Evaluation};
use crate::io::SolutionFile;
use crate::model::{Instance, InvestmentPortfolio};
use crate::network::non_islanding_set;
use crate::report::{RunReport, Timings};
use crate::subproblem::OperationsModel;

pub struct SolveRun {
    pub outcome: BundleOutcome,
    pub report: RunReport,
    pub solution: SolutionFile,
    pub basis: CycleBasis,
    pub directed: DirectedCycleBasis,
}

/// Solves the linearized expansion problem with impedances frozen at the
/// base network (`x_hat = 0`).
pub fn solve(inst: &Instance, cfg: &RunConfig) -> Result<SolveRun> {
    cfg.validate()?;
    let start = Instant::now();
    let (basis, directed) = minimal_basis(&inst.network, &cfg.solver)?;
    let x_hat = vec![0.0; inst.network.n_branches()];
    let model = OperationsModel::new(inst, &directed, &x_hat, cfg.mode, cfg.solver)?;
    let polytope = inst.polytope(cfg.battery_duration);
    let setup_s = start.elapsed().as_secs_f64();
    let outcome = run_bund(&model, &polytope, &cfg.bundle_params())?;
    let timings = Timings {
        setup_s,
        oracle_s: outcome.oracle_seconds,
        master_s: outcome.master_seconds,
        total_s: start.elapsed().as_secs_f64(),
    };
    let report = RunReport::from_bundle(inst, cfg.mode, &outcome, timings)?;
    let injections = outcome
        .decisions
        .iter()
        .zip(&inst.scenarios)
        .map(|(d, sc)| d.net_injections(&inst.network, sc))
        .collect();
    let solution = SolutionFile {
        mode: cfg.mode,
        portfolio: InvestmentPortfolio::from_flat(&inst.layout(), &outcome.x)?,
        lower: outcome.lower,
        upper: outcome.upper,
        converged: outcome.converged,
        injections,
    };
    Ok(SolveRun {
        outcome,
        report,
        solution,
        basis,
        directed,
    })
}

/// Reconciles branch capacities with the impedances they imply, keeping
/// the non-transmission part of `solution` fixed.
pub fn correct(inst: &Instance, solution: &SolutionFile, cfg: &RunConfig) -> Result<CorrOutcome> {
    if solution.injections.len() != inst.scenarios.len() {
        return Err(Error::Validation(format!(
            "solution has {} scenarios, instance has {}",
            solution.injections.len(),
            inst.scenarios.len()
        )));
    }
    if solution.portfolio.layout() != inst.layout() {
        return Err(Error::Validation("solution portfolio does not match the instance".into()));
    }
    let (basis, _) = minimal_basis(&inst.network, &cfg.solver)?;
    let ops = FixedOperations {
        injections: solution.injections.clone(),
        weights: inst.scenarios.iter().map(|s| s.weight).collect(),
    };
    corr_fixed_point(
        &inst.network,
        &inst.params,
        &non_islanding_set(&basis),
        &ops,
        &solution.portfolio.branch,
        &cfg.corr,
    )
}

/// Full-physics evaluation of a portfolio.
pub fn evaluate(inst: &Instance, portfolio: &InvestmentPortfolio, cfg: &RunConfig) -> Result<Evaluation> {
    if portfolio.layout() != inst.layout() {
        return Err(Error::Validation("portfolio does not match the instance".into()));
    }
    let (_, directed) = minimal_basis(&inst.network, &cfg.solver)?;
    evaluate_portfolio(inst, &directed, &portfolio.to_flat(), cfg.solver)
}
