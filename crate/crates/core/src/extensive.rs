//! Monolithic LPs: every scenario stacked under one copy of the portfolio,
//! and the full-physics evaluation of a fixed portfolio.

use serde::{Deserialize, Serialize};

use crate::cycles::DirectedCycleBasis;
use crate::error::{Error, Result};
use crate::model::{Instance, Mode, Polytope};
use crate::solver::{solve_lp, LinearProgram, LpStatus, Sense, SolverSettings};
use crate::subproblem::{ContingencySet, OperatingCost, OperationsModel};

/// Stacked scenario LPs with the portfolio as shared columns.
#[derive(Clone, Debug)]
pub struct ExtensiveForm {
    pub lp: LinearProgram,
    /// Column of each portfolio component.
    pub x_vars: Vec<usize>,
}

/// Builds `min c^T x + sum_w weight_w * h_w(x)` over `polytope`, where
/// scenario `w` carries contingency rows for `contingencies[w]`.
pub fn extensive_form(
    model: &OperationsModel<'_>,
    polytope: &Polytope,
    contingencies: &[ContingencySet],
) -> Result<ExtensiveForm> {
    let inst = model.instance();
    let costs = inst.investment_costs();
    if polytope.dim() != costs.len() || contingencies.len() != inst.scenarios.len() {
        return Err(Error::Validation("extensive form dimensions do not match the instance".into()));
    }
    let mut lp = LinearProgram::new();
    let x_vars: Vec<usize> = (0..costs.len())
        .map(|k| lp.add_var(costs[k], polytope.lower[k], polytope.upper[k]))
        .collect();
    let remap = |row: &[(usize, f64)]| row.iter().map(|(k, a)| (x_vars[*k], *a)).collect();
    for (row, b) in &polytope.inequalities {
        lp.add_row(remap(row), Sense::Le, *b);
    }
    for (row, b) in &polytope.equalities {
        lp.add_row(remap(row), Sense::Eq, *b);
    }

    let zero = vec![0.0; costs.len()];
    for (w, sc) in inst.scenarios.iter().enumerate() {
        let sub = model.build(&zero, w, &contingencies[w])?;
        let base = lp.n_vars();
        for k in 0..sub.lp.n_vars() {
            lp.add_var(sc.weight * sub.lp.objective[k], sub.lp.lower[k], sub.lp.upper[k]);
        }
        let mut extra: Vec<Vec<(usize, f64)>> = vec![Vec::new(); sub.lp.n_rows()];
        for l in &sub.links {
            // a y (sense) base + coef x  <=>  a y - coef x (sense) base
            extra[l.row].push((x_vars[l.component], -l.coef));
        }
        for (r, row) in sub.lp.rows.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = row.coeffs.iter().map(|(k, a)| (base + k, *a)).collect();
            coeffs.extend(extra[r].iter().copied());
            lp.add_row(coeffs, row.sense, row.rhs);
        }
    }
    Ok(ExtensiveForm { lp, x_vars })
}

/// Optimal value and portfolio of the extensive form over the complete
/// contingency sets (ground truth for the decomposed solve).
pub fn solve_extensive(model: &OperationsModel<'_>, polytope: &Polytope) -> Result<(f64, Vec<f64>)> {
    let sets: Vec<ContingencySet> = (0..model.instance().scenarios.len())
        .map(|w| model.full_contingencies(w))
        .collect();
    let ef = extensive_form(model, polytope, &sets)?;
    let sol = solve_lp(&ef.lp, model.settings());
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("extensive form is {:?}: {}", sol.status, sol.message)));
    }
    let x = ef.x_vars.iter().map(|&k| sol.primal[k]).collect();
    Ok((sol.objective, x))
}

/// Total-cost evaluation of a portfolio under full physics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub total: f64,
    pub investment: f64,
    /// Weighted generation cost.
    pub operating: f64,
    pub shed_penalty: f64,
    pub violation_penalty: f64,
    pub shed_gwh: f64,
    pub violation_gwh: f64,
    pub scenarios: Vec<OperatingCost>,
    /// Active contingencies per scenario once screening found no more.
    pub binding_contingencies: Vec<usize>,
}

/// Evaluates `x` with impedances at `x_hat = x_br`, every contingency
/// enforced through constraint generation until the screen comes back empty.
pub fn evaluate_portfolio(
    instance: &Instance,
    cycles: &DirectedCycleBasis,
    x: &[f64],
    settings: SolverSettings,
) -> Result<Evaluation> {
    let layout = instance.layout();
    if x.len() != layout.len() {
        return Err(Error::Validation(format!(
            "portfolio has {} entries, expected {}",
            x.len(),
            layout.len()
        )));
    }
    let x_hat = &x[layout.branch_range()];
    let model = OperationsModel::new(instance, cycles, x_hat, Mode::Scdc, settings)?;
    let investment: f64 = instance
        .investment_costs()
        .iter()
        .zip(x)
        .map(|(c, v)| c * v)
        .sum();
    let mut ev = Evaluation {
        total: investment,
        investment,
        operating: 0.0,
        shed_penalty: 0.0,
        violation_penalty: 0.0,
        shed_gwh: 0.0,
        violation_gwh: 0.0,
        scenarios: Vec::new(),
        binding_contingencies: Vec::new(),
    };
    let rounds = 4 * instance.hours().max(1) * instance.network.n_branches().pow(2) + 10;
    for (w, sc) in instance.scenarios.iter().enumerate() {
        let (res, active) = model.solve_to_convergence(x, w, ContingencySet::new(), rounds)?;
        let c = res.costs;
        ev.operating += sc.weight * c.generation;
        ev.shed_penalty += sc.weight * c.shed;
        ev.violation_penalty += sc.weight * c.violation;
        ev.shed_gwh += sc.weight * c.shed_mwh / 1e3;
        ev.violation_gwh += sc.weight * c.violation_mwh / 1e3;
        ev.total += sc.weight * res.value;
        ev.scenarios.push(c);
        ev.binding_contingencies.push(active.len());
    }
    Ok(ev)
}
