//! Boundary to the linear and mixed-integer engines.
//!
//! LPs are solved with the Clarabel interior-point solver. Integer programs
//! go through a depth-first branch-and-bound that uses Clarabel for node
//! relaxations and activity-based bound propagation at every node.
//!
//! Dual values follow the shadow-price convention: `duals[i]` is the rate of
//! change of the optimal objective with respect to the right-hand side of
//! row `i`. For a minimization, `>=` rows have nonnegative duals and `<=` rows
//! nonpositive ones.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub name: Option<String>,
}

/// `min c^T x + offset` over bounded variables and sparse rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    pub var_names: Vec<Option<String>>,
    pub rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.integer.push(false);
        self.var_names.push(None);
        self.objective.len() - 1
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        let k = self.add_var(cost, lower, upper);
        self.var_names[k] = Some(name.into());
        k
    }

    pub fn add_integer_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        let k = self.add_var(cost, lower, upper);
        self.integer[k] = true;
        k
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Constraint {
            coeffs,
            sense,
            rhs,
            name: None,
        });
        self.rows.len() - 1
    }

    pub fn add_named_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let r = self.add_row(coeffs, sense, rhs);
        self.rows[r].name = Some(name.into());
        r
    }

    pub fn row_by_name(&self, name: &str) -> Option<usize> {
        self.rows.iter().position(|r| r.name.as_deref() == Some(name))
    }

    pub fn var_by_name(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|n| n.as_deref() == Some(name))
    }

    pub fn has_integers(&self) -> bool {
        self.integer.iter().any(|i| *i)
    }

    /// Objective value of a candidate point.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest bound or row violation of a candidate point.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[k] - v).max(v - self.upper[k]);
        }
        for row in &self.rows {
            let act: f64 = row.coeffs.iter().map(|(k, a)| a * x[*k]).sum();
            let viol = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    fn validate(&self) -> Result<(), String> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n || self.integer.len() != n {
            return Err("variable arrays have inconsistent lengths".into());
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.coeffs.iter().any(|(k, a)| *k >= n || !a.is_finite()) || !row.rhs.is_finite() {
                return Err(format!("row {r} references an unknown variable or is not finite"));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err("objective has non-finite coefficients".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Failed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// Shadow price per row; empty for integer solves.
    pub duals: Vec<f64>,
    /// Shadow price of the active variable bound per column.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub message: String,
}

impl LpSolution {
    fn status_only(status: LpStatus, message: impl Into<String>) -> Self {
        LpSolution {
            status,
            primal: Vec::new(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            objective: f64::NAN,
            dual_objective: f64::NAN,
            message: message.into(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Engine settings exposed through `solver.*` configuration keys.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub time_limit_s: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            time_limit_s: 300.0,
            feas_tol: 1e-7,
            opt_tol: 1e-7,
        }
    }
}

pub trait LpSolver: Sync {
    fn solve_lp(&self, lp: &LinearProgram) -> LpSolution;
}

pub trait IpSolver: Sync {
    fn solve_ip(&self, ip: &LinearProgram) -> LpSolution;
}

/// Interior-point LP engine. Each call builds an independent solver instance.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClarabelLp {
    pub settings: SolverSettings,
}

impl ClarabelLp {
    pub fn new(settings: SolverSettings) -> Self {
        ClarabelLp { settings }
    }
}

/// How a user row or bound maps to a Clarabel row and back.
#[derive(Clone, Copy)]
enum Origin {
    Row(usize),
    Lower(usize),
    Upper(usize),
    Fixed(usize),
}

struct ConicRow {
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
    origin: Origin,
    /// Shadow price = `sign * z`.
    sign: f64,
}

impl LpSolver for ClarabelLp {
    fn solve_lp(&self, lp: &LinearProgram) -> LpSolution {
        if let Err(msg) = lp.validate() {
            return LpSolution::status_only(LpStatus::Failed, msg);
        }
        let n = lp.n_vars();
        let mut zero_rows: Vec<ConicRow> = Vec::new();
        let mut cone_rows: Vec<ConicRow> = Vec::new();

        for k in 0..n {
            let (lo, up) = (lp.lower[k], lp.upper[k]);
            if lo > up {
                return LpSolution::status_only(
                    LpStatus::Infeasible,
                    format!("variable {k} has empty bounds [{lo}, {up}]"),
                );
            }
            if lo == up {
                zero_rows.push(ConicRow {
                    coeffs: vec![(k, 1.0)],
                    rhs: lo,
                    origin: Origin::Fixed(k),
                    sign: -1.0,
                });
                continue;
            }
            if lo.is_finite() {
                cone_rows.push(ConicRow {
                    coeffs: vec![(k, -1.0)],
                    rhs: -lo,
                    origin: Origin::Lower(k),
                    sign: 1.0,
                });
            }
            if up.is_finite() {
                cone_rows.push(ConicRow {
                    coeffs: vec![(k, 1.0)],
                    rhs: up,
                    origin: Origin::Upper(k),
                    sign: -1.0,
                });
            }
        }
        for (r, row) in lp.rows.iter().enumerate() {
            let coeffs = merge_coeffs(&row.coeffs);
            match row.sense {
                Sense::Eq => zero_rows.push(ConicRow {
                    coeffs,
                    rhs: row.rhs,
                    origin: Origin::Row(r),
                    sign: -1.0,
                }),
                Sense::Le => cone_rows.push(ConicRow {
                    coeffs,
                    rhs: row.rhs,
                    origin: Origin::Row(r),
                    sign: -1.0,
                }),
                Sense::Ge => cone_rows.push(ConicRow {
                    coeffs: coeffs.into_iter().map(|(k, a)| (k, -a)).collect(),
                    rhs: -row.rhs,
                    origin: Origin::Row(r),
                    sign: 1.0,
                }),
            }
        }

        let m_zero = zero_rows.len();
        let all: Vec<ConicRow> = zero_rows.into_iter().chain(cone_rows).collect();
        let m = all.len();

        if n == 0 {
            if lp.max_violation(&[]) > self.settings.feas_tol {
                return LpSolution::status_only(LpStatus::Infeasible, "empty program violates a row");
            }
            return LpSolution {
                status: LpStatus::Optimal,
                primal: vec![],
                duals: vec![0.0; lp.n_rows()],
                reduced_costs: vec![],
                objective: lp.offset,
                dual_objective: lp.offset,
                message: String::new(),
            };
        }
        if m == 0 {
            if lp.objective.iter().any(|c| *c != 0.0) {
                return LpSolution::status_only(LpStatus::Unbounded, "free variable with nonzero cost");
            }
            return LpSolution {
                status: LpStatus::Optimal,
                primal: vec![0.0; n],
                duals: vec![],
                reduced_costs: vec![0.0; n],
                objective: lp.offset,
                dual_objective: lp.offset,
                message: String::new(),
            };
        }

        let mut ii = Vec::new();
        let mut jj = Vec::new();
        let mut vv = Vec::new();
        for (r, row) in all.iter().enumerate() {
            for &(k, a) in &row.coeffs {
                ii.push(r);
                jj.push(k);
                vv.push(a);
            }
        }
        let a_mat = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
        let p_mat = CscMatrix::<f64>::zeros((n, n));
        let b: Vec<f64> = all.iter().map(|r| r.rhs).collect();
        let mut cones = Vec::new();
        if m_zero > 0 {
            cones.push(SupportedConeT::ZeroConeT(m_zero));
        }
        if m > m_zero {
            cones.push(SupportedConeT::NonnegativeConeT(m - m_zero));
        }
        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .time_limit(self.settings.time_limit_s)
            .tol_feas(self.settings.feas_tol.min(1e-8))
            .tol_gap_abs(self.settings.opt_tol.min(1e-8))
            .tol_gap_rel(self.settings.opt_tol.min(1e-8))
            .max_iter(400)
            .build()
        {
            Ok(s) => s,
            Err(e) => return LpSolution::status_only(LpStatus::Failed, format!("settings: {e}")),
        };
        let mut solver = match DefaultSolver::new(&p_mat, &lp.objective, &a_mat, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return LpSolution::status_only(LpStatus::Failed, format!("setup: {e:?}")),
        };
        solver.solve();
        let sol = &solver.solution;
        let (status, message) = match sol.status {
            SolverStatus::Solved => (LpStatus::Optimal, String::new()),
            SolverStatus::AlmostSolved => (LpStatus::Optimal, "reduced accuracy".to_string()),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                (LpStatus::Infeasible, "primal infeasible".to_string())
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                (LpStatus::Unbounded, "dual infeasible".to_string())
            }
            SolverStatus::MaxTime => (LpStatus::Failed, "time limit reached".to_string()),
            other => (LpStatus::Failed, format!("engine stopped with {other:?}")),
        };
        if status != LpStatus::Optimal {
            return LpSolution::status_only(status, message);
        }

        let mut duals = vec![0.0; lp.n_rows()];
        let mut reduced = vec![0.0; n];
        let mut dual_objective = lp.offset;
        for (r, row) in all.iter().enumerate() {
            let price = row.sign * sol.z[r];
            match row.origin {
                Origin::Row(i) => {
                    duals[i] = price;
                    dual_objective += price * lp.rows[i].rhs;
                }
                Origin::Lower(k) => {
                    reduced[k] += price;
                    dual_objective += price * lp.lower[k];
                }
                Origin::Upper(k) => {
                    reduced[k] += price;
                    dual_objective += price * lp.upper[k];
                }
                Origin::Fixed(k) => {
                    reduced[k] += price;
                    dual_objective += price * lp.lower[k];
                }
            }
        }
        // Interior-point iterates can sit a hair outside their bounds.
        let primal: Vec<f64> = (0..n).map(|k| sol.x[k].max(lp.lower[k]).min(lp.upper[k])).collect();
        let objective = lp.evaluate(&primal);
        LpSolution {
            status,
            primal,
            duals,
            reduced_costs: reduced,
            objective,
            dual_objective,
            message,
        }
    }
}

fn merge_coeffs(coeffs: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut sorted = coeffs.to_vec();
    sorted.sort_by_key(|(k, _)| *k);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(sorted.len());
    for (k, a) in sorted {
        match out.last_mut() {
            Some((last, acc)) if *last == k => *acc += a,
            _ => out.push((k, a)),
        }
    }
    out.retain(|(_, a)| *a != 0.0);
    out
}

/// Depth-first branch-and-bound over an [`LpSolver`].
#[derive(Clone, Copy, Debug)]
pub struct BranchAndBound<S> {
    pub relaxation: S,
    pub settings: SolverSettings,
    pub integrality_tol: f64,
}

impl BranchAndBound<ClarabelLp> {
    pub fn new(settings: SolverSettings) -> Self {
        BranchAndBound {
            relaxation: ClarabelLp::new(settings),
            settings,
            integrality_tol: 1e-6,
        }
    }
}

impl Default for BranchAndBound<ClarabelLp> {
    fn default() -> Self {
        Self::new(SolverSettings::default())
    }
}

/// Tightens bounds from row activities; returns `false` on proven infeasibility.
fn propagate(ip: &LinearProgram, lower: &mut [f64], upper: &mut [f64]) -> bool {
    const EPS: f64 = 1e-9;
    for _pass in 0..50 {
        let mut changed = false;
        for row in &ip.rows {
            let (mut min_act, mut max_act) = (0.0, 0.0);
            let (mut min_inf, mut max_inf) = (0usize, 0usize);
            for &(k, a) in &row.coeffs {
                let (lo_term, hi_term) = if a >= 0.0 {
                    (a * lower[k], a * upper[k])
                } else {
                    (a * upper[k], a * lower[k])
                };
                if lo_term.is_finite() {
                    min_act += lo_term;
                } else {
                    min_inf += 1;
                }
                if hi_term.is_finite() {
                    max_act += hi_term;
                } else {
                    max_inf += 1;
                }
            }
            let tol = EPS * (1.0 + row.rhs.abs());
            let check_le = matches!(row.sense, Sense::Le | Sense::Eq);
            let check_ge = matches!(row.sense, Sense::Ge | Sense::Eq);
            if check_le && min_inf == 0 && min_act > row.rhs + tol {
                return false;
            }
            if check_ge && max_inf == 0 && max_act < row.rhs - tol {
                return false;
            }
            for &(k, a) in &row.coeffs {
                if a == 0.0 {
                    continue;
                }
                // Activity of the other terms.
                if check_le && min_inf == 0 {
                    let own = if a > 0.0 { a * lower[k] } else { a * upper[k] };
                    let bound = (row.rhs - (min_act - own)) / a;
                    if a > 0.0 {
                        changed |= tighten_upper(ip.integer[k], &mut upper[k], bound);
                    } else {
                        changed |= tighten_lower(ip.integer[k], &mut lower[k], bound);
                    }
                }
                if check_ge && max_inf == 0 {
                    let own = if a > 0.0 { a * upper[k] } else { a * lower[k] };
                    let bound = (row.rhs - (max_act - own)) / a;
                    if a > 0.0 {
                        changed |= tighten_lower(ip.integer[k], &mut lower[k], bound);
                    } else {
                        changed |= tighten_upper(ip.integer[k], &mut upper[k], bound);
                    }
                }
                if lower[k] > upper[k] + EPS {
                    return false;
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}

fn tighten_upper(integer: bool, upper: &mut f64, bound: f64) -> bool {
    let bound = if integer { (bound + 1e-6).floor() } else { bound };
    if bound < *upper - 1e-9 {
        *upper = bound;
        true
    } else {
        false
    }
}

fn tighten_lower(integer: bool, lower: &mut f64, bound: f64) -> bool {
    let bound = if integer { (bound - 1e-6).ceil() } else { bound };
    if bound > *lower + 1e-9 {
        *lower = bound;
        true
    } else {
        false
    }
}

impl<S: LpSolver> IpSolver for BranchAndBound<S> {
    fn solve_ip(&self, ip: &LinearProgram) -> LpSolution {
        if let Err(msg) = ip.validate() {
            return LpSolution::status_only(LpStatus::Failed, msg);
        }
        let start = Instant::now();
        let n = ip.n_vars();
        let all_integer = ip.integer.iter().all(|i| *i);
        let integral_objective = all_integer
            && ip.objective.iter().all(|c| (c - c.round()).abs() < 1e-12);

        let mut incumbent: Option<(f64, Vec<f64>)> = None;
        let mut stack = vec![(ip.lower.clone(), ip.upper.clone())];
        let mut relaxed = ip.clone();
        relaxed.integer = vec![false; n];
        let mut nodes = 0usize;
        let mut saw_unbounded = false;

        while let Some((mut lo, mut up)) = stack.pop() {
            nodes += 1;
            if start.elapsed().as_secs_f64() > self.settings.time_limit_s {
                return LpSolution::status_only(
                    LpStatus::Failed,
                    format!("time limit reached after {nodes} nodes"),
                );
            }
            for k in 0..n {
                if ip.integer[k] {
                    lo[k] = (lo[k] - 1e-9).ceil();
                    up[k] = (up[k] + 1e-9).floor();
                }
            }
            if !propagate(ip, &mut lo, &mut up) {
                continue;
            }

            // Everything fixed: evaluate directly.
            if all_integer && (0..n).all(|k| lo[k] == up[k]) {
                let x = lo.clone();
                if ip.max_violation(&x) <= self.settings.feas_tol {
                    let obj = ip.evaluate(&x);
                    if incumbent.as_ref().is_none_or(|(best, _)| obj < *best - 1e-9) {
                        incumbent = Some((obj, x));
                    }
                }
                continue;
            }

            relaxed.lower.clone_from(&lo);
            relaxed.upper.clone_from(&up);
            let sol = self.relaxation.solve_lp(&relaxed);
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => {
                    saw_unbounded = true;
                    continue;
                }
                LpStatus::Failed => return LpSolution::status_only(LpStatus::Failed, sol.message),
            }
            if let Some((best, _)) = &incumbent {
                let bound = if integral_objective {
                    (sol.objective - 1e-6).ceil()
                } else {
                    sol.objective
                };
                if bound >= *best - 1e-9 {
                    continue;
                }
            }
            let branch_var = (0..n)
                .filter(|&k| ip.integer[k])
                .map(|k| {
                    let v = sol.primal[k];
                    (k, (v - v.round()).abs())
                })
                .filter(|(_, frac)| *frac > self.integrality_tol)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match branch_var {
                None => {
                    let mut x = sol.primal.clone();
                    for k in 0..n {
                        if ip.integer[k] {
                            x[k] = x[k].round();
                        }
                    }
                    let obj = ip.evaluate(&x);
                    if incumbent.as_ref().is_none_or(|(best, _)| obj < *best - 1e-9) {
                        incumbent = Some((obj, x));
                    }
                }
                Some((k, _)) => {
                    let v = sol.primal[k];
                    let mut up_lo = lo.clone();
                    up_lo[k] = v.ceil();
                    let mut down_up = up.clone();
                    down_up[k] = v.floor();
                    // Explore the rounded-down side first.
                    stack.push((up_lo, up.clone()));
                    stack.push((lo, down_up));
                }
            }
        }

        match incumbent {
            Some((objective, primal)) => LpSolution {
                status: LpStatus::Optimal,
                primal,
                duals: Vec::new(),
                reduced_costs: Vec::new(),
                objective,
                dual_objective: f64::NAN,
                message: format!("{nodes} nodes"),
            },
            None if saw_unbounded => LpSolution::status_only(LpStatus::Unbounded, "relaxation unbounded"),
            None => LpSolution::status_only(LpStatus::Infeasible, format!("{nodes} nodes, no integer point")),
        }
    }
}

/// Solves an LP with the default engine.
pub fn solve_lp(lp: &LinearProgram, settings: &SolverSettings) -> LpSolution {
    ClarabelLp::new(*settings).solve_lp(lp)
}

/// Solves a MIP with the default branch-and-bound.
pub fn solve_ip(ip: &LinearProgram, settings: &SolverSettings) -> LpSolution {
    BranchAndBound::new(*settings).solve_ip(ip)
}
