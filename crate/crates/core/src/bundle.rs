//! Level-bundle method with interleaved contingency generation.
//!
//! Each iteration evaluates the scenario oracles at the current iterate,
//! adds one cut per scenario, grows the active contingency sets, and moves to
//! the analytic center of the level set of the cutting-plane model.

use std::time::Instant;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Polytope;
use crate::solver::{solve_lp, LinearProgram, LpStatus, Sense, SolverSettings};
use crate::subproblem::{ContingencySet, OperatingCost, OperationalDecision, OperationsModel, OracleResult};

/// Affine minorant `intercept + slope^T (x - anchor)` of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub scenario: usize,
    pub intercept: f64,
    pub slope: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl Cut {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .slope
                .iter()
                .zip(x.iter().zip(&self.anchor))
                .map(|(g, (xi, ai))| g * (xi - ai))
                .sum::<f64>()
    }

    /// Row form `slope^T x - eta <= slope^T anchor - intercept`.
    fn rhs(&self) -> f64 {
        self.slope.iter().zip(&self.anchor).map(|(g, a)| g * a).sum::<f64>() - self.intercept
    }
}

/// First-stage data: investment costs, feasible set and scenario weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Master {
    pub costs: Vec<f64>,
    pub polytope: Polytope,
    pub weights: Vec<f64>,
}

impl Master {
    pub fn dim(&self) -> usize {
        self.costs.len()
    }

    /// `h_w(x)` under the cut model, including the zero minorant.
    pub fn scenario_model(&self, cuts: &[Cut], w: usize, x: &[f64]) -> f64 {
        cuts.iter()
            .filter(|c| c.scenario == w)
            .map(|c| c.value(x))
            .fold(0.0, f64::max)
    }

    /// `f_hat(x) = c^T x + sum_w weight_w h_w(x)`.
    pub fn model_value(&self, cuts: &[Cut], x: &[f64]) -> f64 {
        dot(&self.costs, x)
            + (0..self.weights.len())
                .map(|w| self.weights[w] * self.scenario_model(cuts, w, x))
                .sum::<f64>()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `min_{x in X} f_hat(x)` with one epigraph variable per scenario.
pub fn lower_bound(master: &Master, cuts: &[Cut], settings: &SolverSettings) -> Result<(f64, Vec<f64>)> {
    let n = master.dim();
    let poly = &master.polytope;
    let mut lp = LinearProgram::new();
    for k in 0..n {
        lp.add_var(master.costs[k], poly.lower[k], poly.upper[k]);
    }
    let eta: Vec<usize> = master
        .weights
        .iter()
        .map(|w| lp.add_var(*w, 0.0, f64::INFINITY))
        .collect();
    for (row, b) in &poly.inequalities {
        lp.add_row(row.clone(), Sense::Le, *b);
    }
    for (row, b) in &poly.equalities {
        lp.add_row(row.clone(), Sense::Eq, *b);
    }
    for cut in cuts {
        let mut coeffs: Vec<(usize, f64)> = cut
            .slope
            .iter()
            .enumerate()
            .filter(|(_, g)| **g != 0.0)
            .map(|(k, g)| (k, *g))
            .collect();
        coeffs.push((eta[cut.scenario], -1.0));
        lp.add_row(coeffs, Sense::Le, cut.rhs());
    }
    let sol = solve_lp(&lp, settings);
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("lower-bound LP is {:?}: {}", sol.status, sol.message)));
    }
    let x: Vec<f64> = (0..n)
        .map(|k| sol.primal[k].clamp(poly.lower[k], poly.upper[k]))
        .collect();
    Ok((sol.objective, x))
}

/// Result of the analytic-center computation.
#[derive(Clone, Debug, PartialEq)]
pub struct Center {
    pub x: Vec<f64>,
    pub newton_steps: usize,
    /// Newton decrement at exit.
    pub decrement: f64,
}

/// Analytic center of `{x in X, eta >= 0, eta_w >= cuts_w(x),
/// c^T x + sum weight_w eta_w <= level}` in the joint `(x, eta)` space.
///
/// A level of `+inf` drops the level row; this is only bounded when there
/// are no scenarios. Returns an error if the set has no interior.
pub fn analytic_center(master: &Master, cuts: &[Cut], level: f64, settings: &SolverSettings) -> Result<Center> {
    let n = master.dim();
    let poly = &master.polytope;
    let n_sc = master.weights.len();
    if !level.is_finite() && n_sc > 0 {
        return Err(Error::Contract("an infinite level leaves the epigraph unbounded".into()));
    }
    // Coordinates pinned by their bounds drop out of the barrier.
    let free: Vec<usize> = (0..n).filter(|&k| poly.upper[k] - poly.lower[k] > 1e-12).collect();
    let mut pos = vec![None; n];
    for (i, &k) in free.iter().enumerate() {
        pos[k] = Some(i);
    }
    let base: Vec<f64> = poly.lower.clone();
    let m = free.len() + n_sc;

    // Sparse row a over original x (plus eta), returns (dense z-row, shift).
    let project = |row: &[(usize, f64)], eta: &[(usize, f64)]| -> (DVector<f64>, f64) {
        let mut a = DVector::zeros(m);
        let mut shift = 0.0;
        for &(k, v) in row {
            match pos[k] {
                Some(i) => a[i] += v,
                None => shift += v * base[k],
            }
        }
        for &(w, v) in eta {
            a[free.len() + w] += v;
        }
        (a, shift)
    };

    let mut ineq: Vec<(DVector<f64>, f64)> = Vec::new();
    for (i, &k) in free.iter().enumerate() {
        let mut lo = DVector::zeros(m);
        lo[i] = -1.0;
        ineq.push((lo, -poly.lower[k]));
        let mut hi = DVector::zeros(m);
        hi[i] = 1.0;
        ineq.push((hi, poly.upper[k]));
    }
    for (row, b) in &poly.inequalities {
        let (a, shift) = project(row, &[]);
        if a.iter().any(|v| *v != 0.0) {
            ineq.push((a, b - shift));
        }
    }
    for w in 0..n_sc {
        let mut a = DVector::zeros(m);
        a[free.len() + w] = -1.0;
        ineq.push((a, 0.0));
    }
    for cut in cuts {
        let row: Vec<(usize, f64)> = cut.slope.iter().copied().enumerate().collect();
        let (a, shift) = project(&row, &[(cut.scenario, -1.0)]);
        ineq.push((a, cut.rhs() - shift));
    }
    if level.is_finite() {
        let row: Vec<(usize, f64)> = master.costs.iter().copied().enumerate().collect();
        let eta: Vec<(usize, f64)> = master.weights.iter().copied().enumerate().collect();
        let (a, shift) = project(&row, &eta);
        ineq.push((a, level - shift));
    }
    let mut eq: Vec<(DVector<f64>, f64)> = Vec::new();
    for (row, b) in &poly.equalities {
        let (a, shift) = project(row, &[]);
        if a.iter().any(|v| *v != 0.0) {
            eq.push((a, b - shift));
        }
    }

    let assemble = |z: &DVector<f64>| -> Vec<f64> {
        let mut x = base.clone();
        for (i, &k) in free.iter().enumerate() {
            x[k] = z[i];
        }
        x
    };
    if m == 0 {
        return Ok(Center {
            x: assemble(&DVector::zeros(0)),
            newton_steps: 0,
            decrement: 0.0,
        });
    }

    let mut z = chebyshev_point(&ineq, &eq, m, settings)?;
    let slacks = |z: &DVector<f64>| -> Vec<f64> { ineq.iter().map(|(a, b)| b - a.dot(z)).collect() };
    let barrier = |s: &[f64]| -> f64 { -s.iter().map(|v| v.ln()).sum::<f64>() };
    let mut s = slacks(&z);
    if s.iter().any(|v| *v <= 0.0) {
        return Err(Error::Solver("level set has no strictly interior point".into()));
    }

    let p = eq.len();
    let mut steps = 0;
    let mut decrement = f64::INFINITY;
    for _ in 0..100 {
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::zeros(m, m);
        for ((a, _), si) in ineq.iter().zip(&s) {
            grad.axpy(1.0 / si, a, 1.0);
            hess.ger(1.0 / (si * si), a, a, 1.0);
        }
        // Symmetric Jacobi scaling keeps the KKT solve well conditioned when
        // MW and $ coordinates mix.
        let d = DVector::from_iterator(m, (0..m).map(|i| 1.0 / hess[(i, i)].max(1e-300).sqrt()));
        let mut kkt = DMatrix::zeros(m + p, m + p);
        let mut rhs = DVector::zeros(m + p);
        for i in 0..m {
            for j in 0..m {
                kkt[(i, j)] = d[i] * hess[(i, j)] * d[j];
            }
            rhs[i] = -d[i] * grad[i];
        }
        for (r, (a, _)) in eq.iter().enumerate() {
            for i in 0..m {
                kkt[(m + r, i)] = a[i] * d[i];
                kkt[(i, m + r)] = a[i] * d[i];
            }
        }
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("analytic-center Newton system is singular".into()))?;
        let dz = DVector::from_iterator(m, (0..m).map(|i| d[i] * sol[i]));
        let lambda2 = -grad.dot(&dz);
        decrement = lambda2.max(0.0).sqrt();
        // Reduced (scaled) gradient norm: grad + E^T nu in the scaled space.
        let mut red = DVector::from_iterator(m, (0..m).map(|i| d[i] * grad[i]));
        for (r, (a, _)) in eq.iter().enumerate() {
            for i in 0..m {
                red[i] += a[i] * d[i] * sol[m + r];
            }
        }
        if red.norm() < 1e-8 || lambda2 < 1e-16 {
            break;
        }
        let f0 = barrier(&s);
        let mut t = 1.0;
        loop {
            let cand = &z + t * &dz;
            let sc = slacks(&cand);
            if sc.iter().all(|v| *v > 0.0) && barrier(&sc) <= f0 - 0.25 * t * lambda2 {
                z = cand;
                s = sc;
                break;
            }
            t *= 0.5;
            if t < 1e-14 {
                break;
            }
        }
        steps += 1;
        if t < 1e-14 {
            break;
        }
    }
    Ok(Center {
        x: assemble(&z),
        newton_steps: steps,
        decrement,
    })
}

/// Strictly interior start: maximize the normalized slack radius.
fn chebyshev_point(
    ineq: &[(DVector<f64>, f64)],
    eq: &[(DVector<f64>, f64)],
    m: usize,
    settings: &SolverSettings,
) -> Result<DVector<f64>> {
    let mut lp = LinearProgram::new();
    for _ in 0..m {
        lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
    }
    let tau = lp.add_var(-1.0, 0.0, 1e6);
    for (a, b) in ineq {
        let scale = a.norm().max(1e-12);
        let mut coeffs: Vec<(usize, f64)> = a
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, v / scale))
            .collect();
        coeffs.push((tau, 1.0));
        lp.add_row(coeffs, Sense::Le, b / scale);
    }
    for (a, b) in eq {
        let coeffs = a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect();
        lp.add_row(coeffs, Sense::Eq, *b);
    }
    let sol = solve_lp(&lp, settings);
    if sol.status != LpStatus::Optimal || sol.primal[tau] <= 1e-9 {
        return Err(Error::Solver("level set has no strictly interior point".into()));
    }
    Ok(DVector::from_iterator(m, sol.primal[..m].iter().copied()))
}

/// Algorithm parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub max_iters: usize,
    /// Worker threads for scenario oracles; 0 uses all cores.
    pub threads: usize,
    pub settings: SolverSettings,
}

impl Default for BundleParams {
    fn default() -> Self {
        BundleParams {
            epsilon: 1e-3,
            alpha: 0.3,
            max_iters: 500,
            threads: 0,
            settings: SolverSettings::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IterationKind {
    /// Some cut improved the model at `x_k` or new contingencies appeared.
    TypeI,
    /// Neither: the gap must contract by `alpha`.
    TypeII,
}

/// One line of the trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
    /// `f_k = c^T x_k + sum weight (theta + sigma)`.
    pub value: f64,
    pub gap: f64,
    pub rel_gap: f64,
    pub kind: IterationKind,
    pub incumbent: bool,
    /// `|J_{k+1, w}|` per scenario.
    pub active: Vec<usize>,
    pub new_contingencies: usize,
    /// `theta_lev_k`; absent on the final iteration.
    pub level: Option<f64>,
    /// `f_hat_k(x_{k+1}) - theta_lev_k`; nonpositive inside the level set.
    pub level_excess: Option<f64>,
    pub fallback: bool,
}

/// Everything `run_bund` hands back.
#[derive(Clone, Debug)]
pub struct BundleOutcome {
    pub x: Vec<f64>,
    pub decisions: Vec<OperationalDecision>,
    pub values: Vec<f64>,
    pub penalties: Vec<f64>,
    pub costs: Vec<OperatingCost>,
    pub lower: f64,
    pub upper: f64,
    pub converged: bool,
    pub trajectory: Vec<IterationRecord>,
    pub cuts: Vec<Cut>,
    pub active: Vec<ContingencySet>,
    pub oracle_seconds: f64,
    pub master_seconds: f64,
}

impl BundleOutcome {
    pub fn rel_gap(&self) -> f64 {
        (self.upper - self.lower) / self.upper.abs().max(f64::MIN_POSITIVE)
    }
}

struct Incumbent {
    x: Vec<f64>,
    results: Vec<OracleResult>,
}

/// Runs the bundle method on the operational model's scenarios.
pub fn run_bund(model: &OperationsModel<'_>, polytope: &Polytope, params: &BundleParams) -> Result<BundleOutcome> {
    if !(params.epsilon > 0.0) || !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::Validation("need epsilon > 0 and alpha in (0, 1)".into()));
    }
    let inst = model.instance();
    let master = Master {
        costs: inst.investment_costs(),
        polytope: polytope.clone(),
        weights: inst.scenarios.iter().map(|s| s.weight).collect(),
    };
    if polytope.dim() != master.dim() {
        return Err(Error::Validation("polytope dimension does not match the portfolio".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(params.threads)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let n_sc = master.weights.len();
    let settings = &params.settings;

    let mut x = polytope.midpoint();
    if !polytope.contains(&x, 1e-9) {
        // Budget or coupling rows can cut off the midpoint.
        x = analytic_center(&Master { weights: vec![], ..master.clone() }, &[], f64::INFINITY, settings)?.x;
    }
    let mut cuts: Vec<Cut> = Vec::new();
    let mut active: Vec<ContingencySet> = vec![ContingencySet::new(); n_sc];
    let mut lower = 0.0_f64;
    let mut upper = f64::INFINITY;
    let mut incumbent: Option<Incumbent> = None;
    let mut trajectory: Vec<IterationRecord> = Vec::new();
    let (mut oracle_s, mut master_s) = (0.0, 0.0);
    let mut converged = false;

    for k in 1..=params.max_iters {
        let clock = Instant::now();
        let results: Vec<OracleResult> = pool.install(|| {
            (0..n_sc)
                .into_par_iter()
                .map(|w| model.oracle(&x, w, &active[w]))
                .collect::<Result<Vec<_>>>()
        })?;
        oracle_s += clock.elapsed().as_secs_f64();
        let clock = Instant::now();

        let mut type_two = true;
        let mut new_total = 0;
        for (w, r) in results.iter().enumerate() {
            let prev = master.scenario_model(&cuts, w, &x);
            if r.value > prev + 1e-8 || !r.new_contingencies.is_empty() {
                type_two = false;
            }
            new_total += r.new_contingencies.len();
            active[w].extend(r.new_contingencies.iter().copied());
        }
        for (w, r) in results.iter().enumerate() {
            cuts.push(Cut {
                scenario: w,
                intercept: r.value,
                slope: r.subgradient.clone(),
                anchor: x.clone(),
            });
        }
        let f_k = dot(&master.costs, &x)
            + results
                .iter()
                .zip(&master.weights)
                .map(|(r, wt)| wt * (r.value + r.penalty))
                .sum::<f64>();
        let (lb, x_lb) = lower_bound(&master, &cuts, settings)?;
        lower = lower.max(lb);
        let improved = f_k <= upper + 1e-9;
        if improved {
            upper = upper.min(f_k);
            incumbent = Some(Incumbent {
                x: x.clone(),
                results: results.clone(),
            });
        }
        // Guards IPM noise making L exceed U by a hair near convergence.
        if lower > upper {
            lower = upper;
        }
        let gap = upper - lower;
        let rel_gap = gap / upper.abs().max(f64::MIN_POSITIVE);
        let mut rec = IterationRecord {
            k,
            lower,
            upper,
            value: f_k,
            gap,
            rel_gap,
            kind: if type_two { IterationKind::TypeII } else { IterationKind::TypeI },
            incumbent: improved,
            active: active.iter().map(|a| a.len()).collect(),
            new_contingencies: new_total,
            level: None,
            level_excess: None,
            fallback: false,
        };
        info!("k={k} L={lower:.6e} U={upper:.6e} gap={rel_gap:.3e} new={new_total}");
        if rel_gap < params.epsilon || gap <= 1e-12 {
            converged = true;
            master_s += clock.elapsed().as_secs_f64();
            trajectory.push(rec);
            break;
        }

        let level = lower + params.alpha * (upper - lower);
        let next = match analytic_center(&master, &cuts, level, settings) {
            Ok(c) if master.model_value(&cuts, &c.x) <= level + 1e-7 => {
                debug!("analytic center after {} Newton steps", c.newton_steps);
                c.x
            }
            other => {
                if let Err(e) = other {
                    debug!("analytic center failed: {e}");
                }
                rec.fallback = true;
                fallback_point(&master, &cuts, &x_lb, &x, level)
            }
        };
        rec.level = Some(level);
        rec.level_excess = Some(master.model_value(&cuts, &next) - level);
        trajectory.push(rec);
        x = next;
        master_s += clock.elapsed().as_secs_f64();
    }
    if !converged {
        warn!("iteration cap of {} reached; returning the incumbent", params.max_iters);
    }
    let inc = incumbent.ok_or_else(|| Error::Solver("no iteration completed".into()))?;
    Ok(BundleOutcome {
        values: inc.results.iter().map(|r| r.value).collect(),
        penalties: inc.results.iter().map(|r| r.penalty).collect(),
        costs: inc.results.iter().map(|r| r.costs).collect(),
        decisions: inc.results.into_iter().map(|r| r.decision).collect(),
        x: inc.x,
        lower,
        upper,
        converged,
        trajectory,
        cuts,
        active,
        oracle_seconds: oracle_s,
        master_seconds: master_s,
    })
}

/// `(1 - t) x_lb + t x_k` with the largest `t <= 0.1` that stays in the
/// level set; `x_lb` itself satisfies `f_hat(x_lb) = L < level`.
fn fallback_point(master: &Master, cuts: &[Cut], x_lb: &[f64], x_k: &[f64], level: f64) -> Vec<f64> {
    let mut t = 0.1;
    while t > 1e-6 {
        let cand: Vec<f64> = x_lb.iter().zip(x_k).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        if master.model_value(cuts, &cand) <= level {
            return cand;
        }
        t *= 0.5;
    }
    x_lb.to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn boxed(n: usize, hi: f64) -> Master {
        Master {
            costs: vec![0.0; n],
            polytope: Polytope::boxed(vec![0.0; n], vec![hi; n]),
            weights: vec![],
        }
    }

    #[test]
    fn box_center_is_midpoint() {
        let m = boxed(4, 1.0);
        let c = analytic_center(&m, &[], f64::INFINITY, &SolverSettings::default()).unwrap();
        for v in c.x {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-8);
        }
    }

    #[test]
    fn level_row_pulls_center_inward() {
        // Maximize log x + log(2 - x) (twice) + log(2 - x1 - x2). By symmetry
        // x1 = x2 = a with 1/a - 1/(2-a) - 1/(2-2a) = 0; root by bisection.
        let f = |a: f64| 1.0 / a - 1.0 / (2.0 - a) - 1.0 / (2.0 - 2.0 * a);
        let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let mut m = boxed(2, 2.0);
        m.costs = vec![1.0, 1.0];
        let c = analytic_center(&m, &[], 2.0, &SolverSettings::default()).unwrap();
        assert_abs_diff_eq!(c.x[0], lo, epsilon = 1e-7);
        assert_abs_diff_eq!(c.x[1], lo, epsilon = 1e-7);
    }

    #[test]
    fn redundant_level_matches_box() {
        let mut m = boxed(3, 1.0);
        m.costs = vec![1.0; 3];
        let c = analytic_center(&m, &[], 1e6, &SolverSettings::default()).unwrap();
        for v in c.x {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn lower_bound_with_no_cuts_is_zero() {
        let mut m = boxed(2, 5.0);
        m.costs = vec![1.0, 2.0];
        m.weights = vec![1.0];
        let (l, x) = lower_bound(&m, &[], &SolverSettings::default()).unwrap();
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(x[0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn lower_bound_flat_cut() {
        let mut m = boxed(1, 5.0);
        m.costs = vec![1.0];
        m.weights = vec![1.0];
        let cut = Cut {
            scenario: 0,
            intercept: 5.0,
            slope: vec![0.0],
            anchor: vec![2.0],
        };
        let (l, _) = lower_bound(&m, &[cut], &SolverSettings::default()).unwrap();
        assert_abs_diff_eq!(l, 5.0, epsilon = 1e-6);
    }

    #[test]
    fn lower_bound_v_shape_matches_grid() {
        let mut m = boxed(1, 10.0);
        m.costs = vec![0.5];
        m.weights = vec![1.0];
        let cuts = vec![
            Cut { scenario: 0, intercept: 8.0, slope: vec![-2.0], anchor: vec![0.0] },
            Cut { scenario: 0, intercept: 1.0, slope: vec![1.0], anchor: vec![5.0] },
        ];
        let (l, x) = lower_bound(&m, &cuts, &SolverSettings::default()).unwrap();
        let grid = (0..=100_000)
            .map(|i| i as f64 * 1e-4)
            .map(|v| m.model_value(&cuts, &[v]))
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(l, grid, epsilon = 1e-4);
        assert_abs_diff_eq!(m.model_value(&cuts, &x), l, epsilon = 1e-5);
    }
}
