//! Restricted transmission expansion and the fixed-point correction that
//! makes branch capacities consistent with the impedances they imply.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TechParams;
use crate::network::{Network, Sensitivities};

/// The `r`-th largest entry of `v` (1-based, duplicates counted separately);
/// zero when `r` exceeds the length.
pub fn rth_largest(v: &[f64], r: usize) -> f64 {
    assert!(r >= 1, "order statistic rank starts at 1");
    if r > v.len() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s[r - 1]
}

/// Weighted generalization: the largest breakpoint at which the cumulative
/// weight of breakpoints at or above it first reaches `ratio`. With unit
/// weights this is the `max(1, ceil(ratio))`-th largest value.
pub fn weighted_breakpoint(points: &[(f64, f64)], ratio: f64) -> f64 {
    let mut s = points.to_vec();
    s.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut acc = 0.0;
    for (v, w) in s {
        acc += w;
        // Relative slack absorbs rounding in sums of fractional weights.
        if acc >= ratio * (1.0 - 1e-12) {
            return v;
        }
    }
    0.0
}

/// Injections and weights of the fixed non-transmission solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedOperations {
    /// `[scenario][hour][bus]` nodal net injections.
    pub injections: Vec<Vec<Vec<f64>>>,
    pub weights: Vec<f64>,
}

impl FixedOperations {
    fn check(&self, net: &Network) -> Result<()> {
        if self.injections.len() != self.weights.len() {
            return Err(Error::Contract("one weight per scenario is required".into()));
        }
        for (w, sc) in self.injections.iter().enumerate() {
            for (t, p) in sc.iter().enumerate() {
                if p.len() != net.n_buses() {
                    return Err(Error::Contract(format!("scenario {w} hour {t}: wrong bus count")));
                }
                let sum: f64 = p.iter().sum();
                let scale = p.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
                if sum.abs() > 1e-6 * scale {
                    return Err(Error::Contract(format!(
                        "scenario {w} hour {t}: injections sum to {sum:e}, not zero"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-branch data of one RTEP solve, kept for diagnostics and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct Rtep {
    pub x: Vec<f64>,
    /// Base-case lower bound per branch.
    pub lower: Vec<f64>,
    /// `(delta_c / eta_c, weight)` breakpoints with positive margin, per branch.
    pub breakpoints: Vec<Vec<(f64, f64)>>,
    /// Base-case flows `[scenario][hour][branch]` at `x_hat`.
    pub flows: Vec<Vec<Vec<f64>>>,
}

/// `E(x_hat)`: optimal branch capacities of the restricted expansion
/// problem with flows fixed by PTDF/LODF at `x_hat`.
pub fn restricted_expansion(
    net: &Network,
    params: &TechParams,
    outages: &[usize],
    ops: &FixedOperations,
    x_hat: &[f64],
) -> Result<Rtep> {
    ops.check(net)?;
    let sens = Sensitivities::new(net, x_hat, outages)?;
    let b = net.n_branches();
    let eta = params.contingency_rating;
    let mut lower = vec![0.0_f64; b];
    let mut breakpoints = vec![Vec::new(); b];
    let mut flows = Vec::with_capacity(ops.injections.len());
    for (sc, &weight) in ops.injections.iter().zip(&ops.weights) {
        let sc_flows: Vec<Vec<f64>> = sc.iter().map(|p| sens.flows(p)).collect();
        for p in &sc_flows {
            for i in 0..b {
                let w = net.branches[i].base_capacity;
                lower[i] = lower[i].max(p[i].abs() - w);
                for (k, &j) in outages.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let post = p[i] + sens.lodf().column(k)[i] * p[j];
                    let delta = post.abs() - eta * w;
                    if delta > 0.0 {
                        breakpoints[i].push((delta / eta, weight));
                    }
                }
            }
        }
        flows.push(sc_flows);
    }
    let x = (0..b)
        .map(|i| {
            let br = &net.branches[i];
            let ratio = br.expansion_cost / (eta * params.violation_cost);
            let opt = weighted_breakpoint(&breakpoints[i], ratio);
            opt.max(lower[i]).min(br.expansion_limit)
        })
        .collect();
    Ok(Rtep {
        x,
        lower,
        breakpoints,
        flows,
    })
}

/// Stopping and damping controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
}

impl Default for CorrOptions {
    fn default() -> Self {
        CorrOptions {
            tol: 1e-6,
            max_iters: 200,
            restarts: 3,
        }
    }
}

/// Fixed-point history and final impedance-defining capacities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrOutcome {
    pub x_hat: Vec<f64>,
    /// `||E(x) - x||_inf` per evaluation.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub damping: f64,
    pub warnings: Vec<String>,
}

/// Damped iteration `x <- (1 - lambda) x + lambda E(x)` from `x0`.
pub fn corr_fixed_point(
    net: &Network,
    params: &TechParams,
    outages: &[usize],
    ops: &FixedOperations,
    x0: &[f64],
    opts: &CorrOptions,
) -> Result<CorrOutcome> {
    let limits: Vec<f64> = net.branches.iter().map(|b| b.expansion_limit).collect();
    let mut x: Vec<f64> = x0.iter().zip(&limits).map(|(v, u)| v.clamp(0.0, *u)).collect();
    let mut lambda = 1.0;
    let mut residuals = Vec::new();
    let mut warnings = Vec::new();
    let mut best = (f64::INFINITY, x.clone());
    for round in 0..=opts.restarts {
        for _ in 0..opts.max_iters {
            let e = restricted_expansion(net, params, outages, ops, &x)?.x;
            let res = e.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            residuals.push(res);
            if res < best.0 {
                best = (res, x.clone());
            }
            if res < opts.tol {
                return Ok(CorrOutcome {
                    x_hat: x,
                    residuals,
                    converged: true,
                    damping: lambda,
                    warnings,
                });
            }
            x = x.iter().zip(&e).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
        }
        if round < opts.restarts {
            lambda *= 0.5;
            let msg = format!("no fixed point within {} iterations; damping now {lambda}", opts.max_iters);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let msg = format!("returning best iterate with residual {:.3e}", best.0);
    warn!("{msg}");
    warnings.push(msg);
    Ok(CorrOutcome {
        x_hat: best.1,
        residuals,
        converged: false,
        damping: lambda,
        warnings,
    })
}
