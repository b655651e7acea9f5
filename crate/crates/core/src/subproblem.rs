//! Per-scenario operational LP and the contingency constraint-generation
//! oracle.
//!
//! Impedances and LODFs are frozen at an impedance-defining capacity `x_hat`,
//! while the portfolio `x` enters only through right-hand sides. Each such
//! dependency is recorded as a [`Link`], so a subgradient of the optimal value
//! with respect to `x` is a dual-weighted sum over links.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cycles::DirectedCycleBasis;
use crate::error::{Error, Result};
use crate::model::{Instance, Mode, PortfolioLayout, Scenario};
use crate::network::{non_islanding_set, Lodf, Network, Sensitivities};
use crate::solver::{solve_lp, LinearProgram, LpStatus, Sense, SolverSettings};

/// Contingency index `(t, i, j)`: branch `monitored` during the outage of
/// branch `outage` at hour `hour`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Contingency {
    pub hour: usize,
    pub monitored: usize,
    pub outage: usize,
}

impl Contingency {
    pub fn new(hour: usize, monitored: usize, outage: usize) -> Self {
        Contingency {
            hour,
            monitored,
            outage,
        }
    }
}

pub type ContingencySet = BTreeSet<Contingency>;

/// Default screening threshold on implied slacks, MW.
pub const SCREEN_THRESHOLD: f64 = 1e-6;

/// How Kirchhoff's voltage law is written.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowFormulation {
    /// Nodal balance only.
    Transport,
    /// One impedance-weighted row per basis cycle and hour.
    Cycles,
    /// Voltage-angle variables per non-slack bus.
    Angles,
}

/// `rhs(row) += coef * x[component]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub row: usize,
    pub component: usize,
    pub coef: f64,
}

/// Column indices of the operational variables, `[hour][device]`.
#[derive(Clone, Debug, Default)]
pub struct OpVars {
    pub gen: Vec<Vec<usize>>,
    pub gen_reserve: Vec<Vec<usize>>,
    pub charge: Vec<Vec<usize>>,
    pub discharge: Vec<Vec<usize>>,
    pub storage_reserve: Vec<Vec<usize>>,
    /// `T + 1` rows; row 0 is the initial state of charge.
    pub soc: Vec<Vec<usize>>,
    pub shed: Vec<Vec<usize>>,
    pub hvdc: Vec<Vec<usize>>,
    pub flow: Vec<Vec<usize>>,
    pub angle: Vec<Vec<Option<usize>>>,
    pub slacks: Vec<(Contingency, usize)>,
}

/// A built scenario LP together with its portfolio links.
#[derive(Clone, Debug)]
pub struct Subproblem {
    pub lp: LinearProgram,
    pub links: Vec<Link>,
    pub vars: OpVars,
}

impl Subproblem {
    /// `g_c = sum over links on c of dual(row) * coef`.
    pub fn subgradient(&self, duals: &[f64], n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n];
        for l in &self.links {
            g[l.component] += duals[l.row] * l.coef;
        }
        g
    }
}

/// Optimal operational decisions for one scenario, `[hour][device]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperationalDecision {
    pub gen: Vec<Vec<f64>>,
    pub gen_reserve: Vec<Vec<f64>>,
    pub charge: Vec<Vec<f64>>,
    pub discharge: Vec<Vec<f64>>,
    pub storage_reserve: Vec<Vec<f64>>,
    /// `T + 1` rows starting from the boundary state of charge.
    pub soc: Vec<Vec<f64>>,
    pub shed: Vec<Vec<f64>>,
    pub hvdc: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
    pub slacks: Vec<(Contingency, f64)>,
}

impl OperationalDecision {
    /// Nodal net injections `p_ni = A_g p_g + A_es (p_dis - p_chg) + A_dc p_dc
    /// - A_d (load - shed)`, `[hour][bus]`.
    pub fn net_injections(&self, net: &Network, scenario: &Scenario) -> Vec<Vec<f64>> {
        (0..self.gen.len())
            .map(|t| {
                let mut p = vec![0.0; net.n_buses()];
                for (g, gen) in net.generators.iter().enumerate() {
                    p[gen.bus] += self.gen[t][g];
                }
                for (s, st) in net.storage.iter().enumerate() {
                    p[st.bus] += self.discharge[t][s] - self.charge[t][s];
                }
                for (l, line) in net.hvdc.iter().enumerate() {
                    p[line.from_bus] -= self.hvdc[t][l];
                    p[line.to_bus] += self.hvdc[t][l];
                }
                for (d, load) in net.loads.iter().enumerate() {
                    p[load.bus] -= scenario.loads[t][d] - self.shed[t][d];
                }
                p
            })
            .collect()
    }
}

/// Operating cost split of one scenario, $ and MWh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatingCost {
    pub generation: f64,
    pub shed: f64,
    pub violation: f64,
    pub shed_mwh: f64,
    pub violation_mwh: f64,
}

impl OperatingCost {
    pub fn total(&self) -> f64 {
        self.generation + self.shed + self.violation
    }
}

/// Output of the oracle at one portfolio and scenario.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub decision: OperationalDecision,
    /// Optimal subproblem value.
    pub value: f64,
    pub subgradient: Vec<f64>,
    /// Penalty on violations outside the active set.
    pub penalty: f64,
    pub new_contingencies: Vec<Contingency>,
    /// Implied slacks for every newly violated contingency.
    pub implied_slacks: Vec<(Contingency, f64)>,
    pub costs: OperatingCost,
}

/// Implied contingency slacks over every screened triplet.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Screening {
    pub slacks: Vec<(Contingency, f64)>,
    pub penalty: f64,
}

impl Screening {
    pub fn contingencies(&self) -> Vec<Contingency> {
        self.slacks.iter().map(|(c, _)| *c).collect()
    }
}

/// Screens every `(t, i, j)` with `j` an outage column of `lodf`, `i != j`
/// and `(t, i, j)` not in `active`; keeps implied slacks above `threshold`.
///
/// `flows` is `[hour][branch]` and `ratings[i]` the post-contingency rating.
pub fn screen_contingencies(
    flows: &[Vec<f64>],
    lodf: &Lodf,
    ratings: &[f64],
    active: &ContingencySet,
    violation_cost: f64,
    threshold: f64,
) -> Screening {
    let mut out = Screening::default();
    let outages = lodf.outages();
    let b = ratings.len();
    for (t, p) in flows.iter().enumerate() {
        // Post-contingency flows: p 1^T + Lambda diag(p_B).
        let mut post = lodf.matrix().clone();
        for (k, &j) in outages.iter().enumerate() {
            let mut col = post.column_mut(k);
            col *= p[j];
            for i in 0..b {
                col[i] += p[i];
            }
        }
        for (k, &j) in outages.iter().enumerate() {
            for i in 0..b {
                if i == j {
                    continue;
                }
                let s = post[(i, k)].abs() - ratings[i];
                if s > threshold {
                    let c = Contingency::new(t, i, j);
                    if !active.contains(&c) {
                        out.slacks.push((c, s));
                    }
                }
            }
        }
    }
    out.slacks.sort_by(|a, b| a.0.cmp(&b.0));
    out.penalty = violation_cost * out.slacks.iter().map(|(_, s)| s).sum::<f64>();
    out
}

/// Every contingency triplet of `hours` hours over the non-islanding outages.
pub fn full_contingency_set(hours: usize, n_branches: usize, outages: &[usize]) -> ContingencySet {
    let mut set = ContingencySet::new();
    for t in 0..hours {
        for &j in outages {
            for i in (0..n_branches).filter(|i| *i != j) {
                set.insert(Contingency::new(t, i, j));
            }
        }
    }
    set
}

/// Shared, immutable data for building scenario LPs at a fixed `x_hat`.
#[derive(Clone, Debug)]
pub struct OperationsModel<'a> {
    instance: &'a Instance,
    mode: Mode,
    formulation: FlowFormulation,
    cycles: DirectedCycleBasis,
    chi: Vec<f64>,
    outages: Vec<usize>,
    sensitivities: Option<Sensitivities>,
    settings: SolverSettings,
    threshold: f64,
}

impl<'a> OperationsModel<'a> {
    pub fn new(
        instance: &'a Instance,
        cycles: &DirectedCycleBasis,
        x_hat: &[f64],
        mode: Mode,
        settings: SolverSettings,
    ) -> Result<Self> {
        let net = &instance.network;
        if cycles.len() != net.cycle_space_dim() {
            return Err(Error::Validation(format!(
                "cycle basis has {} rows, the network needs {}",
                cycles.len(),
                net.cycle_space_dim()
            )));
        }
        let chi = net.impedances(x_hat)?;
        let outages = non_islanding_set(&cycles.undirected());
        let sensitivities = if mode.enforces_contingencies() {
            Some(Sensitivities::new(net, x_hat, &outages)?)
        } else {
            None
        };
        let formulation = if mode.enforces_kvl() {
            FlowFormulation::Cycles
        } else {
            FlowFormulation::Transport
        };
        Ok(OperationsModel {
            instance,
            mode,
            formulation,
            cycles: cycles.clone(),
            chi,
            outages,
            sensitivities,
            settings,
            threshold: SCREEN_THRESHOLD,
        })
    }

    /// Switches KVL to the angle formulation; no effect in transport mode.
    pub fn with_angles(mut self) -> Self {
        if self.formulation == FlowFormulation::Cycles {
            self.formulation = FlowFormulation::Angles;
        }
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn formulation(&self) -> FlowFormulation {
        self.formulation
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Non-islanding branches, i.e. the admissible outages.
    pub fn outages(&self) -> &[usize] {
        &self.outages
    }

    pub fn sensitivities(&self) -> Option<&Sensitivities> {
        self.sensitivities.as_ref()
    }

    pub fn layout(&self) -> PortfolioLayout {
        self.instance.layout()
    }

    /// The complete contingency set of scenario `w`; empty unless the mode
    /// enforces contingencies.
    pub fn full_contingencies(&self, w: usize) -> ContingencySet {
        if !self.mode.enforces_contingencies() {
            return ContingencySet::new();
        }
        let net = &self.instance.network;
        full_contingency_set(self.instance.scenarios[w].hours(), net.n_branches(), &self.outages)
    }

    /// Post-contingency ratings `eta_c (w_br * factor + x_br)`.
    pub fn contingency_ratings(&self, x: &[f64]) -> Vec<f64> {
        let layout = self.layout();
        let eta = self.instance.params.contingency_rating;
        let rf = self.mode.rating_factor();
        self.instance
            .network
            .branches
            .iter()
            .map(|br| eta * (br.base_capacity * rf + x[layout.branch(br.id)]))
            .collect()
    }

    /// Builds the LP of scenario `w` at portfolio `x` with contingency rows
    /// for `active`.
    pub fn build(&self, x: &[f64], w: usize, active: &ContingencySet) -> Result<Subproblem> {
        let inst = self.instance;
        let net = &inst.network;
        let params = &inst.params;
        let layout = self.layout();
        if x.len() != layout.len() {
            return Err(Error::Validation(format!(
                "portfolio has {} entries, expected {}",
                x.len(),
                layout.len()
            )));
        }
        let sc = inst
            .scenarios
            .get(w)
            .ok_or_else(|| Error::Validation(format!("scenario index {w} out of range")))?;
        if !active.is_empty() && self.sensitivities.is_none() {
            return Err(Error::Validation(format!(
                "mode {} does not model contingencies",
                self.mode
            )));
        }
        let t_len = sc.hours();
        let inf = f64::INFINITY;
        let mut lp = LinearProgram::new();
        let mut links = Vec::new();
        let mut v = OpVars::default();

        // Adds a row whose rhs is base + sum(coef * x[c]).
        let mut linked = |lp: &mut LinearProgram,
                          coeffs: Vec<(usize, f64)>,
                          sense: Sense,
                          base: f64,
                          deps: &[(usize, f64)]| {
            let rhs = base + deps.iter().map(|(c, a)| a * x[*c]).sum::<f64>();
            let row = lp.add_row(coeffs, sense, rhs);
            for &(component, coef) in deps {
                links.push(Link {
                    row,
                    component,
                    coef,
                });
            }
            row
        };

        for t in 0..t_len {
            v.gen.push(
                (0..net.generators.len())
                    .map(|g| lp.add_var(sc.gen_costs[t][g], 0.0, inf))
                    .collect(),
            );
            v.gen_reserve
                .push((0..net.generators.len()).map(|_| lp.add_var(0.0, 0.0, inf)).collect());
            v.charge
                .push((0..net.storage.len()).map(|_| lp.add_var(0.0, 0.0, inf)).collect());
            v.discharge
                .push((0..net.storage.len()).map(|_| lp.add_var(0.0, 0.0, inf)).collect());
            v.storage_reserve
                .push((0..net.storage.len()).map(|_| lp.add_var(0.0, 0.0, inf)).collect());
            v.shed.push(
                (0..net.loads.len())
                    .map(|d| lp.add_var(params.shed_cost, 0.0, sc.loads[t][d]))
                    .collect(),
            );
            v.hvdc.push(
                net.hvdc
                    .iter()
                    .map(|l| lp.add_var(0.0, -l.capacity, l.capacity))
                    .collect(),
            );
            v.flow
                .push((0..net.n_branches()).map(|_| lp.add_var(0.0, -inf, inf)).collect());
        }
        for _ in 0..=t_len {
            v.soc
                .push((0..net.storage.len()).map(|_| lp.add_var(0.0, 0.0, inf)).collect());
        }

        // Generators.
        for (g, gen) in net.generators.iter().enumerate() {
            let xg = layout.generator(g);
            for t in 0..t_len {
                let a = sc.availability[t][g];
                linked(
                    &mut lp,
                    vec![(v.gen[t][g], 1.0), (v.gen_reserve[t][g], 1.0)],
                    Sense::Le,
                    a * gen.capacity,
                    &[(xg, a)],
                );
                // A ramp rate of one or more per hour never binds.
                if t > 0 && gen.ramp_rate < 1.0 {
                    let r = gen.ramp_rate;
                    let delta = vec![(v.gen[t][g], 1.0), (v.gen[t - 1][g], -1.0)];
                    linked(&mut lp, delta.clone(), Sense::Le, r * gen.capacity, &[(xg, r)]);
                    linked(&mut lp, delta, Sense::Ge, -r * gen.capacity, &[(xg, -r)]);
                }
            }
        }
        let emitters: Vec<(usize, f64)> = net
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.emission_factor > 0.0)
            .map(|(g, gen)| (g, gen.emission_factor))
            .collect();
        if !emitters.is_empty() {
            let coeffs = (0..t_len)
                .flat_map(|t| emitters.iter().map(move |&(g, e)| (t, g, e)))
                .map(|(t, g, e)| (v.gen[t][g], e))
                .collect();
            linked(&mut lp, coeffs, Sense::Le, 0.0, &[(layout.emission(w), 1.0)]);
        }

        // Storage.
        for (s, st) in net.storage.iter().enumerate() {
            let (xp, xe) = (layout.storage_power(s), layout.storage_energy(s));
            for t in 0..t_len {
                linked(
                    &mut lp,
                    vec![
                        (v.charge[t][s], 1.0),
                        (v.discharge[t][s], 1.0),
                        (v.storage_reserve[t][s], 1.0),
                    ],
                    Sense::Le,
                    st.power_capacity,
                    &[(xp, 1.0)],
                );
                linked(
                    &mut lp,
                    vec![(v.soc[t + 1][s], 1.0)],
                    Sense::Le,
                    st.energy_capacity,
                    &[(xe, 1.0)],
                );
                lp.add_row(
                    vec![(v.soc[t + 1][s], 1.0), (v.storage_reserve[t][s], -1.0)],
                    Sense::Ge,
                    0.0,
                );
                lp.add_row(
                    vec![
                        (v.soc[t + 1][s], 1.0),
                        (v.soc[t][s], -1.0),
                        (v.charge[t][s], -st.efficiency),
                        (v.discharge[t][s], 1.0 / st.efficiency),
                    ],
                    Sense::Eq,
                    0.0,
                );
            }
            let gamma = st.boundary_soc;
            for k in [0, t_len] {
                linked(
                    &mut lp,
                    vec![(v.soc[k][s], 1.0)],
                    Sense::Eq,
                    gamma * st.energy_capacity,
                    &[(xe, gamma)],
                );
            }
        }

        // System reserve margin.
        if params.reserve_margin > 0.0 {
            for t in 0..t_len {
                let mut coeffs: Vec<(usize, f64)> =
                    v.gen_reserve[t].iter().map(|&c| (c, 1.0)).collect();
                coeffs.extend(v.storage_reserve[t].iter().map(|&c| (c, 1.0)));
                lp.add_row(coeffs, Sense::Ge, params.reserve_margin * sc.total_load(t));
            }
        }

        // Nodal balance: injections - A_br p_br = load.
        for t in 0..t_len {
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.n_buses()];
            let mut load = vec![0.0; net.n_buses()];
            for (g, gen) in net.generators.iter().enumerate() {
                rows[gen.bus].push((v.gen[t][g], 1.0));
            }
            for (s, st) in net.storage.iter().enumerate() {
                rows[st.bus].push((v.discharge[t][s], 1.0));
                rows[st.bus].push((v.charge[t][s], -1.0));
            }
            for (l, line) in net.hvdc.iter().enumerate() {
                rows[line.from_bus].push((v.hvdc[t][l], -1.0));
                rows[line.to_bus].push((v.hvdc[t][l], 1.0));
            }
            for (d, ld) in net.loads.iter().enumerate() {
                rows[ld.bus].push((v.shed[t][d], 1.0));
                load[ld.bus] += sc.loads[t][d];
            }
            for br in &net.branches {
                rows[br.from_bus].push((v.flow[t][br.id], 1.0));
                rows[br.to_bus].push((v.flow[t][br.id], -1.0));
            }
            for (bus, coeffs) in rows.into_iter().enumerate() {
                lp.add_row(coeffs, Sense::Eq, load[bus]);
            }
        }

        // Kirchhoff's voltage law at frozen impedances.
        match self.formulation {
            FlowFormulation::Transport => {}
            FlowFormulation::Cycles => {
                for t in 0..t_len {
                    for cycle in self.cycles.rows() {
                        let coeffs = cycle
                            .iter()
                            .map(|&(j, d)| (v.flow[t][j], f64::from(d) * self.chi[j]))
                            .collect();
                        lp.add_row(coeffs, Sense::Eq, 0.0);
                    }
                }
            }
            FlowFormulation::Angles => {
                let slack = net.slack();
                for _ in 0..t_len {
                    v.angle.push(
                        (0..net.n_buses())
                            .map(|bus| (bus != slack).then(|| lp.add_var(0.0, -inf, inf)))
                            .collect(),
                    );
                }
                for t in 0..t_len {
                    for br in &net.branches {
                        let mut coeffs = vec![(v.flow[t][br.id], self.chi[br.id])];
                        if let Some(c) = v.angle[t][br.to_bus] {
                            coeffs.push((c, -1.0));
                        }
                        if let Some(c) = v.angle[t][br.from_bus] {
                            coeffs.push((c, 1.0));
                        }
                        lp.add_row(coeffs, Sense::Eq, 0.0);
                    }
                }
            }
        }

        // Base-case ratings.
        let rf = self.mode.rating_factor();
        for t in 0..t_len {
            for br in &net.branches {
                let xb = layout.branch(br.id);
                let w_eff = br.base_capacity * rf;
                let p = v.flow[t][br.id];
                linked(&mut lp, vec![(p, 1.0)], Sense::Le, w_eff, &[(xb, 1.0)]);
                linked(&mut lp, vec![(p, 1.0)], Sense::Ge, -w_eff, &[(xb, -1.0)]);
            }
        }

        // Active contingencies.
        if let Some(sens) = &self.sensitivities {
            let eta = params.contingency_rating;
            for c in active {
                if c.hour >= t_len || c.monitored >= net.n_branches() || c.monitored == c.outage {
                    return Err(Error::Validation(format!("invalid contingency {c:?}")));
                }
                let lambda = sens.lodf().get(c.monitored, c.outage).ok_or_else(|| {
                    Error::Validation(format!("branch {} is not an admissible outage", c.outage))
                })?;
                let s = lp.add_var(params.violation_cost, 0.0, inf);
                v.slacks.push((*c, s));
                let i = c.monitored;
                let xb = layout.branch(i);
                let w_eff = net.branches[i].base_capacity * rf;
                let flow = [(v.flow[c.hour][i], 1.0), (v.flow[c.hour][c.outage], lambda)];
                let mut lo = flow.to_vec();
                lo.push((s, 1.0));
                linked(&mut lp, lo, Sense::Ge, -eta * w_eff, &[(xb, -eta)]);
                let mut hi = flow.to_vec();
                hi.push((s, -1.0));
                linked(&mut lp, hi, Sense::Le, eta * w_eff, &[(xb, eta)]);
            }
        }

        Ok(Subproblem { lp, links, vars: v })
    }

    /// The oracle: solves the scenario LP at `x` over `active`, assembles the
    /// subgradient from duals, and screens every other contingency.
    pub fn oracle(&self, x: &[f64], w: usize, active: &ContingencySet) -> Result<OracleResult> {
        let sub = self.build(x, w, active)?;
        let sol = solve_lp(&sub.lp, &self.settings);
        if sol.status != LpStatus::Optimal {
            return Err(Error::Solver(format!(
                "scenario {} subproblem is {:?}: {}",
                self.instance.scenarios[w].id, sol.status, sol.message
            )));
        }
        let decision = self.extract(&sub, &sol.primal);
        let subgradient = sub.subgradient(&sol.duals, x.len());
        let costs = self.costs(w, &decision);
        let screening = match &self.sensitivities {
            Some(sens) => screen_contingencies(
                &decision.flow,
                sens.lodf(),
                &self.contingency_ratings(x),
                active,
                self.instance.params.violation_cost,
                self.threshold,
            ),
            None => Screening::default(),
        };
        Ok(OracleResult {
            value: sol.objective,
            subgradient,
            penalty: screening.penalty,
            new_contingencies: screening.contingencies(),
            implied_slacks: screening.slacks,
            decision,
            costs,
        })
    }

    /// Solves with constraint generation until no new violation appears,
    /// returning the final oracle result and the active set.
    pub fn solve_to_convergence(
        &self,
        x: &[f64],
        w: usize,
        mut active: ContingencySet,
        max_rounds: usize,
    ) -> Result<(OracleResult, ContingencySet)> {
        for _ in 0..max_rounds {
            let res = self.oracle(x, w, &active)?;
            if res.new_contingencies.is_empty() {
                return Ok((res, active));
            }
            active.extend(res.new_contingencies.iter().copied());
        }
        Err(Error::Solver(format!(
            "contingency generation did not settle within {max_rounds} rounds"
        )))
    }

    fn extract(&self, sub: &Subproblem, primal: &[f64]) -> OperationalDecision {
        let pick = |m: &Vec<Vec<usize>>| -> Vec<Vec<f64>> {
            m.iter()
                .map(|row| row.iter().map(|&c| primal[c]).collect())
                .collect()
        };
        let v = &sub.vars;
        OperationalDecision {
            gen: pick(&v.gen),
            gen_reserve: pick(&v.gen_reserve),
            charge: pick(&v.charge),
            discharge: pick(&v.discharge),
            storage_reserve: pick(&v.storage_reserve),
            soc: pick(&v.soc),
            shed: pick(&v.shed),
            hvdc: pick(&v.hvdc),
            flow: pick(&v.flow),
            slacks: v.slacks.iter().map(|(c, k)| (*c, primal[*k])).collect(),
        }
    }

    /// Cost split of a decision; violation terms cover in-LP slacks only.
    pub fn costs(&self, w: usize, d: &OperationalDecision) -> OperatingCost {
        let sc = &self.instance.scenarios[w];
        let params = &self.instance.params;
        let mut out = OperatingCost::default();
        for t in 0..d.gen.len() {
            out.generation += d.gen[t]
                .iter()
                .zip(&sc.gen_costs[t])
                .map(|(p, c)| p * c)
                .sum::<f64>();
            out.shed_mwh += d.shed[t].iter().sum::<f64>();
        }
        out.violation_mwh = d.slacks.iter().map(|(_, s)| s).sum();
        out.shed = params.shed_cost * out.shed_mwh;
        out.violation = params.violation_cost * out.violation_mwh;
        out
    }
}

/// Branch flows of every hour by PTDF from nodal injections.
pub fn ptdf_flows(sens: &Sensitivities, injections: &[Vec<f64>]) -> Vec<Vec<f64>> {
    injections.iter().map(|p| sens.flows(p)).collect()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::fundamental_basis;
    use crate::model::TechParams;
    use crate::network::{Branch, Bus, Generator, Load};
    use approx::assert_abs_diff_eq;

    fn gen(id: usize, bus: usize, cap: f64) -> Generator {
        Generator {
            id,
            bus,
            capacity: cap,
            expansion_limit: 0.0,
            expansion_cost: 0.0,
            ramp_rate: 1.0,
            emission_factor: 0.0,
        }
    }

    fn line(id: usize, from: usize, to: usize, w: f64) -> Branch {
        Branch {
            id,
            from_bus: from,
            to_bus: to,
            base_impedance: 0.1,
            base_capacity: w,
            expansion_limit: 100.0,
            expansion_cost: 1.0,
        }
    }

    fn instance(
        n: usize,
        branches: Vec<Branch>,
        gens: Vec<Generator>,
        load_bus: usize,
        load: f64,
        avail: f64,
    ) -> Instance {
        let g = gens.len();
        let net = Network::new(
            (0..n).map(|id| Bus { id, is_slack: false }).collect(),
            branches,
            vec![],
            gens,
            vec![],
            vec![Load { id: 0, bus: load_bus }],
        )
        .unwrap();
        let sc = Scenario {
            id: "s".into(),
            weight: 1.0,
            gen_costs: vec![vec![10.0; g]],
            availability: vec![vec![avail; g]],
            loads: vec![vec![load]],
        };
        Instance::new(net, TechParams::default(), vec![sc]).unwrap()
    }

    fn model(inst: &Instance, mode: Mode) -> OperationsModel<'_> {
        let basis = fundamental_basis(&inst.network, 0).unwrap();
        let d = DirectedCycleBasis::orient(&basis, &inst.network).unwrap();
        let xh = vec![0.0; inst.network.n_branches()];
        OperationsModel::new(inst, &d, &xh, mode, SolverSettings::default()).unwrap()
    }

    #[test]
    fn single_bus_merit_order() {
        let inst = instance(1, vec![], vec![gen(0, 0, 100.0)], 0, 40.0, 1.0);
        let m = model(&inst, Mode::Scdc);
        let x = vec![0.0; inst.layout().len()];
        let r = m.oracle(&x, 0, &ContingencySet::new()).unwrap();
        assert_abs_diff_eq!(r.value, 400.0, epsilon = 1e-5);
        assert_eq!(r.penalty, 0.0);
        assert!(r.new_contingencies.is_empty());
    }

    #[test]
    fn unavailable_fleet_sheds_everything() {
        let inst = instance(1, vec![], vec![gen(0, 0, 100.0)], 0, 40.0, 0.0);
        let m = model(&inst, Mode::Dc);
        let x = vec![0.0; inst.layout().len()];
        let r = m.oracle(&x, 0, &ContingencySet::new()).unwrap();
        assert_abs_diff_eq!(r.value, 10_000.0 * 40.0, epsilon = 1e-3);
        assert_abs_diff_eq!(r.costs.shed_mwh, 40.0, epsilon = 1e-6);
    }

    fn triangle() -> Instance {
        let br = vec![line(0, 0, 1, 100.0), line(1, 1, 2, 100.0), line(2, 2, 0, 100.0)];
        instance(3, br, vec![gen(0, 0, 500.0)], 1, 150.0, 1.0)
    }

    #[test]
    fn triangle_active_contingency_pays_violation() {
        // 150 MW from bus 0 to bus 1: 100 on the direct branch, 50 around.
        // Losing branch 0 pushes all 150 MW over branch 1 (rating 100).
        let inst = triangle();
        let m = model(&inst, Mode::Scdc);
        let x = vec![0.0; inst.layout().len()];
        let active: ContingencySet = [Contingency::new(0, 1, 0)].into();
        let r = m.oracle(&x, 0, &active).unwrap();
        assert_eq!(r.decision.slacks.len(), 1);
        assert_abs_diff_eq!(r.decision.slacks[0].1, 50.0, epsilon = 1e-5);
        assert_abs_diff_eq!(r.value, 10.0 * 150.0 + 2000.0 * 50.0, epsilon = 1e-3);
        // Each MW on branch 1 lowers the violation one-for-one.
        let g1 = r.subgradient[inst.layout().branch(1)];
        assert_abs_diff_eq!(g1, -2000.0, epsilon = 1e-3);
    }

    #[test]
    fn triangle_screening_reports_overloads() {
        let inst = triangle();
        let m = model(&inst, Mode::Scdc);
        let x = vec![0.0; inst.layout().len()];
        let r = m.oracle(&x, 0, &ContingencySet::new()).unwrap();
        let found: Vec<_> = r.implied_slacks.iter().map(|(c, s)| (c.monitored, c.outage, *s)).collect();
        // Outage of 0 overloads 1 and 2 by 50 each; other outages push 150
        // onto branch 0.
        assert!(found.iter().any(|&(i, j, s)| i == 1 && j == 0 && (s - 50.0).abs() < 1e-5));
        assert!(found.iter().any(|&(i, j, s)| i == 0 && j == 1 && (s - 50.0).abs() < 1e-5));
        assert_abs_diff_eq!(r.penalty, 2000.0 * found.iter().map(|f| f.2).sum::<f64>(), epsilon = 1e-6);
    }

    #[test]
    fn huge_branches_clear_all_violations() {
        let inst = triangle();
        let m = model(&inst, Mode::Scdc);
        let mut x = vec![0.0; inst.layout().len()];
        for i in 0..3 {
            x[inst.layout().branch(i)] = 1e4;
        }
        let r = m.oracle(&x, 0, &ContingencySet::new()).unwrap();
        assert_eq!(r.penalty, 0.0);
        assert!(r.new_contingencies.is_empty());
    }

    #[test]
    fn radial_network_has_nothing_to_screen() {
        let inst = instance(3, vec![line(0, 0, 1, 10.0), line(1, 1, 2, 10.0)], vec![gen(0, 0, 500.0)], 2, 50.0, 1.0);
        let m = model(&inst, Mode::Scdc);
        assert!(m.outages().is_empty());
        let r = m.oracle(&vec![0.0; inst.layout().len()], 0, &ContingencySet::new()).unwrap();
        assert_eq!(r.penalty, 0.0);
        assert!(r.new_contingencies.is_empty());
    }

    #[test]
    fn screening_single_overload() {
        // Two parallel branches; outage of one doubles the other.
        let inst = instance(2, vec![line(0, 0, 1, 100.0), line(1, 0, 1, 100.0)], vec![gen(0, 0, 1.0)], 1, 0.0, 1.0);
        let sens = Sensitivities::new(&inst.network, &[0.0, 0.0], &[0, 1]).unwrap();
        let flows = vec![vec![60.0, 60.0]];
        let s = screen_contingencies(&flows, sens.lodf(), &[100.0, 100.0], &ContingencySet::new(), 2000.0, 1e-6);
        assert_eq!(s.slacks.len(), 2);
        for (_, v) in &s.slacks {
            assert_abs_diff_eq!(*v, 20.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(s.penalty, 80_000.0, epsilon = 1e-6);
        let zero = screen_contingencies(&[vec![0.0, 0.0]], sens.lodf(), &[100.0, 100.0], &ContingencySet::new(), 2000.0, 1e-6);
        assert!(zero.slacks.is_empty());
    }
}
