//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls the code under test for the quantity being checked:
//! cycles are enumerated exhaustively, bridges come from a DFS lowlink pass,
//! outage flows from re-solving the network with the branch removed, and the
//! restricted expansion problem is written out as a plain LP.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridcap::correction::FixedOperations;
use gridcap::cycles::fundamental_basis;
use gridcap::generate::random_graph;
use gridcap::io::load_instance;
use gridcap::model::{Instance, TechParams};
use gridcap::network::{non_islanding_set, Branch, Bus, Network};
use gridcap::solver::{solve_lp, LinearProgram, LpStatus, Sense, SolverSettings};

pub fn instance_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../instances").join(name)
}

pub fn bundled(name: &str) -> Instance {
    load_instance(&instance_dir(name)).unwrap_or_else(|e| panic!("loading {name}: {e}"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn network_from_edges(n: usize, edges: &[(usize, usize)], rng: &mut impl Rng) -> Network {
    let buses = (0..n).map(|id| Bus { id, is_slack: id == 0 }).collect();
    let branches = edges
        .iter()
        .enumerate()
        .map(|(id, &(f, t))| Branch {
            id,
            from_bus: f,
            to_bus: t,
            base_impedance: rng.gen_range(0.01..0.3),
            base_capacity: rng.gen_range(50.0..500.0),
            expansion_limit: rng.gen_range(50.0..400.0),
            expansion_cost: rng.gen_range(1.0..50.0),
        })
        .collect();
    Network::new(buses, branches, vec![], vec![], vec![], vec![]).unwrap()
}

/// Random connected simple graph with `n` buses and `b` branches.
pub fn random_network(n: usize, b: usize, rng: &mut impl Rng) -> Network {
    let edges = random_graph(n, b, rng);
    network_from_edges(n, &edges, rng)
}

pub fn complete_graph(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect()
}

pub fn petersen() -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for i in 0..5 {
        e.push((i, (i + 1) % 5)); // outer pentagon
        e.push((i, i + 5)); // spokes
        e.push((5 + i, 5 + (i + 2) % 5)); // inner pentagram
    }
    e
}

/// Every simple cycle as a bitmask over branches (graphs with < 64 edges).
pub fn simple_cycles(net: &Network) -> Vec<u64> {
    let n = net.n_buses();
    let mut adj = vec![Vec::new(); n];
    for br in &net.branches {
        adj[br.from_bus].push((br.to_bus, br.id));
        adj[br.to_bus].push((br.from_bus, br.id));
    }
    let mut found = BTreeSet::new();
    // Cycles are rooted at their smallest vertex.
    fn dfs(
        adj: &[Vec<(usize, usize)>],
        start: usize,
        v: usize,
        visited: &mut Vec<bool>,
        mask: u64,
        depth: usize,
        found: &mut BTreeSet<u64>,
    ) {
        for &(u, e) in &adj[v] {
            if mask & (1 << e) != 0 {
                continue;
            }
            if u == start && depth >= 2 {
                found.insert(mask | (1 << e));
            } else if u > start && !visited[u] {
                visited[u] = true;
                dfs(adj, start, u, visited, mask | (1 << e), depth + 1, found);
                visited[u] = false;
            }
        }
    }
    for s in 0..n {
        let mut visited = vec![false; n];
        visited[s] = true;
        dfs(&adj, s, s, &mut visited, 0, 0, &mut found);
    }
    found.into_iter().collect()
}

/// Insert `v` into a GF(2) echelon set keyed by leading bit; true if independent.
fn insert_independent(echelon: &mut Vec<u64>, mut v: u64) -> bool {
    for &r in echelon.iter() {
        let lead = 63 - r.leading_zeros();
        if v & (1 << lead) != 0 {
            v ^= r;
        }
    }
    if v == 0 {
        return false;
    }
    echelon.push(v);
    echelon.sort_unstable_by(|a, b| b.cmp(a));
    true
}

/// Minimal cycle basis by the greedy matroid argument: shortest cycles
/// first, keep each one independent of those kept so far.
/// Returns `(total length, longest cycle)`.
pub fn horton_minimum(net: &Network) -> (usize, usize) {
    let mut cycles = simple_cycles(net);
    cycles.sort_by_key(|c| c.count_ones());
    let need = net.n_branches() + 1 - net.n_buses();
    let mut echelon = Vec::new();
    let (mut total, mut longest) = (0, 0);
    for c in cycles {
        if echelon.len() == need {
            break;
        }
        if insert_independent(&mut echelon, c) {
            total += c.count_ones() as usize;
            longest = longest.max(c.count_ones() as usize);
        }
    }
    assert_eq!(echelon.len(), need, "cycle space not spanned");
    (total, longest)
}

/// Bridges by DFS lowlink.
pub fn bridges(net: &Network) -> BTreeSet<usize> {
    let n = net.n_buses();
    let mut adj = vec![Vec::new(); n];
    for br in &net.branches {
        adj[br.from_bus].push((br.to_bus, br.id));
        adj[br.to_bus].push((br.from_bus, br.id));
    }
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut out = BTreeSet::new();
    let mut timer = 0;
    fn visit(
        v: usize,
        parent_edge: Option<usize>,
        adj: &[Vec<(usize, usize)>],
        disc: &mut [usize],
        low: &mut [usize],
        timer: &mut usize,
        out: &mut BTreeSet<usize>,
    ) {
        disc[v] = *timer;
        low[v] = *timer;
        *timer += 1;
        for &(u, e) in &adj[v] {
            if Some(e) == parent_edge {
                continue;
            }
            if disc[u] == usize::MAX {
                visit(u, Some(e), adj, disc, low, timer, out);
                low[v] = low[v].min(low[u]);
                if low[u] > disc[v] {
                    out.insert(e);
                }
            } else {
                low[v] = low[v].min(disc[u]);
            }
        }
    }
    visit(0, None, &adj, &mut disc, &mut low, &mut timer, &mut out);
    out
}

/// DC flows by a direct Laplacian solve, optionally with one branch out of
/// service. `q` follows the library convention `A^T f = q`, where `A` has
/// `-1` at `from` and `+1` at `to`; `chi` gives per-branch reactances.
pub fn dc_flows(net: &Network, chi: &[f64], q: &[f64], removed: Option<usize>) -> Vec<f64> {
    let n = net.n_buses();
    let slack = net.slack();
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for br in &net.branches {
        if Some(br.id) == removed {
            continue;
        }
        let y = 1.0 / chi[br.id];
        let (a, b) = (br.from_bus, br.to_bus);
        lap[(a, a)] += y;
        lap[(b, b)] += y;
        lap[(a, b)] -= y;
        lap[(b, a)] -= y;
    }
    // Pin the slack angle to zero.
    let mut rhs = DVector::from_column_slice(q);
    for c in 0..n {
        lap[(slack, c)] = 0.0;
    }
    lap[(slack, slack)] = 1.0;
    rhs[slack] = 0.0;
    let theta = lap.lu().solve(&rhs).expect("network with outage is connected");
    net.branches
        .iter()
        .map(|br| {
            if Some(br.id) == removed {
                0.0
            } else {
                (theta[br.to_bus] - theta[br.from_bus]) / chi[br.id]
            }
        })
        .collect()
}

/// Balanced random nodal vector (sums to zero).
pub fn balanced_injections(n: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    let mean = q.iter().sum::<f64>() / n as f64;
    q.iter_mut().for_each(|v| *v -= mean);
    q
}

/// Data for the restricted expansion LP: fixed flows at a given impedance
/// point and the branch economics.
pub struct RtepData<'a> {
    pub net: &'a Network,
    pub params: &'a TechParams,
    pub outages: &'a [usize],
    /// `[scenario][hour][bus]`.
    pub injections: &'a [Vec<Vec<f64>>],
    pub weights: &'a [f64],
    pub x_hat: &'a [f64],
}

/// Base and post-contingency flows from outage re-solves.
pub fn rtep_flows(d: &RtepData) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<Vec<f64>>>>) {
    let chi = d.net.impedances(d.x_hat).unwrap();
    let mut base = Vec::new();
    let mut post = Vec::new();
    for sc in d.injections {
        let mut b_sc = Vec::new();
        let mut p_sc = Vec::new();
        for q in sc {
            b_sc.push(dc_flows(d.net, &chi, q, None));
            p_sc.push(d.outages.iter().map(|&j| dc_flows(d.net, &chi, q, Some(j))).collect());
        }
        base.push(b_sc);
        post.push(p_sc);
    }
    (base, post)
}

/// Objective of the restricted expansion problem at capacities `x`.
pub fn rtep_objective(d: &RtepData, x: &[f64]) -> f64 {
    let (_, post) = rtep_flows(d);
    let eta = d.params.contingency_rating;
    let mut obj: f64 = d.net.branches.iter().zip(x).map(|(b, v)| b.expansion_cost * v).sum();
    for (w, sc) in post.iter().enumerate() {
        for hour in sc {
            for (k, flows) in hour.iter().enumerate() {
                for (i, br) in d.net.branches.iter().enumerate() {
                    if i == d.outages[k] {
                        continue;
                    }
                    let over = flows[i].abs() - eta * (br.base_capacity + x[i]);
                    obj += d.weights[w] * d.params.violation_cost * over.max(0.0);
                }
            }
        }
    }
    obj
}

/// The restricted expansion LP solved directly: `(objective, x)`.
pub fn rtep_lp(d: &RtepData) -> (f64, Vec<f64>) {
    let (base, post) = rtep_flows(d);
    let eta = d.params.contingency_rating;
    let mut lp = LinearProgram::new();
    let mut lower = vec![0.0_f64; d.net.n_branches()];
    for sc in &base {
        for f in sc {
            for (i, br) in d.net.branches.iter().enumerate() {
                lower[i] = lower[i].max(f[i].abs() - br.base_capacity);
            }
        }
    }
    let xs: Vec<usize> = d
        .net
        .branches
        .iter()
        .enumerate()
        .map(|(i, br)| lp.add_var(br.expansion_cost, lower[i].min(br.expansion_limit), br.expansion_limit))
        .collect();
    for (w, sc) in post.iter().enumerate() {
        for hour in sc {
            for (k, flows) in hour.iter().enumerate() {
                for (i, br) in d.net.branches.iter().enumerate() {
                    if i == d.outages[k] {
                        continue;
                    }
                    let s = lp.add_var(d.weights[w] * d.params.violation_cost, 0.0, f64::INFINITY);
                    // s >= |f| - eta (w + x)
                    let cap = flows[i].abs() - eta * br.base_capacity;
                    lp.add_row(vec![(s, 1.0), (xs[i], eta)], Sense::Ge, cap);
                }
            }
        }
    }
    let settings = SolverSettings {
        feas_tol: 1e-9,
        opt_tol: 1e-9,
        ..SolverSettings::default()
    };
    let sol = solve_lp(&lp, &settings);
    assert_eq!(sol.status, LpStatus::Optimal, "{}", sol.message);
    (sol.objective, xs.iter().map(|&k| sol.primal[k]).collect())
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Random point of the investment polytope (no battery coupling).
pub fn random_portfolio(inst: &Instance, rng: &mut impl Rng) -> Vec<f64> {
    let layout = inst.layout();
    let upper = inst.investment_limits();
    let share = inst.params.emission_budget / layout.scenarios as f64;
    (0..layout.len())
        .map(|k| {
            let hi = if k >= layout.emission(0) { share } else { upper[k] };
            rng.gen_range(0.0..=hi)
        })
        .collect()
}

pub fn small_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let buses = r.gen_range(3..=6);
    let max = buses * (buses - 1) / 2;
    let spec = gridcap::generate::InstanceSpec {
        buses,
        branches: Some(r.gen_range(buses..=max.min(buses + 3))),
        scenarios: r.gen_range(1..=2),
        hours: r.gen_range(1..=3),
        seed,
    };
    gridcap::generate::generate(&spec).unwrap()
}

pub struct RtepCase {
    pub net: Network,
    pub params: TechParams,
    pub outages: Vec<usize>,
    pub ops: FixedOperations,
    pub x_hat: Vec<f64>,
}

/// Random restricted-expansion input with a wide spread of cost ratios,
/// expansion limits and scenario weights.
pub fn rtep_case(seed: u64) -> RtepCase {
    let mut r = rng(seed);
    let n = r.gen_range(3..=7);
    let b = r.gen_range(n..=(n * (n - 1) / 2).min(n + 4));
    let mut net = random_network(n, b, &mut r);
    for br in &mut net.branches {
        // Wide cost range so the rank r_i runs from 1 past the breakpoint count.
        br.expansion_cost = 10f64.powf(r.gen_range(0.0..4.5));
        br.expansion_limit = r.gen_range(0.0..400.0);
    }
    let params = TechParams {
        contingency_rating: r.gen_range(1.0..1.3),
        ..TechParams::default()
    };
    let outages = non_islanding_set(&fundamental_basis(&net, 0).unwrap());
    let scenarios = r.gen_range(1..=3);
    let unit = r.gen_bool(0.5);
    let ops = FixedOperations {
        injections: (0..scenarios)
            .map(|_| (0..r.gen_range(1..=3)).map(|_| balanced_injections(n, 400.0, &mut r)).collect())
            .collect(),
        weights: (0..scenarios).map(|_| if unit { 1.0 } else { r.gen_range(0.2..2.0) }).collect(),
    };
    let x_hat = net.branches.iter().map(|b| r.gen_range(0.0..=b.expansion_limit)).collect();
    RtepCase {
        net,
        params,
        outages,
        ops,
        x_hat,
    }
}

impl RtepCase {
    pub fn data(&self) -> RtepData<'_> {
        RtepData {
            net: &self.net,
            params: &self.params,
            outages: &self.outages,
            injections: &self.ops.injections,
            weights: &self.ops.weights,
            x_hat: &self.x_hat,
        }
    }
}
