//! Cycle bases of the AC branch graph and the oriented KVL matrix.
//!
//! A basis is stored as one bit row per cycle over the branch set. The
//! minimal basis is obtained by a single exchange pass: each row is replaced
//! by the shortest cycle among all GF(2) combinations of the current basis
//! that keep that row, found with a small integer program.

use std::collections::VecDeque;

use bitvec::prelude::*;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::solver::{BranchAndBound, IpSolver, LinearProgram, Sense, SolverSettings};

pub type EdgeSet = BitVec<u64, Lsb0>;

/// Undirected cycle basis: binary incidence rows over the branches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleBasis {
    n_edges: usize,
    rows: Vec<EdgeSet>,
}

impl CycleBasis {
    pub fn new(n_edges: usize, rows: Vec<EdgeSet>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != n_edges) {
            return Err(Error::Contract(format!(
                "every cycle row must have {n_edges} entries"
            )));
        }
        Ok(CycleBasis { n_edges, rows })
    }

    pub fn from_edge_lists(n_edges: usize, lists: &[Vec<usize>]) -> Result<Self> {
        let rows = lists
            .iter()
            .map(|list| {
                let mut row = bitvec![u64, Lsb0; 0; n_edges];
                for &e in list {
                    if e >= n_edges {
                        return Err(Error::Contract(format!("edge {e} out of range")));
                    }
                    let cur = row[e];
                    row.set(e, !cur);
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CycleBasis { n_edges, rows })
    }

    pub fn rows(&self) -> &[EdgeSet] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Sum of cycle lengths, `||C||_1`.
    pub fn total_length(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones()).sum()
    }

    pub fn longest(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones()).max().unwrap_or(0)
    }

    pub fn edge_lists(&self) -> Vec<Vec<usize>> {
        self.rows.iter().map(|r| r.iter_ones().collect()).collect()
    }

    pub fn rank(&self) -> usize {
        gf2_rank(&self.rows)
    }

    /// Dense 0/1 matrix, `n_c x b`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.n_edges);
        for (r, row) in self.rows.iter().enumerate() {
            for e in row.iter_ones() {
                m[(r, e)] = 1.0;
            }
        }
        m
    }
}

/// Oriented cycles: each row lists `(branch, sign)` in traversal order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DirectedCycleBasis {
    n_edges: usize,
    rows: Vec<Vec<(usize, i8)>>,
}

impl DirectedCycleBasis {
    pub fn rows(&self) -> &[Vec<(usize, i8)>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense `{-1, 0, 1}` matrix `D`, `n_c x b`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.n_edges);
        for (r, row) in self.rows.iter().enumerate() {
            for &(e, s) in row {
                m[(r, e)] = s as f64;
            }
        }
        m
    }

    /// Drops orientation.
    pub fn undirected(&self) -> CycleBasis {
        let lists: Vec<Vec<usize>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|(e, _)| *e).collect())
            .collect();
        CycleBasis::from_edge_lists(self.n_edges, &lists).expect("edges in range")
    }

    /// Orients every row of an undirected basis.
    pub fn orient(basis: &CycleBasis, net: &Network) -> Result<Self> {
        let rows = basis
            .rows()
            .iter()
            .map(|r| orient_cycle(r, net))
            .collect::<Result<Vec<_>>>()?;
        Ok(DirectedCycleBasis {
            n_edges: basis.n_edges(),
            rows,
        })
    }
}

/// Rank over GF(2) by Gaussian elimination.
pub fn gf2_rank(rows: &[EdgeSet]) -> usize {
    let mut work: Vec<EdgeSet> = rows.to_vec();
    let mut rank = 0;
    let width = work.first().map_or(0, |r| r.len());
    for col in 0..width {
        let Some(pivot) = (rank..work.len()).find(|&r| work[r][col]) else {
            continue;
        };
        work.swap(rank, pivot);
        let pivot_row = work[rank].clone();
        for r in 0..work.len() {
            if r != rank && work[r][col] {
                work[r] ^= pivot_row.as_bitslice();
            }
        }
        rank += 1;
        if rank == work.len() {
            break;
        }
    }
    rank
}

/// Fundamental cycle basis of a BFS spanning tree rooted at `root`: one
/// cycle per non-tree branch, closed through the tree path.
pub fn fundamental_basis(net: &Network, root: usize) -> Result<CycleBasis> {
    let n = net.n_buses();
    let b = net.n_branches();
    if root >= n {
        return Err(Error::Validation(format!("root bus {root} does not exist")));
    }
    let adj = net.adjacency();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let mut tree_edge = vec![false; b];
    depth[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(v, e) in &adj[u] {
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                parent[v] = Some((u, e));
                tree_edge[e] = true;
                queue.push_back(v);
            }
        }
    }
    if let Some(bus) = depth.iter().position(|d| *d == usize::MAX) {
        return Err(Error::Disconnected(bus));
    }

    let mut rows = Vec::new();
    for br in &net.branches {
        if tree_edge[br.id] {
            continue;
        }
        let mut row = bitvec![u64, Lsb0; 0; b];
        row.set(br.id, true);
        let (mut a, mut c) = (br.from_bus, br.to_bus);
        while a != c {
            if depth[a] >= depth[c] {
                let (p, e) = parent[a].expect("non-root has a parent");
                row.set(e, true);
                a = p;
            } else {
                let (p, e) = parent[c].expect("non-root has a parent");
                row.set(e, true);
                c = p;
            }
        }
        rows.push(row);
    }
    Ok(CycleBasis { n_edges: b, rows })
}

/// True when `edges` is one connected cycle with every touched bus of degree 2.
pub fn is_simple_cycle(edges: &BitSlice<u64, Lsb0>, net: &Network) -> bool {
    let members: Vec<usize> = edges.iter_ones().collect();
    if members.is_empty() {
        return false;
    }
    let mut degree = vec![0usize; net.n_buses()];
    for &e in &members {
        let br = &net.branches[e];
        degree[br.from_bus] += 1;
        degree[br.to_bus] += 1;
    }
    if degree.iter().any(|d| *d != 0 && *d != 2) {
        return false;
    }
    // Connectivity over the member edges.
    let start = net.branches[members[0]].from_bus;
    let mut seen_bus = vec![false; net.n_buses()];
    seen_bus[start] = true;
    let mut queue = VecDeque::from([start]);
    let adj = net.adjacency();
    while let Some(u) = queue.pop_front() {
        for &(v, e) in &adj[u] {
            if edges[e] && !seen_bus[v] {
                seen_bus[v] = true;
                queue.push_back(v);
            }
        }
    }
    degree
        .iter()
        .enumerate()
        .all(|(bus, d)| *d == 0 || seen_bus[bus])
}

/// Signs a simple cycle by walking it: `+1` where the walk follows the
/// branch's `from -> to` direction, `-1` otherwise. The walk starts on the
/// lowest-numbered branch in its own direction.
pub fn orient_cycle(edges: &BitSlice<u64, Lsb0>, net: &Network) -> Result<Vec<(usize, i8)>> {
    if !is_simple_cycle(edges, net) {
        return Err(Error::Contract(format!(
            "edge set {:?} is not a single simple cycle",
            edges.iter_ones().collect::<Vec<_>>()
        )));
    }
    let adj = net.adjacency();
    let first = edges.first_one().expect("nonempty");
    let start = net.branches[first].from_bus;
    let mut out = vec![(first, 1i8)];
    let mut prev_edge = first;
    let mut at = net.branches[first].to_bus;
    while at != start {
        let &(next, e) = adj[at]
            .iter()
            .find(|(_, e)| edges[*e] && *e != prev_edge)
            .expect("degree-2 vertex has a second cycle edge");
        let sign = if net.branches[e].from_bus == at { 1 } else { -1 };
        out.push((e, sign));
        prev_edge = e;
        at = next;
    }
    Ok(out)
}

/// Shortest cycle among the GF(2) combinations of `basis` rows that include
/// row `target`. Solves
///
/// ```text
/// min sum_j v_j  s.t.  sum_k C_kj w_k = 2 u_j + v_j,  w_target = 1,
///     w, v binary,  0 <= u_j <= ceil(n_c / 2) integer.
/// ```
pub fn improve_cycle(basis: &CycleBasis, target: usize, solver: &dyn IpSolver) -> Result<EdgeSet> {
    let nc = basis.len();
    if target >= nc {
        return Err(Error::Validation(format!("cycle {target} out of range")));
    }
    let b = basis.n_edges();
    let u_max = nc.div_ceil(2) as f64;
    let mut ip = LinearProgram::new();
    let w: Vec<usize> = (0..nc)
        .map(|k| {
            let lo = if k == target { 1.0 } else { 0.0 };
            ip.add_integer_var(0.0, lo, 1.0)
        })
        .collect();
    // Edges outside every basis cycle can never be selected.
    let mut v_of_edge = vec![None; b];
    for e in 0..b {
        let members: Vec<usize> = (0..nc).filter(|&k| basis.rows[k][e]).collect();
        if members.is_empty() {
            continue;
        }
        let u = ip.add_integer_var(0.0, 0.0, u_max);
        let v = ip.add_integer_var(1.0, 0.0, 1.0);
        let mut coeffs: Vec<(usize, f64)> = members.iter().map(|&k| (w[k], 1.0)).collect();
        coeffs.push((u, -2.0));
        coeffs.push((v, -1.0));
        ip.add_row(coeffs, Sense::Eq, 0.0);
        v_of_edge[e] = Some(v);
    }
    let sol = solver.solve_ip(&ip);
    if !sol.is_optimal() {
        return Err(Error::Solver(format!(
            "cycle improvement for row {target}: {:?} {}",
            sol.status, sol.message
        )));
    }
    let mut out = bitvec![u64, Lsb0; 0; b];
    for (e, v) in v_of_edge.iter().enumerate() {
        if let Some(v) = v {
            out.set(e, sol.primal[*v] > 0.5);
        }
    }
    Ok(out)
}

/// One exchange pass over every row, then orientation. Returns the minimal
/// undirected basis and its directed counterpart.
pub fn minimal_cycle_basis(
    initial: &CycleBasis,
    net: &Network,
    solver: &dyn IpSolver,
) -> Result<(CycleBasis, DirectedCycleBasis)> {
    let expected = initial.len();
    if initial.n_edges() != net.n_branches() {
        return Err(Error::Validation("basis width differs from branch count".into()));
    }
    if gf2_rank(initial.rows()) != expected {
        return Err(Error::Contract("initial cycle rows are not independent".into()));
    }
    let mut basis = initial.clone();
    for target in 0..expected {
        let cycle = improve_cycle(&basis, target, solver)?;
        if !is_simple_cycle(&cycle, net) {
            return Err(Error::Contract(format!(
                "improved row {target} is not a simple cycle"
            )));
        }
        basis.rows[target] = cycle;
        if gf2_rank(basis.rows()) != expected {
            return Err(Error::Contract(format!(
                "exchange at row {target} lost independence"
            )));
        }
    }
    let directed = DirectedCycleBasis::orient(&basis, net)?;
    Ok((basis, directed))
}

/// Fundamental basis from the slack bus, improved to a minimal basis with
/// the default branch-and-bound engine.
pub fn minimal_basis(net: &Network, settings: &SolverSettings) -> Result<(CycleBasis, DirectedCycleBasis)> {
    let initial = fundamental_basis(net, net.slack())?;
    minimal_cycle_basis(&initial, net, &BranchAndBound::new(*settings))
}
