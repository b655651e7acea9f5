//! Static grid description and the DC sensitivity engines.
//!
//! Branch flows follow the sign convention `p_ni = A_br * p_br`, where the
//! incidence matrix `A_br` carries `-1` at a branch's `from` bus and `+1` at
//! its `to` bus. A positive flow therefore injects power at the `to` end of
//! the branch and withdraws it at the `from` end.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cycles::CycleBasis;
use crate::error::{Error, Result};

/// Threshold on `|1 - self_ptdf|` below which an outage is treated as islanding.
pub const ISLANDING_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_slack: bool,
}

/// An AC branch. Serialized field names are part of the network file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    #[serde(rename = "from")]
    pub from_bus: usize,
    #[serde(rename = "to")]
    pub to_bus: usize,
    /// Reactance before any expansion, per unit.
    #[serde(rename = "x0")]
    pub base_impedance: f64,
    /// Existing thermal rating, MW.
    #[serde(rename = "w_br")]
    pub base_capacity: f64,
    /// Upper bound on new capacity, MW.
    #[serde(rename = "x_br_max")]
    pub expansion_limit: f64,
    /// Annualized cost of new capacity, $/MW.
    #[serde(rename = "c_br")]
    pub expansion_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HvdcLine {
    pub id: usize,
    #[serde(rename = "from")]
    pub from_bus: usize,
    #[serde(rename = "to")]
    pub to_bus: usize,
    #[serde(rename = "w_dc")]
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    /// Existing capacity, MW.
    #[serde(rename = "w_g")]
    pub capacity: f64,
    #[serde(rename = "x_g_max")]
    pub expansion_limit: f64,
    #[serde(rename = "c_g")]
    pub expansion_cost: f64,
    /// Ramp limit as a fraction of installed capacity per hour.
    #[serde(rename = "ramp")]
    pub ramp_rate: f64,
    /// Weight of each MWh in the fossil budget.
    #[serde(rename = "emission")]
    pub emission_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageUnit {
    pub id: usize,
    pub bus: usize,
    #[serde(rename = "w_p")]
    pub power_capacity: f64,
    #[serde(rename = "w_e")]
    pub energy_capacity: f64,
    #[serde(rename = "x_p_max")]
    pub power_limit: f64,
    #[serde(rename = "x_e_max")]
    pub energy_limit: f64,
    #[serde(rename = "c_p")]
    pub power_cost: f64,
    #[serde(rename = "c_e")]
    pub energy_cost: f64,
    /// One-way efficiency in (0, 1].
    #[serde(rename = "eta")]
    pub efficiency: f64,
    /// State-of-charge ratio imposed at the start and end of every scenario.
    #[serde(rename = "gamma")]
    pub boundary_soc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: usize,
    pub bus: usize,
}

/// A validated grid: connected AC graph, device maps and a slack bus.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub hvdc: Vec<HvdcLine>,
    pub generators: Vec<Generator>,
    pub storage: Vec<StorageUnit>,
    pub loads: Vec<Load>,
    slack: usize,
}

fn check_ids<'a>(kind: &str, ids: impl Iterator<Item = usize>) -> Result<()> {
    let mut seen = BTreeSet::new();
    let mut count = 0;
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Validation(format!("duplicate {kind} id {id}")));
        }
        count += 1;
    }
    if let Some(&last) = seen.iter().next_back() {
        if last + 1 != count {
            return Err(Error::Validation(format!(
                "{kind} ids must be contiguous 0..{count}, found id {last}"
            )));
        }
    }
    Ok(())
}

impl Network {
    /// Validates and assembles a network. Every list must be indexed by its
    /// `id` field (ids `0..len` in order, after sorting).
    pub fn new(
        mut buses: Vec<Bus>,
        mut branches: Vec<Branch>,
        mut hvdc: Vec<HvdcLine>,
        mut generators: Vec<Generator>,
        mut storage: Vec<StorageUnit>,
        mut loads: Vec<Load>,
    ) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::Validation("network has no buses".into()));
        }
        check_ids("bus", buses.iter().map(|b| b.id))?;
        check_ids("branch", branches.iter().map(|b| b.id))?;
        check_ids("hvdc", hvdc.iter().map(|b| b.id))?;
        check_ids("generator", generators.iter().map(|b| b.id))?;
        check_ids("storage", storage.iter().map(|b| b.id))?;
        check_ids("load", loads.iter().map(|b| b.id))?;
        buses.sort_by_key(|b| b.id);
        branches.sort_by_key(|b| b.id);
        hvdc.sort_by_key(|b| b.id);
        generators.sort_by_key(|b| b.id);
        storage.sort_by_key(|b| b.id);
        loads.sort_by_key(|b| b.id);

        let n = buses.len();
        let flagged: Vec<usize> = buses.iter().filter(|b| b.is_slack).map(|b| b.id).collect();
        let slack = match flagged.as_slice() {
            [] => 0,
            [s] => *s,
            _ => {
                return Err(Error::Validation(format!(
                    "more than one slack bus: {flagged:?}"
                )))
            }
        };
        for (idx, bus) in buses.iter_mut().enumerate() {
            bus.is_slack = idx == slack;
        }

        let bus_ok = |bus: usize, what: String| -> Result<()> {
            if bus >= n {
                Err(Error::Validation(format!("{what} references unknown bus {bus}")))
            } else {
                Ok(())
            }
        };
        for br in &branches {
            bus_ok(br.from_bus, format!("branch {}", br.id))?;
            bus_ok(br.to_bus, format!("branch {}", br.id))?;
            if br.from_bus == br.to_bus {
                return Err(Error::DegenerateBranch {
                    branch: br.id,
                    reason: "from and to bus coincide".into(),
                });
            }
            if !(br.base_impedance > 0.0) || !br.base_impedance.is_finite() {
                return Err(Error::DegenerateBranch {
                    branch: br.id,
                    reason: format!("impedance x0 = {} must be positive", br.base_impedance),
                });
            }
            if !(br.base_capacity > 0.0) || !br.base_capacity.is_finite() {
                return Err(Error::DegenerateBranch {
                    branch: br.id,
                    reason: format!("rating w_br = {} must be positive", br.base_capacity),
                });
            }
            if !(br.expansion_limit >= 0.0) || !(br.expansion_cost >= 0.0) {
                return Err(Error::DegenerateBranch {
                    branch: br.id,
                    reason: "expansion limit and cost must be nonnegative".into(),
                });
            }
        }
        for line in &hvdc {
            bus_ok(line.from_bus, format!("hvdc {}", line.id))?;
            bus_ok(line.to_bus, format!("hvdc {}", line.id))?;
            if !(line.capacity >= 0.0) {
                return Err(Error::Validation(format!(
                    "hvdc {} has negative capacity",
                    line.id
                )));
            }
        }
        for g in &generators {
            bus_ok(g.bus, format!("generator {}", g.id))?;
            let fields = [g.capacity, g.expansion_limit, g.expansion_cost, g.ramp_rate, g.emission_factor];
            if fields.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "generator {} has a negative or non-finite parameter",
                    g.id
                )));
            }
        }
        for s in &storage {
            bus_ok(s.bus, format!("storage {}", s.id))?;
            let fields = [
                s.power_capacity,
                s.energy_capacity,
                s.power_limit,
                s.energy_limit,
                s.power_cost,
                s.energy_cost,
            ];
            if fields.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "storage {} has a negative or non-finite parameter",
                    s.id
                )));
            }
            if !(s.efficiency > 0.0 && s.efficiency <= 1.0) {
                return Err(Error::Validation(format!(
                    "storage {} efficiency {} outside (0, 1]",
                    s.id, s.efficiency
                )));
            }
            if !(0.0..=1.0).contains(&s.boundary_soc) {
                return Err(Error::Validation(format!(
                    "storage {} boundary state of charge {} outside [0, 1]",
                    s.id, s.boundary_soc
                )));
            }
        }
        for l in &loads {
            bus_ok(l.bus, format!("load {}", l.id))?;
        }

        let net = Network {
            buses,
            branches,
            hvdc,
            generators,
            storage,
            loads,
            slack,
        };
        net.check_connected()?;
        Ok(net)
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Dimension of the cycle space, `b - n + 1`.
    pub fn cycle_space_dim(&self) -> usize {
        self.n_branches() + 1 - self.n_buses()
    }

    /// Adjacency lists of `(neighbor, branch)` pairs.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n_buses()];
        for br in &self.branches {
            adj[br.from_bus].push((br.to_bus, br.id));
            adj[br.to_bus].push((br.from_bus, br.id));
        }
        adj
    }

    fn check_connected(&self) -> Result<()> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n_buses()];
        let mut queue = VecDeque::from([self.slack]);
        seen[self.slack] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(bus) => Err(Error::Disconnected(bus)),
            None => Ok(()),
        }
    }

    /// Column of bus `bus` in the reduced (slack-free) incidence matrix.
    pub fn reduced_index(&self, bus: usize) -> Option<usize> {
        match bus.cmp(&self.slack) {
            std::cmp::Ordering::Less => Some(bus),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(bus - 1),
        }
    }

    /// The `b x n` signed incidence `(A_br)^T`: `-1` at `from`, `+1` at `to`.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_branches(), self.n_buses());
        for br in &self.branches {
            m[(br.id, br.from_bus)] = -1.0;
            m[(br.id, br.to_bus)] = 1.0;
        }
        m
    }

    /// The incidence with the slack column removed, `b x (n-1)`.
    pub fn reduced_incidence(&self) -> DMatrix<f64> {
        let full = self.incidence();
        full.remove_column(self.slack)
    }

    /// Branch reactances at expansion levels `x_hat` (MW per branch).
    pub fn impedances(&self, x_hat: &[f64]) -> Result<Vec<f64>> {
        if x_hat.len() != self.n_branches() {
            return Err(Error::Validation(format!(
                "expected {} branch capacities, got {}",
                self.n_branches(),
                x_hat.len()
            )));
        }
        self.branches
            .iter()
            .zip(x_hat)
            .map(|(br, &x)| impedance(br, x))
            .collect()
    }
}

/// Reactance of `branch` after adding `expansion` MW in parallel:
/// `x0 * w / (w + x)`.
pub fn impedance(branch: &Branch, expansion: f64) -> Result<f64> {
    if !(expansion >= 0.0) || !expansion.is_finite() {
        return Err(Error::Validation(format!(
            "branch {}: expansion {expansion} must be a nonnegative number",
            branch.id
        )));
    }
    if !(branch.base_capacity > 0.0) {
        return Err(Error::DegenerateBranch {
            branch: branch.id,
            reason: "zero base rating leaves the impedance undefined".into(),
        });
    }
    let w = branch.base_capacity;
    Ok(branch.base_impedance * w / (w + expansion))
}

/// Reduced susceptance matrix `A^T B A` and its Cholesky factor.
fn reduced_laplacian(net: &Network, chi: &[f64]) -> Result<(DMatrix<f64>, Cholesky<f64, nalgebra::Dyn>)> {
    let a = net.reduced_incidence();
    let b = DVector::from_iterator(chi.len(), chi.iter().map(|c| 1.0 / c));
    let ba = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| b[r] * a[(r, c)]);
    let lap = a.transpose() * &ba;
    let chol = Cholesky::new(lap).ok_or_else(|| {
        Error::Singular("reduced susceptance matrix is not positive definite".into())
    })?;
    Ok((ba, chol))
}

/// PTDF matrix `B A (A^T B A)^{-1}` at expansion `x_hat`, size `b x (n-1)`.
pub fn ptdf(net: &Network, x_hat: &[f64]) -> Result<DMatrix<f64>> {
    let chi = net.impedances(x_hat)?;
    if net.n_buses() == 1 {
        return Ok(DMatrix::zeros(net.n_branches(), 0));
    }
    let (ba, chol) = reduced_laplacian(net, &chi)?;
    // Phi^T = L^{-1} (B A)^T since L is symmetric.
    let phi_t = chol.solve(&ba.transpose());
    Ok(phi_t.transpose())
}

/// Line outage distribution factors for the listed outage branches.
#[derive(Clone, Debug)]
pub struct Lodf {
    /// `b x |outages|`, column `k` belongs to branch `outages[k]`.
    matrix: DMatrix<f64>,
    outages: Vec<usize>,
    column_of: Vec<Option<usize>>,
}

impl Lodf {
    /// `Lambda_ij`; `None` when `j` is not one of the computed outages.
    pub fn get(&self, monitored: usize, outage: usize) -> Option<f64> {
        self.column_of
            .get(outage)
            .copied()
            .flatten()
            .map(|k| self.matrix[(monitored, k)])
    }

    pub fn outages(&self) -> &[usize] {
        &self.outages
    }

    /// Column view for outage `k` (by position in [`Lodf::outages`]).
    pub fn column(&self, k: usize) -> nalgebra::DVectorView<'_, f64> {
        self.matrix.column(k)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// LODF columns from `Phi A^T [I - diag(Phi A^T)]^{-1}`, restricted to the
/// `outages`. The self factor `Lambda_jj` is set to `-1`: an outaged branch
/// carries no post-contingency flow.
pub fn lodf(net: &Network, x_hat: &[f64], outages: &[usize]) -> Result<Lodf> {
    let phi = ptdf(net, x_hat)?;
    lodf_from_ptdf(net, &phi, outages)
}

pub(crate) fn lodf_from_ptdf(net: &Network, phi: &DMatrix<f64>, outages: &[usize]) -> Result<Lodf> {
    let b = net.n_branches();
    let a = net.reduced_incidence();
    let mut matrix = DMatrix::zeros(b, outages.len());
    let mut column_of = vec![None; b];
    for (k, &j) in outages.iter().enumerate() {
        if j >= b {
            return Err(Error::Validation(format!("outage branch {j} does not exist")));
        }
        // Column j of Phi A^T: flows caused by a unit transfer across branch j.
        let transfer = phi * a.row(j).transpose();
        let denom = 1.0 - transfer[j];
        if denom.abs() < ISLANDING_TOL {
            return Err(Error::Islanding(j));
        }
        for i in 0..b {
            matrix[(i, k)] = if i == j { -1.0 } else { transfer[i] / denom };
        }
        column_of[j] = Some(k);
    }
    Ok(Lodf {
        matrix,
        outages: outages.to_vec(),
        column_of,
    })
}

/// Precomputed PTDF/LODF pair for a fixed impedance-defining capacity.
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct Sensitivities {
    ptdf: DMatrix<f64>,
    lodf: Lodf,
    evaluated_at: Vec<f64>,
    slack: usize,
}

impl Sensitivities {
    pub fn new(net: &Network, x_hat: &[f64], outages: &[usize]) -> Result<Self> {
        let phi = ptdf(net, x_hat)?;
        let lodf = lodf_from_ptdf(net, &phi, outages)?;
        Ok(Sensitivities {
            ptdf: phi,
            lodf,
            evaluated_at: x_hat.to_vec(),
            slack: net.slack(),
        })
    }

    pub fn ptdf(&self) -> &DMatrix<f64> {
        &self.ptdf
    }

    pub fn lodf(&self) -> &Lodf {
        &self.lodf
    }

    pub fn evaluated_at(&self) -> &[f64] {
        &self.evaluated_at
    }

    /// Branch flows for nodal injections over all `n` buses; the slack entry
    /// is ignored.
    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        let reduced: Vec<f64> = injections
            .iter()
            .enumerate()
            .filter(|(bus, _)| *bus != self.slack)
            .map(|(_, v)| *v)
            .collect();
        let p = DVector::from_vec(reduced);
        (&self.ptdf * p).iter().copied().collect()
    }
}

/// Branches contained in at least one basis cycle, i.e. the non-bridges.
pub fn non_islanding_set(basis: &CycleBasis) -> Vec<usize> {
    let mut set = BTreeSet::new();
    for row in basis.rows() {
        set.extend(row.iter_ones());
    }
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn branch(id: usize, from: usize, to: usize, x0: f64, w: f64) -> Branch {
        Branch {
            id,
            from_bus: from,
            to_bus: to,
            base_impedance: x0,
            base_capacity: w,
            expansion_limit: 100.0,
            expansion_cost: 1.0,
        }
    }

    fn grid(n: usize, edges: &[(usize, usize)]) -> Network {
        let buses = (0..n).map(|id| Bus { id, is_slack: false }).collect();
        let branches = edges
            .iter()
            .enumerate()
            .map(|(id, &(f, t))| branch(id, f, t, 0.1, 100.0))
            .collect();
        Network::new(buses, branches, vec![], vec![], vec![], vec![]).unwrap()
    }

    #[test]
    fn impedance_examples() {
        let b = branch(0, 0, 1, 0.1, 100.0);
        assert_eq!(impedance(&b, 0.0).unwrap(), 0.1);
        assert_abs_diff_eq!(impedance(&b, 100.0).unwrap(), 0.05, epsilon = 1e-15);
        let b = branch(0, 0, 1, 0.2, 50.0);
        assert_abs_diff_eq!(impedance(&b, 150.0).unwrap(), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn impedance_rejects_zero_rating() {
        let b = branch(0, 0, 1, 0.1, 0.0);
        assert!(matches!(impedance(&b, 0.0), Err(Error::DegenerateBranch { .. })));
        assert!(matches!(impedance(&b, 10.0), Err(Error::DegenerateBranch { .. })));
        let buses = vec![Bus { id: 0, is_slack: false }, Bus { id: 1, is_slack: false }];
        let err = Network::new(buses, vec![b], vec![], vec![], vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::DegenerateBranch { branch: 0, .. }));
    }

    #[test]
    fn incidence_examples() {
        let net = grid(2, &[(0, 1)]);
        assert_eq!(net.reduced_incidence(), DMatrix::from_row_slice(1, 1, &[1.0]));

        let tri = grid(3, &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(tri.reduced_incidence().rank(1e-9), 2);

        let path = grid(4, &[(0, 1), (1, 2), (2, 3)]);
        for row in path.incidence().row_iter() {
            assert_eq!(row.iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|v| **v == -1.0).count(), 1);
        }
    }

    #[test]
    fn disconnected_network_rejected() {
        let buses = (0..3).map(|id| Bus { id, is_slack: false }).collect();
        let err = Network::new(buses, vec![branch(0, 0, 1, 0.1, 10.0)], vec![], vec![], vec![], vec![])
            .unwrap_err();
        assert!(matches!(err, Error::Disconnected(2)));
    }

    #[test]
    fn duplicate_bus_named() {
        let buses = vec![Bus { id: 0, is_slack: false }, Bus { id: 0, is_slack: false }];
        let err = Network::new(buses, vec![], vec![], vec![], vec![], vec![]).unwrap_err();
        assert!(err.to_string().contains("duplicate bus id 0"), "{err}");
    }

    #[test]
    fn ptdf_single_line() {
        let net = grid(2, &[(0, 1)]);
        let phi = ptdf(&net, &[0.0]).unwrap();
        assert_abs_diff_eq!(phi[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ptdf_triangle_split() {
        // 1 MW injected at bus 1, withdrawn at the slack (bus 0).
        let net = grid(3, &[(0, 1), (1, 2), (2, 0)]);
        let phi = ptdf(&net, &[0.0; 3]).unwrap();
        let flows = &phi * DVector::from_vec(vec![1.0, 0.0]);
        // Direct branch 0 (0->1): positive flow runs to->from, i.e. 1 -> 0.
        assert_abs_diff_eq!(flows[0], 2.0 / 3.0, epsilon = 1e-12);
        // Two-hop path 1 -> 2 -> 0 carries one third.
        assert_abs_diff_eq!(flows[1].abs(), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(flows[2].abs(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lodf_parallel_pair_diverts_everything() {
        let net = grid(2, &[(0, 1), (0, 1)]);
        let l = lodf(&net, &[0.0, 0.0], &[0, 1]).unwrap();
        assert_abs_diff_eq!(l.get(1, 0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.get(0, 1).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(l.get(0, 0), Some(-1.0));
    }

    #[test]
    fn lodf_triangle_is_unit_magnitude() {
        let net = grid(3, &[(0, 1), (1, 2), (2, 0)]);
        let l = lodf(&net, &[0.0; 3], &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v = l.get(i, j).unwrap();
                if i == j {
                    assert_eq!(v, -1.0);
                } else {
                    assert_abs_diff_eq!(v.abs(), 1.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn lodf_detects_bridge() {
        let net = grid(3, &[(0, 1), (1, 2), (2, 0), (2, 0)]);
        assert!(lodf(&net, &[0.0; 4], &[0]).is_ok());
        let tree = grid(3, &[(0, 1), (1, 2)]);
        assert!(matches!(lodf(&tree, &[0.0; 2], &[1]), Err(Error::Islanding(1))));
    }
}
