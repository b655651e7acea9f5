//! Problem data shared by every stage: scenarios, system parameters, the
//! investment portfolio layout and the feasible investment polytope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// System-wide technical and economic parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TechParams {
    /// Load shedding penalty, $/MWh.
    #[serde(rename = "c_sh")]
    pub shed_cost: f64,
    /// Contingency violation penalty, $/MWh.
    #[serde(rename = "c_vio")]
    pub violation_cost: f64,
    /// Post-contingency rating as a multiple of the normal rating.
    #[serde(rename = "eta_c")]
    pub contingency_rating: f64,
    /// Reserve requirement as a fraction of total load.
    #[serde(rename = "reserve_margin")]
    pub reserve_margin: f64,
    /// Bound on the summed fossil budget across scenarios, MWh.
    #[serde(rename = "em_budget")]
    pub emission_budget: f64,
}

impl Default for TechParams {
    fn default() -> Self {
        TechParams {
            shed_cost: 10_000.0,
            violation_cost: 2_000.0,
            contingency_rating: 1.0,
            reserve_margin: 0.0,
            emission_budget: 1e9,
        }
    }
}

impl TechParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.shed_cost >= 0.0) || !(self.violation_cost > 0.0) {
            return Err(Error::Validation(
                "penalties must satisfy c_sh >= 0 and c_vio > 0".into(),
            ));
        }
        if !(self.contingency_rating >= 1.0) {
            return Err(Error::Validation(format!(
                "post-contingency rating multiple {} must be at least 1",
                self.contingency_rating
            )));
        }
        if !(self.reserve_margin >= 0.0) {
            return Err(Error::Validation("reserve margin must be nonnegative".into()));
        }
        if !(self.emission_budget >= 0.0) || !self.emission_budget.is_finite() {
            return Err(Error::Validation("emission budget must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// One operating scenario over `T` hours. Arrays are indexed `[hour][device]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub weight: f64,
    /// Generator variable cost, $/MWh.
    pub gen_costs: Vec<Vec<f64>>,
    /// Generator availability factor in [0, 1].
    pub availability: Vec<Vec<f64>>,
    /// Load level, MW.
    pub loads: Vec<Vec<f64>>,
}

impl Scenario {
    pub fn hours(&self) -> usize {
        self.loads.len()
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let t = self.hours();
        let err = |msg: String| Err(Error::Validation(format!("scenario {}: {msg}", self.id)));
        if t == 0 {
            return err("has no hours".into());
        }
        if !(self.weight > 0.0) || !self.weight.is_finite() {
            return err(format!("weight {} must be positive", self.weight));
        }
        if self.gen_costs.len() != t || self.availability.len() != t {
            return err("hour counts differ between cost, availability and load".into());
        }
        for h in 0..t {
            if self.gen_costs[h].len() != net.generators.len()
                || self.availability[h].len() != net.generators.len()
            {
                return err(format!("hour {h} does not cover every generator"));
            }
            if self.loads[h].len() != net.loads.len() {
                return err(format!("hour {h} does not cover every load"));
            }
            if let Some(a) = self.availability[h].iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return err(format!("availability {a} outside [0, 1] at hour {h}"));
            }
            if let Some(l) = self.loads[h].iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
                return err(format!("load {l} must be nonnegative at hour {h}"));
            }
            if self.gen_costs[h].iter().any(|c| !c.is_finite() || *c < 0.0) {
                return err(format!("generator costs must be finite and nonnegative at hour {h}"));
            }
        }
        Ok(())
    }

    pub fn total_load(&self, hour: usize) -> f64 {
        self.loads[hour].iter().sum()
    }
}

/// Index map of the flat portfolio vector
/// `x = (x_g, x_es_p, x_es_e, x_br, x_em)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PortfolioLayout {
    pub generators: usize,
    pub storage: usize,
    pub branches: usize,
    pub scenarios: usize,
}

impl PortfolioLayout {
    pub fn len(&self) -> usize {
        self.generators + 2 * self.storage + self.branches + self.scenarios
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn generator(&self, g: usize) -> usize {
        g
    }

    pub fn storage_power(&self, s: usize) -> usize {
        self.generators + s
    }

    pub fn storage_energy(&self, s: usize) -> usize {
        self.generators + self.storage + s
    }

    pub fn branch(&self, i: usize) -> usize {
        self.generators + 2 * self.storage + i
    }

    pub fn emission(&self, w: usize) -> usize {
        self.generators + 2 * self.storage + self.branches + w
    }

    pub fn branch_range(&self) -> std::ops::Range<usize> {
        self.branch(0)..self.branch(0) + self.branches
    }

    /// Human-readable component label.
    pub fn label(&self, k: usize) -> String {
        let s = self.storage;
        let g = self.generators;
        let b = self.branches;
        if k < g {
            format!("gen[{k}]")
        } else if k < g + s {
            format!("es_p[{}]", k - g)
        } else if k < g + 2 * s {
            format!("es_e[{}]", k - g - s)
        } else if k < g + 2 * s + b {
            format!("br[{}]", k - g - 2 * s)
        } else {
            format!("em[{}]", k - g - 2 * s - b)
        }
    }
}

/// New capacity decisions, split by category.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvestmentPortfolio {
    /// MW per generator.
    pub generation: Vec<f64>,
    /// MW per storage unit.
    pub storage_power: Vec<f64>,
    /// MWh per storage unit.
    pub storage_energy: Vec<f64>,
    /// MW per AC branch.
    pub branch: Vec<f64>,
    /// Fossil budget per scenario, MWh.
    pub emission: Vec<f64>,
}

impl InvestmentPortfolio {
    pub fn zeros(layout: &PortfolioLayout) -> Self {
        InvestmentPortfolio {
            generation: vec![0.0; layout.generators],
            storage_power: vec![0.0; layout.storage],
            storage_energy: vec![0.0; layout.storage],
            branch: vec![0.0; layout.branches],
            emission: vec![0.0; layout.scenarios],
        }
    }

    pub fn from_flat(layout: &PortfolioLayout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.len() {
            return Err(Error::Validation(format!(
                "portfolio has {} entries, expected {}",
                x.len(),
                layout.len()
            )));
        }
        let (g, s, b) = (layout.generators, layout.storage, layout.branches);
        Ok(InvestmentPortfolio {
            generation: x[..g].to_vec(),
            storage_power: x[g..g + s].to_vec(),
            storage_energy: x[g + s..g + 2 * s].to_vec(),
            branch: x[g + 2 * s..g + 2 * s + b].to_vec(),
            emission: x[g + 2 * s + b..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.generation.clone();
        out.extend(&self.storage_power);
        out.extend(&self.storage_energy);
        out.extend(&self.branch);
        out.extend(&self.emission);
        out
    }

    pub fn layout(&self) -> PortfolioLayout {
        PortfolioLayout {
            generators: self.generation.len(),
            storage: self.storage_power.len(),
            branches: self.branch.len(),
            scenarios: self.emission.len(),
        }
    }
}

/// `{x : lower <= x <= upper, A_le x <= b_le, A_eq x = b_eq}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub inequalities: Vec<(Vec<(usize, f64)>, f64)>,
    pub equalities: Vec<(Vec<(usize, f64)>, f64)>,
}

impl Polytope {
    pub fn dim(&self) -> usize {
        self.upper.len()
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Polytope {
            lower,
            upper,
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let dot = |row: &[(usize, f64)]| row.iter().map(|(k, a)| a * x[*k]).sum::<f64>();
        x.iter()
            .enumerate()
            .all(|(k, v)| *v >= self.lower[k] - tol && *v <= self.upper[k] + tol)
            && self.inequalities.iter().all(|(row, b)| dot(row) <= b + tol)
            && self.equalities.iter().all(|(row, b)| (dot(row) - b).abs() <= tol)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }
}

/// Which physics the operational model enforces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Transport model: nodal balance and ratings, no KVL.
    Nf,
    /// DC power flow, no contingencies.
    Dc,
    /// DC power flow with ratings derated to 70%, no contingencies.
    Dc07,
    /// Security-constrained DC power flow.
    Scdc,
}

impl Mode {
    pub fn enforces_kvl(self) -> bool {
        !matches!(self, Mode::Nf)
    }

    pub fn enforces_contingencies(self) -> bool {
        matches!(self, Mode::Scdc)
    }

    /// Multiplier on existing branch ratings.
    pub fn rating_factor(self) -> f64 {
        match self {
            Mode::Dc07 => 0.7,
            _ => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Nf => "nf",
            Mode::Dc => "dc",
            Mode::Dc07 => "dc07",
            Mode::Scdc => "scdc",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A validated planning instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub network: Network,
    pub params: TechParams,
    pub scenarios: Vec<Scenario>,
}

impl Instance {
    pub fn new(network: Network, params: TechParams, scenarios: Vec<Scenario>) -> Result<Self> {
        params.validate()?;
        if scenarios.is_empty() {
            return Err(Error::Validation("instance has no scenarios".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for s in &scenarios {
            s.validate(&network)?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate scenario id {}", s.id)));
            }
            // Reserves have no slack, so existing firm capacity must cover
            // them for every portfolio to be operable.
            for t in 0..s.hours() {
                let firm: f64 = network
                    .generators
                    .iter()
                    .zip(&s.availability[t])
                    .map(|(g, a)| a * g.capacity)
                    .sum();
                let need = params.reserve_margin * s.total_load(t);
                if firm + 1e-9 < need {
                    return Err(Error::Validation(format!(
                        "scenario {} hour {t}: reserve requirement {need} exceeds available existing capacity {firm}",
                        s.id
                    )));
                }
            }
        }
        Ok(Instance {
            network,
            params,
            scenarios,
        })
    }

    pub fn layout(&self) -> PortfolioLayout {
        PortfolioLayout {
            generators: self.network.generators.len(),
            storage: self.network.storage.len(),
            branches: self.network.branches.len(),
            scenarios: self.scenarios.len(),
        }
    }

    /// Investment cost vector `c`; fossil budgets are free.
    pub fn investment_costs(&self) -> Vec<f64> {
        let net = &self.network;
        let mut c: Vec<f64> = net.generators.iter().map(|g| g.expansion_cost).collect();
        c.extend(net.storage.iter().map(|s| s.power_cost));
        c.extend(net.storage.iter().map(|s| s.energy_cost));
        c.extend(net.branches.iter().map(|b| b.expansion_cost));
        c.extend(std::iter::repeat(0.0).take(self.scenarios.len()));
        c
    }

    pub fn investment_limits(&self) -> Vec<f64> {
        let net = &self.network;
        let mut u: Vec<f64> = net.generators.iter().map(|g| g.expansion_limit).collect();
        u.extend(net.storage.iter().map(|s| s.power_limit));
        u.extend(net.storage.iter().map(|s| s.energy_limit));
        u.extend(net.branches.iter().map(|b| b.expansion_limit));
        u.extend(std::iter::repeat(self.params.emission_budget).take(self.scenarios.len()));
        u
    }

    /// Investment polytope; `battery_duration` couples energy to power
    /// capacity (`x_es_e = d * x_es_p`) when set.
    pub fn polytope(&self, battery_duration: Option<f64>) -> Polytope {
        let layout = self.layout();
        let upper = self.investment_limits();
        let mut poly = Polytope::boxed(vec![0.0; upper.len()], upper);
        if layout.scenarios > 0 {
            let row = (0..layout.scenarios).map(|w| (layout.emission(w), 1.0)).collect();
            poly.inequalities.push((row, self.params.emission_budget));
        }
        if let Some(d) = battery_duration {
            for s in 0..layout.storage {
                poly.equalities.push((
                    vec![(layout.storage_energy(s), 1.0), (layout.storage_power(s), -d)],
                    0.0,
                ));
            }
        }
        poly
    }

    pub fn hours(&self) -> usize {
        self.scenarios.iter().map(|s| s.hours()).max().unwrap_or(0)
    }
}
