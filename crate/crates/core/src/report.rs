//! Run reports: machine-readable JSON, a human summary, the iteration log as
//! JSON lines and the gap trajectory as CSV columns.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bundle::{BundleOutcome, IterationKind, IterationRecord};
use crate::error::{Error, Result};
use crate::extensive::Evaluation;
use crate::model::{Instance, InvestmentPortfolio, Mode};

/// Weighted cost components; they add up to the reported total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub investment: f64,
    pub operating: f64,
    pub shed_penalty: f64,
    pub violation_penalty: f64,
    pub total: f64,
    pub shed_gwh: f64,
    pub violation_gwh: f64,
}

impl CostBreakdown {
    pub fn sum(&self) -> f64 {
        self.investment + self.operating + self.shed_penalty + self.violation_penalty
    }
}

/// New capacity by category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitySummary {
    pub generation_gw: f64,
    pub storage_gw: f64,
    pub storage_gwh: f64,
    pub branch_gw: f64,
}

impl CapacitySummary {
    pub fn of(p: &InvestmentPortfolio) -> Self {
        let gw = |v: &[f64]| v.iter().sum::<f64>() / 1e3;
        CapacitySummary {
            generation_gw: gw(&p.generation),
            storage_gw: gw(&p.storage_power),
            storage_gwh: gw(&p.storage_energy),
            branch_gw: gw(&p.branch),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup_s: f64,
    pub oracle_s: f64,
    pub master_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub kvl_enforced: bool,
    pub contingencies_enforced: bool,
    pub lower: f64,
    pub upper: f64,
    pub rel_gap: f64,
    pub converged: bool,
    pub iterations: usize,
    pub cost: CostBreakdown,
    pub capacity: CapacitySummary,
    /// Active contingencies per scenario at termination.
    pub active_contingencies: Vec<usize>,
    pub portfolio: InvestmentPortfolio,
    pub timings: Timings,
}

impl RunReport {
    /// Decomposes the incumbent's upper bound. Screened violations outside
    /// the active sets are charged to the violation penalty.
    pub fn from_bundle(inst: &Instance, mode: Mode, out: &BundleOutcome, timings: Timings) -> Result<Self> {
        let layout = inst.layout();
        let portfolio = InvestmentPortfolio::from_flat(&layout, &out.x)?;
        let investment: f64 = inst.investment_costs().iter().zip(&out.x).map(|(c, x)| c * x).sum();
        let mut cost = CostBreakdown {
            investment,
            operating: 0.0,
            shed_penalty: 0.0,
            violation_penalty: 0.0,
            total: out.upper,
            shed_gwh: 0.0,
            violation_gwh: 0.0,
        };
        for (w, sc) in inst.scenarios.iter().enumerate() {
            let c = &out.costs[w];
            let sigma = out.penalties[w];
            cost.operating += sc.weight * c.generation;
            cost.shed_penalty += sc.weight * c.shed;
            cost.violation_penalty += sc.weight * (c.violation + sigma);
            cost.shed_gwh += sc.weight * c.shed_mwh / 1e3;
            cost.violation_gwh += sc.weight * (c.violation_mwh + sigma / inst.params.violation_cost) / 1e3;
        }
        Ok(RunReport {
            mode,
            kvl_enforced: mode.enforces_kvl(),
            contingencies_enforced: mode.enforces_contingencies(),
            lower: out.lower,
            upper: out.upper,
            rel_gap: out.rel_gap(),
            converged: out.converged,
            iterations: out.trajectory.len(),
            cost,
            capacity: CapacitySummary::of(&portfolio),
            active_contingencies: out.active.iter().map(|a| a.len()).collect(),
            portfolio,
            timings,
        })
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode              {}", self.mode);
        if !self.kvl_enforced {
            let _ = writeln!(s, "KVL               disabled (transport model)");
        }
        if !self.contingencies_enforced {
            let _ = writeln!(s, "contingencies     not enforced");
        }
        let _ = writeln!(
            s,
            "status            {} after {} iterations",
            if self.converged { "converged" } else { "iteration cap reached" },
            self.iterations
        );
        let _ = writeln!(s, "lower bound       {:.6e}", self.lower);
        let _ = writeln!(s, "upper bound       {:.6e}", self.upper);
        let _ = writeln!(s, "relative gap      {:.3e}", self.rel_gap);
        s.push_str(&cost_table(&self.cost));
        let c = &self.capacity;
        let _ = writeln!(s, "Generation GW     {:.4}", c.generation_gw);
        let _ = writeln!(s, "Storage GW        {:.4}", c.storage_gw);
        let _ = writeln!(s, "Storage GWh       {:.4}", c.storage_gwh);
        let _ = writeln!(s, "Branch GW         {:.4}", c.branch_gw);
        let _ = writeln!(s, "active contingencies {:?}", self.active_contingencies);
        s
    }

    /// Writes `report.json`, `summary.txt`, `trajectory.jsonl` and `gap.csv`.
    pub fn emit(&self, trajectory: &[IterationRecord], dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        crate::io::write_json(self, &dir.join("report.json"))?;
        let mut summary = self.summary();
        let t = &self.timings;
        let _ = writeln!(
            summary,
            "time (s)          setup {:.2}  oracle {:.2}  master {:.2}  total {:.2}",
            t.setup_s, t.oracle_s, t.master_s, t.total_s
        );
        fs::write(dir.join("summary.txt"), summary)?;
        fs::write(dir.join("trajectory.jsonl"), trajectory_jsonl(trajectory)?)?;
        fs::write(dir.join("gap.csv"), gap_csv(trajectory))?;
        Ok(())
    }
}

fn cost_table(c: &CostBreakdown) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "total cost        {:.6e}", c.total);
    let _ = writeln!(s, "  investment      {:.6e}", c.investment);
    let _ = writeln!(s, "  operating       {:.6e}", c.operating);
    let _ = writeln!(s, "  shed penalty    {:.6e}", c.shed_penalty);
    let _ = writeln!(s, "  viol. penalty   {:.6e}", c.violation_penalty);
    let _ = writeln!(s, "Shed GWh          {:.6}", c.shed_gwh);
    let _ = writeln!(s, "Viol. GWh         {:.6}", c.violation_gwh);
    s
}

pub fn trajectory_jsonl(trajectory: &[IterationRecord]) -> Result<String> {
    let mut s = String::new();
    for rec in trajectory {
        s.push_str(&serde_json::to_string(rec).map_err(|e| Error::Validation(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

pub fn gap_csv(trajectory: &[IterationRecord]) -> String {
    let mut s = String::from("k,lower,upper,gap,rel_gap,type,active\n");
    for r in trajectory {
        let kind = match r.kind {
            IterationKind::TypeI => "I",
            IterationKind::TypeII => "II",
        };
        let active: usize = r.active.iter().sum();
        let _ = writeln!(s, "{},{:e},{:e},{:e},{:e},{kind},{active}", r.k, r.lower, r.upper, r.gap, r.rel_gap);
    }
    s
}

/// Full-physics evaluation of a fixed portfolio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub cost: CostBreakdown,
    pub capacity: CapacitySummary,
    pub binding_contingencies: Vec<usize>,
    pub portfolio: InvestmentPortfolio,
}

impl EvaluationReport {
    pub fn new(inst: &Instance, x: &[f64], ev: &Evaluation) -> Result<Self> {
        let portfolio = InvestmentPortfolio::from_flat(&inst.layout(), x)?;
        Ok(EvaluationReport {
            cost: CostBreakdown {
                investment: ev.investment,
                operating: ev.operating,
                shed_penalty: ev.shed_penalty,
                violation_penalty: ev.violation_penalty,
                total: ev.total,
                shed_gwh: ev.shed_gwh,
                violation_gwh: ev.violation_gwh,
            },
            capacity: CapacitySummary::of(&portfolio),
            binding_contingencies: ev.binding_contingencies.clone(),
            portfolio,
        })
    }

    pub fn summary(&self) -> String {
        let mut s = String::from("evaluation under full physics (scdc)\n");
        s.push_str(&cost_table(&self.cost));
        s
    }
}
