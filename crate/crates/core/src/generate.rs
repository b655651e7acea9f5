//! Seeded synthetic instances for tests and demonstrations.
//!
//! Graphs are a uniformly random recursive tree plus extra simple edges, so
//! they are connected by construction. Parameter ranges are loosely modelled
//! on transmission-level systems: reactances 0.01–0.3 p.u., ratings 50–500 MW.
//! Investment costs are scaled to the short horizons used here so that
//! expansion competes with operating cost.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Scenario, TechParams};
use crate::network::{Branch, Bus, Generator, HvdcLine, Load, Network, StorageUnit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub buses: usize,
    /// Defaults to `buses + buses / 2`, capped at the complete graph.
    pub branches: Option<usize>,
    pub scenarios: usize,
    pub hours: usize,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn new(buses: usize, seed: u64) -> Self {
        InstanceSpec {
            buses,
            branches: None,
            scenarios: 1,
            hours: 4,
            seed,
        }
    }

    fn branch_count(&self) -> Result<usize> {
        let n = self.buses;
        let max = n * (n - 1) / 2;
        let b = self.branches.unwrap_or((n + n / 2).min(max));
        if b < n - 1 || b > max {
            return Err(Error::Validation(format!(
                "{b} branches cannot form a connected simple graph on {n} buses"
            )));
        }
        Ok(b)
    }
}

/// Random connected simple graph as `(from, to)` pairs, tree edges first.
pub fn random_graph(n: usize, b: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::with_capacity(b);
    let mut used = std::collections::BTreeSet::new();
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        let child = order[k];
        used.insert((parent.min(child), parent.max(child)));
        edges.push((parent, child));
    }
    let mut spare: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|e| !used.contains(e))
        .collect();
    spare.shuffle(rng);
    for (u, v) in spare.into_iter().take(b + 1 - n) {
        edges.push(if rng.gen_bool(0.5) { (u, v) } else { (v, u) });
    }
    edges
}

fn round(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

/// Builds a random instance; the same spec always yields the same instance.
pub fn generate(spec: &InstanceSpec) -> Result<Instance> {
    if spec.buses < 2 {
        return Err(Error::Validation("an instance needs at least two buses".into()));
    }
    if spec.scenarios == 0 || spec.hours == 0 {
        return Err(Error::Validation("need at least one scenario and one hour".into()));
    }
    let n = spec.buses;
    let b = spec.branch_count()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let buses: Vec<Bus> = (0..n).map(|id| Bus { id, is_slack: id == 0 }).collect();
    let branches: Vec<Branch> = random_graph(n, b, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(id, (from, to))| Branch {
            id,
            from_bus: from,
            to_bus: to,
            base_impedance: round(rng.gen_range(0.01..0.3), 4),
            base_capacity: round(rng.gen_range(50.0..500.0), 1),
            expansion_limit: 500.0,
            expansion_cost: round(rng.gen_range(5.0..40.0), 2),
        })
        .collect();

    // Loads on most buses, at least one.
    let mut load_buses: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
    if load_buses.is_empty() {
        load_buses.push(rng.gen_range(0..n));
    }
    let peaks: Vec<f64> = load_buses.iter().map(|_| round(rng.gen_range(30.0..150.0), 1)).collect();
    let loads: Vec<Load> = load_buses.iter().enumerate().map(|(id, &bus)| Load { id, bus }).collect();
    let system_peak: f64 = peaks.iter().sum();

    // Thermal fleet covering part of the peak, plus variable renewables.
    let mut generators = Vec::new();
    let thermal_sites: Vec<usize> = {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.truncate((n / 2).max(1));
        all.sort_unstable();
        all
    };
    let thermal_share = system_peak * rng.gen_range(0.6..0.9) / thermal_sites.len() as f64;
    for &bus in &thermal_sites {
        generators.push(Generator {
            id: generators.len(),
            bus,
            capacity: round(thermal_share * rng.gen_range(0.7..1.3), 1),
            expansion_limit: round(system_peak, 1),
            expansion_cost: round(rng.gen_range(60.0..150.0), 2),
            ramp_rate: round(rng.gen_range(0.4..1.0), 2),
            emission_factor: round(rng.gen_range(0.4..1.0), 3),
        });
    }
    let n_renew = (n / 3).max(1);
    for _ in 0..n_renew {
        generators.push(Generator {
            id: generators.len(),
            bus: rng.gen_range(0..n),
            capacity: round(rng.gen_range(0.0..0.3) * system_peak / n_renew as f64, 1),
            expansion_limit: round(2.0 * system_peak, 1),
            expansion_cost: round(rng.gen_range(20.0..60.0), 2),
            ramp_rate: 1.0,
            emission_factor: 0.0,
        });
    }
    let thermal_count = thermal_sites.len();

    let storage: Vec<StorageUnit> = (0..(n / 3).max(1))
        .map(|id| StorageUnit {
            id,
            bus: rng.gen_range(0..n),
            power_capacity: 0.0,
            energy_capacity: 0.0,
            power_limit: round(0.5 * system_peak, 1),
            energy_limit: round(2.0 * system_peak, 1),
            power_cost: round(rng.gen_range(10.0..30.0), 2),
            energy_cost: round(rng.gen_range(3.0..10.0), 2),
            efficiency: round(rng.gen_range(0.85..0.95), 3),
            boundary_soc: 0.5,
        })
        .collect();

    let hvdc: Vec<HvdcLine> = if n >= 6 {
        let from = rng.gen_range(0..n);
        let to = (from + 1 + rng.gen_range(0..n - 1)) % n;
        vec![HvdcLine {
            id: 0,
            from_bus: from,
            to_bus: to,
            capacity: round(rng.gen_range(30.0..100.0), 1),
        }]
    } else {
        Vec::new()
    };

    let mut scenarios = Vec::with_capacity(spec.scenarios);
    for w in 0..spec.scenarios {
        let level = rng.gen_range(0.85..1.15);
        let mut sc = Scenario {
            id: format!("s{w}"),
            weight: 1.0,
            gen_costs: Vec::new(),
            availability: Vec::new(),
            loads: Vec::new(),
        };
        let fuel: Vec<f64> = (0..thermal_count).map(|_| rng.gen_range(20.0..80.0)).collect();
        for t in 0..spec.hours {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / spec.hours.max(2) as f64;
            let shape = 0.8 + 0.2 * phase.sin();
            sc.loads.push(
                peaks
                    .iter()
                    .map(|p| round(p * level * shape * rng.gen_range(0.9..1.1), 2))
                    .collect(),
            );
            let mut cost = Vec::with_capacity(generators.len());
            let mut avail = Vec::with_capacity(generators.len());
            for g in 0..generators.len() {
                if g < thermal_count {
                    cost.push(round(fuel[g] * rng.gen_range(0.95..1.05), 2));
                    avail.push(1.0);
                } else {
                    cost.push(0.0);
                    avail.push(round(rng.gen_range(0.0..1.0), 3));
                }
            }
            sc.gen_costs.push(cost);
            sc.availability.push(avail);
        }
        scenarios.push(sc);
    }

    let energy: f64 = scenarios
        .iter()
        .map(|s| (0..s.hours()).map(|t| s.total_load(t)).sum::<f64>())
        .sum();
    let firm = generators[..thermal_count].iter().map(|g| g.capacity).sum::<f64>();
    let peak_load = scenarios
        .iter()
        .flat_map(|s| (0..s.hours()).map(|t| s.total_load(t)))
        .fold(0.0, f64::max);
    let params = TechParams {
        // Keep the requirement coverable by the existing thermal fleet.
        reserve_margin: round((0.05f64).min(0.9 * firm / peak_load.max(1.0)), 4),
        emission_budget: round(0.5 * energy, 1),
        ..TechParams::default()
    };

    let network = Network::new(buses, branches, hvdc, generators, storage, loads)?;
    Instance::new(network, params, scenarios)
}
