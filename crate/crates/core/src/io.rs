//! Instance directories and solution files.
//!
//! An instance directory holds `network.json` (grid, devices and a `system`
//! block of [`TechParams`]) and `scenarios.csv`, a manifest with columns
//! `id,weight,file`. Each scenario file has one row per hour and the columns
//! `hour`, `cost_g{id}`, `avail_g{id}` and `load_d{id}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, InvestmentPortfolio, Mode, Scenario, TechParams};
use crate::network::{Branch, Bus, Generator, HvdcLine, Load, Network, StorageUnit};

pub const NETWORK_FILE: &str = "network.json";
pub const MANIFEST_FILE: &str = "scenarios.csv";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    #[serde(default)]
    hvdc: Vec<HvdcLine>,
    #[serde(default)]
    generators: Vec<Generator>,
    #[serde(default)]
    storage: Vec<StorageUnit>,
    #[serde(default)]
    loads: Vec<Load>,
    #[serde(default)]
    system: TechParams,
}

impl Default for NetworkFile {
    fn default() -> Self {
        NetworkFile {
            buses: vec![],
            branches: vec![],
            hvdc: vec![],
            generators: vec![],
            storage: vec![],
            loads: vec![],
            system: TechParams::default(),
        }
    }
}

fn located(path: &Path, e: Error) -> Error {
    match e {
        Error::Io(io) => Error::parse(path, io.to_string()),
        Error::Parse { .. } => e,
        other => Error::parse(path, other.to_string()),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::parse(path, e.to_string()))
}

/// Parses a network file into a validated network and its system parameters.
pub fn load_network(path: &Path) -> Result<(Network, TechParams)> {
    let text = read(path)?;
    let file: NetworkFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    let net = Network::new(file.buses, file.branches, file.hvdc, file.generators, file.storage, file.loads)
        .map_err(|e| located(path, e))?;
    file.system.validate().map_err(|e| located(path, e))?;
    Ok((net, file.system))
}

pub fn network_json(net: &Network, params: &TechParams) -> Result<String> {
    let file = NetworkFile {
        buses: net.buses.clone(),
        branches: net.branches.clone(),
        hvdc: net.hvdc.clone(),
        generators: net.generators.clone(),
        storage: net.storage.clone(),
        loads: net.loads.clone(),
        system: params.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Validation(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    weight: f64,
    file: String,
}

fn parse_scenario(path: &Path, id: &str, weight: f64, net: &Network) -> Result<Scenario> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    let col = |name: String| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(path, format!("missing column {name}")))
    };
    let cost_cols: Vec<usize> = (0..net.generators.len()).map(|g| col(format!("cost_g{g}"))).collect::<Result<_>>()?;
    let avail_cols: Vec<usize> = (0..net.generators.len()).map(|g| col(format!("avail_g{g}"))).collect::<Result<_>>()?;
    let load_cols: Vec<usize> = (0..net.loads.len()).map(|d| col(format!("load_d{d}"))).collect::<Result<_>>()?;
    let hour_col = col("hour".into())?;
    let mut sc = Scenario {
        id: id.to_string(),
        weight,
        gen_costs: vec![],
        availability: vec![],
        loads: vec![],
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let num = |c: usize| -> Result<f64> {
            let field = rec.get(c).unwrap_or("").trim();
            field
                .parse::<f64>()
                .map_err(|_| Error::parse(path, format!("row {}: '{field}' in column {} is not a number", line + 2, &headers[c])))
        };
        let hour = num(hour_col)?;
        if hour != line as f64 {
            return Err(Error::parse(path, format!("row {}: expected hour {line}, found {hour}", line + 2)));
        }
        sc.gen_costs.push(cost_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?);
        sc.availability.push(avail_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?);
        sc.loads.push(load_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?);
    }
    sc.validate(net).map_err(|e| located(path, e))?;
    Ok(sc)
}

/// Loads and validates an instance directory.
pub fn load_instance(dir: &Path) -> Result<Instance> {
    let (net, params) = load_network(&dir.join(NETWORK_FILE))?;
    let manifest = dir.join(MANIFEST_FILE);
    let mut rdr = csv::Reader::from_path(&manifest).map_err(|e| Error::parse(&manifest, e.to_string()))?;
    let mut scenarios = Vec::new();
    for row in rdr.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| Error::parse(&manifest, e.to_string()))?;
        let path = dir.join(&row.file);
        if !path.is_file() {
            return Err(Error::parse(&manifest, format!("scenario file {} does not exist", path.display())));
        }
        scenarios.push(parse_scenario(&path, &row.id, row.weight, &net)?);
    }
    Instance::new(net, params, scenarios).map_err(|e| located(&manifest, e))
}

fn scenario_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("scenario_{safe}.csv")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(e.to_string())
}

/// Writes an instance directory readable by [`load_instance`].
pub fn save_instance(inst: &Instance, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(NETWORK_FILE), network_json(&inst.network, &inst.params)? + "\n")?;
    let mut manifest = csv::Writer::from_path(dir.join(MANIFEST_FILE)).map_err(csv_err)?;
    for sc in &inst.scenarios {
        let file = scenario_file_name(&sc.id);
        manifest
            .serialize(ManifestRow {
                id: sc.id.clone(),
                weight: sc.weight,
                file: file.clone(),
            })
            .map_err(csv_err)?;
        let mut w = csv::Writer::from_path(dir.join(&file)).map_err(csv_err)?;
        let g = inst.network.generators.len();
        let d = inst.network.loads.len();
        let mut header = vec!["hour".to_string()];
        header.extend((0..g).map(|k| format!("cost_g{k}")));
        header.extend((0..g).map(|k| format!("avail_g{k}")));
        header.extend((0..d).map(|k| format!("load_d{k}")));
        w.write_record(&header).map_err(csv_err)?;
        for t in 0..sc.hours() {
            let mut rec = vec![t.to_string()];
            rec.extend(sc.gen_costs[t].iter().map(f64::to_string));
            rec.extend(sc.availability[t].iter().map(f64::to_string));
            rec.extend(sc.loads[t].iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
    }
    manifest.flush()?;
    Ok(())
}

/// A bundle-method result as saved by `solve` and consumed by `corr` and
/// `evaluate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub mode: Mode,
    pub portfolio: InvestmentPortfolio,
    pub lower: f64,
    pub upper: f64,
    pub converged: bool,
    /// Nodal net injections `[scenario][hour][bus]` of the incumbent.
    pub injections: Vec<Vec<Vec<f64>>>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Resolves either an instance directory or a bare network file.
pub fn network_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(NETWORK_FILE)
    } else {
        path.to_path_buf()
    }
}
