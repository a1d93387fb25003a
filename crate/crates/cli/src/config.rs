//! Flat `key = value` run configuration. Files and `--set` overrides go
//! through the same parser, so every value is validated in one place.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use encstore_core::analysis::SweepGrid;
use encstore_core::investment::Perspective;
use encstore_core::system::{EconomicParams, EncMode, StorageSpec};
use encstore_core::uc::SolveOptions;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(key: &str, value: &str, why: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{key} = {value:?}: {why}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMode {
    Builtin,
    MpsOnly,
}

impl SolverMode {
    fn label(self) -> &'static str {
        match self {
            SolverMode::Builtin => "builtin",
            SolverMode::MpsOnly => "mps-only",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// `desk` or a directory holding buses/lines/generators CSVs and timeseries.
    pub system: String,
    /// Annual renewable energy share to rescale to before reduction.
    pub penetration: Option<f64>,
    /// Previously written `repdays.csv`; skips the reduction.
    pub repdays: Option<String>,
    pub k: usize,
    pub variance: f64,
    pub seed: u64,
    pub unit_power: f64,
    pub duration: f64,
    pub efficiency: f64,
    /// $/MW-yr of power capacity.
    pub storage_price: f64,
    /// $/MWh-yr of energy capacity.
    pub energy_price: f64,
    pub chi: f64,
    pub carbon_price: f64,
    pub enc: bool,
    pub enc_mode: EncMode,
    pub load_shed_penalty: f64,
    pub days_per_year: f64,
    pub perspective: Perspective,
    pub carbon_prices: Vec<f64>,
    pub storage_prices: Vec<f64>,
    pub perspectives: Vec<Perspective>,
    pub enc_modes: Vec<bool>,
    pub gap: f64,
    pub max_units_per_bus: u32,
    pub min_return: f64,
    pub solver: SolverMode,
    /// Per-day baseline emissions for MPS export with the ENC on.
    pub baselines: Option<Vec<f64>>,
    pub pcsle: bool,
    pub pcsle_time_limit: f64,
    /// Worker threads; 0 means one per core. Not part of the hash.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = SweepGrid::desk();
        let econ = EconomicParams::default();
        let storage = StorageSpec::default();
        Self {
            system: "desk".into(),
            penetration: None,
            repdays: None,
            k: 5,
            variance: 0.95,
            seed: 7,
            unit_power: storage.unit_power,
            duration: storage.duration,
            efficiency: storage.efficiency,
            storage_price: storage.cost_power,
            energy_price: storage.cost_energy,
            chi: econ.chi,
            carbon_price: econ.carbon_price,
            enc: true,
            enc_mode: econ.enc_mode,
            load_shed_penalty: econ.load_shed_penalty,
            days_per_year: econ.days_per_year,
            perspective: Perspective::Phsi,
            carbon_prices: grid.carbon_prices,
            storage_prices: grid.storage_prices,
            perspectives: grid.perspectives,
            enc_modes: grid.enc_modes,
            gap: 1e-9,
            max_units_per_bus: 6,
            min_return: 0.0,
            solver: SolverMode::Builtin,
            baselines: None,
            pcsle: false,
            pcsle_time_limit: 120.0,
            workers: 0,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e| bad(key, v, e))
}

fn finite(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(key, v)?;
    if !x.is_finite() {
        return Err(bad(key, v, "not a finite number"));
    }
    Ok(x)
}

fn switch(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, v, "expected on or off")),
    }
}

fn list<T>(
    key: &str,
    v: &str,
    item: impl Fn(&str, &str) -> Result<T, ConfigError>,
) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(key, s))
        .collect()
}

fn perspective(key: &str, v: &str) -> Result<Perspective, ConfigError> {
    v.parse().map_err(|e| bad(key, v, e))
}

fn fmt_list<T>(xs: &[T], f: impl Fn(&T) -> String) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(",")
}

fn onoff(b: bool) -> String {
    if b { "on" } else { "off" }.into()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "system" => self.system = v.into(),
            "penetration" if v.is_empty() => self.penetration = None,
            "penetration" => {
                let p = finite(key, v)?;
                if !(0.0..1.0).contains(&p) {
                    return Err(bad(key, v, "must lie in [0, 1)"));
                }
                self.penetration = Some(p);
            }
            "repdays" => self.repdays = (!v.is_empty()).then(|| v.into()),
            "k" => self.k = num(key, v)?,
            "variance" => self.variance = finite(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "unit_power" => self.unit_power = finite(key, v)?,
            "duration" => self.duration = finite(key, v)?,
            "efficiency" => self.efficiency = finite(key, v)?,
            "storage_price" => self.storage_price = finite(key, v)?,
            "energy_price" => self.energy_price = finite(key, v)?,
            "chi" => self.chi = finite(key, v)?,
            "carbon_price" => self.carbon_price = finite(key, v)?,
            "enc" => self.enc = switch(key, v)?,
            "enc_mode" => {
                self.enc_mode = match v {
                    "daily" => EncMode::Daily,
                    "aggregate" => EncMode::Aggregate,
                    _ => return Err(bad(key, v, "expected daily or aggregate")),
                }
            }
            "load_shed_penalty" => self.load_shed_penalty = finite(key, v)?,
            "days_per_year" => self.days_per_year = finite(key, v)?,
            "perspective" => self.perspective = perspective(key, v)?,
            "carbon_prices" => self.carbon_prices = list(key, v, finite)?,
            "storage_prices" => self.storage_prices = list(key, v, finite)?,
            "perspectives" => self.perspectives = list(key, v, perspective)?,
            "enc_modes" => self.enc_modes = list(key, v, switch)?,
            "gap" => {
                let g = finite(key, v)?;
                if g < 0.0 {
                    return Err(bad(key, v, "must be nonnegative"));
                }
                self.gap = g;
            }
            "max_units_per_bus" => self.max_units_per_bus = num(key, v)?,
            "min_return" => self.min_return = finite(key, v)?,
            "solver" => {
                self.solver = match v {
                    "builtin" => SolverMode::Builtin,
                    "mps-only" => SolverMode::MpsOnly,
                    _ => return Err(bad(key, v, "expected builtin or mps-only")),
                }
            }
            "baselines" => {
                self.baselines = (!v.is_empty()).then(|| list(key, v, finite)).transpose()?
            }
            "pcsle" => self.pcsle = switch(key, v)?,
            "pcsle_time_limit" => self.pcsle_time_limit = finite(key, v)?,
            "workers" => self.workers = num(key, v)?,
            other => return Err(ConfigError(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// `key = value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| ConfigError(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// `key=value` as given to `--set`.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("--set {kv:?}: expected key=value")))?;
        self.set(k, v)
    }

    /// Every setting that affects results, in key order.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let opt = |x: &Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut m = BTreeMap::new();
        m.insert("system", self.system.clone());
        m.insert("penetration", opt(&self.penetration));
        m.insert("repdays", self.repdays.clone().unwrap_or_default());
        m.insert("k", self.k.to_string());
        m.insert("variance", self.variance.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("unit_power", self.unit_power.to_string());
        m.insert("duration", self.duration.to_string());
        m.insert("efficiency", self.efficiency.to_string());
        m.insert("storage_price", self.storage_price.to_string());
        m.insert("energy_price", self.energy_price.to_string());
        m.insert("chi", self.chi.to_string());
        m.insert("carbon_price", self.carbon_price.to_string());
        m.insert("enc", onoff(self.enc));
        m.insert(
            "enc_mode",
            if self.enc_mode == EncMode::Daily {
                "daily"
            } else {
                "aggregate"
            }
            .into(),
        );
        m.insert("load_shed_penalty", self.load_shed_penalty.to_string());
        m.insert("days_per_year", self.days_per_year.to_string());
        m.insert("perspective", self.perspective.label().to_lowercase());
        m.insert(
            "carbon_prices",
            fmt_list(&self.carbon_prices, f64::to_string),
        );
        m.insert(
            "storage_prices",
            fmt_list(&self.storage_prices, f64::to_string),
        );
        m.insert(
            "perspectives",
            fmt_list(&self.perspectives, |p| p.label().to_lowercase()),
        );
        m.insert("enc_modes", fmt_list(&self.enc_modes, |&b| onoff(b)));
        m.insert("gap", self.gap.to_string());
        m.insert("max_units_per_bus", self.max_units_per_bus.to_string());
        m.insert("min_return", self.min_return.to_string());
        m.insert("solver", self.solver.label().into());
        m.insert(
            "baselines",
            self.baselines
                .as_ref()
                .map(|b| fmt_list(b, f64::to_string))
                .unwrap_or_default(),
        );
        m.insert("pcsle", onoff(self.pcsle));
        m.insert("pcsle_time_limit", self.pcsle_time_limit.to_string());
        m
    }

    /// Config file text that reproduces this run.
    pub fn to_text(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// Header line stamped into every output.
    pub fn stamp(&self) -> String {
        format!("encstore config_hash={} seed={}", self.hash(), self.seed)
    }

    pub fn storage(&self) -> StorageSpec {
        StorageSpec {
            duration: self.duration,
            efficiency: self.efficiency,
            unit_power: self.unit_power,
            cost_energy: self.energy_price,
            cost_power: self.storage_price,
        }
    }

    pub fn econ(&self) -> EconomicParams {
        EconomicParams {
            carbon_price: self.carbon_price,
            load_shed_penalty: self.load_shed_penalty,
            chi: self.chi,
            enc_mode: self.enc_mode,
            days_per_year: self.days_per_year,
            ..EconomicParams::default()
        }
    }

    pub fn grid(&self) -> SweepGrid {
        SweepGrid {
            carbon_prices: self.carbon_prices.clone(),
            storage_prices: self.storage_prices.clone(),
            perspectives: self.perspectives.clone(),
            enc_modes: self.enc_modes.clone(),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            gap: self.gap,
            ..SolveOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip_keeps_hash() {
        let mut c = RunConfig::default();
        c.set("carbon_prices", "0, 10,20").unwrap();
        c.set("baselines", "1.5,2").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn workers_do_not_change_hash() {
        let mut c = RunConfig::default();
        let h = c.hash();
        c.set("workers", "3").unwrap();
        assert_eq!(c.hash(), h);
        c.set("seed", "8").unwrap();
        assert_ne!(c.hash(), h);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        assert!(c.set("colour", "red").is_err());
        assert!(c.set("enc", "maybe").is_err());
        assert!(c.set("k", "-1").is_err());
        assert!(c.apply_text("k 5").is_err());
        assert!(c.apply_override("k").is_err());
    }
}
