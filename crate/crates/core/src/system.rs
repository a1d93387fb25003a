//! Grid, generator, storage and time-series data plus CSV ingestion.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file} line {line}: {msg}")]
    Row {
        file: String,
        line: u64,
        msg: String,
    },
    #[error("{0}")]
    Invalid(String),
}

fn row_err(file: &str, line: u64, msg: impl Into<String>) -> SystemError {
    SystemError::Row {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub candidate_storage: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    /// Index into [`PowerSystem::buses`].
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    pub capacity: f64,
}

impl Line {
    pub fn admittance(&self) -> f64 {
        1.0 / self.reactance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub max_mw: f64,
    pub cost: f64,
    pub emissions: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub bus: usize,
    pub gmin: f64,
    pub gmax: f64,
    pub cmin: f64,
    pub csu: f64,
    pub emin: f64,
    pub esu: f64,
    pub min_up: usize,
    pub min_down: usize,
    pub segments: Vec<Segment>,
}

impl Generator {
    /// A unit whose commitment cannot affect cost, emissions or feasibility is
    /// modelled as always available instead of carrying binaries.
    pub fn needs_commitment(&self) -> bool {
        self.gmin > 0.0
            || self.cmin != 0.0
            || self.csu != 0.0
            || self.emin != 0.0
            || self.esu != 0.0
            || self.min_up > 1
            || self.min_down > 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    /// Hours of discharge at rated power.
    pub duration: f64,
    /// Applied once on charge and once on discharge.
    pub efficiency: f64,
    /// MW per installed unit.
    pub unit_power: f64,
    /// $/MWh-yr of energy capacity.
    pub cost_energy: f64,
    /// $/MW-yr of power capacity.
    pub cost_power: f64,
}

impl StorageSpec {
    pub fn unit_energy(&self) -> f64 {
        self.duration * self.unit_power
    }

    /// Annualized cost of one unit.
    pub fn unit_cost(&self) -> f64 {
        self.cost_energy * self.unit_energy() + self.cost_power * self.unit_power
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        if !(self.duration > 0.0) || !(self.unit_power > 0.0) {
            return Err(SystemError::Invalid(
                "storage duration and unit power must be positive".into(),
            ));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(SystemError::Invalid(format!(
                "storage efficiency {} not in (0, 1]",
                self.efficiency
            )));
        }
        if self.cost_energy < 0.0 || self.cost_power < 0.0 {
            return Err(SystemError::Invalid(
                "storage costs must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for StorageSpec {
    fn default() -> Self {
        Self {
            duration: 4.0,
            efficiency: 0.92,
            unit_power: 25.0,
            cost_energy: 0.0,
            cost_power: 40_000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncMode {
    /// One emissions row per representative day.
    Daily,
    /// One weighted row over the whole year.
    Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams {
    /// $/ton CO2.
    pub carbon_price: f64,
    /// $/MWh of unserved load.
    pub load_shed_penalty: f64,
    /// $/MWh of spilled renewable energy.
    pub ren_spill_penalty: f64,
    /// Multiplier on baseline emissions when the constraint is active.
    pub chi: f64,
    pub enc_mode: EncMode,
    /// Scales probability-weighted daily costs to annual values.
    pub days_per_year: f64,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            carbon_price: 0.0,
            load_shed_penalty: 10_000.0,
            ren_spill_penalty: 0.0,
            chi: 1.0,
            enc_mode: EncMode::Daily,
            days_per_year: 365.0,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        if self.carbon_price < 0.0 {
            return Err(SystemError::Invalid(format!(
                "negative carbon price {}",
                self.carbon_price
            )));
        }
        if self.load_shed_penalty < 0.0 || self.ren_spill_penalty < 0.0 {
            return Err(SystemError::Invalid("penalties must be nonnegative".into()));
        }
        if !(self.chi >= 1.0) {
            return Err(SystemError::Invalid(format!(
                "chi {} must be at least 1",
                self.chi
            )));
        }
        if !(self.days_per_year > 0.0) {
            return Err(SystemError::Invalid(
                "days_per_year must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Hourly load and renewable availability per bus for one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    /// `load[b][t]`, MW.
    pub load: Vec<Vec<f64>>,
    /// `ren[b][t]`, MW.
    pub ren: Vec<Vec<f64>>,
}

impl DailyProfile {
    pub fn hours(&self) -> usize {
        self.load.first().map_or(0, Vec::len)
    }

    pub fn net_load(&self, t: usize) -> f64 {
        self.load.iter().map(|l| l[t]).sum::<f64>() - self.ren.iter().map(|r| r[t]).sum::<f64>()
    }

    pub fn total_load(&self) -> f64 {
        self.load.iter().flatten().sum()
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let t = self.hours();
        if self.load.len() != self.ren.len() {
            return Err(SystemError::Invalid(
                "load and renewable bus counts differ".into(),
            ));
        }
        for series in self.load.iter().chain(&self.ren) {
            if series.len() != t {
                return Err(SystemError::Invalid("profile series lengths differ".into()));
            }
            if series.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(SystemError::Invalid(
                    "profile values must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSystem {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    /// Full hourly series per bus (length is a multiple of 24).
    pub load: Vec<Vec<f64>>,
    pub ren: Vec<Vec<f64>>,
}

impl PowerSystem {
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_days(&self) -> usize {
        self.load.first().map_or(0, |s| s.len() / HOURS_PER_DAY)
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn candidate_buses(&self) -> Vec<usize> {
        (0..self.buses.len())
            .filter(|&b| self.buses[b].candidate_storage)
            .collect()
    }

    /// Bus with the lowest id, whose angle is fixed at zero. Ids that parse as
    /// integers compare numerically.
    pub fn reference_bus(&self) -> usize {
        (0..self.buses.len())
            .min_by(|&a, &b| id_order(&self.buses[a].id, &self.buses[b].id))
            .expect("at least one bus")
    }

    pub fn day(&self, d: usize) -> DailyProfile {
        let r = d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY;
        DailyProfile {
            load: self.load.iter().map(|s| s[r.clone()].to_vec()).collect(),
            ren: self.ren.iter().map(|s| s[r.clone()].to_vec()).collect(),
        }
    }

    pub fn days(&self) -> Vec<DailyProfile> {
        (0..self.num_days()).map(|d| self.day(d)).collect()
    }

    /// Renewable energy over demand energy across the whole series.
    pub fn penetration(&self) -> f64 {
        let w: f64 = self.ren.iter().flatten().sum();
        let d: f64 = self.load.iter().flatten().sum();
        w / d
    }

    /// Multiplies every renewable series by one factor so that annual renewable
    /// energy equals `target` times annual demand energy.
    pub fn scale_renewables(&self, target: f64) -> Result<PowerSystem, SystemError> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(SystemError::Invalid(format!(
                "target penetration {target} not in (0, 1]"
            )));
        }
        let w: f64 = self.ren.iter().flatten().sum();
        let d: f64 = self.load.iter().flatten().sum();
        if w <= 0.0 {
            return Err(SystemError::Invalid(
                "all renewable series are zero; cannot scale".into(),
            ));
        }
        if d <= 0.0 {
            return Err(SystemError::Invalid(
                "total demand is zero; penetration undefined".into(),
            ));
        }
        let factor = target * d / w;
        let mut out = self.clone();
        if (factor - 1.0).abs() > 1e-12 {
            for s in &mut out.ren {
                for v in s.iter_mut() {
                    *v *= factor;
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        if self.buses.is_empty() {
            return Err(SystemError::Invalid("system has no buses".into()));
        }
        let mut seen = HashMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if seen.insert(b.id.as_str(), i).is_some() {
                return Err(SystemError::Invalid(format!("duplicate bus id {}", b.id)));
            }
        }
        for l in &self.lines {
            check_line(l).map_err(|m| SystemError::Invalid(format!("line {}: {m}", l.id)))?;
        }
        for g in &self.generators {
            check_generator(g)
                .map_err(|m| SystemError::Invalid(format!("generator {}: {m}", g.id)))?;
        }
        let n = self.buses.len();
        if self.load.len() != n || self.ren.len() != n {
            return Err(SystemError::Invalid(
                "one load and one renewable series per bus required".into(),
            ));
        }
        let len = self.load[0].len();
        if len == 0 || len % HOURS_PER_DAY != 0 {
            return Err(SystemError::Invalid(format!(
                "series length {len} is not a positive multiple of 24"
            )));
        }
        for s in self.load.iter().chain(&self.ren) {
            if s.len() != len {
                return Err(SystemError::Invalid("time series lengths differ".into()));
            }
            if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(SystemError::Invalid(
                    "time series values must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

fn id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

fn check_line(l: &Line) -> Result<(), String> {
    if l.from == l.to {
        return Err("from and to buses are equal".into());
    }
    if !(l.reactance > 0.0 && l.reactance.is_finite()) {
        return Err(format!("reactance {} must be positive", l.reactance));
    }
    if !(l.capacity > 0.0) {
        return Err(format!("capacity {} must be positive", l.capacity));
    }
    Ok(())
}

fn check_generator(g: &Generator) -> Result<(), String> {
    let nums = [g.gmin, g.gmax, g.cmin, g.csu, g.emin, g.esu];
    if nums.iter().any(|v| !v.is_finite()) {
        return Err("non-finite parameter".into());
    }
    if g.gmin < 0.0 || g.gmax < 0.0 || g.emin < 0.0 || g.esu < 0.0 {
        return Err("capacities and emissions must be nonnegative".into());
    }
    if g.min_up < 1 || g.min_down < 1 {
        return Err("minimum up and down times must be at least 1 h".into());
    }
    if g.segments.is_empty() {
        return Err("at least one segment required".into());
    }
    for s in &g.segments {
        if !(s.max_mw >= 0.0 && s.cost.is_finite() && s.emissions >= 0.0 && s.emissions.is_finite())
        {
            return Err("invalid segment".into());
        }
    }
    if g.segments.windows(2).any(|w| w[1].cost < w[0].cost) {
        return Err("segment costs must be nondecreasing".into());
    }
    let total = g.gmin + g.segments.iter().map(|s| s.max_mw).sum::<f64>();
    if (total - g.gmax).abs() > 1e-9 * g.gmax.max(1.0) {
        return Err(format!(
            "gmin + segment capacities = {total} but gmax = {}",
            g.gmax
        ));
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<String, SystemError> {
    if !path.exists() {
        return Err(SystemError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| SystemError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn records(file: &str, text: &str) -> Result<Vec<(u64, csv::StringRecord)>, SystemError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_err(file, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field<'a>(
    file: &str,
    line: u64,
    rec: &'a csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<&'a str, SystemError> {
    rec.get(i)
        .ok_or_else(|| row_err(file, line, format!("missing column {name}")))
}

fn num(
    file: &str,
    line: u64,
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<f64, SystemError> {
    let s = field(file, line, rec, i, name)?;
    let v: f64 = s
        .parse()
        .map_err(|_| row_err(file, line, format!("{name}: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(row_err(file, line, format!("{name} is not finite")));
    }
    Ok(v)
}

fn hours(
    file: &str,
    line: u64,
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<usize, SystemError> {
    let v = num(file, line, rec, i, name)?;
    if v < 1.0 || v.fract() != 0.0 {
        return Err(row_err(
            file,
            line,
            format!("{name} must be a positive whole number of hours"),
        ));
    }
    Ok(v as usize)
}

pub fn parse_buses(text: &str) -> Result<Vec<Bus>, SystemError> {
    let file = "buses.csv";
    let mut buses: Vec<Bus> = Vec::new();
    for (line, rec) in records(file, text)? {
        let id = field(file, line, &rec, 0, "id")?.to_string();
        let cand = match field(file, line, &rec, 1, "candidate_storage")? {
            "0" => false,
            "1" => true,
            other => {
                return Err(row_err(
                    file,
                    line,
                    format!("candidate_storage must be 0 or 1, got `{other}`"),
                ))
            }
        };
        if id.is_empty() {
            return Err(row_err(file, line, "empty bus id"));
        }
        if buses.iter().any(|b| b.id == id) {
            return Err(row_err(file, line, format!("duplicate bus id {id}")));
        }
        buses.push(Bus {
            id,
            candidate_storage: cand,
        });
    }
    if buses.is_empty() {
        return Err(SystemError::Invalid("buses.csv lists no buses".into()));
    }
    Ok(buses)
}

fn bus_ref(file: &str, line: u64, buses: &[Bus], id: &str) -> Result<usize, SystemError> {
    buses
        .iter()
        .position(|b| b.id == id)
        .ok_or_else(|| row_err(file, line, format!("unknown bus `{id}`")))
}

pub fn parse_lines(text: &str, buses: &[Bus]) -> Result<Vec<Line>, SystemError> {
    let file = "lines.csv";
    let mut lines = Vec::new();
    for (line, rec) in records(file, text)? {
        let l = Line {
            id: field(file, line, &rec, 0, "id")?.to_string(),
            from: bus_ref(file, line, buses, field(file, line, &rec, 1, "from")?)?,
            to: bus_ref(file, line, buses, field(file, line, &rec, 2, "to")?)?,
            reactance: num(file, line, &rec, 3, "reactance_ohm")?,
            capacity: num(file, line, &rec, 4, "capacity_mw")?,
        };
        check_line(&l).map_err(|m| row_err(file, line, m))?;
        lines.push(l);
    }
    Ok(lines)
}

pub fn parse_generators(text: &str, buses: &[Bus]) -> Result<Vec<Generator>, SystemError> {
    let file = "generators.csv";
    let mut gens = Vec::new();
    for (line, rec) in records(file, text)? {
        let mut segments = Vec::new();
        for s in 0..4 {
            let base = 10 + 3 * s;
            let cells: Vec<&str> = (0..3).map(|k| rec.get(base + k).unwrap_or("")).collect();
            if cells.iter().all(|c| c.is_empty()) {
                continue;
            }
            if cells.iter().any(|c| c.is_empty()) {
                return Err(row_err(
                    file,
                    line,
                    format!("segment {} is partially specified", s + 1),
                ));
            }
            segments.push(Segment {
                max_mw: num(file, line, &rec, base, "seg_mw")?,
                cost: num(file, line, &rec, base + 1, "seg_usd_mwh")?,
                emissions: num(file, line, &rec, base + 2, "seg_t_mwh")?,
            });
        }
        let g = Generator {
            id: field(file, line, &rec, 0, "id")?.to_string(),
            bus: bus_ref(file, line, buses, field(file, line, &rec, 1, "bus")?)?,
            gmin: num(file, line, &rec, 2, "gmin_mw")?,
            gmax: num(file, line, &rec, 3, "gmax_mw")?,
            cmin: num(file, line, &rec, 4, "cmin_usd_h")?,
            csu: num(file, line, &rec, 5, "csu_usd")?,
            emin: num(file, line, &rec, 6, "emin_t_h")?,
            esu: num(file, line, &rec, 7, "esu_t")?,
            min_up: hours(file, line, &rec, 8, "minup_h")?,
            min_down: hours(file, line, &rec, 9, "mindown_h")?,
            segments,
        };
        check_generator(&g).map_err(|m| row_err(file, line, m))?;
        gens.push(g);
    }
    Ok(gens)
}

/// Parses a `day,hour,mw` series. Rows must be ordered by day then hour.
pub fn parse_series(file: &str, text: &str) -> Result<Vec<f64>, SystemError> {
    let mut out = Vec::new();
    for (line, rec) in records(file, text)? {
        let day = num(file, line, &rec, 0, "day")?;
        let hour = num(file, line, &rec, 1, "hour")?;
        let mw = num(file, line, &rec, 2, "mw")?;
        let expect = out.len();
        if day != (expect / HOURS_PER_DAY) as f64 || hour != (expect % HOURS_PER_DAY) as f64 {
            return Err(row_err(
                file,
                line,
                format!(
                    "expected day {} hour {}, found day {day} hour {hour}",
                    expect / HOURS_PER_DAY,
                    expect % HOURS_PER_DAY
                ),
            ));
        }
        if mw < 0.0 {
            return Err(row_err(file, line, "negative MW"));
        }
        out.push(mw);
    }
    if out.len() % HOURS_PER_DAY != 0 {
        return Err(SystemError::Invalid(format!(
            "{file}: {} rows is not a multiple of 24",
            out.len()
        )));
    }
    Ok(out)
}

/// Assembles a system from file contents; `series` returns the text of a
/// timeseries file by name, or `None` when absent (treated as all zero).
pub fn assemble(
    buses_csv: &str,
    lines_csv: &str,
    gens_csv: &str,
    mut series: impl FnMut(&str) -> Result<Option<String>, SystemError>,
) -> Result<PowerSystem, SystemError> {
    let buses = parse_buses(buses_csv)?;
    let lines = parse_lines(lines_csv, &buses)?;
    let generators = parse_generators(gens_csv, &buses)?;
    let mut load = Vec::with_capacity(buses.len());
    let mut ren = Vec::with_capacity(buses.len());
    for b in &buses {
        for (kind, dst) in [("load", &mut load), ("ren", &mut ren)] {
            let name = format!("{kind}_{}.csv", b.id);
            let s = match series(&name)? {
                Some(text) => parse_series(&name, &text)?,
                None => Vec::new(),
            };
            dst.push(s);
        }
    }
    let len = load.iter().chain(&ren).map(Vec::len).max().unwrap_or(0);
    if len == 0 {
        return Err(SystemError::Invalid("no time series found".into()));
    }
    for s in load.iter_mut().chain(ren.iter_mut()) {
        if s.is_empty() {
            s.resize(len, 0.0);
        }
    }
    let sys = PowerSystem {
        buses,
        lines,
        generators,
        load,
        ren,
    };
    sys.validate()?;
    Ok(sys)
}

/// Reads `buses.csv`, `lines.csv`, `generators.csv` and `timeseries/` from `dir`.
pub fn load_system(dir: &Path) -> Result<PowerSystem, SystemError> {
    let buses = read_file(&dir.join("buses.csv"))?;
    let lines = read_file(&dir.join("lines.csv"))?;
    let gens = read_file(&dir.join("generators.csv"))?;
    let ts = dir.join("timeseries");
    assemble(&buses, &lines, &gens, |name| {
        let p = ts.join(name);
        if p.exists() {
            read_file(&p).map(Some)
        } else {
            Ok(None)
        }
    })
}

pub fn buses_csv(sys: &PowerSystem) -> String {
    let mut s = String::from("id,candidate_storage\n");
    for b in &sys.buses {
        s.push_str(&format!("{},{}\n", b.id, u8::from(b.candidate_storage)));
    }
    s
}

pub fn lines_csv(sys: &PowerSystem) -> String {
    let mut s = String::from("id,from,to,reactance_ohm,capacity_mw\n");
    for l in &sys.lines {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            l.id, sys.buses[l.from].id, sys.buses[l.to].id, l.reactance, l.capacity
        ));
    }
    s
}

pub fn generators_csv(sys: &PowerSystem) -> String {
    let mut s =
        String::from("id,bus,gmin_mw,gmax_mw,cmin_usd_h,csu_usd,emin_t_h,esu_t,minup_h,mindown_h");
    for k in 1..=4 {
        s.push_str(&format!(",seg{k}_mw,seg{k}_usd_mwh,seg{k}_t_mwh"));
    }
    s.push('\n');
    for g in &sys.generators {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}",
            g.id,
            sys.buses[g.bus].id,
            g.gmin,
            g.gmax,
            g.cmin,
            g.csu,
            g.emin,
            g.esu,
            g.min_up,
            g.min_down
        ));
        for k in 0..4 {
            match g.segments.get(k) {
                Some(seg) => s.push_str(&format!(",{},{},{}", seg.max_mw, seg.cost, seg.emissions)),
                None => s.push_str(",,,"),
            }
        }
        s.push('\n');
    }
    s
}

pub fn series_csv(series: &[f64]) -> String {
    let mut s = String::with_capacity(series.len() * 16);
    s.push_str("day,hour,mw\n");
    for (k, v) in series.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{}\n",
            k / HOURS_PER_DAY,
            k % HOURS_PER_DAY,
            v
        ));
    }
    s
}

/// Writes `sys` in the layout read by [`load_system`]. All-zero series are omitted.
pub fn write_system(sys: &PowerSystem, dir: &Path) -> Result<(), SystemError> {
    let io = |path: PathBuf| move |source| SystemError::Io { path, source };
    let ts = dir.join("timeseries");
    fs::create_dir_all(&ts).map_err(io(ts.clone()))?;
    for (name, text) in [
        ("buses.csv", buses_csv(sys)),
        ("lines.csv", lines_csv(sys)),
        ("generators.csv", generators_csv(sys)),
    ] {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io(p.clone()))?;
    }
    for (b, bus) in sys.buses.iter().enumerate() {
        for (kind, s) in [("load", &sys.load[b]), ("ren", &sys.ren[b])] {
            if s.iter().any(|&v| v != 0.0) {
                let p = ts.join(format!("{kind}_{}.csv", bus.id));
                fs::write(&p, series_csv(s)).map_err(io(p.clone()))?;
            }
        }
    }
    Ok(())
}
