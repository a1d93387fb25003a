//! Investment perspectives: the vertically integrated utility (VIU), the
//! philanthropic storage investor (PhSI) and the profit-maximizing storage
//! investor (PMSI), with the quantity-sweep heuristic that produces the two
//! merchant candidates.
//!
//! The VIU problem is one MILP whose only link between days is the integer
//! storage vector. It is solved storage-first: every allocation that could
//! still beat the incumbent is fixed in turn and the remaining block-diagonal
//! problem is solved day by day. Operating cost never rises when units are
//! added (idle storage is always feasible), so the operating cost at the
//! per-bus cap `min(q, max)` bounds every allocation of `q` units from below
//! and whole quantity layers can be pruned. [`build_viu_model`] gives the
//! same problem as a single model for export or for a monolithic solve.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use encstore_milp::solve_milp_with;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::system::StorageSpec;
use crate::uc::{
    solve_dispatch, Case, CommitMode, DispatchSolution, SolveOptions, StorageAllocation, UcBuilder,
    UcError, UcModel, UnitsMode,
};

#[derive(Debug, Error)]
pub enum InvestmentError {
    #[error(transparent)]
    Uc(#[from] UcError),
    #[error("no storage candidate buses")]
    NoCandidates,
    #[error("relaxation bound {bound} exceeds the PhSI social cost {cost}: gap {gap}")]
    RelaxationViolation { cost: f64, bound: f64, gap: f64 },
    #[error("non-positive VIU bound {0}")]
    BadBound(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Perspective {
    Viu,
    Phsi,
    Pmsi,
}

impl Perspective {
    pub const ALL: [Perspective; 3] = [Perspective::Viu, Perspective::Phsi, Perspective::Pmsi];

    pub fn label(self) -> &'static str {
        match self {
            Perspective::Viu => "VIU",
            Perspective::Phsi => "PhSI",
            Perspective::Pmsi => "PMSI",
        }
    }
}

impl std::str::FromStr for Perspective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "viu" => Ok(Perspective::Viu),
            "phsi" => Ok(Perspective::Phsi),
            "pmsi" => Ok(Perspective::Pmsi),
            other => Err(format!("unknown perspective `{other}`")),
        }
    }
}

/// Operator dispatch for one allocation, priced with a storage cost.
#[derive(Clone, Debug)]
pub struct Priced {
    pub allocation: StorageAllocation,
    pub battery_cost: f64,
    pub operating_cost: f64,
    /// Annual energy-market revenue of the storage, `Σ_a W_a Σ λ (dis − chg)`.
    pub revenue: f64,
    pub profit: f64,
    pub social_cost: f64,
    pub dispatch: Arc<DispatchSolution>,
}

impl Priced {
    fn new(
        allocation: StorageAllocation,
        storage: &StorageSpec,
        dispatch: Arc<DispatchSolution>,
    ) -> Self {
        let battery_cost = allocation.cost(storage);
        let revenue = dispatch.storage_revenue();
        Self {
            battery_cost,
            operating_cost: dispatch.objective,
            revenue,
            profit: revenue - battery_cost,
            social_cost: battery_cost + dispatch.objective,
            allocation,
            dispatch,
        }
    }
}

/// Operator solves for one (system, days, economics, ENC) context, cached by
/// allocation. Storage prices only enter through [`Priced`], so one evaluator
/// serves every storage price.
pub struct Evaluator {
    pub case: Case,
    pub enc: Option<Vec<f64>>,
    pub opts: SolveOptions,
    cache: Mutex<HashMap<Vec<u32>, Arc<DispatchSolution>>>,
}

impl Evaluator {
    pub fn new(case: Case, enc: Option<Vec<f64>>, opts: SolveOptions) -> Self {
        Self {
            case,
            enc,
            opts,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn dispatch(
        &self,
        alloc: &StorageAllocation,
    ) -> Result<Arc<DispatchSolution>, InvestmentError> {
        if let Some(d) = self.cache.lock().expect("cache lock").get(&alloc.units) {
            return Ok(Arc::clone(d));
        }
        let sol = Arc::new(solve_dispatch(
            &self.case,
            alloc,
            self.enc.as_deref(),
            &self.opts,
        )?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(alloc.units.clone(), Arc::clone(&sol));
        Ok(sol)
    }

    pub fn price(
        &self,
        alloc: &StorageAllocation,
        storage: &StorageSpec,
    ) -> Result<Priced, InvestmentError> {
        Ok(Priced::new(alloc.clone(), storage, self.dispatch(alloc)?))
    }

    /// A valid lower bound on the operating cost at `alloc`.
    pub fn operating_lower_bound(&self, alloc: &StorageAllocation) -> Result<f64, InvestmentError> {
        let d = self.dispatch(alloc)?;
        Ok(d.objective - d.mip_gap * (d.objective.abs() + d.days.len() as f64))
    }

    /// Distinct allocations solved so far.
    pub fn evaluations(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn candidates(&self) -> Vec<usize> {
        self.case.system.candidate_buses()
    }

    pub fn enc_active(&self) -> bool {
        self.enc.is_some()
    }
}

/// Every allocation of exactly `q` units over `candidates` with at most
/// `max_per_bus` per bus, in descending lexicographic order.
pub fn allocations_with_total(
    num_buses: usize,
    candidates: &[usize],
    q: u32,
    max_per_bus: u32,
) -> Vec<StorageAllocation> {
    fn rec(
        cands: &[usize],
        left: u32,
        cap: u32,
        cur: &mut StorageAllocation,
        out: &mut Vec<StorageAllocation>,
    ) {
        match cands.split_first() {
            None => {
                if left == 0 {
                    out.push(cur.clone());
                }
            }
            Some((&b, rest)) => {
                for k in (0..=left.min(cap)).rev() {
                    cur.units[b] = k;
                    rec(rest, left - k, cap, cur, out);
                }
                cur.units[b] = 0;
            }
        }
    }
    let mut out = Vec::new();
    rec(
        candidates,
        q,
        max_per_bus,
        &mut StorageAllocation::zeros(num_buses),
        &mut out,
    );
    out
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: Priced,
    /// Lower bound on the optimal social cost.
    pub bound: f64,
    /// Allocations solved exactly.
    pub explored: usize,
}

/// Minimum social cost over allocations with at most `max_per_bus` units per
/// candidate bus.
pub fn solve_viu_search(
    ev: &Evaluator,
    storage: &StorageSpec,
    max_per_bus: u32,
) -> Result<SearchResult, InvestmentError> {
    let cands = ev.candidates();
    if cands.is_empty() {
        return Err(InvestmentError::NoCandidates);
    }
    let nb = ev.case.system.num_buses();
    let unit = storage.unit_cost();
    let cap = |q: u32| {
        let mut a = StorageAllocation::zeros(nb);
        for &b in &cands {
            a.units[b] = q.min(max_per_bus);
        }
        a
    };
    let q_top = max_per_bus * cands.len() as u32;
    let floor_all = ev.operating_lower_bound(&cap(max_per_bus))?;
    let mut best = ev.price(&StorageAllocation::zeros(nb), storage)?;
    let mut bound = ev.operating_lower_bound(&best.allocation)?;
    let mut explored = 1;
    let tol = |c: f64| 1e-9 * (1.0 + c.abs());
    for q in 1..=q_top {
        let qf = f64::from(q);
        if unit * qf + floor_all >= best.social_cost - tol(best.social_cost) {
            bound = bound.min(unit * qf + floor_all);
            break;
        }
        let layer_lb = unit * qf + ev.operating_lower_bound(&cap(q))?;
        if layer_lb >= best.social_cost - tol(best.social_cost) {
            bound = bound.min(layer_lb);
            continue;
        }
        let allocs = allocations_with_total(nb, &cands, q, max_per_bus);
        let priced: Vec<Priced> = allocs
            .par_iter()
            .map(|a| ev.price(a, storage))
            .collect::<Result<_, _>>()?;
        explored += priced.len();
        for p in priced {
            bound = bound.min(p.battery_cost + ev.operating_lower_bound(&p.allocation)?);
            if p.social_cost < best.social_cost - tol(best.social_cost) {
                best = p;
            }
        }
    }
    Ok(SearchResult {
        bound: bound.min(best.social_cost),
        best,
        explored,
    })
}

/// Lower-level siting at a fixed quantity: the minimum social cost over all
/// allocations of exactly `q` units. Ties keep the allocation enumerated
/// first.
pub fn site_quantity(
    ev: &Evaluator,
    storage: &StorageSpec,
    q: u32,
) -> Result<Priced, InvestmentError> {
    let cands = ev.candidates();
    let nb = ev.case.system.num_buses();
    let allocs = allocations_with_total(nb, &cands, q, q);
    if allocs.is_empty() {
        return Err(InvestmentError::NoCandidates);
    }
    let priced: Vec<Priced> = allocs
        .par_iter()
        .map(|a| ev.price(a, storage))
        .collect::<Result<_, _>>()?;
    let mut best: Option<Priced> = None;
    for p in priced {
        if best
            .as_ref()
            .is_none_or(|b| p.social_cost < b.social_cost - 1e-9 * (1.0 + b.social_cost.abs()))
        {
            best = Some(p);
        }
    }
    Ok(best.expect("nonempty"))
}

/// The VIU problem as one MILP: integer units per candidate bus (at most
/// `max_per_bus`, optionally summing to `total`), commitment and dispatch for
/// every day.
pub fn build_viu_model(
    case: &Case,
    enc: Option<&[f64]>,
    max_per_bus: u32,
    total: Option<u32>,
) -> Result<UcModel, UcError> {
    UcBuilder {
        system: &case.system,
        storage: &case.storage,
        econ: &case.econ,
        days: case.days.iter().map(|d| &d.profile).collect(),
        weights: case.weights(),
        units: UnitsMode::Integer { max_per_bus, total },
        commitment: CommitMode::Free,
        baselines: enc.map(<[f64]>::to_vec),
    }
    .build()
}

/// Solves [`build_viu_model`] directly with branch and bound. Returns the
/// allocation, objective and bound.
pub fn solve_viu_monolithic(
    case: &Case,
    enc: Option<&[f64]>,
    max_per_bus: u32,
    opts: &SolveOptions,
) -> Result<(StorageAllocation, f64, f64), InvestmentError> {
    let uc = build_viu_model(case, enc, max_per_bus, None)?;
    let sol = solve_milp_with(&uc.model, &opts.milp());
    if !sol.has_incumbent() {
        return Err(UcError::NoIncumbent(sol.status).into());
    }
    Ok((uc.allocation(&sol.x), sol.objective, sol.best_bound))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub viu_bound: Option<f64>,
    pub pcsle_bound: Option<f64>,
    pub perturbation_verified: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvestmentOutcome {
    pub perspective: Perspective,
    pub allocation: StorageAllocation,
    pub quantity: u32,
    pub battery_cost: f64,
    pub operating_cost: f64,
    pub social_cost: f64,
    pub revenue: f64,
    pub profit: f64,
    pub total_emissions: f64,
    pub emissions_by_day: Vec<f64>,
    pub enc_active: bool,
    pub evidence: Evidence,
    /// Operator schedule behind the numbers; not serialized.
    #[serde(skip)]
    pub dispatch: Option<Arc<DispatchSolution>>,
}

impl InvestmentOutcome {
    pub fn from_priced(perspective: Perspective, p: &Priced, enc_active: bool) -> Self {
        Self {
            perspective,
            quantity: p.allocation.total(),
            allocation: p.allocation.clone(),
            battery_cost: p.battery_cost,
            operating_cost: p.operating_cost,
            social_cost: p.social_cost,
            revenue: p.revenue,
            profit: p.profit,
            total_emissions: p.dispatch.total_emissions,
            emissions_by_day: p.dispatch.emissions_by_day(),
            enc_active,
            evidence: Evidence::default(),
            dispatch: Some(Arc::clone(&p.dispatch)),
        }
    }

    /// Installed power capacity, MW.
    pub fn storage_mw(&self, storage: &StorageSpec) -> f64 {
        f64::from(self.quantity) * storage.unit_power
    }
}

/// Solves the VIU problem.
pub fn solve_viu(
    ev: &Evaluator,
    storage: &StorageSpec,
    max_per_bus: u32,
) -> Result<(InvestmentOutcome, SearchResult), InvestmentError> {
    let search = solve_viu_search(ev, storage, max_per_bus)?;
    let mut out = InvestmentOutcome::from_priced(Perspective::Viu, &search.best, ev.enc_active());
    out.evidence.viu_bound = Some(search.bound);
    Ok((out, search))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantityRecord {
    pub q: u32,
    pub allocation: StorageAllocation,
    pub net_profit: f64,
    pub social_cost: f64,
    pub emissions: f64,
    pub revenue: f64,
    pub battery_cost: f64,
    pub emissions_by_day: Vec<f64>,
}

impl QuantityRecord {
    fn from_priced(p: &Priced) -> Self {
        Self {
            q: p.allocation.total(),
            allocation: p.allocation.clone(),
            net_profit: p.profit,
            social_cost: p.social_cost,
            emissions: p.dispatch.total_emissions,
            revenue: p.revenue,
            battery_cost: p.battery_cost,
            emissions_by_day: p.dispatch.emissions_by_day(),
        }
    }
}

/// Record index with the lowest social cost among those earning at least
/// `min_return`; ties go to the smaller quantity. `None` when nothing earns it.
pub fn select_phsi(records: &[QuantityRecord], min_return: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        if r.net_profit < min_return {
            continue;
        }
        match best {
            Some(j)
                if !better(
                    r.social_cost,
                    records[j].social_cost,
                    r.q,
                    records[j].q,
                    false,
                ) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Record index with the highest profit; ties go to the smaller quantity.
pub fn select_pmsi(records: &[QuantityRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        match best {
            Some(j) if !better(r.net_profit, records[j].net_profit, r.q, records[j].q, true) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Whether candidate value `a` (quantity `qa`) beats `b` (quantity `qb`).
/// Values within a relative 1e-9 count as ties.
fn better(a: f64, b: f64, qa: u32, qb: u32, maximize: bool) -> bool {
    let tol = 1e-9 * (1.0 + a.abs().max(b.abs()));
    let diff = if maximize { a - b } else { b - a };
    if diff > tol {
        true
    } else if diff < -tol {
        false
    } else {
        qa < qb
    }
}

#[derive(Clone, Debug)]
pub struct HeuristicSettings {
    pub max_units_per_bus: u32,
    pub min_return: f64,
}

impl Default for HeuristicSettings {
    fn default() -> Self {
        Self {
            max_units_per_bus: 6,
            min_return: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeuristicResult {
    pub q_viu: u32,
    pub records: Vec<QuantityRecord>,
    pub viu: InvestmentOutcome,
    pub phsi: InvestmentOutcome,
    pub pmsi: InvestmentOutcome,
    /// False when no record met `min_return`; the PhSI then falls back to no storage.
    pub phsi_profitable: bool,
}

impl HeuristicResult {
    pub fn outcome(&self, p: Perspective) -> &InvestmentOutcome {
        match p {
            Perspective::Viu => &self.viu,
            Perspective::Phsi => &self.phsi,
            Perspective::Pmsi => &self.pmsi,
        }
    }
}

/// Quantity sweep: solve the VIU problem for `q^VIU`, site every quantity
/// below it at minimum social cost, record profit and social cost for each
/// (no storage included), then pick the PhSI and PMSI from the records.
pub fn run_heuristic(
    ev: &Evaluator,
    storage: &StorageSpec,
    settings: &HeuristicSettings,
) -> Result<HeuristicResult, InvestmentError> {
    let (viu, search) = solve_viu(ev, storage, settings.max_units_per_bus)?;
    let q_viu = viu.quantity;
    let nb = ev.case.system.num_buses();
    let mut priced: Vec<Priced> = (0..q_viu)
        .into_par_iter()
        .map(|q| {
            if q == 0 {
                ev.price(&StorageAllocation::zeros(nb), storage)
            } else {
                site_quantity(ev, storage, q)
            }
        })
        .collect::<Result<_, _>>()?;
    priced.push(search.best.clone());
    let records: Vec<QuantityRecord> = priced.iter().map(QuantityRecord::from_priced).collect();
    let enc = ev.enc_active();
    let phsi_idx = select_phsi(&records, settings.min_return);
    let pmsi_idx = select_pmsi(&records).expect("at least the empty record");
    let mut phsi =
        InvestmentOutcome::from_priced(Perspective::Phsi, &priced[phsi_idx.unwrap_or(0)], enc);
    let mut pmsi = InvestmentOutcome::from_priced(Perspective::Pmsi, &priced[pmsi_idx], enc);
    phsi.evidence.viu_bound = Some(search.bound);
    pmsi.evidence.viu_bound = Some(search.bound);
    Ok(HeuristicResult {
        q_viu,
        records,
        viu,
        phsi,
        pmsi,
        phsi_profitable: phsi_idx.is_some(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub bus: String,
    pub delta: i32,
    pub profit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub verified: bool,
    pub base_profit: f64,
    pub trials: Vec<Perturbation>,
    /// Trials that beat the base profit by more than the tolerance.
    pub improving: Vec<Perturbation>,
}

/// Moves the allocation by one unit up and down at every candidate bus and
/// re-solves the operator problem. Verified when no move raises profit by more
/// than `1e-6 (1 + |profit|)`.
pub fn verify_pmsi_local(
    ev: &Evaluator,
    storage: &StorageSpec,
    outcome: &InvestmentOutcome,
) -> Result<PerturbationReport, InvestmentError> {
    let base = ev.price(&outcome.allocation, storage)?.profit;
    let mut moves = Vec::new();
    for b in ev.candidates() {
        for delta in [1i32, -1] {
            let n = outcome.allocation.units[b] as i32 + delta;
            if n < 0 {
                continue;
            }
            let mut a = outcome.allocation.clone();
            a.units[b] = n as u32;
            moves.push((b, delta, a));
        }
    }
    let trials: Vec<Perturbation> = moves
        .par_iter()
        .map(|(b, delta, a)| {
            Ok(Perturbation {
                bus: ev.case.system.buses[*b].id.clone(),
                delta: *delta,
                profit: ev.price(a, storage)?.profit,
            })
        })
        .collect::<Result<_, InvestmentError>>()?;
    let tol = 1e-6 * (1.0 + base.abs());
    let improving: Vec<Perturbation> = trials
        .iter()
        .filter(|t| t.profit > base + tol)
        .cloned()
        .collect();
    Ok(PerturbationReport {
        verified: improving.is_empty(),
        base_profit: base,
        trials,
        improving,
    })
}

/// `(social cost − max(VIU bound, PCSLE bound)) / VIU bound`. Both bounds
/// relax the PhSI problem, so a gap below `−1e-6` is reported as a build
/// error; smaller negatives are solver round-off and read as zero.
pub fn assess_phsi_gap(
    phsi_social_cost: f64,
    viu_bound: f64,
    pcsle_bound: Option<f64>,
) -> Result<f64, InvestmentError> {
    if viu_bound <= 0.0 {
        return Err(InvestmentError::BadBound(viu_bound));
    }
    let bound = pcsle_bound.map_or(viu_bound, |p| p.max(viu_bound));
    let gap = (phsi_social_cost - bound) / viu_bound;
    if gap < -1e-6 {
        return Err(InvestmentError::RelaxationViolation {
            cost: phsi_social_cost,
            bound,
            gap,
        });
    }
    Ok(gap.max(0.0))
}

/// `q,social_cost,net_profit,emissions,allocation` with the allocation as a
/// JSON array.
pub fn records_csv(
    records: &[QuantityRecord],
    header_comment: Option<&str>,
) -> Result<String, InvestmentError> {
    let mut buf = Vec::new();
    if let Some(c) = header_comment {
        writeln!(buf, "# {c}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["q", "social_cost", "net_profit", "emissions", "allocation"])?;
        for r in records {
            w.write_record([
                r.q.to_string(),
                format!("{:.6}", r.social_cost),
                format!("{:.6}", r.net_profit),
                format!("{:.6}", r.emissions),
                serde_json::to_string(&r.allocation.units)?,
            ])?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

pub fn write_records(
    path: &Path,
    records: &[QuantityRecord],
    header_comment: Option<&str>,
) -> Result<(), InvestmentError> {
    std::fs::write(path, records_csv(records, header_comment)?)?;
    Ok(())
}
