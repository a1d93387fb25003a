//! Dual of the fixed-commitment dispatch LP, the complementary-slackness
//! profit rewrite, big-M bounds and the profit-constrained single-level MILP.
//!
//! Dual values are produced mechanically from the primal matrix and then
//! mapped onto the named multipliers (λ, κ, ξ, ρ, ...). Row duals follow the
//! engine convention `y = ∂cost/∂rhs`, so for `<=` rows the named multiplier
//! is `-y`.

use std::collections::HashMap;

use encstore_milp::{
    dualize, solve_lp, DualMap, LpSolution, MilpModel, MilpStatus, RowId, Sense, Var, VarKind,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::system::EncMode;
use crate::uc::{
    Case, CommitMode, DayIndex, Param, StorageAllocation, UcBuilder, UcError, UcModel, UnitsMode,
};

#[derive(Debug, Error)]
pub enum DualityError {
    #[error(transparent)]
    Uc(#[from] UcError),
    #[error("{units} units need more than the {bits} bits allowed")]
    BitBudget { units: u32, bits: u32 },
    #[error("the single-level model needs per-day (or no) emissions constraints")]
    AggregateEnc,
    #[error("dual LP not optimal: {0}")]
    DualLp(String),
    #[error("duality violation: primal {primal}, dual {dual}")]
    Mismatch { primal: f64, dual: f64 },
}

/// Fixed-commitment dispatch LP for one day at unit weight, with its dual.
#[derive(Clone, Debug)]
pub struct DayDual {
    pub tced: UcModel,
    pub dual: MilpModel,
    pub map: DualMap,
}

/// Builds the dispatch LP of day `day` with commitment `u[gen][t]` and storage
/// `alloc`, and its LP dual. `baseline` adds that day's emissions row.
pub fn build_dual_tced(
    case: &Case,
    day: usize,
    alloc: &StorageAllocation,
    u: &[Vec<f64>],
    baseline: Option<f64>,
) -> Result<DayDual, UcError> {
    let mut econ = case.econ.clone();
    econ.enc_mode = EncMode::Daily;
    let tced = UcBuilder {
        system: &case.system,
        storage: &case.storage,
        econ: &econ,
        days: vec![&case.days[day].profile],
        weights: vec![1.0],
        units: UnitsMode::Fixed(alloc.clone()),
        commitment: CommitMode::Fixed(vec![u.to_vec()]),
        baselines: baseline.map(|b| vec![b]),
    }
    .build()?;
    let (dual, map) = dualize(&tced.model);
    Ok(DayDual { tced, dual, map })
}

/// Named multipliers of one day's dispatch LP. Storage entries are zero at
/// buses without storage variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: f64,
    /// `[bus][t]`
    pub lambda: Vec<Vec<f64>>,
    /// `[line][t]`
    pub beta: Vec<Vec<f64>>,
    pub gamma_lo: Vec<Vec<f64>>,
    pub gamma_hi: Vec<Vec<f64>>,
    /// `[gen][segment][t]`
    pub delta_lo: Vec<Vec<Vec<f64>>>,
    pub delta_hi: Vec<Vec<Vec<f64>>>,
    /// `[bus][t]`
    pub phi_lo: Vec<Vec<f64>>,
    pub phi_hi: Vec<Vec<f64>>,
    /// Multipliers of the load-shed bounds.
    pub shed_lo: Vec<Vec<f64>>,
    pub shed_hi: Vec<Vec<f64>>,
    pub kappa: Vec<Vec<f64>>,
    pub xi_lo: Vec<Vec<f64>>,
    pub xi_hi: Vec<Vec<f64>>,
    pub rho_chg_lo: Vec<Vec<f64>>,
    pub rho_chg_hi: Vec<Vec<f64>>,
    pub rho_dis_lo: Vec<Vec<f64>>,
    pub rho_dis_hi: Vec<Vec<f64>>,
    /// Dual objective value.
    pub objective: f64,
}

fn grid<T: Copy>(rows: &[Vec<T>], f: impl Fn(T) -> f64) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|&x| f(x)).collect())
        .collect()
}

fn opt_grid<T: Copy>(rows: &[Option<Vec<T>>], nt: usize, f: impl Fn(T) -> f64) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            r.as_ref()
                .map_or(vec![0.0; nt], |r| r.iter().map(|&x| f(x)).collect())
        })
        .collect()
}

impl DualSolution {
    /// Maps raw values: `y(row)`, lower-bound multiplier `mu(var)` and
    /// upper-bound multiplier `nu(var)`.
    fn assemble(
        idx: &DayIndex,
        y: impl Fn(RowId) -> f64,
        mu: impl Fn(Var) -> f64,
        nu: impl Fn(Var) -> f64,
        objective: f64,
    ) -> Self {
        let nt = idx.hours;
        let neg = |r: RowId| -y(r);
        Self {
            alpha: idx.enc_row.map_or(0.0, neg),
            lambda: grid(&idx.bal_rows, &y),
            beta: grid(&idx.flow_rows, neg),
            gamma_lo: grid(&idx.flow, &mu),
            gamma_hi: grid(&idx.flow, &nu),
            delta_lo: idx.seg.iter().map(|s| grid(s, &mu)).collect(),
            delta_hi: idx.seg_rows.iter().map(|s| grid(s, neg)).collect(),
            phi_lo: grid(&idx.spill, &mu),
            phi_hi: grid(&idx.spill, &nu),
            shed_lo: grid(&idx.shed, &mu),
            shed_hi: grid(&idx.shed, &nu),
            kappa: opt_grid(&idx.soc_rows, nt, neg),
            xi_lo: opt_grid(&idx.soc, nt, &mu),
            xi_hi: opt_grid(&idx.qcap_rows, nt, neg),
            rho_chg_lo: opt_grid(&idx.chg, nt, &mu),
            rho_chg_hi: opt_grid(&idx.ccap_rows, nt, neg),
            rho_dis_lo: opt_grid(&idx.dis, nt, &mu),
            rho_dis_hi: opt_grid(&idx.dcap_rows, nt, neg),
            objective,
        }
    }

    /// Reads multipliers from a solved dual LP.
    pub fn from_dual_lp(dd: &DayDual, values: &[f64]) -> Self {
        let map = &dd.map;
        let objective = -dd.dual.evaluate(values);
        Self::assemble(
            &dd.tced.days[0],
            |r| values[map.row_vars[r.0].0],
            |v| map.lower_vars[v.0].map_or(0.0, |m| values[m.0]),
            |v| map.upper_vars[v.0].map_or(0.0, |m| values[m.0]),
            objective,
        )
    }

    /// Reads multipliers off a primal LP solution: row duals plus reduced
    /// costs split into their lower- and upper-bound parts.
    pub fn from_primal_lp(tced: &UcModel, day: usize, lp: &LpSolution) -> Self {
        let model = &tced.model;
        let objective = lp.dual_objective(model);
        let rc = |v: Var| lp.reduced_costs[v.0];
        Self::assemble(
            &tced.days[day],
            |r| lp.row_duals[r.0],
            |v| {
                if model.var(v).lower.is_finite() {
                    rc(v).max(0.0)
                } else {
                    0.0
                }
            },
            |v| {
                if model.var(v).upper.is_finite() {
                    (-rc(v)).max(0.0)
                } else {
                    0.0
                }
            },
            objective,
        )
    }
}

/// Solves the dual LP of `dd` and maps the result.
pub fn solve_dual_tced(dd: &DayDual) -> Result<(LpSolution, DualSolution), DualityError> {
    let lp = solve_lp(&dd.dual);
    if !lp.is_optimal() {
        return Err(DualityError::DualLp(format!("{:?}", lp.status)));
    }
    let sol = DualSolution::from_dual_lp(dd, &lp.x);
    Ok((lp, sol))
}

/// Storage revenue through the dual side: `Σ_b Σ_t [Q^max ξ̄ + J^max (ρ̄^dis + ρ̄^chg)]`.
pub fn profit_via_duals(dual: &DualSolution, alloc: &StorageAllocation, case: &Case) -> f64 {
    let mut total = 0.0;
    for b in 0..alloc.units.len() {
        let q = alloc.energy(b, &case.storage);
        let j = alloc.power(b, &case.storage);
        if q == 0.0 && j == 0.0 {
            continue;
        }
        for t in 0..dual.xi_hi[b].len() {
            total += q * dual.xi_hi[b][t] + j * (dual.rho_dis_hi[b][t] + dual.rho_chg_hi[b][t]);
        }
    }
    total
}

/// Storage revenue through prices: `Σ_b Σ_t λ (J^dis − J^chg)`.
pub fn profit_via_prices(dual: &DualSolution, dis: &[Vec<f64>], chg: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for b in 0..dual.lambda.len() {
        for t in 0..dual.lambda[b].len() {
            total += dual.lambda[b][t] * (dis[b][t] - chg[b][t]);
        }
    }
    total
}

/// Residuals of the hand-written dual rows and objective (with `b` read as
/// the carbon-adjusted marginal cost), evaluated on a mapped dual solution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrintedCheck {
    pub max_row_residual: f64,
    /// Printed dual objective, which omits the load-shed bound term.
    pub printed_objective: f64,
    /// `−Σ d·(shed upper-bound multiplier)`; added to the printed objective it
    /// gives the machine dual objective.
    pub shed_term: f64,
    /// No-load and startup cost (with its carbon charge) of the fixed
    /// commitment, a constant of the dispatch LP.
    pub fixed_cost: f64,
    pub sign_violation: f64,
}

impl PrintedCheck {
    /// Printed objective completed to the full dispatch LP value.
    pub fn completed_objective(&self) -> f64 {
        self.printed_objective + self.shed_term + self.fixed_cost
    }
}

pub fn printed_dual_check(
    case: &Case,
    day: usize,
    alloc: &StorageAllocation,
    u: &[Vec<f64>],
    baseline: Option<f64>,
    d: &DualSolution,
) -> PrintedCheck {
    let sys = &case.system;
    let prof = &case.days[day].profile;
    let econ = &case.econ;
    let st = &case.storage;
    let eta = st.efficiency;
    let nt = prof.hours();
    let nb = sys.num_buses();
    let reference = sys.reference_bus();
    let mut worst = 0.0f64;
    let mut row = |r: f64| worst = worst.max(r.abs());
    let on: Vec<Vec<f64>> = sys
        .generators
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if g.needs_commitment() {
                u[i].iter().map(|x| x.round()).collect()
            } else {
                vec![1.0; nt]
            }
        })
        .collect();
    let v: Vec<Vec<f64>> = on.iter().map(|x| crate::uc::startups(x)).collect();

    for (i, g) in sys.generators.iter().enumerate() {
        for (s, sg) in g.segments.iter().enumerate() {
            let b_eff = sg.cost + econ.carbon_price * sg.emissions;
            for t in 0..nt {
                row(
                    d.alpha * sg.emissions + b_eff - d.lambda[g.bus][t] - d.delta_lo[i][s][t]
                        + d.delta_hi[i][s][t],
                );
            }
        }
    }
    for b in 0..nb {
        let has = sys.buses[b].candidate_storage;
        for t in 0..nt {
            if has {
                row(d.kappa[b][t] / eta + d.rho_dis_hi[b][t] - d.rho_dis_lo[b][t] - d.lambda[b][t]);
                row(d.lambda[b][t] + d.rho_chg_hi[b][t] - d.rho_chg_lo[b][t] - eta * d.kappa[b][t]);
                let next = (t + 1) % nt;
                row(d.kappa[b][t] - d.kappa[b][next] + d.xi_hi[b][t] - d.xi_lo[b][t]);
            }
            row(d.lambda[b][t] + d.phi_hi[b][t] - d.phi_lo[b][t] + econ.ren_spill_penalty);
            if b != reference {
                let mut s = 0.0;
                for (l, line) in sys.lines.iter().enumerate() {
                    let m = if line.from == b {
                        1.0
                    } else if line.to == b {
                        -1.0
                    } else {
                        0.0
                    };
                    s += line.admittance() * m * d.beta[l][t];
                }
                row(s);
            }
        }
    }
    for (l, line) in sys.lines.iter().enumerate() {
        for t in 0..nt {
            row(
                d.lambda[line.from][t] - d.lambda[line.to][t] + d.beta[l][t] - d.gamma_lo[l][t]
                    + d.gamma_hi[l][t],
            );
        }
    }

    let mut fixed_cost = 0.0;
    for (i, g) in sys.generators.iter().enumerate() {
        for t in 0..nt {
            fixed_cost += (g.cmin + econ.carbon_price * g.emin) * on[i][t]
                + (g.csu + econ.carbon_price * g.esu) * v[i][t];
        }
    }
    let mut obj = 0.0;
    if let Some(base) = baseline {
        let mut e = 0.0;
        for (i, g) in sys.generators.iter().enumerate() {
            for t in 0..nt {
                e += g.emin * on[i][t] + g.esu * v[i][t];
            }
        }
        obj += d.alpha * (e - econ.chi * base);
    }
    for (l, line) in sys.lines.iter().enumerate() {
        for t in 0..nt {
            obj -= line.capacity * (d.gamma_lo[l][t] + d.gamma_hi[l][t]);
        }
    }
    for (i, g) in sys.generators.iter().enumerate() {
        for (s, sg) in g.segments.iter().enumerate() {
            for t in 0..nt {
                obj -= sg.max_mw * on[i][t] * d.delta_hi[i][s][t];
            }
        }
    }
    let mut shed_term = 0.0;
    for b in 0..nb {
        let qmax = alloc.energy(b, st);
        let jmax = alloc.power(b, st);
        for t in 0..nt {
            let gmin_on: f64 = sys
                .generators
                .iter()
                .enumerate()
                .filter(|(_, g)| g.bus == b)
                .map(|(i, g)| g.gmin * on[i][t])
                .sum();
            obj += d.lambda[b][t] * (prof.load[b][t] - prof.ren[b][t] - gmin_on);
            obj -= qmax * d.xi_hi[b][t] + jmax * (d.rho_chg_hi[b][t] + d.rho_dis_hi[b][t]);
            obj -= prof.ren[b][t] * d.phi_hi[b][t];
            shed_term -= prof.load[b][t] * d.shed_hi[b][t];
        }
    }

    let mut sign = (-d.alpha).max(0.0);
    let nonneg = d
        .gamma_lo
        .iter()
        .chain(&d.gamma_hi)
        .chain(&d.phi_lo)
        .chain(&d.phi_hi)
        .chain(&d.xi_lo)
        .chain(&d.xi_hi)
        .chain(&d.rho_chg_lo)
        .chain(&d.rho_chg_hi)
        .chain(&d.rho_dis_lo)
        .chain(&d.rho_dis_hi)
        .chain(d.delta_lo.iter().flatten())
        .chain(d.delta_hi.iter().flatten())
        .flatten();
    for &x in nonneg {
        sign = sign.max(-x);
    }
    PrintedCheck {
        max_row_residual: worst,
        printed_objective: obj,
        shed_term,
        fixed_cost,
        sign_violation: sign,
    }
}

/// Bound constants per multiplier family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigM {
    /// Cap on the emissions multiplier α (zero when the ENC is off).
    pub alpha: f64,
    /// |λ|
    pub lambda: f64,
    /// δ̄
    pub delta: f64,
    /// ξ̄
    pub xi: f64,
    /// ρ̄ (charge and discharge)
    pub rho: f64,
}

/// Per-family constants from the cost data: α̂ = P^load / min positive h,
/// M_λ = max_s(b + P^CO2·h + α̂·h) + P^load + P^ren, and storage multipliers
/// bounded through the charge/discharge rows by `M_λ (1 + 1/η²)`.
pub fn compute_bigm(case: &Case, enc: bool) -> BigM {
    let econ = &case.econ;
    let segs = case.system.generators.iter().flat_map(|g| &g.segments);
    let min_h = segs
        .clone()
        .map(|s| s.emissions)
        .filter(|&h| h > 0.0)
        .fold(f64::INFINITY, f64::min);
    let alpha = if enc && min_h.is_finite() {
        econ.load_shed_penalty / min_h
    } else {
        0.0
    };
    let top = segs
        .clone()
        .map(|s| s.cost + econ.carbon_price * s.emissions + alpha * s.emissions)
        .fold(0.0f64, f64::max);
    let lambda = top + econ.load_shed_penalty + econ.ren_spill_penalty;
    let max_cost = segs
        .map(|s| (s.cost + econ.carbon_price * s.emissions).abs())
        .fold(0.0f64, f64::max);
    let eta = case.storage.efficiency;
    let storage = lambda * (1.0 + 1.0 / (eta * eta));
    BigM {
        alpha,
        lambda,
        delta: lambda + max_cost + alpha * segs_max_h(case),
        xi: storage,
        rho: storage,
    }
}

fn segs_max_h(case: &Case) -> f64 {
    case.system
        .generators
        .iter()
        .flat_map(|g| &g.segments)
        .map(|s| s.emissions)
        .fold(0.0f64, f64::max)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BigMAudit {
    /// Largest |multiplier| / M seen in each family.
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    pub xi: f64,
    pub rho: f64,
}

impl BigMAudit {
    /// Every family at its constant.
    pub fn saturated() -> Self {
        Self {
            alpha: 1.0,
            lambda: 1.0,
            delta: 1.0,
            xi: 1.0,
            rho: 1.0,
        }
    }

    /// No multiplier came within 1% of its constant.
    pub fn passed(&self) -> bool {
        [self.alpha, self.lambda, self.delta, self.xi, self.rho]
            .iter()
            .all(|&r| r < 0.99)
    }
}

fn ratio(x: f64, m: f64) -> f64 {
    if m > 0.0 {
        x.abs() / m
    } else if x.abs() > 1e-9 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Audits multipliers against their constants. Storage multipliers are only
/// determined where the bus holds storage, and δ̄ only where the unit is on;
/// elsewhere their row has zero capacity and any value up to M is optimal, so
/// those entries are skipped. `u[gen][t]` uses 1 for commitment-free units.
pub fn audit_bigm(
    m: &BigM,
    days: &[(&DualSolution, &[Vec<f64>], &StorageAllocation)],
    enc: bool,
) -> BigMAudit {
    let mut a = BigMAudit::default();
    for &(d, u, alloc) in days {
        if enc {
            a.alpha = a.alpha.max(ratio(d.alpha, m.alpha));
        }
        for &x in d.lambda.iter().flatten() {
            a.lambda = a.lambda.max(ratio(x, m.lambda));
        }
        for (i, segs) in d.delta_hi.iter().enumerate() {
            for seg in segs {
                for (t, &x) in seg.iter().enumerate() {
                    if u[i][t] > 0.5 {
                        a.delta = a.delta.max(ratio(x, m.delta));
                    }
                }
            }
        }
        for b in 0..d.xi_hi.len() {
            if alloc.units.get(b).copied().unwrap_or(0) == 0 {
                continue;
            }
            for t in 0..d.xi_hi[b].len() {
                a.xi = a.xi.max(ratio(d.xi_hi[b][t], m.xi));
                a.rho = a
                    .rho
                    .max(ratio(d.rho_chg_hi[b][t], m.rho))
                    .max(ratio(d.rho_dis_hi[b][t], m.rho));
            }
        }
    }
    a
}

/// Scales every family that failed the audit by 10.
pub fn escalate(m: &BigM, audit: &BigMAudit) -> BigM {
    let up = |v: f64, r: f64| {
        if r >= 0.99 {
            if v > 0.0 {
                v * 10.0
            } else {
                1.0
            }
        } else {
            v
        }
    };
    BigM {
        alpha: up(m.alpha, audit.alpha),
        lambda: up(m.lambda, audit.lambda),
        delta: up(m.delta, audit.delta),
        xi: up(m.xi, audit.xi),
        rho: up(m.rho, audit.rho),
    }
}

pub const MAX_ESCALATIONS: usize = 3;

/// Bits needed to represent `0..=max_units`.
pub fn bits_for(max_units: u32) -> u32 {
    32 - max_units.leading_zeros()
}

/// Every count up to `max_units` has an exact bit pattern: `Σ 2^k x_k = u`.
pub fn expand_units(u: u32, bits: u32) -> Vec<bool> {
    (0..bits).map(|k| (u >> k) & 1 == 1).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Family {
    Lambda,
    Delta,
    Alpha,
    Xi,
    Rho,
}

fn row_families(idx: &DayIndex, aggregate: Option<RowId>) -> HashMap<RowId, Family> {
    let mut f = HashMap::new();
    for r in idx.bal_rows.iter().flatten() {
        f.insert(*r, Family::Lambda);
    }
    for r in idx.seg_rows.iter().flatten().flatten() {
        f.insert(*r, Family::Delta);
    }
    for r in idx.qcap_rows.iter().flatten().flatten() {
        f.insert(*r, Family::Xi);
    }
    for r in idx
        .ccap_rows
        .iter()
        .chain(&idx.dcap_rows)
        .flatten()
        .flatten()
    {
        f.insert(*r, Family::Rho);
    }
    if let Some(r) = idx.enc_row.or(aggregate) {
        f.insert(r, Family::Alpha);
    }
    f
}

/// One linearized product `aux = bit · y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Product {
    pub aux: Var,
    pub binary: Var,
    pub dual: Var,
}

#[derive(Clone, Debug)]
pub struct PcsleModel {
    pub model: MilpModel,
    /// Primal UC embedded in `model` (variables share indices).
    pub primal: UcModel,
    /// Bits `x_{b,k}` per bus, present at candidates.
    pub bits: Vec<Vec<Var>>,
    pub products: Vec<Product>,
    /// `(first index, length)` of each day's dual variables in `model`.
    pub dual_blocks: Vec<(usize, usize)>,
    pub bigm: BigM,
    pub day_duals: Vec<DayDual>,
}

impl PcsleModel {
    /// Worst |aux − bit·y| at `x`.
    pub fn linearization_error(&self, x: &[f64]) -> f64 {
        self.products
            .iter()
            .map(|p| (x[p.aux.0] - x[p.binary.0].round() * x[p.dual.0]).abs())
            .fold(0.0, f64::max)
    }

    /// Commitment of day `a` at a PCSLE point, 1 for commitment-free units.
    pub fn commitment(&self, a: usize, x: &[f64]) -> Vec<Vec<f64>> {
        self.primal.days[a]
            .u
            .iter()
            .map(|r| r.iter().map(|t| t.value(x)).collect())
            .collect()
    }

    /// Audits the multipliers of a PCSLE point.
    pub fn audit(&self, x: &[f64], enc: bool) -> BigMAudit {
        let alloc = self.primal.allocation(x);
        let duals: Vec<DualSolution> = (0..self.day_duals.len())
            .map(|a| self.day_dual(a, x))
            .collect();
        let us: Vec<Vec<Vec<f64>>> = (0..self.day_duals.len())
            .map(|a| self.commitment(a, x))
            .collect();
        let days: Vec<_> = duals
            .iter()
            .zip(&us)
            .map(|(d, u)| (d, u.as_slice(), &alloc))
            .collect();
        audit_bigm(&self.bigm, &days, enc)
    }

    /// Dual solution of day `a` read from a PCSLE point.
    pub fn day_dual(&self, a: usize, x: &[f64]) -> DualSolution {
        let (start, len) = self.dual_blocks[a];
        DualSolution::from_dual_lp(&self.day_duals[a], &x[start..start + len])
    }
}

#[derive(Clone, Debug)]
pub struct PcsleOptions {
    pub max_units_per_bus: u32,
    /// Bit budget; defaults to the minimum for `max_units_per_bus`.
    pub bits: Option<u32>,
    pub min_return: f64,
    pub bigm: Option<BigM>,
}

/// Profit-constrained single-level model: primal UC with binary-expanded
/// storage, one dispatch dual per day tied by strong duality, the profit
/// floor through the complementary-slackness rewrite, and big-M products.
pub fn build_pcsle(
    case: &Case,
    baselines: Option<&[f64]>,
    opts: &PcsleOptions,
) -> Result<PcsleModel, DualityError> {
    if baselines.is_some() && case.econ.enc_mode == EncMode::Aggregate {
        return Err(DualityError::AggregateEnc);
    }
    let need = bits_for(opts.max_units_per_bus);
    let nbits = opts.bits.unwrap_or(need);
    if nbits < need {
        return Err(DualityError::BitBudget {
            units: opts.max_units_per_bus,
            bits: nbits,
        });
    }
    let enc = baselines.is_some();
    let bigm = opts.bigm.unwrap_or_else(|| compute_bigm(case, enc));
    let sys = &case.system;
    let nb = sys.num_buses();
    let weights = case.weights();

    let primal = UcBuilder {
        system: sys,
        storage: &case.storage,
        econ: &case.econ,
        days: case.days.iter().map(|d| &d.profile).collect(),
        weights: weights.clone(),
        units: UnitsMode::Integer {
            max_per_bus: opts.max_units_per_bus,
            total: None,
        },
        commitment: CommitMode::Free,
        baselines: baselines.map(<[f64]>::to_vec),
    }
    .build()?;
    let mut m = primal.model.clone();
    m.name = "pcsle".into();

    let mut bits = vec![Vec::new(); nb];
    for b in 0..nb {
        let Some(n) = primal.units[b].and_then(|t| t.var()) else {
            continue;
        };
        m.set_kind(n, VarKind::Continuous);
        let id = &sys.buses[b].id;
        let xs: Vec<Var> = (0..nbits)
            .map(|k| m.binary(format!("x[{id},{k}]")))
            .collect();
        let mut terms = vec![(n, 1.0)];
        for (k, &x) in xs.iter().enumerate() {
            terms.push((x, -((1u64 << k) as f64)));
        }
        m.add_row(format!("expand[{id}]"), terms, Sense::Eq, 0.0);
        bits[b] = xs;
    }

    let mut products = Vec::new();
    let mut cache: HashMap<(Var, Var), Var> = HashMap::new();
    let mut dual_blocks = Vec::new();
    let mut day_duals = Vec::new();
    let mut profit_terms: Vec<(Var, f64)> = Vec::new();

    for (a, rep) in case.days.iter().enumerate() {
        let nt = rep.profile.hours();
        let u0 = vec![vec![0.0; nt]; sys.generators.len()];
        let dd = build_dual_tced(
            case,
            a,
            &StorageAllocation::zeros(nb),
            &u0,
            baselines.map(|b| b[a]),
        )?;
        let fam = row_families(&dd.tced.days[0], None);

        let mut dual = dd.dual.clone();
        let dual_obj: Vec<f64> = dual.objective().to_vec();
        let dual_off = dual.objective_offset();
        for c in dual.objective_mut() {
            *c = 0.0;
        }
        dual.set_objective_offset(0.0);
        let start = m.num_vars();
        let vmap = m.append(&dual, &format!("d{a}."));
        dual_blocks.push((start, vmap.len()));

        // Bounds on every multiplier that meets an upper-level variable.
        for f in &dd.tced.folded {
            let y = vmap[dd.map.row_vars[f.row.0].0];
            let (lo, hi) = match fam.get(&f.row) {
                Some(Family::Lambda) => (-bigm.lambda, bigm.lambda),
                Some(Family::Delta) => (-bigm.delta, 0.0),
                Some(Family::Alpha) => (-bigm.alpha, 0.0),
                Some(Family::Xi) => (-bigm.xi, 0.0),
                Some(Family::Rho) => (-bigm.rho, 0.0),
                None => continue,
            };
            let v = m.var(y);
            let (l, h) = (v.lower.max(lo), v.upper.min(hi));
            m.set_bounds(y, l, h);
        }

        // Strong duality: dispatch cost of day a equals its dual objective.
        let idx = &primal.days[a];
        let econ = &case.econ;
        let mut sd: Vec<(Var, f64)> = Vec::new();
        for (i, g) in sys.generators.iter().enumerate() {
            for (s, sg) in g.segments.iter().enumerate() {
                let c = sg.cost + econ.carbon_price * sg.emissions;
                for t in 0..nt {
                    sd.push((idx.seg[i][s][t], c));
                }
            }
        }
        for b in 0..nb {
            for t in 0..nt {
                sd.push((idx.shed[b][t], econ.load_shed_penalty));
                sd.push((idx.spill[b][t], econ.ren_spill_penalty));
            }
        }
        // dual value = −(dual_obj·y + dual_off) + Σ coef·param·y
        for (j, &c) in dual_obj.iter().enumerate() {
            if c != 0.0 {
                sd.push((vmap[j], c));
            }
        }
        let mut storage_part: Vec<(Var, f64)> = Vec::new();
        for f in &dd.tced.folded {
            let y = vmap[dd.map.row_vars[f.row.0].0];
            let (lo, hi) = (m.var(y).lower, m.var(y).upper);
            let factors: Vec<(Var, f64)> = match f.param {
                Param::Commit { gen, t, .. } => vec![(
                    primal.days[a].u[gen][t].var().expect("free commitment"),
                    1.0,
                )],
                Param::Startup { gen, t, .. } => vec![(
                    primal.days[a].v[gen][t].var().expect("free commitment"),
                    1.0,
                )],
                Param::Units { bus } => bits[bus]
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| (x, (1u64 << k) as f64))
                    .collect(),
            };
            for (x, scale) in factors {
                let aux = *cache.entry((x, y)).or_insert_with(|| {
                    let w = m.continuous(
                        format!("w[{},{}]", m.var(x).name, m.var(y).name),
                        lo.min(0.0),
                        hi.max(0.0),
                    );
                    let tag = m.var(w).name.clone();
                    m.add_row(format!("{tag}.a"), [(w, 1.0), (x, -hi)], Sense::Le, 0.0);
                    m.add_row(format!("{tag}.b"), [(w, 1.0), (x, -lo)], Sense::Ge, 0.0);
                    m.add_row(
                        format!("{tag}.c"),
                        [(w, 1.0), (y, -1.0), (x, -hi)],
                        Sense::Ge,
                        -hi,
                    );
                    m.add_row(
                        format!("{tag}.d"),
                        [(w, 1.0), (y, -1.0), (x, -lo)],
                        Sense::Le,
                        -lo,
                    );
                    products.push(Product {
                        aux: w,
                        binary: x,
                        dual: y,
                    });
                    w
                });
                sd.push((aux, -f.coef * scale));
                if matches!(f.param, Param::Units { .. }) {
                    storage_part.push((aux, f.coef * scale));
                }
            }
        }
        m.add_row(format!("strong_duality[{a}]"), sd, Sense::Eq, -dual_off);
        for (w, c) in storage_part {
            profit_terms.push((w, -weights[a] * c));
        }
        day_duals.push(dd);
    }

    // Profit floor: Σ_a W_a · (dual-side storage revenue) − C^batt ≥ min_return.
    for b in 0..nb {
        if let Some(n) = primal.units[b].and_then(|t| t.var()) {
            profit_terms.push((n, -case.storage.unit_cost()));
        }
    }
    m.add_row("profit", profit_terms, Sense::Ge, opts.min_return);

    Ok(PcsleModel {
        model: m,
        primal,
        bits,
        products,
        dual_blocks,
        bigm,
        day_duals,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcsleOutcome {
    pub status: String,
    /// Lower bound on the profit-constrained social cost.
    pub bound: f64,
    pub incumbent: Option<f64>,
    pub allocation: Option<StorageAllocation>,
    pub gap: f64,
    pub nodes: usize,
    pub bigm: BigM,
    pub escalations: usize,
    pub audit: Option<BigMAudit>,
    pub linearization_error: Option<f64>,
}

impl PcsleOutcome {
    /// The bound is trusted when the incumbent's multipliers stayed clear of
    /// every constant (or no incumbent was found to audit).
    pub fn audit_passed(&self) -> bool {
        self.audit.as_ref().is_none_or(BigMAudit::passed)
    }
}

/// Builds and solves the PCSLE under `milp`, escalating failing big-M
/// families up to [`MAX_ESCALATIONS`] times.
pub fn solve_pcsle(
    case: &Case,
    baselines: Option<&[f64]>,
    opts: &PcsleOptions,
    milp: &encstore_milp::MilpOptions,
) -> Result<PcsleOutcome, DualityError> {
    let enc = baselines.is_some();
    let mut bigm = opts.bigm.unwrap_or_else(|| compute_bigm(case, enc));
    let mut escalations = 0;
    loop {
        let p = build_pcsle(
            case,
            baselines,
            &PcsleOptions {
                bigm: Some(bigm),
                ..opts.clone()
            },
        )?;
        let sol = encstore_milp::solve_milp_with(&p.model, milp);
        let has = sol.has_incumbent();
        let audit = has.then(|| p.audit(&sol.x, enc));
        let failed = audit.as_ref().is_some_and(|a| !a.passed());
        if failed && escalations < MAX_ESCALATIONS {
            bigm = escalate(&bigm, audit.as_ref().expect("audited"));
            escalations += 1;
            continue;
        }
        // Constants that are too tight can cut off every feasible point.
        if sol.status == MilpStatus::Infeasible && escalations < MAX_ESCALATIONS {
            bigm = escalate(&bigm, &BigMAudit::saturated());
            escalations += 1;
            continue;
        }
        return Ok(PcsleOutcome {
            status: format!("{:?}", sol.status),
            bound: sol.best_bound,
            incumbent: has.then_some(sol.objective),
            allocation: has.then(|| p.primal.allocation(&sol.x)),
            gap: sol.gap,
            nodes: sol.nodes,
            bigm,
            escalations,
            audit,
            linearization_error: has.then(|| p.linearization_error(&sol.x)),
        });
    }
}

/// Duality evidence for one day of an operator schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DayCheck {
    pub primal: f64,
    pub dual: f64,
    /// `|primal − dual| / (1 + |primal|)`
    pub duality_gap: f64,
    /// `Σ λ (dis − chg)` with λ from the dual LP and the recorded schedule.
    pub profit_lambda: f64,
    /// `Σ [Q^max ξ̄ + J^max (ρ̄^dis + ρ̄^chg)]` from the same dual solution.
    pub profit_dual: f64,
    pub printed: PrintedCheck,
}

impl DayCheck {
    pub fn profit_gap(&self) -> f64 {
        (self.profit_lambda - self.profit_dual).abs() / (1.0 + self.profit_lambda.abs())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub days: Vec<DayCheck>,
    /// Annual storage revenue through prices and through the dual rewrite,
    /// before the battery cost.
    pub revenue_lambda: f64,
    pub revenue_dual: f64,
}

impl DualityReport {
    pub fn max_duality_gap(&self) -> f64 {
        self.days.iter().map(|d| d.duality_gap).fold(0.0, f64::max)
    }

    /// Relative gap between the two profit forms for a battery cost `c`.
    pub fn profit_gap(&self, c: f64) -> f64 {
        let (a, b) = (self.revenue_lambda - c, self.revenue_dual - c);
        (a - b).abs() / (1.0 + a.abs())
    }

    /// Worst printed-row residual and worst mismatch between the completed
    /// printed objective and the machine dual objective.
    pub fn printed_residual(&self) -> f64 {
        self.days
            .iter()
            .map(|d| {
                let obj = (d.printed.completed_objective() - d.dual).abs() / (1.0 + d.dual.abs());
                d.printed
                    .max_row_residual
                    .max(obj)
                    .max(d.printed.sign_violation)
            })
            .fold(0.0, f64::max)
    }
}

/// Re-solves the fixed-commitment LP of every day of `dispatch` in primal and
/// dual form and checks strong duality, the profit identity and the printed
/// dual rows.
pub fn check_dispatch(
    case: &Case,
    alloc: &StorageAllocation,
    dispatch: &crate::uc::DispatchSolution,
    baselines: Option<&[f64]>,
) -> Result<DualityReport, DualityError> {
    let weights = case.weights();
    let mut report = DualityReport::default();
    for (a, day) in dispatch.days.iter().enumerate() {
        let base = baselines.map(|b| b[a]);
        let dd = build_dual_tced(case, a, alloc, &day.u, base)?;
        let primal = solve_lp(&dd.tced.model);
        if !primal.is_optimal() {
            return Err(UcError::FixedLp(format!("{:?}", primal.status)).into());
        }
        let (_, d) = solve_dual_tced(&dd)?;
        let profit_lambda = profit_via_prices(&d, &day.dis, &day.chg);
        let profit_dual = profit_via_duals(&d, alloc, case);
        let printed = printed_dual_check(case, a, alloc, &day.u, base, &d);
        report.revenue_lambda += weights[a] * profit_lambda;
        report.revenue_dual += weights[a] * profit_dual;
        report.days.push(DayCheck {
            primal: primal.objective,
            dual: d.objective,
            duality_gap: (primal.objective - d.objective).abs() / (1.0 + primal.objective.abs()),
            profit_lambda,
            profit_dual,
            printed,
        });
    }
    Ok(report)
}
