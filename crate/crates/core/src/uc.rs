//! Transmission-constrained unit commitment over representative days, with
//! storage, load shedding and the emissions-neutrality constraint.
//!
//! Every storage size, commitment and startup term is either a model variable
//! or a fixed value. Fixed values are folded into row right-hand sides and the
//! fold is recorded, so the same builder yields the full UC, the dispatch LP at
//! fixed commitment, and the parametric LP used by the duality module.

use std::time::Duration;

use encstore_milp::{
    solve_lp, solve_milp_with, LpSolution, MilpModel, MilpOptions, MilpSolution, MilpStatus, RowId,
    Sense, Var,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::RepresentativeDay;
use crate::system::{DailyProfile, EconomicParams, EncMode, PowerSystem, StorageSpec};

#[derive(Debug, Error)]
pub enum UcError {
    #[error("ENC requested but {got} baselines supplied for {want} days")]
    MissingBaseline { got: usize, want: usize },
    #[error("storage allocated at bus {0}, which is not a storage candidate")]
    NotCandidate(String),
    #[error("allocation has {got} entries for {want} buses")]
    AllocationShape { got: usize, want: usize },
    #[error("negative carbon price {0}")]
    NegativePrice(f64),
    #[error("day profile does not match the system's {0} buses")]
    DayShape(usize),
    #[error("no feasible commitment found ({0:?})")]
    NoIncumbent(MilpStatus),
    #[error("fixed-commitment LP is not optimal ({0})")]
    FixedLp(String),
}

/// A fixed value that may be a decision in a larger model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    Commit { day: usize, gen: usize, t: usize },
    Startup { day: usize, gen: usize, t: usize },
    Units { bus: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Term {
    Var(Var),
    Fixed { value: f64, param: Option<Param> },
}

impl Term {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Var(v) => x[v.0],
            Term::Fixed { value, .. } => value,
        }
    }

    pub fn var(&self) -> Option<Var> {
        match *self {
            Term::Var(v) => Some(v),
            Term::Fixed { .. } => None,
        }
    }

    fn constant(value: f64) -> Self {
        Term::Fixed { value, param: None }
    }
}

/// `rhs(row) = base + coef * value(param)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Folded {
    pub row: RowId,
    pub param: Param,
    pub coef: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageAllocation {
    /// Installed units per bus.
    pub units: Vec<u32>,
}

impl StorageAllocation {
    pub fn zeros(buses: usize) -> Self {
        Self {
            units: vec![0; buses],
        }
    }

    pub fn total(&self) -> u32 {
        self.units.iter().sum()
    }

    pub fn energy(&self, bus: usize, spec: &StorageSpec) -> f64 {
        self.units[bus] as f64 * spec.unit_energy()
    }

    pub fn power(&self, bus: usize, spec: &StorageSpec) -> f64 {
        self.units[bus] as f64 * spec.unit_power
    }

    /// Annualized investment cost.
    pub fn cost(&self, spec: &StorageSpec) -> f64 {
        (0..self.units.len())
            .map(|b| {
                spec.cost_energy * self.energy(b, spec) + spec.cost_power * self.power(b, spec)
            })
            .sum()
    }

    pub fn validate(&self, system: &PowerSystem) -> Result<(), UcError> {
        if self.units.len() != system.num_buses() {
            return Err(UcError::AllocationShape {
                got: self.units.len(),
                want: system.num_buses(),
            });
        }
        for (b, &n) in self.units.iter().enumerate() {
            if n > 0 && !system.buses[b].candidate_storage {
                return Err(UcError::NotCandidate(system.buses[b].id.clone()));
            }
        }
        Ok(())
    }
}

/// Everything an operator solve depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub system: PowerSystem,
    pub days: Vec<RepresentativeDay>,
    pub econ: EconomicParams,
    pub storage: StorageSpec,
}

impl Case {
    /// Annual weight of each representative day.
    pub fn weights(&self) -> Vec<f64> {
        self.days
            .iter()
            .map(|d| self.econ.days_per_year * d.probability)
            .collect()
    }

    pub fn with_carbon_price(&self, price: f64) -> Case {
        let mut c = self.clone();
        c.econ.carbon_price = price;
        c
    }
}

#[derive(Clone, Debug)]
pub enum UnitsMode {
    Fixed(StorageAllocation),
    /// Integer units per candidate bus, optionally with a fixed total.
    Integer {
        max_per_bus: u32,
        total: Option<u32>,
    },
}

#[derive(Clone, Debug)]
pub enum CommitMode {
    Free,
    /// `u[day][gen][t]`; entries for commitment-free generators are ignored.
    Fixed(Vec<Vec<Vec<f64>>>),
}

/// Startups implied by a cyclic on/off schedule.
pub fn startups(u: &[f64]) -> Vec<f64> {
    let t = u.len();
    (0..t)
        .map(|k| (u[k] - u[(k + t - 1) % t]).max(0.0))
        .collect()
}

pub fn shutdowns(u: &[f64]) -> Vec<f64> {
    let t = u.len();
    (0..t)
        .map(|k| (u[(k + t - 1) % t] - u[k]).max(0.0))
        .collect()
}

#[derive(Clone, Debug)]
pub struct DayIndex {
    pub weight: f64,
    pub hours: usize,
    /// `[gen][t]`
    pub u: Vec<Vec<Term>>,
    pub v: Vec<Vec<Term>>,
    pub z: Vec<Vec<Term>>,
    /// `[gen][segment][t]`
    pub seg: Vec<Vec<Vec<Var>>>,
    /// `[bus][t]`, `None` at the reference bus.
    pub theta: Vec<Vec<Option<Var>>>,
    /// `[line][t]`
    pub flow: Vec<Vec<Var>>,
    pub spill: Vec<Vec<Var>>,
    pub shed: Vec<Vec<Var>>,
    /// `[bus]`, present at storage candidates.
    pub soc: Vec<Option<Vec<Var>>>,
    pub chg: Vec<Option<Vec<Var>>>,
    pub dis: Vec<Option<Vec<Var>>>,
    pub bal_rows: Vec<Vec<RowId>>,
    pub flow_rows: Vec<Vec<RowId>>,
    pub seg_rows: Vec<Vec<Vec<RowId>>>,
    pub soc_rows: Vec<Option<Vec<RowId>>>,
    pub qcap_rows: Vec<Option<Vec<RowId>>>,
    pub ccap_rows: Vec<Option<Vec<RowId>>>,
    pub dcap_rows: Vec<Option<Vec<RowId>>>,
    pub enc_row: Option<RowId>,
}

#[derive(Clone, Debug)]
pub struct UcModel {
    pub model: MilpModel,
    pub days: Vec<DayIndex>,
    /// Storage size per bus, present at candidates.
    pub units: Vec<Option<Term>>,
    pub folded: Vec<Folded>,
    pub enc_aggregate_row: Option<RowId>,
    base_objective: Vec<f64>,
    base_offset: f64,
    emission_objective: Vec<f64>,
    emission_offset: f64,
    pub carbon_price: f64,
}

impl UcModel {
    /// Objective coefficients excluding the carbon charge.
    pub fn base_objective(&self) -> (&[f64], f64) {
        (&self.base_objective, self.base_offset)
    }

    /// Weighted emissions as a linear function of the variables.
    pub fn emission_objective(&self) -> (&[f64], f64) {
        (&self.emission_objective, self.emission_offset)
    }

    /// Storage units per bus read from `x` (or the fixed values).
    pub fn allocation(&self, x: &[f64]) -> StorageAllocation {
        StorageAllocation {
            units: self
                .units
                .iter()
                .map(|t| t.map_or(0, |t| t.value(x).round().max(0.0) as u32))
                .collect(),
        }
    }
}

/// Assembles a UC model. Most callers use [`build_uc`]; the duality module uses
/// custom weights and fixed parameters.
pub struct UcBuilder<'a> {
    pub system: &'a PowerSystem,
    pub storage: &'a StorageSpec,
    pub econ: &'a EconomicParams,
    pub days: Vec<&'a DailyProfile>,
    pub weights: Vec<f64>,
    pub units: UnitsMode,
    pub commitment: CommitMode,
    /// Per-day baselines; `None` leaves the ENC out.
    pub baselines: Option<Vec<f64>>,
}

struct Row {
    terms: Vec<(Var, f64)>,
    rhs: f64,
    folds: Vec<(Param, f64)>,
}

impl Row {
    fn new(rhs: f64) -> Self {
        Self {
            terms: Vec::new(),
            rhs,
            folds: Vec::new(),
        }
    }

    fn var(&mut self, v: Var, c: f64) -> &mut Self {
        self.terms.push((v, c));
        self
    }

    fn term(&mut self, t: Term, c: f64) -> &mut Self {
        match t {
            Term::Var(v) => self.terms.push((v, c)),
            Term::Fixed { value, param } => {
                self.rhs -= c * value;
                if let Some(p) = param {
                    self.folds.push((p, -c));
                }
            }
        }
        self
    }
}

struct Sink {
    model: MilpModel,
    folded: Vec<Folded>,
    base_obj_offset: f64,
    emis_obj_offset: f64,
}

impl Sink {
    fn add(&mut self, name: String, row: Row, sense: Sense) -> RowId {
        let id = self.model.add_row(name, row.terms, sense, row.rhs);
        for (param, coef) in row.folds {
            self.folded.push(Folded {
                row: id,
                param,
                coef,
            });
        }
        id
    }
}

impl<'a> UcBuilder<'a> {
    pub fn build(&self) -> Result<UcModel, UcError> {
        let sys = self.system;
        let econ = self.econ;
        if econ.carbon_price < 0.0 {
            return Err(UcError::NegativePrice(econ.carbon_price));
        }
        let nb = sys.num_buses();
        for d in &self.days {
            if d.load.len() != nb || d.ren.len() != nb {
                return Err(UcError::DayShape(nb));
            }
        }
        if let Some(b) = &self.baselines {
            if b.len() != self.days.len() {
                return Err(UcError::MissingBaseline {
                    got: b.len(),
                    want: self.days.len(),
                });
            }
        }
        if let UnitsMode::Fixed(a) = &self.units {
            a.validate(sys)?;
        }
        let mut sink = Sink {
            model: MilpModel::new("uc"),
            folded: Vec::new(),
            base_obj_offset: 0.0,
            emis_obj_offset: 0.0,
        };
        let mut base_obj: Vec<(Var, f64)> = Vec::new();
        let mut emis_obj: Vec<(Var, f64)> = Vec::new();

        let cands = sys.candidate_buses();
        let mut units: Vec<Option<Term>> = vec![None; nb];
        for &b in &cands {
            let id = &sys.buses[b].id;
            units[b] = Some(match &self.units {
                UnitsMode::Fixed(a) => Term::Fixed {
                    value: a.units[b] as f64,
                    param: Some(Param::Units { bus: b }),
                },
                UnitsMode::Integer { max_per_bus, .. } => {
                    let n = sink
                        .model
                        .integer(format!("n[{id}]"), 0.0, *max_per_bus as f64);
                    base_obj.push((n, self.storage.unit_cost()));
                    Term::Var(n)
                }
            });
        }
        if let UnitsMode::Integer { total: Some(q), .. } = &self.units {
            let mut r = Row::new(*q as f64);
            for &b in &cands {
                r.term(units[b].expect("candidate"), 1.0);
            }
            sink.add("units_total".into(), r, Sense::Eq);
        }

        let reference = sys.reference_bus();
        let mut days = Vec::with_capacity(self.days.len());
        for (a, prof) in self.days.iter().enumerate() {
            let w = self.weights[a];
            let fixed_u = match &self.commitment {
                CommitMode::Free => None,
                CommitMode::Fixed(u) => Some(&u[a]),
            };
            let idx = self.build_day(
                &mut sink,
                &mut base_obj,
                &mut emis_obj,
                a,
                prof,
                w,
                fixed_u,
                &units,
                reference,
            );
            days.push(idx);
        }

        let mut enc_aggregate_row = None;
        if let Some(base) = &self.baselines {
            match econ.enc_mode {
                EncMode::Daily => {
                    for (a, idx) in days.iter_mut().enumerate() {
                        let mut r = Row::new(econ.chi * base[a]);
                        self.emission_terms(&mut r, idx, 1.0);
                        idx.enc_row = Some(sink.add(format!("enc[{a}]"), r, Sense::Le));
                    }
                }
                EncMode::Aggregate => {
                    let rhs: f64 = days.iter().zip(base).map(|(d, e)| d.weight * e).sum();
                    let mut r = Row::new(econ.chi * rhs);
                    for idx in &days {
                        self.emission_terms(&mut r, idx, idx.weight);
                    }
                    enc_aggregate_row = Some(sink.add("enc".into(), r, Sense::Le));
                }
            }
        }

        let n = sink.model.num_vars();
        let mut base_objective = vec![0.0; n];
        let mut emission_objective = vec![0.0; n];
        for (v, c) in base_obj {
            base_objective[v.0] += c;
        }
        for (v, c) in emis_obj {
            emission_objective[v.0] += c;
        }
        let mut uc = UcModel {
            model: sink.model,
            days,
            units,
            folded: sink.folded,
            enc_aggregate_row,
            base_objective,
            base_offset: sink.base_obj_offset,
            emission_objective,
            emission_offset: sink.emis_obj_offset,
            carbon_price: 0.0,
        };
        set_objective(&mut uc, econ.carbon_price);
        Ok(uc)
    }

    fn emission_terms(&self, r: &mut Row, idx: &DayIndex, scale: f64) {
        for (i, g) in self.system.generators.iter().enumerate() {
            for t in 0..idx.hours {
                for (s, seg) in g.segments.iter().enumerate() {
                    if seg.emissions != 0.0 {
                        r.var(idx.seg[i][s][t], scale * seg.emissions);
                    }
                }
                if g.emin != 0.0 {
                    r.term(idx.u[i][t], scale * g.emin);
                }
                if g.esu != 0.0 {
                    r.term(idx.v[i][t], scale * g.esu);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_day(
        &self,
        sink: &mut Sink,
        base_obj: &mut Vec<(Var, f64)>,
        emis_obj: &mut Vec<(Var, f64)>,
        a: usize,
        prof: &DailyProfile,
        w: f64,
        fixed_u: Option<&Vec<Vec<f64>>>,
        units: &[Option<Term>],
        reference: usize,
    ) -> DayIndex {
        let sys = self.system;
        let econ = self.econ;
        let st = self.storage;
        let nt = prof.hours();
        let nb = sys.num_buses();
        let bid = |b: usize| sys.buses[b].id.as_str();

        let mut u = Vec::new();
        let mut v = Vec::new();
        let mut z = Vec::new();
        let mut seg = Vec::new();
        for (i, g) in sys.generators.iter().enumerate() {
            let gid = &g.id;
            let (ui, vi, zi): (Vec<Term>, Vec<Term>, Vec<Term>) = if !g.needs_commitment() {
                (
                    vec![Term::constant(1.0); nt],
                    vec![Term::constant(0.0); nt],
                    vec![Term::constant(0.0); nt],
                )
            } else if let Some(fu) = fixed_u {
                let on: Vec<f64> = fu[i].iter().map(|x| x.round()).collect();
                let up = startups(&on);
                let down = shutdowns(&on);
                (
                    (0..nt)
                        .map(|t| Term::Fixed {
                            value: on[t],
                            param: Some(Param::Commit { day: a, gen: i, t }),
                        })
                        .collect(),
                    (0..nt)
                        .map(|t| Term::Fixed {
                            value: up[t],
                            param: Some(Param::Startup { day: a, gen: i, t }),
                        })
                        .collect(),
                    down.into_iter().map(Term::constant).collect(),
                )
            } else {
                let m = &mut sink.model;
                (
                    (0..nt)
                        .map(|t| Term::Var(m.binary(format!("u[{a},{gid},{t}]"))))
                        .collect(),
                    (0..nt)
                        .map(|t| Term::Var(m.binary(format!("v[{a},{gid},{t}]"))))
                        .collect(),
                    (0..nt)
                        .map(|t| Term::Var(m.binary(format!("z[{a},{gid},{t}]"))))
                        .collect(),
                )
            };
            let segs: Vec<Vec<Var>> = g
                .segments
                .iter()
                .enumerate()
                .map(|(s, _)| {
                    (0..nt)
                        .map(|t| {
                            sink.model.continuous(
                                format!("g[{a},{gid},{s},{t}]"),
                                0.0,
                                f64::INFINITY,
                            )
                        })
                        .collect()
                })
                .collect();
            for t in 0..nt {
                for (s, sg) in g.segments.iter().enumerate() {
                    base_obj.push((segs[s][t], w * sg.cost));
                    emis_obj.push((segs[s][t], w * sg.emissions));
                }
                for (term, cost, emis) in [(ui[t], g.cmin, g.emin), (vi[t], g.csu, g.esu)] {
                    match term {
                        Term::Var(x) => {
                            base_obj.push((x, w * cost));
                            emis_obj.push((x, w * emis));
                        }
                        Term::Fixed { value, .. } => {
                            sink.base_obj_offset += w * cost * value;
                            sink.emis_obj_offset += w * emis * value;
                        }
                    }
                }
            }
            u.push(ui);
            v.push(vi);
            z.push(zi);
            seg.push(segs);
        }

        // Commitment logic and minimum up/down times, cyclic in t.
        for (i, g) in sys.generators.iter().enumerate() {
            if u[i][0].var().is_none() {
                continue;
            }
            let gid = &g.id;
            for t in 0..nt {
                let prev = (t + nt - 1) % nt;
                let mut r = Row::new(0.0);
                r.term(v[i][t], 1.0)
                    .term(z[i][t], -1.0)
                    .term(u[i][t], -1.0)
                    .term(u[i][prev], 1.0);
                sink.add(format!("logic[{a},{gid},{t}]"), r, Sense::Eq);
            }
            let up = g.min_up.min(nt);
            if up > 1 {
                for t in 0..nt {
                    let mut r = Row::new(0.0);
                    for k in 0..up {
                        r.term(v[i][(t + nt - k) % nt], 1.0);
                    }
                    r.term(u[i][t], -1.0);
                    sink.add(format!("minup[{a},{gid},{t}]"), r, Sense::Le);
                }
            }
            let down = g.min_down.min(nt);
            if down > 1 {
                for t in 0..nt {
                    let mut r = Row::new(1.0);
                    for k in 0..down {
                        r.term(z[i][(t + nt - k) % nt], 1.0);
                    }
                    r.term(u[i][t], 1.0);
                    sink.add(format!("mindown[{a},{gid},{t}]"), r, Sense::Le);
                }
            }
        }

        // Segment limits.
        let mut seg_rows = Vec::new();
        for (i, g) in sys.generators.iter().enumerate() {
            let mut rows_i = Vec::new();
            for (s, sg) in g.segments.iter().enumerate() {
                let mut rows_s = Vec::new();
                for t in 0..nt {
                    let mut r = Row::new(0.0);
                    r.var(seg[i][s][t], 1.0).term(u[i][t], -sg.max_mw);
                    rows_s.push(sink.add(format!("seg[{a},{},{s},{t}]", g.id), r, Sense::Le));
                }
                rows_i.push(rows_s);
            }
            seg_rows.push(rows_i);
        }

        // Network variables.
        let theta: Vec<Vec<Option<Var>>> = (0..nb)
            .map(|b| {
                (0..nt)
                    .map(|t| {
                        (b != reference).then(|| {
                            sink.model.continuous(
                                format!("theta[{a},{},{t}]", bid(b)),
                                f64::NEG_INFINITY,
                                f64::INFINITY,
                            )
                        })
                    })
                    .collect()
            })
            .collect();
        let flow: Vec<Vec<Var>> = sys
            .lines
            .iter()
            .map(|l| {
                (0..nt)
                    .map(|t| {
                        sink.model.continuous(
                            format!("f[{a},{},{t}]", l.id),
                            -l.capacity,
                            l.capacity,
                        )
                    })
                    .collect()
            })
            .collect();
        let spill: Vec<Vec<Var>> = (0..nb)
            .map(|b| {
                (0..nt)
                    .map(|t| {
                        sink.model.continuous(
                            format!("spill[{a},{},{t}]", bid(b)),
                            0.0,
                            prof.ren[b][t],
                        )
                    })
                    .collect()
            })
            .collect();
        let shed: Vec<Vec<Var>> = (0..nb)
            .map(|b| {
                (0..nt)
                    .map(|t| {
                        sink.model.continuous(
                            format!("shed[{a},{},{t}]", bid(b)),
                            0.0,
                            prof.load[b][t],
                        )
                    })
                    .collect()
            })
            .collect();
        for b in 0..nb {
            for t in 0..nt {
                base_obj.push((shed[b][t], w * econ.load_shed_penalty));
                base_obj.push((spill[b][t], w * econ.ren_spill_penalty));
            }
        }

        // Storage.
        let mut soc = vec![None; nb];
        let mut chg = vec![None; nb];
        let mut dis = vec![None; nb];
        let mut soc_rows = vec![None; nb];
        let mut qcap_rows = vec![None; nb];
        let mut ccap_rows = vec![None; nb];
        let mut dcap_rows = vec![None; nb];
        for b in 0..nb {
            let Some(n) = units[b] else { continue };
            let id = bid(b);
            let m = &mut sink.model;
            let q: Vec<Var> = (0..nt)
                .map(|t| m.continuous(format!("Q[{a},{id},{t}]"), 0.0, f64::INFINITY))
                .collect();
            let c: Vec<Var> = (0..nt)
                .map(|t| m.continuous(format!("chg[{a},{id},{t}]"), 0.0, f64::INFINITY))
                .collect();
            let d: Vec<Var> = (0..nt)
                .map(|t| m.continuous(format!("dis[{a},{id},{t}]"), 0.0, f64::INFINITY))
                .collect();
            let eta = self.storage.efficiency;
            let mut sr = Vec::new();
            let mut qr = Vec::new();
            let mut cr = Vec::new();
            let mut dr = Vec::new();
            for t in 0..nt {
                let prev = (t + nt - 1) % nt;
                let mut r = Row::new(0.0);
                r.var(q[t], 1.0)
                    .var(q[prev], -1.0)
                    .var(c[t], -eta)
                    .var(d[t], 1.0 / eta);
                sr.push(sink.add(format!("soc[{a},{id},{t}]"), r, Sense::Eq));
            }
            for t in 0..nt {
                let mut r = Row::new(0.0);
                r.var(q[t], 1.0).term(n, -st.unit_energy());
                qr.push(sink.add(format!("qcap[{a},{id},{t}]"), r, Sense::Le));
            }
            for t in 0..nt {
                let mut r = Row::new(0.0);
                r.var(c[t], 1.0).term(n, -st.unit_power);
                cr.push(sink.add(format!("ccap[{a},{id},{t}]"), r, Sense::Le));
            }
            for t in 0..nt {
                let mut r = Row::new(0.0);
                r.var(d[t], 1.0).term(n, -st.unit_power);
                dr.push(sink.add(format!("dcap[{a},{id},{t}]"), r, Sense::Le));
            }
            soc[b] = Some(q);
            chg[b] = Some(c);
            dis[b] = Some(d);
            soc_rows[b] = Some(sr);
            qcap_rows[b] = Some(qr);
            ccap_rows[b] = Some(cr);
            dcap_rows[b] = Some(dr);
        }

        // Nodal balance.
        let mut bal_rows = Vec::with_capacity(nb);
        for b in 0..nb {
            let mut rows_b = Vec::with_capacity(nt);
            for t in 0..nt {
                let mut r = Row::new(prof.load[b][t] - prof.ren[b][t]);
                for (i, g) in sys.generators.iter().enumerate() {
                    if g.bus != b {
                        continue;
                    }
                    if g.gmin != 0.0 {
                        r.term(u[i][t], g.gmin);
                    }
                    for s in 0..g.segments.len() {
                        r.var(seg[i][s][t], 1.0);
                    }
                }
                if let (Some(c), Some(d)) = (&chg[b], &dis[b]) {
                    r.var(d[t], 1.0).var(c[t], -1.0);
                }
                for (l, line) in sys.lines.iter().enumerate() {
                    if line.from == b {
                        r.var(flow[l][t], -1.0);
                    } else if line.to == b {
                        r.var(flow[l][t], 1.0);
                    }
                }
                r.var(spill[b][t], -1.0).var(shed[b][t], 1.0);
                rows_b.push(sink.add(format!("bal[{a},{},{t}]", bid(b)), r, Sense::Eq));
            }
            bal_rows.push(rows_b);
        }

        // DC flow definition.
        let mut flow_rows = Vec::new();
        for (l, line) in sys.lines.iter().enumerate() {
            let y = line.admittance();
            let mut rows_l = Vec::new();
            for t in 0..nt {
                let mut r = Row::new(0.0);
                r.var(flow[l][t], 1.0);
                if let Some(th) = theta[line.from][t] {
                    r.var(th, -y);
                }
                if let Some(th) = theta[line.to][t] {
                    r.var(th, y);
                }
                rows_l.push(sink.add(format!("flow[{a},{},{t}]", line.id), r, Sense::Eq));
            }
            flow_rows.push(rows_l);
        }

        DayIndex {
            weight: w,
            hours: nt,
            u,
            v,
            z,
            seg,
            theta,
            flow,
            spill,
            shed,
            soc,
            chg,
            dis,
            bal_rows,
            flow_rows,
            seg_rows,
            soc_rows,
            qcap_rows,
            ccap_rows,
            dcap_rows,
            enc_row: None,
        }
    }
}

fn set_objective(uc: &mut UcModel, price: f64) {
    let obj = uc.model.objective_mut();
    for j in 0..obj.len() {
        obj[j] = uc.base_objective[j] + price * uc.emission_objective[j];
    }
    uc.model
        .set_objective_offset(uc.base_offset + price * uc.emission_offset);
    uc.carbon_price = price;
}

/// Replaces (never accumulates) the carbon charge on a built model.
pub fn apply_carbon_price(uc: &UcModel, price: f64) -> Result<UcModel, UcError> {
    if price < 0.0 || price.is_nan() {
        return Err(UcError::NegativePrice(price));
    }
    let mut out = uc.clone();
    set_objective(&mut out, price);
    Ok(out)
}

/// Builds the operator's UC for `case` with storage fixed at `alloc`. `enc`
/// carries one baseline per representative day.
pub fn build_uc(
    case: &Case,
    alloc: &StorageAllocation,
    enc: Option<&[f64]>,
) -> Result<UcModel, UcError> {
    UcBuilder {
        system: &case.system,
        storage: &case.storage,
        econ: &case.econ,
        days: case.days.iter().map(|d| &d.profile).collect(),
        weights: case.weights(),
        units: UnitsMode::Fixed(alloc.clone()),
        commitment: CommitMode::Free,
        baselines: enc.map(<[f64]>::to_vec),
    }
    .build()
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub gap: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gap: 1e-3,
            time_limit: None,
            node_limit: 200_000,
        }
    }
}

impl SolveOptions {
    pub fn exact() -> Self {
        Self {
            gap: 1e-9,
            ..Self::default()
        }
    }

    pub fn milp(&self) -> MilpOptions {
        MilpOptions {
            gap_target: self.gap,
            time_limit: self.time_limit,
            node_limit: self.node_limit,
            ..MilpOptions::default()
        }
    }
}

/// LMPs in $/MWh, `[day][bus][t]`, from the fixed-commitment LP.
#[derive(Clone, Debug)]
pub struct Lmps {
    pub prices: Vec<Vec<Vec<f64>>>,
    pub lp: LpSolution,
    /// Largest reduced-cost sign violation relative to the objective scale.
    pub dual_residual: f64,
}

fn dual_residual(model: &MilpModel, lp: &LpSolution) -> f64 {
    let scale = model.objective().iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let mut worst = 0.0f64;
    for (j, v) in model.vars().iter().enumerate() {
        let d = lp.reduced_costs[j];
        let x = lp.x[j];
        let tol = 1e-9 * (1.0 + x.abs());
        let at_lo = v.lower.is_finite() && (x - v.lower).abs() <= tol;
        let at_up = v.upper.is_finite() && (x - v.upper).abs() <= tol;
        let bad = if at_lo && at_up {
            0.0
        } else if at_lo {
            (-d).max(0.0)
        } else if at_up {
            d.max(0.0)
        } else {
            d.abs()
        };
        worst = worst.max(bad);
    }
    worst / scale
}

/// Fixes every integer variable at its MILP value, re-solves the LP and reads
/// nodal prices off the balance rows.
pub fn extract_lmps(uc: &UcModel, milp: &MilpSolution) -> Result<Lmps, UcError> {
    if !milp.has_incumbent() {
        return Err(UcError::NoIncumbent(milp.status));
    }
    let fixed = uc.model.with_integers_fixed(&milp.x);
    let lp = solve_lp(&fixed);
    if !lp.is_optimal() {
        return Err(UcError::FixedLp(format!("{:?}", lp.status)));
    }
    let prices = uc
        .days
        .iter()
        .map(|d| {
            d.bal_rows
                .iter()
                .map(|rows| rows.iter().map(|r| lp.row_duals[r.0] / d.weight).collect())
                .collect()
        })
        .collect();
    let dual_residual = dual_residual(&fixed, &lp);
    Ok(Lmps {
        prices,
        lp,
        dual_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayDispatch {
    pub weight: f64,
    /// `[gen][t]`
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    /// Total output including the minimum block, `[gen][t]`.
    pub g: Vec<Vec<f64>>,
    /// `[gen][segment][t]`
    pub seg: Vec<Vec<Vec<f64>>>,
    /// `[line][t]`
    pub flow: Vec<Vec<f64>>,
    /// `[bus][t]`
    pub theta: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    pub chg: Vec<Vec<f64>>,
    pub dis: Vec<Vec<f64>>,
    pub spill: Vec<Vec<f64>>,
    pub shed: Vec<Vec<f64>>,
    pub lmp: Vec<Vec<f64>>,
    /// Tons for the day.
    pub emissions: f64,
    /// Minimum-block, startup and segment cost for the day.
    pub gen_cost: f64,
    pub shed_cost: f64,
    pub spill_cost: f64,
    pub carbon_cost: f64,
}

impl DayDispatch {
    pub fn operating_cost(&self) -> f64 {
        self.gen_cost + self.shed_cost + self.spill_cost + self.carbon_cost
    }

    /// `Σ_b Σ_t λ (dis − chg)` for the day.
    pub fn storage_revenue(&self) -> f64 {
        let mut r = 0.0;
        for b in 0..self.lmp.len() {
            for t in 0..self.lmp[b].len() {
                r += self.lmp[b][t] * (self.dis[b][t] - self.chg[b][t]);
            }
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub days: Vec<DayDispatch>,
    /// Annual operating cost, `Σ_a W_a · operating_cost_a`.
    pub objective: f64,
    /// Annual emissions, `Σ_a W_a E_a`.
    pub total_emissions: f64,
    /// Worst MILP gap over the solves that produced this schedule.
    pub mip_gap: f64,
    pub nodes: usize,
    pub dual_residual: f64,
}

impl DispatchSolution {
    pub fn emissions_by_day(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.emissions).collect()
    }

    /// Annual energy-market revenue of storage.
    pub fn storage_revenue(&self) -> f64 {
        self.days
            .iter()
            .map(|d| d.weight * d.storage_revenue())
            .sum()
    }

    pub fn commitment(&self) -> Vec<Vec<Vec<f64>>> {
        self.days.iter().map(|d| d.u.clone()).collect()
    }

    /// JSON dump: `{case_id, objective, emissions_by_day, lmps, schedules}`.
    pub fn to_json(&self, case_id: &str) -> serde_json::Value {
        serde_json::json!({
            "case_id": case_id,
            "objective": self.objective,
            "emissions_by_day": self.emissions_by_day(),
            "lmps": self.days.iter().map(|d| &d.lmp).collect::<Vec<_>>(),
            "schedules": self.days,
        })
    }
}

/// Reads a day's schedule from `x`; `lmp` is `[bus][t]`.
pub fn read_day(
    system: &PowerSystem,
    econ: &EconomicParams,
    idx: &DayIndex,
    x: &[f64],
    lmp: Vec<Vec<f64>>,
) -> DayDispatch {
    let nt = idx.hours;
    let vals = |vs: &Vec<Vec<Term>>| -> Vec<Vec<f64>> {
        vs.iter()
            .map(|r| r.iter().map(|t| t.value(x)).collect())
            .collect()
    };
    let u = vals(&idx.u);
    let v = vals(&idx.v);
    let z = vals(&idx.z);
    let seg: Vec<Vec<Vec<f64>>> = idx
        .seg
        .iter()
        .map(|s| {
            s.iter()
                .map(|r| r.iter().map(|v| x[v.0]).collect())
                .collect()
        })
        .collect();
    let mut g = vec![vec![0.0; nt]; system.generators.len()];
    let mut emissions = 0.0;
    let mut gen_cost = 0.0;
    for (i, gen) in system.generators.iter().enumerate() {
        for t in 0..nt {
            g[i][t] = gen.gmin * u[i][t];
            gen_cost += gen.cmin * u[i][t] + gen.csu * v[i][t];
            emissions += gen.emin * u[i][t] + gen.esu * v[i][t];
            for (s, sg) in gen.segments.iter().enumerate() {
                g[i][t] += seg[i][s][t];
                gen_cost += sg.cost * seg[i][s][t];
                emissions += sg.emissions * seg[i][s][t];
            }
        }
    }
    let grid = |vs: &Vec<Vec<Var>>| -> Vec<Vec<f64>> {
        vs.iter()
            .map(|r| r.iter().map(|v| x[v.0]).collect())
            .collect()
    };
    let opt = |vs: &Vec<Option<Vec<Var>>>| -> Vec<Vec<f64>> {
        vs.iter()
            .map(|r| {
                r.as_ref()
                    .map_or(vec![0.0; nt], |r| r.iter().map(|v| x[v.0]).collect())
            })
            .collect()
    };
    let theta = idx
        .theta
        .iter()
        .map(|r| r.iter().map(|v| v.map_or(0.0, |v| x[v.0])).collect())
        .collect();
    let spill = grid(&idx.spill);
    let shed = grid(&idx.shed);
    let shed_mwh: f64 = shed.iter().flatten().sum();
    let spill_mwh: f64 = spill.iter().flatten().sum();
    DayDispatch {
        weight: idx.weight,
        u,
        v,
        z,
        g,
        seg,
        flow: grid(&idx.flow),
        theta,
        soc: opt(&idx.soc),
        chg: opt(&idx.chg),
        dis: opt(&idx.dis),
        spill,
        shed,
        lmp,
        emissions,
        gen_cost,
        shed_cost: econ.load_shed_penalty * shed_mwh,
        spill_cost: econ.ren_spill_penalty * spill_mwh,
        carbon_cost: econ.carbon_price * emissions,
    }
}

/// Days can be solved one at a time unless an aggregate ENC couples them.
fn day_groups(case: &Case, enc: Option<&[f64]>) -> Vec<Vec<usize>> {
    let n = case.days.len();
    if enc.is_some() && case.econ.enc_mode == EncMode::Aggregate {
        vec![(0..n).collect()]
    } else {
        (0..n).map(|a| vec![a]).collect()
    }
}

/// Operator commitment and dispatch for a fixed allocation, followed by the
/// fixed-commitment LP that prices energy.
pub fn solve_dispatch(
    case: &Case,
    alloc: &StorageAllocation,
    enc: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<DispatchSolution, UcError> {
    alloc.validate(&case.system)?;
    if let Some(b) = enc {
        if b.len() != case.days.len() {
            return Err(UcError::MissingBaseline {
                got: b.len(),
                want: case.days.len(),
            });
        }
    }
    let weights = case.weights();
    let mut days: Vec<Option<DayDispatch>> = vec![None; case.days.len()];
    let mut mip_gap = 0.0f64;
    let mut nodes = 0;
    let mut dual_res = 0.0f64;
    for group in day_groups(case, enc) {
        let uc = UcBuilder {
            system: &case.system,
            storage: &case.storage,
            econ: &case.econ,
            days: group.iter().map(|&a| &case.days[a].profile).collect(),
            weights: group.iter().map(|&a| weights[a]).collect(),
            units: UnitsMode::Fixed(alloc.clone()),
            commitment: CommitMode::Free,
            baselines: enc.map(|b| group.iter().map(|&a| b[a]).collect()),
        }
        .build()?;
        let milp = solve_milp_with(&uc.model, &opts.milp());
        if !milp.has_incumbent() {
            return Err(UcError::NoIncumbent(milp.status));
        }
        mip_gap = mip_gap.max(milp.gap);
        nodes += milp.nodes;
        let lmps = extract_lmps(&uc, &milp)?;
        dual_res = dual_res.max(lmps.dual_residual);
        for (k, &a) in group.iter().enumerate() {
            days[a] = Some(read_day(
                &case.system,
                &case.econ,
                &uc.days[k],
                &lmps.lp.x,
                lmps.prices[k].clone(),
            ));
        }
    }
    let days: Vec<DayDispatch> = days
        .into_iter()
        .map(|d| d.expect("every day solved"))
        .collect();
    let objective = days.iter().map(|d| d.weight * d.operating_cost()).sum();
    let total_emissions = days.iter().map(|d| d.weight * d.emissions).sum();
    Ok(DispatchSolution {
        days,
        objective,
        total_emissions,
        mip_gap,
        nodes,
        dual_residual: dual_res,
    })
}

/// Per-day emissions of the no-storage operator solution without the ENC.
pub fn compute_baseline(case: &Case, opts: &SolveOptions) -> Result<Vec<f64>, UcError> {
    let sol = solve_dispatch(
        case,
        &StorageAllocation::zeros(case.system.num_buses()),
        None,
        opts,
    )?;
    Ok(sol.emissions_by_day())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Worst violation of any operating constraint, recomputed from the schedule.
    pub max_violation: f64,
    /// Worst daily energy-conservation residual.
    pub energy_residual: f64,
    /// Worst ENC excess `E_a − χ·E_a^baseline` (daily) or the aggregate excess.
    pub enc_excess: f64,
    /// Hours with simultaneous charging and discharging.
    pub simultaneous_storage_hours: usize,
    /// Hours with both a startup and a shutdown.
    pub startup_shutdown_overlaps: usize,
}

/// Checks a schedule against the operating constraints directly from the
/// system data, independent of the model rows.
pub fn audit_dispatch(
    case: &Case,
    alloc: &StorageAllocation,
    sol: &DispatchSolution,
    enc: Option<&[f64]>,
) -> AuditReport {
    let sys = &case.system;
    let st = &case.storage;
    let mut rep = AuditReport::default();
    let mut worst = 0.0f64;
    let mut bump = |v: f64| worst = worst.max(v);
    let reference = sys.reference_bus();
    for (a, d) in sol.days.iter().enumerate() {
        let prof = &case.days[a].profile;
        let nt = prof.hours();
        for (i, g) in sys.generators.iter().enumerate() {
            for t in 0..nt {
                let prev = (t + nt - 1) % nt;
                for x in [d.u[i][t], d.v[i][t], d.z[i][t]] {
                    bump((x - x.round()).abs());
                    bump((-x).max(0.0));
                    bump((x - 1.0).max(0.0));
                }
                if g.needs_commitment() {
                    bump((d.v[i][t] - d.z[i][t] - d.u[i][t] + d.u[i][prev]).abs());
                    let up = g.min_up.min(nt);
                    let s: f64 = (0..up).map(|k| d.v[i][(t + nt - k) % nt]).sum();
                    if up > 1 {
                        bump(s - d.u[i][t]);
                    }
                    let down = g.min_down.min(nt);
                    let s: f64 = (0..down).map(|k| d.z[i][(t + nt - k) % nt]).sum();
                    if down > 1 {
                        bump(s - (1.0 - d.u[i][t]));
                    }
                }
                if d.v[i][t] > 0.5 && d.z[i][t] > 0.5 {
                    rep.startup_shutdown_overlaps += 1;
                }
                let mut total = g.gmin * d.u[i][t];
                for (s, sg) in g.segments.iter().enumerate() {
                    let x = d.seg[i][s][t];
                    bump(-x);
                    bump(x - sg.max_mw * d.u[i][t]);
                    total += x;
                }
                bump((total - d.g[i][t]).abs());
            }
        }
        let mut energy = 0.0;
        for b in 0..sys.num_buses() {
            let cap_q = alloc.energy(b, st);
            let cap_j = alloc.power(b, st);
            for t in 0..nt {
                let prev = (t + nt - 1) % nt;
                bump(-d.spill[b][t]);
                bump(d.spill[b][t] - prof.ren[b][t]);
                bump(-d.shed[b][t]);
                bump(d.shed[b][t] - prof.load[b][t]);
                bump(-d.soc[b][t]);
                bump(d.soc[b][t] - cap_q);
                bump(-d.chg[b][t]);
                bump(d.chg[b][t] - cap_j);
                bump(-d.dis[b][t]);
                bump(d.dis[b][t] - cap_j);
                let eta = st.efficiency;
                bump((d.soc[b][t] - d.soc[b][prev] - eta * d.chg[b][t] + d.dis[b][t] / eta).abs());
                if d.chg[b][t] > 1e-6 && d.dis[b][t] > 1e-6 {
                    rep.simultaneous_storage_hours += 1;
                }
                let mut inj: f64 = sys
                    .generators
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| g.bus == b)
                    .map(|(i, _)| d.g[i][t])
                    .sum();
                inj += d.dis[b][t] - d.chg[b][t] + prof.ren[b][t] - d.spill[b][t] + d.shed[b][t]
                    - prof.load[b][t];
                for (l, line) in sys.lines.iter().enumerate() {
                    if line.from == b {
                        inj -= d.flow[l][t];
                    } else if line.to == b {
                        inj += d.flow[l][t];
                    }
                }
                bump(inj.abs());
                energy += d.dis[b][t] - d.chg[b][t] + prof.ren[b][t] - d.spill[b][t] + d.shed[b][t]
                    - prof.load[b][t];
            }
        }
        for t in 0..nt {
            energy += (0..sys.generators.len()).map(|i| d.g[i][t]).sum::<f64>();
            bump(d.theta[reference][t].abs());
        }
        rep.energy_residual = rep.energy_residual.max(energy.abs());
        for (l, line) in sys.lines.iter().enumerate() {
            for t in 0..nt {
                let f = d.flow[l][t];
                bump((f - line.admittance() * (d.theta[line.from][t] - d.theta[line.to][t])).abs());
                bump(f.abs() - line.capacity);
            }
        }
    }
    rep.max_violation = worst;
    if let Some(base) = enc {
        let chi = case.econ.chi;
        rep.enc_excess = match case.econ.enc_mode {
            EncMode::Daily => sol
                .days
                .iter()
                .zip(base)
                .map(|(d, e)| d.emissions - chi * e)
                .fold(f64::NEG_INFINITY, f64::max),
            EncMode::Aggregate => sol
                .days
                .iter()
                .zip(base)
                .map(|(d, e)| d.weight * (d.emissions - chi * e))
                .sum(),
        };
    }
    rep
}
