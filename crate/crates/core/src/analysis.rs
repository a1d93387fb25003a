//! Sensitivity sweeps over carbon and storage prices, ENC on/off pairing,
//! Wilcoxon signed-rank tests with Pratt's zero handling, and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::investment::{
    assess_phsi_gap, run_heuristic, verify_pmsi_local, Evaluator, HeuristicSettings,
    InvestmentError, InvestmentOutcome, Perspective,
};
use crate::system::StorageSpec;
use crate::uc::{compute_baseline, Case, SolveOptions};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("grid: {0}")]
    Grid(String),
    #[error("paired arms of {0} were built from different inputs")]
    Unpaired(String),
    #[error("no samples")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// $/t
    pub carbon_prices: Vec<f64>,
    /// Effective storage power price, $/MW-yr.
    pub storage_prices: Vec<f64>,
    pub perspectives: Vec<Perspective>,
    /// `false` = ENC off, `true` = ENC on.
    pub enc_modes: Vec<bool>,
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

impl SweepGrid {
    /// 0–100 $/t in steps of 10 against 25,000–60,000 $/MW-yr in steps of 2,500.
    pub fn full() -> Self {
        Self {
            carbon_prices: steps(0.0, 100.0, 10.0),
            storage_prices: steps(25_000.0, 60_000.0, 2_500.0),
            perspectives: Perspective::ALL.to_vec(),
            enc_modes: vec![false, true],
        }
    }

    /// 3×3 grid for the desk network.
    pub fn desk() -> Self {
        Self {
            carbon_prices: vec![0.0, 25.0, 50.0],
            storage_prices: vec![25_000.0, 40_000.0, 55_000.0],
            perspectives: Perspective::ALL.to_vec(),
            enc_modes: vec![false, true],
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let ascending = |v: &[f64], what: &str| -> Result<(), AnalysisError> {
            if v.is_empty() {
                return Err(AnalysisError::Grid(format!("no {what}")));
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(AnalysisError::Grid(format!(
                    "{what} must be finite and non-negative"
                )));
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(AnalysisError::Grid(format!(
                    "{what} must be strictly ascending"
                )));
            }
            Ok(())
        };
        ascending(&self.carbon_prices, "carbon prices")?;
        ascending(&self.storage_prices, "storage prices")?;
        if self.perspectives.is_empty() || self.enc_modes.is_empty() {
            return Err(AnalysisError::Grid("no perspectives or ENC modes".into()));
        }
        let mut p = self.perspectives.clone();
        p.sort();
        p.dedup();
        let mut e = self.enc_modes.clone();
        e.sort();
        e.dedup();
        if p.len() != self.perspectives.len() || e.len() != self.enc_modes.len() {
            return Err(AnalysisError::Grid(
                "duplicate perspectives or ENC modes".into(),
            ));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &carbon_price in &self.carbon_prices {
            for &storage_price in &self.storage_prices {
                for &perspective in &self.perspectives {
                    for &enc in &self.enc_modes {
                        out.push(CellKey {
                            carbon_price,
                            storage_price,
                            perspective,
                            enc,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub carbon_price: f64,
    pub storage_price: f64,
    pub perspective: Perspective,
    pub enc: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    /// Hash of every input except the ENC flag; both arms of a pair share it.
    pub input_hash: String,
    /// Annual no-storage emissions at this carbon price.
    pub baseline_emissions: f64,
    pub baseline_by_day: Vec<f64>,
    pub outcome: Result<InvestmentOutcome, String>,
    /// PhSI cells only.
    pub phsi_gap: Option<f64>,
    /// Largest `E_a − E_a^baseline` over days.
    pub max_enc_excess: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sweep {
    pub grid: SweepGrid,
    pub cells: Vec<CellResult>,
    pub storage: StorageSpec,
}

impl Sweep {
    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }

    pub fn cell(&self, carbon: f64, price: f64, p: Perspective, enc: bool) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.key.carbon_price == carbon
                && c.key.storage_price == price
                && c.key.perspective == p
                && c.key.enc == enc
        })
    }
}

#[derive(Clone, Debug)]
pub struct SweepSettings {
    pub heuristic: HeuristicSettings,
    pub opts: SolveOptions,
    pub verify_pmsi: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            heuristic: HeuristicSettings::default(),
            opts: SolveOptions::exact(),
            verify_pmsi: true,
        }
    }
}

/// Hash of a case with a storage price, ignoring the ENC flag.
pub fn input_hash(case: &Case, storage: &StorageSpec) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&case.system).expect("serializable"));
    h.update(serde_json::to_vec(&case.days).expect("serializable"));
    h.update(serde_json::to_vec(&case.econ).expect("serializable"));
    h.update(serde_json::to_vec(storage).expect("serializable"));
    hex::encode(h.finalize())
}

fn storage_at(base: &StorageSpec, price: f64) -> StorageSpec {
    StorageSpec {
        cost_power: price,
        ..base.clone()
    }
}

/// Runs the heuristic in every cell. The ENC baseline is solved once per
/// carbon price and the operator solves are shared across storage prices.
/// Failing cells keep their error and the sweep moves on.
pub fn run_sweep(
    case: &Case,
    grid: &SweepGrid,
    settings: &SweepSettings,
) -> Result<Sweep, AnalysisError> {
    grid.validate()?;
    let per_carbon: Vec<Vec<CellResult>> = grid
        .carbon_prices
        .par_iter()
        .map(|&carbon| sweep_carbon(case, grid, settings, carbon))
        .collect();
    let mut cells: Vec<CellResult> = per_carbon.into_iter().flatten().collect();
    let pos = |k: &CellKey| {
        (
            grid.carbon_prices.iter().position(|&c| c == k.carbon_price),
            grid.storage_prices
                .iter()
                .position(|&c| c == k.storage_price),
            grid.perspectives.iter().position(|&c| c == k.perspective),
            grid.enc_modes.iter().position(|&c| c == k.enc),
        )
    };
    cells.sort_by_key(|c| pos(&c.key));
    Ok(Sweep {
        grid: grid.clone(),
        cells,
        storage: case.storage.clone(),
    })
}

fn sweep_carbon(
    case: &Case,
    grid: &SweepGrid,
    settings: &SweepSettings,
    carbon: f64,
) -> Vec<CellResult> {
    let case_c = case.with_carbon_price(carbon);
    let weights = case_c.weights();
    let baseline = compute_baseline(&case_c, &settings.opts);
    let mut out = Vec::new();
    let fail_all = |msg: String, out: &mut Vec<CellResult>, enc_modes: &[bool]| {
        for &price in &grid.storage_prices {
            for &perspective in &grid.perspectives {
                for &enc in enc_modes {
                    out.push(CellResult {
                        key: CellKey {
                            carbon_price: carbon,
                            storage_price: price,
                            perspective,
                            enc,
                        },
                        input_hash: input_hash(&case_c, &storage_at(&case.storage, price)),
                        baseline_emissions: f64::NAN,
                        baseline_by_day: Vec::new(),
                        outcome: Err(msg.clone()),
                        phsi_gap: None,
                        max_enc_excess: None,
                    });
                }
            }
        }
    };
    let baseline = match baseline {
        Ok(b) => b,
        Err(e) => {
            fail_all(format!("baseline: {e}"), &mut out, &grid.enc_modes);
            return out;
        }
    };
    let base_total: f64 = baseline.iter().zip(&weights).map(|(e, w)| e * w).sum();
    for &enc in &grid.enc_modes {
        let ev = Evaluator::new(
            case_c.clone(),
            enc.then(|| baseline.clone()),
            settings.opts.clone(),
        );
        for &price in &grid.storage_prices {
            let storage = storage_at(&case.storage, price);
            let hash = input_hash(&case_c, &storage);
            let result = run_heuristic(&ev, &storage, &settings.heuristic);
            for &perspective in &grid.perspectives {
                let key = CellKey {
                    carbon_price: carbon,
                    storage_price: price,
                    perspective,
                    enc,
                };
                let mut phsi_gap = None;
                let outcome: Result<InvestmentOutcome, String> = match &result {
                    Err(e) => Err(e.to_string()),
                    Ok(r) => {
                        let mut o = r.outcome(perspective).clone();
                        match perspective {
                            Perspective::Pmsi if settings.verify_pmsi => {
                                // A failed re-solve leaves the evidence unset rather than false.
                                o.evidence.perturbation_verified =
                                    verify_pmsi_local(&ev, &storage, &o)
                                        .ok()
                                        .map(|r| r.verified);
                            }
                            Perspective::Phsi => {
                                let bound = o.evidence.viu_bound.unwrap_or(f64::NAN);
                                match assess_phsi_gap(o.social_cost, bound, o.evidence.pcsle_bound)
                                {
                                    Ok(g) => phsi_gap = Some(g),
                                    Err(e) => phsi_gap = Some(relaxation_gap(&e)),
                                }
                            }
                            _ => {}
                        }
                        Ok(o)
                    }
                };
                let max_enc_excess = outcome.as_ref().ok().map(|o| {
                    o.emissions_by_day
                        .iter()
                        .zip(&baseline)
                        .map(|(e, b)| e - b)
                        .fold(f64::NEG_INFINITY, f64::max)
                });
                out.push(CellResult {
                    key,
                    input_hash: hash.clone(),
                    baseline_emissions: base_total,
                    baseline_by_day: baseline.clone(),
                    outcome,
                    phsi_gap,
                    max_enc_excess,
                });
            }
        }
    }
    out
}

/// A negative gap is kept visible rather than clamped so reports surface it.
fn relaxation_gap(e: &InvestmentError) -> f64 {
    match e {
        InvestmentError::RelaxationViolation { gap, .. } => *gap,
        _ => f64::NAN,
    }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// One row per cell, scalars only.
pub fn sweep_csv(sweep: &Sweep, header_comment: Option<&str>) -> Result<String, AnalysisError> {
    let mut buf = Vec::new();
    if let Some(c) = header_comment {
        buf.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "carbon_price",
            "storage_price",
            "perspective",
            "enc",
            "status",
            "quantity",
            "storage_mw",
            "allocation",
            "battery_cost",
            "operating_cost",
            "social_cost",
            "revenue",
            "profit",
            "emissions",
            "baseline_emissions",
            "max_enc_excess",
            "viu_bound",
            "phsi_gap",
            "perturbation_verified",
            "input_hash",
        ])?;
        for c in &sweep.cells {
            let k = &c.key;
            let mut row = vec![
                num(k.carbon_price),
                num(k.storage_price),
                k.perspective.label().to_string(),
                if k.enc { "on" } else { "off" }.to_string(),
            ];
            match &c.outcome {
                Ok(o) => row.extend([
                    "ok".to_string(),
                    o.quantity.to_string(),
                    num(o.storage_mw(&sweep.storage)),
                    o.allocation
                        .units
                        .iter()
                        .map(u32::to_string)
                        .collect::<Vec<_>>()
                        .join(";"),
                    num(o.battery_cost),
                    num(o.operating_cost),
                    num(o.social_cost),
                    num(o.revenue),
                    num(o.profit),
                    num(o.total_emissions),
                    num(c.baseline_emissions),
                    opt_num(c.max_enc_excess),
                    opt_num(o.evidence.viu_bound),
                    opt_num(c.phsi_gap),
                    o.evidence
                        .perturbation_verified
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                ]),
                Err(e) => {
                    row.push(format!("error: {e}"));
                    row.extend(std::iter::repeat_n(String::new(), 14));
                }
            }
            row.push(c.input_hash.clone());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    StorageMw,
    Emissions,
    SocialCost,
}

impl Metric {
    fn of(self, o: &InvestmentOutcome, storage: &StorageSpec) -> f64 {
        match self {
            Metric::StorageMw => o.storage_mw(storage),
            Metric::Emissions => o.total_emissions,
            Metric::SocialCost => o.social_cost,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub carbon_price: f64,
    pub storage_price: f64,
    pub perspective: Perspective,
    pub with_enc: f64,
    pub without_enc: f64,
    /// `with − without`, snapped to exactly zero within `1e-9 (1 + |without|)`.
    pub delta: f64,
}

impl PairedSample {
    pub fn new(
        carbon_price: f64,
        storage_price: f64,
        perspective: Perspective,
        with_enc: f64,
        without_enc: f64,
    ) -> Self {
        let mut delta = with_enc - without_enc;
        if delta.abs() <= 1e-9 * (1.0 + without_enc.abs()) {
            delta = 0.0;
        }
        Self {
            carbon_price,
            storage_price,
            perspective,
            with_enc,
            without_enc,
            delta,
        }
    }
}

/// ENC-on/off pairs of `metric` for one perspective, over cells where both
/// arms succeeded.
pub fn paired_samples(
    sweep: &Sweep,
    perspective: Perspective,
    metric: Metric,
) -> Result<Vec<PairedSample>, AnalysisError> {
    let mut out = Vec::new();
    for &c in &sweep.grid.carbon_prices {
        for &s in &sweep.grid.storage_prices {
            let (Some(on), Some(off)) = (
                sweep.cell(c, s, perspective, true),
                sweep.cell(c, s, perspective, false),
            ) else {
                continue;
            };
            if on.input_hash != off.input_hash {
                return Err(AnalysisError::Unpaired(format!(
                    "{} at ({c}, {s})",
                    perspective.label()
                )));
            }
            if let (Ok(a), Ok(b)) = (&on.outcome, &off.outcome) {
                out.push(PairedSample::new(
                    c,
                    s,
                    perspective,
                    metric.of(a, &sweep.storage),
                    metric.of(b, &sweep.storage),
                ));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub zeros: usize,
    pub method: WilcoxonMethod,
}

pub const EXACT_LIMIT: usize = 25;

/// Average ranks of `|d|`, 1-based, ties sharing the mean rank.
fn abs_ranks(d: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided signed-rank test. Zero differences take part in the ranking and
/// are then dropped from the statistic (Pratt). The null distribution is
/// exact up to [`EXACT_LIMIT`] observations and normal, with the variance of
/// the actual (tied) ranks, above it.
pub fn wilcoxon_pratt_deltas(deltas: &[f64]) -> Result<WilcoxonResult, AnalysisError> {
    if deltas.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = deltas.len();
    let ranks = abs_ranks(deltas);
    let nonzero: Vec<usize> = (0..n).filter(|&i| deltas[i] != 0.0).collect();
    let zeros = n - nonzero.len();
    let statistic: f64 = nonzero
        .iter()
        .filter(|&&i| deltas[i] > 0.0)
        .map(|&i| ranks[i])
        .sum();
    if nonzero.is_empty() {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n,
            zeros,
            method: WilcoxonMethod::Degenerate,
        });
    }
    if n <= EXACT_LIMIT {
        // Doubled ranks are integers even with ties.
        let twice: Vec<usize> = nonzero
            .iter()
            .map(|&i| (2.0 * ranks[i]).round() as usize)
            .collect();
        let total: usize = twice.iter().sum();
        let mut counts = vec![0f64; total + 1];
        counts[0] = 1.0;
        for &r in &twice {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let obs = (2.0 * statistic).round() as i64;
        let dev = (2 * obs - total as i64).abs();
        let hits: f64 = (0..=total)
            .filter(|&s| (2 * s as i64 - total as i64).abs() >= dev)
            .map(|s| counts[s])
            .sum();
        let p = hits / 2f64.powi(twice.len() as i32);
        return Ok(WilcoxonResult {
            statistic,
            p_value: p.min(1.0),
            n,
            zeros,
            method: WilcoxonMethod::Exact,
        });
    }
    let mean: f64 = nonzero.iter().map(|&i| ranks[i]).sum::<f64>() / 2.0;
    let var: f64 = nonzero.iter().map(|&i| ranks[i] * ranks[i]).sum::<f64>() / 4.0;
    let z = (statistic - mean) / var.sqrt();
    let normal = Normal::standard();
    let p = 2.0 * (1.0 - normal.cdf(z.abs()));
    Ok(WilcoxonResult {
        statistic,
        p_value: p.clamp(0.0, 1.0),
        n,
        zeros,
        method: WilcoxonMethod::Normal,
    })
}

pub fn wilcoxon_pratt(samples: &[PairedSample]) -> Result<WilcoxonResult, AnalysisError> {
    let d: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    wilcoxon_pratt_deltas(&d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveSummary {
    pub perspective: Perspective,
    pub cells_off: usize,
    pub cells_on: usize,
    pub pairs: usize,
    pub mean_storage_mw_off: Option<f64>,
    pub mean_storage_mw_on: Option<f64>,
    pub storage_p: Option<f64>,
    /// Mean `(E − E^baseline) / E^baseline` in percent, per arm.
    pub mean_emissions_vs_baseline_pct_off: Option<f64>,
    pub mean_emissions_vs_baseline_pct_on: Option<f64>,
    /// Mean `(E_on − E_off) / E_off` in percent.
    pub mean_emissions_delta_pct: Option<f64>,
    pub emissions_p: Option<f64>,
    /// Mean `(C_on − C_off) / C_off` in percent.
    pub mean_cost_delta_pct: Option<f64>,
    pub cost_p: Option<f64>,
    /// ENC-on cells whose every day stays within baseline (+1e-6 t).
    pub enc_cells_within_baseline: usize,
    /// Fewer than two pairs, so no test was run.
    pub statistics_skipped: bool,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(sweep: &Sweep) -> Result<Vec<PerspectiveSummary>, AnalysisError> {
    let mut out = Vec::new();
    for &p in &sweep.grid.perspectives {
        let arm = |enc: bool| -> Vec<(&CellResult, &InvestmentOutcome)> {
            sweep
                .cells
                .iter()
                .filter(|c| c.key.perspective == p && c.key.enc == enc)
                .filter_map(|c| c.outcome.as_ref().ok().map(|o| (c, o)))
                .collect()
        };
        let off = arm(false);
        let on = arm(true);
        let mw = |a: &[(&CellResult, &InvestmentOutcome)]| {
            mean(
                &a.iter()
                    .map(|(_, o)| o.storage_mw(&sweep.storage))
                    .collect::<Vec<_>>(),
            )
        };
        let vs_base = |a: &[(&CellResult, &InvestmentOutcome)]| {
            mean(
                &a.iter()
                    .map(|(c, o)| {
                        100.0 * (o.total_emissions - c.baseline_emissions) / c.baseline_emissions
                    })
                    .collect::<Vec<_>>(),
            )
        };
        let storage = paired_samples(sweep, p, Metric::StorageMw)?;
        let emissions = paired_samples(sweep, p, Metric::Emissions)?;
        let cost = paired_samples(sweep, p, Metric::SocialCost)?;
        let pct = |s: &[PairedSample]| {
            mean(
                &s.iter()
                    .map(|x| 100.0 * x.delta / x.without_enc)
                    .collect::<Vec<_>>(),
            )
        };
        let run_stats = storage.len() >= 2;
        let test = |s: &[PairedSample]| -> Result<Option<f64>, AnalysisError> {
            if run_stats {
                Ok(Some(wilcoxon_pratt(s)?.p_value))
            } else {
                Ok(None)
            }
        };
        let within = on
            .iter()
            .filter(|(c, _)| c.max_enc_excess.is_some_and(|e| e <= 1e-6))
            .count();
        out.push(PerspectiveSummary {
            perspective: p,
            cells_off: off.len(),
            cells_on: on.len(),
            pairs: storage.len(),
            mean_storage_mw_off: mw(&off),
            mean_storage_mw_on: mw(&on),
            storage_p: test(&storage)?,
            mean_emissions_vs_baseline_pct_off: vs_base(&off),
            mean_emissions_vs_baseline_pct_on: vs_base(&on),
            mean_emissions_delta_pct: pct(&emissions),
            emissions_p: test(&emissions)?,
            mean_cost_delta_pct: pct(&cost),
            cost_p: test(&cost)?,
            enc_cells_within_baseline: within,
            statistics_skipped: !run_stats,
        });
    }
    Ok(out)
}

pub fn summary_csv(
    rows: &[PerspectiveSummary],
    header_comment: Option<&str>,
) -> Result<String, AnalysisError> {
    let mut buf = Vec::new();
    if let Some(c) = header_comment {
        buf.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "perspective",
            "cells_off",
            "cells_on",
            "pairs",
            "mean_storage_mw_off",
            "mean_storage_mw_on",
            "storage_p",
            "mean_emissions_vs_baseline_pct_off",
            "mean_emissions_vs_baseline_pct_on",
            "mean_emissions_delta_pct",
            "emissions_p",
            "mean_cost_delta_pct",
            "cost_p",
            "enc_cells_within_baseline",
            "statistics",
        ])?;
        for r in rows {
            w.write_record([
                r.perspective.label().to_string(),
                r.cells_off.to_string(),
                r.cells_on.to_string(),
                r.pairs.to_string(),
                opt_num(r.mean_storage_mw_off),
                opt_num(r.mean_storage_mw_on),
                opt_num(r.storage_p),
                opt_num(r.mean_emissions_vs_baseline_pct_off),
                opt_num(r.mean_emissions_vs_baseline_pct_on),
                opt_num(r.mean_emissions_delta_pct),
                opt_num(r.emissions_p),
                opt_num(r.mean_cost_delta_pct),
                opt_num(r.cost_p),
                format!("{}/{}", r.enc_cells_within_baseline, r.cells_on),
                if r.statistics_skipped {
                    "skipped (n<2)"
                } else {
                    "wilcoxon-pratt"
                }
                .to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// Values of one heatmap panel, `[carbon][storage]`, `NaN` where missing.
pub type Panel = Vec<Vec<f64>>;

/// Panels laid out as rows {ENC off, ENC on, on − off} by the grid's perspectives.
pub fn heatmap_panels(sweep: &Sweep, metric: Metric) -> Vec<Vec<Panel>> {
    let g = &sweep.grid;
    let value = |p: Perspective, enc: bool, c: f64, s: f64| -> f64 {
        sweep
            .cell(c, s, p, enc)
            .and_then(|cell| cell.outcome.as_ref().ok())
            .map_or(f64::NAN, |o| metric.of(o, &sweep.storage))
    };
    let panel = |f: &dyn Fn(f64, f64) -> f64| -> Panel {
        g.carbon_prices
            .iter()
            .map(|&c| g.storage_prices.iter().map(|&s| f(c, s)).collect())
            .collect()
    };
    let mut rows = vec![Vec::new(), Vec::new(), Vec::new()];
    for &p in &g.perspectives {
        rows[0].push(panel(&|c, s| value(p, false, c, s)));
        rows[1].push(panel(&|c, s| value(p, true, c, s)));
        rows[2].push(panel(&|c, s| value(p, true, c, s) - value(p, false, c, s)));
    }
    rows
}

fn lerp(a: (u8, u8, u8), b: (u8, u8, u8), t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let c = |x: u8, y: u8| (f64::from(x) + (f64::from(y) - f64::from(x)) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

const WHITE: (u8, u8, u8) = (255, 255, 255);
const BLUE: (u8, u8, u8) = (33, 102, 172);
const RED: (u8, u8, u8) = (178, 24, 43);

/// SVG grid of heatmaps: one row per arm (ENC off, ENC on, difference), one
/// column per perspective. Storage price runs left to right, carbon price
/// top to bottom.
pub fn heatmap_svg(sweep: &Sweep, metric: Metric, title: &str) -> String {
    let rows = heatmap_panels(sweep, metric);
    let g = &sweep.grid;
    let (nc, ns) = (g.carbon_prices.len(), g.storage_prices.len());
    let cell = 28.0;
    let (pw, ph) = (ns as f64 * cell, nc as f64 * cell);
    let (left, top, gapx, gapy) = (110.0, 60.0, 70.0, 70.0);
    let width = left + g.perspectives.len() as f64 * (pw + gapx);
    let height = top + 3.0 * (ph + gapy);
    let row_names = ["ENC off", "ENC on", "on - off"];
    let finite = |v: &[Panel]| -> Vec<f64> {
        v.iter()
            .flatten()
            .flatten()
            .copied()
            .filter(|x| x.is_finite())
            .collect()
    };
    let level = finite(&[rows[0].clone(), rows[1].clone()].concat());
    let (lo, hi) = level
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let dmax = finite(&rows[2]).iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{title}</text>"#);
    for (r, panels) in rows.iter().enumerate() {
        let y0 = top + r as f64 * (ph + gapy);
        let _ = writeln!(
            s,
            r#"<text x="10" y="{:.1}">{}</text>"#,
            y0 + ph / 2.0,
            row_names[r]
        );
        for (k, panel) in panels.iter().enumerate() {
            let x0 = left + k as f64 * (pw + gapx);
            if r == 0 {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                    x0,
                    top - 22.0,
                    g.perspectives[k].label()
                );
            }
            for (i, vals) in panel.iter().enumerate() {
                for (j, &v) in vals.iter().enumerate() {
                    let fill = if !v.is_finite() {
                        "#cccccc".to_string()
                    } else if r == 2 {
                        let t = if dmax > 0.0 { v / dmax } else { 0.0 };
                        if t >= 0.0 {
                            lerp(WHITE, RED, t)
                        } else {
                            lerp(WHITE, BLUE, -t)
                        }
                    } else {
                        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                        lerp(WHITE, BLUE, t)
                    };
                    let _ = writeln!(
                        s,
                        r##"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="#ffffff"><title>carbon {} $/t, storage {} $/MW-yr: {}</title></rect>"##,
                        x0 + j as f64 * cell,
                        y0 + i as f64 * cell,
                        g.carbon_prices[i],
                        g.storage_prices[j],
                        if v.is_finite() {
                            format!("{v:.3}")
                        } else {
                            "n/a".into()
                        }
                    );
                }
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="9">storage price →</text>"#,
                x0,
                y0 + ph + 12.0
            );
            if k == 0 {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" font-size="9">carbon ↓ {}–{}</text>"#,
                    x0 - 90.0,
                    y0 + ph + 24.0,
                    g.carbon_prices[0],
                    g.carbon_prices[nc - 1]
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub summaries: Vec<PerspectiveSummary>,
    pub files: Vec<String>,
    /// ENC-on cells that exceeded their baseline.
    pub enc_violations: Vec<CellKey>,
}

/// Writes `summary.csv`, `enc_audit.csv` and one SVG per metric into `dir`.
/// Every number is recomputed from the stored outcomes.
pub fn emissions_report(
    sweep: &Sweep,
    dir: &Path,
    header_comment: Option<&str>,
) -> Result<Report, AnalysisError> {
    std::fs::create_dir_all(dir)?;
    let summaries = summarize(sweep)?;
    let mut files = Vec::new();
    std::fs::write(
        dir.join("summary.csv"),
        summary_csv(&summaries, header_comment)?,
    )?;
    files.push("summary.csv".to_string());

    let mut audit = Vec::new();
    if let Some(c) = header_comment {
        audit.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    let mut violations = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut audit);
        w.write_record([
            "carbon_price",
            "storage_price",
            "perspective",
            "max_enc_excess",
            "within_baseline",
        ])?;
        for c in sweep.cells.iter().filter(|c| c.key.enc) {
            let ok = c.max_enc_excess.is_some_and(|e| e <= 1e-6);
            if !ok {
                violations.push(c.key);
            }
            w.write_record([
                num(c.key.carbon_price),
                num(c.key.storage_price),
                c.key.perspective.label().to_string(),
                opt_num(c.max_enc_excess),
                ok.to_string(),
            ])?;
        }
        w.flush()?;
    }
    std::fs::write(dir.join("enc_audit.csv"), audit)?;
    files.push("enc_audit.csv".to_string());

    let mut by_name = BTreeMap::new();
    by_name.insert(
        "storage_mw.svg",
        heatmap_svg(sweep, Metric::StorageMw, "Installed storage (MW)"),
    );
    by_name.insert(
        "emissions.svg",
        heatmap_svg(sweep, Metric::Emissions, "Annual emissions (t)"),
    );
    by_name.insert(
        "social_cost.svg",
        heatmap_svg(sweep, Metric::SocialCost, "Social cost ($/yr)"),
    );
    for (name, svg) in by_name {
        let body = match header_comment {
            Some(c) => svg.replacen('\n', &format!("\n<!-- {c} -->\n"), 1),
            None => svg,
        };
        std::fs::write(dir.join(name), body)?;
        files.push(name.to_string());
    }
    Ok(Report {
        summaries,
        files,
        enc_violations: violations,
    })
}
