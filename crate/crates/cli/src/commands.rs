use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use encstore_core::analysis::{emissions_report, run_sweep, sweep_csv, SweepSettings};
use encstore_core::desk::bundled_desk_dir;
use encstore_core::duality::{check_dispatch, solve_pcsle, PcsleOptions};
use encstore_core::investment::{
    assess_phsi_gap, records_csv, run_heuristic, verify_pmsi_local, Evaluator, HeuristicResult,
    HeuristicSettings, Perspective,
};
use encstore_core::scenario::{parse_repdays, reduce_days, repdays_csv, Reduction};
use encstore_core::system::{load_system, EncMode, PowerSystem};
use encstore_core::uc::{audit_dispatch, build_uc, compute_baseline, Case, StorageAllocation};
use encstore_milp::{export_mps, MilpModel, MilpOptions};
use serde_json::json;

use crate::config::{RunConfig, SolverMode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| CliError::Domain(format!("writing {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Domain(format!("creating {}: {e}", dir.display())))
}

fn load(cfg: &RunConfig) -> Result<PowerSystem, CliError> {
    let dir = if cfg.system == "desk" {
        bundled_desk_dir()
    } else {
        PathBuf::from(&cfg.system)
    };
    let sys = load_system(&dir).map_err(domain)?;
    match cfg.penetration {
        Some(p) => sys.scale_renewables(p).map_err(domain),
        None => Ok(sys),
    }
}

fn reduce(cfg: &RunConfig, sys: &PowerSystem) -> Result<Reduction, CliError> {
    reduce_days(&sys.days(), cfg.k, cfg.variance, cfg.seed)
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// The configured system, reduced (or read from `repdays`), with the
/// configured economics and storage.
pub fn build_case(cfg: &RunConfig) -> Result<Case, CliError> {
    let storage = cfg.storage();
    storage
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let econ = cfg.econ();
    econ.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let system = load(cfg)?;
    let days = match &cfg.repdays {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Domain(format!("reading {path}: {e}")))?;
            parse_repdays(&text, &system.days())
                .map_err(|e| CliError::Domain(format!("{path}: {e}")))?
        }
        None => reduce(cfg, &system)?.days,
    };
    Ok(Case {
        system,
        days,
        econ,
        storage,
    })
}

pub fn cmd_reduce(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let sys = load(cfg)?;
    let red = reduce(cfg, &sys)?;
    out_dir(out)?;
    write(
        &out.join("repdays.csv"),
        format!("# {}\n{}", cfg.stamp(), repdays_csv(&red.days)),
    )?;
    println!(
        "{} representative days from {} source days; {} components retain {:.4} of the variance",
        red.days.len(),
        sys.num_days(),
        red.components,
        red.cumulative_variance[red.components - 1]
    );
    Ok(())
}

/// Writes one MPS file and records it, plus its name sidecar when one was needed.
fn export(
    model: &MilpModel,
    out: &Path,
    name: &str,
    files: &mut Vec<String>,
) -> Result<(), CliError> {
    export_mps(model, &out.join(name)).map_err(domain)?;
    files.push(name.into());
    let side = format!("{name}.names");
    if out.join(&side).exists() {
        files.push(side);
    }
    Ok(())
}

fn write_mps_bundle(cfg: &RunConfig, case: &Case, out: &Path) -> Result<(), CliError> {
    let nb = case.system.num_buses();
    let mut files = Vec::new();
    for a in 0..case.days.len() {
        let day = Case {
            days: vec![case.days[a].clone()],
            ..case.clone()
        };
        let uc = build_uc(&day, &StorageAllocation::zeros(nb), None).map_err(domain)?;
        export(&uc.model, out, &format!("baseline_day{a}.mps"), &mut files)?;
    }
    let mut pending = None;
    if cfg.enc && cfg.baselines.is_none() {
        pending = Some("viu.mps needs per-day baseline emissions: solve the baseline_day*.mps models and rerun with baselines=");
    } else {
        let baselines = if cfg.enc {
            cfg.baselines.as_deref()
        } else {
            None
        };
        if let Some(b) = baselines {
            if b.len() != case.days.len() {
                return Err(CliError::Usage(format!(
                    "baselines has {} values for {} days",
                    b.len(),
                    case.days.len()
                )));
            }
            if case.econ.enc_mode == EncMode::Daily && b.iter().any(|&x| x < 0.0) {
                return Err(CliError::Usage("baselines must be nonnegative".into()));
            }
        }
        let uc = encstore_core::investment::build_viu_model(
            case,
            baselines,
            cfg.max_units_per_bus,
            None,
        )
        .map_err(domain)?;
        export(&uc.model, out, "viu.mps", &mut files)?;
    }
    let days: Vec<_> = case
        .days
        .iter()
        .map(|d| json!({"source_day": d.source_day, "probability": d.probability}))
        .collect();
    let manifest = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "files": files,
        "days": days,
        "pending": pending,
    });
    write(
        &out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(domain)? + "\n",
    )?;
    println!("wrote {} files to {}", files.len(), out.display());
    if let Some(p) = pending {
        println!("{p}");
    }
    Ok(())
}

struct Planned {
    case: Case,
    baselines: Option<Vec<f64>>,
    ev: Evaluator,
    heuristic: HeuristicResult,
}

fn plan_cell(cfg: &RunConfig) -> Result<Planned, CliError> {
    let case = build_case(cfg)?;
    let opts = cfg.solve_options();
    let baselines = if cfg.enc {
        Some(compute_baseline(&case, &opts).map_err(domain)?)
    } else {
        None
    };
    let ev = Evaluator::new(case.clone(), baselines.clone(), opts);
    let settings = HeuristicSettings {
        max_units_per_bus: cfg.max_units_per_bus,
        min_return: cfg.min_return,
    };
    let heuristic = run_heuristic(&ev, &case.storage, &settings).map_err(domain)?;
    Ok(Planned {
        case,
        baselines,
        ev,
        heuristic,
    })
}

pub fn cmd_plan(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    out_dir(out)?;
    if cfg.solver == SolverMode::MpsOnly {
        let case = build_case(cfg)?;
        return write_mps_bundle(cfg, &case, out);
    }
    let Planned {
        case,
        baselines,
        ev,
        heuristic: h,
    } = plan_cell(cfg)?;
    let mut outcome = h.outcome(cfg.perspective).clone();
    let viu_bound = h.viu.evidence.viu_bound.unwrap_or(h.viu.social_cost);
    let mut extra = serde_json::Map::new();

    if cfg.perspective == Perspective::Phsi {
        let mut pcsle_bound = None;
        if cfg.pcsle {
            if baselines.is_some() && case.econ.enc_mode == EncMode::Aggregate {
                return Err(CliError::Usage("pcsle supports the daily ENC only".into()));
            }
            let popts = PcsleOptions {
                max_units_per_bus: cfg.max_units_per_bus,
                bits: None,
                min_return: cfg.min_return,
                bigm: None,
            };
            let milp = MilpOptions {
                gap_target: 1e-6,
                time_limit: Some(Duration::from_secs_f64(cfg.pcsle_time_limit)),
                ..MilpOptions::default()
            };
            let p = solve_pcsle(&case, baselines.as_deref(), &popts, &milp).map_err(domain)?;
            if p.audit_passed() {
                pcsle_bound = Some(p.bound);
            }
            extra.insert("pcsle".into(), serde_json::to_value(&p).map_err(domain)?);
        }
        outcome.evidence.pcsle_bound = pcsle_bound;
        let gap = assess_phsi_gap(outcome.social_cost, viu_bound, pcsle_bound).map_err(domain)?;
        extra.insert("phsi_gap".into(), json!(gap));
        extra.insert("phsi_profitable".into(), json!(h.phsi_profitable));
        if outcome.profit < cfg.min_return - 1e-6 * (1.0 + cfg.min_return.abs()) {
            return Err(CliError::Domain(format!(
                "PhSI profit {} below the required return {}",
                outcome.profit, cfg.min_return
            )));
        }
    }
    if cfg.perspective == Perspective::Pmsi {
        let report = verify_pmsi_local(&ev, &case.storage, &outcome).map_err(domain)?;
        outcome.evidence.perturbation_verified = Some(report.verified);
        extra.insert(
            "perturbation".into(),
            serde_json::to_value(&report).map_err(domain)?,
        );
    }

    let dispatch = ev.dispatch(&outcome.allocation).map_err(domain)?;
    let audit = audit_dispatch(&case, &outcome.allocation, &dispatch, baselines.as_deref());
    let duality = check_dispatch(&case, &outcome.allocation, &dispatch, baselines.as_deref())
        .map_err(domain)?;
    let doc = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "config": cfg.entries(),
        "q_viu": h.q_viu,
        "baseline_emissions": baselines,
        "outcome": outcome,
        "details": extra,
        "audit": audit,
        "duality": {
            "max_duality_gap": duality.max_duality_gap(),
            "profit_gap": duality.profit_gap(outcome.battery_cost),
            "printed_residual": duality.printed_residual(),
        },
    });
    write(
        &out.join("outcome.json"),
        serde_json::to_string_pretty(&doc).map_err(domain)? + "\n",
    )?;
    write(
        &out.join("records.csv"),
        records_csv(&h.records, Some(&cfg.stamp())).map_err(domain)?,
    )?;
    println!(
        "{}: {} units ({:.1} MW), social cost {:.2}, profit {:.2}, emissions {:.1} t",
        outcome.perspective.label(),
        outcome.quantity,
        outcome.storage_mw(&case.storage),
        outcome.social_cost,
        outcome.profit,
        outcome.total_emissions
    );
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    if cfg.solver == SolverMode::MpsOnly {
        return Err(CliError::Usage(
            "sweep needs the builtin solver; use plan for MPS export".into(),
        ));
    }
    let grid = cfg.grid();
    grid.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let case = build_case(cfg)?;
    let settings = SweepSettings {
        heuristic: HeuristicSettings {
            max_units_per_bus: cfg.max_units_per_bus,
            min_return: cfg.min_return,
        },
        opts: cfg.solve_options(),
        verify_pmsi: true,
    };
    let sweep = run_sweep(&case, &grid, &settings).map_err(domain)?;
    out_dir(out)?;
    let stamp = cfg.stamp();
    write(
        &out.join("sweep.csv"),
        sweep_csv(&sweep, Some(&stamp)).map_err(domain)?,
    )?;
    let mut failures = format!("# {stamp}\ncarbon_price,storage_price,perspective,enc,error\n");
    let mut failed = 0;
    for c in sweep.failures() {
        if let Err(e) = &c.outcome {
            failed += 1;
            failures.push_str(&format!(
                "{},{},{},{},\"{}\"\n",
                c.key.carbon_price,
                c.key.storage_price,
                c.key.perspective.label(),
                if c.key.enc { "on" } else { "off" },
                e.replace('"', "'")
            ));
        }
    }
    write(&out.join("failures.csv"), failures)?;
    let report = emissions_report(&sweep, &out.join("report"), Some(&stamp)).map_err(domain)?;
    println!(
        "{} cells, {} failed, {} ENC violations",
        sweep.cells.len(),
        failed,
        report.enc_violations.len()
    );
    if failed > 0 {
        return Err(CliError::Domain(format!(
            "{failed} cells failed; see failures.csv"
        )));
    }
    Ok(())
}

struct Checks {
    lines: Vec<String>,
    failed: usize,
}

impl Checks {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        if !ok {
            self.failed += 1;
        }
        let line = format!("{tag} {name}: {detail}");
        println!("{line}");
        self.lines.push(line);
    }
}

/// Reduction, audit and duality checks on the configured cell.
pub fn cmd_verify(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    if cfg.solver == SolverMode::MpsOnly {
        return Err(CliError::Usage("verify needs the builtin solver".into()));
    }
    let mut c = Checks {
        lines: Vec::new(),
        failed: 0,
    };
    if cfg.repdays.is_none() {
        let sys = load(cfg)?;
        let red = reduce(cfg, &sys)?;
        let cum = &red.cumulative_variance;
        let m = red.components;
        let minimal = cum[m - 1] >= cfg.variance && (m == 1 || cum[m - 2] < cfg.variance);
        c.check(
            "reduction.components",
            minimal,
            format!("{m} components, cumulative {:.6}", cum[m - 1]),
        );
        let total: f64 = red.days.iter().map(|d| d.probability).sum();
        c.check(
            "reduction.probabilities",
            total == 1.0,
            format!("sum {total:e}"),
        );
        let profiles = sys.days();
        let full = profiles.iter().map(|p| p.total_load()).sum::<f64>() / profiles.len() as f64;
        let rep: f64 = red
            .days
            .iter()
            .map(|d| d.probability * d.profile.total_load())
            .sum();
        let rel = (rep - full).abs() / full;
        c.check(
            "reduction.mean_load",
            rel <= 0.02,
            format!("relative error {rel:.4}"),
        );
    }

    let p = plan_cell(cfg)?;
    let tol = 1e-6;
    for persp in Perspective::ALL {
        let o = p.heuristic.outcome(persp);
        let name = persp.label();
        let dispatch = p.ev.dispatch(&o.allocation).map_err(domain)?;
        let audit = audit_dispatch(&p.case, &o.allocation, &dispatch, p.baselines.as_deref());
        c.check(
            &format!("{name}.operating_constraints"),
            audit.max_violation <= tol && audit.energy_residual <= tol,
            format!(
                "violation {:.2e}, energy residual {:.2e}",
                audit.max_violation, audit.energy_residual
            ),
        );
        if p.baselines.is_some() {
            c.check(
                &format!("{name}.enc"),
                audit.enc_excess <= tol,
                format!("excess {:.2e} t", audit.enc_excess),
            );
        }
        let d = check_dispatch(&p.case, &o.allocation, &dispatch, p.baselines.as_deref())
            .map_err(domain)?;
        c.check(
            &format!("{name}.strong_duality"),
            d.max_duality_gap() <= 1e-7,
            format!("{:.2e}", d.max_duality_gap()),
        );
        let pg = d.profit_gap(o.battery_cost);
        c.check(
            &format!("{name}.profit_identity"),
            pg <= tol,
            format!("{pg:.2e}"),
        );
        let pr = d.printed_residual();
        c.check(
            &format!("{name}.printed_dual"),
            pr <= tol,
            format!("{pr:.2e}"),
        );
    }
    let phsi = &p.heuristic.phsi;
    c.check(
        "PhSI.min_return",
        phsi.profit >= cfg.min_return - tol * (1.0 + cfg.min_return.abs()),
        format!("profit {:.2}", phsi.profit),
    );
    let viu_bound = p
        .heuristic
        .viu
        .evidence
        .viu_bound
        .unwrap_or(p.heuristic.viu.social_cost);
    let gap = assess_phsi_gap(phsi.social_cost, viu_bound, None);
    c.check(
        "PhSI.gap",
        gap.is_ok(),
        match &gap {
            Ok(g) => format!("{:.4}%", 100.0 * g),
            Err(e) => e.to_string(),
        },
    );
    let report = verify_pmsi_local(&p.ev, &p.case.storage, &p.heuristic.pmsi).map_err(domain)?;
    c.check(
        "PMSI.local",
        report.verified,
        format!(
            "{} trials, {} improving",
            report.trials.len(),
            report.improving.len()
        ),
    );

    if let Some(dir) = out {
        out_dir(dir)?;
        write(
            &dir.join("verify.txt"),
            format!("# {}\n{}\n", cfg.stamp(), c.lines.join("\n")),
        )?;
    }
    if c.failed > 0 {
        return Err(CliError::Domain(format!("{} checks failed", c.failed)));
    }
    Ok(())
}
