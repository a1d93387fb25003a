use encstore_core::desk::{
    desk_case, desk_system, flexible_unit, toy_one_bus, two_bus_congested, unweighted_econ,
    DESK_SEED,
};
use encstore_core::duality::build_dual_tced;
use encstore_core::scenario::{reduce_days, RepresentativeDay};
use encstore_core::system::{Bus, DailyProfile, Generator, PowerSystem, Segment, StorageSpec};
use encstore_core::uc::{
    audit_dispatch, build_uc, compute_baseline, shutdowns, solve_dispatch, startups, Case,
    SolveOptions, StorageAllocation,
};
use encstore_milp::{export_mps, import_mps, solve_lp, solve_milp};
use proptest::prelude::*;

fn exact() -> SolveOptions {
    SolveOptions::exact()
}

fn one_bus(gens: Vec<Generator>, load: Vec<f64>) -> Case {
    let hours = load.len();
    let system = PowerSystem {
        buses: vec![Bus {
            id: "1".into(),
            candidate_storage: true,
        }],
        lines: vec![],
        generators: gens,
        load: vec![vec![0.0; 24]],
        ren: vec![vec![0.0; 24]],
    };
    Case {
        system,
        days: vec![RepresentativeDay::whole(DailyProfile {
            load: vec![load],
            ren: vec![vec![0.0; hours]],
        })],
        econ: unweighted_econ(),
        storage: StorageSpec::default(),
    }
}

fn seg(max_mw: f64, cost: f64) -> Segment {
    Segment {
        max_mw,
        cost,
        emissions: 0.5,
    }
}

#[test]
fn toy_cost_emissions_and_price() {
    // 50 MW for 4 h at $20/MWh and 0.5 t/MWh
    let case = toy_one_bus(4);
    let sol = solve_dispatch(&case, &StorageAllocation::zeros(1), None, &exact()).unwrap();
    assert!((sol.objective - 4000.0).abs() < 1e-6);
    assert!((sol.total_emissions - 100.0).abs() < 1e-9);
    assert!(sol.days[0].lmp[0].iter().all(|&p| (p - 20.0).abs() < 1e-9));
    assert_eq!(compute_baseline(&case, &exact()).unwrap().len(), 1);
    assert!((compute_baseline(&case, &exact()).unwrap()[0] - 100.0).abs() < 1e-9);
}

#[test]
fn carbon_price_adds_emission_cost_to_cost_and_price() {
    let case = toy_one_bus(4).with_carbon_price(10.0);
    let sol = solve_dispatch(&case, &StorageAllocation::zeros(1), None, &exact()).unwrap();
    assert!((sol.objective - 5000.0).abs() < 1e-6);
    assert!(sol.days[0].lmp[0].iter().all(|&p| (p - 25.0).abs() < 1e-9));
}

#[test]
fn congestion_splits_prices() {
    // 40 MW imported at $20, 20 MW local at $50, for 4 h
    let case = two_bus_congested(4);
    let sol = solve_dispatch(&case, &StorageAllocation::zeros(2), None, &exact()).unwrap();
    assert!((sol.objective - 7200.0).abs() < 1e-6);
    let d = &sol.days[0];
    assert!(d.lmp[0].iter().all(|&p| (p - 20.0).abs() < 1e-9));
    assert!(d.lmp[1].iter().all(|&p| (p - 50.0).abs() < 1e-9));
    assert!(d.flow[0].iter().all(|&f| (f.abs() - 40.0).abs() < 1e-9));
}

#[test]
fn storage_arbitrage_matches_hand_solution() {
    // Charge 25 MW in each $20 hour, return 50 * 0.92^2 MWh in the $50 hours.
    let gens = vec![
        flexible_unit("a", 0, vec![seg(100.0, 20.0)]),
        flexible_unit("b", 0, vec![seg(100.0, 50.0)]),
    ];
    let case = one_bus(gens, vec![40.0, 40.0, 140.0, 140.0]);
    let none = solve_dispatch(&case, &StorageAllocation::zeros(1), None, &exact()).unwrap();
    assert!((none.objective - 9600.0).abs() < 1e-6);
    let one = StorageAllocation { units: vec![1] };
    let sol = solve_dispatch(&case, &one, None, &exact()).unwrap();
    let returned = 50.0 * 0.92 * 0.92;
    assert!((sol.objective - (9600.0 - 50.0 * returned + 20.0 * 50.0)).abs() < 1e-6);
    assert!((sol.storage_revenue() - (50.0 * returned - 20.0 * 50.0)).abs() < 1e-6);
    let audit = audit_dispatch(&case, &one, &sol, None);
    assert!(audit.max_violation < 1e-7 && audit.energy_residual < 1e-7);
    assert_eq!(audit.simultaneous_storage_hours, 0);
}

/// Cyclic minimum up/down check written independently of the model rows.
fn respects_min_times(u: &[f64], up: usize, down: usize) -> bool {
    let t = u.len();
    let v = startups(u);
    let z = shutdowns(u);
    (0..t).all(|k| {
        let s_up: f64 = (0..up.min(t)).map(|j| v[(k + t - j) % t]).sum();
        let s_dn: f64 = (0..down.min(t)).map(|j| z[(k + t - j) % t]).sum();
        s_up <= u[k] + 1e-9 && s_dn <= 1.0 - u[k] + 1e-9
    })
}

#[test]
fn commitment_matches_brute_force_over_schedules() {
    let base = Generator {
        id: "base".into(),
        bus: 0,
        gmin: 40.0,
        gmax: 100.0,
        cmin: 300.0,
        csu: 700.0,
        emin: 10.0,
        esu: 2.0,
        min_up: 3,
        min_down: 2,
        segments: vec![seg(60.0, 15.0)],
    };
    let peaker = flexible_unit("peaker", 0, vec![seg(200.0, 45.0)]);
    for load in [
        vec![20.0, 20.0, 90.0, 120.0, 90.0, 20.0],
        vec![60.0, 10.0, 10.0, 80.0, 80.0, 10.0],
        vec![5.0, 5.0, 5.0, 5.0, 30.0, 5.0],
    ] {
        let case = one_bus(vec![base.clone(), peaker.clone()], load.clone());
        let alloc = StorageAllocation::zeros(1);
        let mut best = f64::INFINITY;
        for mask in 0u32..64 {
            let u: Vec<f64> = (0..6).map(|t| (mask >> t & 1) as f64).collect();
            if !respects_min_times(&u, 3, 2) {
                continue;
            }
            let sched = vec![u, vec![1.0; 6]];
            let dd = build_dual_tced(&case, 0, &alloc, &sched, None).unwrap();
            let lp = solve_lp(&dd.tced.model);
            if lp.is_optimal() {
                best = best.min(lp.objective);
            }
        }
        let sol = solve_dispatch(&case, &alloc, None, &exact()).unwrap();
        assert!(
            (sol.objective - best).abs() <= 1e-6 * (1.0 + best.abs()),
            "{load:?}: {} vs {best}",
            sol.objective
        );
        assert!(respects_min_times(&sol.days[0].u[0], 3, 2));
    }
}

#[test]
fn desk_schedule_passes_audit_and_enc() {
    let sys = desk_system(DESK_SEED);
    let red = reduce_days(&sys.days(), 2, 0.9, 7).unwrap();
    let case = desk_case(sys, red.days);
    let base = compute_baseline(&case, &exact()).unwrap();
    let alloc = StorageAllocation {
        units: vec![0, 0, 2, 0, 1],
    };
    let sol = solve_dispatch(&case, &alloc, Some(&base), &exact()).unwrap();
    let audit = audit_dispatch(&case, &alloc, &sol, Some(&base));
    assert!(audit.max_violation <= 1e-6, "{audit:?}");
    assert!(audit.energy_residual <= 1e-6);
    assert!(audit.enc_excess <= 1e-6);
    for (e, b) in sol.emissions_by_day().iter().zip(&base) {
        assert!(*e <= b + 1e-6);
    }
    // the ENC can only raise operating cost
    let free = solve_dispatch(&case, &alloc, None, &exact()).unwrap();
    assert!(free.objective <= sol.objective * (1.0 + 1e-9));
}

#[test]
fn uc_model_survives_mps_roundtrip() {
    let case = two_bus_congested(6);
    let uc = build_uc(&case, &StorageAllocation { units: vec![0, 1] }, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("uc.mps");
    export_mps(&uc.model, &path).unwrap();
    let back = import_mps(&path).unwrap();
    let a = solve_milp(&uc.model, 1e-9, None);
    let b = solve_milp(&back, 1e-9, None);
    assert!((a.objective - b.objective).abs() <= 1e-9 * (1.0 + a.objective.abs()));
}

/// Merit-order cost and marginal price of one hour.
fn merit_order(load: f64, units: &[(f64, f64)]) -> (f64, f64) {
    let mut left = load;
    let mut cost = 0.0;
    for &(cap, c) in units {
        let take = left.min(cap);
        cost += take * c;
        left -= take;
        if left <= 0.0 {
            return (cost, c);
        }
    }
    (cost + left * 10_000.0, 10_000.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flexible_dispatch_is_merit_order(load in prop::collection::vec(1.0f64..320.0, 4)) {
        let units = [(100.0, 20.0), (100.0, 35.0), (100.0, 60.0)];
        let gens = units
            .iter()
            .enumerate()
            .map(|(i, &(cap, c))| flexible_unit(&format!("g{i}"), 0, vec![seg(cap, c)]))
            .collect();
        let case = one_bus(gens, load.clone());
        let sol = solve_dispatch(&case, &StorageAllocation::zeros(1), None, &exact()).unwrap();
        let mut total = 0.0;
        for (t, &l) in load.iter().enumerate() {
            let (cost, price) = merit_order(l, &units);
            total += cost;
            // prices are ambiguous only at exact capacity breakpoints
            if units.iter().scan(0.0, |s, u| { *s += u.0; Some(*s) }).all(|b| (l - b).abs() > 1e-6) {
                prop_assert!((sol.days[0].lmp[0][t] - price).abs() < 1e-6);
            }
        }
        prop_assert!((sol.objective - total).abs() <= 1e-7 * (1.0 + total));
    }
}
