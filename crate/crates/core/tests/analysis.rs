use encstore_core::analysis::{
    emissions_report, heatmap_panels, paired_samples, summarize, sweep_csv, wilcoxon_pratt_deltas,
    AnalysisError, CellKey, CellResult, Metric, PairedSample, Sweep, SweepGrid, WilcoxonMethod,
    EXACT_LIMIT,
};
use encstore_core::investment::{Evidence, InvestmentOutcome, Perspective};
use encstore_core::system::StorageSpec;
use encstore_core::uc::StorageAllocation;
use proptest::prelude::*;

/// Average ranks of |d| with ties sharing the mean, computed by counting.
fn pratt_ranks(d: &[f64]) -> Vec<f64> {
    d.iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided p-value by listing every sign pattern of the nonzero ranks.
fn brute_force_p(d: &[f64]) -> f64 {
    let r = pratt_ranks(d);
    let nz: Vec<usize> = (0..d.len()).filter(|&i| d[i] != 0.0).collect();
    if nz.is_empty() {
        return 1.0;
    }
    let total: f64 = nz.iter().map(|&i| r[i]).sum();
    let obs: f64 = nz.iter().filter(|&&i| d[i] > 0.0).map(|&i| r[i]).sum();
    let dev = (obs - total / 2.0).abs();
    let m = nz.len();
    let mut hits = 0u64;
    for mask in 0u64..(1 << m) {
        let w: f64 = (0..m)
            .filter(|&k| mask >> k & 1 == 1)
            .map(|k| r[nz[k]])
            .sum();
        if (w - total / 2.0).abs() >= dev - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << m) as f64
}

#[test]
fn five_positive_differences() {
    let r = wilcoxon_pratt_deltas(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert_eq!(r.statistic, 15.0);
    assert_eq!(r.p_value, 0.0625);
    assert_eq!(r.method, WilcoxonMethod::Exact);
}

#[test]
fn fixed_fixtures_match_enumeration() {
    let fixtures: Vec<Vec<f64>> = vec![
        vec![0.5],
        vec![-1.0, 2.0],
        vec![0.0, 0.0, 1.0],
        vec![0.0, 1.0, -1.0, 2.0],
        vec![1.0, 1.0, 1.0, -1.0, 2.0],
        vec![0.0, 0.0, 0.0, 3.0, -3.0, 3.0],
        vec![2.5, -0.5, 1.5, -2.5, 0.0, 4.0, 4.0],
        vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, -8.0],
        vec![0.0, -1.0, -2.0, -2.0, -3.0, 1.0, 0.0, 5.0, 6.0],
        vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8, 0.9, 1.0],
    ];
    for d in fixtures {
        let r = wilcoxon_pratt_deltas(&d).unwrap();
        assert!(
            (r.p_value - brute_force_p(&d)).abs() < 1e-12,
            "{d:?}: {} vs {}",
            r.p_value,
            brute_force_p(&d)
        );
        assert_eq!(r.zeros, d.iter().filter(|&&x| x == 0.0).count());
    }
}

#[test]
fn degenerate_and_empty_inputs() {
    let r = wilcoxon_pratt_deltas(&[0.0, 0.0, 0.0]).unwrap();
    assert_eq!(r.p_value, 1.0);
    assert_eq!(r.method, WilcoxonMethod::Degenerate);
    assert!(matches!(
        wilcoxon_pratt_deltas(&[]),
        Err(AnalysisError::Empty)
    ));
}

/// Exact null distribution by dynamic programming over doubled ranks.
fn exact_dp_p(d: &[f64]) -> f64 {
    let r = pratt_ranks(d);
    let nz: Vec<usize> = (0..d.len()).filter(|&i| d[i] != 0.0).collect();
    let twice: Vec<usize> = nz.iter().map(|&i| (2.0 * r[i]) as usize).collect();
    let total: usize = twice.iter().sum();
    let mut ways = vec![0f64; total + 1];
    ways[0] = 1.0;
    for &x in &twice {
        for s in (x..=total).rev() {
            ways[s] += ways[s - x];
        }
    }
    let obs: usize = nz
        .iter()
        .filter(|&&i| d[i] > 0.0)
        .map(|&i| (2.0 * r[i]) as usize)
        .sum();
    let dev = (2 * obs as i64 - total as i64).abs();
    let hits: f64 = (0..=total)
        .filter(|&s| (2 * s as i64 - total as i64).abs() >= dev)
        .map(|s| ways[s])
        .sum();
    hits / 2f64.powi(twice.len() as i32)
}

#[test]
fn normal_approximation_tracks_exact_above_limit() {
    let n = EXACT_LIMIT + 5;
    let d: Vec<f64> = (1..=n)
        .map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 })
        .collect();
    let r = wilcoxon_pratt_deltas(&d).unwrap();
    assert_eq!(r.method, WilcoxonMethod::Normal);
    assert!(
        (r.p_value - exact_dp_p(&d)).abs() < 0.01,
        "{} vs {}",
        r.p_value,
        exact_dp_p(&d)
    );
}

#[test]
fn small_differences_count_as_ties() {
    let s = PairedSample::new(0.0, 1.0, Perspective::Viu, 100.0 + 1e-8, 100.0);
    assert_eq!(s.delta, 0.0);
    let s = PairedSample::new(0.0, 1.0, Perspective::Viu, 100.1, 100.0);
    assert!(s.delta > 0.0);
}

#[test]
fn grid_validation() {
    assert!(SweepGrid::desk().validate().is_ok());
    assert_eq!(SweepGrid::full().carbon_prices.len(), 11);
    assert_eq!(SweepGrid::full().storage_prices.len(), 15);
    let mut g = SweepGrid::desk();
    g.carbon_prices.clear();
    assert!(g.validate().is_err());
    let mut g = SweepGrid::desk();
    g.storage_prices = vec![2.0, 1.0];
    assert!(g.validate().is_err());
    let mut g = SweepGrid::desk();
    g.perspectives = vec![Perspective::Viu, Perspective::Viu];
    assert!(g.validate().is_err());
    assert_eq!(SweepGrid::desk().cells().len(), 54);
}

fn outcome(units: u32, emissions: f64, cost: f64) -> InvestmentOutcome {
    InvestmentOutcome {
        perspective: Perspective::Viu,
        allocation: StorageAllocation { units: vec![units] },
        quantity: units,
        battery_cost: 0.0,
        operating_cost: cost,
        social_cost: cost,
        revenue: 0.0,
        profit: 0.0,
        total_emissions: emissions,
        emissions_by_day: vec![emissions],
        enc_active: false,
        evidence: Evidence::default(),
        dispatch: None,
    }
}

/// Two carbon prices by one storage price, VIU only. ENC-on arms emit less
/// and cost 1% more.
fn synthetic() -> Sweep {
    let grid = SweepGrid {
        carbon_prices: vec![0.0, 10.0],
        storage_prices: vec![5.0],
        perspectives: vec![Perspective::Viu],
        enc_modes: vec![false, true],
    };
    let mut cells = Vec::new();
    for (i, &c) in grid.carbon_prices.iter().enumerate() {
        for enc in [false, true] {
            let (units, e, cost) = if enc {
                (1, 100.0, 1010.0)
            } else {
                (2 + i as u32, 110.0, 1000.0)
            };
            cells.push(CellResult {
                key: CellKey {
                    carbon_price: c,
                    storage_price: 5.0,
                    perspective: Perspective::Viu,
                    enc,
                },
                input_hash: format!("h{i}"),
                baseline_emissions: 100.0,
                baseline_by_day: vec![100.0],
                outcome: Ok(outcome(units, e, cost)),
                phsi_gap: None,
                max_enc_excess: enc.then_some(0.0),
            });
        }
    }
    Sweep {
        grid,
        cells,
        storage: StorageSpec::default(),
    }
}

#[test]
fn summaries_and_panels_from_stored_outcomes() {
    let sweep = synthetic();
    let rows = summarize(&sweep).unwrap();
    assert_eq!(rows.len(), 1);
    let s = &rows[0];
    assert_eq!(s.pairs, 2);
    // 2.5 units off vs 1 unit on, 25 MW each
    assert_eq!(s.mean_storage_mw_off, Some(62.5));
    assert_eq!(s.mean_storage_mw_on, Some(25.0));
    assert!((s.mean_emissions_delta_pct.unwrap() - (-100.0 / 11.0)).abs() < 1e-12);
    assert!((s.mean_cost_delta_pct.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(s.enc_cells_within_baseline, 2);
    // both pairs move the same way; n = 2 gives p = 0.5
    assert_eq!(s.cost_p, Some(0.5));
    let panels = heatmap_panels(&sweep, Metric::StorageMw);
    assert_eq!(panels.len(), 3);
    assert_eq!(panels[0][0], vec![vec![50.0], vec![75.0]]);
    assert_eq!(panels[2][0], vec![vec![-25.0], vec![-50.0]]);
}

#[test]
fn unpaired_hashes_are_rejected() {
    let mut sweep = synthetic();
    sweep.cells[1].input_hash = "other".into();
    assert!(matches!(
        paired_samples(&sweep, Perspective::Viu, Metric::Emissions),
        Err(AnalysisError::Unpaired(_))
    ));
}

#[test]
fn report_files_carry_the_stamp() {
    let sweep = synthetic();
    let dir = tempfile::tempdir().unwrap();
    let report = emissions_report(&sweep, dir.path(), Some("stamp-123")).unwrap();
    assert!(report.enc_violations.is_empty());
    for f in &report.files {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.contains("stamp-123"), "{f}");
    }
    assert!(report.files.iter().any(|f| f.ends_with(".svg")));
    let csv = sweep_csv(&sweep, Some("stamp-123")).unwrap();
    assert!(csv.starts_with("# stamp-123\n"));
    assert_eq!(csv.lines().count(), 2 + sweep.cells.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_p_values_match_enumeration(d in prop::collection::vec(-3i32..=3, 1..=10)) {
        let d: Vec<f64> = d.into_iter().map(f64::from).collect();
        let r = wilcoxon_pratt_deltas(&d).unwrap();
        prop_assert!((r.p_value - brute_force_p(&d)).abs() < 1e-12);
        prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        // flipping every sign leaves a two-sided p-value unchanged
        let flipped: Vec<f64> = d.iter().map(|x| -x).collect();
        prop_assert!((wilcoxon_pratt_deltas(&flipped).unwrap().p_value - r.p_value).abs() < 1e-12);
    }
}
