mod support;

use encstore_milp::{solve_lp, LpStatus, MilpModel, Sense};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::tableau::{self, Oracle, Rel};

struct Instance {
    c: Vec<f64>,
    rows: Vec<(Vec<f64>, Rel, f64)>,
    upper: f64,
}

fn random_instance(seed: u64, m: usize, n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let rows = (0..m)
        .map(|_| {
            let a: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.6) {
                        rng.gen_range(-5.0..5.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let rel = match rng.gen_range(0..6) {
                0 => Rel::Ge,
                1 => Rel::Eq,
                _ => Rel::Le,
            };
            (a, rel, rng.gen_range(-10.0..30.0))
        })
        .collect();
    Instance {
        c,
        rows,
        upper: 10.0,
    }
}

fn to_model(inst: &Instance) -> MilpModel {
    let mut m = MilpModel::new("rand");
    let vars: Vec<_> = (0..inst.c.len())
        .map(|j| m.continuous(format!("x{j}"), 0.0, inst.upper))
        .collect();
    for (j, &c) in inst.c.iter().enumerate() {
        m.set_objective(vars[j], c);
    }
    for (i, (a, rel, b)) in inst.rows.iter().enumerate() {
        let sense = match rel {
            Rel::Le => Sense::Le,
            Rel::Ge => Sense::Ge,
            Rel::Eq => Sense::Eq,
        };
        m.add_row(
            format!("r{i}"),
            a.iter().enumerate().map(|(j, &v)| (vars[j], v)),
            sense,
            *b,
        );
    }
    m
}

fn oracle(inst: &Instance) -> Oracle {
    let n = inst.c.len();
    let mut rows = inst.rows.clone();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e, Rel::Le, inst.upper));
    }
    tableau::solve(&inst.c, &rows)
}

#[test]
fn random_dense_lps_match_tableau_oracle() {
    let mut optimal = 0;
    for seed in 0..60 {
        let inst = random_instance(seed, 20, 30);
        let model = to_model(&inst);
        let sol = solve_lp(&model);
        match oracle(&inst) {
            Oracle::Optimal(obj, _) => {
                optimal += 1;
                assert_eq!(sol.status, LpStatus::Optimal, "seed {seed}");
                assert!(
                    (sol.objective - obj).abs() <= 1e-8,
                    "seed {seed}: {} vs {obj}",
                    sol.objective
                );
                assert!(model.violation(&sol.x).max() <= 1e-7, "seed {seed}");
                let dual = sol.dual_objective(&model);
                assert!(
                    (dual - sol.objective).abs() <= 1e-7 * (1.0 + obj.abs()),
                    "seed {seed}"
                );
            }
            Oracle::Infeasible => assert_eq!(sol.status, LpStatus::Infeasible, "seed {seed}"),
            Oracle::Unbounded => unreachable!("boxed instances are bounded"),
        }
    }
    assert!(optimal >= 20, "too few feasible instances ({optimal})");
}

#[test]
fn beale_cycling_example_terminates() {
    // Classic instance on which textbook Dantzig pricing cycles.
    let mut m = MilpModel::new("beale");
    let x: Vec<_> = (0..4)
        .map(|j| m.continuous(format!("x{j}"), 0.0, f64::INFINITY))
        .collect();
    for (v, c) in x.iter().zip([-0.75, 20.0, -0.5, 6.0]) {
        m.set_objective(*v, c);
    }
    m.add_row(
        "a",
        x.iter().copied().zip([0.25, -8.0, -1.0, 9.0]),
        Sense::Le,
        0.0,
    );
    m.add_row(
        "b",
        x.iter().copied().zip([0.5, -12.0, -0.5, 3.0]),
        Sense::Le,
        0.0,
    );
    m.add_row("c", [(x[2], 1.0)], Sense::Le, 1.0);
    // Redundant copies make the vertex more degenerate still.
    m.add_row(
        "a2",
        x.iter().copied().zip([0.5, -16.0, -2.0, 18.0]),
        Sense::Le,
        0.0,
    );
    m.add_row("c2", [(x[2], 2.0)], Sense::Le, 2.0);
    let sol = solve_lp(&m);
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective + 1.25).abs() < 1e-9);
}

#[test]
fn equality_system_with_redundant_rows() {
    let mut m = MilpModel::new("red");
    let x = m.continuous("x", 0.0, f64::INFINITY);
    let y = m.continuous("y", 0.0, f64::INFINITY);
    let z = m.continuous("z", 0.0, f64::INFINITY);
    m.set_objective(x, 1.0);
    m.set_objective(y, 2.0);
    m.set_objective(z, 3.0);
    m.add_row("s1", [(x, 1.0), (y, 1.0), (z, 1.0)], Sense::Eq, 6.0);
    m.add_row("s2", [(x, 2.0), (y, 2.0), (z, 2.0)], Sense::Eq, 12.0);
    m.add_row("d", [(x, 1.0), (y, -1.0)], Sense::Eq, 0.0);
    let sol = solve_lp(&m);
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective - 9.0).abs() < 1e-9);
}

#[test]
fn free_variables_and_warm_start_agree() {
    let inst = random_instance(7, 12, 16);
    let mut model = to_model(&inst);
    let first = solve_lp(&model);
    if first.status != LpStatus::Optimal {
        return;
    }
    model.set_bounds(encstore_milp::Var(0), 0.0, 1.0);
    let cold = solve_lp(&model);
    let warm = encstore_milp::solve_lp_with(&model, &Default::default(), first.basis.as_ref());
    assert_eq!(cold.status, warm.status);
    if cold.status == LpStatus::Optimal {
        assert!((cold.objective - warm.objective).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strong_duality_on_origin_feasible_lps(seed in 0u64..10_000, m in 1usize..12, n in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = MilpModel::new("p");
        let vars: Vec<_> = (0..n).map(|j| model.continuous(format!("x{j}"), 0.0, rng.gen_range(1.0..8.0))).collect();
        for &v in &vars {
            model.set_objective(v, rng.gen_range(-4.0..4.0));
        }
        for i in 0..m {
            let terms: Vec<_> = vars.iter().map(|&v| (v, rng.gen_range(-3.0..3.0))).collect();
            model.add_row(format!("r{i}"), terms, Sense::Le, rng.gen_range(0.0..10.0));
        }
        let sol = solve_lp(&model);
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let dual = sol.dual_objective(&model);
        prop_assert!((dual - sol.objective).abs() <= 1e-7 * (1.0 + sol.objective.abs()));
        for (i, r) in model.rows().iter().enumerate() {
            // dual sign and complementary slackness
            prop_assert!(sol.row_duals[i] <= 1e-9);
            let slack = r.rhs - r.activity(&sol.x);
            prop_assert!((sol.row_duals[i] * slack).abs() <= 1e-7);
        }
    }
}
