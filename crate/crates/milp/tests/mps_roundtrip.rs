use encstore_milp::mps::{read_mps, sidecar_path, write_mps};
use encstore_milp::{export_mps, import_mps, solve_lp, MilpModel, Sense, VarKind};

fn sample_model() -> MilpModel {
    let mut m = MilpModel::new("unit commitment toy");
    let u = m.binary("u[g1,t0,a0]");
    let g = m.continuous("g[g1,s0,t0,a0]", 0.0, 100.0);
    let th = m.continuous("theta[b2,t0,a0]", f64::NEG_INFINITY, f64::INFINITY);
    let k = m.integer("units[b2]", 0.0, 7.0);
    let s = m.continuous("shed", f64::NEG_INFINITY, 3.0);
    let fx = m.continuous("fixed", 2.5, 2.5);
    let lo = m.continuous("lower_only", -1.25, f64::INFINITY);
    m.set_objective(g, 20.000000000000004);
    m.set_objective(u, 1e-7);
    m.set_objective(k, 12345.678901234567);
    m.set_objective_offset(17.5);
    m.add_row(
        "balance[b1,t0,a0]",
        [(g, 1.0), (s, 1.0), (fx, 1.0)],
        Sense::Eq,
        50.0,
    );
    m.add_row("seg[g1,s0,t0,a0]", [(g, 1.0), (u, -100.0)], Sense::Le, 0.0);
    m.add_row(
        "flow",
        [(th, 0.1), (k, -1.0 / 3.0), (lo, 1.0)],
        Sense::Ge,
        -4.0,
    );
    m
}

#[test]
fn export_import_export_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.mps");
    let second = dir.path().join("b.mps");
    let model = sample_model();
    export_mps(&model, &first).unwrap();
    assert!(sidecar_path(&first).exists());
    let back = import_mps(&first).unwrap();
    export_mps(&back, &second).unwrap();
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
    assert_eq!(
        std::fs::read(sidecar_path(&first)).unwrap(),
        std::fs::read(sidecar_path(&second)).unwrap()
    );

    assert_eq!(back.name, model.name);
    assert_eq!(back.objective(), model.objective());
    assert_eq!(back.objective_offset(), model.objective_offset());
    assert_eq!(back.vars(), model.vars());
    assert_eq!(back.rows(), model.rows());
}

#[test]
fn mangled_file_fits_fixed_columns() {
    let (text, map) = write_mps(&sample_model());
    assert!(map.is_some());
    for line in text
        .lines()
        .filter(|l| l.starts_with(' ') && !l.contains("'MARKER'"))
    {
        // name fields stay inside columns 5-12 and 15-22
        let f2 = line.get(4..12).unwrap_or("").trim();
        assert!(!f2.contains(' '), "{line}");
        if let Some(f3) = line.get(14..22) {
            assert!(!f3.trim().contains(' '), "{line}");
        }
    }
    assert!(text.contains(" BV BND       C0000001"));
    assert!(text.contains("    RHS       OBJ       -17.5"));
}

#[test]
fn empty_objective_model_is_valid() {
    let mut m = MilpModel::new("feas");
    let x = m.continuous("x", 0.0, 1.0);
    m.add_row("r", [(x, 1.0)], Sense::Ge, 0.5);
    let (text, _) = write_mps(&m);
    assert!(!text
        .lines()
        .any(|l| l.contains(" OBJ ") && l.starts_with("    ")));
    let back = read_mps(text.as_bytes(), None).unwrap();
    assert_eq!(back.objective(), &[0.0]);
    assert_eq!(back.var(x).kind, VarKind::Continuous);
}

#[test]
fn imported_model_solves_like_the_original() {
    let model = sample_model().relaxed();
    let (text, map) = write_mps(&model);
    let back = read_mps(text.as_bytes(), map.as_ref()).unwrap();
    let a = solve_lp(&model);
    let b = solve_lp(&back);
    assert_eq!(a.status, b.status);
    assert_eq!(a.objective, b.objective);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let text = "NAME t\nROWS\n N obj\n L r\nCOLUMNS\n    x obj abc\nENDATA\n";
    let err = read_mps(text.as_bytes(), None).unwrap_err();
    assert!(err.to_string().starts_with("line 6"), "{err}");
}
