use laplace_ode::laplacian::validate_laplacian;
use laplace_ode::models::{self, load_problem, parse_problem, ModelCatalogEntry};
use laplace_ode::{Error, Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::PathBuf;

fn problem_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

// hand-transcribed right-hand sides

fn robertson_f(y: &Vector) -> Vector {
    Vector::from_vec(vec![
        -0.04 * y[0] + 1e4 * y[1] * y[2],
        0.04 * y[0] - 1e4 * y[1] * y[2] - 3e7 * y[1] * y[1],
        3e7 * y[1] * y[1],
    ])
}

fn sir_f(r0: f64, y: &Vector) -> Vector {
    Vector::from_vec(vec![-r0 * y[0] * y[1], r0 * y[0] * y[1] - y[1], y[1]])
}

fn mapk_f(y: &Vector) -> Vector {
    let (k1, k2, k3, k4, k5, k6, k7) = (100.0 / 3.0, 1.0 / 3.0, 50.0, 0.5, 10.0 / 3.0, 0.1, 0.7);
    Vector::from_vec(vec![
        -k7 * y[0] - k1 * y[0] * y[1] + k2 * y[3] + k6 * y[5],
        -k1 * y[0] * y[1] + k5 * y[2],
        -k3 * y[0] * y[2] - k5 * y[2] + k2 * y[3] + k4 * y[4],
        k1 * y[0] * y[1] - k2 * y[3],
        k3 * y[0] * y[2] - k4 * y[4],
        k7 * y[0] - k6 * y[5],
    ])
}

fn sigma(t: f64) -> f64 {
    let tl = (t / 3600.0) % 24.0;
    let (tr, ts) = (4.5, 19.5);
    if tl < tr || tl > ts {
        return 0.0;
    }
    let x = (2.0 * tl - tr - ts) / (ts - tr);
    0.5 + 0.5 * (PI * x.abs() * x).cos()
}

fn strat_f(t: f64, y: &Vector) -> Vector {
    let s = sigma(t);
    let k1 = 2.643e-10 * s * s * s;
    let k2 = 8.018e-17;
    let k3 = 6.120e-4 * s;
    let k4 = 1.576e-15;
    let k5 = 1.070e-3 * s * s;
    let k6 = 7.110e-11;
    let k7 = 1.200e-10;
    let k8 = 6.062e-15;
    let k9 = 1.069e-11;
    let k10 = 1.289e-2 * s;
    let [y1, y2, y3, y4, y5, y6] = [y[0], y[1], y[2], y[3], y[4], y[5]];
    Vector::from_vec(vec![
        k5 * y3 - k6 * y1 - k7 * y1 * y3,
        2.0 * k1 * y4 - k2 * y2 * y4 + k3 * y3 - k4 * y2 * y3 + k6 * y1 - k9 * y2 * y6 + k10 * y6,
        k2 * y2 * y4 - k3 * y3 - k4 * y2 * y3 - k5 * y3 - k7 * y1 * y3 - k8 * y3 * y5,
        -k1 * y4 - k2 * y2 * y4
            + k3 * y3
            + 2.0 * k4 * y2 * y3
            + k5 * y3
            + 2.0 * k7 * y1 * y3
            + k8 * y3 * y5
            + k9 * y2 * y6,
        -k8 * y3 * y5 + k9 * y2 * y6 + k10 * y6,
        k8 * y3 * y5 - k9 * y2 * y6 - k10 * y6,
    ])
}

/// Positive state with each component a random multiple in [0, 2) of `base`.
fn around(rng: &mut ChaCha8Rng, base: &[f64]) -> Vector {
    Vector::from_iterator(base.len(), base.iter().map(|b| b * rng.gen_range(0.0..2.0)))
}

fn rel_residual(a: &Matrix, y: &Vector, f: &Vector) -> f64 {
    let scale = f.amax().max((a.abs() * y.abs()).amax()).max(f64::MIN_POSITIVE);
    (a * y - f).amax() / scale
}

#[test]
fn robertson_matrix_reproduces_rhs() {
    let e = models::robertson();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let y = around(&mut rng, &[1.0, 1e-4, 0.5]);
        let a = e.problem.matrix(0.0, &y);
        assert!(rel_residual(&a, &y, &robertson_f(&y)) < 1e-14);
    }
}

#[test]
fn robertson_nonlap_reproduces_rhs_but_breaks_sign_pattern() {
    assert!(matches!(
        models::lookup("robertson-nonlap", false),
        Err(Error::Structure(_))
    ));
    let e = models::lookup("robertson-nonlap", true).unwrap();
    let y = Vector::from_vec(vec![0.9, 1e-5, 0.1]);
    let a = e.problem.matrix(0.0, &y);
    assert!(rel_residual(&a, &y, &robertson_f(&y)) < 1e-14);
    assert!(!validate_laplacian(&a, false, 1e-12).unwrap().ok);
}

#[test]
fn sir_matrix_reproduces_rhs() {
    for r0 in [0.5, 2.28, 10.0] {
        let e = models::sir(r0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let y = around(&mut rng, &[0.5, 0.3, 0.2]);
            let a = e.problem.matrix(0.0, &y);
            assert!(rel_residual(&a, &y, &sir_f(r0, &y)) < 1e-14);
        }
    }
    assert!(models::sir(0.0).is_err());
}

#[test]
fn mapk_matrix_reproduces_rhs_for_any_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for alpha in [0.0, 0.25, 0.5, 1.0] {
        let e = models::mapk(alpha).unwrap();
        for _ in 0..100 {
            let y = around(&mut rng, &models::MAPK_Y0);
            let a = e.problem.matrix(0.0, &y);
            assert!(rel_residual(&a, &y, &mapk_f(&y)) < 1e-14);
        }
    }
    assert!(models::mapk(1.5).is_err());
}

#[test]
fn mapk_conservation_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w1 = Vector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    let w2 = Vector::from_vec(vec![0.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
    for _ in 0..50 {
        let y = around(&mut rng, &models::MAPK_Y0);
        for alpha in [0.0, 0.4, 1.0] {
            let a = models::mapk_matrix(alpha, &y);
            let ay = &a * &y;
            assert!(w1.dot(&ay).abs() < 1e-13);
            assert!(w2.dot(&ay).abs() < 1e-13);
        }
        assert!((w1.transpose() * models::mapk_matrix(0.0, &y)).amax() < 1e-14);
        assert!((w2.transpose() * models::mapk_matrix(1.0, &y)).amax() < 1e-14);
        assert!((w2.transpose() * models::mapk_matrix(0.0, &y)).amax() > 1e-3);
        assert!((w1.transpose() * models::mapk_matrix(1.0, &y)).amax() > 1e-3);
    }
    let e = models::mapk(1.0).unwrap();
    assert_eq!(e.matrix_level_conservation, vec![false, true]);
    assert!(!e.strict());
}

#[test]
fn daylight_factor_matches_formula() {
    for hour in 0..(24 * 4) {
        let t = hour as f64 * 900.0 + 17.0;
        assert!((models::daylight_sigma(t) - sigma(t)).abs() < 1e-14, "t = {t}");
    }
    assert_eq!(models::daylight_sigma(2.0 * 3600.0), 0.0);
    assert!((models::daylight_sigma(12.0 * 3600.0) - 1.0).abs() < 1e-15);
}

#[test]
fn stratospheric_matrix_reproduces_rhs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = models::stratospheric();
    for _ in 0..200 {
        let t = rng.gen_range(e.problem.t0..e.problem.tf);
        let y = around(&mut rng, &models::STRATOSPHERIC_Y0);
        let a = e.problem.matrix(t, &y);
        assert!(rel_residual(&a, &y, &strat_f(t, &y)) < 1e-13, "t = {t}");
    }
}

#[test]
fn stratospheric_conservation_levels() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let e = models::stratospheric_one_hour();
    let w1 = &e.problem.conservation[0];
    let w2 = &e.problem.conservation[1];
    assert_eq!(e.matrix_level_conservation, vec![false, true]);
    let mut w1_matrix_defect: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.gen_range(e.problem.t0..e.problem.t0 + 86400.0);
        let y = around(&mut rng, &models::STRATOSPHERIC_Y0);
        let a = e.problem.matrix(t, &y);
        let ay = &a * &y;
        let scale = (a.abs() * y.abs()).amax();
        assert!(w1.w.dot(&ay).abs() <= 1e-12 * scale);
        assert!(w2.w.dot(&ay).abs() <= 1e-12 * scale);
        assert!(w2.left_residual(&a).amax() <= 1e-12 * a.amax());
        w1_matrix_defect = w1_matrix_defect.max(w1.left_residual(&a).amax());
    }
    assert!(w1_matrix_defect > 0.0);
}

fn assert_sign_pattern(e: &ModelCatalogEntry, base: &[f64], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t0, t1) = (e.problem.t0, e.problem.tf);
    for _ in 0..100 {
        let t = if t1 > t0 { rng.gen_range(t0..t1) } else { t0 };
        let y = around(&mut rng, base);
        let a = e.problem.matrix(t, &y);
        let report = validate_laplacian(&a, e.strict(), 1e-12).unwrap();
        assert!(report.ok, "{}: {}", e.id, report.summary());
    }
}

#[test]
fn catalog_models_have_laplacian_sign_pattern() {
    assert_sign_pattern(&models::robertson(), &[1.0, 1e-4, 0.5], 10);
    assert_sign_pattern(&models::sir(2.28).unwrap(), &[0.5, 0.3, 0.2], 11);
    assert_sign_pattern(&models::stratospheric(), &models::STRATOSPHERIC_Y0, 12);
    assert_sign_pattern(&models::mapk(1.0).unwrap(), &models::MAPK_Y0, 13);
    assert!(models::robertson().strict());
    assert!(!models::stratospheric().strict());
}

#[test]
fn catalog_ids_resolve() {
    for id in models::catalog_ids(false) {
        let e = models::lookup(id, false).unwrap();
        assert_eq!(e.id, id);
        e.problem.validate().unwrap();
    }
    assert!(models::catalog_ids(true).contains(&"robertson-nonlap"));
    assert!(!models::catalog_ids(false).contains(&"robertson-nonlap"));
    assert!(models::lookup("no-such-model", true).is_err());
}

#[test]
fn robertson_file_matches_catalog() {
    let loaded = load_problem(problem_file("robertson.json")).unwrap();
    let cat = models::robertson();
    assert!(loaded.strict());
    assert_eq!(loaded.problem.y0, cat.problem.y0);
    assert_eq!((loaded.problem.t0, loaded.problem.tf), (0.0, 0.3));
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..100 {
        let y = around(&mut rng, &[1.0, 1e-4, 0.5]);
        let a = loaded.problem.matrix(0.0, &y);
        let b = cat.problem.matrix(0.0, &y);
        assert!((&a - &b).amax() <= 1e-12 * b.amax(), "{a} vs {b}");
        let rhs = loaded.explicit_rhs.as_ref().unwrap().eval(0.0, &y);
        assert!(rel_residual(&a, &y, &rhs) < 1e-14);
    }
}

#[test]
fn sir_file_matches_catalog() {
    let loaded = load_problem(problem_file("sir.json")).unwrap();
    let cat = models::sir(2.28).unwrap();
    assert!(loaded.strict());
    assert_eq!(loaded.matrix_level_conservation, vec![true]);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let y = around(&mut rng, &[0.5, 0.3, 0.2]);
        assert_eq!(loaded.problem.matrix(0.0, &y), cat.problem.matrix(0.0, &y));
    }
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(load_problem(problem_file("absent.json")), Err(Error::Io(_))));
}

#[test]
fn schema_errors_name_the_location() {
    let bad_dim = r#"{"name": "x", "dim": 2, "y0": [1.0], "tspan": [0, 1],
        "system": {"kind": "matrix-template", "entries": []}}"#;
    match parse_problem(bad_dim) {
        Err(Error::Schema { location, .. }) => assert_eq!(location, "y0"),
        other => panic!("expected schema error, got {other:?}"),
    }
    let bad_powers = r#"{"name": "x", "dim": 2, "y0": [1.0, 0.0], "tspan": [0, 1],
        "system": {"kind": "matrix-template", "entries": [
            {"row": 1, "col": 0, "monomials": [{"coeff": 1.0, "powers": [1]}]}]}}"#;
    match parse_problem(bad_powers) {
        Err(Error::Schema { location, .. }) => assert!(location.contains("powers"), "{location}"),
        other => panic!("expected schema error, got {other:?}"),
    }
}
