use laplace_ode::laplacian::validate_laplacian;
use laplace_ode::structure::{
    check_quadratic_assumptions, mass_action_laplacian, quadratic_laplacian, random_quadratic_system,
    random_reaction_network, sample_simplex, verify_representation, AssumptionFamily, QuadraticSystem, Rate,
    ReactionNetwork, SampleDomain,
};
use laplace_ode::{models, Error, Matrix, Vector};
use nalgebra::dmatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 200;

/// Orthonormal basis of `{w : wᵀS = 0}` from the SVD of `Sᵀ`.
fn left_null_space(s: &Matrix) -> Vec<Vector> {
    let m = s.nrows();
    let st = s.transpose();
    // pad so the SVD returns a full set of right singular vectors
    let mut padded = Matrix::zeros(st.nrows().max(m), m);
    padded.view_mut((0, 0), (st.nrows(), m)).copy_from(&st);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let top = svd.singular_values.max().max(1.0);
    (0..m)
        .filter(|&k| svd.singular_values[k] <= 1e-10 * top)
        .map(|k| v_t.row(k).transpose())
        .collect()
}

#[test]
fn quadratic_factorizer_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(7001);
    let mut worst: f64 = 0.0;
    for n in 0..INSTANCES {
        let s = random_quadratic_system(&mut rng, 6);
        assert!(check_quadratic_assumptions(&s, 1e-12).ok, "instance {n}");
        let a = quadratic_laplacian(&s).unwrap();
        let d = s.dim();
        for _ in 0..10 {
            let y = sample_simplex(&mut rng, d) * rng.gen_range(0.1..10.0);
            let m = a(&y);
            let report = validate_laplacian(&m, true, 1e-12).unwrap();
            assert!(report.ok, "instance {n}: {}", report.summary());
        }
        let report = verify_representation(
            |_t, y: &Vector| s.rhs(y),
            |_t, y: &Vector| a(y),
            &SampleDomain::unit(d),
            20,
            n as u64,
        )
        .unwrap();
        worst = worst.max(report.max_residual);
        assert!(report.ok(1e-12), "instance {n}: residual {:e}", report.max_residual);
    }
    println!("quadratic factorizer: {INSTANCES} instances, worst residual {worst:e}");
}

#[test]
fn mass_action_factorizer_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(7002);
    let mut worst: f64 = 0.0;
    for n in 0..INSTANCES {
        let m = rng.gen_range(1..=5);
        let count = rng.gen_range(1..=6);
        let net = random_reaction_network(&mut rng, m, count);
        let l = mass_action_laplacian(&net).unwrap();
        for _ in 0..10 {
            let t = rng.gen_range(0.0..10.0);
            let y = sample_simplex(&mut rng, m) * rng.gen_range(0.1..10.0);
            let report = validate_laplacian(&l(t, &y), false, 1e-12).unwrap();
            assert!(report.ok, "instance {n}: {}", report.summary());
        }
        let report = verify_representation(
            |t, y: &Vector| net.rhs(t, y),
            |t, y: &Vector| l(t, y),
            &SampleDomain::unit(m).with_times(0.0, 10.0),
            20,
            n as u64,
        )
        .unwrap();
        worst = worst.max(report.max_residual);
        assert!(report.ok(1e-12), "instance {n}: residual {:e}", report.max_residual);
    }
    println!("mass-action factorizer: {INSTANCES} instances, worst residual {worst:e}");
}

#[test]
fn mass_action_respects_every_conservation_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(7003);
    let mut checked = 0;
    for _ in 0..INSTANCES {
        let m = rng.gen_range(2..=5);
        let count = rng.gen_range(1..m);
        let net = random_reaction_network(&mut rng, m, count);
        let s = net.stoichiometry();
        let l = mass_action_laplacian(&net).unwrap();
        let basis = left_null_space(&s);
        assert!(
            !basis.is_empty(),
            "fewer reactions than species leaves a conservation law"
        );
        for w in &basis {
            assert!((w.transpose() * &s).amax() < 1e-10);
            for _ in 0..10 {
                let t = rng.gen_range(0.0..10.0);
                let y = sample_simplex(&mut rng, m) * rng.gen_range(0.1..10.0);
                let lt = l(t, &y);
                let ly = &lt * &y;
                let scale = 1.0 + (lt.abs() * &y).amax();
                assert!(w.dot(&ly).abs() <= 1e-12 * scale);
            }
            checked += 1;
        }
    }
    assert!(checked >= INSTANCES);
}

fn robertson_network() -> ReactionNetwork {
    let mut net = ReactionNetwork::new(vec!["A".into(), "B".into(), "C".into()]).unwrap();
    net.add_named(&[("A", 1)], &[("B", 1)], Rate::Constant(0.04)).unwrap();
    net.add_named(&[("B", 2)], &[("B", 1), ("C", 1)], Rate::Constant(3e7))
        .unwrap();
    net.add_named(&[("B", 1), ("C", 1)], &[("A", 1), ("C", 1)], Rate::Constant(1e4))
        .unwrap();
    net
}

fn robertson_quadratic() -> QuadraticSystem {
    let linear = dmatrix![-0.04, 0.0, 0.0; 0.04, 0.0, 0.0; 0.0, 0.0, 0.0];
    let mut s = QuadraticSystem::new(3).with_linear(linear).unwrap();
    s.set(0, 1, 2, 1e4).unwrap();
    s.set(1, 1, 2, -1e4).unwrap();
    s.set(1, 1, 1, -3e7).unwrap();
    s.set(2, 1, 1, 3e7).unwrap();
    s
}

#[test]
fn robertson_round_trips_through_both_factorizers() {
    let cat = models::robertson();
    let quad = quadratic_laplacian(&robertson_quadratic()).unwrap();
    let mass = mass_action_laplacian(&robertson_network()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7004);
    for _ in 0..100 {
        let y = sample_simplex(&mut rng, 3);
        let expected = cat.problem.matrix(0.0, &y);
        let tol = 1e-15 * expected.amax();
        assert!(
            (quad(&y) - &expected).amax() <= tol,
            "quadratic: {} vs {expected}",
            quad(&y)
        );
        assert!(
            (mass(0.0, &y) - &expected).amax() <= tol,
            "mass action: {} vs {expected}",
            mass(0.0, &y)
        );
    }
}

#[test]
fn broken_assumptions_are_named() {
    let mut s = robertson_quadratic();
    s.set(0, 1, 1, -1.0).unwrap();
    let report = check_quadratic_assumptions(&s, 1e-12);
    assert!(report.families().contains(&AssumptionFamily::Squares));
    assert!(report.families().contains(&AssumptionFamily::Balance));
    assert!(matches!(quadratic_laplacian(&s), Err(Error::Structure(_))));

    let mut s = robertson_quadratic();
    s.set(0, 1, 2, -1e4).unwrap();
    let report = check_quadratic_assumptions(&s, 1e-12);
    assert!(report.families().contains(&AssumptionFamily::CrossTerms));
}

#[test]
fn representation_check_catches_wrong_factorization() {
    let cat = models::robertson();
    let f = |_t: f64, y: &Vector| cat.problem.rhs(0.0, y);
    let wrong = |_t: f64, y: &Vector| {
        let mut m = cat.problem.matrix(0.0, y);
        m[(0, 1)] *= 1.001;
        m
    };
    let domain = SampleDomain::around(&Vector::from_vec(vec![1.0, 1e-4, 0.5]));
    let report = verify_representation(f, wrong, &domain, 50, 9).unwrap();
    assert!(!report.ok(1e-12));
    assert!(report.worst_y.iter().all(|v| *v >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn single_conversion_is_strict(k in 0.0f64..100.0, y0 in 0.0f64..10.0, y1 in 0.0f64..10.0) {
        let mut net = ReactionNetwork::new(vec!["X".into(), "Y".into()]).unwrap();
        net.add(vec![1, 0], vec![0, 1], Rate::Constant(k)).unwrap();
        let l = mass_action_laplacian(&net).unwrap()(0.0, &Vector::from_vec(vec![y0, y1]));
        prop_assert!(validate_laplacian(&l, true, 1e-12).unwrap().ok);
    }

    #[test]
    fn dimerization_factorizes_on_the_boundary(k in 0.01f64..100.0, y0 in 0.0f64..10.0) {
        let mut net = ReactionNetwork::new(vec!["X".into(), "D".into()]).unwrap();
        net.add(vec![2, 0], vec![0, 1], Rate::Constant(k)).unwrap();
        let y = Vector::from_vec(vec![y0, 0.0]);
        let l = mass_action_laplacian(&net).unwrap()(0.0, &y);
        prop_assert!(l.iter().all(|v| v.is_finite()));
        prop_assert!(validate_laplacian(&l, false, 1e-12).unwrap().ok);
        let f = net.rhs(0.0, &y);
        prop_assert!((&l * &y - &f).amax() <= 1e-12 * (1.0 + f.amax()));
    }
}
