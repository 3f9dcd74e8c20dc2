use std::sync::Arc;

use nalgebra::dmatrix;

use crate::error::{Error, Result};
use crate::integrators::OdeProblem;
use crate::laplacian::{ConservationVector, GraphLaplacian, Matrix, Vector};

/// Suggested settings for convergence studies on a catalog model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceControls {
    /// Coarsest step of the dyadic sweep.
    pub h0: f64,
    /// Number of halvings after `h0`.
    pub levels: usize,
    /// Components entering the error norm (`None` = all).
    pub components: Option<Vec<usize>>,
    /// Relative (`true`) or absolute 2-norm error.
    pub relative_error: bool,
    /// Reference step; `None` means `h_min/64`.
    pub reference_h: Option<f64>,
}

/// A named benchmark problem.
#[derive(Debug, Clone)]
pub struct ModelCatalogEntry {
    pub id: String,
    pub description: String,
    pub problem: OdeProblem,
    pub reference: ReferenceControls,
    /// For each conservation vector: whether `wᵀA(t, y) = 0` holds at matrix level.
    pub matrix_level_conservation: Vec<bool>,
    /// The right-hand side in its original (non-factored) form, when known.
    pub explicit_rhs: Option<ExplicitRhs>,
}

/// `f(t, y)` written independently of any matrix factorization.
#[derive(Clone)]
pub struct ExplicitRhs(pub Arc<dyn Fn(f64, &Vector) -> Vector + Send + Sync>);

impl ExplicitRhs {
    pub fn eval(&self, t: f64, y: &Vector) -> Vector {
        (self.0)(t, y)
    }
}

impl std::fmt::Debug for ExplicitRhs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ExplicitRhs(..)")
    }
}

impl ModelCatalogEntry {
    pub fn strict(&self) -> bool {
        self.problem.strict
    }
}

/// Ids of the models available by name. `robertson-nonlap` is only listed on request.
pub fn catalog_ids(include_nonlaplacian: bool) -> Vec<&'static str> {
    let mut ids = vec!["robertson", "sir", "stratospheric", "stratospheric-1h", "mapk"];
    if include_nonlaplacian {
        ids.push("robertson-nonlap");
    }
    ids
}

/// Looks up a catalog model by id (`mapk` uses α = 1, `sir` uses R₀ = 2.28).
pub fn lookup(id: &str, allow_nonlaplacian: bool) -> Result<ModelCatalogEntry> {
    match id {
        "robertson" => Ok(robertson()),
        "robertson-nonlap" if allow_nonlaplacian => Ok(robertson_nonlap()),
        "robertson-nonlap" => Err(Error::Structure(
            "robertson-nonlap is not a graph Laplacian; pass the non-Laplacian opt-in".into(),
        )),
        "sir" => sir(DEFAULT_R0),
        "stratospheric" => Ok(stratospheric()),
        "stratospheric-1h" => Ok(stratospheric_one_hour()),
        "mapk" => mapk(1.0),
        other => Err(Error::Domain(format!("unknown model '{other}'"))),
    }
}

pub const DEFAULT_R0: f64 = 2.28;

fn robertson_matrix(y: &Vector) -> Matrix {
    dmatrix![
        -0.04, 1e4 * y[2], 0.0;
        0.04, -3e7 * y[1] - 1e4 * y[2], 0.0;
        0.0, 3e7 * y[1], 0.0
    ]
}

/// Robertson's stiff three-species reaction in its graph-Laplacian form.
pub fn robertson() -> ModelCatalogEntry {
    let problem = OdeProblem::new(
        "robertson",
        Vector::from_vec(vec![1.0, 0.0, 0.0]),
        0.0,
        0.3,
        |_t, y: &Vector| robertson_matrix(y),
    )
    .strict(true)
    .with_conservation(ConservationVector::ones(3));
    ModelCatalogEntry {
        id: "robertson".into(),
        description: "Robertson reaction, graph-Laplacian factorization".into(),
        problem,
        reference: ReferenceControls {
            h0: 0.3 / 256.0,
            levels: 6,
            components: None,
            relative_error: true,
            reference_h: None,
        },
        matrix_level_conservation: vec![true],
        explicit_rhs: None,
    }
}

/// Same right-hand side with the `y₂y₃` terms factored through column 3,
/// which breaks the sign pattern.
pub fn robertson_nonlap() -> ModelCatalogEntry {
    let problem = OdeProblem::new(
        "robertson-nonlap",
        Vector::from_vec(vec![1.0, 0.0, 0.0]),
        0.0,
        0.3,
        |_t, y: &Vector| {
            dmatrix![
                -0.04, 0.0, 1e4 * y[1];
                0.04, -3e7 * y[1], -1e4 * y[1];
                0.0, 3e7 * y[1], 0.0
            ]
        },
    )
    .with_conservation(ConservationVector::ones(3));
    ModelCatalogEntry {
        id: "robertson-nonlap".into(),
        description: "Robertson reaction, factorization that is not a graph Laplacian".into(),
        problem,
        reference: ReferenceControls {
            h0: 0.3 / 256.0,
            levels: 6,
            components: None,
            relative_error: true,
            reference_h: None,
        },
        matrix_level_conservation: vec![false],
        explicit_rhs: None,
    }
}

/// SIR epidemic model with reproduction number `r0`, `y = (S, I, R)`.
pub fn sir(r0: f64) -> Result<ModelCatalogEntry> {
    sir_with_initial(r0, [0.99, 0.01, 0.0])
}

/// SIR with a custom initial state, normalized so that `S + I + R = 1`.
pub fn sir_with_initial(r0: f64, y0: [f64; 3]) -> Result<ModelCatalogEntry> {
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::Domain(format!("R0 must be positive, got {r0}")));
    }
    let total: f64 = y0.iter().sum();
    if !(total > 0.0) || y0.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain(
            "SIR initial state must be nonnegative and nonzero".into(),
        ));
    }
    let y0 = Vector::from_iterator(3, y0.iter().map(|v| v / total));
    let problem = OdeProblem::new("sir", y0, 0.0, 10.0, move |_t, y: &Vector| {
        let inf = r0 * y[1];
        dmatrix![
            -inf, 0.0, 0.0;
            inf, -1.0, 0.0;
            0.0, 1.0, 0.0
        ]
    })
    .strict(true)
    .with_conservation(ConservationVector::ones(3));
    Ok(ModelCatalogEntry {
        id: "sir".into(),
        description: format!("SIR epidemic model, R0 = {r0}"),
        problem,
        reference: ReferenceControls {
            h0: 0.5,
            levels: 6,
            components: None,
            relative_error: true,
            reference_h: None,
        },
        matrix_level_conservation: vec![true],
        explicit_rhs: None,
    })
}

const SECONDS_PER_HOUR: f64 = 3600.0;
const SUNRISE: f64 = 4.5;
const SUNSET: f64 = 19.5;

/// Daylight factor: `½ + ½cos(π|x|x)` with `x = (2T_L − T_R − T_S)/(T_S − T_R)`
/// while `T_R ≤ T_L ≤ T_S`, zero at night. `T_L` is the local hour.
pub fn daylight_sigma(t: f64) -> f64 {
    let local = (t / SECONDS_PER_HOUR).rem_euclid(24.0);
    if !(SUNRISE..=SUNSET).contains(&local) {
        return 0.0;
    }
    let x = (2.0 * local - SUNRISE - SUNSET) / (SUNSET - SUNRISE);
    0.5 + 0.5 * (std::f64::consts::PI * x.abs() * x).cos()
}

/// Rate constants `k₁ … k₁₀` of the stratospheric mechanism at time `t`.
pub fn stratospheric_rates(t: f64) -> [f64; 10] {
    let s = daylight_sigma(t);
    [
        2.643e-10 * s * s * s,
        8.018e-17,
        6.120e-4 * s,
        1.576e-15,
        1.070e-3 * s * s,
        7.110e-11,
        1.200e-10,
        6.062e-15,
        1.069e-11,
        1.289e-2 * s,
    ]
}

/// The chosen factorization of the stratospheric mechanism. Species order:
/// O¹ᴰ, O, O₃, O₂, NO, NO₂.
pub fn stratospheric_matrix(t: f64, y: &Vector) -> Matrix {
    let [k1, k2, k3, k4, k5, k6, k7, k8, k9, k10] = stratospheric_rates(t);
    let gamma = k3 + k5 + k4 * y[1] + k7 * y[0] + k8 * y[4];
    dmatrix![
        -(k6 + k7 * y[2]), 0.0, k5, 0.0, 0.0, 0.0;
        k6, -(k2 * y[3] + k4 * y[2] + k9 * y[5]), k3, 2.0 * k1, 0.0, k10;
        0.0, k2 * y[3] / 3.0, -gamma, 2.0 * k2 * y[1] / 3.0, 0.0, 0.0;
        0.5 * k7 * y[2], k4 * y[2] + 0.5 * k9 * y[5], gamma + 0.5 * k7 * y[0], -(k1 + k2 * y[1]), 0.0, 0.5 * k9 * y[1];
        0.0, 0.0, 0.0, 0.0, -k8 * y[2], k10 + k9 * y[1];
        0.0, 0.0, 0.0, 0.0, k8 * y[2], -(k10 + k9 * y[1])
    ]
}

pub const STRATOSPHERIC_Y0: [f64; 6] = [9.906e1, 6.624e8, 5.326e11, 1.697e16, 8.725e8, 2.240e8];

/// Stratospheric O/NO chemistry with diurnal photolysis, three days from noon.
pub fn stratospheric() -> ModelCatalogEntry {
    stratospheric_span("stratospheric", 72.0 * SECONDS_PER_HOUR)
}

/// The one-hour variant used for convergence studies.
pub fn stratospheric_one_hour() -> ModelCatalogEntry {
    stratospheric_span("stratospheric-1h", SECONDS_PER_HOUR)
}

fn stratospheric_span(id: &str, duration: f64) -> ModelCatalogEntry {
    let t0 = 12.0 * SECONDS_PER_HOUR;
    let problem = OdeProblem::new(
        id,
        Vector::from_row_slice(&STRATOSPHERIC_Y0),
        t0,
        t0 + duration,
        stratospheric_matrix,
    )
    .autonomous(false)
    .with_conservation(ConservationVector::new("oxygen", vec![1.0, 1.0, 3.0, 2.0, 1.0, 2.0]).expect("valid weights"))
    .with_conservation(ConservationVector::new("nitrogen", vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]).expect("valid weights"));
    ModelCatalogEntry {
        id: id.into(),
        description: "stratospheric reaction mechanism (molecules/cm³, seconds)".into(),
        problem,
        reference: ReferenceControls {
            h0: 600.0,
            levels: 6,
            components: Some(vec![2, 3, 4, 5]),
            relative_error: true,
            reference_h: None,
        },
        matrix_level_conservation: vec![false, true],
        explicit_rhs: None,
    }
}

pub const MAPK_RATES: [f64; 7] = [100.0 / 3.0, 1.0 / 3.0, 50.0, 0.5, 10.0 / 3.0, 0.1, 0.7];
pub const MAPK_Y0: [f64; 6] = [0.1, 0.175, 0.15, 1.15, 0.81, 0.5];

/// `A(α, y)` of the MAPK-type oscillator.
pub fn mapk_matrix(alpha: f64, y: &Vector) -> Matrix {
    let [k1, k2, k3, k4, k5, k6, k7] = MAPK_RATES;
    dmatrix![
        -k7 - k1 * y[1], 0.0, 0.0, k2, 0.0, k6;
        0.0, -k1 * y[0], k5, 0.0, 0.0, 0.0;
        0.0, 0.0, -k3 * y[0] - k5, k2, k4, 0.0;
        (1.0 - alpha) * k1 * y[1], alpha * k1 * y[0], 0.0, -k2, 0.0, 0.0;
        0.0, 0.0, k3 * y[0], 0.0, -k4, 0.0;
        k7, 0.0, 0.0, 0.0, 0.0, -k6
    ]
}

/// MAPK-type oscillator; `alpha ∈ [0, 1]` selects how the `y₁y₂` term is factored.
pub fn mapk(alpha: f64) -> Result<ModelCatalogEntry> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let problem = OdeProblem::new(
        "mapk",
        Vector::from_row_slice(&MAPK_Y0),
        0.0,
        200.0,
        move |_t, y: &Vector| mapk_matrix(alpha, y),
    )
    .with_conservation(ConservationVector::new("w1", vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).expect("valid weights"))
    .with_conservation(ConservationVector::new("w2", vec![0.0, 1.0, 1.0, 1.0, 1.0, 0.0]).expect("valid weights"));
    Ok(ModelCatalogEntry {
        id: "mapk".into(),
        description: format!("MAPK-type oscillator, alpha = {alpha}"),
        problem,
        reference: ReferenceControls {
            h0: 0.025,
            levels: 5,
            components: None,
            relative_error: true,
            reference_h: Some(5e-4),
        },
        matrix_level_conservation: vec![alpha == 0.0, alpha == 1.0],
        explicit_rhs: None,
    })
}

/// Linear autonomous dynamics `y' = L y` for a fixed Laplacian.
pub fn constant_laplacian(m: GraphLaplacian, y0: Vector, tf: f64) -> Result<ModelCatalogEntry> {
    if y0.len() != m.dim() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, matrix is {}x{}",
            y0.len(),
            m.dim(),
            m.dim()
        )));
    }
    let strict = m.is_strict();
    let n = m.dim();
    let matrix = m.into_matrix();
    let mut problem =
        OdeProblem::new("constant-laplacian", y0, 0.0, tf, move |_t, _y: &Vector| matrix.clone()).strict(strict);
    if strict {
        problem = problem.with_conservation(ConservationVector::ones(n));
    }
    Ok(ModelCatalogEntry {
        id: "constant-laplacian".into(),
        description: format!("constant {n}x{n} graph Laplacian"),
        problem,
        reference: ReferenceControls {
            h0: tf.max(f64::MIN_POSITIVE) / 8.0,
            levels: 4,
            components: None,
            relative_error: true,
            reference_h: None,
        },
        matrix_level_conservation: vec![strict],
        explicit_rhs: None,
    })
}
