//! Graph-Laplacian matrices: validation, shift decomposition and the
//! column-disc bound used to locate the spectrum.
//!
//! A graph Laplacian here is a square real matrix with nonnegative
//! off-diagonal entries and nonpositive diagonal (the sign pattern), and,
//! when `strict`, zero column sums. The sign pattern alone already makes
//! `e^{tA}` entrywise nonnegative; zero column sums add conservation of
//! `1ᵀy`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative tolerance for the sign and column-sum checks.
pub const DEFAULT_TOL: f64 = 1e-12;

pub(crate) fn ensure_square(m: &Matrix, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::Domain(format!(
                    "{what}: non-finite entry {} at ({r}, {c})",
                    m[(r, c)]
                )));
            }
        }
    }
    Ok(())
}

/// Largest absolute column sum.
pub fn norm1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// One failed condition in a [`ValidationReport`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Negative off-diagonal entry.
    OffDiagonal {
        row: usize,
        col: usize,
        value: f64,
    },
    /// Positive diagonal entry.
    Diagonal {
        index: usize,
        value: f64,
    },
    /// Column whose entries do not sum to zero.
    ColumnSum {
        col: usize,
        sum: f64,
    },
    NonFinite {
        row: usize,
        col: usize,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::OffDiagonal { row, col, value } => {
                write!(f, "off-diagonal entry ({row}, {col}) = {value:e} < 0")
            }
            Violation::Diagonal { index, value } => {
                write!(f, "diagonal entry ({index}, {index}) = {value:e} > 0")
            }
            Violation::ColumnSum { col, sum } => write!(f, "column {col} sums to {sum:e}"),
            Violation::NonFinite { row, col } => write!(f, "non-finite entry at ({row}, {col})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    /// Absolute threshold actually applied: `tol · (1 + max column 1-norm)`.
    pub threshold: f64,
}

impl ValidationReport {
    /// Largest violation magnitude, zero when valid.
    pub fn worst(&self) -> f64 {
        self.violations
            .iter()
            .map(|v| match v {
                Violation::OffDiagonal { value, .. } | Violation::Diagonal { value, .. } => value.abs(),
                Violation::ColumnSum { sum, .. } => sum.abs(),
                Violation::NonFinite { .. } => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    pub fn sign_ok(&self) -> bool {
        !self.violations.iter().any(|v| {
            matches!(
                v,
                Violation::OffDiagonal { .. } | Violation::Diagonal { .. } | Violation::NonFinite { .. }
            )
        })
    }

    pub fn summary(&self) -> String {
        if self.ok {
            return "ok".to_string();
        }
        let parts: Vec<String> = self.violations.iter().take(4).map(|v| v.to_string()).collect();
        let more = self.violations.len().saturating_sub(4);
        if more > 0 {
            format!("{} (+{more} more)", parts.join("; "))
        } else {
            parts.join("; ")
        }
    }
}

/// Checks the sign pattern and, when `strict`, zero column sums.
///
/// Both checks use the absolute threshold `tol · (1 + max column 1-norm)`.
pub fn validate_laplacian(m: &Matrix, strict: bool, tol: f64) -> Result<ValidationReport> {
    let n = ensure_square(m, "validate_laplacian")?;
    if !(tol >= 0.0) {
        return Err(Error::Domain(format!("tolerance must be nonnegative, got {tol}")));
    }
    let mut violations = Vec::new();
    for c in 0..n {
        for r in 0..n {
            if !m[(r, c)].is_finite() {
                violations.push(Violation::NonFinite { row: r, col: c });
            }
        }
    }
    if !violations.is_empty() {
        return Ok(ValidationReport {
            ok: false,
            violations,
            threshold: f64::NAN,
        });
    }
    let threshold = tol * (1.0 + norm1(m));
    for c in 0..n {
        for r in 0..n {
            let v = m[(r, c)];
            if r == c {
                if v > threshold {
                    violations.push(Violation::Diagonal { index: r, value: v });
                }
            } else if v < -threshold {
                violations.push(Violation::OffDiagonal {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
    }
    if strict {
        for c in 0..n {
            let sum: f64 = m.column(c).iter().sum();
            if sum.abs() > threshold {
                violations.push(Violation::ColumnSum { col: c, sum });
            }
        }
    }
    Ok(ValidationReport {
        ok: violations.is_empty(),
        violations,
        threshold,
    })
}

/// A matrix that passed [`validate_laplacian`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    matrix: Matrix,
    strict: bool,
    tol: f64,
}

impl GraphLaplacian {
    pub fn new(matrix: Matrix, strict: bool, tol: f64) -> Result<Self> {
        let report = validate_laplacian(&matrix, strict, tol)?;
        if !report.ok {
            return Err(Error::Structure(report.summary()));
        }
        Ok(GraphLaplacian { matrix, strict, tol })
    }

    /// Sign pattern and zero column sums, default tolerance.
    pub fn strict(matrix: Matrix) -> Result<Self> {
        Self::new(matrix, true, DEFAULT_TOL)
    }

    /// Sign pattern only, default tolerance.
    pub fn sign_only(matrix: Matrix) -> Result<Self> {
        Self::new(matrix, false, DEFAULT_TOL)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `A = a_star·I + a_tilde` with `a_star` the smallest diagonal entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDecomposition {
    pub a_star: f64,
    pub a_tilde: Matrix,
}

impl ShiftDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.a_tilde.nrows();
        &self.a_tilde + Matrix::identity(n, n) * self.a_star
    }
}

pub fn shift_decompose(m: &Matrix) -> Result<ShiftDecomposition> {
    let n = ensure_square(m, "shift_decompose")?;
    let a_star = (0..n).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min);
    let a_star = if n == 0 { 0.0 } else { a_star };
    let mut a_tilde = m.clone();
    for i in 0..n {
        a_tilde[(i, i)] -= a_star;
    }
    Ok(ShiftDecomposition { a_star, a_tilde })
}

/// Radius of the smallest origin-centred disc containing every Gerschgorin
/// column disc: `max_ℓ |m[ℓ][ℓ]| + Σ_{k≠ℓ} |m[k][ℓ]|`.
pub fn gerschgorin_column_bound(m: &Matrix) -> Result<f64> {
    ensure_square(m, "gerschgorin_column_bound")?;
    Ok(norm1(m))
}

/// Nonnegative, nonzero weight vector `w` of a linear invariant `wᵀy`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationVector {
    pub w: Vector,
    pub label: String,
}

impl ConservationVector {
    pub fn new(label: impl Into<String>, w: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(format!(
                "conservation vector '{label}' must be finite and nonnegative"
            )));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::Domain(format!("conservation vector '{label}' is zero")));
        }
        Ok(ConservationVector {
            w: Vector::from_vec(w),
            label,
        })
    }

    /// Total mass `1ᵀy` in dimension `n`.
    pub fn ones(n: usize) -> Self {
        ConservationVector {
            w: Vector::from_element(n, 1.0),
            label: "mass".to_string(),
        }
    }

    pub fn value(&self, y: &Vector) -> f64 {
        self.w.dot(y)
    }

    /// `wᵀm`, zero exactly when the invariant holds at matrix level.
    pub fn left_residual(&self, m: &Matrix) -> Vector {
        (self.w.transpose() * m).transpose()
    }
}

/// Random graph Laplacian with off-diagonal rates in `[0, 1)` kept with
/// probability `density`. `strict` sets the diagonal to minus the column sum;
/// otherwise an extra nonnegative loss is added to each diagonal entry.
pub fn random_laplacian<R: Rng + ?Sized>(rng: &mut R, n: usize, density: f64, symmetric: bool, strict: bool) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            if r == c || (symmetric && r > c) {
                continue;
            }
            if rng.gen::<f64>() < density {
                let v = rng.gen::<f64>();
                m[(r, c)] = v;
                if symmetric {
                    m[(c, r)] = v;
                }
            }
        }
    }
    for c in 0..n {
        let off: f64 = (0..n).filter(|&r| r != c).map(|r| m[(r, c)]).sum();
        m[(c, c)] = -off;
        if !strict {
            m[(c, c)] -= rng.gen::<f64>();
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn robertson_matrix(y: [f64; 3]) -> Matrix {
        dmatrix![
            -0.04, 1e4 * y[2], 0.0;
            0.04, -3e7 * y[1] - 1e4 * y[2], 0.0;
            0.0, 3e7 * y[1], 0.0
        ]
    }

    #[test]
    fn two_by_two_strict_is_valid() {
        let m = dmatrix![-1.0, 2.0; 1.0, -2.0];
        let r = validate_laplacian(&m, true, 1e-12).unwrap();
        assert!(r.ok, "{}", r.summary());
    }

    #[test]
    fn robertson_at_initial_state_is_strict() {
        let r = validate_laplacian(&robertson_matrix([1.0, 0.0, 0.0]), true, 1e-12).unwrap();
        assert!(r.ok);
    }

    #[test]
    fn robertson_alternative_form_fails_sign_pattern() {
        let y = [0.5, 0.1, 0.4];
        let m = dmatrix![
            -0.04, 0.0, 1e4 * y[1];
            0.04, -3e7 * y[1], -1e4 * y[1];
            0.0, 3e7 * y[1], 0.0
        ];
        let r = validate_laplacian(&m, false, 1e-12).unwrap();
        assert!(!r.ok);
        assert_eq!(
            r.violations,
            vec![Violation::OffDiagonal {
                row: 1,
                col: 2,
                value: -1e3
            }]
        );
    }

    #[test]
    fn column_sum_violation_only_in_strict_mode() {
        let m = dmatrix![-2.0, 0.0; 1.0, 0.0];
        assert!(validate_laplacian(&m, false, 1e-12).unwrap().ok);
        let r = validate_laplacian(&m, true, 1e-12).unwrap();
        assert_eq!(r.violations, vec![Violation::ColumnSum { col: 0, sum: -1.0 }]);
    }

    #[test]
    fn non_square_is_dimension_error() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(validate_laplacian(&m, true, 1e-12), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_finite_entries_are_reported() {
        let m = dmatrix![f64::NAN, 0.0; 0.0, 0.0];
        let r = validate_laplacian(&m, false, 1e-12).unwrap();
        assert_eq!(r.violations, vec![Violation::NonFinite { row: 0, col: 0 }]);
    }

    #[test]
    fn shift_of_zero_matrix() {
        let s = shift_decompose(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(s.a_star, 0.0);
        assert_eq!(s.a_tilde, Matrix::zeros(3, 3));
    }

    #[test]
    fn shift_of_small_laplacian() {
        let s = shift_decompose(&dmatrix![-1.0, 2.0; 1.0, -2.0]).unwrap();
        assert_eq!(s.a_star, -2.0);
        assert_eq!(s.a_tilde, dmatrix![1.0, 2.0; 1.0, 0.0]);
    }

    #[test]
    fn shift_of_robertson_matrix() {
        // min(-0.04, -3e7*1e-5 - 1e4*1e-2, 0) = -400
        let s = shift_decompose(&robertson_matrix([1.0, 1e-5, 1e-2])).unwrap();
        assert!((s.a_star + 400.0).abs() < 1e-12);
        assert!(s.a_tilde.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn gerschgorin_examples() {
        assert_eq!(gerschgorin_column_bound(&Matrix::zeros(2, 2)).unwrap(), 0.0);
        assert_eq!(gerschgorin_column_bound(&dmatrix![-1.0, 2.0; 1.0, -2.0]).unwrap(), 4.0);
        // SIR at I = 0.5, R0 = 2.28: columns (−1.14, 1.14, 0), (0, −1, 1), 0.
        let (r0, i) = (2.28, 0.5);
        let sir = dmatrix![
            -r0 * i, 0.0, 0.0;
            r0 * i, -1.0, 0.0;
            0.0, 1.0, 0.0
        ];
        assert!((gerschgorin_column_bound(&sir).unwrap() - 2.28).abs() < 1e-15);
    }

    #[test]
    fn conservation_vector_rejects_bad_weights() {
        assert!(ConservationVector::new("neg", vec![1.0, -1.0]).is_err());
        assert!(ConservationVector::new("zero", vec![0.0, 0.0]).is_err());
        let w = ConservationVector::new("w", vec![0.0, 2.0]).unwrap();
        assert_eq!(w.value(&Vector::from_vec(vec![3.0, 4.0])), 8.0);
    }

    #[test]
    fn random_strict_laplacians_have_zero_column_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 0..1000 {
            let n = 2 + k % 19;
            let m = random_laplacian(&mut rng, n, 0.6, k % 2 == 0, true);
            let r = validate_laplacian(&m, true, DEFAULT_TOL).unwrap();
            assert!(r.ok, "n={n}: {}", r.summary());
            let ones = Vector::from_element(n, 1.0);
            let sums = m.transpose() * ones;
            assert!(sums.amax() <= DEFAULT_TOL * (1.0 + norm1(&m)));
        }
    }

    #[test]
    fn random_laplacian_spectrum_in_left_half_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for k in 0..200 {
            let n = 2 + k % 19;
            let m = random_laplacian(&mut rng, n, 0.7, false, true);
            let eig = m.complex_eigenvalues();
            let max_re = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            assert!(max_re.abs() < 1e-8, "largest real part {max_re}");
            assert!(eig.iter().all(|z| z.re <= 1e-8));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shift_reconstructs(seed in any::<u64>(), n in 1usize..15) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_laplacian(&mut rng, n, 0.5, false, seed % 2 == 0);
                let s = shift_decompose(&m).unwrap();
                let diff = (s.reconstruct() - &m).amax();
                prop_assert!(diff <= 4.0 * f64::EPSILON * m.amax());
                prop_assert!(s.a_tilde.iter().all(|v| *v >= 0.0));
            }
        }
    }
}
