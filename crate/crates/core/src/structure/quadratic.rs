use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::laplacian::{validate_laplacian, Matrix, Vector, DEFAULT_TOL};

/// Multi-index `e_i + e_j` of a quadratic monomial, stored with `i ≤ j`
/// (`i == j` is the square `y_i²`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair(usize, usize);

impl Pair {
    pub fn new(i: usize, j: usize) -> Self {
        if i <= j {
            Pair(i, j)
        } else {
            Pair(j, i)
        }
    }

    pub fn indices(&self) -> (usize, usize) {
        (self.0, self.1)
    }

    pub fn is_square(&self) -> bool {
        self.0 == self.1
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_square() {
            write!(f, "2e{}", self.0 + 1)
        } else {
            write!(f, "e{}+e{}", self.0 + 1, self.1 + 1)
        }
    }
}

/// `y_k' = Σ_ℓ b_{kℓ} y_ℓ + Σ_m a_k^m y^m` with `|m| = 2`.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    dim: usize,
    linear: Matrix,
    quad: BTreeMap<(usize, Pair), f64>,
}

impl QuadraticSystem {
    /// Purely quadratic system of dimension `dim`.
    pub fn new(dim: usize) -> Self {
        QuadraticSystem {
            dim,
            linear: Matrix::zeros(dim, dim),
            quad: BTreeMap::new(),
        }
    }

    /// Adds a linear part, which must be a strict graph Laplacian.
    pub fn with_linear(mut self, linear: Matrix) -> Result<Self> {
        if linear.nrows() != self.dim || linear.ncols() != self.dim {
            return Err(Error::Dimension(format!(
                "linear part is {}x{}, expected {}x{}",
                linear.nrows(),
                linear.ncols(),
                self.dim,
                self.dim
            )));
        }
        let report = validate_laplacian(&linear, true, DEFAULT_TOL)?;
        if !report.ok {
            return Err(Error::Structure(format!("linear part: {}", report.summary())));
        }
        self.linear = linear;
        Ok(self)
    }

    /// Sets `a_k^{e_i + e_j}` (0-based indices, any order of `i`, `j`).
    pub fn set(&mut self, k: usize, i: usize, j: usize, coeff: f64) -> Result<()> {
        let d = self.dim;
        if k >= d || i >= d || j >= d {
            return Err(Error::Dimension(format!(
                "index ({k}, {i}, {j}) out of range for dimension {d}"
            )));
        }
        if !coeff.is_finite() {
            return Err(Error::Domain(format!("coefficient for ({k}, {i}, {j}) is not finite")));
        }
        let key = (k, Pair::new(i, j));
        if coeff == 0.0 {
            self.quad.remove(&key);
        } else {
            self.quad.insert(key, coeff);
        }
        Ok(())
    }

    pub fn coeff(&self, k: usize, pair: Pair) -> f64 {
        self.quad.get(&(k, pair)).copied().unwrap_or(0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn linear(&self) -> &Matrix {
        &self.linear
    }

    /// Monomials with at least one nonzero coefficient.
    pub fn pairs(&self) -> Vec<Pair> {
        let mut v: Vec<Pair> = self.quad.keys().map(|(_, p)| *p).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Direct evaluation of the right-hand side.
    pub fn rhs(&self, y: &Vector) -> Vector {
        let mut f = &self.linear * y;
        for (&(k, Pair(i, j)), &a) in &self.quad {
            f[k] += a * y[i] * y[j];
        }
        f
    }
}

/// Which sign or balance condition a coefficient breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionFamily {
    /// Squares: `a_k^{2e_k} ≤ 0`, `a_k^{2e_i} ≥ 0` for `i ≠ k`.
    Squares,
    /// Cross terms: `a_k^{e_i+e_k} ≤ 0`, `a_k^{e_i+e_j} ≥ 0` for `k ∉ {i, j}`.
    CrossTerms,
    /// Balance: `Σ_k a_k^m = 0` for every monomial `m`.
    Balance,
}

impl fmt::Display for AssumptionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssumptionFamily::Squares => "square-term signs",
            AssumptionFamily::CrossTerms => "cross-term signs",
            AssumptionFamily::Balance => "coefficient balance",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionViolation {
    pub family: AssumptionFamily,
    /// Equation index (0-based); `None` for balance violations, which concern all equations.
    pub k: Option<usize>,
    pub monomial: Pair,
    pub value: f64,
}

impl fmt::Display for AssumptionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.k {
            Some(k) => write!(
                f,
                "{}: a_{}^{{{}}} = {:e}",
                self.family,
                k + 1,
                self.monomial,
                self.value
            ),
            None => write!(f, "{}: Σ_k a_k^{{{}}} = {:e}", self.family, self.monomial, self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub ok: bool,
    pub violations: Vec<AssumptionViolation>,
}

impl AssumptionReport {
    pub fn families(&self) -> Vec<AssumptionFamily> {
        let mut f: Vec<AssumptionFamily> = Vec::new();
        for v in &self.violations {
            if !f.contains(&v.family) {
                f.push(v.family);
            }
        }
        f
    }
}

/// Checks the sign and balance conditions under which the quadratic part
/// factors into a strict graph Laplacian. Balance is tested relative to the
/// largest coefficient of the same monomial.
pub fn check_quadratic_assumptions(s: &QuadraticSystem, tol: f64) -> AssumptionReport {
    let mut violations = Vec::new();
    for (&(k, pair), &a) in &s.quad {
        let (i, j) = pair.indices();
        let involved = k == i || k == j;
        let bad = if involved { a > 0.0 } else { a < 0.0 };
        if bad {
            violations.push(AssumptionViolation {
                family: if pair.is_square() {
                    AssumptionFamily::Squares
                } else {
                    AssumptionFamily::CrossTerms
                },
                k: Some(k),
                monomial: pair,
                value: a,
            });
        }
    }
    for pair in s.pairs() {
        let (sum, scale) = (0..s.dim).fold((0.0, 0.0f64), |(sum, scale), k| {
            let a = s.coeff(k, pair);
            (sum + a, scale.max(a.abs()))
        });
        if sum.abs() > tol * scale.max(1.0) {
            violations.push(AssumptionViolation {
                family: AssumptionFamily::Balance,
                k: None,
                monomial: pair,
                value: sum,
            });
        }
    }
    AssumptionReport {
        ok: violations.is_empty(),
        violations,
    }
}

/// Matrix builder `y ↦ A(y)` returned by the factorizers.
pub type StateMatrixFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// Builds `A(y)` with `A(y)y` equal to the right-hand side of `s` and `A(y)`
/// a strict graph Laplacian for every `y ⪰ 0`.
///
/// The square `y_ℓ²` goes to column `ℓ` with factor `y_ℓ`. A cross term
/// `y_i y_j` with coefficients `c` is split between column `i` (factor `y_j`)
/// and column `j` (factor `y_i`): `c_i` stays in column `i`, `c_j` in column
/// `j`, and the nonnegative remainder is shared in the ratio `c_i : c_j` so
/// both columns sum to zero. When only `c_i` is negative the whole term lands
/// in column `i`.
pub fn quadratic_laplacian(s: &QuadraticSystem) -> Result<StateMatrixFn> {
    let report = check_quadratic_assumptions(s, DEFAULT_TOL);
    if !report.ok {
        let fams: Vec<String> = report.families().iter().map(|f| f.to_string()).collect();
        return Err(Error::Structure(format!(
            "quadratic system violates {}: {}",
            fams.join(", "),
            report.violations[0]
        )));
    }
    let d = s.dim;
    // (column, factor index, coefficient vector over rows)
    let mut parts: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for pair in s.pairs() {
        let c: Vec<f64> = (0..d).map(|k| s.coeff(k, pair)).collect();
        let (i, j) = pair.indices();
        if i == j {
            parts.push((i, i, c));
            continue;
        }
        let (ci, cj) = (c[i], c[j]);
        let denom = ci + cj;
        let share_i = if denom < 0.0 { ci / denom } else { 0.5 };
        let mut u = vec![0.0; d];
        let mut v = vec![0.0; d];
        for k in 0..d {
            if k == i {
                u[k] = ci;
            } else if k == j {
                v[k] = cj;
            } else {
                u[k] = c[k] * share_i;
                v[k] = c[k] - u[k];
            }
        }
        parts.push((i, j, u));
        parts.push((j, i, v));
    }
    let linear = s.linear.clone();
    Ok(Arc::new(move |y: &Vector| {
        let mut a = linear.clone();
        for (col, factor, coeffs) in &parts {
            let yf = y[*factor];
            for (k, c) in coeffs.iter().enumerate() {
                a[(k, *col)] += c * yf;
            }
        }
        a
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::validate_laplacian;
    use nalgebra::{dmatrix, dvector};

    fn robertson_quadratic() -> QuadraticSystem {
        let mut s = QuadraticSystem::new(3);
        s.set(0, 1, 2, 1e4).unwrap();
        s.set(1, 1, 2, -1e4).unwrap();
        s.set(1, 1, 1, -3e7).unwrap();
        s.set(2, 1, 1, 3e7).unwrap();
        s
    }

    #[test]
    fn zero_system_is_ok_and_zero() {
        let s = QuadraticSystem::new(4);
        assert!(check_quadratic_assumptions(&s, 1e-12).ok);
        let a = quadratic_laplacian(&s).unwrap();
        assert_eq!(a(&dvector![1.0, 2.0, 3.0, 4.0]), Matrix::zeros(4, 4));
    }

    #[test]
    fn robertson_quadratic_part() {
        let s = robertson_quadratic();
        assert!(check_quadratic_assumptions(&s, 1e-12).ok);
        let a = quadratic_laplacian(&s).unwrap();
        let y = dvector![0.7, 2e-5, 0.3];
        let expected = dmatrix![
            0.0, 1e4 * y[2], 0.0;
            0.0, -3e7 * y[1] - 1e4 * y[2], 0.0;
            0.0, 3e7 * y[1], 0.0
        ];
        assert!((a(&y) - expected).abs().max() < 1e-9);
    }

    #[test]
    fn flipped_square_sign_is_reported() {
        let mut s = robertson_quadratic();
        s.set(1, 1, 1, 3e7).unwrap();
        let r = check_quadratic_assumptions(&s, 1e-12);
        assert!(!r.ok);
        assert!(r
            .violations
            .iter()
            .any(|v| v.family == AssumptionFamily::Squares && v.k == Some(1) && v.monomial == Pair::new(1, 1)));
        assert!(matches!(quadratic_laplacian(&s), Err(Error::Structure(_))));
    }

    #[test]
    fn both_cross_coefficients_negative() {
        let mut s = QuadraticSystem::new(3);
        s.set(0, 0, 1, -1.0).unwrap();
        s.set(1, 0, 1, -3.0).unwrap();
        s.set(2, 0, 1, 4.0).unwrap();
        let a = quadratic_laplacian(&s).unwrap();
        let y = dvector![0.2, 0.5, 0.3];
        let m = a(&y);
        assert!(validate_laplacian(&m, true, 1e-12).unwrap().ok);
        assert!((&m * &y - s.rhs(&y)).norm() < 1e-15);
    }

    #[test]
    fn linear_part_must_be_strict() {
        let bad = dmatrix![-1.0, 0.0; 0.5, 0.0];
        assert!(QuadraticSystem::new(2).with_linear(bad).is_err());
    }
}
