use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::laplacian::{validate_laplacian, ConservationVector, Matrix, Vector, DEFAULT_TOL};

/// `A(t, y)` of `y' = A(t, y) y`.
pub type MatrixFn = Arc<dyn Fn(f64, &Vector) -> Matrix + Send + Sync>;

/// An initial-value problem `y' = A(t, y) y`, `y(t0) = y0`.
#[derive(Clone)]
pub struct OdeProblem {
    pub name: String,
    pub y0: Vector,
    pub t0: f64,
    pub tf: f64,
    pub conservation: Vec<ConservationVector>,
    /// `A` does not depend on `t`.
    pub autonomous: bool,
    /// `A(t, y)` has zero column sums, so `1ᵀy` is conserved.
    pub strict: bool,
    /// Relative tolerance for the structure checks.
    pub tol: f64,
    matrix_fn: MatrixFn,
}

impl fmt::Debug for OdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("t0", &self.t0)
            .field("tf", &self.tf)
            .field("autonomous", &self.autonomous)
            .field("strict", &self.strict)
            .finish_non_exhaustive()
    }
}

impl OdeProblem {
    pub fn new<F>(name: impl Into<String>, y0: Vector, t0: f64, tf: f64, matrix_fn: F) -> Self
    where
        F: Fn(f64, &Vector) -> Matrix + Send + Sync + 'static,
    {
        OdeProblem {
            name: name.into(),
            y0,
            t0,
            tf,
            conservation: Vec::new(),
            autonomous: true,
            strict: false,
            tol: DEFAULT_TOL,
            matrix_fn: Arc::new(matrix_fn),
        }
    }

    pub fn from_shared(name: impl Into<String>, y0: Vector, t0: f64, tf: f64, matrix_fn: MatrixFn) -> Self {
        OdeProblem {
            name: name.into(),
            y0,
            t0,
            tf,
            conservation: Vec::new(),
            autonomous: true,
            strict: false,
            tol: DEFAULT_TOL,
            matrix_fn,
        }
    }

    pub fn autonomous(mut self, autonomous: bool) -> Self {
        self.autonomous = autonomous;
        self
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn with_conservation(mut self, w: ConservationVector) -> Self {
        self.conservation.push(w);
        self
    }

    pub fn with_span(mut self, t0: f64, tf: f64) -> Self {
        self.t0 = t0;
        self.tf = tf;
        self
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn matrix_fn(&self) -> &MatrixFn {
        &self.matrix_fn
    }

    pub fn matrix(&self, t: f64, y: &Vector) -> Matrix {
        (self.matrix_fn)(t, y)
    }

    /// `f(t, y) = A(t, y) y`.
    pub fn rhs(&self, t: f64, y: &Vector) -> Vector {
        self.matrix(t, y) * y
    }

    /// Checks the declared invariants at `(t0, y0)`.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::Dimension("problem has dimension zero".into()));
        }
        if !(self.t0 <= self.tf) {
            return Err(Error::Domain(format!(
                "time span [{}, {}] is not ordered",
                self.t0, self.tf
            )));
        }
        if self.y0.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("initial state must be finite and nonnegative".into()));
        }
        for w in &self.conservation {
            if w.w.len() != n {
                return Err(Error::Dimension(format!(
                    "conservation vector '{}' has length {}, expected {n}",
                    w.label,
                    w.w.len()
                )));
            }
        }
        let a = self.matrix(self.t0, &self.y0);
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "matrix function returned {}x{}, expected {n}x{n}",
                a.nrows(),
                a.ncols()
            )));
        }
        let report = validate_laplacian(&a, self.strict, self.tol)?;
        if !report.ok {
            return Err(Error::Structure(format!(
                "A(t0, y0) of '{}': {}",
                self.name,
                report.summary()
            )));
        }
        Ok(())
    }
}
