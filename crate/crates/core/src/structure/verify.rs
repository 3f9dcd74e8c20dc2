use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::laplacian::{Matrix, Vector};

/// Where `verify_representation` draws its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDomain {
    /// Times are drawn uniformly from `[t_range.0, t_range.1]`.
    pub t_range: (f64, f64),
    /// Per-component magnitudes; a point `u` of the unit simplex becomes `scale ∘ u · dim`.
    pub scale: Vector,
}

impl SampleDomain {
    pub fn unit(dim: usize) -> Self {
        SampleDomain {
            t_range: (0.0, 0.0),
            scale: Vector::from_element(dim, 1.0),
        }
    }

    pub fn with_times(mut self, t0: f64, t1: f64) -> Self {
        self.t_range = (t0, t1);
        self
    }

    /// Scales each component by the magnitude of `y`, with a floor for zero entries.
    pub fn around(y: &Vector) -> Self {
        let top = y.amax().max(f64::MIN_POSITIVE);
        SampleDomain {
            t_range: (0.0, 0.0),
            scale: y.map(|v| v.abs().max(1e-6 * top)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationReport {
    /// `max ‖A(t, y)y − f(t, y)‖ / (1 + ‖f(t, y)‖)`.
    pub max_residual: f64,
    pub worst_t: f64,
    pub worst_y: Vector,
    pub samples: usize,
}

impl RepresentationReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

/// Compares `A(t, y)y` with `f(t, y)` at random nonnegative states.
pub fn verify_representation<F, A>(
    f: F,
    a: A,
    domain: &SampleDomain,
    samples: usize,
    seed: u64,
) -> Result<RepresentationReport>
where
    F: Fn(f64, &Vector) -> Vector,
    A: Fn(f64, &Vector) -> Matrix,
{
    let n = domain.scale.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = RepresentationReport {
        max_residual: 0.0,
        worst_t: domain.t_range.0,
        worst_y: Vector::zeros(n),
        samples,
    };
    for _ in 0..samples {
        let y = sample_simplex(&mut rng, n).component_mul(&domain.scale) * n as f64;
        let (t0, t1) = domain.t_range;
        let t = if t1 > t0 { rng.gen_range(t0..=t1) } else { t0 };
        let fv = f(t, &y);
        let m = a(t, &y);
        if fv.len() != n || m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension(format!(
                "f has length {}, A is {}x{}, samples have length {n}",
                fv.len(),
                m.nrows(),
                m.ncols()
            )));
        }
        let res = (&m * &y - &fv).norm() / (1.0 + fv.norm());
        if res > report.max_residual || res.is_nan() {
            report.max_residual = if res.is_nan() { f64::INFINITY } else { res };
            report.worst_t = t;
            report.worst_y = y;
        }
    }
    Ok(report)
}

/// Uniform point on the unit simplex.
pub fn sample_simplex<R: Rng>(rng: &mut R, n: usize) -> Vector {
    let e = Vector::from_fn(n, |_, _| -(1.0 - rng.gen::<f64>()).ln());
    let s = e.sum();
    e / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn exact_representation_has_tiny_residual() {
        let a = |_t: f64, y: &Vector| dmatrix![-y[1], 0.0; y[1], 0.0];
        let f = |t: f64, y: &Vector| a(t, y) * y;
        let r = verify_representation(f, a, &SampleDomain::unit(2), 100, 1).unwrap();
        assert!(r.max_residual <= 1e-13);
    }

    #[test]
    fn corrupted_entry_is_flagged() {
        let a = |_t: f64, y: &Vector| dmatrix![-y[1], 0.0; y[1], 0.0];
        let bad = |_t: f64, y: &Vector| dmatrix![-y[1], 0.5; y[1], 0.0];
        let f = |t: f64, y: &Vector| a(t, y) * y;
        let r = verify_representation(f, bad, &SampleDomain::unit(2), 100, 1).unwrap();
        assert!(r.max_residual > 1e-3);
        assert!(!r.ok(1e-12));
    }

    #[test]
    fn simplex_samples_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u = sample_simplex(&mut rng, 5);
            assert!((u.sum() - 1.0).abs() < 1e-14);
            assert!(u.iter().all(|v| *v >= 0.0));
        }
    }
}
