use crate::error::{Error, Result};
use crate::expm::ExpMode;
use crate::laplacian::{Vector, DEFAULT_TOL};

use super::method::MethodId;
use super::problem::OdeProblem;
use super::steppers::{step, StepConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub mode: ExpMode,
    /// Keep every `thin`-th state (the final state is always kept).
    pub thin: usize,
    /// Validate the sign pattern of every frozen matrix.
    pub check_structure: bool,
    /// Abort on an EM3 combination that is not a sign-Laplacian.
    pub strict_positivity: bool,
    pub max_steps: usize,
    pub tol: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            mode: ExpMode::Accurate,
            thin: 1,
            check_structure: true,
            strict_positivity: false,
            max_steps: 50_000_000,
            tol: DEFAULT_TOL,
        }
    }
}

impl IntegrateOptions {
    pub fn with_mode(mode: ExpMode) -> Self {
        IntegrateOptions {
            mode,
            ..Default::default()
        }
    }
}

/// Diagnostics recorded after each accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub min_component: f64,
    /// `1ᵀy_n − 1ᵀy_0`.
    pub mass_drift: f64,
    /// `w_ℓᵀy_n − w_ℓᵀy_0` for every declared conservation vector.
    pub invariant_drifts: Vec<f64>,
    pub combination_not_laplacian: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub steps: usize,
    pub exponentials: usize,
    /// `max_n |1ᵀy_n − 1ᵀy_0|`.
    pub max_mass_drift: f64,
    /// Smallest component over all steps (including the initial state).
    pub global_min_component: f64,
    /// First step whose state had a component below `-tol`.
    pub first_negative_step: Option<usize>,
    /// `max_n |w_ℓᵀy_n − w_ℓᵀy_0|` per conservation vector.
    pub max_invariant_drift: Vec<f64>,
    pub flagged_steps: usize,
    /// Step at which the state became non-finite, if it did; integration stops there.
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: MethodId,
    pub mode: ExpMode,
    pub h: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    /// One entry per accepted step (not thinned).
    pub diagnostics: Vec<StepDiagnostics>,
    pub summary: TrajectorySummary,
}

impl Trajectory {
    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory always holds the initial time")
    }
}

/// Number of steps of size `h` covering `span`, the last possibly shorter.
pub fn step_count(span: f64, h: f64) -> usize {
    if span <= 0.0 {
        return 0;
    }
    let q = span / h;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.max(1.0) {
        r as usize
    } else {
        q.ceil() as usize
    }
}

const NEGATIVE_TOL: f64 = 1e-12;

/// Fixed-step integration over `[p.t0, p.tf]`; the last step is shortened to
/// land exactly on `tf`.
pub fn integrate(p: &OdeProblem, method: MethodId, h: f64, opts: &IntegrateOptions) -> Result<Trajectory> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("step size must be positive and finite, got {h}")));
    }
    let span = p.tf - p.t0;
    if !(span >= 0.0) {
        return Err(Error::Domain(format!("time span [{}, {}] is not ordered", p.t0, p.tf)));
    }
    let n_steps = step_count(span, h);
    if n_steps > opts.max_steps {
        return Err(Error::Domain(format!(
            "{n_steps} steps exceed the budget of {}",
            opts.max_steps
        )));
    }
    let cfg = StepConfig {
        mode: opts.mode,
        check_structure: opts.check_structure,
        strict_positivity: opts.strict_positivity,
        tol: opts.tol,
    };
    let thin = opts.thin.max(1);

    let mass0 = p.y0.sum();
    let inv0: Vec<f64> = p.conservation.iter().map(|w| w.value(&p.y0)).collect();
    let min0 = p.y0.iter().copied().fold(f64::INFINITY, f64::min);

    let mut summary = TrajectorySummary {
        steps: 0,
        exponentials: 0,
        max_mass_drift: 0.0,
        global_min_component: min0,
        first_negative_step: None,
        max_invariant_drift: vec![0.0; inv0.len()],
        flagged_steps: 0,
        diverged_at: None,
    };
    let mut times = vec![p.t0];
    let mut states = vec![p.y0.clone()];
    let mut diagnostics = Vec::with_capacity(n_steps);

    let mut y = p.y0.clone();
    let mut t = p.t0;
    for k in 0..n_steps {
        let t_next = if k + 1 == n_steps {
            p.tf
        } else {
            p.t0 + (k + 1) as f64 * h
        };
        let dt = t_next - t;
        let r = step(method, p, t, &y, dt, &cfg).map_err(|e| Error::Step {
            step: k + 1,
            t,
            source: Box::new(e),
        })?;
        y = r.y_next;
        t = t_next;
        summary.steps = k + 1;
        summary.exponentials += r.exponentials_used;

        if y.iter().any(|v| !v.is_finite()) {
            summary.diverged_at = Some(k + 1);
            summary.global_min_component = f64::NEG_INFINITY;
            summary.first_negative_step.get_or_insert(k + 1);
            times.push(t);
            states.push(y);
            break;
        }

        let min_c = y.iter().copied().fold(f64::INFINITY, f64::min);
        let mass_drift = y.sum() - mass0;
        let drifts: Vec<f64> = p
            .conservation
            .iter()
            .zip(&inv0)
            .map(|(w, i0)| w.value(&y) - i0)
            .collect();
        summary.global_min_component = summary.global_min_component.min(min_c);
        if min_c < -NEGATIVE_TOL && summary.first_negative_step.is_none() {
            summary.first_negative_step = Some(k + 1);
        }
        summary.max_mass_drift = summary.max_mass_drift.max(mass_drift.abs());
        for (m, d) in summary.max_invariant_drift.iter_mut().zip(&drifts) {
            *m = m.max(d.abs());
        }
        if r.combination_not_laplacian {
            summary.flagged_steps += 1;
        }
        diagnostics.push(StepDiagnostics {
            step: k + 1,
            t,
            min_component: min_c,
            mass_drift,
            invariant_drifts: drifts,
            combination_not_laplacian: r.combination_not_laplacian,
        });
        if (k + 1) % thin == 0 || k + 1 == n_steps {
            times.push(t);
            states.push(y.clone());
        }
    }

    Ok(Trajectory {
        method,
        mode: opts.mode,
        h,
        times,
        states,
        diagnostics,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_lands_on_end() {
        assert_eq!(step_count(0.0, 0.1), 0);
        assert_eq!(step_count(0.3, 0.3 / 2048.0), 2048);
        assert_eq!(step_count(1.0, 0.3), 4);
        assert_eq!(step_count(1.0, 0.1), 10);
    }
}
