use laplace_ode::models::{ModelCatalogEntry, ReferenceControls};
use laplace_ode::{integrate, Error, ExpMode, IntegrateOptions, MethodId, OdeProblem, Trajectory, Vector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::format::{fmt_f64, Csv};

/// Points with an error within this factor of the reference floor are left out of the fit.
pub const FLOOR_MARGIN: f64 = 100.0;

/// 2-norm of `y − y_ref` over selected components, optionally relative to `‖y_ref‖`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorNorm {
    /// Zero-based component indices; `None` uses all of them.
    pub components: Option<Vec<usize>>,
    pub relative: bool,
}

impl ErrorNorm {
    pub fn from_controls(c: &ReferenceControls) -> Self {
        ErrorNorm {
            components: c.components.clone(),
            relative: c.relative_error,
        }
    }

    pub fn check(&self, dim: usize) -> Result<(), CliError> {
        match &self.components {
            Some(c) if c.is_empty() => Err(CliError::Usage("component selection is empty".into())),
            Some(c) => match c.iter().find(|&&i| i >= dim) {
                Some(i) => Err(CliError::Usage(format!(
                    "component {} is out of range for dimension {dim}",
                    i + 1
                ))),
                None => Ok(()),
            },
            None => Ok(()),
        }
    }

    pub fn distance(&self, y: &Vector, y_ref: &Vector) -> f64 {
        let all: Vec<usize>;
        let idx = match &self.components {
            Some(c) => c.as_slice(),
            None => {
                all = (0..y_ref.len()).collect();
                &all
            }
        };
        let (mut d2, mut r2) = (0.0, 0.0);
        for &i in idx {
            d2 += (y[i] - y_ref[i]).powi(2);
            r2 += y_ref[i] * y_ref[i];
        }
        if self.relative && r2 > 0.0 {
            (d2 / r2).sqrt()
        } else {
            d2.sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSpec {
    pub method: String,
    pub h: f64,
    /// Distance between the reference and the same method at `2h`.
    pub floor: f64,
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub spec: ReferenceSpec,
    pub state: Vector,
}

fn final_only(opts: &IntegrateOptions) -> IntegrateOptions {
    IntegrateOptions {
        thin: usize::MAX,
        ..*opts
    }
}

/// Final state of `method` at step `h` in accurate mode, plus its floor estimate.
pub fn compute_reference(
    problem: &OdeProblem,
    method: MethodId,
    h: f64,
    opts: &IntegrateOptions,
    norm: &ErrorNorm,
) -> Result<Reference, CliError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(CliError::Usage(format!("reference step must be positive, got {h}")));
    }
    let opts = IntegrateOptions {
        mode: ExpMode::Accurate,
        strict_positivity: false,
        ..final_only(opts)
    };
    let (fine, coarse) = rayon::join(
        || integrate(problem, method, h, &opts),
        || integrate(problem, method, 2.0 * h, &opts),
    );
    let fine = fine.map_err(CliError::Reference)?;
    let coarse = coarse.map_err(CliError::Reference)?;
    for t in [&fine, &coarse] {
        if let Some(k) = t.summary.diverged_at {
            return Err(CliError::Reference(Error::Solve(format!(
                "{method} at h = {} became non-finite at step {k}",
                t.h
            ))));
        }
    }
    let state = fine.final_state().clone();
    Ok(Reference {
        spec: ReferenceSpec {
            method: method.name().into(),
            h,
            floor: norm.distance(coarse.final_state(), &state),
        },
        state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    Diverged,
    StabilityRegion,
    StructureError,
    SolverError,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Diverged => "diverged",
            CellStatus::StabilityRegion => "stability-region",
            CellStatus::StructureError => "structure-error",
            CellStatus::SolverError => "solver-error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub steps: usize,
    pub error: f64,
    pub min_component: f64,
    /// `max_n |1ᵀy_n − 1ᵀy_0|`.
    pub mass_drift: f64,
    /// `max_n |w_ℓᵀy_n − w_ℓᵀy_0|`, in declaration order.
    pub invariant_drifts: Vec<f64>,
    pub first_negative_step: Option<usize>,
    pub flagged_steps: usize,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub in_fit: bool,
}

impl ConvergenceRow {
    fn from_run(h: f64, run: Result<Trajectory, Error>, reference: &Reference, norm: &ErrorNorm, n_inv: usize) -> Self {
        match run {
            Ok(t) => {
                let s = &t.summary;
                let status = if s.diverged_at.is_some() {
                    CellStatus::Diverged
                } else {
                    CellStatus::Ok
                };
                let error = if status == CellStatus::Ok {
                    norm.distance(t.final_state(), &reference.state)
                } else {
                    f64::INFINITY
                };
                ConvergenceRow {
                    h,
                    steps: s.steps,
                    error,
                    min_component: s.global_min_component,
                    mass_drift: s.max_mass_drift,
                    invariant_drifts: s.max_invariant_drift.clone(),
                    first_negative_step: s.first_negative_step,
                    flagged_steps: s.flagged_steps,
                    status,
                    message: None,
                    in_fit: false,
                }
            }
            Err(e) => {
                let status = match e.root() {
                    Error::StabilityRegion(_) => CellStatus::StabilityRegion,
                    Error::Structure(_) => CellStatus::StructureError,
                    _ => CellStatus::SolverError,
                };
                ConvergenceRow {
                    h,
                    steps: 0,
                    error: f64::NAN,
                    min_component: f64::NAN,
                    mass_drift: f64::NAN,
                    invariant_drifts: vec![f64::NAN; n_inv],
                    first_negative_step: None,
                    flagged_steps: 0,
                    status,
                    message: Some(e.to_string()),
                    in_fit: false,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub model: String,
    pub method: String,
    pub mode: String,
    pub invariant_labels: Vec<String>,
    /// Sorted by decreasing `h`.
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log h` over rows marked `in_fit`.
    pub fitted_order: Option<f64>,
    pub fit_points: usize,
    pub reference: ReferenceSpec,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = ["h", "steps", "error", "min_component", "mass_drift"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.invariant_labels.iter().map(|l| format!("drift_{l}")));
        header.extend(["first_negative_step", "flagged_steps", "status", "in_fit"].map(String::from));
        let mut csv = Csv::new(&header);
        for r in &self.rows {
            let mut f: Vec<String> = [r.h, r.steps as f64, r.error, r.min_component, r.mass_drift]
                .into_iter()
                .map(fmt_f64)
                .collect();
            f.extend(r.invariant_drifts.iter().map(|&d| fmt_f64(d)));
            f.push(r.first_negative_step.map(|k| k.to_string()).unwrap_or_default());
            f.push(r.flagged_steps.to_string());
            f.push(r.status.name().into());
            f.push(r.in_fit.to_string());
            csv.push_fields(f);
        }
        csv.as_str().to_string()
    }

    /// Whether any row dropped below `-tol` or diverged.
    pub fn any_negative(&self) -> bool {
        self.rows.iter().any(|r| r.first_negative_step.is_some())
    }
}

/// Marks rows above `FLOOR_MARGIN · floor` and fits their log-log slope.
pub fn fit_order(rows: &mut [ConvergenceRow], floor: f64) -> (Option<f64>, usize) {
    let cut = FLOOR_MARGIN * floor;
    let mut pts = Vec::new();
    for r in rows.iter_mut() {
        r.in_fit = r.status == CellStatus::Ok && r.error.is_finite() && r.error > cut && r.error > 0.0;
        if r.in_fit {
            pts.push((r.h.ln(), r.error.ln()));
        }
    }
    (least_squares_slope(&pts), pts.len())
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `h0 · 2^{-j}` for `j = 0..=levels`.
pub fn dyadic_grid(h0: f64, levels: usize) -> Result<Vec<f64>, CliError> {
    if !(h0 > 0.0) || !h0.is_finite() {
        return Err(CliError::Usage(format!(
            "empty step grid: h0 must be positive, got {h0}"
        )));
    }
    Ok((0..=levels).map(|j| h0 / f64::powi(2.0, j as i32)).collect())
}

/// Default reference step: the catalog value when finer than the grid, else `h_min/64`.
pub fn default_reference_h(controls: &ReferenceControls, hs: &[f64]) -> f64 {
    let h_min = hs.iter().copied().fold(f64::INFINITY, f64::min);
    match controls.reference_h {
        Some(h) if h < h_min => h,
        _ => h_min / 64.0,
    }
}

/// Runs every `(method, h)` cell in parallel and assembles one table per method.
pub fn convergence_tables(
    entry: &ModelCatalogEntry,
    reference: &Reference,
    methods: &[MethodId],
    hs: &[f64],
    opts: &IntegrateOptions,
    norm: &ErrorNorm,
) -> Vec<ConvergenceTable> {
    let mut hs = hs.to_vec();
    hs.sort_by(|a, b| b.total_cmp(a));
    hs.dedup();
    let p = &entry.problem;
    let n_inv = p.conservation.len();
    let opts = final_only(opts);
    let cells: Vec<(MethodId, f64)> = methods.iter().flat_map(|&m| hs.iter().map(move |&h| (m, h))).collect();
    let rows: Vec<ConvergenceRow> = cells
        .par_iter()
        .map(|&(m, h)| ConvergenceRow::from_run(h, integrate(p, m, h, &opts), reference, norm, n_inv))
        .collect();
    rows.chunks(hs.len().max(1))
        .zip(methods)
        .map(|(chunk, &m)| {
            let mut rows = chunk.to_vec();
            let (fitted_order, fit_points) = fit_order(&mut rows, reference.spec.floor);
            ConvergenceTable {
                model: entry.id.clone(),
                method: m.name().into(),
                mode: opts.mode.name().into(),
                invariant_labels: p.conservation.iter().map(|w| w.label.clone()).collect(),
                rows,
                fitted_order,
                fit_points,
                reference: reference.spec.clone(),
            }
        })
        .collect()
}

/// Combined output of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub model: String,
    /// One-based component indices entering the error, or all.
    pub components: Option<Vec<usize>>,
    pub relative_error: bool,
    pub reference: ReferenceSpec,
    pub tables: Vec<ConvergenceTable>,
}

impl ConvergenceStudy {
    pub fn new(
        entry: &ModelCatalogEntry,
        norm: &ErrorNorm,
        reference: &Reference,
        tables: Vec<ConvergenceTable>,
    ) -> Self {
        ConvergenceStudy {
            model: entry.id.clone(),
            components: norm.components.as_ref().map(|c| c.iter().map(|i| i + 1).collect()),
            relative_error: norm.relative,
            reference: reference.spec.clone(),
            tables,
        }
    }

    pub fn table(&self, method: MethodId) -> Option<&ConvergenceTable> {
        self.tables.iter().find(|t| t.method == method.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn row(h: f64, error: f64) -> ConvergenceRow {
        ConvergenceRow {
            h,
            steps: 1,
            error,
            min_component: 0.0,
            mass_drift: 0.0,
            invariant_drifts: vec![],
            first_negative_step: None,
            flagged_steps: 0,
            status: CellStatus::Ok,
            message: None,
            in_fit: false,
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let mut rows: Vec<ConvergenceRow> = (0..6)
            .map(|j| {
                let h = 0.1 / 2f64.powi(j);
                row(h, 3.0 * h * h)
            })
            .collect();
        let (p, n) = fit_order(&mut rows, 0.0);
        assert_eq!(n, 6);
        assert!((p.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn floor_points_are_excluded() {
        let mut rows = vec![
            row(0.4, 1.6e-1),
            row(0.2, 4e-2),
            row(0.1, 1e-2),
            row(0.05, 1e-9),
            row(0.025, 1e-9),
        ];
        let (p, n) = fit_order(&mut rows, 1e-10);
        assert_eq!(n, 3);
        assert!((p.unwrap() - 2.0).abs() < 1e-12);
        assert!(!rows[3].in_fit && !rows[4].in_fit);
    }

    #[test]
    fn single_point_gives_no_order() {
        let mut rows = vec![row(0.1, 1e-3)];
        assert_eq!(fit_order(&mut rows, 0.0), (None, 1));
    }

    #[test]
    fn relative_norm_on_a_subset() {
        let n = ErrorNorm {
            components: Some(vec![1, 2]),
            relative: true,
        };
        let d = n.distance(&dvector![9.0, 3.0, 4.0], &dvector![0.0, 0.0, 5.0]);
        assert!((d - (9.0f64 + 1.0).sqrt() / 5.0).abs() < 1e-15);
        let a = ErrorNorm {
            components: None,
            relative: false,
        };
        assert_eq!(a.distance(&dvector![3.0, 4.0], &dvector![0.0, 0.0]), 5.0);
        assert!(n.check(2).is_err());
    }

    #[test]
    fn grid_is_dyadic_and_rejects_nonpositive_h0() {
        assert_eq!(dyadic_grid(1.0, 2).unwrap(), vec![1.0, 0.5, 0.25]);
        assert!(matches!(dyadic_grid(0.0, 3), Err(CliError::Usage(_))));
    }
}
