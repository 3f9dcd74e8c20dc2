use laplace_ode::models::ModelCatalogEntry;
use laplace_ode::Trajectory;
use serde::Serialize;

use crate::format::{fmt_f64, Csv};

/// Components below `-POSITIVITY_TOL` count as a positivity violation.
pub const POSITIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Preserved,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Positivity {
    pub verdict: Verdict,
    pub min_component: f64,
    pub first_violating_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub label: String,
    pub initial: f64,
    pub max_drift: f64,
    /// `max_drift / |initial|`, or the absolute drift when the initial value is zero.
    pub max_relative_drift: f64,
    /// Whether `wᵀA(t, y) = 0` holds identically, when the model says.
    pub matrix_level: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub model: String,
    pub method: String,
    pub mode: String,
    pub h: f64,
    pub t0: f64,
    pub tf: f64,
    pub steps: usize,
    pub exponentials: usize,
    pub final_time: f64,
    pub final_state: Vec<f64>,
    pub max_mass_drift: f64,
    pub positivity: Positivity,
    pub invariants: Vec<InvariantReport>,
    pub flagged_steps: usize,
    pub diverged_at: Option<usize>,
}

impl RunReport {
    pub fn new(entry: &ModelCatalogEntry, traj: &Trajectory) -> Self {
        let p = &entry.problem;
        let s = &traj.summary;
        let min = s.global_min_component;
        let violated = !(min >= -POSITIVITY_TOL);
        let invariants = p
            .conservation
            .iter()
            .zip(&s.max_invariant_drift)
            .enumerate()
            .map(|(i, (w, &d))| {
                let initial = w.value(&p.y0);
                InvariantReport {
                    label: w.label.clone(),
                    initial,
                    max_drift: d,
                    max_relative_drift: if initial != 0.0 { d / initial.abs() } else { d },
                    matrix_level: entry.matrix_level_conservation.get(i).copied(),
                }
            })
            .collect();
        RunReport {
            model: entry.id.clone(),
            method: traj.method.name().into(),
            mode: traj.mode.name().into(),
            h: traj.h,
            t0: p.t0,
            tf: p.tf,
            steps: s.steps,
            exponentials: s.exponentials,
            final_time: traj.final_time(),
            final_state: traj.final_state().iter().copied().collect(),
            max_mass_drift: s.max_mass_drift,
            positivity: Positivity {
                verdict: if violated {
                    Verdict::Violated
                } else {
                    Verdict::Preserved
                },
                min_component: min,
                first_violating_step: if violated { s.first_negative_step } else { None },
            },
            invariants,
            flagged_steps: s.flagged_steps,
            diverged_at: s.diverged_at,
        }
    }

    pub fn summary_line(&self) -> String {
        let mut line = format!(
            "{} {} h={} steps={} positivity={} min={} mass_drift={}",
            self.model,
            self.method,
            fmt_f64(self.h),
            self.steps,
            match self.positivity.verdict {
                Verdict::Preserved => "preserved",
                Verdict::Violated => "violated",
            },
            fmt_f64(self.positivity.min_component),
            fmt_f64(self.max_mass_drift)
        );
        if let Some(k) = self.positivity.first_violating_step {
            line.push_str(&format!(" first_violation={k}"));
        }
        for inv in &self.invariants {
            line.push_str(&format!(" {}_rel_drift={}", inv.label, fmt_f64(inv.max_relative_drift)));
        }
        line
    }
}

/// `t, y1..yd, mass, min_comp, drift_<label>...` for every stored state.
pub fn trajectory_csv(entry: &ModelCatalogEntry, traj: &Trajectory) -> String {
    let p = &entry.problem;
    let mut header = vec!["t".to_string()];
    header.extend((1..=p.dim()).map(|i| format!("y{i}")));
    header.extend(["mass", "min_comp"].map(String::from));
    header.extend(p.conservation.iter().map(|w| format!("drift_{}", w.label)));
    let inv0: Vec<f64> = p.conservation.iter().map(|w| w.value(&p.y0)).collect();
    let mut csv = Csv::new(&header);
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![*t];
        row.extend(y.iter().copied());
        row.push(y.sum());
        row.push(y.iter().copied().fold(f64::INFINITY, f64::min));
        row.extend(p.conservation.iter().zip(&inv0).map(|(w, i0)| w.value(y) - i0));
        csv.push_numbers(row);
    }
    csv.as_str().to_string()
}

/// `step, t, mass_drift, drift_<label>...` for every step, starting from the initial state.
pub fn invariants_csv(entry: &ModelCatalogEntry, traj: &Trajectory) -> String {
    let p = &entry.problem;
    let mut header = vec!["step".to_string(), "t".into(), "mass_drift".into()];
    header.extend(p.conservation.iter().map(|w| format!("drift_{}", w.label)));
    let mut csv = Csv::new(&header);
    let mut first = vec![0.0, p.t0, 0.0];
    first.extend(p.conservation.iter().map(|_| 0.0));
    csv.push_numbers(first);
    for d in &traj.diagnostics {
        let mut row = vec![d.step as f64, d.t, d.mass_drift];
        row.extend(d.invariant_drifts.iter().copied());
        csv.push_numbers(row);
    }
    csv.as_str().to_string()
}
