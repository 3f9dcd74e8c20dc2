use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::catalog::{daylight_sigma, ExplicitRhs, ModelCatalogEntry, ReferenceControls};
use crate::error::{Error, Result};
use crate::integrators::{MatrixFn, OdeProblem};
use crate::laplacian::{validate_laplacian, ConservationVector, Matrix, Vector, DEFAULT_TOL};
use crate::structure::{mass_action_laplacian, sample_simplex, Rate, ReactionNetwork};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    name: String,
    dim: usize,
    #[serde(default = "default_true")]
    autonomous: bool,
    y0: Vec<f64>,
    tspan: [f64; 2],
    #[serde(default)]
    conservation: Vec<ConservationSpec>,
    system: SystemSpec,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConservationSpec {
    label: String,
    w: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum SystemSpec {
    MatrixTemplate {
        entries: Vec<EntrySpec>,
    },
    ReactionNetwork {
        species: Vec<String>,
        reactions: Vec<ReactionSpec>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntrySpec {
    row: usize,
    col: usize,
    monomials: Vec<MonomialSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonomialSpec {
    coeff: f64,
    powers: Vec<u32>,
    #[serde(default)]
    time_factor: Option<TimeFactorSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum TimeFactorSpec {
    Named(String),
    Piecewise { piecewise: PiecewiseSpec },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PiecewiseSpec {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionSpec {
    #[serde(default)]
    reactants: BTreeMap<String, u32>,
    #[serde(default)]
    products: BTreeMap<String, u32>,
    rate: RateSpec,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RateSpec {
    Constant(f64),
    Scaled(ScaledRate),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaledRate {
    coeff: f64,
    time_factor: TimeFactorSpec,
}

/// Scalar time modulation of a coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeFactor {
    /// Diurnal daylight factor raised to a power 1, 2 or 3.
    Sigma(u32),
    /// Step function: `values[i]` on `[breakpoints[i-1], breakpoints[i])`.
    Piecewise { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl TimeFactor {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            TimeFactor::Sigma(p) => daylight_sigma(t).powi(*p as i32),
            TimeFactor::Piecewise { breakpoints, values } => {
                let idx = breakpoints.partition_point(|b| *b <= t);
                values[idx]
            }
        }
    }

    fn parse(spec: &TimeFactorSpec, loc: &str) -> Result<Self> {
        match spec {
            TimeFactorSpec::Named(name) => match name.as_str() {
                "sigma" => Ok(TimeFactor::Sigma(1)),
                "sigma^2" => Ok(TimeFactor::Sigma(2)),
                "sigma^3" => Ok(TimeFactor::Sigma(3)),
                other => Err(Error::schema(
                    loc,
                    format!("unknown time factor '{other}' (expected sigma, sigma^2, sigma^3 or a piecewise table)"),
                )),
            },
            TimeFactorSpec::Piecewise { piecewise } => {
                let PiecewiseSpec { breakpoints, values } = piecewise;
                if values.len() != breakpoints.len() + 1 {
                    return Err(Error::schema(
                        loc,
                        format!(
                            "piecewise factor needs one more value than breakpoints ({} vs {})",
                            values.len(),
                            breakpoints.len()
                        ),
                    ));
                }
                if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::schema(loc, "breakpoints must be strictly increasing"));
                }
                if values.iter().chain(breakpoints).any(|v| !v.is_finite()) {
                    return Err(Error::schema(loc, "piecewise factor contains a non-finite number"));
                }
                Ok(TimeFactor::Piecewise {
                    breakpoints: breakpoints.clone(),
                    values: values.clone(),
                })
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Monomial {
    coeff: f64,
    powers: Vec<u32>,
    factor: Option<TimeFactor>,
}

impl Monomial {
    fn eval(&self, t: f64, y: &Vector) -> f64 {
        let mut v = self.coeff;
        for (i, &p) in self.powers.iter().enumerate() {
            if p > 0 {
                v *= y[i].powi(p as i32);
            }
        }
        if let Some(f) = &self.factor {
            v *= f.at(t);
        }
        v
    }
}

/// Reads and validates a JSON problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<ModelCatalogEntry> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_problem(&text)
}

/// Parses and validates a JSON problem description.
///
/// The problem is declared strict when `A(t, y)` has zero column sums at
/// `(t0, y0)` and at a fixed set of sampled states around `y0`.
pub fn parse_problem(text: &str) -> Result<ModelCatalogEntry> {
    let file: ProblemFile = serde_json::from_str(text)
        .map_err(|e| Error::schema(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let d = file.dim;
    if d == 0 {
        return Err(Error::schema("dim", "dimension must be positive"));
    }
    if file.y0.len() != d {
        return Err(Error::schema("y0", format!("has length {}, dim is {d}", file.y0.len())));
    }
    if let Some(i) = file.y0.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::schema(format!("y0[{i}]"), "must be finite and nonnegative"));
    }
    let [t0, tf] = file.tspan;
    if !(t0.is_finite() && tf.is_finite() && t0 <= tf) {
        return Err(Error::schema(
            "tspan",
            format!("[{t0}, {tf}] is not an ordered finite interval"),
        ));
    }
    let mut conservation = Vec::new();
    for (c, w) in file.conservation.iter().enumerate() {
        if w.w.len() != d {
            return Err(Error::schema(
                format!("conservation[{c}].w"),
                format!("has length {}, dim is {d}", w.w.len()),
            ));
        }
        conservation.push(
            ConservationVector::new(w.label.clone(), w.w.clone())
                .map_err(|e| Error::schema(format!("conservation[{c}]"), e.to_string()))?,
        );
    }

    let (matrix_fn, explicit_rhs, time_dependent) = match &file.system {
        SystemSpec::MatrixTemplate { entries } => {
            let (f, timed) = build_template(entries, d)?;
            (f, None, timed)
        }
        SystemSpec::ReactionNetwork { species, reactions } => build_network(species, reactions, d)?,
    };
    if file.autonomous && time_dependent {
        return Err(Error::schema(
            "autonomous",
            "declared autonomous but a coefficient has a time factor",
        ));
    }

    let y0 = Vector::from_vec(file.y0.clone());
    let strict = columns_balance(&matrix_fn, t0, tf, &y0);
    let mut problem = OdeProblem::from_shared(file.name.clone(), y0, t0, tf, matrix_fn)
        .autonomous(file.autonomous)
        .strict(strict);
    for w in conservation {
        problem = problem.with_conservation(w);
    }
    problem.validate()?;

    let a0 = problem.matrix(t0, &problem.y0);
    let scale = 1.0 + a0.abs().max();
    let matrix_level = problem
        .conservation
        .iter()
        .map(|w| w.left_residual(&a0).amax() <= DEFAULT_TOL * scale * w.w.amax().max(1.0))
        .collect();
    let span = tf - t0;
    Ok(ModelCatalogEntry {
        id: file.name,
        description: format!("loaded problem of dimension {d}"),
        problem,
        reference: ReferenceControls {
            h0: if span > 0.0 { span / 16.0 } else { 1.0 },
            levels: 5,
            components: None,
            relative_error: true,
            reference_h: None,
        },
        matrix_level_conservation: matrix_level,
        explicit_rhs,
    })
}

fn build_template(entries: &[EntrySpec], d: usize) -> Result<(MatrixFn, bool)> {
    let mut cells: Vec<(usize, usize, Vec<Monomial>)> = Vec::new();
    let mut timed = false;
    for (e, entry) in entries.iter().enumerate() {
        let loc = format!("system.entries[{e}]");
        if entry.row >= d || entry.col >= d {
            return Err(Error::schema(
                &loc,
                format!("position ({}, {}) outside a {d}x{d} matrix", entry.row, entry.col),
            ));
        }
        if cells.iter().any(|(r, c, _)| *r == entry.row && *c == entry.col) {
            return Err(Error::schema(
                &loc,
                format!("duplicate entry ({}, {})", entry.row, entry.col),
            ));
        }
        let mut monos = Vec::new();
        for (m, mono) in entry.monomials.iter().enumerate() {
            let mloc = format!("{loc}.monomials[{m}]");
            if mono.powers.len() != d {
                return Err(Error::schema(
                    format!("{mloc}.powers"),
                    format!("has length {}, dim is {d}", mono.powers.len()),
                ));
            }
            if !mono.coeff.is_finite() {
                return Err(Error::schema(format!("{mloc}.coeff"), "must be finite"));
            }
            let factor = match &mono.time_factor {
                Some(spec) => Some(TimeFactor::parse(spec, &format!("{mloc}.time_factor"))?),
                None => None,
            };
            timed |= factor.is_some();
            monos.push(Monomial {
                coeff: mono.coeff,
                powers: mono.powers.clone(),
                factor,
            });
        }
        cells.push((entry.row, entry.col, monos));
    }
    let f: MatrixFn = Arc::new(move |t: f64, y: &Vector| {
        let mut a = Matrix::zeros(d, d);
        for (r, c, monos) in &cells {
            a[(*r, *c)] = monos.iter().map(|m| m.eval(t, y)).sum();
        }
        a
    });
    Ok((f, timed))
}

fn build_network(
    species: &[String],
    reactions: &[ReactionSpec],
    d: usize,
) -> Result<(MatrixFn, Option<ExplicitRhs>, bool)> {
    if species.is_empty() {
        return Err(Error::schema("system.species", "species list is empty"));
    }
    if species.len() != d {
        return Err(Error::schema(
            "system.species",
            format!("lists {} species, dim is {d}", species.len()),
        ));
    }
    for (i, s) in species.iter().enumerate() {
        if species[..i].contains(s) {
            return Err(Error::schema(
                format!("system.species[{i}]"),
                format!("duplicate species '{s}'"),
            ));
        }
    }
    let mut net = ReactionNetwork::new(species.to_vec())?;
    let mut timed = false;
    for (j, r) in reactions.iter().enumerate() {
        let loc = format!("system.reactions[{j}]");
        let stoich = |side: &BTreeMap<String, u32>, key: &str| -> Result<Vec<u32>> {
            let mut v = vec![0u32; d];
            for (name, &n) in side {
                let i = species
                    .iter()
                    .position(|s| s == name)
                    .ok_or_else(|| Error::schema(format!("{loc}.{key}"), format!("unknown species '{name}'")))?;
                v[i] = n;
            }
            Ok(v)
        };
        let reactants = stoich(&r.reactants, "reactants")?;
        let products = stoich(&r.products, "products")?;
        let rate = match &r.rate {
            RateSpec::Constant(k) => {
                if !(*k >= 0.0) || !k.is_finite() {
                    return Err(Error::schema(format!("{loc}.rate"), "must be a nonnegative number"));
                }
                Rate::Constant(*k)
            }
            RateSpec::Scaled(s) => {
                if !(s.coeff >= 0.0) || !s.coeff.is_finite() {
                    return Err(Error::schema(
                        format!("{loc}.rate.coeff"),
                        "must be a nonnegative number",
                    ));
                }
                let factor = TimeFactor::parse(&s.time_factor, &format!("{loc}.rate.time_factor"))?;
                timed = true;
                let k = s.coeff;
                Rate::time_dependent(move |t| k * factor.at(t))
            }
        };
        net.add(reactants, products, rate)
            .map_err(|e| Error::schema(&loc, e.to_string()))?;
    }
    let l = mass_action_laplacian(&net)?;
    let rhs = ExplicitRhs(Arc::new(move |t: f64, y: &Vector| net.rhs(t, y)));
    Ok((l, Some(rhs), timed))
}

fn columns_balance(f: &MatrixFn, t0: f64, tf: f64, y0: &Vector) -> bool {
    let strict_at = |t: f64, y: &Vector| {
        validate_laplacian(&f(t, y), true, DEFAULT_TOL)
            .map(|r| r.ok)
            .unwrap_or(false)
    };
    if !strict_at(t0, y0) {
        return false;
    }
    let n = y0.len();
    let top = y0.amax().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..16).all(|k| {
        let y = sample_simplex(&mut rng, n) * (top * n as f64);
        let t = t0 + (tf - t0) * k as f64 / 15.0;
        strict_at(t, &y)
    })
}
