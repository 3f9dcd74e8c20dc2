use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrators::MatrixFn;
use crate::laplacian::{Matrix, Vector};

/// Rate coefficient of a reaction.
#[derive(Clone)]
pub enum Rate {
    Constant(f64),
    TimeDependent(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Rate {
    pub fn time_dependent(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Rate::TimeDependent(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Rate::Constant(k) => *k,
            Rate::TimeDependent(f) => f(t),
        }
    }
}

impl fmt::Debug for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Constant(k) => write!(f, "Constant({k})"),
            Rate::TimeDependent(_) => f.write_str("TimeDependent(..)"),
        }
    }
}

/// One reaction `Σ r_i G_i → Σ q_i G_i` with rate `k(t)`.
#[derive(Debug, Clone)]
pub struct Reaction {
    pub reactants: Vec<u32>,
    pub products: Vec<u32>,
    pub rate: Rate,
}

/// A mass-action network over `species.len()` species.
#[derive(Debug, Clone)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    pub fn new(species: Vec<String>) -> Result<Self> {
        if species.is_empty() {
            return Err(Error::Domain("a reaction network needs at least one species".into()));
        }
        Ok(ReactionNetwork {
            species,
            reactions: Vec::new(),
        })
    }

    pub fn add(&mut self, reactants: Vec<u32>, products: Vec<u32>, rate: Rate) -> Result<()> {
        let m = self.species.len();
        let j = self.reactions.len();
        if reactants.len() != m || products.len() != m {
            return Err(Error::Dimension(format!(
                "reaction {}: stoichiometry vectors must have length {m}",
                j + 1
            )));
        }
        if let Rate::Constant(k) = rate {
            if !(k >= 0.0) || !k.is_finite() {
                return Err(Error::Domain(format!(
                    "reaction {}: rate {k} is not a nonnegative number",
                    j + 1
                )));
            }
        }
        self.reactions.push(Reaction {
            reactants,
            products,
            rate,
        });
        Ok(())
    }

    /// Adds a reaction given by species names and multiplicities.
    pub fn add_named(&mut self, reactants: &[(&str, u32)], products: &[(&str, u32)], rate: Rate) -> Result<()> {
        let r = self.counts(reactants)?;
        let q = self.counts(products)?;
        self.add(r, q, rate)
    }

    fn counts(&self, terms: &[(&str, u32)]) -> Result<Vec<u32>> {
        let mut v = vec![0u32; self.species.len()];
        for (name, n) in terms {
            let i = self.species_index(name)?;
            v[i] += n;
        }
        Ok(v)
    }

    pub fn species_index(&self, name: &str) -> Result<usize> {
        self.species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Domain(format!("unknown species '{name}'")))
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    /// `S = q − r`, species by reactions.
    pub fn stoichiometry(&self) -> Matrix {
        let m = self.species.len();
        Matrix::from_fn(m, self.reactions.len(), |i, j| {
            let r = &self.reactions[j];
            r.products[i] as f64 - r.reactants[i] as f64
        })
    }

    /// `p_j = k_j(t) Π y_i^{r_ij}`.
    pub fn rates(&self, t: f64, y: &Vector) -> Vector {
        Vector::from_iterator(
            self.reactions.len(),
            self.reactions
                .iter()
                .map(|r| r.rate.at(t) * monomial(&r.reactants, None, y)),
        )
    }

    /// `S p(t, y)`.
    pub fn rhs(&self, t: f64, y: &Vector) -> Vector {
        self.stoichiometry() * self.rates(t, y)
    }
}

/// `Π y_i^{e_i}`, with the exponent of `reduce` lowered by one.
fn monomial(exponents: &[u32], reduce: Option<usize>, y: &Vector) -> f64 {
    exponents.iter().enumerate().fold(1.0, |acc, (i, &e)| {
        let e = if Some(i) == reduce { e - 1 } else { e };
        acc * y[i].powi(e as i32)
    })
}

/// A single contribution `sign · k_j(t) · y^{r_j − e_col}` to entry `(row, col)`.
#[derive(Debug, Clone, Copy)]
struct Term {
    row: usize,
    col: usize,
    reaction: usize,
    coeff: f64,
}

/// Quasi-linear form `L(t, y)` of a mass-action network with `L(t, y)y = S p(t, y)`
/// and nonnegative off-diagonal entries for `y ⪰ 0`.
///
/// A consumed species `i` (`S_ij < 0`) receives `S_ij p_j / y_i` on the
/// diagonal. A produced species (`S_ij > 0`) receives `S_ij p_j / y_c` in
/// column `c`, the lowest-index reactant of reaction `j` other than `i`.
/// Quotients are taken on the monomial exponents, so boundary states with
/// zero components are safe.
///
/// Networks with a reaction that has no reactants are rejected (the term
/// is constant and has no `M(y)y` form), as are reactions whose only
/// reactant is also produced in net (that term would sit on the diagonal
/// with a positive sign).
pub fn mass_action_laplacian(net: &ReactionNetwork) -> Result<MatrixFn> {
    let m = net.num_species();
    let mut terms = Vec::new();
    for (j, r) in net.reactions.iter().enumerate() {
        let reactant_species: Vec<usize> = (0..m).filter(|&c| r.reactants[c] >= 1).collect();
        for i in 0..m {
            let s = r.products[i] as f64 - r.reactants[i] as f64;
            if s == 0.0 {
                continue;
            }
            if reactant_species.is_empty() {
                return Err(Error::Structure(format!(
                    "reaction {} has no reactants; a source term cannot be written as L(y)y",
                    j + 1
                )));
            }
            let col = if s < 0.0 {
                i
            } else {
                match reactant_species.iter().copied().find(|&c| c != i) {
                    Some(c) => c,
                    None => {
                        return Err(Error::Structure(format!(
                            "reaction {}: species '{}' is its only reactant and has a net gain, \
                             which would put a positive entry on the diagonal",
                            j + 1,
                            net.species[i]
                        )))
                    }
                }
            };
            terms.push(Term {
                row: i,
                col,
                reaction: j,
                coeff: s,
            });
        }
    }
    let reactions: Vec<(Vec<u32>, Rate)> = net
        .reactions
        .iter()
        .map(|r| (r.reactants.clone(), r.rate.clone()))
        .collect();
    Ok(Arc::new(move |t: f64, y: &Vector| {
        let k: Vec<f64> = reactions.iter().map(|(_, rate)| rate.at(t)).collect();
        let mut l = Matrix::zeros(m, m);
        for term in &terms {
            let (exps, _) = &reactions[term.reaction];
            l[(term.row, term.col)] += term.coeff * k[term.reaction] * monomial(exps, Some(term.col), y);
        }
        l
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::validate_laplacian;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn single_conversion() {
        let mut net = ReactionNetwork::new(vec!["G1".into(), "G2".into()]).unwrap();
        net.add(vec![1, 0], vec![0, 1], Rate::Constant(2.5)).unwrap();
        let l = mass_action_laplacian(&net).unwrap()(0.0, &dvector![0.3, 0.7]);
        assert_eq!(l, dmatrix![-2.5, 0.0; 2.5, 0.0]);
        assert!(validate_laplacian(&l, true, 1e-12).unwrap().ok);
    }

    #[test]
    fn pure_source_rejected() {
        let mut net = ReactionNetwork::new(vec!["A".into()]).unwrap();
        net.add(vec![0], vec![1], Rate::Constant(1.0)).unwrap();
        assert!(matches!(mass_action_laplacian(&net), Err(Error::Structure(_))));
    }

    #[test]
    fn self_replication_rejected() {
        let mut net = ReactionNetwork::new(vec!["A".into()]).unwrap();
        net.add(vec![1], vec![2], Rate::Constant(1.0)).unwrap();
        assert!(matches!(mass_action_laplacian(&net), Err(Error::Structure(_))));
    }

    #[test]
    fn boundary_state_has_no_division() {
        let mut net = ReactionNetwork::new(vec!["A".into(), "B".into()]).unwrap();
        net.add(vec![2, 0], vec![0, 1], Rate::Constant(3.0)).unwrap();
        let l = mass_action_laplacian(&net).unwrap()(0.0, &dvector![0.0, 1.0]);
        assert!(l.iter().all(|v| v.is_finite()));
        let y = dvector![0.4, 1.0];
        let l = mass_action_laplacian(&net).unwrap()(0.0, &y);
        assert!((&l * &y - net.rhs(0.0, &y)).norm() < 1e-15);
    }

    #[test]
    fn negative_constant_rate_rejected() {
        let mut net = ReactionNetwork::new(vec!["A".into(), "B".into()]).unwrap();
        assert!(net.add(vec![1, 0], vec![0, 1], Rate::Constant(-1.0)).is_err());
        assert!(net.add_named(&[("C", 1)], &[("B", 1)], Rate::Constant(1.0)).is_err());
    }
}
