use rand::Rng;

use crate::laplacian::random_laplacian;

use super::mass_action::{Rate, ReactionNetwork};
use super::quadratic::QuadraticSystem;

/// Random quadratic system in dimension `2..=max_dim` that meets the sign
/// and balance conditions, with a random strict linear part.
pub fn random_quadratic_system<R: Rng + ?Sized>(rng: &mut R, max_dim: usize) -> QuadraticSystem {
    let d = rng.gen_range(2..=max_dim.max(2));
    let linear = random_laplacian(rng, d, 0.5, false, true);
    let mut s = QuadraticSystem::new(d).with_linear(linear).expect("strict linear part");
    for i in 0..d {
        for j in i..d {
            if rng.gen::<f64>() < 0.4 {
                continue;
            }
            let mut total = 0.0;
            for k in (0..d).filter(|&k| k != i && k != j) {
                if rng.gen::<f64>() < 0.6 {
                    let a = rng.gen_range(0.0..10.0);
                    s.set(k, i, j, a).expect("index in range");
                    total += a;
                }
            }
            if i == j {
                s.set(i, i, i, -total).expect("index in range");
            } else {
                // the loss is split between the two factors, including the one-sided splits
                let theta = match rng.gen_range(0..4) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.gen::<f64>(),
                };
                s.set(i, i, j, -theta * total).expect("index in range");
                s.set(j, i, j, -(1.0 - theta) * total).expect("index in range");
            }
        }
    }
    s
}

/// Random network of `reactions` reactions over `species` species that the
/// mass-action factorizer accepts: every reaction has a reactant, and none
/// has a single reactant species with a net gain. Half of the rates are
/// smooth functions of time.
pub fn random_reaction_network<R: Rng + ?Sized>(rng: &mut R, species: usize, reactions: usize) -> ReactionNetwork {
    let names: Vec<String> = (0..species).map(|i| format!("G{i}")).collect();
    let mut net = ReactionNetwork::new(names).expect("at least one species");
    while net.reactions().len() < reactions {
        let mut draw = || -> Vec<u32> {
            (0..species)
                .map(|_| {
                    if rng.gen::<f64>() < 0.4 {
                        rng.gen_range(1..=2)
                    } else {
                        0
                    }
                })
                .collect()
        };
        let r = draw();
        let q = draw();
        let present: Vec<usize> = (0..species).filter(|&i| r[i] > 0).collect();
        if present.is_empty() || (present.len() == 1 && q[present[0]] > r[present[0]]) {
            continue;
        }
        let rate = if rng.gen::<bool>() {
            Rate::Constant(rng.gen_range(0.01..10.0))
        } else {
            let (a, w) = (rng.gen_range(0.1..5.0), rng.gen_range(0.1..3.0));
            Rate::time_dependent(move |t| a * (1.0 + 0.5 * (w * t).sin()))
        };
        net.add(r, q, rate).expect("valid reaction");
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{check_quadratic_assumptions, mass_action_laplacian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_instances_are_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert!(check_quadratic_assumptions(&random_quadratic_system(&mut rng, 6), 1e-12).ok);
            let net = random_reaction_network(&mut rng, 4, 5);
            assert_eq!(net.reactions().len(), 5);
            assert!(mass_action_laplacian(&net).is_ok());
        }
    }
}
