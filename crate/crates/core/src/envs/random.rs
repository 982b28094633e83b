//! Random tabular MDPs for property tests and scale checks.

use rand::Rng;

use crate::mdp::BaselineMdp;

/// Dense random MDP: every transition row is a normalized vector of
/// uniform draws and every cost is uniform on `[0, 1)`.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, states: usize, actions: usize, discount: f64) -> BaselineMdp {
    random_sparse_mdp(rng, states, actions, discount, states)
}

/// Random MDP whose rows have at most `support` nonzero entries (at least one).
pub fn random_sparse_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    states: usize,
    actions: usize,
    discount: f64,
    support: usize,
) -> BaselineMdp {
    let support = support.clamp(1, states);
    let mut transitions = vec![vec![vec![0.0; states]; states]; actions];
    for matrix in transitions.iter_mut() {
        for row in matrix.iter_mut() {
            if support == states {
                row.iter_mut().for_each(|p| *p = rng.gen_range(0.01..1.0));
            } else {
                for _ in 0..support {
                    row[rng.gen_range(0..states)] += rng.gen_range(0.01..1.0);
                }
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }
    let costs = (0..states)
        .map(|_| (0..actions).map(|_| rng.gen::<f64>()).collect())
        .collect();
    BaselineMdp::new(format!("random_{states}x{actions}"), transitions, costs, discount)
        .expect("consistent shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for support in [1, 2, 5] {
            let mdp = random_sparse_mdp(&mut rng, 5, 3, 0.9, support);
            assert_eq!(mdp.validate(), Ok(()));
            for a in 0..3 {
                for s in 0..5 {
                    assert!(mdp.row(a, s).len() <= support);
                }
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = random_mdp(&mut ChaCha8Rng::seed_from_u64(3), 4, 2, 0.5);
        let b = random_mdp(&mut ChaCha8Rng::seed_from_u64(3), 4, 2, 0.5);
        assert_eq!(a.to_json_string(), b.to_json_string());
    }
}
