//! Randomized comparison of the chart decoder against exhaustive search.

use jointparse::decode::{brute_force_argmax, eisner_satta, enumerate_ltrees, CostConfig, ScoreTables};
use jointparse::{LTree, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOLERANCE: f64 = 1e-9;

/// One decoder/oracle disagreement.
#[derive(Clone, Debug)]
pub struct Mismatch {
    pub n: usize,
    pub second_order: bool,
    pub cost: bool,
    pub trial: usize,
    pub decoder: f64,
    pub oracle: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn random_tables<R: Rng>(rng: &mut R, n: usize, second_order: bool) -> ScoreTables {
    let mut t = ScoreTables::zeros(n, second_order);
    t.span.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    t.arc.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    if let Some(s2) = &mut t.span2o {
        s2.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    t
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Runs `trials` random tables for every length in `2..=max_len`, both
/// orders, with and without a random gold tree for cost augmentation.
/// A trial passes when the decoder's score matches the exhaustive maximum
/// and the returned tree actually attains that score.
pub fn verify(trials: usize, max_len: usize, seed: u64) -> Result<Summary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = Summary::default();
    for n in 2..=max_len {
        let trees: Vec<LTree> = enumerate_ltrees(n)?.collect();
        for second_order in [false, true] {
            for cost in [false, true] {
                for trial in 0..trials {
                    let tables = random_tables(&mut rng, n, second_order);
                    let gold = cost.then(|| {
                        let gold = trees[rng.random_range(0..trees.len())].clone();
                        CostConfig::new(gold)
                    });
                    let fast = eisner_satta(&tables, second_order, gold.as_ref())?;
                    let slow = brute_force_argmax(&tables, second_order, gold.as_ref())?;
                    let attained = tables.score_tree(&fast.tree, second_order)
                        + gold.as_ref().map_or(0.0, |g| g.hamming(&fast.tree));
                    summary.checked += 1;
                    if !close(fast.score, slow.score) || !close(attained, slow.score) {
                        summary.mismatches.push(Mismatch {
                            n,
                            second_order,
                            cost,
                            trial,
                            decoder: fast.score,
                            oracle: slow.score,
                        });
                    }
                }
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let s = verify(3, 4, 1).unwrap();
        assert_eq!(s.checked, 3 * 3 * 4);
        assert!(s.passed());
    }
}
