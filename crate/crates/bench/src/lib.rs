//! Shared inputs for the benchmarks.

use jointparse::synth::toy_corpus;
use jointparse::{Model, ScoreTables, Sentence, TrainConfig, TrainInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform scores in `[-1, 1)` for a sentence of `n` words.
pub fn random_tables(seed: u64, n: usize, second_order: bool) -> ScoreTables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = ScoreTables::zeros(n, second_order);
    t.span.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    t.arc.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    if let Some(s2) = &mut t.span2o {
        s2.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    t
}

/// Untrained model with the default dimensions over the toy vocabulary.
pub fn toy_model(second_order: bool) -> Model {
    let corpus: Vec<TrainInstance> = toy_corpus(1, 32)
        .into_iter()
        .map(|(s, c, d)| TrainInstance::from_pair(s, &c, d).expect("toy trees are compatible"))
        .collect();
    let config = TrainConfig {
        second_order,
        ..TrainConfig::default()
    };
    jointparse::train::build_model(&corpus, &config).expect("valid config")
}

/// Sentence of `n` toy words.
pub fn sentence(n: usize) -> Sentence {
    let words = ["the", "dog", "saw", "a", "big", "cat", "in", "park"];
    Sentence::from_tokens((0..n).map(|k| words[k % words.len()])).expect("n > 0")
}
