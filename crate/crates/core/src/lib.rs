//! Joint constituency and dependency parsing over lexicalized trees.
//!
//! A constituency tree and a compatible projective dependency tree are
//! encoded together as a binarized lexicalized tree (every span carries its
//! head word). The crate provides the tree conversions, exact chart decoders
//! (CKY, Eisner and the O(n⁴) Eisner-Satta algorithm with an optional
//! second-order span extension), a small trainable biaffine scorer with a
//! structured max-margin objective, treebank readers/writers and the usual
//! parsing metrics.

pub mod checkpoint;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod synth;
pub mod train;
pub mod treebank;
pub mod trees;

pub use crate::decode::{
    brute_force_argmax, cky, cost_augment, eisner, eisner_satta, enumerate_ltrees, Chart,
    CostConfig, Decoded, ScoreTables,
};
pub use crate::error::{Error, Result};
pub use crate::eval::{Evaluator, Metrics, PunctTags};
pub use crate::model::{LabelScores, Model, ModelConfig};
pub use crate::train::{predict, train, LossReport, Prediction, TrainConfig, TrainInstance};
pub use crate::treebank::{CorpusStats, JointInstance};
pub use crate::trees::{
    build_ltree, check_compatibility, head_binarize, is_projective, ltree_to_ctree,
    ltree_to_dtree, Arc, CTree, CompatReport, Constituent, DTree, LTree, LexSpan, Sentence,
};
