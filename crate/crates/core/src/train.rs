//! Two-stage training (max-margin bracketing, cross-entropy labeling) and
//! prediction.

use std::collections::BTreeMap;
use std::str::FromStr;

use log::{debug, info};
use ndarray::{s, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{eisner_satta, CostConfig, ScoreTables};
use crate::error::{Error, Result};
use crate::model::{LabelScores, Model, ModelConfig, Params, Vocab};
use crate::trees::{
    build_ltree, head_binarize, is_intermediate, ltree_to_ctree, ltree_to_dtree, CTree, DTree,
    LTree, Sentence, NULL_LABEL,
};

/// Placeholder relation used when the training data has none.
pub const DEFAULT_REL: &str = "dep";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Sentences per mini-batch.
    pub batch_size: usize,
    pub span_cost: f64,
    pub arc_cost: f64,
    pub seed: u64,
    pub weight_decay: f64,
    pub label_weight: f64,
    pub momentum: f64,
    pub second_order: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            epochs: 30,
            batch_size: 8,
            span_cost: 1.0,
            arc_cost: 1.0,
            seed: 1,
            weight_decay: 0.0,
            label_weight: 1.0,
            momentum: 0.9,
            second_order: true,
            model: ModelConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {value:?}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be a non-negative number".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.span_cost >= 0.0 && self.arc_cost >= 0.0) {
            return Err(Error::Config("costs must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0 && self.label_weight >= 0.0) {
            return Err(Error::Config("weights must be non-negative".into()));
        }
        self.model.validate()
    }

    /// Sets one option by name. Model sizes use the names of
    /// [`ModelConfig`] fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lr" => self.lr = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "span_cost" => self.span_cost = parse_value(key, value)?,
            "arc_cost" => self.arc_cost = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "label_weight" => self.label_weight = parse_value(key, value)?,
            "momentum" => self.momentum = parse_value(key, value)?,
            "second_order" => self.second_order = parse_value(key, value)?,
            "order" => {
                self.second_order = match value {
                    "1" | "first" => false,
                    "2" | "second" => true,
                    _ => return Err(Error::Config(format!("bad value for order: {value:?}"))),
                }
            }
            "embed_dim" => self.model.embed_dim = parse_value(key, value)?,
            "ff_dim" => self.model.ff_dim = parse_value(key, value)?,
            "mlp_dim" => self.model.mlp_dim = parse_value(key, value)?,
            "span2o_dim" => self.model.span2o_dim = parse_value(key, value)?,
            "max_positions" => self.model.max_positions = parse_value(key, value)?,
            "init_scale" => self.model.init_scale = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown option {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value", no + 1)));
            };
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Model configuration with the shared seed and order applied.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            second_order: self.second_order,
            ..self.model.clone()
        }
    }
}

/// A sentence with its gold lexicalized tree and labeled dependency tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainInstance {
    pub sentence: Sentence,
    pub gold: LTree,
    pub dtree: DTree,
}

impl TrainInstance {
    pub fn new(sentence: Sentence, gold: LTree, dtree: DTree) -> Result<Self> {
        let n = sentence.len();
        for found in [gold.len(), dtree.len()] {
            if found != n {
                return Err(Error::LengthMismatch { expected: n, found });
            }
        }
        Ok(TrainInstance {
            sentence,
            gold,
            dtree,
        })
    }

    /// Binarizes a compatible n-ary pair into its gold l-tree.
    pub fn from_pair(sentence: Sentence, ctree: &CTree, dtree: DTree) -> Result<Self> {
        let binary = head_binarize(ctree, &dtree)?;
        let gold = build_ltree(&binary, &dtree)?;
        TrainInstance::new(sentence, gold, dtree)
    }
}

/// Gold label indices for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTargets {
    /// `(i, j, label)`; intermediate spans map to the null label 0.
    pub spans: Vec<(usize, usize, usize)>,
    /// `(h, m, relation)`; empty when the gold tree has no relations.
    pub arcs: Vec<(usize, usize, usize)>,
}

impl LabelTargets {
    pub fn new(gold: &LTree, dtree: &DTree, labels: &Vocab, rels: &Vocab) -> Result<Self> {
        let spans = gold
            .spans()
            .iter()
            .map(|s| {
                let idx = if is_intermediate(&s.label) {
                    labels.get(NULL_LABEL).unwrap_or(0)
                } else {
                    labels
                        .get(&s.label)
                        .ok_or_else(|| Error::UnknownLabel(s.label.clone()))?
                };
                Ok((s.i, s.j, idx))
            })
            .collect::<Result<Vec<_>>>()?;
        let arcs = match dtree.rels() {
            Some(_) => dtree
                .arcs()
                .map(|a| {
                    let rel = a.rel.unwrap_or_default();
                    let idx = rels.get(&rel).ok_or(Error::UnknownLabel(rel))?;
                    Ok((a.h, a.m, idx))
                })
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(LabelTargets { spans, arcs })
    }
}

/// Structured hinge loss `max(0, max_y s(y) + cost(y) - s(gold))` and its
/// subgradient with respect to every table entry.
pub fn hinge_loss(
    tables: &ScoreTables,
    gold: &LTree,
    second_order: bool,
    span_cost: f64,
    arc_cost: f64,
) -> Result<(f64, ScoreTables)> {
    let n = tables.len();
    if gold.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: gold.len(),
        });
    }
    let cost = CostConfig::with_costs(gold.unlabeled(), span_cost, arc_cost)?;
    let best = eisner_satta(tables, second_order, Some(&cost))?;
    let gold_parts = gold.parts();
    let gold_score = tables.score_parts(&gold_parts, second_order);
    let loss = (best.score - gold_score).max(0.0);
    let mut grad = ScoreTables::zeros(n, tables.has_second_order());
    if loss > 0.0 && best.tree.triples() != gold.triples() {
        let pred_parts = best.tree.parts();
        for (parts, sign) in [(&pred_parts, 1.0), (&gold_parts, -1.0)] {
            for &(i, j) in &parts.spans {
                grad.span[[i, j]] += sign;
            }
            for &(h, m) in &parts.arcs {
                grad.arc[[h, m]] += sign;
            }
            if second_order {
                let s2 = grad.span2o.as_mut().expect("validated by the decoder");
                for &(i, j, h) in parts.headed.iter().chain(&parts.hooked) {
                    s2[[i, j, h]] += sign;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Cross entropy of one target under a softmax over `scores`; writes
/// `softmax - onehot` into `grad`.
fn cross_entropy(scores: ArrayView1<f64>, target: usize, mut grad: ndarray::ArrayViewMut1<f64>) -> f64 {
    let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum: f64 = scores.iter().map(|&v| (v - max).exp()).sum();
    let log_z = max + sum.ln();
    for (g, &v) in grad.iter_mut().zip(scores.iter()) {
        *g += (v - log_z).exp();
    }
    grad[target] -= 1.0;
    log_z - scores[target]
}

/// Summed cross entropy over every gold span label and arc relation.
pub fn label_loss(scores: &LabelScores, targets: &LabelTargets) -> (f64, LabelScores) {
    let mut grad = LabelScores {
        con: ndarray::Array3::zeros(scores.con.dim()),
        dep: ndarray::Array3::zeros(scores.dep.dim()),
    };
    let mut loss = 0.0;
    for &(i, j, l) in &targets.spans {
        loss += cross_entropy(
            scores.con.slice(s![i, j, ..]),
            l,
            grad.con.slice_mut(s![i, j, ..]),
        );
    }
    for &(h, m, r) in &targets.arcs {
        loss += cross_entropy(
            scores.dep.slice(s![h, m, ..]),
            r,
            grad.dep.slice_mut(s![h, m, ..]),
        );
    }
    (loss, grad)
}

/// Losses of one epoch, each divided by the number of tokens seen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub bracket_loss: f64,
    pub label_loss: f64,
    pub tokens: usize,
    pub sentences: usize,
    /// Extra per-epoch numbers such as development scores.
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl LossReport {
    pub fn total(&self) -> f64 {
        self.bracket_loss + self.label_loss
    }
}

/// Builds an untrained model whose vocabularies cover the corpus.
pub fn build_model(corpus: &[TrainInstance], config: &TrainConfig) -> Result<Model> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    config.validate()?;
    let words = Vocab::words(corpus.iter().flat_map(|x| x.sentence.tokens().iter().cloned()));
    let labels = Vocab::con_labels(corpus.iter().flat_map(|x| {
        x.gold
            .spans()
            .iter()
            .filter(|s| !is_intermediate(&s.label))
            .map(|s| s.label.clone())
    }));
    let mut rels = Vocab::sorted(
        corpus
            .iter()
            .filter_map(|x| x.dtree.rels())
            .flat_map(|r| r.iter().cloned()),
    );
    if rels.is_empty() {
        rels = Vocab::sorted([DEFAULT_REL]);
    }
    Model::new(config.model_config(), words, labels, rels)
}

struct SentenceGrad {
    grads: Params,
    bracket: f64,
    label: f64,
    tokens: usize,
}

fn sentence_grad(model: &Model, x: &TrainInstance, config: &TrainConfig) -> Result<SentenceGrad> {
    let targets = LabelTargets::new(&x.gold, &x.dtree, &model.labels, &model.rels)?;
    let forward = model.forward(&x.sentence, config.second_order);
    let (bracket, d_tables) = hinge_loss(
        &forward.tables,
        &x.gold,
        config.second_order,
        config.span_cost,
        config.arc_cost,
    )?;
    let (label, mut d_labels) = label_loss(&forward.labels, &targets);
    d_labels.con *= config.label_weight;
    d_labels.dep *= config.label_weight;
    let grads = model.backward(&forward.tape, &d_tables, Some(&d_labels))?;
    Ok(SentenceGrad {
        grads,
        bracket,
        label: config.label_weight * label,
        tokens: x.sentence.len(),
    })
}

/// Continues training `model` for `config.epochs` epochs. `on_epoch` sees
/// each report (and may add metrics to it) after the epoch's last update.
pub fn train_model(
    model: &mut Model,
    corpus: &[TrainInstance],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&Model, &mut LossReport) -> Result<()>,
) -> Result<Vec<LossReport>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut velocity = model.params().zeros_like();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut reports = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut report = LossReport {
            epoch,
            bracket_loss: 0.0,
            label_loss: 0.0,
            tokens: 0,
            sentences: 0,
            metrics: BTreeMap::new(),
        };
        let (mut bracket_sum, mut label_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let parts = batch
                .par_iter()
                .map(|&idx| sentence_grad(model, &corpus[idx], config))
                .collect::<Result<Vec<_>>>()?;
            let tokens: usize = parts.iter().map(|p| p.tokens).sum();
            let mut grads = model.params().zeros_like();
            for p in &parts {
                grads.add_scaled(&p.grads, 1.0);
                bracket_sum += p.bracket;
                label_sum += p.label;
            }
            let scale = 1.0 / tokens as f64;
            let decay = config.weight_decay;
            let params = model.params_mut();
            for (((_, mut v), (_, g)), (_, mut w)) in velocity
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(params.tensors_mut())
            {
                v.mapv_inplace(|x| x * config.momentum);
                v.scaled_add(scale, &g);
                if decay > 0.0 {
                    v.scaled_add(decay, &w);
                }
                w.scaled_add(-config.lr, &v);
            }
            report.tokens += tokens;
            report.sentences += batch.len();
        }
        report.bracket_loss = bracket_sum / report.tokens as f64;
        report.label_loss = label_sum / report.tokens as f64;
        on_epoch(model, &mut report)?;
        info!(
            "epoch {epoch}: bracket {:.5} label {:.5}",
            report.bracket_loss, report.label_loss
        );
        reports.push(report);
    }
    Ok(reports)
}

/// Builds a fresh model and trains it.
pub fn train(
    corpus: &[TrainInstance],
    config: &TrainConfig,
    on_epoch: impl FnMut(&Model, &mut LossReport) -> Result<()>,
) -> Result<(Model, Vec<LossReport>)> {
    let mut model = build_model(corpus, config)?;
    debug!("model has {} parameters", model.params().num_params());
    let reports = train_model(&mut model, corpus, config, on_epoch)?;
    Ok((model, reports))
}

/// Joint parse of one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Labeled lexicalized tree; null spans carry the label `*`.
    pub ltree: LTree,
    pub ctree: CTree,
    /// Dependency tree with a relation on every arc.
    pub dtree: DTree,
}

/// Decodes the best unlabeled l-tree, then picks the best label for every
/// span and relation for every arc. The full-sentence span never receives
/// the null label.
pub fn predict(model: &Model, sentence: &Sentence, second_order: bool) -> Result<Prediction> {
    if sentence.is_empty() {
        return Err(Error::EmptySentence);
    }
    let forward = model.forward(sentence, second_order);
    let best = eisner_satta(&forward.tables, second_order, None)?;
    let spans = best.tree.spans();
    let ltree = best.tree.relabel(|idx| {
        let s = &spans[idx];
        model
            .labels
            .item(forward.labels.best_label(s.i, s.j, idx == 0))
            .to_owned()
    });
    let ctree = ltree_to_ctree(&ltree);
    let unlabeled = ltree_to_dtree(&ltree);
    let rels = unlabeled
        .arcs()
        .map(|a| model.rels.item(forward.labels.best_rel(a.h, a.m)).to_owned())
        .collect();
    let dtree = unlabeled.with_rels(rels)?;
    Ok(Prediction {
        ltree,
        ctree,
        dtree,
    })
}
