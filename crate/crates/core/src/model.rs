//! Trainable scorer producing [`ScoreTables`] and [`LabelScores`].
//!
//! The encoder is deliberately small: word embedding plus learned position
//! embedding, followed by a two-layer per-token feedforward network. Each
//! output vector `e_t` (for `<bos>`, the words and `<eos>`) is split in half
//! into a forward part and a backward part. On top of it:
//!
//! * fencepost `f_k = fwd(e_k) ⊕ bwd(e_{k+1})` for `k = 0..n`;
//! * `s_span(i, j) = [left(f_{i-1}) ⊕ 1]ᵀ W_con right(f_j)`;
//! * `s_arc(h, m) = [mod(e_m) ⊕ 1]ᵀ W_dep head(e_h)`, the root using `e_0`;
//! * `s_2o(i, j, h) = [word(e_h) ⊕ 1]ᵀ W_span [span(f_{i-1} - f_j) ⊕ 1]`,
//!   shared by headed and hooked spans;
//! * label scores use one biaffine matrix per label over the same
//!   boundary (constituents) or head/modifier (relations) representations.
//!
//! Every head MLP is a single linear layer followed by a leaky rectifier.
//! Gradients are computed by hand in [`Model::backward`].

use std::collections::{BTreeSet, HashMap};

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayViewD, ArrayViewMutD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::ScoreTables;
use crate::error::{Error, Result};
use crate::trees::{Sentence, NULL_LABEL};

pub const LEAKY_SLOPE: f64 = 0.1;

pub const UNK: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Encoder output size; must be even (forward and backward halves).
    pub embed_dim: usize,
    pub ff_dim: usize,
    /// Output size of the boundary and head/modifier MLPs.
    pub mlp_dim: usize,
    /// Output size of the second-order word and span MLPs.
    pub span2o_dim: usize,
    /// Size of the position table; later positions share the last row.
    pub max_positions: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Order the model is trained and decoded with by default.
    pub second_order: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 128,
            ff_dim: 256,
            mlp_dim: 100,
            span2o_dim: 100,
            max_positions: 256,
            init_scale: 0.1,
            seed: 1,
            second_order: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(2) {
            return Err(Error::Config("embed_dim must be even and positive".into()));
        }
        if self.ff_dim == 0 || self.mlp_dim == 0 || self.span2o_dim == 0 {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.max_positions < 3 {
            return Err(Error::Config("max_positions must be at least 3".into()));
        }
        Ok(())
    }
}

/// An indexed list of strings.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        let index = items
            .iter()
            .enumerate()
            .map(|(idx, s)| (s.clone(), idx))
            .collect();
        Vocab { items, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

impl Vocab {
    /// Word vocabulary: `<unk>`, `<bos>`, `<eos>`, then the sorted forms.
    pub fn words<I, S>(forms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = forms.into_iter().map(Into::into).collect();
        let mut items = vec!["<unk>".to_owned(), "<bos>".to_owned(), "<eos>".to_owned()];
        items.extend(sorted);
        Vocab::from(items)
    }

    /// Constituent label vocabulary: the null label first, then the sorted
    /// labels.
    pub fn con_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = labels
            .into_iter()
            .map(Into::into)
            .filter(|l| l != NULL_LABEL)
            .collect();
        let mut items = vec![NULL_LABEL.to_owned()];
        items.extend(sorted);
        Vocab::from(items)
    }

    /// Sorted, deduplicated vocabulary.
    pub fn sorted<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = items.into_iter().map(Into::into).collect();
        Vocab::from(sorted.into_iter().collect::<Vec<_>>())
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn item(&self, idx: usize) -> &str {
        &self.items[idx]
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Affine map `x Wᵀ + b` with `W` of shape `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Linear {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, input: &Array2<f64>, dpre: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dpre.t().dot(input);
        grad.bias += &dpre.sum_axis(Axis(0));
        dpre.dot(&self.weight)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub embed: Array2<f64>,
    pub position: Array2<f64>,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub left: Linear,
    pub right: Linear,
    pub head: Linear,
    pub modifier: Linear,
    pub word: Linear,
    pub span: Linear,
    /// `(k + 1) x k`
    pub con: Array2<f64>,
    /// `(k + 1) x k`
    pub dep: Array2<f64>,
    /// `(k2 + 1) x (k2 + 1)`
    pub span2o: Array2<f64>,
    /// `|labels| x (k + 1) x (k + 1)`
    pub con_label: Array3<f64>,
    /// `|rels| x (k + 1) x (k + 1)`
    pub dep_label: Array3<f64>,
}

/// All trainable parameters. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub encoder: EncoderParams,
    pub heads: HeadParams,
}

impl Params {
    pub fn zeros(config: &ModelConfig, n_words: usize, n_labels: usize, n_rels: usize) -> Self {
        let d = config.embed_dim;
        let k = config.mlp_dim;
        let k2 = config.span2o_dim;
        Params {
            encoder: EncoderParams {
                embed: Array2::zeros((n_words, d)),
                position: Array2::zeros((config.max_positions, d)),
                ff_in: Linear::zeros(config.ff_dim, d),
                ff_out: Linear::zeros(d, config.ff_dim),
            },
            heads: HeadParams {
                left: Linear::zeros(k, d),
                right: Linear::zeros(k, d),
                head: Linear::zeros(k, d),
                modifier: Linear::zeros(k, d),
                word: Linear::zeros(k2, d),
                span: Linear::zeros(k2, d),
                con: Array2::zeros((k + 1, k)),
                dep: Array2::zeros((k + 1, k)),
                span2o: Array2::zeros((k2 + 1, k2 + 1)),
                con_label: Array3::zeros((n_labels, k + 1, k + 1)),
                dep_label: Array3::zeros((n_rels, k + 1, k + 1)),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, mut t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Named views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        let e = &self.encoder;
        let h = &self.heads;
        vec![
            ("encoder.embed", e.embed.view().into_dyn()),
            ("encoder.position", e.position.view().into_dyn()),
            ("encoder.ff_in.weight", e.ff_in.weight.view().into_dyn()),
            ("encoder.ff_in.bias", e.ff_in.bias.view().into_dyn()),
            ("encoder.ff_out.weight", e.ff_out.weight.view().into_dyn()),
            ("encoder.ff_out.bias", e.ff_out.bias.view().into_dyn()),
            ("heads.left.weight", h.left.weight.view().into_dyn()),
            ("heads.left.bias", h.left.bias.view().into_dyn()),
            ("heads.right.weight", h.right.weight.view().into_dyn()),
            ("heads.right.bias", h.right.bias.view().into_dyn()),
            ("heads.head.weight", h.head.weight.view().into_dyn()),
            ("heads.head.bias", h.head.bias.view().into_dyn()),
            ("heads.modifier.weight", h.modifier.weight.view().into_dyn()),
            ("heads.modifier.bias", h.modifier.bias.view().into_dyn()),
            ("heads.word.weight", h.word.weight.view().into_dyn()),
            ("heads.word.bias", h.word.bias.view().into_dyn()),
            ("heads.span.weight", h.span.weight.view().into_dyn()),
            ("heads.span.bias", h.span.bias.view().into_dyn()),
            ("heads.con", h.con.view().into_dyn()),
            ("heads.dep", h.dep.view().into_dyn()),
            ("heads.span2o", h.span2o.view().into_dyn()),
            ("heads.con_label", h.con_label.view().into_dyn()),
            ("heads.dep_label", h.dep_label.view().into_dyn()),
        ]
    }

    /// Mutable counterpart of [`Params::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        let e = &mut self.encoder;
        let h = &mut self.heads;
        vec![
            ("encoder.embed", e.embed.view_mut().into_dyn()),
            ("encoder.position", e.position.view_mut().into_dyn()),
            ("encoder.ff_in.weight", e.ff_in.weight.view_mut().into_dyn()),
            ("encoder.ff_in.bias", e.ff_in.bias.view_mut().into_dyn()),
            ("encoder.ff_out.weight", e.ff_out.weight.view_mut().into_dyn()),
            ("encoder.ff_out.bias", e.ff_out.bias.view_mut().into_dyn()),
            ("heads.left.weight", h.left.weight.view_mut().into_dyn()),
            ("heads.left.bias", h.left.bias.view_mut().into_dyn()),
            ("heads.right.weight", h.right.weight.view_mut().into_dyn()),
            ("heads.right.bias", h.right.bias.view_mut().into_dyn()),
            ("heads.head.weight", h.head.weight.view_mut().into_dyn()),
            ("heads.head.bias", h.head.bias.view_mut().into_dyn()),
            ("heads.modifier.weight", h.modifier.weight.view_mut().into_dyn()),
            ("heads.modifier.bias", h.modifier.bias.view_mut().into_dyn()),
            ("heads.word.weight", h.word.weight.view_mut().into_dyn()),
            ("heads.word.bias", h.word.bias.view_mut().into_dyn()),
            ("heads.span.weight", h.span.weight.view_mut().into_dyn()),
            ("heads.span.bias", h.span.bias.view_mut().into_dyn()),
            ("heads.con", h.con.view_mut().into_dyn()),
            ("heads.dep", h.dep.view_mut().into_dyn()),
            ("heads.span2o", h.span2o.view_mut().into_dyn()),
            ("heads.con_label", h.con_label.view_mut().into_dyn()),
            ("heads.dep_label", h.dep_label.view_mut().into_dyn()),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, &b);
        }
    }
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

fn append_one(x: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let mut out = Array2::ones((rows, cols + 1));
    out.slice_mut(s![.., ..cols]).assign(x);
    out
}

/// Input, pre-activation and output of a leaky-rectifier MLP layer.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
    pub out: Array2<f64>,
}

fn mlp(layer: &Linear, input: Array2<f64>) -> MlpCache {
    let pre = layer.apply(&input);
    let out = pre.mapv(leaky);
    MlpCache { input, pre, out }
}

fn mlp_backward(layer: &Linear, cache: &MlpCache, dout: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
    let dpre = dout * &cache.pre.mapv(leaky_grad);
    layer.backward(&cache.input, &dpre, grad)
}

/// Encoder activations for `<bos> w_1 .. w_n <eos>`.
#[derive(Clone, Debug)]
pub struct Encoded {
    ids: Vec<usize>,
    positions: Vec<usize>,
    input: Array2<f64>,
    hidden: Array2<f64>,
    /// `(n + 2) x embed_dim`
    pub vectors: Array2<f64>,
}

impl Encoded {
    /// Number of words (without `<bos>`/`<eos>`).
    pub fn len(&self) -> usize {
        self.ids.len() - 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward_half(&self, t: usize) -> ArrayView1<'_, f64> {
        let half = self.vectors.ncols() / 2;
        self.vectors.slice(s![t, ..half])
    }

    pub fn backward_half(&self, t: usize) -> ArrayView1<'_, f64> {
        let half = self.vectors.ncols() / 2;
        self.vectors.slice(s![t, half..])
    }
}

/// Runs the encoder over word ids that already include `<bos>`/`<eos>`.
pub fn encode(params: &EncoderParams, ids: &[usize]) -> Encoded {
    let d = params.embed.ncols();
    let last = params.position.nrows() - 1;
    let positions: Vec<usize> = (0..ids.len()).map(|t| t.min(last)).collect();
    let mut input = Array2::zeros((ids.len(), d));
    for (t, (&id, &p)) in ids.iter().zip(&positions).enumerate() {
        let mut row = input.row_mut(t);
        row.assign(&params.embed.row(id));
        row += &params.position.row(p);
    }
    let hidden = params.ff_in.apply(&input).mapv(f64::tanh);
    let vectors = params.ff_out.apply(&hidden);
    Encoded {
        ids: ids.to_vec(),
        positions,
        input,
        hidden,
        vectors,
    }
}

/// Outputs of the head MLPs.
#[derive(Clone, Debug)]
pub struct Representations {
    n: usize,
    /// `(n + 1) x embed_dim` fenceposts.
    pub fence: Array2<f64>,
    pub left: MlpCache,
    pub right: MlpCache,
    pub head: MlpCache,
    pub modifier: MlpCache,
    pub word: Option<MlpCache>,
    /// Rows follow [`span_index`].
    pub span: Option<MlpCache>,
}

/// Row of span `(i, j)` among all `n (n + 1) / 2` spans, ordered by `i`
/// then `j`.
pub fn span_index(n: usize, i: usize, j: usize) -> usize {
    let a = i - 1;
    a * (2 * n + 1 - a) / 2 + (j - i)
}

fn num_spans(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn represent(enc: &Encoded, params: &HeadParams, second_order: bool) -> Representations {
    let n = enc.len();
    let d = enc.vectors.ncols();
    let half = d / 2;
    let mut fence = Array2::zeros((n + 1, d));
    for k in 0..=n {
        fence
            .slice_mut(s![k, ..half])
            .assign(&enc.vectors.slice(s![k, ..half]));
        fence
            .slice_mut(s![k, half..])
            .assign(&enc.vectors.slice(s![k + 1, half..]));
    }
    let words = enc.vectors.slice(s![..=n, ..]).to_owned();
    let (word, span) = if second_order {
        let mut diffs = Array2::zeros((num_spans(n), d));
        for i in 1..=n {
            for j in i..=n {
                let row = &fence.row(i - 1) - &fence.row(j);
                diffs.row_mut(span_index(n, i, j)).assign(&row);
            }
        }
        (
            Some(mlp(&params.word, words.clone())),
            Some(mlp(&params.span, diffs)),
        )
    } else {
        (None, None)
    };
    Representations {
        n,
        left: mlp(&params.left, fence.clone()),
        right: mlp(&params.right, fence.clone()),
        head: mlp(&params.head, words.clone()),
        modifier: mlp(&params.modifier, words),
        fence,
        word,
        span,
    }
}

/// Unlabeled span, arc and (optionally) second-order scores.
pub fn score_structure(reps: &Representations, params: &HeadParams) -> ScoreTables {
    let n = reps.n;
    let mut tables = ScoreTables::zeros(n, reps.span.is_some());
    let boundary = append_one(&reps.left.out)
        .dot(&params.con)
        .dot(&reps.right.out.t());
    for i in 1..=n {
        for j in i..=n {
            tables.span[[i, j]] = boundary[[i - 1, j]];
        }
    }
    let arcs = append_one(&reps.modifier.out)
        .dot(&params.dep)
        .dot(&reps.head.out.t());
    for h in 0..=n {
        for m in 1..=n {
            if h != m {
                tables.arc[[h, m]] = arcs[[m, h]];
            }
        }
    }
    if let (Some(word), Some(span), Some(out)) = (&reps.word, &reps.span, &mut tables.span2o) {
        let scores = append_one(&word.out)
            .dot(&params.span2o)
            .dot(&append_one(&span.out).t());
        for i in 1..=n {
            for j in i..=n {
                let col = span_index(n, i, j);
                for h in 0..=n {
                    out[[i, j, h]] = scores[[h, col]];
                }
            }
        }
    }
    tables
}

/// Label scores: `con[[i, j, l]]` for spans, `dep[[h, m, r]]` for arcs.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelScores {
    pub con: Array3<f64>,
    pub dep: Array3<f64>,
}

impl LabelScores {
    pub fn zeros(n: usize, n_labels: usize, n_rels: usize) -> Self {
        LabelScores {
            con: Array3::zeros((n + 1, n + 1, n_labels)),
            dep: Array3::zeros((n + 1, n + 1, n_rels)),
        }
    }

    pub fn len(&self) -> usize {
        self.con.dim().0 - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Best label of span `(i, j)`; ties go to the smallest index. When
    /// `skip_null` is set, index 0 (the null label) is never returned
    /// unless it is the only label.
    pub fn best_label(&self, i: usize, j: usize, skip_null: bool) -> usize {
        let row = self.con.slice(s![i, j, ..]);
        let start = usize::from(skip_null && row.len() > 1);
        argmax(row.iter().copied().enumerate().skip(start))
    }

    pub fn best_rel(&self, h: usize, m: usize) -> usize {
        argmax(self.dep.slice(s![h, m, ..]).iter().copied().enumerate())
    }
}

fn argmax(scores: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (idx, score) in scores {
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((idx, score));
        }
    }
    best.map_or(0, |(idx, _)| idx)
}

pub fn score_labels(reps: &Representations, params: &HeadParams) -> LabelScores {
    let n = reps.n;
    let n_labels = params.con_label.dim().0;
    let n_rels = params.dep_label.dim().0;
    let mut out = LabelScores::zeros(n, n_labels, n_rels);
    let left = append_one(&reps.left.out);
    let right = append_one(&reps.right.out);
    for l in 0..n_labels {
        let scores = left
            .dot(&params.con_label.index_axis(Axis(0), l))
            .dot(&right.t());
        for i in 1..=n {
            for j in i..=n {
                out.con[[i, j, l]] = scores[[i - 1, j]];
            }
        }
    }
    let modifier = append_one(&reps.modifier.out);
    let head = append_one(&reps.head.out);
    for r in 0..n_rels {
        let scores = modifier
            .dot(&params.dep_label.index_axis(Axis(0), r))
            .dot(&head.t());
        for h in 0..=n {
            for m in 1..=n {
                if h != m {
                    out.dep[[h, m, r]] = scores[[m, h]];
                }
            }
        }
    }
    out
}

/// Activations recorded by [`Model::forward`] for [`Model::backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    version: u64,
    encoded: Encoded,
    reps: Representations,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.reps.n
    }

    pub fn is_empty(&self) -> bool {
        self.reps.n == 0
    }

    pub fn encoded(&self) -> &Encoded {
        &self.encoded
    }

    pub fn representations(&self) -> &Representations {
        &self.reps
    }
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub tables: ScoreTables,
    pub labels: LabelScores,
    pub tape: Tape,
}

/// A scorer with its vocabularies.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub words: Vocab,
    /// Constituent labels; index 0 is the null label.
    pub labels: Vocab,
    pub rels: Vocab,
    params: Params,
    version: u64,
}

impl Model {
    /// Randomly initialized model: every parameter uniform in
    /// `[-init_scale, init_scale]`, drawn from a ChaCha stream seeded with
    /// `config.seed`.
    pub fn new(config: ModelConfig, words: Vocab, labels: Vocab, rels: Vocab) -> Result<Self> {
        let mut model = Model::zeros(config, words, labels, rels)?;
        let scale = model.config.init_scale;
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        for (_, mut t) in model.params.tensors_mut() {
            t.mapv_inplace(|_| rng.random_range(-scale..=scale));
        }
        Ok(model)
    }

    pub fn zeros(config: ModelConfig, words: Vocab, labels: Vocab, rels: Vocab) -> Result<Self> {
        config.validate()?;
        if words.len() < 3 {
            return Err(Error::Config("word vocabulary lacks special tokens".into()));
        }
        if labels.is_empty() || rels.is_empty() {
            return Err(Error::Config("label vocabularies must not be empty".into()));
        }
        let params = Params::zeros(&config, words.len(), labels.len(), rels.len());
        Ok(Model {
            config,
            words,
            labels,
            rels,
            params,
            version: 0,
        })
    }

    pub(crate) fn from_params(
        config: ModelConfig,
        words: Vocab,
        labels: Vocab,
        rels: Vocab,
        params: Params,
    ) -> Result<Self> {
        let mut model = Model::zeros(config, words, labels, rels)?;
        for ((name, want), (_, got)) in model.params.tensors().iter().zip(params.tensors()) {
            if want.shape() != got.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable access; invalidates every outstanding [`Tape`].
    pub fn params_mut(&mut self) -> &mut Params {
        self.version += 1;
        &mut self.params
    }

    pub fn word_ids(&self, sentence: &Sentence) -> Vec<usize> {
        let mut ids = Vec::with_capacity(sentence.len() + 2);
        ids.push(BOS);
        ids.extend(
            sentence
                .tokens()
                .iter()
                .map(|w| self.words.get(w).unwrap_or(UNK)),
        );
        ids.push(EOS);
        ids
    }

    pub fn forward(&self, sentence: &Sentence, second_order: bool) -> Forward {
        let encoded = encode(&self.params.encoder, &self.word_ids(sentence));
        let reps = represent(&encoded, &self.params.heads, second_order);
        Forward {
            tables: score_structure(&reps, &self.params.heads),
            labels: score_labels(&reps, &self.params.heads),
            tape: Tape {
                version: self.version,
                encoded,
                reps,
            },
        }
    }

    /// Parameter gradients for upstream gradients on the score tables
    /// (same shapes as the forward outputs).
    pub fn backward(
        &self,
        tape: &Tape,
        d_tables: &ScoreTables,
        d_labels: Option<&LabelScores>,
    ) -> Result<Params> {
        let n = tape.reps.n;
        if tape.version != self.version
            || d_tables.len() != n
            || (d_tables.span2o.is_some() && tape.reps.span.is_none())
            || d_labels.is_some_and(|l| l.len() != n)
        {
            return Err(Error::StaleTape);
        }
        let p = &self.params.heads;
        let mut grads = self.params.zeros_like();
        let g = &mut grads.heads;
        let reps = &tape.reps;
        let k = self.config.mlp_dim;

        let mut d_left = Array2::zeros(reps.left.out.dim());
        let mut d_right = Array2::zeros(reps.right.out.dim());
        let mut d_head = Array2::zeros(reps.head.out.dim());
        let mut d_mod = Array2::zeros(reps.modifier.out.dim());

        // Constituent biaffine.
        let left1 = append_one(&reps.left.out);
        let mut g_span = Array2::zeros((n + 1, n + 1));
        for i in 1..=n {
            for j in i..=n {
                g_span[[i - 1, j]] = d_tables.span[[i, j]];
            }
        }
        g.con += &left1.t().dot(&g_span).dot(&reps.right.out);
        d_left += &g_span
            .dot(&reps.right.out)
            .dot(&p.con.t())
            .slice(s![.., ..k]);
        d_right += &g_span.t().dot(&left1).dot(&p.con);

        // Arc biaffine.
        let mod1 = append_one(&reps.modifier.out);
        let mut g_arc = Array2::zeros((n + 1, n + 1));
        for h in 0..=n {
            for m in 1..=n {
                if h != m {
                    g_arc[[m, h]] = d_tables.arc[[h, m]];
                }
            }
        }
        g.dep += &mod1.t().dot(&g_arc).dot(&reps.head.out);
        d_mod += &g_arc.dot(&reps.head.out).dot(&p.dep.t()).slice(s![.., ..k]);
        d_head += &g_arc.t().dot(&mod1).dot(&p.dep);

        if let Some(labels) = d_labels {
            let right1 = append_one(&reps.right.out);
            for l in 0..p.con_label.dim().0 {
                let mut gl = Array2::zeros((n + 1, n + 1));
                for i in 1..=n {
                    for j in i..=n {
                        gl[[i - 1, j]] = labels.con[[i, j, l]];
                    }
                }
                let u = p.con_label.index_axis(Axis(0), l);
                g.con_label
                    .index_axis_mut(Axis(0), l)
                    .scaled_add(1.0, &left1.t().dot(&gl).dot(&right1));
                d_left += &gl.dot(&right1).dot(&u.t()).slice(s![.., ..k]);
                d_right += &gl.t().dot(&left1).dot(&u).slice(s![.., ..k]);
            }
            let head1 = append_one(&reps.head.out);
            for r in 0..p.dep_label.dim().0 {
                let mut gr = Array2::zeros((n + 1, n + 1));
                for h in 0..=n {
                    for m in 1..=n {
                        if h != m {
                            gr[[m, h]] = labels.dep[[h, m, r]];
                        }
                    }
                }
                let v = p.dep_label.index_axis(Axis(0), r);
                g.dep_label
                    .index_axis_mut(Axis(0), r)
                    .scaled_add(1.0, &mod1.t().dot(&gr).dot(&head1));
                d_mod += &gr.dot(&head1).dot(&v.t()).slice(s![.., ..k]);
                d_head += &gr.t().dot(&mod1).dot(&v).slice(s![.., ..k]);
            }
        }

        let d = tape.encoded.vectors.ncols();
        let half = d / 2;
        let mut d_fence = Array2::zeros((n + 1, d));
        let mut d_vectors = Array2::zeros(tape.encoded.vectors.dim());

        if let (Some(s2), Some(word), Some(span)) = (&d_tables.span2o, &reps.word, &reps.span) {
            let k2 = self.config.span2o_dim;
            let word1 = append_one(&word.out);
            let span1 = append_one(&span.out);
            let mut g2 = Array2::zeros((n + 1, num_spans(n)));
            for i in 1..=n {
                for j in i..=n {
                    let col = span_index(n, i, j);
                    for h in 0..=n {
                        g2[[h, col]] = s2[[i, j, h]];
                    }
                }
            }
            g.span2o += &word1.t().dot(&g2).dot(&span1);
            let d_word = g2
                .dot(&span1)
                .dot(&p.span2o.t())
                .slice(s![.., ..k2])
                .to_owned();
            let d_span = g2
                .t()
                .dot(&word1)
                .dot(&p.span2o)
                .slice(s![.., ..k2])
                .to_owned();
            let dx = mlp_backward(&p.word, word, &d_word, &mut g.word);
            d_vectors.slice_mut(s![..=n, ..]).scaled_add(1.0, &dx);
            let dx = mlp_backward(&p.span, span, &d_span, &mut g.span);
            for i in 1..=n {
                for j in i..=n {
                    let row = dx.row(span_index(n, i, j));
                    d_fence.row_mut(i - 1).scaled_add(1.0, &row);
                    d_fence.row_mut(j).scaled_add(-1.0, &row);
                }
            }
        }

        d_fence += &mlp_backward(&p.left, &reps.left, &d_left, &mut g.left);
        d_fence += &mlp_backward(&p.right, &reps.right, &d_right, &mut g.right);
        let dx = mlp_backward(&p.head, &reps.head, &d_head, &mut g.head);
        d_vectors.slice_mut(s![..=n, ..]).scaled_add(1.0, &dx);
        let dx = mlp_backward(&p.modifier, &reps.modifier, &d_mod, &mut g.modifier);
        d_vectors.slice_mut(s![..=n, ..]).scaled_add(1.0, &dx);

        for k in 0..=n {
            d_vectors
                .slice_mut(s![k, ..half])
                .scaled_add(1.0, &d_fence.slice(s![k, ..half]));
            d_vectors
                .slice_mut(s![k + 1, half..])
                .scaled_add(1.0, &d_fence.slice(s![k, half..]));
        }

        encoder_backward(&self.params.encoder, &tape.encoded, &d_vectors, &mut grads.encoder);
        Ok(grads)
    }
}

fn encoder_backward(
    params: &EncoderParams,
    enc: &Encoded,
    d_vectors: &Array2<f64>,
    grad: &mut EncoderParams,
) {
    let d_hidden = params.ff_out.backward(&enc.hidden, d_vectors, &mut grad.ff_out);
    let d_pre = d_hidden * &enc.hidden.mapv(|h| 1.0 - h * h);
    let d_input = params.ff_in.backward(&enc.input, &d_pre, &mut grad.ff_in);
    for (t, (&id, &p)) in enc.ids.iter().zip(&enc.positions).enumerate() {
        grad.embed.row_mut(id).scaled_add(1.0, &d_input.row(t));
        grad.position.row_mut(p).scaled_add(1.0, &d_input.row(t));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayView2;

    fn small_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            ff_dim: 10,
            mlp_dim: 6,
            span2o_dim: 5,
            max_positions: 16,
            init_scale: 0.5,
            seed: 3,
            second_order: true,
        }
    }

    fn small_model() -> Model {
        Model::new(
            small_config(),
            Vocab::words(["a", "b", "c", "d"]),
            Vocab::con_labels(["S", "NP", "VP"]),
            Vocab::sorted(["root", "nsubj"]),
        )
        .unwrap()
    }

    fn sentence() -> Sentence {
        Sentence::from_tokens(["a", "c", "zz", "b"]).unwrap()
    }

    /// `[x ⊕ 1]ᵀ W y`, with `y` padded by 1 when `W` has an extra column.
    fn bilinear(x: &[f64], w: ArrayView2<f64>, y: &[f64]) -> f64 {
        let mut total = 0.0;
        for (a, row) in w.rows().into_iter().enumerate() {
            let xa = if a < x.len() { x[a] } else { 1.0 };
            for (b, wab) in row.iter().enumerate() {
                let yb = if b < y.len() { y[b] } else { 1.0 };
                total += xa * wab * yb;
            }
        }
        total
    }

    fn naive_mlp(layer: &Linear, x: &[f64]) -> Vec<f64> {
        layer
            .weight
            .rows()
            .into_iter()
            .zip(layer.bias.iter())
            .map(|(row, b)| {
                let pre: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
                if pre > 0.0 {
                    pre
                } else {
                    0.1 * pre
                }
            })
            .collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn zero_parameters_give_zero_vectors_and_tables() {
        let model = Model::zeros(
            small_config(),
            Vocab::words(["a"]),
            Vocab::con_labels(["S"]),
            Vocab::sorted(["root"]),
        )
        .unwrap();
        let f = model.forward(&sentence(), true);
        assert!(f.tape.encoded().vectors.iter().all(|&v| v == 0.0));
        assert!(f.tables.span.iter().all(|&v| v == 0.0));
        assert!(f.tables.arc.iter().all(|&v| v == 0.0));
        assert!(f.tables.span2o.unwrap().iter().all(|&v| v == 0.0));
        assert!(f.labels.con.iter().all(|&v| v == 0.0));
        assert_eq!(f.labels.best_label(1, 2, false), 0);
        assert_eq!(f.labels.best_rel(0, 1), 0);
    }

    #[test]
    fn deterministic_forward() {
        let a = small_model().forward(&sentence(), true);
        let b = small_model().forward(&sentence(), true);
        assert_eq!(a.tables, b.tables);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn tables_match_naive_formulas() {
        let model = small_model();
        let sent = sentence();
        let n = sent.len();
        let f = model.forward(&sent, true);
        let p = model.params();
        let ids = model.word_ids(&sent);
        // naive encoder
        let e: Vec<Vec<f64>> = ids
            .iter()
            .enumerate()
            .map(|(t, &id)| {
                let x: Vec<f64> = (0..8)
                    .map(|c| p.encoder.embed[[id, c]] + p.encoder.position[[t, c]])
                    .collect();
                let hid: Vec<f64> = (0..10)
                    .map(|r| {
                        let pre: f64 = (0..8).map(|c| p.encoder.ff_in.weight[[r, c]] * x[c]).sum::<f64>()
                            + p.encoder.ff_in.bias[r];
                        pre.tanh()
                    })
                    .collect();
                (0..8)
                    .map(|r| {
                        (0..10).map(|c| p.encoder.ff_out.weight[[r, c]] * hid[c]).sum::<f64>()
                            + p.encoder.ff_out.bias[r]
                    })
                    .collect()
            })
            .collect();
        let fence: Vec<Vec<f64>> = (0..=n)
            .map(|k| e[k][..4].iter().chain(&e[k + 1][4..]).copied().collect())
            .collect();
        let h = &p.heads;
        for i in 1..=n {
            for j in i..=n {
                let l = naive_mlp(&h.left, &fence[i - 1]);
                let r = naive_mlp(&h.right, &fence[j]);
                assert!(close(f.tables.span[[i, j]], bilinear(&l, h.con.view(), &r)));
                for lab in 0..4 {
                    let want = bilinear(&l, h.con_label.index_axis(Axis(0), lab), &r);
                    assert!(close(f.labels.con[[i, j, lab]], want));
                }
                let diff: Vec<f64> = fence[i - 1].iter().zip(&fence[j]).map(|(a, b)| a - b).collect();
                let sp = naive_mlp(&h.span, &diff);
                for (hd, e_hd) in e.iter().enumerate().take(n + 1) {
                    let w = naive_mlp(&h.word, e_hd);
                    let want = bilinear(&w, h.span2o.view(), &sp);
                    assert!(close(f.tables.span2o.as_ref().unwrap()[[i, j, hd]], want));
                }
            }
        }
        for hd in 0..=n {
            for m in 1..=n {
                if hd == m {
                    continue;
                }
                let md = naive_mlp(&h.modifier, &e[m]);
                let he = naive_mlp(&h.head, &e[hd]);
                assert!(close(f.tables.arc[[hd, m]], bilinear(&md, h.dep.view(), &he)));
                for r in 0..2 {
                    let want = bilinear(&md, h.dep_label.index_axis(Axis(0), r), &he);
                    assert!(close(f.labels.dep[[hd, m, r]], want));
                }
            }
        }
    }

    #[test]
    fn constant_span_bias_gives_constant_table() {
        let mut model = Model::zeros(
            small_config(),
            Vocab::words(["a"]),
            Vocab::con_labels(["S"]),
            Vocab::sorted(["root"]),
        )
        .unwrap();
        let k = model.config.mlp_dim;
        // r_left = 0 everywhere, so only the appended 1 row of W_con matters;
        // make r_right constant through the right MLP bias.
        model.params_mut().heads.right.bias.fill(1.0);
        model.params_mut().heads.con.row_mut(k).fill(0.5);
        let f = model.forward(&sentence(), false);
        for i in 1..=4 {
            for j in i..=4 {
                assert_eq!(f.tables.span[[i, j]], 0.5 * k as f64);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let model = small_model();
        let f = model.forward(&sentence(), true);
        let zero = ScoreTables::zeros(4, true);
        let grads = model
            .backward(&f.tape, &zero, Some(&LabelScores::zeros(4, 4, 2)))
            .unwrap();
        for (_, t) in grads.tensors() {
            assert!(t.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn span_gradient_is_outer_product() {
        let model = small_model();
        let f = model.forward(&sentence(), false);
        let mut up = ScoreTables::zeros(4, false);
        up.span[[2, 3]] = 1.0;
        let grads = model.backward(&f.tape, &up, None).unwrap();
        let reps = f.tape.representations();
        let left = append_one(&reps.left.out);
        for a in 0..=6 {
            for b in 0..6 {
                let want = left[[1, a]] * reps.right.out[[3, b]];
                assert!(close(grads.heads.con[[a, b]], want));
            }
        }
    }

    #[test]
    fn stale_tape_detected() {
        let mut model = small_model();
        let f = model.forward(&sentence(), false);
        model.params_mut().heads.con.fill(0.0);
        let up = ScoreTables::zeros(4, false);
        assert!(matches!(
            model.backward(&f.tape, &up, None),
            Err(Error::StaleTape)
        ));
        let f = model.forward(&sentence(), false);
        let wrong = ScoreTables::zeros(3, false);
        assert!(matches!(
            model.backward(&f.tape, &wrong, None),
            Err(Error::StaleTape)
        ));
    }

    /// Loss = Σ weights ⊙ tables; compares analytic gradients with central
    /// differences on every tensor.
    #[test]
    fn gradients_match_finite_differences() {
        let mut model = small_model();
        let sent = sentence();
        let n = sent.len();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut w = ScoreTables::zeros(n, true);
        w.span.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        w.arc.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        w.span2o
            .as_mut()
            .unwrap()
            .mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let mut wl = LabelScores::zeros(n, 4, 2);
        wl.con.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        wl.dep.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        // zero out entries outside the valid ranges
        for i in 0..=n {
            for j in 0..=n {
                if i == 0 || j < i {
                    w.span[[i, j]] = 0.0;
                    wl.con.slice_mut(s![i, j, ..]).fill(0.0);
                    w.span2o.as_mut().unwrap().slice_mut(s![i, j, ..]).fill(0.0);
                }
                if j == 0 || i == j {
                    w.arc[[i, j]] = 0.0;
                    wl.dep.slice_mut(s![i, j, ..]).fill(0.0);
                }
            }
        }
        let loss = |m: &Model| {
            let f = m.forward(&sent, true);
            (&f.tables.span * &w.span).sum()
                + (&f.tables.arc * &w.arc).sum()
                + (f.tables.span2o.as_ref().unwrap() * w.span2o.as_ref().unwrap()).sum()
                + (&f.labels.con * &wl.con).sum()
                + (&f.labels.dep * &wl.dep).sum()
        };
        let f = model.forward(&sent, true);
        let grads = model.backward(&f.tape, &w, Some(&wl)).unwrap();
        let names: Vec<&str> = grads.tensors().iter().map(|(n, _)| *n).collect();
        let eps = 1e-5;
        for (t_idx, name) in names.iter().enumerate() {
            let len = grads.tensors()[t_idx].1.len();
            for probe in 0..3 {
                let flat = (probe * 7919 + t_idx * 31) % len;
                let analytic = grads.tensors()[t_idx].1.iter().nth(flat).copied().unwrap();
                let bump = |model: &mut Model, delta: f64| {
                    let mut ts = model.params_mut().tensors_mut();
                    let v = ts[t_idx].1.iter_mut().nth(flat).unwrap();
                    *v += delta;
                };
                bump(&mut model, eps);
                let plus = loss(&model);
                bump(&mut model, -2.0 * eps);
                let minus = loss(&model);
                bump(&mut model, eps);
                let numeric = (plus - minus) / (2.0 * eps);
                let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6);
                assert!(err < 1e-4, "{name}[{flat}]: analytic {analytic} numeric {numeric}");
            }
        }
    }

    #[test]
    fn span2o_parameters_shared_between_headed_and_hooked() {
        let model = small_model();
        let f = model.forward(&sentence(), true);
        let mut headed = ScoreTables::zeros(4, true);
        headed.span2o.as_mut().unwrap()[[2, 3, 2]] = 1.0;
        let mut hooked = ScoreTables::zeros(4, true);
        hooked.span2o.as_mut().unwrap()[[2, 3, 4]] = 1.0;
        let gh = model.backward(&f.tape, &headed, None).unwrap();
        let gk = model.backward(&f.tape, &hooked, None).unwrap();
        assert!(gh.heads.span2o.iter().any(|&v| v != 0.0));
        assert!(gk.heads.span2o.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn span_index_is_dense() {
        let n = 5;
        let mut seen = vec![false; num_spans(n)];
        for i in 1..=n {
            for j in i..=n {
                let idx = span_index(n, i, j);
                assert!(!seen[idx]);
                seen[idx] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }
}
