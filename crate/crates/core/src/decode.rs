//! Exact argmax decoders over score tables.
//!
//! [`eisner_satta`] finds the best lexicalized tree in O(n⁴) time by
//! combining headed spans (head inside the span) with hooked spans (span
//! already attached to a governor outside of it), processing spans in order
//! of increasing width. [`cky`] and [`eisner`] decode constituency and
//! dependency trees alone; [`enumerate_ltrees`] and [`brute_force_argmax`]
//! are exhaustive oracles for small sentences.

use std::collections::HashSet;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::trees::{DTree, LTree, LexSpan, TreeParts, ROOT};

/// Largest sentence accepted by the exhaustive oracles.
pub const MAX_ENUMERATION_LEN: usize = 8;

/// Unlabeled scores for one sentence of `n` words.
///
/// * `span[[i, j]]` for `1 <= i <= j <= n`
/// * `arc[[h, m]]` for `0 <= h <= n`, `1 <= m <= n`, `h != m`
/// * `span2o[[i, j, h]]` for `1 <= i <= j <= n`, `0 <= h <= n`: the headed
///   span score when `i <= h <= j`, the hooked span score otherwise.
///
/// Entries outside these ranges are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTables {
    n: usize,
    pub span: Array2<f64>,
    pub arc: Array2<f64>,
    pub span2o: Option<Array3<f64>>,
}

impl ScoreTables {
    pub fn zeros(n: usize, second_order: bool) -> Self {
        ScoreTables {
            n,
            span: Array2::zeros((n + 1, n + 1)),
            arc: Array2::zeros((n + 1, n + 1)),
            span2o: second_order.then(|| Array3::zeros((n + 1, n + 1, n + 1))),
        }
    }

    pub fn from_parts(
        span: Array2<f64>,
        arc: Array2<f64>,
        span2o: Option<Array3<f64>>,
    ) -> Result<Self> {
        let n = span.nrows().saturating_sub(1);
        let tables = ScoreTables {
            n,
            span,
            arc,
            span2o,
        };
        tables.validate()?;
        Ok(tables)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has_second_order(&self) -> bool {
        self.span2o.is_some()
    }

    /// Checks table shapes and that every entry in range is finite.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let dim = n + 1;
        if self.span.dim() != (dim, dim) || self.arc.dim() != (dim, dim) {
            return Err(Error::InvalidScores(format!(
                "tables must be {dim}x{dim} for {n} words"
            )));
        }
        if let Some(s2) = &self.span2o {
            if s2.dim() != (dim, dim, dim) {
                return Err(Error::InvalidScores(format!(
                    "second-order table must be {dim}x{dim}x{dim}"
                )));
            }
        }
        for i in 1..=n {
            for j in i..=n {
                if !self.span[[i, j]].is_finite() {
                    return Err(Error::InvalidScores(format!("span ({i}, {j}) is not finite")));
                }
                if let Some(s2) = &self.span2o {
                    if (0..=n).any(|h| !s2[[i, j, h]].is_finite()) {
                        return Err(Error::InvalidScores(format!(
                            "second-order scores of ({i}, {j}) are not finite"
                        )));
                    }
                }
            }
        }
        for h in 0..=n {
            for m in 1..=n {
                if h != m && !self.arc[[h, m]].is_finite() {
                    return Err(Error::InvalidScores(format!("arc ({h}, {m}) is not finite")));
                }
            }
        }
        Ok(())
    }

    /// Score of a tree: span and arc scores, plus headed and hooked span
    /// scores when `second_order` is set.
    pub fn score_parts(&self, parts: &TreeParts, second_order: bool) -> f64 {
        let mut total = 0.0;
        for &(i, j) in &parts.spans {
            total += self.span[[i, j]];
        }
        for &(h, m) in &parts.arcs {
            total += self.arc[[h, m]];
        }
        if second_order {
            let s2 = self
                .span2o
                .as_ref()
                .expect("second-order scores requested but missing");
            for &(i, j, h) in parts.headed.iter().chain(&parts.hooked) {
                total += s2[[i, j, h]];
            }
        }
        total
    }

    pub fn score_tree(&self, tree: &LTree, second_order: bool) -> f64 {
        self.score_parts(&tree.parts(), second_order)
    }
}

/// Hamming cost against a gold tree for cost-augmented decoding.
#[derive(Clone, Debug)]
pub struct CostConfig {
    pub gold: LTree,
    pub span_cost: f64,
    pub arc_cost: f64,
}

impl CostConfig {
    pub fn new(gold: LTree) -> Self {
        CostConfig {
            gold,
            span_cost: 1.0,
            arc_cost: 1.0,
        }
    }

    pub fn with_costs(gold: LTree, span_cost: f64, arc_cost: f64) -> Result<Self> {
        if !(span_cost >= 0.0 && arc_cost >= 0.0) {
            return Err(Error::Config("costs must be non-negative".into()));
        }
        Ok(CostConfig {
            gold,
            span_cost,
            arc_cost,
        })
    }

    /// Weighted number of spans and arcs (including the root arc) of `tree`
    /// missing from the gold tree.
    pub fn hamming(&self, tree: &LTree) -> f64 {
        self.hamming_parts(&tree.parts())
    }

    pub fn hamming_parts(&self, parts: &TreeParts) -> f64 {
        let gold = self.gold.parts();
        let gold_spans: HashSet<_> = gold.spans.iter().collect();
        let gold_arcs: HashSet<_> = gold.arcs.iter().collect();
        let spans = parts.spans.iter().filter(|s| !gold_spans.contains(s)).count();
        let arcs = parts.arcs.iter().filter(|a| !gold_arcs.contains(a)).count();
        self.span_cost * spans as f64 + self.arc_cost * arcs as f64
    }
}

/// Adds the span cost to every non-gold span and the arc cost to every
/// non-gold arc.
pub fn cost_augment(scores: &ScoreTables, cost: &CostConfig) -> Result<ScoreTables> {
    let n = scores.len();
    if cost.gold.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: cost.gold.len(),
        });
    }
    let gold = cost.gold.parts();
    let mut out = scores.clone();
    let mut span_mask = Array2::from_elem((n + 1, n + 1), true);
    for &(i, j) in &gold.spans {
        span_mask[[i, j]] = false;
    }
    let mut arc_mask = Array2::from_elem((n + 1, n + 1), true);
    for &(h, m) in &gold.arcs {
        arc_mask[[h, m]] = false;
    }
    for i in 1..=n {
        for j in i..=n {
            if span_mask[[i, j]] {
                out.span[[i, j]] += cost.span_cost;
            }
        }
    }
    for h in 0..=n {
        for m in 1..=n {
            if h != m && arc_mask[[h, m]] {
                out.arc[[h, m]] += cost.arc_cost;
            }
        }
    }
    Ok(out)
}

/// Result of a decoder: the best tree and its score.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub tree: LTree,
    pub score: f64,
}

const NONE: u32 = u32::MAX;

/// Dynamic programming tables of [`eisner_satta`].
///
/// `alpha(i, j, h)` is the best headed span with `i <= h <= j`;
/// `beta(i, j, g)` is the best span `(i, j)` attached to a governor `g`
/// outside of it. Entries are finalized in order of increasing width.
#[derive(Clone, Debug)]
pub struct Chart {
    n: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Best split point of each headed span.
    split: Vec<u32>,
    /// Best head of each hooked span.
    attach: Vec<u32>,
}

impl Chart {
    fn new(n: usize) -> Self {
        let size = (n + 1) * (n + 1) * (n + 1);
        Chart {
            n,
            alpha: vec![f64::NEG_INFINITY; size],
            beta: vec![f64::NEG_INFINITY; size],
            split: vec![NONE; size],
            attach: vec![NONE; size],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, h: usize) -> usize {
        (i * (self.n + 1) + j) * (self.n + 1) + h
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn alpha(&self, i: usize, j: usize, h: usize) -> f64 {
        self.alpha[self.idx(i, j, h)]
    }

    pub fn beta(&self, i: usize, j: usize, g: usize) -> f64 {
        self.beta[self.idx(i, j, g)]
    }

    /// Fills the chart. Ties prefer the smallest split point, then the
    /// smallest head.
    pub fn fill(scores: &ScoreTables, second_order: bool) -> Result<Self> {
        let n = scores.len();
        if n == 0 {
            return Err(Error::EmptySentence);
        }
        scores.validate()?;
        let s2 = if second_order {
            Some(scores.span2o.as_ref().ok_or_else(|| {
                Error::InvalidScores("second-order decoding needs span2o scores".into())
            })?)
        } else {
            None
        };
        let second = |i: usize, j: usize, h: usize| s2.map_or(0.0, |t| t[[i, j, h]]);
        let mut chart = Chart::new(n);
        for width in 1..=n {
            for i in 1..=n + 1 - width {
                let j = i + width - 1;
                let span = scores.span[[i, j]];
                if width == 1 {
                    let at = chart.idx(i, i, i);
                    chart.alpha[at] = span + second(i, i, i);
                } else {
                    for h in i..=j {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_k = NONE;
                        for k in i..j {
                            let cand = if h <= k {
                                chart.alpha[chart.idx(i, k, h)] + chart.beta[chart.idx(k + 1, j, h)]
                            } else {
                                chart.beta[chart.idx(i, k, h)] + chart.alpha[chart.idx(k + 1, j, h)]
                            };
                            if cand > best {
                                best = cand;
                                best_k = k as u32;
                            }
                        }
                        let at = chart.idx(i, j, h);
                        chart.alpha[at] = span + second(i, j, h) + best;
                        chart.split[at] = best_k;
                    }
                }
                // The root only governs the full sentence.
                let governors = (1..i).chain(j + 1..=n);
                let governors: Box<dyn Iterator<Item = usize>> = if i == 1 && j == n {
                    Box::new(std::iter::once(ROOT))
                } else {
                    Box::new(governors)
                };
                for g in governors {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_h = NONE;
                    for h in i..=j {
                        let cand = chart.alpha[chart.idx(i, j, h)] + scores.arc[[g, h]];
                        if cand > best {
                            best = cand;
                            best_h = h as u32;
                        }
                    }
                    let at = chart.idx(i, j, g);
                    chart.beta[at] = second(i, j, g) + best;
                    chart.attach[at] = best_h;
                }
            }
        }
        Ok(chart)
    }

    /// Score of the best tree.
    pub fn best_score(&self) -> f64 {
        self.beta(1, self.n, ROOT)
    }

    /// Follows backpointers from the full sentence attached to the root.
    pub fn backtrack(&self) -> LTree {
        let mut spans = Vec::with_capacity(2 * self.n - 1);
        let h = self.attach[self.idx(1, self.n, ROOT)] as usize;
        self.collect(1, self.n, h, &mut spans);
        LTree::new(self.n, spans).expect("backpointers describe a valid l-tree")
    }

    fn collect(&self, i: usize, j: usize, h: usize, out: &mut Vec<LexSpan>) {
        out.push(LexSpan::new(i, j, h, ""));
        if i == j {
            return;
        }
        let k = self.split[self.idx(i, j, h)] as usize;
        if h <= k {
            self.collect(i, k, h, out);
            let dep = self.attach[self.idx(k + 1, j, h)] as usize;
            self.collect(k + 1, j, dep, out);
        } else {
            let dep = self.attach[self.idx(i, k, h)] as usize;
            self.collect(i, k, dep, out);
            self.collect(k + 1, j, h, out);
        }
    }
}

/// Best unlabeled lexicalized tree under first-order scores (span + arc),
/// optionally with second-order span scores and a Hamming cost added.
pub fn eisner_satta(
    scores: &ScoreTables,
    second_order: bool,
    cost: Option<&CostConfig>,
) -> Result<Decoded> {
    if scores.is_empty() {
        return Err(Error::EmptySentence);
    }
    let augmented;
    let scores = match cost {
        Some(cost) => {
            augmented = cost_augment(scores, cost)?;
            &augmented
        }
        None => scores,
    };
    let chart = Chart::fill(scores, second_order)?;
    Ok(Decoded {
        score: chart.best_score(),
        tree: chart.backtrack(),
    })
}

/// Best binary bracketing under span scores alone.
pub fn cky(span: &Array2<f64>) -> Result<(Vec<(usize, usize)>, f64)> {
    let n = span.nrows().saturating_sub(1);
    if n == 0 {
        return Err(Error::EmptySentence);
    }
    let mut best = Array2::from_elem((n + 2, n + 2), f64::NEG_INFINITY);
    let mut split = Array2::from_elem((n + 2, n + 2), 0usize);
    for i in 1..=n {
        best[[i, i]] = span[[i, i]];
    }
    for width in 2..=n {
        for i in 1..=n + 1 - width {
            let j = i + width - 1;
            let mut top = f64::NEG_INFINITY;
            for k in i..j {
                let cand = best[[i, k]] + best[[k + 1, j]];
                if cand > top {
                    top = cand;
                    split[[i, j]] = k;
                }
            }
            best[[i, j]] = span[[i, j]] + top;
        }
    }
    let mut spans = Vec::with_capacity(2 * n - 1);
    let mut stack = vec![(1, n)];
    while let Some((i, j)) = stack.pop() {
        spans.push((i, j));
        if i < j {
            let k = split[[i, j]];
            stack.push((k + 1, j));
            stack.push((i, k));
        }
    }
    Ok((spans, best[[1, n]]))
}

/// Best projective single-rooted dependency tree under arc scores
/// (first-order Eisner).
pub fn eisner(arc: &Array2<f64>) -> Result<(DTree, f64)> {
    let n = arc.nrows().saturating_sub(1);
    if n == 0 {
        return Err(Error::EmptySentence);
    }
    let dim = n + 1;
    let neg = f64::NEG_INFINITY;
    // complete_r[s][t]: head s covering s..t; complete_l[s][t]: head t.
    let mut complete_r = Array2::from_elem((dim, dim), neg);
    let mut complete_l = Array2::from_elem((dim, dim), neg);
    let mut incomplete_r = Array2::from_elem((dim, dim), neg);
    let mut incomplete_l = Array2::from_elem((dim, dim), neg);
    let mut bp_cr = Array2::zeros((dim, dim));
    let mut bp_cl = Array2::zeros((dim, dim));
    let mut bp_ir = Array2::zeros((dim, dim));
    let mut bp_il = Array2::zeros((dim, dim));
    for s in 1..=n {
        complete_r[[s, s]] = 0.0;
        complete_l[[s, s]] = 0.0;
    }
    for width in 1..n {
        for s in 1..=n - width {
            let t = s + width;
            let (mut top, mut arg) = (neg, s);
            for r in s..t {
                let cand = complete_r[[s, r]] + complete_l[[r + 1, t]];
                if cand > top {
                    top = cand;
                    arg = r;
                }
            }
            incomplete_r[[s, t]] = top + arc[[s, t]];
            incomplete_l[[s, t]] = top + arc[[t, s]];
            bp_ir[[s, t]] = arg;
            bp_il[[s, t]] = arg;

            let (mut top, mut arg) = (neg, s);
            for r in s..t {
                let cand = complete_l[[s, r]] + incomplete_l[[r, t]];
                if cand > top {
                    top = cand;
                    arg = r;
                }
            }
            complete_l[[s, t]] = top;
            bp_cl[[s, t]] = arg;

            let (mut top, mut arg) = (neg, t);
            for r in s + 1..=t {
                let cand = incomplete_r[[s, r]] + complete_r[[r, t]];
                if cand > top {
                    top = cand;
                    arg = r;
                }
            }
            complete_r[[s, t]] = top;
            bp_cr[[s, t]] = arg;
        }
    }
    let (mut score, mut root) = (neg, 1);
    for r in 1..=n {
        let cand = complete_l[[1, r]] + complete_r[[r, n]] + arc[[ROOT, r]];
        if cand > score {
            score = cand;
            root = r;
        }
    }

    enum Item {
        CompleteL(usize, usize),
        CompleteR(usize, usize),
        IncompleteL(usize, usize),
        IncompleteR(usize, usize),
    }
    let mut heads = vec![ROOT; n];
    let mut stack = vec![Item::CompleteL(1, root), Item::CompleteR(root, n)];
    while let Some(item) = stack.pop() {
        match item {
            Item::CompleteL(s, t) if s < t => {
                let r = bp_cl[[s, t]];
                stack.push(Item::CompleteL(s, r));
                stack.push(Item::IncompleteL(r, t));
            }
            Item::CompleteR(s, t) if s < t => {
                let r = bp_cr[[s, t]];
                stack.push(Item::IncompleteR(s, r));
                stack.push(Item::CompleteR(r, t));
            }
            Item::IncompleteL(s, t) => {
                heads[s - 1] = t;
                let r = bp_il[[s, t]];
                stack.push(Item::CompleteR(s, r));
                stack.push(Item::CompleteL(r + 1, t));
            }
            Item::IncompleteR(s, t) => {
                heads[t - 1] = s;
                let r = bp_ir[[s, t]];
                stack.push(Item::CompleteR(s, r));
                stack.push(Item::CompleteL(r + 1, t));
            }
            _ => {}
        }
    }
    let tree = DTree::unlabeled(heads).expect("Eisner backpointers form a tree");
    Ok((tree, score))
}

type Shape = (Vec<(usize, usize, usize)>, usize);

/// Every unlabeled lexicalized tree over `n` words, exactly once each;
/// there are `Catalan(n - 1) * 2^(n - 1)` of them.
pub fn enumerate_ltrees(n: usize) -> Result<impl Iterator<Item = LTree>> {
    if n == 0 {
        return Err(Error::EmptySentence);
    }
    if n > MAX_ENUMERATION_LEN {
        return Err(Error::TooLarge {
            n,
            max: MAX_ENUMERATION_LEN,
        });
    }
    // memo[i][j]: all (spans, head) of trees over i..=j
    let mut memo: Vec<Vec<Vec<Shape>>> = vec![vec![Vec::new(); n + 2]; n + 2];
    for width in 1..=n {
        for i in 1..=n + 1 - width {
            let j = i + width - 1;
            let mut shapes = Vec::new();
            if width == 1 {
                shapes.push((vec![(i, i, i)], i));
            }
            for k in i..j {
                for (left, lh) in &memo[i][k] {
                    for (right, rh) in &memo[k + 1][j] {
                        for h in [*lh, *rh] {
                            let mut spans = Vec::with_capacity(2 * width - 1);
                            spans.push((i, j, h));
                            spans.extend_from_slice(left);
                            spans.extend_from_slice(right);
                            shapes.push((spans, h));
                        }
                    }
                }
            }
            memo[i][j] = shapes;
        }
    }
    let all = std::mem::take(&mut memo[1][n]);
    Ok(all.into_iter().map(move |(spans, _)| {
        LTree::from_triples(n, spans).expect("enumerated trees are valid")
    }))
}

/// Exhaustive argmax over [`enumerate_ltrees`]; the objective is computed
/// part by part, with the Hamming cost counted explicitly. Ties go to the
/// lexicographically smallest span list.
pub fn brute_force_argmax(
    scores: &ScoreTables,
    second_order: bool,
    cost: Option<&CostConfig>,
) -> Result<Decoded> {
    let n = scores.len();
    scores.validate()?;
    if second_order && !scores.has_second_order() {
        return Err(Error::InvalidScores(
            "second-order decoding needs span2o scores".into(),
        ));
    }
    if let Some(cost) = cost {
        if cost.gold.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: cost.gold.len(),
            });
        }
    }
    let mut best: Option<(f64, LTree)> = None;
    for tree in enumerate_ltrees(n)? {
        let parts = tree.parts();
        let mut score = scores.score_parts(&parts, second_order);
        if let Some(cost) = cost {
            score += cost.hamming_parts(&parts);
        }
        let better = match &best {
            None => true,
            Some((top, top_tree)) => {
                score > *top || (score == *top && tree.triples() < top_tree.triples())
            }
        };
        if better {
            best = Some((score, tree));
        }
    }
    let (score, tree) = best.expect("at least one tree");
    Ok(Decoded { tree, score })
}
