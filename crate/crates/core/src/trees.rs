//! Sentences, constituency trees, dependency trees and lexicalized trees.
//!
//! Word positions are 1-based; position 0 is the artificial root token.
//! Constituent spans `(i, j)` are inclusive on both ends.
//!
//! An n-ary [`CTree`] may contain unary chains, stored as several
//! constituents over the same span (outermost first). A binarized `CTree`
//! has exactly one label per span: unary chains are joined with
//! [`UNARY_SEP`] and spans introduced by binarization carry the parent label
//! followed by `*`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of the artificial root token.
pub const ROOT: usize = 0;

/// Separator for collapsed unary chains, e.g. `S::VP`.
pub const UNARY_SEP: &str = "::";

/// Label assigned by the labeler to spans that are removed on debinarization.
pub const NULL_LABEL: &str = "*";

/// Returns true for labels of spans introduced by binarization.
pub fn is_intermediate(label: &str) -> bool {
    label.ends_with('*')
}

pub fn intermediate_label(parent: &str) -> String {
    format!("{parent}*")
}

/// A tokenized sentence with optional part-of-speech tags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    tokens: Vec<String>,
    pos: Option<Vec<String>>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, pos: Option<Vec<String>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        if let Some(pos) = &pos {
            if pos.len() != tokens.len() {
                return Err(Error::LengthMismatch {
                    expected: tokens.len(),
                    found: pos.len(),
                });
            }
        }
        Ok(Sentence { tokens, pos })
    }

    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Sentence::new(tokens.into_iter().map(Into::into).collect(), None)
    }

    /// Number of words (the root is not counted).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pos(&self) -> Option<&[String]> {
        self.pos.as_deref()
    }

    /// Form of word `m` (1-based).
    pub fn token(&self, m: usize) -> &str {
        &self.tokens[m - 1]
    }

    pub fn with_pos(mut self, pos: Option<Vec<String>>) -> Result<Self> {
        if let Some(tags) = &pos {
            if tags.len() != self.tokens.len() {
                return Err(Error::LengthMismatch {
                    expected: self.tokens.len(),
                    found: tags.len(),
                });
            }
        }
        self.pos = pos;
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Constituent {
    pub i: usize,
    pub j: usize,
    pub label: String,
}

impl Constituent {
    pub fn new(i: usize, j: usize, label: impl Into<String>) -> Self {
        Constituent {
            i,
            j,
            label: label.into(),
        }
    }

    pub fn width(&self) -> usize {
        self.j - self.i + 1
    }
}

/// Constituency tree stored as a set of labeled spans.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CTree {
    n: usize,
    constituents: Vec<Constituent>,
    binarized: bool,
}

impl CTree {
    /// Builds an n-ary tree. Constituents are put in canonical order
    /// (left to right, outer before inner); the relative order of
    /// constituents over the same span is kept as the unary chain order.
    pub fn new(n: usize, mut constituents: Vec<Constituent>) -> Result<Self> {
        canonical_sort(&mut constituents);
        check_nesting(n, &constituents)?;
        Ok(CTree {
            n,
            constituents,
            binarized: false,
        })
    }

    /// Builds a binarized tree: exactly `2n - 1` distinct spans forming a
    /// full binary tree with all single-word leaves.
    pub fn binarized(n: usize, mut constituents: Vec<Constituent>) -> Result<Self> {
        canonical_sort(&mut constituents);
        check_nesting(n, &constituents)?;
        if constituents.len() != 2 * n - 1 {
            return Err(Error::InvalidTree(format!(
                "binarized tree over {n} words needs {} spans, found {}",
                2 * n - 1,
                constituents.len()
            )));
        }
        let spans: Vec<(usize, usize)> = constituents.iter().map(|c| (c.i, c.j)).collect();
        let mut next = 0;
        check_binary(&spans, &mut next)?;
        Ok(CTree {
            n,
            constituents,
            binarized: true,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn constituents(&self) -> &[Constituent] {
        &self.constituents
    }

    pub fn is_binarized(&self) -> bool {
        self.binarized
    }
}

fn canonical_sort(constituents: &mut [Constituent]) {
    // Stable: keeps unary chain order for identical spans.
    constituents.sort_by(|a, b| a.i.cmp(&b.i).then(b.j.cmp(&a.j)));
}

fn check_nesting(n: usize, sorted: &[Constituent]) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptySentence);
    }
    for c in sorted {
        if c.i < 1 || c.i > c.j || c.j > n {
            return Err(Error::InvalidTree(format!(
                "span ({}, {}) out of range for {n} words",
                c.i, c.j
            )));
        }
    }
    match sorted.first() {
        Some(c) if c.i == 1 && c.j == n => {}
        _ => {
            return Err(Error::InvalidTree(format!(
                "no constituent spans the whole sentence (1, {n})"
            )))
        }
    }
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for c in sorted {
        while let Some(&(_, top_j)) = stack.last() {
            if top_j < c.i {
                stack.pop();
            } else {
                break;
            }
        }
        if let Some(&(top_i, top_j)) = stack.last() {
            if c.j > top_j {
                return Err(Error::InvalidTree(format!(
                    "span ({}, {}) crosses ({top_i}, {top_j})",
                    c.i, c.j
                )));
            }
        }
        stack.push((c.i, c.j));
    }
    Ok(())
}

/// Checks that `spans[*next..]` starts with a full binary tree in preorder.
fn check_binary(spans: &[(usize, usize)], next: &mut usize) -> Result<()> {
    let (i, j) = *spans
        .get(*next)
        .ok_or_else(|| Error::InvalidTree("missing child span".into()))?;
    *next += 1;
    if i == j {
        return Ok(());
    }
    let (li, lj) = *spans
        .get(*next)
        .ok_or_else(|| Error::InvalidTree(format!("span ({i}, {j}) has no children")))?;
    if li != i || lj >= j {
        return Err(Error::InvalidTree(format!(
            "span ({i}, {j}) is not split into two children"
        )));
    }
    check_binary(spans, next)?;
    match spans.get(*next) {
        Some(&(ri, rj)) if ri == lj + 1 && rj == j => check_binary(spans, next),
        _ => Err(Error::InvalidTree(format!(
            "span ({i}, {j}) is not split into two children"
        ))),
    }
}

/// A constituency node with its unary chain and children, used to walk an
/// n-ary [`CTree`] top-down.
#[derive(Debug)]
pub(crate) struct Node {
    pub i: usize,
    pub j: usize,
    /// Unary chain, outermost first.
    pub labels: Vec<String>,
    pub children: Vec<Child>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Child {
    Word(usize),
    Node(usize),
}

impl Child {
    pub fn span(self, nodes: &[Node]) -> (usize, usize) {
        match self {
            Child::Word(w) => (w, w),
            Child::Node(idx) => (nodes[idx].i, nodes[idx].j),
        }
    }
}

/// Groups a tree's constituents into nodes. Node 0 is the root.
pub(crate) fn build_nodes(tree: &CTree) -> Vec<Node> {
    let mut nodes: Vec<Node> = Vec::new();
    let mut child_nodes: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    for c in &tree.constituents {
        if let Some(&last) = nodes.len().checked_sub(1).as_ref() {
            if nodes[last].i == c.i && nodes[last].j == c.j {
                nodes[last].labels.push(c.label.clone());
                continue;
            }
        }
        while let Some(&top) = stack.last() {
            if nodes[top].j < c.i {
                stack.pop();
            } else {
                break;
            }
        }
        let idx = nodes.len();
        if let Some(&parent) = stack.last() {
            child_nodes[parent].push(idx);
        }
        nodes.push(Node {
            i: c.i,
            j: c.j,
            labels: vec![c.label.clone()],
            children: Vec::new(),
        });
        child_nodes.push(Vec::new());
        stack.push(idx);
    }
    for (idx, kids) in child_nodes.into_iter().enumerate() {
        let mut children = Vec::new();
        let mut kids = kids.into_iter().peekable();
        let mut p = nodes[idx].i;
        while p <= nodes[idx].j {
            match kids.peek() {
                Some(&k) if nodes[k].i == p => {
                    children.push(Child::Node(k));
                    p = nodes[k].j + 1;
                    kids.next();
                }
                _ => {
                    children.push(Child::Word(p));
                    p += 1;
                }
            }
        }
        nodes[idx].children = children;
    }
    nodes
}

/// A labeled dependency arc `h -> m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Arc {
    pub h: usize,
    pub m: usize,
    pub rel: Option<String>,
}

/// Dependency tree as a head array: `heads[m - 1]` is the head of word `m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DTree {
    heads: Vec<usize>,
    rels: Option<Vec<String>>,
}

impl DTree {
    /// Validates a single-rooted, acyclic head array.
    pub fn new(heads: Vec<usize>, rels: Option<Vec<String>>) -> Result<Self> {
        let n = heads.len();
        if n == 0 {
            return Err(Error::EmptySentence);
        }
        if let Some(rels) = &rels {
            if rels.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: rels.len(),
                });
            }
        }
        for (idx, &h) in heads.iter().enumerate() {
            if h > n || h == idx + 1 {
                return Err(Error::InvalidTree(format!(
                    "word {} has invalid head {h}",
                    idx + 1
                )));
            }
        }
        match heads.iter().filter(|&&h| h == ROOT).count() {
            1 => {}
            0 => return Err(Error::CycleDetected { line: None }),
            _ => return Err(Error::MultiRoot { line: None }),
        }
        // 0 = unvisited, 1 = on current path, 2 = reaches the root.
        let mut state = vec![0u8; n + 1];
        state[ROOT] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut w = start;
            while state[w] == 0 {
                state[w] = 1;
                path.push(w);
                w = heads[w - 1];
            }
            if state[w] == 1 {
                return Err(Error::CycleDetected { line: None });
            }
            for p in path {
                state[p] = 2;
            }
        }
        Ok(DTree { heads, rels })
    }

    pub fn unlabeled(heads: Vec<usize>) -> Result<Self> {
        DTree::new(heads, None)
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    /// Head of word `m` (1-based).
    pub fn head(&self, m: usize) -> usize {
        self.heads[m - 1]
    }

    pub fn rels(&self) -> Option<&[String]> {
        self.rels.as_deref()
    }

    pub fn rel(&self, m: usize) -> Option<&str> {
        self.rels.as_ref().map(|r| r[m - 1].as_str())
    }

    /// The word attached to the root.
    pub fn root(&self) -> usize {
        self.heads.iter().position(|&h| h == ROOT).unwrap() + 1
    }

    pub fn arcs(&self) -> impl Iterator<Item = Arc> + '_ {
        self.heads.iter().enumerate().map(move |(idx, &h)| Arc {
            h,
            m: idx + 1,
            rel: self.rel(idx + 1).map(str::to_owned),
        })
    }

    pub fn without_rels(&self) -> DTree {
        DTree {
            heads: self.heads.clone(),
            rels: None,
        }
    }

    pub fn with_rels(&self, rels: Vec<String>) -> Result<DTree> {
        DTree::new(self.heads.clone(), Some(rels))
    }
}

/// Returns true iff every arc's inner words are descendants of its head.
pub fn is_projective(tree: &DTree) -> bool {
    let heads = tree.heads();
    let dominated_by = |mut w: usize, h: usize| {
        while w != ROOT {
            w = heads[w - 1];
            if w == h {
                return true;
            }
        }
        h == ROOT
    };
    for (idx, &h) in heads.iter().enumerate() {
        let m = idx + 1;
        let (lo, hi) = if h < m { (h, m) } else { (m, h) };
        for w in lo + 1..hi {
            if !dominated_by(w, h) {
                return false;
            }
        }
    }
    true
}

/// Per-word link extents used to find the externally linked words of a span.
struct Links {
    /// Indexed by word; entry 0 unused.
    heads: Vec<usize>,
    min_dep: Vec<usize>,
    max_dep: Vec<usize>,
}

impl Links {
    fn new(tree: &DTree) -> Self {
        let n = tree.len();
        let mut heads = vec![ROOT; n + 1];
        let mut min_dep = vec![usize::MAX; n + 1];
        let mut max_dep = vec![0; n + 1];
        for (idx, &h) in tree.heads().iter().enumerate() {
            let m = idx + 1;
            heads[m] = h;
            if h != ROOT {
                min_dep[h] = min_dep[h].min(m);
                max_dep[h] = max_dep[h].max(m);
            }
        }
        Links {
            heads,
            min_dep,
            max_dep,
        }
    }

    /// Words in `[i, j]` with a head or a dependent outside the span.
    fn linked(&self, i: usize, j: usize) -> Vec<usize> {
        (i..=j)
            .filter(|&w| {
                let h = self.heads[w];
                h == ROOT || h < i || h > j || self.min_dep[w] < i || self.max_dep[w] > j
            })
            .collect()
    }

    fn single_headed(&self, i: usize, j: usize) -> bool {
        self.linked(i, j).len() == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IncompatReason {
    /// More than one word of the constituent links outside it.
    MultiHead,
    /// No word of the constituent links outside it.
    NoHead,
    /// The dependency tree is not projective.
    NonProjective,
}

impl fmt::Display for IncompatReason {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        let name = match self {
            IncompatReason::MultiHead => "MULTI_HEAD",
            IncompatReason::NoHead => "NO_HEAD",
            IncompatReason::NonProjective => "NON_PROJECTIVE",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offense {
    pub constituent: Constituent,
    /// Words of the constituent that link outside it (for
    /// [`IncompatReason::NonProjective`]: words under the offending arc that
    /// its head does not dominate).
    pub linked: BTreeSet<usize>,
    pub reason: IncompatReason,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatReport {
    pub compatible: bool,
    pub offending: Vec<Offense>,
    /// Reason of the first offense.
    pub reason: Option<IncompatReason>,
}

/// Checks that every constituent has exactly one word linked (as head or
/// dependent) to words outside of it, and that the dependency tree is
/// projective.
pub fn check_compatibility(ctree: &CTree, dtree: &DTree) -> Result<CompatReport> {
    if ctree.len() != dtree.len() {
        return Err(Error::LengthMismatch {
            expected: ctree.len(),
            found: dtree.len(),
        });
    }
    let links = Links::new(dtree);
    let mut offending = Vec::new();
    let mut last_span = None;
    for c in ctree.constituents() {
        if last_span == Some((c.i, c.j)) {
            continue;
        }
        last_span = Some((c.i, c.j));
        let linked = links.linked(c.i, c.j);
        let reason = match linked.len() {
            1 => continue,
            0 => IncompatReason::NoHead,
            _ => IncompatReason::MultiHead,
        };
        offending.push(Offense {
            constituent: c.clone(),
            linked: linked.into_iter().collect(),
            reason,
        });
    }
    if offending.is_empty() {
        offending.extend(non_projective_offenses(ctree, dtree));
    }
    let reason = offending.first().map(|o| o.reason);
    Ok(CompatReport {
        compatible: offending.is_empty(),
        offending,
        reason,
    })
}

/// For each non-projective arc, the smallest constituent containing it.
fn non_projective_offenses(ctree: &CTree, dtree: &DTree) -> Vec<Offense> {
    let heads = dtree.heads();
    let mut out: Vec<Offense> = Vec::new();
    for (idx, &h) in heads.iter().enumerate() {
        let m = idx + 1;
        let (lo, hi) = if h < m { (h, m) } else { (m, h) };
        let undominated: BTreeSet<usize> = (lo + 1..hi)
            .filter(|&w| {
                let mut a = w;
                while a != ROOT {
                    a = heads[a - 1];
                    if a == h {
                        return false;
                    }
                }
                h != ROOT
            })
            .collect();
        if undominated.is_empty() {
            continue;
        }
        let (lo, hi) = (lo.max(1), hi);
        let container = ctree
            .constituents()
            .iter()
            .filter(|c| c.i <= lo && hi <= c.j)
            .min_by_key(|c| c.width())
            .expect("root span contains every arc");
        match out.iter_mut().find(|o| o.constituent == *container) {
            Some(o) => o.linked.extend(undominated),
            None => out.push(Offense {
                constituent: container.clone(),
                linked: undominated,
                reason: IncompatReason::NonProjective,
            }),
        }
    }
    out
}

fn incompatible(i: usize, j: usize, linked: Vec<usize>) -> Error {
    Error::Incompatible { i, j, linked }
}

/// Converts an n-ary tree into a binary one whose every span has a single
/// externally linked word under `dtree`.
///
/// At a node with children `c_1 .. c_r`, left-binarization
/// (`c_1 .. c_{r-1} | c_r`) is tried first, then right-binarization
/// (`c_1 | c_2 .. c_r`), then the remaining split points from left to right.
/// Unary chains are joined with [`UNARY_SEP`], new spans are labeled with
/// the parent label plus `*`, and words that are not constituents on their
/// own become `*`-labeled leaves.
pub fn head_binarize(ctree: &CTree, dtree: &DTree) -> Result<CTree> {
    let report = check_compatibility(ctree, dtree)?;
    if let Some(o) = report.offending.first() {
        return Err(incompatible(
            o.constituent.i,
            o.constituent.j,
            o.linked.iter().copied().collect(),
        ));
    }
    let nodes = build_nodes(ctree);
    let links = Links::new(dtree);
    let mut out = Vec::with_capacity(2 * ctree.len() - 1);
    binarize_node(&nodes, 0, &links, &mut out)?;
    CTree::binarized(ctree.len(), out)
}

fn binarize_node(
    nodes: &[Node],
    idx: usize,
    links: &Links,
    out: &mut Vec<Constituent>,
) -> Result<()> {
    let node = &nodes[idx];
    let label = node.labels.join(UNARY_SEP);
    out.push(Constituent::new(node.i, node.j, label.clone()));
    if node.children.len() == 1 {
        // A single-word constituent.
        return Ok(());
    }
    let star = intermediate_label(&label);
    split_children(nodes, &node.children, &star, links, out)
}

fn emit_child(
    nodes: &[Node],
    child: Child,
    star: &str,
    links: &Links,
    out: &mut Vec<Constituent>,
) -> Result<()> {
    match child {
        Child::Word(w) => {
            out.push(Constituent::new(w, w, star));
            Ok(())
        }
        Child::Node(idx) => binarize_node(nodes, idx, links, out),
    }
}

fn split_children(
    nodes: &[Node],
    items: &[Child],
    star: &str,
    links: &Links,
    out: &mut Vec<Constituent>,
) -> Result<()> {
    if items.len() == 1 {
        return emit_child(nodes, items[0], star, links, out);
    }
    let group_span = |group: &[Child]| {
        (
            group[0].span(nodes).0,
            group[group.len() - 1].span(nodes).1,
        )
    };
    let feasible = |k: usize| {
        [&items[..k], &items[k..]].iter().all(|group| {
            let (i, j) = group_span(group);
            group.len() == 1 || links.single_headed(i, j)
        })
    };
    let r = items.len();
    let candidates = std::iter::once(r - 1)
        .chain(std::iter::once(1))
        .chain(2..r - 1);
    let k = candidates.into_iter().find(|&k| feasible(k)).ok_or_else(|| {
        let (i, j) = group_span(items);
        incompatible(i, j, links.linked(i, j))
    })?;
    for group in [&items[..k], &items[k..]] {
        if group.len() > 1 {
            let (i, j) = group_span(group);
            out.push(Constituent::new(i, j, star));
        }
        split_children(nodes, group, star, links, out)?;
    }
    Ok(())
}

/// A span `(i, j)` with head word `h`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LexSpan {
    pub i: usize,
    pub j: usize,
    pub h: usize,
    pub label: String,
}

impl LexSpan {
    pub fn new(i: usize, j: usize, h: usize, label: impl Into<String>) -> Self {
        LexSpan {
            i,
            j,
            h,
            label: label.into(),
        }
    }
}

/// The scored parts of an unlabeled lexicalized tree.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TreeParts {
    /// All `2n - 1` spans.
    pub spans: Vec<(usize, usize)>,
    /// `(h, m)` for every word, including the root arc.
    pub arcs: Vec<(usize, usize)>,
    /// `(i, j, h)` for every span and its head.
    pub headed: Vec<(usize, usize, usize)>,
    /// `(i, j, g)` for every maximal projection of a word and its governor
    /// `g` (0 for the full sentence).
    pub hooked: Vec<(usize, usize, usize)>,
}

/// Binarized lexicalized tree. Spans are kept in preorder, which is the
/// canonical order (left to right, outer before inner).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LTree {
    n: usize,
    spans: Vec<LexSpan>,
}

impl LTree {
    pub fn new(n: usize, mut spans: Vec<LexSpan>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySentence);
        }
        spans.sort_by(|a, b| a.i.cmp(&b.i).then(b.j.cmp(&a.j)));
        if spans.len() != 2 * n - 1 {
            return Err(Error::InvalidTree(format!(
                "l-tree over {n} words needs {} spans, found {}",
                2 * n - 1,
                spans.len()
            )));
        }
        for s in &spans {
            if s.i < 1 || s.i > s.h || s.h > s.j || s.j > n {
                return Err(Error::InvalidTree(format!(
                    "invalid lexicalized span ({}, {}, {})",
                    s.i, s.j, s.h
                )));
            }
        }
        if spans[0].i != 1 || spans[0].j != n {
            return Err(Error::InvalidTree("missing full-sentence span".into()));
        }
        let tree = LTree { n, spans };
        tree.children()?;
        Ok(tree)
    }

    pub fn from_triples<I>(n: usize, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize)>,
    {
        LTree::new(
            n,
            triples
                .into_iter()
                .map(|(i, j, h)| LexSpan::new(i, j, h, ""))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spans(&self) -> &[LexSpan] {
        &self.spans
    }

    pub fn triples(&self) -> Vec<(usize, usize, usize)> {
        self.spans.iter().map(|s| (s.i, s.j, s.h)).collect()
    }

    /// Head of the whole sentence.
    pub fn root_head(&self) -> usize {
        self.spans[0].h
    }

    /// Copy with all labels cleared.
    pub fn unlabeled(&self) -> LTree {
        self.relabel(|_| String::new())
    }

    /// Copy with labels replaced; `label_of` receives span indices in
    /// canonical order.
    pub fn relabel(&self, mut label_of: impl FnMut(usize) -> String) -> LTree {
        LTree {
            n: self.n,
            spans: self
                .spans
                .iter()
                .enumerate()
                .map(|(idx, s)| LexSpan::new(s.i, s.j, s.h, label_of(idx)))
                .collect(),
        }
    }

    /// Child span indices of every span (`None` for leaves).
    pub fn structure(&self) -> Vec<Option<(usize, usize)>> {
        self.children().expect("validated on construction")
    }

    fn children(&self) -> Result<Vec<Option<(usize, usize)>>> {
        let mut out = vec![None; self.spans.len()];
        let end = link_children(&self.spans, 0, &mut out)?;
        if end != self.spans.len() {
            return Err(Error::InvalidTree("spans do not form a single tree".into()));
        }
        Ok(out)
    }

    pub fn parts(&self) -> TreeParts {
        let structure = self.structure();
        let mut parts = TreeParts {
            spans: self.spans.iter().map(|s| (s.i, s.j)).collect(),
            arcs: Vec::with_capacity(self.n),
            headed: self.triples(),
            hooked: Vec::with_capacity(self.n),
        };
        let root = &self.spans[0];
        parts.arcs.push((ROOT, root.h));
        parts.hooked.push((root.i, root.j, ROOT));
        for (idx, kids) in structure.iter().enumerate() {
            if let Some((l, r)) = *kids {
                let h = self.spans[idx].h;
                let dep = if self.spans[l].h == h { r } else { l };
                let d = &self.spans[dep];
                parts.arcs.push((h, d.h));
                parts.hooked.push((d.i, d.j, h));
            }
        }
        parts.arcs.sort_by_key(|&(_, m)| m);
        parts
    }
}

fn link_children(
    spans: &[LexSpan],
    p: usize,
    out: &mut [Option<(usize, usize)>],
) -> Result<usize> {
    let err = |msg: &str| Error::InvalidTree(msg.to_owned());
    let s = spans.get(p).ok_or_else(|| err("missing child span"))?;
    if s.i == s.j {
        return Ok(p + 1);
    }
    let l = p + 1;
    let left = spans.get(l).ok_or_else(|| err("missing left child"))?;
    if left.i != s.i || left.j >= s.j {
        return Err(Error::InvalidTree(format!(
            "span ({}, {}) is not split into two children",
            s.i, s.j
        )));
    }
    let r = link_children(spans, l, out)?;
    let right = spans.get(r).ok_or_else(|| err("missing right child"))?;
    if right.i != left.j + 1 || right.j != s.j {
        return Err(Error::InvalidTree(format!(
            "span ({}, {}) is not split into two children",
            s.i, s.j
        )));
    }
    let end = link_children(spans, r, out)?;
    if (s.h == left.h) == (s.h == right.h) {
        return Err(Error::InvalidTree(format!(
            "head {} of span ({}, {}) is not inherited from exactly one child",
            s.h, s.i, s.j
        )));
    }
    out[p] = Some((l, r));
    Ok(end)
}

/// Annotates every span of a binarized tree with its head word under
/// `dtree`.
pub fn build_ltree(ctree: &CTree, dtree: &DTree) -> Result<LTree> {
    if !ctree.is_binarized() {
        return Err(Error::InvalidTree("build_ltree needs a binarized tree".into()));
    }
    if ctree.len() != dtree.len() {
        return Err(Error::LengthMismatch {
            expected: ctree.len(),
            found: dtree.len(),
        });
    }
    let links = Links::new(dtree);
    let spans = ctree
        .constituents()
        .iter()
        .map(|c| match links.linked(c.i, c.j).as_slice() {
            [h] => Ok(LexSpan::new(c.i, c.j, *h, c.label.clone())),
            other => Err(incompatible(c.i, c.j, other.to_vec())),
        })
        .collect::<Result<Vec<_>>>()?;
    let ltree = LTree::new(ctree.len(), spans)?;
    if ltree_to_dtree(&ltree).heads() != dtree.heads() {
        return Err(Error::InvalidTree(
            "lexicalized tree does not reproduce the dependency tree".into(),
        ));
    }
    Ok(ltree)
}

/// Drops heads and `*` spans and re-expands unary chains. The full-sentence
/// span is always kept (a trailing `*` is stripped from its label).
pub fn ltree_to_ctree(ltree: &LTree) -> CTree {
    let mut constituents = Vec::new();
    for (idx, s) in ltree.spans().iter().enumerate() {
        let label = if idx == 0 {
            s.label.trim_end_matches('*')
        } else if is_intermediate(&s.label) {
            continue;
        } else {
            s.label.as_str()
        };
        for part in label.split(UNARY_SEP) {
            constituents.push(Constituent::new(s.i, s.j, part));
        }
    }
    CTree::new(ltree.len(), constituents).expect("subset of a valid l-tree's spans")
}

/// Reads the unlabeled dependency tree off the head words.
pub fn ltree_to_dtree(ltree: &LTree) -> DTree {
    let mut heads = vec![ROOT; ltree.len()];
    for (h, m) in ltree.parts().arcs {
        heads[m - 1] = h;
    }
    DTree::unlabeled(heads).expect("l-trees induce projective single-rooted trees")
}
