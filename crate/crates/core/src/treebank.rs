//! Treebank formats: bracketed constituency trees, CoNLL-X dependency trees
//! and lexicalized-tree dumps (`label[h]` brackets).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::train::TrainInstance;
use crate::trees::{
    build_nodes, check_compatibility, is_projective, CTree, Child, CompatReport, Constituent,
    DTree, LTree, LexSpan, Node, Sentence,
};

/// Placeholder for empty fields in both formats.
pub const EMPTY: &str = "_";

#[derive(Debug)]
enum Sexp {
    Atom {
        text: String,
        line: usize,
        column: usize,
    },
    List {
        items: Vec<Sexp>,
        line: usize,
        column: usize,
    },
}

impl Sexp {
    fn position(&self) -> (usize, usize) {
        match self {
            Sexp::Atom { line, column, .. } | Sexp::List { line, column, .. } => (*line, *column),
        }
    }
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Splits text into top-level parenthesized expressions.
fn parse_sexps(text: &str) -> Result<Vec<Sexp>> {
    let mut done = Vec::new();
    // open lists: (items, line, column)
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = Vec::new();
    let mut atom = String::new();
    let mut atom_start = (0, 0);
    let (mut line, mut column) = (1, 0);

    fn flush(
        atom: &mut String,
        start: (usize, usize),
        stack: &mut [(Vec<Sexp>, usize, usize)],
    ) -> Result<()> {
        if atom.is_empty() {
            return Ok(());
        }
        let Some(top) = stack.last_mut() else {
            return Err(parse_error(start.0, start.1, format!("unexpected text {atom:?} outside of brackets")));
        };
        top.0.push(Sexp::Atom {
            text: std::mem::take(atom),
            line: start.0,
            column: start.1,
        });
        Ok(())
    }

    for ch in text.chars() {
        if ch == '\n' {
            flush(&mut atom, atom_start, &mut stack)?;
            line += 1;
            column = 0;
            continue;
        }
        column += 1;
        match ch {
            '(' => {
                flush(&mut atom, atom_start, &mut stack)?;
                stack.push((Vec::new(), line, column));
            }
            ')' => {
                flush(&mut atom, atom_start, &mut stack)?;
                let Some((items, l, c)) = stack.pop() else {
                    return Err(Error::UnbalancedParens { line, column });
                };
                let list = Sexp::List {
                    items,
                    line: l,
                    column: c,
                };
                match stack.last_mut() {
                    Some(parent) => parent.0.push(list),
                    None => done.push(list),
                }
            }
            c if c.is_whitespace() => flush(&mut atom, atom_start, &mut stack)?,
            c => {
                if atom.is_empty() {
                    atom_start = (line, column);
                }
                atom.push(c);
            }
        }
    }
    flush(&mut atom, atom_start, &mut stack)?;
    if let Some((_, l, c)) = stack.first() {
        return Err(Error::UnbalancedParens { line: *l, column: *c });
    }
    Ok(done)
}

enum Raw {
    Word { form: String, pos: Option<String> },
    Phrase { label: String, children: Vec<Raw> },
}

/// Drops function tags (`NP-SBJ-1` becomes `NP`, `NP=2` becomes `NP`).
/// Labels starting with `-`, such as `-LRB-`, are kept.
pub fn strip_function_tags(label: &str) -> &str {
    if label.starts_with('-') {
        return label;
    }
    match label.find(['-', '=']) {
        Some(pos) => &label[..pos],
        None => label,
    }
}

fn to_raw(sexp: &Sexp) -> Result<Option<Raw>> {
    let Sexp::List { items, line, column } = sexp else {
        unreachable!("atoms are handled by the caller");
    };
    let (label, children) = match items.first() {
        None => return Err(parse_error(*line, *column, "empty brackets")),
        Some(Sexp::Atom { text, .. }) => (text.as_str(), &items[1..]),
        Some(Sexp::List { .. }) => ("", &items[..]),
    };
    if label == "-NONE-" {
        return Ok(None);
    }
    if children.is_empty() {
        return Err(parse_error(*line, *column, format!("node {label:?} has no children")));
    }
    if let [Sexp::Atom { text, .. }] = children {
        let pos = (!label.is_empty()).then(|| label.to_owned());
        return Ok(Some(Raw::Word {
            form: text.clone(),
            pos,
        }));
    }
    let mut kids = Vec::new();
    for child in children {
        match child {
            Sexp::Atom { text, .. } => kids.push(Raw::Word {
                form: text.clone(),
                pos: None,
            }),
            list => kids.extend(to_raw(list)?),
        }
    }
    if kids.is_empty() {
        return Ok(None);
    }
    Ok(Some(Raw::Phrase {
        label: strip_function_tags(label).to_owned(),
        children: kids,
    }))
}

fn collect(raw: &Raw, words: &mut Vec<(String, Option<String>)>, out: &mut Vec<Constituent>) {
    match raw {
        Raw::Word { form, pos } => words.push((form.clone(), pos.clone())),
        Raw::Phrase { label, children } => {
            let idx = out.len();
            let i = words.len() + 1;
            out.push(Constituent::new(i, i, label.clone()));
            for child in children {
                collect(child, words, out);
            }
            out[idx].j = words.len();
        }
    }
}

fn sentence_from_words(words: Vec<(String, Option<String>)>) -> Result<Sentence> {
    let all_empty = words
        .iter()
        .all(|(_, p)| p.as_deref().is_none_or(|p| p == EMPTY));
    let (tokens, tags): (Vec<String>, Vec<String>) = words
        .into_iter()
        .map(|(w, p)| (w, p.unwrap_or_else(|| EMPTY.to_owned())))
        .unzip();
    Sentence::new(tokens, (!all_empty).then_some(tags))
}

fn tree_from_sexp(sexp: &Sexp) -> Result<(Sentence, CTree)> {
    let (line, column) = sexp.position();
    let raw = to_raw(sexp)?.ok_or_else(|| parse_error(line, column, "tree has no words"))?;
    let raw = match raw {
        Raw::Phrase { label, mut children } if label.is_empty() => {
            if children.len() == 1 {
                children.pop().expect("one child")
            } else {
                Raw::Phrase {
                    label: "ROOT".to_owned(),
                    children,
                }
            }
        }
        other => other,
    };
    let mut words = Vec::new();
    let mut constituents = Vec::new();
    match raw {
        // A lone preterminal is read as a one-word constituent.
        Raw::Word { form, pos } => {
            constituents.push(Constituent::new(1, 1, pos.unwrap_or_else(|| EMPTY.to_owned())));
            words.push((form, None));
        }
        phrase => collect(&phrase, &mut words, &mut constituents),
    }
    let n = words.len();
    let sentence = sentence_from_words(words)?;
    let tree = CTree::new(n, constituents).map_err(|e| parse_error(line, column, e.to_string()))?;
    Ok((sentence, tree))
}

/// Reads every tree of a bracketed file (one per line or pretty-printed).
/// Preterminals become part-of-speech tags, `-NONE-` subtrees are removed
/// and function tags stripped.
pub fn read_brackets_str(text: &str) -> Result<Vec<(Sentence, CTree)>> {
    parse_sexps(text)?.iter().map(tree_from_sexp).collect()
}

pub fn read_brackets(path: impl AsRef<Path>) -> Result<Vec<(Sentence, CTree)>> {
    read_brackets_str(&fs::read_to_string(path)?)
}

fn write_node(nodes: &[Node], idx: usize, sentence: &Sentence, out: &mut String) {
    let node = &nodes[idx];
    for label in &node.labels {
        let _ = write!(out, "({label} ");
    }
    for (k, child) in node.children.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        match *child {
            Child::Word(w) => {
                let pos = sentence.pos().map_or(EMPTY, |p| p[w - 1].as_str());
                let _ = write!(out, "({pos} {})", sentence.token(w));
            }
            Child::Node(c) => write_node(nodes, c, sentence, out),
        }
    }
    for _ in &node.labels {
        out.push(')');
    }
}

/// Canonical single-line bracketed form; missing tags are written as `_`.
pub fn write_brackets(sentence: &Sentence, tree: &CTree) -> Result<String> {
    if sentence.len() != tree.len() {
        return Err(Error::LengthMismatch {
            expected: sentence.len(),
            found: tree.len(),
        });
    }
    let nodes = build_nodes(tree);
    let mut out = String::new();
    write_node(&nodes, 0, sentence, &mut out);
    Ok(out)
}

/// One CoNLL-X sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct ConllEntry {
    pub sentence: Sentence,
    pub tree: DTree,
    pub projective: bool,
}

fn finish_conll(rows: &mut Vec<(usize, Vec<String>)>, out: &mut Vec<ConllEntry>) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let last_line = rows.last().map(|r| r.0);
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut heads = Vec::new();
    let mut rels = Vec::new();
    for (k, (line, cols)) in rows.iter().enumerate() {
        let id: usize = cols[0]
            .parse()
            .map_err(|_| parse_error(*line, 1, format!("bad token id {:?}", cols[0])))?;
        if id != k + 1 {
            return Err(parse_error(*line, 1, format!("expected token id {}, found {id}", k + 1)));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| parse_error(*line, 7, format!("bad head {:?}", cols[6])))?;
        tokens.push(cols[1].clone());
        let tag = if cols[4] != EMPTY { &cols[4] } else { &cols[3] };
        tags.push(tag.clone());
        heads.push(head);
        rels.push(cols[7].clone());
    }
    let n = heads.len();
    if let Some((m, &h)) = heads.iter().enumerate().find(|(_, &h)| h > n) {
        return Err(parse_error(rows[m].0, 7, format!("head {h} out of range")));
    }
    let rels = (!rels.iter().all(|r| r == EMPTY)).then_some(rels);
    let tags = (!tags.iter().all(|t| t == EMPTY)).then_some(tags);
    let tree = DTree::new(heads, rels).map_err(|e| match e {
        Error::CycleDetected { .. } => Error::CycleDetected { line: last_line },
        Error::MultiRoot { .. } => Error::MultiRoot { line: last_line },
        other => parse_error(last_line.unwrap_or(0), 7, other.to_string()),
    })?;
    out.push(ConllEntry {
        sentence: Sentence::new(tokens, tags)?,
        projective: is_projective(&tree),
        tree,
    });
    rows.clear();
    Ok(())
}

/// Reads 10-column CoNLL-X sentences separated by blank lines. Columns are
/// tab separated; whitespace separation is accepted when it yields exactly
/// 10 fields. Lines starting with `#` and multiword/empty-node rows are
/// skipped.
pub fn read_conllx_str(text: &str) -> Result<Vec<ConllEntry>> {
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            finish_conll(&mut rows, &mut out)?;
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let mut cols: Vec<String> = trimmed.split('\t').map(str::to_owned).collect();
        if cols.len() != 10 {
            let ws: Vec<String> = trimmed.split_whitespace().map(str::to_owned).collect();
            if ws.len() != 10 {
                return Err(Error::BadColumnCount {
                    line,
                    found: cols.len().max(ws.len()),
                });
            }
            cols = ws;
        }
        if cols[0].contains(['-', '.']) {
            continue;
        }
        rows.push((line, cols));
    }
    finish_conll(&mut rows, &mut out)?;
    Ok(out)
}

pub fn read_conllx(path: impl AsRef<Path>) -> Result<Vec<ConllEntry>> {
    read_conllx_str(&fs::read_to_string(path)?)
}

/// One CoNLL-X block including the terminating blank line.
pub fn write_conllx(sentence: &Sentence, tree: &DTree) -> Result<String> {
    if sentence.len() != tree.len() {
        return Err(Error::LengthMismatch {
            expected: sentence.len(),
            found: tree.len(),
        });
    }
    let mut out = String::new();
    for m in 1..=tree.len() {
        let pos = sentence.pos().map_or(EMPTY, |p| p[m - 1].as_str());
        let rel = tree.rel(m).unwrap_or(EMPTY);
        let _ = writeln!(
            out,
            "{m}\t{}\t_\t{pos}\t{pos}\t_\t{}\t{rel}\t_\t_",
            sentence.token(m),
            tree.head(m)
        );
    }
    out.push('\n');
    Ok(out)
}

fn write_lnode(ltree: &LTree, idx: usize, sentence: &Sentence, kids: &[Option<(usize, usize)>], out: &mut String) {
    let s = &ltree.spans()[idx];
    let _ = write!(out, "({}[{}] ", s.label, s.h);
    match kids[idx] {
        None => out.push_str(sentence.token(s.i)),
        Some((l, r)) => {
            write_lnode(ltree, l, sentence, kids, out);
            out.push(' ');
            write_lnode(ltree, r, sentence, kids, out);
        }
    }
    out.push(')');
}

/// Single-line dump of a lexicalized tree, each span written as
/// `(label[h] ...)`.
pub fn write_ltree(sentence: &Sentence, ltree: &LTree) -> Result<String> {
    if sentence.len() != ltree.len() {
        return Err(Error::LengthMismatch {
            expected: sentence.len(),
            found: ltree.len(),
        });
    }
    let mut out = String::new();
    write_lnode(ltree, 0, sentence, &ltree.structure(), &mut out);
    Ok(out)
}

fn split_head(text: &str, line: usize, column: usize) -> Result<(String, usize)> {
    let bad = || parse_error(line, column, format!("expected label[head], found {text:?}"));
    let body = text.strip_suffix(']').ok_or_else(bad)?;
    let open = body.rfind('[').ok_or_else(bad)?;
    let h = body[open + 1..].parse().map_err(|_| bad())?;
    Ok((body[..open].to_owned(), h))
}

fn lnode(sexp: &Sexp, tokens: &mut Vec<String>, spans: &mut Vec<LexSpan>) -> Result<()> {
    let Sexp::List { items, line, column } = sexp else {
        let (line, column) = sexp.position();
        return Err(parse_error(line, column, "expected a bracketed span"));
    };
    let Some(Sexp::Atom { text, line: l, column: c }) = items.first() else {
        return Err(parse_error(*line, *column, "span without a label"));
    };
    let (label, h) = split_head(text, *l, *c)?;
    let idx = spans.len();
    let i = tokens.len() + 1;
    spans.push(LexSpan::new(i, i, h, label));
    match &items[1..] {
        [Sexp::Atom { text, .. }] => tokens.push(text.clone()),
        [left, right] => {
            lnode(left, tokens, spans)?;
            lnode(right, tokens, spans)?;
        }
        _ => {
            return Err(parse_error(*line, *column, "span must hold one word or two spans"));
        }
    }
    spans[idx].j = tokens.len();
    Ok(())
}

/// Reads dumps written by [`write_ltree`].
pub fn read_ltrees_str(text: &str) -> Result<Vec<(Sentence, LTree)>> {
    parse_sexps(text)?
        .iter()
        .map(|sexp| {
            let mut tokens = Vec::new();
            let mut spans = Vec::new();
            lnode(sexp, &mut tokens, &mut spans)?;
            let n = tokens.len();
            let (line, column) = sexp.position();
            let ltree = LTree::new(n, spans).map_err(|e| parse_error(line, column, e.to_string()))?;
            Ok((Sentence::new(tokens, None)?, ltree))
        })
        .collect()
}

pub fn read_ltrees(path: impl AsRef<Path>) -> Result<Vec<(Sentence, LTree)>> {
    read_ltrees_str(&fs::read_to_string(path)?)
}

/// A sentence with both of its trees and their compatibility.
#[derive(Clone, Debug, PartialEq)]
pub struct JointInstance {
    pub sentence: Sentence,
    pub ctree: CTree,
    pub dtree: DTree,
    pub compat: CompatReport,
}

impl JointInstance {
    pub fn new(sentence: Sentence, ctree: CTree, dtree: DTree) -> Result<Self> {
        let n = sentence.len();
        for found in [ctree.len(), dtree.len()] {
            if found != n {
                return Err(Error::LengthMismatch { expected: n, found });
            }
        }
        let compat = check_compatibility(&ctree, &dtree)?;
        Ok(JointInstance {
            sentence,
            ctree,
            dtree,
            compat,
        })
    }

    pub fn to_train_instance(&self) -> Result<TrainInstance> {
        TrainInstance::from_pair(self.sentence.clone(), &self.ctree, self.dtree.clone())
    }
}

/// Compatibility audit of a paired corpus.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub compatible: usize,
    pub non_projective: usize,
    /// Incompatible sentences by reason.
    pub reasons: BTreeMap<String, usize>,
    pub labels: BTreeMap<String, usize>,
    pub relations: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn from_instances<'a>(instances: impl IntoIterator<Item = &'a JointInstance>) -> Self {
        let mut stats = CorpusStats::default();
        for x in instances {
            stats.sentences += 1;
            if x.compat.compatible {
                stats.compatible += 1;
            }
            if let Some(reason) = x.compat.reason {
                *stats.reasons.entry(reason.to_string()).or_default() += 1;
            }
            if !is_projective(&x.dtree) {
                stats.non_projective += 1;
            }
            for c in x.ctree.constituents() {
                *stats.labels.entry(c.label.clone()).or_default() += 1;
            }
            for rel in x.dtree.rels().into_iter().flatten() {
                *stats.relations.entry(rel.clone()).or_default() += 1;
            }
        }
        stats
    }

    /// Percentage of compatible sentences (100 for an empty corpus).
    pub fn percentage(&self) -> f64 {
        if self.sentences == 0 {
            return 100.0;
        }
        100.0 * self.compatible as f64 / self.sentences as f64
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} ({:.1}%)", self.compatible, self.sentences, self.percentage())
    }
}

/// Pairs sentence-aligned trees. Token counts must agree; differing word
/// forms are only reported in the log. Tags from the bracketed side win.
pub fn pair_and_audit(
    brackets: Vec<(Sentence, CTree)>,
    conll: Vec<ConllEntry>,
) -> Result<(Vec<JointInstance>, CorpusStats)> {
    if brackets.is_empty() && conll.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut instances = Vec::with_capacity(brackets.len());
    let count_mismatch = brackets.len() != conll.len();
    let (b_len, c_len) = (brackets.len(), conll.len());
    for (k, ((sentence, ctree), entry)) in brackets.into_iter().zip(conll).enumerate() {
        let no = k + 1;
        if sentence.len() != entry.sentence.len() {
            return Err(Error::AlignmentMismatch {
                sentence: no,
                message: format!(
                    "{} tokens in the bracketed tree, {} in the dependency tree",
                    sentence.len(),
                    entry.sentence.len()
                ),
            });
        }
        if sentence.tokens() != entry.sentence.tokens() {
            warn!("sentence {no}: word forms differ between the two files");
        }
        let pos = sentence
            .pos()
            .or(entry.sentence.pos())
            .map(<[String]>::to_vec);
        let sentence = sentence.with_pos(pos)?;
        instances.push(JointInstance::new(sentence, ctree, entry.tree)?);
    }
    if count_mismatch {
        return Err(Error::AlignmentMismatch {
            sentence: b_len.min(c_len) + 1,
            message: format!("{b_len} bracketed trees but {c_len} dependency trees"),
        });
    }
    let stats = CorpusStats::from_instances(&instances);
    Ok((instances, stats))
}

pub fn pair_and_audit_files(
    brackets: impl AsRef<Path>,
    conll: impl AsRef<Path>,
) -> Result<(Vec<JointInstance>, CorpusStats)> {
    pair_and_audit(read_brackets(brackets)?, read_conllx(conll)?)
}

/// Keeps only compatible instances.
pub fn filter_compatible(instances: Vec<JointInstance>) -> Vec<JointInstance> {
    let total = instances.len();
    let kept: Vec<_> = instances.into_iter().filter(|x| x.compat.compatible).collect();
    info!("kept {} of {total} instances", kept.len());
    if kept.is_empty() {
        warn!("no compatible instances left");
    }
    kept
}
