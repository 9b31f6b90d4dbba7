//! Attachment scores, labeled constituent precision/recall/F1 and labeled
//! complete match.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trees::{CTree, DTree, Sentence};

/// Part-of-speech tags treated as punctuation unless configured otherwise.
pub const DEFAULT_PUNCT_TAGS: [&str; 7] = [",", ".", ":", "``", "''", "-LRB-", "-RRB-"];

/// Set of punctuation tags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PunctTags(BTreeSet<String>);

impl Default for PunctTags {
    fn default() -> Self {
        PunctTags::new(DEFAULT_PUNCT_TAGS)
    }
}

impl PunctTags {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PunctTags(tags.into_iter().map(Into::into).collect())
    }

    /// Parses a comma- or whitespace-separated list. A lone `,` inside the
    /// list is written as `COMMA`.
    pub fn parse(list: &str) -> Self {
        PunctTags::new(
            list.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| if t == "COMMA" { "," } else { t }),
        )
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.0.contains(tag)
    }

    /// `true` for every word whose tag is punctuation. Untagged sentences
    /// have no punctuation.
    pub fn mask(&self, sentence: &Sentence) -> Vec<bool> {
        match sentence.pos() {
            Some(tags) => tags.iter().map(|t| self.contains(t)).collect(),
            None => vec![false; sentence.len()],
        }
    }
}

/// `matched` out of `total`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Count {
    pub matched: usize,
    pub total: usize,
}

impl Count {
    /// Percentage; 100 when there is nothing to count.
    pub fn percent(self) -> f64 {
        if self.total == 0 {
            100.0
        } else {
            100.0 * self.matched as f64 / self.total as f64
        }
    }

    fn add(&mut self, other: Count) {
        self.matched += other.matched;
        self.total += other.total;
    }
}

/// Head and head+relation matches over non-punctuation words.
pub fn attachment_scores(pred: &DTree, gold: &DTree, punct: &[bool]) -> Result<(Count, Count)> {
    let n = gold.len();
    for found in [pred.len(), punct.len()] {
        if found != n {
            return Err(Error::LengthMismatch { expected: n, found });
        }
    }
    let mut uas = Count::default();
    let mut las = Count::default();
    for m in 1..=n {
        if punct[m - 1] {
            continue;
        }
        uas.total += 1;
        las.total += 1;
        if pred.head(m) == gold.head(m) {
            uas.matched += 1;
            if pred.rel(m) == gold.rel(m) {
                las.matched += 1;
            }
        }
    }
    Ok((uas, las))
}

/// Matched, predicted and gold labeled constituents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SpanCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl SpanCounts {
    pub fn precision(self) -> f64 {
        Count {
            matched: self.matched,
            total: self.predicted,
        }
        .percent()
    }

    pub fn recall(self) -> f64 {
        Count {
            matched: self.matched,
            total: self.gold,
        }
        .percent()
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, other: SpanCounts) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }
}

fn span_multiset(tree: &CTree) -> HashMap<(usize, usize, &str), usize> {
    let mut out = HashMap::new();
    for c in tree.constituents() {
        *out.entry((c.i, c.j, c.label.as_str())).or_insert(0) += 1;
    }
    out
}

/// Multiset overlap of labeled `(i, j, label)` constituents, the root span
/// included.
pub fn constituent_prf(pred: &CTree, gold: &CTree) -> Result<SpanCounts> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            found: pred.len(),
        });
    }
    let p = span_multiset(pred);
    let g = span_multiset(gold);
    let matched = p
        .iter()
        .map(|(k, &count)| count.min(g.get(k).copied().unwrap_or(0)))
        .sum();
    Ok(SpanCounts {
        matched,
        predicted: pred.constituents().len(),
        gold: gold.constituents().len(),
    })
}

/// Exact-match flags of one sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CompleteMatch {
    pub con: bool,
    pub dep: bool,
    pub both: bool,
}

/// Labeled complete match; the dependency side covers every word,
/// punctuation included.
pub fn complete_match(
    pred: (&CTree, &DTree),
    gold: (&CTree, &DTree),
) -> Result<CompleteMatch> {
    let con = constituent_prf(pred.0, gold.0)?;
    let con = con.matched == con.gold && con.matched == con.predicted;
    let (_, las) = attachment_scores(pred.1, gold.1, &vec![false; gold.1.len()])?;
    let dep = las.matched == las.total;
    Ok(CompleteMatch {
        con,
        dep,
        both: con && dep,
    })
}

/// Corpus-level scores in percent with the counts behind them.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub uas: f64,
    pub las: f64,
    pub con_p: f64,
    pub con_r: f64,
    pub con_f1: f64,
    pub lcm_con: f64,
    pub lcm_dep: f64,
    pub lcm_both: f64,
    pub sentences: usize,
    pub uas_count: Count,
    pub las_count: Count,
    pub con_count: SpanCounts,
    pub lcm_con_count: usize,
    pub lcm_dep_count: usize,
    pub lcm_both_count: usize,
    /// Set when no word was scored for attachment (all punctuation).
    pub dep_vacuous: bool,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

/// `key: value` lines.
impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sentences: {}", self.sentences)?;
        writeln!(f, "uas: {:.2} ({}/{})", self.uas, self.uas_count.matched, self.uas_count.total)?;
        writeln!(f, "las: {:.2} ({}/{})", self.las, self.las_count.matched, self.las_count.total)?;
        let c = self.con_count;
        writeln!(f, "con_p: {:.2} ({}/{})", self.con_p, c.matched, c.predicted)?;
        writeln!(f, "con_r: {:.2} ({}/{})", self.con_r, c.matched, c.gold)?;
        writeln!(f, "con_f1: {:.2}", self.con_f1)?;
        let s = self.sentences;
        writeln!(f, "lcm_con: {:.2} ({}/{s})", self.lcm_con, self.lcm_con_count)?;
        writeln!(f, "lcm_dep: {:.2} ({}/{s})", self.lcm_dep, self.lcm_dep_count)?;
        write!(f, "lcm_both: {:.2} ({}/{s})", self.lcm_both, self.lcm_both_count)?;
        if self.dep_vacuous {
            write!(f, "\ndep_vacuous: true")?;
        }
        Ok(())
    }
}

/// Groups lengths: 1 to 10 individually, then by tens.
pub fn bucket(len: usize) -> (usize, usize) {
    if len <= 10 {
        (len, len)
    } else {
        let lo = (len - 1) / 10 * 10 + 1;
        (lo, lo + 9)
    }
}

fn bucket_name(len: usize) -> String {
    match bucket(len) {
        (lo, hi) if lo == hi => lo.to_string(),
        (lo, hi) => format!("{lo}-{hi}"),
    }
}

#[derive(Clone, Debug, Default)]
struct Bucket {
    uas: Count,
    las: Count,
    con: SpanCounts,
    sentences: usize,
    lcm_both: usize,
}

/// Accumulates counts over a corpus; the order of sentences does not
/// matter.
#[derive(Clone, Debug, Default)]
pub struct Evaluator {
    punct: PunctTags,
    uas: Count,
    las: Count,
    con: SpanCounts,
    sentences: usize,
    lcm: [usize; 3],
    by_sentence: BTreeMap<usize, Bucket>,
    by_width: BTreeMap<usize, SpanCounts>,
    by_dep_len: BTreeMap<usize, SpanCounts>,
}

impl Evaluator {
    pub fn new(punct: PunctTags) -> Self {
        Evaluator {
            punct,
            ..Evaluator::default()
        }
    }

    /// Scores one sentence; `sentence` supplies the gold tags used for the
    /// punctuation mask.
    pub fn add(
        &mut self,
        sentence: &Sentence,
        pred: (&CTree, &DTree),
        gold: (&CTree, &DTree),
    ) -> Result<CompleteMatch> {
        let n = sentence.len();
        if gold.1.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: gold.1.len(),
            });
        }
        let mask = self.punct.mask(sentence);
        let (uas, las) = attachment_scores(pred.1, gold.1, &mask)?;
        let con = constituent_prf(pred.0, gold.0)?;
        let lcm = complete_match(pred, gold)?;
        self.uas.add(uas);
        self.las.add(las);
        self.con.add(con);
        self.sentences += 1;
        self.lcm[0] += usize::from(lcm.con);
        self.lcm[1] += usize::from(lcm.dep);
        self.lcm[2] += usize::from(lcm.both);

        let b = self.by_sentence.entry(bucket(n).0).or_default();
        b.uas.add(uas);
        b.las.add(las);
        b.con.add(con);
        b.sentences += 1;
        b.lcm_both += usize::from(lcm.both);

        let gold_spans = span_multiset(gold.0);
        let mut remaining = gold_spans.clone();
        for c in pred.0.constituents() {
            let entry = self.by_width.entry(bucket(c.width()).0).or_default();
            entry.predicted += 1;
            if let Some(k) = remaining.get_mut(&(c.i, c.j, c.label.as_str())) {
                if *k > 0 {
                    *k -= 1;
                    entry.matched += 1;
                }
            }
        }
        for c in gold.0.constituents() {
            self.by_width.entry(bucket(c.width()).0).or_default().gold += 1;
        }

        for m in 1..=n {
            if mask[m - 1] {
                continue;
            }
            let (ph, gh) = (pred.1.head(m), gold.1.head(m));
            let pred_len = if ph == 0 { 0 } else { ph.abs_diff(m) };
            let gold_len = if gh == 0 { 0 } else { gh.abs_diff(m) };
            self.by_dep_len.entry(bucket(pred_len).0).or_default().predicted += 1;
            let g = self.by_dep_len.entry(bucket(gold_len).0).or_default();
            g.gold += 1;
            if ph == gh {
                g.matched += 1;
            }
        }
        Ok(lcm)
    }

    pub fn metrics(&self) -> Metrics {
        let s = self.sentences;
        let pct = |k: usize| Count { matched: k, total: s }.percent();
        Metrics {
            uas: self.uas.percent(),
            las: self.las.percent(),
            con_p: self.con.precision(),
            con_r: self.con.recall(),
            con_f1: self.con.f1(),
            lcm_con: pct(self.lcm[0]),
            lcm_dep: pct(self.lcm[1]),
            lcm_both: pct(self.lcm[2]),
            sentences: s,
            uas_count: self.uas,
            las_count: self.las,
            con_count: self.con,
            lcm_con_count: self.lcm[0],
            lcm_dep_count: self.lcm[1],
            lcm_both_count: self.lcm[2],
            dep_vacuous: self.uas.total == 0,
        }
    }

    /// Long-format table for plotting: `kind, bucket, metric, matched,
    /// total, value`. Sentence-length rows carry every corpus metric;
    /// constituent-width and dependency-length rows carry precision and
    /// recall (unlabeled heads for dependencies, with the root arc in
    /// bucket 0).
    pub fn bucket_tsv(&self) -> String {
        let mut out = String::from("kind\tbucket\tmetric\tmatched\ttotal\tvalue\n");
        let mut row = |kind: &str, b: usize, metric: &str, c: Count| {
            let _ = writeln!(
                out,
                "{kind}\t{}\t{metric}\t{}\t{}\t{:.2}",
                bucket_name(b),
                c.matched,
                c.total,
                c.percent()
            );
        };
        let pr = |c: SpanCounts| {
            (
                Count {
                    matched: c.matched,
                    total: c.predicted,
                },
                Count {
                    matched: c.matched,
                    total: c.gold,
                },
            )
        };
        for (&b, v) in &self.by_sentence {
            row("sentence_length", b, "uas", v.uas);
            row("sentence_length", b, "las", v.las);
            let (p, r) = pr(v.con);
            row("sentence_length", b, "con_p", p);
            row("sentence_length", b, "con_r", r);
            row(
                "sentence_length",
                b,
                "lcm_both",
                Count {
                    matched: v.lcm_both,
                    total: v.sentences,
                },
            );
        }
        for (&b, &v) in &self.by_width {
            let (p, r) = pr(v);
            row("constituent_width", b, "precision", p);
            row("constituent_width", b, "recall", r);
        }
        for (&b, &v) in &self.by_dep_len {
            let (p, r) = pr(v);
            row("dependency_length", b, "precision", p);
            row("dependency_length", b, "recall", r);
        }
        out
    }
}
