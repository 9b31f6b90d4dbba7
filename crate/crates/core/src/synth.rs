//! Synthetic treebanks: random compatible tree pairs and a toy grammar.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trees::{CTree, Constituent, DTree, Sentence, ROOT};

const LABELS: [&str; 7] = ["S", "NP", "VP", "PP", "ADJP", "ADVP", "SBAR"];
const RELS: [&str; 8] = ["nsubj", "dobj", "det", "amod", "prep", "pobj", "advmod", "cc"];

/// A sentence with a constituency tree and a labeled dependency tree.
pub type Pair = (Sentence, CTree, DTree);

struct Builder<'a, R> {
    rng: &'a mut R,
    heads: Vec<usize>,
    rels: Vec<String>,
    constituents: Vec<Constituent>,
}

impl<R: Rng> Builder<'_, R> {
    /// Adds a constituent over `[i, j]` (possibly a unary chain) and
    /// returns its head word.
    fn phrase(&mut self, i: usize, j: usize) -> usize {
        let chain = if self.rng.random_bool(0.15) { 2 } else { 1 };
        for _ in 0..chain {
            let label = *LABELS.choose(self.rng).expect("labels");
            self.constituents.push(Constituent::new(i, j, label));
        }
        if i == j {
            return i;
        }
        // cut [i, j] into at least two contiguous pieces
        let width = j - i + 1;
        let max_pieces = width.min(4);
        let pieces = self.rng.random_range(2..=max_pieces);
        let mut cuts: Vec<usize> = (i + 1..=j).collect();
        cuts.shuffle(self.rng);
        cuts.truncate(pieces - 1);
        cuts.sort_unstable();
        let mut bounds = Vec::with_capacity(pieces);
        let mut start = i;
        for cut in cuts {
            bounds.push((start, cut - 1));
            start = cut;
        }
        bounds.push((start, j));
        let heads: Vec<usize> = bounds
            .iter()
            .map(|&(a, b)| {
                if a == b && self.rng.random_bool(0.5) {
                    a
                } else {
                    self.phrase(a, b)
                }
            })
            .collect();
        let head = heads[self.rng.random_range(0..heads.len())];
        for &h in &heads {
            if h != head {
                self.heads[h - 1] = head;
                self.rels[h - 1] = RELS.choose(self.rng).expect("rels").to_string();
            }
        }
        head
    }
}

/// Random compatible pair of length `n`: every constituent has a head
/// child and all other children attach to its head word.
pub fn random_pair<R: Rng>(rng: &mut R, n: usize, vocab: usize) -> Pair {
    assert!(n > 0, "sentence length must be positive");
    let mut b = Builder {
        rng,
        heads: vec![ROOT; n],
        rels: vec![String::new(); n],
        constituents: Vec::new(),
    };
    let root = b.phrase(1, n);
    b.heads[root - 1] = ROOT;
    b.rels[root - 1] = "root".to_owned();
    let tokens: Vec<String> = (0..n)
        .map(|_| format!("w{}", b.rng.random_range(0..vocab.max(1))))
        .collect();
    let ctree = CTree::new(n, b.constituents).expect("generated spans nest");
    let dtree = DTree::new(b.heads, Some(b.rels)).expect("generated heads form a tree");
    (
        Sentence::new(tokens, None).expect("non-empty"),
        ctree,
        dtree,
    )
}

/// `count` random pairs with lengths drawn from `min_len..=max_len`.
pub fn random_corpus(seed: u64, count: usize, min_len: usize, max_len: usize) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(min_len..=max_len);
            random_pair(&mut rng, n, 50)
        })
        .collect()
}

const DETS: [&str; 2] = ["the", "a"];
const ADJS: [&str; 4] = ["big", "small", "red", "old"];
const NOUNS: [&str; 8] = ["dog", "cat", "man", "park", "ball", "telescope", "bird", "tree"];
const VERBS: [&str; 4] = ["saw", "chased", "found", "liked"];
const PREPS: [&str; 3] = ["in", "with", "near"];
const ADVS: [&str; 3] = ["quickly", "today", "again"];

#[derive(Default)]
struct Toy {
    words: Vec<(String, String)>,
    heads: Vec<usize>,
    rels: Vec<String>,
    spans: Vec<Constituent>,
}

impl Toy {
    fn word(&mut self, form: &str, tag: &str) -> usize {
        self.words.push((form.to_owned(), tag.to_owned()));
        self.heads.push(ROOT);
        self.rels.push(String::new());
        self.words.len()
    }

    fn attach(&mut self, m: usize, h: usize, rel: &str) {
        self.heads[m - 1] = h;
        self.rels[m - 1] = rel.to_owned();
    }

    fn open(&mut self, label: &str) -> usize {
        self.spans
            .push(Constituent::new(self.words.len() + 1, 0, label));
        self.spans.len() - 1
    }

    fn close(&mut self, idx: usize) {
        self.spans[idx].j = self.words.len();
    }

    fn np<R: Rng>(&mut self, rng: &mut R) -> usize {
        let span = self.open("NP");
        let det = self.word(DETS.choose(rng).expect("dets"), "DT");
        let adj = rng
            .random_bool(0.4)
            .then(|| self.word(ADJS.choose(rng).expect("adjs"), "JJ"));
        let noun = self.word(NOUNS.choose(rng).expect("nouns"), "NN");
        self.attach(det, noun, "det");
        if let Some(adj) = adj {
            self.attach(adj, noun, "amod");
        }
        self.close(span);
        noun
    }
}

/// One sentence of the toy grammar:
/// `S -> NP VP`, `NP -> Det (Adj) N`, `VP -> V NP (PP | ADVP)`,
/// `PP -> P NP`. Prepositional phrases always attach to the verb.
pub fn toy_sentence<R: Rng>(rng: &mut R) -> Pair {
    let mut t = Toy::default();
    let s = t.open("S");
    let subj = t.np(rng);
    let vp = t.open("VP");
    let verb = t.word(VERBS.choose(rng).expect("verbs"), "VBD");
    let obj = t.np(rng);
    t.attach(subj, verb, "nsubj");
    t.attach(obj, verb, "dobj");
    match rng.random_range(0..3) {
        0 => {
            let pp = t.open("PP");
            let prep = t.word(PREPS.choose(rng).expect("preps"), "IN");
            let pobj = t.np(rng);
            t.attach(pobj, prep, "pobj");
            t.attach(prep, verb, "prep");
            t.close(pp);
        }
        1 => {
            let advp = t.open("ADVP");
            let adv = t.word(ADVS.choose(rng).expect("advs"), "RB");
            t.attach(adv, verb, "advmod");
            t.close(advp);
        }
        _ => {}
    }
    t.close(vp);
    t.close(s);
    t.rels[verb - 1] = "root".to_owned();
    let n = t.words.len();
    let (tokens, tags) = t.words.into_iter().unzip();
    (
        Sentence::new(tokens, Some(tags)).expect("non-empty"),
        CTree::new(n, t.spans).expect("grammar spans nest"),
        DTree::new(t.heads, Some(t.rels)).expect("grammar heads form a tree"),
    )
}

/// `count` distinct toy sentences.
pub fn toy_corpus(seed: u64, count: usize) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Pair> = Vec::with_capacity(count);
    while out.len() < count {
        let pair = toy_sentence(&mut rng);
        if out.iter().all(|p| p.0.tokens() != pair.0.tokens()) {
            out.push(pair);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{check_compatibility, is_projective};

    #[test]
    fn random_pairs_are_compatible() {
        for (s, c, d) in random_corpus(7, 300, 1, 15) {
            assert_eq!(s.len(), c.len());
            assert!(is_projective(&d));
            assert!(check_compatibility(&c, &d).unwrap().compatible);
        }
    }

    #[test]
    fn toy_sentences_are_compatible_and_distinct() {
        let corpus = toy_corpus(1, 32);
        assert_eq!(corpus.len(), 32);
        for (s, c, d) in &corpus {
            assert!(check_compatibility(c, d).unwrap().compatible);
            assert_eq!(s.pos().unwrap().len(), s.len());
            assert_eq!(d.rel(d.root()), Some("root"));
        }
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(random_corpus(3, 5, 2, 6), random_corpus(3, 5, 2, 6));
        assert_eq!(toy_corpus(2, 4), toy_corpus(2, 4));
    }
}
