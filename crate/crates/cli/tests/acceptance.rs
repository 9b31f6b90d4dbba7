//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use jointparse::decode::enumerate_ltrees;
use jointparse::eval::DEFAULT_PUNCT_TAGS;
use jointparse::synth::{random_corpus, random_pair, toy_corpus};
use jointparse::train::{build_model, hinge_loss, label_loss, LabelTargets};
use jointparse::treebank::pair_and_audit_files;
use jointparse::{
    build_ltree, cky, eisner, eisner_satta, head_binarize, ltree_to_ctree,
    ltree_to_dtree, predict, train, CTree, Constituent, CostConfig, DTree, Evaluator, LexSpan,
    Metrics, Model, ModelConfig, PunctTags, ScoreTables, Sentence, TrainConfig, TrainInstance,
};
use jointparse_cli::oracle;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_tables(rng: &mut ChaCha8Rng, n: usize, second_order: bool) -> ScoreTables {
    oracle::random_tables(rng, n, second_order)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let summary = oracle::verify(100, 6, 2024).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if let Some(m) = summary.mismatches.first() {
        return Err(format!(
            "{} mismatches, first at n={} order2={} cost={}: {} vs {}",
            summary.mismatches.len(),
            m.n,
            m.second_order,
            m.cost,
            m.decoder,
            m.oracle
        ));
    }
    ensure(summary.checked == 100 * 5 * 4, || format!("only {} checks", summary.checked))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:.1?}"))?;
    Ok(format!("{} checks in {elapsed:.2?}", summary.checked))
}

fn enumeration_counts() -> Outcome {
    let expected = [1usize, 2, 8, 40, 224, 1344];
    let got: Vec<usize> = (1..=6)
        .map(|n| enumerate_ltrees(n).map(Iterator::count))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(got == expected, || format!("counts {got:?}"))?;
    Ok(format!("{got:?}"))
}

fn round_trip() -> Outcome {
    let corpus = random_corpus(31, 250, 1, 30);
    let mut exact = 0;
    for (_, c, d) in &corpus {
        let l = head_binarize(c, d)
            .and_then(|b| build_ltree(&b, d))
            .map_err(|e| e.to_string())?;
        if ltree_to_ctree(&l) == *c && ltree_to_dtree(&l).heads() == d.heads() {
            exact += 1;
        }
    }
    ensure(exact == corpus.len(), || format!("{exact}/{} exact", corpus.len()))?;
    Ok(format!("{exact}/{} exact", corpus.len()))
}

fn bin(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_jointparse"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn compatibility_guarantee() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name);
    let (tb, tc) = (path("train.mrg"), path("train.conllx"));
    bin(&[
        "synth", "--kind", "random", "--count", "40", "--seed", "8", "--min-len", "2",
        "--max-len", "12", "--out-brackets", p(&tb), "--out-conllx", p(&tc),
    ])?;
    // parse inputs: unseen random sentences of length 1..35
    let mut text = String::new();
    for (s, _, _) in random_corpus(99, 150, 1, 35) {
        text.push_str(&s.tokens().join(" "));
        text.push('\n');
    }
    fs::write(path("input.txt"), &text).map_err(|e| e.to_string())?;

    let mut models = Vec::new();
    for (seed, order) in [("1", "1"), ("2", "2"), ("3", "2")] {
        let m = path(&format!("init-{seed}-{order}.bin"));
        bin(&["init", p(&tb), p(&tc), "--model", p(&m), "--seed", seed, "--order", order])?;
        models.push(m);
    }
    let cfg = path("tiny.cfg");
    fs::write(&cfg, "embed_dim = 24\nff_dim = 32\nmlp_dim = 16\nspan2o_dim = 16\nepochs = 4\n")
        .map_err(|e| e.to_string())?;
    for order in ["1", "2"] {
        let m = path(&format!("trained-{order}.bin"));
        bin(&["train", p(&tb), p(&tc), "--model", p(&m), "--config", p(&cfg), "--order", order])?;
        models.push(m);
    }

    let mut checked = 0;
    for (k, m) in models.iter().enumerate() {
        let (ob, oc) = (path(&format!("out{k}.mrg")), path(&format!("out{k}.conllx")));
        bin(&[
            "parse", p(&path("input.txt")), "--model", p(m), "--out-brackets", p(&ob),
            "--out-conllx", p(&oc),
        ])?;
        let (pairs, stats) = pair_and_audit_files(&ob, &oc).map_err(|e| e.to_string())?;
        ensure(pairs.len() == 150, || format!("{} outputs from {}", pairs.len(), m.display()))?;
        ensure(stats.compatible == stats.sentences, || {
            format!("{}: {stats}", m.display())
        })?;
        checked += pairs.len();
    }
    Ok(format!("{checked}/{checked} parses compatible over {} checkpoints", models.len()))
}

fn degenerate_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let n = rng.random_range(1..=20);
        let mut t = random_tables(&mut rng, n, false);
        t.arc.fill(0.0);
        let joint = eisner_satta(&t, false, None).map_err(|e| e.to_string())?;
        let (_, by_cky) = cky(&t.span).map_err(|e| e.to_string())?;
        let mut u = random_tables(&mut rng, n, false);
        u.span.fill(0.0);
        let joint_d = eisner_satta(&u, false, None).map_err(|e| e.to_string())?;
        let (_, by_eisner) = eisner(&u.arc).map_err(|e| e.to_string())?;
        for (a, b) in [(joint.score, by_cky), (joint_d.score, by_eisner)] {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            worst = worst.max(rel);
            ensure(rel <= 1e-12, || format!("trial {trial} (n={n}): {a} vs {b}"))?;
        }
    }
    Ok(format!("50 tables, max relative difference {worst:.1e}"))
}

fn logic_example() -> (Sentence, CTree, DTree) {
    let s = Sentence::from_tokens(["Logic", "plays", "a", "maximal", "role", "here"]).unwrap();
    let c = CTree::new(
        6,
        vec![
            Constituent::new(1, 6, "S"),
            Constituent::new(1, 1, "NP"),
            Constituent::new(2, 6, "VP"),
            Constituent::new(3, 5, "NP"),
            Constituent::new(6, 6, "ADVP"),
        ],
    )
    .unwrap();
    let rels = ["nsubj", "root", "det", "amod", "dobj", "advmod"];
    let d = DTree::new(
        vec![2, 0, 5, 5, 2, 2],
        Some(rels.iter().map(|r| r.to_string()).collect()),
    )
    .unwrap();
    (s, c, d)
}

fn golden_example() -> Outcome {
    let (_, c, d) = logic_example();
    let binarized = head_binarize(&c, &d).map_err(|e| e.to_string())?;
    let spans: Vec<(usize, usize, &str)> = binarized
        .constituents()
        .iter()
        .map(|x| (x.i, x.j, x.label.as_str()))
        .collect();
    let want_bin = vec![
        (1, 6, "S"),
        (1, 1, "NP"),
        (2, 6, "VP"),
        (2, 5, "VP*"),
        (2, 2, "VP*"),
        (3, 5, "NP"),
        (3, 3, "NP*"),
        (4, 5, "NP*"),
        (4, 4, "NP*"),
        (5, 5, "NP*"),
        (6, 6, "ADVP"),
    ];
    ensure(spans == want_bin, || format!("binarized {spans:?}"))?;

    let want = vec![
        LexSpan::new(1, 6, 2, "S"),
        LexSpan::new(1, 1, 1, "NP"),
        LexSpan::new(2, 6, 2, "VP"),
        LexSpan::new(2, 5, 2, "VP*"),
        LexSpan::new(2, 2, 2, "VP*"),
        LexSpan::new(3, 5, 5, "NP"),
        LexSpan::new(3, 3, 3, "NP*"),
        LexSpan::new(4, 5, 5, "NP*"),
        LexSpan::new(4, 4, 4, "NP*"),
        LexSpan::new(5, 5, 5, "NP*"),
        LexSpan::new(6, 6, 6, "ADVP"),
    ];
    let gold = build_ltree(&binarized, &d).map_err(|e| e.to_string())?;
    ensure(gold.spans() == want.as_slice(), || format!("l-tree {:?}", gold.spans()))?;

    for second_order in [false, true] {
        let mut t = ScoreTables::zeros(6, second_order);
        let parts = gold.parts();
        for &(i, j) in &parts.spans {
            t.span[[i, j]] = 1.0;
        }
        for &(h, m) in &parts.arcs {
            t.arc[[h, m]] = 1.0;
        }
        if let Some(s2) = &mut t.span2o {
            for &(i, j, h) in parts.headed.iter().chain(&parts.hooked) {
                s2[[i, j, h]] = 1.0;
            }
        }
        let decoded = eisner_satta(&t, second_order, None).map_err(|e| e.to_string())?;
        let labeled = decoded.tree.relabel(|k| want[k].label.clone());
        ensure(decoded.tree.triples() == gold.triples(), || {
            format!("order2={second_order}: decoded {:?}", decoded.tree.triples())
        })?;
        ensure(labeled.spans() == want.as_slice(), || "labels misaligned".into())?;
        ensure(ltree_to_ctree(&labeled) == c, || "c-tree not recovered".into())?;
    }
    let heads: Vec<usize> = gold.spans().iter().map(|s| s.h).collect();
    Ok(format!("{} spans decoded in both orders, heads {heads:?}", heads.len()))
}

fn overfit() -> Outcome {
    let corpus: Vec<TrainInstance> = toy_corpus(17, 32)
        .into_iter()
        .map(|(s, c, d)| TrainInstance::from_pair(s, &c, d))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 150,
        batch_size: 4,
        lr: 0.01,
        second_order: true,
        model: ModelConfig {
            embed_dim: 64,
            ff_dim: 128,
            mlp_dim: 64,
            span2o_dim: 64,
            max_positions: 64,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let evaluate = |model: &Model| -> jointparse::Result<Metrics> {
        let mut ev = Evaluator::new(PunctTags::default());
        for x in &corpus {
            let pred = predict(model, &x.sentence, true)?;
            let gold_c = ltree_to_ctree(&x.gold);
            ev.add(&x.sentence, (&pred.ctree, &pred.dtree), (&gold_c, &x.dtree))?;
        }
        Ok(ev.metrics())
    };
    let mut first_hit = None;
    let (model, _) = train(&corpus, &config, |model, report| {
        if first_hit.is_none() && report.epoch % 10 == 0 {
            let m = evaluate(model)?;
            if m.uas >= 99.0 && m.las >= 98.0 && m.con_f1 >= 99.0 && m.lcm_both >= 90.0 {
                first_hit = Some(report.epoch);
            }
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let m = evaluate(&model).map_err(|e| e.to_string())?;
    let summary = format!(
        "UAS {:.2} LAS {:.2} F1 {:.2} LCM {:.2} after {} epochs (thresholds first met at epoch {}) in {elapsed:.1?}",
        m.uas,
        m.las,
        m.con_f1,
        m.lcm_both,
        config.epochs,
        first_hit.map_or("-".to_owned(), |e| e.to_string())
    );
    ensure(
        m.uas >= 99.0 && m.las >= 98.0 && m.con_f1 >= 99.0 && m.lcm_both >= 90.0,
        || summary.clone(),
    )?;
    ensure(elapsed < Duration::from_secs(600), || summary.clone())?;
    Ok(summary)
}

/// Central differences on randomly chosen parameters with a non-zero
/// analytic gradient. Probes where the cost-augmented argmax changes
/// within `eps` are skipped.
fn gradient_checks() -> Outcome {
    let (sentence, c, d) = logic_example();
    let mut corpus = vec![TrainInstance::from_pair(sentence.clone(), &c, d.clone()).unwrap()];
    corpus.extend(toy_corpus(4, 3).into_iter().map(|(s, c, d)| TrainInstance::from_pair(s, &c, d).unwrap()));
    let config = TrainConfig {
        model: ModelConfig {
            embed_dim: 10,
            ff_dim: 12,
            mlp_dim: 8,
            span2o_dim: 6,
            max_positions: 16,
            init_scale: 0.5,
            ..ModelConfig::default()
        },
        seed: 5,
        ..TrainConfig::default()
    };
    let mut model = build_model(&corpus, &config).map_err(|e| e.to_string())?;
    let x = &corpus[0];
    let targets = LabelTargets::new(&x.gold, &x.dtree, &model.labels, &model.rels)
        .map_err(|e| e.to_string())?;
    let cost = CostConfig::new(x.gold.unlabeled());
    let n = x.sentence.len();

    let hinge = |m: &Model| {
        let f = m.forward(&x.sentence, true);
        let best = eisner_satta(&f.tables, true, Some(&cost)).unwrap().tree.triples();
        (hinge_loss(&f.tables, &x.gold, true, 1.0, 1.0).unwrap().0, best)
    };
    let label = |m: &Model| label_loss(&m.forward(&x.sentence, true).labels, &targets).0;

    let f = model.forward(&x.sentence, true);
    let (base_hinge, d_tables) =
        hinge_loss(&f.tables, &x.gold, true, 1.0, 1.0).map_err(|e| e.to_string())?;
    ensure(base_hinge > 0.0, || "hinge loss is zero at the probe point".into())?;
    let (_, d_labels) = label_loss(&f.labels, &targets);
    let g_hinge = model.backward(&f.tape, &d_tables, None).map_err(|e| e.to_string())?;
    let g_label = model
        .backward(&f.tape, &ScoreTables::zeros(n, true), Some(&d_labels))
        .map_err(|e| e.to_string())?;

    let eps = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut report = Vec::new();
    for (name, grads, is_hinge) in [("hinge", &g_hinge, true), ("label", &g_label, false)] {
        let candidates: Vec<(usize, usize)> = grads
            .tensors()
            .iter()
            .enumerate()
            .flat_map(|(t, (_, view))| {
                view.iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() > 1e-6)
                    .map(move |(k, _)| (t, k))
                    .collect::<Vec<_>>()
            })
            .collect();
        let tensors = grads.tensors();
        let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
        let base_tree = hinge(&model).1;
        let mut picks: Vec<(usize, usize)> = candidates
            .choose_multiple(&mut rng, 60)
            .copied()
            .collect();
        picks.sort_unstable();
        let mut touched = BTreeMap::new();
        for (t, k) in picks {
            if checked >= 30 {
                break;
            }
            let analytic = tensors[t].1.iter().nth(k).copied().unwrap();
            let bump = |model: &mut Model, delta: f64| {
                let mut ts = model.params_mut().tensors_mut();
                *ts[t].1.iter_mut().nth(k).unwrap() += delta;
            };
            bump(&mut model, eps);
            let plus = if is_hinge { hinge(&model) } else { (label(&model), Vec::new()) };
            bump(&mut model, -2.0 * eps);
            let minus = if is_hinge { hinge(&model) } else { (label(&model), Vec::new()) };
            bump(&mut model, eps);
            if is_hinge && (plus.1 != base_tree || minus.1 != base_tree) {
                skipped += 1;
                continue;
            }
            let numeric = (plus.0 - minus.0) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            worst = worst.max(rel);
            ensure(rel < 1e-4, || {
                format!("{name} {}[{k}]: analytic {analytic:e} numeric {numeric:e}", tensors[t].0)
            })?;
            *touched.entry(tensors[t].0).or_insert(0) += 1;
            checked += 1;
        }
        ensure(checked >= 20, || format!("{name}: only {checked} probes ({skipped} at ties)"))?;
        report.push(format!(
            "{name}: {checked} params over {} tensors, max rel err {worst:.1e}",
            touched.len()
        ));
    }
    Ok(report.join("; "))
}

fn mean_decode_time(n: usize, second_order: bool, runs: usize) -> Duration {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let tables: Vec<ScoreTables> = (0..runs)
        .map(|_| random_tables(&mut rng, n, second_order))
        .collect();
    // warm-up
    eisner_satta(&tables[0], second_order, None).unwrap();
    let start = Instant::now();
    for t in &tables {
        std::hint::black_box(eisner_satta(t, second_order, None).unwrap());
    }
    start.elapsed() / runs as u32
}

fn complexity() -> Outcome {
    let mut parts = Vec::new();
    for second_order in [false, true] {
        let t20 = mean_decode_time(20, second_order, 10);
        let t40 = mean_decode_time(40, second_order, 10);
        let ratio = t40.as_secs_f64() / t20.as_secs_f64();
        let label = if second_order { "2nd" } else { "1st" };
        ensure(ratio <= 24.0, || {
            format!("{label} order: t(40)/t(20) = {ratio:.2} ({t20:.2?} vs {t40:.2?})")
        })?;
        parts.push(format!("{label} order t(40)/t(20) = {ratio:.2} ({t20:.2?} / {t40:.2?})"));
    }
    Ok(parts.join("; "))
}

/// Straightforward recount used as the reference for the evaluator.
#[derive(Default)]
struct Naive {
    words: usize,
    heads: usize,
    labeled: usize,
    pred_spans: usize,
    gold_spans: usize,
    common: usize,
    sentences: usize,
    exact_con: usize,
    exact_dep: usize,
    exact_both: usize,
}

impl Naive {
    fn add(&mut self, s: &Sentence, pred: (&CTree, &DTree), gold: (&CTree, &DTree)) {
        let tags = s.pos().unwrap();
        for m in 1..=s.len() {
            if DEFAULT_PUNCT_TAGS.contains(&tags[m - 1].as_str()) {
                continue;
            }
            self.words += 1;
            if pred.1.heads()[m - 1] == gold.1.heads()[m - 1] {
                self.heads += 1;
                if pred.1.rels().unwrap()[m - 1] == gold.1.rels().unwrap()[m - 1] {
                    self.labeled += 1;
                }
            }
        }
        let key = |c: &Constituent| (c.i, c.j, c.label.clone());
        let mut p: Vec<_> = pred.0.constituents().iter().map(key).collect();
        let mut g: Vec<_> = gold.0.constituents().iter().map(key).collect();
        self.pred_spans += p.len();
        self.gold_spans += g.len();
        let mut left = g.clone();
        for span in &p {
            if let Some(pos) = left.iter().position(|x| x == span) {
                left.remove(pos);
                self.common += 1;
            }
        }
        p.sort();
        g.sort();
        let con = p == g;
        let dep = pred.1.heads() == gold.1.heads() && pred.1.rels() == gold.1.rels();
        self.sentences += 1;
        self.exact_con += usize::from(con);
        self.exact_dep += usize::from(dep);
        self.exact_both += usize::from(con && dep);
    }

    fn scores(&self) -> [f64; 8] {
        let pct = |a: usize, b: usize| if b == 0 { 100.0 } else { 100.0 * a as f64 / b as f64 };
        let (pr, rc) = (pct(self.common, self.pred_spans), pct(self.common, self.gold_spans));
        let f1 = if pr + rc == 0.0 { 0.0 } else { 2.0 * pr * rc / (pr + rc) };
        [
            pct(self.heads, self.words),
            pct(self.labeled, self.words),
            pr,
            rc,
            f1,
            pct(self.exact_con, self.sentences),
            pct(self.exact_dep, self.sentences),
            pct(self.exact_both, self.sentences),
        ]
    }
}

fn metric_array(m: &Metrics) -> [f64; 8] {
    [m.uas, m.las, m.con_p, m.con_r, m.con_f1, m.lcm_con, m.lcm_dep, m.lcm_both]
}

fn agree(a: [f64; 8], b: [f64; 8]) -> bool {
    a.iter().zip(&b).all(|(x, y)| format!("{x:.2}") == format!("{y:.2}"))
}

fn metric_correctness() -> Outcome {
    const TAGS: [&str; 6] = ["NN", "VB", "DT", ",", ".", "JJ"];
    const LABELS: [&str; 3] = ["S", "NP", "VP"];
    const RELS: [&str; 3] = ["nsubj", "dobj", "det"];
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut corpus_ev = Evaluator::new(PunctTags::default());
    let mut corpus_naive = Naive::default();
    for k in 0..100 {
        let n = rng.random_range(1..=15);
        let (s, gc, gd) = random_pair(&mut rng, n, 30);
        let tags = (0..n).map(|_| TAGS.choose(&mut rng).unwrap().to_string()).collect();
        let s = s.with_pos(Some(tags)).unwrap();
        let (pc, pd) = match k % 3 {
            0 => (gc.clone(), gd.clone()),
            1 => {
                // same structure, some labels and relations changed
                let spans = gc
                    .constituents()
                    .iter()
                    .map(|c| {
                        let label = if rng.random_bool(0.2) { *LABELS.choose(&mut rng).unwrap() } else { c.label.as_str() };
                        Constituent::new(c.i, c.j, label)
                    })
                    .collect();
                let rels = gd
                    .rels()
                    .unwrap()
                    .iter()
                    .map(|r| if rng.random_bool(0.2) { RELS.choose(&mut rng).unwrap().to_string() } else { r.clone() })
                    .collect();
                (CTree::new(n, spans).unwrap(), gd.with_rels(rels).unwrap())
            }
            _ => {
                let (_, c, d) = random_pair(&mut rng, n, 30);
                (c, d)
            }
        };
        let mut ev = Evaluator::new(PunctTags::default());
        let mut naive = Naive::default();
        ev.add(&s, (&pc, &pd), (&gc, &gd)).map_err(|e| e.to_string())?;
        naive.add(&s, (&pc, &pd), (&gc, &gd));
        let (got, want) = (metric_array(&ev.metrics()), naive.scores());
        ensure(agree(got, want), || format!("pair {k}: {got:?} vs {want:?}"))?;
        corpus_ev.add(&s, (&pc, &pd), (&gc, &gd)).map_err(|e| e.to_string())?;
        corpus_naive.add(&s, (&pc, &pd), (&gc, &gd));
    }
    let (got, want) = (metric_array(&corpus_ev.metrics()), corpus_naive.scores());
    ensure(agree(got, want), || format!("corpus: {got:?} vs {want:?}"))?;
    Ok(format!(
        "100 pairs agree; corpus UAS {:.2} LAS {:.2} F1 {:.2} LCM {:.2}",
        got[0], got[1], got[4], got[7]
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("enumeration counts", enumeration_counts),
        ("round trip", round_trip),
        ("compatibility of parser outputs", compatibility_guarantee),
        ("degenerate decoder identity", degenerate_identity),
        ("golden example trees", golden_example),
        ("toy overfit", overfit),
        ("gradient checks", gradient_checks),
        ("decode time scaling", complexity),
        ("metric correctness", metric_correctness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
