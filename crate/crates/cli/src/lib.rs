//! Command-line front end of the `jointparse` toolkit.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use jointparse::checkpoint;
use jointparse::synth;
use jointparse::train::{build_model, predict, train_model};
use jointparse::treebank::{
    filter_compatible, pair_and_audit_files, read_brackets, read_conllx, read_ltrees,
    write_brackets, write_conllx, write_ltree,
};
use jointparse::{
    build_ltree, head_binarize, ltree_to_ctree, ltree_to_dtree, CorpusStats, Evaluator, JointInstance,
    PunctTags, Sentence, TrainConfig, TrainInstance,
};
use log::{info, warn};
use rayon::prelude::*;

pub mod oracle;

/// Exit status for failed verifications.
pub const EXIT_VERIFY: u8 = 1;
/// Exit status for usage, parse and I/O errors.
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "jointparse", version, about = "Joint constituency and dependency parsing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Order {
    #[value(name = "1")]
    First,
    #[value(name = "2")]
    Second,
}

impl Order {
    fn second(self) -> bool {
        self == Order::Second
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// One whitespace-tokenized sentence per line.
    Text,
    Conllx,
    Brackets,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Random compatible trees.
    Random,
    /// Sentences from a tiny English-like grammar.
    Toy,
}

#[derive(Debug, Args)]
pub struct TreebankArgs {
    /// Bracketed constituency trees.
    pub brackets: PathBuf,
    /// CoNLL-X dependency trees, aligned with the brackets.
    pub conllx: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report how many sentence pairs are compatible.
    CheckCompat {
        #[command(flatten)]
        data: TreebankArgs,
        /// Print the full statistics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write head-binarized lexicalized trees as `label[h]` brackets.
    Convert {
        #[command(flatten)]
        data: TreebankArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Split lexicalized trees back into bracketed and CoNLL-X files.
    Recover {
        ltrees: PathBuf,
        #[arg(long)]
        out_brackets: PathBuf,
        #[arg(long)]
        out_conllx: PathBuf,
    },
    /// Train a model on the compatible part of a treebank.
    Train(TrainArgs),
    /// Write an untrained, randomly initialized model.
    Init {
        #[command(flatten)]
        data: TreebankArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "2")]
        order: Order,
    },
    /// Parse sentences with a trained model.
    Parse {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: InputFormat,
        /// Decoding order; defaults to the order the model was trained with.
        #[arg(long, value_enum)]
        order: Option<Order>,
        #[arg(long)]
        out_brackets: Option<PathBuf>,
        #[arg(long)]
        out_conllx: Option<PathBuf>,
    },
    /// Score predicted trees against gold trees.
    Eval {
        #[arg(long)]
        gold_brackets: PathBuf,
        #[arg(long)]
        gold_conllx: PathBuf,
        #[arg(long)]
        pred_brackets: PathBuf,
        #[arg(long)]
        pred_conllx: PathBuf,
        /// Punctuation tags, comma or space separated (`COMMA` for `,`).
        #[arg(long)]
        punct_tags: Option<String>,
        #[arg(long)]
        json: bool,
        /// Write per-bucket scores as TSV.
        #[arg(long)]
        buckets: Option<PathBuf>,
    },
    /// Compare the chart decoder with exhaustive search on random scores.
    OracleVerify {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(2..=8))]
        max_len: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Generate a synthetic treebank.
    Synth {
        #[arg(long, value_enum, default_value = "random")]
        kind: SynthKind,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        min_len: usize,
        #[arg(long, default_value_t = 15)]
        max_len: usize,
        #[arg(long)]
        out_brackets: PathBuf,
        #[arg(long)]
        out_conllx: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: TreebankArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// `key = value` training options; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dev_brackets: Option<PathBuf>,
    #[arg(long, requires = "dev_brackets")]
    pub dev_conllx: Option<PathBuf>,
    /// Per-epoch JSON lines with losses and development scores.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub order: Option<Order>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub punct_tags: Option<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn audit(brackets: &Path, conllx: &Path) -> Result<(Vec<JointInstance>, CorpusStats)> {
    pair_and_audit_files(brackets, conllx)
        .with_context(|| format!("reading {} and {}", brackets.display(), conllx.display()))
}

fn load_pairs(data: &TreebankArgs) -> Result<Vec<JointInstance>> {
    let (instances, stats) = audit(&data.brackets, &data.conllx)?;
    info!("{} compatible: {stats}", data.brackets.display());
    Ok(instances)
}

fn punct_tags(list: Option<&str>) -> PunctTags {
    list.map(PunctTags::parse).unwrap_or_default()
}

/// Runs one command and returns the process exit status.
pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::CheckCompat { data, json } => {
            let (_, stats) = audit(&data.brackets, &data.conllx)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                println!("compatible: {stats}");
                println!("non_projective: {}", stats.non_projective);
                for (reason, count) in &stats.reasons {
                    println!("incompatible_{}: {count}", reason.to_lowercase());
                }
            }
        }
        Command::Convert { data, output } => {
            let mut out: Box<dyn Write> = match &output {
                Some(path) => Box::new(create(path)?),
                None => Box::new(io::stdout().lock()),
            };
            let mut skipped = 0;
            for (k, x) in load_pairs(&data)?.into_iter().enumerate() {
                if !x.compat.compatible {
                    warn!("sentence {}: incompatible, skipped", k + 1);
                    skipped += 1;
                    continue;
                }
                let ltree = build_ltree(&head_binarize(&x.ctree, &x.dtree)?, &x.dtree)?;
                writeln!(out, "{}", write_ltree(&x.sentence, &ltree)?)?;
            }
            out.flush()?;
            info!("skipped {skipped} incompatible sentences");
        }
        Command::Recover {
            ltrees,
            out_brackets,
            out_conllx,
        } => {
            let mut brackets = create(&out_brackets)?;
            let mut conll = create(&out_conllx)?;
            for (sentence, ltree) in read_ltrees(&ltrees)? {
                writeln!(brackets, "{}", write_brackets(&sentence, &ltree_to_ctree(&ltree))?)?;
                write!(conll, "{}", write_conllx(&sentence, &ltree_to_dtree(&ltree))?)?;
            }
            brackets.flush()?;
            conll.flush()?;
        }
        Command::Train(args) => cmd_train(args)?,
        Command::Init {
            data,
            model,
            seed,
            order,
        } => {
            let corpus = training_instances(&data)?;
            let config = TrainConfig {
                seed,
                second_order: order.second(),
                ..TrainConfig::default()
            };
            checkpoint::save(&build_model(&corpus, &config)?, &model)?;
        }
        Command::Parse {
            input,
            model,
            format,
            order,
            out_brackets,
            out_conllx,
        } => cmd_parse(&input, &model, format, order, out_brackets, out_conllx)?,
        Command::Eval {
            gold_brackets,
            gold_conllx,
            pred_brackets,
            pred_conllx,
            punct_tags: tags,
            json,
            buckets,
        } => {
            let (gold, _) = audit(&gold_brackets, &gold_conllx)?;
            let (pred, _) = audit(&pred_brackets, &pred_conllx)?;
            if gold.len() != pred.len() {
                bail!("{} gold sentences but {} predicted", gold.len(), pred.len());
            }
            let mut ev = Evaluator::new(punct_tags(tags.as_deref()));
            for (k, (g, p)) in gold.iter().zip(&pred).enumerate() {
                ev.add(&g.sentence, (&p.ctree, &p.dtree), (&g.ctree, &g.dtree))
                    .with_context(|| format!("sentence {}", k + 1))?;
            }
            let metrics = ev.metrics();
            if json {
                println!("{}", metrics.to_json());
            } else {
                println!("{metrics}");
            }
            if let Some(path) = buckets {
                fs::write(&path, ev.bucket_tsv())
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
        }
        Command::OracleVerify {
            trials,
            max_len,
            seed,
        } => {
            let summary = oracle::verify(trials, max_len as usize, seed)?;
            for m in &summary.mismatches {
                println!(
                    "MISMATCH n={} order={} cost={} trial={}: decoder {} oracle {}",
                    m.n,
                    if m.second_order { 2 } else { 1 },
                    m.cost,
                    m.trial,
                    m.decoder,
                    m.oracle
                );
            }
            if summary.passed() {
                println!("{} checks, all passed", summary.checked);
            } else {
                println!(
                    "{} of {} checks failed",
                    summary.mismatches.len(),
                    summary.checked
                );
                return Ok(ExitCode::from(EXIT_VERIFY));
            }
        }
        Command::Synth {
            kind,
            count,
            seed,
            min_len,
            max_len,
            out_brackets,
            out_conllx,
        } => {
            if min_len == 0 || min_len > max_len {
                bail!("need 1 <= min-len <= max-len");
            }
            let pairs = match kind {
                SynthKind::Random => synth::random_corpus(seed, count, min_len, max_len),
                SynthKind::Toy => synth::toy_corpus(seed, count),
            };
            let mut brackets = create(&out_brackets)?;
            let mut conll = create(&out_conllx)?;
            for (s, c, d) in &pairs {
                writeln!(brackets, "{}", write_brackets(s, c)?)?;
                write!(conll, "{}", write_conllx(s, d)?)?;
            }
            brackets.flush()?;
            conll.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn training_instances(data: &TreebankArgs) -> Result<Vec<TrainInstance>> {
    filter_compatible(load_pairs(data)?)
        .iter()
        .map(|x| x.to_train_instance().map_err(Into::into))
        .collect()
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            TrainConfig::parse(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(order) = args.order {
        config.second_order = order.second();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(batch) = args.batch_size {
        config.batch_size = batch;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(lr) = args.lr {
        config.lr = lr;
    }
    config.validate()?;

    let corpus = training_instances(&args.data)?;
    let dev = match (&args.dev_brackets, &args.dev_conllx) {
        (Some(b), Some(c)) => Some(load_pairs(&TreebankArgs {
            brackets: b.clone(),
            conllx: c.clone(),
        })?),
        _ => None,
    };
    let punct = punct_tags(args.punct_tags.as_deref());
    let mut log = args.log.as_deref().map(create).transpose()?;
    let mut model = build_model(&corpus, &config)?;
    let second_order = config.second_order;
    train_model(&mut model, &corpus, &config, |model, report| {
        if let Some(dev) = &dev {
            let mut ev = Evaluator::new(punct.clone());
            let preds: Vec<_> = dev
                .par_iter()
                .map(|x| predict(model, &x.sentence, second_order))
                .collect::<jointparse::Result<_>>()?;
            for (x, p) in dev.iter().zip(&preds) {
                ev.add(&x.sentence, (&p.ctree, &p.dtree), (&x.ctree, &x.dtree))?;
            }
            let m = ev.metrics();
            report.metrics.insert("dev_uas".into(), m.uas);
            report.metrics.insert("dev_las".into(), m.las);
            report.metrics.insert("dev_con_f1".into(), m.con_f1);
            report.metrics.insert("dev_lcm_both".into(), m.lcm_both);
        }
        if let Some(log) = &mut log {
            let line = serde_json::to_string(report).expect("report serializes");
            writeln!(log, "{line}")?;
            log.flush()?;
        }
        Ok(())
    })?;
    checkpoint::save(&model, &args.model)?;
    info!("saved {}", args.model.display());
    Ok(())
}

fn read_input(path: &Path, format: InputFormat) -> Result<Vec<Sentence>> {
    Ok(match format {
        InputFormat::Text => fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Sentence::from_tokens(l.split_whitespace()))
            .collect::<jointparse::Result<_>>()?,
        InputFormat::Conllx => read_conllx(path)?.into_iter().map(|e| e.sentence).collect(),
        InputFormat::Brackets => read_brackets(path)?.into_iter().map(|(s, _)| s).collect(),
    })
}

fn cmd_parse(
    input: &Path,
    model: &Path,
    format: InputFormat,
    order: Option<Order>,
    out_brackets: Option<PathBuf>,
    out_conllx: Option<PathBuf>,
) -> Result<()> {
    let model = checkpoint::load(model)
        .with_context(|| format!("cannot load model {}", model.display()))?;
    let second_order = order.map_or(model.config.second_order, Order::second);
    let sentences = read_input(input, format)?;
    let preds = sentences
        .par_iter()
        .map(|s| predict(&model, s, second_order))
        .collect::<jointparse::Result<Vec<_>>>()?;
    let stdout_brackets = out_brackets.is_none() && out_conllx.is_none();
    let mut brackets: Option<Box<dyn Write>> = match (&out_brackets, stdout_brackets) {
        (Some(path), _) => Some(Box::new(create(path)?)),
        (None, true) => Some(Box::new(io::stdout().lock())),
        (None, false) => None,
    };
    let mut conll = out_conllx.as_deref().map(create).transpose()?;
    for (s, p) in sentences.iter().zip(&preds) {
        if let Some(out) = &mut brackets {
            writeln!(out, "{}", write_brackets(s, &p.ctree)?)?;
        }
        if let Some(out) = &mut conll {
            write!(out, "{}", write_conllx(s, &p.dtree)?)?;
        }
    }
    if let Some(out) = &mut brackets {
        out.flush()?;
    }
    if let Some(out) = &mut conll {
        out.flush()?;
    }
    Ok(())
}
