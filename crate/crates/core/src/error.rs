use std::io;

use thiserror::Error;

/// Errors produced by the parsing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected} words, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("trees are incompatible: span ({i}, {j}) has externally linked words {linked:?}")]
    Incompatible {
        i: usize,
        j: usize,
        linked: Vec<usize>,
    },

    #[error("empty sentence")]
    EmptySentence,

    #[error("sentence of length {n} exceeds the enumeration limit of {max}")]
    TooLarge { n: usize, max: usize },

    #[error("invalid score tables: {0}")]
    InvalidScores(String),

    #[error("gradient tape does not match the current parameters or input")]
    StaleTape,

    #[error("label '{0}' is not in the vocabulary")]
    UnknownLabel(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unbalanced parentheses at line {line}, column {column}")]
    UnbalancedParens { line: usize, column: usize },

    #[error("line {line}: expected 10 columns, found {found}")]
    BadColumnCount { line: usize, found: usize },

    #[error("dependency cycle detected{}", fmt_line(*.line))]
    CycleDetected { line: Option<usize> },

    #[error("multiple roots{}", fmt_line(*.line))]
    MultiRoot { line: Option<usize> },

    #[error("alignment mismatch at sentence {sentence}: {message}")]
    AlignmentMismatch { sentence: usize, message: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

fn fmt_line(line: Option<usize>) -> String {
    match line {
        Some(line) => format!(" in sentence ending at line {line}"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
