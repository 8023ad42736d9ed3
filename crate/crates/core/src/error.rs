use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data (corpus, vector file, degenerate statistics).
    Validation,
    /// Provider, network, fixture or filesystem failure.
    Runtime,
    /// Malformed or incomplete configuration.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error{}: {message}", location.as_deref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Schema {
        location: Option<String>,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("corpus has no records")]
    EmptyCorpus,

    #[error("dimension mismatch{}: expected {expected}, found {found}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    DimMismatch {
        expected: usize,
        found: usize,
        line: Option<usize>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate term `{term}` at line {line}")]
    DuplicateTerm { term: String, line: usize },

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("non-finite vector component at index {0}")]
    NonFinite(usize),

    #[error("invalid dimension {0}")]
    InvalidDim(usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate spread: all association values are equal (sigma = {sigma:e}); check the lexicons")]
    DegenerateSpread { sigma: f64 },

    #[error("exact enumeration needs {count} relabelings, over the limit of {limit}; use sampled mode")]
    CombinatorialLimit { count: u128, limit: u128 },

    #[error("span {start}..{end} out of bounds for text of {len} chars")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("network error: {0}")]
    Network(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("authentication failed: {0}")]
    Auth(String),

    #[error("rate limited: gave up after {attempts} attempts (last status {status})")]
    RateLimited { attempts: u32, status: u16 },

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("replay fixture missing for fingerprint {fingerprint} (prompt `{prompt_id}`, persona `{persona}`)")]
    FixtureMissing {
        fingerprint: String,
        prompt_id: String,
        persona: String,
    },

    #[error("class `{0}` has no resolvable lexicon terms under this provider")]
    UnresolvableLexicon(String),

    #[error("expected {expected} values, got {found}")]
    WrongArity { expected: usize, found: usize },

    #[error("need at least {needed} samples, got {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("degenerate design: every perturbation mask is identical (keep_prob = {keep_prob}); lower keep_prob")]
    DegenerateDesign { keep_prob: f64 },

    #[error("degenerate data: all values are equal; pass a minimum bandwidth to estimate a density")]
    DegenerateData,

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("cell (prompt `{prompt_id}`, persona `{persona}`): {source}")]
    Cell {
        prompt_id: String,
        persona: String,
        #[source]
        source: Box<Error>,
    },

    #[error("interrupted")]
    Interrupted,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Error::Schema {
            location: None,
            message: message.into(),
        }
    }

    pub fn schema_at(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: Some(location.into()),
            message: message.into(),
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn in_cell(self, prompt_id: &str, persona: Option<&str>) -> Self {
        Error::Cell {
            prompt_id: prompt_id.to_string(),
            persona: persona.unwrap_or("neutral").to_string(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } => ErrorClass::Config,
            Error::Io { .. }
            | Error::Network(_)
            | Error::Protocol(_)
            | Error::Auth(_)
            | Error::RateLimited { .. }
            | Error::MalformedResponse(_)
            | Error::FixtureMissing { .. }
            | Error::Interrupted => ErrorClass::Runtime,
            Error::Cell { source, .. } => source.class(),
            _ => ErrorClass::Validation,
        }
    }

    /// Short machine-readable tag for JSON output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io-error",
            Error::Schema { .. } => "schema-error",
            Error::DuplicateId(_) => "duplicate-id",
            Error::EmptyCorpus => "empty-corpus",
            Error::DimMismatch { .. } => "dimension-mismatch",
            Error::Parse { .. } => "parse-error",
            Error::DuplicateTerm { .. } => "duplicate-term",
            Error::ZeroNorm => "zero-norm",
            Error::NonFinite(_) => "non-finite",
            Error::InvalidDim(_) => "invalid-dim",
            Error::EmptyInput(_) => "empty-input",
            Error::DegenerateSpread { .. } => "degenerate-spread",
            Error::CombinatorialLimit { .. } => "combinatorial-limit",
            Error::SpanOutOfBounds { .. } => "span-out-of-bounds",
            Error::Network(_) => "network-error",
            Error::Protocol(_) => "protocol-error",
            Error::Auth(_) => "auth-error",
            Error::RateLimited { .. } => "rate-limited",
            Error::MalformedResponse(_) => "malformed-response",
            Error::FixtureMissing { .. } => "fixture-missing",
            Error::UnresolvableLexicon(_) => "unresolvable-lexicon",
            Error::WrongArity { .. } => "wrong-arity",
            Error::InsufficientSamples { .. } => "insufficient-samples",
            Error::DegenerateDesign { .. } => "degenerate-design",
            Error::DegenerateData => "degenerate-data",
            Error::Config { .. } => "config-error",
            Error::Cell { source, .. } => source.kind(),
            Error::Interrupted => "interrupted",
        }
    }
}
