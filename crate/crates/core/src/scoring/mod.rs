//! Domain scoring of out-of-domain pools.
//!
//! A [`Scorer`] maps one example to a score that is monotone in "how
//! in-domain does this look"; [`score_corpus`] applies it to every line of a
//! pool and yields a [`ScoreTable`] aligned with corpus indices. Scorers are
//! immutable once built, so scoring parallelizes freely and the result is
//! independent of the worker count.

mod cds;
mod classifier;

pub use cds::{build_neural_cds, CdsScorer};
pub use classifier::{dc_train, Conditioning, DomainClassifier, LinearModel};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ParallelCorpus};
use crate::error::{Error, Result};

/// One example to score: a monolingual line or an aligned pair.
#[derive(Debug, Clone, Copy)]
pub enum Example<'a> {
    Mono(&'a str),
    Pair { source: &'a str, target: &'a str },
}

impl<'a> Example<'a> {
    pub fn source(&self) -> &'a str {
        match self {
            Example::Mono(s) => s,
            Example::Pair { source, .. } => source,
        }
    }

    pub fn target(&self) -> Option<&'a str> {
        match self {
            Example::Mono(_) => None,
            Example::Pair { target, .. } => Some(target),
        }
    }
}

/// Identifies the configuration that produced a score table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerDescriptor {
    pub method: String,
    pub variant: String,
    pub config_hash: String,
}

impl ScorerDescriptor {
    pub fn new(
        method: impl Into<String>,
        variant: impl Into<String>,
        config_hash: impl Into<String>,
    ) -> Self {
        ScorerDescriptor {
            method: method.into(),
            variant: variant.into(),
            config_hash: config_hash.into(),
        }
    }
}

/// Per-line domain scores, aligned to corpus indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub descriptor: ScorerDescriptor,
    pub scores: Vec<f64>,
}

impl ScoreTable {
    pub fn new(descriptor: ScorerDescriptor, scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::config(format!("non-finite score at line {i}")));
        }
        Ok(ScoreTable { descriptor, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// TSV `line_index<TAB>score` in index order, preceded by a `#` line
    /// carrying the scorer descriptor and config hash.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "# scorer={}:{} config={}\n",
            self.descriptor.method, self.descriptor.variant, self.descriptor.config_hash
        );
        for (i, s) in self.scores.iter().enumerate() {
            out.push_str(&format!("{i}\t{s}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<ScoreTable> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: String| Error::artifact(path, msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let descriptor = parse_descriptor_header(header)
            .ok_or_else(|| bad("expected `# scorer=<m>:<v> config=<hash>` header".into()))?;
        let mut scores = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut fields = line.split('\t');
            let (Some(idx), Some(score), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(bad(format!("row {i}: expected 2 tab-separated columns")));
            };
            let idx: usize = idx.parse().map_err(|_| bad(format!("row {i}: bad index")))?;
            if idx != i {
                return Err(bad(format!("row {i}: out-of-order index {idx}")));
            }
            let score: f64 = score
                .parse()
                .map_err(|_| bad(format!("row {i}: bad score")))?;
            scores.push(score);
        }
        ScoreTable::new(descriptor, scores).map_err(|e| bad(e.to_string()))
    }
}

pub(crate) fn parse_descriptor_header(header: &str) -> Option<ScorerDescriptor> {
    let rest = header.strip_prefix('#')?.trim();
    let mut method_variant = None;
    let mut config = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("scorer=") {
            method_variant = v.split_once(':');
        } else if let Some(v) = field.strip_prefix("config=") {
            config = Some(v);
        }
    }
    let (method, variant) = method_variant?;
    Some(ScorerDescriptor::new(method, variant, config?))
}

/// A frozen scoring function.
pub trait Scorer: Send + Sync {
    fn score(&self, example: &Example) -> Result<f64>;
    fn descriptor(&self) -> ScorerDescriptor;
}

/// A borrowed corpus of either kind, yielding examples by line index.
#[derive(Debug, Clone, Copy)]
pub enum CorpusRef<'a> {
    Mono(&'a Corpus),
    Parallel(&'a ParallelCorpus),
}

impl<'a> CorpusRef<'a> {
    pub fn len(&self) -> usize {
        match self {
            CorpusRef::Mono(c) => c.len(),
            CorpusRef::Parallel(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn example(&self, index: usize) -> Example<'a> {
        match self {
            CorpusRef::Mono(c) => Example::Mono(c.line(index)),
            CorpusRef::Parallel(c) => {
                let (source, target) = c.pair(index);
                Example::Pair { source, target }
            }
        }
    }
}

impl<'a> From<&'a Corpus> for CorpusRef<'a> {
    fn from(c: &'a Corpus) -> Self {
        CorpusRef::Mono(c)
    }
}

impl<'a> From<&'a ParallelCorpus> for CorpusRef<'a> {
    fn from(c: &'a ParallelCorpus) -> Self {
        CorpusRef::Parallel(c)
    }
}

/// Score every line of a corpus. Lines are scored independently and merged
/// in index order, so the table is byte-identical for any worker count.
pub fn score_corpus(
    scorer: &dyn Scorer,
    corpus: CorpusRef,
    workers: usize,
) -> Result<ScoreTable> {
    use rayon::prelude::*;
    let n = corpus.len();
    let scores: Vec<f64> = if workers <= 1 {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(scorer.score(&corpus.example(i))?);
        }
        out
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| scorer.score(&corpus.example(i)))
                .collect::<Result<Vec<f64>>>()
        })?
    };
    ScoreTable::new(scorer.descriptor(), scores)
}
