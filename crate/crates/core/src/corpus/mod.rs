//! Line-indexed text corpora: ingest, splitting, and synthesis.
//!
//! A [`Corpus`] is immutable after load and its 0-based line indices never
//! change, so downstream stages (score tables, selections) can refer to lines
//! by index instead of copying text. Empty lines are rejected at ingest rather
//! than skipped, which keeps score-file rows aligned with corpus lines.

mod synth;

pub use synth::{generate_synthetic, SyntheticCorpora, SyntheticDomainSpec, SyntheticWorld};

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Monolingual corpus: one sentence per line, indices `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    lines: Vec<String>,
}

impl Corpus {
    /// Build a corpus, validating every line (non-empty, no interior newline).
    pub fn from_lines(lines: Vec<String>) -> Result<Self> {
        for (i, line) in lines.iter().enumerate() {
            validate_line(i, line)?;
        }
        Ok(Corpus { lines })
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn line(&self, index: usize) -> &str {
        &self.lines[index]
    }

    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().map(|s| s.as_str())
    }

    /// Materialize a subset in ascending index order (for small artifacts;
    /// training stages operate on index sets instead).
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            lines: indices.iter().map(|&i| self.lines[i].clone()).collect(),
        }
    }

    pub fn write_plain(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Sentence-aligned bilingual corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<(String, String)>,
}

impl ParallelCorpus {
    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self> {
        for (i, (src, tgt)) in pairs.iter().enumerate() {
            validate_line(i, src)?;
            validate_line(i, tgt)?;
        }
        Ok(ParallelCorpus { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, index: usize) -> (&str, &str) {
        let (s, t) = &self.pairs[index];
        (s, t)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(s, t)| (s.as_str(), t.as_str()))
    }

    /// The source side as a monolingual corpus.
    pub fn source_corpus(&self) -> Corpus {
        Corpus {
            lines: self.pairs.iter().map(|(s, _)| s.clone()).collect(),
        }
    }

    /// The target side as a monolingual corpus.
    pub fn target_corpus(&self) -> Corpus {
        Corpus {
            lines: self.pairs.iter().map(|(_, t)| t.clone()).collect(),
        }
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (src, tgt) in &self.pairs {
            out.push_str(src);
            out.push('\t');
            out.push_str(tgt);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn validate_line(index: usize, line: &str) -> Result<()> {
    if line.is_empty() {
        return Err(Error::ingest(index, "empty line"));
    }
    if line.contains('\n') {
        return Err(Error::ingest(index, "line contains a newline"));
    }
    Ok(())
}

/// On-disk corpus formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// One sentence per line, UTF-8, LF endings.
    Plain,
    /// `source<TAB>target` per line.
    TsvParallel,
    /// One JSON object per line with keys `src` and optional `tgt`.
    Jsonl,
}

/// A loaded corpus of either kind.
#[derive(Debug, Clone)]
pub enum LoadedCorpus {
    Mono(Corpus),
    Parallel(ParallelCorpus),
}

impl LoadedCorpus {
    pub fn len(&self) -> usize {
        match self {
            LoadedCorpus::Mono(c) => c.len(),
            LoadedCorpus::Parallel(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Load a corpus file in the given format.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<LoadedCorpus> {
    let lines = read_utf8_lines(path)?;
    match format {
        CorpusFormat::Plain => Ok(LoadedCorpus::Mono(Corpus::from_lines(lines)?)),
        CorpusFormat::TsvParallel => {
            let mut pairs = Vec::with_capacity(lines.len());
            for (i, line) in lines.iter().enumerate() {
                let mut fields = line.split('\t');
                let src = fields.next().unwrap_or("");
                let tgt = fields
                    .next()
                    .ok_or_else(|| Error::ingest(i, "expected 2 tab-separated columns, got 1"))?;
                if fields.next().is_some() {
                    return Err(Error::ingest(
                        i,
                        "expected 2 tab-separated columns, got more",
                    ));
                }
                pairs.push((src.to_string(), tgt.to_string()));
            }
            Ok(LoadedCorpus::Parallel(ParallelCorpus::from_pairs(pairs)?))
        }
        CorpusFormat::Jsonl => load_jsonl_lines(&lines),
    }
}

pub fn load_plain(path: &Path) -> Result<Corpus> {
    match load_corpus(path, CorpusFormat::Plain)? {
        LoadedCorpus::Mono(c) => Ok(c),
        LoadedCorpus::Parallel(_) => unreachable!(),
    }
}

pub fn load_tsv_parallel(path: &Path) -> Result<ParallelCorpus> {
    match load_corpus(path, CorpusFormat::TsvParallel)? {
        LoadedCorpus::Parallel(c) => Ok(c),
        LoadedCorpus::Mono(_) => unreachable!(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlRecord {
    src: String,
    #[serde(default)]
    tgt: Option<String>,
}

fn load_jsonl_lines(lines: &[String]) -> Result<LoadedCorpus> {
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let rec: JsonlRecord = serde_json::from_str(line)
            .map_err(|e| Error::ingest(i, format!("invalid jsonl record: {e}")))?;
        records.push(rec);
    }
    let with_tgt = records.iter().filter(|r| r.tgt.is_some()).count();
    if with_tgt == records.len() && !records.is_empty() {
        let pairs = records
            .into_iter()
            .map(|r| (r.src, r.tgt.unwrap()))
            .collect();
        Ok(LoadedCorpus::Parallel(ParallelCorpus::from_pairs(pairs)?))
    } else if with_tgt == 0 {
        let lines = records.into_iter().map(|r| r.src).collect();
        Ok(LoadedCorpus::Mono(Corpus::from_lines(lines)?))
    } else {
        Err(Error::ingest(
            records.iter().position(|r| r.tgt.is_none()).unwrap_or(0),
            "jsonl mixes records with and without `tgt`",
        ))
    }
}

/// Read a file as UTF-8 lines, reporting the 0-based line of any invalid byte
/// sequence. A trailing final newline does not produce an empty last line.
fn read_utf8_lines(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.last() == Some(&b'\n') {
        bytes.pop();
        if bytes.last() == Some(&b'\r') {
            bytes.pop();
        }
    }
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let mut lines = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::ingest(i, "invalid UTF-8"))?
            .to_string();
        lines.push(line);
    }
    Ok(lines)
}

/// Requested sizes for a three-way split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitSizes {
    Fractions { train: f64, valid: f64, test: f64 },
    Counts { train: usize, valid: usize, test: usize },
}

/// Deterministic train/valid/test split specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub sizes: SplitSizes,
}

impl SplitSpec {
    /// Resolve to absolute counts for a corpus of `len` lines.
    pub fn resolve(&self, len: usize) -> Result<(usize, usize, usize)> {
        match self.sizes {
            SplitSizes::Fractions { train, valid, test } => {
                let parts = [train, valid, test];
                if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
                    return Err(Error::config("split fractions must be non-negative"));
                }
                let sum: f64 = parts.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!(
                        "split fractions sum to {sum}, expected 1.0"
                    )));
                }
                // Largest-remainder apportionment: exact totals, deterministic.
                let raw: Vec<f64> = parts.iter().map(|f| f * len as f64).collect();
                let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
                let mut leftover = len - counts.iter().sum::<usize>();
                let mut order: Vec<usize> = (0..3).collect();
                order.sort_by(|&a, &b| {
                    let fa = raw[a] - raw[a].floor();
                    let fb = raw[b] - raw[b].floor();
                    fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
                });
                for &i in &order {
                    if leftover == 0 {
                        break;
                    }
                    counts[i] += 1;
                    leftover -= 1;
                }
                Ok((counts[0], counts[1], counts[2]))
            }
            SplitSizes::Counts { train, valid, test } => {
                let total = train
                    .checked_add(valid)
                    .and_then(|s| s.checked_add(test))
                    .ok_or_else(|| Error::config("split counts overflow"))?;
                if total > len {
                    return Err(Error::config(format!(
                        "split counts total {total} exceed corpus size {len}"
                    )));
                }
                Ok((train, valid, test))
            }
        }
    }
}

/// Partition a corpus into disjoint train/valid/test subsets.
///
/// The assignment is a seeded shuffle of the index space; each subset keeps
/// the original relative line order. Counts from fractions cover the corpus
/// exactly; explicit counts may leave a remainder unassigned to train.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus)> {
    let (n_train, n_valid, n_test) = spec.resolve(corpus.len())?;
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    indices.shuffle(&mut seed::rng(spec.seed, seed::streams::SPLIT));
    let take = |n: usize, offset: usize| -> Corpus {
        let mut idx: Vec<usize> = indices[offset..offset + n].to_vec();
        idx.sort_unstable();
        corpus.subset(&idx)
    };
    let train = take(n_train, 0);
    let valid = take(n_valid, n_train);
    let test = take(n_test, n_train + n_valid);
    Ok((train, valid, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn tmp_file(content: &[u8]) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn plain_load_preserves_order_and_indices() {
        let f = tmp_file(b"one\ntwo\nthree\n");
        let c = load_plain(f.path()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.line(0), "one");
        assert_eq!(c.line(1), "two");
        assert_eq!(c.line(2), "three");
    }

    #[test]
    fn tsv_single_row() {
        let f = tmp_file(b"hello\thallo\n");
        let c = load_tsv_parallel(f.path()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.pair(0), ("hello", "hallo"));
    }

    #[test]
    fn empty_line_rejected_with_position() {
        let f = tmp_file(b"one\n\nthree\n");
        let err = load_plain(f.path()).unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn malformed_tsv_names_line() {
        let f = tmp_file(b"a\tb\nc\nd\te\n");
        let err = load_tsv_parallel(f.path()).unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn invalid_utf8_names_line() {
        let f = tmp_file(b"ok\n\xff\xfe\nalso ok\n");
        let err = load_plain(f.path()).unwrap_err();
        match err {
            Error::Ingest { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("UTF-8"));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn missing_file_is_missing_input() {
        let err = load_plain(Path::new("/nonexistent/corpus.txt")).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
    }

    #[test]
    fn load_is_idempotent() {
        let f = tmp_file(b"a b c\nd e f\n");
        let c1 = load_plain(f.path()).unwrap();
        let c2 = load_plain(f.path()).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn jsonl_mono_and_parallel() {
        let f = tmp_file(b"{\"src\":\"a\"}\n{\"src\":\"b\"}\n");
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl).unwrap(),
            LoadedCorpus::Mono(_)
        ));
        let f = tmp_file(b"{\"src\":\"a\",\"tgt\":\"x\"}\n");
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl).unwrap(),
            LoadedCorpus::Parallel(_)
        ));
        let f = tmp_file(b"{\"src\":\"a\",\"tgt\":\"x\"}\n{\"src\":\"b\"}\n");
        assert!(load_corpus(f.path(), CorpusFormat::Jsonl).is_err());
    }

    fn corpus_of(n: usize) -> Corpus {
        Corpus::from_lines((0..n).map(|i| format!("line {i}")).collect()).unwrap()
    }

    #[test]
    fn split_80_10_10_of_ten() {
        let c = corpus_of(10);
        let spec = SplitSpec {
            seed: 1,
            sizes: SplitSizes::Fractions {
                train: 0.8,
                valid: 0.1,
                test: 0.1,
            },
        };
        let (tr, va, te) = split(&c, &spec).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
    }

    #[test]
    fn split_is_a_partition() {
        let c = corpus_of(101);
        let spec = SplitSpec {
            seed: 9,
            sizes: SplitSizes::Fractions {
                train: 0.7,
                valid: 0.2,
                test: 0.1,
            },
        };
        let (tr, va, te) = split(&c, &spec).unwrap();
        assert_eq!(tr.len() + va.len() + te.len(), c.len());
        let mut all: Vec<&str> = tr.lines().chain(va.lines()).chain(te.lines()).collect();
        all.sort_unstable();
        let mut expected: Vec<&str> = c.lines().collect();
        expected.sort_unstable();
        assert_eq!(all, expected);
        let tr_set: BTreeSet<&str> = tr.lines().collect();
        let va_set: BTreeSet<&str> = va.lines().collect();
        assert!(tr_set.is_disjoint(&va_set));
    }

    #[test]
    fn split_deterministic_and_seed_sensitive() {
        let c = corpus_of(1000);
        let sizes = SplitSizes::Fractions {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        };
        let a = split(&c, &SplitSpec { seed: 1, sizes }).unwrap();
        let b = split(&c, &SplitSpec { seed: 1, sizes }).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
        // Different seeds must move membership, not just order.
        let c2 = split(&c, &SplitSpec { seed: 2, sizes }).unwrap();
        let set_a: BTreeSet<&str> = a.0.lines().collect();
        let set_c: BTreeSet<&str> = c2.0.lines().collect();
        assert_ne!(set_a, set_c);
    }

    #[test]
    fn split_counts_exceeding_size_error() {
        let c = corpus_of(5);
        let spec = SplitSpec {
            seed: 0,
            sizes: SplitSizes::Counts {
                train: 4,
                valid: 1,
                test: 1,
            },
        };
        assert!(split(&c, &spec).is_err());
    }

    #[test]
    fn bad_fractions_rejected() {
        let spec = SplitSpec {
            seed: 0,
            sizes: SplitSizes::Fractions {
                train: 0.8,
                valid: 0.1,
                test: 0.2,
            },
        };
        assert!(spec.resolve(10).is_err());
    }
}
