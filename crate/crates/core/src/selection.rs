//! Top-n extraction from score tables.
//!
//! The selection order is total: descending score, ties broken by ascending
//! line index. Any strictly monotone transform of the scores (the contrastive
//! constant, positive scaling) therefore leaves every selection unchanged,
//! and sweeps over nested sizes select nested subsets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{parse_descriptor_header, ScorerDescriptor, ScoreTable};

/// Requested selection size: an absolute count or a fraction of the pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionSize {
    Count(usize),
    Fraction(f64),
}

/// Selection request; the tie-break rule is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub size: SelectionSize,
}

impl SelectionSpec {
    pub fn count(n: usize) -> Self {
        SelectionSpec {
            size: SelectionSize::Count(n),
        }
    }

    pub fn fraction(f: f64) -> Self {
        SelectionSpec {
            size: SelectionSize::Fraction(f),
        }
    }

    /// Absolute number of lines to select from a pool of `len`. Fractions
    /// round to the nearest count and always select at least one line.
    pub fn resolve(&self, len: usize) -> Result<usize> {
        let n = match self.size {
            SelectionSize::Count(n) => n,
            SelectionSize::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::config(format!(
                        "selection fraction {f} must be in (0, 1]"
                    )));
                }
                ((f * len as f64).round() as usize).max(1)
            }
        };
        if n == 0 {
            return Err(Error::config("selection size must be positive"));
        }
        if n > len {
            return Err(Error::config(format!(
                "selection size {n} exceeds pool size {len}"
            )));
        }
        Ok(n)
    }
}

/// The selected subset: exactly n line indices in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub indices: Vec<usize>,
    /// Score of the last admitted example.
    pub threshold: f64,
    pub n: usize,
    pub source: ScorerDescriptor,
}

/// Comparator key of the fixed selection order.
#[inline]
fn better(a: (f64, usize), b: (f64, usize)) -> std::cmp::Ordering {
    // Higher score first, then lower index.
    b.0.partial_cmp(&a.0)
        .expect("scores are finite")
        .then(a.1.cmp(&b.1))
}

/// Select the n best-scoring lines in O(pool) expected time.
pub fn select_top_n(table: &ScoreTable, spec: &SelectionSpec) -> Result<SelectionResult> {
    let n = spec.resolve(table.len())?;
    let mut keyed: Vec<(f64, usize)> = table.scores.iter().copied().zip(0..).collect();
    if n < keyed.len() {
        keyed.select_nth_unstable_by(n - 1, |&a, &b| better(a, b));
    }
    let threshold = keyed[..n]
        .iter()
        .copied()
        .max_by(|&a, &b| better(a, b))
        .expect("n >= 1")
        .0;
    let mut indices: Vec<usize> = keyed[..n].iter().map(|&(_, i)| i).collect();
    indices.sort_unstable();
    Ok(SelectionResult {
        indices,
        threshold,
        n,
        source: table.descriptor.clone(),
    })
}

/// Selections at several sizes at once. Sizes must resolve to strictly
/// ascending counts; the results are nested and identical to independent
/// [`select_top_n`] calls.
pub fn sweep_sizes(table: &ScoreTable, sizes: &[SelectionSize]) -> Result<Vec<SelectionResult>> {
    if sizes.is_empty() {
        return Err(Error::config("sweep needs at least one size"));
    }
    let counts: Vec<usize> = sizes
        .iter()
        .map(|&size| SelectionSpec { size }.resolve(table.len()))
        .collect::<Result<_>>()?;
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(format!(
            "sweep sizes must be strictly ascending, got {counts:?}"
        )));
    }
    let max_n = *counts.last().unwrap();
    let mut keyed: Vec<(f64, usize)> = table.scores.iter().copied().zip(0..).collect();
    if max_n < keyed.len() {
        keyed.select_nth_unstable_by(max_n - 1, |&a, &b| better(a, b));
    }
    keyed.truncate(max_n);
    keyed.sort_unstable_by(|&a, &b| better(a, b));
    Ok(counts
        .into_iter()
        .map(|n| {
            let mut indices: Vec<usize> = keyed[..n].iter().map(|&(_, i)| i).collect();
            indices.sort_unstable();
            SelectionResult {
                indices,
                threshold: keyed[n - 1].0,
                n,
                source: table.descriptor.clone(),
            }
        })
        .collect())
}

impl SelectionResult {
    /// One ascending line index per line, preceded by a `#` header with n,
    /// the threshold score, and the source descriptor.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "# n={} threshold={} scorer={}:{} config={}\n",
            self.n,
            self.threshold,
            self.source.method,
            self.source.variant,
            self.source.config_hash
        );
        for i in &self.indices {
            out.push_str(&format!("{i}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<SelectionResult> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::artifact(path, msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let source = parse_descriptor_header(header).ok_or_else(|| bad("bad header"))?;
        let mut n = None;
        let mut threshold = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = field.strip_prefix("n=") {
                n = v.parse().ok();
            } else if let Some(v) = field.strip_prefix("threshold=") {
                threshold = v.parse().ok();
            }
        }
        let (Some(n), Some(threshold)) = (n, threshold) else {
            return Err(bad("header missing n= or threshold="));
        };
        let indices: Vec<usize> = lines
            .map(|l| l.parse().map_err(|_| bad("bad index line")))
            .collect::<Result<_>>()?;
        if indices.len() != n {
            return Err(bad("index count does not match header n"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("indices are not strictly ascending"));
        }
        Ok(SelectionResult {
            indices,
            threshold,
            n,
            source,
        })
    }
}
