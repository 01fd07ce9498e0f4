//! Measurement suite: scorer quality metrics, paired significance testing,
//! correlation, and training-acceleration curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{Example, Scorer};
use crate::seed::{self, streams};

/// Held-out examples with oracle domain labels, disjoint from anything any
/// model or scorer was trained on.
#[derive(Debug, Clone)]
pub struct LabeledEvalSet {
    examples: Vec<(String, bool)>,
}

impl LabeledEvalSet {
    pub fn new(examples: Vec<(String, bool)>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::config("labeled evaluation set is empty"));
        }
        Ok(LabeledEvalSet { examples })
    }

    /// Interleave in-domain (true) and out-of-domain (false) lines.
    pub fn from_samples(in_domain: Vec<String>, out_domain: Vec<String>) -> Result<Self> {
        let examples: Vec<(String, bool)> = in_domain
            .into_iter()
            .map(|l| (l, true))
            .chain(out_domain.into_iter().map(|l| (l, false)))
            .collect();
        LabeledEvalSet::new(examples)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> impl Iterator<Item = (&str, bool)> {
        self.examples.iter().map(|(l, y)| (l.as_str(), *y))
    }

    /// `label<TAB>text` per line.
    pub fn write_tsv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::new();
        for (line, label) in &self.examples {
            out.push_str(if *label { "1\t" } else { "0\t" });
            out.push_str(line);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &std::path::Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut examples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (label, text) = line
                .split_once('\t')
                .ok_or_else(|| Error::ingest(i, "expected label<TAB>text"))?;
            let label = match label {
                "0" => false,
                "1" => true,
                _ => return Err(Error::ingest(i, "label must be 0 or 1")),
            };
            examples.push((text.to_string(), label));
        }
        LabeledEvalSet::new(examples)
    }
}

/// Fraction of correct binary in-domain decisions at `score > threshold`.
pub fn classifier_accuracy(
    scorer: &dyn Scorer,
    eval: &LabeledEvalSet,
    threshold: f64,
) -> Result<f64> {
    let mut correct = 0usize;
    for (line, label) in eval.examples() {
        let score = scorer.score(&Example::Mono(line))?;
        if (score > threshold) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / eval.len() as f64)
}

/// Accuracy over precomputed scores aligned with labels.
pub fn accuracy_from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::config(format!(
            "scores ({}) and labels ({}) differ in length",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::config("empty evaluation set"));
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|&(s, &y)| (*s > threshold) == y)
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

/// Mean bin index at which held-out in-domain scores land when the pool
/// scores are sorted descending and cut into 100 equal bins (bin 0 best,
/// remainder lines assigned to the earlier bins). An in-domain score tied
/// with pool scores ranks ahead of them. Lower is better; the output is in
/// `[0, 99]` and invariant under any strictly monotone transform applied to
/// all scores jointly.
pub fn average_quantile(pool_scores: &[f64], in_domain_scores: &[f64]) -> Result<f64> {
    const BINS: usize = 100;
    if pool_scores.len() < BINS {
        return Err(Error::config(format!(
            "average quantile needs at least {BINS} pool scores, got {}",
            pool_scores.len()
        )));
    }
    if in_domain_scores.is_empty() {
        return Err(Error::config("no in-domain scores given"));
    }
    let mut sorted = pool_scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).expect("scores are finite"));

    // bin_start[b] = first pool rank inside bin b; first `rem` bins get an
    // extra line.
    let base = sorted.len() / BINS;
    let rem = sorted.len() % BINS;
    let mut bin_start = Vec::with_capacity(BINS + 1);
    let mut acc = 0usize;
    for b in 0..BINS {
        bin_start.push(acc);
        acc += base + usize::from(b < rem);
    }
    bin_start.push(acc);

    let mut total = 0.0;
    for &s in in_domain_scores {
        // Insertion rank among descending pool scores, ties placed first.
        let rank = sorted.partition_point(|&d| d > s);
        let bin = match bin_start.binary_search(&rank) {
            Ok(b) => b,
            Err(b) => b - 1,
        };
        total += bin.min(BINS - 1) as f64;
    }
    Ok(total / in_domain_scores.len() as f64)
}

/// Paired bootstrap: the fraction of resamples (drawn with replacement, the
/// same indices for both systems) on which the baseline's mean loss is
/// strictly worse than the candidate's.
pub fn paired_bootstrap(
    losses_base: &[f64],
    losses_candidate: &[f64],
    n_resamples: usize,
    sample_size: usize,
    master_seed: u64,
) -> Result<f64> {
    if losses_base.len() != losses_candidate.len() {
        return Err(Error::config(format!(
            "loss vectors differ in length: {} vs {}",
            losses_base.len(),
            losses_candidate.len()
        )));
    }
    if losses_base.is_empty() {
        return Err(Error::config("empty loss vectors"));
    }
    if n_resamples == 0 || sample_size == 0 {
        return Err(Error::config("resamples and sample size must be positive"));
    }
    let n = losses_base.len();
    // One counter-derived stream per resample: deterministic under any
    // parallel schedule.
    let wins: usize = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(master_seed, streams::BOOTSTRAP.wrapping_add(r as u64));
            let mut base = 0.0;
            let mut cand = 0.0;
            for _ in 0..sample_size {
                let i = rand::Rng::gen_range(&mut rng, 0..n);
                base += losses_base[i];
                cand += losses_candidate[i];
            }
            usize::from(base > cand)
        })
        .sum();
    Ok(wins as f64 / n_resamples as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::config("pearson inputs differ in length"));
    }
    if xs.len() < 2 {
        return Err(Error::config("pearson needs at least 2 points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::config("pearson input has zero variance"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Running minimum of a loss curve over steps.
pub fn best_so_far(curve: &[(u64, f64)]) -> Vec<(u64, f64)> {
    let mut best = f64::INFINITY;
    curve
        .iter()
        .map(|&(step, loss)| {
            best = best.min(loss);
            (step, best)
        })
        .collect()
}

/// Speedup of one candidate checkpoint relative to a reference curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Speedup {
    /// reference steps / candidate steps needed to reach the same loss.
    Factor(f64),
    /// The reference never reaches this loss.
    Unreachable,
}

/// For each candidate checkpoint `(s, L)`, the smallest reference step
/// reaching loss `<= L` (linear interpolation between reference points),
/// divided by `s`.
///
/// Both curves are first reduced to their best-so-far first-reach points, so
/// a curve measured against itself yields factor 1 at every checkpoint.
pub fn speedup_curve(
    reference: &[(u64, f64)],
    candidate: &[(u64, f64)],
) -> Result<Vec<(u64, Speedup)>> {
    if reference.is_empty() || candidate.is_empty() {
        return Err(Error::config("speedup needs non-empty curves"));
    }
    let reference = first_reach(reference);
    let candidate = first_reach(candidate);
    let ref_min = reference.last().unwrap().1;
    Ok(candidate
        .iter()
        .map(|&(s, loss)| {
            if loss < ref_min {
                return (s, Speedup::Unreachable);
            }
            let steps_needed = reference_steps_to_reach(&reference, loss);
            (s, Speedup::Factor(steps_needed / s as f64))
        })
        .collect())
}

/// Strictly decreasing reduction of a curve: the earliest step of each
/// best-so-far loss level.
fn first_reach(curve: &[(u64, f64)]) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64)> = Vec::new();
    for &(step, loss) in curve {
        match out.last() {
            Some(&(_, best)) if loss >= best => {}
            _ => out.push((step, loss)),
        }
    }
    out
}

fn reference_steps_to_reach(reference: &[(u64, f64)], loss: f64) -> f64 {
    let first = reference[0];
    if first.1 <= loss {
        return first.0 as f64;
    }
    for w in reference.windows(2) {
        let (s0, l0) = w[0];
        let (s1, l1) = w[1];
        if l1 <= loss {
            // l0 > loss >= l1 on a strictly decreasing segment.
            let t = (l0 - loss) / (l0 - l1);
            return s0 as f64 + t * (s1 - s0) as f64;
        }
    }
    unreachable!("caller checked loss >= min reference loss")
}
