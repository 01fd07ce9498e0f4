//! Synthetic two-domain corpus generator.
//!
//! Each domain is an order-1 Markov chain over integer tokens rendered as
//! ASCII words (`w17`). Both chains share a base transition structure drawn
//! from the transition seed; the divergence knob linearly pulls each chain's
//! rows toward a domain-specific distribution supported on that domain's half
//! of the vocabulary. Divergence 0 therefore yields identical generators and
//! divergence 1 yields disjoint supports.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::seed::{self, streams};

/// Parameters of one synthetic domain generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomainSpec {
    /// Number of distinct tokens.
    pub vocab_size: usize,
    /// Seed of the shared base transition structure.
    pub transition_seed: u64,
    /// Mean sentence length in tokens (geometric length distribution).
    pub mean_len: f64,
    /// How far the chain is pulled toward its own half of the vocabulary,
    /// in `[0, 1]`.
    pub divergence: f64,
}

impl SyntheticDomainSpec {
    fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::config("synthetic vocab_size must be >= 2"));
        }
        if !(self.mean_len >= 1.0) {
            return Err(Error::config("synthetic mean_len must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.divergence) {
            return Err(Error::config("synthetic divergence must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Which half of the vocabulary a domain concentrates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Half {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
struct MarkovChain {
    vocab: usize,
    continue_prob: f64,
    /// Cumulative initial distribution.
    init: Vec<f64>,
    /// Cumulative transition rows, `vocab` rows of `vocab` entries.
    rows: Vec<Vec<f64>>,
}

impl MarkovChain {
    fn build(spec: &SyntheticDomainSpec, half: Half) -> MarkovChain {
        let v = spec.vocab_size;
        let d = spec.divergence;
        let (lo, hi) = match half {
            Half::Lower => (0, v / 2),
            Half::Upper => (v / 2, v),
        };
        // The base stream is shared by both domains (same transition seed);
        // the specific stream also derives from it so the whole generator is
        // a pure function of the spec.
        let mut base_rng = seed::rng(spec.transition_seed, 0x42415345); // "BASE"
        let mut spec_rng = seed::rng(
            spec.transition_seed,
            0x53504543 + matches!(half, Half::Upper) as u64, // "SPEC" + half
        );
        let make_row = |base_rng: &mut ChaCha8Rng, spec_rng: &mut ChaCha8Rng| -> Vec<f64> {
            let base = random_simplex(base_rng, v, 0, v);
            let specific = random_simplex(spec_rng, v, lo, hi);
            let mixed: Vec<f64> = base
                .iter()
                .zip(&specific)
                .map(|(b, s)| (1.0 - d) * b + d * s)
                .collect();
            cumulative(&mixed)
        };
        let init = make_row(&mut base_rng, &mut spec_rng);
        let rows = (0..v)
            .map(|_| make_row(&mut base_rng, &mut spec_rng))
            .collect();
        MarkovChain {
            vocab: v,
            continue_prob: 1.0 - 1.0 / spec.mean_len,
            init,
            rows,
        }
    }

    fn sample_sentence(&self, rng: &mut ChaCha8Rng) -> String {
        let mut out = String::new();
        let mut token = sample_cumulative(&self.init, rng);
        loop {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push('w');
            out.push_str(itoa(token).as_str());
            if !rng.gen_bool(self.continue_prob) {
                break;
            }
            token = sample_cumulative(&self.rows[token], rng);
        }
        out
    }
}

fn itoa(v: usize) -> String {
    v.to_string()
}

/// Dirichlet(1) draw restricted to `[lo, hi)`, zero elsewhere.
fn random_simplex(rng: &mut ChaCha8Rng, v: usize, lo: usize, hi: usize) -> Vec<f64> {
    let mut weights = vec![0.0; v];
    let mut total = 0.0;
    for w in weights[lo..hi].iter_mut() {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        *w = -u.ln();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    weights
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(probs.len());
    for p in probs {
        acc += p;
        out.push(acc);
    }
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

fn sample_cumulative(cum: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// A pair of domain generators with fixed specs.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    in_chain: MarkovChain,
    out_chain: MarkovChain,
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticCorpora {
    /// In-domain set T.
    pub in_domain: Corpus,
    /// Out-of-domain pool D, with `contamination * len` lines drawn from the
    /// in-domain chain.
    pub out_domain: Corpus,
    /// Per-line truth for D: `true` where the line came from the in-domain
    /// chain. Evaluation only; never visible to training.
    pub oracle_labels: Vec<bool>,
}

impl SyntheticWorld {
    /// In-domain draws concentrate on the upper half of the vocabulary,
    /// out-of-domain on the lower half.
    pub fn new(spec_in: &SyntheticDomainSpec, spec_out: &SyntheticDomainSpec) -> Result<Self> {
        spec_in.validate()?;
        spec_out.validate()?;
        Ok(SyntheticWorld {
            in_chain: MarkovChain::build(spec_in, Half::Upper),
            out_chain: MarkovChain::build(spec_out, Half::Lower),
        })
    }

    /// Draw `n` fresh sentences from one domain; used for held-out labeled
    /// evaluation sets.
    pub fn sample(&self, in_domain: bool, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let chain = if in_domain {
            &self.in_chain
        } else {
            &self.out_chain
        };
        (0..n).map(|_| chain.sample_sentence(rng)).collect()
    }

    /// Generate the in-domain set T and the contaminated pool D.
    pub fn generate(
        &self,
        n_in: usize,
        n_out: usize,
        contamination: f64,
        master_seed: u64,
    ) -> Result<SyntheticCorpora> {
        if !(0.0..=1.0).contains(&contamination) {
            return Err(Error::config("contamination must be in [0, 1]"));
        }
        let mut rng_in = seed::rng(master_seed, streams::SYNTH_IN);
        let mut rng_out = seed::rng(master_seed, streams::SYNTH_OUT);
        let mut rng_mix = seed::rng(master_seed, streams::SYNTH_MIX);

        let t_lines = self.sample(true, n_in, &mut rng_in);

        let n_contaminated = (contamination * n_out as f64).round() as usize;
        let mut labels = vec![false; n_out];
        if n_contaminated > 0 {
            for pos in rand::seq::index::sample(&mut rng_mix, n_out, n_contaminated) {
                labels[pos] = true;
            }
        }
        let d_lines: Vec<String> = labels
            .iter()
            .map(|&contaminated| {
                if contaminated {
                    self.in_chain.sample_sentence(&mut rng_in)
                } else {
                    self.out_chain.sample_sentence(&mut rng_out)
                }
            })
            .collect();

        Ok(SyntheticCorpora {
            in_domain: Corpus::from_lines(t_lines)?,
            out_domain: Corpus::from_lines(d_lines)?,
            oracle_labels: labels,
        })
    }
}

/// One-shot convenience over [`SyntheticWorld`].
pub fn generate_synthetic(
    spec_in: &SyntheticDomainSpec,
    spec_out: &SyntheticDomainSpec,
    n_in: usize,
    n_out: usize,
    contamination: f64,
    master_seed: u64,
) -> Result<SyntheticCorpora> {
    SyntheticWorld::new(spec_in, spec_out)?.generate(n_in, n_out, contamination, master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashMap};

    fn spec(divergence: f64) -> SyntheticDomainSpec {
        SyntheticDomainSpec {
            vocab_size: 20,
            transition_seed: 11,
            mean_len: 8.0,
            divergence,
        }
    }

    #[test]
    fn zero_divergence_yields_identical_generators() {
        let w = SyntheticWorld::new(&spec(0.0), &spec(0.0)).unwrap();
        assert_eq!(w.in_chain, w.out_chain);
    }

    #[test]
    fn full_divergence_yields_disjoint_token_sets() {
        let out = generate_synthetic(&spec(1.0), &spec(1.0), 200, 200, 0.0, 3).unwrap();
        let tokens = |c: &Corpus| -> BTreeSet<String> {
            c.lines()
                .flat_map(|l| l.split_whitespace().map(str::to_string))
                .collect()
        };
        let t_tokens = tokens(&out.in_domain);
        let d_tokens = tokens(&out.out_domain);
        assert!(t_tokens.is_disjoint(&d_tokens));
        // Modal tokens land in the expected halves.
        let mode = |c: &Corpus| -> usize {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for l in c.lines() {
                for t in l.split_whitespace() {
                    *counts.entry(t).or_default() += 1;
                }
            }
            let (tok, _) = counts
                .into_iter()
                .max_by_key(|&(t, c)| (c, std::cmp::Reverse(t.to_string())))
                .unwrap();
            tok[1..].parse().unwrap()
        };
        assert!(mode(&out.in_domain) >= 10);
        assert!(mode(&out.out_domain) < 10);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&spec(0.7), &spec(0.7), 50, 100, 0.1, 9).unwrap();
        let b = generate_synthetic(&spec(0.7), &spec(0.7), 50, 100, 0.1, 9).unwrap();
        assert_eq!(a.in_domain, b.in_domain);
        assert_eq!(a.out_domain, b.out_domain);
        assert_eq!(a.oracle_labels, b.oracle_labels);
    }

    #[test]
    fn contamination_count_is_exact() {
        for (frac, n, expect) in [(0.05, 1000, 50), (0.033, 100, 3), (0.0, 50, 0)] {
            let out = generate_synthetic(&spec(0.9), &spec(0.9), 10, n, frac, 5).unwrap();
            let positives = out.oracle_labels.iter().filter(|&&l| l).count();
            assert_eq!(positives, expect);
            assert_eq!(out.out_domain.len(), n);
        }
    }

    #[test]
    fn mean_length_tracks_spec() {
        let out = generate_synthetic(&spec(0.5), &spec(0.5), 2000, 10, 0.0, 17).unwrap();
        let total: usize = out
            .in_domain
            .lines()
            .map(|l| l.split_whitespace().count())
            .sum();
        let mean = total as f64 / out.in_domain.len() as f64;
        assert!((mean - 8.0).abs() < 0.6, "mean length {mean}");
    }
}
