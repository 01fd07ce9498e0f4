//! Count-based n-gram language model with interpolated absolute discounting.
//!
//! For an observed context c:
//!
//! ```text
//! P(w|c) = max(count(c,w) - d, 0) / count(c) + lam(c) * P(w | shorten(c))
//! lam(c) = d * |{w : count(c,w) > 0}| / count(c)
//! ```
//!
//! where `shorten` drops the most distant context token. An unobserved
//! context backs off with its full mass. The unigram level interpolates with
//! the uniform distribution `1/V`, so every probability is strictly positive
//! and the distribution over the vocabulary sums to one at every level.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lm::SequenceModel;
use crate::tokenizer::{TokenId, TokenizedCorpus};

/// Context tokens are packed into 17-bit fields of a u128.
const MAX_ORDER: usize = 8;
const MAX_VOCAB: usize = (1 << 17) - 2;

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextStats {
    total: u64,
    counts: HashMap<TokenId, u64>,
}

/// Count n-gram LM of a fixed order over a fixed vocabulary size.
#[derive(Debug, Clone, PartialEq)]
pub struct CountNgramLm {
    order: usize,
    delta: f64,
    vocab_size: usize,
    contexts: HashMap<u128, ContextStats>,
    unigram: ContextStats,
}

fn pack(context: &[TokenId]) -> u128 {
    let mut acc: u128 = 0;
    for &id in context {
        acc = (acc << 17) | (id as u128 + 1);
    }
    acc
}

impl CountNgramLm {
    /// Count all n-grams up to `order` from an encoded corpus.
    pub fn train(
        corpus: &TokenizedCorpus,
        order: usize,
        delta: f64,
        vocab_size: usize,
    ) -> Result<CountNgramLm> {
        if corpus.is_empty() {
            return Err(Error::config("ngram training corpus is empty"));
        }
        let mut lm = CountNgramLm::uniform(order, delta, vocab_size)?;
        for sent in &corpus.sentences {
            for pos in 1..sent.len() {
                let target = sent[pos];
                lm.unigram.total += 1;
                *lm.unigram.counts.entry(target).or_default() += 1;
                for ctx_len in 1..order.min(pos + 1) {
                    let ctx = &sent[pos - ctx_len..pos];
                    let stats = lm.contexts.entry(pack(ctx)).or_default();
                    stats.total += 1;
                    *stats.counts.entry(target).or_default() += 1;
                }
            }
        }
        Ok(lm)
    }

    /// A model with no counts: exactly uniform `1/vocab_size` everywhere.
    pub fn uniform(order: usize, delta: f64, vocab_size: usize) -> Result<CountNgramLm> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(format!(
                "discount delta {delta} must be in (0, 1)"
            )));
        }
        if order < 1 || order > MAX_ORDER {
            return Err(Error::config(format!(
                "ngram order {order} must be in 1..={MAX_ORDER}"
            )));
        }
        if vocab_size == 0 || vocab_size > MAX_VOCAB {
            return Err(Error::config(format!(
                "ngram vocab size {vocab_size} must be in 1..={MAX_VOCAB}"
            )));
        }
        Ok(CountNgramLm {
            order,
            delta,
            vocab_size,
            contexts: HashMap::new(),
            unigram: ContextStats::default(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// P(token | context), interpolating down to the uniform floor.
    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let start = context.len().saturating_sub(self.order - 1);
        self.prob_backoff(&context[start..], token)
    }

    fn prob_backoff(&self, context: &[TokenId], token: TokenId) -> f64 {
        if context.is_empty() {
            return self.prob_unigram(token);
        }
        match self.contexts.get(&pack(context)) {
            None => self.prob_backoff(&context[1..], token),
            Some(stats) => {
                let total = stats.total as f64;
                let count = stats.counts.get(&token).copied().unwrap_or(0) as f64;
                let discounted = (count - self.delta).max(0.0) / total;
                let lambda = self.delta * stats.counts.len() as f64 / total;
                discounted + lambda * self.prob_backoff(&context[1..], token)
            }
        }
    }

    fn prob_unigram(&self, token: TokenId) -> f64 {
        let uniform = 1.0 / self.vocab_size as f64;
        if self.unigram.total == 0 {
            return uniform;
        }
        let total = self.unigram.total as f64;
        let count = self.unigram.counts.get(&token).copied().unwrap_or(0) as f64;
        let discounted = (count - self.delta).max(0.0) / total;
        let lambda = self.delta * self.unigram.counts.len() as f64 / total;
        discounted + lambda * uniform
    }

    /// Serialize as text: a header line, then sorted
    /// `context<TAB>token<TAB>count` rows (empty context = unigram row).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<String> = Vec::new();
        for (&token, &count) in &self.unigram.counts {
            rows.push(format!("\t{token}\t{count}"));
        }
        for (&packed, stats) in &self.contexts {
            let ctx = unpack(packed)
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            for (&token, &count) in &stats.counts {
                rows.push(format!("{ctx}\t{token}\t{count}"));
            }
        }
        rows.sort_unstable();
        let mut out = format!(
            "ngram v1 {} {} {}\n",
            self.order, self.delta, self.vocab_size
        );
        for row in rows {
            out.push_str(&row);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<CountNgramLm> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::artifact(path, msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("ngram") || fields.next() != Some("v1") {
            return Err(bad("expected `ngram v1` header"));
        }
        let order: usize = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad order"))?;
        let delta: f64 = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad delta"))?;
        let vocab_size: usize = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad vocab size"))?;
        let mut lm = CountNgramLm::uniform(order, delta, vocab_size)
            .map_err(|e| bad(&format!("invalid header: {e}")))?;
        for line in lines {
            let mut fields = line.split('\t');
            let (Some(ctx), Some(token), Some(count), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(bad("expected 3 tab-separated columns"));
            };
            let token: TokenId = token.parse().map_err(|_| bad("bad token id"))?;
            let count: u64 = count.parse().map_err(|_| bad("bad count"))?;
            let stats = if ctx.is_empty() {
                &mut lm.unigram
            } else {
                let ids: Vec<TokenId> = ctx
                    .split(' ')
                    .map(|t| t.parse().map_err(|_| bad("bad context id")))
                    .collect::<Result<_>>()?;
                lm.contexts.entry(pack(&ids)).or_default()
            };
            stats.total += count;
            stats.counts.insert(token, count);
        }
        Ok(lm)
    }

    #[cfg(test)]
    fn observed_contexts(&self) -> Vec<Vec<TokenId>> {
        self.contexts.keys().map(|&p| unpack(p)).collect()
    }
}

fn unpack(mut packed: u128) -> Vec<TokenId> {
    let mut rev = Vec::new();
    while packed != 0 {
        rev.push((packed & 0x1FFFF) as TokenId - 1);
        packed >>= 17;
    }
    rev.reverse();
    rev
}

impl SequenceModel for CountNgramLm {
    fn sequence_logprob(&self, tokens: &[TokenId]) -> (f64, usize) {
        let mut total = 0.0;
        for pos in 1..tokens.len() {
            let start = pos.saturating_sub(self.order - 1).max(0);
            total += self.prob(&tokens[start..pos], tokens[pos]).ln();
        }
        (total, tokens.len() - 1)
    }
}
