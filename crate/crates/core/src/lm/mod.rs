//! Language models: the adaptable base models of the selection pipeline.
//!
//! Two families share the [`SequenceModel`] scoring surface: a count-based
//! n-gram model with interpolated absolute discounting ([`ngram`]) and a
//! feedforward neural n-gram model trained by SGD with hand-derived gradients
//! ([`neural`]). All log quantities are natural log.

pub mod neural;
pub mod ngram;

pub use neural::{
    grad_check, grad_check_against, train, Checkpoint, CurvePoint, EvalSuite, ExamplePool,
    ModelDims, NeuralNgramLm, Phase, TrainConfig, TrainOutcome,
};
pub use ngram::CountNgramLm;

use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenizedCorpus};

/// Assigns log probabilities to encoded sentences.
///
/// Sentences are `[BOS, tokens.., EOS]`; every position after BOS is
/// predicted (EOS included, BOS not).
pub trait SequenceModel: Send + Sync {
    /// Total natural-log probability and the number of predicted positions.
    fn sequence_logprob(&self, tokens: &[TokenId]) -> (f64, usize);
}

/// Mean per-token negative log-likelihood over a corpus, in nats.
pub fn logppl<M: SequenceModel + ?Sized>(model: &M, corpus: &TokenizedCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::config("logppl of an empty corpus"));
    }
    let mut total = 0.0;
    let mut tokens = 0usize;
    for sent in &corpus.sentences {
        let (lp, n) = model.sequence_logprob(sent);
        total += lp;
        tokens += n;
    }
    Ok(-total / tokens as f64)
}

/// Per-sentence mean negative log-likelihood, aligned with corpus indices.
pub fn sentence_losses<M: SequenceModel + ?Sized>(
    model: &M,
    corpus: &TokenizedCorpus,
) -> Vec<f64> {
    corpus
        .sentences
        .iter()
        .map(|sent| {
            let (lp, n) = model.sequence_logprob(sent);
            -lp / n as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{BOS_ID, EOS_ID};

    #[test]
    fn uniform_model_logppl_is_ln_vocab() {
        let model = CountNgramLm::uniform(4, 0.75, 50).unwrap();
        let corpus = TokenizedCorpus {
            sentences: vec![vec![BOS_ID, 5, 9, EOS_ID], vec![BOS_ID, 7, EOS_ID]],
        };
        let got = logppl(&model, &corpus).unwrap();
        assert!((got - (50f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn logppl_empty_corpus_errors() {
        let model = CountNgramLm::uniform(2, 0.5, 10).unwrap();
        let corpus = TokenizedCorpus { sentences: vec![] };
        assert!(logppl(&model, &corpus).is_err());
    }

    #[test]
    fn logppl_matches_per_sentence_oracle() {
        // Independent oracle: re-sum per-sentence logprobs and token counts.
        let train = TokenizedCorpus {
            sentences: (0..10)
                .map(|i| vec![BOS_ID, 4 + (i % 3), 5, 4, EOS_ID])
                .collect(),
        };
        let model = CountNgramLm::train(&train, 3, 0.75, 8).unwrap();
        let eval = TokenizedCorpus {
            sentences: (0..20)
                .map(|i| vec![BOS_ID, 4 + (i % 4), 6, EOS_ID])
                .collect(),
        };
        let got = logppl(&model, &eval).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for sent in &eval.sentences {
            let (lp, n) = model.sequence_logprob(sent);
            total -= lp;
            count += n;
        }
        let oracle = total / count as f64;
        assert!((got - oracle).abs() < 1e-12);
        assert!(got >= 0.0);
    }
}
