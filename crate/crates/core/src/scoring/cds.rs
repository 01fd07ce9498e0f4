//! Contrastive data selection: score an example by the gap between its log
//! likelihood under an in-domain model and an out-of-domain model, plus an
//! optional constant (a log prior ratio). The constant shifts every score
//! equally, so it never changes the induced ranking.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lm::{self, EvalSuite, NeuralNgramLm, Phase, SequenceModel, TrainConfig};
use crate::num::Scalar;
use crate::scoring::{Example, Scorer, ScorerDescriptor};
use crate::tokenizer::{BpeModel, TokenizedCorpus};

/// Contrastive scorer over two language models that share one tokenizer.
pub struct CdsScorer<M: SequenceModel> {
    pub in_domain: M,
    pub out_domain: M,
    /// Additive constant C.
    pub constant: f64,
    /// Divide the log-likelihood gap by the predicted-token count. On by
    /// default: raw sentence-level gaps are dominated by length, which
    /// corrupts top-n selection.
    pub length_normalize: bool,
    tokenizer: Arc<BpeModel>,
    descriptor: ScorerDescriptor,
}

impl<M: SequenceModel> CdsScorer<M> {
    pub fn new(
        in_domain: M,
        out_domain: M,
        tokenizer: Arc<BpeModel>,
        descriptor: ScorerDescriptor,
    ) -> Self {
        CdsScorer {
            in_domain,
            out_domain,
            constant: 0.0,
            length_normalize: true,
            tokenizer,
            descriptor,
        }
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    pub fn with_length_normalize(mut self, on: bool) -> Self {
        self.length_normalize = on;
        self
    }

    /// Score one sentence: `(log P(x|in) - log P(x|out)) / |x| + C`, the
    /// division applied only when length normalization is on.
    pub fn score_sentence(&self, sentence: &str) -> f64 {
        let tokens = self.tokenizer.encode(sentence);
        let (lp_in, n) = self.in_domain.sequence_logprob(&tokens);
        let (lp_out, _) = self.out_domain.sequence_logprob(&tokens);
        let gap = lp_in - lp_out;
        let gap = if self.length_normalize {
            gap / n as f64
        } else {
            gap
        };
        gap + self.constant
    }
}

impl<M: SequenceModel> Scorer for CdsScorer<M> {
    fn score(&self, example: &Example) -> Result<f64> {
        Ok(self.score_sentence(example.source()))
    }

    fn descriptor(&self) -> ScorerDescriptor {
        self.descriptor.clone()
    }
}

/// Build a neural contrastive scorer from a pretrained model: the in-domain
/// side is a copy fine-tuned on T (with early stopping when a validation set
/// is given), the out-of-domain side is the pretrained model unchanged.
pub fn build_neural_cds<F: Scalar>(
    pretrained: &NeuralNgramLm<F>,
    in_domain_train: &TokenizedCorpus,
    cfg: &TrainConfig,
    valid: Option<&TokenizedCorpus>,
    tokenizer: Arc<BpeModel>,
    config_hash: &str,
) -> Result<CdsScorer<NeuralNgramLm<F>>> {
    if in_domain_train.is_empty() {
        return Err(Error::config("cds fine-tuning set is empty"));
    }
    let pool = lm::ExamplePool::all(in_domain_train)?;
    let evals = EvalSuite {
        valid,
        ..Default::default()
    };
    let tuned = lm::train(pretrained.clone(), &pool, cfg, &evals, Phase::Finetune)?;
    Ok(CdsScorer::new(
        tuned.model,
        pretrained.clone(),
        tokenizer,
        ScorerDescriptor::new("cds", "neural", config_hash),
    ))
}
