//! Feedforward neural n-gram language model with hand-derived gradients.
//!
//! Architecture: token embeddings for a fixed context window, concatenated
//! into a tanh hidden layer, then a softmax over the vocabulary. Training is
//! plain SGD on cross-entropy with examples drawn uniformly with replacement
//! from the example pool. Everything is deterministic under the config seed.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::SequenceModel;
use crate::num::Scalar;
use crate::tokenizer::{TokenId, TokenizedCorpus, BOS_ID};

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    /// Context window length k: the model predicts from the previous k tokens.
    pub context: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl ModelDims {
    fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.context == 0 || self.embed_dim == 0 || self.hidden_dim == 0
        {
            return Err(Error::config("model dimensions must all be positive"));
        }
        Ok(())
    }

    fn param_count(&self) -> usize {
        let kd = self.context * self.embed_dim;
        self.vocab_size * self.embed_dim
            + kd * self.hidden_dim
            + self.hidden_dim
            + self.hidden_dim * self.vocab_size
            + self.vocab_size
    }
}

/// The model. Parameter layout (for the flat view used by checkpoints and
/// gradient checking): embeddings, W1, b1, W2, b2.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNgramLm<F: Scalar> {
    dims: ModelDims,
    embed: Vec<F>,
    w1: Vec<F>,
    b1: Vec<F>,
    w2: Vec<F>,
    b2: Vec<F>,
    step: u64,
}

/// Phase tag for checkpoints and curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Pretrain,
    Selection,
    Finetune,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Selection => "selection",
            Phase::Finetune => "finetune",
        })
    }
}

/// SGD schedule for one training phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Steps to run; 0 evaluates the starting point and trains nothing.
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Evaluate and snapshot every this many steps (and at the final step).
    pub checkpoint_interval: u64,
    /// Seed of this phase's batch-sampling stream.
    pub seed: u64,
    /// Early stopping: stop after this many evaluations without improvement
    /// of the validation loss, and return the best checkpoint.
    pub patience: Option<u32>,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::config("checkpoint_interval must be positive"));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::config("learning rate must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Uniform-with-replacement sampler over the (context, target) examples of a
/// corpus or of an index subset of it.
pub struct ExamplePool<'a> {
    corpus: &'a TokenizedCorpus,
    sentences: Vec<usize>,
    /// Cumulative example counts per selected sentence.
    cum: Vec<u64>,
}

impl<'a> ExamplePool<'a> {
    pub fn all(corpus: &'a TokenizedCorpus) -> Result<Self> {
        Self::subset(corpus, (0..corpus.len()).collect())
    }

    pub fn subset(corpus: &'a TokenizedCorpus, sentences: Vec<usize>) -> Result<Self> {
        let mut cum = Vec::with_capacity(sentences.len());
        let mut acc = 0u64;
        for &s in &sentences {
            acc += (corpus.sentences[s].len() - 1) as u64;
            cum.push(acc);
        }
        if acc == 0 {
            return Err(Error::config("example pool is empty"));
        }
        Ok(ExamplePool {
            corpus,
            sentences,
            cum,
        })
    }

    pub fn total_examples(&self) -> u64 {
        *self.cum.last().unwrap()
    }

    /// Fill `ctx` (length k, BOS-padded on the left) and return the target.
    fn example(&self, flat: u64, ctx: &mut [TokenId]) -> TokenId {
        let si = self.cum.partition_point(|&c| c <= flat);
        let before = if si == 0 { 0 } else { self.cum[si - 1] };
        let sent = &self.corpus.sentences[self.sentences[si]];
        let pos = (flat - before) as usize + 1;
        fill_context(sent, pos, ctx);
        sent[pos]
    }
}

fn fill_context(sent: &[TokenId], pos: usize, ctx: &mut [TokenId]) {
    let k = ctx.len();
    for (j, slot) in ctx.iter_mut().enumerate() {
        let idx = pos as i64 - k as i64 + j as i64;
        *slot = if idx < 0 { BOS_ID } else { sent[idx as usize] };
    }
}

/// One point of a loss curve. Losses are mean per-token NLL on the
/// corresponding evaluation set; absent sets leave the field empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub train_loss: Option<f64>,
    pub in_train_loss: Option<f64>,
    pub valid_loss: Option<f64>,
}

/// Evaluation sets probed at every checkpoint.
#[derive(Default, Clone, Copy)]
pub struct EvalSuite<'a> {
    /// Sample of the data actually being trained on.
    pub train_probe: Option<&'a TokenizedCorpus>,
    /// In-domain training set (logged even in phases that never train on it).
    pub in_domain_train: Option<&'a TokenizedCorpus>,
    /// In-domain validation set; drives checkpoint selection and early
    /// stopping.
    pub valid: Option<&'a TokenizedCorpus>,
}

/// Model snapshot taken on the checkpoint schedule.
#[derive(Debug, Clone)]
pub struct Checkpoint<F: Scalar> {
    pub model: NeuralNgramLm<F>,
    pub step: u64,
    pub phase: Phase,
    pub valid_loss: Option<f64>,
}

/// Result of one training phase.
#[derive(Debug, Clone)]
pub struct TrainOutcome<F: Scalar> {
    /// Final model, or the best-validation checkpoint's model when early
    /// stopping is configured.
    pub model: NeuralNgramLm<F>,
    pub checkpoints: Vec<Checkpoint<F>>,
    pub curve: Vec<CurvePoint>,
    pub steps_run: u64,
}

impl<F: Scalar> TrainOutcome<F> {
    /// Checkpoint with the minimum recorded validation loss (earliest wins
    /// ties); falls back to the last checkpoint when no validation was run.
    pub fn best_checkpoint(&self) -> &Checkpoint<F> {
        let mut best: Option<&Checkpoint<F>> = None;
        for ck in &self.checkpoints {
            if let Some(loss) = ck.valid_loss {
                match best.and_then(|b| b.valid_loss) {
                    Some(best_loss) if best_loss <= loss => {}
                    _ => best = Some(ck),
                }
            }
        }
        best.unwrap_or_else(|| self.checkpoints.last().expect("at least one checkpoint"))
    }
}

impl<F: Scalar> NeuralNgramLm<F> {
    /// Random initialization: uniform embeddings, Xavier-style layer ranges,
    /// zero biases. The draw order is fixed, so equal seeds give equal
    /// parameters for f32 and f64 alike.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kd = dims.context * dims.embed_dim;
        let draw = |n: usize, scale: f64, rng: &mut ChaCha8Rng| -> Vec<F> {
            (0..n)
                .map(|_| F::from_f64(rng.gen_range(-scale..scale)))
                .collect()
        };
        let embed = draw(dims.vocab_size * dims.embed_dim, 0.1, &mut rng);
        let w1_scale = (6.0 / (kd + dims.hidden_dim) as f64).sqrt();
        let w1 = draw(kd * dims.hidden_dim, w1_scale, &mut rng);
        let w2_scale = (6.0 / (dims.hidden_dim + dims.vocab_size) as f64).sqrt();
        let w2 = draw(dims.hidden_dim * dims.vocab_size, w2_scale, &mut rng);
        Ok(NeuralNgramLm {
            dims,
            embed,
            w1,
            b1: vec![F::zero(); dims.hidden_dim],
            w2,
            b2: vec![F::zero(); dims.vocab_size],
            step: 0,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn param_count(&self) -> usize {
        self.dims.param_count()
    }

    fn param_slices(&self) -> [&[F]; 5] {
        [&self.embed, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn param_slices_mut(&mut self) -> [&mut [F]; 5] {
        [
            &mut self.embed,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn param(&self, flat: usize) -> F {
        let mut offset = flat;
        for slice in self.param_slices() {
            if offset < slice.len() {
                return slice[offset];
            }
            offset -= slice.len();
        }
        panic!("parameter index {flat} out of range");
    }

    pub fn set_param(&mut self, flat: usize, value: F) {
        let mut offset = flat;
        for slice in self.param_slices_mut() {
            if offset < slice.len() {
                slice[offset] = value;
                return;
            }
            offset -= slice.len();
        }
        panic!("parameter index {flat} out of range");
    }

    fn params_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn scratch(&self) -> Scratch<F> {
        Scratch {
            x: vec![F::zero(); self.dims.context * self.dims.embed_dim],
            hidden: vec![F::zero(); self.dims.hidden_dim],
            probs: vec![F::zero(); self.dims.vocab_size],
            d_hidden: vec![F::zero(); self.dims.hidden_dim],
            d_x: vec![F::zero(); self.dims.context * self.dims.embed_dim],
        }
    }

    /// Forward pass; leaves the softmax distribution in `scratch.probs`.
    fn forward(&self, ctx: &[TokenId], scratch: &mut Scratch<F>) {
        let d = self.dims.embed_dim;
        let h = self.dims.hidden_dim;
        let v = self.dims.vocab_size;
        debug_assert_eq!(ctx.len(), self.dims.context);

        for (t, &id) in ctx.iter().enumerate() {
            let row = &self.embed[id as usize * d..(id as usize + 1) * d];
            scratch.x[t * d..(t + 1) * d].copy_from_slice(row);
        }
        scratch.hidden.copy_from_slice(&self.b1);
        for (i, &xi) in scratch.x.iter().enumerate() {
            let row = &self.w1[i * h..(i + 1) * h];
            for (acc, &w) in scratch.hidden.iter_mut().zip(row) {
                *acc += xi * w;
            }
        }
        for a in scratch.hidden.iter_mut() {
            *a = a.tanh();
        }
        scratch.probs.copy_from_slice(&self.b2);
        for (j, &hj) in scratch.hidden.iter().enumerate() {
            let row = &self.w2[j * v..(j + 1) * v];
            for (acc, &w) in scratch.probs.iter_mut().zip(row) {
                *acc += hj * w;
            }
        }
        softmax(&mut scratch.probs);
    }

    /// Cross-entropy of one example.
    pub fn example_loss(&self, ctx: &[TokenId], target: TokenId) -> f64 {
        let mut scratch = self.scratch();
        self.forward(ctx, &mut scratch);
        -scratch.probs[target as usize].as_f64().ln()
    }

    /// Accumulate the gradient of one example's cross-entropy into `grad`
    /// (flat layout) and return the example loss.
    fn backward(&self, ctx: &[TokenId], target: TokenId, scratch: &mut Scratch<F>, grad: &mut [F]) -> F {
        let d = self.dims.embed_dim;
        let h = self.dims.hidden_dim;
        let v = self.dims.vocab_size;
        let kd = self.dims.context * d;
        let (g_embed, rest) = grad.split_at_mut(self.dims.vocab_size * d);
        let (g_w1, rest) = rest.split_at_mut(kd * h);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(h * v);

        self.forward(ctx, scratch);
        let loss = -scratch.probs[target as usize].ln();

        // d_logits = p - onehot(target), computed in place in probs.
        scratch.probs[target as usize] -= F::one();
        let d_logits = &scratch.probs;

        for (g, &dl) in g_b2.iter_mut().zip(d_logits.iter()) {
            *g += dl;
        }
        for (j, &hj) in scratch.hidden.iter().enumerate() {
            let g_row = &mut g_w2[j * v..(j + 1) * v];
            let w_row = &self.w2[j * v..(j + 1) * v];
            let mut acc = F::zero();
            for ((g, &dl), &w) in g_row.iter_mut().zip(d_logits.iter()).zip(w_row) {
                *g += hj * dl;
                acc += w * dl;
            }
            // d_pre = d_hidden * (1 - hidden^2)
            scratch.d_hidden[j] = acc * (F::one() - hj * hj);
        }
        for (g, &dp) in g_b1.iter_mut().zip(scratch.d_hidden.iter()) {
            *g += dp;
        }
        for (i, &xi) in scratch.x.iter().enumerate() {
            let g_row = &mut g_w1[i * h..(i + 1) * h];
            let w_row = &self.w1[i * h..(i + 1) * h];
            let mut acc = F::zero();
            for ((g, &dp), &w) in g_row.iter_mut().zip(scratch.d_hidden.iter()).zip(w_row) {
                *g += xi * dp;
                acc += w * dp;
            }
            scratch.d_x[i] = acc;
        }
        for (t, &id) in ctx.iter().enumerate() {
            let g_row = &mut g_embed[id as usize * d..(id as usize + 1) * d];
            for (g, &dx) in g_row.iter_mut().zip(&scratch.d_x[t * d..(t + 1) * d]) {
                *g += dx;
            }
        }
        loss
    }

    /// Full analytic gradient of one example, in the flat parameter layout.
    pub fn example_grad(&self, ctx: &[TokenId], target: TokenId) -> Vec<F> {
        let mut grad = vec![F::zero(); self.param_count()];
        let mut scratch = self.scratch();
        self.backward(ctx, target, &mut scratch, &mut grad);
        grad
    }

    /// Binary checkpoint: `nnlm v1` magic, dims and step as little-endian
    /// u64, then the parameter block as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(8 + 40 + self.param_count() * 8);
        out.extend_from_slice(b"nnlm v1\n");
        for dim in [
            self.dims.vocab_size as u64,
            self.dims.context as u64,
            self.dims.embed_dim as u64,
            self.dims.hidden_dim as u64,
            self.step,
        ] {
            out.extend_from_slice(&dim.to_le_bytes());
        }
        for slice in self.param_slices() {
            for v in slice {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let bad = |msg: &str| Error::artifact(path, msg);
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 48 || &bytes[..8] != b"nnlm v1\n" {
            return Err(bad("expected `nnlm v1` header"));
        }
        let mut u64s = bytes[8..48]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()));
        let dims = ModelDims {
            vocab_size: u64s.next().unwrap() as usize,
            context: u64s.next().unwrap() as usize,
            embed_dim: u64s.next().unwrap() as usize,
            hidden_dim: u64s.next().unwrap() as usize,
        };
        let step = u64s.next().unwrap();
        dims.validate().map_err(|e| bad(&format!("{e}")))?;
        let expected = 48 + dims.param_count() * 8;
        if bytes.len() != expected {
            return Err(bad(&format!(
                "parameter block has {} bytes, expected {}",
                bytes.len() - 48,
                expected - 48
            )));
        }
        let mut values = bytes[48..]
            .chunks_exact(8)
            .map(|c| F::from_f64(f64::from_le_bytes(c.try_into().unwrap())));
        let mut take = |n: usize| -> Vec<F> { values.by_ref().take(n).collect() };
        let kd = dims.context * dims.embed_dim;
        Ok(NeuralNgramLm {
            dims,
            embed: take(dims.vocab_size * dims.embed_dim),
            w1: take(kd * dims.hidden_dim),
            b1: take(dims.hidden_dim),
            w2: take(dims.hidden_dim * dims.vocab_size),
            b2: take(dims.vocab_size),
            step,
        })
    }
}

struct Scratch<F> {
    x: Vec<F>,
    hidden: Vec<F>,
    probs: Vec<F>,
    d_hidden: Vec<F>,
    d_x: Vec<F>,
}

fn softmax<F: Scalar>(logits: &mut [F]) {
    let mut max = F::neg_infinity();
    for &l in logits.iter() {
        if l > max {
            max = l;
        }
    }
    let mut sum = F::zero();
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

impl<F: Scalar> SequenceModel for NeuralNgramLm<F> {
    fn sequence_logprob(&self, tokens: &[TokenId]) -> (f64, usize) {
        let mut scratch = self.scratch();
        let mut ctx = vec![BOS_ID; self.dims.context];
        let mut total = 0.0;
        for pos in 1..tokens.len() {
            fill_context(tokens, pos, &mut ctx);
            self.forward(&ctx, &mut scratch);
            total += scratch.probs[tokens[pos] as usize].as_f64().ln();
        }
        (total, tokens.len() - 1)
    }
}

/// SGD training of one phase. Evaluates and snapshots on the checkpoint
/// schedule; with `patience` set, stops early on stagnating validation loss
/// and returns the best checkpoint as the outcome model.
pub fn train<F: Scalar>(
    model: NeuralNgramLm<F>,
    pool: &ExamplePool,
    cfg: &TrainConfig,
    evals: &EvalSuite,
    phase: Phase,
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scratch = model.scratch();
    let mut grad = vec![F::zero(); model.param_count()];
    let mut ctx = vec![BOS_ID; model.dims.context];
    let total_examples = pool.total_examples();

    let mut curve = Vec::new();
    let mut checkpoints = Vec::new();
    let mut best_valid = f64::INFINITY;
    let mut evals_since_improve = 0u32;

    let evaluate = |model: &NeuralNgramLm<F>,
                        curve: &mut Vec<CurvePoint>,
                        checkpoints: &mut Vec<Checkpoint<F>>|
     -> Option<f64> {
        let probe = |c: Option<&TokenizedCorpus>| c.map(|c| crate::lm::logppl(model, c).unwrap());
        let point = CurvePoint {
            step: model.step,
            train_loss: probe(evals.train_probe),
            in_train_loss: probe(evals.in_domain_train),
            valid_loss: probe(evals.valid),
        };
        curve.push(point);
        checkpoints.push(Checkpoint {
            model: model.clone(),
            step: model.step,
            phase,
            valid_loss: point.valid_loss,
        });
        point.valid_loss
    };

    if let Some(v) = evaluate(&model, &mut curve, &mut checkpoints) {
        best_valid = v;
    }

    let mut steps_run = 0u64;
    for step_i in 1..=cfg.steps {
        grad.iter_mut().for_each(|g| *g = F::zero());
        let mut batch_loss = F::zero();
        for _ in 0..cfg.batch_size {
            let flat = rng.gen_range(0..total_examples);
            let target = pool.example(flat, &mut ctx);
            batch_loss += model.backward(&ctx, target, &mut scratch, &mut grad);
        }
        let batch_loss = batch_loss.as_f64() / cfg.batch_size as f64;
        if !batch_loss.is_finite() {
            return Err(Error::numerics(
                phase.to_string(),
                format!(
                    "loss became non-finite at step {} (learning rate too high?)",
                    model.step + 1
                ),
            ));
        }
        let scale = F::from_f64(cfg.lr / cfg.batch_size as f64);
        let mut offset = 0;
        for slice in model.param_slices_mut() {
            let len = slice.len();
            for (p, &g) in slice.iter_mut().zip(&grad[offset..offset + len]) {
                *p = *p - scale * g;
            }
            offset += len;
        }
        model.step += 1;
        steps_run = step_i;
        if !model.params_finite() {
            return Err(Error::numerics(
                phase.to_string(),
                format!(
                    "parameters became non-finite at step {} (learning rate too high?)",
                    model.step
                ),
            ));
        }

        if step_i % cfg.checkpoint_interval == 0 || step_i == cfg.steps {
            let valid = evaluate(&model, &mut curve, &mut checkpoints);
            if let (Some(patience), Some(v)) = (cfg.patience, valid) {
                if v < best_valid {
                    best_valid = v;
                    evals_since_improve = 0;
                } else {
                    evals_since_improve += 1;
                    if evals_since_improve >= patience {
                        break;
                    }
                }
            }
        }
    }

    let mut outcome = TrainOutcome {
        model,
        checkpoints,
        curve,
        steps_run,
    };
    if cfg.patience.is_some() && evals.valid.is_some() {
        outcome.model = outcome.best_checkpoint().model.clone();
    }
    Ok(outcome)
}

/// Compare the analytic gradient of one example against central finite
/// differences on a seeded subset of at least `sample_size` parameters.
/// Returns the maximum relative error.
pub fn grad_check<F: Scalar>(
    model: &NeuralNgramLm<F>,
    ctx: &[TokenId],
    target: TokenId,
    h: f64,
    sample_size: usize,
    seed: u64,
) -> f64 {
    let analytic = model.example_grad(ctx, target);
    let n = model.param_count();
    let indices: Vec<usize> = if sample_size >= n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), n, sample_size).into_vec()
    };
    grad_check_against(model, ctx, target, h, &analytic, &indices)
}

/// Gradient-check core: max relative error of `analytic` against central
/// differences at the given parameter indices.
pub fn grad_check_against<F: Scalar>(
    model: &NeuralNgramLm<F>,
    ctx: &[TokenId],
    target: TokenId,
    h: f64,
    analytic: &[F],
    indices: &[usize],
) -> f64 {
    let mut probe = model.clone();
    let mut max_rel = 0.0f64;
    for &i in indices {
        let original = model.param(i);
        probe.set_param(i, original + F::from_f64(h));
        let loss_plus = probe.example_loss(ctx, target);
        probe.set_param(i, original - F::from_f64(h));
        let loss_minus = probe.example_loss(ctx, target);
        probe.set_param(i, original);
        let numeric = (loss_plus - loss_minus) / (2.0 * h);
        let a = analytic[i].as_f64();
        let rel = (numeric - a).abs() / (numeric.abs() + a.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::EOS_ID;

    fn dims(v: usize) -> ModelDims {
        ModelDims {
            vocab_size: v,
            context: 3,
            embed_dim: 6,
            hidden_dim: 8,
        }
    }

    fn tiny_corpus() -> TokenizedCorpus {
        TokenizedCorpus {
            sentences: vec![
                vec![BOS_ID, 4, 5, 6, EOS_ID],
                vec![BOS_ID, 5, 6, 4, EOS_ID],
                vec![BOS_ID, 6, 4, EOS_ID],
            ],
        }
    }

    fn cfg(steps: u64, lr: f64) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 4,
            lr,
            checkpoint_interval: 50,
            seed: 13,
            patience: None,
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let model = NeuralNgramLm::<f64>::init(dims(20), 3).unwrap();
        let mut scratch = model.scratch();
        model.forward(&[4, 5, 6], &mut scratch);
        let sum: f64 = scratch.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(scratch.probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn zero_lr_leaves_parameters_bit_identical() {
        let corpus = tiny_corpus();
        let pool = ExamplePool::all(&corpus).unwrap();
        let model = NeuralNgramLm::<f64>::init(dims(8), 1).unwrap();
        let before = model.clone();
        let out = train(model, &pool, &cfg(25, 0.0), &EvalSuite::default(), Phase::Pretrain)
            .unwrap();
        assert_eq!(out.model.embed, before.embed);
        assert_eq!(out.model.w1, before.w1);
        assert_eq!(out.model.w2, before.w2);
        assert_eq!(out.model.step, 25);
    }

    #[test]
    fn memorizes_a_single_example() {
        let corpus = TokenizedCorpus {
            sentences: vec![vec![BOS_ID, 4, EOS_ID]],
        };
        let pool = ExamplePool::all(&corpus).unwrap();
        let model = NeuralNgramLm::<f64>::init(dims(8), 2).unwrap();
        let mut c = cfg(500, 0.1);
        c.batch_size = 1;
        let out = train(model, &pool, &c, &EvalSuite::default(), Phase::Pretrain).unwrap();
        let loss = crate::lm::logppl(&out.model, &corpus).unwrap();
        assert!(loss < 0.01, "loss {loss}");
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = tiny_corpus();
        let pool = ExamplePool::all(&corpus).unwrap();
        let run = || {
            let model = NeuralNgramLm::<f64>::init(dims(8), 7).unwrap();
            let evals = EvalSuite {
                valid: Some(&corpus),
                ..Default::default()
            };
            train(model, &pool, &cfg(60, 0.05), &evals, Phase::Pretrain).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.model.embed, b.model.embed);
        assert_eq!(a.model.w2, b.model.w2);
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn diverging_lr_aborts_with_numerics_error() {
        let corpus = tiny_corpus();
        let pool = ExamplePool::all(&corpus).unwrap();
        let model = NeuralNgramLm::<f64>::init(dims(8), 3).unwrap();
        let err = train(model, &pool, &cfg(200, 1e12), &EvalSuite::default(), Phase::Pretrain)
            .unwrap_err();
        assert!(matches!(err, Error::Numerics { .. }));
    }

    #[test]
    fn early_stopping_returns_minimum_valid_checkpoint() {
        // Train long on a single sentence with a separate "validation" set it
        // cannot fit: valid loss eventually rises, early stopping must hand
        // back the minimum.
        let train_corpus = TokenizedCorpus {
            sentences: vec![vec![BOS_ID, 4, 4, EOS_ID]],
        };
        let valid_corpus = TokenizedCorpus {
            sentences: vec![vec![BOS_ID, 5, 4, EOS_ID], vec![BOS_ID, 4, 5, EOS_ID]],
        };
        let pool = ExamplePool::all(&train_corpus).unwrap();
        let model = NeuralNgramLm::<f64>::init(dims(8), 5).unwrap();
        let c = TrainConfig {
            steps: 3000,
            batch_size: 2,
            lr: 0.3,
            checkpoint_interval: 20,
            seed: 9,
            patience: Some(5),
        };
        let evals = EvalSuite {
            valid: Some(&valid_corpus),
            ..Default::default()
        };
        let out = train(model, &pool, &c, &evals, Phase::Finetune).unwrap();
        assert!(out.steps_run < 3000, "early stopping never triggered");
        let best = out
            .curve
            .iter()
            .filter_map(|p| p.valid_loss)
            .fold(f64::INFINITY, f64::min);
        let returned = crate::lm::logppl(&out.model, &valid_corpus).unwrap();
        assert!((returned - best).abs() < 1e-12);
    }

    #[test]
    fn step_counter_is_nondecreasing_across_checkpoints() {
        let corpus = tiny_corpus();
        let pool = ExamplePool::all(&corpus).unwrap();
        let model = NeuralNgramLm::<f64>::init(dims(8), 11).unwrap();
        let out = train(model, &pool, &cfg(120, 0.05), &EvalSuite::default(), Phase::Pretrain)
            .unwrap();
        let steps: Vec<u64> = out.checkpoints.iter().map(|c| c.step).collect();
        assert!(steps.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*steps.last().unwrap(), 120);
    }

    #[test]
    fn grad_check_fresh_model() {
        let model = NeuralNgramLm::<f64>::init(dims(12), 21).unwrap();
        let err = grad_check(&model, &[4, 5, 6], 7, 1e-5, 250, 1);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn grad_of_unused_embedding_is_zero_both_ways() {
        let model = NeuralNgramLm::<f64>::init(dims(12), 22).unwrap();
        let analytic = model.example_grad(&[4, 5, 6], 7);
        // Embedding row of token 9, which is neither in the context nor
        // relevant to the loss path through the embeddings.
        let d = model.dims.embed_dim;
        let row = 9 * d..10 * d;
        assert!(analytic[row.clone()].iter().all(|&g| g == 0.0));
        let indices: Vec<usize> = row.collect();
        let err = grad_check_against(&model, &[4, 5, 6], 7, 1e-5, &analytic, &indices);
        assert!(err < 1e-8, "unused-parameter disagreement {err}");
    }

    #[test]
    fn grad_check_detects_corrupted_gradient() {
        let model = NeuralNgramLm::<f64>::init(dims(12), 23).unwrap();
        let mut analytic = model.example_grad(&[4, 5, 6], 7);
        // Sign-flip the largest-magnitude entry.
        let (worst, _) = analytic
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        analytic[worst] = -analytic[worst];
        let err = grad_check_against(&model, &[4, 5, 6], 7, 1e-5, &analytic, &[worst]);
        assert!(err > 0.1, "corruption not detected: {err}");
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let corpus = tiny_corpus();
        let pool = ExamplePool::all(&corpus).unwrap();
        let model = NeuralNgramLm::<f64>::init(dims(8), 31).unwrap();
        let out = train(model, &pool, &cfg(30, 0.05), &EvalSuite::default(), Phase::Pretrain)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.nnlm");
        out.model.save(&path).unwrap();
        let loaded = NeuralNgramLm::<f64>::load(&path).unwrap();
        assert_eq!(out.model, loaded);
        let (a, _) = out.model.sequence_logprob(&corpus.sentences[0]);
        let (b, _) = loaded.sequence_logprob(&corpus.sentences[0]);
        assert_eq!(a, b);
    }

    #[test]
    fn f32_models_train_too() {
        let corpus = tiny_corpus();
        let pool = ExamplePool::all(&corpus).unwrap();
        let model = NeuralNgramLm::<f32>::init(dims(8), 2).unwrap();
        let out = train(model, &pool, &cfg(50, 0.05), &EvalSuite::default(), Phase::Pretrain)
            .unwrap();
        assert!(crate::lm::logppl(&out.model, &corpus).unwrap().is_finite());
    }

    #[test]
    fn pool_subset_uses_only_selected_sentences() {
        let corpus = tiny_corpus();
        let pool = ExamplePool::subset(&corpus, vec![2]).unwrap();
        assert_eq!(pool.total_examples(), 3);
        let mut ctx = vec![BOS_ID; 3];
        for flat in 0..3 {
            let target = pool.example(flat, &mut ctx);
            assert_eq!(target, corpus.sentences[2][flat as usize + 1]);
        }
    }
}
