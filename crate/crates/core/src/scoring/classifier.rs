//! Discriminative domain classifier: logistic regression on binary
//! BPE-unigram presence features, with four conditioning variants for
//! parallel data (source side, target side, side-tagged concatenation, and
//! the mean of independent source and target classifiers).
//!
//! Training is full-batch gradient descent with Armijo backtracking on the
//! L2-regularized log-loss, run to a gradient-norm tolerance. The in-domain
//! set is small, so exact deterministic convergence is cheap and keeps
//! sampling noise out of selection.

use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::scoring::{CorpusRef, Example, Scorer, ScorerDescriptor};
use crate::tokenizer::{BpeModel, BOS_ID, EOS_ID, SEP_ID};

const GRAD_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 5000;

/// What part of an example the classifier conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    Source,
    Target,
    Concat,
    MeanOfTwo,
}

impl Conditioning {
    pub fn name(&self) -> &'static str {
        match self {
            Conditioning::Source => "source",
            Conditioning::Target => "target",
            Conditioning::Concat => "concat",
            Conditioning::MeanOfTwo => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Conditioning::Source),
            "target" => Ok(Conditioning::Target),
            "concat" => Ok(Conditioning::Concat),
            "mean" => Ok(Conditioning::MeanOfTwo),
            other => Err(Error::config(format!("unknown classifier variant {other}"))),
        }
    }
}

/// Dense weight vector plus bias over a binary feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<F: Scalar> {
    pub weights: Vec<F>,
    pub bias: F,
}

impl<F: Scalar> LinearModel<F> {
    fn zeros(dim: usize) -> Self {
        LinearModel {
            weights: vec![F::zero(); dim],
            bias: F::zero(),
        }
    }

    /// Log-odds of one example given its active feature indices.
    pub fn log_odds(&self, features: &[u32]) -> F {
        let mut z = self.bias;
        for &i in features {
            z += self.weights[i as usize];
        }
        z
    }
}

/// Binary in-domain vs out-of-domain classifier. Scores are log-odds, so
/// they are monotone in the estimated in-domain probability; threshold 0
/// is the probability-0.5 decision boundary.
pub struct DomainClassifier<F: Scalar> {
    variant: Conditioning,
    primary: LinearModel<F>,
    /// Target-side model of the mean variant.
    secondary: Option<LinearModel<F>>,
    lambda: f64,
    tokenizer: Arc<BpeModel>,
    descriptor: ScorerDescriptor,
}

impl<F: Scalar> DomainClassifier<F> {
    /// Assemble a classifier from explicit parts (tests, file loading).
    pub fn from_parts(
        variant: Conditioning,
        primary: LinearModel<F>,
        secondary: Option<LinearModel<F>>,
        lambda: f64,
        tokenizer: Arc<BpeModel>,
        descriptor: ScorerDescriptor,
    ) -> Result<Self> {
        let expect = feature_dim(variant, tokenizer.vocab_size());
        if primary.weights.len() != expect {
            return Err(Error::config(format!(
                "primary weight dimension {} != feature space {expect}",
                primary.weights.len()
            )));
        }
        match (variant, &secondary) {
            (Conditioning::MeanOfTwo, Some(s)) if s.weights.len() == expect => {}
            (Conditioning::MeanOfTwo, _) => {
                return Err(Error::config(
                    "mean variant needs a secondary model of matching dimension",
                ))
            }
            (_, Some(_)) => {
                return Err(Error::config("only the mean variant has a secondary model"))
            }
            (_, None) => {}
        }
        Ok(DomainClassifier {
            variant,
            primary,
            secondary,
            lambda,
            tokenizer,
            descriptor,
        })
    }

    pub fn variant(&self) -> Conditioning {
        self.variant
    }

    pub fn primary(&self) -> &LinearModel<F> {
        &self.primary
    }

    pub fn secondary(&self) -> Option<&LinearModel<F>> {
        self.secondary.as_ref()
    }

    /// Log-odds of an example under the variant's conditioning.
    pub fn log_odds(&self, example: &Example) -> Result<F> {
        let missing_target = || {
            Error::config(format!(
                "{} classifier applied to a monolingual example",
                self.variant.name()
            ))
        };
        match self.variant {
            Conditioning::Source => Ok(self
                .primary
                .log_odds(&features_single(&self.tokenizer, example.source()))),
            Conditioning::Target => {
                let target = example.target().ok_or_else(missing_target)?;
                Ok(self.primary.log_odds(&features_single(&self.tokenizer, target)))
            }
            Conditioning::Concat => {
                let target = example.target().ok_or_else(missing_target)?;
                Ok(self.primary.log_odds(&features_concat(
                    &self.tokenizer,
                    example.source(),
                    target,
                )))
            }
            Conditioning::MeanOfTwo => {
                let target = example.target().ok_or_else(missing_target)?;
                let src = self
                    .primary
                    .log_odds(&features_single(&self.tokenizer, example.source()));
                let tgt = self
                    .secondary
                    .as_ref()
                    .expect("mean variant has a secondary model")
                    .log_odds(&features_single(&self.tokenizer, target));
                Ok((src + tgt) / F::from_f64(2.0))
            }
        }
    }

    /// Text serialization; the tokenizer is stored separately and re-attached
    /// on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let n_models = 1 + self.secondary.is_some() as usize;
        let write = |out: &mut BufWriter<std::fs::File>, m: &LinearModel<F>| -> std::io::Result<()> {
            writeln!(out, "dim {}", m.weights.len())?;
            writeln!(out, "bias {}", m.bias.as_f64())?;
            for (i, w) in m.weights.iter().enumerate() {
                if *w != F::zero() {
                    writeln!(out, "{i} {}", w.as_f64())?;
                }
            }
            writeln!(out, "end")
        };
        (|| -> std::io::Result<()> {
            writeln!(
                out,
                "dclf v1 {} {} {} {}",
                self.variant.name(),
                self.lambda,
                self.descriptor.config_hash,
                n_models
            )?;
            write(&mut out, &self.primary)?;
            if let Some(s) = &self.secondary {
                write(&mut out, s)?;
            }
            out.flush()
        })()
        .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, tokenizer: Arc<BpeModel>) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::artifact(path, msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [magic, version, variant, lambda, hash, n_models] = fields[..] else {
            return Err(bad("malformed header"));
        };
        if magic != "dclf" || version != "v1" {
            return Err(bad("expected `dclf v1` header"));
        }
        let variant = Conditioning::parse(variant)?;
        let lambda: f64 = lambda.parse().map_err(|_| bad("bad lambda"))?;
        let n_models: usize = n_models.parse().map_err(|_| bad("bad model count"))?;
        let mut read_model = || -> Result<LinearModel<F>> {
            let dim_line = lines.next().ok_or_else(|| bad("missing dim line"))?;
            let dim: usize = dim_line
                .strip_prefix("dim ")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad dim line"))?;
            let bias_line = lines.next().ok_or_else(|| bad("missing bias line"))?;
            let bias: f64 = bias_line
                .strip_prefix("bias ")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad bias line"))?;
            let mut model = LinearModel::zeros(dim);
            model.bias = F::from_f64(bias);
            loop {
                let line = lines.next().ok_or_else(|| bad("missing end marker"))?;
                if line == "end" {
                    return Ok(model);
                }
                let (i, w) = line.split_once(' ').ok_or_else(|| bad("bad weight line"))?;
                let i: usize = i.parse().map_err(|_| bad("bad weight index"))?;
                let w: f64 = w.parse().map_err(|_| bad("bad weight value"))?;
                if i >= dim {
                    return Err(bad("weight index out of range"));
                }
                model.weights[i] = F::from_f64(w);
            }
        };
        let primary = read_model()?;
        let secondary = if n_models > 1 { Some(read_model()?) } else { None };
        DomainClassifier::from_parts(
            variant,
            primary,
            secondary,
            lambda,
            tokenizer,
            ScorerDescriptor::new("dc", variant.name(), hash),
        )
    }
}

impl<F: Scalar> Scorer for DomainClassifier<F> {
    fn score(&self, example: &Example) -> Result<f64> {
        Ok(self.log_odds(example)?.as_f64())
    }

    fn descriptor(&self) -> ScorerDescriptor {
        self.descriptor.clone()
    }
}

fn feature_dim(variant: Conditioning, vocab: usize) -> usize {
    match variant {
        Conditioning::Concat => 2 * vocab,
        _ => vocab,
    }
}

/// Distinct non-structural token ids of one side, sorted.
fn features_single(bpe: &BpeModel, text: &str) -> Vec<u32> {
    let mut ids: Vec<u32> = bpe
        .encode(text)
        .into_iter()
        .filter(|&t| t != BOS_ID && t != EOS_ID && t != SEP_ID)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Side-tagged features: source tokens keep their ids, target tokens are
/// shifted by the vocabulary size, so the same surface token can carry a
/// different weight per side.
fn features_concat(bpe: &BpeModel, source: &str, target: &str) -> Vec<u32> {
    let v = bpe.vocab_size() as u32;
    let mut ids = features_single(bpe, source);
    ids.extend(features_single(bpe, target).into_iter().map(|t| t + v));
    ids
}

/// Train a domain classifier: positives are the whole in-domain set, the
/// negatives are `negative_ratio * |T|` lines sampled uniformly from the pool
/// without replacement.
#[allow(clippy::too_many_arguments)]
pub fn dc_train<F: Scalar>(
    in_domain: CorpusRef,
    pool: CorpusRef,
    variant: Conditioning,
    negative_ratio: usize,
    lambda: f64,
    seed: u64,
    tokenizer: Arc<BpeModel>,
    config_hash: &str,
) -> Result<DomainClassifier<F>> {
    if in_domain.is_empty() {
        return Err(Error::config("classifier training set is empty"));
    }
    if negative_ratio == 0 {
        return Err(Error::config("negative_ratio must be >= 1"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::config("lambda must be non-negative"));
    }
    let n_neg = in_domain.len() * negative_ratio;
    if pool.len() < n_neg {
        return Err(Error::config(format!(
            "pool has {} lines, {n_neg} negatives requested",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives = rand::seq::index::sample(&mut rng, pool.len(), n_neg).into_vec();
    negatives.sort_unstable();

    let mut examples: Vec<(Example, i8)> = Vec::with_capacity(in_domain.len() + n_neg);
    for i in 0..in_domain.len() {
        examples.push((in_domain.example(i), 1));
    }
    for &i in &negatives {
        examples.push((pool.example(i), -1));
    }

    let signs: Vec<i8> = examples.iter().map(|&(_, s)| s).collect();
    let featurize_with = |f: &dyn Fn(&Example) -> Result<Vec<u32>>| -> Result<Vec<Vec<u32>>> {
        examples.iter().map(|(ex, _)| f(ex)).collect()
    };
    let missing_target = || Error::config(format!("{} classifier needs parallel data", variant.name()));
    let dim = feature_dim(variant, tokenizer.vocab_size());

    let (primary, secondary) = match variant {
        Conditioning::Source => {
            let rows = featurize_with(&|ex| Ok(features_single(&tokenizer, ex.source())))?;
            (fit_logistic(&rows, &signs, dim, lambda), None)
        }
        Conditioning::Target => {
            let rows = featurize_with(&|ex| {
                Ok(features_single(&tokenizer, ex.target().ok_or_else(missing_target)?))
            })?;
            (fit_logistic(&rows, &signs, dim, lambda), None)
        }
        Conditioning::Concat => {
            let rows = featurize_with(&|ex| {
                Ok(features_concat(
                    &tokenizer,
                    ex.source(),
                    ex.target().ok_or_else(missing_target)?,
                ))
            })?;
            (fit_logistic(&rows, &signs, dim, lambda), None)
        }
        Conditioning::MeanOfTwo => {
            let src_rows = featurize_with(&|ex| Ok(features_single(&tokenizer, ex.source())))?;
            let tgt_rows = featurize_with(&|ex| {
                Ok(features_single(&tokenizer, ex.target().ok_or_else(missing_target)?))
            })?;
            (
                fit_logistic(&src_rows, &signs, dim, lambda),
                Some(fit_logistic(&tgt_rows, &signs, dim, lambda)),
            )
        }
    };

    DomainClassifier::from_parts(
        variant,
        primary,
        secondary,
        lambda,
        tokenizer,
        ScorerDescriptor::new("dc", variant.name(), config_hash),
    )
}

/// Full-batch gradient descent with Armijo backtracking on
/// `mean(log(1 + exp(-s z))) + lambda/2 ||w||^2` (bias unregularized), from
/// zero initialization, until the gradient norm falls under 1e-6 or 5000
/// iterations.
///
/// The loss and gradient are written in terms of `a = -s z` only, so flipping
/// every label while negating the parameters evaluates sigma and softplus at
/// identical floating-point arguments; the optimization paths are exact
/// mirrors.
fn fit_logistic<F: Scalar>(
    rows: &[Vec<u32>],
    signs: &[i8],
    dim: usize,
    lambda: f64,
) -> LinearModel<F> {
    let n = rows.len();
    let inv_n = F::from_f64(1.0 / n as f64);
    let lam = F::from_f64(lambda);
    let half = F::from_f64(0.5);

    let objective = |w: &[F], b: F| -> F {
        let mut loss = F::zero();
        for (row, &s) in rows.iter().zip(signs) {
            let mut z = b;
            for &i in row {
                z += w[i as usize];
            }
            let a = if s > 0 { -z } else { z };
            loss += softplus(a);
        }
        let mut reg = F::zero();
        for &wi in w {
            reg += wi * wi;
        }
        loss * inv_n + half * lam * reg
    };

    let mut w = vec![F::zero(); dim];
    let mut b = F::zero();
    let mut gw = vec![F::zero(); dim];
    let mut step = F::one();
    let tol_sq = F::from_f64(GRAD_TOL * GRAD_TOL);

    for _ in 0..MAX_ITERS {
        gw.iter_mut().for_each(|g| *g = F::zero());
        let mut gb = F::zero();
        let mut loss = F::zero();
        for (row, &s) in rows.iter().zip(signs) {
            let mut z = b;
            for &i in row {
                z += w[i as usize];
            }
            let a = if s > 0 { -z } else { z };
            loss += softplus(a);
            // d loss / d z = -s * sigma(a)
            let coef = if s > 0 { -sigma(a) } else { sigma(a) };
            gb += coef;
            for &i in row {
                gw[i as usize] += coef;
            }
        }
        let mut f0 = loss * inv_n;
        let mut gnorm_sq = F::zero();
        for (g, &wi) in gw.iter_mut().zip(w.iter()) {
            *g = *g * inv_n + lam * wi;
            gnorm_sq += *g * *g;
            f0 += half * lam * wi * wi;
        }
        gb *= inv_n;
        gnorm_sq += gb * gb;
        if gnorm_sq < tol_sq {
            break;
        }

        // Armijo backtracking, warm-started from twice the last accepted step.
        step = (step + step).min(F::from_f64(1e3));
        let mut accepted = false;
        for _ in 0..100 {
            let trial_w: Vec<F> = w.iter().zip(gw.iter()).map(|(&wi, &g)| wi - step * g).collect();
            let trial_b = b - step * gb;
            if objective(&trial_w, trial_b) <= f0 - half * step * gnorm_sq {
                w = trial_w;
                b = trial_b;
                accepted = true;
                break;
            }
            step = step * half;
        }
        if !accepted {
            break; // step underflowed; gradient is numerically flat
        }
    }
    LinearModel { weights: w, bias: b }
}

fn sigma<F: Scalar>(a: F) -> F {
    if a >= F::zero() {
        F::one() / (F::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (F::one() + e)
    }
}

fn softplus<F: Scalar>(a: F) -> F {
    if a > F::zero() {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    fn corpus(lines: &[&str]) -> Corpus {
        Corpus::from_lines(lines.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn tokenizer_over(lines: &[&str]) -> Arc<BpeModel> {
        Arc::new(BpeModel::train(&corpus(lines), 40).unwrap())
    }

    fn descriptor() -> ScorerDescriptor {
        ScorerDescriptor::new("dc", "source", "t")
    }

    #[test]
    fn zero_weight_classifier_scores_bias() {
        let bpe = tokenizer_over(&["aa bb cc"]);
        let mut m = LinearModel::<f64>::zeros(bpe.vocab_size());
        m.bias = -1.5;
        let clf = DomainClassifier::from_parts(
            Conditioning::Source,
            m,
            None,
            1e-4,
            bpe,
            descriptor(),
        )
        .unwrap();
        for line in ["aa", "bb cc", "cc cc aa"] {
            assert_eq!(clf.score(&Example::Mono(line)).unwrap(), -1.5);
        }
    }

    #[test]
    fn hand_set_weights_dot_product() {
        // Sentence with exactly two distinct tokens weighted +1 and +2 and
        // bias -0.5 scores 1 + 2 - 0.5 = 2.5.
        let bpe = tokenizer_over(&["aa bb", "aa bb", "aa bb aa"]);
        let mut m = LinearModel::<f64>::zeros(bpe.vocab_size());
        let aa = bpe.token_id("aa</w>").expect("aa</w> in vocab");
        let bb = bpe.token_id("bb</w>").expect("bb</w> in vocab");
        m.weights[aa as usize] = 1.0;
        m.weights[bb as usize] = 2.0;
        m.bias = -0.5;
        let clf = DomainClassifier::from_parts(
            Conditioning::Source,
            m,
            None,
            1e-4,
            bpe,
            descriptor(),
        )
        .unwrap();
        assert_eq!(clf.score(&Example::Mono("aa bb")).unwrap(), 2.5);
    }

    #[test]
    fn mean_of_equal_subscores_is_that_score() {
        let bpe = tokenizer_over(&["aa bb"]);
        let mut m = LinearModel::<f64>::zeros(bpe.vocab_size());
        m.bias = 0.75;
        let clf = DomainClassifier::from_parts(
            Conditioning::MeanOfTwo,
            m.clone(),
            Some(m),
            1e-4,
            bpe,
            ScorerDescriptor::new("dc", "mean", "t"),
        )
        .unwrap();
        let ex = Example::Pair {
            source: "aa",
            target: "bb",
        };
        assert_eq!(clf.score(&ex).unwrap(), 0.75);
    }

    #[test]
    fn side_variants_reject_monolingual_examples() {
        let bpe = tokenizer_over(&["aa bb"]);
        for variant in [
            Conditioning::Target,
            Conditioning::Concat,
            Conditioning::MeanOfTwo,
        ] {
            let m = LinearModel::<f64>::zeros(feature_dim(variant, bpe.vocab_size()));
            let secondary =
                (variant == Conditioning::MeanOfTwo).then(|| LinearModel::zeros(bpe.vocab_size()));
            let clf = DomainClassifier::from_parts(
                variant,
                m,
                secondary,
                1e-4,
                bpe.clone(),
                ScorerDescriptor::new("dc", variant.name(), "t"),
            )
            .unwrap();
            assert!(clf.score(&Example::Mono("aa")).is_err());
        }
    }

    fn separable_sets() -> (Corpus, Corpus, Arc<BpeModel>) {
        let t = corpus(&["xx yy", "yy xx xx", "xx xx", "yy yy xx"]);
        let d = corpus(&[
            "pp qq", "qq pp pp", "pp pp", "qq qq", "pp qq qq", "qq pp", "pp pp qq", "qq",
        ]);
        let mut all: Vec<&str> = t.lines().collect();
        let d_lines: Vec<&str> = d.lines().collect();
        all.extend(&d_lines);
        let bpe = tokenizer_over(&all);
        (t, d, bpe)
    }

    #[test]
    fn separable_domains_reach_full_training_accuracy() {
        let (t, d, bpe) = separable_sets();
        let clf: DomainClassifier<f64> = dc_train(
            (&t).into(),
            (&d).into(),
            Conditioning::Source,
            1,
            1e-4,
            7,
            bpe,
            "t",
        )
        .unwrap();
        for line in t.lines() {
            assert!(clf.score(&Example::Mono(line)).unwrap() > 0.0);
        }
        for line in d.lines() {
            assert!(clf.score(&Example::Mono(line)).unwrap() < 0.0);
        }
    }

    #[test]
    fn flipped_labels_negate_weights_exactly() {
        let (t, d, bpe) = separable_sets();
        let forward: DomainClassifier<f64> = dc_train(
            (&t).into(),
            (&d).into(),
            Conditioning::Source,
            2,
            1e-4,
            5,
            bpe.clone(),
            "t",
        )
        .unwrap();
        // Flip by swapping the roles: positives become the same sampled
        // negatives and vice versa. Rebuild the exact same row order by hand.
        let n_neg = t.len() * 2;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut negatives = rand::seq::index::sample(&mut rng, d.len(), n_neg).into_vec();
        negatives.sort_unstable();
        let rows: Vec<Vec<u32>> = t
            .lines()
            .map(|l| features_single(&bpe, l))
            .chain(negatives.iter().map(|&i| features_single(&bpe, d.line(i))))
            .collect();
        let signs_fwd: Vec<i8> = std::iter::repeat(1)
            .take(t.len())
            .chain(std::iter::repeat(-1).take(n_neg))
            .collect();
        let signs_flip: Vec<i8> = signs_fwd.iter().map(|s| -s).collect();
        let m_fwd: LinearModel<f64> = fit_logistic(&rows, &signs_fwd, bpe.vocab_size(), 1e-4);
        let m_flip: LinearModel<f64> = fit_logistic(&rows, &signs_flip, bpe.vocab_size(), 1e-4);
        assert_eq!(m_fwd.weights, forward.primary.weights);
        for (a, b) in m_fwd.weights.iter().zip(&m_flip.weights) {
            assert_eq!(*a, -*b, "weights are not exact negations");
        }
        assert_eq!(m_fwd.bias, -m_flip.bias);
    }

    #[test]
    fn huge_lambda_shrinks_all_weights() {
        let (t, d, bpe) = separable_sets();
        let clf: DomainClassifier<f64> = dc_train(
            (&t).into(),
            (&d).into(),
            Conditioning::Source,
            1,
            1e6,
            3,
            bpe,
            "t",
        )
        .unwrap();
        assert!(clf.primary.weights.iter().all(|w| w.abs() < 1e-3));
    }

    #[test]
    fn log_odds_monotone_in_positive_feature_presence() {
        // Words repeat so pair counts reach the merge threshold and whole
        // words become single tokens.
        let bpe = tokenizer_over(&["aa bb cc", "aa bb cc"]);
        let mut m = LinearModel::<f64>::zeros(bpe.vocab_size());
        let aa = bpe.token_id("aa</w>").unwrap();
        m.weights[aa as usize] = 0.8;
        let clf = DomainClassifier::from_parts(
            Conditioning::Source,
            m,
            None,
            1e-4,
            bpe,
            descriptor(),
        )
        .unwrap();
        let with = clf.score(&Example::Mono("bb aa")).unwrap();
        let without = clf.score(&Example::Mono("bb")).unwrap();
        assert!(with > without);
    }

    #[test]
    fn parallel_variants_train_and_score() {
        let t = ParallelFixture::in_domain();
        let d = ParallelFixture::out_domain();
        let mut all: Vec<String> = Vec::new();
        for c in [&t, &d] {
            for (s, g) in c.pairs() {
                all.push(s.to_string());
                all.push(g.to_string());
            }
        }
        let bpe = Arc::new(BpeModel::train(&Corpus::from_lines(all).unwrap(), 60).unwrap());
        for variant in [
            Conditioning::Source,
            Conditioning::Target,
            Conditioning::Concat,
            Conditioning::MeanOfTwo,
        ] {
            let clf: DomainClassifier<f64> = dc_train(
                (&t).into(),
                (&d).into(),
                variant,
                1,
                1e-4,
                11,
                bpe.clone(),
                "t",
            )
            .unwrap();
            let pos = clf
                .score(&Example::Pair {
                    source: "xx yy",
                    target: "gx gy",
                })
                .unwrap();
            let neg = clf
                .score(&Example::Pair {
                    source: "pp qq",
                    target: "gp gq",
                })
                .unwrap();
            assert!(pos > neg, "variant {:?}: {pos} <= {neg}", variant);
        }
    }

    struct ParallelFixture;

    impl ParallelFixture {
        fn in_domain() -> crate::corpus::ParallelCorpus {
            crate::corpus::ParallelCorpus::from_pairs(vec![
                ("xx yy".into(), "gx gy".into()),
                ("yy xx".into(), "gy gx".into()),
                ("xx".into(), "gx".into()),
                ("yy".into(), "gy".into()),
            ])
            .unwrap()
        }

        fn out_domain() -> crate::corpus::ParallelCorpus {
            crate::corpus::ParallelCorpus::from_pairs(vec![
                ("pp qq".into(), "gp gq".into()),
                ("qq pp".into(), "gq gp".into()),
                ("pp".into(), "gp".into()),
                ("qq".into(), "gq".into()),
                ("pp pp".into(), "gp gp".into()),
                ("qq qq".into(), "gq gq".into()),
                ("pp qq pp".into(), "gp gq gp".into()),
                ("qq pp qq".into(), "gq gp gq".into()),
            ])
            .unwrap()
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let (t, d, bpe) = separable_sets();
        let clf: DomainClassifier<f64> = dc_train(
            (&t).into(),
            (&d).into(),
            Conditioning::Source,
            1,
            1e-4,
            7,
            bpe.clone(),
            "hash42",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.txt");
        clf.save(&path).unwrap();
        let loaded = DomainClassifier::<f64>::load(&path, bpe).unwrap();
        assert_eq!(clf.primary.weights, loaded.primary.weights);
        assert_eq!(clf.primary.bias, loaded.primary.bias);
        assert_eq!(loaded.descriptor.config_hash, "hash42");
    }
}
