//! The three-phase adaptation pipeline.
//!
//! One run pretrains a neural n-gram LM on the out-of-domain pool, builds a
//! domain scorer, selects the top-n pool lines, trains on the selection from
//! the pretrained parameters, and fine-tunes on the in-domain set with a
//! learning-rate grid and early stopping. A matched-budget baseline arm
//! continues pretraining on the full pool for the same number of steps (with
//! the same sampling stream, so selecting the whole pool reproduces the
//! baseline bit for bit), which makes the four reported variants — PT, PT+FT,
//! PT+Sel, PT+Sel+FT — comparable at equal total step counts.
//!
//! [`run_matrix`] branches the adaptation from several pretrain checkpoints
//! and selection sizes while sharing the single pretraining run;
//! [`run_pipeline`] is the single-cell case.

mod report;

pub use report::{
    diagnostics, DiagnosticsRecord, PhaseRecord, PipelineReport, SelectionSummary, StepAccounting,
    Timings, VariantLosses,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample as index_sample;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, Corpus};
use crate::error::{Error, Result};
use crate::lm::{
    self, Checkpoint, CountNgramLm, EvalSuite, ExamplePool, ModelDims, NeuralNgramLm, Phase,
    TrainOutcome,
};
use crate::scoring::{
    self, build_neural_cds, dc_train, CdsScorer, Conditioning, Scorer, ScoreTable,
    ScorerDescriptor,
};
use crate::seed::{self, streams};
use crate::selection::{select_top_n, SelectionResult, SelectionSize, SelectionSpec};
use crate::tokenizer::{BpeModel, TokenizedCorpus};

type NeuralLm = NeuralNgramLm<f64>;

/// Hash of a serializable config: canonical struct-ordered JSON, SHA-256,
/// first 16 hex chars. Stable under key reordering of the input file because
/// the value is re-serialized from the parsed struct.
pub fn config_hash<T: serde::Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Network shape knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub context: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            context: 3,
            embed_dim: 32,
            hidden_dim: 64,
        }
    }
}

/// Schedule of one training phase (the sampling seed is derived per phase).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepsConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub checkpoint_interval: u64,
}

impl Default for StepsConfig {
    fn default() -> Self {
        StepsConfig {
            steps: 2000,
            batch_size: 64,
            lr: 0.3,
            checkpoint_interval: 100,
        }
    }
}

impl StepsConfig {
    fn to_train_config(self, seed: u64, patience: Option<u32>) -> lm::TrainConfig {
        lm::TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
            checkpoint_interval: self.checkpoint_interval,
            seed,
            patience,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.batch_size == 0 || self.checkpoint_interval == 0 {
            return Err(Error::config(format!(
                "{name}: batch_size and checkpoint_interval must be positive"
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::config(format!("{name}: bad learning rate")));
        }
        Ok(())
    }
}

/// Fine-tuning phase: learning-rate grid over a base rate, early stopping on
/// validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    /// Step budget per grid run (early stopping usually ends sooner).
    pub steps: u64,
    pub batch_size: usize,
    /// Base learning rate; `null` inherits the selection-phase rate.
    pub lr: Option<f64>,
    pub checkpoint_interval: u64,
    /// Evaluations without improvement before stopping.
    pub patience: u32,
    /// Multipliers applied to the base rate; best run wins by validation loss.
    pub lr_grid: Vec<f64>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            steps: 600,
            batch_size: 64,
            lr: None,
            checkpoint_interval: 25,
            patience: 5,
            lr_grid: vec![1.0, 0.5, 0.1],
        }
    }
}

/// Scorer construction recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerConfig {
    CdsNgram(CdsNgramConfig),
    CdsNeural(CdsNeuralConfig),
    Dc(DcConfig),
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig::CdsNgram(CdsNgramConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdsNgramConfig {
    pub order: usize,
    pub delta: f64,
    pub constant: f64,
    pub length_normalize: bool,
}

impl Default for CdsNgramConfig {
    fn default() -> Self {
        CdsNgramConfig {
            order: 4,
            delta: 0.75,
            constant: 0.0,
            length_normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdsNeuralConfig {
    /// Fine-tune budget of the in-domain side.
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub checkpoint_interval: u64,
    /// Early stopping patience; `null` fine-tunes for the full budget.
    pub patience: Option<u32>,
    pub constant: f64,
    pub length_normalize: bool,
}

impl Default for CdsNeuralConfig {
    fn default() -> Self {
        CdsNeuralConfig {
            steps: 200,
            batch_size: 64,
            lr: 0.3,
            checkpoint_interval: 20,
            patience: None,
            constant: 0.0,
            length_normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DcConfig {
    pub variant: Conditioning,
    pub negative_ratio: usize,
    pub lambda: f64,
}

impl Default for DcConfig {
    fn default() -> Self {
        DcConfig {
            variant: Conditioning::Source,
            negative_ratio: 1,
            lambda: 1e-4,
        }
    }
}

/// Full pipeline configuration. Every field has a default; unknown keys in a
/// config file are hard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub bpe_vocab_size: usize,
    pub model: ModelConfig,
    pub pretrain: StepsConfig,
    pub scorer: ScorerConfig,
    pub selection: SelectionSize,
    pub selection_train: StepsConfig,
    pub finetune: FinetuneConfig,
    /// Loss-curve probes evaluate at most this many sentences per set.
    pub eval_cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            bpe_vocab_size: 1000,
            model: ModelConfig::default(),
            pretrain: StepsConfig::default(),
            scorer: ScorerConfig::default(),
            selection: SelectionSize::Fraction(0.05),
            selection_train: StepsConfig {
                steps: 1000,
                ..StepsConfig::default()
            },
            finetune: FinetuneConfig::default(),
            eval_cap: 512,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.pretrain.validate("pretrain")?;
        self.selection_train.validate("selection_train")?;
        if self.finetune.batch_size == 0 || self.finetune.checkpoint_interval == 0 {
            return Err(Error::config("finetune: batch/interval must be positive"));
        }
        if self.finetune.lr_grid.is_empty()
            || self
                .finetune
                .lr_grid
                .iter()
                .any(|m| !m.is_finite() || *m <= 0.0)
        {
            return Err(Error::config("finetune: lr_grid must be positive factors"));
        }
        if self.eval_cap == 0 {
            return Err(Error::config("eval_cap must be positive"));
        }
        match &self.scorer {
            ScorerConfig::CdsNgram(c) => {
                if !(c.delta > 0.0 && c.delta < 1.0) || c.order == 0 {
                    return Err(Error::config("cds-ngram: bad order or delta"));
                }
            }
            ScorerConfig::CdsNeural(c) => {
                if c.batch_size == 0 || c.checkpoint_interval == 0 {
                    return Err(Error::config("cds-neural: batch/interval must be positive"));
                }
            }
            ScorerConfig::Dc(c) => {
                if c.negative_ratio == 0 || c.lambda < 0.0 {
                    return Err(Error::config("dc: bad negative_ratio or lambda"));
                }
            }
        }
        Ok(())
    }

    fn finetune_base_lr(&self) -> f64 {
        self.finetune.lr.unwrap_or(self.selection_train.lr)
    }
}

/// The corpora a run operates on.
#[derive(Debug, Clone)]
pub struct PipelineData {
    /// Out-of-domain pool D.
    pub pool: Corpus,
    /// In-domain training set T.
    pub in_domain: Corpus,
    pub valid: Corpus,
    pub test: Corpus,
}

impl PipelineData {
    fn validate(&self) -> Result<()> {
        for (name, c) in [
            ("pool", &self.pool),
            ("in_domain", &self.in_domain),
            ("valid", &self.valid),
            ("test", &self.test),
        ] {
            if c.is_empty() {
                return Err(Error::config(format!("{name} corpus is empty")));
            }
        }
        Ok(())
    }
}

/// Corpus file locations of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub pool: PathBuf,
    pub in_domain: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        DataPaths {
            pool: PathBuf::new(),
            in_domain: PathBuf::new(),
            valid: PathBuf::new(),
            test: PathBuf::new(),
        }
    }
}

/// A complete run request: pipeline config plus data paths and process knobs.
/// The run id hashes only the parts that affect outputs (`pipeline`, `data`):
/// worker count and log level never change any artifact byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub data: DataPaths,
    pub workers: usize,
    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineConfig::default(),
            data: DataPaths::default(),
            workers: 1,
            log_level: "info".to_string(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Run id: hash of the output-affecting configuration.
    pub fn hash(&self) -> String {
        config_hash(&(&self.pipeline, &self.data))
    }

    pub fn load_data(&self) -> Result<PipelineData> {
        Ok(PipelineData {
            pool: corpus::load_plain(&self.data.pool)?,
            in_domain: corpus::load_plain(&self.data.in_domain)?,
            valid: corpus::load_plain(&self.data.valid)?,
            test: corpus::load_plain(&self.data.test)?,
        })
    }
}

/// Everything a run produces; [`PipelineOutput::persist`] lays it out as a
/// run directory.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub timings: Timings,
    pub bpe: Arc<BpeModel>,
    pub score_table: ScoreTable,
    pub selection: SelectionResult,
    /// Named model snapshots backing every reported number.
    pub checkpoints: Vec<(String, NeuralLm)>,
    /// Per-test-sentence losses per variant, for paired significance tests.
    pub test_losses: Vec<(String, Vec<f64>)>,
}

impl PipelineOutput {
    pub fn persist(&self, dir: &Path) -> Result<()> {
        let mk = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        mk(dir)?;
        mk(&dir.join("curves"))?;
        mk(&dir.join("checkpoints"))?;
        mk(&dir.join("losses"))?;
        self.report.save(&dir.join("report.json"))?;
        self.timings.save(&dir.join("timings.json"))?;
        self.bpe.save(&dir.join("bpe.txt"))?;
        self.score_table.write_tsv(&dir.join("scores.tsv"))?;
        self.selection.write(&dir.join("selection.idx"))?;
        for phase in &self.report.phases {
            phase.write_curve_csv(&dir.join("curves").join(format!("{}.csv", phase.name)))?;
        }
        for (name, model) in &self.checkpoints {
            model.save(&dir.join("checkpoints").join(format!("{name}.nnlm")))?;
        }
        for (variant, losses) in &self.test_losses {
            let table = ScoreTable::new(
                ScorerDescriptor::new("losses", variant.clone(), self.report.config_hash.clone()),
                losses.clone(),
            )?;
            table.write_tsv(&dir.join("losses").join(format!("{variant}.tsv")))?;
        }
        Ok(())
    }
}

struct Encodings {
    pool: TokenizedCorpus,
    in_domain: TokenizedCorpus,
    valid: TokenizedCorpus,
    test: TokenizedCorpus,
}

struct Probes {
    pool: TokenizedCorpus,
    in_domain: TokenizedCorpus,
    valid: TokenizedCorpus,
}

fn subsample(corpus: &TokenizedCorpus, cap: usize, seed: u64) -> TokenizedCorpus {
    if corpus.len() <= cap {
        return corpus.clone();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index_sample(&mut rng, corpus.len(), cap).into_vec();
    idx.sort_unstable();
    corpus.subset(&idx)
}

/// Single-cell run: adapt from the final pretrain checkpoint at the
/// configured selection size.
pub fn run_pipeline(
    config: &PipelineConfig,
    data: &PipelineData,
    workers: usize,
) -> Result<PipelineOutput> {
    let cells = run_matrix(
        config,
        &[config.pretrain.steps],
        &[config.selection],
        data,
        workers,
    )?;
    Ok(cells.into_iter().next().expect("one cell"))
}

/// Branch the adaptation from several pretrain checkpoints and selection
/// sizes. Pretraining runs once; each (checkpoint, size) cell selects, trains
/// the selection and matched-budget baseline arms, and fine-tunes both.
/// Requested checkpoint steps must lie on the pretrain snapshot schedule.
pub fn run_matrix(
    config: &PipelineConfig,
    checkpoint_steps: &[u64],
    sizes: &[SelectionSize],
    data: &PipelineData,
    workers: usize,
) -> Result<Vec<PipelineOutput>> {
    config.validate()?;
    data.validate()?;
    if checkpoint_steps.is_empty() || sizes.is_empty() {
        return Err(Error::config("matrix needs checkpoints and sizes"));
    }
    for &s in checkpoint_steps {
        let on_schedule = s == config.pretrain.steps
            || (s <= config.pretrain.steps && s % config.pretrain.checkpoint_interval == 0);
        if !on_schedule {
            return Err(Error::config(format!(
                "no pretrain checkpoint at step {s} (interval {}, budget {})",
                config.pretrain.checkpoint_interval, config.pretrain.steps
            )));
        }
    }
    let hash = config_hash(config);
    let seed = config.seed;
    let mut shared_timings = Timings::default();

    let t0 = Instant::now();
    let bpe = Arc::new(BpeModel::train(&data.pool, config.bpe_vocab_size)?);
    let enc = Encodings {
        pool: bpe.encode_corpus(&data.pool),
        in_domain: bpe.encode_corpus(&data.in_domain),
        valid: bpe.encode_corpus(&data.valid),
        test: bpe.encode_corpus(&data.test),
    };
    shared_timings.push("tokenize", t0.elapsed().as_secs_f64());

    let cap = config.eval_cap;
    let probes = Probes {
        pool: subsample(&enc.pool, cap, seed::derive(seed, streams::PROBE)),
        in_domain: subsample(&enc.in_domain, cap, seed::derive(seed, streams::PROBE + 1)),
        valid: subsample(&enc.valid, cap, seed::derive(seed, streams::PROBE + 2)),
    };

    // Shared pretraining.
    let t0 = Instant::now();
    let dims = ModelDims {
        vocab_size: bpe.vocab_size(),
        context: config.model.context,
        embed_dim: config.model.embed_dim,
        hidden_dim: config.model.hidden_dim,
    };
    let init = NeuralLm::init(dims, seed::derive(seed, streams::MODEL_INIT))?;
    let pool_all = ExamplePool::all(&enc.pool)?;
    let pretrain_evals = EvalSuite {
        train_probe: Some(&probes.pool),
        in_domain_train: Some(&probes.in_domain),
        valid: Some(&probes.valid),
    };
    let pretrain_out = lm::train(
        init,
        &pool_all,
        &config
            .pretrain
            .to_train_config(seed::derive(seed, streams::PRETRAIN), None),
        &pretrain_evals,
        Phase::Pretrain,
    )?;
    shared_timings.push("pretrain", t0.elapsed().as_secs_f64());

    // Scorers that ignore the model checkpoint are built and applied once.
    let t0 = Instant::now();
    let shared_table: Option<ScoreTable> = match &config.scorer {
        ScorerConfig::CdsNeural(_) => None,
        _ => {
            let scorer = build_static_scorer(config, &bpe, &enc, data, seed, &hash)?;
            Some(scoring::score_corpus(
                scorer.as_ref(),
                (&data.pool).into(),
                workers,
            )?)
        }
    };
    if shared_table.is_some() {
        shared_timings.push("score", t0.elapsed().as_secs_f64());
    }

    let mut outputs = Vec::with_capacity(checkpoint_steps.len() * sizes.len());
    for (ci, &branch_step) in checkpoint_steps.iter().enumerate() {
        let base = pretrain_out
            .checkpoints
            .iter()
            .find(|c| c.step == branch_step)
            .ok_or_else(|| {
                Error::config(format!("no pretrain checkpoint at step {branch_step}"))
            })?;
        for (si, &size) in sizes.iter().enumerate() {
            let cell_index = (ci * sizes.len() + si) as u64;
            let cell_seed = seed::derive(seed, streams::MATRIX.wrapping_add(cell_index));
            let cell = run_cell(CellContext {
                config,
                data,
                bpe: &bpe,
                enc: &enc,
                probes: &probes,
                pretrain: &pretrain_out,
                base,
                size,
                cell_seed,
                hash: &hash,
                workers,
                shared_table: shared_table.as_ref(),
                shared_timings: &shared_timings,
            })?;
            outputs.push(cell);
        }
    }
    Ok(outputs)
}

struct CellContext<'a> {
    config: &'a PipelineConfig,
    data: &'a PipelineData,
    bpe: &'a Arc<BpeModel>,
    enc: &'a Encodings,
    probes: &'a Probes,
    pretrain: &'a TrainOutcome<f64>,
    base: &'a Checkpoint<f64>,
    size: SelectionSize,
    cell_seed: u64,
    hash: &'a str,
    workers: usize,
    shared_table: Option<&'a ScoreTable>,
    shared_timings: &'a Timings,
}

fn run_cell(ctx: CellContext) -> Result<PipelineOutput> {
    let CellContext {
        config,
        data,
        bpe,
        enc,
        probes,
        pretrain,
        base,
        size,
        cell_seed,
        hash,
        workers,
        shared_table,
        shared_timings,
    } = ctx;
    let mut timings = shared_timings.clone();

    // Score the pool (checkpoint-dependent scorers only) and select.
    let t0 = Instant::now();
    let score_table = match shared_table {
        Some(t) => t.clone(),
        None => {
            let scorer = build_cell_scorer(config, bpe, enc, probes, &base.model, cell_seed, hash)?;
            let table = scoring::score_corpus(scorer.as_ref(), (&data.pool).into(), workers)?;
            timings.push("score", t0.elapsed().as_secs_f64());
            table
        }
    };
    let selection = select_top_n(&score_table, &SelectionSpec { size })?;

    // Selection arm and matched-budget baseline arm share one sampling
    // stream: selecting the whole pool reproduces the baseline exactly.
    let t0 = Instant::now();
    let sel_cfg = config
        .selection_train
        .to_train_config(seed::derive(cell_seed, streams::SELECTION), None);
    let selected_probe = {
        let sub = enc.pool.subset(&selection.indices);
        subsample(&sub, config.eval_cap, seed::derive(cell_seed, streams::PROBE + 3))
    };
    let sel_pool = ExamplePool::subset(&enc.pool, selection.indices.clone())?;
    let sel_evals = EvalSuite {
        train_probe: Some(&selected_probe),
        in_domain_train: Some(&probes.in_domain),
        valid: Some(&probes.valid),
    };
    let sel_out = lm::train(
        base.model.clone(),
        &sel_pool,
        &sel_cfg,
        &sel_evals,
        Phase::Selection,
    )?;
    timings.push("selection_train", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let pool_all = ExamplePool::all(&enc.pool)?;
    let ext_evals = EvalSuite {
        train_probe: Some(&probes.pool),
        in_domain_train: Some(&probes.in_domain),
        valid: Some(&probes.valid),
    };
    let ext_out = lm::train(
        base.model.clone(),
        &pool_all,
        &sel_cfg,
        &ext_evals,
        Phase::Pretrain,
    )?;
    timings.push("extension_train", t0.elapsed().as_secs_f64());

    let best_sel = sel_out.best_checkpoint().clone();
    let best_ext = ext_out.best_checkpoint().clone();

    // Fine-tune both arms on T with the learning-rate grid.
    let t0 = Instant::now();
    let t_pool = ExamplePool::all(&enc.in_domain)?;
    let ft_evals = EvalSuite {
        train_probe: Some(&probes.in_domain),
        in_domain_train: Some(&probes.in_domain),
        valid: Some(&probes.valid),
    };
    let (ft_baseline, lr_baseline) =
        finetune_grid(config, &best_ext.model, &t_pool, &ft_evals, cell_seed, 0)?;
    let (ft_selected, lr_selected) =
        finetune_grid(config, &best_sel.model, &t_pool, &ft_evals, cell_seed, 1)?;
    timings.push("finetune", t0.elapsed().as_secs_f64());

    // Evaluate all four variants on the same test set.
    let t0 = Instant::now();
    let variants: [(&str, &NeuralLm); 4] = [
        ("pt", &best_ext.model),
        ("pt_ft", &ft_baseline.model),
        ("pt_sel", &best_sel.model),
        ("pt_sel_ft", &ft_selected.model),
    ];
    let mut test_losses = Vec::new();
    let mut logppl = Vec::new();
    for (name, model) in variants {
        let losses = lm::sentence_losses(model, &enc.test);
        let total_tokens = enc.test.predicted_tokens() as f64;
        let total: f64 = enc
            .test
            .sentences
            .iter()
            .zip(&losses)
            .map(|(s, l)| l * (s.len() - 1) as f64)
            .sum();
        logppl.push(total / total_tokens);
        test_losses.push((name.to_string(), losses));
    }
    timings.push("test_eval", t0.elapsed().as_secs_f64());

    let phases = vec![
        phase_record("pretrain", pretrain),
        phase_record("extension", &ext_out),
        phase_record("selection", &sel_out),
        phase_record("finetune_baseline", &ft_baseline),
        phase_record("finetune_selected", &ft_selected),
    ];
    let diag = diagnostics(
        phases.iter().find(|p| p.name == "selection").unwrap(),
        phases.iter().find(|p| p.name == "finetune_selected").unwrap(),
    )?;

    let report = PipelineReport {
        config_hash: hash.to_string(),
        config: config.clone(),
        branch_step: base.step,
        selection: SelectionSummary {
            n: selection.n,
            threshold: selection.threshold,
            scorer: score_table.descriptor.clone(),
        },
        diagnostics: Some(diag),
        test_logppl: VariantLosses {
            pt: logppl[0],
            pt_ft: logppl[1],
            pt_sel: logppl[2],
            pt_sel_ft: logppl[3],
        },
        finetune_lr: (lr_baseline, lr_selected),
        steps: StepAccounting {
            pretrain: pretrain.steps_run,
            extension: ext_out.steps_run,
            selection: sel_out.steps_run,
            finetune_baseline: ft_baseline.steps_run,
            finetune_selected: ft_selected.steps_run,
        },
        loss_unit: "nats/token".to_string(),
        phases,
    };

    Ok(PipelineOutput {
        report,
        timings,
        bpe: bpe.clone(),
        score_table,
        selection,
        checkpoints: vec![
            ("pretrain_branch".to_string(), base.model.clone()),
            ("extension_best".to_string(), best_ext.model),
            ("selection_best".to_string(), best_sel.model),
            ("ft_baseline_best".to_string(), ft_baseline.model),
            ("ft_selected_best".to_string(), ft_selected.model),
        ],
        test_losses,
    })
}

fn phase_record(name: &str, out: &TrainOutcome<f64>) -> PhaseRecord {
    let best = out.best_checkpoint();
    PhaseRecord {
        name: name.to_string(),
        steps_run: out.steps_run,
        curve: out.curve.clone(),
        best_step: best.step,
        best_valid_loss: best.valid_loss,
    }
}

/// Grid fine-tuning: one run per learning-rate multiplier, all early-stopped
/// on validation loss; the best run wins (earlier grid entries on ties).
fn finetune_grid(
    config: &PipelineConfig,
    base: &NeuralLm,
    t_pool: &ExamplePool,
    evals: &EvalSuite,
    cell_seed: u64,
    arm: u64,
) -> Result<(TrainOutcome<f64>, f64)> {
    let ft = &config.finetune;
    let base_lr = config.finetune_base_lr();
    let mut best: Option<(TrainOutcome<f64>, f64, f64)> = None;
    for (i, &mult) in ft.lr_grid.iter().enumerate() {
        let lr = mult * base_lr;
        let cfg = lm::TrainConfig {
            steps: ft.steps,
            batch_size: ft.batch_size,
            lr,
            checkpoint_interval: ft.checkpoint_interval,
            seed: seed::derive(
                cell_seed,
                streams::FINETUNE.wrapping_add(arm * 16 + i as u64),
            ),
            patience: Some(ft.patience),
        };
        let out = lm::train(base.clone(), t_pool, &cfg, evals, Phase::Finetune)?;
        let loss = out
            .best_checkpoint()
            .valid_loss
            .ok_or_else(|| Error::config("finetune ran without a validation set"))?;
        if best.as_ref().map_or(true, |(_, _, b)| loss < *b) {
            best = Some((out, lr, loss));
        }
    }
    let (out, lr, _) = best.expect("lr grid is non-empty");
    Ok((out, lr))
}

/// Scorers that do not depend on the pretrained model: count-LM contrastive
/// and the discriminative classifier.
fn build_static_scorer(
    config: &PipelineConfig,
    bpe: &Arc<BpeModel>,
    enc: &Encodings,
    data: &PipelineData,
    seed: u64,
    hash: &str,
) -> Result<Box<dyn Scorer>> {
    match &config.scorer {
        ScorerConfig::CdsNgram(c) => {
            let v = bpe.vocab_size();
            let in_lm = CountNgramLm::train(&enc.in_domain, c.order, c.delta, v)?;
            let out_lm = CountNgramLm::train(&enc.pool, c.order, c.delta, v)?;
            Ok(Box::new(
                CdsScorer::new(
                    in_lm,
                    out_lm,
                    bpe.clone(),
                    ScorerDescriptor::new("cds", "ngram", hash),
                )
                .with_constant(c.constant)
                .with_length_normalize(c.length_normalize),
            ))
        }
        ScorerConfig::Dc(c) => {
            let clf = dc_train::<f64>(
                (&data.in_domain).into(),
                (&data.pool).into(),
                c.variant,
                c.negative_ratio,
                c.lambda,
                seed::derive(seed, streams::SCORER),
                bpe.clone(),
                hash,
            )?;
            Ok(Box::new(clf))
        }
        ScorerConfig::CdsNeural(_) => unreachable!("cds-neural is checkpoint-dependent"),
    }
}

/// Checkpoint-dependent scorer: contrastive scoring with the branch model
/// fine-tuned on the in-domain set.
fn build_cell_scorer(
    config: &PipelineConfig,
    bpe: &Arc<BpeModel>,
    enc: &Encodings,
    probes: &Probes,
    base: &NeuralLm,
    cell_seed: u64,
    hash: &str,
) -> Result<Box<dyn Scorer>> {
    match &config.scorer {
        ScorerConfig::CdsNeural(c) => {
            let cfg = lm::TrainConfig {
                steps: c.steps,
                batch_size: c.batch_size,
                lr: c.lr,
                checkpoint_interval: c.checkpoint_interval,
                seed: seed::derive(cell_seed, streams::SCORER),
                patience: c.patience,
            };
            let scorer = build_neural_cds(
                base,
                &enc.in_domain,
                &cfg,
                c.patience.is_some().then_some(&probes.valid),
                bpe.clone(),
                hash,
            )?;
            Ok(Box::new(
                scorer
                    .with_constant(c.constant)
                    .with_length_normalize(c.length_normalize),
            ))
        }
        _ => unreachable!("static scorers are shared"),
    }
}
