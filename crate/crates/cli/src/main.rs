//! `dsel`: domain adaptation by data selection.
//!
//! Subcommands cover every stage of the workflow: synthesizing and splitting
//! corpora, training tokenizers and language models, scoring pools, selecting
//! subsets, running the full pipeline, and the evaluation metrics. All
//! randomness flows from explicit seeds, and `--workers` only changes
//! wall-clock time, never output bytes.
//!
//! Exit codes: 0 ok, 2 usage or bad config, 3 missing input, 4 numerical
//! abort, 1 anything else.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dsel", version, about = "Domain adaptation by data selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus synthesis and splitting
    Corpus {
        #[command(subcommand)]
        command: CorpusCmd,
    },
    /// Byte-pair encoding models
    Bpe {
        #[command(subcommand)]
        command: BpeCmd,
    },
    /// Language model training and evaluation
    Lm {
        #[command(subcommand)]
        command: LmCmd,
    },
    /// Score an out-of-domain pool
    Score {
        #[command(subcommand)]
        command: ScoreCmd,
    },
    /// Domain classifiers
    Clf {
        #[command(subcommand)]
        command: ClfCmd,
    },
    /// Select the top-n lines of a score table
    Select(SelectArgs),
    /// The three-phase adaptation pipeline
    Pipeline {
        #[command(subcommand)]
        command: PipelineCmd,
    },
    /// Evaluation metrics
    Eval {
        #[command(subcommand)]
        command: EvalCmd,
    },
    /// Inspect stored runs
    Report {
        #[command(subcommand)]
        command: ReportCmd,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Generate a synthetic two-domain corpus set
    Synth(SynthArgs),
    /// Split a corpus into train/valid/test
    Split(SplitArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (t.txt, d.txt, d.labels, valid.txt, test.txt,
    /// eval.txt, eval.labels)
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Tokens per domain vocabulary
    #[arg(long, default_value_t = 60)]
    vocab_size: usize,
    /// Mean sentence length
    #[arg(long, default_value_t = 9.0)]
    mean_len: f64,
    /// Domain divergence in [0, 1]
    #[arg(long, default_value_t = 0.9)]
    divergence: f64,
    /// Seed of the shared transition structure
    #[arg(long, default_value_t = 7)]
    transition_seed: u64,
    /// In-domain lines (T)
    #[arg(long, default_value_t = 500)]
    n_in: usize,
    /// Out-of-domain pool lines (D)
    #[arg(long, default_value_t = 20_000)]
    n_out: usize,
    /// Fraction of D drawn from the in-domain chain
    #[arg(long, default_value_t = 0.05)]
    contamination: f64,
    /// In-domain validation lines
    #[arg(long, default_value_t = 500)]
    n_valid: usize,
    /// In-domain test lines
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    /// Labeled held-out lines per domain for classifier evaluation
    #[arg(long, default_value_t = 500)]
    n_eval: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// train,valid,test fractions summing to 1 (e.g. 0.8,0.1,0.1)
    #[arg(long, value_name = "F,F,F", conflicts_with = "counts")]
    fractions: Option<String>,
    /// Absolute train,valid,test counts
    #[arg(long, value_name = "N,N,N")]
    counts: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes <prefix>.train.txt, <prefix>.valid.txt, <prefix>.test.txt
    #[arg(long, value_name = "PREFIX")]
    out_prefix: String,
}

#[derive(Subcommand)]
enum BpeCmd {
    /// Learn a merge table from a corpus
    Train(BpeTrainArgs),
    /// Encode a corpus to token-id lines
    Apply(BpeApplyArgs),
}

#[derive(Args)]
struct BpeTrainArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, default_value_t = 1000)]
    vocab_size: usize,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct BpeApplyArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum LmCmd {
    /// Train a count n-gram or neural n-gram model
    Train(LmTrainArgs),
    /// Mean per-token NLL of a corpus under a model
    Eval(LmEvalArgs),
}

#[derive(Args)]
struct LmTrainArgs {
    /// ngram | neural
    #[arg(long)]
    family: String,
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    bpe: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// n-gram order (ngram family)
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Absolute discount (ngram family)
    #[arg(long, default_value_t = 0.75)]
    delta: f64,
    #[arg(long, default_value_t = 3)]
    context: usize,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 2000)]
    steps: u64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.3)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    checkpoint_interval: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Validation corpus; enables early stopping with --patience
    #[arg(long, value_name = "FILE")]
    valid: Option<PathBuf>,
    /// Evaluations without improvement before stopping
    #[arg(long)]
    patience: Option<u32>,
    /// Write the loss curve as CSV (step,train_loss,valid_loss)
    #[arg(long, value_name = "FILE")]
    curve_out: Option<PathBuf>,
}

#[derive(Args)]
struct LmEvalArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    bpe: PathBuf,
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Also write per-sentence losses as TSV
    #[arg(long, value_name = "FILE")]
    losses_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScoreCmd {
    /// Contrastive scoring from two language models
    Cds(ScoreCdsArgs),
    /// Classifier scoring
    Dc(ScoreDcArgs),
}

#[derive(Args)]
struct ScoreCdsArgs {
    /// In-domain model (count n-gram or neural checkpoint)
    #[arg(long, value_name = "FILE")]
    in_model: PathBuf,
    /// Out-of-domain model of the same family
    #[arg(long, value_name = "FILE")]
    out_model: PathBuf,
    #[arg(long, value_name = "FILE")]
    bpe: PathBuf,
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Additive constant C
    #[arg(long, default_value_t = 0.0)]
    constant: f64,
    /// Raw log-likelihood gaps instead of per-token ones
    #[arg(long)]
    no_length_norm: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct ScoreDcArgs {
    #[arg(long, value_name = "FILE")]
    clf: PathBuf,
    #[arg(long, value_name = "FILE")]
    bpe: PathBuf,
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// plain | tsv-parallel | jsonl
    #[arg(long, default_value = "plain")]
    format: String,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum ClfCmd {
    /// Train a logistic-regression domain classifier
    Train(ClfTrainArgs),
}

#[derive(Args)]
struct ClfTrainArgs {
    /// In-domain corpus (positives)
    #[arg(long, value_name = "FILE")]
    in_domain: PathBuf,
    /// Out-of-domain pool (negatives are sampled from it)
    #[arg(long, value_name = "FILE")]
    pool: PathBuf,
    /// plain | tsv-parallel | jsonl
    #[arg(long, default_value = "plain")]
    format: String,
    /// source | target | concat | mean
    #[arg(long, default_value = "source")]
    variant: String,
    #[arg(long, default_value_t = 1)]
    negative_ratio: usize,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    bpe: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,
    /// Absolute selection size
    #[arg(long, conflicts_with = "fraction")]
    n: Option<usize>,
    /// Fractional selection size in (0, 1]
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// One full pretrain/select/fine-tune run
    Run(PipelineRunArgs),
    /// Branch from several pretrain checkpoints and selection sizes
    Matrix(PipelineMatrixArgs),
}

#[derive(Args)]
struct PipelineRunArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config worker count
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out_dir: PathBuf,
    /// Re-run even if this config's run directory already exists
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct PipelineMatrixArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Pretrain steps to branch from, comma separated
    #[arg(long, value_name = "S,S,..")]
    checkpoints: String,
    /// Selection sizes, comma separated; integers are counts, decimals in
    /// (0,1] are fractions
    #[arg(long, value_name = "X,X,..")]
    sizes: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Binary accuracy of scores against 0/1 labels
    Accuracy(EvalAccuracyArgs),
    /// Average quantile of in-domain scores among ranked pool scores
    Quantile(EvalQuantileArgs),
    /// Paired bootstrap comparison of two per-sentence loss files
    Bootstrap(EvalBootstrapArgs),
    /// Training speedup of a candidate loss curve over a reference
    Speedup(EvalSpeedupArgs),
}

#[derive(Args)]
struct EvalAccuracyArgs {
    /// Score table TSV aligned with the labels file
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,
    /// One 0/1 label per line
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
}

#[derive(Args)]
struct EvalQuantileArgs {
    /// Scores of the out-of-domain pool
    #[arg(long, value_name = "FILE")]
    pool_scores: PathBuf,
    /// Scores of held-out in-domain lines
    #[arg(long, value_name = "FILE")]
    in_scores: PathBuf,
}

#[derive(Args)]
struct EvalBootstrapArgs {
    /// Per-sentence losses of the baseline system
    #[arg(long, value_name = "FILE")]
    base: PathBuf,
    /// Per-sentence losses of the candidate system
    #[arg(long, value_name = "FILE")]
    cand: PathBuf,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Sentences per resample
    #[arg(long, default_value_t = 10_000)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalSpeedupArgs {
    /// Reference curve CSV (pretrain+finetune arm)
    #[arg(long, value_name = "FILE")]
    reference: PathBuf,
    /// Candidate curve CSV
    #[arg(long, value_name = "FILE")]
    candidate: PathBuf,
    /// Loss column to read
    #[arg(long, default_value = "valid_loss")]
    column: String,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Print a stored run, refusing mismatched config hashes
    Show(ReportShowArgs),
}

#[derive(Args)]
struct ReportShowArgs {
    /// Run directory written by `pipeline run`
    #[arg(long, value_name = "DIR")]
    run: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            eprintln!("error[{kind}]: {err:#}");
            ExitCode::from(code)
        }
    }
}

fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    match err.downcast_ref::<dsel_core::Error>() {
        Some(dsel_core::Error::MissingInput(_)) => ("missing-input", 3),
        Some(dsel_core::Error::Numerics { .. }) => ("numerical-abort", 4),
        Some(dsel_core::Error::Config(_)) => ("config", 2),
        Some(dsel_core::Error::Ingest { .. }) => ("ingest", 1),
        Some(dsel_core::Error::Artifact { .. }) => ("artifact", 1),
        Some(dsel_core::Error::Io { .. }) => ("io", 1),
        None => ("failure", 1),
    }
}
