//! Subcommand implementations.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};

use dsel_core::corpus::{
    self, Corpus, CorpusFormat, LoadedCorpus, SplitSizes, SplitSpec, SyntheticDomainSpec,
    SyntheticWorld,
};
use dsel_core::evaluation;
use dsel_core::lm::{self, CountNgramLm, EvalSuite, ExamplePool, ModelDims, Phase, TrainConfig};
use dsel_core::pipeline::{self, PipelineReport, RunConfig};
use dsel_core::scoring::{
    self, CdsScorer, Conditioning, CorpusRef, DomainClassifier, Scorer, ScorerDescriptor,
    ScoreTable,
};
use dsel_core::selection::{self, SelectionSize, SelectionSpec};
use dsel_core::tokenizer::BpeModel;
use dsel_core::{seed, NeuralLm};

use crate::*;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Corpus { command } => match command {
            CorpusCmd::Synth(args) => corpus_synth(args),
            CorpusCmd::Split(args) => corpus_split(args),
        },
        Command::Bpe { command } => match command {
            BpeCmd::Train(args) => bpe_train(args),
            BpeCmd::Apply(args) => bpe_apply(args),
        },
        Command::Lm { command } => match command {
            LmCmd::Train(args) => lm_train(args),
            LmCmd::Eval(args) => lm_eval(args),
        },
        Command::Score { command } => match command {
            ScoreCmd::Cds(args) => score_cds(args),
            ScoreCmd::Dc(args) => score_dc(args),
        },
        Command::Clf { command } => match command {
            ClfCmd::Train(args) => clf_train(args),
        },
        Command::Select(args) => select(args),
        Command::Pipeline { command } => match command {
            PipelineCmd::Run(args) => pipeline_run(args),
            PipelineCmd::Matrix(args) => pipeline_matrix(args),
        },
        Command::Eval { command } => match command {
            EvalCmd::Accuracy(args) => eval_accuracy(args),
            EvalCmd::Quantile(args) => eval_quantile(args),
            EvalCmd::Bootstrap(args) => eval_bootstrap(args),
            EvalCmd::Speedup(args) => eval_speedup(args),
        },
        Command::Report { command } => match command {
            ReportCmd::Show(args) => report_show(args),
        },
    }
}

fn corpus_synth(args: SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let spec = SyntheticDomainSpec {
        vocab_size: args.vocab_size,
        transition_seed: args.transition_seed,
        mean_len: args.mean_len,
        divergence: args.divergence,
    };
    let world = SyntheticWorld::new(&spec, &spec)?;
    let gen = world.generate(args.n_in, args.n_out, args.contamination, args.seed)?;

    let dir = &args.out_dir;
    gen.in_domain.write_plain(&dir.join("t.txt"))?;
    gen.out_domain.write_plain(&dir.join("d.txt"))?;
    write_labels(&dir.join("d.labels"), &gen.oracle_labels)?;

    let mut rng = seed::rng(args.seed, seed::streams::SYNTH_HELDOUT);
    let valid = Corpus::from_lines(world.sample(true, args.n_valid, &mut rng))?;
    let test = Corpus::from_lines(world.sample(true, args.n_test, &mut rng))?;
    valid.write_plain(&dir.join("valid.txt"))?;
    test.write_plain(&dir.join("test.txt"))?;

    let eval_in = world.sample(true, args.n_eval, &mut rng);
    let eval_out = world.sample(false, args.n_eval, &mut rng);
    let labels: Vec<bool> = std::iter::repeat(true)
        .take(eval_in.len())
        .chain(std::iter::repeat(false).take(eval_out.len()))
        .collect();
    let eval_lines: Vec<String> = eval_in.into_iter().chain(eval_out).collect();
    Corpus::from_lines(eval_lines)?.write_plain(&dir.join("eval.txt"))?;
    write_labels(&dir.join("eval.labels"), &labels)?;

    println!(
        "synthesized {} in-domain, {} pool ({} contaminated), {} valid, {} test, {} eval lines -> {}",
        args.n_in,
        args.n_out,
        gen.oracle_labels.iter().filter(|&&l| l).count(),
        args.n_valid,
        args.n_test,
        2 * args.n_eval,
        dir.display()
    );
    Ok(())
}

fn write_labels(path: &Path, labels: &[bool]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 2);
    for &l in labels {
        out.push(if l { '1' } else { '0' });
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn read_labels(path: &Path) -> Result<Vec<bool>> {
    if !path.exists() {
        bail!(dsel_core::Error::MissingInput(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(i, l)| match l.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => bail!("{}:{}: label must be 0 or 1, got {other:?}", path.display(), i),
        })
        .collect()
}

fn parse_triple<T: std::str::FromStr>(s: &str, what: &str) -> Result<(T, T, T)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        bail!(dsel_core::Error::config(format!(
            "{what} expects three comma-separated values"
        )));
    }
    let mut vals = parts.iter().map(|p| p.trim().parse::<T>());
    match (vals.next(), vals.next(), vals.next()) {
        (Some(Ok(a)), Some(Ok(b)), Some(Ok(c))) => Ok((a, b, c)),
        _ => bail!(dsel_core::Error::config(format!("{what}: bad value in {s:?}"))),
    }
}

fn corpus_split(args: SplitArgs) -> Result<()> {
    let sizes = match (&args.fractions, &args.counts) {
        (Some(f), None) => {
            let (train, valid, test) = parse_triple::<f64>(f, "--fractions")?;
            SplitSizes::Fractions { train, valid, test }
        }
        (None, Some(c)) => {
            let (train, valid, test) = parse_triple::<usize>(c, "--counts")?;
            SplitSizes::Counts { train, valid, test }
        }
        _ => bail!(dsel_core::Error::config(
            "exactly one of --fractions or --counts is required"
        )),
    };
    let corpus = corpus::load_plain(&args.input)?;
    let spec = SplitSpec {
        seed: args.seed,
        sizes,
    };
    let (train, valid, test) = corpus::split(&corpus, &spec)?;
    for (part, name) in [(&train, "train"), (&valid, "valid"), (&test, "test")] {
        part.write_plain(Path::new(&format!("{}.{name}.txt", args.out_prefix)))?;
    }
    println!(
        "split {} lines into {}/{}/{} -> {}.{{train,valid,test}}.txt",
        corpus.len(),
        train.len(),
        valid.len(),
        test.len(),
        args.out_prefix
    );
    Ok(())
}

fn bpe_train(args: BpeTrainArgs) -> Result<()> {
    let corpus = corpus::load_plain(&args.corpus)?;
    let model = BpeModel::train(&corpus, args.vocab_size)?;
    model.save(&args.out)?;
    println!(
        "trained bpe: vocab {} ({} merges) -> {}",
        model.vocab_size(),
        model.merges().len(),
        args.out.display()
    );
    Ok(())
}

fn bpe_apply(args: BpeApplyArgs) -> Result<()> {
    let model = BpeModel::load(&args.model)?;
    let corpus = corpus::load_plain(&args.input)?;
    let mut out = String::new();
    for line in corpus.lines() {
        let ids = model.encode(line);
        let rendered: Vec<String> = ids.iter().map(|t| t.to_string()).collect();
        out.push_str(&rendered.join(" "));
        out.push('\n');
    }
    std::fs::write(&args.out, out)?;
    println!("encoded {} lines -> {}", corpus.len(), args.out.display());
    Ok(())
}

/// A stored language model of either family, detected by file magic.
enum AnyLm {
    Ngram(CountNgramLm),
    Neural(NeuralLm),
}

fn load_any_lm(path: &Path) -> Result<AnyLm> {
    if !path.exists() {
        bail!(dsel_core::Error::MissingInput(path.to_path_buf()));
    }
    let mut magic = [0u8; 8];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(path)?;
        let n = f.read(&mut magic)?;
        magic[n..].fill(0);
    }
    if &magic == b"nnlm v1\n" {
        Ok(AnyLm::Neural(NeuralLm::load(path)?))
    } else if magic.starts_with(b"ngram") {
        Ok(AnyLm::Ngram(CountNgramLm::load(path)?))
    } else {
        bail!(dsel_core::Error::artifact(
            path,
            "not a recognized language model file"
        ));
    }
}

fn lm_train(args: LmTrainArgs) -> Result<()> {
    let bpe = BpeModel::load(&args.bpe)?;
    let corpus = corpus::load_plain(&args.corpus)?;
    let tokens = bpe.encode_corpus(&corpus);
    match args.family.as_str() {
        "ngram" => {
            let model = CountNgramLm::train(&tokens, args.order, args.delta, bpe.vocab_size())?;
            model.save(&args.out)?;
            println!(
                "trained order-{} count lm on {} sentences -> {}",
                args.order,
                corpus.len(),
                args.out.display()
            );
        }
        "neural" => {
            let dims = ModelDims {
                vocab_size: bpe.vocab_size(),
                context: args.context,
                embed_dim: args.embed_dim,
                hidden_dim: args.hidden_dim,
            };
            let valid_tokens = args
                .valid
                .as_ref()
                .map(|p| corpus::load_plain(p).map(|c| bpe.encode_corpus(&c)))
                .transpose()?;
            // Curve probe: a fixed slice of the training corpus.
            let probe = tokens.subset(&(0..tokens.len().min(512)).collect::<Vec<_>>());
            let evals = EvalSuite {
                train_probe: Some(&probe),
                in_domain_train: None,
                valid: valid_tokens.as_ref(),
            };
            let cfg = TrainConfig {
                steps: args.steps,
                batch_size: args.batch_size,
                lr: args.lr,
                checkpoint_interval: args.checkpoint_interval,
                seed: seed::derive(args.seed, seed::streams::PRETRAIN),
                patience: args.patience,
            };
            let init = NeuralLm::init(dims, seed::derive(args.seed, seed::streams::MODEL_INIT))?;
            let pool = ExamplePool::all(&tokens)?;
            let out = lm::train(init, &pool, &cfg, &evals, Phase::Pretrain)?;
            out.model.save(&args.out)?;
            if let Some(curve_path) = &args.curve_out {
                let mut csv = String::from("step,train_loss,valid_loss\n");
                let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                for p in &out.curve {
                    csv.push_str(&format!(
                        "{},{},{}\n",
                        p.step,
                        fmt(p.train_loss),
                        fmt(p.valid_loss)
                    ));
                }
                std::fs::write(curve_path, csv)?;
            }
            println!(
                "trained neural lm for {} steps -> {}",
                out.steps_run,
                args.out.display()
            );
        }
        other => bail!(dsel_core::Error::config(format!(
            "unknown lm family {other:?} (ngram | neural)"
        ))),
    }
    Ok(())
}

fn lm_eval(args: LmEvalArgs) -> Result<()> {
    let bpe = BpeModel::load(&args.bpe)?;
    let corpus = corpus::load_plain(&args.corpus)?;
    let tokens = bpe.encode_corpus(&corpus);
    let (logppl, losses) = match load_any_lm(&args.model)? {
        AnyLm::Ngram(m) => (lm::logppl(&m, &tokens)?, lm::sentence_losses(&m, &tokens)),
        AnyLm::Neural(m) => (lm::logppl(&m, &tokens)?, lm::sentence_losses(&m, &tokens)),
    };
    println!("logppl\t{logppl}");
    if let Some(path) = &args.losses_out {
        let hash = pipeline::config_hash(&(
            args.model.display().to_string(),
            args.corpus.display().to_string(),
        ));
        ScoreTable::new(ScorerDescriptor::new("losses", "lm", hash), losses)?.write_tsv(path)?;
    }
    Ok(())
}

fn score_cds(args: ScoreCdsArgs) -> Result<()> {
    let bpe = Arc::new(BpeModel::load(&args.bpe)?);
    let corpus = corpus::load_plain(&args.corpus)?;
    let hash = pipeline::config_hash(&(
        args.in_model.display().to_string(),
        args.out_model.display().to_string(),
        args.constant,
        !args.no_length_norm,
    ));
    let scorer: Box<dyn Scorer> = match (load_any_lm(&args.in_model)?, load_any_lm(&args.out_model)?)
    {
        (AnyLm::Ngram(ind), AnyLm::Ngram(out)) => Box::new(
            CdsScorer::new(ind, out, bpe, ScorerDescriptor::new("cds", "ngram", &hash))
                .with_constant(args.constant)
                .with_length_normalize(!args.no_length_norm),
        ),
        (AnyLm::Neural(ind), AnyLm::Neural(out)) => Box::new(
            CdsScorer::new(ind, out, bpe, ScorerDescriptor::new("cds", "neural", &hash))
                .with_constant(args.constant)
                .with_length_normalize(!args.no_length_norm),
        ),
        _ => bail!(dsel_core::Error::config(
            "--in-model and --out-model must be the same model family"
        )),
    };
    let table = scoring::score_corpus(scorer.as_ref(), (&corpus).into(), args.workers.max(1))?;
    table.write_tsv(&args.out)?;
    println!("scored {} lines -> {}", table.len(), args.out.display());
    Ok(())
}

fn parse_format(s: &str) -> Result<CorpusFormat> {
    match s {
        "plain" => Ok(CorpusFormat::Plain),
        "tsv-parallel" => Ok(CorpusFormat::TsvParallel),
        "jsonl" => Ok(CorpusFormat::Jsonl),
        other => bail!(dsel_core::Error::config(format!(
            "unknown corpus format {other:?}"
        ))),
    }
}

fn clf_train(args: ClfTrainArgs) -> Result<()> {
    let format = parse_format(&args.format)?;
    let bpe = Arc::new(BpeModel::load(&args.bpe)?);
    let in_domain = corpus::load_corpus(&args.in_domain, format)?;
    let pool = corpus::load_corpus(&args.pool, format)?;
    let variant = Conditioning::parse(&args.variant)?;
    let hash = pipeline::config_hash(&(
        args.variant.clone(),
        args.negative_ratio,
        args.lambda,
        args.seed,
    ));
    let clf: DomainClassifier<f64> = scoring::dc_train(
        corpus_ref(&in_domain),
        corpus_ref(&pool),
        variant,
        args.negative_ratio,
        args.lambda,
        seed::derive(args.seed, seed::streams::SCORER),
        bpe,
        &hash,
    )?;
    clf.save(&args.out)?;
    println!(
        "trained {} classifier on {} positives -> {}",
        args.variant,
        in_domain.len(),
        args.out.display()
    );
    Ok(())
}

fn corpus_ref(loaded: &LoadedCorpus) -> CorpusRef<'_> {
    match loaded {
        LoadedCorpus::Mono(c) => c.into(),
        LoadedCorpus::Parallel(c) => c.into(),
    }
}

fn score_dc(args: ScoreDcArgs) -> Result<()> {
    let format = parse_format(&args.format)?;
    let bpe = Arc::new(BpeModel::load(&args.bpe)?);
    let clf = DomainClassifier::<f64>::load(&args.clf, bpe)?;
    let corpus = corpus::load_corpus(&args.corpus, format)?;
    let table = scoring::score_corpus(&clf, corpus_ref(&corpus), args.workers.max(1))?;
    table.write_tsv(&args.out)?;
    println!("scored {} lines -> {}", table.len(), args.out.display());
    Ok(())
}

fn select(args: SelectArgs) -> Result<()> {
    let table = ScoreTable::read_tsv(&args.scores)?;
    let spec = match (args.n, args.fraction) {
        (Some(n), None) => SelectionSpec::count(n),
        (None, Some(f)) => SelectionSpec::fraction(f),
        _ => bail!(dsel_core::Error::config(
            "exactly one of --n or --fraction is required"
        )),
    };
    let result = selection::select_top_n(&table, &spec)?;
    result.write(&args.out)?;
    println!(
        "selected {} of {} lines (threshold {}) -> {}",
        result.n,
        table.len(),
        result.threshold,
        args.out.display()
    );
    Ok(())
}

fn pipeline_run(args: PipelineRunArgs) -> Result<()> {
    let mut rc = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        rc.pipeline.seed = s;
    }
    if let Some(w) = args.workers {
        rc.workers = w;
    }
    let hash = rc.hash();
    let dir = args.out_dir.join(&hash);
    if dir.join("report.json").exists() && !args.force {
        println!("run {hash} already exists at {} (use --force to rerun)", dir.display());
        return Ok(());
    }
    let data = rc.load_data()?;
    eprintln!("running pipeline {hash} ...");
    let out = pipeline::run_pipeline(&rc.pipeline, &data, rc.workers.max(1))?;
    out.persist(&dir)?;
    rc.save(&dir.join("config.json"))?;
    print_report(&out.report);
    println!("artifacts -> {}", dir.display());
    Ok(())
}

fn parse_sizes(s: &str) -> Result<Vec<SelectionSize>> {
    s.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok.contains('.') {
                tok.parse::<f64>()
                    .map(SelectionSize::Fraction)
                    .map_err(|_| anyhow::anyhow!("bad size {tok:?}"))
            } else {
                tok.parse::<usize>()
                    .map(SelectionSize::Count)
                    .map_err(|_| anyhow::anyhow!("bad size {tok:?}"))
            }
        })
        .collect()
}

fn pipeline_matrix(args: PipelineMatrixArgs) -> Result<()> {
    let mut rc = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        rc.pipeline.seed = s;
    }
    if let Some(w) = args.workers {
        rc.workers = w;
    }
    let checkpoints: Vec<u64> = args
        .checkpoints
        .split(',')
        .map(|t| t.trim().parse::<u64>().context("bad checkpoint step"))
        .collect::<Result<_>>()?;
    let sizes = parse_sizes(&args.sizes)?;
    let hash = rc.hash();
    let dir = args.out_dir.join(format!("{hash}-matrix"));
    if dir.join("config.json").exists() && !args.force {
        println!(
            "matrix {hash} already exists at {} (use --force to rerun)",
            dir.display()
        );
        return Ok(());
    }
    let data = rc.load_data()?;
    eprintln!(
        "running {}x{} matrix {hash} ...",
        checkpoints.len(),
        sizes.len()
    );
    let cells = pipeline::run_matrix(&rc.pipeline, &checkpoints, &sizes, &data, rc.workers.max(1))?;
    std::fs::create_dir_all(&dir)?;
    rc.save(&dir.join("config.json"))?;
    for cell in &cells {
        let cell_dir = dir.join(format!(
            "cell_{}_{}",
            cell.report.branch_step, cell.report.selection.n
        ));
        cell.persist(&cell_dir)?;
        rc.save(&cell_dir.join("config.json"))?;
        println!(
            "cell branch={} n={}: PT {:.4}  PT+FT {:.4}  PT+Sel {:.4}  PT+Sel+FT {:.4}",
            cell.report.branch_step,
            cell.report.selection.n,
            cell.report.test_logppl.pt,
            cell.report.test_logppl.pt_ft,
            cell.report.test_logppl.pt_sel,
            cell.report.test_logppl.pt_sel_ft,
        );
    }
    println!("artifacts -> {}", dir.display());
    Ok(())
}

fn print_report(report: &PipelineReport) {
    println!("run {} (branch step {})", report.config_hash, report.branch_step);
    println!(
        "selection: n={} threshold={:.6} scorer={}:{}",
        report.selection.n,
        report.selection.threshold,
        report.selection.scorer.method,
        report.selection.scorer.variant
    );
    println!("phase               steps   best_step  best_valid");
    for p in &report.phases {
        println!(
            "{:<18} {:>6} {:>10}  {}",
            p.name,
            p.steps_run,
            p.best_step,
            p.best_valid_loss
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "-".into())
        );
    }
    let v = report.test_logppl;
    println!(
        "test logPPL ({}): PT {:.6}  PT+FT {:.6}  PT+Sel {:.6}  PT+Sel+FT {:.6}",
        report.loss_unit, v.pt, v.pt_ft, v.pt_sel, v.pt_sel_ft
    );
    if let Some(d) = report.diagnostics {
        println!(
            "diagnostics: selection_overfit_rate {:.6}  finetune_improvement_rate {:.6}",
            d.selection_overfit_rate, d.finetune_improvement_rate
        );
    }
    println!(
        "finetune lr: baseline {:.4}, selected {:.4}; total steps {}",
        report.finetune_lr.0,
        report.finetune_lr.1,
        report.steps.total()
    );
}

fn eval_accuracy(args: EvalAccuracyArgs) -> Result<()> {
    let table = ScoreTable::read_tsv(&args.scores)?;
    let labels = read_labels(&args.labels)?;
    let acc = evaluation::accuracy_from_scores(&table.scores, &labels, args.threshold)?;
    println!("accuracy\t{acc}");
    Ok(())
}

fn eval_quantile(args: EvalQuantileArgs) -> Result<()> {
    let pool = ScoreTable::read_tsv(&args.pool_scores)?;
    let in_scores = ScoreTable::read_tsv(&args.in_scores)?;
    let q = evaluation::average_quantile(&pool.scores, &in_scores.scores)?;
    println!("average_quantile\t{q}");
    Ok(())
}

fn eval_bootstrap(args: EvalBootstrapArgs) -> Result<()> {
    let base = ScoreTable::read_tsv(&args.base)?;
    let cand = ScoreTable::read_tsv(&args.cand)?;
    let fraction = evaluation::paired_bootstrap(
        &base.scores,
        &cand.scores,
        args.resamples,
        args.size,
        args.seed,
    )?;
    println!("fraction_base_worse\t{fraction}");
    Ok(())
}

fn read_curve_csv(path: &Path, column: &str) -> Result<Vec<(u64, f64)>> {
    if !path.exists() {
        bail!(dsel_core::Error::MissingInput(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| anyhow::anyhow!("{}: empty curve file", path.display()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let col = cols
        .iter()
        .position(|c| *c == column)
        .ok_or_else(|| anyhow::anyhow!("{}: no column {column:?}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            bail!("{}:{}: ragged row", path.display(), i + 2);
        }
        if fields[col].is_empty() {
            continue;
        }
        let step: u64 = fields[0]
            .parse()
            .with_context(|| format!("{}:{}: bad step", path.display(), i + 2))?;
        let loss: f64 = fields[col]
            .parse()
            .with_context(|| format!("{}:{}: bad loss", path.display(), i + 2))?;
        out.push((step, loss));
    }
    Ok(out)
}

fn eval_speedup(args: EvalSpeedupArgs) -> Result<()> {
    let reference = read_curve_csv(&args.reference, &args.column)?;
    let candidate = read_curve_csv(&args.candidate, &args.column)?;
    let reference = evaluation::best_so_far(&reference);
    let candidate = evaluation::best_so_far(&candidate);
    for (step, speedup) in evaluation::speedup_curve(&reference, &candidate)? {
        match speedup {
            evaluation::Speedup::Factor(f) => println!("{step}\t{f}"),
            evaluation::Speedup::Unreachable => println!("{step}\tunreachable"),
        }
    }
    Ok(())
}

fn report_show(args: ReportShowArgs) -> Result<()> {
    let dir = &args.run;
    let rc = RunConfig::load(&dir.join("config.json"))?;
    let report = PipelineReport::load(&dir.join("report.json"))?;
    let expected = pipeline::config_hash(&rc.pipeline);
    if report.config_hash != expected {
        bail!(
            "config hash mismatch: report carries {} but config.json hashes to {expected}",
            report.config_hash
        );
    }
    let scores_path = dir.join("scores.tsv");
    if scores_path.exists() {
        let table = ScoreTable::read_tsv(&scores_path)?;
        if table.descriptor.config_hash != expected {
            bail!(
                "config hash mismatch: scores.tsv carries {} but config.json hashes to {expected}",
                table.descriptor.config_hash
            );
        }
    }
    print_report(&report);
    Ok(())
}
