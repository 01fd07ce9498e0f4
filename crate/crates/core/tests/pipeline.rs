//! End-to-end pipeline contract tests on a small synthetic world.

use dsel_core::corpus::{Corpus, SyntheticDomainSpec, SyntheticWorld};
use dsel_core::lm::logppl;
use dsel_core::pipeline::{
    run_matrix, run_pipeline, CdsNeuralConfig, ModelConfig, PipelineConfig, PipelineData,
    ScorerConfig, StepsConfig,
};
use dsel_core::selection::SelectionSize;
use dsel_core::NeuralLm;

fn spec(divergence: f64) -> SyntheticDomainSpec {
    SyntheticDomainSpec {
        vocab_size: 20,
        transition_seed: 5,
        mean_len: 7.0,
        divergence,
    }
}

fn small_data(seed: u64) -> PipelineData {
    let world = SyntheticWorld::new(&spec(0.9), &spec(0.9)).unwrap();
    let gen = world.generate(120, 800, 0.05, seed).unwrap();
    let mut rng = dsel_core::seed::rng(seed, 101);
    let valid = Corpus::from_lines(world.sample(true, 100, &mut rng)).unwrap();
    let test = Corpus::from_lines(world.sample(true, 150, &mut rng)).unwrap();
    PipelineData {
        pool: gen.out_domain,
        in_domain: gen.in_domain,
        valid,
        test,
    }
}

fn small_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        bpe_vocab_size: 64,
        model: ModelConfig {
            context: 2,
            embed_dim: 8,
            hidden_dim: 16,
        },
        pretrain: StepsConfig {
            steps: 300,
            batch_size: 16,
            lr: 0.3,
            checkpoint_interval: 50,
        },
        selection: SelectionSize::Fraction(0.1),
        selection_train: StepsConfig {
            steps: 150,
            batch_size: 16,
            lr: 0.3,
            checkpoint_interval: 50,
        },
        eval_cap: 128,
        ..PipelineConfig::default()
    }
}

#[test]
fn degenerate_phases_collapse_to_pretrain_only() {
    let data = small_data(1);
    let mut config = small_config(1);
    config.selection_train.steps = 0;
    config.finetune.steps = 0;
    let out = run_pipeline(&config, &data, 1).unwrap();
    let v = out.report.test_logppl;
    assert_eq!(v.pt, v.pt_ft);
    assert_eq!(v.pt, v.pt_sel);
    assert_eq!(v.pt, v.pt_sel_ft);
    assert_eq!(out.report.steps.selection, 0);
    assert_eq!(out.report.steps.finetune_selected, 0);
}

#[test]
fn selecting_the_whole_pool_reproduces_the_baseline_arm() {
    let data = small_data(2);
    let mut config = small_config(2);
    config.selection = SelectionSize::Fraction(1.0);
    let out = run_pipeline(&config, &data, 1).unwrap();
    assert_eq!(out.selection.indices.len(), data.pool.len());
    // Same data, same stream: the selection arm and the matched-budget
    // baseline arm are the same computation.
    assert_eq!(v(&out, "pt"), v(&out, "pt_sel"));
    let sel = out.report.phase("selection").unwrap();
    let ext = out.report.phase("extension").unwrap();
    assert_eq!(sel.best_valid_loss, ext.best_valid_loss);
    assert_eq!(sel.steps_run, ext.steps_run);
    fn v(out: &dsel_core::pipeline::PipelineOutput, name: &str) -> f64 {
        match name {
            "pt" => out.report.test_logppl.pt,
            _ => out.report.test_logppl.pt_sel,
        }
    }
}

#[test]
fn single_cell_matrix_equals_run_pipeline() {
    let data = small_data(3);
    let config = small_config(3);
    let single = run_pipeline(&config, &data, 1).unwrap();
    let cells = run_matrix(
        &config,
        &[config.pretrain.steps],
        &[config.selection],
        &data,
        1,
    )
    .unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(single.report, cells[0].report);
    assert_eq!(single.score_table, cells[0].score_table);
    assert_eq!(single.selection.indices, cells[0].selection.indices);
}

#[test]
fn later_checkpoints_never_have_worse_best_so_far_loss() {
    let data = small_data(4);
    let config = small_config(4);
    let cells = run_matrix(
        &config,
        &[100, 300],
        &[SelectionSize::Fraction(0.1)],
        &data,
        1,
    )
    .unwrap();
    assert_eq!(cells.len(), 2);
    // Both cells share one pretraining run; compare its best-so-far valid
    // loss at the two branch points.
    let curve = &cells[0].report.phase("pretrain").unwrap().curve;
    let best_at = |step: u64| {
        curve
            .iter()
            .filter(|p| p.step <= step)
            .filter_map(|p| p.valid_loss)
            .fold(f64::INFINITY, f64::min)
    };
    assert!(best_at(300) <= best_at(100));
    assert_eq!(cells[0].report.branch_step, 100);
    assert_eq!(cells[1].report.branch_step, 300);
}

#[test]
fn matrix_rejects_off_schedule_checkpoints() {
    let data = small_data(5);
    let config = small_config(5);
    let err = run_matrix(
        &config,
        &[75],
        &[SelectionSize::Fraction(0.1)],
        &data,
        1,
    )
    .unwrap_err();
    assert!(err.to_string().contains("checkpoint"));
}

#[test]
fn reports_are_deterministic() {
    let data = small_data(6);
    let mut config = small_config(6);
    config.scorer = ScorerConfig::CdsNeural(CdsNeuralConfig {
        steps: 60,
        batch_size: 16,
        lr: 0.3,
        checkpoint_interval: 20,
        patience: None,
        constant: 0.0,
        length_normalize: true,
    });
    let a = run_pipeline(&config, &data, 1).unwrap();
    let b = run_pipeline(&config, &data, 4).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.score_table, b.score_table);
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
}

#[test]
fn finetune_starts_from_best_selection_checkpoint() {
    let data = small_data(7);
    let config = small_config(7);
    let out = run_pipeline(&config, &data, 1).unwrap();
    let sel = out.report.phase("selection").unwrap();
    let ft = out.report.phase("finetune_selected").unwrap();
    // The fine-tune curve opens at the selection phase's best checkpoint:
    // same step, same validation loss.
    assert_eq!(ft.curve[0].step, sel.best_step);
    assert_eq!(ft.curve[0].valid_loss, sel.best_valid_loss);
}

#[test]
fn stored_checkpoints_reproduce_reported_losses() {
    let data = small_data(8);
    let config = small_config(8);
    let out = run_pipeline(&config, &data, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.persist(dir.path()).unwrap();

    let tok_test = out.bpe.encode_corpus(&data.test);
    for (name, expected) in [
        ("extension_best", out.report.test_logppl.pt),
        ("ft_baseline_best", out.report.test_logppl.pt_ft),
        ("selection_best", out.report.test_logppl.pt_sel),
        ("ft_selected_best", out.report.test_logppl.pt_sel_ft),
    ] {
        let path = dir.path().join("checkpoints").join(format!("{name}.nnlm"));
        let model = NeuralLm::load(&path).unwrap();
        let got = logppl(&model, &tok_test).unwrap();
        assert!(
            (got - expected).abs() < 1e-12,
            "{name}: {got} vs {expected}"
        );
    }
    // Step accounting covers exactly what ran.
    let s = &out.report.steps;
    assert_eq!(
        s.total(),
        s.pretrain + s.extension + s.selection + s.finetune_baseline + s.finetune_selected
    );
    // Artifacts carry the config hash.
    let scores = std::fs::read_to_string(dir.path().join("scores.tsv")).unwrap();
    assert!(scores.starts_with(&format!(
        "# scorer=cds:ngram config={}",
        out.report.config_hash
    )));
}

#[test]
fn dc_scorer_pipeline_runs() {
    let data = small_data(9);
    let mut config = small_config(9);
    config.scorer = ScorerConfig::Dc(Default::default());
    let out = run_pipeline(&config, &data, 2).unwrap();
    assert_eq!(out.score_table.descriptor.method, "dc");
    assert!(out.report.test_logppl.pt_sel_ft.is_finite());
}
