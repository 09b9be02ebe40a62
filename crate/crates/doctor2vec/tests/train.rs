use doctor2vec::data::{split_trial_disjoint, Corpus, SplitSets};
use doctor2vec::model::{EnrollmentModel, ModelConfig, ModelDims};
use doctor2vec::syngen::{generate_corpus, GenConfig};
use doctor2vec::text::TextEmbedder;
use doctor2vec::train::{collect_outputs, train_model, TrainConfig};

fn small_setup() -> (Corpus, SplitSets) {
    let cfg = GenConfig {
        n_doctors: 40,
        n_trials: 10,
        n_patients_per_doctor: (2, 4),
        n_visits_per_patient: (2, 3),
        vocab_sizes: (30, 15, 40),
        seed: 11,
        ..GenConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap().corpus;
    let splits = split_trial_disjoint(&corpus, (0.6, 0.2, 0.2), 1).unwrap();
    (corpus, splits)
}

fn small_model(corpus: &Corpus, init_seed: u64) -> EnrollmentModel {
    let cfg = ModelConfig {
        visit_embed_dim: 4,
        seq_hidden: 3,
        query_dim: 4,
        memory_dim: 4,
        text_dim: 8,
        cat_widths: vec![6, 5],
        mem_hidden: vec![6],
        k_max: 4,
        gen_iterations: 1,
        identity_generalization: false,
    };
    EnrollmentModel::new(cfg, ModelDims::from_corpus(corpus), init_seed).unwrap()
}

#[test]
fn same_seed_gives_identical_logs_and_losses() {
    let (corpus, splits) = small_setup();
    let text = TextEmbedder::hashed(8);
    let cfg = TrainConfig { max_epochs: 3, batch_size: 64, seed: 5, ..TrainConfig::default() };

    let model_a = small_model(&corpus, 2);
    let report_a = train_model(&model_a, &corpus, &splits, &text, &cfg).unwrap();
    let model_b = small_model(&corpus, 2);
    let report_b = train_model(&model_b, &corpus, &splits, &text, &cfg).unwrap();

    assert_eq!(report_a.log, report_b.log);
    assert_eq!(report_a.epoch_losses, report_b.epoch_losses);
    assert_eq!(report_a.best_epoch, report_b.best_epoch);
    for ((na, ta), (nb, tb)) in model_a.params.iter().zip(model_b.params.iter()) {
        assert_eq!(na, nb);
        assert_eq!(ta.values(), tb.values(), "parameter {na} diverged between runs");
    }
}

#[test]
fn zero_learning_rate_is_a_parameter_noop() {
    let (corpus, splits) = small_setup();
    let text = TextEmbedder::hashed(8);
    let model = small_model(&corpus, 3);
    let before = model.params.snapshot();
    let cfg = TrainConfig {
        max_epochs: 2,
        batch_size: 64,
        learning_rate: 0.0,
        seed: 5,
        ..TrainConfig::default()
    };
    train_model(&model, &corpus, &splits, &text, &cfg).unwrap();
    for ((name, after), (_, b)) in model.params.iter().zip(&before) {
        assert_eq!(&after.values(), b, "parameter {name} moved at learning rate zero");
    }
}

#[test]
fn training_reduces_loss_on_a_small_corpus() {
    let (corpus, splits) = small_setup();
    let text = TextEmbedder::hashed(8);
    let model = small_model(&corpus, 4);
    let cfg = TrainConfig { max_epochs: 8, batch_size: 64, seed: 5, ..TrainConfig::default() };
    let report = train_model(&model, &corpus, &splits, &text, &cfg).unwrap();
    let first = report.epoch_losses[0];
    let last = *report.epoch_losses.last().unwrap();
    assert!(
        last < first,
        "loss failed to descend: first {first}, last {last}"
    );
}

#[test]
fn selected_parameters_reproduce_the_best_validation_score() {
    let (corpus, splits) = small_setup();
    let text = TextEmbedder::hashed(8);
    let model = small_model(&corpus, 6);
    let cfg = TrainConfig { max_epochs: 4, batch_size: 64, seed: 9, ..TrainConfig::default() };
    let report = train_model(&model, &corpus, &splits, &text, &cfg).unwrap();
    assert!(report.best_val_score.is_finite());
    let outputs = collect_outputs(&model, &corpus, &splits.validation, &text).unwrap();
    let rescored = outputs.macro_pr_auc().unwrap();
    assert!(
        (rescored - report.best_val_score).abs() < 1e-12,
        "restored parameters score {rescored}, training reported {}",
        report.best_val_score
    );
}

#[test]
fn log_reports_one_line_per_epoch_plus_selection() {
    let (corpus, splits) = small_setup();
    let text = TextEmbedder::hashed(8);
    let model = small_model(&corpus, 8);
    let cfg = TrainConfig { max_epochs: 3, batch_size: 64, seed: 2, ..TrainConfig::default() };
    let report = train_model(&model, &corpus, &splits, &text, &cfg).unwrap();
    let lines: Vec<&str> = report.log.lines().collect();
    assert_eq!(lines.len(), 4);
    for (e, line) in lines[..3].iter().enumerate() {
        assert!(line.starts_with(&format!("epoch {e} loss ")), "unexpected log line: {line}");
    }
    assert!(lines[3].starts_with("selected epoch "));
}
