// scratch probe: full training run on the default synthetic corpus,
// printing the learning curve and test macro PR-AUC. env overrides:
// DECAY LR EPOCHS MEMDIM QDIM TEXTDIM VISIT SEQH CONC NOISE SEED INIT
use std::time::Instant;

use doctor2vec::data::split_trial_disjoint;
use doctor2vec::model::{EnrollmentModel, ModelConfig, ModelDims};
use doctor2vec::syngen::{generate_corpus, GenConfig};
use doctor2vec::text::TextEmbedder;
use doctor2vec::train::{collect_outputs, train_model, TrainConfig};

fn envf(key: &str, default: f64) -> f64 {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}
fn envu(key: &str, default: usize) -> usize {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let t0 = Instant::now();
    let mut gc = GenConfig::default();
    gc.seed = envu("SEED", 7) as u64;
    gc.noise_std = envf("NOISE", gc.noise_std);
    gc.patient_concentration = envf("CONC", gc.patient_concentration);
    let gen = generate_corpus(&gc).expect("generate");
    let corpus = gen.corpus;
    println!(
        "corpus: {} doctors {} trials {} samples ({:.1}s, {} attempts)",
        corpus.doctors.len(),
        corpus.trials.len(),
        corpus.samples.len(),
        t0.elapsed().as_secs_f64(),
        gen.attempts,
    );
    let split = split_trial_disjoint(&corpus, (0.7, 0.2, 0.1), gc.seed).expect("split");
    println!(
        "splits: {} train {} test {} val samples",
        split.train.len(),
        split.test.len(),
        split.validation.len()
    );

    let mut mc = ModelConfig::desk();
    mc.memory_dim = envu("MEMDIM", mc.memory_dim);
    mc.query_dim = envu("QDIM", mc.query_dim);
    mc.text_dim = envu("TEXTDIM", mc.text_dim);
    mc.visit_embed_dim = envu("VISIT", mc.visit_embed_dim);
    mc.seq_hidden = envu("SEQH", mc.seq_hidden);
    if let Ok(v) = std::env::var("CATW") {
        mc.cat_widths = v.split(',').map(|s| s.parse().unwrap()).collect();
    }
    if let Ok(v) = std::env::var("MEMH") {
        mc.mem_hidden = v.split(',').map(|s| s.parse().unwrap()).collect();
    }
    mc.identity_generalization = envu("IDGEN", 0) == 1;
    println!("model config: {mc:?}");
    let embedder = TextEmbedder::hashed(mc.text_dim);
    let model =
        EnrollmentModel::new(mc, ModelDims::from_corpus(&corpus), envu("INIT", 7) as u64)
            .expect("model");

    let mut tc = TrainConfig::default();
    tc.max_epochs = envu("EPOCHS", 100);
    tc.seed = gc.seed;
    tc.learning_rate = envf("LR", tc.learning_rate);
    tc.lr_decay = envf("DECAY", tc.lr_decay);

    let t1 = Instant::now();
    let report = train_model(&model, &corpus, &split, &embedder, &tc).expect("train");
    println!("train {:.1}s", t1.elapsed().as_secs_f64());
    for (i, line) in report.log.lines().enumerate() {
        if i % 5 == 0 || line.starts_with("selected") {
            println!("  {line}");
        }
    }
    let losses = &report.epoch_losses;
    if losses.len() > 50 {
        println!(
            "loss[0] {:.4} loss[50] {:.4} ratio {:.3}",
            losses[0],
            losses[50],
            losses[50] / losses[0]
        );
    }

    let outputs = collect_outputs(&model, &corpus, &split.test, &embedder).expect("eval");
    println!("test macro pr_auc {:.4}", outputs.macro_pr_auc().expect("auc"));
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
