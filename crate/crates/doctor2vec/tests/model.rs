use doctor2vec::data::{Corpus, Sample};
use doctor2vec::model::{joint_loss, DoctorMemory, EnrollmentModel, ModelConfig, ModelDims};
use doctor2vec::syngen::{generate_corpus, GenConfig};
use doctor2vec::text::TextEmbedder;
use numcore::{finite_diff_check, Tape64, Tensor64};

fn toy_corpus() -> Corpus {
    let cfg = GenConfig {
        n_doctors: 40,
        n_trials: 10,
        n_patients_per_doctor: (4, 6),
        n_visits_per_patient: (2, 4),
        vocab_sizes: (30, 15, 40),
        seed: 5,
        ..GenConfig::default()
    };
    generate_corpus(&cfg).unwrap().corpus
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        visit_embed_dim: 4,
        seq_hidden: 3,
        query_dim: 4,
        memory_dim: 4,
        text_dim: 8,
        cat_widths: vec![6, 5],
        mem_hidden: vec![6],
        k_max: 6,
        gen_iterations: 1,
        identity_generalization: false,
    }
}

/// The four samples pairing the two best-covered doctors with two
/// trials; richer patient panels keep every gradient entry resolvable
/// by central differences.
fn toy_batch(corpus: &Corpus) -> Vec<Sample> {
    let mut by_patients: Vec<_> = corpus.doctors.iter().collect();
    by_patients.sort_by_key(|d| std::cmp::Reverse(d.patients.len()));
    let doctors = [&by_patients[0].doctor_id, &by_patients[1].doctor_id];
    let trials = [&corpus.trials[0].trial_id, &corpus.trials[1].trial_id];
    corpus
        .samples
        .iter()
        .filter(|s| doctors.contains(&&s.doctor_id) && trials.contains(&&s.trial_id))
        .cloned()
        .collect()
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let corpus = toy_corpus();
    let model = EnrollmentModel::new(toy_config(), ModelDims::from_corpus(&corpus), 7).unwrap();
    let text = TextEmbedder::hashed(8);

    let batch = toy_batch(&corpus);
    assert_eq!(batch.len(), 4);
    let report = finite_diff_check(&model.params, 6e-4, |tape| {
        let mut probs = Vec::new();
        let mut rates = Vec::new();
        let mut bins = Vec::new();
        let mut targets = Vec::new();
        for s in &batch {
            let doctor = corpus.doctor(&s.doctor_id).unwrap();
            let trial = corpus.trial(&s.trial_id).unwrap();
            let memory = model.build_memory(tape, doctor, &corpus).unwrap();
            let q = model.encode_trial(tape, trial, &corpus, &text).unwrap();
            let pred = model.predict(tape, &memory, &q, &doctor.static_features).unwrap();
            probs.push(pred.class_probs);
            rates.push(pred.rate);
            bins.push(s.label.bin);
            targets.push(s.label.normalized_rate);
        }
        Ok(joint_loss(tape, &probs, &bins, &rates, &targets).unwrap())
    })
    .unwrap();
    assert!(
        report.max_rel_error < 1e-5,
        "max rel error {} at {}[{}]",
        report.max_rel_error,
        report.worst_param,
        report.worst_index
    );
}

#[test]
fn memory_attention_is_normalized_and_output_stays_in_convex_hull() {
    let corpus = toy_corpus();
    let model = EnrollmentModel::new(toy_config(), ModelDims::from_corpus(&corpus), 5).unwrap();
    let text = TextEmbedder::hashed(8);
    let tape = Tape64::new();
    for doctor in corpus.doctors.iter().take(5) {
        let memory = model.build_memory(&tape, doctor, &corpus).unwrap();
        for trial in corpus.trials.iter().take(3) {
            let q = model.encode_trial(&tape, trial, &corpus, &text).unwrap();
            let (doc_emb, attention) = model.query_memory(&tape, &memory, &q).unwrap();
            let a = attention.values();
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(a.iter().all(|&w| w >= 0.0));
            // each output coordinate must lie inside the write-row range
            let k = memory.write_rows.len();
            let d = doc_emb.numel();
            for j in 0..d {
                let coords: Vec<f64> = (0..k).map(|i| memory.write_rows[i].values()[j]).collect();
                let lo = coords.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = coords.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = doc_emb.values()[j];
                assert!(
                    v >= lo - 1e-12 && v <= hi + 1e-12,
                    "coordinate {j} escaped the hull: {v} not in [{lo}, {hi}]"
                );
            }
        }
    }
}

#[test]
fn identity_memory_is_patient_order_invariant() {
    let corpus = toy_corpus();
    let mut cfg = toy_config();
    cfg.identity_generalization = true;
    let model = EnrollmentModel::new(cfg, ModelDims::from_corpus(&corpus), 5).unwrap();
    let text = TextEmbedder::hashed(8);
    let doctor = corpus.doctors.iter().find(|d| d.patients.len() >= 2).unwrap();
    let mut permuted = doctor.clone();
    permuted.patients.reverse();

    let tape = Tape64::new();
    let trial = &corpus.trials[0];
    let q = model.encode_trial(&tape, trial, &corpus, &text).unwrap();
    let m1 = model.build_memory(&tape, doctor, &corpus).unwrap();
    let m2 = model.build_memory(&tape, &permuted, &corpus).unwrap();
    let p1 = model.predict(&tape, &m1, &q, &doctor.static_features).unwrap();
    let p2 = model.predict(&tape, &m2, &q, &doctor.static_features).unwrap();
    for (a, b) in p1.class_probs.values().iter().zip(p2.class_probs.values()) {
        assert!((a - b).abs() <= 1e-10, "class prob moved under permutation: {a} vs {b}");
    }
    assert!((p1.rate.item() - p2.rate.item()).abs() <= 1e-10);
    // the recurrent generalization cell is order-sensitive by design
    let rec = EnrollmentModel::new(toy_config(), ModelDims::from_corpus(&corpus), 5).unwrap();
    let m3 = rec.build_memory(&tape, doctor, &corpus).unwrap();
    let m4 = rec.build_memory(&tape, &permuted, &corpus).unwrap();
    let p3 = rec.predict(&tape, &m3, &q, &doctor.static_features).unwrap();
    let p4 = rec.predict(&tape, &m4, &q, &doctor.static_features).unwrap();
    assert_ne!(p3.class_probs.values(), p4.class_probs.values());
}

#[test]
fn aligned_slot_wins_attention_and_flipping_query_flips_argmax() {
    let corpus = toy_corpus();
    let model = EnrollmentModel::new(toy_config(), ModelDims::from_corpus(&corpus), 5).unwrap();
    let tape = Tape64::new();
    let q = Tensor64::constant(vec![4], vec![0.9, -0.4, 0.2, 0.7]).unwrap();
    // project the query by hand so slots can be built around it
    let wq = model.params.get("mem.w_q").unwrap().values();
    let mut v = vec![0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            v[i] += wq[i * 4 + j] * q.values()[j];
        }
    }
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    let rows = vec![
        Tensor64::constant(vec![4], v.clone()).unwrap(),
        Tensor64::constant(vec![4], neg).unwrap(),
    ];
    let memory = DoctorMemory {
        write_rows: rows.clone(),
        generalized_rows: rows,
        patient_positions: vec![0, 1],
    };
    let (_, attention) = model.query_memory(&tape, &memory, &q).unwrap();
    assert!(attention.values()[0] > attention.values()[1]);

    let q_flipped = Tensor64::constant(vec![4], q.values().iter().map(|x| -x).collect()).unwrap();
    let (_, flipped) = model.query_memory(&tape, &memory, &q_flipped).unwrap();
    assert!(flipped.values()[1] > flipped.values()[0]);
}
