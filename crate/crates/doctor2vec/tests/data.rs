use doctor2vec::data::{
    bin_rate, compute_enrollment_rate, labels_from_raw, load_corpus, normalize_rates,
    save_corpus, split_trial_disjoint,
};
use doctor2vec::syngen::{generate_corpus, GenConfig};
use proptest::prelude::*;

fn small_corpus() -> doctor2vec::data::Corpus {
    let cfg = GenConfig {
        n_doctors: 40,
        n_trials: 10,
        seed: 11,
        ..GenConfig::default()
    };
    generate_corpus(&cfg).unwrap().corpus
}

#[test]
fn enrollment_rate_formula() {
    assert_eq!(compute_enrollment_rate(12, 2, 5.0).unwrap(), 2.0);
    assert_eq!(compute_enrollment_rate(7, 7, 3.0).unwrap(), 0.0);
    assert_eq!(compute_enrollment_rate(5, 1, 0.5).unwrap(), 8.0);
}

#[test]
fn enrollment_rate_rejects_invalid() {
    assert!(compute_enrollment_rate(3, 4, 1.0).is_err());
    assert!(compute_enrollment_rate(3, 1, 0.0).is_err());
    assert!(compute_enrollment_rate(3, 1, -2.0).is_err());
}

#[test]
fn normalize_examples() {
    assert_eq!(normalize_rates(&[2.0, 0.0, 1.0]).unwrap(), vec![1.0, 0.0, 0.5]);
    assert_eq!(normalize_rates(&[3.0]).unwrap(), vec![0.5]);
    assert_eq!(normalize_rates(&[4.0, 4.0]).unwrap(), vec![0.5, 0.5]);
    assert!(normalize_rates(&[]).is_err());
}

#[test]
fn bin_boundaries() {
    assert_eq!(bin_rate(0.0).unwrap(), 0);
    assert_eq!(bin_rate(0.45).unwrap(), 2);
    assert_eq!(bin_rate(0.2).unwrap(), 1);
    assert_eq!(bin_rate(0.4).unwrap(), 2);
    assert_eq!(bin_rate(0.6).unwrap(), 3);
    assert_eq!(bin_rate(0.8).unwrap(), 4);
    assert_eq!(bin_rate(1.0).unwrap(), 4);
    assert!(bin_rate(-0.01).is_err());
    assert!(bin_rate(1.01).is_err());
    assert!(bin_rate(f64::NAN).is_err());
}

#[test]
fn labels_attain_bounds_when_distinct() {
    let labels = labels_from_raw(&[0.3, 0.9, 0.5, 0.1]).unwrap();
    let norms: Vec<f64> = labels.iter().map(|l| l.normalized_rate).collect();
    assert!(norms.iter().any(|&n| n == 0.0));
    assert!(norms.iter().any(|&n| n == 1.0));
    assert!(norms.iter().all(|&n| (0.0..=1.0).contains(&n)));
}

#[test]
fn split_sizes_and_disjointness() {
    let corpus = small_corpus();
    let split = split_trial_disjoint(&corpus, (0.7, 0.2, 0.1), 3).unwrap();
    assert_eq!(split.train_trials.len(), 7);
    assert_eq!(split.test_trials.len(), 2);
    assert_eq!(split.validation_trials.len(), 1);
    assert!(split.train_trials.is_disjoint(&split.test_trials));
    assert!(split.train_trials.is_disjoint(&split.validation_trials));
    assert!(split.test_trials.is_disjoint(&split.validation_trials));
    let total = split.train.len() + split.test.len() + split.validation.len();
    assert_eq!(total, corpus.samples.len());
    // all samples of one trial travel together
    for &i in &split.train {
        assert!(split.train_trials.contains(&corpus.samples[i].trial_id));
    }
}

#[test]
fn split_is_deterministic_and_seed_sensitive() {
    let corpus = small_corpus();
    let a = split_trial_disjoint(&corpus, (0.7, 0.2, 0.1), 5).unwrap();
    let b = split_trial_disjoint(&corpus, (0.7, 0.2, 0.1), 5).unwrap();
    assert_eq!(a.train_trials, b.train_trials);
    assert_eq!(a.test, b.test);
    let c = split_trial_disjoint(&corpus, (0.7, 0.2, 0.1), 6).unwrap();
    assert!(a.train_trials != c.train_trials || a.test_trials != c.test_trials);
}

#[test]
fn split_rejects_bad_inputs() {
    let corpus = small_corpus();
    assert!(split_trial_disjoint(&corpus, (0.5, 0.2, 0.1), 1).is_err());
    let mut tiny = corpus.clone();
    tiny.trials.truncate(5);
    tiny.samples.retain(|s| tiny.trials.iter().any(|t| t.trial_id == s.trial_id));
    assert!(split_trial_disjoint(&tiny, (0.7, 0.2, 0.1), 1).is_err());
}

#[test]
fn corpus_roundtrip_is_byte_identical() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("c1.d2v");
    let p2 = dir.path().join("c2.d2v");
    save_corpus(&corpus, &p1).unwrap();
    let loaded = load_corpus(&p1).unwrap();
    assert_eq!(loaded, corpus);
    save_corpus(&loaded, &p2).unwrap();
    let b1 = std::fs::read(&p1).unwrap();
    let b2 = std::fs::read(&p2).unwrap();
    assert_eq!(b1, b2);
}

#[test]
fn load_rejects_bin_tampering() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.d2v");
    save_corpus(&corpus, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    // flip one sample's bin so it no longer matches its normalized rate
    let tampered = text.replacen("\"bin\":2", "\"bin\":4", 1);
    assert_ne!(text, tampered);
    std::fs::write(&path, tampered).unwrap();
    assert!(load_corpus(&path).is_err());
}

proptest! {
    #[test]
    fn normalized_rates_stay_in_unit_interval(raws in proptest::collection::vec(0.0f64..100.0, 1..50)) {
        let norm = normalize_rates(&raws).unwrap();
        prop_assert!(norm.iter().all(|&n| (0.0..=1.0).contains(&n)));
        let distinct = raws.iter().any(|&r| r != raws[0]);
        if distinct {
            prop_assert!(norm.iter().any(|&n| n == 0.0));
            prop_assert!(norm.iter().any(|&n| n == 1.0));
        } else {
            prop_assert!(norm.iter().all(|&n| n == 0.5));
        }
    }

    #[test]
    fn binning_is_order_preserving(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bin_rate(lo).unwrap() <= bin_rate(hi).unwrap());
    }
}
