//! Forward-value oracles for tape operations. Reference numbers were
//! produced with a 50-digit decimal evaluation, independent of this
//! crate, and frozen here.

use numcore::{NumError, Tape, Tensor};

fn vec_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y} beyond {tol}");
    }
}

#[test]
fn softmax_of_equal_inputs_is_uniform() {
    let tape = Tape::new();
    let x = Tensor::constant(vec![5], vec![0.0; 5]).unwrap();
    let y = tape.softmax(&x).unwrap();
    assert_eq!(y.values(), vec![0.2; 5]);
}

#[test]
fn softmax_matches_high_precision_reference() {
    let tape = Tape::new();
    let x = Tensor::constant(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
    let y = tape.softmax(&x).unwrap().values();
    let expected = [
        0.090030573170380458,
        0.24472847105479765,
        0.6652409557748219,
    ];
    vec_close(&y, &expected, 1e-15);
    let sum: f64 = y.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
    assert!(y[0] < y[1] && y[1] < y[2]);
}

#[test]
fn softmax_survives_large_magnitude_inputs() {
    let tape = Tape::new();
    let x = Tensor::<f64>::constant(vec![2], vec![1000.0, 0.0]).unwrap();
    let y = tape.softmax(&x).unwrap().values();
    assert!(y.iter().all(|v| v.is_finite()));
    assert!((y[0] - 1.0).abs() < 1e-12);
    assert!(y[1] >= 0.0 && y[1] < 1e-300);
}

#[test]
fn softmax_rejects_empty_input() {
    let tape = Tape::<f64>::new();
    let x = Tensor::constant(vec![0], vec![]).unwrap();
    assert!(matches!(tape.softmax(&x), Err(NumError::EmptyInput { .. })));
}

#[test]
fn cross_entropy_of_perfect_prediction_is_floor_bounded() {
    let tape = Tape::new();
    let p = Tensor::<f64>::constant(vec![3], vec![1.0, 0.0, 0.0]).unwrap();
    let t = Tensor::<f64>::constant(vec![3], vec![1.0, 0.0, 0.0]).unwrap();
    let loss = tape.cross_entropy(&p, &t).unwrap().item();
    assert!(loss.abs() < 1e-12);
}

#[test]
fn cross_entropy_of_uniform_prediction_is_ln_class_count() {
    let tape = Tape::new();
    let p = Tensor::<f64>::constant(vec![5], vec![0.2; 5]).unwrap();
    let t = Tensor::constant(vec![5], vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    let loss = tape.cross_entropy(&p, &t).unwrap().item();
    assert!((loss - 1.6094379124341004).abs() < 1e-12);
}

#[test]
fn cross_entropy_clamps_zero_probability_at_floor() {
    let tape = Tape::new();
    let p = Tensor::<f64>::constant(vec![2], vec![1.0, 0.0]).unwrap();
    let t = Tensor::constant(vec![2], vec![0.0, 1.0]).unwrap();
    let loss = tape.cross_entropy(&p, &t).unwrap().item();
    // -ln(1e-12)
    assert!((loss - 27.631021115928548).abs() < 1e-9);
}

#[test]
fn cross_entropy_rejects_dimension_mismatch() {
    let tape = Tape::new();
    let p = Tensor::constant(vec![3], vec![0.5, 0.25, 0.25]).unwrap();
    let t = Tensor::<f64>::constant(vec![2], vec![1.0, 0.0]).unwrap();
    assert!(matches!(tape.cross_entropy(&p, &t), Err(NumError::ShapeMismatch { .. })));
}

#[test]
fn cross_entropy_rejects_unnormalized_prediction() {
    let tape = Tape::new();
    let p = Tensor::constant(vec![2], vec![0.9, 0.3]).unwrap();
    let t = Tensor::<f64>::constant(vec![2], vec![1.0, 0.0]).unwrap();
    assert!(matches!(tape.cross_entropy(&p, &t), Err(NumError::Contract { .. })));
}

#[test]
fn cross_entropy_rejects_non_one_hot_target() {
    let tape = Tape::new();
    let p = Tensor::constant(vec![2], vec![0.5, 0.5]).unwrap();
    let t = Tensor::constant(vec![2], vec![0.5, 0.5]).unwrap();
    assert!(matches!(tape.cross_entropy(&p, &t), Err(NumError::Contract { .. })));
}

#[test]
fn batch_mean_cross_entropy_equals_per_sample_mean() {
    let tape = Tape::new();
    let probs = [
        vec![0.7, 0.2, 0.1],
        vec![0.1, 0.8, 0.1],
        vec![0.3, 0.3, 0.4],
    ];
    let targets = [0usize, 1, 2];
    let mut losses = Vec::new();
    let mut expected = 0.0;
    for (p, &cls) in probs.iter().zip(&targets) {
        let pt = Tensor::<f64>::constant(vec![3], p.clone()).unwrap();
        let mut one_hot = vec![0.0; 3];
        one_hot[cls] = 1.0;
        let tt = Tensor::constant(vec![3], one_hot).unwrap();
        losses.push(tape.cross_entropy(&pt, &tt).unwrap());
        expected += -p[cls].ln();
    }
    expected /= 3.0;
    let stacked = tape.concat(&losses).unwrap();
    let mean = tape.mean(&stacked).unwrap().item();
    assert!((mean - expected).abs() < 1e-12);
}

#[test]
fn matmul_matches_hand_computation() {
    let tape = Tape::new();
    let a = Tensor::constant(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let b = Tensor::constant(vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
    let c = tape.matmul(&a, &b).unwrap();
    assert_eq!(c.shape(), vec![2, 2]);
    vec_close(&c.values(), &[58.0, 64.0, 139.0, 154.0], 0.0);
}

#[test]
fn matmul_rejects_inner_dimension_mismatch() {
    let tape = Tape::new();
    let a = Tensor::constant(vec![2, 3], vec![0.0; 6]).unwrap();
    let b = Tensor::constant(vec![2, 2], vec![0.0; 4]).unwrap();
    assert!(matches!(tape.matmul(&a, &b), Err(NumError::ShapeMismatch { .. })));
}

#[test]
fn cols_sum_equals_multi_hot_matvec() {
    let tape = Tape::new();
    let w = Tensor::constant(vec![2, 4], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
    let fast = tape.cols_sum(&w, &[1, 3]).unwrap();
    let multi_hot = Tensor::constant(vec![4], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
    let slow = tape.matvec(&w, &multi_hot).unwrap();
    assert_eq!(fast.values(), slow.values());
}

#[test]
fn concat_slice_roundtrip() {
    let tape = Tape::new();
    let a = Tensor::constant(vec![2], vec![1.0, 2.0]).unwrap();
    let b = Tensor::constant(vec![3], vec![3.0, 4.0, 5.0]).unwrap();
    let joined = tape.concat(&[a, b]).unwrap();
    assert_eq!(joined.values(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    let back = tape.slice(&joined, 2, 3).unwrap();
    assert_eq!(back.values(), vec![3.0, 4.0, 5.0]);
}

#[test]
fn elu_is_identity_above_zero_and_expm1_below() {
    let tape = Tape::new();
    let x = Tensor::constant(vec![3], vec![2.0, 0.0, -1.0]).unwrap();
    let y = tape.elu(&x).unwrap().values();
    assert_eq!(y[0], 2.0);
    assert_eq!(y[1], 0.0);
    assert!((y[2] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
}

#[test]
fn ops_reject_non_finite_results() {
    let tape = Tape::new();
    let big = Tensor::constant(vec![1], vec![1e308]).unwrap();
    let r = tape.mul(&big, &big);
    assert!(matches!(r, Err(NumError::NonFinite { .. })));
}
