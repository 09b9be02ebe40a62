//! Backward-pass policies: seeding, zero gradients for disconnected
//! tensors, single-use tapes, accumulation across tapes.

use numcore::{NumError, Tape, Tensor};

#[test]
fn sum_backward_gives_unit_gradients() {
    let tape = Tape::new();
    let x = Tensor::param(vec![4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
    let loss = tape.sum(&x).unwrap();
    tape.backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
}

#[test]
fn tanh_product_matches_closed_form() {
    let tape = Tape::new();
    let x = Tensor::param(vec![1], vec![0.5]).unwrap();
    let t = tape.tanh(&x).unwrap();
    let loss = tape.mul(&t, &x).unwrap();
    tape.backward(&loss).unwrap();
    let th: f64 = 0.5f64.tanh();
    let expected = th + 0.5 * (1.0 - th * th);
    let got = x.grad().unwrap()[0];
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn disconnected_parameter_keeps_zero_gradient() {
    let tape = Tape::new();
    let x = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
    let unused = Tensor::param(vec![2], vec![3.0, 4.0]).unwrap();
    let loss = tape.sum(&x).unwrap();
    tape.backward(&loss).unwrap();
    assert!(unused.grad().is_none());
    assert_eq!(unused.grad_or_zeros(), vec![0.0, 0.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let tape = Tape::new();
    let x = Tensor::param(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
    let y = tape.tanh(&x).unwrap();
    assert!(matches!(tape.backward(&y), Err(NumError::NotScalar { .. })));
}

#[test]
fn second_backward_on_same_tape_is_rejected() {
    let tape = Tape::new();
    let x = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
    let loss = tape.sum(&x).unwrap();
    tape.backward(&loss).unwrap();
    assert!(matches!(tape.backward(&loss), Err(NumError::DoubleBackward)));
}

#[test]
fn gradients_accumulate_across_tapes_until_zeroed() {
    let x = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
    for _ in 0..2 {
        let tape = Tape::new();
        let loss = tape.sum(&x).unwrap();
        tape.backward(&loss).unwrap();
    }
    assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    x.zero_grad();
    assert_eq!(x.grad().unwrap(), vec![0.0, 0.0]);
}

#[test]
fn fan_out_accumulates_both_paths() {
    // loss = sum(x) + mean(x): grad = 1 + 1/n
    let tape = Tape::new();
    let x = Tensor::<f64>::param(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let s = tape.sum(&x).unwrap();
    let m = tape.mean(&x).unwrap();
    let loss = tape.add(&s, &m).unwrap();
    tape.backward(&loss).unwrap();
    for g in x.grad().unwrap() {
        assert!((g - 1.25).abs() < 1e-15);
    }
}

#[test]
fn constants_receive_no_gradient() {
    let tape = Tape::new();
    let x = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
    let c = Tensor::constant(vec![2], vec![5.0, 6.0]).unwrap();
    let y = tape.mul(&x, &c).unwrap();
    let loss = tape.sum(&y).unwrap();
    tape.backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![5.0, 6.0]);
    assert!(c.grad().is_none());
}
