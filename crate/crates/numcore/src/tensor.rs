use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::NumError;
use crate::scalar::Scalar;

/// Dense row-major tensor. Cheap to clone: clones share storage, so a
/// clone held by the tape sees parameter updates made through the
/// original handle.
///
/// `data` and `grad` live in separate cells so backward can read a
/// tensor's values while accumulating into its own gradient (an op may
/// use the same tensor for both operands).
pub struct Tensor<T: Scalar> {
    inner: Rc<Inner<T>>,
}

struct Inner<T> {
    shape: Vec<usize>,
    requires_grad: bool,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<T: Scalar> Tensor<T> {
    /// Leaf tensor outside any tape. `requires_grad` marks a trainable
    /// parameter; constants (inputs, targets) leave it false.
    pub fn leaf(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Result<Self, NumError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NumError::ShapeMismatch {
                op: "leaf",
                detail: format!("shape {:?} holds {} elements, data has {}", shape, numel, data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { op: "leaf" });
        }
        Ok(Tensor {
            inner: Rc::new(Inner {
                shape,
                requires_grad,
                data: RefCell::new(data),
                grad: RefCell::new(None),
            }),
        })
    }

    pub fn constant(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NumError> {
        Self::leaf(shape, data, false)
    }

    pub fn param(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NumError> {
        Self::leaf(shape, data, true)
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            inner: Rc::new(Inner {
                shape: vec![1],
                requires_grad: false,
                data: RefCell::new(vec![value]),
                grad: RefCell::new(None),
            }),
        }
    }

    pub fn zeros(shape: Vec<usize>, requires_grad: bool) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            inner: Rc::new(Inner {
                shape,
                requires_grad,
                data: RefCell::new(vec![T::zero(); numel]),
                grad: RefCell::new(None),
            }),
        }
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                shape,
                requires_grad,
                data: RefCell::new(data),
                grad: RefCell::new(None),
            }),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.shape.clone()
    }

    pub fn dims(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Borrow of the raw values; hold only briefly.
    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.inner.data.borrow()
    }

    pub fn values(&self) -> Vec<T> {
        self.inner.data.borrow().clone()
    }

    pub fn item(&self) -> T {
        let d = self.inner.data.borrow();
        debug_assert_eq!(d.len(), 1, "item() on non-scalar");
        d[0]
    }

    /// Replaces the stored values. Shape is fixed at construction.
    pub fn set_data(&self, data: Vec<T>) -> Result<(), NumError> {
        if data.len() != self.numel() {
            return Err(NumError::ShapeMismatch {
                op: "set_data",
                detail: format!("expected {} elements, got {}", self.numel(), data.len()),
            });
        }
        *self.inner.data.borrow_mut() = data;
        Ok(())
    }

    /// Gradient accumulated by the last backward passes, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    /// Gradient, treating "never touched" as zero.
    pub fn grad_or_zeros(&self) -> Vec<T> {
        self.inner
            .grad
            .borrow()
            .clone()
            .unwrap_or_else(|| vec![T::zero(); self.numel()])
    }

    pub fn set_grad(&self, grad: Option<Vec<T>>) -> Result<(), NumError> {
        if let Some(g) = &grad {
            if g.len() != self.numel() {
                return Err(NumError::ShapeMismatch {
                    op: "set_grad",
                    detail: format!("expected {} elements, got {}", self.numel(), g.len()),
                });
            }
        }
        *self.inner.grad.borrow_mut() = grad;
        Ok(())
    }

    pub fn zero_grad(&self) {
        let n = self.numel();
        *self.inner.grad.borrow_mut() = Some(vec![T::zero(); n]);
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[T]) {
        debug_assert_eq!(contribution.len(), self.numel());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contribution) {
                    *gi = *gi + *ci;
                }
            }
            None => *slot = Some(contribution.to_vec()),
        }
    }

    pub(crate) fn grad_clone(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    /// Identity of the underlying storage; two handles compare equal
    /// exactly when they share it.
    pub fn id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.borrow().iter().all(|v| v.is_finite())
    }

    pub fn grad_finite(&self) -> bool {
        match self.inner.grad.borrow().as_ref() {
            Some(g) => g.iter().all(|v| v.is_finite()),
            None => true,
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("data", &self.inner.data.borrow())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_rejects_length_mismatch() {
        let r = Tensor::<f64>::leaf(vec![2, 2], vec![1.0, 2.0, 3.0], false);
        assert!(matches!(r, Err(NumError::ShapeMismatch { .. })));
    }

    #[test]
    fn leaf_rejects_non_finite() {
        let r = Tensor::<f64>::leaf(vec![2], vec![1.0, f64::NAN], false);
        assert!(matches!(r, Err(NumError::NonFinite { .. })));
    }

    #[test]
    fn clones_share_storage() {
        let t = Tensor::<f64>::param(vec![2], vec![1.0, 2.0]).unwrap();
        let u = t.clone();
        t.set_data(vec![5.0, 6.0]).unwrap();
        assert_eq!(u.values(), vec![5.0, 6.0]);
        assert_eq!(t.id(), u.id());
    }

    #[test]
    fn grad_accumulates_across_calls() {
        let t = Tensor::<f64>::param(vec![2], vec![0.0, 0.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]);
        t.accumulate_grad(&[0.5, 0.5]);
        assert_eq!(t.grad().unwrap(), vec![1.5, 2.5]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), vec![0.0, 0.0]);
    }
}
