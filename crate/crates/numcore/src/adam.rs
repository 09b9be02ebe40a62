use crate::error::NumError;
use crate::params::ParamSet;
use crate::scalar::{lit, Scalar};

/// Adam hyperparameters. `decay` shrinks the learning rate by a factor
/// of (1 - decay) at every epoch boundary; the default pairs with the
/// usual 0.98-per-epoch schedule.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, decay: 0.02 }
    }
}

/// First and second moment estimates per parameter, in registration
/// order, plus the shared step counter and current learning rate.
pub struct AdamState<T: Scalar> {
    beta1: T,
    beta2: T,
    epsilon: T,
    decay: T,
    learning_rate: T,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    shapes: Vec<(String, usize)>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        let mut shapes = Vec::with_capacity(params.len());
        for (name, t) in params.iter() {
            m.push(vec![T::zero(); t.numel()]);
            v.push(vec![T::zero(); t.numel()]);
            shapes.push((name.to_string(), t.numel()));
        }
        AdamState {
            beta1: lit(config.beta1),
            beta2: lit(config.beta2),
            epsilon: lit(config.epsilon),
            decay: lit(config.decay),
            learning_rate: lit(config.learning_rate),
            step: 0,
            m,
            v,
            shapes,
        }
    }

    pub fn learning_rate(&self) -> T {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over every parameter in registration
    /// order. Every parameter must carry a gradient; gradients are
    /// zeroed after the update so the next tape starts clean.
    pub fn step(&mut self, params: &ParamSet<T>) -> Result<(), NumError> {
        self.check_match(params)?;
        self.step += 1;
        let one = T::one();
        let b1 = self.beta1;
        let b2 = self.beta2;
        let corr1 = one - b1.powi(self.step as i32);
        let corr2 = one - b2.powi(self.step as i32);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        for (idx, (name, tensor)) in params.iter().enumerate() {
            let grad = tensor
                .grad()
                .ok_or_else(|| NumError::MissingGrad { name: name.to_string() })?;
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let mut values = tensor.values();
            for i in 0..grad.len() {
                m[i] = b1 * m[i] + (one - b1) * grad[i];
                v[i] = b2 * v[i] + (one - b2) * grad[i] * grad[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                values[i] = values[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
            tensor.set_data(values)?;
            tensor.zero_grad();
        }
        Ok(())
    }

    /// Applies the per-epoch multiplicative learning-rate decay.
    pub fn end_epoch(&mut self) {
        self.learning_rate = self.learning_rate * (T::one() - self.decay);
    }

    fn check_match(&self, params: &ParamSet<T>) -> Result<(), NumError> {
        if self.shapes.len() != params.len() {
            return Err(NumError::StateMismatch {
                detail: format!(
                    "state tracks {} tensors, set has {}",
                    self.shapes.len(),
                    params.len()
                ),
            });
        }
        for ((name, numel), (own_name, tensor)) in self.shapes.iter().zip(params.iter()) {
            if name != own_name || *numel != tensor.numel() {
                return Err(NumError::StateMismatch {
                    detail: format!(
                        "state entry {:?}/{} vs set {:?}/{}",
                        name,
                        numel,
                        own_name,
                        tensor.numel()
                    ),
                });
            }
        }
        Ok(())
    }
}
