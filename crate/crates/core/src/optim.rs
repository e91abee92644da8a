//! Adam optimizer and the step learning-rate schedule.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::model::Param;
use crate::Scalar;

/// Adam hyperparameters beyond the learning rate. Defaults are the standard
/// 0.9 / 0.999 / 1e-8.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction:
///
/// ```text
/// m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
/// theta <- theta - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
/// ```
///
/// Moment buffers are allocated on the first step from the parameter shapes;
/// the step counter `t` advances by exactly one per call. Gradients are taken
/// by value and dropped inside the step, so they cannot be accumulated twice.
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    t: u64,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Self::with_hyper(lr, AdamHyper::default())
    }

    pub fn with_hyper(lr: T, hyper: AdamHyper) -> Self {
        Adam {
            lr,
            beta1: T::from_f64_lossy(hyper.beta1),
            beta2: T::from_f64_lossy(hyper.beta2),
            epsilon: T::from_f64_lossy(hyper.epsilon),
            t: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: T) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update to `params` from `grads` (one gradient per
    /// parameter, shapes matching exactly).
    pub fn step(&mut self, params: &mut [Param<T>], grads: Vec<Tensor<T>>) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Usage(format!(
                "step needs one gradient per parameter: {} params, {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads.iter()) {
            if p.value.shape() != g.shape() {
                return Err(Error::Usage(format!(
                    "gradient shape {:?} does not match parameter '{}' {:?}",
                    g.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.second_moment = self.first_moment.clone();
        } else if self.first_moment.len() != params.len() {
            return Err(Error::Usage(
                "optimizer state was initialized for a different parameter set".into(),
            ));
        }

        self.t += 1;
        let one = T::one();
        let bias1 = one - self.beta1.powi(self.t as i32);
        let bias2 = one - self.beta2.powi(self.t as i32);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let theta = p.value.data_mut();
            let m = m.data_mut();
            let v = v.data_mut();
            for k in 0..theta.len() {
                let grad = g.data()[k];
                m[k] = self.beta1 * m[k] + (one - self.beta1) * grad;
                v[k] = self.beta2 * v[k] + (one - self.beta2) * grad * grad;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                theta[k] = theta[k] - self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Piecewise-constant step schedule:
/// `lr(epoch) = base_lr * decay_factor^floor(epoch / decay_every)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, decay_every: usize, decay_factor: f64) -> Result<Self> {
        // Zero is allowed as a deliberate no-learning baseline.
        if base_lr < 0.0 {
            return Err(Error::Config(format!(
                "base_lr must be non-negative, got {base_lr}"
            )));
        }
        if decay_every == 0 {
            return Err(Error::Config("decay_every must be positive".into()));
        }
        if !(decay_factor > 0.0 && decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must be in (0, 1], got {decay_factor}"
            )));
        }
        Ok(LrSchedule { base_lr, decay_every, decay_factor })
    }

    /// Constant learning rate (decay factor 1).
    pub fn constant(base_lr: f64) -> Result<Self> {
        Self::new(base_lr, 1, 1.0)
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.base_lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, LayerSpec, NetworkSpec};

    fn single_param(value: f64) -> Vec<Param<f64>> {
        vec![Param {
            name: "theta".into(),
            value: Tensor::scalar(value),
        }]
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = single_param(1.5);
        let mut adam = Adam::new(0.001);
        adam.step(&mut params, vec![Tensor::scalar(0.0)]).unwrap();
        assert_eq!(params[0].value.data()[0], 1.5);
        assert_eq!(adam.step_count(), 1);
        adam.step(&mut params, vec![Tensor::scalar(0.0)]).unwrap();
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // With g = 1: m_hat = 1, v_hat = 1, so the update is lr / (1 + eps).
        let mut params = single_param(1.0);
        let mut adam = Adam::new(0.001);
        adam.step(&mut params, vec![Tensor::scalar(1.0)]).unwrap();
        let expect = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((params[0].value.data()[0] - expect).abs() < 1e-15);
        assert!((1.0 - params[0].value.data()[0] - 0.001).abs() < 1e-6);
    }

    #[test]
    fn converges_on_a_convex_quadratic() {
        // f(theta) = theta^2, gradient 2*theta.
        let mut params = single_param(1.0);
        let mut adam = Adam::new(0.015);
        let mut losses = Vec::new();
        for _ in 0..100 {
            let theta = params[0].value.data()[0];
            losses.push(theta * theta);
            adam.step(&mut params, vec![Tensor::scalar(2.0 * theta)]).unwrap();
        }
        let theta = params[0].value.data()[0];
        let final_loss = theta * theta;
        assert!(final_loss < 0.01 * losses[0], "final {final_loss}");
        // Strict descent after the initial transient.
        for k in 5..losses.len() - 1 {
            assert!(losses[k + 1] < losses[k], "not descending at step {k}");
        }
    }

    #[test]
    fn negating_gradients_negates_updates() {
        let grads = [0.37, -1.2, 5.0e-3];
        for &g in &grads {
            let mut up = single_param(2.0);
            let mut down = single_param(2.0);
            Adam::new(0.01).step(&mut up, vec![Tensor::scalar(g)]).unwrap();
            Adam::new(0.01).step(&mut down, vec![Tensor::scalar(-g)]).unwrap();
            let delta_up = up[0].value.data()[0] - 2.0;
            let delta_down = down[0].value.data()[0] - 2.0;
            assert!((delta_up + delta_down).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_state_and_gradients_update_bitwise_identically() {
        let grad = Tensor::new(vec![3], vec![0.1f64, -0.7, 2.3]).unwrap();
        let make = || {
            vec![Param {
                name: "w".into(),
                value: Tensor::new(vec![3], vec![1.0f64, 2.0, 3.0]).unwrap(),
            }]
        };
        let mut a = make();
        let mut b = make();
        let mut oa = Adam::new(0.003);
        let mut ob = Adam::new(0.003);
        for _ in 0..5 {
            oa.step(&mut a, vec![grad.clone()]).unwrap();
            ob.step(&mut b, vec![grad.clone()]).unwrap();
        }
        for (x, y) in a[0].value.data().iter().zip(b[0].value.data().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn missing_or_mismatched_gradients_are_usage_errors() {
        let mut params = single_param(1.0);
        let mut adam = Adam::new(0.001);
        assert!(matches!(adam.step(&mut params, vec![]), Err(Error::Usage(_))));
        let bad_shape = Tensor::<f64>::zeros(&[2]);
        assert!(matches!(
            adam.step(&mut params, vec![bad_shape]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn step_on_frozen_model_is_rejected() {
        let spec = NetworkSpec {
            input_shape: (1, 2, 2),
            layers: vec![LayerSpec::Flatten, LayerSpec::Linear { out_features: 3 }],
            feature_dim: 3,
            num_classes: 2,
        };
        let mut model = build_model::<f64>(&spec, 4).unwrap().frozen();
        // The optimizer never sees frozen parameters: mutable access refuses.
        assert!(matches!(model.parameters_mut(), Err(Error::Usage(_))));
    }

    #[test]
    fn schedule_matches_decay_table() {
        let s = LrSchedule::new(0.001, 50, 0.1).unwrap();
        assert_eq!(s.lr_at(0), 0.001);
        assert_eq!(s.lr_at(49), 0.001);
        assert!((s.lr_at(50) - 0.0001).abs() < 1e-18);
        let s = LrSchedule::new(0.01, 50, 0.1).unwrap();
        assert!((s.lr_at(149) - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn schedule_is_non_increasing_and_piecewise_constant() {
        let s = LrSchedule::new(0.5, 7, 0.3).unwrap();
        let mut previous = f64::INFINITY;
        for epoch in 0..100 {
            let lr = s.lr_at(epoch);
            assert!(lr > 0.0 && lr <= previous);
            // Constant within a decay window; drops only at multiples.
            if epoch % 7 != 0 {
                assert_eq!(lr, s.lr_at(epoch - 1));
            } else if epoch > 0 {
                assert!(lr < s.lr_at(epoch - 1));
            }
            previous = lr;
        }
    }

    #[test]
    fn schedule_validates_inputs() {
        assert!(LrSchedule::new(-0.1, 10, 0.1).is_err());
        assert!(LrSchedule::new(0.0, 10, 0.1).is_ok());
        assert!(LrSchedule::new(0.1, 0, 0.1).is_err());
        assert!(LrSchedule::new(0.1, 10, 0.0).is_err());
        assert!(LrSchedule::new(0.1, 10, 1.5).is_err());
    }
}
