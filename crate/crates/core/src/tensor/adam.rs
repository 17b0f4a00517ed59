//! Bias-corrected Adam updates over a flat parameter list.

use super::{Scalar, Tensor, TensorError};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig { lr, ..AdamConfig::default() }
    }
}

/// First/second-moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> AdamState<T> {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update. `grads[i]` may be `None` for parameters the loss did not
/// reach this step; their moments still decay.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Option<Tensor<T>>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<(), TensorError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::ShapeMismatch {
            context: "adam_step parameter count",
            lhs: vec![params.len()],
            rhs: vec![grads.len()],
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (ob1, ob2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let lr = T::from_f64(cfg.lr / bias1);
    let eps = T::from_f64(cfg.eps);
    let bias2_inv = T::from_f64(1.0 / bias2);

    let zero = Tensor::zeros(&[1]);
    for (i, param) in params.iter_mut().enumerate() {
        let grad = match &grads[i] {
            Some(g) => {
                if g.shape() != param.shape() {
                    return Err(TensorError::ShapeMismatch {
                        context: "adam_step gradient shape",
                        lhs: param.shape().to_vec(),
                        rhs: g.shape().to_vec(),
                    });
                }
                g
            }
            None => &zero,
        };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = param.data_mut();
        for j in 0..p.len() {
            let g = if grads[i].is_some() { grad.data()[j] } else { T::zero() };
            m[j] = b1 * m[j] + ob1 * g;
            v[j] = b2 * v[j] + ob2 * g * g;
            let denom = (v[j] * bias2_inv).sqrt() + eps;
            p[j] = p[j] - lr * m[j] / denom;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_leaves_params_unchanged() {
        let mut params = vec![Tensor::<f64>::full(&[3], 1.5)];
        let before = params[0].clone();
        let mut state = AdamState::new(&params);
        let grads = vec![Some(Tensor::zeros(&[3]))];
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params[0], before);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // first step: m̂ = g, v̂ = g², update = lr·g/(|g|+ε) ≈ lr·sign(g)
        let g = 0.37;
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::<f64>::full(&[1], 2.0)];
        let mut state = AdamState::new(&params);
        let grads = vec![Some(Tensor::full(&[1], g))];
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        let step = 2.0 - params[0].data()[0];
        let expected = cfg.lr * g / (g + cfg.eps);
        assert!((step - expected).abs() < 1e-12);
        assert!((step - cfg.lr).abs() < 1e-6);
    }

    #[test]
    fn identical_state_gives_bitwise_identical_results() {
        let run = || {
            let mut params = vec![Tensor::<f32>::from_fn(&[4], |i| i as f32 * 0.3)];
            let mut state = AdamState::new(&params);
            for step in 0..10 {
                let grads =
                    vec![Some(Tensor::<f32>::from_fn(&[4], |i| ((i + step) as f32).sin()))];
                adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
            }
            params[0].data().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut params = vec![Tensor::<f64>::zeros(&[2])];
        let mut state = AdamState::new(&params);
        let grads = vec![Some(Tensor::zeros(&[3]))];
        assert!(adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).is_err());
    }
}
