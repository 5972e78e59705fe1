use crate::layer::Param;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// One bias-corrected ADAM update of `values` in place. `step` is the
/// 1-based update count.
pub fn adam_update(values: &mut [f64], grads: &[f64], moments: &mut Moments, step: u64, lr: f64, cfg: AdamConfig) {
    if moments.first.len() != values.len() {
        moments.first = vec![0.0; values.len()];
        moments.second = vec![0.0; values.len()];
    }
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for (((x, &g), m), v) in values
        .iter_mut()
        .zip(grads)
        .zip(moments.first.iter_mut())
        .zip(moments.second.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// ADAM state for a whole parameter list.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients stored in each [`Param`].
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) {
        if self.moments.len() != params.len() {
            self.moments = vec![Moments::default(); params.len()];
        }
        self.step += 1;
        for (p, m) in params.iter_mut().zip(self.moments.iter_mut()) {
            let Param { value, grad, .. } = &mut **p;
            adam_update(value, grad, m, self.step, lr, self.config);
        }
    }
}
