//! Adam optimizer with decoupled weight decay.

use super::Tensor;

/// Per-parameter optimizer state.
pub struct AdamState {
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl AdamParams {
    pub fn new(lr: f32, weight_decay: f32) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One Adam update on a single parameter tensor.
///
/// Weight decay is decoupled (`param -= lr * wd * param`), then the standard
/// bias-corrected moment update is applied.
pub fn adam_step(param: &Tensor, grad: &[f32], state: &mut AdamState, hp: &AdamParams) {
    assert!(hp.lr > 0.0, "adam_step: lr must be positive");
    assert_eq!(
        grad.len(),
        param.numel(),
        "adam_step: grad length {} does not match parameter {:?}",
        grad.len(),
        param.shape()
    );
    assert_eq!(state.first_moment.len(), param.numel());

    state.step_count += 1;
    let t = state.step_count as f64;
    let bc1 = 1.0 - (hp.beta1 as f64).powf(t);
    let bc2 = 1.0 - (hp.beta2 as f64).powf(t);

    let mut data = param.data_mut();
    for i in 0..data.len() {
        if hp.weight_decay != 0.0 {
            data[i] -= hp.lr * hp.weight_decay * data[i];
        }
        let g = grad[i];
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m as f64 / bc1;
        let v_hat = *v as f64 / bc2;
        data[i] -= (hp.lr as f64 * m_hat / (v_hat.sqrt() + hp.eps as f64)) as f32;
    }
}

/// Convenience wrapper stepping a fixed parameter list from their `grad`
/// buffers.
pub struct Adam {
    params: Vec<Tensor>,
    states: Vec<AdamState>,
    pub hp: AdamParams,
}

impl Adam {
    pub fn new(params: &[Tensor], hp: AdamParams) -> Self {
        let states = params.iter().map(|p| AdamState::new(p.numel())).collect();
        Adam {
            params: params.to_vec(),
            states,
            hp,
        }
    }

    /// Applies one update per parameter; parameters with no gradient are
    /// left untouched.
    pub fn step(&mut self) {
        for (p, s) in self.params.iter().zip(self.states.iter_mut()) {
            if let Some(g) = p.grad() {
                adam_step(p, &g, s, &self.hp);
            }
        }
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }
}
