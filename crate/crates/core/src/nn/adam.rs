use super::{NetworkParams, NnError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected adaptive moments, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl Adam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self { config, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn for_params(params: &NetworkParams, config: AdamConfig) -> Self {
        Self::new(params.len(), config)
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Shape { what: "optimizer".into(), expected: self.m.len(), got: grads.len() });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(format!("parameter {i}")));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }

    pub fn step_network(&mut self, params: &mut NetworkParams, grads: &NetworkParams) -> Result<(), NnError> {
        if let Some(name) = grads.first_non_finite() {
            return Err(NnError::NonFiniteGradient(name));
        }
        self.step(params.as_mut_slice(), grads.as_slice())
    }
}

pub fn global_norm(grads: &[f32]) -> f32 {
    grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt() as f32
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f32], max_norm: f32) -> f32 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![0.5, -1.0, 2.0];
        let mut opt = Adam::new(3, AdamConfig::default());
        opt.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        // m_hat = v_hat = 1 for g = 1 at every step, so each update is lr/(1+eps).
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        let mut p = vec![0.0f32];
        let mut opt = Adam::new(1, cfg);
        let mut want = 0.0f64;
        for t in 1..=3 {
            opt.step(&mut p, &[1.0]).unwrap();
            let m = 1.0 - 0.9f64.powi(t);
            let v = 1.0 - 0.999f64.powi(t);
            want -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            assert!((p[0] as f64 - want).abs() < 1e-5, "step {t}: {} vs {want}", p[0]);
        }
        assert!((p[0] + 0.3).abs() < 1e-5);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut p = vec![0.0; 2];
        let mut opt = Adam::new(2, AdamConfig::default());
        assert!(matches!(opt.step(&mut p, &[1.0, f32::NAN]), Err(NnError::NonFiniteGradient(_))));
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = vec![0.3, 0.1];
        let mut b = a.clone();
        let mut oa = Adam::new(2, AdamConfig::default());
        let mut ob = oa.clone();
        oa.step(&mut a, &[0.2, -0.7]).unwrap();
        ob.step(&mut b, &[0.2, -0.7]).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        assert!((global_norm(&g) - 0.5).abs() < 1e-6);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 0.5);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}
