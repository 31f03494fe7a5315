use super::PpoError;
use crate::nn::{log_softmax, Gradients, NetworkParams, STATE_LEN};

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Minibatch {
    /// `len × 64` states, already permuted if augmentation is on.
    pub states: Vec<f32>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub total: f64,
    /// max |r − 1| over the minibatch.
    pub max_ratio_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// Clipped-surrogate loss with value and entropy terms, and its gradient.
///
/// `loss = −mean(min(rA, clip(r)A)) + c_v·mean((V − target)²) − c_e·mean(H)`
pub fn ppo_loss(
    params: &NetworkParams,
    batch: &Minibatch,
    w: LossWeights,
) -> Result<(LossStats, Gradients<f32>), PpoError> {
    let b = batch.len();
    if b == 0 || batch.states.len() != b * STATE_LEN {
        return Err(PpoError::Batch(format!("{} states for {b} samples", batch.states.len() / STATE_LEN)));
    }
    let n = params.n_actions();
    let cache = params.forward(&batch.states, b)?;
    let inv_b = 1.0 / b as f64;
    let mut dlogits = vec![0.0f32; b * n];
    let mut dvalue = vec![0.0f32; b];
    let mut stats = LossStats::default();
    let mut clipped = 0usize;
    for i in 0..b {
        let logits: Vec<f64> = cache.logits(i).iter().map(|&z| z as f64).collect();
        let logp = log_softmax(&logits);
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let a = batch.actions[i];
        if a >= n {
            return Err(PpoError::Batch(format!("action {a} outside {n} actions")));
        }
        let adv = batch.advantages[i];
        let ratio = (logp[a] - batch.old_log_probs[i]).exp();
        let unclipped = ratio * adv;
        let objective = clipped_objective(ratio, adv, w.clip_eps);
        stats.policy_loss -= objective * inv_b;
        stats.max_ratio_dev = stats.max_ratio_dev.max((ratio - 1.0).abs());
        if (ratio - 1.0).abs() > w.clip_eps {
            clipped += 1;
        }
        let entropy: f64 = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        stats.entropy += entropy * inv_b;

        // d(−objective)/d logp[a]: nonzero only while the unclipped term is the minimum
        let d_logp = if unclipped <= objective { -adv * ratio * inv_b } else { 0.0 };
        let row = &mut dlogits[i * n..(i + 1) * n];
        for j in 0..n {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let policy = d_logp * (onehot - p[j]);
            // d(−c_e·H)/dz_j = c_e·p_j(log p_j + H)
            let ent = w.entropy_coef * p[j] * (logp[j] + entropy) * inv_b;
            row[j] = (policy + ent) as f32;
        }
        let v = cache.value(i) as f64;
        let err = v - batch.targets[i];
        stats.value_loss += err * err * inv_b;
        dvalue[i] = (2.0 * w.value_coef * err * inv_b) as f32;
    }
    stats.clip_fraction = clipped as f64 * inv_b;
    stats.total = stats.policy_loss + w.value_coef * stats.value_loss - w.entropy_coef * stats.entropy;
    if !stats.total.is_finite() {
        return Err(PpoError::NonFiniteLoss(format!("{stats:?}")));
    }
    let grads = params.backward(&cache, &dlogits, &dvalue)?;
    Ok((stats, grads))
}
