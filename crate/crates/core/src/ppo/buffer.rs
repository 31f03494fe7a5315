use crate::features::StateMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateMatrix,
    pub action: usize,
    pub log_prob: f64,
    /// Normalized reward received after the action.
    pub reward: f64,
    pub value: f64,
    /// V(s') at collection time; ignored when `done`.
    pub next_value: f64,
    pub done: bool,
}

/// Transitions grouped by environment, in collection order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub envs: Vec<Vec<Transition>>,
    /// Filled by [`RolloutBuffer::compute_advantages`], env-major order.
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, rollout_len: usize) -> Self {
        Self {
            envs: (0..n_envs).map(|_| Vec::with_capacity(rollout_len)).collect(),
            advantages: vec![],
            targets: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.envs.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Env-major view of all transitions.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.envs.iter().flatten()
    }

    pub fn get(&self, index: usize) -> &Transition {
        let mut i = index;
        for env in &self.envs {
            if i < env.len() {
                return &env[i];
            }
            i -= env.len();
        }
        panic!("transition {index} out of range");
    }

    /// One-step (or, with `lambda`, generalized) advantages and value
    /// targets. Targets are `A + V(s)` before standardization; advantages
    /// are standardized over the whole buffer afterwards.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: Option<f64>) {
        let mut adv = Vec::with_capacity(self.len());
        for env in &self.envs {
            let deltas: Vec<f64> = env.iter().map(|t| one_step_advantage(t, gamma)).collect();
            match lambda {
                None => adv.extend(deltas),
                Some(l) => {
                    let mut out = vec![0.0; deltas.len()];
                    let mut acc = 0.0;
                    for i in (0..deltas.len()).rev() {
                        let carry = if env[i].done { 0.0 } else { gamma * l * acc };
                        acc = deltas[i] + carry;
                        out[i] = acc;
                    }
                    adv.extend(out);
                }
            }
        }
        self.targets = adv.iter().zip(self.iter()).map(|(a, t)| a + t.value).collect();
        standardize(&mut adv);
        self.advantages = adv;
    }
}

/// `r + γ·V(s')·(1 − done) − V(s)`.
pub fn one_step_advantage(t: &Transition, gamma: f64) -> f64 {
    let bootstrap = if t.done { 0.0 } else { gamma * t.next_value };
    t.reward + bootstrap - t.value
}

/// Shifts to mean 0 and scales to unit population deviation (when nonzero).
pub fn standardize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = if std > 1e-8 { (*x - mean) / std } else { *x - mean };
    }
}
