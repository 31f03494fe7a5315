//! Clipped-surrogate policy optimization over vectorized intersection
//! environments.
//!
//! One environment step is one agent decision. Rollouts are collected with
//! sampled actions on unpermuted states; during updates each sampled state
//! may be row-permuted (movement shuffle) before the forward pass.

mod buffer;
mod config;
mod env;
mod loss;

pub use buffer::{one_step_advantage, standardize, RolloutBuffer, Transition};
pub use config::{Augment, PpoConfig};
pub use env::{
    apply_action, derive_seed, ActionDesign, DecisionEnv, EnvStep, DURATION_ACTIONS, EVAL_DOMAIN,
    NEXT_OR_NOT_ADVANCE, NEXT_OR_NOT_KEEP, TRAIN_DOMAIN, VARIANT_INTERVAL_S,
};
pub use loss::{clipped_objective, ppo_loss, LossStats, LossWeights, Minibatch};

use crate::features::{movement_shuffle, StateMatrix};
use crate::microsim::SimError;
use crate::nn::{clip_grad_norm, log_softmax, Adam, AdamConfig, NetworkParams, NnError, STATE_LEN};
use crate::topology::{ScenarioSpec, MOVEMENT_COUNT};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("environment {env}: {source}")]
    Sim { env: usize, source: SimError },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("bad minibatch: {0}")]
    Batch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint has {got} actions, {design} needs {want}")]
    Incompatible { got: usize, want: usize, design: &'static str },
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// One learning-curve sample, written once per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: u64,
    pub env_steps: u64,
    /// Mean raw cumulative reward of recently completed episodes; NaN before the first.
    pub mean_episode_reward: f64,
    /// Mean raw reward per decision over the same episodes. Unlike the
    /// cumulative column it does not grow with the number of decisions.
    pub mean_decision_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

impl CurveRow {
    /// Iteration 0 with no reward and no update statistics.
    pub fn empty() -> Self {
        Self {
            iteration: 0,
            env_steps: 0,
            mean_episode_reward: f64::NAN,
            mean_decision_reward: f64::NAN,
            policy_loss: f64::NAN,
            value_loss: f64::NAN,
            entropy: f64::NAN,
            clip_fraction: f64::NAN,
        }
    }
}

/// Mean of `xs`, NaN when empty.
fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else {
        xs.sum::<f64>() / n as f64
    }
}

pub fn write_curve<W: Write>(writer: W, rows: &[CurveRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve<R: std::io::Read>(reader: R) -> csv::Result<Vec<CurveRow>> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

pub struct Trainer {
    cfg: PpoConfig,
    params: NetworkParams,
    opt: Adam,
    envs: Vec<DecisionEnv>,
    action_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    augment_rng: ChaCha8Rng,
    curve: Vec<CurveRow>,
    env_steps: u64,
    iteration: u64,
    /// (return, decisions) of recently completed episodes.
    recent_returns: VecDeque<(f64, u64)>,
}

impl Trainer {
    /// Fresh parameters drawn from `cfg.seed`.
    pub fn new(cfg: PpoConfig, scenarios: &[ScenarioSpec]) -> Result<Self, PpoError> {
        let n_actions = Self::action_count(&cfg, scenarios)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 0x1417]));
        let params = NetworkParams::init(n_actions, &mut rng);
        let opt = Adam::for_params(&params, AdamConfig { lr: cfg.lr, ..Default::default() });
        Self::with_params(cfg, scenarios, params, opt)
    }

    /// Continues from existing parameters and optimizer state.
    pub fn with_params(
        cfg: PpoConfig,
        scenarios: &[ScenarioSpec],
        params: NetworkParams,
        mut opt: Adam,
    ) -> Result<Self, PpoError> {
        let want = Self::action_count(&cfg, scenarios)?;
        if params.n_actions() != want {
            return Err(PpoError::Incompatible { got: params.n_actions(), want, design: cfg.design.name() });
        }
        opt.config.lr = cfg.lr;
        let count = scenarios.len() * cfg.min_envs.div_ceil(scenarios.len());
        let envs = scenarios
            .iter()
            .cycle()
            .take(count)
            .enumerate()
            .map(|(i, s)| {
                DecisionEnv::new(s.clone(), cfg.design, cfg.seed, i as u64).map_err(|source| PpoError::Sim { env: i, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rng = |tag: u64| ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, tag]));
        Ok(Self {
            action_rng: rng(1),
            shuffle_rng: rng(2),
            augment_rng: rng(3),
            cfg,
            params,
            opt,
            envs,
            curve: vec![],
            env_steps: 0,
            iteration: 0,
            recent_returns: VecDeque::new(),
        })
    }

    fn action_count(cfg: &PpoConfig, scenarios: &[ScenarioSpec]) -> Result<usize, PpoError> {
        cfg.validate().map_err(PpoError::Config)?;
        let first = scenarios.first().ok_or_else(|| PpoError::Config("no scenarios".into()))?;
        let n = cfg.design.n_actions(&first.intersection);
        if scenarios.iter().any(|s| cfg.design.n_actions(&s.intersection) != n) {
            return Err(PpoError::Config(format!("{} needs equal action counts across scenarios", cfg.design.name())));
        }
        Ok(n)
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn optimizer(&self) -> &Adam {
        &self.opt
    }

    pub fn curve(&self) -> &[CurveRow] {
        &self.curve
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn envs(&self) -> &[DecisionEnv] {
        &self.envs
    }

    pub fn into_parts(self) -> (NetworkParams, Adam, Vec<CurveRow>) {
        (self.params, self.opt, self.curve)
    }

    fn batch_forward(&self, states: &[StateMatrix]) -> Result<(Vec<Vec<f64>>, Vec<f64>), PpoError> {
        let flat: Vec<f32> = states.iter().flat_map(|s| s.as_slice().iter().copied()).collect();
        let cache = self.params.forward(&flat, states.len())?;
        let logps = (0..states.len())
            .map(|i| log_softmax(&cache.logits(i).iter().map(|&z| z as f64).collect::<Vec<_>>()))
            .collect();
        let values = (0..states.len()).map(|i| cache.value(i) as f64).collect();
        Ok((logps, values))
    }

    /// Collects `steps_per_env` decisions from every environment.
    pub fn collect(&mut self, steps_per_env: usize) -> Result<RolloutBuffer, PpoError> {
        let n = self.envs.len();
        let mut buffer = RolloutBuffer::new(n, steps_per_env);
        let mut states: Vec<StateMatrix> = self.envs.iter().map(DecisionEnv::observe).collect();
        let (mut logps, mut values) = self.batch_forward(&states)?;
        for _ in 0..steps_per_env {
            let mut next_states = Vec::with_capacity(n);
            for (e, env) in self.envs.iter_mut().enumerate() {
                let probs: Vec<f64> = logps[e].iter().map(|l| l.exp()).collect();
                let action = sample(&probs, &mut self.action_rng);
                let step = env.step(action).map_err(|source| PpoError::Sim { env: e, source })?;
                if let (Some(ret), Some(len)) = (step.episode_return, step.episode_len) {
                    self.recent_returns.push_back((ret, len));
                    if self.recent_returns.len() > self.cfg.curve_window {
                        self.recent_returns.pop_front();
                    }
                }
                buffer.envs[e].push(Transition {
                    state: states[e],
                    action,
                    log_prob: logps[e][action],
                    reward: step.reward,
                    value: values[e],
                    next_value: 0.0,
                    done: step.done,
                });
                next_states.push(env.observe());
            }
            states = next_states;
            (logps, values) = self.batch_forward(&states)?;
            for (e, env_buf) in buffer.envs.iter_mut().enumerate() {
                let t = env_buf.last_mut().expect("just pushed");
                if !t.done {
                    t.next_value = values[e];
                }
            }
        }
        self.env_steps += (n * steps_per_env) as u64;
        Ok(buffer)
    }

    fn minibatch(&mut self, buffer: &RolloutBuffer, indices: &[usize]) -> Result<Minibatch, PpoError> {
        let mut mb = Minibatch::default();
        mb.states.reserve(indices.len() * STATE_LEN);
        for &i in indices {
            let t = buffer.get(i);
            let state = match self.cfg.augment {
                Augment::Off => t.state,
                Augment::MovementShuffle => {
                    let mut perm: [usize; MOVEMENT_COUNT] = std::array::from_fn(|k| k);
                    perm.shuffle(&mut self.augment_rng);
                    movement_shuffle(&t.state, &perm).expect("shuffled identity is a bijection")
                }
                Augment::Identity => {
                    movement_shuffle(&t.state, &std::array::from_fn(|k| k)).expect("identity is a bijection")
                }
            };
            mb.states.extend_from_slice(state.as_slice());
            mb.actions.push(t.action);
            mb.old_log_probs.push(t.log_prob);
            mb.advantages.push(buffer.advantages[i]);
            mb.targets.push(buffer.targets[i]);
        }
        Ok(mb)
    }

    /// Runs the configured epochs of minibatch updates over a full buffer.
    pub fn update(&mut self, buffer: &RolloutBuffer) -> Result<UpdateMetrics, PpoError> {
        let weights = LossWeights {
            clip_eps: self.cfg.clip_eps,
            value_coef: self.cfg.value_coef,
            entropy_coef: self.cfg.entropy_coef,
        };
        let mut order: Vec<usize> = (0..buffer.len()).collect();
        let mut metrics = UpdateMetrics::default();
        let mut batches = 0;
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.shuffle_rng);
            for chunk in order.chunks(self.cfg.minibatch) {
                let mb = self.minibatch(buffer, chunk)?;
                let (stats, mut grads) = ppo_loss(&self.params, &mb, weights)?;
                clip_grad_norm(grads.as_mut_slice(), self.cfg.max_grad_norm);
                self.opt.step_network(&mut self.params, &grads)?;
                metrics.policy_loss += stats.policy_loss;
                metrics.value_loss += stats.value_loss;
                metrics.entropy += stats.entropy;
                metrics.clip_fraction += stats.clip_fraction;
                batches += 1;
            }
        }
        if batches > 0 {
            let k = batches as f64;
            metrics.policy_loss /= k;
            metrics.value_loss /= k;
            metrics.entropy /= k;
            metrics.clip_fraction /= k;
        }
        Ok(metrics)
    }

    pub fn is_done(&self) -> bool {
        self.env_steps >= self.cfg.total_steps
    }

    /// Collect, compute advantages, update; appends and returns the curve row.
    pub fn iterate(&mut self) -> Result<CurveRow, PpoError> {
        let n = self.envs.len() as u64;
        let remaining = self.cfg.total_steps.saturating_sub(self.env_steps);
        let steps = (self.cfg.rollout_len as u64).min(remaining.div_ceil(n)).max(1) as usize;
        let mut buffer = self.collect(steps)?;
        buffer.compute_advantages(self.cfg.gamma, self.cfg.gae_lambda);
        let m = self.update(&buffer)?;
        self.iteration += 1;
        let row = CurveRow {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_episode_reward: mean(self.recent_returns.iter().map(|&(r, _)| r)),
            mean_decision_reward: mean(self.recent_returns.iter().map(|&(r, n)| r / n.max(1) as f64)),
            policy_loss: m.policy_loss,
            value_loss: m.value_loss,
            entropy: m.entropy,
            clip_fraction: m.clip_fraction,
        };
        log::debug!(
            "iter {} steps {} reward {:.1} pl {:.4} vl {:.4} ent {:.3} clip {:.3}",
            row.iteration, row.env_steps, row.mean_episode_reward, row.policy_loss, row.value_loss, row.entropy, row.clip_fraction
        );
        self.curve.push(row);
        Ok(row)
    }

    pub fn run(&mut self) -> Result<(), PpoError> {
        while !self.is_done() {
            self.iterate()?;
        }
        Ok(())
    }
}

fn sample<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub opt: Adam,
    pub curve: Vec<CurveRow>,
}

/// Trains from scratch with one environment per scenario.
pub fn train(cfg: PpoConfig, scenarios: &[ScenarioSpec]) -> Result<TrainOutcome, PpoError> {
    let mut t = Trainer::new(cfg, scenarios)?;
    t.run()?;
    let (params, opt, curve) = t.into_parts();
    Ok(TrainOutcome { params, opt, curve })
}

/// Continues training a checkpoint on a single scenario.
pub fn retrain(params: NetworkParams, opt: Adam, scenario: &ScenarioSpec, cfg: PpoConfig) -> Result<TrainOutcome, PpoError> {
    let mut t = Trainer::with_params(cfg, std::slice::from_ref(scenario), params, opt)?;
    t.run()?;
    let (params, opt, curve) = t.into_parts();
    Ok(TrainOutcome { params, opt, curve })
}
