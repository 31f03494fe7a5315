use crate::features::{assemble_state, observation_window, raw_reward, RewardNormalizer, StateMatrix};
use crate::microsim::{DurationSet, SimError, SimWorld};
use crate::topology::{IntersectionSpec, ScenarioSpec};
use serde::{Deserialize, Serialize};

/// Green durations selectable by the set-duration design; action `i` → `DURATION_ACTIONS[i]`.
pub const DURATION_ACTIONS: [u32; 12] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60];
/// Decision interval of the choose-next-phase and next-or-not designs.
pub const VARIANT_INTERVAL_S: u32 = 5;

/// How an agent's discrete action maps onto signal commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionDesign {
    /// Pick the green time of the next phase in cyclic order.
    SetDuration,
    /// Every 5 s pick any phase; switching inserts yellow.
    ChooseNextPhase,
    /// Every 5 s keep the current phase or advance to the next one.
    NextOrNot,
}

impl ActionDesign {
    pub fn n_actions(self, spec: &IntersectionSpec) -> usize {
        match self {
            ActionDesign::SetDuration => DURATION_ACTIONS.len(),
            ActionDesign::ChooseNextPhase => spec.phase_count(),
            ActionDesign::NextOrNot => 2,
        }
    }

    pub fn durations(self) -> DurationSet {
        match self {
            ActionDesign::SetDuration => DurationSet::Discrete(DURATION_ACTIONS.to_vec()),
            _ => DurationSet::Discrete(vec![VARIANT_INTERVAL_S]),
        }
    }

    /// True when one network fits every intersection.
    pub fn is_universal(self) -> bool {
        self != ActionDesign::ChooseNextPhase
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionDesign::SetDuration => "set-duration",
            ActionDesign::ChooseNextPhase => "choose-next-phase",
            ActionDesign::NextOrNot => "next-or-not",
        }
    }
}

pub const NEXT_OR_NOT_KEEP: usize = 0;
pub const NEXT_OR_NOT_ADVANCE: usize = 1;

/// Issues the command for `action`. The world must be between commands.
pub fn apply_action(world: &mut SimWorld, design: ActionDesign, action: usize) -> Result<(), SimError> {
    match design {
        ActionDesign::SetDuration => {
            let d = *DURATION_ACTIONS.get(action).ok_or(SimError::DurationNotAllowed(0))?;
            world.extend_phase(d)
        }
        ActionDesign::ChooseNextPhase => world.switch_to(action, VARIANT_INTERVAL_S),
        ActionDesign::NextOrNot => {
            let phase = &world.spec().phases[world.signal().phase_index()];
            let m = phase.movements()[0];
            let served = world.signal().elapsed_s(m);
            if action == NEXT_OR_NOT_ADVANCE && !world.signal().in_yellow() && served >= world.spec().min_green_s {
                world.begin_phase(VARIANT_INTERVAL_S)
            } else {
                world.extend_phase(VARIANT_INTERVAL_S)
            }
        }
    }
}

/// Mixes seed components into one 64-bit seed (splitmix64 finalizer chain).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Seed domain tags keep training and evaluation traffic disjoint.
pub const TRAIN_DOMAIN: u64 = 0x7472_6169_6e;
pub const EVAL_DOMAIN: u64 = 0x6576_616c;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub reward: f64,
    pub raw_reward: f64,
    pub done: bool,
    /// Raw cumulative reward of the episode that just ended.
    pub episode_return: Option<f64>,
    /// Decisions taken in the episode that just ended.
    pub episode_len: Option<u64>,
}

/// A simulated intersection advanced one agent decision at a time.
#[derive(Debug, Clone)]
pub struct DecisionEnv {
    world: SimWorld,
    design: ActionDesign,
    normalizer: RewardNormalizer,
    last_decision_s: u32,
    /// Seed of the scenario as given; episode seeds derive from it.
    base_seed: u64,
    run_seed: u64,
    env_id: u64,
    episode: u64,
    episode_return: f64,
    episode_len: u64,
}

impl DecisionEnv {
    /// Training environment; episode `e` uses a seed derived from
    /// `(run_seed, env_id, e)` and the scenario's own seed.
    pub fn new(scenario: ScenarioSpec, design: ActionDesign, run_seed: u64, env_id: u64) -> Result<Self, SimError> {
        let base = scenario.seed;
        let mut world = SimWorld::new(scenario, design.durations())?;
        world.reset(derive_seed(&[TRAIN_DOMAIN, base, run_seed, env_id, 0]));
        Ok(Self {
            world,
            design,
            normalizer: RewardNormalizer::new(),
            last_decision_s: 0,
            base_seed: base,
            run_seed,
            env_id,
            episode: 0,
            episode_return: 0.0,
            episode_len: 0,
        })
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn design(&self) -> ActionDesign {
        self.design
    }

    pub fn normalizer(&self) -> &RewardNormalizer {
        &self.normalizer
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn n_actions(&self) -> usize {
        self.design.n_actions(self.world.spec())
    }

    pub fn observe(&self) -> StateMatrix {
        assemble_state(&self.world, observation_window(self.world.clock_s(), self.last_decision_s))
    }

    pub fn step(&mut self, action: usize) -> Result<EnvStep, SimError> {
        self.last_decision_s = self.world.clock_s();
        apply_action(&mut self.world, self.design, action)?;
        self.run_to_next_decision()?;
        let raw = raw_reward(&self.world);
        let reward = self.normalizer.normalize(raw);
        self.episode_return += raw;
        self.episode_len += 1;
        let done = self.world.finished();
        let mut episode_return = None;
        let mut episode_len = None;
        if done {
            episode_return = Some(self.episode_return);
            episode_len = Some(self.episode_len);
            self.episode_len = 0;
            self.episode += 1;
            self.episode_return = 0.0;
            let seed = derive_seed(&[TRAIN_DOMAIN, self.base_seed, self.run_seed, self.env_id, self.episode]);
            self.reset_world(seed);
        }
        Ok(EnvStep { reward, raw_reward: raw, done, episode_return, episode_len })
    }

    /// Runs the issued command; under set-duration also the yellow that
    /// follows, so the next decision falls on the next phase's green onset.
    fn run_to_next_decision(&mut self) -> Result<(), SimError> {
        self.run_command()?;
        if self.design == ActionDesign::SetDuration && !self.world.finished() && !self.world.signal().in_yellow() {
            self.world.advance_to_next_phase()?;
            self.run_command()?;
        }
        Ok(())
    }

    fn run_command(&mut self) -> Result<(), SimError> {
        while !self.world.command_complete() && !self.world.finished() {
            self.world.step()?;
        }
        Ok(())
    }

    fn reset_world(&mut self, seed: u64) {
        let scenario = self.world.scenario().with_seed(seed);
        self.world = SimWorld::new(scenario, self.design.durations()).expect("validated scenario");
        self.last_decision_s = 0;
    }
}
