//! Evaluation episodes, degradation reports, experiment suites and the
//! controllers they drive.

mod report;
mod suite;

pub use report::{degradation, DegradationReport, DegradationRow, EvalRecord, EvalReport};
pub use suite::{no_retrain_return, run_suite, CellFailure, ControllerSpec, RewardLevel, SuiteConfig, SuiteError, SuiteOutcome};

use crate::features::{assemble_state, observation_window};
use crate::microsim::{DurationSet, SimError, SimWorld};
use crate::nn::{argmax, NetworkParams};
use crate::ppo::{apply_action, derive_seed, ActionDesign, EVAL_DOMAIN};
use crate::topology::{IntersectionSpec, ScenarioSpec};
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

/// Evaluation protocol defaults: 3600 s episodes, 5 episodes × 3 seeds.
pub const EVAL_DURATION_S: u32 = 3600;
pub const EVAL_EPISODES: u32 = 5;
pub const EVAL_SEEDS: [u64; 3] = [0, 1, 2];

/// Issues the next signal command whenever the previous one completes.
pub trait Controller {
    fn name(&self) -> String;

    /// Green durations the controller needs the world to accept.
    fn durations(&self) -> DurationSet;

    /// Whether the controller can run on this intersection.
    fn check(&self, _spec: &IntersectionSpec) -> Result<(), String> {
        Ok(())
    }

    /// Called once at the start of every episode.
    fn reset(&mut self, _world: &SimWorld) {}

    fn command(&mut self, world: &mut SimWorld) -> Result<(), SimError>;
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{controller} cannot run on {scenario}: {reason}")]
    Incompatible { controller: String, scenario: String, reason: String },
    #[error("{scenario} seed {seed} episode {episode}: {source}")]
    Sim { scenario: String, seed: u64, episode: u32, source: SimError },
}

/// Greedy policy of a trained network.
#[derive(Debug, Clone)]
pub struct AgentController {
    pub label: String,
    pub params: Arc<NetworkParams>,
    pub design: ActionDesign,
    last_decision_s: u32,
    /// A set-duration green just ended; the next command moves to the next phase.
    advance_pending: bool,
}

impl AgentController {
    pub fn new(label: impl Into<String>, params: Arc<NetworkParams>, design: ActionDesign) -> Self {
        Self { label: label.into(), params, design, last_decision_s: 0, advance_pending: false }
    }

    /// Greedy action for the world's current state.
    pub fn act(&self, world: &SimWorld) -> usize {
        let window = observation_window(world.clock_s(), self.last_decision_s);
        let state = assemble_state(world, window);
        let cache = self.params.forward(state.as_slice(), 1).expect("finite state");
        argmax(cache.logits(0))
    }
}

impl Controller for AgentController {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn durations(&self) -> DurationSet {
        self.design.durations()
    }

    fn check(&self, spec: &IntersectionSpec) -> Result<(), String> {
        let want = self.design.n_actions(spec);
        if self.params.n_actions() != want {
            return Err(format!("model has {} actions, intersection needs {want}", self.params.n_actions()));
        }
        Ok(())
    }

    fn reset(&mut self, _world: &SimWorld) {
        self.last_decision_s = 0;
        self.advance_pending = false;
    }

    fn command(&mut self, world: &mut SimWorld) -> Result<(), SimError> {
        if self.advance_pending {
            self.advance_pending = false;
            return world.advance_to_next_phase();
        }
        let action = self.act(world);
        self.last_decision_s = world.clock_s();
        apply_action(world, self.design, action)?;
        self.advance_pending = self.design == ActionDesign::SetDuration;
        Ok(())
    }
}

/// Seed of evaluation episode `episode` under evaluation seed `seed`.
pub fn eval_seed(scenario: &ScenarioSpec, seed: u64, episode: u32) -> u64 {
    derive_seed(&[EVAL_DOMAIN, scenario.seed, seed, episode as u64])
}

/// Runs one episode to its horizon and returns the average waiting time.
pub fn run_episode<C: Controller + ?Sized>(controller: &mut C, scenario: ScenarioSpec) -> Result<f64, SimError> {
    let mut world = SimWorld::new(scenario, controller.durations())?;
    controller.reset(&world);
    while !world.finished() {
        while world.command_complete() {
            controller.command(&mut world)?;
        }
        world.step()?;
    }
    Ok(world.metrics().avg_waiting_s)
}

/// Evaluates `controller` for `episodes × seeds` episodes of `duration_s`.
pub fn evaluate<C: Controller + Clone + Send + Sync>(
    controller: &C,
    scenario: &ScenarioSpec,
    episodes: u32,
    seeds: &[u64],
    duration_s: u32,
) -> Result<EvalReport, EvalError> {
    let name = controller.name();
    controller.check(&scenario.intersection).map_err(|reason| EvalError::Incompatible {
        controller: name.clone(),
        scenario: scenario.id().to_string(),
        reason,
    })?;
    let jobs: Vec<(u64, u32)> = seeds.iter().flat_map(|&s| (0..episodes).map(move |e| (s, e))).collect();
    let records = jobs
        .par_iter()
        .map(|&(seed, episode)| {
            let mut c = controller.clone();
            let s = scenario.with_seed(eval_seed(scenario, seed, episode)).with_duration(duration_s);
            run_episode(&mut c, s)
                .map(|w| EvalRecord {
                    scenario: scenario.id().to_string(),
                    controller: name.clone(),
                    seed,
                    episode,
                    avg_waiting_s: w,
                })
                .map_err(|source| EvalError::Sim { scenario: scenario.id().to_string(), seed, episode, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::new(records))
}

/// `evaluate` with the default protocol.
pub fn evaluate_default<C: Controller + Clone + Send + Sync>(controller: &C, scenario: &ScenarioSpec) -> Result<EvalReport, EvalError> {
    evaluate(controller, scenario, EVAL_EPISODES, &EVAL_SEEDS, EVAL_DURATION_S)
}
