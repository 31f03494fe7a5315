use crate::harness::{AgentController, Controller};
use crate::microsim::{DurationSet, SimError, SimWorld};
use crate::ppo::{apply_action, train, ActionDesign, Augment, PpoConfig, PpoError};
use crate::topology::{IntersectionSpec, ScenarioSpec};
use std::sync::Arc;

/// Replays a fixed action list (cycled) under one action design.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedPolicy {
    pub design: ActionDesign,
    pub actions: Vec<usize>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(design: ActionDesign, actions: Vec<usize>) -> Self {
        assert!(!actions.is_empty(), "script needs at least one action");
        Self { design, actions, cursor: 0 }
    }
}

impl Controller for ScriptedPolicy {
    fn name(&self) -> String {
        format!("script-{}", self.design.name())
    }

    fn durations(&self) -> DurationSet {
        self.design.durations()
    }

    fn check(&self, spec: &IntersectionSpec) -> Result<(), String> {
        let n = self.design.n_actions(spec);
        match self.actions.iter().find(|&&a| a >= n) {
            Some(a) => Err(format!("action {a} outside {n} actions")),
            None => Ok(()),
        }
    }

    fn reset(&mut self, _world: &SimWorld) {
        self.cursor = 0;
    }

    fn command(&mut self, world: &mut SimWorld) -> Result<(), SimError> {
        let a = self.actions[self.cursor % self.actions.len()];
        self.cursor += 1;
        apply_action(world, self.design, a)
    }
}

/// Green phases in the order they were served over one episode; a phase
/// extended across several commands appears once.
pub fn served_phases<C: Controller + ?Sized>(controller: &mut C, scenario: ScenarioSpec) -> Result<Vec<usize>, SimError> {
    let mut world = SimWorld::new(scenario, controller.durations())?;
    controller.reset(&world);
    let mut seq: Vec<usize> = vec![];
    let mut was_yellow = true;
    while !world.finished() {
        while world.command_complete() {
            controller.command(&mut world)?;
        }
        let green = !world.signal().in_yellow();
        let idx = world.signal().phase_index();
        if green && (was_yellow || seq.last() != Some(&idx)) {
            seq.push(idx);
        }
        was_yellow = !green;
        world.step()?;
    }
    Ok(seq)
}

/// Every transition moves to the next phase in cyclic order.
pub fn is_cyclic_walk(seq: &[usize], phase_count: usize) -> bool {
    seq.windows(2).all(|w| w[1] == (w[0] + 1) % phase_count)
}

/// Trains a per-intersection model for a phase-indexed action design.
pub fn train_variant(design: ActionDesign, scenario: &ScenarioSpec, base: &PpoConfig) -> Result<AgentController, PpoError> {
    let cfg = PpoConfig { design, augment: Augment::Off, ..base.clone() };
    let out = train(cfg, std::slice::from_ref(scenario))?;
    Ok(AgentController::new(design.name(), Arc::new(out.params), design))
}
