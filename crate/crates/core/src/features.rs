//! Movement-level observation, queue reward and movement-shuffle augmentation.

use crate::microsim::{Color, SimWorld};
use crate::topology::MOVEMENT_COUNT;
use thiserror::Error;

pub const FEATURE_COUNT: usize = 8;
pub const LANE_SCALE: f32 = 5.0;
pub const DURATION_SCALE_S: f32 = 70.0;
/// Elapsed color time is capped before scaling, so duration ≤ 100/70.
pub const DURATION_CAP_S: u32 = 100;
/// Shortest observation window.
pub const MIN_WINDOW_S: u32 = 5;
pub const REWARD_EPSILON: f64 = 1e-8;
pub const REWARD_CLIP: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("not a permutation of 0..8: {0:?}")]
    NotBijective([usize; MOVEMENT_COUNT]),
}

/// One row of the state matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MovementFeature {
    pub flow: f32,
    pub occ_mean: f32,
    pub occ_max: f32,
    pub is_straight: f32,
    pub lanes: f32,
    pub duration: f32,
    pub is_min_green: f32,
    pub is_green: f32,
}

impl MovementFeature {
    pub fn to_row(self) -> [f32; FEATURE_COUNT] {
        [
            self.flow,
            self.occ_mean,
            self.occ_max,
            self.is_straight,
            self.lanes,
            self.duration,
            self.is_min_green,
            self.is_green,
        ]
    }
}

/// 8×8 observation, rows in canonical movement order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StateMatrix {
    pub rows: [[f32; FEATURE_COUNT]; MOVEMENT_COUNT],
}

impl StateMatrix {
    pub fn as_slice(&self) -> &[f32] {
        self.rows.as_flattened()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }
}

/// Window for the next observation: time since the last decision, at least 5 s.
pub fn observation_window(clock_s: u32, last_decision_s: u32) -> u32 {
    clock_s.saturating_sub(last_decision_s).max(MIN_WINDOW_S)
}

pub fn movement_feature(world: &SimWorld, movement: usize, window_s: u32) -> MovementFeature {
    let spec = world.spec();
    let slot = &spec.movements[movement];
    if !slot.present {
        return MovementFeature::default();
    }
    let obs = world
        .read_observation(movement, window_s.max(1))
        .expect("window is positive");
    let signal = world.signal();
    let green = signal.color(movement) == Color::Green;
    let elapsed = signal.elapsed_s(movement);
    MovementFeature {
        flow: obs.flow as f32,
        occ_mean: obs.occ_mean as f32,
        occ_max: obs.occ_max as f32,
        is_straight: if slot.is_straight { 1.0 } else { 0.0 },
        lanes: slot.lane_count as f32 / LANE_SCALE,
        duration: elapsed.min(DURATION_CAP_S) as f32 / DURATION_SCALE_S,
        is_min_green: if green && elapsed >= spec.min_green_s { 1.0 } else { 0.0 },
        is_green: if green { 1.0 } else { 0.0 },
    }
}

/// Builds the zero-padded 8×8 state.
pub fn assemble_state(world: &SimWorld, window_s: u32) -> StateMatrix {
    StateMatrix { rows: std::array::from_fn(|m| movement_feature(world, m, window_s).to_row()) }
}

/// Negative total stopped queue over all movement slots.
pub fn raw_reward(world: &SimWorld) -> f64 {
    -(0..MOVEMENT_COUNT).map(|m| world.detectors().queue(m) as f64).sum::<f64>()
}

/// Running mean/deviation of raw rewards (Welford), used to standardize
/// each reward against the history seen before it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardNormalizer {
    count: u64,
    mean: f64,
    m2: f64,
    frozen: bool,
}

impl RewardNormalizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation of the history.
    pub fn std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }

    /// Stops folding new rewards into the statistics.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Standardizes against the history without updating it.
    pub fn scale(&self, raw: f64) -> f64 {
        ((raw - self.mean) / (self.std() + REWARD_EPSILON)).clamp(-REWARD_CLIP, REWARD_CLIP)
    }

    pub fn normalize(&mut self, raw: f64) -> f64 {
        let r = self.scale(raw);
        if !self.frozen {
            self.count += 1;
            let delta = raw - self.mean;
            self.mean += delta / self.count as f64;
            self.m2 += delta * (raw - self.mean);
        }
        r
    }
}

/// Output row `i` is input row `permutation[i]`.
pub fn movement_shuffle(
    state: &StateMatrix,
    permutation: &[usize; MOVEMENT_COUNT],
) -> Result<StateMatrix, FeatureError> {
    let mut seen = [false; MOVEMENT_COUNT];
    for &p in permutation {
        if p >= MOVEMENT_COUNT || std::mem::replace(&mut seen[p], true) {
            return Err(FeatureError::NotBijective(*permutation));
        }
    }
    Ok(StateMatrix { rows: std::array::from_fn(|i| state.rows[permutation[i]]) })
}

/// Inverse of a bijection on the movement slots.
pub fn inverse_permutation(permutation: &[usize; MOVEMENT_COUNT]) -> [usize; MOVEMENT_COUNT] {
    let mut inv = [0; MOVEMENT_COUNT];
    for (i, &p) in permutation.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
