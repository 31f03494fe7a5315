//! Intersection structures: movement slots, phases, scenarios.
//!
//! Movements are indexed in a fixed canonical order shared by every state
//! matrix: `N, NL, E, EL, W, WL, S, SL`. A slot names the approach the
//! traffic arrives from, so `N` is traffic entering from the north road and
//! going straight through to the south road, and `NL` is the left turn from
//! the same approach. Right turns are uncontrolled and have no slot.
//!
//! Roads are indexed clockwise from north: `0 = N, 1 = E, 2 = S, 3 = W`.

mod catalog;
mod config;

pub use catalog::{builtin_catalog, catalog_entry, CatalogEntry, Split};
pub use config::{parse_scenario, ConfigError};

use serde::{Deserialize, Serialize};

/// Number of controlled movement slots at any intersection.
pub const MOVEMENT_COUNT: usize = 8;

/// Short names of the movement slots in canonical order.
pub const MOVEMENT_NAMES: [&str; MOVEMENT_COUNT] = ["N", "NL", "E", "EL", "W", "WL", "S", "SL"];

/// Road names clockwise from north, the order of `lanes_per_road`.
pub const ROAD_NAMES: [&str; 4] = ["N", "E", "S", "W"];

/// Yellow interlude inserted before any green turns red.
pub const DEFAULT_YELLOW_S: u32 = 3;

/// Length of the lane-area detector zone before the stop line.
pub const DEFAULT_DETECTOR_LENGTH_M: f64 = 100.0;

/// Minimum green used by every built-in intersection.
pub const DEFAULT_MIN_GREEN_S: u32 = 5;

/// Slot reached by one clockwise quarter turn (N -> E -> S -> W).
const QUARTER_TURN: [usize; MOVEMENT_COUNT] = [2, 3, 6, 7, 0, 1, 4, 5];

/// Road each slot's traffic arrives on.
pub const fn approach_road(slot: usize) -> usize {
    match slot {
        0 | 1 => 0,
        2 | 3 => 1,
        4 | 5 => 3,
        _ => 2,
    }
}

/// Road each slot's traffic leaves on.
pub const fn exit_road(slot: usize) -> usize {
    let road = approach_road(slot);
    if slot % 2 == 0 {
        (road + 2) % 4
    } else {
        (road + 1) % 4
    }
}

/// Slot index after rotating the intersection by `quarter_turns` clockwise.
pub fn rotate_slot(slot: usize, quarter_turns: usize) -> usize {
    (0..quarter_turns % 4).fold(slot, |s, _| QUARTER_TURN[s])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementSlot {
    pub present: bool,
    pub is_straight: bool,
    /// Lanes serving the movement; zero for absent slots.
    pub lane_count: u32,
}

impl MovementSlot {
    pub fn absent(index: usize) -> Self {
        Self { present: false, is_straight: index % 2 == 0, lane_count: 0 }
    }

    pub fn lanes(&self) -> u32 {
        if self.present {
            self.lane_count
        } else {
            0
        }
    }
}

/// A set of movements shown green together. Indices are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseSpec {
    movements: Vec<usize>,
}

impl PhaseSpec {
    pub fn new(mut movements: Vec<usize>) -> Self {
        movements.sort_unstable();
        Self { movements }
    }

    pub fn movements(&self) -> &[usize] {
        &self.movements
    }

    pub fn contains(&self, movement: usize) -> bool {
        self.movements.binary_search(&movement).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSpec {
    pub id: String,
    pub roads: u32,
    /// Lanes on each approach road, clockwise from north; 0 marks a missing road.
    pub lanes_per_road: [u32; 4],
    pub movements: [MovementSlot; MOVEMENT_COUNT],
    /// Phases in cyclic execution order.
    pub phases: Vec<PhaseSpec>,
    pub min_green_s: u32,
    pub yellow_s: u32,
    pub detector_length_m: f64,
}

impl IntersectionSpec {
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    pub fn present(&self) -> impl Iterator<Item = usize> + '_ {
        (0..MOVEMENT_COUNT).filter(|&i| self.movements[i].present)
    }

    pub fn present_count(&self) -> usize {
        self.present().count()
    }

    /// Rotates the intersection clockwise by `quarter_turns` × 90°.
    ///
    /// Lanes, movement slots and phase contents move together, so the
    /// rotated intersection describes the same physical junction seen from a
    /// different compass heading. The id is kept.
    pub fn rotate(&self, quarter_turns: usize) -> IntersectionSpec {
        let k = quarter_turns % 4;
        let mut lanes = [0; 4];
        for (road, &n) in self.lanes_per_road.iter().enumerate() {
            lanes[(road + k) % 4] = n;
        }
        let mut movements: [MovementSlot; MOVEMENT_COUNT] =
            std::array::from_fn(MovementSlot::absent);
        for (slot, m) in self.movements.iter().enumerate() {
            movements[rotate_slot(slot, k)] = m.clone();
        }
        let phases = self
            .phases
            .iter()
            .map(|p| PhaseSpec::new(p.movements().iter().map(|&m| rotate_slot(m, k)).collect()))
            .collect();
        IntersectionSpec {
            id: self.id.clone(),
            roads: self.roads,
            lanes_per_road: lanes,
            movements,
            phases,
            min_green_s: self.min_green_s,
            yellow_s: self.yellow_s,
            detector_length_m: self.detector_length_m,
        }
    }

    /// Checks every structural invariant, naming the first one violated.
    pub fn validate(&self) -> Result<(), String> {
        if self.roads != 3 && self.roads != 4 {
            return Err(format!("roads must be 3 or 4, got {}", self.roads));
        }
        let open_roads = self.lanes_per_road.iter().filter(|&&n| n > 0).count() as u32;
        if open_roads != self.roads {
            return Err(format!(
                "lanes_per_road {:?} has {} open roads but roads = {}",
                self.lanes_per_road, open_roads, self.roads
            ));
        }
        for (i, m) in self.movements.iter().enumerate() {
            if m.is_straight != (i % 2 == 0) {
                return Err(format!(
                    "movement {} ({}) must have is_straight = {}",
                    i,
                    MOVEMENT_NAMES[i],
                    i % 2 == 0
                ));
            }
            if !m.present {
                continue;
            }
            if m.lane_count == 0 {
                return Err(format!("present movement {} has lane_count 0", MOVEMENT_NAMES[i]));
            }
            if self.lanes_per_road[approach_road(i)] == 0 {
                return Err(format!(
                    "movement {} arrives on missing road {}",
                    MOVEMENT_NAMES[i],
                    ROAD_NAMES[approach_road(i)]
                ));
            }
            if self.lanes_per_road[exit_road(i)] == 0 {
                return Err(format!(
                    "movement {} exits onto missing road {}",
                    MOVEMENT_NAMES[i],
                    ROAD_NAMES[exit_road(i)]
                ));
            }
        }
        for road in 0..4 {
            let used: u32 = (0..MOVEMENT_COUNT)
                .filter(|&i| approach_road(i) == road)
                .map(|i| self.movements[i].lanes())
                .sum();
            if used > self.lanes_per_road[road] {
                return Err(format!(
                    "movements on road {} use {} lanes but the road has {}",
                    ROAD_NAMES[road], used, self.lanes_per_road[road]
                ));
            }
        }
        if self.phases.len() < 2 {
            return Err(format!("at least 2 phases required, got {}", self.phases.len()));
        }
        let mut served = [false; MOVEMENT_COUNT];
        for (p, phase) in self.phases.iter().enumerate() {
            if phase.movements().is_empty() {
                return Err(format!("phase {} is empty", p));
            }
            for w in phase.movements().windows(2) {
                if w[0] == w[1] {
                    return Err(format!("phase {} lists movement {} twice", p, w[0]));
                }
            }
            for &m in phase.movements() {
                if m >= MOVEMENT_COUNT {
                    return Err(format!("phase {} references movement index {} (valid 0-7)", p, m));
                }
                if !self.movements[m].present {
                    return Err(format!(
                        "phase {} references absent movement {} ({})",
                        p, m, MOVEMENT_NAMES[m]
                    ));
                }
                served[m] = true;
            }
        }
        if let Some(m) = (0..MOVEMENT_COUNT).find(|&m| self.movements[m].present && !served[m]) {
            return Err(format!("present movement {} is never served by a phase", MOVEMENT_NAMES[m]));
        }
        if self.min_green_s == 0 {
            return Err("min_green_s must be positive".into());
        }
        if self.yellow_s == 0 {
            return Err("yellow_s must be positive".into());
        }
        if !(self.detector_length_m.is_finite() && self.detector_length_m > 0.0) {
            return Err("detector_length_m must be positive".into());
        }
        Ok(())
    }
}

/// An intersection plus the demand and horizon to simulate on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub intersection: IntersectionSpec,
    /// Mean arrivals per second for each movement slot.
    pub arrival_rates: [f64; MOVEMENT_COUNT],
    pub duration_s: u32,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn id(&self) -> &str {
        &self.intersection.id
    }

    pub fn validate(&self) -> Result<(), String> {
        self.intersection.validate()?;
        for (i, &r) in self.arrival_rates.iter().enumerate() {
            if !(r.is_finite() && r >= 0.0) {
                return Err(format!("arrival rate for {} must be finite and >= 0", MOVEMENT_NAMES[i]));
            }
            if r > 0.0 && !self.intersection.movements[i].present {
                return Err(format!("arrival rate for absent movement {} must be 0", MOVEMENT_NAMES[i]));
            }
        }
        if self.duration_s == 0 {
            return Err("duration_s must be positive".into());
        }
        Ok(())
    }

    pub fn rotate(&self, quarter_turns: usize) -> ScenarioSpec {
        let mut rates = [0.0; MOVEMENT_COUNT];
        for (slot, &r) in self.arrival_rates.iter().enumerate() {
            rates[rotate_slot(slot, quarter_turns)] = r;
        }
        ScenarioSpec {
            intersection: self.intersection.rotate(quarter_turns),
            arrival_rates: rates,
            duration_s: self.duration_s,
            seed: self.seed,
        }
    }

    /// Copy with every arrival rate multiplied by `factor`.
    pub fn scaled_demand(&self, factor: f64) -> ScenarioSpec {
        let mut s = self.clone();
        for r in s.arrival_rates.iter_mut() {
            *r *= factor;
        }
        s
    }

    pub fn with_duration(&self, duration_s: u32) -> ScenarioSpec {
        ScenarioSpec { duration_s, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> ScenarioSpec {
        ScenarioSpec { seed, ..self.clone() }
    }
}
