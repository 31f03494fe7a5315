//! Discrete-time (1 s) point-queue simulation of a single intersection.
//!
//! Each controlled movement owns one FIFO lane per `lane_count`. Vehicles
//! enter at the upstream end of a 300 m approach, travel at free speed, and
//! stop behind the vehicle ahead at jam spacing or at the stop line. The
//! stop line is a server: a vehicle standing on it departs when its movement
//! is green and the lane's saturation headway has elapsed. Waiting time is
//! every second a vehicle's speed is at most 0.1 m/s.

mod detector;
mod signal;
mod trace;

pub use detector::{DetectorBank, RawObservation, DETECTOR_HISTORY_S};
pub use signal::{Color, DurationSet, SignalState};
pub use trace::TraceWriter;

use crate::topology::{IntersectionSpec, ScenarioSpec, MOVEMENT_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::collections::VecDeque;
use std::sync::Arc;
use thiserror::Error;

pub const FREE_SPEED_MPS: f64 = 13.89;
pub const VEHICLE_LENGTH_M: f64 = 5.0;
pub const JAM_GAP_M: f64 = 2.5;
pub const JAM_SPACING_M: f64 = VEHICLE_LENGTH_M + JAM_GAP_M;
pub const SATURATION_HEADWAY_S: u32 = 2;
pub const APPROACH_LENGTH_M: f64 = 300.0;
/// Speeds at or below this count as waiting.
pub const WAITING_SPEED_MPS: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation finished at t={clock_s}s (duration {duration_s}s)")]
    Finished { clock_s: u32, duration_s: u32 },
    #[error("a phase command is still running ({remaining_s}s left)")]
    CommandActive { remaining_s: u32 },
    #[error("green duration {0}s is not in the configured action set")]
    DurationNotAllowed(u32),
    #[error("phase {index} does not exist (intersection has {count})")]
    NoSuchPhase { index: usize, count: usize },
    #[error("observation window must be at least 1s")]
    EmptyWindow,
    #[error("cannot place vehicle: {0}")]
    Placement(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    pub movement: usize,
    /// Distance to the stop line.
    pub position_m: f64,
    /// Distance covered during the last simulated second.
    pub speed_mps: f64,
    pub waiting_s: u32,
    pub spawned_at_s: u32,
    pub departed_at_s: Option<u32>,
}

#[derive(Debug, Clone, Default)]
struct Lane {
    vehicles: VecDeque<Vehicle>,
    /// Vehicles that arrived while the lane entrance was blocked.
    backlog: VecDeque<Vehicle>,
    next_discharge_s: u32,
}

impl Lane {
    fn has_entry_room(&self) -> bool {
        self.backlog.is_empty() && self.tail_allows_entry()
    }

    fn tail_allows_entry(&self) -> bool {
        self.vehicles
            .back()
            .is_none_or(|v| v.position_m + JAM_SPACING_M <= APPROACH_LENGTH_M)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Totals {
    pub spawned: u64,
    pub departed: u64,
    /// Waiting seconds accumulated by every vehicle that entered.
    pub waiting_s: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeMetrics {
    pub avg_waiting_s: f64,
    pub vehicles: u64,
    pub throughput: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// Clock after the step.
    pub clock_s: u32,
    pub arrivals: [u32; MOVEMENT_COUNT],
    pub departures: [u32; MOVEMENT_COUNT],
}

/// All mutable state of one simulated intersection.
#[derive(Debug, Clone)]
pub struct SimWorld {
    scenario: Arc<ScenarioSpec>,
    durations: DurationSet,
    clock_s: u32,
    lanes: [Vec<Lane>; MOVEMENT_COUNT],
    signal: SignalState,
    detectors: DetectorBank,
    rng: ChaCha8Rng,
    arrivals: [Option<Poisson<f64>>; MOVEMENT_COUNT],
    totals: Totals,
    next_vehicle_id: u64,
}

impl SimWorld {
    pub fn new(scenario: ScenarioSpec, durations: DurationSet) -> Result<Self, SimError> {
        scenario.validate().map_err(SimError::Scenario)?;
        Ok(Self::from_arc(Arc::new(scenario), durations))
    }

    fn from_arc(scenario: Arc<ScenarioSpec>, durations: DurationSet) -> Self {
        let spec = &scenario.intersection;
        let lanes = std::array::from_fn(|m| vec![Lane::default(); spec.movements[m].lanes() as usize]);
        let arrivals = std::array::from_fn(|m| {
            let rate = scenario.arrival_rates[m];
            (rate > 0.0).then(|| Poisson::new(rate).expect("validated rate"))
        });
        Self {
            signal: SignalState::new(spec),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            scenario,
            durations,
            clock_s: 0,
            lanes,
            detectors: DetectorBank::new(),
            arrivals,
            totals: Totals::default(),
            next_vehicle_id: 0,
        }
    }

    /// Fresh episode on the same intersection and demand with a new seed.
    pub fn reset(&mut self, seed: u64) {
        let scenario = if seed == self.scenario.seed {
            Arc::clone(&self.scenario)
        } else {
            Arc::new(self.scenario.with_seed(seed))
        };
        *self = Self::from_arc(scenario, self.durations.clone());
    }

    /// Changes demand from the next step on; the clock and traffic stay.
    pub fn set_arrival_rates(&mut self, rates: [f64; MOVEMENT_COUNT]) -> Result<(), SimError> {
        let mut scenario = (*self.scenario).clone();
        scenario.arrival_rates = rates;
        scenario.validate().map_err(SimError::Scenario)?;
        self.arrivals = std::array::from_fn(|m| (rates[m] > 0.0).then(|| Poisson::new(rates[m]).expect("validated rate")));
        self.scenario = Arc::new(scenario);
        Ok(())
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn spec(&self) -> &IntersectionSpec {
        &self.scenario.intersection
    }

    pub fn durations(&self) -> &DurationSet {
        &self.durations
    }

    pub fn clock_s(&self) -> u32 {
        self.clock_s
    }

    pub fn finished(&self) -> bool {
        self.clock_s >= self.scenario.duration_s
    }

    pub fn signal(&self) -> &SignalState {
        &self.signal
    }

    pub fn detectors(&self) -> &DetectorBank {
        &self.detectors
    }

    pub fn totals(&self) -> Totals {
        self.totals
    }

    pub fn in_network(&self) -> u64 {
        self.lanes
            .iter()
            .flatten()
            .map(|l| (l.vehicles.len() + l.backlog.len()) as u64)
            .sum()
    }

    /// Vehicles currently on the movement's approach lanes (backlog excluded).
    pub fn vehicles(&self, movement: usize) -> impl Iterator<Item = &Vehicle> {
        self.lanes[movement].iter().flat_map(|l| l.vehicles.iter())
    }

    pub fn command_complete(&self) -> bool {
        self.signal.is_complete()
    }

    /// Serves the next phase in cyclic order for `duration_s` seconds of green.
    pub fn begin_phase(&mut self, duration_s: u32) -> Result<(), SimError> {
        let next = (self.signal.phase_index() + 1) % self.spec().phase_count();
        self.command(next, duration_s)
    }

    /// Keeps the current phase green for another `duration_s` seconds.
    pub fn extend_phase(&mut self, duration_s: u32) -> Result<(), SimError> {
        self.command(self.signal.phase_index(), duration_s)
    }

    /// Moves to the next phase in cyclic order through any needed yellow and
    /// completes as soon as its green starts, leaving the green length to a
    /// following `extend_phase`.
    pub fn advance_to_next_phase(&mut self) -> Result<(), SimError> {
        if !self.signal.is_complete() {
            return Err(SimError::CommandActive { remaining_s: self.signal.remaining_s() });
        }
        let next = (self.signal.phase_index() + 1) % self.spec().phase_count();
        let scenario = Arc::clone(&self.scenario);
        self.signal.command(&scenario.intersection, next, 0);
        Ok(())
    }

    /// Serves an arbitrary phase next; yellow is inserted only if needed.
    pub fn switch_to(&mut self, phase: usize, duration_s: u32) -> Result<(), SimError> {
        self.command(phase, duration_s)
    }

    fn command(&mut self, phase: usize, duration_s: u32) -> Result<(), SimError> {
        if !self.signal.is_complete() {
            return Err(SimError::CommandActive { remaining_s: self.signal.remaining_s() });
        }
        let count = self.spec().phase_count();
        if phase >= count {
            return Err(SimError::NoSuchPhase { index: phase, count });
        }
        if !self.durations.contains(duration_s) {
            return Err(SimError::DurationNotAllowed(duration_s));
        }
        let scenario = Arc::clone(&self.scenario);
        self.signal.command(&scenario.intersection, phase, duration_s);
        Ok(())
    }

    /// Places a stopped vehicle on a lane; it counts as spawned now.
    ///
    /// The position must keep jam spacing to the vehicle ahead, so vehicles
    /// are added front to back.
    pub fn inject_vehicle(&mut self, movement: usize, lane: usize, position_m: f64) -> Result<u64, SimError> {
        let lanes = self.lanes.get_mut(movement).ok_or_else(|| SimError::Placement("no such movement".into()))?;
        let l = lanes.get_mut(lane).ok_or_else(|| SimError::Placement(format!("movement {movement} has no lane {lane}")))?;
        if !(0.0..=APPROACH_LENGTH_M).contains(&position_m) {
            return Err(SimError::Placement(format!("position {position_m} outside the approach")));
        }
        if let Some(tail) = l.vehicles.back() {
            if position_m < tail.position_m + JAM_SPACING_M {
                return Err(SimError::Placement(format!(
                    "position {position_m} closer than jam spacing to vehicle at {}",
                    tail.position_m
                )));
            }
        }
        let id = self.next_vehicle_id;
        self.next_vehicle_id += 1;
        l.vehicles.push_back(Vehicle {
            id,
            movement,
            position_m,
            speed_mps: 0.0,
            waiting_s: 0,
            spawned_at_s: self.clock_s,
            departed_at_s: None,
        });
        self.totals.spawned += 1;
        Ok(id)
    }

    /// Advances the simulation by one second.
    pub fn step(&mut self) -> Result<StepReport, SimError> {
        if self.finished() {
            return Err(SimError::Finished { clock_s: self.clock_s, duration_s: self.scenario.duration_s });
        }
        let t = self.clock_s;
        let scenario = Arc::clone(&self.scenario);
        let spec = &scenario.intersection;
        let zone = spec.detector_length_m;
        let mut report = StepReport::default();

        for m in 0..MOVEMENT_COUNT {
            let green = self.signal.color(m) == Color::Green;
            let mut departures = 0;
            for lane in self.lanes[m].iter_mut() {
                if green && t >= lane.next_discharge_s {
                    if let Some(front) = lane.vehicles.front() {
                        if front.position_m == 0.0 {
                            lane.vehicles.pop_front();
                            lane.next_discharge_s = t + SATURATION_HEADWAY_S;
                            departures += 1;
                        }
                    }
                }

                let mut limit = 0.0;
                for v in lane.vehicles.iter_mut() {
                    let target = (v.position_m - FREE_SPEED_MPS).max(limit);
                    let new_pos = target.min(v.position_m);
                    v.speed_mps = v.position_m - new_pos;
                    v.position_m = new_pos;
                    if v.speed_mps <= WAITING_SPEED_MPS {
                        v.waiting_s += 1;
                        self.totals.waiting_s += 1;
                    }
                    limit = new_pos + JAM_SPACING_M;
                }

                for v in lane.backlog.iter_mut() {
                    v.waiting_s += 1;
                    self.totals.waiting_s += 1;
                }
                while lane.tail_allows_entry() {
                    let Some(mut v) = lane.backlog.pop_front() else { break };
                    v.position_m = APPROACH_LENGTH_M;
                    lane.vehicles.push_back(v);
                }
            }
            report.departures[m] = departures;
            self.totals.departed += departures as u64;

            if let Some(dist) = &self.arrivals[m] {
                let n = dist.sample(&mut self.rng) as u32;
                report.arrivals[m] = n;
                let lane_count = self.lanes[m].len();
                for _ in 0..n {
                    let lane_idx = self.rng.random_range(0..lane_count);
                    let id = self.next_vehicle_id;
                    self.next_vehicle_id += 1;
                    self.totals.spawned += 1;
                    let lane = &mut self.lanes[m][lane_idx];
                    let mut v = Vehicle {
                        id,
                        movement: m,
                        position_m: APPROACH_LENGTH_M,
                        speed_mps: FREE_SPEED_MPS,
                        waiting_s: 0,
                        spawned_at_s: t,
                        departed_at_s: None,
                    };
                    if lane.has_entry_room() {
                        lane.vehicles.push_back(v);
                    } else {
                        v.speed_mps = 0.0;
                        lane.backlog.push_back(v);
                    }
                }
            }

            let lanes = &self.lanes[m];
            let (occupancy, queue) = if lanes.is_empty() {
                (0.0, 0)
            } else {
                let mut occ = 0.0;
                let mut queue = 0;
                for lane in lanes {
                    let in_zone = lane.vehicles.iter().take_while(|v| v.position_m < zone);
                    let mut count = 0u32;
                    for v in in_zone {
                        count += 1;
                        if v.speed_mps <= WAITING_SPEED_MPS {
                            queue += 1;
                        }
                    }
                    occ += (count as f64 * JAM_SPACING_M / zone).min(1.0);
                }
                (occ / lanes.len() as f64, queue)
            };
            self.detectors.record(m, departures, occupancy, queue);
        }

        self.signal.tick(spec);
        self.clock_s += 1;
        report.clock_s = self.clock_s;
        Ok(report)
    }

    /// Steps until the running command completes or the episode ends.
    pub fn run_command(&mut self) -> Result<u32, SimError> {
        let mut steps = 0;
        while !self.signal.is_complete() && !self.finished() {
            self.step()?;
            steps += 1;
        }
        Ok(steps)
    }

    pub fn read_observation(&self, movement: usize, window_s: u32) -> Result<RawObservation, SimError> {
        if window_s == 0 {
            return Err(SimError::EmptyWindow);
        }
        let slot = &self.spec().movements[movement];
        if !slot.present {
            return Ok(RawObservation::default());
        }
        Ok(self.detectors.observe(movement, window_s, slot.lane_count))
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        let t = self.totals;
        EpisodeMetrics {
            avg_waiting_s: if t.spawned == 0 { 0.0 } else { t.waiting_s as f64 / t.spawned as f64 },
            vehicles: t.spawned,
            throughput: t.departed,
        }
    }
}
