use crate::topology::MOVEMENT_COUNT;
use std::collections::VecDeque;

/// Seconds of per-second samples retained for windowed reads.
pub const DETECTOR_HISTORY_S: usize = 512;

/// Windowed traffic measurements for one movement.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RawObservation {
    /// Stop-line crossings per second per lane.
    pub flow: f64,
    pub occ_mean: f64,
    pub occ_max: f64,
    /// Stopped vehicles currently inside the detector zone.
    pub queue: u32,
}

/// Induction loops at the stop line plus a lane-area detector over the last
/// stretch of every approach lane, aggregated per movement.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBank {
    loop_counts: [VecDeque<u32>; MOVEMENT_COUNT],
    occupancy: [VecDeque<f64>; MOVEMENT_COUNT],
    queue: [u32; MOVEMENT_COUNT],
    crossings_total: [u64; MOVEMENT_COUNT],
}

impl Default for DetectorBank {
    fn default() -> Self {
        Self::new()
    }
}

impl DetectorBank {
    pub fn new() -> Self {
        Self {
            loop_counts: std::array::from_fn(|_| VecDeque::with_capacity(DETECTOR_HISTORY_S)),
            occupancy: std::array::from_fn(|_| VecDeque::with_capacity(DETECTOR_HISTORY_S)),
            queue: [0; MOVEMENT_COUNT],
            crossings_total: [0; MOVEMENT_COUNT],
        }
    }

    /// Appends one second of measurements for a movement.
    pub fn record(&mut self, movement: usize, crossings: u32, occupancy: f64, queue: u32) {
        debug_assert!((0.0..=1.0).contains(&occupancy));
        push_bounded(&mut self.loop_counts[movement], crossings);
        push_bounded(&mut self.occupancy[movement], occupancy);
        self.queue[movement] = queue;
        self.crossings_total[movement] += crossings as u64;
    }

    pub fn queue(&self, movement: usize) -> u32 {
        self.queue[movement]
    }

    /// Stop-line crossings since the world was created.
    pub fn crossings_total(&self, movement: usize) -> u64 {
        self.crossings_total[movement]
    }

    pub fn occupancy_samples(&self, movement: usize) -> impl Iterator<Item = f64> + '_ {
        self.occupancy[movement].iter().copied()
    }

    /// Flow, occupancy and queue over the last `window_s` seconds.
    ///
    /// Flow divides by the full window even when fewer seconds have been
    /// simulated; occupancy statistics use the samples that exist.
    pub fn observe(&self, movement: usize, window_s: u32, lanes: u32) -> RawObservation {
        let w = window_s as usize;
        let counts = &self.loop_counts[movement];
        let crossings: u32 = counts.iter().rev().take(w).sum();
        let occ = &self.occupancy[movement];
        let n = occ.len().min(w);
        let (sum, max) = occ
            .iter()
            .rev()
            .take(w)
            .fold((0.0, 0.0f64), |(s, m), &o| (s + o, m.max(o)));
        RawObservation {
            flow: if lanes == 0 { 0.0 } else { crossings as f64 / window_s as f64 / lanes as f64 },
            occ_mean: if n == 0 { 0.0 } else { sum / n as f64 },
            occ_max: max,
            queue: self.queue[movement],
        }
    }
}

fn push_bounded<T>(buf: &mut VecDeque<T>, value: T) {
    if buf.len() == DETECTOR_HISTORY_S {
        buf.pop_front();
    }
    buf.push_back(value);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bank_reads_zero() {
        let bank = DetectorBank::new();
        assert_eq!(bank.observe(0, 10, 2), RawObservation::default());
    }

    #[test]
    fn flow_is_per_second_per_lane() {
        let mut bank = DetectorBank::new();
        for s in 0..20 {
            bank.record(2, if s % 2 == 0 { 1 } else { 0 }, 0.0, 0);
        }
        let obs = bank.observe(2, 20, 2);
        assert_eq!(obs.flow, 10.0 / 20.0 / 2.0);
        assert_eq!(obs.flow, 0.25);
    }

    #[test]
    fn occupancy_mean_and_max_over_window() {
        let mut bank = DetectorBank::new();
        bank.record(0, 0, 0.9, 0); // outside the window
        for o in [0.1, 0.3, 0.2] {
            bank.record(0, 0, o, 0);
        }
        let obs = bank.observe(0, 3, 1);
        assert!((obs.occ_mean - 0.2).abs() < 1e-12);
        assert_eq!(obs.occ_max, 0.3);
    }

    #[test]
    fn history_is_bounded() {
        let mut bank = DetectorBank::new();
        for _ in 0..DETECTOR_HISTORY_S + 10 {
            bank.record(1, 1, 0.5, 0);
        }
        assert_eq!(bank.occupancy_samples(1).count(), DETECTOR_HISTORY_S);
        assert_eq!(bank.crossings_total(1), (DETECTOR_HISTORY_S + 10) as u64);
    }
}
