use crate::topology::{IntersectionSpec, MOVEMENT_COUNT};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Green,
    Yellow,
    Red,
}

impl Color {
    pub fn code(self) -> char {
        match self {
            Color::Green => 'G',
            Color::Yellow => 'Y',
            Color::Red => 'R',
        }
    }
}

/// Green durations a world accepts in phase commands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DurationSet {
    Discrete(Vec<u32>),
    /// Any positive number of seconds (classical controllers).
    Any,
}

impl DurationSet {
    pub fn contains(&self, duration_s: u32) -> bool {
        match self {
            DurationSet::Discrete(v) => v.contains(&duration_s),
            DurationSet::Any => duration_s > 0,
        }
    }
}

/// Per-movement colors plus the command currently being executed.
///
/// A command is "yellow interlude (if needed), then green for N seconds".
/// Movements shared by the outgoing and incoming phase stay green through
/// the interlude; only green -> red edges get yellow.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalState {
    colors: [Color; MOVEMENT_COUNT],
    elapsed_s: [u32; MOVEMENT_COUNT],
    phase_index: usize,
    in_yellow: bool,
    yellow_remaining_s: u32,
    green_remaining_s: u32,
}

impl SignalState {
    /// Phase 0 is displayed with its command already complete.
    pub fn new(spec: &IntersectionSpec) -> Self {
        let mut colors = [Color::Red; MOVEMENT_COUNT];
        for &m in spec.phases[0].movements() {
            colors[m] = Color::Green;
        }
        Self {
            colors,
            elapsed_s: [0; MOVEMENT_COUNT],
            phase_index: 0,
            in_yellow: false,
            yellow_remaining_s: 0,
            green_remaining_s: 0,
        }
    }

    pub fn color(&self, movement: usize) -> Color {
        self.colors[movement]
    }

    pub fn colors(&self) -> &[Color; MOVEMENT_COUNT] {
        &self.colors
    }

    /// Seconds the movement has shown its current color.
    pub fn elapsed_s(&self, movement: usize) -> u32 {
        self.elapsed_s[movement]
    }

    pub fn phase_index(&self) -> usize {
        self.phase_index
    }

    pub fn in_yellow(&self) -> bool {
        self.in_yellow
    }

    pub fn is_complete(&self) -> bool {
        self.yellow_remaining_s == 0 && self.green_remaining_s == 0
    }

    pub fn remaining_s(&self) -> u32 {
        self.yellow_remaining_s + self.green_remaining_s
    }

    /// Starts serving `target` for `green_s` seconds, inserting yellow for
    /// every green movement that `target` does not keep.
    pub(crate) fn command(&mut self, spec: &IntersectionSpec, target: usize, green_s: u32) {
        debug_assert!(self.is_complete());
        let phase = &spec.phases[target];
        let leaving: Vec<usize> = (0..MOVEMENT_COUNT)
            .filter(|&m| self.colors[m] == Color::Green && !phase.contains(m))
            .collect();
        self.phase_index = target;
        self.green_remaining_s = green_s;
        if leaving.is_empty() {
            self.light_phase(spec);
        } else {
            for m in leaving {
                self.set(m, Color::Yellow);
            }
            self.in_yellow = true;
            self.yellow_remaining_s = spec.yellow_s;
        }
    }

    fn light_phase(&mut self, spec: &IntersectionSpec) {
        for m in 0..MOVEMENT_COUNT {
            let c = if spec.phases[self.phase_index].contains(m) { Color::Green } else { Color::Red };
            self.set(m, c);
        }
        self.in_yellow = false;
    }

    fn set(&mut self, movement: usize, color: Color) {
        if self.colors[movement] != color {
            self.colors[movement] = color;
            self.elapsed_s[movement] = 0;
        }
    }

    /// Advances the controller clock by one second.
    pub(crate) fn tick(&mut self, spec: &IntersectionSpec) {
        for e in self.elapsed_s.iter_mut() {
            *e += 1;
        }
        if self.yellow_remaining_s > 0 {
            self.yellow_remaining_s -= 1;
            if self.yellow_remaining_s == 0 {
                self.light_phase(spec);
            }
        } else if self.green_remaining_s > 0 {
            self.green_remaining_s -= 1;
        }
    }
}
