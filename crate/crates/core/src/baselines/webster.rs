use crate::harness::Controller;
use crate::microsim::{DurationSet, SimError, SimWorld, SATURATION_HEADWAY_S};
use crate::topology::{IntersectionSpec, MOVEMENT_COUNT};

/// Saturation flow per lane in veh/h, from the simulator's discharge headway.
pub const SATURATION_FLOW_VPH: f64 = 3600.0 / SATURATION_HEADWAY_S as f64;
pub const MAX_CYCLE_S: f64 = 180.0;
/// Flow-ratio sum at which the formula is abandoned for the maximum cycle.
pub const SATURATION_Y: f64 = 0.95;
/// Green per phase before any volumes have been measured.
pub const DEFAULT_GREEN_S: u32 = 20;
/// Cycles averaged into the volume estimate (a running mean until this
/// many have been seen, then an exponential average with weight 1/N).
pub const VOLUME_MEMORY_CYCLES: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct WebsterPlan {
    pub cycle_s: f64,
    pub green_splits: Vec<f64>,
    pub lost_time_s: f64,
    /// Critical flow ratio per phase.
    pub flow_ratios: Vec<f64>,
    /// Y reached the saturation threshold; the cycle was pinned to the maximum.
    pub saturated: bool,
}

impl WebsterPlan {
    pub fn y_total(&self) -> f64 {
        self.flow_ratios.iter().sum()
    }

    /// Greens rounded to whole seconds (at least 1 s) for the simulator.
    pub fn rounded_greens(&self) -> Vec<u32> {
        self.green_splits.iter().map(|g| g.round().max(1.0) as u32).collect()
    }
}

/// Cycle length `(1.5 L + 5) / (1 − Y)` clamped to `[min_cycle, 180]`.
pub fn webster_cycle(lost_time_s: f64, y_total: f64, min_cycle_s: f64) -> (f64, bool) {
    if y_total >= SATURATION_Y {
        return (MAX_CYCLE_S.max(min_cycle_s), true);
    }
    let c = (1.5 * lost_time_s + 5.0) / (1.0 - y_total);
    (c.clamp(min_cycle_s, MAX_CYCLE_S.max(min_cycle_s)), false)
}

/// Plan from per-movement volumes in veh/h.
pub fn webster_plan(volumes_vph: &[f64; MOVEMENT_COUNT], spec: &IntersectionSpec) -> WebsterPlan {
    let n = spec.phase_count();
    let min_green = spec.min_green_s as f64;
    let flow_ratios: Vec<f64> = spec
        .phases
        .iter()
        .map(|p| {
            p.movements()
                .iter()
                .map(|&m| {
                    let lanes = spec.movements[m].lanes().max(1) as f64;
                    volumes_vph[m].max(0.0) / (SATURATION_FLOW_VPH * lanes)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let y_total: f64 = flow_ratios.iter().sum();
    let lost_time_s = (spec.yellow_s as usize * n) as f64;
    let min_cycle = min_green * n as f64 + lost_time_s;
    let (cycle_s, saturated) = webster_cycle(lost_time_s, y_total, min_cycle);
    let green_splits = split_greens(cycle_s - lost_time_s, &flow_ratios, min_green);
    WebsterPlan { cycle_s, green_splits, lost_time_s, flow_ratios, saturated }
}

/// Distributes `effective` seconds proportionally to `y`, lifting any
/// phase below `min_green` to the floor and re-splitting the rest.
fn split_greens(effective: f64, y: &[f64], min_green: f64) -> Vec<f64> {
    let n = y.len();
    let mut floored = vec![false; n];
    loop {
        let free = effective - min_green * floored.iter().filter(|&&f| f).count() as f64;
        let open: Vec<usize> = (0..n).filter(|&i| !floored[i]).collect();
        let y_open: f64 = open.iter().map(|&i| y[i]).sum();
        let mut greens = vec![min_green; n];
        for &i in &open {
            greens[i] = if y_open > 0.0 { free * y[i] / y_open } else { free / open.len() as f64 };
        }
        let below: Vec<usize> = open.iter().copied().filter(|&i| greens[i] < min_green - 1e-12).collect();
        if below.is_empty() {
            return greens;
        }
        for i in below {
            floored[i] = true;
        }
    }
}

/// Webster plan re-derived at every cycle boundary from stop-line counts,
/// folding the cycle that just ended into a smoothed volume estimate.
#[derive(Debug, Clone)]
pub struct AdaptiveWebster {
    plan: Option<WebsterPlan>,
    volumes_vph: [f64; MOVEMENT_COUNT],
    cycles_measured: u32,
    greens: Vec<u32>,
    cycle_start_s: u32,
    cycle_start_counts: [u64; MOVEMENT_COUNT],
    history: Vec<WebsterPlan>,
}

impl Default for AdaptiveWebster {
    fn default() -> Self {
        Self::new()
    }
}

impl AdaptiveWebster {
    pub fn new() -> Self {
        Self {
            plan: None,
            volumes_vph: [0.0; MOVEMENT_COUNT],
            cycles_measured: 0,
            greens: vec![],
            cycle_start_s: 0,
            cycle_start_counts: [0; MOVEMENT_COUNT],
            history: vec![],
        }
    }

    /// Plans applied so far, one per completed recomputation.
    pub fn history(&self) -> &[WebsterPlan] {
        &self.history
    }

    /// Current smoothed per-movement volumes in veh/h.
    pub fn volumes_vph(&self) -> &[f64; MOVEMENT_COUNT] {
        &self.volumes_vph
    }

    fn recompute(&mut self, world: &SimWorld) {
        let elapsed = world.clock_s().saturating_sub(self.cycle_start_s);
        if elapsed == 0 {
            return;
        }
        self.cycles_measured += 1;
        let weight = 1.0 / self.cycles_measured.min(VOLUME_MEMORY_CYCLES) as f64;
        for m in 0..MOVEMENT_COUNT {
            let count = world.detectors().crossings_total(m) - self.cycle_start_counts[m];
            let vph = count as f64 * 3600.0 / elapsed as f64;
            self.volumes_vph[m] += weight * (vph - self.volumes_vph[m]);
        }
        let plan = webster_plan(&self.volumes_vph, world.spec());
        if plan.saturated {
            log::debug!("webster: Y = {:.3} at t={}s, cycle pinned to {MAX_CYCLE_S}s", plan.y_total(), world.clock_s());
        }
        self.greens = plan.rounded_greens();
        self.history.push(plan.clone());
        self.plan = Some(plan);
        self.mark_cycle_start(world);
    }

    fn mark_cycle_start(&mut self, world: &SimWorld) {
        self.cycle_start_s = world.clock_s();
        self.cycle_start_counts = std::array::from_fn(|m| world.detectors().crossings_total(m));
    }
}

impl Controller for AdaptiveWebster {
    fn name(&self) -> String {
        "webster".into()
    }

    fn durations(&self) -> DurationSet {
        DurationSet::Any
    }

    fn reset(&mut self, world: &SimWorld) {
        *self = Self::new();
        self.greens = vec![DEFAULT_GREEN_S; world.spec().phase_count()];
        self.mark_cycle_start(world);
    }

    fn command(&mut self, world: &mut SimWorld) -> Result<(), SimError> {
        let n = world.spec().phase_count();
        if self.greens.len() != n {
            self.reset(world);
        }
        let next = (world.signal().phase_index() + 1) % n;
        if next == 0 {
            self.recompute(world);
        }
        world.begin_phase(self.greens[next])
    }
}

/// Cyclic plan with fixed greens.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTime {
    /// One entry per phase, or a single entry used for every phase.
    pub greens: Vec<u32>,
}

impl FixedTime {
    pub fn uniform(green_s: u32) -> Self {
        Self { greens: vec![green_s] }
    }
}

impl Controller for FixedTime {
    fn name(&self) -> String {
        match self.greens.as_slice() {
            [g] => format!("fixed-{g}"),
            gs => format!("fixed-{}", gs.iter().map(u32::to_string).collect::<Vec<_>>().join("-")),
        }
    }

    fn durations(&self) -> DurationSet {
        DurationSet::Any
    }

    fn check(&self, spec: &IntersectionSpec) -> Result<(), String> {
        if self.greens.len() != 1 && self.greens.len() != spec.phase_count() {
            return Err(format!("{} greens for {} phases", self.greens.len(), spec.phase_count()));
        }
        if self.greens.contains(&0) {
            return Err("green of 0 s".into());
        }
        Ok(())
    }

    fn command(&mut self, world: &mut SimWorld) -> Result<(), SimError> {
        let next = (world.signal().phase_index() + 1) % world.spec().phase_count();
        let g = if self.greens.len() == 1 { self.greens[0] } else { self.greens[next] };
        world.begin_phase(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::catalog_entry;

    fn spec(id: &str) -> IntersectionSpec {
        catalog_entry(id).unwrap().scenario.intersection
    }

    #[test]
    fn textbook_cycle() {
        // 4 phases, y = 0.15 each: C = (1.5·12 + 5) / 0.4 = 57.5
        let s = spec("INT2-1");
        let mut v = [0.0; MOVEMENT_COUNT];
        for m in 0..MOVEMENT_COUNT {
            if s.movements[m].present {
                v[m] = 0.15 * SATURATION_FLOW_VPH * s.movements[m].lanes() as f64;
            }
        }
        let plan = webster_plan(&v, &s);
        assert!((plan.y_total() - 0.6).abs() < 1e-12);
        assert_eq!(plan.lost_time_s, 12.0);
        assert!((plan.cycle_s - 57.5).abs() < 1e-9);
        for g in &plan.green_splits {
            assert!((g - 45.5 / 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_volume_gives_minimum_cycle() {
        for id in ["INT1-1", "INT1-3", "INT2-3", "INT3-1"] {
            let s = spec(id);
            let plan = webster_plan(&[0.0; MOVEMENT_COUNT], &s);
            let n = s.phase_count() as f64;
            assert_eq!(plan.cycle_s, 5.0 * n + 3.0 * n, "{id}");
            assert!(plan.green_splits.iter().all(|&g| g == 5.0));
        }
    }

    #[test]
    fn saturation_pins_cycle() {
        let (c, sat) = webster_cycle(12.0, 0.97, 32.0);
        assert!(sat);
        assert_eq!(c, 180.0);
        let (c, sat) = webster_cycle(12.0, 0.9, 32.0);
        assert!(!sat);
        assert_eq!(c, 180.0); // 230 clamped
    }

    #[test]
    fn sum_identity_and_floor() {
        let s = spec("INT1-3");
        let v = [900.0, 50.0, 400.0, 10.0, 380.0, 0.0, 870.0, 60.0];
        let plan = webster_plan(&v, &s);
        let total: f64 = plan.green_splits.iter().sum::<f64>() + plan.lost_time_s;
        assert!((total - plan.cycle_s).abs() < 1e-9);
        assert!(plan.green_splits.iter().all(|&g| g >= 5.0 - 1e-12));
    }

    #[test]
    fn symmetric_demand_equal_greens() {
        let s = spec("INT1-1");
        let v = [600.0, 200.0, 600.0, 200.0, 600.0, 200.0, 600.0, 200.0];
        let plan = webster_plan(&v, &s);
        // N/S and E/W have identical lane counts per movement pair only partly;
        // the two left-turn phases see identical y here
        assert!((plan.green_splits[1] - plan.green_splits[3]).abs() < 1e-9);
    }

    #[test]
    fn fixed_time_rejects_wrong_plan_length() {
        let f = FixedTime { greens: vec![10, 20, 30] };
        assert!(f.check(&spec("INT1-1")).is_err());
        assert!(f.check(&spec("INT3-1")).is_ok());
    }
}
