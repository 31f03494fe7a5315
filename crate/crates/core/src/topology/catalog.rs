//! The eleven built-in intersections: eight for training, three held out.

use super::{
    approach_road, IntersectionSpec, MovementSlot, PhaseSpec, ScenarioSpec,
    DEFAULT_DETECTOR_LENGTH_M, DEFAULT_MIN_GREEN_S, DEFAULT_YELLOW_S, MOVEMENT_COUNT,
};

/// Saturation flow of one lane in vehicles per second (2 s headway).
const LANE_SATURATION_VPS: f64 = 0.5;

/// Episode length of the catalog templates.
pub const CATALOG_DURATION_S: u32 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub scenario: ScenarioSpec,
    pub split: Split,
}

// Slot shorthands.
const N: usize = 0;
const NL: usize = 1;
const E: usize = 2;
const EL: usize = 3;
const W: usize = 4;
const WL: usize = 5;
const S: usize = 6;
const SL: usize = 7;

/// Splits each approach road's lanes between its through and left-turn slots.
///
/// A road carrying both gets one left lane (two from five lanes up) and the
/// rest through; a through-only road loses its kerb lane to right turns; a
/// left-only stem gives half its lanes to the left turn.
fn allocate_lanes(lanes_per_road: [u32; 4], present: &[usize]) -> [MovementSlot; MOVEMENT_COUNT] {
    let mut slots: [MovementSlot; MOVEMENT_COUNT] = std::array::from_fn(MovementSlot::absent);
    for road in 0..4 {
        let n = lanes_per_road[road];
        let through = (0..MOVEMENT_COUNT).find(|&i| i % 2 == 0 && approach_road(i) == road).unwrap();
        let left = through + 1;
        let has_through = present.contains(&through);
        let has_left = present.contains(&left);
        let (t, l) = match (has_through, has_left) {
            (true, true) => {
                let l = if n >= 5 { 2 } else { 1 };
                (n - l, l)
            }
            (true, false) => (n.saturating_sub(1).max(1), 0),
            (false, true) => (0, (n / 2).max(1)),
            (false, false) => (0, 0),
        };
        if has_through {
            slots[through] = MovementSlot { present: true, is_straight: true, lane_count: t };
        }
        if has_left {
            slots[left] = MovementSlot { present: true, is_straight: false, lane_count: l };
        }
    }
    slots
}

fn intersection(id: &str, lanes_per_road: [u32; 4], phases: &[&[usize]]) -> IntersectionSpec {
    let mut present: Vec<usize> = phases.iter().flat_map(|p| p.iter().copied()).collect();
    present.sort_unstable();
    present.dedup();
    IntersectionSpec {
        id: id.to_string(),
        roads: lanes_per_road.iter().filter(|&&n| n > 0).count() as u32,
        lanes_per_road,
        movements: allocate_lanes(lanes_per_road, &present),
        phases: phases.iter().map(|p| PhaseSpec::new(p.to_vec())).collect(),
        min_green_s: DEFAULT_MIN_GREEN_S,
        yellow_s: DEFAULT_YELLOW_S,
        detector_length_m: DEFAULT_DETECTOR_LENGTH_M,
    }
}

/// Demand expressed as flow ratios (arrivals / saturation flow) per slot.
fn scenario(spec: IntersectionSpec, flow_ratio: [f64; MOVEMENT_COUNT], seed: u64) -> ScenarioSpec {
    let arrival_rates = std::array::from_fn(|i| {
        let lanes = spec.movements[i].lanes() as f64;
        flow_ratio[i] * LANE_SATURATION_VPS * lanes
    });
    ScenarioSpec { intersection: spec, arrival_rates, duration_s: CATALOG_DURATION_S, seed }
}

// Flow ratios: a busier north-south axis, lighter cross street and lefts.
const FOUR_WAY_DEMAND: [f64; MOVEMENT_COUNT] = [0.22, 0.16, 0.15, 0.11, 0.15, 0.11, 0.22, 0.16];
const THREE_WAY_DEMAND: [f64; MOVEMENT_COUNT] = [0.0, 0.0, 0.22, 0.16, 0.22, 0.0, 0.0, 0.16];

/// Returns the catalog in table order: INT1-1 … INT3-2 (training), INT4, INT5, INT6 (test).
pub fn builtin_catalog() -> Vec<CatalogEntry> {
    let four_phase: &[&[usize]] = &[&[N, S], &[NL, SL], &[E, W], &[EL, WL]];
    let four_phase_reordered: &[&[usize]] = &[&[NL, SL], &[N, S], &[EL, WL], &[E, W]];
    let five_phase: &[&[usize]] = &[&[N, S], &[NL, SL], &[N, NL], &[E, W], &[EL, WL]];
    let two_phase: &[&[usize]] = &[&[N, NL, S, SL], &[E, EL, W, WL]];
    let tee: &[&[usize]] = &[&[E, W], &[E, EL], &[SL]];
    let tee_reordered: &[&[usize]] = &[&[E, W], &[SL], &[E, EL]];

    let int3_1 = intersection("INT3-1", [0, 4, 4, 4], tee);
    let mut int6 = int3_1.rotate(3);
    int6.id = "INT6".into();
    let mut int6_demand = [0.0; MOVEMENT_COUNT];
    for (slot, &y) in THREE_WAY_DEMAND.iter().enumerate() {
        int6_demand[super::rotate_slot(slot, 3)] = y;
    }

    let entries = [
        (intersection("INT1-1", [5, 4, 4, 4], four_phase), FOUR_WAY_DEMAND, Split::Train),
        (intersection("INT1-2", [5, 4, 4, 4], four_phase_reordered), FOUR_WAY_DEMAND, Split::Train),
        (intersection("INT1-3", [5, 4, 4, 4], five_phase), FOUR_WAY_DEMAND, Split::Train),
        (intersection("INT2-1", [3, 3, 3, 3], four_phase), FOUR_WAY_DEMAND, Split::Train),
        (intersection("INT2-2", [3, 3, 3, 3], four_phase_reordered), FOUR_WAY_DEMAND, Split::Train),
        (intersection("INT2-3", [3, 3, 3, 3], two_phase), FOUR_WAY_DEMAND, Split::Train),
        (int3_1, THREE_WAY_DEMAND, Split::Train),
        (intersection("INT3-2", [0, 4, 4, 4], tee_reordered), THREE_WAY_DEMAND, Split::Train),
        (intersection("INT4", [5, 4, 5, 4], four_phase), FOUR_WAY_DEMAND, Split::Test),
        (intersection("INT5", [5, 4, 4, 4], two_phase), FOUR_WAY_DEMAND, Split::Test),
        (int6, int6_demand, Split::Test),
    ];
    entries
        .into_iter()
        .enumerate()
        .map(|(i, (spec, demand, split))| CatalogEntry {
            scenario: scenario(spec, demand, 1000 + i as u64),
            split,
        })
        .collect()
}

pub fn catalog_entry(id: &str) -> Option<CatalogEntry> {
    builtin_catalog().into_iter().find(|e| e.scenario.id() == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_row(id: &str) -> (u32, [u32; 4], usize) {
        let e = catalog_entry(id).unwrap();
        let i = &e.scenario.intersection;
        (i.roads, i.lanes_per_road, i.phase_count())
    }

    #[test]
    fn catalog_matches_configuration_table() {
        let expected = [
            ("INT1-1", 4, [5, 4, 4, 4], 4),
            ("INT1-2", 4, [5, 4, 4, 4], 4),
            ("INT1-3", 4, [5, 4, 4, 4], 5),
            ("INT2-1", 4, [3, 3, 3, 3], 4),
            ("INT2-2", 4, [3, 3, 3, 3], 4),
            ("INT2-3", 4, [3, 3, 3, 3], 2),
            ("INT3-1", 3, [0, 4, 4, 4], 3),
            ("INT3-2", 3, [0, 4, 4, 4], 3),
            ("INT4", 4, [5, 4, 5, 4], 4),
            ("INT5", 4, [5, 4, 4, 4], 2),
            ("INT6", 3, [4, 4, 4, 0], 3),
        ];
        for (id, roads, lanes, phases) in expected {
            assert_eq!(table_row(id), (roads, lanes, phases), "{id}");
        }
    }

    #[test]
    fn eight_training_three_test() {
        let cat = builtin_catalog();
        assert_eq!(cat.len(), 11);
        assert_eq!(cat.iter().filter(|e| e.split == Split::Train).count(), 8);
        let test: Vec<_> = cat.iter().filter(|e| e.split == Split::Test).map(|e| e.scenario.id()).collect();
        assert_eq!(test, vec!["INT4", "INT5", "INT6"]);
    }

    #[test]
    fn every_entry_validates_and_has_expected_movement_count() {
        for e in builtin_catalog() {
            e.scenario.validate().unwrap();
            let i = &e.scenario.intersection;
            let expected = if i.roads == 4 { 8 } else { 4 };
            assert_eq!(i.present_count(), expected, "{}", i.id);
            assert!(e.scenario.arrival_rates.iter().any(|&r| r > 0.0));
        }
    }

    #[test]
    fn int1_2_is_a_reordering_of_int1_1() {
        let a = catalog_entry("INT1-1").unwrap().scenario.intersection;
        let b = catalog_entry("INT1-2").unwrap().scenario.intersection;
        assert_eq!(a.movements, b.movements);
        assert_ne!(a.phases, b.phases);
        let mut pa = a.phases.clone();
        let mut pb = b.phases.clone();
        pa.sort_by(|x, y| x.movements().cmp(y.movements()));
        pb.sort_by(|x, y| x.movements().cmp(y.movements()));
        assert_eq!(pa, pb);
        // not merely a cyclic shift of the same sequence
        for k in 0..a.phases.len() {
            let mut rotated = a.phases.clone();
            rotated.rotate_left(k);
            assert_ne!(rotated, b.phases);
        }
    }

    #[test]
    fn int6_is_rotated_int3_1() {
        let int3 = catalog_entry("INT3-1").unwrap().scenario;
        let int6 = catalog_entry("INT6").unwrap().scenario;
        let rotated = int3.intersection.rotate(3);
        assert_eq!(rotated.lanes_per_road, [4, 4, 4, 0]);
        assert_eq!(rotated.movements, int6.intersection.movements);
        assert_eq!(rotated.phases, int6.intersection.phases);
        assert_eq!(int3.rotate(3).arrival_rates, int6.arrival_rates);
    }
}
