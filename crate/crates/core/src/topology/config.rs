//! JSON scenario files.
//!
//! ```json
//! {
//!   "id": "INT1-1",
//!   "roads": 4,
//!   "lanes_per_road": [5, 4, 4, 4],
//!   "movements": [{"present": true, "is_straight": true, "lane_count": 3}, ...],
//!   "phases": [[0, 6], [1, 7], [2, 4], [3, 5]],
//!   "min_green_s": 5,
//!   "arrival_rates": [0.3, 0.1, 0.2, 0.05, 0.2, 0.05, 0.3, 0.1],
//!   "duration_s": 3600,
//!   "seed": 7
//! }
//! ```
//!
//! `yellow_s` (default 3) and `detector_length_m` (default 100) are optional.

use super::{
    IntersectionSpec, MovementSlot, PhaseSpec, ScenarioSpec, DEFAULT_DETECTOR_LENGTH_M,
    DEFAULT_YELLOW_S, MOVEMENT_COUNT,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Semantic(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    id: String,
    roads: u32,
    lanes_per_road: [u32; 4],
    movements: Vec<MovementSlot>,
    phases: Vec<Vec<usize>>,
    min_green_s: u32,
    #[serde(default = "default_yellow")]
    yellow_s: u32,
    #[serde(default = "default_detector")]
    detector_length_m: f64,
    arrival_rates: Vec<f64>,
    duration_s: u32,
    seed: u64,
}

fn default_yellow() -> u32 {
    DEFAULT_YELLOW_S
}

fn default_detector() -> f64 {
    DEFAULT_DETECTOR_LENGTH_M
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ConfigError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let semantic = ConfigError::Semantic;
    if file.movements.len() != MOVEMENT_COUNT {
        return Err(semantic(format!("expected 8 movements, got {}", file.movements.len())));
    }
    if file.arrival_rates.len() != MOVEMENT_COUNT {
        return Err(semantic(format!("expected 8 arrival rates, got {}", file.arrival_rates.len())));
    }
    let movements: [MovementSlot; MOVEMENT_COUNT] = std::array::from_fn(|i| {
        let mut m = file.movements[i].clone();
        if !m.present {
            m.lane_count = 0;
        }
        m
    });
    let mut arrival_rates = [0.0; MOVEMENT_COUNT];
    arrival_rates.copy_from_slice(&file.arrival_rates);
    let scenario = ScenarioSpec {
        intersection: IntersectionSpec {
            id: file.id,
            roads: file.roads,
            lanes_per_road: file.lanes_per_road,
            movements,
            phases: file.phases.into_iter().map(PhaseSpec::new).collect(),
            min_green_s: file.min_green_s,
            yellow_s: file.yellow_s,
            detector_length_m: file.detector_length_m,
        },
        arrival_rates,
        duration_s: file.duration_s,
        seed: file.seed,
    };
    scenario.validate().map_err(semantic)?;
    Ok(scenario)
}

impl ScenarioSpec {
    /// Serializes to the scenario file format read by [`parse_scenario`].
    pub fn to_json(&self) -> String {
        let i = &self.intersection;
        let file = ScenarioFile {
            id: i.id.clone(),
            roads: i.roads,
            lanes_per_road: i.lanes_per_road,
            movements: i.movements.to_vec(),
            phases: i.phases.iter().map(|p| p.movements().to_vec()).collect(),
            min_green_s: i.min_green_s,
            yellow_s: i.yellow_s,
            detector_length_m: i.detector_length_m,
            arrival_rates: self.arrival_rates.to_vec(),
            duration_s: self.duration_s,
            seed: self.seed,
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::catalog_entry;

    #[test]
    fn int1_1_has_eight_movements() {
        let text = catalog_entry("INT1-1").unwrap().scenario.to_json();
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.intersection.roads, 4);
        assert_eq!(s.intersection.lanes_per_road, [5, 4, 4, 4]);
        assert_eq!(s.intersection.phase_count(), 4);
        assert_eq!(s.intersection.present_count(), 8);
    }

    #[test]
    fn int3_1_has_four_movements() {
        let text = catalog_entry("INT3-1").unwrap().scenario.to_json();
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.intersection.roads, 3);
        assert_eq!(s.intersection.lanes_per_road, [0, 4, 4, 4]);
        assert_eq!(s.intersection.phase_count(), 3);
        let present: Vec<_> = s.intersection.present().collect();
        // E, EL, W, SL
        assert_eq!(present, vec![2, 3, 4, 7]);
    }

    #[test]
    fn phase_with_out_of_range_index_is_semantic_error() {
        let text = catalog_entry("INT1-1").unwrap().scenario.to_json();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["phases"][0] = serde_json::json!([0, 9]);
        let err = parse_scenario(&v.to_string()).unwrap_err();
        match err {
            ConfigError::Semantic(msg) => assert!(msg.contains("index 9"), "{msg}"),
            other => panic!("expected semantic error, got {other:?}"),
        }
    }

    #[test]
    fn phase_with_absent_movement_is_rejected() {
        let text = catalog_entry("INT3-1").unwrap().scenario.to_json();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["phases"][0] = serde_json::json!([0, 2]);
        let err = parse_scenario(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("absent movement 0"), "{err}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_scenario("{\n  \"id\": \"x\",\n  \"roads\": 4,,\n}").unwrap_err();
        match err {
            ConfigError::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn rate_on_absent_movement_is_rejected() {
        let text = catalog_entry("INT3-1").unwrap().scenario.to_json();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["arrival_rates"][0] = serde_json::json!(0.1);
        assert!(matches!(parse_scenario(&v.to_string()), Err(ConfigError::Semantic(_))));
    }

    #[test]
    fn optional_timing_keys_default() {
        let text = catalog_entry("INT2-1").unwrap().scenario.to_json();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("yellow_s");
        obj.remove("detector_length_m");
        let s = parse_scenario(&v.to_string()).unwrap();
        assert_eq!(s.intersection.yellow_s, 3);
        assert_eq!(s.intersection.detector_length_m, 100.0);
    }

    #[test]
    fn zero_duration_is_rejected() {
        let text = catalog_entry("INT2-1").unwrap().scenario.to_json();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["duration_s"] = serde_json::json!(0);
        assert!(parse_scenario(&v.to_string()).is_err());
    }
}
