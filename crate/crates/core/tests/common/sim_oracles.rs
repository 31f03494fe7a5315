//! Simulator oracle checks shared by the simulator and acceptance suites.

use adlight::baselines::FixedTime;
use adlight::harness::Controller;
use adlight::microsim::{Color, DurationSet, SimWorld, StepReport, JAM_SPACING_M};
use adlight::topology::{ScenarioSpec, MOVEMENT_COUNT};

pub const HORIZON_S: u32 = 900;

/// Runs `scenario` under a cyclic fixed plan, checking conservation after
/// every step and the yellow length at every phase change. Returns the
/// per-step reports for determinism comparisons.
pub fn run_checked(scenario: &ScenarioSpec, green_s: u32) -> Result<Vec<StepReport>, String> {
    let mut plan = FixedTime::uniform(green_s);
    let mut world = SimWorld::new(scenario.clone(), DurationSet::Any).map_err(|e| e.to_string())?;
    let yellow = scenario.intersection.yellow_s;
    let mut yellow_run = [0u32; MOVEMENT_COUNT];
    let mut reports = vec![];
    let (mut arrived, mut departed) = (0u64, 0u64);
    while !world.finished() {
        while world.command_complete() {
            plan.command(&mut world).map_err(|e| e.to_string())?;
        }
        let before = *world.signal().colors();
        let r = world.step().map_err(|e| e.to_string())?;
        let after = *world.signal().colors();
        for m in 0..MOVEMENT_COUNT {
            match (before[m], after[m]) {
                (Color::Yellow, Color::Yellow) => yellow_run[m] += 1,
                (Color::Yellow, c) => {
                    if yellow_run[m] + 1 != yellow || c != Color::Red {
                        return Err(format!(
                            "{} t={}: movement {m} yellow lasted {}s then {c:?}",
                            scenario.id(),
                            r.clock_s,
                            yellow_run[m] + 1
                        ));
                    }
                    yellow_run[m] = 0;
                }
                (Color::Green, Color::Red) => {
                    return Err(format!("{} t={}: movement {m} went green to red", scenario.id(), r.clock_s));
                }
                _ => {}
            }
        }
        arrived += r.arrivals.iter().map(|&a| a as u64).sum::<u64>();
        departed += r.departures.iter().map(|&d| d as u64).sum::<u64>();
        let t = world.totals();
        if t.spawned != t.departed + world.in_network() {
            return Err(format!(
                "{} t={}: spawned {} != departed {} + in network {}",
                scenario.id(),
                r.clock_s,
                t.spawned,
                t.departed,
                world.in_network()
            ));
        }
        if t.spawned != arrived || t.departed != departed {
            return Err(format!("{} t={}: step reports disagree with totals", scenario.id(), r.clock_s));
        }
        reports.push(r);
    }
    Ok(reports)
}

/// Same seed, same trajectory; different seed, different arrivals.
pub fn check_determinism(scenario: &ScenarioSpec) -> Result<(), String> {
    let a = run_checked(scenario, 15)?;
    let b = run_checked(scenario, 15)?;
    if a != b {
        return Err(format!("{}: rerun with seed {} diverged", scenario.id(), scenario.seed));
    }
    let c = run_checked(&scenario.with_seed(scenario.seed ^ 0x5eed), 15)?;
    if a == c {
        return Err(format!("{}: different seeds gave identical trajectories", scenario.id()));
    }
    Ok(())
}

/// Eight stopped vehicles on one lane of every present movement; a 10 s
/// green for the phase serving it releases exactly five.
pub fn check_discharge(scenario: &ScenarioSpec) -> Result<(), String> {
    let spec = &scenario.intersection;
    for m in spec.present() {
        let phase = spec.phases.iter().position(|p| p.contains(m)).expect("validated plan serves every movement");
        let mut s = scenario.clone();
        s.arrival_rates[m] = 0.0;
        let mut world = SimWorld::new(s, DurationSet::Any).map_err(|e| e.to_string())?;
        for k in 0..8 {
            world.inject_vehicle(m, 0, k as f64 * JAM_SPACING_M).map_err(|e| e.to_string())?;
        }
        world.switch_to(phase, 10).map_err(|e| e.to_string())?;
        let (mut green_s, mut departed) = (0, 0);
        while !world.command_complete() {
            let green = world.signal().color(m) == Color::Green;
            let r = world.step().map_err(|e| e.to_string())?;
            if green {
                green_s += 1;
                departed += r.departures[m];
            } else if r.departures[m] > 0 {
                return Err(format!("{} movement {m}: departure on red", scenario.id()));
            }
        }
        if green_s != 10 || departed != 5 {
            return Err(format!(
                "{} seed {} movement {m}: {departed} departures in {green_s}s of green",
                scenario.id(),
                scenario.seed
            ));
        }
    }
    Ok(())
}

/// All three oracles for one scenario.
pub fn check_scenario(scenario: &ScenarioSpec) -> Result<(), String> {
    let s = scenario.with_duration(HORIZON_S);
    run_checked(&s, 10)?;
    check_determinism(&s)?;
    check_discharge(&s)
}
