use super::{evaluate, AgentController, EvalReport};
use crate::baselines::{AdaptiveWebster, FixedTime};
use crate::harness::{degradation, Controller};
use crate::nn::{argmax, NetworkParams};
use crate::ppo::{retrain, train, write_curve, ActionDesign, Augment, CurveRow, DecisionEnv, PpoConfig, PpoError};
use crate::topology::{builtin_catalog, ScenarioSpec, Split};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

/// A row of the training-set table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControllerSpec {
    Webster,
    Fixed { green_s: u32 },
    /// Universal model trained on all training scenarios.
    Universal { label: String, augment: Augment },
    /// One model per scenario with a phase-indexed action head.
    PerScenario { label: String, design: ActionDesign },
}

impl ControllerSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Webster => "webster".into(),
            Self::Fixed { green_s } => format!("fixed-{green_s}"),
            Self::Universal { label, .. } | Self::PerScenario { label, .. } => label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub controllers: Vec<ControllerSpec>,
    /// Catalog ids; empty selects the catalog split.
    pub train_scenarios: Vec<String>,
    pub test_scenarios: Vec<String>,
    /// Training seeds; every learned controller is trained once per seed.
    pub seeds: Vec<u64>,
    /// Budget of the universal and per-scenario models.
    pub train_steps: u64,
    /// Budget of the from-scratch single-scenario references on the test set.
    pub reference_steps: u64,
    /// Retrain budget as a fraction of `reference_steps`; 0 skips the curves.
    pub retrain_fraction: f64,
    /// Universal labels warm-started on the test set; empty means all.
    pub retrain_labels: Vec<String>,
    pub eval_episodes: u32,
    pub eval_seeds: Vec<u64>,
    pub eval_duration_s: u32,
    /// Base hyperparameters; budget, seed, augmentation and design are overridden per run.
    pub ppo: PpoConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            controllers: vec![
                ControllerSpec::Webster,
                ControllerSpec::Universal { label: "multi-env".into(), augment: Augment::Off },
                ControllerSpec::Universal { label: "adlight".into(), augment: Augment::MovementShuffle },
            ],
            train_scenarios: vec![],
            test_scenarios: vec![],
            seeds: vec![0, 1, 2],
            train_steps: 300_000,
            reference_steps: 200_000,
            retrain_fraction: 0.25,
            retrain_labels: vec![],
            eval_episodes: super::EVAL_EPISODES,
            eval_seeds: super::EVAL_SEEDS.to_vec(),
            eval_duration_s: super::EVAL_DURATION_S,
            ppo: PpoConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("config: {0}")]
    Config(String),
    #[error("io on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// Per-cell failure; the suite keeps going.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub dir: PathBuf,
    pub train_report: EvalReport,
    pub test_report: EvalReport,
    pub failures: Vec<CellFailure>,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self, SuiteError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SuiteError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        let err = |m: String| Err(SuiteError::Config(m));
        if self.controllers.is_empty() {
            return err("no controllers".into());
        }
        if self.seeds.is_empty() || self.eval_seeds.is_empty() || self.eval_episodes == 0 {
            return err("seeds, eval_seeds and eval_episodes must be non-empty".into());
        }
        if !(0.0..=1.0).contains(&self.retrain_fraction) {
            return err(format!("retrain_fraction {} outside [0, 1]", self.retrain_fraction));
        }
        let mut labels: Vec<String> = self.controllers.iter().map(ControllerSpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return err("duplicate controller labels".into());
        }
        for c in &self.controllers {
            if let ControllerSpec::PerScenario { design: ActionDesign::SetDuration, label } = c {
                return err(format!("{label}: set-duration models are universal; use kind universal"));
            }
        }
        for l in &self.retrain_labels {
            if !self.controllers.iter().any(|c| matches!(c, ControllerSpec::Universal { label, .. } if label == l)) {
                return err(format!("retrain label {l} names no universal controller"));
            }
        }
        self.ppo.validate().map_err(SuiteError::Config)?;
        self.scenarios(Split::Train)?;
        self.scenarios(Split::Test)?;
        Ok(())
    }

    fn scenarios(&self, split: Split) -> Result<Vec<ScenarioSpec>, SuiteError> {
        let ids = if split == Split::Train { &self.train_scenarios } else { &self.test_scenarios };
        let catalog = builtin_catalog();
        if ids.is_empty() {
            return Ok(catalog.into_iter().filter(|e| e.split == split).map(|e| e.scenario).collect());
        }
        ids.iter()
            .map(|id| {
                catalog
                    .iter()
                    .find(|e| e.scenario.id() == id)
                    .map(|e| e.scenario.clone())
                    .ok_or_else(|| SuiteError::Config(format!("unknown scenario {id}")))
            })
            .collect()
    }

    fn run_cfg(&self, steps: u64, seed: u64, augment: Augment, design: ActionDesign) -> PpoConfig {
        PpoConfig { total_steps: steps, seed, augment, design, ..self.ppo.clone() }
    }
}

fn write_file(path: &Path, f: impl FnOnce(BufWriter<File>) -> csv::Result<()>) -> Result<(), SuiteError> {
    let file = File::create(path).map_err(|source| SuiteError::Io { path: path.into(), source })?;
    f(BufWriter::new(file)).map_err(|source| SuiteError::Csv { path: path.into(), source })
}

struct Runner<'a> {
    cfg: &'a SuiteConfig,
    failures: Vec<CellFailure>,
}

impl Runner<'_> {
    fn eval<C: Controller + Clone + Send + Sync>(&mut self, c: &C, s: &ScenarioSpec, cell: &str) -> Option<EvalReport> {
        self.record(cell, evaluate(c, s, self.cfg.eval_episodes, &self.cfg.eval_seeds, self.cfg.eval_duration_s))
    }

    fn record<T, E: std::fmt::Display>(&mut self, cell: &str, r: Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("{cell}: {e}");
                self.failures.push(CellFailure { cell: cell.into(), error: e.to_string() });
                None
            }
        }
    }
}

/// Pools evaluation records of every training seed under one label.
fn relabel(r: EvalReport, label: &str) -> Vec<super::EvalRecord> {
    r.records()
        .iter()
        .cloned()
        .map(|mut rec| {
            rec.controller = label.into();
            rec
        })
        .collect()
}

/// Runs the configured experiments and writes CSV artifacts into `dir`:
/// `train_eval.csv` and `train_table.csv` (training scenarios, every
/// controller), `test_eval.csv`, `degradation_<label>.csv` for universal
/// models against single-scenario references, `curve_<run>.csv` for the
/// scratch/retrain/no-retrain comparison, `degradation.csv` collecting every
/// degradation column, and `failures.csv`.
pub fn run_suite(cfg: &SuiteConfig, dir: &Path) -> Result<SuiteOutcome, SuiteError> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|source| SuiteError::Io { path: dir.into(), source })?;
    let train_set = cfg.scenarios(Split::Train)?;
    let test_set = cfg.scenarios(Split::Test)?;
    let mut run = Runner { cfg, failures: vec![] };
    let mut train_records = vec![];
    let mut test_records = vec![];
    let mut universal: BTreeMap<String, Vec<(u64, NetworkParams, crate::nn::Adam)>> = BTreeMap::new();

    for spec in &cfg.controllers {
        let label = spec.label();
        match spec {
            ControllerSpec::Webster | ControllerSpec::Fixed { .. } => {
                for s in &train_set {
                    let cell = format!("{label}/{}", s.id());
                    let r = match spec {
                        ControllerSpec::Webster => run.eval(&AdaptiveWebster::new(), s, &cell),
                        ControllerSpec::Fixed { green_s } => run.eval(&FixedTime::uniform(*green_s), s, &cell),
                        _ => unreachable!(),
                    };
                    train_records.extend(r.map(|r| r.records().to_vec()).unwrap_or_default());
                }
            }
            ControllerSpec::Universal { augment, .. } => {
                for &seed in &cfg.seeds {
                    let pc = cfg.run_cfg(cfg.train_steps, seed, *augment, ActionDesign::SetDuration);
                    log::info!("training {label} seed {seed} for {} steps", pc.total_steps);
                    let cell = format!("{label}/train/seed{seed}");
                    let Some(out) = run.record(&cell, train(pc, &train_set)) else { continue };
                    write_file(&dir.join(format!("curve_{label}_seed{seed}.csv")), |w| write_curve(w, &out.curve))?;
                    let agent = AgentController::new(label.clone(), Arc::new(out.params.clone()), ActionDesign::SetDuration);
                    for s in train_set.iter().chain(&test_set) {
                        let cell = format!("{label}/{}/seed{seed}", s.id());
                        if let Some(r) = run.eval(&agent, s, &cell) {
                            let recs = relabel(r, &label);
                            if train_set.contains(s) {
                                train_records.extend(recs);
                            } else {
                                test_records.extend(recs);
                            }
                        }
                    }
                    universal.entry(label.clone()).or_default().push((seed, out.params, out.opt));
                }
            }
            ControllerSpec::PerScenario { design, .. } => {
                for &seed in &cfg.seeds {
                    for s in &train_set {
                        let cell = format!("{label}/{}/seed{seed}", s.id());
                        let pc = cfg.run_cfg(cfg.train_steps, seed, Augment::Off, *design);
                        let Some(out) = run.record(&cell, train(pc, std::slice::from_ref(s))) else { continue };
                        let agent = AgentController::new(label.clone(), Arc::new(out.params), *design);
                        if let Some(r) = run.eval(&agent, s, &cell) {
                            train_records.extend(relabel(r, &label));
                        }
                    }
                }
            }
        }
    }

    // from-scratch single-scenario references on the test set
    let reference_label = "single-env";
    if !universal.is_empty() {
        for &seed in &cfg.seeds {
            for s in &test_set {
                let cell = format!("{reference_label}/{}/seed{seed}", s.id());
                let pc = cfg.run_cfg(cfg.reference_steps, seed, Augment::Off, ActionDesign::SetDuration);
                let Some(out) = run.record(&cell, train(pc, std::slice::from_ref(s))) else { continue };
                write_file(&dir.join(format!("curve_scratch_{}_seed{seed}.csv", s.id())), |w| write_curve(w, &out.curve))?;
                let agent = AgentController::new(reference_label, Arc::new(out.params), ActionDesign::SetDuration);
                if let Some(r) = run.eval(&agent, s, &cell) {
                    test_records.extend(relabel(r, reference_label));
                }
            }
        }
    }

    // warm-start curves from each universal checkpoint
    if cfg.retrain_fraction > 0.0 {
        let steps = (cfg.reference_steps as f64 * cfg.retrain_fraction).round() as u64;
        for (label, models) in &universal {
            if !cfg.retrain_labels.is_empty() && !cfg.retrain_labels.contains(label) {
                continue;
            }
            for (seed, params, opt) in models {
                for s in &test_set {
                    let cell = format!("{label}-retrain/{}/seed{seed}", s.id());
                    let flat = no_retrain_return(params, s, cfg.run_cfg(0, *seed, Augment::Off, ActionDesign::SetDuration));
                    let Some(flat) = run.record(&cell, flat) else { continue };
                    let pc = cfg.run_cfg(steps.max(1), *seed, Augment::Off, ActionDesign::SetDuration);
                    let Some(out) = run.record(&cell, retrain(params.clone(), opt.clone(), s, pc)) else { continue };
                    let level = |r: &CurveRow| CurveRow {
                        iteration: r.iteration,
                        env_steps: r.env_steps,
                        mean_episode_reward: flat.episode,
                        mean_decision_reward: flat.decision,
                        ..CurveRow::empty()
                    };
                    let mut rows = vec![level(&CurveRow::empty())];
                    rows.extend(out.curve.iter().copied());
                    let stem = format!("{label}_{}_seed{seed}", s.id());
                    write_file(&dir.join(format!("curve_retrain_{stem}.csv")), |w| write_curve(w, &rows))?;
                    let line: Vec<CurveRow> = rows.iter().map(level).collect();
                    write_file(&dir.join(format!("curve_noretrain_{stem}.csv")), |w| write_curve(w, &line))?;
                    let agent = AgentController::new(format!("{label}-retrain"), Arc::new(out.params), ActionDesign::SetDuration);
                    if let Some(r) = run.eval(&agent, s, &cell) {
                        test_records.extend(relabel(r, &format!("{label}-retrain")));
                    }
                }
            }
        }
    }

    let train_report = EvalReport::new(train_records);
    let test_report = EvalReport::new(test_records);
    write_file(&dir.join("train_eval.csv"), |w| train_report.write_csv(w))?;
    write_file(&dir.join("train_table.csv"), |w| train_report.write_table(w))?;
    write_file(&dir.join("test_eval.csv"), |w| test_report.write_csv(w))?;
    let reference = test_report.means(reference_label);
    let mut reports = vec![];
    for label in test_report.controllers() {
        if label == reference_label {
            continue;
        }
        let cell = format!("degradation/{label}");
        if let Some(d) = run.record(&cell, degradation(&test_report.means(&label), &reference)) {
            write_file(&dir.join(format!("degradation_{label}.csv")), |w| d.write_csv(w))?;
            reports.push((label, d));
        }
    }
    write_file(&dir.join("degradation.csv"), |w| write_degradation_table(w, &reports))?;
    let failures = run.failures;
    write_file(&dir.join("failures.csv"), |w| {
        // header written by hand so an empty list still has one
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        w.write_record(["cell", "error"])?;
        for f in &failures {
            w.serialize(f)?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(SuiteOutcome { dir: dir.into(), train_report, test_report, failures })
}

/// Percent degradation per test scenario (rows) and controller (columns)
/// with a closing mean row.
fn write_degradation_table<W: std::io::Write>(writer: W, reports: &[(String, super::DegradationReport)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["scenario".to_string()];
    header.extend(reports.iter().map(|(l, _)| l.clone()));
    w.write_record(&header)?;
    let fmt = |p: Option<f64>| p.map(|p| format!("{p:.3}")).unwrap_or_else(|| "N/A".into());
    let mut scenarios: Vec<&str> = reports.iter().flat_map(|(_, d)| d.rows.iter().map(|r| r.scenario.as_str())).collect();
    scenarios.sort();
    scenarios.dedup();
    for s in scenarios {
        let mut row = vec![s.to_string()];
        row.extend(reports.iter().map(|(_, d)| fmt(d.percent(s))));
        w.write_record(&row)?;
    }
    let mut row = vec!["mean".to_string()];
    row.extend(reports.iter().map(|(_, d)| fmt(d.mean_percent())));
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

/// Reward level of a policy: mean raw return per episode and per decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardLevel {
    pub episode: f64,
    pub decision: f64,
}

/// Reward level of the greedy policy over the first `curve_window`
/// episodes of the environment a retrain run with `cfg` would see: the
/// model's level when nothing is retrained.
pub fn no_retrain_return(params: &NetworkParams, scenario: &ScenarioSpec, cfg: PpoConfig) -> Result<RewardLevel, PpoError> {
    let sim = |source| PpoError::Sim { env: 0, source };
    let mut env = DecisionEnv::new(scenario.clone(), cfg.design, cfg.seed, 0).map_err(sim)?;
    let episodes = cfg.curve_window.max(1);
    let mut done = vec![];
    while done.len() < episodes {
        let state = env.observe();
        let cache = params.forward(state.as_slice(), 1)?;
        let step = env.step(argmax(cache.logits(0))).map_err(sim)?;
        if let (Some(r), Some(n)) = (step.episode_return, step.episode_len) {
            done.push((r, n));
        }
    }
    let k = episodes as f64;
    Ok(RewardLevel {
        episode: done.iter().map(|&(r, _)| r).sum::<f64>() / k,
        decision: done.iter().map(|&(r, n)| r / n.max(1) as f64).sum::<f64>() / k,
    })
}
