use adlight::baselines::{train_variant, AdaptiveWebster, FixedTime};
use adlight::harness::{evaluate, run_suite, AgentController, Controller, EvalReport, SuiteConfig};
use adlight::microsim::{SimWorld, TraceWriter};
use adlight::nn::{load_checkpoint, save_checkpoint};
use adlight::ppo::{retrain, write_curve, ActionDesign, Augment, PpoConfig, Trainer};
use adlight::topology::{builtin_catalog, catalog_entry, parse_scenario, ScenarioSpec, Split, MOVEMENT_NAMES};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "adlight", version, about = "Universal traffic-signal control laboratory")]
struct Cli {
    /// Base seed for training runs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory receiving CSV artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on one or more scenarios.
    Train {
        /// Scenario JSON files or catalog ids; `train`/`test` select a catalog split.
        #[arg(long, num_args = 1.., required = true)]
        scenarios: Vec<String>,
        #[arg(long, default_value_t = 300_000)]
        steps: u64,
        /// Movement-shuffle augmentation.
        #[arg(long)]
        augment: bool,
        #[arg(long, value_enum, default_value_t = Design::SetDuration)]
        design: Design,
        /// PPO hyperparameters as JSON (missing keys keep defaults).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue training a checkpoint on one scenario.
    Retrain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint greedily.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        scenarios: Vec<String>,
        #[arg(long, value_enum, default_value_t = Design::SetDuration)]
        design: Design,
        #[command(flatten)]
        protocol: Protocol,
    },
    /// Evaluate a classical plan or train and evaluate an RL variant.
    Baseline {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        scenario: String,
        /// Green time of the fixed plan.
        #[arg(long, default_value_t = 30)]
        green: u32,
        /// Training budget of the RL variants.
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        #[command(flatten)]
        protocol: Protocol,
    },
    /// Run an experiment suite.
    Report {
        #[arg(long)]
        suite: PathBuf,
    },
    /// Print the built-in intersections.
    Catalog {
        /// Write every entry as a scenario JSON file into this directory.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Run one episode under a fixed plan.
    Simulate {
        #[arg(long)]
        scenario: String,
        /// `fixed:<green_s>`, `fixed:<g1>,<g2>,...` or `webster`.
        #[arg(long, default_value = "fixed:30")]
        plan: String,
        /// Per-second CSV trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Protocol {
    #[arg(long, default_value_t = adlight::harness::EVAL_EPISODES)]
    episodes: u32,
    #[arg(long, num_args = 1.., default_values_t = adlight::harness::EVAL_SEEDS)]
    eval_seeds: Vec<u64>,
    #[arg(long, default_value_t = adlight::harness::EVAL_DURATION_S)]
    duration: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum Design {
    SetDuration,
    ChooseNext,
    NextOrNot,
}

impl From<Design> for ActionDesign {
    fn from(d: Design) -> Self {
        match d {
            Design::SetDuration => ActionDesign::SetDuration,
            Design::ChooseNext => ActionDesign::ChooseNextPhase,
            Design::NextOrNot => ActionDesign::NextOrNot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Webster,
    Fixed,
    ChooseNext,
    NextOrNot,
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec> {
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        return parse_scenario(&text).with_context(|| format!("parsing {arg}"));
    }
    match catalog_entry(arg) {
        Some(e) => Ok(e.scenario),
        None => bail!("{arg} is neither a file nor a catalog id"),
    }
}

fn load_scenarios(args: &[String]) -> Result<Vec<ScenarioSpec>> {
    let mut out = vec![];
    for a in args {
        match a.as_str() {
            "train" | "test" => {
                let split = if a == "train" { Split::Train } else { Split::Test };
                out.extend(builtin_catalog().into_iter().filter(|e| e.split == split).map(|e| e.scenario));
            }
            _ => out.push(load_scenario(a)?),
        }
    }
    Ok(out)
}

fn load_ppo(path: Option<&Path>) -> Result<PpoConfig> {
    let Some(path) = path else { return Ok(PpoConfig::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: PpoConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    cfg.validate().map_err(anyhow::Error::msg)?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn run_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn evaluate_all<C: Controller + Clone + Send + Sync>(c: &C, scenarios: &[ScenarioSpec], p: &Protocol) -> Result<EvalReport> {
    let mut reports = vec![];
    for s in scenarios {
        reports.push(evaluate(c, s, p.episodes, &p.eval_seeds, p.duration)?);
    }
    Ok(EvalReport::merge(reports))
}

fn write_eval(cli: &Cli, report: &EvalReport) -> Result<()> {
    report.write_csv(create(&cli.out_dir.join("eval.csv"))?)?;
    for s in report.scenarios() {
        for c in report.controllers() {
            if let Some(m) = report.mean(&s, &c) {
                println!("{s}\t{c}\t{m:.3}");
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    match &cli.command {
        Command::Train { scenarios, steps, augment, design, config, out } => {
            let scenarios = load_scenarios(scenarios)?;
            let cfg = PpoConfig {
                total_steps: *steps,
                seed: cli.seed,
                augment: if *augment { Augment::MovementShuffle } else { Augment::Off },
                design: (*design).into(),
                ..load_ppo(config.as_deref())?
            };
            let mut trainer = Trainer::new(cfg, &scenarios)?;
            while !trainer.is_done() {
                let row = trainer.iterate()?;
                log::info!("step {} reward {:.1}", row.env_steps, row.mean_episode_reward);
            }
            let (params, opt, curve) = trainer.into_parts();
            save_checkpoint(out, &params, &opt).with_context(|| format!("writing {}", out.display()))?;
            write_curve(create(&cli.out_dir.join(format!("curve_{}.csv", run_stem(out))))?, &curve)?;
        }
        Command::Retrain { checkpoint, scenario, steps, config, out } => {
            let (params, opt) = load_checkpoint(checkpoint)?;
            let scenario = load_scenario(scenario)?;
            let cfg = PpoConfig { total_steps: *steps, seed: cli.seed, ..load_ppo(config.as_deref())? };
            let res = retrain(params, opt, &scenario, cfg)?;
            save_checkpoint(out, &res.params, &res.opt).with_context(|| format!("writing {}", out.display()))?;
            write_curve(create(&cli.out_dir.join(format!("curve_{}.csv", run_stem(out))))?, &res.curve)?;
        }
        Command::Evaluate { checkpoint, scenarios, design, protocol } => {
            let (params, _) = load_checkpoint(checkpoint)?;
            let agent = AgentController::new(run_stem(checkpoint), Arc::new(params), (*design).into());
            write_eval(cli, &evaluate_all(&agent, &load_scenarios(scenarios)?, protocol)?)?;
        }
        Command::Baseline { method, scenario, green, steps, protocol } => {
            let s = load_scenario(scenario)?;
            let one = std::slice::from_ref(&s);
            let report = match method {
                Method::Webster => evaluate_all(&AdaptiveWebster::new(), one, protocol)?,
                Method::Fixed => evaluate_all(&FixedTime::uniform(*green), one, protocol)?,
                Method::ChooseNext | Method::NextOrNot => {
                    let design = if matches!(method, Method::ChooseNext) {
                        ActionDesign::ChooseNextPhase
                    } else {
                        ActionDesign::NextOrNot
                    };
                    let base = PpoConfig { total_steps: *steps, seed: cli.seed, ..Default::default() };
                    evaluate_all(&train_variant(design, &s, &base)?, one, protocol)?
                }
            };
            write_eval(cli, &report)?;
        }
        Command::Report { suite } => {
            let text = std::fs::read_to_string(suite).with_context(|| format!("reading {}", suite.display()))?;
            let cfg = SuiteConfig::from_json(&text)?;
            let outcome = run_suite(&cfg, &cli.out_dir)?;
            for f in &outcome.failures {
                eprintln!("cell failed: {} ({})", f.cell, f.error);
            }
            println!("artifacts in {}", outcome.dir.display());
        }
        Command::Catalog { export } => {
            println!("id\tsplit\troads\tlanes\tphases\tdemand_vph");
            for e in builtin_catalog() {
                let s = &e.scenario;
                let spec = &s.intersection;
                let phases: Vec<String> = spec
                    .phases
                    .iter()
                    .map(|p| p.movements().iter().map(|&m| MOVEMENT_NAMES[m]).collect::<Vec<_>>().join("+"))
                    .collect();
                let vph: f64 = s.arrival_rates.iter().sum::<f64>() * 3600.0;
                let split = if e.split == Split::Train { "train" } else { "test" };
                println!(
                    "{}\t{split}\t{}\t{:?}\t{}\t{vph:.0}",
                    s.id(),
                    spec.roads,
                    spec.lanes_per_road,
                    phases.join(" | ")
                );
                if let Some(dir) = export {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(format!("{}.json", s.id()));
                    std::fs::write(&path, s.to_json()).with_context(|| format!("writing {}", path.display()))?;
                }
            }
        }
        Command::Simulate { scenario, plan, trace } => {
            let s = load_scenario(scenario)?;
            let mut controller: Box<dyn Controller> = match plan.split_once(':') {
                Some(("fixed", greens)) => {
                    let greens = greens
                        .split(',')
                        .map(|g| g.trim().parse::<u32>())
                        .collect::<Result<Vec<_>, _>>()
                        .with_context(|| format!("bad plan {plan}"))?;
                    Box::new(FixedTime { greens })
                }
                None if plan == "webster" => Box::new(AdaptiveWebster::new()),
                _ => bail!("unknown plan {plan}; expected fixed:<s>[,<s>...] or webster"),
            };
            controller.check(&s.intersection).map_err(anyhow::Error::msg)?;
            let mut world = SimWorld::new(s, controller.durations())?;
            controller.reset(&world);
            let mut tracer = match trace {
                Some(p) => Some(TraceWriter::new(create(p)?)?),
                None => None,
            };
            while !world.finished() {
                while world.command_complete() {
                    controller.command(&mut world)?;
                }
                world.step()?;
                if let Some(t) = tracer.as_mut() {
                    t.record(&world)?;
                }
            }
            if let Some(t) = tracer {
                t.finish()?;
            }
            let m = world.metrics();
            println!("avg_waiting_s\t{:.3}\nvehicles\t{}\nthroughput\t{}", m.avg_waiting_s, m.vehicles, m.throughput);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    if let Err(e) = run(&cli) {
        let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
        eprintln!("{}", serde_json::json!({ "error": chain.join(": ") }));
        std::process::exit(1);
    }
}
