//! `seatrial` command-line front end.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 when the command itself
//! fails.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seatrial::config::{Config, ConfigError};
use seatrial::env::{run_episode, scripted_policy, Env, EnvError, Policy, ScriptedKind};
use seatrial::falsification::training::{run_training_loop, LoopMode, TrainingLog};
use seatrial::falsification::{falsify, sample_environment_setup, FalsificationError, Scenario};
use seatrial::harness::{
    evaluate_policy, export_trace, generate_test_set, load_scenarios, read_trace, save_scenarios, HarnessError,
};
use seatrial::rules::{EncounterType, RuleContext, RuleError};
use seatrial::stl::{input_vacuity, output_robustness, parse_formula, parse_formula_seconds, robustness, Role, StlError};
use seatrial::train::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use seatrial::train::{observation_scale, PpoTrainer, TrainError};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Falsification(#[from] FalsificationError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Input(String),
}

#[derive(Parser)]
#[command(name = "seatrial", version, about = "Rule monitoring, falsification and training for two-vessel encounters")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output where the command allows it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a policy on one scenario and write its trace.
    Simulate {
        /// Scenario file (JSON lines).
        #[arg(long)]
        scenarios: PathBuf,
        /// Which scenario of the file to run.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Checkpoint path or one of straight_to_goal, give_way_reference, random.
        #[arg(long, default_value = "give_way_reference")]
        policy: String,
    },
    /// Evaluate a formula on a stored trace.
    Monitor {
        #[arg(long)]
        trace: PathBuf,
        /// Formula text; interval bounds in seconds unless --steps is given.
        #[arg(long)]
        formula: String,
        /// Read interval bounds as step counts.
        #[arg(long)]
        steps: bool,
    },
    /// Search adversary behaviour that makes a policy break the rules.
    Falsify {
        #[arg(long, default_value = "give_way_reference")]
        policy: String,
        /// Number of sampled setups.
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Restrict setups to one encounter type (crossing, head_on, overtake).
        #[arg(long)]
        tag: Option<String>,
    },
    /// Train a policy; writes a checkpoint and `<out>.curve.csv`.
    Train {
        /// Fill the pool with random scenarios instead of falsifying.
        #[arg(long, conflicts_with = "adversary_free")]
        baseline: bool,
        /// Goal reaching without the other vessel.
        #[arg(long)]
        adversary_free: bool,
        /// Override the step budget of the config.
        #[arg(long)]
        total_steps: Option<usize>,
    },
    /// Write a random scenario set.
    GenTestSet {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
    /// Run a policy on a scenario set and print the report.
    Evaluate {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, default_value = "give_way_reference")]
        policy: String,
        /// Per-scenario outcomes as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn load_policy(spec: &str, seed: u64) -> Result<Box<dyn Policy>, CliError> {
    if let Some(kind) = ScriptedKind::parse(spec) {
        return Ok(scripted_policy(kind, seed));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::Input(format!("{spec:?} is neither a scripted policy nor a checkpoint file")));
    }
    Ok(Box::new(load_checkpoint(path)?.deterministic()))
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn require_out<'a>(out: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    out.as_deref().ok_or_else(|| CliError::Input(format!("{what} needs --out")))
}

fn write_curve(path: &Path, log: &TrainingLog) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "step,length,tag,return,goal_progress,velocity,angular,colregs,zone,goal,reached_goal,zone_violation")?;
    for e in &log.episodes {
        let r = &e.reward;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            e.step,
            e.length,
            e.tag.name(),
            r.total,
            r.goal_progress,
            r.velocity,
            r.angular,
            r.colregs,
            r.zone,
            r.goal,
            u8::from(e.reached_goal),
            u8::from(e.zone_violation)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let Common { seed, config, out } = cli.common;
    let config = Config::load_or_default(config.as_deref())?;
    let env_cfg = config.env();
    match cli.command {
        Command::Simulate { scenarios, index, policy } => {
            let set = load_scenarios(&scenarios)?;
            let scenario = set
                .get(index)
                .ok_or_else(|| CliError::Input(format!("index {index} out of range ({} scenarios)", set.len())))?;
            let mut env = Env::new(env_cfg)?;
            let mut pi = load_policy(&policy, seed)?;
            let episode = run_episode(&mut env, scenario, pi.as_mut())?;
            let mut w = output(&out)?;
            export_trace(&episode, &mut w)?;
            w.flush()?;
        }
        Command::Monitor { trace, formula, steps } => {
            let trace = read_trace(BufReader::new(File::open(&trace)?))?;
            let ctx = RuleContext::new(config.rule_parameters(), config.limits(), trace.dt)?;
            let phi = if steps {
                parse_formula(&formula, &ctx.registry)?
            } else {
                parse_formula_seconds(&formula, &ctx.registry, trace.dt)?
            };
            let signal = trace.signal();
            let val = ctx.registry.valuation_for(&phi.atoms(), &signal, signal.len())?;
            let atoms = phi.atoms();
            let with_role = |role| ctx.registry.atoms_with_role(role).intersection(&atoms).cloned().collect();
            let rho_in = input_vacuity(&phi, &val, &with_role(Role::Input))?;
            let rho_out = output_robustness(&phi, &val, &with_role(Role::Output))?;
            let mut w = output(&out)?;
            writeln!(w, "robustness = {}", robustness(&phi, &val, 0)?)?;
            writeln!(w, "rho_in = {rho_in}")?;
            writeln!(w, "rho_out = {rho_out}")?;
            writeln!(w, "vacuous = {}", rho_in > 0.0)?;
            w.flush()?;
        }
        Command::Falsify { policy, samples, tag } => {
            let out = require_out(&out, "falsify")?;
            let tag = tag
                .map(|t| {
                    EncounterType::ALL
                        .into_iter()
                        .find(|e| e.name() == t)
                        .ok_or_else(|| CliError::Input(format!("unknown encounter type {t:?}")))
                })
                .transpose()?;
            let pi = load_policy(&policy, seed)?;
            let ctx = RuleContext::new(env_cfg.rules, env_cfg.limits, env_cfg.dt)?;
            let dist = config.setup_distribution();
            let settings = config.falsification_settings();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut found: Vec<Scenario> = Vec::with_capacity(samples);
            for s in 0..samples {
                let mut setup = sample_environment_setup(&dist, &mut rng);
                if let Some(t) = tag {
                    setup.adversary = dist.adversary(t).sample(&mut rng);
                    setup.tag = t;
                }
                let res = falsify(&setup, pi.as_ref(), &env_cfg, &ctx, &settings, seed.wrapping_add(s as u64), 0)?;
                println!(
                    "sample {s} ({}): objective {:.4}, {} simulations, {}",
                    setup.tag.name(),
                    res.objective,
                    res.simulations,
                    if res.falsified() {
                        "falsified"
                    } else if res.verdict.vacuous() {
                        "vacuous"
                    } else {
                        "satisfied"
                    }
                );
                found.push(res.scenario);
            }
            save_scenarios(out, &found)?;
        }
        Command::Train { baseline, adversary_free, total_steps } => {
            let out = require_out(&out, "train")?;
            let mode = if baseline {
                LoopMode::Baseline
            } else if adversary_free {
                LoopMode::AdversaryFree
            } else {
                LoopMode::Falsification
            };
            let mut settings = config.loop_settings(mode, seed);
            if let Some(t) = total_steps {
                settings.total_steps = t;
            }
            let scale = observation_scale(&env_cfg.limits, env_cfg.steps, env_cfg.dt);
            let mut trainer = PpoTrainer::new(config.ppo(), scale, env_cfg.limits, seed);
            let log = run_training_loop(&settings, &mut trainer)?;
            let meta = CheckpointMeta { seed, steps: trainer.steps(), config_hash: config.hash() };
            save_checkpoint(out, trainer.policy(), &meta)?;
            let mut curve = out.as_os_str().to_owned();
            curve.push(".curve.csv");
            write_curve(Path::new(&curve), &log)?;
            println!(
                "{} steps, {} episodes, {} updates, {} falsification rounds",
                trainer.steps(),
                log.episodes.len(),
                log.updates.len(),
                log.rounds.len()
            );
        }
        Command::GenTestSet { n } => {
            let out = require_out(&out, "gen-test-set")?;
            let f = &config.falsification;
            let set = generate_test_set(n, seed, &config.setup_distribution(), env_cfg.steps, f.baseline_sigma)?;
            save_scenarios(out, &set)?;
        }
        Command::Evaluate { scenarios, policy, log } => {
            let set = load_scenarios(&scenarios)?;
            let pi = load_policy(&policy, seed)?;
            let (report, outcomes) = evaluate_policy(pi.as_ref(), &set, &env_cfg, config.falsification.parallel)?;
            let mut w = output(&out)?;
            writeln!(w, "{report}")?;
            w.flush()?;
            if let Some(path) = log {
                let mut lw = BufWriter::new(File::create(path)?);
                for o in &outcomes {
                    serde_json::to_writer(&mut lw, o)?;
                    writeln!(lw)?;
                }
                lw.flush()?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
