//! Policy evaluation over a scenario set.
//!
//! Every scenario lands in exactly one bucket: vacuous when no persistent
//! encounter was raised inside the rule's range, otherwise the type of the
//! first one. An episode is compliant when the full trace satisfies the
//! combined rule and it did not end in a zone intersection.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::env::{run_episode, Env, EnvConfig, EpisodeEnd, Policy};
use crate::falsification::Scenario;
use crate::rules::{EncounterType, RuleContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub index: usize,
    /// Box the adversary was drawn from.
    pub tag: EncounterType,
    /// First persistent encounter, `None` when vacuous.
    pub class: Option<EncounterType>,
    pub rho_in: f64,
    pub rho_out: f64,
    pub satisfied: bool,
    pub compliant: bool,
    pub end: EpisodeEnd,
    pub length: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncounterCounts {
    pub vacuous: usize,
    pub crossing: usize,
    pub head_on: usize,
    pub overtaking: usize,
}

impl EncounterCounts {
    pub fn total(&self) -> usize {
        self.vacuous + self.crossing + self.head_on + self.overtaking
    }

    pub fn of(&self, t: EncounterType) -> usize {
        match t {
            EncounterType::Crossing => self.crossing,
            EncounterType::HeadOn => self.head_on,
            EncounterType::Overtake => self.overtaking,
        }
    }

    fn bump(&mut self, class: Option<EncounterType>) {
        match class {
            None => self.vacuous += 1,
            Some(EncounterType::Crossing) => self.crossing += 1,
            Some(EncounterType::HeadOn) => self.head_on += 1,
            Some(EncounterType::Overtake) => self.overtaking += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenarios: usize,
    pub counts: EncounterCounts,
    /// Compliant episodes per encounter type.
    pub compliant: EncounterCounts,
}

impl EvaluationReport {
    pub fn from_outcomes(outcomes: &[ScenarioOutcome]) -> Self {
        let mut r = Self { scenarios: outcomes.len(), ..Self::default() };
        for o in outcomes {
            r.counts.bump(o.class);
            if o.compliant && o.class.is_some() {
                r.compliant.bump(o.class);
            }
        }
        r
    }

    /// Fraction of compliant episodes among those of type `t`.
    pub fn compliance(&self, t: EncounterType) -> Option<f64> {
        let n = self.counts.of(t);
        (n > 0).then(|| self.compliant.of(t) as f64 / n as f64)
    }

    pub fn nonvacuous(&self) -> usize {
        self.scenarios - self.counts.vacuous
    }

    /// Compliance over all nonvacuous episodes.
    pub fn overall_compliance(&self) -> Option<f64> {
        let n = self.nonvacuous();
        let c = self.compliant.crossing + self.compliant.head_on + self.compliant.overtaking;
        (n > 0).then(|| c as f64 / n as f64)
    }
}

fn percent(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{:.1}%", 100.0 * v))
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12}{:>10}", "Situation", "Count")?;
        writeln!(f, "{:<12}{:>10}", "Vacuous", self.counts.vacuous)?;
        for (name, t) in [("Crossing", EncounterType::Crossing), ("Head-on", EncounterType::HeadOn), ("Overtaking", EncounterType::Overtake)] {
            writeln!(f, "{:<12}{:>10}", name, self.counts.of(t))?;
            writeln!(f, "{:<12}{:>10}", "  compliant", percent(self.compliance(t)))?;
        }
        write!(f, "{:<12}{:>10}", "Total", self.scenarios)
    }
}

/// Runs one scenario and classifies it.
pub fn evaluate_scenario(
    env: &mut Env,
    ctx: &RuleContext,
    policy: &mut dyn Policy,
    scenario: &Scenario,
    index: usize,
) -> Result<ScenarioOutcome, HarnessError> {
    let episode = run_episode(env, scenario, policy)?;
    let verdict = ctx.evaluate(&episode.signal)?;
    let class = if verdict.vacuous() {
        None
    } else {
        let delay = ctx.params.delay_steps(ctx.dt)?;
        let last = episode.signal.steps().saturating_sub(delay);
        let (_, t) = episode.labels.first_persistent(last).ok_or_else(|| {
            HarnessError::Format(format!("scenario {index}: nonvacuous verdict without a persistent encounter"))
        })?;
        Some(t)
    };
    Ok(ScenarioOutcome {
        index,
        tag: scenario.setup.tag,
        class,
        rho_in: verdict.rho_in,
        rho_out: verdict.rho_out,
        satisfied: verdict.satisfied,
        compliant: verdict.satisfied && episode.end != EpisodeEnd::Zone,
        end: episode.end,
        length: episode.signal.steps(),
        reward: episode.total_reward().total,
    })
}

/// Runs `policy` on every scenario. With `parallel` the scenarios are spread
/// over the rayon pool; outcomes always come back in input order.
pub fn evaluate_policy(
    policy: &dyn Policy,
    scenarios: &[Scenario],
    cfg: &EnvConfig,
    parallel: bool,
) -> Result<(EvaluationReport, Vec<ScenarioOutcome>), HarnessError> {
    if scenarios.is_empty() {
        return Err(HarnessError::Empty);
    }
    let cfg = EnvConfig { monitor: false, adversary: true, ..*cfg };
    let ctx = RuleContext::new(cfg.rules, cfg.limits, cfg.dt)?;
    let make = || -> Result<(Env, Box<dyn Policy>), HarnessError> {
        Ok((Env::with_context(cfg, Arc::clone(&ctx))?, policy.clone_box()))
    };
    let outcomes: Vec<ScenarioOutcome> = if parallel {
        scenarios
            .par_iter()
            .enumerate()
            .map_init(make, |state, (i, s)| {
                let (env, p) = state.as_mut().map_err(|e| HarnessError::Format(e.to_string()))?;
                evaluate_scenario(env, &ctx, p.as_mut(), s, i)
            })
            .collect::<Result<_, _>>()?
    } else {
        let (mut env, mut p) = make()?;
        scenarios
            .iter()
            .enumerate()
            .map(|(i, s)| evaluate_scenario(&mut env, &ctx, p.as_mut(), s, i))
            .collect::<Result<_, _>>()?
    };
    Ok((EvaluationReport::from_outcomes(&outcomes), outcomes))
}

/// Mean and sample standard deviation of one statistic across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

/// Table of counts and compliance aggregated over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: usize,
    pub vacuous: Stat,
    pub crossing: Stat,
    pub head_on: Stat,
    pub overtaking: Stat,
    pub crossing_compliance: Stat,
    pub head_on_compliance: Stat,
    pub overtaking_compliance: Stat,
}

pub fn summarize(reports: &[EvaluationReport]) -> SeedSummary {
    let counts = |f: fn(&EncounterCounts) -> usize| {
        Stat::of(&reports.iter().map(|r| f(&r.counts) as f64).collect::<Vec<_>>())
    };
    // seeds without any episode of a type do not enter its compliance
    let compliance = |t| Stat::of(&reports.iter().filter_map(|r| r.compliance(t)).collect::<Vec<_>>());
    SeedSummary {
        seeds: reports.len(),
        vacuous: counts(|c| c.vacuous),
        crossing: counts(|c| c.crossing),
        head_on: counts(|c| c.head_on),
        overtaking: counts(|c| c.overtaking),
        crossing_compliance: compliance(EncounterType::Crossing),
        head_on_compliance: compliance(EncounterType::HeadOn),
        overtaking_compliance: compliance(EncounterType::Overtake),
    }
}

impl fmt::Display for SeedSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12}{:>10}{:>10}   ({} seeds)", "Situation", "Mean", "Std", self.seeds)?;
        let count = |f: &mut fmt::Formatter<'_>, name: &str, s: Stat| writeln!(f, "{name:<12}{:>10.1}{:>10.1}", s.mean, s.std);
        let share = |f: &mut fmt::Formatter<'_>, s: Stat| {
            writeln!(f, "{:<12}{:>9.1}%{:>9.1}%", "  compliant", 100.0 * s.mean, 100.0 * s.std)
        };
        count(f, "Vacuous", self.vacuous)?;
        count(f, "Crossing", self.crossing)?;
        share(f, self.crossing_compliance)?;
        count(f, "Head-on", self.head_on)?;
        share(f, self.head_on_compliance)?;
        count(f, "Overtaking", self.overtaking)?;
        share(f, self.overtaking_compliance)
    }
}
