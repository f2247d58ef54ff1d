//! File formats, test-set generation and policy evaluation.

pub mod evaluate;
pub mod scenarios;
pub mod trace;

use thiserror::Error;

use crate::env::EnvError;
use crate::falsification::FalsificationError;
use crate::rules::RuleError;

pub use evaluate::{evaluate_policy, summarize, EncounterCounts, EvaluationReport, ScenarioOutcome, SeedSummary};
pub use scenarios::{generate_test_set, load_scenarios, read_scenarios, save_scenarios, write_scenarios};
pub use trace::{export_trace, read_trace, Trace, TraceRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("format: {0}")]
    Format(String),
    #[error("no scenarios to evaluate")]
    Empty,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Falsification(#[from] FalsificationError),
}
