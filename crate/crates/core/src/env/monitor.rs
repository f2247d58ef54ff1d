//! Delayed evaluation of the give-way rules during an episode.
//!
//! The rule body at step `k` looks `delay = (t_p + 2 t_m) / dt` steps ahead,
//! so its verdict becomes available once frame `k + delay` exists.

use std::sync::Arc;

use crate::rules::{build_combined_spec, ColregsSpec, RuleContext, RuleError};
use crate::signal::JointSignal;
use crate::stl::{vacuity_indicator, AtomSet, Robustness};

/// Interface-aware verdict of the rule body at step `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorVerdict {
    pub k: usize,
    pub rho_in: Robustness,
    pub rho_out: Robustness,
}

impl MonitorVerdict {
    pub fn vacuous(&self) -> bool {
        vacuity_indicator(self.rho_in) == 1
    }

    /// Qualitative body verdict: vacuous, or nonvacuous with positive
    /// output robustness.
    pub fn satisfied(&self) -> bool {
        self.vacuous() || self.rho_out > 0.0
    }
}

#[derive(Debug, Clone)]
pub struct DelayedSpecMonitor {
    ctx: Arc<RuleContext>,
    spec: ColregsSpec,
    atoms: AtomSet,
    emitted: Vec<MonitorVerdict>,
}

impl DelayedSpecMonitor {
    pub fn new(ctx: Arc<RuleContext>) -> Result<Self, RuleError> {
        let delay = ctx.params.delay_steps(ctx.dt)?;
        let spec = build_combined_spec(&ctx.params, delay, ctx.dt)?;
        let atoms = spec.atoms();
        Ok(Self { ctx, spec, atoms, emitted: Vec::new() })
    }

    pub fn delay(&self) -> usize {
        self.spec.delay
    }

    pub fn reset(&mut self) {
        self.emitted.clear();
    }

    pub fn emitted(&self) -> &[MonitorVerdict] {
        &self.emitted
    }

    /// Emits the verdict for `k = len - 1 - delay` if that step has not been
    /// evaluated yet.
    pub fn poll(&mut self, signal: &JointSignal) -> Result<Option<MonitorVerdict>, RuleError> {
        let delay = self.delay();
        let Some(k) = signal.len().checked_sub(delay + 1) else {
            return Ok(None);
        };
        if self.emitted.last().is_some_and(|v| v.k >= k) {
            return Ok(None);
        }
        let window = signal.window(k, k + delay + 1);
        let val = self.ctx.registry.valuation_for(&self.atoms, &window, window.len())?;
        let (rho_in, rho_out) = self.spec.body_verdicts(&val)?[0];
        let verdict = MonitorVerdict { k, rho_in, rho_out };
        self.emitted.push(verdict);
        Ok(Some(verdict))
    }
}
