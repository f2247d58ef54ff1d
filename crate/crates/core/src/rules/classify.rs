//! Step-by-step encounter labeling and maneuver-reference latching.
//!
//! A persistent encounter at step `k` (rising edge at `k`, encounter held on
//! `k+1..=k+t_p`) is only decidable once frame `k + t_p` exists. The tracker
//! therefore revises labels of the last `t_p` frames as new frames arrive;
//! frames at least `t_p` steps old are final.

use std::sync::Arc;

use super::spec::RuleContext;
use super::{EncounterType, RuleError};
use crate::signal::{Frame, JointSignal};

/// Per-frame encounter labels of a joint signal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncounterLabels {
    /// Encounter predicates per frame, indexed by [`EncounterType::index`].
    pub active: Vec<[bool; 3]>,
    /// Persistent-encounter rising edges per frame. Only frames whose
    /// persistence window lies inside the trace can be `true`.
    pub persistent: Vec<[bool; 3]>,
    /// Latched ego reference heading per frame.
    pub theta_ref: Vec<Option<f64>>,
    /// `(frame, type)` for every latch event.
    pub latch_events: Vec<(usize, EncounterType)>,
}

impl EncounterLabels {
    /// Earliest persistent encounter at or before `max_k`, ties broken in
    /// [`EncounterType::ALL`] order.
    pub fn first_persistent(&self, max_k: usize) -> Option<(usize, EncounterType)> {
        self.persistent.iter().enumerate().take(max_k.saturating_add(1)).find_map(|(k, flags)| {
            EncounterType::ALL.into_iter().find(|t| flags[t.index()]).map(|t| (k, t))
        })
    }

    pub fn any_persistent(&self) -> bool {
        self.persistent.iter().any(|f| f.iter().any(|&b| b))
    }

    pub fn active_at(&self, k: usize) -> Vec<EncounterType> {
        EncounterType::ALL.into_iter().filter(|t| self.active[k][t.index()]).collect()
    }
}

/// Incremental labeler; feed frames in order with [`EncounterTracker::push`].
#[derive(Debug, Clone)]
pub struct EncounterTracker {
    ctx: Arc<RuleContext>,
    tp: usize,
    tm: usize,
    window: JointSignal,
    labels: EncounterLabels,
    headings: Vec<f64>,
    latch: Option<f64>,
    quiet: usize,
}

impl EncounterTracker {
    pub fn new(ctx: Arc<RuleContext>) -> Result<Self, RuleError> {
        let tp = ctx.params.persistence_steps(ctx.dt)?;
        let tm = ctx.params.maneuver_steps(ctx.dt)?;
        let window = JointSignal::new(ctx.dt);
        Ok(Self {
            ctx,
            tp,
            tm,
            window,
            labels: EncounterLabels::default(),
            headings: Vec::new(),
            latch: None,
            quiet: 0,
        })
    }

    pub fn labels(&self) -> &EncounterLabels {
        &self.labels
    }

    pub fn into_labels(self) -> EncounterLabels {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.active.is_empty()
    }

    /// Current latch, if any.
    pub fn latch(&self) -> Option<f64> {
        self.latch
    }

    /// Persistent encounters whose rising edge was just confirmed by the
    /// latest frame.
    pub fn newly_persistent(&self) -> Option<(usize, [bool; 3])> {
        let t = self.len().checked_sub(1)?;
        let k = t.checked_sub(self.tp)?;
        let flags = self.labels.persistent[k];
        flags.iter().any(|&b| b).then_some((k, flags))
    }

    /// Adds frame `t` and updates labels for frames `t - t_p..=t`.
    pub fn push(&mut self, frame: &Frame) -> Result<(), RuleError> {
        self.window.frames.clear();
        self.window.push(*frame);
        let active = self.ctx.encounters_at(&self.window, 0)?;
        let t = self.labels.active.len();
        self.labels.active.push(active);
        self.labels.persistent.push([false; 3]);
        self.labels.theta_ref.push(None);
        self.headings.push(frame.ego.theta);

        if active.iter().any(|&b| b) {
            self.quiet = 0;
        } else {
            self.quiet += 1;
            if self.quiet >= self.tm {
                self.latch = None;
            }
        }

        if let Some(k) = t.checked_sub(self.tp) {
            let mut flags = [false; 3];
            for ty in EncounterType::ALL {
                let i = ty.index();
                flags[i] = !self.labels.active[k][i] && (k + 1..=t).all(|j| self.labels.active[j][i]);
            }
            self.labels.persistent[k] = flags;
            if let Some(ty) = EncounterType::ALL.into_iter().find(|ty| flags[ty.index()]) {
                if self.latch.is_none() {
                    let heading = self.headings[k];
                    self.labels.latch_events.push((k, ty));
                    self.latch = Some(heading);
                    for slot in &mut self.labels.theta_ref[k..t] {
                        *slot = Some(heading);
                    }
                }
            }
        }
        self.labels.theta_ref[t] = self.latch;
        Ok(())
    }
}

/// Labels a complete signal.
pub fn classify_encounters(signal: &JointSignal, ctx: &Arc<RuleContext>) -> Result<EncounterLabels, RuleError> {
    let mut tracker = EncounterTracker::new(Arc::clone(ctx))?;
    for frame in &signal.frames {
        tracker.push(frame)?;
    }
    Ok(tracker.into_labels())
}

/// Writes the latched ego references into the signal's frames.
pub fn apply_latches(signal: &mut JointSignal, labels: &EncounterLabels) {
    for (frame, latch) in signal.frames.iter_mut().zip(&labels.theta_ref) {
        frame.theta_ref_ego = *latch;
    }
}
