//! Per-step episode traces as CSV.
//!
//! The first line is `#format_version=1 dt=<seconds>`, followed by a header
//! row and one row per frame. Reward columns hold the reward of the
//! transition into the frame and are empty on frame 0. `rho_in`/`rho_out`
//! carry the delayed rule verdict for the frame when one was due, and
//! `pending` marks frames whose verdict never came (episode ended first).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dynamics::VesselState;
use crate::env::Episode;
use crate::rules::EncounterType;
use crate::signal::{Frame, JointSignal};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub t: f64,
    pub ego_px: f64,
    pub ego_py: f64,
    pub ego_theta: f64,
    pub ego_v: f64,
    pub ego_omega: f64,
    pub adv_px: f64,
    pub adv_py: f64,
    pub adv_theta: f64,
    pub adv_v: f64,
    pub adv_omega: f64,
    pub theta_ref_ego: Option<f64>,
    pub crossing: u8,
    pub head_on: u8,
    pub overtake: u8,
    /// Persistent encounter whose rising edge is this frame.
    pub persistent: Option<EncounterType>,
    pub r_goal_progress: Option<f64>,
    pub r_velocity: Option<f64>,
    pub r_angular: Option<f64>,
    pub r_colregs: Option<f64>,
    pub r_zone: Option<f64>,
    pub r_goal: Option<f64>,
    pub r_total: Option<f64>,
    pub rho_in: Option<f64>,
    pub rho_out: Option<f64>,
    /// Smallest `rho_in` of the verdicts up to this frame.
    pub rho_in_so_far: Option<f64>,
    pub pending: u8,
}

impl TraceRow {
    pub fn ego(&self) -> VesselState {
        VesselState::new(self.ego_px, self.ego_py, self.ego_theta, self.ego_v, self.ego_omega)
    }

    pub fn adversary(&self) -> VesselState {
        VesselState::new(self.adv_px, self.adv_py, self.adv_theta, self.adv_v, self.adv_omega)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn from_episode(episode: &Episode) -> Self {
        let signal = &episode.signal;
        let mut verdicts = vec![None; signal.len()];
        for v in &episode.verdicts {
            if let Some(slot) = verdicts.get_mut(v.k) {
                *slot = Some(*v);
            }
        }
        let mut so_far: Option<f64> = None;
        let rows = signal
            .frames
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let active = episode.labels.active.get(k).copied().unwrap_or_default();
                let persistent = episode
                    .labels
                    .persistent
                    .get(k)
                    .and_then(|p| EncounterType::ALL.into_iter().find(|t| p[t.index()]));
                let reward = k.checked_sub(1).and_then(|i| episode.rewards.get(i));
                let verdict = verdicts[k];
                if let Some(v) = verdict {
                    so_far = Some(so_far.map_or(v.rho_in, |s| s.min(v.rho_in)));
                }
                TraceRow {
                    k,
                    t: k as f64 * signal.dt,
                    ego_px: f.ego.px,
                    ego_py: f.ego.py,
                    ego_theta: f.ego.theta,
                    ego_v: f.ego.v,
                    ego_omega: f.ego.omega,
                    adv_px: f.adversary.px,
                    adv_py: f.adversary.py,
                    adv_theta: f.adversary.theta,
                    adv_v: f.adversary.v,
                    adv_omega: f.adversary.omega,
                    theta_ref_ego: f.theta_ref_ego,
                    crossing: u8::from(active[0]),
                    head_on: u8::from(active[1]),
                    overtake: u8::from(active[2]),
                    persistent,
                    r_goal_progress: reward.map(|r| r.goal_progress),
                    r_velocity: reward.map(|r| r.velocity),
                    r_angular: reward.map(|r| r.angular),
                    r_colregs: reward.map(|r| r.colregs),
                    r_zone: reward.map(|r| r.zone),
                    r_goal: reward.map(|r| r.goal),
                    r_total: reward.map(|r| r.total),
                    rho_in: verdict.map(|v| v.rho_in),
                    rho_out: verdict.map(|v| v.rho_out),
                    rho_in_so_far: so_far,
                    pending: u8::from(verdict.is_none()),
                }
            })
            .collect();
        Self { dt: signal.dt, rows }
    }

    /// Joint signal with the ego latch restored.
    pub fn signal(&self) -> JointSignal {
        let mut sig = JointSignal::new(self.dt);
        for r in &self.rows {
            let mut f = Frame::new(r.ego(), r.adversary());
            f.theta_ref_ego = r.theta_ref_ego;
            sig.push(f);
        }
        sig
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), HarnessError> {
        writeln!(w, "#format_version={TRACE_FORMAT_VERSION} dt={}", self.dt)?;
        let mut csv = csv::Writer::from_writer(w);
        for row in &self.rows {
            csv.serialize(row)?;
        }
        if self.rows.is_empty() {
            return Err(HarnessError::Format("empty trace".into()));
        }
        csv.flush()?;
        Ok(())
    }
}

pub fn export_trace<W: Write>(episode: &Episode, w: W) -> Result<(), HarnessError> {
    Trace::from_episode(episode).write(w)
}

pub fn read_trace<R: BufRead>(mut r: R) -> Result<Trace, HarnessError> {
    let mut first = String::new();
    r.read_line(&mut first)?;
    let mut version = None;
    let mut dt = None;
    let meta = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| HarnessError::Format("missing #format_version line".into()))?;
    for field in meta.split_whitespace() {
        match field.split_once('=') {
            Some(("format_version", v)) => version = v.parse::<u32>().ok(),
            Some(("dt", v)) => dt = v.parse::<f64>().ok(),
            _ => return Err(HarnessError::Format(format!("unknown trace metadata {field:?}"))),
        }
    }
    match version {
        Some(TRACE_FORMAT_VERSION) => {}
        other => return Err(HarnessError::Format(format!("unsupported trace version {other:?}"))),
    }
    let dt = dt.filter(|d| *d > 0.0).ok_or_else(|| HarnessError::Format("missing or invalid dt".into()))?;
    let rows = csv::Reader::from_reader(r).deserialize().collect::<Result<Vec<TraceRow>, _>>()?;
    if rows.is_empty() {
        return Err(HarnessError::Format("trace has no rows".into()));
    }
    Ok(Trace { dt, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_episode, scripted_policy, Env, EnvConfig, ScriptedKind};
    use crate::harness::generate_test_set;
    use crate::falsification::SetupDistribution;

    fn episode() -> Episode {
        let scenario = generate_test_set(1, 3, &SetupDistribution::default(), 100, 0.05).unwrap().remove(0);
        let mut env = Env::new(EnvConfig::default()).unwrap();
        let mut policy = scripted_policy(ScriptedKind::StraightToGoal, 0);
        run_episode(&mut env, &scenario, policy.as_mut()).unwrap()
    }

    #[test]
    fn header_and_row_count() {
        let ep = episode();
        let mut buf = Vec::new();
        export_trace(&ep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("#format_version=1 dt=10"));
        let header = lines.next().unwrap();
        for col in ["k", "t", "ego_px", "adv_omega", "theta_ref_ego", "crossing", "r_total", "rho_in", "pending"] {
            assert!(header.split(',').any(|c| c == col), "missing column {col}");
        }
        assert_eq!(lines.count(), ep.signal.len());
    }

    #[test]
    fn round_trip_reproduces_signal() {
        let ep = episode();
        let mut buf = Vec::new();
        export_trace(&ep, &mut buf).unwrap();
        let trace = read_trace(buf.as_slice()).unwrap();
        assert_eq!(trace, Trace::from_episode(&ep));
        assert_eq!(trace.signal(), ep.signal);
    }

    #[test]
    fn bad_headers_are_rejected() {
        assert!(read_trace("k,t\n".as_bytes()).is_err());
        assert!(read_trace("#format_version=2 dt=10\n".as_bytes()).is_err());
        assert!(read_trace("#format_version=1 dt=10\n".as_bytes()).is_err());
    }
}
