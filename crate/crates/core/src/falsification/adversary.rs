//! Rule-following override of the adversary's inputs.
//!
//! From the ego's perspective the adversary is the stand-on vessel in
//! crossing and overtaking encounters, and shares the give-way duty in
//! head-on encounters. While a duty is active the falsifier's raw input is
//! replaced.
//!
//! Stand-on lasts while the crossing or overtaking predicate holds and, once
//! such an encounter was confirmed persistent, until the ego's maneuver
//! latch clears, i.e. until the situation is resolved.

use crate::dynamics::{heading_tracker, ControlInput, VesselLimits, VesselState};
use crate::rules::{EncounterType, RuleParameters};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryDuty {
    None,
    /// Keep course and speed: `a = 0`, angular acceleration cancels `omega`.
    StandOn,
    /// Turn to `target` (starboard by `delta`) and hold it until step `until`.
    HeadOnGiveWay { target: f64, until: usize },
}

#[derive(Debug, Clone)]
pub struct AdversaryController {
    limits: VesselLimits,
    dt: f64,
    delta: f64,
    duration: usize,
    give_way: Option<(f64, usize)>,
    stand_on_latched: bool,
}

impl AdversaryController {
    /// `maneuver_steps` is `t_m / dt`; a head-on give-way lasts twice that.
    pub fn new(limits: VesselLimits, params: &RuleParameters, dt: f64, maneuver_steps: usize) -> Self {
        Self { limits, dt, delta: params.delta, duration: 2 * maneuver_steps, give_way: None, stand_on_latched: false }
    }

    pub fn reset(&mut self) {
        self.give_way = None;
        self.stand_on_latched = false;
    }

    /// Updates the duty for step `k` from the encounter labels at `k`.
    /// `confirmed` flags the persistent encounters confirmed by frame `k`;
    /// `ego_latched` tells whether the ego still holds a maneuver latch.
    pub fn update(
        &mut self,
        k: usize,
        active: [bool; 3],
        confirmed: [bool; 3],
        ego_latched: bool,
        adversary: &VesselState,
    ) -> AdversaryDuty {
        let head_on_confirmed = confirmed[EncounterType::HeadOn.index()];
        let stand_on = |f: [bool; 3]| f[EncounterType::Crossing.index()] || f[EncounterType::Overtake.index()];
        self.stand_on_latched = ego_latched && (self.stand_on_latched || stand_on(confirmed));
        if let Some((_, until)) = self.give_way {
            if k >= until {
                self.give_way = None;
            }
        }
        if head_on_confirmed && self.give_way.is_none() {
            self.give_way = Some((adversary.theta - self.delta, k + self.duration));
        }
        if let Some((target, until)) = self.give_way {
            return AdversaryDuty::HeadOnGiveWay { target, until };
        }
        if stand_on(active) || self.stand_on_latched {
            AdversaryDuty::StandOn
        } else {
            AdversaryDuty::None
        }
    }

    pub fn control(&self, duty: AdversaryDuty, raw: ControlInput, adversary: &VesselState) -> ControlInput {
        match duty {
            AdversaryDuty::None => raw,
            AdversaryDuty::StandOn => ControlInput::new(0.0, -adversary.omega / self.dt, &self.limits),
            AdversaryDuty::HeadOnGiveWay { target, .. } => {
                ControlInput::new(0.0, heading_tracker(adversary, target, &self.limits, self.dt), &self.limits)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step;

    fn controller() -> AdversaryController {
        AdversaryController::new(VesselLimits::default(), &RuleParameters::default(), 10.0, 7)
    }

    #[test]
    fn no_duty_passes_raw_input() {
        let mut c = controller();
        let x = VesselState::new(0.0, 0.0, 0.0, 5.0, 0.003);
        let raw = ControlInput::new(0.05, -1e-4, &VesselLimits::default());
        let duty = c.update(0, [false; 3], [false; 3], false, &x);
        assert_eq!(duty, AdversaryDuty::None);
        assert_eq!(c.control(duty, raw, &x), raw);
    }

    #[test]
    fn stand_on_examples() {
        let mut c = controller();
        let raw = ControlInput::new(0.1, 1e-4, &VesselLimits::default());
        let straight = VesselState::new(0.0, 0.0, 0.0, 5.0, 0.0);
        let duty = c.update(0, [true, false, false], [false; 3], false, &straight);
        assert_eq!(duty, AdversaryDuty::StandOn);
        assert_eq!(c.control(duty, raw, &straight), ControlInput::zero());

        let turning = VesselState::new(0.0, 0.0, 0.0, 5.0, 0.01);
        let u = c.control(AdversaryDuty::StandOn, raw, &turning);
        assert_eq!(u.a(), 0.0);
        assert_eq!(u.alpha(), -2.5e-4);

        let duty = c.update(1, [false, false, true], [false; 3], false, &straight);
        assert_eq!(duty, AdversaryDuty::StandOn);
    }

    #[test]
    fn stand_on_lasts_until_the_latch_clears() {
        let mut c = controller();
        let x = VesselState::new(0.0, 0.0, 0.0, 5.0, 0.0);
        assert_eq!(c.update(5, [true, false, false], [true, false, false], true, &x), AdversaryDuty::StandOn);
        // predicate lapsed but the ego is still maneuvering
        assert_eq!(c.update(6, [false; 3], [false; 3], true, &x), AdversaryDuty::StandOn);
        assert_eq!(c.update(7, [false; 3], [false; 3], false, &x), AdversaryDuty::None);
        // a later latch without a confirmed stand-on encounter does not revive it
        assert_eq!(c.update(8, [false; 3], [false; 3], true, &x), AdversaryDuty::None);
    }

    #[test]
    fn head_on_turn_lands_near_delta_after_maneuver_time() {
        let limits = VesselLimits::default();
        let params = RuleParameters::default();
        let mut c = controller();
        let mut x = VesselState::new(0.0, 0.0, 1.2, 7.0, 0.0);
        let start = x.theta;
        for k in 0..7 {
            let duty = c.update(k, [false, true, false], [false, k == 0, false], true, &x);
            assert!(matches!(duty, AdversaryDuty::HeadOnGiveWay { .. }));
            x = step(&x, &c.control(duty, ControlInput::zero(), &x), 10.0, &limits);
        }
        let turned = start - x.theta;
        assert!(
            turned >= 0.8 * params.delta && turned <= 1.2 * params.delta,
            "turned {} rad for delta {}",
            turned,
            params.delta
        );
        // then holds the new course
        for k in 7..14 {
            let duty = c.update(k, [false; 3], [false; 3], false, &x);
            x = step(&x, &c.control(duty, ControlInput::zero(), &x), 10.0, &limits);
        }
        assert!((start - params.delta - x.theta).abs() < 0.05 * params.delta);
        assert!(x.omega.abs() < 1e-3);
        assert_eq!(c.update(14, [false; 3], [false; 3], false, &x), AdversaryDuty::None);
    }
}
