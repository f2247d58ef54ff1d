//! Give-way rules on scripted and constructed traces.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use proptest::prelude::*;
use seatrial::dynamics::{wrap_angle, VesselLimits, VesselState};
use seatrial::env::{run_episode, scripted_policy, Env, EnvConfig, Episode, ScriptedKind};
use seatrial::falsification::{Scenario, ScenarioSetup};
use seatrial::rules::{
    build_encounter_predicate, build_persistent_encounter, classify_encounters, EncounterType, RuleContext,
    RuleParameters,
};
use seatrial::signal::JointSignal;
use seatrial::stl::{boolean_sat, parse_formula, Formula, Interval};

fn ctx() -> Arc<RuleContext> {
    RuleContext::new(RuleParameters::default(), VesselLimits::default(), 10.0).unwrap()
}

/// Ego heads north from (0, -6 km); the adversary is placed so that the
/// encounter predicate rises at step 25.
fn scripted(t: EncounterType) -> Scenario {
    let adversary = match t {
        EncounterType::Crossing => VesselState::new(5000.0, -1000.0, PI, 7.5, 0.0),
        EncounterType::HeadOn => VesselState::new(0.0, 4000.0, -FRAC_PI_2, 7.5, 0.0),
        EncounterType::Overtake => VesselState::new(0.0, -4000.0, FRAC_PI_2, 3.0, 0.0),
    };
    let setup = ScenarioSetup {
        ego: VesselState::new(0.0, -6000.0, FRAC_PI_2, 7.5, 0.0),
        adversary,
        goal: [0.0, 6000.0],
        tag: t,
    };
    Scenario::new(setup, vec![0.0; 200])
}

fn run(scenario: &Scenario, kind: ScriptedKind) -> Episode {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    let mut policy = scripted_policy(kind, 0);
    run_episode(&mut env, scenario, policy.as_mut()).unwrap()
}

#[test]
fn far_apart_vessels_are_vacuous() {
    let ego: Vec<_> = (0..=100).map(|k| VesselState::new(0.0, 75.0 * k as f64, FRAC_PI_2, 7.5, 0.0)).collect();
    let adv: Vec<_> = (0..=100).map(|k| VesselState::new(20_000.0 + 75.0 * k as f64, 0.0, 0.0, 7.5, 0.0)).collect();
    let signal = JointSignal::from_states(10.0, &ego, &adv);
    let c = ctx();
    let labels = classify_encounters(&signal, &c).unwrap();
    assert!(labels.active.iter().all(|a| a.iter().all(|&b| !b)));
    assert!(!labels.any_persistent());
    let v = c.evaluate(&signal).unwrap();
    assert!(v.vacuous() && v.satisfied);
    assert!(v.rho_in > 0.0);
    assert_eq!(v.rho_out, f64::INFINITY);
}

#[test]
fn encounter_from_the_first_frame_never_persists() {
    // already inside the encounter at k = 0: no rising edge anywhere
    let mut s = scripted(EncounterType::Crossing);
    s.setup.ego.py = -4000.0;
    s.setup.adversary.px = 3000.0;
    let ep = run(&s, ScriptedKind::StraightToGoal);
    assert!(ep.labels.active[0][EncounterType::Crossing.index()]);
    assert!(!ep.labels.any_persistent());
    assert!(ctx().evaluate(&ep.signal).unwrap().vacuous());
}

#[test]
fn scripted_encounters_are_detected_at_their_rising_edge() {
    for (t, k) in [(EncounterType::Crossing, 24), (EncounterType::HeadOn, 24), (EncounterType::Overtake, 2)] {
        let ep = run(&scripted(t), ScriptedKind::StraightToGoal);
        assert_eq!(ep.labels.first_persistent(100), Some((k, t)), "{t:?}");
        assert!(!ep.labels.active[k][t.index()] && ep.labels.active[k + 1][t.index()]);
        // the latch holds the heading of the rising edge
        assert_eq!(ep.signal.frames[k + 5].theta_ref_ego, Some(ep.signal.frames[k].ego.theta));
    }
}

#[test]
fn holding_course_violates_every_rule() {
    for t in EncounterType::ALL {
        let ep = run(&scripted(t), ScriptedKind::StraightToGoal);
        let v = ctx().evaluate(&ep.signal).unwrap();
        assert!(!v.vacuous(), "{t:?}");
        assert!(!v.satisfied && v.rho_out < 0.0, "{t:?}: {v:?}");
    }
}

#[test]
fn giving_way_satisfies_every_rule() {
    for t in EncounterType::ALL {
        let ep = run(&scripted(t), ScriptedKind::GiveWayReference);
        let v = ctx().evaluate(&ep.signal).unwrap();
        assert!(v.satisfied, "{t:?}: {v:?}");
        assert!(v.vacuous() || v.rho_out > 0.0, "{t:?}: {v:?}");
        // turning at the first active step leaves the head-on and overtaking
        // sectors before they persist; the wide crossing sector still does
        if t == EncounterType::Crossing {
            assert_eq!(v.rho_in, 0.0, "{t:?}");
        }
    }
}

#[test]
fn give_way_turns_at_least_delta_within_maneuver_time() {
    let params = RuleParameters::default();
    let ep = run(&scripted(EncounterType::Crossing), ScriptedKind::GiveWayReference);
    let (k, _) = ep.labels.first_persistent(100).unwrap();
    let base = ep.signal.frames[k].ego.theta;
    // persistence t_p = 5 steps, then t_m = 7 steps to turn
    let turned = (k + 5..=k + 12).map(|j| base - ep.signal.frames[j].ego.theta).fold(f64::MIN, f64::max);
    assert!(turned >= params.delta, "turned {} deg", turned.to_degrees());
}

#[test]
fn persistent_encounter_matches_its_definition() {
    let params = RuleParameters::default();
    for t in EncounterType::ALL {
        let enc = build_encounter_predicate(t, &params).unwrap();
        let expected = Formula::and(Formula::not(enc.clone()), Formula::always(Interval::bounded(1, 5), enc));
        assert_eq!(build_persistent_encounter(t, &params, 10.0).unwrap(), expected);
    }
}

#[test]
fn head_on_from_the_setup_box_raises_a_persistent_head_on() {
    // straight-line head-on from the head-on box, both at 7.5 m/s
    let ego: Vec<_> = (0..=60).map(|k| VesselState::new(-500.0, -4000.0 + 75.0 * k as f64, FRAC_PI_2, 7.5, 0.0)).collect();
    let adv: Vec<_> =
        (0..=60).map(|k| VesselState::new(-500.0, 4500.0 - 75.0 * k as f64, 1.5 * PI, 7.5, 0.0)).collect();
    let labels = classify_encounters(&JointSignal::from_states(10.0, &ego, &adv), &ctx()).unwrap();
    let (k, t) = labels.first_persistent(60).unwrap();
    assert_eq!(t, EncounterType::HeadOn);
    assert!(labels.active[k + 1..=k + 5].iter().all(|a| a[t.index()]));
}

fn position_sector_holds(c: &RuleContext, t: EncounterType, ego: VesselState, adv: VesselState) -> bool {
    let name = t.name();
    let phi = parse_formula(&format!("{name}_position_lo and not {name}_position_hi"), &c.registry).unwrap();
    let signal = JointSignal::from_states(10.0, &[ego], &[adv]);
    let val = c.registry.valuation_for(&phi.atoms(), &signal, 1).unwrap();
    boolean_sat(&phi, &val, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn position_sector_matches_bearing(
        theta in -PI..PI,
        bearing in -PI..PI,
        range in 100.0f64..10_000.0,
    ) {
        let c = ctx();
        let ego = VesselState::new(0.0, 0.0, theta, 7.5, 0.0);
        let abs = theta + bearing;
        let adv = VesselState::new(range * abs.cos(), range * abs.sin(), 0.0, 5.0, 0.0);
        for t in EncounterType::ALL {
            let s = c.params.sectors(t);
            let rel = wrap_angle(bearing - s.beta_lo);
            let width = s.beta_hi - s.beta_lo;
            // stay clear of the sector edges where rounding decides
            prop_assume!(rel.abs() > 1e-6 && (rel - width).abs() > 1e-6);
            let oracle = rel > 0.0 && rel < width;
            prop_assert_eq!(position_sector_holds(&c, t, ego, adv), oracle, "{:?} bearing {}", t, bearing);
        }
    }
}
