//! Atom registry and formula builders for the give-way rules.
//!
//! Atom names (all scaled to seconds):
//!
//! | name | measure | role |
//! |---|---|---|
//! | `<type>_position_lo/hi` | position half-plane at `beta_lo/hi` | input |
//! | `<type>_orientation_lo/hi` | orientation half-plane at `gamma_lo/hi` | input |
//! | `velocity_halfplane_neg/pos` | velocity half-plane at `-eps/+eps` | input |
//! | `time_horizon` | closing-speed margin | input |
//! | `drives_faster` | speed difference | input |
//! | `clear_velocity_halfplane_neg/pos`, `clear_time_horizon` | same as above | output |
//! | `change_course_starboard/port` | course change with `-delta/+delta` | output |
//!
//! The velocity-obstacle measures appear twice so that the antecedent and the
//! consequent of a rule never share an atom: interface-aware evaluation
//! treats an atom in both sets as `0`.

use std::sync::Arc;

use super::measures::{
    h_change_course, h_drives_faster, h_orientation_halfplane, h_position_halfplane,
    h_time_horizon, h_velocity_halfplane, tangent_angle, ManeuverReference,
};
use super::{EncounterType, RuleError, RuleParameters};
use crate::dynamics::VesselLimits;
use crate::signal::JointSignal;
use crate::stl::{
    boolean_sat, ia_robustness_trace, input_vacuity, output_robustness, AtomSet, Formula,
    Interval, PredicateRegistry, Robustness, Role, Valuation,
};

pub const VH_NEG: &str = "velocity_halfplane_neg";
pub const VH_POS: &str = "velocity_halfplane_pos";
pub const TIME_HORIZON: &str = "time_horizon";
pub const DRIVES_FASTER: &str = "drives_faster";
pub const CLEAR_PREFIX: &str = "clear_";
pub const CHANGE_STARBOARD: &str = "change_course_starboard";
pub const CHANGE_PORT: &str = "change_course_port";

fn sector_atom(t: EncounterType, kind: &str, bound: &str) -> String {
    format!("{}_{kind}_{bound}", t.name())
}

/// Registry of every rule atom over joint signals, plus macros for the
/// composite predicates (`crossing`, `velocity_obstacle`,
/// `persistent_head_on`, `maneuver_overtake`, ...).
pub fn colregs_registry(
    params: &RuleParameters,
    limits: &VesselLimits,
    dt: f64,
) -> Result<PredicateRegistry<JointSignal>, RuleError> {
    params.validate(dt)?;
    let mut reg = PredicateRegistry::new();
    let l = *limits;
    let p = *params;

    for t in EncounterType::ALL {
        let s = *p.sectors(t);
        for (bound, beta) in [("lo", s.beta_lo), ("hi", s.beta_hi)] {
            reg.register(sector_atom(t, "position", bound), Role::Input, move |sig: &JointSignal, k| {
                let f = &sig.frames[k];
                h_position_halfplane(&f.ego, &f.adversary, beta, &l)
            });
        }
        for (bound, gamma) in [("lo", s.gamma_lo), ("hi", s.gamma_hi)] {
            reg.register(sector_atom(t, "orientation", bound), Role::Input, move |sig: &JointSignal, k| {
                let f = &sig.frames[k];
                h_orientation_halfplane(&f.ego, &f.adversary, gamma, &l)
            });
        }
    }

    for (prefix, role) in [("", Role::Input), (CLEAR_PREFIX, Role::Output)] {
        for (name, sign) in [(VH_NEG, -1.0), (VH_POS, 1.0)] {
            let r_zone = p.r_zone;
            reg.register(format!("{prefix}{name}"), role, move |sig: &JointSignal, k| {
                let f = &sig.frames[k];
                let (eps, _) = tangent_angle(&f.ego, &f.adversary, r_zone);
                // coincident vessels: the zones overlap and the episode ends anyway
                h_velocity_halfplane(&f.ego, &f.adversary, sign * eps, &l).unwrap_or(0.0)
            });
        }
        let t_h = p.t_h;
        reg.register(format!("{prefix}{TIME_HORIZON}"), role, move |sig: &JointSignal, k| {
            let f = &sig.frames[k];
            h_time_horizon(&f.ego, &f.adversary, t_h, &l)
        });
    }

    reg.register(DRIVES_FASTER, Role::Input, move |sig: &JointSignal, k| {
        let f = &sig.frames[k];
        h_drives_faster(&f.ego, &f.adversary, &l)
    });

    for (name, sign) in [(CHANGE_STARBOARD, -1.0), (CHANGE_PORT, 1.0)] {
        let delta = p.delta;
        reg.register(name, Role::Output, move |sig: &JointSignal, k| {
            let f = &sig.frames[k];
            // unlatched frames measure against the current heading
            let reference = ManeuverReference::latched(f.theta_ref_ego.unwrap_or(f.ego.theta));
            h_change_course(&f.ego, &reference, sign * delta, &l).unwrap_or(f64::NAN)
        });
    }

    reg.define_macro("velocity_obstacle", velocity_obstacle(""));
    reg.define_macro("clear_velocity_obstacle", velocity_obstacle(CLEAR_PREFIX));
    for t in EncounterType::ALL {
        reg.define_macro(t.name(), build_encounter_predicate(t, &p)?);
        reg.define_macro(format!("persistent_{}", t.name()), build_persistent_encounter(t, &p, dt)?);
        reg.define_macro(format!("maneuver_{}", t.name()), build_maneuver_predicate(t));
    }
    Ok(reg)
}

/// `vh(-eps) and not vh(+eps) and time_horizon`, optionally over the
/// output-side copies.
fn velocity_obstacle(prefix: &str) -> Formula {
    Formula::and_all([
        Formula::atom(format!("{prefix}{VH_NEG}")),
        Formula::not(Formula::atom(format!("{prefix}{VH_POS}"))),
        Formula::atom(format!("{prefix}{TIME_HORIZON}")),
    ])
}

/// Position sector, orientation sector and velocity obstacle; overtaking
/// also requires the ego to be faster.
pub fn build_encounter_predicate(t: EncounterType, params: &RuleParameters) -> Result<Formula, RuleError> {
    let s = params.sectors(t);
    s.validate(t.name())?;
    let sector = |kind: &str| {
        Formula::and(
            Formula::atom(sector_atom(t, kind, "lo")),
            Formula::not(Formula::atom(sector_atom(t, kind, "hi"))),
        )
    };
    let mut parts = vec![sector("position"), sector("orientation"), velocity_obstacle("")];
    if t == EncounterType::Overtake {
        parts.push(Formula::atom(DRIVES_FASTER));
    }
    Ok(Formula::and_all(parts))
}

/// Rising edge followed by `t_p` of continuous encounter:
/// `not enc and G[1, t_p] enc`.
pub fn build_persistent_encounter(
    t: EncounterType,
    params: &RuleParameters,
    dt: f64,
) -> Result<Formula, RuleError> {
    let tp = params.persistence_steps(dt)?;
    let enc = build_encounter_predicate(t, params)?;
    Ok(Formula::and(Formula::not(enc.clone()), Formula::always(Interval::bounded(1, tp), enc)))
}

/// Starboard turn of at least `delta`; overtaking accepts either side.
pub fn build_maneuver_predicate(t: EncounterType) -> Formula {
    let starboard = Formula::atom(CHANGE_STARBOARD);
    match t {
        EncounterType::Crossing | EncounterType::HeadOn => starboard,
        EncounterType::Overtake => Formula::or(starboard, Formula::not(Formula::atom(CHANGE_PORT))),
    }
}

fn rule_body(t: EncounterType, params: &RuleParameters, dt: f64) -> Result<Formula, RuleError> {
    let tp = params.persistence_steps(dt)?;
    let tm = params.maneuver_steps(dt)?;
    let consequent = Formula::and(
        Formula::eventually(Interval::bounded(tp, tp + tm), build_maneuver_predicate(t)),
        Formula::eventually(
            Interval::bounded(tp, tp + 2 * tm),
            Formula::not(velocity_obstacle(CLEAR_PREFIX)),
        ),
    );
    Ok(Formula::implies(build_persistent_encounter(t, params, dt)?, consequent))
}

/// A give-way rule with its interface sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ColregsSpec {
    /// Full formula evaluated at step 0 of an `steps + 1` frame trace.
    pub formula: Formula,
    /// The rule without its outer `G`, evaluated once per step.
    pub body: Formula,
    /// Antecedent atoms.
    pub inputs: AtomSet,
    /// Consequent atoms.
    pub outputs: AtomSet,
    pub steps: usize,
    /// Steps of look-ahead the body needs, `(t_p + 2 t_m) / dt`.
    pub delay: usize,
}

/// Outcome of monitoring one trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub rho_in: Robustness,
    pub rho_out: Robustness,
    pub satisfied: bool,
}

impl Verdict {
    pub fn vacuous(&self) -> bool {
        crate::stl::vacuity_indicator(self.rho_in) == 1
    }
}

// Atoms left and right of the implication `not a or b`.
fn interface_sets(body: &Formula) -> (AtomSet, AtomSet) {
    match body {
        Formula::Or(antecedent, consequent) => (antecedent.atoms(), consequent.atoms()),
        _ => (AtomSet::new(), body.atoms()),
    }
}

impl ColregsSpec {
    fn from_parts(body: Formula, inputs: AtomSet, outputs: AtomSet, steps: usize, delay: usize) -> Self {
        // Every body instance needs `delay` frames of look-ahead, so the
        // outer G covers [0, steps - delay]. Shorter traces have no complete
        // instance: G over an empty range is `true`.
        let formula = if steps >= delay {
            Formula::always(Interval::bounded(0, steps - delay), body.clone())
        } else {
            Formula::True
        };
        Self { formula, body, inputs, outputs, steps, delay }
    }

    /// Atoms read by the formula.
    pub fn atoms(&self) -> AtomSet {
        self.inputs.union(&self.outputs).cloned().collect()
    }

    /// Input vacuity, output robustness and qualitative satisfaction at step 0.
    pub fn verdict(&self, val: &Valuation) -> Result<Verdict, RuleError> {
        Ok(Verdict {
            rho_in: input_vacuity(&self.formula, val, &self.inputs)?,
            rho_out: output_robustness(&self.formula, val, &self.outputs)?,
            satisfied: boolean_sat(&self.formula, val, 0)?,
        })
    }

    /// Body verdicts `(rho_in, rho_out)` at every step the valuation supports.
    pub fn body_verdicts(&self, val: &Valuation) -> Result<Vec<(Robustness, Robustness)>, RuleError> {
        let rho_in = ia_robustness_trace(&self.body, val, &self.inputs, &AtomSet::new())?;
        let rho_out = ia_robustness_trace(&self.body, val, &self.outputs, &self.inputs)?;
        Ok(rho_in.into_iter().zip(rho_out).collect())
    }
}

/// One give-way rule for a trace of `steps + 1` frames.
pub fn build_colregs_spec(
    t: EncounterType,
    params: &RuleParameters,
    steps: usize,
    dt: f64,
) -> Result<ColregsSpec, RuleError> {
    params.validate(dt)?;
    let body = rule_body(t, params, dt)?;
    let (inputs, outputs) = interface_sets(&body);
    Ok(ColregsSpec::from_parts(body, inputs, outputs, steps, params.delay_steps(dt)?))
}

/// Conjunction of all three give-way rules.
pub fn build_combined_spec(params: &RuleParameters, steps: usize, dt: f64) -> Result<ColregsSpec, RuleError> {
    params.validate(dt)?;
    let mut inputs = AtomSet::new();
    let mut outputs = AtomSet::new();
    let mut bodies = Vec::new();
    for t in EncounterType::ALL {
        let body = rule_body(t, params, dt)?;
        let (i, o) = interface_sets(&body);
        inputs.extend(i);
        outputs.extend(o);
        bodies.push(body);
    }
    Ok(ColregsSpec::from_parts(Formula::and_all(bodies), inputs, outputs, steps, params.delay_steps(dt)?))
}

/// Shared rule context: parameters, the atom registry and the encounter
/// formulas.
pub struct RuleContext {
    pub params: RuleParameters,
    pub limits: VesselLimits,
    pub dt: f64,
    pub registry: PredicateRegistry<JointSignal>,
    pub encounters: [Formula; 3],
    encounter_atoms: AtomSet,
}

impl std::fmt::Debug for RuleContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RuleContext")
            .field("params", &self.params)
            .field("limits", &self.limits)
            .field("dt", &self.dt)
            .finish()
    }
}

impl RuleContext {
    pub fn new(params: RuleParameters, limits: VesselLimits, dt: f64) -> Result<Arc<Self>, RuleError> {
        let registry = colregs_registry(&params, &limits, dt)?;
        let encounters = [
            build_encounter_predicate(EncounterType::Crossing, &params)?,
            build_encounter_predicate(EncounterType::HeadOn, &params)?,
            build_encounter_predicate(EncounterType::Overtake, &params)?,
        ];
        let encounter_atoms = encounters.iter().flat_map(Formula::atoms).collect();
        Ok(Arc::new(Self { params, limits, dt, registry, encounters, encounter_atoms }))
    }

    /// Encounter predicates at frame `k`, indexed by [`EncounterType::index`].
    pub fn encounters_at(&self, signal: &JointSignal, k: usize) -> Result<[bool; 3], RuleError> {
        let window = signal.window(k, k + 1);
        let val = self.registry.valuation_for(&self.encounter_atoms, &window, 1)?;
        let mut out = [false; 3];
        for (slot, phi) in out.iter_mut().zip(&self.encounters) {
            *slot = boolean_sat(phi, &val, 0)?;
        }
        Ok(out)
    }

    /// Valuation of the atoms of `spec` over the whole signal.
    pub fn valuation(&self, spec: &ColregsSpec, signal: &JointSignal) -> Result<Valuation, RuleError> {
        Ok(self.registry.valuation_for(&spec.atoms(), signal, signal.len())?)
    }

    /// Combined-rule verdict for a complete signal with latches applied.
    pub fn evaluate(&self, signal: &JointSignal) -> Result<Verdict, RuleError> {
        let spec = build_combined_spec(&self.params, signal.steps(), self.dt)?;
        spec.verdict(&self.valuation(&spec, signal)?)
    }
}
