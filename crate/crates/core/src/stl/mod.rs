//! Signal temporal logic over sampled traces.
//!
//! Formulas are built over the core grammar `true | atom | not | or | until`
//! and everything else (`and`, `implies`, `F`, `G`) is sugar that expands to
//! it. Atoms are named; their robustness values live in a [`Valuation`], an
//! atoms-by-steps matrix produced by a [`PredicateRegistry`] or by hand.

mod eval;
mod parse;
mod registry;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use eval::{
    boolean_sat, ia_robustness, ia_robustness_trace, input_vacuity, output_robustness,
    robustness, robustness_trace, vacuity_indicator, valid_len,
};
pub use parse::{parse_formula, parse_formula_seconds};
pub use registry::{PredicateRegistry, Role, RoleMap};

/// Extended-real robustness. `f64::INFINITY` and `f64::NEG_INFINITY` are
/// legitimate values.
pub type Robustness = f64;

/// Set of atom names.
pub type AtomSet = BTreeSet<String>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("insufficient horizon: step {k} requested but the trace only supports steps below {available}")]
    InsufficientHorizon { k: usize, available: usize },
    #[error("atom `{0}` has no values in the valuation")]
    UnknownAtom(String),
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown predicate `{name}` at byte {pos}")]
    UnknownPredicate { name: String, pos: usize },
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("valuation rows must all have length {expected}, atom `{name}` has {got}")]
    RaggedValuation { name: String, expected: usize, got: usize },
}

/// Step interval `[lo, hi]`, `hi = None` meaning unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    lo: usize,
    hi: Option<usize>,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Result<Self, StlError> {
        if lo > hi {
            return Err(StlError::InvalidInterval(format!("lower bound {lo} exceeds upper bound {hi}")));
        }
        Ok(Self { lo, hi: Some(hi) })
    }

    pub const fn bounded(lo: usize, hi: usize) -> Self {
        assert!(lo <= hi, "interval lower bound exceeds upper bound");
        Self { lo, hi: Some(hi) }
    }

    pub const fn unbounded(lo: usize) -> Self {
        Self { lo, hi: None }
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> Option<usize> {
        self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(hi) => write!(f, "[{},{}]", self.lo, hi),
            None => write!(f, "[{},inf]", self.lo),
        }
    }
}

/// STL abstract syntax tree over the core grammar.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Atom(String),
    Not(Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Self {
        Formula::Atom(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(phi: Formula) -> Self {
        Formula::Not(Box::new(phi))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(interval: Interval, a: Formula, b: Formula) -> Self {
        Formula::Until(interval, Box::new(a), Box::new(b))
    }

    /// `not (not a or not b)`
    pub fn and(a: Formula, b: Formula) -> Self {
        Self::not(Self::or(Self::not(a), Self::not(b)))
    }

    /// Conjunction of all items; `true` when empty.
    pub fn and_all(items: impl IntoIterator<Item = Formula>) -> Self {
        let mut iter = items.into_iter();
        match iter.next() {
            None => Formula::True,
            Some(first) => iter.fold(first, Self::and),
        }
    }

    /// `not a or b`
    pub fn implies(a: Formula, b: Formula) -> Self {
        Self::or(Self::not(a), b)
    }

    /// `true U_I phi`
    pub fn eventually(interval: Interval, phi: Formula) -> Self {
        Self::until(interval, Formula::True, phi)
    }

    /// `not F_I not phi`
    pub fn always(interval: Interval, phi: Formula) -> Self {
        Self::not(Self::eventually(interval, Self::not(phi)))
    }

    /// Names of every atom in the formula.
    pub fn atoms(&self) -> AtomSet {
        let mut out = AtomSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut AtomSet) {
        match self {
            Formula::True => {}
            Formula::Atom(name) => {
                out.insert(name.clone());
            }
            Formula::Not(a) => a.collect_atoms(out),
            Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Nesting depth; atoms and `true` have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 0,
            Formula::Not(a) => 1 + a.depth(),
            Formula::Or(a, b) | Formula::Until(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Number of future steps beyond `k` the formula reads at step `k`.
    /// Unbounded intervals count only their lower bound.
    pub fn horizon(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 0,
            Formula::Not(a) => a.horizon(),
            Formula::Or(a, b) => a.horizon().max(b.horizon()),
            Formula::Until(iv, a, b) => {
                let reach = iv.hi.unwrap_or(iv.lo);
                let left = if reach > 0 { reach - 1 + a.horizon() } else { 0 };
                (reach + b.horizon()).max(left)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Atom(name) => write!(f, "{name}"),
            Formula::Not(a) => write!(f, "not {a}"),
            Formula::Or(a, b) => write!(f, "({a} or {b})"),
            Formula::Until(iv, a, b) => write!(f, "({a} U{iv} {b})"),
        }
    }
}

/// Robustness values of named atoms at every step of a finite trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Valuation {
    len: usize,
    index: HashMap<String, usize>,
    rows: Vec<Vec<f64>>,
}

impl Valuation {
    pub fn new(len: usize) -> Self {
        Self { len, index: HashMap::new(), rows: Vec::new() }
    }

    /// Builds a valuation from `(name, row)` pairs of equal length.
    pub fn from_rows<S: Into<String>>(
        rows: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<Self, StlError> {
        let mut val: Option<Valuation> = None;
        for (name, row) in rows {
            let v = val.get_or_insert_with(|| Valuation::new(row.len()));
            v.insert(name, row)?;
        }
        Ok(val.unwrap_or_default())
    }

    pub fn insert(&mut self, name: impl Into<String>, row: Vec<f64>) -> Result<(), StlError> {
        let name = name.into();
        if row.len() != self.len {
            return Err(StlError::RaggedValuation { name, expected: self.len, got: row.len() });
        }
        match self.index.get(&name) {
            Some(&i) => self.rows[i] = row,
            None => {
                self.index.insert(name, self.rows.len());
                self.rows.push(row);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn row(&self, name: &str) -> Option<&[f64]> {
        self.index.get(name).map(|&i| self.rows[i].as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

/// Anything that can resolve predicate names while parsing.
///
/// Returning a non-atom formula lets a name stand for a whole subformula.
pub trait Vocabulary {
    fn resolve(&self, name: &str) -> Option<Formula>;
}

impl Vocabulary for AtomSet {
    fn resolve(&self, name: &str) -> Option<Formula> {
        self.contains(name).then(|| Formula::atom(name))
    }
}

impl Vocabulary for [&str] {
    fn resolve(&self, name: &str) -> Option<Formula> {
        self.contains(&name).then(|| Formula::atom(name))
    }
}

impl<const N: usize> Vocabulary for [&str; N] {
    fn resolve(&self, name: &str) -> Option<Formula> {
        self.as_slice().resolve(name)
    }
}

impl Vocabulary for Valuation {
    fn resolve(&self, name: &str) -> Option<Formula> {
        self.index.contains_key(name).then(|| Formula::atom(name))
    }
}
