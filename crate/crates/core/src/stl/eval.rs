//! Quantitative, qualitative and interface-aware evaluation.
//!
//! The quantitative evaluator works bottom-up: every subformula becomes a
//! vector of robustness values over all steps at which it is defined. The
//! qualitative evaluator is a direct recursion on the satisfaction relation
//! and shares nothing with it except [`valid_len`].

use super::{AtomSet, Formula, Robustness, StlError, Valuation};

const INF: f64 = f64::INFINITY;
const NEG_INF: f64 = f64::NEG_INFINITY;

/// How atom rows are turned into robustness values.
#[derive(Clone, Copy)]
enum AtomMode<'a> {
    Plain,
    /// `rho_{first}^{second}`: atoms only in `first` keep their value, atoms
    /// only in `second` become `+-inf`, all others `0`.
    Interface { first: &'a AtomSet, second: &'a AtomSet },
}

/// Number of leading steps `k` at which `phi` is defined on a trace of `len`
/// samples. Past the end of an unbounded interval the trace is cut off.
pub fn valid_len(phi: &Formula, len: usize) -> usize {
    match phi {
        Formula::True | Formula::Atom(_) => len,
        Formula::Not(a) => valid_len(a, len),
        Formula::Or(a, b) => valid_len(a, len).min(valid_len(b, len)),
        Formula::Until(iv, a, b) => {
            let (l1, l2) = (valid_len(a, len), valid_len(b, len));
            until_len(iv.lo(), iv.hi(), l1, l2)
        }
    }
}

fn until_len(lo: usize, hi: Option<usize>, l1: usize, l2: usize) -> usize {
    match hi {
        Some(0) => l2,
        Some(b) => l2.saturating_sub(b).min((l1 + 1).saturating_sub(b)),
        None => l2.min(l1 + 1).saturating_sub(lo),
    }
}

fn atom_value(mode: AtomMode<'_>, name: &str, rho: f64) -> f64 {
    match mode {
        AtomMode::Plain => rho,
        AtomMode::Interface { first, second } => {
            match (first.contains(name), second.contains(name)) {
                (true, false) => rho,
                // sgn(0) is read as a violation, matching `h > 0` satisfaction.
                (false, true) => {
                    if rho > 0.0 {
                        INF
                    } else {
                        NEG_INF
                    }
                }
                _ => 0.0,
            }
        }
    }
}

fn eval_vec(phi: &Formula, val: &Valuation, mode: AtomMode<'_>) -> Result<Vec<f64>, StlError> {
    match phi {
        Formula::True => Ok(vec![INF; val.len()]),
        Formula::Atom(name) => {
            let row = val.row(name).ok_or_else(|| StlError::UnknownAtom(name.clone()))?;
            Ok(row.iter().map(|&r| atom_value(mode, name, r)).collect())
        }
        Formula::Not(a) => {
            let mut v = eval_vec(a, val, mode)?;
            v.iter_mut().for_each(|x| *x = -*x);
            Ok(v)
        }
        Formula::Or(a, b) => {
            let va = eval_vec(a, val, mode)?;
            let vb = eval_vec(b, val, mode)?;
            Ok(va.iter().zip(&vb).map(|(x, y)| x.max(*y)).collect())
        }
        Formula::Until(iv, a, b) => {
            let r1 = eval_vec(a, val, mode)?;
            let r2 = eval_vec(b, val, mode)?;
            let len = until_len(iv.lo(), iv.hi(), r1.len(), r2.len());
            let last_unbounded = r2.len().min(r1.len() + 1).saturating_sub(1);
            let mut out = Vec::with_capacity(len);
            for k in 0..len {
                let end = iv.hi().map_or(last_unbounded, |b| k + b);
                let start = k + iv.lo();
                // running = min of r1 over [k, i)
                let mut running = INF;
                let mut best = NEG_INF;
                for i in k..=end {
                    if i >= start {
                        best = best.max(running.min(r2[i]));
                    }
                    if i < end {
                        running = running.min(r1[i]);
                    }
                }
                out.push(best);
            }
            Ok(out)
        }
    }
}

fn at(values: Vec<f64>, k: usize) -> Result<Robustness, StlError> {
    values
        .get(k)
        .copied()
        .ok_or(StlError::InsufficientHorizon { k, available: values.len() })
}

/// Robustness of `phi` at every step where it is defined.
pub fn robustness_trace(phi: &Formula, val: &Valuation) -> Result<Vec<Robustness>, StlError> {
    eval_vec(phi, val, AtomMode::Plain)
}

/// Quantitative robustness of `phi` at step `k`.
pub fn robustness(phi: &Formula, val: &Valuation, k: usize) -> Result<Robustness, StlError> {
    at(robustness_trace(phi, val)?, k)
}

/// Interface-aware robustness `rho_{first}^{second}` at every defined step.
pub fn ia_robustness_trace(
    phi: &Formula,
    val: &Valuation,
    first: &AtomSet,
    second: &AtomSet,
) -> Result<Vec<Robustness>, StlError> {
    eval_vec(phi, val, AtomMode::Interface { first, second })
}

/// Interface-aware robustness `rho_{first}^{second}` at step `k`.
pub fn ia_robustness(
    phi: &Formula,
    val: &Valuation,
    k: usize,
    first: &AtomSet,
    second: &AtomSet,
) -> Result<Robustness, StlError> {
    at(ia_robustness_trace(phi, val, first, second)?, k)
}

/// Input vacuity `rho_I^{}` at step 0.
pub fn input_vacuity(phi: &Formula, val: &Valuation, inputs: &AtomSet) -> Result<Robustness, StlError> {
    ia_robustness(phi, val, 0, inputs, &AtomSet::new())
}

/// Output robustness `rho_O^{P \ O}` at step 0, with `P` the atoms of `phi`.
pub fn output_robustness(
    phi: &Formula,
    val: &Valuation,
    outputs: &AtomSet,
) -> Result<Robustness, StlError> {
    let rest: AtomSet = phi.atoms().difference(outputs).cloned().collect();
    ia_robustness(phi, val, 0, outputs, &rest)
}

/// `1` when the input vacuity is strictly positive, `0` otherwise.
pub fn vacuity_indicator(rho_in: Robustness) -> u8 {
    u8::from(rho_in > 0.0)
}

/// Qualitative satisfaction of `phi` at step `k` (atoms hold when `h > 0`).
pub fn boolean_sat(phi: &Formula, val: &Valuation, k: usize) -> Result<bool, StlError> {
    let available = valid_len(phi, val.len());
    if k >= available {
        return Err(StlError::InsufficientHorizon { k, available });
    }
    sat(phi, val, k)
}

fn sat(phi: &Formula, val: &Valuation, k: usize) -> Result<bool, StlError> {
    Ok(match phi {
        Formula::True => true,
        Formula::Atom(name) => {
            let row = val.row(name).ok_or_else(|| StlError::UnknownAtom(name.clone()))?;
            row[k] > 0.0
        }
        Formula::Not(a) => !sat(a, val, k)?,
        Formula::Or(a, b) => sat(a, val, k)? || sat(b, val, k)?,
        Formula::Until(iv, a, b) => {
            let end = match iv.hi() {
                Some(hi) => k + hi,
                None => {
                    let l1 = valid_len(a, val.len());
                    let l2 = valid_len(b, val.len());
                    l2.min(l1 + 1) - 1
                }
            };
            for i in (k + iv.lo())..=end {
                if sat(b, val, i)? {
                    let mut hold = true;
                    for j in k..i {
                        if !sat(a, val, j)? {
                            hold = false;
                            break;
                        }
                    }
                    if hold {
                        return Ok(true);
                    }
                }
            }
            false
        }
    })
}
