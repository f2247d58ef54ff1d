//! Named robustness measures over an arbitrary signal type.

use std::collections::BTreeMap;
use std::fmt;

use super::{AtomSet, Formula, StlError, Valuation, Vocabulary};

/// Interface role of an atom in IA evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Input,
    Output,
    Unassigned,
}

/// Atom name to role.
pub type RoleMap = BTreeMap<String, Role>;

type Measure<S> = Box<dyn Fn(&S, usize) -> f64 + Send + Sync>;

struct Entry<S> {
    measure: Measure<S>,
    role: Role,
}

/// Atoms with their robustness measures `h(signal, k)`, plus named macros
/// that expand to whole subformulas during parsing.
pub struct PredicateRegistry<S> {
    atoms: BTreeMap<String, Entry<S>>,
    macros: BTreeMap<String, Formula>,
}

impl<S> Default for PredicateRegistry<S> {
    fn default() -> Self {
        Self { atoms: BTreeMap::new(), macros: BTreeMap::new() }
    }
}

impl<S> fmt::Debug for PredicateRegistry<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PredicateRegistry")
            .field("atoms", &self.atoms.keys().collect::<Vec<_>>())
            .field("macros", &self.macros.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl<S> PredicateRegistry<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an atom; re-registering a name replaces it.
    pub fn register(
        &mut self,
        name: impl Into<String>,
        role: Role,
        measure: impl Fn(&S, usize) -> f64 + Send + Sync + 'static,
    ) {
        self.atoms.insert(name.into(), Entry { measure: Box::new(measure), role });
    }

    pub fn define_macro(&mut self, name: impl Into<String>, body: Formula) {
        self.macros.insert(name.into(), body);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.atoms.contains_key(name)
    }

    pub fn role(&self, name: &str) -> Option<Role> {
        self.atoms.get(name).map(|e| e.role)
    }

    pub fn roles(&self) -> RoleMap {
        self.atoms.iter().map(|(n, e)| (n.clone(), e.role)).collect()
    }

    pub fn atoms_with_role(&self, role: Role) -> AtomSet {
        self.atoms
            .iter()
            .filter(|(_, e)| e.role == role)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn measure(&self, name: &str, signal: &S, k: usize) -> Option<f64> {
        self.atoms.get(name).map(|e| (e.measure)(signal, k))
    }

    /// Evaluates the atoms in `names` at steps `0..len`.
    pub fn valuation_for(
        &self,
        names: &AtomSet,
        signal: &S,
        len: usize,
    ) -> Result<Valuation, StlError> {
        let mut val = Valuation::new(len);
        for name in names {
            let entry = self.atoms.get(name).ok_or_else(|| StlError::UnknownAtom(name.clone()))?;
            let row = (0..len).map(|k| (entry.measure)(signal, k)).collect();
            val.insert(name.clone(), row)?;
        }
        Ok(val)
    }

    /// Evaluates every registered atom at steps `0..len`.
    pub fn valuation(&self, signal: &S, len: usize) -> Result<Valuation, StlError> {
        let names: AtomSet = self.atoms.keys().cloned().collect();
        self.valuation_for(&names, signal, len)
    }
}

impl<S> Vocabulary for PredicateRegistry<S> {
    fn resolve(&self, name: &str) -> Option<Formula> {
        if let Some(body) = self.macros.get(name) {
            return Some(body.clone());
        }
        self.contains(name).then(|| Formula::atom(name))
    }
}
