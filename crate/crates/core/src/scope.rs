//! Variable identifiers and variable sets.

use std::fmt;

use fixedbitset::FixedBitSet;

/// Index of a binary random variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "X{}", self.0)
    }
}

/// A set of variables drawn from a universe of `universe()` variables.
///
/// Scopes over the same universe compare and hash by membership.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scope {
    bits: FixedBitSet,
}

impl Scope {
    pub fn empty(universe: usize) -> Self {
        Scope {
            bits: FixedBitSet::with_capacity(universe),
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(universe);
        bits.insert_range(..);
        Scope { bits }
    }

    pub fn singleton(universe: usize, var: VarId) -> Self {
        let mut s = Scope::empty(universe);
        s.insert(var);
        s
    }

    /// Builds a scope from variable indices. Indices `>= universe` panic.
    pub fn from_indices(universe: usize, vars: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Scope::empty(universe);
        for v in vars {
            s.bits.insert(v);
        }
        s
    }

    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.bits.contains(var.index())
    }

    pub fn insert(&mut self, var: VarId) {
        self.bits.insert(var.index());
    }

    pub fn union_with(&mut self, other: &Scope) {
        self.bits.union_with(&other.bits);
    }

    pub fn intersection(&self, other: &Scope) -> Scope {
        let mut bits = self.bits.clone();
        bits.intersect_with(&other.bits);
        Scope { bits }
    }

    pub fn difference(&self, other: &Scope) -> Scope {
        let mut bits = self.bits.clone();
        bits.difference_with(&other.bits);
        Scope { bits }
    }

    pub fn is_subset(&self, other: &Scope) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn is_disjoint(&self, other: &Scope) -> bool {
        self.bits.is_disjoint(&other.bits)
    }

    pub fn intersects(&self, other: &Scope) -> bool {
        !self.is_disjoint(other)
    }

    /// Members in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = VarId> + '_ {
        self.bits.ones().map(|i| VarId(i as u32))
    }

    pub fn to_vec(&self) -> Vec<VarId> {
        self.iter().collect()
    }
}

impl fmt::Debug for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.bits.ones()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_disjoint_equality() {
        let a = Scope::from_indices(8, [1, 3]);
        let b = Scope::from_indices(8, [1, 3, 5]);
        let c = Scope::from_indices(8, [0, 2]);
        assert!(a.is_subset(&b));
        assert!(!b.is_subset(&a));
        assert!(a.is_subset(&a));
        assert!(a.is_disjoint(&c));
        assert!(!a.is_disjoint(&b));
        assert_eq!(a, Scope::from_indices(8, [3, 1]));
        assert_eq!(b.difference(&a).to_vec(), vec![VarId(5)]);
        assert_eq!(Scope::full(3).len(), 3);
        assert!(Scope::empty(3).is_empty());
    }
}
