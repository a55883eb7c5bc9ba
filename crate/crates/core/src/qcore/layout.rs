//! Tensor-product layouts and (possibly masked) bases over them.
//!
//! Kronecker ordering follows the layout list: the leftmost subsystem is the
//! slowest index. Every operator in the crate is built against this ordering so
//! operators from different modules compose bit-identically.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    subsystems: Vec<Subsystem>,
    strides: Vec<usize>,
    total: usize,
}

impl SpaceLayout {
    pub fn new<S: AsRef<str>>(parts: &[(S, usize)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidDimension { dim: 0, reason: "layout needs at least one subsystem" });
        }
        let mut subsystems: Vec<Subsystem> = Vec::with_capacity(parts.len());
        for (label, dim) in parts {
            let label = label.as_ref();
            if *dim == 0 {
                return Err(Error::InvalidDimension { dim: 0, reason: "local dimension must be at least 1" });
            }
            if subsystems.iter().any(|s| s.label == label) {
                return Err(Error::DuplicateLabel(label.to_string()));
            }
            subsystems.push(Subsystem { label: label.to_string(), dim: *dim });
        }
        let mut strides = vec![1; subsystems.len()];
        for k in (0..subsystems.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * subsystems[k + 1].dim;
        }
        let total = subsystems.iter().map(|s| s.dim).product();
        Ok(SpaceLayout { subsystems, strides, total })
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.subsystems.iter().map(|s| s.label.as_str())
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.subsystems.iter().position(|s| s.label == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.subsystems[self.position(label)?].dim)
    }

    pub fn stride(&self, position: usize) -> usize {
        self.strides[position]
    }

    /// Local occupations of a product-basis index.
    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.subsystems.len()];
        for (k, stride) in self.strides.iter().enumerate() {
            occ[k] = index / stride;
            index %= stride;
        }
        occ
    }

    pub fn encode(&self, occupations: &[usize]) -> usize {
        occupations.iter().zip(&self.strides).map(|(o, s)| o * s).sum()
    }

    /// Local occupation of subsystem `position` in product index `index`.
    pub fn local(&self, index: usize, position: usize) -> usize {
        (index / self.strides[position]) % self.subsystems[position].dim
    }
}

/// A basis of product states over a layout, either the full product basis or a
/// masked subset of it. Retained states keep product-index order.
#[derive(Debug)]
pub struct Basis {
    layout: Arc<SpaceLayout>,
    states: Option<Vec<usize>>,
    lookup: HashMap<usize, usize>,
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.states == other.states
    }
}

impl Basis {
    pub fn product(layout: Arc<SpaceLayout>) -> Arc<Basis> {
        Arc::new(Basis { layout, states: None, lookup: HashMap::new() })
    }

    /// Retain the product states whose local occupations satisfy `keep`.
    pub fn restricted(layout: Arc<SpaceLayout>, keep: impl Fn(&[usize]) -> bool) -> Result<Arc<Basis>> {
        let states: Vec<usize> = (0..layout.total_dim()).filter(|&i| keep(&layout.decode(i))).collect();
        if states.is_empty() {
            return Err(Error::InvalidDimension { dim: 0, reason: "mask retains no basis states" });
        }
        if states.len() == layout.total_dim() {
            return Ok(Basis::product(layout));
        }
        let lookup = states.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        Ok(Arc::new(Basis { layout, states: Some(states), lookup }))
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        match &self.states {
            Some(s) => s.len(),
            None => self.layout.total_dim(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.states.is_none()
    }

    pub fn product_index(&self, i: usize) -> usize {
        match &self.states {
            Some(s) => s[i],
            None => i,
        }
    }

    pub fn index_of(&self, product: usize) -> Option<usize> {
        match &self.states {
            Some(_) => self.lookup.get(&product).copied(),
            None => (product < self.layout.total_dim()).then_some(product),
        }
    }

    pub fn occupations(&self, i: usize) -> Vec<usize> {
        self.layout.decode(self.product_index(i))
    }

    pub(crate) fn same_as(self: &Arc<Self>, other: &Arc<Basis>) -> bool {
        Arc::ptr_eq(self, other) || **self == **other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_order_is_leftmost_slowest() {
        let l = SpaceLayout::new(&[("atom", 2), ("mode", 3)]).unwrap();
        assert_eq!(l.total_dim(), 6);
        assert_eq!(l.encode(&[1, 0]), 3);
        assert_eq!(l.decode(5), vec![1, 2]);
        assert_eq!(l.local(4, 1), 1);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(matches!(SpaceLayout::new(&[("a", 2), ("a", 3)]), Err(Error::DuplicateLabel(_))));
        assert!(SpaceLayout::new(&[("a", 0)]).is_err());
        assert!(SpaceLayout::new::<&str>(&[]).is_err());
    }

    #[test]
    fn restricted_basis_lookup() {
        let l = Arc::new(SpaceLayout::new(&[("a", 3), ("b", 3)]).unwrap());
        let b = Basis::restricted(l.clone(), |o| o[0] + o[1] <= 2).unwrap();
        assert_eq!(b.dim(), 6);
        for i in 0..b.dim() {
            assert_eq!(b.index_of(b.product_index(i)), Some(i));
        }
        assert_eq!(b.index_of(l.encode(&[2, 2])), None);
        let full = Basis::restricted(l, |_| true).unwrap();
        assert!(full.is_full());
    }
}
