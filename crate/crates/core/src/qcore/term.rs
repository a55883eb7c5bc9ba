//! Tensor-product terms kept in factored form until they are placed on a basis.
//!
//! Products of terms are formed factor by factor, so materializing a product on
//! a masked basis gives the exact projection `P·(AB)·P` rather than `PAP·PBP`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::layout::Basis;
use super::operator::{annihilation, Operator};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TensorTerm {
    factors: BTreeMap<String, DMatrix<C64>>,
}

impl TensorTerm {
    pub fn identity() -> Self {
        TensorTerm { factors: BTreeMap::new() }
    }

    pub fn local(label: &str, matrix: DMatrix<C64>) -> Self {
        let mut factors = BTreeMap::new();
        factors.insert(label.to_string(), matrix);
        TensorTerm { factors }
    }

    pub fn destroy(label: &str, dim: usize) -> Result<Self> {
        Ok(TensorTerm::local(label, annihilation(dim)?.to_dense()))
    }

    pub fn create(label: &str, dim: usize) -> Result<Self> {
        Ok(TensorTerm::local(label, annihilation(dim)?.adjoint().to_dense()))
    }

    pub fn number(label: &str, dim: usize) -> Result<Self> {
        TensorTerm::create(label, dim)?.mul(&TensorTerm::destroy(label, dim)?)
    }

    pub fn factors(&self) -> impl Iterator<Item = (&str, &DMatrix<C64>)> {
        self.factors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn mul(&self, other: &TensorTerm) -> Result<Self> {
        let mut factors = self.factors.clone();
        for (label, m) in &other.factors {
            match factors.get_mut(label) {
                Some(existing) => {
                    if existing.ncols() != m.nrows() {
                        return Err(Error::DimensionMismatch { expected: existing.ncols(), found: m.nrows() });
                    }
                    *existing = &*existing * m;
                }
                None => {
                    factors.insert(label.clone(), m.clone());
                }
            }
        }
        Ok(TensorTerm { factors })
    }

    pub fn adjoint(&self) -> Self {
        TensorTerm { factors: self.factors.iter().map(|(k, v)| (k.clone(), v.adjoint())).collect() }
    }

    /// True when some factor is the zero matrix.
    pub fn vanishes(&self) -> bool {
        self.factors.values().any(|m| m.iter().all(|v| *v == C64::new(0.0, 0.0)))
    }

    /// Place the term on `basis`: identity on absent labels, projected onto the
    /// retained states.
    pub fn materialize(&self, basis: &Arc<Basis>) -> Result<Operator> {
        let layout = basis.layout();
        let mut placed: Vec<(usize, usize, Vec<Vec<(usize, C64)>>)> = Vec::new();
        for (label, m) in &self.factors {
            let pos = layout.position(label)?;
            let dim = layout.subsystems()[pos].dim;
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: m.nrows() });
            }
            let by_col =
                (0..dim).map(|j| (0..dim).filter(|&i| m[(i, j)] != C64::new(0.0, 0.0)).map(|i| (i, m[(i, j)])).collect()).collect();
            placed.push((pos, layout.stride(pos), by_col));
        }
        let mut triplets = Vec::new();
        let mut frontier: Vec<(usize, C64)> = Vec::new();
        let mut next: Vec<(usize, C64)> = Vec::new();
        for col in 0..basis.dim() {
            let p = basis.product_index(col);
            frontier.clear();
            frontier.push((p, C64::new(1.0, 0.0)));
            for (pos, stride, by_col) in &placed {
                next.clear();
                for &(idx, amp) in &frontier {
                    let j = layout.local(idx, *pos);
                    for &(i, v) in &by_col[j] {
                        next.push((idx + i * stride - j * stride, amp * v));
                    }
                }
                std::mem::swap(&mut frontier, &mut next);
            }
            for &(target, v) in &frontier {
                if let Some(row) = basis.index_of(target) {
                    triplets.push((row, col, v));
                }
            }
        }
        Operator::from_triplets(basis.clone(), triplets)
    }
}
