//! Operators over a [`Basis`], stored in compressed-row form.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::layout::{Basis, SpaceLayout};
use crate::error::{Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Debug)]
pub struct Operator {
    basis: Arc<Basis>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl Operator {
    pub fn zero(basis: Arc<Basis>) -> Self {
        let dim = basis.dim();
        Operator { basis, indptr: vec![0; dim + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(basis: Arc<Basis>) -> Self {
        let dim = basis.dim();
        Operator { basis, indptr: (0..=dim).collect(), indices: (0..dim).collect(), data: vec![ONE; dim] }
    }

    /// Duplicate entries are summed; exact zeros are dropped.
    pub fn from_triplets(basis: Arc<Basis>, mut triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        let dim = basis.dim();
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: r.max(c) + 1 });
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        Ok(Operator { basis, indptr, indices, data }.pruned())
    }

    pub fn from_dense(basis: Arc<Basis>, m: &DMatrix<C64>) -> Result<Self> {
        let dim = basis.dim();
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: m.nrows().max(m.ncols()) });
        }
        let mut triplets = Vec::new();
        for r in 0..dim {
            for c in 0..dim {
                let v = m[(r, c)];
                if v != ZERO {
                    triplets.push((r, c, v));
                }
            }
        }
        Operator::from_triplets(basis, triplets)
    }

    fn pruned(self) -> Self {
        if self.data.iter().all(|v| *v != ZERO) {
            return self;
        }
        let dim = self.dim();
        let mut indptr = vec![0; dim + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..dim {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.data[k] != ZERO {
                    indices.push(self.indices[k]);
                    data.push(self.data[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        Operator { basis: self.basis, indptr, indices, data }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        self.basis.layout()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim()).flat_map(move |r| (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.data[k])))
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let span = self.indptr[row]..self.indptr[row + 1];
        match self.indices[span.clone()].binary_search(&col) {
            Ok(k) => self.data[span.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let t = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Operator::from_triplets(self.basis.clone(), t).expect("adjoint keeps the basis")
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out.pruned()
    }

    fn check_basis(&self, other: &Operator) -> Result<()> {
        if self.basis.same_as(&other.basis) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch("operators live on different bases".into()))
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.check_basis(other)?;
        let t = self.triplets().chain(other.triplets()).collect();
        Operator::from_triplets(self.basis.clone(), t)
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        self.add(&other.scale(-ONE))
    }

    /// Sparse product `self · other`.
    pub fn mul(&self, other: &Operator) -> Result<Self> {
        self.check_basis(other)?;
        let dim = self.dim();
        let mut acc = vec![ZERO; dim];
        let mut touched = vec![false; dim];
        let mut cols: Vec<usize> = Vec::new();
        let mut indptr = vec![0; dim + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for r in 0..dim {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (mid, a) = (self.indices[k], self.data[k]);
                for j in other.indptr[mid]..other.indptr[mid + 1] {
                    let c = other.indices[j];
                    if !touched[c] {
                        touched[c] = true;
                        cols.push(c);
                    }
                    acc[c] += a * other.data[j];
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                if acc[c] != ZERO {
                    indices.push(c);
                    data.push(acc[c]);
                }
                acc[c] = ZERO;
                touched[c] = false;
            }
            cols.clear();
            indptr[r + 1] = indices.len();
        }
        Ok(Operator { basis: self.basis.clone(), indptr, indices, data })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|r| self.get(r, r)).sum()
    }

    /// Largest entry magnitude of `self − other`.
    pub fn max_abs_diff(&self, other: &Operator) -> Result<f64> {
        Ok(self.sub(other)?.data.iter().map(|v| v.norm()).fold(0.0, f64::max))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint()).expect("same basis")
    }
}

fn single_mode(label: &str, dim: usize) -> Arc<Basis> {
    Basis::product(Arc::new(SpaceLayout::new(&[(label, dim)]).expect("dim >= 1")))
}

/// Truncated ladder operator with `√k` at `(k−1, k)`.
pub fn annihilation(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, reason: "a ladder operator needs at least two levels" });
    }
    let t = (1..dim).map(|k| (k - 1, k, C64::new((k as f64).sqrt(), 0.0))).collect();
    Operator::from_triplets(single_mode("mode", dim), t)
}

pub fn creation(dim: usize) -> Result<Operator> {
    Ok(annihilation(dim)?.adjoint())
}

pub fn number(dim: usize) -> Result<Operator> {
    let a = annihilation(dim)?;
    a.adjoint().mul(&a)
}

/// Atomic lowering operator `|g⟩⟨e|` with `g = 0`, `e = 1`.
pub fn sigma_minus() -> Operator {
    annihilation(2).expect("two levels")
}

pub fn local_identity(dim: usize) -> Result<Operator> {
    if dim == 0 {
        return Err(Error::InvalidDimension { dim, reason: "identity needs at least one level" });
    }
    Ok(Operator::identity(single_mode("mode", dim)))
}

/// Lift a single-subsystem operator onto `basis`, acting as identity on every
/// other factor. On a masked basis the result is the projection `P·A·P`.
pub fn embed(op: &Operator, basis: &Arc<Basis>, label: &str) -> Result<Operator> {
    if op.layout().len() != 1 {
        return Err(Error::LayoutMismatch("embed expects an operator on a single subsystem".into()));
    }
    let layout = basis.layout();
    let pos = layout.position(label)?;
    let local_dim = layout.subsystems()[pos].dim;
    if op.dim() != local_dim {
        return Err(Error::DimensionMismatch { expected: local_dim, found: op.dim() });
    }
    let stride = layout.stride(pos);
    // Column-wise view of the local operator: for local column j, the (row, value) pairs.
    let mut by_col: Vec<Vec<(usize, C64)>> = vec![Vec::new(); local_dim];
    for (r, c, v) in op.triplets() {
        by_col[c].push((r, v));
    }
    let mut triplets = Vec::new();
    for col in 0..basis.dim() {
        let p = basis.product_index(col);
        let j = layout.local(p, pos);
        for &(i, v) in &by_col[j] {
            let target = p + i * stride - j * stride;
            if let Some(row) = basis.index_of(target) {
                triplets.push((row, col, v));
            }
        }
    }
    Operator::from_triplets(basis.clone(), triplets)
}

/// Linear combination `Σ cᵢ Aᵢ` of operators sharing one basis.
pub fn mode_superposition(terms: &[(C64, &Operator)]) -> Result<Operator> {
    let (_, first) = terms.first().ok_or_else(|| Error::param("terms", "empty superposition"))?;
    let mut triplets = Vec::new();
    for (c, op) in terms {
        first.check_basis(op)?;
        triplets.extend(op.triplets().map(|(r, col, v)| (r, col, v * c)));
    }
    Operator::from_triplets(first.basis.clone(), triplets)
}
