use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::layout::{Basis, SpaceLayout};
use super::operator::Operator;
use crate::error::{Error, Result};

/// Smallest eigenvalue of the Hermitian part of `m`.
///
/// Rows and columns that are exactly zero only add zero eigenvalues, so the
/// spectrum is taken on the remaining support; the symmetric eigensolver can
/// return non-finite values on large blocks that are mostly zero. A Schur
/// decomposition is the fallback.
pub fn hermitian_min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let zero = C64::new(0.0, 0.0);
    let keep: Vec<usize> = (0..n).filter(|&i| (0..n).any(|j| m[(i, j)] != zero || m[(j, i)] != zero)).collect();
    let pad = if keep.len() < n { 0.0 } else { f64::INFINITY };
    if keep.is_empty() {
        return if n == 0 { f64::INFINITY } else { 0.0 };
    }
    let h = DMatrix::from_fn(keep.len(), keep.len(), |a, b| (m[(keep[a], keep[b])] + m[(keep[b], keep[a])].conj()) * 0.5);
    let eig = h.clone().symmetric_eigenvalues();
    let low = if eig.iter().all(|x| x.is_finite()) {
        eig.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        nalgebra::linalg::Schur::new(h).eigenvalues().map_or(f64::NAN, |e| e.iter().map(|z| z.re).fold(f64::INFINITY, f64::min))
    };
    low.min(pad)
}

/// Dense density matrix over a (possibly masked) basis.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    basis: Arc<Basis>,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(basis: Arc<Basis>, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = basis.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(DensityMatrix { basis, matrix })
    }

    pub fn from_pure(basis: Arc<Basis>, psi: &DVector<C64>) -> Result<Self> {
        let m = psi * psi.adjoint();
        DensityMatrix::from_matrix(basis, m)
    }

    /// Pure product state with the given local occupations; unlisted subsystems
    /// sit in level 0.
    pub fn product_state(basis: &Arc<Basis>, occupations: &[(&str, usize)]) -> Result<Self> {
        let layout = basis.layout();
        let mut occ = vec![0; layout.len()];
        for &(label, n) in occupations {
            let pos = layout.position(label)?;
            let dim = layout.subsystems()[pos].dim;
            if n >= dim {
                return Err(Error::Truncation { label: label.to_string(), n, dim });
            }
            occ[pos] = n;
        }
        let i = basis.index_of(layout.encode(&occ)).ok_or(Error::OutsideBasis)?;
        let mut m = DMatrix::zeros(basis.dim(), basis.dim());
        m[(i, i)] = C64::new(1.0, 0.0);
        Ok(DensityMatrix { basis: basis.clone(), matrix: m })
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

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn symmetrize(&mut self) {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        self.matrix = h;
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_min_eigenvalue(&self.matrix)
    }

    /// Positivity test: exact spectrum for small matrices, a Cholesky attempt on
    /// `ρ + tol·I` otherwise.
    pub fn is_positive_within(&self, tol: f64) -> bool {
        if self.dim() <= 400 {
            return self.min_eigenvalue() >= -tol;
        }
        let shifted = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0)
            + DMatrix::<C64>::identity(self.dim(), self.dim()) * C64::new(tol, 0.0);
        shifted.cholesky().is_some()
    }

    /// `Tr(ρ·op)`.
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if !self.basis.same_as(op.basis()) {
            return Err(Error::LayoutMismatch("state and operator live on different bases".into()));
        }
        Ok(op.triplets().map(|(r, c, v)| v * self.matrix[(c, r)]).sum())
    }

    /// Reduced state on `keep`, in layout order, over the full product basis of
    /// the kept subsystems.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityMatrix> {
        let layout = self.layout();
        let mut positions = Vec::with_capacity(keep.len());
        for label in keep {
            positions.push(layout.position(label)?);
        }
        positions.sort_unstable();
        positions.dedup();
        let parts: Vec<(&str, usize)> =
            positions.iter().map(|&p| (layout.subsystems()[p].label.as_str(), layout.subsystems()[p].dim)).collect();
        let reduced_layout = Arc::new(SpaceLayout::new(&parts)?);
        let reduced = Basis::product(reduced_layout.clone());
        let n = self.dim();
        let occ: Vec<Vec<usize>> = (0..n).map(|i| self.basis.occupations(i)).collect();
        let kept_index = |o: &[usize]| -> usize { reduced_layout.encode(&positions.iter().map(|&p| o[p]).collect::<Vec<_>>()) };
        let rest_key =
            |o: &[usize]| -> Vec<usize> { o.iter().enumerate().filter(|(k, _)| !positions.contains(k)).map(|(_, &v)| v).collect() };
        let keys: Vec<(usize, Vec<usize>)> = occ.iter().map(|o| (kept_index(o), rest_key(o))).collect();
        let mut m = DMatrix::zeros(reduced.dim(), reduced.dim());
        for j in 0..n {
            for i in 0..n {
                if keys[i].1 == keys[j].1 {
                    m[(keys[i].0, keys[j].0)] += self.matrix[(i, j)];
                }
            }
        }
        Ok(DensityMatrix { basis: reduced, matrix: m })
    }
}

/// `|n⟩` in mode `label`, every other subsystem in level 0.
pub fn prepare_fock(basis: &Arc<Basis>, label: &str, n: usize) -> Result<DensityMatrix> {
    DensityMatrix::product_state(basis, &[(label, n)])
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Σ_k √(C(n,k)/2ⁿ)|k⟩|n−k⟩` over the two modes, all amplitudes positive. This
/// is `|n⟩` of the mode `(a₁ + a₂)/√2` written in the split basis.
pub fn prepare_binomial_split(basis: &Arc<Basis>, labels: (&str, &str), n: usize) -> Result<DensityMatrix> {
    let layout = basis.layout();
    let p1 = layout.position(labels.0)?;
    let p2 = layout.position(labels.1)?;
    for (label, p) in [(labels.0, p1), (labels.1, p2)] {
        let dim = layout.subsystems()[p].dim;
        if n >= dim {
            return Err(Error::Truncation { label: label.to_string(), n, dim });
        }
    }
    let mut psi = DVector::zeros(basis.dim());
    let norm = 2f64.powi(n as i32);
    for k in 0..=n {
        let mut occ = vec![0; layout.len()];
        occ[p1] = k;
        occ[p2] = n - k;
        let i = basis.index_of(layout.encode(&occ)).ok_or(Error::OutsideBasis)?;
        psi[i] = C64::new((binomial(n, k) / norm).sqrt(), 0.0);
    }
    DensityMatrix::from_pure(basis.clone(), &psi)
}
