use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::scalar::{re, Real, C};

/// Sparse complex matrix on a truncated Fock basis.
///
/// Storage is CSR with sorted column indices, so entry order (and every
/// reduction over entries) is deterministic.
#[derive(Clone, PartialEq)]
pub struct FieldOperator<T: Real> {
    matrix: CsMat<C<T>>,
    hermitian_hint: bool,
}

impl<T: Real> fmt::Debug for FieldOperator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldOperator")
            .field("dim", &self.dim())
            .field("nnz", &self.nnz())
            .field("hermitian_hint", &self.hermitian_hint)
            .finish()
    }
}

impl<T: Real> FieldOperator<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CsMat::zero((dim, dim)),
            hermitian_hint: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CsMat::eye(dim),
            hermitian_hint: true,
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        dim: usize,
        triplets: impl IntoIterator<Item = (usize, usize, C<T>)>,
    ) -> Self {
        let mut tri = TriMat::new((dim, dim));
        for (r, c, v) in triplets {
            tri.add_triplet(r, c, v);
        }
        Self {
            matrix: tri.to_csr(),
            hermitian_hint: false,
        }
        .pruned()
    }

    pub fn from_diagonal(values: impl IntoIterator<Item = T>) -> Self {
        let values: Vec<T> = values.into_iter().collect();
        let dim = values.len();
        Self::from_triplets(
            dim,
            values.into_iter().enumerate().map(|(i, v)| (i, i, re(v))),
        )
        .with_hint(true)
    }

    fn pruned(mut self) -> Self {
        let zero = C::new(T::zero(), T::zero());
        if self.matrix.data().contains(&zero) {
            let dim = self.dim();
            let mut tri = TriMat::new((dim, dim));
            for (v, (r, c)) in self.matrix.iter() {
                if *v != zero {
                    tri.add_triplet(r, c, *v);
                }
            }
            self.matrix = tri.to_csr();
        }
        self
    }

    pub fn with_hint(mut self, hermitian: bool) -> Self {
        self.hermitian_hint = hermitian;
        self
    }

    pub fn hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn matrix(&self) -> &CsMat<C<T>> {
        &self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C<T> {
        self.matrix
            .get(row, col)
            .copied()
            .unwrap_or_else(|| C::new(T::zero(), T::zero()))
    }

    /// Stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C<T>)> + '_ {
        self.matrix.iter().map(|(v, (r, c))| (r, c, *v))
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::BasisMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
            hermitian_hint: self.hermitian_hint && other.hermitian_hint,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            matrix: &self.matrix - &other.matrix,
            hermitian_hint: self.hermitian_hint && other.hermitian_hint,
        })
    }

    /// Matrix product `self · other`.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            matrix: &self.matrix * &other.matrix,
            hermitian_hint: false,
        })
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            matrix: self.matrix.map(|v| *v * factor),
            hermitian_hint: self.hermitian_hint,
        }
    }

    pub fn scale_complex(&self, factor: C<T>) -> Self {
        Self {
            matrix: self.matrix.map(|v| *v * factor),
            hermitian_hint: self.hermitian_hint && factor.im == T::zero(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.transpose_view().to_csr().map(|v| v.conj()),
            hermitian_hint: self.hermitian_hint,
        }
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.try_mul(other)?.try_sub(&other.try_mul(self)?)
    }

    /// `(A + A†)/2`, flagged Hermitian.
    pub fn hermitian_part(&self) -> Self {
        (self + &self.adjoint()).scale(T::lit(0.5)).with_hint(true)
    }

    /// `max |A − A†|` over all entries.
    pub fn asymmetry_norm(&self) -> T {
        (self - &self.adjoint()).max_abs()
    }

    pub fn max_abs(&self) -> T {
        self.matrix
            .data()
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        Ok(self.try_sub(other)?.max_abs())
    }

    pub fn is_zero(&self, tol: T) -> bool {
        self.max_abs() <= tol
    }

    /// Hermitian to a tolerance relative to the largest entry.
    pub fn is_hermitian(&self, rel_tol: T) -> bool {
        self.asymmetry_norm() <= rel_tol * self.max_abs().max(T::one())
    }

    pub fn trace(&self) -> C<T> {
        (0..self.dim())
            .map(|i| self.get(i, i))
            .fold(C::new(T::zero(), T::zero()), |a, b| a + b)
    }

    /// `A · v`.
    pub fn apply(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(v.len(), self.dim(), "vector length mismatch");
        self.matrix
            .outer_iterator()
            .map(|row| {
                row.iter()
                    .fold(C::new(T::zero(), T::zero()), |acc, (c, a)| acc + *a * v[c])
            })
            .collect()
    }

    /// `⟨v|A|v⟩`.
    pub fn expectation(&self, v: &[C<T>]) -> C<T> {
        let av = self.apply(v);
        v.iter()
            .zip(&av)
            .fold(C::new(T::zero(), T::zero()), |acc, (a, b)| {
                acc + a.conj() * b
            })
    }

    /// `⟨u|A|v⟩`.
    pub fn sandwich(&self, u: &[C<T>], v: &[C<T>]) -> C<T> {
        let av = self.apply(v);
        u.iter()
            .zip(&av)
            .fold(C::new(T::zero(), T::zero()), |acc, (a, b)| {
                acc + a.conj() * b
            })
    }

    /// The block with rows and columns `indices`, in that order.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let position: HashMap<usize, usize> = indices
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new))
            .collect();
        let dim = indices.len();
        let mut tri = TriMat::new((dim, dim));
        for &old_row in indices {
            let new_row = position[&old_row];
            if let Some(row) = self.matrix.outer_view(old_row) {
                for (c, v) in row.iter() {
                    if let Some(&new_col) = position.get(&c) {
                        tri.add_triplet(new_row, new_col, *v);
                    }
                }
            }
        }
        Self {
            matrix: tri.to_csr(),
            hermitian_hint: self.hermitian_hint,
        }
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<C<T>>> {
        let dim = self.dim();
        let mut out = vec![vec![C::new(T::zero(), T::zero()); dim]; dim];
        for (r, c, v) in self.entries() {
            out[r][c] = v;
        }
        out
    }
}

impl<T: Real> Add for &FieldOperator<T> {
    type Output = FieldOperator<T>;

    fn add(self, rhs: Self) -> FieldOperator<T> {
        self.try_add(rhs).expect("operator dimensions differ")
    }
}

impl<T: Real> Sub for &FieldOperator<T> {
    type Output = FieldOperator<T>;

    fn sub(self, rhs: Self) -> FieldOperator<T> {
        self.try_sub(rhs).expect("operator dimensions differ")
    }
}

impl<T: Real> Mul for &FieldOperator<T> {
    type Output = FieldOperator<T>;

    fn mul(self, rhs: Self) -> FieldOperator<T> {
        self.try_mul(rhs).expect("operator dimensions differ")
    }
}

impl<T: Real> Neg for &FieldOperator<T> {
    type Output = FieldOperator<T>;

    fn neg(self) -> FieldOperator<T> {
        self.scale(-T::one())
    }
}

/// Running sum of operators that tolerates an empty start.
pub(crate) struct OperatorSum<T: Real> {
    dim: usize,
    acc: Option<FieldOperator<T>>,
}

impl<T: Real> OperatorSum<T> {
    pub(crate) fn new(dim: usize) -> Self {
        Self { dim, acc: None }
    }

    pub(crate) fn push(&mut self, op: FieldOperator<T>) {
        self.acc = Some(match self.acc.take() {
            None => op,
            Some(a) => &a + &op,
        });
    }

    pub(crate) fn finish(self) -> FieldOperator<T> {
        self.acc.unwrap_or_else(|| FieldOperator::zeros(self.dim))
    }
}
