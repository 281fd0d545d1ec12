//! Truncated multimode Fock spaces and the elementary operators on them.
//!
//! Every builder works on any [`FockBasis`]: matrix elements that would
//! leave the basis are dropped. Products of several ladder operators are
//! only exact when formed on a basis large enough to hold the intermediate
//! states, so [`FockSpace`] pairs the basis a caller cares about (the
//! retained basis) with a padded working basis and crops products back.

mod basis;
mod operator;

pub use basis::{FockBasis, FockLayout, Slot};
pub use operator::FieldOperator;
pub(crate) use operator::OperatorSum;

use crate::error::{domain, Error, Result};
use crate::mode_mixing::{MixingKind, MixingMatrix, ModeGrid};
use crate::operators::SystemParams;
use crate::scalar::{hbar, im, re, Real, C};

/// A retained basis together with a padded working basis that contains it.
#[derive(Debug, Clone)]
pub struct FockSpace {
    retained: FockBasis,
    working: FockBasis,
    embedding: Vec<usize>,
}

impl FockSpace {
    /// `pad` extra quanta above the caps are admitted while forming
    /// products; a product of `r` ladder operators is exact on the retained
    /// block once `pad ≥ r − 1`.
    pub fn new(layout: FockLayout, pad: usize) -> Result<Self> {
        let retained = FockBasis::new(layout)?;
        let working = FockBasis::with_excess(layout, pad)?;
        let embedding = working.embedding_of(&retained)?;
        Ok(Self {
            retained,
            working,
            embedding,
        })
    }

    pub fn retained(&self) -> &FockBasis {
        &self.retained
    }

    pub fn working(&self) -> &FockBasis {
        &self.working
    }

    pub fn pad(&self) -> usize {
        self.working.excess()
    }

    pub fn layout(&self) -> &FockLayout {
        self.retained.layout()
    }

    /// Dimension of the retained basis.
    pub fn dim(&self) -> usize {
        self.retained.dim()
    }

    /// Retained block of an operator built on the working basis.
    pub fn crop<T: Real>(&self, op: &FieldOperator<T>) -> Result<FieldOperator<T>> {
        if op.dim() != self.working.dim() {
            return Err(Error::BasisMismatch {
                left: op.dim(),
                right: self.working.dim(),
            });
        }
        Ok(op.restrict(&self.embedding))
    }
}

/// `Σ_s (α_s a_s + β_s a_s†)` in a single pass over the basis.
pub(crate) fn linear_form<T: Real>(
    basis: &FockBasis,
    terms: &[(usize, C<T>, C<T>)],
) -> FieldOperator<T> {
    let zero = C::new(T::zero(), T::zero());
    let mut triplets = Vec::new();
    let mut scratch: Vec<u16> = Vec::with_capacity(basis.layout().slot_count());
    for col in 0..basis.dim() {
        let state = basis.state(col);
        for &(slot, alpha, beta) in terms {
            let n = state[slot];
            if alpha != zero && n > 0 {
                scratch.clear();
                scratch.extend_from_slice(state);
                scratch[slot] = n - 1;
                if let Some(row) = basis.index_of(&scratch) {
                    triplets.push((row, col, alpha * T::from_count(n as usize).sqrt()));
                }
            }
            if beta != zero {
                scratch.clear();
                scratch.extend_from_slice(state);
                scratch[slot] = n + 1;
                if let Some(row) = basis.index_of(&scratch) {
                    triplets.push((row, col, beta * T::from_count(n as usize + 1).sqrt()));
                }
            }
        }
    }
    FieldOperator::from_triplets(basis.dim(), triplets)
}

/// Bosonic lowering operator on `slot`.
pub fn annihilation<T: Real>(basis: &FockBasis, slot: Slot) -> Result<FieldOperator<T>> {
    let s = basis.slot_index(slot)?;
    Ok(linear_form(basis, &[(s, re(T::one()), re(T::zero()))]))
}

/// Bosonic raising operator on `slot`.
pub fn creation<T: Real>(basis: &FockBasis, slot: Slot) -> Result<FieldOperator<T>> {
    let s = basis.slot_index(slot)?;
    Ok(linear_form(basis, &[(s, re(T::zero()), re(T::one()))]))
}

/// Occupation number of `slot`, diagonal in the basis.
pub fn number<T: Real>(basis: &FockBasis, slot: Slot) -> Result<FieldOperator<T>> {
    let s = basis.slot_index(slot)?;
    Ok(FieldOperator::from_diagonal(
        basis.states().map(|st| T::from_count(st[s] as usize)),
    ))
}

fn check_grid<T: Real>(basis: &FockBasis, grid: &ModeGrid<T>) -> Result<()> {
    if grid.cutoff() != basis.modes() {
        return domain(format!(
            "mode grid has {} modes but basis has {}",
            grid.cutoff(),
            basis.modes()
        ));
    }
    Ok(())
}

/// Zero-point amplitude `√(ħ/2ω_k)`.
fn q_scale<T: Real>(grid: &ModeGrid<T>, k: usize) -> T {
    (hbar::<T>() / (T::lit(2.0) * grid.frequency(k))).sqrt()
}

/// Zero-point momentum `√(ħω_k/2)`.
fn p_scale<T: Real>(grid: &ModeGrid<T>, k: usize) -> T {
    (hbar::<T>() * grid.frequency(k) / T::lit(2.0)).sqrt()
}

/// `Q_k = √(ħ/2ω_k)(a_k + a_k†)`.
pub fn quadrature_q<T: Real>(
    basis: &FockBasis,
    k: usize,
    grid: &ModeGrid<T>,
) -> Result<FieldOperator<T>> {
    check_grid(basis, grid)?;
    let s = basis.slot_index(Slot::Mode(k))?;
    let c = re(q_scale(grid, k));
    Ok(linear_form(basis, &[(s, c, c)]).with_hint(true))
}

/// `P_k = i√(ħω_k/2)(a_k† − a_k)`.
pub fn momentum_p<T: Real>(
    basis: &FockBasis,
    k: usize,
    grid: &ModeGrid<T>,
) -> Result<FieldOperator<T>> {
    check_grid(basis, grid)?;
    let s = basis.slot_index(Slot::Mode(k))?;
    let c = p_scale(grid, k);
    Ok(linear_form(basis, &[(s, im(-c), im(c))]).with_hint(true))
}

fn check_mixing<T: Real>(basis: &FockBasis, n: usize, mixing: &MixingMatrix<T>) -> Result<()> {
    if mixing.order() != n {
        return domain(format!(
            "mixing matrix has order {} but order {n} was requested",
            mixing.order()
        ));
    }
    if mixing.kind() != MixingKind::Amplitude {
        return domain("quadrature mixing needs an amplitude mixing matrix");
    }
    if mixing.modes() != basis.modes() {
        return domain("mixing matrix and basis have different mode counts");
    }
    Ok(())
}

/// `Q_k^(n) = Σ_j M^(n)[k][j] Q_j`.
pub fn mixed_quadrature<T: Real>(
    basis: &FockBasis,
    k: usize,
    n: usize,
    mixing: &MixingMatrix<T>,
    grid: &ModeGrid<T>,
) -> Result<FieldOperator<T>> {
    check_grid(basis, grid)?;
    check_mixing(basis, n, mixing)?;
    basis.slot_index(Slot::Mode(k))?;
    let terms: Vec<_> = mixing
        .row(k)
        .filter(|(_, m)| **m != T::zero())
        .map(|(j, m)| {
            let c = re(*m * q_scale(grid, j));
            (j - 1, c, c)
        })
        .collect();
    Ok(linear_form(basis, &terms).with_hint(true))
}

/// `P_k^(n) = Σ_j M^(n)[k][j] P_j`.
pub fn mixed_momentum<T: Real>(
    basis: &FockBasis,
    k: usize,
    n: usize,
    mixing: &MixingMatrix<T>,
    grid: &ModeGrid<T>,
) -> Result<FieldOperator<T>> {
    check_grid(basis, grid)?;
    check_mixing(basis, n, mixing)?;
    basis.slot_index(Slot::Mode(k))?;
    let terms: Vec<_> = mixing
        .row(k)
        .filter(|(_, m)| **m != T::zero())
        .map(|(j, m)| {
            let c = *m * p_scale(grid, j);
            (j - 1, im(-c), im(c))
        })
        .collect();
    Ok(linear_form(basis, &terms).with_hint(true))
}

/// `x = x_zpf(b + b†)` on the mirror slot.
pub fn mirror_position<T: Real>(
    basis: &FockBasis,
    params: &SystemParams<T>,
) -> Result<FieldOperator<T>> {
    let s = basis.slot_index(Slot::Mirror)?;
    let c = re(params.x_zpf());
    Ok(linear_form(basis, &[(s, c, c)]).with_hint(true))
}

/// `p = i√(ħmΩ/2)(b† − b)` on the mirror slot.
pub fn mirror_momentum<T: Real>(
    basis: &FockBasis,
    params: &SystemParams<T>,
) -> Result<FieldOperator<T>> {
    let s = basis.slot_index(Slot::Mirror)?;
    let c = params.p_zpf();
    Ok(linear_form(basis, &[(s, im(-c), im(c))]).with_hint(true))
}

/// `⟨bra|op|ket⟩` for occupation tuples of `basis`.
pub fn matrix_element<T: Real>(
    basis: &FockBasis,
    op: &FieldOperator<T>,
    bra: &[u16],
    ket: &[u16],
) -> Result<C<T>> {
    if op.dim() != basis.dim() {
        return Err(Error::BasisMismatch {
            left: op.dim(),
            right: basis.dim(),
        });
    }
    let r = basis.require(bra)?;
    let c = basis.require(ket)?;
    Ok(op.get(r, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode_mixing::mixing_matrix;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(k: usize) -> ModeGrid<f64> {
        ModeGrid::new(std::f64::consts::PI, k).unwrap()
    }

    /// Max deviation of `op` from `target·1` on the safe block of `basis`.
    fn safe_block_deviation(basis: &FockBasis, op: &FieldOperator<f64>, target: C<f64>) -> f64 {
        let safe = basis.safe_indices();
        let block = op.restrict(&safe);
        let ident = FieldOperator::identity(safe.len()).scale_complex(target);
        block.max_abs_diff(&ident).unwrap()
    }

    #[test]
    fn ladder_examples() {
        let b = FockBasis::new(FockLayout::field(1, 4)).unwrap();
        let a = annihilation::<f64>(&b, Slot::Mode(1)).unwrap();
        let vac = [0u16];
        assert_eq!(
            a.apply(&basis_vector(&b, &vac)),
            vec![C::new(0.0, 0.0); b.dim()]
        );
        assert_abs_diff_eq!(matrix_element(&b, &a, &[0], &[1]).unwrap().re, 1.0);
        for n in 1..=4u16 {
            let v = matrix_element(&b, &a, &[n - 1], &[n]).unwrap();
            assert_abs_diff_eq!(v.re, (n as f64).sqrt(), epsilon = 1e-15);
        }
        let ad = creation::<f64>(&b, Slot::Mode(1)).unwrap();
        assert_eq!(ad, a.adjoint());
    }

    fn basis_vector(b: &FockBasis, occ: &[u16]) -> Vec<C<f64>> {
        let mut v = vec![C::new(0.0, 0.0); b.dim()];
        v[b.index_of(occ).unwrap()] = C::new(1.0, 0.0);
        v
    }

    #[test]
    fn quadrature_vacuum_moments() {
        let g = grid(3);
        let space = FockSpace::new(FockLayout::field(3, 3), 1).unwrap();
        let w = space.working();
        for k in 1..=3 {
            let q = quadrature_q(w, k, &g).unwrap();
            let p = momentum_p(w, k, &g).unwrap();
            let q2 = space.crop(&(&q * &q)).unwrap();
            let p2 = space.crop(&(&p * &p)).unwrap();
            let omega = g.frequency(k);
            assert_abs_diff_eq!(q2.get(0, 0).re, 1.0 / (2.0 * omega), epsilon = 1e-15);
            assert_abs_diff_eq!(p2.get(0, 0).re, omega / 2.0, epsilon = 1e-15);
            assert_eq!(q.get(0, 0), C::new(0.0, 0.0));
            assert_eq!(p.get(0, 0), C::new(0.0, 0.0));
            let mut one = [0u16; 3];
            one[k - 1] = 1;
            let e = matrix_element(w, &q, &one, &[0, 0, 0]).unwrap();
            assert_abs_diff_eq!(e.re, (1.0 / (2.0 * omega)).sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn canonical_commutators_on_safe_subspace() {
        let g = grid(2);
        let b = FockBasis::new(FockLayout::field(2, 3).with_total_cap(4)).unwrap();
        for k in 1..=2 {
            for j in 1..=2 {
                let a = annihilation::<f64>(&b, Slot::Mode(k)).unwrap();
                let ad = creation::<f64>(&b, Slot::Mode(j)).unwrap();
                let delta = if k == j { 1.0 } else { 0.0 };
                let dev = safe_block_deviation(&b, &a.commutator(&ad).unwrap(), C::new(delta, 0.0));
                assert!(dev <= 1e-13, "[a_{k}, a†_{j}] off by {dev}");
                let q = quadrature_q(&b, k, &g).unwrap();
                let p = momentum_p(&b, j, &g).unwrap();
                let dev = safe_block_deviation(&b, &q.commutator(&p).unwrap(), C::new(0.0, delta));
                assert!(dev <= 1e-13, "[Q_{k}, P_{j}] off by {dev}");
            }
        }
    }

    #[test]
    fn padded_products_are_exact_on_retained_block() {
        let g = grid(2);
        let space = FockSpace::new(FockLayout::field(2, 2), 1).unwrap();
        let w = space.working();
        let q = quadrature_q(w, 1, &g).unwrap();
        let p = momentum_p(w, 1, &g).unwrap();
        let comm = space.crop(&q.commutator(&p).unwrap()).unwrap();
        let ident = FieldOperator::<f64>::identity(space.dim()).scale_complex(C::new(0.0, 1.0));
        assert!(comm.max_abs_diff(&ident).unwrap() <= 1e-13);
        assert!(space.crop(&q.commutator(&q).unwrap()).unwrap().is_zero(0.0));
        assert!(space.crop(&FieldOperator::<f64>::identity(3)).is_err());
    }

    #[test]
    fn all_quadratures_are_hermitian() {
        let g = grid(3);
        let b = FockBasis::new(FockLayout::field(3, 3).with_total_cap(5)).unwrap();
        let m1 = mixing_matrix(&g, 1).unwrap();
        for k in 1..=3 {
            for op in [
                quadrature_q(&b, k, &g).unwrap(),
                momentum_p(&b, k, &g).unwrap(),
                mixed_quadrature(&b, k, 1, &m1, &g).unwrap(),
                mixed_momentum(&b, k, 1, &m1, &g).unwrap(),
            ] {
                assert!(op.asymmetry_norm() <= 1e-13);
            }
        }
    }

    #[test]
    fn disjoint_slots_commute_exactly() {
        let b = FockBasis::new(FockLayout::field(2, 3).with_mirror(3)).unwrap();
        let a1 = annihilation::<f64>(&b, Slot::Mode(1)).unwrap();
        let a2d = creation::<f64>(&b, Slot::Mode(2)).unwrap();
        let bm = annihilation::<f64>(&b, Slot::Mirror).unwrap();
        assert!(a1.commutator(&a2d).unwrap().is_zero(0.0));
        assert!(a1.commutator(&bm).unwrap().is_zero(0.0));
        assert!(a2d.commutator(&bm).unwrap().is_zero(0.0));
    }

    #[test]
    fn mixed_quadrature_examples() {
        let g = grid(2);
        let space = FockSpace::new(FockLayout::field(2, 3), 1).unwrap();
        let w = space.working();
        let m0 = mixing_matrix(&g, 0).unwrap();
        let m1 = mixing_matrix(&g, 1).unwrap();
        let q1 = quadrature_q(w, 1, &g).unwrap();
        assert_eq!(
            mixed_quadrature(w, 1, 0, &m0, &g)
                .unwrap()
                .max_abs_diff(&q1)
                .unwrap(),
            0.0
        );
        let q2 = quadrature_q(w, 2, &g).unwrap().scale(4.0 / 3.0);
        assert!(
            mixed_quadrature(w, 1, 1, &m1, &g)
                .unwrap()
                .max_abs_diff(&q2)
                .unwrap()
                <= 1e-15
        );
        for k in 1..=2 {
            let qk = quadrature_q(w, k, &g).unwrap();
            let qk1 = mixed_quadrature(w, k, 1, &m1, &g).unwrap();
            let prod = space.crop(&(&qk * &qk1)).unwrap();
            assert_abs_diff_eq!(prod.get(0, 0).norm(), 0.0, epsilon = 1e-15);
        }
        assert!(mixed_quadrature(w, 1, 2, &m1, &g).is_err());
    }

    #[test]
    fn mixed_quadrature_is_linear_in_mixing() {
        let g = grid(3);
        let b = FockBasis::new(FockLayout::field(3, 2)).unwrap();
        let m1 = mixing_matrix(&g, 1).unwrap();
        let doubled = &m1 + &m1;
        for k in 1..=3 {
            let single = mixed_quadrature(&b, k, 1, &m1, &g).unwrap();
            let twice = mixed_quadrature(&b, k, 1, &doubled, &g).unwrap();
            assert!(twice.max_abs_diff(&single.scale(2.0)).unwrap() <= 1e-15);
        }
    }

    #[test]
    fn mirror_operators() {
        let params = SystemParams::<f64>::new(2.0, 0.5, std::f64::consts::PI, 2, 2).unwrap();
        let space = FockSpace::new(FockLayout::field(2, 2).with_mirror(4), 1).unwrap();
        let w = space.working();
        let x = mirror_position(w, &params).unwrap();
        let p = mirror_momentum(w, &params).unwrap();
        let x2 = space.crop(&(&x * &x)).unwrap();
        assert_abs_diff_eq!(x2.get(0, 0).re, params.x_zpf().powi(2), epsilon = 1e-15);
        assert_eq!(x.get(0, 0), C::new(0.0, 0.0));
        let comm = space.crop(&x.commutator(&p).unwrap()).unwrap();
        let ident = FieldOperator::<f64>::identity(space.dim()).scale_complex(C::new(0.0, 1.0));
        assert!(comm.max_abs_diff(&ident).unwrap() <= 1e-13);
        let no_mirror = FockBasis::new(FockLayout::field(2, 2)).unwrap();
        assert!(mirror_position(&no_mirror, &params).is_err());
    }

    #[test]
    fn matrix_element_examples() {
        let b = FockBasis::new(FockLayout::field(2, 3)).unwrap();
        let id = FieldOperator::<f64>::identity(b.dim());
        assert_eq!(
            matrix_element(&b, &id, &[1, 2], &[1, 2]).unwrap(),
            C::new(1.0, 0.0)
        );
        assert_eq!(
            matrix_element(&b, &id, &[1, 2], &[2, 1]).unwrap(),
            C::new(0.0, 0.0)
        );
        let n = number::<f64>(&b, Slot::Mode(2)).unwrap();
        assert_eq!(
            matrix_element(&b, &n, &[0, 3], &[0, 3]).unwrap(),
            C::new(3.0, 0.0)
        );
        assert!(matrix_element(&b, &n, &[0, 4], &[0, 3]).is_err());
        assert!(annihilation::<f64>(&b, Slot::Mode(3)).is_err());
    }

    proptest! {
        #[test]
        fn number_equals_creation_times_annihilation(k in 1usize..=3, cap in 2usize..5) {
            let b = FockBasis::new(FockLayout::field(3, cap)).unwrap();
            let a = annihilation::<f64>(&b, Slot::Mode(k)).unwrap();
            let n = number::<f64>(&b, Slot::Mode(k)).unwrap();
            prop_assert!((&a.adjoint() * &a).max_abs_diff(&n).unwrap() <= 1e-13);
        }
    }
}
