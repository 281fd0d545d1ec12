//! Cavity geometry and the mode-overlap coefficients generated by a moving
//! boundary.
//!
//! The cavity is the interval `[0, q]` with perfectly reflecting ends. Its
//! instantaneous modes are `φ_k(x, q) = √(2/q) sin(kπx/q)` with frequencies
//! `ω_k(q) = kπ/q`. Displacing the mirror mixes the modes through the
//! dimensionless overlaps
//!
//! ```text
//! g_jk = q ∫₀^q φ_k ∂φ_j/∂q dx = (−1)^{k+j} 2kj / (k² − j²),   g_kk = 0.
//! ```
//!
//! The first index of `g` is the differentiated mode. A [`MixingMatrix`] of
//! order `n` stores the coefficients acting on a column vector of mode
//! amplitudes, `Q_k^(n) = Σ_j M^(n)[k][j] Q_j`, so that `M^(1)[k][j] = g_jk`
//! (note the transposition) and `M^(n+1) = M^(1) · M^(n)`. All sums run over
//! the same mode cutoff `K` as the Fock space.

use std::ops::Add;

use crate::error::{domain, Error, Result};
use crate::scalar::{parity_sign, Coefficient, Real};

/// Tolerance on the panel-doubling change of a Simpson estimate.
pub const QUADRATURE_TOLERANCE: f64 = 1e-8;

const MAX_PANEL_DOUBLINGS: u32 = 12;

/// Equilibrium cavity geometry truncated to `K` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid<T> {
    cavity_length: T,
    cutoff: usize,
    frequencies: Vec<T>,
}

impl<T: Real> ModeGrid<T> {
    /// A cavity of length `d` keeping modes `1..=cutoff`.
    ///
    /// A single-mode grid is allowed; every mixing quantity then vanishes.
    pub fn new(cavity_length: T, cutoff: usize) -> Result<Self> {
        if !cavity_length.is_finite() || cavity_length <= T::zero() {
            return domain(format!(
                "cavity length must be positive, got {cavity_length}"
            ));
        }
        if cutoff == 0 {
            return domain("mode cutoff must be at least 1");
        }
        let fundamental = T::PI() / cavity_length;
        let frequencies = (1..=cutoff)
            .map(|k| T::from_count(k) * fundamental)
            .collect();
        Ok(Self {
            cavity_length,
            cutoff,
            frequencies,
        })
    }

    pub fn cavity_length(&self) -> T {
        self.cavity_length
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `ω_10 = π/d`.
    pub fn fundamental(&self) -> T {
        self.frequencies[0]
    }

    /// Bare frequency `ω_k0` of mode `k` (1-based).
    pub fn frequency(&self, k: usize) -> T {
        self.frequencies[k - 1]
    }

    pub fn frequencies(&self) -> &[T] {
        &self.frequencies
    }

    pub(crate) fn check_mode(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.cutoff {
            return domain(format!("mode index {k} outside 1..={}", self.cutoff));
        }
        Ok(())
    }
}

/// Instantaneous mode function `φ_k(x, q)`.
pub fn mode_function<T: Real>(k: usize, x: T, q: T) -> T {
    let kk = T::from_count(k);
    (T::lit(2.0) / q).sqrt() * (kk * T::PI() * x / q).sin()
}

/// Analytic `∂φ_k/∂q` at fixed `x`.
pub fn mode_function_dq<T: Real>(k: usize, x: T, q: T) -> T {
    let kk = T::from_count(k);
    let arg = kk * T::PI() * x / q;
    let amp = (T::lit(2.0) / q).sqrt();
    -amp * arg.sin() / (T::lit(2.0) * q) - amp * arg.cos() * kk * T::PI() * x / (q * q)
}

/// Closed-form overlap `g_jk` (first argument is the differentiated mode).
///
/// Indices are not bounded by any cutoff; the formula holds for all
/// positive integers. Works for exact rational scalars as well as floats.
pub fn overlap_coefficient<T: Coefficient>(j: usize, k: usize) -> Result<T> {
    if j == 0 || k == 0 {
        return domain(format!("mode indices are 1-based, got ({j}, {k})"));
    }
    if j == k {
        return Ok(T::zero());
    }
    let num = 2 * (k as i64) * (j as i64);
    let den = (k as i64) * (k as i64) - (j as i64) * (j as i64);
    let num = T::from_i64(num).ok_or_else(|| Error::Domain("index overflow".into()))?;
    let den = T::from_i64(den).ok_or_else(|| Error::Domain("index overflow".into()))?;
    Ok(parity_sign::<T>(k + j) * num / den)
}

/// Composite Simpson rule on `[a, b]` with an even panel count.
pub(crate) fn simpson<T: Real>(f: impl Fn(T) -> T, a: T, b: T, panels: usize) -> T {
    let n = panels + panels % 2;
    let h = (b - a) / T::from_count(n);
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        sum += w * f(a + h * T::from_count(i));
    }
    sum * h / T::lit(3.0)
}

/// Simpson with panel doubling until successive estimates agree.
pub(crate) fn converged_simpson<T: Real>(
    what: &str,
    f: impl Fn(T) -> T,
    a: T,
    b: T,
    panels: usize,
) -> Result<T> {
    let mut n = panels.max(2);
    let mut previous = simpson(&f, a, b, n);
    let mut change = f64::INFINITY;
    for _ in 0..MAX_PANEL_DOUBLINGS {
        n *= 2;
        let current = simpson(&f, a, b, n);
        change = (current - previous).abs().to_f64_lossy();
        if change <= QUADRATURE_TOLERANCE {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::Accuracy {
        what: what.to_string(),
        change,
        tolerance: QUADRATURE_TOLERANCE,
    })
}

/// `g_jk` from its defining integral `q ∫₀^q φ_k ∂φ_j/∂q dx` at `q = d`.
///
/// Independent of [`overlap_coefficient`]: the integrand uses the analytic
/// `q`-derivative of the mode functions, not the closed form.
pub fn overlap_coefficient_quadrature<T: Real>(
    j: usize,
    k: usize,
    grid: &ModeGrid<T>,
    panels: usize,
) -> Result<T> {
    if panels < 64 {
        return domain(format!("need at least 64 panels, got {panels}"));
    }
    grid.check_mode(j)?;
    grid.check_mode(k)?;
    let q = grid.cavity_length();
    let integral = converged_simpson(
        &format!("overlap quadrature g_{j}{k}"),
        |x| mode_function(k, x, q) * mode_function_dq(j, x, q),
        T::zero(),
        q,
        panels,
    )?;
    Ok(q * integral)
}

/// Which ladder of operators a mixing matrix acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingKind {
    /// Mode amplitudes and momenta, `Q_k^(n)`, `P_k^(n)`.
    Amplitude,
    /// Ladder combinations `â_k^(n)`.
    Ladder,
}

/// Order-`n` mixing coefficients, stored row-major with 1-based accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix<T> {
    order: usize,
    modes: usize,
    kind: MixingKind,
    entries: Vec<T>,
}

impl<T: Coefficient> MixingMatrix<T> {
    pub fn identity(modes: usize, kind: MixingKind) -> Self {
        let mut entries = vec![T::zero(); modes * modes];
        for k in 0..modes {
            entries[k * modes + k] = T::one();
        }
        Self {
            order: 0,
            modes,
            kind,
            entries,
        }
    }

    /// Exact first-order amplitude mixing, `M^(1)[k][j] = g_jk`.
    pub fn first_order(modes: usize) -> Result<Self> {
        let mut entries = Vec::with_capacity(modes * modes);
        for k in 1..=modes {
            for j in 1..=modes {
                entries.push(overlap_coefficient::<T>(j, k)?);
            }
        }
        Ok(Self {
            order: 1,
            modes,
            kind: MixingKind::Amplitude,
            entries,
        })
    }

    /// Amplitude mixing of arbitrary order by the recursion
    /// `M^(n+1) = M^(1) · M^(n)`.
    pub fn amplitude(modes: usize, order: usize) -> Result<Self> {
        if modes == 0 {
            return domain("mixing matrix needs at least one mode");
        }
        let mut current = Self::identity(modes, MixingKind::Amplitude);
        if order == 0 {
            return Ok(current);
        }
        let first = Self::first_order(modes)?;
        for _ in 0..order {
            current = first.compose(&current);
        }
        Ok(current)
    }

    /// `self · inner`, with the resulting order the sum of both orders.
    pub fn compose(&self, inner: &Self) -> Self {
        let m = self.modes;
        assert_eq!(m, inner.modes, "mixing matrices on different cutoffs");
        let mut entries = vec![T::zero(); m * m];
        for k in 0..m {
            for l in 0..m {
                let mut acc = T::zero();
                for j in 0..m {
                    acc = acc + self.entries[k * m + j].clone() * inner.entries[j * m + l].clone();
                }
                entries[k * m + l] = acc;
            }
        }
        Self {
            order: self.order + inner.order,
            modes: m,
            kind: self.kind,
            entries,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn kind(&self) -> MixingKind {
        self.kind
    }

    /// Coefficient of the `j`-th source amplitude in the `k`-th mixed one.
    pub fn entry(&self, k: usize, j: usize) -> &T {
        &self.entries[(k - 1) * self.modes + (j - 1)]
    }

    /// Row `k` (1-based) as `(j, coefficient)` pairs.
    pub fn row(&self, k: usize) -> impl Iterator<Item = (usize, &T)> + '_ {
        let start = (k - 1) * self.modes;
        self.entries[start..start + self.modes]
            .iter()
            .enumerate()
            .map(|(j, v)| (j + 1, v))
    }

    pub fn transpose(&self) -> Self {
        let m = self.modes;
        let mut entries = self.entries.clone();
        for k in 0..m {
            for j in 0..m {
                entries[j * m + k] = self.entries[k * m + j].clone();
            }
        }
        Self {
            entries,
            ..self.clone()
        }
    }
}

impl<T: Coefficient> Add for &MixingMatrix<T> {
    type Output = MixingMatrix<T>;

    /// Entry-wise sum; keeps the order and kind of the left operand.
    fn add(self, rhs: Self) -> MixingMatrix<T> {
        assert_eq!(
            self.modes, rhs.modes,
            "mixing matrices on different cutoffs"
        );
        MixingMatrix {
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
            ..self.clone()
        }
    }
}

/// Amplitude mixing matrix `M^(n)` for the quadratic theory (`n ≤ 2`).
pub fn mixing_matrix<T: Real>(grid: &ModeGrid<T>, n: usize) -> Result<MixingMatrix<T>> {
    if n > 2 {
        return domain(format!("mixing order {n} beyond the quadratic theory"));
    }
    MixingMatrix::amplitude(grid.cutoff(), n)
}

/// Ladder mixing `A^(n)` with `â_k^(n) = Σ_j A^(n)[k][j] â_j`,
/// `A^(1)[k][j] = √(k/j) g_jk`.
pub fn ladder_mixing_matrix<T: Real>(grid: &ModeGrid<T>, n: usize) -> Result<MixingMatrix<T>> {
    if n > 2 {
        return domain(format!("mixing order {n} beyond the quadratic theory"));
    }
    let modes = grid.cutoff();
    let mut first = MixingMatrix::<T>::first_order(modes)?;
    for k in 1..=modes {
        for j in 1..=modes {
            let scale = (T::from_count(k) / T::from_count(j)).sqrt();
            first.entries[(k - 1) * modes + (j - 1)] *= scale;
        }
    }
    first.kind = MixingKind::Ladder;
    let mut current = MixingMatrix::identity(modes, MixingKind::Ladder);
    for _ in 0..n {
        current = first.compose(&current);
    }
    Ok(current)
}

/// Both sides of the completeness identity
/// `Σ_s g_ks g_js = q² ∫ ∂φ_k/∂q ∂φ_j/∂q dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletenessResidual<T> {
    pub lhs: T,
    pub rhs: T,
    pub residual: T,
}

/// Partial sum of `g_ks g_js` over `s = 1..=sum_cutoff`.
pub fn completeness_partial_sum<T: Real>(j: usize, k: usize, sum_cutoff: usize) -> Result<T> {
    let mut acc = T::zero();
    for s in 1..=sum_cutoff {
        let gk: T = overlap_coefficient(k, s)?;
        let gj: T = overlap_coefficient(j, s)?;
        acc += gk * gj;
    }
    Ok(acc)
}

/// `q² ∫₀^q ∂φ_k/∂q ∂φ_j/∂q dx` at `q = d` by converged Simpson quadrature.
pub fn completeness_integral<T: Real>(j: usize, k: usize, grid: &ModeGrid<T>) -> Result<T> {
    let q = grid.cavity_length();
    let integral = converged_simpson(
        &format!("completeness integral ({j}, {k})"),
        |x| mode_function_dq(k, x, q) * mode_function_dq(j, x, q),
        T::zero(),
        q,
        256,
    )?;
    Ok(q * q * integral)
}

pub fn completeness_residual<T: Real>(
    j: usize,
    k: usize,
    grid: &ModeGrid<T>,
    sum_cutoff: usize,
) -> Result<CompletenessResidual<T>> {
    grid.check_mode(j)?;
    grid.check_mode(k)?;
    if sum_cutoff < grid.cutoff() {
        return domain(format!(
            "sum cutoff {sum_cutoff} below mode cutoff {}",
            grid.cutoff()
        ));
    }
    let lhs = completeness_partial_sum(j, k, sum_cutoff)?;
    let rhs = completeness_integral(j, k, grid)?;
    Ok(CompletenessResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Richardson extrapolation of the completeness sum over doubling cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletenessExtrapolation<T> {
    pub cutoffs: Vec<usize>,
    /// Raw residual `|lhs(S) − rhs|` for each cutoff.
    pub residuals: Vec<T>,
    pub extrapolated_lhs: T,
    pub rhs: T,
    pub extrapolated_residual: T,
    /// `|lhs(S_max) − extrapolated_lhs|`, the estimated remaining tail.
    pub tail_bound: T,
}

/// Extrapolates `S → ∞` assuming `lhs(S) = L + a/u + b/u³ + …` with
/// `u = S + 1/2`; the summand is even in `s`, so only odd powers appear.
///
/// `cutoffs` must double successively (e.g. 64, 128, 256).
pub fn extrapolate_completeness<T: Real>(
    j: usize,
    k: usize,
    grid: &ModeGrid<T>,
    cutoffs: &[usize],
) -> Result<CompletenessExtrapolation<T>> {
    if cutoffs.len() < 2 || cutoffs.windows(2).any(|w| w[1] != 2 * w[0]) {
        return domain("extrapolation needs at least two successively doubling cutoffs");
    }
    let rhs = completeness_integral(j, k, grid)?;
    let sums: Vec<T> = cutoffs
        .iter()
        .map(|&s| completeness_partial_sum(j, k, s))
        .collect::<Result<_>>()?;
    let residuals = sums.iter().map(|&l| (l - rhs).abs()).collect();
    let last_raw = *sums.last().expect("non-empty");
    // Rows [1, u⁻¹, u⁻³, …] against the partial sums, by Gaussian elimination.
    let n = cutoffs.len();
    let mut rows: Vec<Vec<T>> = cutoffs
        .iter()
        .zip(&sums)
        .map(|(&s, &l)| {
            let inv = T::one() / (T::from_count(s) + T::lit(0.5));
            let mut row = vec![T::one()];
            let mut p = inv;
            for _ in 1..n {
                row.push(p);
                p *= inv * inv;
            }
            row.push(l);
            row
        })
        .collect();
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&a, &b| {
                rows[a][c]
                    .abs()
                    .partial_cmp(&rows[b][c].abs())
                    .expect("finite")
            })
            .expect("non-empty");
        rows.swap(c, pivot);
        let pivot_row = rows[c].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != c {
                let f = row[c] / pivot_row[c];
                for (v, &p) in row[c..].iter_mut().zip(&pivot_row[c..]) {
                    *v -= f * p;
                }
            }
        }
    }
    let extrapolated_lhs = rows[0][n] / rows[0][0];
    Ok(CompletenessExtrapolation {
        cutoffs: cutoffs.to_vec(),
        residuals,
        extrapolated_lhs,
        rhs,
        extrapolated_residual: (extrapolated_lhs - rhs).abs(),
        tail_bound: (last_raw - extrapolated_lhs).abs(),
    })
}
