//! Radiation-pressure operators and their scalar companions.
//!
//! Quadratic forms are formed on the padded working basis of a
//! [`FockSpace`] and cropped, so every identity between two constructions
//! holds on the whole retained basis, not only below its truncation edge.
//! Units are ħ = c = 1; `hbar()` is kept in formulas for readability.

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{domain, Error, Result};
use crate::fock_space::{
    linear_form, mirror_momentum, mirror_position, mixed_quadrature, momentum_p, number,
    quadrature_q, FieldOperator, FockLayout, FockSpace, OperatorSum, Slot,
};
use crate::mode_mixing::{
    ladder_mixing_matrix, mixing_matrix, overlap_coefficient, MixingKind, MixingMatrix, ModeGrid,
};
use crate::scalar::{hbar, im, parity_sign, re, Real};

/// Padding that makes products of two ladder operators exact.
pub const QUADRATIC_PAD: usize = 1;

/// Physical and truncation parameters of the mirror-cavity system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams<T> {
    /// Mirror mass `m`.
    pub mass: T,
    /// Bare mechanical frequency `Ω`.
    pub omega: T,
    /// Equilibrium cavity length `d`.
    pub length: T,
    /// Mode cutoff `K`.
    pub modes: usize,
    /// Per-mode occupation cap `N`.
    pub per_mode_max: usize,
    /// Optional cap `C` on the total occupation.
    pub total_cap: Option<usize>,
    /// Occupation cap of the mirror oscillator.
    pub mirror_max: usize,
    /// Ultraviolet cutoff `ω_pl`, needed only for the scaling ratios.
    pub omega_pl: Option<T>,
}

impl<T: Real> SystemParams<T> {
    pub const DEFAULT_MIRROR_MAX: usize = 6;

    pub fn new(mass: T, omega: T, length: T, modes: usize, per_mode_max: usize) -> Result<Self> {
        let params = Self {
            mass,
            omega,
            length,
            modes,
            per_mode_max,
            total_cap: None,
            mirror_max: Self::DEFAULT_MIRROR_MAX,
            omega_pl: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_total_cap(mut self, cap: Option<usize>) -> Self {
        self.total_cap = cap;
        self
    }

    pub fn with_mirror_max(mut self, cap: usize) -> Self {
        self.mirror_max = cap;
        self
    }

    pub fn with_omega_pl(mut self, omega_pl: T) -> Self {
        self.omega_pl = Some(omega_pl);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("omega", self.omega),
            ("length", self.length),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                return domain(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.modes == 0 {
            return domain("mode cutoff must be at least 1");
        }
        if self.per_mode_max == 0 || self.mirror_max == 0 {
            return domain("occupation caps must be positive");
        }
        if self.total_cap == Some(0) {
            return domain("total occupation cap must be positive");
        }
        if let Some(pl) = self.omega_pl {
            if !(pl.is_finite() && pl > T::zero()) {
                return domain(format!("omega_pl must be positive and finite, got {pl}"));
            }
        }
        Ok(())
    }

    /// `x_zpf = √(ħ/2mΩ)`.
    pub fn x_zpf(&self) -> T {
        (hbar::<T>() / (T::lit(2.0) * self.mass * self.omega)).sqrt()
    }

    /// `√(ħmΩ/2)`, the zero-point momentum of the mirror.
    pub fn p_zpf(&self) -> T {
        (hbar::<T>() * self.mass * self.omega / T::lit(2.0)).sqrt()
    }

    pub fn grid(&self) -> Result<ModeGrid<T>> {
        ModeGrid::new(self.length, self.modes)
    }

    fn checked_cutoff(&self) -> Result<T> {
        let Some(pl) = self.omega_pl else {
            return domain("scaling diagnostics need omega_pl");
        };
        let top = T::from_count(self.modes) * T::PI() / self.length;
        if top > pl * (T::one() + T::epsilon() * T::lit(16.0)) {
            return domain(format!(
                "highest mode frequency {top} exceeds omega_pl {pl}"
            ));
        }
        Ok(pl)
    }

    /// `λ = (x_zpf/d)(ω_pl/Ω)`.
    pub fn lambda(&self) -> Result<T> {
        let pl = self.checked_cutoff()?;
        Ok(self.x_zpf() / self.length * pl / self.omega)
    }

    /// Same system with the mass chosen so that `λ` takes the given value.
    pub fn with_lambda(&self, lambda: T) -> Result<Self> {
        let pl = self.checked_cutoff()?;
        if !(lambda.is_finite() && lambda > T::zero()) {
            return domain(format!("lambda must be positive, got {lambda}"));
        }
        let x_zpf = lambda * self.length * self.omega / pl;
        let mut out = *self;
        out.mass = hbar::<T>() / (T::lit(2.0) * self.omega * x_zpf * x_zpf);
        out.validate()?;
        Ok(out)
    }

    pub fn field_layout(&self) -> FockLayout {
        FockLayout {
            modes: self.modes,
            per_mode_max: self.per_mode_max,
            mirror_max: None,
            total_cap: self.total_cap,
        }
    }

    pub fn joint_layout(&self) -> FockLayout {
        FockLayout {
            mirror_max: Some(self.mirror_max),
            ..self.field_layout()
        }
    }
}

/// An operator with the anti-Hermitian norm of its raw construction.
#[derive(Debug, Clone)]
pub struct Constructed<T: Real> {
    /// Hermitian part `(F + F†)/2`.
    pub operator: FieldOperator<T>,
    /// `max |F − F†|` before symmetrization.
    pub raw_asymmetry: T,
}

/// An alternative construction and its distance from the reference one.
#[derive(Debug, Clone)]
pub struct Alternative<T: Real> {
    pub operator: FieldOperator<T>,
    /// `max |F_alt − F|`.
    pub deviation: T,
}

fn check_space<T: Real>(space: &FockSpace, grid: &ModeGrid<T>) -> Result<()> {
    if space.layout().modes != grid.cutoff() {
        return domain(format!(
            "space has {} modes but grid has {}",
            space.layout().modes,
            grid.cutoff()
        ));
    }
    Ok(())
}

fn check_order<T: Real>(mixing: &MixingMatrix<T>, n: usize, kind: MixingKind) -> Result<()> {
    if mixing.order() != n || mixing.kind() != kind {
        return domain(format!(
            "expected {kind:?} mixing of order {n}, got {:?} of order {}",
            mixing.kind(),
            mixing.order()
        ));
    }
    Ok(())
}

fn sign<T: Real>(k: usize) -> T {
    parity_sign(k)
}

/// `Σ_k c_k Q_k` on the working basis.
fn quadrature_sum<T: Real>(
    space: &FockSpace,
    grid: &ModeGrid<T>,
    coeffs: &[T],
) -> Result<FieldOperator<T>> {
    let mut sum = OperatorSum::new(space.working().dim());
    for (i, &c) in coeffs.iter().enumerate() {
        if c != T::zero() {
            sum.push(quadrature_q(space.working(), i + 1, grid)?.scale(c));
        }
    }
    Ok(sum.finish())
}

/// `Σ_k c_k Q_k^(n)` on the working basis.
fn mixed_sum<T: Real>(
    space: &FockSpace,
    grid: &ModeGrid<T>,
    mixing: &MixingMatrix<T>,
    coeffs: &[T],
) -> Result<FieldOperator<T>> {
    let mut sum = OperatorSum::new(space.working().dim());
    for (i, &c) in coeffs.iter().enumerate() {
        if c != T::zero() {
            sum.push(
                mixed_quadrature(space.working(), i + 1, mixing.order(), mixing, grid)?.scale(c),
            );
        }
    }
    Ok(sum.finish())
}

/// `(AB + BA)/2` cropped to the retained basis.
fn symmetrized_product<T: Real>(
    space: &FockSpace,
    a: &FieldOperator<T>,
    b: &FieldOperator<T>,
) -> Result<FieldOperator<T>> {
    let ab = a.try_mul(b)?;
    let ba = b.try_mul(a)?;
    Ok(space.crop(&ab.try_add(&ba)?)?.scale(T::lit(0.5)))
}

/// `Γ₀ = −(1/d) Σ_k P_k Q_k^(1)`.
pub fn build_gamma0<T: Real>(
    space: &FockSpace,
    grid: &ModeGrid<T>,
    mixing: &MixingMatrix<T>,
) -> Result<FieldOperator<T>> {
    check_space(space, grid)?;
    check_order(mixing, 1, MixingKind::Amplitude)?;
    let w = space.working();
    let mut sum = OperatorSum::new(w.dim());
    for k in 1..=grid.cutoff() {
        let p = momentum_p(w, k, grid)?;
        let q1 = mixed_quadrature(w, k, 1, mixing, grid)?;
        sum.push(p.try_mul(&q1)?);
    }
    let gamma = space
        .crop(&sum.finish())?
        .scale(-T::one() / grid.cavity_length());
    Ok(gamma.with_hint(true))
}

/// `Γ₀ = (iħ/2d) Σ_kj g_kj √(k/j) [a_k†a_j† − a_k a_j + a_k†a_j − a_j†a_k]`.
pub fn build_gamma0_ladder<T: Real>(
    space: &FockSpace,
    grid: &ModeGrid<T>,
) -> Result<FieldOperator<T>> {
    check_space(space, grid)?;
    let w = space.working();
    let modes = grid.cutoff();
    let lower: Vec<_> = (1..=modes)
        .map(|k| linear_form::<T>(w, &[(k - 1, re(T::one()), re(T::zero()))]))
        .collect();
    let raise: Vec<_> = lower.iter().map(FieldOperator::adjoint).collect();
    let mut sum = OperatorSum::new(w.dim());
    for k in 1..=modes {
        for j in 1..=modes {
            let g: T = overlap_coefficient(k, j)?;
            if g == T::zero() {
                continue;
            }
            let (ak, aj, akd, ajd) = (&lower[k - 1], &lower[j - 1], &raise[k - 1], &raise[j - 1]);
            let bracket = &(&(akd * ajd) - &(ak * aj)) + &(&(akd * aj) - &(ajd * ak));
            sum.push(bracket.scale(g * (T::from_count(k) / T::from_count(j)).sqrt()));
        }
    }
    let prefactor = im(hbar::<T>() / (T::lit(2.0) * grid.cavity_length()));
    Ok(space
        .crop(&sum.finish())?
        .scale_complex(prefactor)
        .with_hint(true))
}

/// Alternating weights `(−1)^k ω_k`.
fn alternating_frequencies<T: Real>(grid: &ModeGrid<T>) -> Vec<T> {
    (1..=grid.cutoff())
        .map(|k| sign::<T>(k) * grid.frequency(k))
        .collect()
}

/// `F_n = Σ_kj (−1)^{k+j} ω_k ω_j Q_k Q_j^(n)` for `n ∈ {0, 1}`.
pub fn build_f<T: Real>(
    n: usize,
    space: &FockSpace,
    grid: &ModeGrid<T>,
    mixing: &MixingMatrix<T>,
) -> Result<Constructed<T>> {
    if n > 1 {
        return domain(format!("F_{n} is beyond the quadratic theory"));
    }
    check_space(space, grid)?;
    check_order(mixing, n, MixingKind::Amplitude)?;
    let weights = alternating_frequencies(grid);
    let left = quadrature_sum(space, grid, &weights)?;
    let right = mixed_sum(space, grid, mixing, &weights)?;
    let raw = space.crop(&left.try_mul(&right)?)?;
    Ok(Constructed {
        raw_asymmetry: raw.asymmetry_norm(),
        operator: raw.hermitian_part(),
    })
}

/// The single-sum forms
/// `F_0 = Σ_k ω_k² Q_k (Q_k + Q_k^(1))` and
/// `F_1 = Σ_k (ω_k²/2)[Q_k (Q_k^(1) + Q_k^(2)) + Q_k^(1)(Q_k + Q_k^(1))]`,
/// products symmetrized.
pub fn build_f_alternative<T: Real>(
    n: usize,
    space: &FockSpace,
    grid: &ModeGrid<T>,
    first: &MixingMatrix<T>,
    second: &MixingMatrix<T>,
) -> Result<Alternative<T>> {
    if n > 1 {
        return domain(format!("F_{n} is beyond the quadratic theory"));
    }
    check_space(space, grid)?;
    check_order(first, 1, MixingKind::Amplitude)?;
    check_order(second, 2, MixingKind::Amplitude)?;
    let w = space.working();
    let mut sum = OperatorSum::new(space.dim());
    for k in 1..=grid.cutoff() {
        let w2 = grid.frequency(k).powi(2);
        let q = quadrature_q(w, k, grid)?;
        let q1 = mixed_quadrature(w, k, 1, first, grid)?;
        if n == 0 {
            sum.push(symmetrized_product(space, &q, &(&q + &q1))?.scale(w2));
        } else {
            let q2 = mixed_quadrature(w, k, 2, second, grid)?;
            let a = symmetrized_product(space, &q, &(&q1 + &q2))?;
            let b = symmetrized_product(space, &q1, &(&q + &q1))?;
            sum.push((&a + &b).scale(w2 / T::lit(2.0)));
        }
    }
    let operator = sum.finish().with_hint(true);
    let zeroth = identity_like(first);
    let reference = build_f(n, space, grid, if n == 0 { &zeroth } else { first })?;
    let deviation = operator.max_abs_diff(&reference.operator)?;
    Ok(Alternative {
        operator,
        deviation,
    })
}

fn identity_like<T: Real>(m: &MixingMatrix<T>) -> MixingMatrix<T> {
    MixingMatrix::identity(m.modes(), MixingKind::Amplitude)
}

/// `F_n = (ħ/2) Σ_kj (−1)^{k+j} √(ω_k ω_j) (a_k + a_k†)(a_j + a_j†)^(n)`.
pub fn build_f_ladder<T: Real>(
    n: usize,
    space: &FockSpace,
    grid: &ModeGrid<T>,
    ladder: &MixingMatrix<T>,
) -> Result<Constructed<T>> {
    if n > 1 {
        return domain(format!("F_{n} is beyond the quadratic theory"));
    }
    check_space(space, grid)?;
    check_order(ladder, n, MixingKind::Ladder)?;
    let (u, v) = ladder_combinations(space, grid, ladder)?;
    let left = &u + &u.adjoint();
    let right = &v + &v.adjoint();
    let raw = space
        .crop(&left.try_mul(&right)?)?
        .scale(hbar::<T>() / T::lit(2.0));
    Ok(Constructed {
        raw_asymmetry: raw.asymmetry_norm(),
        operator: raw.hermitian_part(),
    })
}

/// Lowering combinations `u = Σ_k (−1)^k √ω_k a_k` and
/// `v = Σ_j (−1)^j √ω_j Σ_s A[j][s] a_s` on the working basis.
fn ladder_combinations<T: Real>(
    space: &FockSpace,
    grid: &ModeGrid<T>,
    ladder: &MixingMatrix<T>,
) -> Result<(FieldOperator<T>, FieldOperator<T>)> {
    let modes = grid.cutoff();
    let root: Vec<T> = (1..=modes)
        .map(|k| sign::<T>(k) * grid.frequency(k).sqrt())
        .collect();
    let u_terms: Vec<_> = (0..modes)
        .map(|k| (k, re(root[k]), re(T::zero())))
        .collect();
    let mut v_coeff = vec![T::zero(); modes];
    for j in 1..=modes {
        for (s, a) in ladder.row(j) {
            v_coeff[s - 1] += root[j - 1] * *a;
        }
    }
    let v_terms: Vec<_> = (0..modes)
        .map(|s| (s, re(v_coeff[s]), re(T::zero())))
        .collect();
    let w = space.working();
    Ok((linear_form(w, &u_terms), linear_form(w, &v_terms)))
}

/// Vacuum expectation and normal-ordered remainder of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct NormalOrderSplit<T: Real> {
    pub normal: FieldOperator<T>,
    pub vacuum: T,
}

/// `vacuum = ⟨0|F|0⟩`, `normal = F − vacuum·1`.
pub fn normal_order_split<T: Real>(f: &FieldOperator<T>) -> Result<NormalOrderSplit<T>> {
    if !f.is_hermitian(T::lit(1e-10)) {
        return domain("normal-order split needs a Hermitian operator");
    }
    if f.dim() == 0 {
        return domain("empty operator");
    }
    let vacuum = f.get(0, 0).re;
    let normal = (f - &FieldOperator::identity(f.dim()).scale(vacuum)).with_hint(true);
    Ok(NormalOrderSplit { normal, vacuum })
}

/// `Σ_{k≤K} ħω_k/2`.
pub fn vacuum_sum_f0<T: Real>(grid: &ModeGrid<T>) -> T {
    grid.frequencies()
        .iter()
        .map(|&w| hbar::<T>() * w / T::lit(2.0))
        .sum()
}

/// `Σ'_{k≠j≤K} ω_k ω_j/(ω_k + ω_j)`, the primed pair sum.
pub fn primed_pair_sum<T: Real>(grid: &ModeGrid<T>) -> T {
    pair_sum(grid, false)
}

/// Same pair sum including the diagonal `k = j`.
pub fn unprimed_pair_sum<T: Real>(grid: &ModeGrid<T>) -> T {
    pair_sum(grid, true)
}

fn pair_sum<T: Real>(grid: &ModeGrid<T>, diagonal: bool) -> T {
    let w = grid.frequencies();
    let mut acc = T::zero();
    for (k, &wk) in w.iter().enumerate() {
        for (j, &wj) in w.iter().enumerate() {
            if diagonal || k != j {
                acc += wk * wj / (wk + wj);
            }
        }
    }
    acc
}

/// `(ħ/2) Σ'_{k≠j} ω_k ω_j/(ω_k + ω_j)`.
pub fn vacuum_sum_f1<T: Real>(grid: &ModeGrid<T>) -> T {
    hbar::<T>() / T::lit(2.0) * primed_pair_sum(grid)
}

/// `Ω_ren² = Ω² + (ħ/md²) Σ'_{k≠j≤K} ω_k ω_j/(ω_k + ω_j)`.
pub fn renormalized_frequency_sq<T: Real>(params: &SystemParams<T>) -> Result<T> {
    params.validate()?;
    let grid = params.grid()?;
    let d = params.length;
    Ok(params.omega.powi(2) + hbar::<T>() / (params.mass * d * d) * primed_pair_sum(&grid))
}

/// One-dimensional Casimir energy `−ħπ/(24q)`.
pub fn casimir_energy<T: Real>(q: T) -> Result<T> {
    if !(q.is_finite() && q > T::zero()) {
        return domain(format!("cavity length must be positive, got {q}"));
    }
    Ok(-hbar::<T>() * T::PI() / (T::lit(24.0) * q))
}

/// `f = (ħ/2d) Σ_kj (−1)^{k+j} √(ω_k ω_j)(a_k a_j + a_k†a_j + a_j†a_k + a_j†a_k†)`.
pub fn build_force_f<T: Real>(space: &FockSpace, grid: &ModeGrid<T>) -> Result<FieldOperator<T>> {
    check_space(space, grid)?;
    Ok(space
        .crop(&build_force_f_working(space, grid)?)?
        .with_hint(true))
}

/// `ΔΩ² = (ħ/md²) Σ_kj (−1)^{k+j} √(ω_k ω_j) Σ_s g_sj √(j/s)
/// (a_k a_s + a_k†a_s + a_s†a_k + a_k†a_s†)`.
pub fn build_delta_omega2<T: Real>(
    space: &FockSpace,
    grid: &ModeGrid<T>,
    ladder: &MixingMatrix<T>,
    params: &SystemParams<T>,
) -> Result<Constructed<T>> {
    check_space(space, grid)?;
    check_order(ladder, 1, MixingKind::Ladder)?;
    let raw = space.crop(&build_delta_omega2_working(space, grid, ladder, params)?)?;
    Ok(Constructed {
        raw_asymmetry: raw.asymmetry_norm(),
        operator: raw.hermitian_part(),
    })
}

/// Polynomial coefficients of the position-dependent ladder operator
/// `a_k(d + x) = α(x) a_k0 + β(x) a_k0†`, in powers of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderExpansion<T> {
    /// Fitted `[α₀, α₁, α₂]`.
    pub annihilation: [T; 3],
    /// Fitted `[β₀, β₁, β₂]`.
    pub creation: [T; 3],
    /// Taylor coefficients of the exact definition.
    pub expected_annihilation: [T; 3],
    pub expected_creation: [T; 3],
    /// Coefficients with the `1/d` and `1/d²` factors omitted.
    pub dimensionless_annihilation: [T; 3],
    pub dimensionless_creation: [T; 3],
    /// Largest sample misfit of the polynomial.
    pub fit_residual: T,
    /// Largest spread of the fitted coefficients across modes.
    pub mode_spread: T,
}

impl<T: Real> LadderExpansion<T> {
    /// Largest distance between fitted and exact Taylor coefficients.
    pub fn deviation_from_expected(&self) -> T {
        let a = self.annihilation.iter().zip(&self.expected_annihilation);
        let b = self.creation.iter().zip(&self.expected_creation);
        a.chain(b)
            .map(|(x, y)| (*x - *y).abs())
            .fold(T::zero(), T::max)
    }
}

/// Largest misfit accepted by [`ladder_expansion_check`].
pub const EXPANSION_FIT_TOLERANCE: f64 = 1e-7;

/// Expands `a_k(q) = (2ħω_k(q))^{-1/2}[ω_k(q) Q_k + i P_k]` around `q = d`
/// with `Q_k`, `P_k` held fixed and fits the coefficients of `a_k0` and
/// `a_k0†` as polynomials in `x = q − d`.
pub fn ladder_expansion_check<T: Real + nalgebra::RealField>(
    space: &FockSpace,
    grid: &ModeGrid<T>,
    x_values: &[T],
) -> Result<LadderExpansion<T>> {
    check_space(space, grid)?;
    let d = grid.cavity_length();
    if x_values.len() < 3 {
        return domain("at least three displacements are needed for a quadratic fit");
    }
    if x_values
        .iter()
        .any(|&x| !x.is_finite() || Float::abs(x) >= d * T::lit(0.5))
    {
        return domain("displacements must be small compared to the cavity length");
    }
    let basis = space.retained();
    let degree = (x_values.len() - 1).min(6);
    let vacuum = basis.vacuum_index();
    let mut fitted: Vec<([T; 3], [T; 3])> = Vec::new();
    let mut residual = T::zero();
    for k in 1..=grid.cutoff() {
        let mut one = vec![0u16; basis.layout().slot_count()];
        one[k - 1] = 1;
        let excited = basis.require(&one)?;
        let q = quadrature_q(basis, k, grid)?;
        let p = momentum_p(basis, k, grid)?;
        let mut alpha = Vec::with_capacity(x_values.len());
        let mut beta = Vec::with_capacity(x_values.len());
        for &x in x_values {
            let shifted = ModeGrid::new(d + x, grid.cutoff())?;
            let wq = shifted.frequency(k);
            let norm = Float::recip(Float::sqrt(T::lit(2.0) * hbar::<T>() * wq));
            let a = (&q.scale(wq) + &p.scale_complex(im(T::one()))).scale(norm);
            alpha.push(a.get(vacuum, excited).re);
            beta.push(a.get(excited, vacuum).re);
        }
        let (ca, ra) = polynomial_fit(x_values, &alpha, degree, d)?;
        let (cb, rb) = polynomial_fit(x_values, &beta, degree, d)?;
        residual = Float::max(residual, Float::max(ra, rb));
        fitted.push(([ca[0], ca[1], ca[2]], [cb[0], cb[1], cb[2]]));
    }
    if residual > T::lit(EXPANSION_FIT_TOLERANCE) {
        return Err(Error::Accuracy {
            what: "ladder-operator expansion fit".into(),
            change: residual.to_f64_lossy(),
            tolerance: EXPANSION_FIT_TOLERANCE,
        });
    }
    let (annihilation, creation) = fitted[0];
    let mut spread = T::zero();
    for (a, b) in &fitted {
        for i in 0..3 {
            spread = Float::max(spread, Float::abs(a[i] - annihilation[i]));
            spread = Float::max(spread, Float::abs(b[i] - creation[i]));
        }
    }
    let zero = T::zero();
    Ok(LadderExpansion {
        annihilation,
        creation,
        expected_annihilation: [T::one(), zero, T::lit(0.125) / (d * d)],
        expected_creation: [zero, -T::lit(0.5) / d, T::lit(0.25) / (d * d)],
        dimensionless_annihilation: [T::one(), zero, T::lit(0.125)],
        dimensionless_creation: [zero, -T::lit(0.5), T::lit(0.25)],
        fit_residual: residual,
        mode_spread: spread,
    })
}

/// Least-squares polynomial of the given degree in `x`, fitted in the
/// variable `x/scale`; returns the coefficients (padded to at least three)
/// and the largest misfit.
fn polynomial_fit<T: Real + nalgebra::RealField>(
    xs: &[T],
    ys: &[T],
    degree: usize,
    scale: T,
) -> Result<(Vec<T>, T)> {
    let rows = xs.len();
    let cols = degree + 1;
    let a = DMatrix::from_fn(rows, cols, |r, c| Float::powi(xs[r] / scale, c as i32));
    let b = DVector::from_column_slice(ys);
    let svd = a.clone().svd(true, true);
    let coeffs = svd
        .solve(&b, T::lit(1e-14))
        .map_err(|e| Error::Contract(format!("polynomial fit failed: {e}")))?;
    let misfit = (&a * &coeffs - &b).amax();
    let mut out: Vec<T> = coeffs
        .iter()
        .enumerate()
        .map(|(c, &v)| v / Float::powi(scale, c as i32))
        .collect();
    out.resize(out.len().max(3), T::zero());
    Ok((out, misfit))
}

/// Every named operator and scalar of the quadratic theory on the joint
/// mirror-field basis.
#[derive(Debug, Clone)]
pub struct HamiltonianTerms<T: Real> {
    /// `p²/2m + mΩ²x²/2`.
    pub h_m: FieldOperator<T>,
    /// `Σ_k ħω_k a_k†a_k`.
    pub h_f: FieldOperator<T>,
    pub f0: FieldOperator<T>,
    pub f1: FieldOperator<T>,
    /// `−x f + m ΔΩ² x²/2`.
    pub hint_normal: FieldOperator<T>,
    pub force_f: FieldOperator<T>,
    pub delta_omega2: FieldOperator<T>,
    pub vac_f0: T,
    pub vac_f1: T,
    pub omega_ren_sq: T,
    pub casimir_energy: T,
}

/// Padding that makes the mirror-field products of the Hamiltonian exact.
pub const HAMILTONIAN_PAD: usize = 3;

impl<T: Real> HamiltonianTerms<T> {
    pub fn build(params: &SystemParams<T>) -> Result<Self> {
        params.validate()?;
        let grid = params.grid()?;
        let space = FockSpace::new(params.joint_layout(), HAMILTONIAN_PAD)?;
        let m0 = mixing_matrix(&grid, 0)?;
        let m1 = mixing_matrix(&grid, 1)?;
        let a1 = ladder_mixing_matrix(&grid, 1)?;
        let f0 = build_f(0, &space, &grid, &m0)?.operator;
        let f1 = build_f(1, &space, &grid, &m1)?.operator;
        let force_f = build_force_f(&space, &grid)?;
        let delta_omega2 = build_delta_omega2(&space, &grid, &a1, params)?.operator;
        let w = space.working();
        let x = mirror_position(w, params)?;
        let p = mirror_momentum(w, params)?;
        let x2 = &x * &x;
        let m = params.mass;
        let h_m_raw = &(&p * &p).scale(T::one() / (T::lit(2.0) * m))
            + &x2.scale(m * params.omega.powi(2) / T::lit(2.0));
        let h_m = space.crop(&h_m_raw)?.hermitian_part();
        let mut h_f = OperatorSum::new(space.dim());
        for k in 1..=grid.cutoff() {
            h_f.push(
                number(space.retained(), Slot::Mode(k))?.scale(hbar::<T>() * grid.frequency(k)),
            );
        }
        let force_w = build_force_f_working(&space, &grid)?;
        let delta_w = build_delta_omega2_working(&space, &grid, &a1, params)?;
        let coupling = &(&x * &force_w).scale(-T::one()) + &(&x2 * &delta_w).scale(m / T::lit(2.0));
        let hint_normal = space.crop(&coupling)?.hermitian_part();
        Ok(Self {
            h_m,
            h_f: h_f.finish().with_hint(true),
            f0,
            f1,
            hint_normal,
            force_f,
            delta_omega2,
            vac_f0: vacuum_sum_f0(&grid),
            vac_f1: vacuum_sum_f1(&grid),
            omega_ren_sq: renormalized_frequency_sq(params)?,
            casimir_energy: casimir_energy(params.length)?,
        })
    }
}

/// `f` left on the working basis, for products with mirror operators.
pub(crate) fn build_force_f_working<T: Real>(
    space: &FockSpace,
    grid: &ModeGrid<T>,
) -> Result<FieldOperator<T>> {
    let identity = MixingMatrix::identity(grid.cutoff(), MixingKind::Ladder);
    let (u, _) = ladder_combinations(space, grid, &identity)?;
    let ud = u.adjoint();
    let body = &(&(&u * &u) + &(&ud * &u).scale(T::lit(2.0))) + &(&ud * &ud);
    Ok(body.scale(hbar::<T>() / (T::lit(2.0) * grid.cavity_length())))
}

/// `ΔΩ²` left on the working basis, for products with mirror operators.
pub(crate) fn build_delta_omega2_working<T: Real>(
    space: &FockSpace,
    grid: &ModeGrid<T>,
    ladder: &MixingMatrix<T>,
    params: &SystemParams<T>,
) -> Result<FieldOperator<T>> {
    let (u, v) = ladder_combinations(space, grid, ladder)?;
    let (ud, vd) = (u.adjoint(), v.adjoint());
    let body = &(&(&u * &v) + &(&ud * &v)) + &(&(&vd * &u) + &(&ud * &vd));
    let d = params.length;
    Ok(body.scale(hbar::<T>() / (params.mass * d * d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::C;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn setup(modes: usize, cap: usize) -> (FockSpace, ModeGrid<f64>) {
        let space = FockSpace::new(FockLayout::field(modes, cap), QUADRATIC_PAD).unwrap();
        (space, ModeGrid::new(PI, modes).unwrap())
    }

    fn mixings(grid: &ModeGrid<f64>) -> [MixingMatrix<f64>; 3] {
        [0, 1, 2].map(|n| mixing_matrix(grid, n).unwrap())
    }

    #[test]
    fn params_validation_and_lambda() {
        assert!(SystemParams::new(0.0, 1.0, PI, 2, 2).is_err());
        assert!(SystemParams::new(1.0, 1.0, PI, 0, 2).is_err());
        assert!(SystemParams::new(1.0, f64::NAN, PI, 2, 2).is_err());
        let p = SystemParams::new(1.0, 1.0, PI, 3, 2).unwrap();
        assert!(p.lambda().is_err());
        let p = p.with_omega_pl(3.0);
        let q = p.with_lambda(0.05).unwrap();
        assert_abs_diff_eq!(q.lambda().unwrap(), 0.05, epsilon = 1e-15);
        assert!(p.with_omega_pl(2.0).lambda().is_err());
    }

    #[test]
    fn gamma0_single_mode_is_zero() {
        let (space, grid) = setup(1, 3);
        let m1 = mixing_matrix(&grid, 1).unwrap();
        assert!(build_gamma0(&space, &grid, &m1).unwrap().is_zero(0.0));
        assert!(build_gamma0_ladder(&space, &grid).unwrap().is_zero(0.0));
    }

    #[test]
    fn gamma0_constructions_agree_and_are_hermitian() {
        let (space, grid) = setup(3, 3);
        let m1 = mixing_matrix(&grid, 1).unwrap();
        let quad = build_gamma0(&space, &grid, &m1).unwrap();
        let ladder = build_gamma0_ladder(&space, &grid).unwrap();
        assert!(quad.max_abs_diff(&ladder).unwrap() <= 1e-12);
        assert!(ladder.asymmetry_norm() <= 1e-12);
        assert!(quad.asymmetry_norm() <= 1e-12);
        assert_abs_diff_eq!(quad.get(0, 0).norm(), 0.0, epsilon = 1e-15);
        assert!(quad.max_abs() > 0.1);
    }

    #[test]
    fn f_vacuum_examples() {
        let (space, grid) = setup(3, 2);
        let [m0, m1, _] = mixings(&grid);
        let f0 = build_f(0, &space, &grid, &m0).unwrap();
        assert_abs_diff_eq!(f0.operator.get(0, 0).re, 3.0, epsilon = 1e-12);
        assert!(f0.raw_asymmetry <= 1e-12);
        let (space2, grid2) = setup(2, 2);
        let m1b = mixing_matrix(&grid2, 1).unwrap();
        let f1 = build_f(1, &space2, &grid2, &m1b).unwrap();
        assert_abs_diff_eq!(f1.operator.get(0, 0).re, 2.0 / 3.0, epsilon = 1e-12);
        assert!(build_f(2, &space, &grid, &m1).is_err());
        assert!(build_f(1, &space, &grid, &m0).is_err());
    }

    #[test]
    fn f_forms_agree() {
        for modes in [1, 2, 4] {
            let (space, grid) = setup(modes, 2);
            let [m0, m1, m2] = mixings(&grid);
            let a1 = ladder_mixing_matrix(&grid, 1).unwrap();
            let l0 = MixingMatrix::identity(modes, MixingKind::Ladder);
            let f0 = build_f(0, &space, &grid, &m0).unwrap().operator;
            let f0_ladder = build_f_ladder(0, &space, &grid, &l0).unwrap().operator;
            assert!(f0.max_abs_diff(&f0_ladder).unwrap() <= 1e-12);
            let alt0 = build_f_alternative(0, &space, &grid, &m1, &m2).unwrap();
            assert!(alt0.deviation <= 1e-12, "K={modes}: {}", alt0.deviation);
            let f1 = build_f(1, &space, &grid, &m1).unwrap();
            let f1_ladder = build_f_ladder(1, &space, &grid, &a1).unwrap().operator;
            assert!(f1.operator.max_abs_diff(&f1_ladder).unwrap() <= 1e-12);
            assert!(f1.raw_asymmetry <= 1e-12);
            let alt1 = build_f_alternative(1, &space, &grid, &m1, &m2).unwrap();
            assert!(alt1.deviation <= 1e-11, "K={modes}: {}", alt1.deviation);
        }
    }

    #[test]
    fn single_mode_f_alternative_is_omega_squared_q_squared() {
        let (space, grid) = setup(1, 4);
        let [m0, m1, m2] = mixings(&grid);
        let q = quadrature_q(space.working(), 1, &grid).unwrap();
        let q2 = space.crop(&(&q * &q)).unwrap();
        let alt = build_f_alternative(0, &space, &grid, &m1, &m2)
            .unwrap()
            .operator;
        assert!(alt.max_abs_diff(&q2).unwrap() <= 1e-14);
        assert!(build_f(1, &space, &grid, &m1)
            .unwrap()
            .operator
            .is_zero(1e-15));
        let a1 = ladder_mixing_matrix(&grid, 1).unwrap();
        assert!(build_f_ladder(1, &space, &grid, &a1)
            .unwrap()
            .operator
            .is_zero(1e-15));
        let _ = m0;
    }

    #[test]
    fn f0_ladder_matrix_element() {
        let (space, grid) = setup(2, 2);
        let l0 = MixingMatrix::identity(2, MixingKind::Ladder);
        let f0 = build_f_ladder(0, &space, &grid, &l0).unwrap().operator;
        let split = normal_order_split(&f0).unwrap();
        let b = space.retained();
        let e = split.normal.get(b.index_of(&[1, 1]).unwrap(), 0);
        assert_abs_diff_eq!(e.re, -(2.0f64).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn normal_order_split_examples() {
        let id = FieldOperator::<f64>::identity(5);
        let s = normal_order_split(&id).unwrap();
        assert!(s.normal.is_zero(0.0));
        assert_eq!(s.vacuum, 1.0);
        let skew = FieldOperator::<f64>::from_triplets(2, [(0, 1, C::new(1.0, 0.0))]);
        assert!(normal_order_split(&skew).is_err());
    }

    #[test]
    fn vacuum_sums() {
        let grid = ModeGrid::new(PI, 3).unwrap();
        assert_abs_diff_eq!(vacuum_sum_f0(&grid), 3.0, epsilon = 1e-15);
        let grid2 = ModeGrid::new(PI, 2).unwrap();
        assert_abs_diff_eq!(vacuum_sum_f1(&grid2), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            unprimed_pair_sum(&grid2) - primed_pair_sum(&grid2),
            vacuum_sum_f0(&grid2),
            epsilon = 1e-15
        );
    }

    #[test]
    fn renormalized_frequency_examples() {
        let p = SystemParams::new(1.0, 1.0, PI, 2, 2).unwrap();
        assert_abs_diff_eq!(
            renormalized_frequency_sq(&p).unwrap(),
            1.0 + (4.0 / 3.0) / (PI * PI),
            epsilon = 1e-15
        );
        let single = SystemParams::new(1.0, 1.0, PI, 1, 2).unwrap();
        assert_eq!(renormalized_frequency_sq(&single).unwrap(), 1.0);
        let mut last = 0.0;
        for k in 1..8 {
            let v =
                renormalized_frequency_sq(&SystemParams::new(1.0, 1.0, PI, k, 2).unwrap()).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn casimir_examples() {
        assert_abs_diff_eq!(casimir_energy(PI).unwrap(), -1.0 / 24.0, epsilon = 1e-16);
        assert_abs_diff_eq!(
            casimir_energy(2.0 * PI).unwrap(),
            -1.0 / 48.0,
            epsilon = 1e-16
        );
        assert!(casimir_energy(0.0f64).is_err());
        assert!(casimir_energy(0.3f64).unwrap() < 0.0);
    }

    #[test]
    fn force_matches_normal_ordered_f0() {
        let (space, grid) = setup(3, 3);
        let m0 = mixing_matrix(&grid, 0).unwrap();
        let f0 = build_f(0, &space, &grid, &m0).unwrap().operator;
        let split = normal_order_split(&f0).unwrap();
        let f = build_force_f(&space, &grid).unwrap();
        let d = grid.cavity_length();
        assert!(f.scale(d).max_abs_diff(&split.normal).unwrap() <= 1e-12);
        assert_abs_diff_eq!(f.get(0, 0).norm(), 0.0, epsilon = 1e-15);
        assert!(f.asymmetry_norm() <= 1e-13);
        let two = space.retained().index_of(&[2, 0, 0]).unwrap();
        assert_abs_diff_eq!(f.get(two, 0).re, 1.0 / (2.0f64.sqrt() * d), epsilon = 1e-14);
    }

    #[test]
    fn delta_omega2_matches_normal_ordered_f1() {
        let params = SystemParams::new(2.5, 1.0, PI, 3, 3).unwrap();
        let (space, grid) = setup(3, 3);
        let m1 = mixing_matrix(&grid, 1).unwrap();
        let a1 = ladder_mixing_matrix(&grid, 1).unwrap();
        let f1 = build_f(1, &space, &grid, &m1).unwrap().operator;
        let split = normal_order_split(&f1).unwrap();
        let delta = build_delta_omega2(&space, &grid, &a1, &params).unwrap();
        let scale = params.mass * PI * PI / 2.0;
        assert!(
            delta
                .operator
                .scale(scale)
                .max_abs_diff(&split.normal)
                .unwrap()
                <= 1e-12
        );
        assert!(delta.raw_asymmetry <= 1e-12);
        assert_abs_diff_eq!(delta.operator.get(0, 0).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(split.vacuum, vacuum_sum_f1(&grid), epsilon = 1e-12);
    }

    #[test]
    fn ladder_expansion_recovers_taylor_coefficients() {
        let (space, grid) = setup(2, 2);
        let d = PI;
        let xs: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.01 * d).collect();
        let report = ladder_expansion_check(&space, &grid, &xs).unwrap();
        assert!(report.deviation_from_expected() < 1e-6, "{report:?}");
        assert!(report.mode_spread < 1e-12);
        assert_abs_diff_eq!(report.creation[1], -1.0 / (2.0 * d), epsilon = 1e-8);
        assert!((report.creation[1] - report.dimensionless_creation[1]).abs() > 0.1);
        let exact = ladder_expansion_check(&space, &grid, &[0.0, 0.01, -0.01]).unwrap();
        assert_abs_diff_eq!(exact.annihilation[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(exact.creation[0], 0.0, epsilon = 1e-12);
        assert!(ladder_expansion_check(&space, &grid, &[0.0, 0.1]).is_err());
    }

    #[test]
    fn hamiltonian_terms_are_hermitian_and_consistent() {
        let params = SystemParams::new(4.0, 1.0, PI, 2, 2)
            .unwrap()
            .with_mirror_max(3);
        let terms = HamiltonianTerms::build(&params).unwrap();
        for op in [
            &terms.h_m,
            &terms.h_f,
            &terms.f0,
            &terms.f1,
            &terms.hint_normal,
            &terms.force_f,
            &terms.delta_omega2,
        ] {
            assert!(op.asymmetry_norm() <= 1e-12 * op.max_abs().max(1.0));
        }
        assert_abs_diff_eq!(terms.f0.get(0, 0).re, terms.vac_f0, epsilon = 1e-12);
        assert_abs_diff_eq!(terms.f1.get(0, 0).re, terms.vac_f1, epsilon = 1e-12);
        // Free mirror: exact ladder of ħΩ(n + 1/2) on the retained block.
        let mirror_energies: Vec<f64> = (0..terms.h_m.dim())
            .map(|i| terms.h_m.get(i, i).re)
            .collect();
        for (i, e) in mirror_energies.iter().enumerate() {
            let b = FockSpace::new(params.joint_layout(), 0).unwrap();
            let nb = b.retained().state(i)[2] as f64;
            assert_abs_diff_eq!(*e, nb + 0.5, epsilon = 1e-12);
        }
    }
}
