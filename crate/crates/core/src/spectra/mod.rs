//! The quadratic-order mirror-field Hamiltonian, its low-lying spectrum,
//! the dressed-vacuum observables, and the coupling-strength diagnostics.
//!
//! The model is
//!
//! `H = p²/2m + mΩ_eff²x²/2 + Σ_k ħω_k a_k†a_k − x f + (3/2d) x² f + (m/2) x² ΔΩ²`
//!
//! where the last two terms are switched by [`ModelFlags`] and
//! `Ω_eff² = Ω_ren²` when the `F₁` correction is on (its vacuum part) and
//! `Ω²` otherwise.

mod solver;
mod sweep;

pub use solver::{diagonalize, Eigensystem, SolverKind, SolverOptions, Spectral, DENSE_LIMIT};
pub use sweep::{fit_loglog_slope, sweep, ParamGrid, Spacing, SweepAxis, SweepParameter, SweepRow};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fock_space::{
    creation, mirror_momentum, mirror_position, number, FieldOperator, FockBasis, FockSpace,
    OperatorSum, Slot,
};
use crate::mode_mixing::ladder_mixing_matrix;
use crate::operators::{
    build_delta_omega2_working, build_force_f_working, renormalized_frequency_sq, SystemParams,
    HAMILTONIAN_PAD,
};
use crate::scalar::{hbar, Real, C};

/// Which interaction terms enter the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelFlags {
    /// `−x f`.
    pub linear: bool,
    /// `(3/2d) x² f`.
    pub quadratic_f0: bool,
    /// `(m/2) x² ΔΩ²` together with the static shift `Ω² → Ω_ren²`.
    pub f1: bool,
}

impl ModelFlags {
    pub const FREE: ModelFlags = ModelFlags {
        linear: false,
        quadratic_f0: false,
        f1: false,
    };
    pub const LINEAR: ModelFlags = ModelFlags {
        linear: true,
        quadratic_f0: false,
        f1: false,
    };
    pub const FULL: ModelFlags = ModelFlags {
        linear: true,
        quadratic_f0: true,
        f1: true,
    };

    pub fn with_quadratic_f0(mut self, on: bool) -> Self {
        self.quadratic_f0 = on;
        self
    }

    pub fn with_f1(mut self, on: bool) -> Self {
        self.f1 = on;
        self
    }
}

impl fmt::Display for ModelFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [
            (self.linear, "linear"),
            (self.quadratic_f0, "quadratic-f0"),
            (self.f1, "f1"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, name)| *name)
        .collect();
        if parts.is_empty() {
            write!(f, "free")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

/// Largest retained basis accepted by [`build_full_hamiltonian`].
pub const DEFAULT_DIMENSION_GUARD: usize = 200_000;

/// The Hamiltonian matrix and the joint basis it acts on.
#[derive(Debug, Clone)]
pub struct JointHamiltonian<T: Real> {
    pub operator: FieldOperator<T>,
    pub basis: FockBasis,
    pub flags: ModelFlags,
    /// `Ω_eff²` used in the mirror potential.
    pub omega_eff_sq: T,
}

/// Builds the joint mirror-field Hamiltonian for the selected model.
pub fn build_full_hamiltonian<T: Real>(
    params: &SystemParams<T>,
    flags: ModelFlags,
    dimension_guard: usize,
) -> Result<JointHamiltonian<T>> {
    params.validate()?;
    let layout = params.joint_layout();
    let dimension = FockBasis::count(&layout, 0);
    if dimension > dimension_guard {
        return Err(Error::DimensionGuard {
            dimension,
            limit: dimension_guard,
        });
    }
    let grid = params.grid()?;
    let space = FockSpace::new(layout, HAMILTONIAN_PAD)?;
    let w = space.working();
    let m = params.mass;
    let d = params.length;
    let two = T::lit(2.0);
    let omega_eff_sq = if flags.f1 {
        renormalized_frequency_sq(params)?
    } else {
        params.omega.powi(2)
    };
    let x = mirror_position(w, params)?;
    let p = mirror_momentum(w, params)?;
    let x2 = &x * &x;
    let mut h = &(&p * &p).scale(T::one() / (two * m)) + &x2.scale(m * omega_eff_sq / two);
    if flags.linear || flags.quadratic_f0 {
        let f = build_force_f_working(&space, &grid)?;
        if flags.linear {
            h = &h - &(&x * &f);
        }
        if flags.quadratic_f0 {
            h = &h + &(&x2 * &f).scale(T::lit(1.5) / d);
        }
    }
    if flags.f1 {
        let a1 = ladder_mixing_matrix(&grid, 1)?;
        let delta = build_delta_omega2_working(&space, &grid, &a1, params)?;
        h = &h + &(&x2 * &delta).scale(m / two);
    }
    let retained = space.retained();
    let mut field = OperatorSum::new(retained.dim());
    for k in 1..=grid.cutoff() {
        field.push(number(retained, Slot::Mode(k))?.scale(hbar::<T>() * grid.frequency(k)));
    }
    let operator = (&space.crop(&h)? + &field.finish()).hermitian_part();
    Ok(JointHamiltonian {
        operator,
        basis: retained.clone(),
        flags,
        omega_eff_sq,
    })
}

/// Spectrum, dressed-vacuum observables and diagnostics of one model.
#[derive(Debug, Clone)]
pub struct SpectrumResult<T: Real> {
    pub flags: ModelFlags,
    /// Lowest eigenvalues, ascending.
    pub eigenvalues: Vec<T>,
    pub ground_state: Vec<C<T>>,
    /// `⟨n_k⟩` in the ground state, `k = 1..=K`.
    pub mode_populations: Vec<T>,
    /// `⟨n_b⟩` in the ground state.
    pub mirror_population: T,
    /// Excitation energy of the mechanical branch; `None` when ambiguous.
    pub mechanical_gap: Option<T>,
    /// `(first level, energy, ‖P_E b†|g⟩‖)` per excited eigenspace.
    pub branch_weights: Vec<(usize, T, T)>,
    pub lambda: Option<T>,
    pub ratio_quad_f0: Option<T>,
    pub ratio_quad_f1: Option<T>,
    pub dimension: usize,
    pub solver: SolverKind,
    pub max_residual: T,
    pub iterations: usize,
}

impl<T: Real> SpectrumResult<T> {
    pub fn ground_energy(&self) -> T {
        self.eigenvalues[0]
    }
}

/// Options of [`spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    /// Number of lowest levels to resolve.
    pub levels: usize,
    pub solver: SolverOptions,
    pub dimension_guard: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            levels: 12,
            solver: SolverOptions::default(),
            dimension_guard: DEFAULT_DIMENSION_GUARD,
        }
    }
}

/// Levels closer than this (relative to `max(1, |E|)`) form one eigenspace.
const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Two candidate branches closer than this fraction are ambiguous.
const AMBIGUITY_FRACTION: f64 = 0.99;

/// Builds, diagonalizes and analyses one model.
pub fn spectrum<T: Spectral>(
    params: &SystemParams<T>,
    flags: ModelFlags,
    options: &SpectrumOptions,
) -> Result<SpectrumResult<T>> {
    let h = build_full_hamiltonian(params, flags, options.dimension_guard)?;
    let eig = diagonalize(&h.operator, options.levels, &options.solver)?;
    analyze(&eig, &h, params)
}

/// Populations, branch weights and ratios from an eigensystem of `h`.
pub fn analyze<T: Real>(
    eig: &Eigensystem<T>,
    h: &JointHamiltonian<T>,
    params: &SystemParams<T>,
) -> Result<SpectrumResult<T>> {
    let basis = &h.basis;
    if eig.vectors.is_empty() || eig.vectors[0].len() != basis.dim() {
        return Err(Error::BasisMismatch {
            left: eig.vectors.first().map_or(0, Vec::len),
            right: basis.dim(),
        });
    }
    let ground = eig.vectors[0].clone();
    let weights: Vec<T> = ground.iter().map(|c| c.norm_sqr()).collect();
    let population = |slot: usize| -> T {
        basis
            .states()
            .zip(&weights)
            .map(|(s, &w)| w * T::from_count(s[slot] as usize))
            .sum()
    };
    let mode_populations = (0..basis.modes()).map(population).collect();
    let mirror_slot = basis.slot_index(Slot::Mirror)?;
    let mirror_population = population(mirror_slot);
    let raised = creation::<T>(basis, Slot::Mirror)?.apply(&ground);
    let branch_weights = eigenspace_weights(&eig.values, &eig.vectors, &raised);
    let mut result = SpectrumResult {
        flags: h.flags,
        eigenvalues: eig.values.clone(),
        ground_state: ground,
        mode_populations,
        mirror_population,
        mechanical_gap: None,
        branch_weights,
        lambda: None,
        ratio_quad_f0: None,
        ratio_quad_f1: None,
        dimension: basis.dim(),
        solver: eig.solver,
        max_residual: eig.max_residual,
        iterations: eig.iterations,
    };
    result.mechanical_gap = mechanical_gap(&result).ok();
    if params.omega_pl.is_some() {
        let ratios = scaling_ratios(params)?;
        result.lambda = Some(ratios.lambda);
        result.ratio_quad_f0 = Some(ratios.quad_f0);
        result.ratio_quad_f1 = Some(ratios.quad_f1);
    }
    Ok(result)
}

/// `‖P_E φ‖` for every excited eigenspace `E` among the resolved levels.
fn eigenspace_weights<T: Real>(
    values: &[T],
    vectors: &[Vec<C<T>>],
    phi: &[C<T>],
) -> Vec<(usize, T, T)> {
    let tol = |e: T| T::lit(DEGENERACY_TOLERANCE) * e.abs().max(T::one());
    let mut out = Vec::new();
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[j] - values[j - 1] <= tol(values[j]) {
            j += 1;
        }
        if i > 0 {
            let weight: T = (i..j)
                .map(|l| {
                    vectors[l]
                        .iter()
                        .zip(phi)
                        .fold(C::new(T::zero(), T::zero()), |a, (v, p)| a + v.conj() * p)
                        .norm_sqr()
                })
                .sum();
            out.push((i, values[i], weight.sqrt()));
        }
        i = j;
    }
    out
}

/// Excitation energy of the level with maximal single-phonon character
/// `|⟨e|b†|g⟩|`.
pub fn mechanical_gap<T: Real>(result: &SpectrumResult<T>) -> Result<T> {
    let mut ranked = result.branch_weights.clone();
    ranked.sort_by(|a, b| b.2.partial_cmp(&a.2).expect("finite weights"));
    let Some(best) = ranked.first() else {
        return domain("no excited level resolved");
    };
    if best.2 <= T::zero() {
        return domain("no resolved level overlaps b†|g⟩");
    }
    let close: Vec<(usize, f64)> = ranked
        .iter()
        .filter(|r| r.2 >= best.2 * T::lit(AMBIGUITY_FRACTION))
        .map(|r| (r.0, (r.1 - result.eigenvalues[0]).to_f64_lossy()))
        .collect();
    if close.len() > 1 {
        return Err(Error::AmbiguousBranch { candidates: close });
    }
    Ok(best.1 - result.eigenvalues[0])
}

/// Second-order estimate of the linear-model ground energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbativeEstimate<T> {
    /// `ħΩ/2`.
    pub unperturbed: T,
    /// `−Σ_v |⟨v|x f|0⟩|²/(E_v − E_0)`.
    pub correction: T,
    /// Number of virtual states in the basis.
    pub virtual_states: usize,
}

impl<T: Real> PerturbativeEstimate<T> {
    pub fn total(&self) -> T {
        self.unperturbed + self.correction
    }
}

/// Ground energy of `−x f` coupling to second order, summed over the
/// one-phonon two-photon states `|1_b; 1_k 1_j⟩` that the basis holds.
pub fn perturbative_ground_energy<T: Real>(
    params: &SystemParams<T>,
) -> Result<PerturbativeEstimate<T>> {
    params.validate()?;
    if params.omega_pl.is_some() {
        let lambda = params.lambda()?;
        if lambda >= T::lit(0.1) {
            return domain(format!(
                "perturbative estimate needs lambda < 0.1, got {lambda}"
            ));
        }
    }
    let grid = params.grid()?;
    let h = hbar::<T>();
    let layout = params.joint_layout();
    let admits = |k: usize, j: usize| {
        let per_mode = if k == j { 2 } else { 1 };
        per_mode <= layout.per_mode_max && layout.total_cap.is_none_or(|c| c >= 3)
    };
    let x_zpf = params.x_zpf();
    let prefactor = x_zpf * h / (T::lit(2.0) * params.length);
    let mut correction = T::zero();
    let mut virtual_states = 0;
    for k in 1..=grid.cutoff() {
        for j in k..=grid.cutoff() {
            if !admits(k, j) {
                continue;
            }
            let (wk, wj) = (grid.frequency(k), grid.frequency(j));
            let amplitude = if k == j {
                wk * T::SQRT_2()
            } else {
                T::lit(2.0) * (wk * wj).sqrt()
            };
            let element = prefactor * amplitude;
            correction -= element * element / (h * (params.omega + wk + wj));
            virtual_states += 1;
        }
    }
    Ok(PerturbativeEstimate {
        unperturbed: h * params.omega / T::lit(2.0),
        correction,
        virtual_states,
    })
}

/// Single-photon coupling and the relative size of the quadratic terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRatios<T> {
    /// `λ = (x_zpf/d)(ω_pl/Ω)`.
    pub lambda: T,
    /// `(x_zpf/d) λ`.
    pub quad_f0: T,
    /// `(Ω/ω₁₀) λ²`.
    pub quad_f1: T,
}

pub fn scaling_ratios<T: Real>(params: &SystemParams<T>) -> Result<ScalingRatios<T>> {
    let lambda = params.lambda()?;
    let omega_10 = T::PI() / params.length;
    Ok(ScalingRatios {
        lambda,
        quad_f0: params.x_zpf() / params.length * lambda,
        quad_f1: params.omega / omega_10 * lambda * lambda,
    })
}

/// The factor by which the quadratic `F₀` term should trail the `F₁` term:
/// `(x_zpf/d)(ω₁₀/Ω)/λ`.
pub fn quadratic_suppression<T: Real>(params: &SystemParams<T>) -> Result<T> {
    let r = scaling_ratios(params)?;
    Ok(r.quad_f0 / r.quad_f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `d = π`, `Ω = ω₁₀ = 1`, `ω_pl = K ω₁₀`, mass set by `λ`.
    fn operating_point(modes: usize, cap: usize, lambda: f64) -> SystemParams<f64> {
        SystemParams::new(1.0, 1.0, PI, modes, cap)
            .unwrap()
            .with_omega_pl(modes as f64)
            .with_lambda(lambda)
            .unwrap()
    }

    fn options() -> SpectrumOptions {
        SpectrumOptions::default()
    }

    #[test]
    fn flags_display() {
        assert_eq!(ModelFlags::FREE.to_string(), "free");
        assert_eq!(ModelFlags::FULL.to_string(), "linear+quadratic-f0+f1");
    }

    #[test]
    fn free_spectrum_is_exact() {
        let p = operating_point(2, 2, 0.05).with_mirror_max(4);
        let h = build_full_hamiltonian(&p, ModelFlags::FREE, DEFAULT_DIMENSION_GUARD).unwrap();
        let grid = p.grid().unwrap();
        let mut expected: Vec<f64> = h
            .basis
            .states()
            .map(|s| {
                p.omega * (s[2] as f64 + 0.5)
                    + grid.frequency(1) * s[0] as f64
                    + grid.frequency(2) * s[1] as f64
            })
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let eig = diagonalize(&h.operator, h.basis.dim(), &SolverOptions::default()).unwrap();
        for (a, b) in eig.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uncoupled_gap_is_omega() {
        // Ω = 0.6 keeps the phonon below every photon level.
        let p = SystemParams::new(2.0, 0.6, PI, 2, 2).unwrap();
        let r = spectrum(&p, ModelFlags::FREE, &options()).unwrap();
        assert!((r.mechanical_gap.unwrap() - 0.6).abs() < 1e-12);
        // At Ω = ω₁₀ the phonon is degenerate with one photon but b†|g⟩
        // still selects it.
        let p = SystemParams::new(2.0, 1.0, PI, 2, 2).unwrap();
        let r = spectrum(&p, ModelFlags::FREE, &options()).unwrap();
        assert!((r.mechanical_gap.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.mode_populations.iter().all(|&n| n.abs() < 1e-24));
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let p = operating_point(3, 2, 0.05);
        for flags in [ModelFlags::LINEAR, ModelFlags::FULL] {
            let h = build_full_hamiltonian(&p, flags, DEFAULT_DIMENSION_GUARD).unwrap();
            assert!(h.operator.asymmetry_norm() <= 1e-12);
        }
    }

    #[test]
    fn dimension_guard_trips() {
        let p = operating_point(3, 3, 0.05);
        assert!(matches!(
            build_full_hamiltonian(&p, ModelFlags::LINEAR, 10),
            Err(Error::DimensionGuard { .. })
        ));
    }

    #[test]
    fn ground_state_is_normalized_and_dressed() {
        let p = operating_point(2, 3, 0.05);
        let r = spectrum(&p, ModelFlags::LINEAR, &options()).unwrap();
        let norm: f64 = r.ground_state.iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.mirror_population >= 0.0);
        for &n in &r.mode_populations {
            assert!(n > 1e-15 * 0.05 * 0.05);
        }
    }

    #[test]
    fn perturbative_oracle_matches_exact_ground_energy() {
        for lambda in [0.01, 0.02, 0.05] {
            let p = operating_point(2, 3, lambda);
            let est = perturbative_ground_energy(&p).unwrap();
            assert!(est.correction < 0.0);
            let r = spectrum(&p, ModelFlags::LINEAR, &options()).unwrap();
            let gap = (r.ground_energy() - est.total()).abs();
            assert!(
                gap <= 5.0 * lambda.powi(3) * p.omega,
                "lambda {lambda}: {gap:e}"
            );
        }
    }

    #[test]
    fn perturbative_correction_is_quadratic() {
        let a = perturbative_ground_energy(&operating_point(2, 3, 0.01))
            .unwrap()
            .correction;
        let b = perturbative_ground_energy(&operating_point(2, 3, 0.02))
            .unwrap()
            .correction;
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!(perturbative_ground_energy(&operating_point(2, 3, 0.2)).is_err());
    }

    #[test]
    fn virtual_states_respect_truncation() {
        let p = operating_point(2, 1, 0.05);
        assert_eq!(perturbative_ground_energy(&p).unwrap().virtual_states, 1);
        let p = operating_point(2, 2, 0.05);
        assert_eq!(perturbative_ground_energy(&p).unwrap().virtual_states, 3);
    }

    #[test]
    fn scaling_ratio_examples() {
        let p = operating_point(3, 2, 0.1);
        let r = scaling_ratios(&p).unwrap();
        assert!((r.lambda - 0.1).abs() < 1e-14);
        assert!((r.quad_f1 - 0.01).abs() < 1e-14);
        // x_zpf/d = 1e-6 at λ = 0.1.
        let q = SystemParams::new(1.0, 1.0, PI, 3, 2)
            .unwrap()
            .with_omega_pl(1e5);
        let x_zpf = 1e-6 * PI;
        let q = SystemParams {
            mass: 1.0 / (2.0 * x_zpf * x_zpf),
            ..q
        };
        let r = scaling_ratios(&q).unwrap();
        assert!((r.lambda - 0.1).abs() < 1e-9);
        assert!((r.quad_f0 - 1e-7).abs() < 1e-16);
        assert!(r.quad_f0 < r.quad_f1);
        // Ω → Ω/10 at fixed x_zpf.
        let slower = SystemParams {
            omega: 0.1,
            mass: q.mass * 10.0,
            ..q
        };
        assert!((slower.x_zpf() - q.x_zpf()).abs() < 1e-20);
        assert!((scaling_ratios(&slower).unwrap().lambda / r.lambda - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ambiguous_branch_is_reported() {
        let r = SpectrumResult::<f64> {
            flags: ModelFlags::FREE,
            eigenvalues: vec![0.0, 1.0, 1.1],
            ground_state: vec![],
            mode_populations: vec![],
            mirror_population: 0.0,
            mechanical_gap: None,
            branch_weights: vec![(1, 1.0, 0.7), (2, 1.1, 0.699)],
            lambda: None,
            ratio_quad_f0: None,
            ratio_quad_f1: None,
            dimension: 3,
            solver: SolverKind::Dense,
            max_residual: 0.0,
            iterations: 0,
        };
        assert!(matches!(
            mechanical_gap(&r),
            Err(Error::AmbiguousBranch { .. })
        ));
    }

    #[test]
    fn dense_and_lanczos_agree_on_coupled_model() {
        let p = operating_point(3, 2, 0.05).with_mirror_max(3);
        let h = build_full_hamiltonian(&p, ModelFlags::FULL, DEFAULT_DIMENSION_GUARD).unwrap();
        let dense = diagonalize(&h.operator, 6, &SolverOptions::default()).unwrap();
        let lanczos = diagonalize(
            &h.operator,
            6,
            &SolverOptions {
                kind: SolverKind::Lanczos,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        assert_eq!(dense.solver, SolverKind::Dense);
        for (a, b) in dense.values.iter().zip(&lanczos.values) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn single_mode_f1_only_shifts_nothing() {
        let p = operating_point(1, 3, 0.05);
        let a = spectrum(&p, ModelFlags::LINEAR, &options()).unwrap();
        let b = spectrum(&p, ModelFlags::LINEAR.with_f1(true), &options()).unwrap();
        assert!((a.ground_energy() - b.ground_energy()).abs() < 1e-14);
    }
}
