//! Lowest eigenpairs of a Hermitian [`FieldOperator`].
//!
//! Small matrices go to a dense symmetric eigensolver; larger ones to a
//! Lanczos iteration with full reorthogonalization, locking of converged
//! Ritz pairs and a final restart that checks nothing below the locked set
//! was missed.

use nalgebra::{DMatrix, RealField, SymmetricEigen};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fock_space::FieldOperator;
use crate::scalar::{Real, C};

/// Scalars usable by the eigensolvers.
pub trait Spectral: Real + RealField {}

impl<T: Real + RealField> Spectral for T {}

/// Dimension below which the dense solver is used.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Dense below [`DENSE_LIMIT`], Lanczos above.
    Auto,
    Dense,
    Lanczos,
}

impl SolverKind {
    pub fn resolve(self, dim: usize) -> SolverKind {
        match self {
            SolverKind::Auto if dim < DENSE_LIMIT => SolverKind::Dense,
            SolverKind::Auto => SolverKind::Lanczos,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Auto => "auto",
            SolverKind::Dense => "dense",
            SolverKind::Lanczos => "lanczos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Residual bound `‖Hv − θv‖` relative to `max(1, max|H_ij|)`.
    pub tolerance: f64,
    /// Largest Krylov basis per Lanczos run.
    pub krylov_dim: usize,
    /// Lanczos runs allowed without locking a new pair.
    pub max_restarts: usize,
    /// Seed of the Lanczos start vectors.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::Auto,
            tolerance: 1e-9,
            krylov_dim: 120,
            max_restarts: 50,
            seed: 0x5eed,
        }
    }
}

/// Lowest eigenpairs in ascending order.
#[derive(Debug, Clone)]
pub struct Eigensystem<T: Real> {
    pub values: Vec<T>,
    /// Unit eigenvectors, one per value.
    pub vectors: Vec<Vec<C<T>>>,
    pub solver: SolverKind,
    /// Largest `‖Hv − θv‖` over the returned pairs.
    pub max_residual: T,
    /// Matrix-vector products (Lanczos) or zero (dense).
    pub iterations: usize,
}

/// The `n_eigen` lowest eigenpairs of a Hermitian matrix.
pub fn diagonalize<T: Spectral>(
    h: &FieldOperator<T>,
    n_eigen: usize,
    options: &SolverOptions,
) -> Result<Eigensystem<T>> {
    let dim = h.dim();
    if dim == 0 || n_eigen == 0 {
        return domain("need a non-empty matrix and at least one eigenpair");
    }
    let scale = Float::max(h.max_abs(), T::one());
    let asym = h.asymmetry_norm();
    if asym > T::lit(1e-10) * scale {
        return domain(format!("matrix is not Hermitian (asymmetry {asym:e})"));
    }
    let n = n_eigen.min(dim);
    let solver = options.kind.resolve(dim);
    let (values, vectors, iterations) = match solver {
        SolverKind::Dense => {
            let (v, x) = dense(h, n);
            (v, x, 0)
        }
        _ => lanczos(h, n, options, scale)?,
    };
    let max_residual = values
        .iter()
        .zip(&vectors)
        .map(|(&theta, v)| residual(h, theta, v))
        .fold(T::zero(), Float::max);
    Ok(Eigensystem {
        values,
        vectors,
        solver,
        max_residual,
        iterations,
    })
}

fn residual<T: Spectral>(h: &FieldOperator<T>, theta: T, v: &[C<T>]) -> T {
    let hv = h.apply(v);
    norm(
        &hv.iter()
            .zip(v)
            .map(|(a, b)| *a - *b * theta)
            .collect::<Vec<_>>(),
    )
}

fn dense<T: Spectral>(h: &FieldOperator<T>, n: usize) -> (Vec<T>, Vec<Vec<C<T>>>) {
    let dim = h.dim();
    let real = h.entries().all(|(_, _, v)| v.im == T::zero());
    let (values, columns): (Vec<T>, Vec<Vec<C<T>>>) = if real {
        let mut m = DMatrix::<T>::zeros(dim, dim);
        for (r, c, v) in h.entries() {
            m[(r, c)] = v.re;
        }
        let eig = SymmetricEigen::new(m);
        let cols = (0..dim)
            .map(|i| {
                eig.eigenvectors
                    .column(i)
                    .iter()
                    .map(|&x| C::new(x, T::zero()))
                    .collect()
            })
            .collect();
        (eig.eigenvalues.iter().copied().collect(), cols)
    } else {
        let mut m = DMatrix::<C<T>>::zeros(dim, dim);
        for (r, c, v) in h.entries() {
            m[(r, c)] = v;
        }
        let eig = SymmetricEigen::new(m);
        let cols = (0..dim)
            .map(|i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        (eig.eigenvalues.iter().copied().collect(), cols)
    };
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("finite eigenvalues")
    });
    order.truncate(n);
    let vals = order.iter().map(|&i| values[i]).collect();
    let vecs = order.iter().map(|&i| columns[i].clone()).collect();
    (vals, vecs)
}

fn dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter()
        .zip(b)
        .fold(C::new(T::zero(), T::zero()), |acc, (x, y)| {
            acc + x.conj() * y
        })
}

fn norm<T: Real>(a: &[C<T>]) -> T {
    Float::sqrt(a.iter().map(|x| x.norm_sqr()).sum::<T>())
}

/// Removes the components along `against`, twice for stability.
fn orthogonalize<'a, T: Real>(
    w: &mut [C<T>],
    against: impl Iterator<Item = &'a Vec<C<T>>> + Clone,
) {
    for _ in 0..2 {
        for q in against.clone() {
            let c = dot(q, w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= *qi * c;
            }
        }
    }
}

fn random_vector<T: Real>(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C<T>> {
    (0..dim)
        .map(|_| {
            C::new(
                T::lit(rng.gen_range(-1.0..1.0)),
                T::lit(rng.gen_range(-1.0..1.0)),
            )
        })
        .collect()
}

struct Ritz<T: Real> {
    value: T,
    vector: Vec<C<T>>,
    residual: T,
}

struct KrylovRun<T: Real> {
    ritz: Vec<Ritz<T>>,
    steps: usize,
}

/// One Lanczos run in the complement of `locked`, stopping once the lowest
/// `want` Ritz pairs meet `tol` or the basis reaches `max_dim`.
fn krylov<T: Spectral>(
    h: &FieldOperator<T>,
    mut start: Vec<C<T>>,
    locked: &[Vec<C<T>>],
    max_dim: usize,
    want: usize,
    tol: T,
) -> Result<KrylovRun<T>> {
    orthogonalize(&mut start, locked.iter());
    let n0 = norm(&start);
    if n0 <= T::epsilon() {
        return Err(Error::Contract(
            "start vector lies in the locked subspace".into(),
        ));
    }
    let mut basis = vec![start.iter().map(|x| *x / n0).collect::<Vec<_>>()];
    let mut alphas: Vec<T> = Vec::new();
    let mut betas: Vec<T> = Vec::new();
    let mut steps = 0;
    loop {
        let j = basis.len() - 1;
        let mut w = h.apply(&basis[j]);
        steps += 1;
        alphas.push(dot(&basis[j], &w).re);
        orthogonalize(&mut w, locked.iter().chain(basis.iter()));
        let beta = norm(&w);
        let exhausted =
            beta <= T::epsilon() * T::lit(64.0) * Float::max(T::one(), Float::abs(alphas[j]));
        let full = basis.len() >= max_dim;
        let check = exhausted || full || basis.len() % 5 == 0;
        if check {
            let ritz = ritz_pairs(&alphas, &betas, beta, &basis, want);
            let done = ritz.iter().take(want).all(|r| r.residual <= tol)
                && ritz.len() >= want.min(basis.len());
            if done || exhausted || full {
                return Ok(KrylovRun { ritz, steps });
            }
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| *x / beta).collect());
    }
}

/// Ritz pairs of the tridiagonal projection, lowest first, with the usual
/// residual estimate `β |s_last|`.
fn ritz_pairs<T: Spectral>(
    alphas: &[T],
    betas: &[T],
    beta: T,
    basis: &[Vec<C<T>>],
    want: usize,
) -> Vec<Ritz<T>> {
    let m = alphas.len();
    let mut t = DMatrix::<T>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite Ritz values")
    });
    order
        .into_iter()
        .take((want + 2).min(m))
        .map(|i| {
            let s = eig.eigenvectors.column(i);
            let dim = basis[0].len();
            let mut vector = vec![C::new(T::zero(), T::zero()); dim];
            for (q, &c) in basis.iter().zip(s.iter()) {
                for (v, qi) in vector.iter_mut().zip(q) {
                    *v += *qi * c;
                }
            }
            let nv = norm(&vector);
            vector.iter_mut().for_each(|v| *v /= nv);
            Ritz {
                value: eig.eigenvalues[i],
                vector,
                residual: beta * Float::abs(s[m - 1]),
            }
        })
        .collect()
}

/// Eigenvalues, eigenvectors and restart count.
type LanczosOutput<T> = (Vec<T>, Vec<Vec<C<T>>>, usize);

fn lanczos<T: Spectral>(
    h: &FieldOperator<T>,
    n: usize,
    options: &SolverOptions,
    scale: T,
) -> Result<LanczosOutput<T>> {
    let dim = h.dim();
    let tol = T::lit(options.tolerance) * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut locked: Vec<(T, Vec<C<T>>)> = Vec::new();
    let mut iterations = 0;
    let mut carry: Option<Vec<C<T>>> = None;
    let mut stalls = 0;
    let mut verified = false;
    while !verified {
        while locked.len() < n {
            let start = carry.take().unwrap_or_else(|| random_vector(dim, &mut rng));
            let vectors: Vec<Vec<C<T>>> = locked.iter().map(|(_, v)| v.clone()).collect();
            let room = dim - locked.len();
            let need = n - locked.len();
            let run = krylov(
                h,
                start,
                &vectors,
                options.krylov_dim.min(room).max(1),
                need,
                tol,
            )?;
            iterations += run.steps;
            let mut fresh = 0;
            let mut rest = run.ritz.into_iter();
            for r in rest.by_ref() {
                if r.residual <= tol && fresh < need {
                    locked.push((r.value, r.vector));
                    fresh += 1;
                } else {
                    carry = Some(r.vector);
                    break;
                }
            }
            if fresh == 0 {
                stalls += 1;
                if stalls > options.max_restarts {
                    let worst = carry.as_ref().map_or(f64::NAN, |v| {
                        let theta = dot(v, &h.apply(v)).re;
                        residual(h, theta, v).to_f64_lossy()
                    });
                    return Err(Error::NonConvergence {
                        iterations,
                        residual: worst,
                    });
                }
            } else {
                stalls = 0;
            }
            if let Some(c) = carry.as_mut() {
                // A small random admixture reaches directions the carried
                // Ritz vector lacks, such as degenerate partners.
                let noise: Vec<C<T>> = random_vector(dim, &mut rng);
                let nc = norm(c);
                for (ci, ni) in c.iter_mut().zip(noise) {
                    *ci += ni * (nc * T::lit(1e-3) / Float::sqrt(T::from_count(dim)));
                }
            }
        }
        locked.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite eigenvalues"));
        locked.truncate(n);
        verified = true;
        if locked.len() < dim {
            let vectors: Vec<Vec<C<T>>> = locked.iter().map(|(_, v)| v.clone()).collect();
            let room = dim - locked.len();
            let run = krylov(
                h,
                random_vector(dim, &mut rng),
                &vectors,
                options.krylov_dim.min(room).max(1),
                1,
                tol,
            )?;
            iterations += run.steps;
            let top = locked.last().map(|l| l.0).unwrap_or_else(T::infinity);
            if let Some(low) = run.ritz.into_iter().next() {
                if low.value < top - tol {
                    stalls += 1;
                    if stalls > options.max_restarts {
                        return Err(Error::NonConvergence {
                            iterations,
                            residual: low.residual.to_f64_lossy(),
                        });
                    }
                    // Something was missed below the locked set: search again
                    // with one slot freed.
                    locked.pop();
                    carry = Some(low.vector);
                    verified = false;
                }
            }
        }
    }
    let (values, vectors) = locked.into_iter().unzip();
    Ok((values, vectors, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock_space::{number, FockBasis, FockLayout, Slot};
    use proptest::prelude::*;

    fn real_matrix(rows: &[&[f64]]) -> FieldOperator<f64> {
        let dim = rows.len();
        FieldOperator::from_triplets(
            dim,
            rows.iter().enumerate().flat_map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .map(move |(c, &v)| (r, c, C::new(v, 0.0)))
            }),
        )
    }

    fn lanczos_opts() -> SolverOptions {
        SolverOptions {
            kind: SolverKind::Lanczos,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn two_level_closed_form() {
        let (g, delta) = (0.3, 1.7);
        let h = real_matrix(&[&[0.0, g], &[g, delta]]);
        let root = (delta * delta / 4.0 + g * g).sqrt();
        for kind in [SolverKind::Dense, SolverKind::Lanczos] {
            let opts = SolverOptions {
                kind,
                ..SolverOptions::default()
            };
            let e = diagonalize(&h, 2, &opts).unwrap();
            assert!((e.values[0] - (delta / 2.0 - root)).abs() < 1e-14);
            assert!((e.values[1] - (delta / 2.0 + root)).abs() < 1e-14);
        }
    }

    #[test]
    fn complex_hermitian_two_level() {
        let g = C::new(0.2, -0.5);
        let h = FieldOperator::from_triplets(
            2,
            [(0, 1, g), (1, 0, g.conj()), (1, 1, C::new(1.0, 0.0))],
        );
        let e = diagonalize(&h, 2, &SolverOptions::default()).unwrap();
        let root = (0.25 + g.norm_sqr()).sqrt();
        assert!((e.values[0] - (0.5 - root)).abs() < 1e-14);
        assert!(e.max_residual < 1e-13);
    }

    #[test]
    fn oscillator_gaps_are_uniform() {
        let basis = FockBasis::new(FockLayout::field(1, 10)).unwrap();
        let omega = 1.3;
        let n = number::<f64>(&basis, Slot::Mode(1)).unwrap();
        let h = &n.scale(omega) + &FieldOperator::identity(basis.dim()).scale(omega / 2.0);
        let e = diagonalize(&h, 11, &SolverOptions::default()).unwrap();
        for w in e.values.windows(2) {
            assert!((w[1] - w[0] - omega).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let h = real_matrix(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(diagonalize(&h, 1, &SolverOptions::default()).is_err());
    }

    #[test]
    fn lanczos_resolves_degenerate_levels() {
        let values: Vec<f64> = (0..200).map(|i| (i / 3) as f64).collect();
        let h = FieldOperator::from_diagonal(values.iter().copied());
        let e = diagonalize(&h, 7, &lanczos_opts()).unwrap();
        assert_eq!(e.values.len(), 7);
        for (got, want) in e.values.iter().zip([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-10, "{:?}", e.values);
        }
    }

    #[test]
    fn lanczos_reports_non_convergence() {
        let values: Vec<f64> = (0..400).map(|i| (i as f64).sqrt()).collect();
        let h = FieldOperator::from_diagonal(values);
        let opts = SolverOptions {
            kind: SolverKind::Lanczos,
            krylov_dim: 3,
            max_restarts: 0,
            tolerance: 1e-15,
            ..SolverOptions::default()
        };
        assert!(matches!(
            diagonalize(&h, 5, &opts),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn lanczos_is_seed_deterministic() {
        let dim = 60;
        let h = FieldOperator::from_triplets(
            dim,
            (0..dim).flat_map(|i| {
                let mut v = vec![(i, i, C::new(i as f64 * 0.1, 0.0))];
                if i + 1 < dim {
                    v.push((i, i + 1, C::new(0.05, 0.0)));
                    v.push((i + 1, i, C::new(0.05, 0.0)));
                }
                v
            }),
        );
        let a = diagonalize(&h, 4, &lanczos_opts()).unwrap();
        let b = diagonalize(&h, 4, &lanczos_opts()).unwrap();
        assert_eq!(a.values, b.values);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dense_and_lanczos_agree(entries in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 30 * 30)) {
            let dim = 30;
            let raw = FieldOperator::from_triplets(
                dim,
                entries.iter().enumerate().map(|(i, &(a, b))| (i / dim, i % dim, C::new(a, b))),
            );
            let h = raw.hermitian_part();
            let d = diagonalize(&h, 5, &SolverOptions { kind: SolverKind::Dense, ..SolverOptions::default() }).unwrap();
            let l = diagonalize(&h, 5, &lanczos_opts()).unwrap();
            for (x, y) in d.values.iter().zip(&l.values) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
            prop_assert!(d.values.windows(2).all(|w| w[0] <= w[1]));
            for v in &l.vectors {
                prop_assert!((norm(v) - 1.0).abs() <= 1e-12);
            }
        }
    }
}
