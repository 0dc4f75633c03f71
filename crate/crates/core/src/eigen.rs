//! Smallest eigenpairs of `A v = lambda M v` by blocked inverse iteration.
//!
//! Iteration runs on the shifted pencil `(A + M) v = (1 + lambda) M v`,
//! which is positive definite even with the Neumann kernel. `A + M` is
//! factored once by sparse Cholesky; each sweep applies the inverse to the
//! block, M-orthonormalizes it and performs a Rayleigh-Ritz step.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SolveError;
use crate::sparse::{dot, norm2, Cholesky, SparseSym};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Residual `|A v - lambda M v| / ((1 + lambda) |M v|)` at which a pair counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block columns beyond the requested count; 0 picks `max(count, 6)`.
    pub guard: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 400, guard: 0, seed: 0x51e7e }
    }
}

pub const MAX_EIGEN_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    /// M-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl Spectrum {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// Index and residual of the first unconverged pair.
    pub fn first_failure(&self) -> Option<(usize, f64)> {
        self.converged.iter().position(|c| !c).map(|i| (i, self.residuals[i]))
    }

    /// Points `1 / (1 + lambda)` of the resolvent spectrum.
    pub fn resolvent_points(&self) -> Vec<f64> {
        self.values.iter().map(|l| 1.0 / (1.0 + l)).collect()
    }
}

fn m_orthonormalize(mass: &SparseSym, block: &mut Vec<Vec<f64>>, rng: &mut ChaCha8Rng) {
    let n = mass.dim();
    let mut done: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    let mut done_m: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    for mut v in block.drain(..) {
        let scale0 = mass.quad_form(&v).max(0.0).sqrt();
        let mut fresh = 0;
        loop {
            for _ in 0..2 {
                for (u, mu) in done.iter().zip(&done_m) {
                    let c = dot(mu, &v);
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
                }
            }
            let mv = mass.apply(&v);
            let nrm = dot(&mv, &v).max(0.0).sqrt();
            if nrm > 1e-10 * scale0 && nrm > 0.0 && fresh < 8 {
                v.iter_mut().for_each(|a| *a /= nrm);
                done_m.push(mv.into_iter().map(|a| a / nrm).collect());
                break;
            }
            // the column collapsed onto the span; restart it randomly
            fresh += 1;
            v = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        }
        done.push(v);
    }
    *block = done;
}

/// `count` smallest eigenpairs of `(stiffness + jump, mass)`.
pub fn eigen_smallest(
    stiffness: &SparseSym,
    mass: &SparseSym,
    jump: Option<&SparseSym>,
    count: usize,
    opts: EigenOptions,
) -> Result<Spectrum, SolveError> {
    let n = stiffness.dim();
    if count == 0 || count > MAX_EIGEN_COUNT {
        return Err(SolveError::Dimension(format!("eigen count {count} outside 1..={MAX_EIGEN_COUNT}")));
    }
    if mass.dim() != n || jump.is_some_and(|j| j.dim() != n) {
        return Err(SolveError::Dimension("stiffness, mass and jump sizes differ".into()));
    }
    let a = match jump {
        Some(j) => stiffness.add(j, 1.0),
        None => stiffness.clone(),
    };
    let b = a.add(mass, 1.0);
    let guard = if opts.guard == 0 { count.max(6) } else { opts.guard };
    let p = (count + guard).min(n);
    if count > p {
        return Err(SolveError::Dimension(format!("eigen count {count} exceeds dimension {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..p)
        .map(|i| if i == 0 { vec![1.0; n] } else { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() })
        .collect();
    m_orthonormalize(mass, &mut x, &mut rng);
    let factor = Cholesky::new(&b)?;
    let mut theta = vec![1.0; p];
    let mut residuals = vec![f64::INFINITY; count];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut y: Vec<Vec<f64>> = x.iter().map(|xj| mass.apply(xj)).collect();
        factor.solve_columns(&mut y);
        m_orthonormalize(mass, &mut y, &mut rng);
        let by: Vec<Vec<f64>> = y.iter().map(|v| b.apply(v)).collect();
        let proj = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &by[j]) + dot(&y[j], &by[i])));
        let eig = SymmetricEigen::new(proj);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        x = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (k, yk) in y.iter().enumerate() {
                    let q = eig.eigenvectors[(k, c)];
                    v.iter_mut().zip(yk).for_each(|(a, b)| *a += q * b);
                }
                v
            })
            .collect();
        theta = order.iter().map(|&c| eig.eigenvalues[c]).collect();
        residuals = (0..count)
            .map(|i| {
                let bx = b.apply(&x[i]);
                let mx = mass.apply(&x[i]);
                let r: Vec<f64> = bx.iter().zip(&mx).map(|(u, v)| u - theta[i] * v).collect();
                norm2(&r) / (theta[i].abs() * norm2(&mx)).max(f64::MIN_POSITIVE)
            })
            .collect();
        if residuals.iter().all(|&r| r <= opts.tol) {
            break;
        }
    }
    x.truncate(count);
    Ok(Spectrum {
        values: theta[..count].iter().map(|t| (t - 1.0).max(0.0)).collect(),
        converged: residuals.iter().map(|&r| r <= opts.tol).collect(),
        residuals,
        vectors: x,
        iterations,
    })
}
