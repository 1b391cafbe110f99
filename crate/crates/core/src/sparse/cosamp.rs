//! Compressive sampling matching pursuit.
//!
//! Each iteration correlates the residual with the columns of `B`, merges the
//! `2s` strongest columns with the current support, solves least squares on
//! the merged set, prunes to the `s` largest coefficients and recomputes the
//! residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::{dot, norm, SensingMatrix};
use crate::types::{RealVector, Role};

use super::top_indices;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosampOptions {
    pub max_iters: usize,
    /// Stop once `||residual|| <= tol * ||z_hat||`.
    pub tol: f64,
}

impl Default for CosampOptions {
    fn default() -> Self {
        CosampOptions {
            max_iters: 50,
            tol: 1e-6,
        }
    }
}

/// Iterate of the pursuit.
#[derive(Debug, Clone)]
pub struct CosampState {
    pub estimate: Vec<f64>,
    pub support: Vec<usize>,
    pub residual: Vec<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CosampDiagnostics {
    /// Residual norm after each iteration.
    pub residual_norms: Vec<f64>,
    pub converged: bool,
    /// Inner solves that fell back to the damped system.
    pub regularized_solves: usize,
}

impl CosampDiagnostics {
    pub fn iterations(&self) -> usize {
        self.residual_norms.len()
    }

    /// Whether residual norms never grew after the first iteration
    /// (relative slack `rel_slack`).
    pub fn residual_non_increasing(&self, rel_slack: f64) -> bool {
        self.residual_norms
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + rel_slack) + f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct CosampResult {
    pub x_hat: RealVector,
    pub state: CosampState,
    pub diagnostics: CosampDiagnostics,
}

/// Solution of `min ||z - B_S c||` over the columns in `support`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    pub regularized: bool,
}

const LS_REL_TOL: f64 = 1e-13;
const DAMPING: f64 = 1e-8;

fn scatter(support: &[usize], c: &[f64], n: usize) -> Vec<f64> {
    let mut full = vec![0.0; n];
    for (&j, &v) in support.iter().zip(c) {
        full[j] += v;
    }
    full
}

/// Conjugate gradients on `(B_S^T B_S + damping I) c = B_S^T z`, matrix-free.
fn cgls(
    b: &SensingMatrix,
    support: &[usize],
    z: &[f64],
    damping: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize, bool)> {
    let n = b.cols();
    let gather = |full: Vec<f64>| support.iter().map(|&j| full[j]).collect::<Vec<f64>>();
    let mut c = vec![0.0; support.len()];
    let mut r = z.to_vec();
    let mut s = gather(b.apply_adjoint(&r)?);
    let s0 = norm(&s);
    if s0 == 0.0 {
        return Ok((c, 0, true));
    }
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    for it in 1..=max_iters {
        let q = b.apply(&scatter(support, &p, n))?;
        let denom = dot(&q, &q) + damping * dot(&p, &p);
        if denom <= 0.0 {
            return Ok((c, it, false));
        }
        let alpha = gamma / denom;
        for (ci, pi) in c.iter_mut().zip(&p) {
            *ci += alpha * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = gather(b.apply_adjoint(&r)?);
        for (si, ci) in s.iter_mut().zip(&c) {
            *si -= damping * ci;
        }
        let gamma_new = dot(&s, &s);
        if gamma_new.sqrt() <= LS_REL_TOL * s0 {
            return Ok((c, it, true));
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    Ok((c, max_iters, false))
}

/// Least squares restricted to `support`, falling back to a lightly damped
/// solve if plain conjugate gradients do not converge.
pub fn least_squares_on_support(
    b: &SensingMatrix,
    support: &[usize],
    z_hat: &[f64],
) -> Result<LeastSquares> {
    if z_hat.len() != b.rows() {
        return Err(Error::shape(format!(
            "z_hat has length {}, B has {} rows",
            z_hat.len(),
            b.rows()
        )));
    }
    if let Some(&j) = support.iter().find(|&&j| j >= b.cols()) {
        return Err(Error::Index {
            position: j,
            len: b.cols(),
        });
    }
    let max_iters = (2 * support.len() + 20).min(1000);
    let (coeffs, iterations, converged) = cgls(b, support, z_hat, 0.0, max_iters)?;
    if converged {
        return Ok(LeastSquares {
            coeffs,
            iterations,
            regularized: false,
        });
    }
    let (coeffs, more, _) = cgls(b, support, z_hat, DAMPING, max_iters)?;
    Ok(LeastSquares {
        coeffs,
        iterations: iterations + more,
        regularized: true,
    })
}

/// Recovers an `s`-sparse `x` with `B x ~ z_hat`.
pub fn cosamp(
    z_hat: &[f64],
    b: &SensingMatrix,
    s: usize,
    options: CosampOptions,
) -> Result<CosampResult> {
    let (q, n) = (b.rows(), b.cols());
    if s == 0 || s > q || q > n {
        return Err(Error::shape(format!(
            "need 1 <= s <= q <= n, got s = {s}, q = {q}, n = {n}"
        )));
    }
    if z_hat.len() != q {
        return Err(Error::shape(format!(
            "z_hat has length {}, B has {q} rows",
            z_hat.len()
        )));
    }
    let target = options.tol * norm(z_hat);
    let mut state = CosampState {
        estimate: vec![0.0; n],
        support: Vec::new(),
        residual: z_hat.to_vec(),
        iteration: 0,
    };
    let mut diagnostics = CosampDiagnostics::default();

    while state.iteration < options.max_iters {
        state.iteration += 1;
        let proxy = b.apply_adjoint(&state.residual)?;
        let mut merged = top_indices(&proxy, (2 * s).min(n));
        merged.extend(state.support.iter().copied());
        merged.sort_unstable();
        merged.dedup();

        let ls = least_squares_on_support(b, &merged, z_hat)?;
        if ls.regularized {
            diagnostics.regularized_solves += 1;
        }
        let keep = top_indices(&ls.coeffs, s);
        let mut support: Vec<usize> = keep.iter().map(|&i| merged[i]).collect();
        support.sort_unstable();
        let mut estimate = vec![0.0; n];
        for &i in &keep {
            estimate[merged[i]] = ls.coeffs[i];
        }
        let bx = b.apply(&estimate)?;
        let residual: Vec<f64> = z_hat.iter().zip(&bx).map(|(z, v)| z - v).collect();
        let rnorm = norm(&residual);

        let stalled = support == state.support
            && diagnostics
                .residual_norms
                .last()
                .is_some_and(|&prev| rnorm >= prev);
        diagnostics.residual_norms.push(rnorm);
        state.estimate = estimate;
        state.support = support;
        state.residual = residual;

        if rnorm <= target {
            diagnostics.converged = true;
            break;
        }
        // an unchanged support reproduces the same iterate from here on
        if stalled {
            break;
        }
    }
    Ok(CosampResult {
        x_hat: RealVector::from_trusted(state.estimate.clone(), Role::XHat),
        state,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_uniform, stream_rng};
    use crate::sensing::SensingKind;
    use crate::types::{MeasurementMode, ModelConfig};
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn matrix(n: usize, q: usize, seed: u64, kind: SensingKind) -> SensingMatrix {
        let c = ModelConfig::new(n, q, 1, 1, 1.0, 0, seed, MeasurementMode::Adaptive).unwrap();
        SensingMatrix::build(&c, kind).unwrap()
    }

    fn sparse_signal(n: usize, s: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 1);
        let support = rand::seq::index::sample(&mut rng, n, s);
        let mut x = vec![0.0; n];
        for j in support {
            let mag: f64 = rng.random_range(0.5..2.0);
            x[j] = if rng.random::<bool>() { mag } else { -mag };
        }
        x
    }

    fn dense_oracle(b: &SensingMatrix, support: &[usize], z: &[f64]) -> Vec<f64> {
        let cols: Vec<Vec<f64>> = support.iter().map(|&j| b.column(j).unwrap()).collect();
        let a = DMatrix::from_fn(b.rows(), support.len(), |i, j| cols[j][i]);
        let qr = a.clone().qr();
        let rhs = qr.q().transpose() * DVector::from_column_slice(z);
        let c = qr
            .r()
            .solve_upper_triangular(&rhs)
            .expect("full column rank");
        c.iter().copied().collect()
    }

    #[test]
    fn single_column_projection() {
        let b = matrix(64, 30, 1, SensingKind::DenseGaussian);
        let z: Vec<f64> = (0..30)
            .map(|i| seeded_uniform(2, i, -1.0, 1.0).unwrap())
            .collect();
        let col = b.column(17).unwrap();
        let ls = least_squares_on_support(&b, &[17], &z).unwrap();
        let expect = dot(&col, &z) / dot(&col, &col);
        assert!((ls.coeffs[0] - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn orthonormal_columns_project() {
        // subsampled with q = n is orthogonal: columns orthonormal
        let b = matrix(32, 32, 3, SensingKind::SubsampledUnitaryTimesSigns);
        let z: Vec<f64> = (0..32)
            .map(|i| seeded_uniform(4, i, -1.0, 1.0).unwrap())
            .collect();
        let support = [1, 5, 9, 30];
        let ls = least_squares_on_support(&b, &support, &z).unwrap();
        let bt = b.apply_adjoint(&z).unwrap();
        for (c, &j) in ls.coeffs.iter().zip(&support) {
            assert!((c - bt[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_qr_oracle() {
        for kind in [
            SensingKind::DenseGaussian,
            SensingKind::SubsampledUnitaryTimesSigns,
        ] {
            let b = matrix(200, 60, 5, kind);
            let support: Vec<usize> = (0..10).map(|i| 3 + 19 * i).collect();
            let z: Vec<f64> = (0..60)
                .map(|i| seeded_uniform(6, i, -1.0, 1.0).unwrap())
                .collect();
            let ls = least_squares_on_support(&b, &support, &z).unwrap();
            assert!(!ls.regularized);
            let oracle = dense_oracle(&b, &support, &z);
            for (a, e) in ls.coeffs.iter().zip(&oracle) {
                assert!(
                    (a - e).abs() <= 1e-8 * e.abs().max(1.0),
                    "{kind:?}: {a} vs {e}"
                );
            }
            // residual orthogonal to the selected columns
            let r: Vec<f64> = {
                let fit = b.apply(&scatter(&support, &ls.coeffs, 200)).unwrap();
                z.iter().zip(&fit).map(|(a, f)| a - f).collect()
            };
            for &j in &support {
                let col = b.column(j).unwrap();
                assert!(dot(&col, &r).abs() <= 1e-8 * norm(&col) * norm(&z));
            }
        }
    }

    #[test]
    fn duplicated_columns_still_fit() {
        let b = SensingMatrix::identity(4);
        // B_S is singular
        let ls = least_squares_on_support(&b, &[1, 1], &[0.0, 2.0, 0.0, 0.0]).unwrap();
        let fit = ls.coeffs[0] + ls.coeffs[1];
        assert!((fit - 2.0).abs() < 1e-6);
    }

    #[test]
    fn identity_full_support() {
        let b = SensingMatrix::identity(6);
        let z = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        let out = cosamp(&z, &b, 6, CosampOptions::default()).unwrap();
        assert_eq!(out.x_hat.values(), &z);
    }

    #[test]
    fn zero_input() {
        let b = matrix(128, 40, 7, SensingKind::SubsampledUnitaryTimesSigns);
        let out = cosamp(&[0.0; 40], &b, 5, CosampOptions::default()).unwrap();
        assert!(out.x_hat.iter().all(|v| *v == 0.0));
        assert_eq!(out.diagnostics.iterations(), 1);
        assert!(out.diagnostics.converged);
    }

    #[test]
    fn rejects_bad_sparsity() {
        let b = matrix(16, 8, 1, SensingKind::DenseGaussian);
        assert!(cosamp(&[0.0; 8], &b, 0, CosampOptions::default()).is_err());
        assert!(cosamp(&[0.0; 8], &b, 9, CosampOptions::default()).is_err());
        assert!(cosamp(&[0.0; 7], &b, 2, CosampOptions::default()).is_err());
    }

    #[test]
    fn exact_recovery_small() {
        let (n, q, s) = (256, 100, 8);
        for seed in 0..10 {
            let b = matrix(n, q, seed, SensingKind::SubsampledUnitaryTimesSigns);
            let x = sparse_signal(n, s, seed + 50);
            let z = b.apply(&x).unwrap();
            let out = cosamp(&z, &b, s, CosampOptions::default()).unwrap();
            let err = norm(
                &out.x_hat
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            ) / norm(&x);
            assert!(err <= 1e-8, "seed {seed}: {err}");
            assert!(out.diagnostics.residual_non_increasing(1e-9));
            assert!(out.x_hat.iter().filter(|v| **v != 0.0).count() <= s);
            // residual bookkeeping
            let bx = b.apply(&out.state.estimate).unwrap();
            for ((r, zz), v) in out.state.residual.iter().zip(&z).zip(&bx) {
                assert!((r - (zz - v)).abs() < 1e-10);
            }
        }
    }
}
