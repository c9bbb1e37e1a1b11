//! Dense symmetric eigendecomposition (cyclic Jacobi) and the clipped
//! positive-semidefinite square root used to drive correlated Gaussian
//! increments. Matrices here are tiny (one row per distinct particle), so
//! a dependency-free Jacobi sweep is plenty.

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix (row-major, n x n).
/// `vectors` is row-major with eigenvector `k` in column `k`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub n: usize,
}

/// Cyclic Jacobi iteration. Fails only if the sweep does not converge,
/// which for symmetric input signals non-finite entries.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<SymmetricEigen> {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    if n == 1 {
        return Ok(SymmetricEigen {
            values: vec![a[0]],
            vectors: v,
            n,
        });
    }

    let scale: f64 = matrix
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-300);
    let tol = 1e-14 * scale;

    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[p * n + q].abs());
            }
        }
        if off <= tol {
            let values = (0..n).map(|i| a[i * n + i]).collect();
            return Ok(SymmetricEigen {
                values,
                vectors: v,
                n,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // rows/columns p and q of A
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                // eigenvector accumulation
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::numerical(
        "jacobi eigendecomposition did not converge",
        Some(matrix.to_vec()),
    ))
}

/// Symmetric PSD square root with eigenvalue clipping.
///
/// Eigenvalues in `[-clip_tol, 0)` are treated as roundoff and clipped to
/// zero; an eigenvalue below `-clip_tol` means the input is genuinely not
/// PSD and produces a numerical error carrying the matrix. Returns the
/// square root (row-major) and the most negative raw eigenvalue seen.
pub fn psd_sqrt(matrix: &[f64], n: usize, clip_tol: f64) -> Result<(Vec<f64>, f64)> {
    assert_eq!(matrix.len(), n * n);
    match n {
        1 => {
            let a = matrix[0];
            if a < -clip_tol {
                return Err(Error::numerical(
                    format!("negative variance {a} below clip tolerance"),
                    Some(matrix.to_vec()),
                ));
            }
            Ok((vec![a.max(0.0).sqrt()], a.min(0.0)))
        }
        2 => {
            // closed-form eigensystem of [[a, b], [b, c]]
            let (a, b, c) = (matrix[0], matrix[1], matrix[3]);
            let half_tr = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let l1 = half_tr + disc;
            let l2 = half_tr - disc;
            let min_eig = l2.min(l1).min(0.0);
            if l2 < -clip_tol || l1 < -clip_tol {
                return Err(Error::numerical(
                    format!("eigenvalue {} below clip tolerance", l2.min(l1)),
                    Some(matrix.to_vec()),
                ));
            }
            let (s1, s2) = (l1.max(0.0).sqrt(), l2.max(0.0).sqrt());
            // eigenvector for l1
            let (ux, uy) = if b.abs() > 1e-300 {
                let norm = ((l1 - c) * (l1 - c) + b * b).sqrt();
                ((l1 - c) / norm, b / norm)
            } else if a >= c {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            };
            // S = s1 u u^T + s2 w w^T with w = (-uy, ux)
            let m = vec![
                s1 * ux * ux + s2 * uy * uy,
                (s1 - s2) * ux * uy,
                (s1 - s2) * ux * uy,
                s1 * uy * uy + s2 * ux * ux,
            ];
            Ok((m, min_eig))
        }
        _ => {
            let eig = symmetric_eigen(matrix, n)?;
            let mut min_eig = 0.0f64;
            let mut roots = Vec::with_capacity(n);
            for &l in &eig.values {
                min_eig = min_eig.min(l);
                if l < -clip_tol {
                    return Err(Error::numerical(
                        format!("eigenvalue {l} below clip tolerance {clip_tol}"),
                        Some(matrix.to_vec()),
                    ));
                }
                roots.push(l.max(0.0).sqrt());
            }
            let mut s = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let mut acc = 0.0;
                    for (k, &root) in roots.iter().enumerate() {
                        acc += eig.vectors[i * n + k] * root * eig.vectors[j * n + k];
                    }
                    s[i * n + j] = acc;
                    s[j * n + i] = acc;
                }
            }
            Ok((s, min_eig))
        }
    }
}
