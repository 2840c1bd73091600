//! Eigendecompositions for small dense complex matrices.
//!
//! [`eig_general`] reduces to upper Hessenberg form with Householder
//! reflections and then runs single-shift complex QR (Wilkinson shifts,
//! Givens rotations) to a Schur form `A = Q T Q†`. Eigenvectors come from
//! back substitution on `T`. [`eig_hermitian`] is a cyclic complex Jacobi
//! solver, which keeps the eigenvectors orthonormal even for degenerate
//! spectra.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;

use super::ComplexMatrix;
use crate::{Error, Result};

/// Total shifted-QR iterations allowed before giving up.
pub const QR_ITERATION_CAP: usize = 10_000;

/// Eigenvector matrices with a larger 1-norm condition number are treated as
/// singular, i.e. the input is reported as not diagonalizable.
pub const MAX_EIGENVECTOR_CONDITION: f64 = 1e12;

/// Input must satisfy `max |A - A†| < HERMITIAN_INPUT_TOL` for [`eig_hermitian`].
pub const HERMITIAN_INPUT_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Eigenvalues with matching eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<Complex64>,
    /// Column `k` is the unit-norm eigenvector for `eigenvalues[k]`.
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// Largest `‖A v − λ v‖ / max(‖A‖_F, 1)` over all pairs.
    pub fn max_relative_residual(&self, a: &ComplexMatrix) -> f64 {
        let scale = a.frobenius_norm().max(1.0);
        (0..self.eigenvalues.len())
            .map(|k| {
                let v = self.eigenvectors.column(k);
                let av = a.apply(&v).expect("square input");
                av.iter()
                    .zip(&v)
                    .map(|(x, y)| (x - self.eigenvalues[k] * y).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
                    / scale
            })
            .fold(0.0, f64::max)
    }

    /// `V diag(λ) V⁻¹`.
    pub fn reconstruct(&self) -> Result<ComplexMatrix> {
        reconstruct_with(&self.eigenvectors, &self.eigenvalues)
    }
}

pub(crate) fn reconstruct_with(
    vectors: &ComplexMatrix,
    values: &[Complex64],
) -> Result<ComplexMatrix> {
    let inv = vectors.inverse()?;
    let scaled = ComplexMatrix::from_fn(vectors.rows(), vectors.cols(), |r, c| {
        vectors[(r, c)] * values[c]
    });
    scaled.matmul(&inv)
}

/// Eigendecomposition of a diagonalizable square matrix.
///
/// Eigenvalues are returned in descending order of real part (ties broken
/// by descending imaginary part).
pub fn eig_general(a: &ComplexMatrix) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let (t, q) = schur(a)?;
    let norm = t.frobenius_norm();
    let small = (f64::EPSILON * norm).max(f64::MIN_POSITIVE);

    // Eigenvectors of the triangular factor, then rotate back.
    let mut vectors = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut x = vec![ZERO; n];
        x[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let s: Complex64 = (i + 1..=k).map(|j| t[(i, j)] * x[j]).sum();
            let mut den = t[(i, i)] - lambda;
            if den.norm() < small {
                den = Complex64::new(small, 0.0);
            }
            x[i] = -s / den;
            // keep the growth in check for nearly defective blocks
            let big = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if big > 1e100 {
                for z in x.iter_mut() {
                    *z /= big;
                }
            }
        }
        let mut v = q.apply(&x)?;
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in v.iter_mut() {
            *z /= vn;
        }
        vectors.set_column(k, &v);
    }

    let condition = match vectors.inverse() {
        Ok(inv) => vectors.norm_one() * inv.norm_one(),
        Err(_) => f64::INFINITY,
    };
    if !(condition < MAX_EIGENVECTOR_CONDITION) {
        return Err(Error::NotDiagonalizable { condition });
    }

    let values = t.diagonal();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .re
            .total_cmp(&values[i].re)
            .then(values[j].im.total_cmp(&values[i].im))
    });
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Complex Schur decomposition `A = Q T Q†` with `T` upper triangular.
pub fn schur(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let (mut h, mut q) = hessenberg(a);
    if n == 1 {
        return Ok((h, q));
    }

    let mut hi = n - 1;
    let mut iterations = 0;
    let mut since_deflation = 0;
    while hi > 0 {
        // Find the start of the active unreduced block.
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let threshold = f64::EPSILON
                * if diag == 0.0 {
                    h.frobenius_norm()
                } else {
                    diag
                };
            if sub <= threshold {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            since_deflation = 0;
            continue;
        }

        iterations += 1;
        since_deflation += 1;
        if iterations > QR_ITERATION_CAP {
            return Err(Error::NoConvergence {
                iterations: QR_ITERATION_CAP,
            });
        }

        let shift = if since_deflation % 11 == 10 {
            // exceptional shift to break cycles
            h[(hi, hi)] + Complex64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };

        // Explicit single-shift QR step on rows/cols lo..=hi.
        for i in lo..=hi {
            h[(i, i)] -= shift;
        }
        let mut rotations = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in lo..n {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = x * c + s * y;
                h[(k + 1, j)] = -s.conj() * x + y * c;
            }
            h[(k + 1, k)] = ZERO;
            rotations.push((c, s));
        }
        for (offset, &(c, s)) in rotations.iter().enumerate() {
            let k = lo + offset;
            for i in 0..=hi {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * c + y * s.conj();
                h[(i, k + 1)] = -x * s + y * c;
            }
            for i in 0..n {
                let x = q[(i, k)];
                let y = q[(i, k + 1)];
                q[(i, k)] = x * c + y * s.conj();
                q[(i, k + 1)] = -x * s + y * c;
            }
        }
        for i in lo..=hi {
            h[(i, i)] += shift;
        }
    }

    // Clean the strictly lower part left over from rounding.
    for r in 1..n {
        for c in 0..r {
            h[(r, c)] = ZERO;
        }
    }
    Ok((h, q))
}

/// Householder reduction to upper Hessenberg form, `A = Q H Q†`.
fn hessenberg(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.rows();
    let mut h = a.clone();
    let mut q = ComplexMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<Complex64> = (k + 1..n).map(|r| h[(r, k)]).collect();
        let alpha = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        let phase = if x[0].norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x[0] / x[0].norm()
        };
        let mut v = x;
        v[0] += phase * alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // H <- P H P with P = I - 2 v v†, acting on indices k+1..n.
        for c in 0..n {
            let dot: Complex64 = v
                .iter()
                .enumerate()
                .map(|(i, vi)| vi.conj() * h[(k + 1 + i, c)])
                .sum();
            for (i, vi) in v.iter().enumerate() {
                h[(k + 1 + i, c)] -= vi * dot * 2.0;
            }
        }
        for m in [&mut h, &mut q] {
            for r in 0..n {
                let dot: Complex64 = v
                    .iter()
                    .enumerate()
                    .map(|(i, vi)| m[(r, k + 1 + i)] * vi)
                    .sum();
                for (i, vi) in v.iter().enumerate() {
                    m[(r, k + 1 + i)] -= dot * vi.conj() * 2.0;
                }
            }
        }
        for r in k + 2..n {
            h[(r, k)] = ZERO;
        }
    }
    (h, q)
}

/// Rotation `[c s; -s̄ c]` mapping `(x, y)` to `(r, 0)`.
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, ZERO);
    }
    if ax == 0.0 {
        return (0.0, y.conj() / ay);
    }
    let r = ax.hypot(ay);
    (ax / r, (x / ax) * y.conj() / r)
}

/// Eigenvalue of `[[a, b], [c, d]]` closest to `d`.
fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let half_diff = (a - d) * 0.5;
    let disc = (half_diff * half_diff + b * c).sqrt();
    let mean = (a + d) * 0.5;
    let l1 = mean + disc;
    let l2 = mean - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Eigenvalues are real (stored with zero imaginary part) and sorted in
/// descending order; eigenvectors are orthonormal.
pub fn eig_hermitian(a: &ComplexMatrix) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let deviation = a.hermitian_deviation();
    if !(deviation < HERMITIAN_INPUT_TOL) {
        return Err(Error::NotHermitian { deviation });
    }
    let n = a.rows();
    let mut m = a.hermitian_part()?;
    let mut v = ComplexMatrix::identity(n);
    let scale = m.frobenius_norm();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)].norm_sqr())
            .sum();
        if off.sqrt() <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / mag;
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // J = D R with D = diag(.., 1_p, .., conj(phase)_q, ..)
                let jpp = Complex64::new(c, 0.0);
                let jpq = Complex64::new(s, 0.0);
                let jqp = -phase.conj() * s;
                let jqq = phase.conj() * c;
                for i in 0..n {
                    let x = m[(i, p)];
                    let y = m[(i, q)];
                    m[(i, p)] = x * jpp + y * jqp;
                    m[(i, q)] = x * jpq + y * jqq;
                }
                for j in 0..n {
                    let x = m[(p, j)];
                    let y = m[(q, j)];
                    m[(p, j)] = jpp.conj() * x + jqp.conj() * y;
                    m[(q, j)] = jpq.conj() * x + jqq.conj() * y;
                }
                m[(p, q)] = ZERO;
                m[(q, p)] = ZERO;
                m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
                for i in 0..n {
                    let x = v[(i, p)];
                    let y = v[(i, q)];
                    v[(i, p)] = x * jpp + y * jqp;
                    v[(i, q)] = x * jpq + y * jqq;
                }
            }
        }
    }

    let values: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    Ok(EigenDecomposition {
        eigenvalues: order
            .iter()
            .map(|&i| Complex64::new(values[i], 0.0))
            .collect(),
        eigenvectors: ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]),
    })
}
