use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Neg, Sub};
#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;

use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Wraps row-major `data`. Fails on a length mismatch or non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                op: "from_rows",
                left: (r, c),
                right: (r, rows.iter().map(Vec::len).max().unwrap_or(0)),
            });
        }
        Self::from_vec(r, c, rows.iter().flatten().copied().collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { ONE } else { ZERO })
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        Self::from_fn(
            diag.len(),
            diag.len(),
            |r, c| if r == c { diag[r] } else { ZERO },
        )
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), diag.len(), |r, c| {
            if r == c {
                Complex64::new(diag[r], 0.0)
            } else {
                ZERO
            }
        })
    }

    /// `|a⟩⟨b|` for two column vectors given as slices.
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        Self::from_fn(a.len(), b.len(), |r, c| a[r] * b[c].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[Complex64]) {
        assert_eq!(values.len(), self.rows);
        for (r, v) in values.iter().enumerate() {
            self[(r, c)] = *v;
        }
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    fn ensure_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    fn ensure_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            })
        }
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = vec![ZERO; self.rows * other.cols];
        for r in 0..self.rows {
            let out_row = &mut out[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "apply",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> Result<Complex64> {
        self.ensure_square()?;
        Ok((0..self.rows).map(|i| self[(i, i)]).sum())
    }

    /// Kronecker product; `self`'s indices are the outer (most significant) ones.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        Self::from_fn(rows, cols, |r, c| {
            self[(r / other.rows, c / other.cols)] * other[(r % other.rows, c % other.cols)]
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other, "add")?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other, "sub")?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    /// Largest entry-wise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(
            self.shape(),
            other.shape(),
            "max_abs_diff needs equal shapes"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Induced 1-norm (max column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entry of `|A - A†|`; infinite for non-square input.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                dev = dev.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        dev
    }

    /// Largest entry of `|U†U - I|`.
    pub fn unitary_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let gram = &self.dagger() * self;
        gram.max_abs_diff(&Self::identity(self.rows))
    }

    /// `(A + A†) / 2`.
    pub fn hermitian_part(&self) -> Result<Self> {
        self.ensure_square()?;
        Ok(Self::from_fn(self.rows, self.cols, |r, c| {
            (self[(r, c)] + self[(c, r)].conj()) * 0.5
        }))
    }

    /// Inverse via LU with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        self.ensure_square()?;
        let n = self.rows;
        let mut lu = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.max_abs();
        if scale == 0.0 {
            return Err(Error::Singular);
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&a, &b| lu[(a, col)].norm().total_cmp(&lu[(b, col)].norm()))
                .unwrap_or(col);
            if lu[(pivot, col)].norm() <= f64::EPSILON * scale * n as f64 {
                return Err(Error::Singular);
            }
            if pivot != col {
                lu.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let p = lu[(col, col)];
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = lu[(r, col)] / p;
                if factor == ZERO {
                    continue;
                }
                for c in 0..n {
                    let lu_c = lu[(col, c)];
                    let inv_c = inv[(col, c)];
                    lu[(r, c)] -= factor * lu_c;
                    inv[(r, c)] -= factor * inv_c;
                }
            }
        }
        for r in 0..n {
            let p = lu[(r, r)];
            for c in 0..n {
                inv[(r, c)] /= p;
            }
        }
        Ok(inv)
    }

    pub(crate) fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r}, {c}) out of bounds"
        );
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r}, {c}) out of bounds"
        );
        &mut self.data[r * self.cols + c]
    }
}

// The operator impls panic on shape mismatch; use the `checked_*` and
// `matmul` methods where shapes come from user input.

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        match self.matmul(rhs) {
            Ok(m) => m,
            Err(e) => panic!("{e}"),
        }
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        match self.checked_add(rhs) {
            Ok(m) => m,
            Err(e) => panic!("{e}"),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        match self.checked_sub(rhs) {
            Ok(m) => m,
            Err(e) => panic!("{e}"),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

/// Matrix product of operators all of the same square dimension.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.matmul(b)
}

pub fn dagger(a: &ComplexMatrix) -> ComplexMatrix {
    a.dagger()
}

pub fn trace(a: &ComplexMatrix) -> Result<Complex64> {
    a.trace()
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

/// A state vector. Normalized unless built with [`Ket::unnormalized`].
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    amplitudes: Vec<Complex64>,
}

/// Norm tolerance for [`Ket::new`].
pub const KET_NORM_TOL: f64 = 1e-12;

impl Ket {
    /// Accepts amplitudes whose Euclidean norm is 1 within [`KET_NORM_TOL`].
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        if amplitudes
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite);
        }
        let norm = norm(&amplitudes);
        if (norm - 1.0).abs() > KET_NORM_TOL {
            return Err(Error::InvalidState {
                reason: alloc::format!("ket norm is {norm}, expected 1"),
            });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let n = norm(&amplitudes);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidState {
                reason: "cannot normalize a zero vector".into(),
            });
        }
        Self::new(amplitudes.into_iter().map(|z| z / n).collect())
    }

    /// Escape hatch for vectors that are deliberately not unit length.
    pub fn unnormalized(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        let mut v = vec![ZERO; dim];
        v[index] = ONE;
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testing::{naive_matmul, random_matrix};
    use crate::rng_from_seed;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_is_left_neutral() {
        let mut rng = rng_from_seed(1);
        let m = random_matrix(3, 3, &mut rng);
        assert_eq!(&ComplexMatrix::identity(3) * &m, m);
    }

    #[test]
    fn basis_dyads_compose() {
        let e01 = ComplexMatrix::from_fn(2, 2, |r, c| if (r, c) == (0, 1) { ONE } else { ZERO });
        let e10 = e01.transpose();
        let e00 = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert_eq!(&e01 * &e10, e00);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = rng_from_seed(7);
        for _ in 0..10 {
            let a = random_matrix(3, 4, &mut rng);
            let b = random_matrix(4, 3, &mut rng);
            let fast = a.matmul(&b).unwrap();
            let slow = naive_matmul(&a, &b);
            assert!(fast.max_abs_diff(&slow) < 1e-13);
        }
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let a = ComplexMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dagger_cases() {
        let z = ComplexMatrix::from_real_diagonal(&[1.0, -1.0]);
        assert_eq!(z.dagger(), z);
        let i_id = ComplexMatrix::identity(3).scale(c(0.0, 1.0));
        assert_eq!(
            i_id.dagger(),
            ComplexMatrix::identity(3).scale(c(0.0, -1.0))
        );
        let mut rng = rng_from_seed(3);
        let m = random_matrix(3, 2, &mut rng);
        assert_eq!(m.dagger().dagger(), m);
    }

    #[test]
    fn trace_cases() {
        assert_eq!(ComplexMatrix::identity(4).trace().unwrap(), c(4.0, 0.0));
        let e01 = ComplexMatrix::from_fn(2, 2, |r, c| if (r, c) == (0, 1) { ONE } else { ZERO });
        assert_eq!(e01.trace().unwrap(), ZERO);
        assert!(matches!(
            ComplexMatrix::zeros(2, 3).trace(),
            Err(Error::NotSquare { .. })
        ));
        let mut rng = rng_from_seed(5);
        let a = random_matrix(4, 4, &mut rng);
        let b = random_matrix(4, 4, &mut rng);
        let ab = (&a * &b).trace().unwrap();
        let ba = (&b * &a).trace().unwrap();
        assert!((ab - ba).norm() < 1e-12);
    }

    #[test]
    fn kron_cases() {
        assert_eq!(
            ComplexMatrix::identity(2).kron(&ComplexMatrix::identity(3)),
            ComplexMatrix::identity(6)
        );
        let z = ComplexMatrix::from_real_diagonal(&[1.0, -1.0]);
        let p0 = ComplexMatrix::from_real_diagonal(&[1.0, 0.0, 0.0]);
        // direct expansion: (Z ⊗ P0)[(a,i),(b,j)] = Z[a,b] P0[i,j]
        let expected = ComplexMatrix::from_fn(6, 6, |r, col| {
            let (a, i) = (r / 3, r % 3);
            let (b, j) = (col / 3, col % 3);
            z[(a, b)] * p0[(i, j)]
        });
        assert_eq!(z.kron(&p0), expected);
        assert_eq!(
            expected,
            ComplexMatrix::from_real_diagonal(&[1.0, 0.0, 0.0, -1.0, 0.0, 0.0])
        );
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = rng_from_seed(11);
        let a = random_matrix(5, 5, &mut rng);
        let inv = a.inverse().unwrap();
        assert!((&a * &inv).max_abs_diff(&ComplexMatrix::identity(5)) < 1e-11);
        let singular = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert_eq!(singular.inverse(), Err(Error::Singular));
    }

    #[test]
    fn from_vec_validates() {
        assert!(ComplexMatrix::from_vec(2, 2, vec![ONE; 3]).is_err());
        assert_eq!(
            ComplexMatrix::from_vec(1, 1, vec![c(f64::NAN, 0.0)]),
            Err(Error::NonFinite)
        );
    }

    #[test]
    fn ket_constructors() {
        assert!(Ket::new(vec![ONE, ONE]).is_err());
        let k = Ket::normalized(vec![ONE, ONE]).unwrap();
        assert!((k.norm() - 1.0).abs() < 1e-15);
        assert_eq!(Ket::unnormalized(vec![ONE, ONE]).norm(), 2f64.sqrt());
        assert!(Ket::basis(2, 2).is_err());
    }
}
