//! Seeded random quantum objects for tests and benchmarks.
//!
//! Unitaries are Haar distributed (QR of a complex Ginibre matrix with the
//! diagonal phases of `R` divided out). Channels use the Stinespring
//! construction: a Haar unitary `U` on `system ⊗ environment` (both of
//! dimension `d`, environment index fastest) with the environment starting
//! in `|0⟩`, giving `K_m[s', s] = U[(s', m), (s, 0)]`.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DensityOperator, KrausChannel, PovmElement};
use crate::linalg::{ComplexMatrix, Ket};

fn gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// `(G + G†)/2` for a Ginibre `G`.
pub fn hermitian(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ginibre(n, n, rng).hermitian_part().expect("square")
}

/// Haar-random unitary.
pub fn unitary(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = ginibre(n, n, rng);
    // modified Gram-Schmidt on columns; the phase of each R_kk is removed
    // by construction because the diagonal of R comes out real positive
    let mut q: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for c in 0..n {
        let mut v = g.column(c);
        for u in &q {
            let proj: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        q.push(v);
    }
    ComplexMatrix::from_fn(n, n, |r, c| q[c][r])
}

/// Haar-random pure state.
pub fn ket(dim: usize, rng: &mut impl Rng) -> Ket {
    let v: Vec<Complex64> = (0..dim).map(|_| gaussian(rng)).collect();
    Ket::normalized(v).expect("nonzero with probability one")
}

/// Mixed state from the Hilbert-Schmidt ensemble `G G† / tr(G G†)`.
pub fn density_operator(dim: usize, rng: &mut impl Rng) -> DensityOperator {
    let g = ginibre(dim, dim, rng);
    let w = &g * &g.dagger();
    let tr = w.trace().expect("square").re;
    let m = w.scale_real(1.0 / tr).hermitian_part().expect("square");
    DensityOperator::new(m).expect("valid by construction")
}

/// `U diag(λ) U†` with `λ_k` uniform on `[0, 1]` and Haar `U`.
pub fn povm_element(dim: usize, rng: &mut impl Rng) -> PovmElement {
    let u = unitary(dim, rng);
    let lambdas: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let m = &(&u * &ComplexMatrix::from_real_diagonal(&lambdas)) * &u.dagger();
    PovmElement::new(m.hermitian_part().expect("square")).expect("valid by construction")
}

/// Stinespring-dilated random channel with `dim` Kraus operators.
pub fn channel(dim: usize, rng: &mut impl Rng) -> KrausChannel {
    let env = dim;
    let u = unitary(dim * env, rng);
    let kraus = (0..env)
        .map(|m| ComplexMatrix::from_fn(dim, dim, |out, inp| u[(out * env + m, inp * env)]))
        .collect();
    KrausChannel::new(kraus).expect("isometry columns give a trace-preserving channel")
}
