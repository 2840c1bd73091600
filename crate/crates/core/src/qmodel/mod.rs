//! Quantum objects measured by the protocols and the special operators the
//! protocols are assembled from.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;

use crate::linalg::{eig_hermitian, ComplexMatrix, Ket};
use crate::{Error, Result};

pub mod random;

/// Validation tolerances shared by every constructor in this module.
pub mod tolerance {
    /// Hermiticity, trace and eigenvalue-bound slack for states and POVMs.
    pub const VALIDATION: f64 = 1e-10;
    /// `Σ K†K = I` slack for Kraus channels.
    pub const TRACE_PRESERVING: f64 = 1e-10;
}

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A density operator: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let invalid = |reason: alloc::string::String| Error::InvalidState { reason };
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.rows(),
                cols: matrix.cols(),
            });
        }
        let dev = matrix.hermitian_deviation();
        if dev > tolerance::VALIDATION {
            return Err(invalid(format!("not Hermitian (deviation {dev:.3e})")));
        }
        let tr = matrix.trace()?.re;
        if (tr - 1.0).abs() > tolerance::VALIDATION {
            return Err(invalid(format!("trace is {tr}, expected 1")));
        }
        let min = min_eigenvalue(&matrix)?;
        if min < -tolerance::VALIDATION {
            return Err(invalid(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { matrix })
    }

    pub fn pure(psi: &Ket) -> Self {
        Self {
            matrix: psi.projector(),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }
}

/// A POVM element `0 ≤ E ≤ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmElement {
    matrix: ComplexMatrix,
}

impl PovmElement {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let invalid = |reason: alloc::string::String| Error::InvalidPovm { reason };
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.rows(),
                cols: matrix.cols(),
            });
        }
        let dev = matrix.hermitian_deviation();
        if dev > tolerance::VALIDATION {
            return Err(invalid(format!("not Hermitian (deviation {dev:.3e})")));
        }
        let eig = eig_hermitian(&matrix.hermitian_part()?)?;
        let max = eig.eigenvalues.first().map_or(0.0, |z| z.re);
        let min = eig.eigenvalues.last().map_or(0.0, |z| z.re);
        if min < -tolerance::VALIDATION || max > 1.0 + tolerance::VALIDATION {
            return Err(invalid(format!(
                "eigenvalues span [{min}, {max}], outside [0, 1]"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

/// A trace-preserving channel in operator-sum form.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    dim: usize,
    kraus: Vec<ComplexMatrix>,
}

impl KrausChannel {
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let invalid = |reason: alloc::string::String| Error::InvalidChannel { reason };
        let first = kraus
            .first()
            .ok_or_else(|| invalid("no Kraus operators".into()))?;
        let dim = first.rows();
        if kraus.iter().any(|k| k.shape() != (dim, dim)) {
            return Err(invalid(format!("every Kraus operator must be {dim}x{dim}")));
        }
        let mut sum = ComplexMatrix::zeros(dim, dim);
        for k in &kraus {
            sum = &sum + &(&k.dagger() * k);
        }
        let dev = sum.max_abs_diff(&ComplexMatrix::identity(dim));
        if dev > tolerance::TRACE_PRESERVING {
            return Err(invalid(format!(
                "not trace preserving (max |ΣK†K - I| = {dev:.3e})"
            )));
        }
        Ok(Self { dim, kraus })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            kraus: vec![ComplexMatrix::identity(dim)],
        }
    }

    /// `ρ ↦ U ρ U†`.
    pub fn unitary(u: ComplexMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    /// Completely dephasing channel with `K_m = |m⟩⟨m|`.
    pub fn dephasing(dim: usize) -> Self {
        let kraus = (0..dim)
            .map(|m| basis_projector(dim, m).expect("m < dim"))
            .collect();
        Self { dim, kraus }
    }

    /// `ρ ↦ (1 - p) ρ + p tr(ρ) I/d`, via `√(1-p) I` and `√(p/d) |a⟩⟨b|`.
    pub fn depolarizing(dim: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter {
                name: "depolarizing probability",
                reason: format!("{p} is outside [0, 1]"),
            });
        }
        let mut kraus = Vec::with_capacity(dim * dim + 1);
        if p < 1.0 {
            kraus.push(ComplexMatrix::identity(dim).scale_real((1.0 - p).sqrt()));
        }
        let amp = (p / dim as f64).sqrt();
        if amp > 0.0 {
            for a in 0..dim {
                for b in 0..dim {
                    kraus.push(ComplexMatrix::from_fn(dim, dim, |r, c| {
                        if r == a && c == b {
                            Complex64::new(amp, 0.0)
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    }));
                }
            }
        }
        Ok(Self { dim, kraus })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus_ops(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    /// `Σ_m K_m X K_m†`; `X` may be any operator, physical or not.
    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        channel_apply(self, x)
    }
}

/// Process tensor `χ_{ijkl} = tr[M(|i⟩⟨j|) |k⟩⟨l|]`, so that
/// `M(ρ) = Σ χ_{ijkl} |l⟩⟨i| ρ |j⟩⟨k|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl ChiMatrix {
    /// Wraps `d⁴` entries stored with `l` varying fastest.
    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim.pow(4) {
            return Err(Error::DimensionMismatch {
                op: "chi",
                left: (dim.pow(4), 1),
                right: (entries.len(), 1),
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let d = self.dim;
        ((i * d + j) * d + k) * d + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> Complex64 {
        self.entries[self.offset(i, j, k, l)]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Channel action rebuilt from the tensor.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let d = self.dim;
        if rho.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                op: "chi apply",
                left: (d, d),
                right: rho.shape(),
            });
        }
        // Σ χ_{ijkl} ρ_{ij} |l⟩⟨k|
        let mut out = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let r = rho[(i, j)];
                for k in 0..d {
                    for l in 0..d {
                        out[(l, k)] += self.get(i, j, k, l) * r;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `d² × d²` matrix with row `i + d·l` and column `j + d·k`.
    pub fn flattened(&self) -> ComplexMatrix {
        let d = self.dim;
        let mut out = ComplexMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        out[(i + d * l, j + d * k)] = self.get(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    /// Inverse of [`ChiMatrix::flattened`].
    pub fn from_flattened(m: &ComplexMatrix) -> Result<Self> {
        let n = m.rows();
        let d = (n as f64).sqrt().round() as usize;
        if d * d != n || !m.is_square() {
            return Err(Error::DimensionMismatch {
                op: "chi unflatten",
                left: (n, n),
                right: m.shape(),
            });
        }
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        entries[((i * d + j) * d + k) * d + l] = m[(i + d * l, j + d * k)];
                    }
                }
            }
        }
        Ok(Self { dim: d, entries })
    }
}

/// Human-readable statement of the [`ChiMatrix::flattened`] layout.
pub const CHI_FLATTENING: &str = "row = i + d*l, col = j + d*k, entry = chi_ijkl";

/// Basis-shift unitary `Σ_k |k+n mod d⟩⟨k|`.
pub fn u_shift(dim: usize, n: i64) -> ComplexMatrix {
    assert!(dim >= 1, "dimension must be positive");
    let shift = n.rem_euclid(dim as i64) as usize;
    ComplexMatrix::from_fn(dim, dim, |r, c| {
        if r == (c + shift) % dim {
            ONE
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Uniform superposition `Σ_k |k⟩/√d`; `⟨k|MUB⟩ = 1/√d` for every `k`.
pub fn mub_state(dim: usize) -> Ket {
    assert!(dim >= 1, "dimension must be positive");
    let amp = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
    Ket::unnormalized(vec![amp; dim])
}

/// `|i⟩⟨i|`.
pub fn basis_projector(dim: usize, i: usize) -> Result<ComplexMatrix> {
    if i >= dim {
        return Err(Error::IndexOutOfRange { index: i, dim });
    }
    Ok(ComplexMatrix::from_fn(dim, dim, |r, c| {
        if r == i && c == i {
            ONE
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// `|i⟩⟨j|`, the unphysical dyads the protocols target.
pub fn basis_dyad(dim: usize, i: usize, j: usize) -> Result<ComplexMatrix> {
    for idx in [i, j] {
        if idx >= dim {
            return Err(Error::IndexOutOfRange { index: idx, dim });
        }
    }
    Ok(ComplexMatrix::from_fn(dim, dim, |r, c| {
        if r == i && c == j {
            ONE
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// `Σ_m K_m X K_m†`.
pub fn channel_apply(ch: &KrausChannel, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    if x.shape() != (ch.dim, ch.dim) {
        return Err(Error::DimensionMismatch {
            op: "channel_apply",
            left: (ch.dim, ch.dim),
            right: x.shape(),
        });
    }
    let mut out = ComplexMatrix::zeros(ch.dim, ch.dim);
    for k in &ch.kraus {
        out = &out + &(&(k * x) * &k.dagger());
    }
    Ok(out)
}

/// Brute-force `χ` by pushing every dyad `|i⟩⟨j|` through the channel.
pub fn chi_from_kraus(ch: &KrausChannel) -> ChiMatrix {
    let d = ch.dim;
    let mut entries = Vec::with_capacity(d.pow(4));
    for i in 0..d {
        for j in 0..d {
            let out = channel_apply(ch, &basis_dyad(d, i, j).expect("in range")).expect("shapes");
            for k in 0..d {
                for l in 0..d {
                    // tr[M(|i⟩⟨j|) |k⟩⟨l|] = ⟨l|M(|i⟩⟨j|)|k⟩
                    entries.push(out[(l, k)]);
                }
            }
        }
    }
    ChiMatrix { dim: d, entries }
}

fn min_eigenvalue(m: &ComplexMatrix) -> Result<f64> {
    let eig = eig_hermitian(&m.hermitian_part()?)?;
    Ok(eig.eigenvalues.last().map_or(0.0, |z| z.re))
}
