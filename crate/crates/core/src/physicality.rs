//! Post-processing of raw estimates into density operators, and fidelity.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;

use crate::linalg::{eig_general, eig_hermitian, reconstruct_with, ComplexMatrix, Ket};
use crate::qmodel::DensityOperator;
use crate::{Error, Result};

/// Eigenvalue changes at or below this size are not reported as clipped.
pub const CLIP_REPORT_TOL: f64 = 1e-12;

/// Largest anti-Hermitian residue tolerated in a `PaperFaithful`
/// reconstruction before it is rejected.
pub const RECONSTRUCTION_HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Strategy {
    /// General eigendecomposition of the raw matrix; imaginary parts of the
    /// eigenvalues and negative real parts are set to zero, then
    /// `V Λ V⁻¹` is normalized by its diagonal sum.
    PaperFaithful,
    /// Hermitian part first, then the same clipping with an orthonormal
    /// eigenbasis.
    #[default]
    Hermitize,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::PaperFaithful => "paper_faithful",
            Strategy::Hermitize => "hermitize",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    pub input: ComplexMatrix,
    pub output: DensityOperator,
    /// `(original, clipped)` for every eigenvalue that changed.
    pub clipped_eigenvalues: Vec<(Complex64, f64)>,
    /// Diagonal sum of the clipped reconstruction, before division.
    pub normalization: f64,
    pub strategy: Strategy,
}

pub fn project_physical(raw: &ComplexMatrix, strategy: Strategy) -> Result<ProjectionReport> {
    if !raw.is_square() {
        return Err(Error::NotSquare {
            rows: raw.rows(),
            cols: raw.cols(),
        });
    }
    let eig = match strategy {
        Strategy::PaperFaithful => eig_general(raw)?,
        Strategy::Hermitize => eig_hermitian(&raw.hermitian_part()?)?,
    };
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|z| z.re.max(0.0)).collect();
    let clipped_eigenvalues = eig
        .eigenvalues
        .iter()
        .zip(&clipped)
        .filter(|(z, c)| (**z - Complex64::new(**c, 0.0)).norm() > CLIP_REPORT_TOL)
        .map(|(z, c)| (*z, *c))
        .collect();

    let scale = raw.max_abs().max(1.0);
    if clipped.iter().sum::<f64>() <= f64::EPSILON * scale {
        return Err(Error::UnrecoverableEstimate);
    }
    let values: Vec<Complex64> = clipped.iter().map(|&c| Complex64::new(c, 0.0)).collect();
    let recon = match strategy {
        Strategy::PaperFaithful => reconstruct_with(&eig.eigenvectors, &values)?,
        Strategy::Hermitize => {
            let v = &eig.eigenvectors;
            let scaled = ComplexMatrix::from_fn(v.rows(), v.cols(), |r, c| v[(r, c)] * values[c]);
            &scaled * &v.dagger()
        }
    };
    let a = recon.trace()?.re;
    if a <= f64::EPSILON * scale {
        return Err(Error::UnrecoverableEstimate);
    }
    let normalized = recon.scale_real(1.0 / a);
    let deviation = normalized.hermitian_deviation();
    if deviation > RECONSTRUCTION_HERMITIAN_TOL {
        return Err(Error::NonHermitianReconstruction { deviation });
    }
    let output = DensityOperator::new(normalized.hermitian_part()?)?;
    Ok(ProjectionReport {
        input: raw.clone(),
        output,
        clipped_eigenvalues,
        normalization: a,
        strategy,
    })
}

/// `√⟨ψ|ρ|ψ⟩`.
pub fn fidelity(rho: &DensityOperator, psi: &Ket) -> Result<f64> {
    let m = rho.matrix();
    let v = psi.amplitudes();
    if v.len() != rho.dim() {
        return Err(Error::DimensionMismatch {
            op: "fidelity",
            left: m.shape(),
            right: (v.len(), 1),
        });
    }
    let mv = m.apply(v)?;
    let overlap: Complex64 = v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum();
    Ok(overlap.re.max(0.0).sqrt())
}
