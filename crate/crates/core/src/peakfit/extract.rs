//! Fitted peak amplitudes to density-matrix elements.
//!
//! The direct trace (no interferometer) has `d` peaks with amplitudes
//! `A_k`, and `A = Σ A_k` normalizes everything. A trace taken with delay
//! `m` slots has `d + m` peaks; the peak in slot `i + m` carries the
//! interference of pulses `i` and `i + m`, and
//!
//! ```text
//! ρ_{i,i+m} = ([A(0°) - A(180°)] + i[A(90°) - A(270°)]) / A
//! ```
//!
//! The lower triangle is filled with complex conjugates.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::MultiPeakFit;
use crate::linalg::ComplexMatrix;
use crate::protocols::{DmEstimate, Variant};
use crate::pulselab::PHASES_DEG;
use crate::{Error, Result};

/// The four fits for one interferometer delay, in the phase order of
/// [`PHASES_DEG`].
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedFits {
    pub delay_slots: usize,
    pub fits: [MultiPeakFit; 4],
}

/// Amplitudes of one interference peak across the four phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferencePeak {
    /// Element `(row, row + delay_slots)`.
    pub row: usize,
    pub delay_slots: usize,
    pub amplitudes: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    /// `A_k` from the direct trace.
    pub diagonal: Vec<f64>,
    /// `A = Σ A_k`.
    pub normalization: f64,
    pub interference: Vec<InterferencePeak>,
    /// Raw (unprojected) estimate.
    pub rho: DmEstimate,
}

/// Peak amplitudes ordered by center.
fn ordered_amplitudes(fit: &MultiPeakFit) -> Vec<f64> {
    let mut peaks = fit.peaks.clone();
    peaks.sort_by(|a, b| a.x0.total_cmp(&b.x0));
    peaks.iter().map(|p| p.amplitude).collect()
}

pub fn extract_density(direct: &MultiPeakFit, delayed: &[DelayedFits]) -> Result<ExtractionResult> {
    if !direct.converged {
        return Err(Error::FitNotConverged {
            which: "direct trace".into(),
        });
    }
    let d = direct.peaks.len();
    let diagonal = ordered_amplitudes(direct);
    let normalization: f64 = diagonal.iter().sum();
    if !(normalization > 0.0) {
        return Err(Error::InvalidParameter {
            name: "normalization",
            reason: format!("sum of direct-trace amplitudes is {normalization}"),
        });
    }

    let mut matrix = ComplexMatrix::zeros(d, d);
    for (k, a) in diagonal.iter().enumerate() {
        matrix[(k, k)] = Complex64::new(a / normalization, 0.0);
    }
    let mut interference = Vec::new();
    for m in 1..d {
        let mut sets = delayed.iter().filter(|s| s.delay_slots == m);
        let set = sets.next().ok_or_else(|| Error::InvalidParameter {
            name: "delayed fits",
            reason: format!("no fits for a delay of {m} slots"),
        })?;
        if sets.next().is_some() {
            return Err(Error::InvalidParameter {
                name: "delayed fits",
                reason: format!("more than one set for a delay of {m} slots"),
            });
        }
        let mut by_phase = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for (slot, fit) in set.fits.iter().enumerate() {
            let which = || format!("delay {m} slots, phase {}°", PHASES_DEG[slot]);
            if !fit.converged {
                return Err(Error::FitNotConverged { which: which() });
            }
            if fit.peaks.len() != d + m {
                return Err(Error::InvalidParameter {
                    name: "delayed fits",
                    reason: format!(
                        "{}: expected {} peaks, found {}",
                        which(),
                        d + m,
                        fit.peaks.len()
                    ),
                });
            }
            by_phase[slot] = ordered_amplitudes(fit);
        }
        for row in 0..d - m {
            let amplitudes = [
                by_phase[0][row + m],
                by_phase[1][row + m],
                by_phase[2][row + m],
                by_phase[3][row + m],
            ];
            let z = Complex64::new(amplitudes[0] - amplitudes[2], amplitudes[1] - amplitudes[3])
                / normalization;
            matrix[(row, row + m)] = z;
            matrix[(row + m, row)] = z.conj();
            interference.push(InterferencePeak {
                row,
                delay_slots: m,
                amplitudes,
            });
        }
    }
    Ok(ExtractionResult {
        diagonal,
        normalization,
        interference,
        rho: DmEstimate {
            dim: d,
            stderr: ComplexMatrix::zeros(d, d),
            matrix,
            variant: Variant::Shift,
            shots_per_element: 0,
        },
    })
}
