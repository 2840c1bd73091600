//! Element-by-element direct measurement of states, POVM elements and
//! processes.
//!
//! Each element is one pair of Hadamard tests (real and imaginary
//! quadrature). The shift variant reads the element with coefficient 1;
//! the MUB variant reads it with coefficient `1/d` (`1/d²` for processes)
//! and rescales.
//!
//! Sampled mode models the probe as binary `±1` outcomes with
//! `⟨Z⟩` equal to the raw test value. Each element gets its own generator
//! seeded with `seed ^ element_index` (row-major `i·d + j`, or
//! `((i·d + j)·d + k)·d + l` for processes); the budget is split evenly
//! between the two quadratures, except for elements whose imaginary part
//! vanishes identically (`i = j`, and `i = j, k = l` for processes), which
//! spend the whole budget on the real quadrature.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::hadamard::{HadamardTestSpec, ProcessTestSpec, Quadrature};
use crate::linalg::ComplexMatrix;
use crate::qmodel::{
    basis_projector, mub_state, u_shift, ChiMatrix, DensityOperator, KrausChannel, PovmElement,
};
use crate::sampler::sample_with_rng;
use crate::{rng_from_seed, Error, Result, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Basis-shift unitary, coefficient 1.
    Shift,
    /// Projectors with the uniform MUB state, coefficient `1/d` or `1/d²`.
    Mub,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Shift => "shift",
            Variant::Mub => "mub",
        }
    }
}

/// Finite-shot settings for sampled mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotBudget {
    pub shots_per_element: u64,
    pub seed: u64,
}

/// One measured element with its per-quadrature standard errors packed as
/// `σ_re + i σ_im`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementEstimate {
    pub value: Complex64,
    pub stderr: Complex64,
}

/// Unconstrained estimate of a full matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DmEstimate {
    pub dim: usize,
    /// `d × d`, or the `d² × d²` flattened `χ` for processes.
    pub matrix: ComplexMatrix,
    /// Per-element `σ_re + i σ_im`; all zero in exact mode.
    pub stderr: ComplexMatrix,
    pub variant: Variant,
    /// Zero in exact mode.
    pub shots_per_element: u64,
}

impl DmEstimate {
    /// Process tensor view of a process estimate.
    pub fn to_chi(&self) -> Result<ChiMatrix> {
        ChiMatrix::from_flattened(&self.matrix)
    }
}

fn check_index(index: usize, dim: usize) -> Result<()> {
    if index >= dim {
        return Err(Error::IndexOutOfRange { index, dim });
    }
    Ok(())
}

fn shift(d: usize, from: usize, to: usize) -> ComplexMatrix {
    u_shift(d, to as i64 - from as i64)
}

/// Turns the exact raw test value into an element estimate.
fn read_out(
    raw: Complex64,
    coefficient: f64,
    real_only: bool,
    budget: Option<&ShotBudget>,
    element_index: u64,
) -> Result<ElementEstimate> {
    let zero = Complex64::new(0.0, 0.0);
    let Some(budget) = budget else {
        let value = if real_only {
            Complex64::new(raw.re, 0.0)
        } else {
            raw
        };
        return Ok(ElementEstimate {
            value: value / coefficient,
            stderr: zero,
        });
    };
    let n = budget.shots_per_element;
    let mut rng: SimRng = rng_from_seed(budget.seed ^ element_index);
    let (n_re, n_im) = if real_only {
        (n, 0)
    } else {
        (n - n / 2, n / 2)
    };
    if n_re == 0 {
        return Err(Error::InvalidParameter {
            name: "shots per element",
            reason: alloc::format!("{n} leaves a quadrature without shots"),
        });
    }
    let re = sample_with_rng(raw.re, 1.0, n_re, &mut rng)?;
    let (im, im_err) = if n_im > 0 {
        let est = sample_with_rng(raw.im, 1.0, n_im, &mut rng)?;
        (est.estimate, est.stderr())
    } else if real_only {
        (0.0, 0.0)
    } else {
        return Err(Error::InvalidParameter {
            name: "shots per element",
            reason: alloc::format!("{n} leaves a quadrature without shots"),
        });
    };
    Ok(ElementEstimate {
        value: Complex64::new(re.estimate, im) / coefficient,
        stderr: Complex64::new(re.stderr(), im_err) / coefficient,
    })
}

/// Hadamard test measuring `ρᵢⱼ` and its coefficient.
pub fn state_test(
    rho: &ComplexMatrix,
    i: usize,
    j: usize,
    variant: Variant,
) -> Result<(HadamardTestSpec, f64)> {
    let d = rho.rows();
    check_index(i, d)?;
    check_index(j, d)?;
    let id = ComplexMatrix::identity(d);
    match variant {
        Variant::Shift => Ok((
            HadamardTestSpec::new(
                shift(d, i, j),
                id,
                rho.clone(),
                basis_projector(d, j)?,
                Quadrature::Real,
            )?,
            1.0,
        )),
        Variant::Mub => Ok((
            HadamardTestSpec::new(
                basis_projector(d, i)?,
                basis_projector(d, j)?,
                rho.clone(),
                mub_state(d).projector(),
                Quadrature::Real,
            )?,
            1.0 / d as f64,
        )),
    }
}

/// Hadamard test measuring `Eᵢⱼ` and its coefficient.
pub fn povm_test(
    e: &ComplexMatrix,
    i: usize,
    j: usize,
    variant: Variant,
) -> Result<(HadamardTestSpec, f64)> {
    let d = e.rows();
    check_index(i, d)?;
    check_index(j, d)?;
    match variant {
        Variant::Shift => Ok((
            HadamardTestSpec::new(
                shift(d, i, j),
                ComplexMatrix::identity(d),
                basis_projector(d, i)?,
                e.clone(),
                Quadrature::Real,
            )?,
            1.0,
        )),
        Variant::Mub => Ok((
            HadamardTestSpec::new(
                basis_projector(d, j)?,
                basis_projector(d, i)?,
                mub_state(d).projector(),
                e.clone(),
                Quadrature::Real,
            )?,
            1.0 / d as f64,
        )),
    }
}

/// Process sandwich measuring `χᵢⱼₖₗ` and its coefficient.
pub fn process_test(
    ch: &KrausChannel,
    (i, j, k, l): (usize, usize, usize, usize),
    variant: Variant,
) -> Result<(ProcessTestSpec, f64)> {
    let d = ch.dim();
    for idx in [i, j, k, l] {
        check_index(idx, d)?;
    }
    let id = ComplexMatrix::identity(d);
    let spec = match variant {
        Variant::Shift => ProcessTestSpec {
            a: shift(d, j, i),
            b: id.clone(),
            c: shift(d, l, k),
            d: id,
            rho: basis_projector(d, j)?,
            e: basis_projector(d, k)?,
            channel: ch.clone(),
            quadrature: Quadrature::Real,
        },
        Variant::Mub => {
            let mub = mub_state(d).projector();
            ProcessTestSpec {
                a: basis_projector(d, i)?,
                b: basis_projector(d, j)?,
                c: basis_projector(d, l)?,
                d: basis_projector(d, k)?,
                rho: mub.clone(),
                e: mub,
                channel: ch.clone(),
                quadrature: Quadrature::Real,
            }
        }
    };
    let coefficient = match variant {
        Variant::Shift => 1.0,
        Variant::Mub => 1.0 / (d * d) as f64,
    };
    Ok((spec, coefficient))
}

pub fn dm_state_element(
    rho: &DensityOperator,
    i: usize,
    j: usize,
    variant: Variant,
    budget: Option<&ShotBudget>,
) -> Result<ElementEstimate> {
    let (spec, coef) = state_test(rho.matrix(), i, j, variant)?;
    let index = (i * rho.dim() + j) as u64;
    read_out(spec.trace_value()?, coef, i == j, budget, index)
}

pub fn dm_povm_element(
    e: &PovmElement,
    i: usize,
    j: usize,
    variant: Variant,
    budget: Option<&ShotBudget>,
) -> Result<ElementEstimate> {
    let (spec, coef) = povm_test(e.matrix(), i, j, variant)?;
    let index = (i * e.dim() + j) as u64;
    read_out(spec.trace_value()?, coef, i == j, budget, index)
}

pub fn dm_process_element(
    ch: &KrausChannel,
    (i, j, k, l): (usize, usize, usize, usize),
    variant: Variant,
    budget: Option<&ShotBudget>,
) -> Result<ElementEstimate> {
    let (spec, coef) = process_test(ch, (i, j, k, l), variant)?;
    let d = ch.dim();
    let index = (((i * d + j) * d + k) * d + l) as u64;
    read_out(spec.trace_value()?, coef, i == j && k == l, budget, index)
}

fn assemble(
    dim: usize,
    side: usize,
    variant: Variant,
    budget: Option<&ShotBudget>,
    elements: Vec<((usize, usize), ElementEstimate)>,
) -> DmEstimate {
    let mut matrix = ComplexMatrix::zeros(side, side);
    let mut stderr = ComplexMatrix::zeros(side, side);
    for ((r, c), est) in elements {
        matrix[(r, c)] = est.value;
        stderr[(r, c)] = est.stderr;
    }
    DmEstimate {
        dim,
        matrix,
        stderr,
        variant,
        shots_per_element: budget.map_or(0, |b| b.shots_per_element),
    }
}

pub fn dm_state_full(
    rho: &DensityOperator,
    variant: Variant,
    budget: Option<&ShotBudget>,
) -> Result<DmEstimate> {
    let d = rho.dim();
    let mut elements = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            elements.push(((i, j), dm_state_element(rho, i, j, variant, budget)?));
        }
    }
    Ok(assemble(d, d, variant, budget, elements))
}

pub fn dm_povm_full(
    e: &PovmElement,
    variant: Variant,
    budget: Option<&ShotBudget>,
) -> Result<DmEstimate> {
    let d = e.dim();
    let mut elements = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            elements.push(((i, j), dm_povm_element(e, i, j, variant, budget)?));
        }
    }
    Ok(assemble(d, d, variant, budget, elements))
}

/// Full `χ`, flattened as in [`ChiMatrix::flattened`].
pub fn dm_process_full(
    ch: &KrausChannel,
    variant: Variant,
    budget: Option<&ShotBudget>,
) -> Result<DmEstimate> {
    let d = ch.dim();
    let mut elements = Vec::with_capacity(d.pow(4));
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let est = dm_process_element(ch, (i, j, k, l), variant, budget)?;
                    elements.push(((i + d * l, j + d * k), est));
                }
            }
        }
    }
    Ok(assemble(d, d * d, variant, budget, elements))
}
