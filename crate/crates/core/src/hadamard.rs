//! Exact evaluation of the generalized Hadamard test.
//!
//! The probe starts in `|0⟩`, passes a Hadamard, then the controlled pair
//! `|0⟩⟨0| ⊗ A + |1⟩⟨1| ⊗ B`, the phase gate `S^b` and a second Hadamard.
//! Measuring `Z ⊗ E` gives `Re tr(A ρ B† E)` for `b = 0` and
//! `Im tr(A ρ B† E)` for `b = 1`.
//!
//! With `S = diag(1, s)` the circuit yields `Re[s̄ · tr(A ρ B† E)]` for
//! Hermitian `ρ` and `E`, so the imaginary quadrature needs `s = +i`;
//! [`phase_gate`] uses that matrix.
//!
//! [`expectation`] evaluates the trace formula directly and accepts any
//! operators, including the projector-valued gates of the MUB variant.
//! [`circuit_cross_check`] simulates the `2d`-dimensional probe+system
//! evolution and therefore needs unitary `A` and `B`.

use num_complex::Complex64;

use crate::linalg::ComplexMatrix;
use crate::qmodel::KrausChannel;
use crate::{Error, Result};

/// Unitarity slack for the circuit path.
pub const UNITARY_TOL: f64 = 1e-10;

/// Which quadrature the phase bit selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrature {
    /// `b = 0`, identity phase gate.
    Real,
    /// `b = 1`, phase gate `diag(1, i)`.
    Imag,
}

impl Quadrature {
    pub fn from_bit(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Self::Real),
            1 => Ok(Self::Imag),
            _ => Err(Error::InvalidParameter {
                name: "phase bit",
                reason: alloc::format!("{b} is not 0 or 1"),
            }),
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Self::Real => 0,
            Self::Imag => 1,
        }
    }

    /// Picks the matching component of `z`.
    pub fn component(self, z: Complex64) -> f64 {
        match self {
            Self::Real => z.re,
            Self::Imag => z.im,
        }
    }
}

/// Single-pass test: `tr(A ρ B† E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HadamardTestSpec {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub rho: ComplexMatrix,
    pub e: ComplexMatrix,
    pub quadrature: Quadrature,
}

impl HadamardTestSpec {
    pub fn new(
        a: ComplexMatrix,
        b: ComplexMatrix,
        rho: ComplexMatrix,
        e: ComplexMatrix,
        quadrature: Quadrature,
    ) -> Result<Self> {
        let spec = Self {
            a,
            b,
            rho,
            e,
            quadrature,
        };
        spec.dim()?;
        Ok(spec)
    }

    /// Same spec with the other phase bit.
    pub fn with_quadrature(&self, quadrature: Quadrature) -> Self {
        Self {
            quadrature,
            ..self.clone()
        }
    }

    /// Shared dimension, or the first mismatching operand.
    pub fn dim(&self) -> Result<usize> {
        common_dim(&[
            ("A", &self.a),
            ("B", &self.b),
            ("rho", &self.rho),
            ("E", &self.e),
        ])
    }

    /// Complex `tr(A ρ B† E)`, independent of the phase bit.
    pub fn trace_value(&self) -> Result<Complex64> {
        self.dim()?;
        let left = &self.a * &self.rho;
        let right = &self.b.dagger() * &self.e;
        Ok(trace_of_product(&left, &right))
    }
}

/// Process sandwich: `tr[M(A ρ B†) D† E C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessTestSpec {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub c: ComplexMatrix,
    pub d: ComplexMatrix,
    pub rho: ComplexMatrix,
    pub e: ComplexMatrix,
    pub channel: KrausChannel,
    pub quadrature: Quadrature,
}

impl ProcessTestSpec {
    pub fn dim(&self) -> Result<usize> {
        let n = common_dim(&[
            ("A", &self.a),
            ("B", &self.b),
            ("C", &self.c),
            ("D", &self.d),
            ("rho", &self.rho),
            ("E", &self.e),
        ])?;
        if n != self.channel.dim() {
            return Err(Error::DimensionMismatch {
                op: "process test channel",
                left: (n, n),
                right: (self.channel.dim(), self.channel.dim()),
            });
        }
        Ok(n)
    }

    pub fn trace_value(&self) -> Result<Complex64> {
        self.dim()?;
        let inner = &(&self.a * &self.rho) * &self.b.dagger();
        let evolved = self.channel.apply(&inner)?;
        let post = &(&self.d.dagger() * &self.e) * &self.c;
        Ok(trace_of_product(&evolved, &post))
    }
}

fn common_dim(ops: &[(&'static str, &ComplexMatrix)]) -> Result<usize> {
    let (_, first) = ops[0];
    if !first.is_square() {
        return Err(Error::NotSquare {
            rows: first.rows(),
            cols: first.cols(),
        });
    }
    for &(name, m) in &ops[1..] {
        if m.shape() != first.shape() {
            return Err(Error::DimensionMismatch {
                op: name,
                left: first.shape(),
                right: m.shape(),
            });
        }
    }
    Ok(first.rows())
}

/// `tr(X Y)` without forming the product.
fn trace_of_product(x: &ComplexMatrix, y: &ComplexMatrix) -> Complex64 {
    let n = x.rows();
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..n {
        for c in 0..n {
            acc += x[(r, c)] * y[(c, r)];
        }
    }
    acc
}

/// `Re` or `Im` of `tr(A ρ B† E)` per the spec's phase bit.
pub fn expectation(spec: &HadamardTestSpec) -> Result<f64> {
    Ok(spec.quadrature.component(spec.trace_value()?))
}

/// Combines a `b = 0` and a `b = 1` run into `tr(A ρ B† E)`.
pub fn expectation_complex(re: &HadamardTestSpec, im: &HadamardTestSpec) -> Result<Complex64> {
    let same_operators = re.a == im.a && re.b == im.b && re.rho == im.rho && re.e == im.e;
    if re.quadrature != Quadrature::Real || im.quadrature != Quadrature::Imag || !same_operators {
        return Err(Error::MismatchedPair);
    }
    Ok(Complex64::new(expectation(re)?, expectation(im)?))
}

/// `Re` or `Im` of `tr[M(A ρ B†) D† E C]`.
pub fn expectation_process(spec: &ProcessTestSpec) -> Result<f64> {
    Ok(spec.quadrature.component(spec.trace_value()?))
}

/// Probe phase gate `S^b`.
pub fn phase_gate(q: Quadrature) -> ComplexMatrix {
    let s = match q {
        Quadrature::Real => Complex64::new(1.0, 0.0),
        Quadrature::Imag => Complex64::new(0.0, 1.0),
    };
    ComplexMatrix::from_diagonal(&[Complex64::new(1.0, 0.0), s])
}

fn hadamard_gate() -> ComplexMatrix {
    let h = core::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(2, 2, |r, c| {
        Complex64::new(if r == 1 && c == 1 { -h } else { h }, 0.0)
    })
}

fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real_diagonal(&[1.0, -1.0])
}

fn controlled_pair(zero: &ComplexMatrix, one: &ComplexMatrix) -> ComplexMatrix {
    let p0 = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
    let p1 = ComplexMatrix::from_real_diagonal(&[0.0, 1.0]);
    &p0.kron(zero) + &p1.kron(one)
}

fn require_unitary(which: &'static str, m: &ComplexMatrix) -> Result<()> {
    let deviation = m.unitary_deviation();
    if deviation > UNITARY_TOL {
        return Err(Error::NotUnitary { which, deviation });
    }
    Ok(())
}

/// Real part of `tr[(Z ⊗ E) σ]` after explicitly evolving `|0⟩⟨0| ⊗ ρ`.
///
/// Agrees with [`expectation`] whenever `ρ` and `E` are Hermitian.
pub fn circuit_cross_check(spec: &HadamardTestSpec) -> Result<f64> {
    let d = spec.dim()?;
    require_unitary("A", &spec.a)?;
    require_unitary("B", &spec.b)?;
    let id = ComplexMatrix::identity(d);
    let h = hadamard_gate().kron(&id);
    let s = phase_gate(spec.quadrature).kron(&id);
    let u = &(&(&h * &s) * &controlled_pair(&spec.a, &spec.b)) * &h;
    let sigma0 = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]).kron(&spec.rho);
    let sigma = &(&u * &sigma0) * &u.dagger();
    Ok(trace_of_product(&pauli_z().kron(&spec.e), &sigma).re)
}

/// Circuit simulation of the process sandwich, with the channel acting as
/// `I ⊗ K_m` on the joint state between the two controlled pairs.
pub fn process_circuit_cross_check(spec: &ProcessTestSpec) -> Result<f64> {
    let d = spec.dim()?;
    for (name, m) in [
        ("A", &spec.a),
        ("B", &spec.b),
        ("C", &spec.c),
        ("D", &spec.d),
    ] {
        require_unitary(name, m)?;
    }
    let id = ComplexMatrix::identity(d);
    let h = hadamard_gate().kron(&id);
    let first = &controlled_pair(&spec.a, &spec.b) * &h;
    let sigma0 = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]).kron(&spec.rho);
    let mid = &(&first * &sigma0) * &first.dagger();
    let id2 = ComplexMatrix::identity(2);
    let mut evolved = ComplexMatrix::zeros(2 * d, 2 * d);
    for k in spec.channel.kraus_ops() {
        let kk = id2.kron(k);
        evolved = &evolved + &(&(&kk * &mid) * &kk.dagger());
    }
    let s = phase_gate(spec.quadrature).kron(&id);
    let second = &(&h * &s) * &controlled_pair(&spec.c, &spec.d);
    let sigma = &(&second * &evolved) * &second.dagger();
    Ok(trace_of_product(&pauli_z().kron(&spec.e), &sigma).re)
}
