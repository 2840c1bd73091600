//! Direct measurement of quantum states, processes and measurements.
//!
//! Every matrix element of a density operator, a POVM element or a process
//! matrix can be read out individually with a *generalized Hadamard test*:
//! a qubit probe prepared in `|+⟩`, a `|0⟩`-controlled gate `A`, a
//! `|1⟩`-controlled gate `B`, an optional phase gate and a final Hadamard.
//! The expectation of `Z ⊗ E` is then `Re` (or `Im`) of `tr(A ρ B† E)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense complex matrices, Kronecker products and
//!   eigendecompositions (general and Hermitian).
//! - [`qmodel`]: density operators, POVM elements, Kraus channels, the
//!   process tensor `χ`, the basis-shift unitary and the uniform MUB state.
//! - [`hadamard`]: exact evaluation of the test, both algebraically and by
//!   simulating the explicit probe+system circuit.
//! - [`sampler`]: finite-shot Bernoulli model of the probe readout.
//! - [`protocols`]: element-by-element direct measurement of states, POVMs
//!   and processes, in the projector (MUB) and basis-shift variants.
//! - [`physicality`]: eigenvalue clipping of raw estimates and fidelity.
//! - [`pulselab`]: optical pulse-train emulator (modulator, asymmetric
//!   Mach-Zehnder interferometer, photodetector).
//! - [`peakfit`]: multi-peak waveform model, Levenberg-Marquardt fitting and
//!   the amplitude-to-matrix-element extraction.
//! - [`pipeline`]: the full pulse-train reproduction run for one state.
//!
//! The crate is `no_std` and only needs `alloc`. All file formats and the
//! command-line interface live in the `dmkit` companion crate.
//!
//! Ordering convention: joint probe/system operators are always written
//! `probe ⊗ system`, so `Z` on the probe is `Z ⊗ I_d`.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose: it rejects NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

// float math comes from `num_traits::Float` (libm); builds that pull in
// std through a dev-dependency make those imports look unused
extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod hadamard;
pub mod linalg;
pub mod peakfit;
pub mod physicality;
pub mod pipeline;
pub mod protocols;
pub mod pulselab;
pub mod qmodel;
pub mod sampler;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Seedable generator used for every stochastic operation in the crate.
///
/// ChaCha with 8 rounds; `seed_from_u64` expands the 64-bit seed with PCG32
/// exactly as `rand_core` documents, so streams are reproducible from any
/// language that implements the same two primitives.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    <SimRng as rand::SeedableRng>::seed_from_u64(seed)
}
