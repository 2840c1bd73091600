//! Emulation of the time-bin optical experiment.
//!
//! A `d`-level state is a train of `d` Gaussian field pulses with complex
//! amplitudes `c_k`, one every period `T`. An asymmetric Mach-Zehnder
//! interferometer (AMZI) with delay `m·T` interferes the train with a copy
//! of itself shifted by `m` slots, and a photodetector records the
//! intensity.
//!
//! The AMZI phase `φ` sits on the undelayed arm:
//! `out(t) = [e^{iφ} in(t) + in(t - τ)]/2`. In Hadamard-test terms the
//! delayed arm is the basis shift `A = U_shift(m)` and the undelayed arm is
//! `B = I` carrying the phase gate, so the slot-`(i+m)` peak intensity
//! differences give `ρ_{i,i+m} = c_i c̄_{i+m}` without conjugation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Ket;
use crate::qmodel::DensityOperator;
use crate::{rng_from_seed, Error, Result};

/// Pulse repetition period used throughout the reproduction (ps).
pub const DEFAULT_PERIOD_PS: f64 = 200.0;
/// Field-amplitude FWHM of each pulse (ps).
pub const DEFAULT_WIDTH_PS: f64 = 44.0;
/// Default sample step (ps).
pub const DEFAULT_DT_PS: f64 = 1.0;
/// Leading and trailing padding, in pulse widths.
pub const PADDING_WIDTHS: f64 = 3.0;
/// AMZI phases used by the extraction, in degrees.
pub const PHASES_DEG: [f64; 4] = [0.0, 90.0, 180.0, 270.0];

const NORM_TOL: f64 = 1e-10;
const GRID_TOL: f64 = 1e-9;

/// Uniformly sampled signal starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub dt: f64,
    pub t0: f64,
    pub samples: Vec<T>,
}

pub type FieldWaveform = Waveform<Complex64>;
pub type IntensityWaveform = Waveform<f64>;

impl<T> Waveform<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Index of the sample nearest to `t`, clamped to the trace.
    pub fn nearest_index(&self, t: f64) -> usize {
        let raw = ((t - self.t0) / self.dt).round();
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.len().saturating_sub(1))
        }
    }
}

impl IntensityWaveform {
    pub fn new(dt: f64, t0: f64, samples: Vec<f64>) -> Result<Self> {
        check_step(dt)?;
        if !t0.is_finite() || samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dt, t0, samples })
    }
}

impl FieldWaveform {
    pub fn new(dt: f64, t0: f64, samples: Vec<Complex64>) -> Result<Self> {
        check_step(dt)?;
        if !t0.is_finite()
            || samples
                .iter()
                .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite);
        }
        Ok(Self { dt, t0, samples })
    }

    /// `Σ |E|² dt`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dt
    }

    pub fn intensity(&self) -> IntensityWaveform {
        Waveform {
            dt: self.dt,
            t0: self.t0,
            samples: self.samples.iter().map(|z| z.norm_sqr()).collect(),
        }
    }
}

fn check_step(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sample step",
            reason: alloc::format!("{dt} must be positive"),
        });
    }
    Ok(())
}

/// Number of whole steps in `span`, or an error naming `what`.
fn whole_steps(span: f64, dt: f64, what: &'static str) -> Result<usize> {
    check_step(dt)?;
    let steps = span / dt;
    let rounded = steps.round();
    if span < 0.0 || (steps - rounded).abs() > GRID_TOL * rounded.max(1.0) {
        return Err(Error::InvalidParameter {
            name: what,
            reason: alloc::format!("{span} ps is not a whole number of {dt} ps samples"),
        });
    }
    Ok(rounded as usize)
}

/// Time-bin encoded state.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrainState {
    amplitudes: Vec<Complex64>,
    period_ps: f64,
    width_ps: f64,
}

impl PulseTrainState {
    pub fn new(amplitudes: Vec<Complex64>, period_ps: f64, width_ps: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidState {
                reason: "no pulses".into(),
            });
        }
        let norm2: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState {
                reason: alloc::format!("amplitude norm² is {norm2}, expected 1"),
            });
        }
        if !(width_ps > 0.0 && period_ps > width_ps) {
            return Err(Error::InvalidParameter {
                name: "pulse geometry",
                reason: alloc::format!(
                    "need period > width > 0, got T = {period_ps}, w = {width_ps}"
                ),
            });
        }
        Ok(Self {
            amplitudes,
            period_ps,
            width_ps,
        })
    }

    /// Normalizes `amplitudes` and uses the default geometry.
    pub fn from_unnormalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let ket = Ket::normalized(amplitudes)?;
        Self::new(
            ket.amplitudes().to_vec(),
            DEFAULT_PERIOD_PS,
            DEFAULT_WIDTH_PS,
        )
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn period_ps(&self) -> f64 {
        self.period_ps
    }

    pub fn width_ps(&self) -> f64 {
        self.width_ps
    }

    pub fn ket(&self) -> Ket {
        Ket::unnormalized(self.amplitudes.clone())
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator::pure(&self.ket())
    }
}

/// The five reference states used for reproduction runs, all `d = 3` with
/// the default geometry.
pub fn corpus() -> Vec<(String, PulseTrainState)> {
    let c = Complex64::new;
    let third = 2.0 * core::f64::consts::PI / 3.0;
    let sets: [(&str, [Complex64; 3]); 5] = [
        ("uniform", [c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]),
        ("one_hot", [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        ("two_pulse_90", [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]),
        ("ramp", [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]),
        (
            "phase_ramp",
            [
                c(1.0, 0.0),
                Complex64::from_polar(1.0, third),
                Complex64::from_polar(1.0, 2.0 * third),
            ],
        ),
    ];
    sets.iter()
        .map(|(name, amps)| {
            (
                String::from(*name),
                PulseTrainState::from_unnormalized(amps.to_vec()).expect("nonzero"),
            )
        })
        .collect()
}

/// Unit-peak Gaussian field envelope with FWHM `width`.
pub fn gaussian_envelope(t: f64, width: f64) -> f64 {
    (-4.0 * core::f64::consts::LN_2 * t * t / (width * width)).exp()
}

/// `E(t) = Σ_k c_k g(t - kT)`, sampled from `-pad` to `(d-1)T + pad` with
/// `pad ≥ 3w` rounded up to whole samples.
pub fn synth_pulse_train(state: &PulseTrainState, dt: f64) -> Result<FieldWaveform> {
    let per_period = whole_steps(state.period_ps, dt, "pulse period")?;
    let pad = (PADDING_WIDTHS * state.width_ps / dt).ceil() as usize;
    let len = 2 * pad + (state.dim() - 1) * per_period + 1;
    let t0 = -(pad as f64) * dt;
    let samples = (0..len)
        .map(|n| {
            let t = t0 + n as f64 * dt;
            state
                .amplitudes
                .iter()
                .enumerate()
                .map(|(k, ck)| {
                    ck * gaussian_envelope(t - k as f64 * state.period_ps, state.width_ps)
                })
                .sum()
        })
        .collect();
    FieldWaveform::new(dt, t0, samples)
}

/// Dual-parallel modulator drive.
#[derive(Debug, Clone, PartialEq)]
pub struct DpmDrive {
    pub dt: f64,
    pub t0: f64,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v_pi1: f64,
    pub v_pi2: f64,
    pub v_pi_ph: f64,
    pub v_ph: f64,
}

impl DpmDrive {
    pub fn validate(&self) -> Result<()> {
        check_step(self.dt)?;
        if self.v1.len() != self.v2.len() {
            return Err(Error::DimensionMismatch {
                op: "dpm drive",
                left: (self.v1.len(), 1),
                right: (self.v2.len(), 1),
            });
        }
        for (name, v) in [
            ("V_pi,1", self.v_pi1),
            ("V_pi,2", self.v_pi2),
            ("V_pi,ph", self.v_pi_ph),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: alloc::format!("{v} must be positive"),
                });
            }
        }
        Ok(())
    }

    /// Small-signal drive for `field`: `V₁ ∝ Re E`, `V₂ ∝ Im E`, bias
    /// `V_ph = V_π,ph/2`, scaled so that `|πV/V_π| ≤ max_phase`.
    pub fn for_field(field: &FieldWaveform, v_pi: f64, max_phase: f64) -> Result<Self> {
        let peak = field
            .samples
            .iter()
            .map(|z| z.re.abs().max(z.im.abs()))
            .fold(0.0, f64::max);
        let gain = if peak > 0.0 {
            max_phase * v_pi / (core::f64::consts::PI * peak)
        } else {
            0.0
        };
        let drive = Self {
            dt: field.dt,
            t0: field.t0,
            v1: field.samples.iter().map(|z| gain * z.re).collect(),
            v2: field.samples.iter().map(|z| gain * z.im).collect(),
            v_pi1: v_pi,
            v_pi2: v_pi,
            v_pi_ph: v_pi,
            v_ph: v_pi / 2.0,
        };
        drive.validate()?;
        Ok(drive)
    }
}

/// `sin(πV₁/V_π,1) + e^{iπV_ph/V_π,ph} sin(πV₂/V_π,2)` per sample.
pub fn dpm_output(drive: &DpmDrive) -> Result<FieldWaveform> {
    use core::f64::consts::PI;
    drive.validate()?;
    let bias = Complex64::from_polar(1.0, PI * drive.v_ph / drive.v_pi_ph);
    let samples = drive
        .v1
        .iter()
        .zip(&drive.v2)
        .map(|(&a, &b)| {
            Complex64::new((PI * a / drive.v_pi1).sin(), 0.0) + bias * (PI * b / drive.v_pi2).sin()
        })
        .collect();
    FieldWaveform::new(drive.dt, drive.t0, samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmziConfig {
    pub delay_ps: f64,
    pub phase_deg: f64,
}

fn interfere(input: &FieldWaveform, cfg: &AmziConfig, sign: f64) -> Result<FieldWaveform> {
    let shift = whole_steps(cfg.delay_ps, input.dt, "AMZI delay")?;
    let phase = Complex64::from_polar(1.0, cfg.phase_deg.to_radians());
    let len = input.len() + shift;
    let zero = Complex64::new(0.0, 0.0);
    let mut samples = vec![zero; len];
    for (n, out) in samples.iter_mut().enumerate() {
        let direct = input.samples.get(n).copied().unwrap_or(zero);
        let delayed = if n >= shift {
            input.samples.get(n - shift).copied().unwrap_or(zero)
        } else {
            zero
        };
        *out = (phase * direct + delayed * sign) * 0.5;
    }
    FieldWaveform::new(input.dt, input.t0, samples)
}

/// Detected AMZI port, `[e^{iφ} in(t) + in(t - τ)]/2`, extended by `τ`.
pub fn amzi(input: &FieldWaveform, cfg: &AmziConfig) -> Result<FieldWaveform> {
    interfere(input, cfg, 1.0)
}

/// The undetected port, `[e^{iφ} in(t) - in(t - τ)]/2`.
pub fn amzi_complementary(input: &FieldWaveform, cfg: &AmziConfig) -> Result<FieldWaveform> {
    interfere(input, cfg, -1.0)
}

/// `|E|²` plus white Gaussian noise of standard deviation `noise_sigma`
/// (absolute, in units of a unit-amplitude pulse peak).
pub fn detect(input: &FieldWaveform, noise_sigma: f64, seed: u64) -> Result<IntensityWaveform> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "noise sigma",
            reason: alloc::format!("{noise_sigma} must be non-negative"),
        });
    }
    let mut out = input.intensity();
    if noise_sigma > 0.0 {
        let mut rng = rng_from_seed(seed);
        for x in out.samples.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *x += noise_sigma * n;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn state(amps: &[Complex64]) -> PulseTrainState {
        PulseTrainState::from_unnormalized(amps.to_vec()).unwrap()
    }

    fn drive(v1: f64, v2: f64, v_ph: f64) -> DpmDrive {
        DpmDrive {
            dt: 1.0,
            t0: 0.0,
            v1: vec![v1],
            v2: vec![v2],
            v_pi1: 3.0,
            v_pi2: 4.0,
            v_pi_ph: 5.0,
            v_ph,
        }
    }

    #[test]
    fn dpm_examples() {
        assert_eq!(
            dpm_output(&drive(0.0, 0.0, 1.3)).unwrap().samples[0],
            c(0.0, 0.0)
        );
        let peak = dpm_output(&drive(1.5, 0.0, 0.0)).unwrap().samples[0];
        assert!((peak - c(1.0, 0.0)).norm() < 1e-15);
        let (v1, v2) = (0.1, -0.15);
        let exact = dpm_output(&drive(v1, v2, 2.5)).unwrap().samples[0];
        let pi = core::f64::consts::PI;
        let linear = c(pi * v1 / 3.0, pi * v2 / 4.0);
        assert!((exact - linear).norm() / linear.norm() < 1e-2);
    }

    #[test]
    fn dpm_small_signal_linearity() {
        let pi = core::f64::consts::PI;
        for &(r1, r2) in &[(0.01, 0.0), (-0.009, 0.005), (0.003, -0.01)] {
            let exact = dpm_output(&drive(3.0 * r1, 4.0 * r2, 2.5)).unwrap().samples[0];
            let linear = c(pi * r1, pi * r2);
            assert!((exact - linear).norm() / linear.norm() < 1e-3);
        }
    }

    #[test]
    fn dpm_reproduces_pulse_train() {
        let field = synth_pulse_train(&corpus()[4].1, 1.0).unwrap();
        let d = DpmDrive::for_field(&field, 5.0, 0.01).unwrap();
        let out = dpm_output(&d).unwrap();
        let gain = out.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
            / field.samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in out.samples.iter().zip(&field.samples) {
            assert!((a / gain - b).norm() < 1e-4);
        }
    }

    #[test]
    fn dpm_rejects_bad_drive() {
        let mut d = drive(0.1, 0.1, 0.0);
        d.v_pi2 = 0.0;
        assert!(dpm_output(&d).is_err());
        let mut d = drive(0.1, 0.1, 0.0);
        d.v2.push(0.0);
        assert!(dpm_output(&d).is_err());
    }

    #[test]
    fn single_pulse_at_origin() {
        let w = synth_pulse_train(&state(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]), 1.0).unwrap();
        let i0 = w.nearest_index(0.0);
        assert_eq!(w.time(i0), 0.0);
        assert_eq!(w.samples[i0], c(1.0, 0.0));
        let (imax, _) = w
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        assert_eq!(imax, i0);
        assert!(w.samples[w.nearest_index(200.0)].norm() < 1e-12);
    }

    #[test]
    fn uniform_train_geometry() {
        let s = state(&[c(1.0, 0.0); 3]);
        let w = synth_pulse_train(&s, 1.0).unwrap();
        let peaks: Vec<f64> = (0..3)
            .map(|k| w.samples[w.nearest_index(200.0 * k as f64)].norm())
            .collect();
        for p in &peaks {
            assert!((p / peaks[0] - 1.0).abs() < 1e-12);
        }
        let mid = w.samples[w.nearest_index(100.0)].norm();
        assert!(mid < 1e-2 * peaks[0]);
        // padding: ≥ 3w on both sides
        assert!(-w.t0 >= 3.0 * 44.0);
        assert!(w.time(w.len() - 1) - 400.0 >= 3.0 * 44.0);
        assert!((gaussian_envelope(22.0, 44.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn misaligned_step_rejected() {
        let s = state(&[c(1.0, 0.0); 3]);
        assert!(synth_pulse_train(&s, 3.0).is_err());
        let w = synth_pulse_train(&s, 0.5).unwrap();
        assert!(amzi(
            &w,
            &AmziConfig {
                delay_ps: 200.25,
                phase_deg: 0.0
            }
        )
        .is_err());
    }

    #[test]
    fn amzi_trivial_cases() {
        let w = synth_pulse_train(&corpus()[3].1, 1.0).unwrap();
        let same = amzi(
            &w,
            &AmziConfig {
                delay_ps: 0.0,
                phase_deg: 0.0,
            },
        )
        .unwrap();
        for (a, b) in same.samples.iter().zip(&w.samples) {
            assert!((a - b).norm() < 1e-15);
        }
        let dark = amzi(
            &w,
            &AmziConfig {
                delay_ps: 0.0,
                phase_deg: 180.0,
            },
        )
        .unwrap();
        assert!(dark.samples.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn amzi_delay_splits_pulse() {
        // direct convolution oracle with the same padding
        let s = state(&[c(1.0, 0.0)]);
        let w = synth_pulse_train(&s, 1.0).unwrap();
        let out = amzi(
            &w,
            &AmziConfig {
                delay_ps: 200.0,
                phase_deg: 0.0,
            },
        )
        .unwrap();
        assert_eq!(out.len(), w.len() + 200);
        for n in 0..out.len() {
            let t = out.time(n);
            let expected = 0.5 * (gaussian_envelope(t, 44.0) + gaussian_envelope(t - 200.0, 44.0));
            // the synthesized input stops at 3w, where g ≈ 1e-11
            assert!((out.samples[n] - c(expected, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn peak_differences_read_coherences() {
        let s = &corpus()[4].1;
        let field = synth_pulse_train(s, 1.0).unwrap();
        let peak_scale = detect(&field, 0.0, 0).unwrap().samples[field.nearest_index(0.0)]
            / s.amplitudes()[0].norm_sqr();
        let amps = s.amplitudes();
        let read = |delay: f64, slot: usize| -> Complex64 {
            let i: Vec<f64> = PHASES_DEG
                .iter()
                .map(|&phase_deg| {
                    let out = detect(
                        &amzi(
                            &field,
                            &AmziConfig {
                                delay_ps: delay,
                                phase_deg,
                            },
                        )
                        .unwrap(),
                        0.0,
                        0,
                    )
                    .unwrap();
                    out.samples[out.nearest_index(200.0 * slot as f64)]
                })
                .collect();
            c(i[0] - i[2], i[1] - i[3])
        };
        // ρ_{k,k+1} = c_k c̄_{k+1}
        for k in 0..2 {
            let expected = amps[k] * amps[k + 1].conj() * peak_scale;
            assert!((read(200.0, k + 1) - expected).norm() < 1e-6);
        }
        let expected = amps[0] * amps[2].conj() * peak_scale;
        assert!((read(400.0, 2) - expected).norm() < 1e-6);
    }

    #[test]
    fn detect_examples() {
        let zero = FieldWaveform::new(1.0, 0.0, vec![c(0.0, 0.0); 10]).unwrap();
        assert!(detect(&zero, 0.0, 3)
            .unwrap()
            .samples
            .iter()
            .all(|&x| x == 0.0));
        let pulse = synth_pulse_train(&state(&[c(1.0, 0.0)]), 1.0).unwrap();
        let i = detect(&pulse, 0.0, 3).unwrap();
        assert_eq!(i.samples[i.nearest_index(0.0)], 1.0);
        let flat = FieldWaveform::new(1.0, 0.0, vec![c(0.0, 0.0); 20_000]).unwrap();
        let noisy = detect(&flat, 0.01, 11).unwrap();
        let n = noisy.len() as f64;
        let mean = noisy.samples.iter().sum::<f64>() / n;
        let var = noisy
            .samples
            .iter()
            .map(|x| (x - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        assert!((var / 1e-4 - 1.0).abs() < 0.2);
        assert!(detect(&flat, -1.0, 1).is_err());
    }

    #[test]
    fn state_validation() {
        assert!(PulseTrainState::new(vec![c(1.0, 0.0), c(1.0, 0.0)], 200.0, 44.0).is_err());
        assert!(PulseTrainState::new(vec![c(1.0, 0.0)], 40.0, 44.0).is_err());
        assert!(PulseTrainState::new(vec![], 200.0, 44.0).is_err());
        for (_, s) in corpus() {
            let n: f64 = s.amplitudes().iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
            assert_eq!(s.dim(), 3);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn amzi_ports_conserve_energy(seed in any::<u64>(), m in 0usize..3, phase in 0u8..4) {
            let mut rng = rng_from_seed(seed);
            let ket = crate::qmodel::random::ket(3, &mut rng);
            let s = PulseTrainState::new(ket.amplitudes().to_vec(), 200.0, 44.0).unwrap();
            let field = synth_pulse_train(&s, 1.0).unwrap();
            let cfg = AmziConfig { delay_ps: 200.0 * m as f64, phase_deg: PHASES_DEG[phase as usize] };
            let a = amzi(&field, &cfg).unwrap();
            let b = amzi_complementary(&field, &cfg).unwrap();
            let e_in = field.energy();
            prop_assert!((a.energy() + b.energy() - e_in).abs() < 1e-10 * e_in);
            prop_assert!(a.energy() <= e_in * (1.0 + 1e-12));
        }
    }
}
