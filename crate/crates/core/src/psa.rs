//! N-step phase-shifting algorithms as temporal quadrature filters.
//!
//! Sign convention: the analytic signal is
//!
//! ```text
//! S(x, y) = sum_n c_n * exp(-i*n*omega0) * I(x, y, n)
//! ```
//!
//! and the frequency transfer function is `H(w) = sum_n c_n * exp(-i*n*(omega0 + w))`,
//! so `w` measures detuning from the passband at `w = -omega0`, the background sits
//! at `w = 0`, and the conjugate of the signal is rejected by a zero at `w = +omega0`.
//! Under this convention the Schwider-Hariharan combined taps are
//! `{1, -2i, -2, 2i, 1}`, the complex conjugate of the form often printed with
//! `exp(+i*n*omega0)`; phases come out with the sign of the fringe model.

use crate::error::{Error, Result};
use crate::field::{ComplexField, InterferogramStack, PhaseMap};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Base coefficients `c_n` plus the nominal step `omega0`.
///
/// Coefficients are stored as complex numbers: the classic algorithms have real
/// `c_n`, but specs designed from arbitrary FTF zeros generally do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsaSpec {
    coefficients: Vec<Complex64>,
    nominal_step: f64,
}

impl PsaSpec {
    pub fn new(coefficients: Vec<Complex64>, nominal_step: f64) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::Invalid(format!(
                "a PSA needs at least 2 taps, got {}",
                coefficients.len()
            )));
        }
        if !nominal_step.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("PSA coefficients and step must be finite".into()));
        }
        if coefficients.iter().all(|c| c.norm() == 0.0) {
            return Err(Error::Invalid("PSA coefficients are all zero".into()));
        }
        Ok(Self {
            coefficients,
            nominal_step,
        })
    }

    pub fn from_real(coefficients: &[f64], nominal_step: f64) -> Result<Self> {
        Self::new(
            coefficients.iter().map(|&c| Complex64::new(c, 0.0)).collect(),
            nominal_step,
        )
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn nominal_step(&self) -> f64 {
        self.nominal_step
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Combined taps `h_n = c_n * exp(-i*n*omega0)` applied to the frames.
    pub fn combined_taps(&self) -> Vec<Complex64> {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(n, c)| c * Complex64::from_polar(1.0, -(n as f64) * self.nominal_step))
            .collect()
    }

    /// `sum |c_n|`, the scale used by relative tolerances.
    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm()).sum()
    }

    /// Same spec with every coefficient multiplied by `gamma`.
    pub fn scaled(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.coefficients.iter().map(|c| c * gamma).collect(),
            self.nominal_step,
        )
    }

    /// `|H(0)| = |sum c_n exp(-i*n*omega0)|`.
    pub fn background_residual(&self) -> f64 {
        ftf_eval(self, 0.0).norm()
    }

    /// True when `|H(0)|` is below `1e-12` relative to `sum |c_n|`.
    pub fn rejects_background(&self) -> bool {
        self.background_residual() < 1e-12 * self.l1_norm().max(1.0)
    }
}

/// The 5-step Schwider-Hariharan algorithm, `c = {1, 2, 2, 2, 1}`, `omega0 = pi/2`.
pub fn sh5_spec() -> PsaSpec {
    PsaSpec::from_real(&[1.0, 2.0, 2.0, 2.0, 1.0], FRAC_PI_2).expect("static taps are valid")
}

/// Frequency transfer function at detuning `omega` (rad/frame).
pub fn ftf_eval(spec: &PsaSpec, omega: f64) -> Complex64 {
    let step = spec.nominal_step + omega;
    spec.coefficients
        .iter()
        .enumerate()
        .map(|(n, c)| c * Complex64::from_polar(1.0, -(n as f64) * step))
        .sum()
}

/// One sample of an FTF sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtfSample {
    pub omega: f64,
    pub value: Complex64,
}

/// Samples `H` on `samples` evenly spaced points of `[-pi, pi)`.
pub fn ftf_sweep(spec: &PsaSpec, samples: usize) -> Vec<FtfSample> {
    (0..samples)
        .map(|k| {
            let omega = -PI + 2.0 * PI * k as f64 / samples as f64;
            FtfSample {
                omega,
                value: ftf_eval(spec, omega),
            }
        })
        .collect()
}

/// Builds a PSA whose FTF vanishes at each requested detuning (repeat a zero for
/// multiplicity). Expands `prod_k (1 - exp(i*(w + z_k)))` in powers of `exp(i*w)`
/// and mirrors `w -> -w` into this crate's convention; the expanded coefficients
/// are returned unnormalized.
pub fn taps_from_zeros(zeros: &[f64], nominal_step: f64) -> Result<PsaSpec> {
    if zeros.is_empty() {
        return Err(Error::Invalid("at least one FTF zero is required".into()));
    }
    if !nominal_step.is_finite() || zeros.iter().any(|z| !z.is_finite()) {
        return Err(Error::Invalid("zeros and step must be finite".into()));
    }
    let passband = crate::phase::wrap(-nominal_step);
    for &z in zeros {
        if crate::phase::wrap(z - passband).abs() < 1e-12 {
            return Err(Error::PassbandZeroed(-nominal_step));
        }
    }

    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &z in zeros {
        let root = Complex64::from_polar(1.0, z);
        let mut next = vec![Complex64::default(); poly.len() + 1];
        for (m, p) in poly.iter().enumerate() {
            next[m] += p;
            next[m + 1] -= root * p;
        }
        poly = next;
    }

    let coefficients = poly
        .iter()
        .enumerate()
        .map(|(n, p)| p * Complex64::from_polar(1.0, n as f64 * nominal_step))
        .collect();
    let spec = PsaSpec::new(coefficients, nominal_step)?;
    if ftf_eval(&spec, -nominal_step).norm() < 1e-12 * spec.l1_norm() {
        return Err(Error::PassbandZeroed(-nominal_step));
    }
    Ok(spec)
}

/// Temporal demodulation `S = sum_n c_n exp(-i*n*omega0) I(n)`.
pub fn demodulate_temporal(stack: &InterferogramStack, spec: &PsaSpec) -> Result<ComplexField> {
    if spec.len() != stack.len() {
        return Err(Error::FrameCountMismatch {
            psa: spec.len(),
            stack: stack.len(),
        });
    }
    if (spec.nominal_step() - stack.nominal_step()).abs() > 1e-12 {
        return Err(Error::StepMismatch {
            psa: spec.nominal_step(),
            stack: stack.nominal_step(),
        });
    }
    let taps = spec.combined_taps();
    let mut out = vec![Complex64::default(); stack.width() * stack.height()];
    for (tap, frame) in taps.iter().zip(stack.frames()) {
        for (acc, &v) in out.iter_mut().zip(frame) {
            *acc += tap * v;
        }
    }
    ComplexField::new(stack.width(), stack.height(), out)
}

/// Wrapped phase of a complex field plus a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedPhase {
    pub phase: PhaseMap,
    /// `false` where `|S|` fell below `MODULUS_FLOOR * max|S|`; phase is 0 there.
    pub valid: Vec<bool>,
}

impl ExtractedPhase {
    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

/// Relative modulus floor under which a pixel's phase is not trusted.
pub const MODULUS_FLOOR: f64 = 1e-9;

pub fn extract_phase(field: &ComplexField) -> ExtractedPhase {
    let max = field.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = MODULUS_FLOOR * max;
    let mut valid = Vec::with_capacity(field.values().len());
    let values = field
        .values()
        .iter()
        .map(|v| {
            let ok = max > 0.0 && v.norm() >= floor;
            valid.push(ok);
            if ok {
                crate::phase::wrap(v.arg())
            } else {
                0.0
            }
        })
        .collect();
    ExtractedPhase {
        phase: PhaseMap::wrapped(field.width(), field.height(), values)
            .expect("wrapped values are in range"),
        valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_stack, synthesize_wavefront, StackSynthesis, Wavefront};
    use crate::phase::wrap;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn sh5_taps() {
        let s = sh5_spec();
        let re: Vec<f64> = s.coefficients().iter().map(|c| c.re).collect();
        assert_eq!(re, vec![1.0, 2.0, 2.0, 2.0, 1.0]);
        assert_eq!(s.nominal_step(), FRAC_PI_2);
        let expect = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -2.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(1.0, 0.0),
        ];
        for (h, e) in s.combined_taps().iter().zip(expect) {
            assert!(close(*h, e, 1e-15));
        }
        let total: Complex64 = s.combined_taps().iter().sum();
        assert!(total.norm() < 1e-14);
        assert!(s.rejects_background());
        let sum: f64 = s.coefficients().iter().map(|c| c.re).sum();
        assert_eq!(sum, 8.0);
    }

    #[test]
    fn sh5_ftf_values() {
        let s = sh5_spec();
        assert!(ftf_eval(&s, 0.0).norm() < 1e-14);
        assert!(ftf_eval(&s, FRAC_PI_2).norm() < 1e-14);
        assert!(ftf_eval(&s, PI).norm() < 1e-14);
        assert!(close(ftf_eval(&s, -FRAC_PI_2), Complex64::new(8.0, 0.0), 1e-14));
    }

    #[test]
    fn sh5_double_zero_order() {
        // |H(pi/2 + d)| should scale as d^2: halving d quarters the modulus
        let s = sh5_spec();
        for d in [1e-2, 1e-3] {
            let r = ftf_eval(&s, FRAC_PI_2 + d).norm() / ftf_eval(&s, FRAC_PI_2 + d / 2.0).norm();
            assert!((r - 4.0).abs() < 0.05, "ratio {r}");
        }
    }

    #[test]
    fn sh5_from_zeros() {
        let s = taps_from_zeros(&[0.0, FRAC_PI_2, FRAC_PI_2, PI], FRAC_PI_2).unwrap();
        let c0 = s.coefficients()[0];
        for (c, e) in s.coefficients().iter().zip([1.0, 2.0, 2.0, 2.0, 1.0]) {
            assert!(close(c / c0, Complex64::new(e, 0.0), 1e-12), "{c}");
        }
    }

    #[test]
    fn single_background_zero() {
        for step in [0.3, FRAC_PI_2, 2.0] {
            let s = taps_from_zeros(&[0.0], step).unwrap();
            assert_eq!(s.len(), 2);
            assert!(s.background_residual() < 1e-15);
        }
    }

    #[test]
    fn zeros_at_background_and_nyquist() {
        // (1 - w)(1 + w) = 1 - w^2 expanded by hand
        let s = taps_from_zeros(&[0.0, PI], FRAC_PI_2).unwrap();
        assert_eq!(s.len(), 3);
        let oracle = [1.0, 0.0, -1.0];
        for (n, (h, p)) in s.combined_taps().iter().zip(oracle).enumerate() {
            assert!(close(*h, Complex64::new(p, 0.0), 1e-15), "tap {n}: {h}");
        }
        assert!(ftf_eval(&s, 0.0).norm() < 1e-12);
        assert!(ftf_eval(&s, PI).norm() < 1e-12);
    }

    #[test]
    fn passband_zero_is_refused() {
        assert!(matches!(
            taps_from_zeros(&[0.0, -FRAC_PI_2], FRAC_PI_2),
            Err(Error::PassbandZeroed(_))
        ));
        assert!(matches!(
            taps_from_zeros(&[3.0 * FRAC_PI_2], FRAC_PI_2),
            Err(Error::PassbandZeroed(_))
        ));
        assert!(taps_from_zeros(&[], FRAC_PI_2).is_err());
    }

    #[test]
    fn sweep_grid() {
        let sw = ftf_sweep(&sh5_spec(), 1024);
        assert_eq!(sw.len(), 1024);
        assert_eq!(sw[0].omega, -PI);
        assert_eq!(sw[512].omega, 0.0);
        assert!((sw[768].omega - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn flat_stack_gives_constant_four() {
        let phi = crate::field::PhaseMap::zeros(8, 8).unwrap();
        let mut p = StackSynthesis::nominal(5, FRAC_PI_2);
        p.background = 2.0;
        p.contrast = 1.0;
        let s = demodulate_temporal(&generate_stack(&phi, &p).unwrap(), &sh5_spec()).unwrap();
        for v in s.values() {
            assert!(close(*v, Complex64::new(4.0, 0.0), 1e-14));
        }
    }

    #[test]
    fn exact_quadrature_on_defocus() {
        let phi = synthesize_wavefront(&Wavefront::Defocus, 3.0, 64, 64).unwrap();
        let stack = generate_stack(&phi, &StackSynthesis::nominal(5, FRAC_PI_2)).unwrap();
        let s = demodulate_temporal(&stack, &sh5_spec()).unwrap();
        let ext = extract_phase(&s);
        for (p, t) in ext.phase.values().iter().zip(phi.values()) {
            assert!(wrap(p - t).abs() < 1e-10);
        }
        for v in s.values() {
            assert!((v.norm() - 400.0).abs() < 1e-9);
        }
        assert_eq!(ext.invalid_count(), 0);
    }

    #[test]
    fn mismatched_inputs_are_refused() {
        let phi = crate::field::PhaseMap::zeros(4, 4).unwrap();
        let stack = generate_stack(&phi, &StackSynthesis::nominal(4, FRAC_PI_2)).unwrap();
        assert!(matches!(
            demodulate_temporal(&stack, &sh5_spec()),
            Err(Error::FrameCountMismatch { psa: 5, stack: 4 })
        ));
        let stack = generate_stack(&phi, &StackSynthesis::nominal(5, 1.0)).unwrap();
        assert!(matches!(
            demodulate_temporal(&stack, &sh5_spec()),
            Err(Error::StepMismatch { .. })
        ));
    }

    #[test]
    fn low_modulus_pixels_are_flagged() {
        let f = ComplexField::new(
            2,
            2,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1e-12),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let e = extract_phase(&f);
        assert_eq!(e.valid, vec![true, false, true, false]);
        assert_eq!(e.phase.values()[1], 0.0);
        assert_eq!(e.phase.values()[2], -PI);
    }
}
