//! Conjugate-leak model for phase-step nonlinearities.
//!
//! With background rejection, a PSA applied to frames with step deviations
//! `eps_n` returns `S = A1*exp(i*phi) + A2*exp(-i*phi)` where
//!
//! ```text
//! A1 = (b/2) * sum_n c_n * exp(i*eps_n)
//! A2 = (b/2) * sum_n c_n * exp(-i*(2*n*omega0 + eps_n))
//! ```
//!
//! The spurious conjugate `A2` shows up as a double-frequency ripple in the
//! demodulated phase, bounded by `asin(|A2|/|A1|)`.

use crate::error::{Error, Result};
use crate::field::{ComplexField, ErrorSchedule, PhaseMap};
use crate::phase::wrap;
use crate::psa::PsaSpec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Signal and conjugate amplitudes for one PSA / schedule / contrast triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePair {
    pub a1: Complex64,
    pub a2: Complex64,
    /// Contrast `b` the amplitudes were computed with (1 for hand-built pairs).
    pub b: f64,
}

impl ConjugatePair {
    pub fn new(a1: Complex64, a2: Complex64) -> Self {
        Self { a1, a2, b: 1.0 }
    }

    /// `|A2| / |A1|`.
    pub fn leak_ratio(&self) -> f64 {
        self.a2.norm() / self.a1.norm()
    }

    /// `arg(A2 / A1)`.
    pub fn relative_phase(&self) -> f64 {
        wrap((self.a2 / self.a1).arg())
    }

    pub fn is_well_posed(&self) -> bool {
        self.a1.norm() > 0.0 && self.leak_ratio() < 1.0
    }

    /// Model field `A1*exp(i*phi) + A2*exp(-i*phi)` at one phase value.
    #[inline]
    pub fn field_at(&self, phi: f64) -> Complex64 {
        self.a1 * Complex64::from_polar(1.0, phi) + self.a2 * Complex64::from_polar(1.0, -phi)
    }

    /// Worst-case peak-to-valley of the ripple, `2*asin(r)` radians.
    pub fn ripple_pv(&self) -> f64 {
        2.0 * self.leak_ratio().min(1.0).asin()
    }
}

pub fn conjugate_amplitudes(
    spec: &PsaSpec,
    errors: &ErrorSchedule,
    contrast: f64,
) -> Result<ConjugatePair> {
    if errors.len() != spec.len() {
        return Err(Error::ScheduleLength {
            expected: spec.len(),
            got: errors.len(),
        });
    }
    if !(contrast.is_finite() && contrast > 0.0) {
        return Err(Error::Invalid(format!("contrast b must be > 0, got {contrast}")));
    }
    if !spec.rejects_background() {
        return Err(Error::NoBackgroundRejection(spec.background_residual()));
    }
    let half_b = contrast / 2.0;
    let step = spec.nominal_step();
    let mut a1 = Complex64::default();
    let mut a2 = Complex64::default();
    for (n, (c, eps)) in spec.coefficients().iter().zip(errors.deviations()).enumerate() {
        a1 += c * Complex64::from_polar(1.0, *eps);
        a2 += c * Complex64::from_polar(1.0, -(2.0 * n as f64 * step + eps));
    }
    let pair = ConjugatePair {
        a1: a1 * half_b,
        a2: a2 * half_b,
        b: contrast,
    };
    if pair.a1.norm() <= 1e-12 * half_b * spec.l1_norm() {
        return Err(Error::DegenerateSignal);
    }
    Ok(pair)
}

/// `phi - arg(A1*exp(i*phi) + A2*exp(-i*phi))`, wrapped. Includes the `-arg(A1)`
/// piston.
pub fn predicted_error_map(truth: &PhaseMap, pair: &ConjugatePair) -> Result<PhaseMap> {
    if pair.a1.norm() == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let r = pair.leak_ratio();
    if r >= 1.0 {
        return Err(Error::ConjugateDominates(r));
    }
    let values = truth
        .values()
        .iter()
        .map(|&phi| wrap(phi - pair.field_at(phi).arg()))
        .collect();
    PhaseMap::wrapped(truth.width(), truth.height(), values)
}

/// Result of fitting `S ~ alpha*exp(i*phi) + beta*exp(-i*phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakEstimate {
    pub alpha: Complex64,
    pub beta: Complex64,
    /// `|beta / alpha|`.
    pub leak_ratio: f64,
    /// `arg(beta / alpha)`.
    pub relative_phase: f64,
    /// `|sum exp(-2i*phi)| / pixels`; 1 means the two bases are collinear.
    pub basis_overlap: f64,
}

/// Overlap above which the two-basis fit is refused (condition number ~39).
pub const MAX_BASIS_OVERLAP: f64 = 0.95;

/// Global least-squares fit of a demodulated field to the two-basis leak model.
pub fn measure_leak(field: &ComplexField, truth: &PhaseMap) -> Result<LeakEstimate> {
    truth.same_dims(field.width(), field.height())?;
    let count = truth.values().len() as f64;
    let mut overlap = Complex64::default();
    let mut proj_u = Complex64::default();
    let mut proj_v = Complex64::default();
    for (s, &phi) in field.values().iter().zip(truth.values()) {
        let u = Complex64::from_polar(1.0, phi);
        overlap += u.conj() * u.conj();
        proj_u += u.conj() * s;
        proj_v += u * s;
    }
    let rho = overlap.norm() / count;
    if rho > MAX_BASIS_OVERLAP {
        return Err(Error::IllConditioned {
            overlap: rho,
            limit: MAX_BASIS_OVERLAP,
        });
    }
    // Gram matrix [[N, G], [conj(G), N]] with G = sum exp(-2i*phi)
    let det = count * count - overlap.norm_sqr();
    let alpha = (proj_u * count - overlap * proj_v) / det;
    let beta = (proj_v * count - overlap.conj() * proj_u) / det;
    if alpha.norm() == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    Ok(LeakEstimate {
        alpha,
        beta,
        leak_ratio: beta.norm() / alpha.norm(),
        relative_phase: wrap((beta / alpha).arg()),
        basis_overlap: rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_stack, synthesize_wavefront, StackSynthesis, Wavefront};
    use crate::psa::{demodulate_temporal, ftf_eval, sh5_spec};
    use std::f64::consts::{FRAC_PI_2, PI};

    const EPS: [f64; 5] = [0.0, 0.1, -0.15, 0.2, -0.05];

    fn ramp(width: usize, fringes: f64) -> PhaseMap {
        PhaseMap::from_fn(width, 4, |x, _| 2.0 * PI * fringes * x as f64 / width as f64).unwrap()
    }

    #[test]
    fn sh5_without_errors() {
        let p = conjugate_amplitudes(&sh5_spec(), &ErrorSchedule::zeros(5), 1.0).unwrap();
        assert!((p.a1 - Complex64::new(4.0, 0.0)).norm() < 1e-15);
        assert!(p.a2.norm() < 1e-14);
    }

    #[test]
    fn sh5_with_errors_matches_direct_sum() {
        let sched = ErrorSchedule::new(EPS.to_vec()).unwrap();
        let p = conjugate_amplitudes(&sh5_spec(), &sched, 1.0).unwrap();
        // independent real-arithmetic evaluation of the two sums
        let c = [1.0, 2.0, 2.0, 2.0, 1.0];
        let (mut r1, mut i1, mut r2, mut i2) = (0.0, 0.0, 0.0, 0.0);
        for n in 0..5 {
            r1 += c[n] * EPS[n].cos();
            i1 += c[n] * EPS[n].sin();
            let ang = -(2.0 * n as f64 * FRAC_PI_2 + EPS[n]);
            r2 += c[n] * ang.cos();
            i2 += c[n] * ang.sin();
        }
        assert!((p.a1 - Complex64::new(r1, i1) * 0.5).norm() < 1e-14);
        assert!((p.a2 - Complex64::new(r2, i2) * 0.5).norm() < 1e-14);
        assert!(p.a2.norm() > 1e-3);
    }

    #[test]
    fn conjugate_is_ftf_at_plus_step_without_errors() {
        // any background-rejecting spec: A2 = (b/2) H(+omega0)
        let spec = crate::psa::taps_from_zeros(&[0.0, 0.4, 1.3], 0.9).unwrap();
        let p = conjugate_amplitudes(&spec, &ErrorSchedule::zeros(spec.len()), 3.0).unwrap();
        assert!((p.a2 - ftf_eval(&spec, 0.9) * 1.5).norm() < 1e-12);
        let spec = crate::psa::taps_from_zeros(&[0.0, FRAC_PI_2], FRAC_PI_2).unwrap();
        let p = conjugate_amplitudes(&spec, &ErrorSchedule::zeros(3), 1.0).unwrap();
        assert!(p.a2.norm() < 1e-14);
    }

    #[test]
    fn amplitudes_scale_with_contrast() {
        let sched = ErrorSchedule::new(EPS.to_vec()).unwrap();
        let p1 = conjugate_amplitudes(&sh5_spec(), &sched, 1.0).unwrap();
        let p7 = conjugate_amplitudes(&sh5_spec(), &sched, 7.0).unwrap();
        assert!((p7.a1 - p1.a1 * 7.0).norm() < 1e-13);
        assert!((p7.leak_ratio() - p1.leak_ratio()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let sched = ErrorSchedule::zeros(4);
        assert!(matches!(
            conjugate_amplitudes(&sh5_spec(), &sched, 1.0),
            Err(Error::ScheduleLength { .. })
        ));
        // c = {1, -1} at step pi: A1 = (1 - 1)/2 = 0
        let spec = PsaSpec::from_real(&[1.0, 1.0], PI).unwrap();
        assert!(spec.rejects_background());
        assert!(matches!(
            conjugate_amplitudes(&spec, &ErrorSchedule::zeros(2), 1.0),
            Ok(_)
        ));
        let spec = PsaSpec::from_real(&[1.0, -1.0], 0.0).unwrap();
        assert!(matches!(
            conjugate_amplitudes(&spec, &ErrorSchedule::zeros(2), 1.0),
            Err(Error::DegenerateSignal)
        ));
        let spec = PsaSpec::from_real(&[1.0, 1.0, 1.0], 0.3).unwrap();
        assert!(matches!(
            conjugate_amplitudes(&spec, &ErrorSchedule::zeros(3), 1.0),
            Err(Error::NoBackgroundRejection(_))
        ));
    }

    #[test]
    fn no_conjugate_no_error() {
        let m = predicted_error_map(&ramp(64, 3.0), &ConjugatePair::new(1.0.into(), 0.0.into())).unwrap();
        assert!(m.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn ripple_peak_is_asin_r() {
        // dense grid maximization of -arg(1 + 0.1 exp(-2i phi))
        let truth = PhaseMap::from_fn(20_000, 2, |x, _| 2.0 * PI * x as f64 / 20_000.0).unwrap();
        let m = predicted_error_map(&truth, &ConjugatePair::new(1.0.into(), 0.1.into())).unwrap();
        let max = m.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((max - 0.1f64.asin()).abs() < 1e-6, "{max}");
        assert!((0.1f64.asin() - 0.100167).abs() < 1e-6);
    }

    #[test]
    fn ripple_has_period_pi() {
        let pair = ConjugatePair::new(Complex64::from_polar(2.0, 0.3), Complex64::from_polar(0.2, -1.1));
        let t = ramp(256, 2.5);
        let shifted = PhaseMap::from_fn(256, 4, |x, y| t.get(x, y) + PI).unwrap();
        let a = predicted_error_map(&t, &pair).unwrap();
        let b = predicted_error_map(&shifted, &pair).unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            assert!(wrap(p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_identity() {
        let pair = ConjugatePair::new(Complex64::from_polar(1.5, 0.7), Complex64::from_polar(0.3, 2.0));
        let t = ramp(128, 1.7);
        let m = predicted_error_map(&t, &pair).unwrap();
        let (r, d) = (pair.leak_ratio(), pair.relative_phase());
        for (e, &phi) in m.values().iter().zip(t.values()) {
            let alt = -(Complex64::new(1.0, 0.0) + Complex64::from_polar(r, d - 2.0 * phi)).arg()
                - pair.a1.arg();
            assert!(wrap(e - alt).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_conjugate_is_refused() {
        let t = ramp(16, 1.0);
        assert!(matches!(
            predicted_error_map(&t, &ConjugatePair::new(1.0.into(), 1.0.into())),
            Err(Error::ConjugateDominates(_))
        ));
    }

    #[test]
    fn leak_fit_recovers_model() {
        let t = ramp(256, 3.3);
        let pair = ConjugatePair::new(1.0.into(), 0.1.into());
        let f = ComplexField::from_fn(256, 4, |x, y| pair.field_at(t.get(x, y))).unwrap();
        let est = measure_leak(&f, &t).unwrap();
        assert!((est.leak_ratio - 0.1).abs() < 1e-10);
        let pure = ComplexField::from_fn(256, 4, |x, y| Complex64::from_polar(1.0, t.get(x, y))).unwrap();
        assert!(measure_leak(&pure, &t).unwrap().leak_ratio < 1e-12);
    }

    #[test]
    fn leak_fit_matches_prediction_end_to_end() {
        let phi = synthesize_wavefront(&Wavefront::Defocus, 12.0, 96, 80).unwrap();
        let sched = ErrorSchedule::new(EPS.to_vec()).unwrap();
        let mut p = StackSynthesis::nominal(5, FRAC_PI_2);
        p.errors = sched.clone();
        let s = demodulate_temporal(&generate_stack(&phi, &p).unwrap(), &sh5_spec()).unwrap();
        let est = measure_leak(&s, &phi).unwrap();
        let pair = conjugate_amplitudes(&sh5_spec(), &sched, 100.0).unwrap();
        assert!((est.leak_ratio - pair.leak_ratio()).abs() < 1e-9);
        assert!(wrap(est.relative_phase - pair.relative_phase()).abs() < 1e-8);
    }

    #[test]
    fn leak_fit_refuses_narrow_phase() {
        let t = PhaseMap::from_fn(64, 4, |x, _| 0.2 * x as f64 / 64.0).unwrap();
        let f = ComplexField::from_fn(64, 4, |x, y| Complex64::from_polar(1.0, t.get(x, y))).unwrap();
        assert!(matches!(measure_leak(&f, &t), Err(Error::IllConditioned { .. })));
        let other = PhaseMap::zeros(8, 4).unwrap();
        assert!(matches!(measure_leak(&f, &other), Err(Error::DimensionMismatch { .. })));
    }
}
