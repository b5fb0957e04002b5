//! Temporal-spatial demodulation that removes the conjugate leak.
//!
//! With a spatial carrier `c`, the temporal analytic signal becomes
//! `A1*exp(i*(phi + c.x)) + A2*exp(-i*(phi + c.x))`. Multiplying by
//! `exp(-i*c.x)` leaves the signal at baseband and pushes the conjugate to
//! `-2c` in the spatial spectrum, where an ideal low-pass disc removes it. The
//! remaining `A1*exp(i*phi)` carries the phase up to the global piston `arg(A1)`,
//! whatever the step deviations were.

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{CarrierSpec, ComplexField, InterferogramStack};
use crate::psa::{demodulate_temporal, extract_phase, ExtractedPhase, PsaSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Ideal disc low-pass around the spectral origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralMask {
    /// Radius in rad/px.
    pub cutoff: f64,
    /// Border width in pixels left out of downstream metrics.
    pub border_crop: usize,
}

impl SpectralMask {
    pub fn new(cutoff: f64, border_crop: usize) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::Invalid(format!("mask cutoff must be > 0, got {cutoff}")));
        }
        Ok(Self {
            cutoff,
            border_crop,
        })
    }

    /// Cutoff with the default guard band `ceil(2*pi / cutoff)`.
    pub fn with_cutoff(cutoff: f64) -> Result<Self> {
        let m = Self::new(cutoff, 0)?;
        Ok(Self {
            border_crop: default_crop(m.cutoff),
            ..m
        })
    }

    /// Default for a carrier: half the carrier magnitude.
    pub fn for_carrier(carrier: &CarrierSpec) -> Result<Self> {
        Self::with_cutoff(carrier.magnitude() / 2.0)
    }
}

fn default_crop(cutoff: f64) -> usize {
    (TAU / cutoff).ceil() as usize
}

/// Multiplies by `exp(-i*(u0*x + v0*y))`.
pub fn remove_carrier(field: &ComplexField, carrier: &CarrierSpec) -> ComplexField {
    modulate(field, carrier, -1.0)
}

/// Multiplies by `exp(+i*(u0*x + v0*y))`; inverse of [`remove_carrier`].
pub fn apply_carrier(field: &ComplexField, carrier: &CarrierSpec) -> ComplexField {
    modulate(field, carrier, 1.0)
}

fn modulate(field: &ComplexField, carrier: &CarrierSpec, sign: f64) -> ComplexField {
    let w = field.width();
    let values = field
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * Complex64::from_polar(1.0, sign * carrier.phase_at(i % w, i / w)))
        .collect();
    ComplexField::from_parts_unchecked(w, field.height(), values)
}

/// Energy bookkeeping for one low-pass application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowpassStats {
    /// Bins inside the disc.
    pub passband_bins: usize,
    /// Fraction of spectral energy kept.
    pub retained_energy_fraction: f64,
    /// Fraction of spectral energy zeroed.
    pub rejected_energy_fraction: f64,
}

#[inline]
fn in_passband(kx: usize, ky: usize, width: usize, height: usize, cutoff: f64) -> bool {
    let fx = fft::bin_frequency(kx, width);
    let fy = fft::bin_frequency(ky, height);
    fx.hypot(fy) <= cutoff
}

/// Ideal low-pass: forward DFT, zero bins whose radius exceeds the cutoff,
/// inverse DFT.
pub fn lowpass(field: &ComplexField, mask: &SpectralMask) -> ComplexField {
    lowpass_with_stats(field, mask).0
}

pub fn lowpass_with_stats(field: &ComplexField, mask: &SpectralMask) -> (ComplexField, LowpassStats) {
    let (w, h) = (field.width(), field.height());
    let mut spec = field.values().to_vec();
    fft::forward(w, h, &mut spec);
    let stats = apply_mask(&mut spec, w, h, mask);
    fft::inverse(w, h, &mut spec);
    (ComplexField::from_parts_unchecked(w, h, spec), stats)
}

fn apply_mask(spec: &mut [Complex64], w: usize, h: usize, mask: &SpectralMask) -> LowpassStats {
    let mut kept = 0.0;
    let mut dropped = 0.0;
    let mut bins = 0;
    for ky in 0..h {
        for kx in 0..w {
            let v = &mut spec[ky * w + kx];
            if in_passband(kx, ky, w, h, mask.cutoff) {
                kept += v.norm_sqr();
                bins += 1;
            } else {
                dropped += v.norm_sqr();
                *v = Complex64::default();
            }
        }
    }
    if bins <= 1 {
        log::warn!(
            "cutoff {} rad/px keeps only the origin bin on a {w}x{h} grid; the phase will be constant",
            mask.cutoff
        );
    }
    let total = kept + dropped;
    LowpassStats {
        passband_bins: bins,
        retained_energy_fraction: if total > 0.0 { kept / total } else { 0.0 },
        rejected_energy_fraction: if total > 0.0 { dropped / total } else { 0.0 },
    }
}

/// Spectral energy inside a disc of `radius` rad/px centered on `(fx, fy)`.
fn disc_energy(spec: &[Complex64], w: usize, h: usize, fx: f64, fy: f64, radius: f64) -> f64 {
    let mut e = 0.0;
    for ky in 0..h {
        for kx in 0..w {
            let dx = crate::phase::wrap(fft::bin_frequency(kx, w) - fx);
            let dy = crate::phase::wrap(fft::bin_frequency(ky, h) - fy);
            if dx.hypot(dy) <= radius {
                e += spec[ky * w + kx].norm_sqr();
            }
        }
    }
    e
}

/// Log-magnitude spectrum `ln(1 + |F|)`, shifted so the origin is centered.
pub fn log_spectrum(field: &ComplexField) -> Vec<f64> {
    let (w, h) = (field.width(), field.height());
    let mut spec = field.values().to_vec();
    fft::forward(w, h, &mut spec);
    let mags: Vec<f64> = spec.iter().map(|v| v.norm().ln_1p()).collect();
    fft::fftshift(w, h, &mags)
}

/// Estimates the carrier from the strongest spectral peak outside a disc of
/// `exclusion_radius` bins around the origin, refined to sub-bin accuracy with a
/// three-point parabola along each axis.
pub fn estimate_carrier(field: &ComplexField, exclusion_radius: f64) -> Result<CarrierSpec> {
    let (w, h) = (field.width(), field.height());
    let mut spec = field.values().to_vec();
    fft::forward(w, h, &mut spec);
    let mag: Vec<f64> = spec.iter().map(|v| v.norm()).collect();
    let total: f64 = mag.iter().map(|m| m * m).sum::<f64>().sqrt();
    if total == 0.0 {
        return Err(Error::NoCarrier("field is identically zero".into()));
    }

    let radius = |kx: usize, ky: usize| {
        (fft::signed_bin(kx, w) as f64).hypot(fft::signed_bin(ky, h) as f64)
    };
    let outside = |kx: usize, ky: usize| radius(kx, ky) > exclusion_radius;

    let mut peak: Option<(usize, usize)> = None;
    for ky in 0..h {
        for kx in 0..w {
            if outside(kx, ky) && peak.map_or(true, |(px, py)| mag[ky * w + kx] > mag[py * w + px]) {
                peak = Some((kx, ky));
            }
        }
    }
    let (px, py) = peak.ok_or_else(|| {
        Error::NoCarrier(format!("exclusion radius {exclusion_radius} covers the whole spectrum"))
    })?;
    let peak_mag = mag[py * w + px];
    if peak_mag <= 1e-9 * total {
        return Err(Error::NoCarrier(
            "no spectral energy outside the origin lobe (constant field)".into(),
        ));
    }

    // energy near the origin vs near the candidate peak
    let bin_disc = |cx: i64, cy: i64| -> f64 {
        let r = exclusion_radius.max(1.0);
        let ri = r.ceil() as i64;
        let mut e = 0.0;
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if ((dx * dx + dy * dy) as f64).sqrt() <= r {
                    let kx = (cx + dx).rem_euclid(w as i64) as usize;
                    let ky = (cy + dy).rem_euclid(h as i64) as usize;
                    e += mag[ky * w + kx].powi(2);
                }
            }
        }
        e
    };
    let origin_energy = bin_disc(0, 0);
    let peak_energy = bin_disc(px as i64, py as i64);
    if origin_energy >= peak_energy {
        return Err(Error::NoCarrier(format!(
            "spectrum is dominated by the origin lobe (origin/peak energy ratio {:.3e})",
            origin_energy / peak_energy
        )));
    }

    let near_peak = |kx: usize, ky: usize| {
        let dx = (kx as i64 - px as i64).rem_euclid(w as i64);
        let dy = (ky as i64 - py as i64).rem_euclid(h as i64);
        (dx <= 1 || dx >= w as i64 - 1) && (dy <= 1 || dy >= h as i64 - 1)
    };
    let mut runner: Option<(usize, usize)> = None;
    for ky in 0..h {
        for kx in 0..w {
            if outside(kx, ky)
                && !near_peak(kx, ky)
                && runner.map_or(true, |(rx, ry)| mag[ky * w + kx] > mag[ry * w + rx])
            {
                runner = Some((kx, ky));
            }
        }
    }
    if let Some((rx, ry)) = runner {
        if mag[ry * w + rx] >= 0.99 * peak_mag {
            return Err(Error::AmbiguousCarrier {
                first_u0: fft::bin_frequency(px, w),
                first_v0: fft::bin_frequency(py, h),
                second_u0: fft::bin_frequency(rx, w),
                second_v0: fft::bin_frequency(ry, h),
            });
        }
    }

    let at = |kx: i64, ky: i64| {
        mag[ky.rem_euclid(h as i64) as usize * w + kx.rem_euclid(w as i64) as usize]
    };
    let (ix, iy) = (px as i64, py as i64);
    let dx = parabolic_offset(at(ix - 1, iy), peak_mag, at(ix + 1, iy));
    let dy = parabolic_offset(at(ix, iy - 1), peak_mag, at(ix, iy + 1));
    let u0 = TAU * (fft::signed_bin(px, w) as f64 + dx) / w as f64;
    let v0 = TAU * (fft::signed_bin(py, h) as f64 + dy) / h as f64;
    CarrierSpec::new(u0, v0)
}

/// Vertex offset of the parabola through three equally spaced samples. Offsets
/// below 1e-9 bin are roundoff from an on-bin tone and snap to zero.
fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    let d = (0.5 * (left - right) / denom).clamp(-0.5, 0.5);
    if d.abs() < 1e-9 {
        0.0
    } else {
        d
    }
}

/// How the carrier for [`demodulate_spatial`] is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierChoice {
    Known(CarrierSpec),
    /// Estimate from the temporally demodulated field, exclusion radius 2 bins.
    Auto,
}

/// Exclusion radius (bins) used by [`CarrierChoice::Auto`].
pub const AUTO_EXCLUSION_BINS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDiagnostics {
    pub carrier: CarrierSpec,
    pub carrier_estimated: bool,
    pub mask: SpectralMask,
    pub lowpass: LowpassStats,
    /// Spectral energy in a cutoff-radius disc at `-2c` over the passband energy,
    /// before filtering. Above 1 means the baseband lobe is not the signal.
    pub conjugate_to_passband_energy: f64,
    pub slopes: SlopeReport,
    pub invalid_pixels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDemod {
    pub phase: ExtractedPhase,
    pub filtered: ComplexField,
    pub diagnostics: SpatialDiagnostics,
}

/// Full temporal-spatial pipeline: temporal PSA, carrier removal, ideal
/// low-pass, pointwise argument.
pub fn demodulate_spatial(
    stack: &InterferogramStack,
    spec: &PsaSpec,
    carrier: CarrierChoice,
    mask: Option<SpectralMask>,
) -> Result<SpatialDemod> {
    let meta = stack.meta();
    if meta.synthetic && meta.carrier.is_none() {
        return Err(Error::NoCarrier(
            "stack was synthesized without a spatial carrier; the conjugate cannot be \
             separated (u0 > max|dphi/dx| is violated)"
                .into(),
        ));
    }
    let temporal = demodulate_temporal(stack, spec)?;
    let (carrier, estimated) = match carrier {
        CarrierChoice::Known(c) => {
            c.validate()?;
            (c, false)
        }
        CarrierChoice::Auto => (estimate_carrier(&temporal, AUTO_EXCLUSION_BINS)?, true),
    };
    let mask = match mask {
        Some(m) => m,
        None => SpectralMask::for_carrier(&carrier)?,
    };
    if !(mask.cutoff > 0.0 && mask.cutoff < carrier.magnitude()) {
        return Err(Error::MaskCarrierInconsistent {
            cutoff: mask.cutoff,
            carrier: carrier.magnitude(),
        });
    }

    let (w, h) = (stack.width(), stack.height());
    let mut spectrum = remove_carrier(&temporal, &carrier).into_values();
    fft::forward(w, h, &mut spectrum);
    let pass = disc_energy(&spectrum, w, h, 0.0, 0.0, mask.cutoff);
    let conj = disc_energy(
        &spectrum,
        w,
        h,
        -2.0 * carrier.u0,
        -2.0 * carrier.v0,
        mask.cutoff,
    );
    let conj_ratio = if pass > 0.0 { conj / pass } else { f64::INFINITY };
    if conj_ratio >= 1.0 {
        return Err(Error::ConjugateInPassband {
            lobe_edge: 0.0,
            cutoff: mask.cutoff,
        });
    }
    let stats = apply_mask(&mut spectrum, w, h, &mask);
    fft::inverse(w, h, &mut spectrum);
    let filtered = ComplexField::from_parts_unchecked(w, h, spectrum);
    let phase = extract_phase(&filtered);
    let slopes = check_slopes(&filtered, &phase.valid, &carrier, &mask)?;

    let invalid = phase.invalid_count();
    Ok(SpatialDemod {
        phase,
        filtered,
        diagnostics: SpatialDiagnostics {
            carrier,
            carrier_estimated: estimated,
            mask,
            lowpass: stats,
            conjugate_to_passband_energy: conj_ratio,
            slopes,
            invalid_pixels: invalid,
        },
    })
}

/// Temporal demodulation followed by carrier removal, with no spatial filtering.
/// The conjugate term survives at `-2c` and shows up as fringe-rate ripple.
pub fn demodulate_temporal_only(
    stack: &InterferogramStack,
    spec: &PsaSpec,
    carrier: Option<&CarrierSpec>,
) -> Result<ExtractedPhase> {
    let field = demodulate_temporal(stack, spec)?;
    Ok(match carrier {
        Some(c) => extract_phase(&remove_carrier(&field, c)),
        None => extract_phase(&field),
    })
}

/// Local phase slopes of the filtered field over the cropped interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    /// Largest slope along the carrier direction, rad/px.
    pub max_along_carrier: f64,
    /// Largest gradient magnitude, rad/px.
    pub max_gradient: f64,
    /// Smallest `|2c + grad(phi)|` over the interior: how close the conjugate's
    /// local frequency comes to the spectral origin.
    pub conjugate_distance: f64,
}

/// Enforces the carrier precondition on the recovered phase: the carrier must
/// dominate the slope along its direction, and the conjugate's local frequency
/// `-(2c + grad(phi))` must stay outside the passband.
pub fn check_slopes(
    field: &ComplexField,
    valid: &[bool],
    carrier: &CarrierSpec,
    mask: &SpectralMask,
) -> Result<SlopeReport> {
    let (w, h) = (field.width(), field.height());
    let m = carrier.magnitude();
    let (ux, uy) = (carrier.u0 / m, carrier.v0 / m);
    let crop = mask.border_crop;
    let (x0, y0) = (crop.min(w / 2), crop.min(h / 2));
    let (x1, y1) = (
        w.saturating_sub(crop + 1).max(x0),
        h.saturating_sub(crop + 1).max(y0),
    );
    let mut rep = SlopeReport {
        max_along_carrier: 0.0,
        max_gradient: 0.0,
        conjugate_distance: f64::INFINITY,
    };
    let v = field.values();
    for y in y0..y1 {
        for x in x0..x1 {
            let i = y * w + x;
            if !(valid[i] && valid[i + 1] && valid[i + w]) {
                continue;
            }
            let gx = (v[i + 1] * v[i].conj()).arg();
            let gy = (v[i + w] * v[i].conj()).arg();
            rep.max_along_carrier = rep.max_along_carrier.max((gx * ux + gy * uy).abs());
            rep.max_gradient = rep.max_gradient.max(gx.hypot(gy));
            let d = (2.0 * carrier.u0 + gx).hypot(2.0 * carrier.v0 + gy);
            rep.conjugate_distance = rep.conjugate_distance.min(d);
        }
    }
    rep.max_gradient = rep.max_gradient.min(PI);
    if rep.max_along_carrier >= m {
        return Err(Error::CarrierBelowSlope {
            carrier: m,
            max_slope: rep.max_along_carrier,
        });
    }
    if rep.conjugate_distance <= mask.cutoff {
        return Err(Error::ConjugateInPassband {
            lobe_edge: rep.conjugate_distance,
            cutoff: mask.cutoff,
        });
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_stack, synthesize_wavefront, ErrorSchedule, PhaseMap, StackSynthesis, Wavefront};
    use crate::phase::wrap;
    use crate::psa::sh5_spec;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn tone(w: usize, h: usize, u: f64, v: f64) -> ComplexField {
        ComplexField::from_fn(w, h, |x, y| Complex64::from_polar(1.0, u * x as f64 + v * y as f64)).unwrap()
    }

    #[test]
    fn carrier_cancels() {
        let c = CarrierSpec::along_x(FRAC_PI_4).unwrap();
        let f = remove_carrier(&tone(32, 16, FRAC_PI_4, 0.0), &c);
        assert!(f.values().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));

        let phi = synthesize_wavefront(&Wavefront::Defocus, 2.0, 32, 16).unwrap();
        let f = ComplexField::from_fn(32, 16, |x, y| {
            Complex64::from_polar(1.0, phi.get(x, y) + FRAC_PI_4 * x as f64)
        })
        .unwrap();
        let g = remove_carrier(&f, &c);
        for (v, p) in g.values().iter().zip(phi.values()) {
            assert!((v - Complex64::from_polar(1.0, *p)).norm() < 1e-12);
        }
        let c2 = CarrierSpec::new(0.3, -0.2).unwrap();
        let back = apply_carrier(&remove_carrier(&f, &c2), &c2);
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn band_limited_field_passes_unchanged() {
        let f = tone(64, 64, TAU * 3.0 / 64.0, TAU * -2.0 / 64.0);
        let g = lowpass(&f, &SpectralMask::new(0.5, 0).unwrap());
        for (a, b) in g.values().iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn rejected_bin_vanishes() {
        let f = tone(64, 32, FRAC_PI_2, 0.0);
        let g = lowpass(&f, &SpectralMask::new(FRAC_PI_4 / 2.0, 0).unwrap());
        assert!(g.values().iter().all(|v| v.norm() < 1e-10));
    }

    #[test]
    fn lowpass_is_idempotent_and_contractive() {
        let phi = synthesize_wavefront(&Wavefront::Astigmatism, 9.0, 48, 40).unwrap();
        let f = ComplexField::from_fn(48, 40, |x, y| Complex64::from_polar(1.0 + 0.1 * x as f64, phi.get(x, y))).unwrap();
        let mask = SpectralMask::new(0.4, 0).unwrap();
        let (once, stats) = lowpass_with_stats(&f, &mask);
        let twice = lowpass(&once, &mask);
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(once.energy() <= f.energy());
        assert!((stats.retained_energy_fraction + stats.rejected_energy_fraction - 1.0).abs() < 1e-12);
        assert!((once.energy() / f.energy() - stats.retained_energy_fraction).abs() < 1e-10);
    }

    #[test]
    fn retained_energy_shrinks_with_cutoff() {
        let phi = synthesize_wavefront(&Wavefront::Defocus, 20.0, 64, 64).unwrap();
        let f = ComplexField::from_fn(64, 64, |x, y| Complex64::from_polar(1.0, phi.get(x, y))).unwrap();
        let mut last = f64::INFINITY;
        for cutoff in [2.0, 1.0, 0.6, 0.3, 0.15, 0.05] {
            let (_, s) = lowpass_with_stats(&f, &SpectralMask::new(cutoff, 0).unwrap());
            assert!(s.retained_energy_fraction <= last + 1e-15);
            last = s.retained_energy_fraction;
        }
    }

    #[test]
    fn tiny_cutoff_keeps_only_origin() {
        let f = tone(16, 16, 0.4, 0.0);
        let (_, s) = lowpass_with_stats(&f, &SpectralMask::new(0.01, 0).unwrap());
        assert_eq!(s.passband_bins, 1);
    }

    #[test]
    fn on_bin_carrier_is_exact() {
        let c = estimate_carrier(&tone(256, 256, FRAC_PI_4, 0.0), 2.0).unwrap();
        assert_eq!(c.u0, FRAC_PI_4);
        assert_eq!(c.v0, 0.0);
        let c = estimate_carrier(&tone(128, 64, -TAU * 10.0 / 128.0, TAU * 5.0 / 64.0), 2.0).unwrap();
        assert!((c.u0 + TAU * 10.0 / 128.0).abs() < 1e-15);
        assert!((c.v0 - TAU * 5.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn off_bin_carrier_within_one_bin() {
        let c = estimate_carrier(&tone(256, 256, 0.8, 0.0), 2.0).unwrap();
        assert!((c.u0 - 0.8).abs() < TAU / 256.0, "{}", c.u0);
        assert!(c.v0.abs() < TAU / 256.0);
    }

    #[test]
    fn constant_field_has_no_carrier() {
        let f = ComplexField::from_fn(32, 32, |_, _| Complex64::new(2.0, 1.0)).unwrap();
        assert!(matches!(estimate_carrier(&f, 2.0), Err(Error::NoCarrier(_))));
    }

    #[test]
    fn two_equal_tones_are_ambiguous() {
        let a = tone(64, 64, TAU * 8.0 / 64.0, 0.0);
        let b = tone(64, 64, 0.0, TAU * 12.0 / 64.0);
        let f = ComplexField::from_fn(64, 64, |x, y| a.get(x, y) + b.get(x, y)).unwrap();
        assert!(matches!(estimate_carrier(&f, 2.0), Err(Error::AmbiguousCarrier { .. })));
    }

    fn carrier_stack(eps: &[f64], w: usize) -> (PhaseMap, InterferogramStack) {
        let phi = synthesize_wavefront(&Wavefront::Defocus, 3.0, w, w).unwrap();
        let mut p = StackSynthesis::nominal(5, FRAC_PI_2);
        p.errors = ErrorSchedule::new(eps.to_vec()).unwrap();
        p.carrier = Some(CarrierSpec::along_x(FRAC_PI_4).unwrap());
        let s = generate_stack(&phi, &p).unwrap();
        (phi, s)
    }

    #[test]
    fn spatial_recovers_truth_without_errors() {
        let (phi, s) = carrier_stack(&[0.0; 5], 128);
        let c = CarrierSpec::along_x(FRAC_PI_4).unwrap();
        let out = demodulate_spatial(&s, &sh5_spec(), CarrierChoice::Known(c), None).unwrap();
        let crop = out.diagnostics.mask.border_crop;
        assert_eq!(crop, 16);
        let mut max = 0.0f64;
        for y in crop..128 - crop {
            for x in crop..128 - crop {
                max = max.max(wrap(out.phase.phase.get(x, y) - phi.get(x, y)).abs());
            }
        }
        // ideal-filter ringing from the non-periodic border reaches into the crop
        assert!(max < 0.02, "{max}");
    }

    #[test]
    fn auto_carrier_matches_known() {
        let (_, s) = carrier_stack(&[0.0, 0.1, -0.15, 0.2, -0.05], 128);
        let out = demodulate_spatial(&s, &sh5_spec(), CarrierChoice::Auto, None).unwrap();
        assert!(out.diagnostics.carrier_estimated);
        let c = out.diagnostics.carrier;
        assert!((c.u0 - FRAC_PI_4).abs() < 1e-6 && c.v0.abs() < 1e-6, "{c:?}");
    }

    #[test]
    fn carrier_free_stack_is_refused() {
        let phi = synthesize_wavefront(&Wavefront::Defocus, 3.0, 64, 64).unwrap();
        let s = generate_stack(&phi, &StackSynthesis::nominal(5, FRAC_PI_2)).unwrap();
        for choice in [CarrierChoice::Auto, CarrierChoice::Known(CarrierSpec::along_x(0.5).unwrap())] {
            assert!(matches!(
                demodulate_spatial(&s, &sh5_spec(), choice, None),
                Err(Error::NoCarrier(_))
            ));
        }
    }

    #[test]
    fn inconsistent_mask_is_refused() {
        let (_, s) = carrier_stack(&[0.0; 5], 64);
        let c = CarrierSpec::along_x(FRAC_PI_4).unwrap();
        let mask = SpectralMask::new(1.0, 4).unwrap();
        assert!(matches!(
            demodulate_spatial(&s, &sh5_spec(), CarrierChoice::Known(c), Some(mask)),
            Err(Error::MaskCarrierInconsistent { .. })
        ));
    }

    #[test]
    fn mirrored_carrier_puts_conjugate_in_passband() {
        // demodulating at -c parks the weaker conjugate at baseband
        let (_, s) = carrier_stack(&[0.0, 0.1, -0.15, 0.2, -0.05], 64);
        let c = CarrierSpec::along_x(-FRAC_PI_4).unwrap();
        assert!(matches!(
            demodulate_spatial(&s, &sh5_spec(), CarrierChoice::Known(c), None),
            Err(Error::ConjugateInPassband { .. })
        ));
    }

    #[test]
    fn slope_guards() {
        let steep = ComplexField::from_fn(64, 64, |x, _| Complex64::from_polar(1.0, 0.5 * x as f64)).unwrap();
        let valid = vec![true; 64 * 64];
        let mask = SpectralMask::new(0.1, 4).unwrap();
        let slow = CarrierSpec::along_x(0.3).unwrap();
        assert!(matches!(
            check_slopes(&steep, &valid, &slow, &mask),
            Err(Error::CarrierBelowSlope { .. })
        ));
        // gradient against the carrier brings the conjugate to the origin
        let back = ComplexField::from_fn(64, 64, |x, _| Complex64::from_polar(1.0, -1.1 * x as f64)).unwrap();
        let c = CarrierSpec::new(0.6, 0.0).unwrap();
        let r = check_slopes(&back, &valid, &c, &SpectralMask::new(0.5, 4).unwrap());
        assert!(matches!(r, Err(Error::CarrierBelowSlope { .. })));
        let side = ComplexField::from_fn(64, 64, |_, y| Complex64::from_polar(1.0, 0.4 * y as f64)).unwrap();
        let rep = check_slopes(&side, &valid, &c, &SpectralMask::new(0.5, 4).unwrap()).unwrap();
        assert!(rep.max_along_carrier < 1e-12);
        assert!((rep.max_gradient - 0.4).abs() < 1e-12);
        assert!((rep.conjugate_distance - 1.2f64.hypot(0.4)).abs() < 1e-12);
    }
}
