//! Phase-map comparison in waves, piston/tilt removal and Monte-Carlo
//! repeatability studies.

use crate::artifact::conjugate_amplitudes;
use crate::carrier::{demodulate_spatial, demodulate_temporal_only, CarrierChoice, SpectralMask};
use crate::error::{Error, Result};
use crate::field::{
    generate_stack, make_error_schedule, CarrierSpec, ErrorModel, ErrorSchedule, PhaseMap,
    StackSynthesis,
};
use crate::phase::{to_waves, wrap};
use crate::psa::PsaSpec;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Pointwise `arg(exp(i*(p1 - p2)))`.
pub fn wrapped_diff(p1: &PhaseMap, p2: &PhaseMap) -> Result<PhaseMap> {
    p2.same_dims(p1.width(), p1.height())?;
    let values = p1
        .values()
        .iter()
        .zip(p2.values())
        .map(|(a, b)| wrap(a - b))
        .collect();
    PhaseMap::wrapped(p1.width(), p1.height(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiffReport {
    /// Peak-to-valley in waves.
    pub pv: f64,
    /// Standard deviation in waves.
    pub rms: f64,
    /// Radians.
    pub piston_removed: f64,
    /// Radians per pixel along x and y.
    pub tilt_removed: (f64, f64),
    pub crop: usize,
}

/// Half-open interior `[x0, x1) x [y0, y1)` after cropping `crop` pixels per side.
fn interior(w: usize, h: usize, crop: usize) -> Result<(usize, usize, usize, usize)> {
    if 2 * crop >= w || 2 * crop >= h {
        return Err(Error::Invalid(format!(
            "crop {crop} leaves no interior on a {w}x{h} map"
        )));
    }
    Ok((crop, w - crop, crop, h - crop))
}

fn circular_mean(values: &[f64], w: usize, win: (usize, usize, usize, usize)) -> f64 {
    let (x0, x1, y0, y1) = win;
    let mut acc = Complex64::default();
    for y in y0..y1 {
        for x in x0..x1 {
            acc += Complex64::from_polar(1.0, values[y * w + x]);
        }
    }
    acc.arg()
}

/// Subtracts the circular-mean piston and, optionally, a least-squares plane.
/// Fails with [`Error::ResidualWraps`] when the piston-free interior still has
/// adjacent jumps above pi, since a plane fit would be meaningless there.
pub fn remove_piston_tilt(
    diff: &PhaseMap,
    crop: usize,
    tilt: bool,
) -> Result<(PhaseMap, PhaseDiffReport)> {
    let (w, h) = (diff.width(), diff.height());
    let win = interior(w, h, crop)?;
    let (x0, x1, y0, y1) = win;

    let piston = circular_mean(diff.values(), w, win);
    let mut res: Vec<f64> = diff.values().iter().map(|v| wrap(v - piston)).collect();

    let mut wraps = 0;
    for y in y0..y1 {
        for x in x0..x1 {
            let v = res[y * w + x];
            if x + 1 < x1 && (res[y * w + x + 1] - v).abs() > PI {
                wraps += 1;
            }
            if y + 1 < y1 && (res[(y + 1) * w + x] - v).abs() > PI {
                wraps += 1;
            }
        }
    }
    if wraps > 0 {
        return Err(Error::ResidualWraps(wraps));
    }

    let mut slopes = (0.0, 0.0);
    let mut second = 0.0;
    if tilt {
        // centered coordinates make the x and y regressors orthogonal on a rectangle
        let xc = (x0 + x1 - 1) as f64 / 2.0;
        let yc = (y0 + y1 - 1) as f64 / 2.0;
        let (mut sxr, mut sxx, mut syr, mut syy) = (0.0, 0.0, 0.0, 0.0);
        for y in y0..y1 {
            let dy = y as f64 - yc;
            for x in x0..x1 {
                let dx = x as f64 - xc;
                let r = res[y * w + x];
                sxr += dx * r;
                sxx += dx * dx;
                syr += dy * r;
                syy += dy * dy;
            }
        }
        let alpha = if sxx > 0.0 { sxr / sxx } else { 0.0 };
        let beta = if syy > 0.0 { syr / syy } else { 0.0 };
        for y in 0..h {
            let dy = y as f64 - yc;
            for x in 0..w {
                res[y * w + x] -= alpha * (x as f64 - xc) + beta * dy;
            }
        }
        second = circular_mean(&res, w, win);
        for v in &mut res {
            *v = wrap(*v - second);
        }
        slopes = (alpha, beta);
    }

    let map = PhaseMap::wrapped(w, h, res)?;
    let (pv, rms) = pv_rms(&map, crop)?;
    Ok((
        map,
        PhaseDiffReport {
            pv,
            rms,
            piston_removed: wrap(piston + second),
            tilt_removed: slopes,
            crop,
        },
    ))
}

/// Peak-to-valley and standard deviation over the cropped interior, in waves.
pub fn pv_rms(map: &PhaseMap, crop: usize) -> Result<(f64, f64)> {
    let (w, h) = (map.width(), map.height());
    let (x0, x1, y0, y1) = interior(w, h, crop)?;
    let v = map.values();
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for y in y0..y1 {
        for &s in &v[y * w + x0..y * w + x1] {
            lo = lo.min(s);
            hi = hi.max(s);
            sum += s;
        }
    }
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let mean = sum / n;
    let mut ss = 0.0;
    for y in y0..y1 {
        for &s in &v[y * w + x0..y * w + x1] {
            ss += (s - mean) * (s - mean);
        }
    }
    Ok((to_waves(hi - lo), to_waves((ss / n).sqrt())))
}

/// `wrapped_diff` followed by [`remove_piston_tilt`].
pub fn compare(
    estimate: &PhaseMap,
    reference: &PhaseMap,
    crop: usize,
    tilt: bool,
) -> Result<(PhaseMap, PhaseDiffReport)> {
    remove_piston_tilt(&wrapped_diff(estimate, reference)?, crop, tilt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Temporal PSA then carrier removal, no spatial filtering.
    Temporal,
    /// Temporal PSA, carrier removal and low-pass filtering.
    Spatial,
}

/// Everything one repeatability trial needs apart from its schedule and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSetup {
    pub psa: PsaSpec,
    pub method: Method,
    pub carrier: Option<CarrierSpec>,
    pub mask: Option<SpectralMask>,
    pub background: f64,
    pub contrast: f64,
    pub noise_sigma: f64,
    pub crop: usize,
    pub tilt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub schedule_seed: u64,
    pub noise_seed: u64,
    pub errors: Vec<f64>,
    /// `|A2|/|A1|` of the schedule, if the PSA yields a signal at all.
    pub leak_ratio: Option<f64>,
    /// `2*asin(r)` in waves.
    pub oracle_pv: Option<f64>,
    pub pv: Option<f64>,
    pub rms: Option<f64>,
    pub error: Option<String>,
}

/// Runs one synthesize-demodulate-compare cycle against `truth`.
pub fn run_trial(
    truth: &PhaseMap,
    setup: &TrialSetup,
    schedule: &ErrorSchedule,
    noise_seed: u64,
) -> Result<(PhaseDiffReport, f64)> {
    let synth = StackSynthesis {
        background: setup.background,
        contrast: setup.contrast,
        nominal_step: setup.psa.nominal_step(),
        frames: setup.psa.len(),
        errors: schedule.clone(),
        carrier: setup.carrier,
        noise_sigma: setup.noise_sigma,
        seed: noise_seed,
    };
    let stack = generate_stack(truth, &synth)?;
    let pair = conjugate_amplitudes(&setup.psa, schedule, setup.contrast)?;
    let phase = match setup.method {
        Method::Temporal => demodulate_temporal_only(&stack, &setup.psa, setup.carrier.as_ref())?,
        Method::Spatial => {
            let choice = setup.carrier.map_or(CarrierChoice::Auto, CarrierChoice::Known);
            demodulate_spatial(&stack, &setup.psa, choice, setup.mask)?.phase
        }
    };
    let (_, report) = compare(&phase.phase, truth, setup.crop, setup.tilt)?;
    Ok((report, pair.leak_ratio()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub min: f64,
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
    pub mean: f64,
    pub max: f64,
}

impl Distribution {
    /// Percentiles use linear interpolation between order statistics.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            min: s[0],
            median: percentile(&s, 50.0),
            p90: percentile(&s, 90.0),
            p99: percentile(&s, 99.0),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            max: s[s.len() - 1],
        })
    }
}

/// `q`-th percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub failed: usize,
    pub seed: u64,
    pub pv: Option<Distribution>,
    pub rms: Option<Distribution>,
    pub oracle_pv: Option<Distribution>,
    pub records: Vec<TrialRecord>,
}

/// Draws `trials` schedules from `model`, runs them in parallel, and summarizes
/// the per-trial P-V error. Per-trial seeds come from the master seed before
/// any work starts, so results do not depend on scheduling.
pub fn montecarlo_repeatability(
    truth: &PhaseMap,
    setup: &TrialSetup,
    model: &ErrorModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloSummary> {
    if trials < 2 {
        return Err(Error::Invalid(format!("need at least 2 trials, got {trials}")));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<(u64, u64)> = (0..trials).map(|_| (master.random(), master.random())).collect();

    let records: Vec<TrialRecord> = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &(schedule_seed, noise_seed))| {
            let mut rec = TrialRecord {
                index,
                schedule_seed,
                noise_seed,
                errors: Vec::new(),
                leak_ratio: None,
                oracle_pv: None,
                pv: None,
                rms: None,
                error: None,
            };
            let schedule = match make_error_schedule(model, setup.psa.len(), schedule_seed) {
                Ok(s) => s,
                Err(e) => {
                    rec.error = Some(e.to_string());
                    return rec;
                }
            };
            rec.errors = schedule.deviations().to_vec();
            if let Ok(pair) = conjugate_amplitudes(&setup.psa, &schedule, setup.contrast) {
                rec.leak_ratio = Some(pair.leak_ratio());
                rec.oracle_pv = Some(to_waves(pair.ripple_pv()));
            }
            match run_trial(truth, setup, &schedule, noise_seed) {
                Ok((report, _)) => {
                    rec.pv = Some(report.pv);
                    rec.rms = Some(report.rms);
                }
                Err(e) => {
                    log::warn!("trial {index} failed: {e}");
                    rec.error = Some(e.to_string());
                }
            }
            rec
        })
        .collect();

    let pv: Vec<f64> = records.iter().filter_map(|r| r.pv).collect();
    let rms: Vec<f64> = records.iter().filter_map(|r| r.rms).collect();
    let oracle: Vec<f64> = records.iter().filter_map(|r| r.oracle_pv).collect();
    Ok(MonteCarloSummary {
        trials,
        failed: records.iter().filter(|r| r.error.is_some()).count(),
        seed,
        pv: Distribution::from_samples(&pv),
        rms: Distribution::from_samples(&rms),
        oracle_pv: Distribution::from_samples(&oracle),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{predicted_error_map, ConjugatePair};
    use crate::field::{synthesize_wavefront, Wavefront};
    use crate::psa::sh5_spec;
    use std::f64::consts::{FRAC_PI_4, TAU};

    fn ramp(w: usize, h: usize) -> PhaseMap {
        PhaseMap::from_fn(w, h, |x, y| wrap(0.37 * x as f64 - 0.21 * y as f64)).unwrap()
    }

    #[test]
    fn wrapped_diff_examples() {
        let p = ramp(9, 7);
        assert!(wrapped_diff(&p, &p).unwrap().values().iter().all(|&v| v == 0.0));
        let shifted = PhaseMap::unwrapped(9, 7, p.values().iter().map(|v| v + TAU).collect()).unwrap();
        assert!(wrapped_diff(&p, &shifted).unwrap().values().iter().all(|v| v.abs() < 1e-12));
        let plus = PhaseMap::unwrapped(9, 7, p.values().iter().map(|v| v + 0.3).collect()).unwrap();
        assert!(wrapped_diff(&p, &plus).unwrap().values().iter().all(|v| (v + 0.3).abs() < 1e-12));
        let other = PhaseMap::zeros(8, 7).unwrap();
        assert!(matches!(wrapped_diff(&p, &other), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constant_is_all_piston() {
        let m = PhaseMap::from_fn(10, 10, |_, _| 1.2).unwrap();
        let (res, rep) = remove_piston_tilt(&m, 0, true).unwrap();
        assert!(res.values().iter().all(|v| v.abs() < 1e-12));
        assert!((rep.piston_removed - 1.2).abs() < 1e-12);
        assert_eq!((rep.pv, rep.rms), (0.0, 0.0));
    }

    #[test]
    fn plane_is_all_tilt() {
        let (a, b) = (0.013, -0.007);
        let m = PhaseMap::from_fn(40, 30, |x, y| a * x as f64 + b * y as f64).unwrap();
        let (res, rep) = remove_piston_tilt(&m, 3, true).unwrap();
        assert!(res.values().iter().all(|v| v.abs() < 1e-10));
        assert!((rep.tilt_removed.0 - a).abs() < 1e-10);
        assert!((rep.tilt_removed.1 - b).abs() < 1e-10);
        let (_, no_tilt) = remove_piston_tilt(&m, 3, false).unwrap();
        assert_eq!(no_tilt.tilt_removed, (0.0, 0.0));
        assert!(no_tilt.pv > 0.0);
    }

    #[test]
    fn ripple_survives_tilt_removal() {
        let truth = synthesize_wavefront(&Wavefront::Defocus, 40.0, 128, 128).unwrap();
        let pair = ConjugatePair::new(Complex64::new(1.0, 0.0), Complex64::from_polar(0.2, 0.7));
        let map = predicted_error_map(&truth, &pair).unwrap();
        let (raw, _) = pv_rms(&map, 0).unwrap();
        let (_, rep) = remove_piston_tilt(&map, 0, true).unwrap();
        assert!((rep.pv - raw).abs() / raw < 0.01, "{} vs {raw}", rep.pv);
    }

    #[test]
    fn wrapped_residual_is_refused() {
        let m = ramp(32, 32);
        assert!(matches!(remove_piston_tilt(&m, 0, true), Err(Error::ResidualWraps(_))));
    }

    #[test]
    fn crop_must_leave_interior() {
        let m = PhaseMap::zeros(10, 10).unwrap();
        assert!(pv_rms(&m, 5).is_err());
        assert_eq!(pv_rms(&m, 4).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn pv_definition() {
        let d = 0.05 * TAU;
        let m = PhaseMap::from_fn(4, 4, |x, _| if x % 2 == 0 { d } else { -d }).unwrap();
        let (pv, rms) = pv_rms(&m, 0).unwrap();
        assert!((pv - 0.1).abs() < 1e-15);
        assert!((rms - 0.05).abs() < 1e-15);
    }

    #[test]
    fn ripple_pv_at_tenth_wave() {
        // the phase grid covers every ripple phase, so the extremes are sampled
        let truth = PhaseMap::from_fn(4000, 2, |x, _| x as f64 * TAU / 4000.0).unwrap();
        let pair = ConjugatePair::new(Complex64::new(1.0, 0.0), Complex64::new(0.309, 0.0));
        let (pv, _) = pv_rms(&predicted_error_map(&truth, &pair).unwrap(), 0).unwrap();
        let oracle = 2.0 * 0.309f64.asin() / TAU;
        assert!((pv - oracle).abs() < 1e-6);
        assert!((pv - 0.100).abs() < 1e-3);
    }

    #[test]
    fn percentiles_interpolate() {
        let s: Vec<f64> = (0..11).map(f64::from).collect();
        assert_eq!(percentile(&s, 50.0), 5.0);
        assert_eq!(percentile(&s, 95.0), 9.5);
        let d = Distribution::from_samples(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((d.min, d.median, d.max, d.mean), (1.0, 2.0, 3.0, 2.0));
    }

    fn setup(method: Method) -> TrialSetup {
        TrialSetup {
            psa: sh5_spec(),
            method,
            carrier: Some(CarrierSpec::along_x(FRAC_PI_4).unwrap()),
            mask: None,
            background: 128.0,
            contrast: 100.0,
            noise_sigma: 0.0,
            crop: 16,
            tilt: true,
        }
    }

    #[test]
    fn error_free_trials_are_exact() {
        let truth = synthesize_wavefront(&Wavefront::Defocus, 3.0, 64, 64).unwrap();
        let s = montecarlo_repeatability(&truth, &setup(Method::Temporal), &ErrorModel::Zero, 4, 1).unwrap();
        assert_eq!(s.failed, 0);
        let pv = s.pv.unwrap();
        assert!(pv.max < 1e-6);
        assert_eq!(pv.min, pv.max);
    }

    #[test]
    fn temporal_trials_track_oracle_and_are_deterministic() {
        let truth = synthesize_wavefront(&Wavefront::Defocus, 30.0, 96, 96).unwrap();
        let model = ErrorModel::Uniform { half_width: 0.3 };
        let a = montecarlo_repeatability(&truth, &setup(Method::Temporal), &model, 6, 9).unwrap();
        let b = montecarlo_repeatability(&truth, &setup(Method::Temporal), &model, 6, 9).unwrap();
        assert_eq!(a, b);
        for r in &a.records {
            let (pv, oracle) = (r.pv.unwrap(), r.oracle_pv.unwrap());
            assert!((pv - oracle).abs() <= 0.05 * oracle, "{pv} vs {oracle}");
        }
    }

    #[test]
    fn single_trial_is_refused() {
        let truth = PhaseMap::zeros(8, 8).unwrap();
        let r = montecarlo_repeatability(&truth, &setup(Method::Temporal), &ErrorModel::Zero, 1, 0);
        assert!(r.is_err());
    }

    #[test]
    fn failed_trials_are_counted() {
        let truth = synthesize_wavefront(&Wavefront::Defocus, 3.0, 64, 64).unwrap();
        let mut st = setup(Method::Spatial);
        st.carrier = None;
        let s = montecarlo_repeatability(&truth, &st, &ErrorModel::Zero, 3, 0).unwrap();
        assert_eq!(s.failed, 3);
        assert!(s.pv.is_none());
    }
}
