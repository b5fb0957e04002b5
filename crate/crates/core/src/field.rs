//! Field types and synthetic interferogram generation.
//!
//! Pixel coordinates follow one convention everywhere: `x` is the column index,
//! `y` the row index, origin at pixel (0, 0), storage row-major. A carrier adds
//! `u0*x + v0*y` using those integer coordinates.
//!
//! Synthetic frames follow the fringe model
//!
//! ```text
//! I(x, y, n) = a + b*cos(phi(x, y) + u0*x + v0*y + n*omega0 + eps_n) + noise
//! ```
//!
//! Noise is additive Gaussian drawn from `ChaCha8Rng::seed_from_u64(seed)` through
//! `rand_distr::StandardNormal`, frame-major then row-major, so a seed pins the
//! exact sequence.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width < 2 || height < 2 {
        return Err(Error::Invalid(format!(
            "maps need at least 2x2 pixels, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::Invalid(format!(
            "{width}x{height} map needs {} values, got {len}",
            width * height
        )));
    }
    Ok(())
}

/// A 2D phase field in radians.
///
/// Wrapped maps hold values in `[-pi, pi)`; unwrapped maps (synthetic truth,
/// residuals) only need to be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    wrapped: bool,
}

impl PhaseMap {
    pub fn unwrapped(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite phase at index {i}")));
        }
        Ok(Self {
            width,
            height,
            values,
            wrapped: false,
        })
    }

    pub fn wrapped(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some(i) = values.iter().position(|v| !(-PI..PI).contains(v)) {
            return Err(Error::Invalid(format!(
                "wrapped phase {} at index {i} is outside [-pi, pi)",
                values[i]
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            wrapped: true,
        })
    }

    /// Builds an unwrapped map from `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::unwrapped(width, height, values)
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::unwrapped(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_wrapped(&self) -> bool {
        self.wrapped
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn to_wrapped(&self) -> PhaseMap {
        PhaseMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| crate::phase::wrap(v)).collect(),
            wrapped: true,
        }
    }

    pub fn same_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: width,
                got_h: height,
            });
        }
        Ok(())
    }
}

/// A 2D complex analytic signal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    width: usize,
    height: usize,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(width: usize, height: usize, values: Vec<Complex64>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite field value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> Complex64,
    ) -> Result<Self> {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.values[y * self.width + x]
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, values: Vec<Complex64>) -> Self {
        Self {
            width,
            height,
            values,
        }
    }
}

/// Per-frame nonlinear phase-step deviations in radians, one scalar per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorSchedule {
    deviations: Vec<f64>,
}

impl ErrorSchedule {
    pub fn new(deviations: Vec<f64>) -> Result<Self> {
        if deviations.iter().any(|d| !d.is_finite()) {
            return Err(Error::Invalid("error schedule holds a non-finite value".into()));
        }
        Ok(Self { deviations })
    }

    pub fn zeros(frames: usize) -> Self {
        Self {
            deviations: vec![0.0; frames],
        }
    }

    pub fn deviations(&self) -> &[f64] {
        &self.deviations
    }

    pub fn len(&self) -> usize {
        self.deviations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deviations.is_empty()
    }

    /// Same schedule with every deviation multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            deviations: self.deviations.iter().map(|d| d * factor).collect(),
        }
    }
}

/// Spatial carrier in rad/px along x (columns) and y (rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierSpec {
    pub u0: f64,
    pub v0: f64,
}

impl CarrierSpec {
    pub fn new(u0: f64, v0: f64) -> Result<Self> {
        let c = Self { u0, v0 };
        c.validate()?;
        Ok(c)
    }

    pub fn along_x(u0: f64) -> Result<Self> {
        Self::new(u0, 0.0)
    }

    pub fn magnitude(&self) -> f64 {
        self.u0.hypot(self.v0)
    }

    /// Carrier phase `u0*x + v0*y` at integer pixel coordinates.
    #[inline]
    pub fn phase_at(&self, x: usize, y: usize) -> f64 {
        self.u0 * x as f64 + self.v0 * y as f64
    }

    /// Magnitude must lie strictly between 0 and Nyquist.
    pub fn validate(&self) -> Result<()> {
        let m = self.magnitude();
        if !m.is_finite() || m <= 0.0 || m >= PI {
            return Err(Error::CarrierOutOfBand(m));
        }
        Ok(())
    }

    /// Rejects carriers that do not dominate the wavefront slope along the
    /// carrier direction (`u0 > max|dphi/dx|` when `v0 = 0`).
    pub fn check_against(&self, phase: &PhaseMap) -> Result<()> {
        self.validate()?;
        let max_slope = max_directional_slope(phase, self);
        if max_slope >= self.magnitude() {
            return Err(Error::CarrierBelowSlope {
                carrier: self.magnitude(),
                max_slope,
            });
        }
        Ok(())
    }
}

/// Largest |grad(phi) . c_hat| using forward differences.
pub fn max_directional_slope(phase: &PhaseMap, carrier: &CarrierSpec) -> f64 {
    let m = carrier.magnitude();
    let (ux, uy) = (carrier.u0 / m, carrier.v0 / m);
    let (w, h) = (phase.width(), phase.height());
    let mut max = 0.0f64;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let p = phase.get(x, y);
            let gx = phase.get(x + 1, y) - p;
            let gy = phase.get(x, y + 1) - p;
            max = max.max((gx * ux + gy * uy).abs());
        }
    }
    max
}

/// Largest forward-difference slope along x.
pub fn max_slope_x(phase: &PhaseMap) -> f64 {
    (0..phase.height())
        .flat_map(|y| phase.row(y).windows(2).map(|p| (p[1] - p[0]).abs()))
        .fold(0.0, f64::max)
}

/// Provenance and synthesis parameters carried with a stack. Every field is
/// `None` for imported data whose acquisition parameters are unknown.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StackMeta {
    pub synthetic: bool,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub carrier: Option<CarrierSpec>,
    pub errors: Option<ErrorSchedule>,
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
}

/// N real frames sharing dimensions, plus the nominal temporal step.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferogramStack {
    width: usize,
    height: usize,
    frames: Vec<Vec<f64>>,
    nominal_step: f64,
    meta: StackMeta,
}

impl InterferogramStack {
    pub fn new(
        width: usize,
        height: usize,
        frames: Vec<Vec<f64>>,
        nominal_step: f64,
        meta: StackMeta,
    ) -> Result<Self> {
        if frames.len() < 3 {
            return Err(Error::Invalid(format!(
                "a stack needs at least 3 frames, got {}",
                frames.len()
            )));
        }
        for f in &frames {
            check_dims(width, height, f.len())?;
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid("frame holds a non-finite intensity".into()));
            }
        }
        if !nominal_step.is_finite() {
            return Err(Error::Invalid("nominal step must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            frames,
            nominal_step,
            meta,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.frames[n]
    }

    pub fn nominal_step(&self) -> f64 {
        self.nominal_step
    }

    pub fn meta(&self) -> &StackMeta {
        &self.meta
    }

    /// `alpha*self + beta*other`, frame by frame. Metadata is dropped.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if other.width != self.width || other.height != self.height {
            return Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: other.width,
                got_h: other.height,
            });
        }
        if other.len() != self.len() {
            return Err(Error::FrameCountMismatch {
                psa: self.len(),
                stack: other.len(),
            });
        }
        let frames = self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(f, g)| f.iter().zip(g).map(|(p, q)| alpha * p + beta * q).collect())
            .collect();
        Self::new(
            self.width,
            self.height,
            frames,
            self.nominal_step,
            StackMeta::default(),
        )
    }

    /// Adds `delta` to every intensity.
    pub fn offset(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for f in &mut out.frames {
            for v in f.iter_mut() {
                *v += delta;
            }
        }
        out
    }
}

/// One monomial `coeff * xn^px * yn^py` over normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub px: u32,
    pub py: u32,
    pub coeff: f64,
}

impl FromStr for PolyTerm {
    type Err = Error;

    /// Parses `px:py:coeff`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Invalid(format!("polynomial term '{s}' is not px:py:coeff"));
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Self {
            px: parts[0].trim().parse().map_err(|_| bad())?,
            py: parts[1].trim().parse().map_err(|_| bad())?,
            coeff: parts[2].trim().parse().map_err(|_| bad())?,
        })
    }
}

impl fmt::Display for PolyTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.px, self.py, self.coeff)
    }
}

/// Wavefront shapes for synthetic truth. Shapes are evaluated over normalized
/// coordinates `xn, yn` in `[-1, 1]` centered on the grid, then rescaled to the
/// requested peak-to-valley.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Wavefront {
    Flat,
    /// Linear ramp along x.
    Tilt,
    /// `xn^2 + yn^2`.
    Defocus,
    /// `xn^2 - yn^2`.
    Astigmatism,
    Polynomial { terms: Vec<PolyTerm> },
}

impl FromStr for Wavefront {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Self::Flat),
            "tilt" => Ok(Self::Tilt),
            "defocus" => Ok(Self::Defocus),
            "astigmatism" => Ok(Self::Astigmatism),
            "polynomial" => Ok(Self::Polynomial { terms: Vec::new() }),
            other => Err(Error::Invalid(format!("unknown wavefront kind '{other}'"))),
        }
    }
}

impl Wavefront {
    fn raw(&self, xn: f64, yn: f64) -> f64 {
        match self {
            Wavefront::Flat => 0.0,
            Wavefront::Tilt => xn,
            Wavefront::Defocus => xn * xn + yn * yn,
            Wavefront::Astigmatism => xn * xn - yn * yn,
            Wavefront::Polynomial { terms } => terms
                .iter()
                .map(|t| t.coeff * xn.powi(t.px as i32) * yn.powi(t.py as i32))
                .sum(),
        }
    }
}

/// Synthesizes an unwrapped truth phase whose peak-to-valley is `|amplitude|`
/// radians (the sign of `amplitude` flips the shape). The minimum sits at 0.
pub fn synthesize_wavefront(
    kind: &Wavefront,
    amplitude: f64,
    width: usize,
    height: usize,
) -> Result<PhaseMap> {
    if !amplitude.is_finite() {
        return Err(Error::Invalid(format!("non-finite amplitude {amplitude}")));
    }
    if width < 2 || height < 2 {
        return Err(Error::Invalid(format!(
            "maps need at least 2x2 pixels, got {width}x{height}"
        )));
    }
    if matches!(kind, Wavefront::Flat) {
        return PhaseMap::zeros(width, height);
    }
    let cx = (width - 1) as f64 / 2.0;
    let cy = (height - 1) as f64 / 2.0;
    let raw = PhaseMap::from_fn(width, height, |x, y| {
        kind.raw((x as f64 - cx) / cx, (y as f64 - cy) / cy)
    })?;
    let (min, max) = raw
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = max - min;
    if span == 0.0 {
        if amplitude == 0.0 {
            return PhaseMap::zeros(width, height);
        }
        return Err(Error::Invalid(
            "wavefront shape is constant over the grid and cannot reach a nonzero P-V".into(),
        ));
    }
    let scale = amplitude / span;
    PhaseMap::unwrapped(
        width,
        height,
        raw.values().iter().map(|v| (v - min) * scale).collect(),
    )
}

/// Generators for phase-step deviation schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ErrorModel {
    Zero,
    /// Independent draws from `U(-half_width, half_width)`.
    Uniform { half_width: f64 },
    /// Independent draws from `N(0, sigma^2)`.
    Gaussian { sigma: f64 },
    /// Systematic PZT miscalibration: `eps_n = kappa * (n * omega0)^2`.
    QuadraticPzt { kappa: f64, omega0: f64 },
}

pub fn make_error_schedule(model: &ErrorModel, frames: usize, seed: u64) -> Result<ErrorSchedule> {
    if frames < 3 {
        return Err(Error::Invalid(format!(
            "schedules need at least 3 frames, got {frames}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deviations = match *model {
        ErrorModel::Zero => vec![0.0; frames],
        ErrorModel::Uniform { half_width } => {
            if !half_width.is_finite() || half_width < 0.0 {
                return Err(Error::Invalid(format!("bad uniform half-width {half_width}")));
            }
            (0..frames)
                .map(|_| half_width * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        }
        ErrorModel::Gaussian { sigma } => {
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(Error::Invalid(format!("bad gaussian sigma {sigma}")));
            }
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Invalid(e.to_string()))?;
            (0..frames).map(|_| rng.sample(normal)).collect()
        }
        ErrorModel::QuadraticPzt { kappa, omega0 } => {
            if !kappa.is_finite() || !omega0.is_finite() {
                return Err(Error::Invalid("quadratic-pzt parameters must be finite".into()));
            }
            (0..frames)
                .map(|n| {
                    let s = n as f64 * omega0;
                    kappa * s * s
                })
                .collect()
        }
    };
    ErrorSchedule::new(deviations)
}

/// Parameters for [`generate_stack`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSynthesis {
    pub background: f64,
    pub contrast: f64,
    pub nominal_step: f64,
    pub frames: usize,
    pub errors: ErrorSchedule,
    pub carrier: Option<CarrierSpec>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl StackSynthesis {
    /// Noiseless, error-free, carrier-free defaults (`a = 128`, `b = 100`).
    pub fn nominal(frames: usize, nominal_step: f64) -> Self {
        Self {
            background: 128.0,
            contrast: 100.0,
            nominal_step,
            frames,
            errors: ErrorSchedule::zeros(frames),
            carrier: None,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

pub fn generate_stack(phase: &PhaseMap, p: &StackSynthesis) -> Result<InterferogramStack> {
    let (a, b) = (p.background, p.contrast);
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Invalid(format!("contrast b must be > 0, got {b}")));
    }
    if !(a.is_finite() && a >= b) {
        return Err(Error::Invalid(format!(
            "background a = {a} must be >= b = {b} to keep intensities non-negative"
        )));
    }
    if p.frames < 3 {
        return Err(Error::Invalid(format!(
            "a stack needs at least 3 frames, got {}",
            p.frames
        )));
    }
    if p.errors.len() != p.frames {
        return Err(Error::ScheduleLength {
            expected: p.frames,
            got: p.errors.len(),
        });
    }
    if !(p.noise_sigma.is_finite() && p.noise_sigma >= 0.0) {
        return Err(Error::Invalid(format!("bad noise sigma {}", p.noise_sigma)));
    }
    if let Some(c) = &p.carrier {
        c.check_against(phase)?;
    }

    let (w, h) = (phase.width(), phase.height());
    let base: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| match &p.carrier {
            Some(c) => phase.get(x, y) + c.phase_at(x, y),
            None => phase.get(x, y),
        })
        .collect();

    let mut frames: Vec<Vec<f64>> = p
        .errors
        .deviations()
        .iter()
        .enumerate()
        .map(|(n, eps)| {
            let shift = n as f64 * p.nominal_step + eps;
            base.iter().map(|ph| a + b * (ph + shift).cos()).collect()
        })
        .collect();

    if p.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        for f in &mut frames {
            for v in f.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += p.noise_sigma * z;
            }
        }
    }

    let meta = StackMeta {
        synthetic: true,
        a: Some(a),
        b: Some(b),
        carrier: p.carrier,
        errors: Some(p.errors.clone()),
        noise_sigma: Some(p.noise_sigma),
        seed: Some(p.seed),
    };
    InterferogramStack::new(w, h, frames, p.nominal_step, meta)
}
