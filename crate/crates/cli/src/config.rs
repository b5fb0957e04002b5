//! Fully resolved run configurations. These are what manifests record and what
//! `replay` feeds back in; every tolerance and default is spelled out.

use nlpsi::field::{CarrierSpec, ErrorModel, ErrorSchedule, Wavefront};
use nlpsi::io::FrameFormat;
use nlpsi::metrics::Method;
use nlpsi::psa::{sh5_spec, taps_from_zeros, PsaSpec};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::PathBuf;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PsaConfig {
    /// Five-step `{1, 2, 2, 2, 1}` at `pi/2`.
    Sh5,
    Taps { coefficients: Vec<f64>, step: f64 },
    Zeros { zeros: Vec<f64>, step: f64 },
}

impl Default for PsaConfig {
    fn default() -> Self {
        PsaConfig::Sh5
    }
}

impl PsaConfig {
    pub fn build(&self) -> Result<PsaSpec, CliError> {
        Ok(match self {
            PsaConfig::Sh5 => sh5_spec(),
            PsaConfig::Taps { coefficients, step } => PsaSpec::from_real(coefficients, *step)?,
            PsaConfig::Zeros { zeros, step } => taps_from_zeros(zeros, *step)?,
        })
    }
}

/// Step deviations: an explicit list wins over the random model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorsConfig {
    pub model: ErrorModel,
    pub seed: u64,
    pub values: Option<Vec<f64>>,
}

impl Default for ErrorsConfig {
    fn default() -> Self {
        Self {
            model: ErrorModel::Zero,
            seed: 0,
            values: None,
        }
    }
}

impl ErrorsConfig {
    pub fn schedule(&self, frames: usize) -> Result<ErrorSchedule, CliError> {
        Ok(match &self.values {
            Some(v) => ErrorSchedule::new(v.clone())?,
            None => nlpsi::field::make_error_schedule(&self.model, frames, self.seed)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SimulatePreset {
    /// Flat wavefront, no errors, no carrier.
    Flat,
    /// 3 rad defocus on a pi/4 carrier with uniform 0.3 rad step errors.
    Carrier,
    /// Multi-fringe defocus plus the ripple preview for `A2/A1 = 0.1`.
    Fig1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub width: usize,
    pub height: usize,
    pub wavefront: Wavefront,
    /// Wavefront peak-to-valley in radians.
    pub amplitude: f64,
    pub frames: usize,
    pub step: f64,
    pub background: f64,
    pub contrast: f64,
    pub errors: ErrorsConfig,
    pub carrier: Option<CarrierSpec>,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub frame_format: FrameFormat,
    /// When set, also export the predicted ripple for `A1 = 1, A2 = leak`.
    pub leak_preview: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            wavefront: Wavefront::Defocus,
            amplitude: 3.0,
            frames: 5,
            step: FRAC_PI_2,
            background: 128.0,
            contrast: 100.0,
            errors: ErrorsConfig::default(),
            carrier: None,
            noise_sigma: 0.0,
            noise_seed: 0,
            frame_format: FrameFormat::F32le,
            leak_preview: None,
        }
    }
}

impl SimulateConfig {
    pub fn preset(p: SimulatePreset) -> Self {
        let base = Self::default();
        match p {
            SimulatePreset::Flat => Self {
                wavefront: Wavefront::Flat,
                amplitude: 0.0,
                ..base
            },
            SimulatePreset::Carrier => Self {
                carrier: Some(CarrierSpec {
                    u0: FRAC_PI_4,
                    v0: 0.0,
                }),
                errors: ErrorsConfig {
                    model: ErrorModel::Uniform { half_width: 0.3 },
                    seed: 1,
                    values: None,
                },
                ..base
            },
            SimulatePreset::Fig1 => Self {
                amplitude: 40.0,
                leak_preview: Some(0.1),
                ..base
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum CarrierSource {
    /// Carrier recorded in the stack sidecar.
    Metadata,
    /// Estimated from the spectrum.
    Auto,
    /// No carrier: temporal output is used as is.
    None,
    Given(CarrierSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DemodMethod {
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemodConfig {
    pub input: PathBuf,
    pub method: DemodMethod,
    pub psa: PsaConfig,
    pub carrier: CarrierSource,
    /// Mask cutoff in rad/px; `None` means half the carrier magnitude.
    pub cutoff: Option<f64>,
    /// Metrics crop in pixels; `None` means the mask default.
    pub border_crop: Option<usize>,
    /// Reference phase sidecar for an error report.
    pub truth: Option<PathBuf>,
    /// Row for the line-cut export; `None` means the middle row.
    pub line_cut_row: Option<usize>,
    pub tilt: bool,
    pub pgm_gain: f64,
}

impl Default for DemodConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("stack"),
            method: DemodMethod::Spatial,
            psa: PsaConfig::Sh5,
            carrier: CarrierSource::Metadata,
            cutoff: None,
            border_crop: None,
            truth: None,
            line_cut_row: None,
            tilt: true,
            pgm_gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtfConfig {
    pub psa: PsaConfig,
    pub samples: usize,
    /// Sweep `[-span*pi, span*pi)`.
    pub span: f64,
}

impl Default for FtfConfig {
    fn default() -> Self {
        Self {
            psa: PsaConfig::Sh5,
            samples: 1024,
            span: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub a: PathBuf,
    pub b: PathBuf,
    pub crop: usize,
    pub tilt: bool,
    /// Display gain for the PGM rendering only.
    pub gain: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            a: PathBuf::from("a.json"),
            b: PathBuf::from("b.json"),
            crop: 0,
            tilt: true,
            gain: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub width: usize,
    pub height: usize,
    pub wavefront: Wavefront,
    pub amplitude: f64,
    pub psa: PsaConfig,
    pub methods: Vec<Method>,
    pub carrier: Option<CarrierSpec>,
    pub cutoff: Option<f64>,
    pub crop: Option<usize>,
    pub tilt: bool,
    pub error_model: ErrorModel,
    pub trials: usize,
    pub seed: u64,
    pub background: f64,
    pub contrast: f64,
    pub noise_sigma: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            wavefront: Wavefront::Defocus,
            amplitude: 3.0,
            psa: PsaConfig::Sh5,
            methods: vec![Method::Temporal, Method::Spatial],
            carrier: Some(CarrierSpec {
                u0: FRAC_PI_4,
                v0: 0.0,
            }),
            cutoff: None,
            crop: None,
            tilt: true,
            error_model: ErrorModel::Uniform { half_width: 0.3 },
            trials: 50,
            seed: 0,
            background: 128.0,
            contrast: 100.0,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    /// Sampled interferogram and double-frequency ripple for `A2/A1 = 0.1`.
    Fig1,
    /// FTF magnitude of the five-step PSA over several carrier periods.
    Fig2,
    /// Spectrum and phase of temporal demodulation on a carrier stack.
    Fig8,
    /// Low-pass filtered phase against the temporal phase along one row.
    Fig9,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureConfig {
    pub figure: Figure,
    pub size: usize,
    /// Wavefront P-V in radians.
    pub amplitude: f64,
    pub errors: ErrorsConfig,
    pub gain: f64,
}

impl FigureConfig {
    pub fn for_figure(figure: Figure) -> Self {
        let errors = ErrorsConfig {
            model: ErrorModel::Zero,
            seed: 0,
            values: Some(vec![0.0, 0.25, -0.3, 0.2, 0.3]),
        };
        let (size, amplitude) = match figure {
            Figure::Fig1 => (256, 40.0),
            Figure::Fig2 => (0, 0.0),
            Figure::Fig8 | Figure::Fig9 => (256, 3.0),
        };
        Self {
            figure,
            size,
            amplitude,
            errors,
            gain: 1.0,
        }
    }
}

/// Comma-separated floats, e.g. `0,0.1,-0.2`.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

/// `zero`, `uniform:H`, `gaussian:S` or `quadratic-pzt:K[:STEP]`.
pub fn parse_error_model(s: &str) -> Result<ErrorModel, String> {
    let mut parts = s.split(':');
    let kind = parts.next().unwrap_or_default();
    let nums: Vec<f64> = parts
        .map(|p| p.parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match (kind, nums.as_slice()) {
        ("zero", []) => Ok(ErrorModel::Zero),
        ("uniform", [h]) => Ok(ErrorModel::Uniform { half_width: *h }),
        ("gaussian", [s]) => Ok(ErrorModel::Gaussian { sigma: *s }),
        ("quadratic-pzt", [k]) => Ok(ErrorModel::QuadraticPzt {
            kappa: *k,
            omega0: FRAC_PI_2,
        }),
        ("quadratic-pzt", [k, w]) => Ok(ErrorModel::QuadraticPzt {
            kappa: *k,
            omega0: *w,
        }),
        _ => Err(format!(
            "unknown error model {s:?}; expected zero, uniform:H, gaussian:S or quadratic-pzt:K[:STEP]"
        )),
    }
}

/// `U0` or `U0,V0` in rad/px.
pub fn parse_carrier(s: &str) -> Result<CarrierSpec, String> {
    let v = parse_list(s)?;
    let (u0, v0) = match v.as_slice() {
        [u] => (*u, 0.0),
        [u, w] => (*u, *w),
        _ => return Err(format!("carrier needs one or two numbers, got {s:?}")),
    };
    CarrierSpec::new(u0, v0).map_err(|e| e.to_string())
}

/// `metadata`, `auto`, `none`, or a carrier vector.
pub fn parse_carrier_source(s: &str) -> Result<CarrierSource, String> {
    match s {
        "metadata" => Ok(CarrierSource::Metadata),
        "auto" => Ok(CarrierSource::Auto),
        "none" => Ok(CarrierSource::None),
        other => parse_carrier(other).map(CarrierSource::Given),
    }
}
