//! Command-line flags. Every flag is optional and overrides the base config,
//! which comes from `--config FILE`, a preset, or the built-in defaults.

use crate::commands::RunConfig;
use crate::config::*;
use crate::error::CliError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nlpsi::field::{CarrierSpec, ErrorModel, PolyTerm, Wavefront};
use nlpsi::io::FrameFormat;
use nlpsi::metrics::Method;
use serde::de::DeserializeOwned;
use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "nlpsi", version, about = "Phase-shifting demodulation experiments")]
pub struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize an interferogram stack and its truth phase.
    Simulate(SimulateArgs),
    /// Demodulate a stack (temporal only, or temporal plus spatial filtering).
    Demod(DemodArgs),
    /// Sweep a PSA frequency transfer function to CSV.
    Ftf(FtfArgs),
    /// Difference two phase maps after piston and tilt removal.
    Compare(CompareArgs),
    /// Repeatability study over random step-error schedules.
    Montecarlo(MonteCarloArgs),
    /// Reproduce one of the reference figures at synthetic scale.
    Figure(FigureArgs),
    /// Re-run the configuration recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
    /// JSON config used as the base; flags still override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PsaArgs {
    /// Real PSA taps, comma separated.
    #[arg(long, value_parser = parse_floats, conflicts_with = "zeros")]
    pub taps: Option<FloatList>,
    /// Build the PSA from FTF zeros (rad/frame), comma separated.
    #[arg(long, value_parser = parse_floats)]
    pub zeros: Option<FloatList>,
    /// Nominal step for --taps or --zeros (default pi/2).
    #[arg(long)]
    pub step: Option<f64>,
}

impl PsaArgs {
    fn apply(&self, base: PsaConfig) -> PsaConfig {
        let step = self.step.unwrap_or(FRAC_PI_2);
        match (&self.taps, &self.zeros) {
            (Some(t), _) => PsaConfig::Taps {
                coefficients: t.0.clone(),
                step,
            },
            (None, Some(z)) => PsaConfig::Zeros {
                zeros: z.0.clone(),
                step,
            },
            (None, None) => base,
        }
    }
}

#[derive(Debug, Args)]
pub struct ErrorArgs {
    /// Explicit step deviations in rad, comma separated.
    #[arg(long, value_parser = parse_floats)]
    pub errors: Option<FloatList>,
    /// zero | uniform:H | gaussian:S | quadratic-pzt:K[:STEP]
    #[arg(long, value_parser = parse_error_model)]
    pub error_model: Option<ErrorModel>,
    #[arg(long)]
    pub error_seed: Option<u64>,
}

impl ErrorArgs {
    fn apply(&self, mut base: ErrorsConfig) -> ErrorsConfig {
        if let Some(m) = &self.error_model {
            base.model = m.clone();
            base.values = None;
        }
        set(&mut base.seed, self.error_seed);
        if let Some(v) = &self.errors {
            base.values = Some(v.0.clone());
        }
        base
    }
}

#[derive(Debug, Args)]
pub struct WavefrontArgs {
    /// flat | tilt | defocus | astigmatism | polynomial
    #[arg(long, value_parser = parse_wavefront)]
    pub wavefront: Option<Wavefront>,
    /// Polynomial term px:py:coeff (repeatable).
    #[arg(long = "term", value_parser = parse_term)]
    pub terms: Vec<PolyTerm>,
    /// Wavefront peak-to-valley in radians.
    #[arg(long)]
    pub amplitude: Option<f64>,
}

impl WavefrontArgs {
    fn apply(&self, wavefront: &mut Wavefront, amplitude: &mut f64) {
        if let Some(w) = &self.wavefront {
            *wavefront = w.clone();
        }
        if !self.terms.is_empty() {
            *wavefront = Wavefront::Polynomial {
                terms: self.terms.clone(),
            };
        }
        set(amplitude, self.amplitude);
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, conflicts_with = "config")]
    pub preset: Option<SimulatePreset>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[command(flatten)]
    pub wavefront: WavefrontArgs,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Nominal phase step in rad/frame.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub background: Option<f64>,
    #[arg(long)]
    pub contrast: Option<f64>,
    #[command(flatten)]
    pub errors: ErrorArgs,
    /// Spatial carrier U0[,V0] in rad/px.
    #[arg(long, value_parser = parse_carrier, conflicts_with = "no_carrier")]
    pub carrier: Option<CarrierSpec>,
    #[arg(long)]
    pub no_carrier: bool,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub frame_format: Option<FrameFormatArg>,
    /// Also export the predicted ripple for A1 = 1, A2 = this value.
    #[arg(long)]
    pub leak_preview: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FrameFormatArg {
    F32le,
    Pgm,
}

impl From<FrameFormatArg> for FrameFormat {
    fn from(f: FrameFormatArg) -> Self {
        match f {
            FrameFormatArg::F32le => FrameFormat::F32le,
            FrameFormatArg::Pgm => FrameFormat::Pgm,
        }
    }
}

#[derive(Debug, Args)]
pub struct DemodArgs {
    #[command(flatten)]
    pub common: Common,
    /// Stack directory or its stack.json.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<DemodMethod>,
    #[command(flatten)]
    pub psa: PsaArgs,
    /// metadata | auto | none | U0[,V0]
    #[arg(long, value_parser = parse_carrier_source)]
    pub carrier: Option<CarrierSource>,
    /// Low-pass cutoff in rad/px.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Border excluded from metrics, in pixels.
    #[arg(long)]
    pub crop: Option<usize>,
    /// Reference phase sidecar for an error report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Row for the line-cut CSV.
    #[arg(long)]
    pub row: Option<usize>,
    #[arg(long)]
    pub no_tilt: bool,
    /// Display gain for PGM renderings.
    #[arg(long)]
    pub gain: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FtfArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub psa: PsaArgs,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sweep [-span*pi, span*pi).
    #[arg(long)]
    pub span: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// First phase sidecar.
    pub a: Option<PathBuf>,
    /// Second phase sidecar.
    pub b: Option<PathBuf>,
    #[arg(long)]
    pub crop: Option<usize>,
    #[arg(long)]
    pub no_tilt: bool,
    /// Display gain for diff.pgm.
    #[arg(long)]
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Temporal,
    Spatial,
    Both,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[command(flatten)]
    pub wavefront: WavefrontArgs,
    #[command(flatten)]
    pub psa: PsaArgs,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, value_parser = parse_carrier, conflicts_with = "no_carrier")]
    pub carrier: Option<CarrierSpec>,
    #[arg(long)]
    pub no_carrier: bool,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub crop: Option<usize>,
    #[arg(long)]
    pub no_tilt: bool,
    /// zero | uniform:H | gaussian:S | quadratic-pzt:K[:STEP]
    #[arg(long, value_parser = parse_error_model)]
    pub error_model: Option<ErrorModel>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub background: Option<f64>,
    #[arg(long)]
    pub contrast: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(value_enum)]
    pub figure: Figure,
    /// Grid size in pixels (square).
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[command(flatten)]
    pub errors: ErrorArgs,
    #[arg(long)]
    pub gain: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// manifest.json of an earlier run.
    pub manifest: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
}

/// Comma-separated floats as one flag value.
#[derive(Debug, Clone)]
pub struct FloatList(pub Vec<f64>);

fn parse_floats(s: &str) -> Result<FloatList, String> {
    parse_list(s).map(FloatList)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_wavefront(s: &str) -> Result<Wavefront, String> {
    s.parse().map_err(|e: nlpsi::Error| e.to_string())
}

fn parse_term(s: &str) -> Result<PolyTerm, String> {
    s.parse().map_err(|e: nlpsi::Error| e.to_string())
}

fn load_base<T: DeserializeOwned>(path: &Option<PathBuf>, default: T) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(default);
    };
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

impl SimulateArgs {
    pub fn resolve(&self) -> Result<SimulateConfig, CliError> {
        let default = self.preset.map_or_else(SimulateConfig::default, SimulateConfig::preset);
        let mut c = load_base(&self.common.config, default)?;
        set(&mut c.width, self.width);
        set(&mut c.height, self.height);
        self.wavefront.apply(&mut c.wavefront, &mut c.amplitude);
        set(&mut c.frames, self.frames);
        set(&mut c.step, self.step);
        set(&mut c.background, self.background);
        set(&mut c.contrast, self.contrast);
        c.errors = self.errors.apply(c.errors);
        if self.carrier.is_some() {
            c.carrier = self.carrier;
        }
        if self.no_carrier {
            c.carrier = None;
        }
        set(&mut c.noise_sigma, self.noise_sigma);
        set(&mut c.noise_seed, self.noise_seed);
        set(&mut c.frame_format, self.frame_format.map(Into::into));
        if self.leak_preview.is_some() {
            c.leak_preview = self.leak_preview;
        }
        Ok(c)
    }
}

impl DemodArgs {
    pub fn resolve(&self) -> Result<DemodConfig, CliError> {
        let mut c = load_base(&self.common.config, DemodConfig::default())?;
        set(&mut c.input, self.input.clone());
        set(&mut c.method, self.method);
        c.psa = self.psa.apply(c.psa);
        set(&mut c.carrier, self.carrier.clone());
        if self.cutoff.is_some() {
            c.cutoff = self.cutoff;
        }
        if self.crop.is_some() {
            c.border_crop = self.crop;
        }
        if self.truth.is_some() {
            c.truth = self.truth.clone();
        }
        if self.row.is_some() {
            c.line_cut_row = self.row;
        }
        if self.no_tilt {
            c.tilt = false;
        }
        set(&mut c.pgm_gain, self.gain);
        if self.common.config.is_none() && self.input.is_none() {
            return Err(CliError::Config("demod needs --input or --config".into()));
        }
        Ok(c)
    }
}

impl FtfArgs {
    pub fn resolve(&self) -> Result<FtfConfig, CliError> {
        let mut c = load_base(&self.common.config, FtfConfig::default())?;
        c.psa = self.psa.apply(c.psa);
        set(&mut c.samples, self.samples);
        set(&mut c.span, self.span);
        Ok(c)
    }
}

impl CompareArgs {
    pub fn resolve(&self) -> Result<CompareConfig, CliError> {
        let mut c = load_base(&self.common.config, CompareConfig::default())?;
        set(&mut c.a, self.a.clone());
        set(&mut c.b, self.b.clone());
        set(&mut c.crop, self.crop);
        if self.no_tilt {
            c.tilt = false;
        }
        set(&mut c.gain, self.gain);
        if self.common.config.is_none() && (self.a.is_none() || self.b.is_none()) {
            return Err(CliError::Config("compare needs two phase maps or --config".into()));
        }
        Ok(c)
    }
}

impl MonteCarloArgs {
    pub fn resolve(&self) -> Result<MonteCarloConfig, CliError> {
        let mut c = load_base(&self.common.config, MonteCarloConfig::default())?;
        set(&mut c.width, self.width);
        set(&mut c.height, self.height);
        self.wavefront.apply(&mut c.wavefront, &mut c.amplitude);
        c.psa = self.psa.apply(c.psa);
        if let Some(m) = self.method {
            c.methods = match m {
                MethodArg::Temporal => vec![Method::Temporal],
                MethodArg::Spatial => vec![Method::Spatial],
                MethodArg::Both => vec![Method::Temporal, Method::Spatial],
            };
        }
        if self.carrier.is_some() {
            c.carrier = self.carrier;
        }
        if self.no_carrier {
            c.carrier = None;
        }
        if self.cutoff.is_some() {
            c.cutoff = self.cutoff;
        }
        if self.crop.is_some() {
            c.crop = self.crop;
        }
        if self.no_tilt {
            c.tilt = false;
        }
        set(&mut c.error_model, self.error_model.clone());
        set(&mut c.trials, self.trials);
        set(&mut c.seed, self.seed);
        set(&mut c.background, self.background);
        set(&mut c.contrast, self.contrast);
        set(&mut c.noise_sigma, self.noise_sigma);
        Ok(c)
    }
}

impl FigureArgs {
    pub fn resolve(&self) -> Result<FigureConfig, CliError> {
        let mut c = load_base(&self.common.config, FigureConfig::for_figure(self.figure))?;
        c.figure = self.figure;
        set(&mut c.size, self.size);
        set(&mut c.amplitude, self.amplitude);
        c.errors = self.errors.apply(c.errors);
        set(&mut c.gain, self.gain);
        Ok(c)
    }
}

/// Resolved config and output directory for one invocation.
pub fn resolve(command: &Command) -> Result<(RunConfig, PathBuf), CliError> {
    Ok(match command {
        Command::Simulate(a) => (RunConfig::Simulate(a.resolve()?), a.common.out.clone()),
        Command::Demod(a) => (RunConfig::Demod(a.resolve()?), a.common.out.clone()),
        Command::Ftf(a) => (RunConfig::Ftf(a.resolve()?), a.common.out.clone()),
        Command::Compare(a) => (RunConfig::Compare(a.resolve()?), a.common.out.clone()),
        Command::Montecarlo(a) => (RunConfig::Montecarlo(a.resolve()?), a.common.out.clone()),
        Command::Figure(a) => (RunConfig::Figure(a.resolve()?), a.common.out.clone()),
        Command::Replay(a) => (
            crate::commands::load_manifest(&a.manifest)?.run,
            a.out.clone(),
        ),
    })
}

/// Parses, resolves and runs; returns the process exit code.
pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match resolve(&cli.command).and_then(|(run, out)| run_checked(&run, &out)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_checked(run: &RunConfig, out: &Path) -> Result<(), CliError> {
    crate::commands::execute(run, out).map(|_| ())
}
