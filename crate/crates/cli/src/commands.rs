//! Command bodies. Each takes a resolved config and an output directory and
//! returns the `checks` object recorded in the manifest.

use crate::config::*;
use crate::error::CliError;
use nlpsi::artifact::{conjugate_amplitudes, predicted_error_map, ConjugatePair};
use nlpsi::carrier::{
    demodulate_spatial, demodulate_temporal_only, estimate_carrier, log_spectrum, CarrierChoice,
    SpectralMask, AUTO_EXCLUSION_BINS,
};
use nlpsi::field::{
    generate_stack, max_directional_slope, synthesize_wavefront, CarrierSpec, PhaseMap,
    StackSynthesis,
};
use nlpsi::io::{self, FrameFormat};
use nlpsi::metrics::{compare, montecarlo_repeatability, Method, TrialSetup};
use nlpsi::psa::{demodulate_temporal, ftf_eval};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fs;
use std::path::Path;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum RunConfig {
    Simulate(SimulateConfig),
    Demod(DemodConfig),
    Ftf(FtfConfig),
    Compare(CompareConfig),
    Montecarlo(MonteCarloConfig),
    Figure(FigureConfig),
}

/// Written next to every run's outputs. Holds no paths to the output
/// directory and no timestamps, so replays reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub run: RunConfig,
    pub checks: Value,
}

/// Runs `run` into `out` and writes `out/manifest.json`.
pub fn execute(run: &RunConfig, out: &Path) -> Result<Manifest, CliError> {
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let checks = match run {
        RunConfig::Simulate(c) => simulate(c, out)?,
        RunConfig::Demod(c) => demod(c, out)?,
        RunConfig::Ftf(c) => ftf(c, out)?,
        RunConfig::Compare(c) => compare_maps(c, out)?,
        RunConfig::Montecarlo(c) => montecarlo(c, out)?,
        RunConfig::Figure(c) => figure(c, out)?,
    };
    let manifest = Manifest {
        tool: "nlpsi".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        run: run.clone(),
        checks,
    };
    io::save_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Result<Value, CliError> {
    let truth = synthesize_wavefront(&cfg.wavefront, cfg.amplitude, cfg.width, cfg.height)?;
    let schedule = cfg.errors.schedule(cfg.frames)?;
    let synth = StackSynthesis {
        background: cfg.background,
        contrast: cfg.contrast,
        nominal_step: cfg.step,
        frames: cfg.frames,
        errors: schedule.clone(),
        carrier: cfg.carrier,
        noise_sigma: cfg.noise_sigma,
        seed: cfg.noise_seed,
    };
    let stack = generate_stack(&truth, &synth)?;
    let dir = out.join("stack");
    match cfg.frame_format {
        FrameFormat::F32le => io::write_stack(&dir, &stack)?,
        FrameFormat::Pgm => io::write_stack_pgm(&dir, &stack)?,
    };
    io::write_phase(out, "truth", &truth)?;

    let mut checks = json!({
        "errors": schedule.deviations(),
        "frame_min": stack.frames().iter().flatten().fold(f64::INFINITY, |m, &v| m.min(v)),
        "frame_max": stack.frames().iter().flatten().fold(f64::NEG_INFINITY, |m, &v| m.max(v)),
    });
    if let Some(c) = &cfg.carrier {
        checks["slope_check"] = json!({
            "carrier": c,
            "carrier_magnitude": c.magnitude(),
            "max_slope_along_carrier": max_directional_slope(&truth, c),
            "passed": true,
        });
    }
    if cfg.frames == 5 && cfg.step == FRAC_PI_2 {
        let pair = conjugate_amplitudes(&nlpsi::psa::sh5_spec(), &schedule, cfg.contrast)?;
        checks["sh5_leak_ratio"] = json!(pair.leak_ratio());
    }
    if let Some(r) = cfg.leak_preview {
        checks["leak_preview"] = leak_preview(&truth, r, out)?;
    }
    Ok(checks)
}

/// Ripple for `A1 = 1, A2 = leak` on `truth`, with the sampled fringes.
fn leak_preview(truth: &PhaseMap, leak: f64, out: &Path) -> Result<Value, CliError> {
    let (w, h) = (truth.width(), truth.height());
    let pair = ConjugatePair::new(Complex64::new(1.0, 0.0), Complex64::new(leak, 0.0));
    let err = predicted_error_map(truth, &pair)?;
    io::write_phase(out, "error_map", &err)?;
    let fringes: Vec<f64> = truth.values().iter().map(|p| p.cos()).collect();
    io::write_autoscaled_pgm(&out.join("interferogram.pgm"), w, h, &fringes)?;
    io::write_autoscaled_pgm(&out.join("error_map.pgm"), w, h, err.values())?;
    let row = h / 2;
    io::write_line_cut(
        &out.join("line_cut.csv"),
        row,
        &[("truth_wrapped", &truth.to_wrapped()), ("error", &err)],
    )?;
    let max = err.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(json!({
        "leak_ratio": leak,
        "max_abs_error": max,
        "asin_leak_ratio": leak.asin(),
        "line_cut_row": row,
    }))
}

fn resolve_carrier(source: &CarrierSource, stack: &nlpsi::InterferogramStack) -> Option<CarrierChoice> {
    match source {
        CarrierSource::Metadata => stack.meta().carrier.map(CarrierChoice::Known),
        CarrierSource::Auto => Some(CarrierChoice::Auto),
        CarrierSource::None => None,
        CarrierSource::Given(c) => Some(CarrierChoice::Known(*c)),
    }
}

pub fn demod(cfg: &DemodConfig, out: &Path) -> Result<Value, CliError> {
    let stack = io::read_stack(&cfg.input)?;
    let spec = cfg.psa.build()?;
    let (w, h) = (stack.width(), stack.height());
    let temporal = demodulate_temporal(&stack, &spec)?;

    // spectrum before carrier removal: signal at +c, conjugate at -c
    let spectrum = log_spectrum(&temporal);
    io::write_real(out, "spectrum", w, h, &spectrum, Some("ln(1+|F|), origin centered"))?;
    io::write_autoscaled_pgm(&out.join("spectrum.pgm"), w, h, &spectrum)?;

    let choice = resolve_carrier(&cfg.carrier, &stack);
    let mask = match cfg.cutoff {
        Some(c) => {
            let mut m = SpectralMask::with_cutoff(c)?;
            if let Some(k) = cfg.border_crop {
                m.border_crop = k;
            }
            Some(m)
        }
        None => None,
    };

    let mut checks = json!({ "method": cfg.method });
    let (phase, temporal_phase, crop) = match cfg.method {
        DemodMethod::Spatial => {
            let choice = match choice {
                Some(c) => c,
                None if stack.meta().synthetic => CarrierChoice::Auto,
                None => {
                    return Err(nlpsi::Error::NoCarrier(
                        "stack has no recorded carrier; pass --carrier auto or U0[,V0]".into(),
                    )
                    .into())
                }
            };
            let sd = demodulate_spatial(&stack, &spec, choice, mask)?;
            io::write_complex(out, "field", &sd.filtered)?;
            io::save_json(&out.join("diagnostics.json"), &sd.diagnostics)?;
            let c = sd.diagnostics.carrier;
            let tp = demodulate_temporal_only(&stack, &spec, Some(&c))?;
            checks["carrier"] = json!(c);
            checks["carrier_estimated"] = json!(sd.diagnostics.carrier_estimated);
            checks["mask"] = json!(sd.diagnostics.mask);
            checks["conjugate_to_passband_energy"] = json!(sd.diagnostics.conjugate_to_passband_energy);
            checks["invalid_pixels"] = json!(sd.diagnostics.invalid_pixels);
            let crop = cfg.border_crop.unwrap_or(sd.diagnostics.mask.border_crop);
            (sd.phase.phase, Some(tp.phase), crop)
        }
        DemodMethod::Temporal => {
            let carrier: Option<CarrierSpec> = match choice {
                Some(CarrierChoice::Known(c)) => Some(c),
                Some(CarrierChoice::Auto) => Some(estimate_carrier(&temporal, AUTO_EXCLUSION_BINS)?),
                None => None,
            };
            let tp = demodulate_temporal_only(&stack, &spec, carrier.as_ref())?;
            io::write_complex(out, "field", &temporal)?;
            checks["carrier"] = json!(carrier);
            checks["invalid_pixels"] = json!(tp.invalid_count());
            let default_crop = match (mask, carrier) {
                (Some(m), _) => m.border_crop,
                (None, Some(c)) => SpectralMask::for_carrier(&c)?.border_crop,
                (None, None) => 0,
            };
            (tp.phase, None, cfg.border_crop.unwrap_or(default_crop))
        }
    };
    io::write_phase(out, "phase", &phase)?;
    io::write_phase_pgm(&out.join("phase.pgm"), &phase, cfg.pgm_gain)?;
    checks["crop"] = json!(crop);

    let row = cfg.line_cut_row.unwrap_or(h / 2);
    let mut cut: Vec<(&str, &PhaseMap)> = vec![("phase", &phase)];
    if let Some(tp) = &temporal_phase {
        cut.push(("temporal", tp));
    }
    let error;
    if let Some(truth_path) = &cfg.truth {
        let truth = io::read_phase(truth_path)?;
        let (residual, report) = compare(&phase, &truth, crop, cfg.tilt)?;
        io::write_phase(out, "error", &residual)?;
        io::write_phase_pgm(&out.join("error.pgm"), &residual, cfg.pgm_gain)?;
        io::save_json(&out.join("report.json"), &report)?;
        checks["report"] = json!(report);
        error = residual;
        cut.push(("error", &error));
    }
    io::write_line_cut(&out.join("line_cut.csv"), row, &cut)?;
    checks["line_cut_row"] = json!(row);
    Ok(checks)
}

/// Complex taps as `[re, im]` pairs.
fn taps_json(taps: &[Complex64]) -> Value {
    json!(taps.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>())
}

pub fn ftf(cfg: &FtfConfig, out: &Path) -> Result<Value, CliError> {
    if cfg.samples < 2 || !(cfg.span.is_finite() && cfg.span > 0.0) {
        return Err(CliError::Config(format!(
            "ftf needs samples >= 2 and span > 0, got {} and {}",
            cfg.samples, cfg.span
        )));
    }
    let spec = cfg.psa.build()?;
    let step = spec.nominal_step();
    let lo = -cfg.span * PI;
    let width = 2.0 * cfg.span * PI;
    let samples: Vec<nlpsi::psa::FtfSample> = (0..cfg.samples)
        .map(|k| {
            let omega = lo + width * k as f64 / cfg.samples as f64;
            nlpsi::psa::FtfSample {
                omega,
                value: ftf_eval(&spec, omega),
            }
        })
        .collect();
    io::write_ftf_csv(&out.join("ftf.csv"), &samples)?;

    let zeros: Vec<f64> = match &cfg.psa {
        PsaConfig::Sh5 => vec![0.0, FRAC_PI_2, PI],
        PsaConfig::Zeros { zeros, .. } => zeros.clone(),
        PsaConfig::Taps { .. } => vec![0.0, step],
    };
    let checked: Vec<Value> = zeros
        .iter()
        .map(|&z| json!({ "omega": z, "abs_h": ftf_eval(&spec, z).norm() }))
        .collect();
    let c = spec.coefficients();
    let normalized: Option<Vec<Complex64>> = (c[0].norm() > 0.0).then(|| c.iter().map(|v| v / c[0]).collect());
    let summary = json!({
        "taps": taps_json(c),
        "taps_normalized": normalized.as_deref().map(taps_json),
        "nominal_step": step,
        "rejects_background": spec.rejects_background(),
        "abs_h_background": ftf_eval(&spec, 0.0).norm(),
        "abs_h_passband": ftf_eval(&spec, -step).norm(),
        "abs_h_conjugate": ftf_eval(&spec, step).norm(),
        "zeros_checked": checked,
    });
    io::save_json(&out.join("ftf.json"), &summary)?;
    Ok(summary)
}

pub fn compare_maps(cfg: &CompareConfig, out: &Path) -> Result<Value, CliError> {
    let a = io::read_phase(&cfg.a)?;
    let b = io::read_phase(&cfg.b)?;
    let (residual, report) = compare(&a, &b, cfg.crop, cfg.tilt)?;
    io::write_phase(out, "diff", &residual)?;
    io::write_phase_pgm(&out.join("diff.pgm"), &residual, cfg.gain)?;
    io::save_json(&out.join("report.json"), &report)?;
    Ok(json!(report))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Temporal => "temporal",
        Method::Spatial => "spatial",
    }
}

pub fn montecarlo(cfg: &MonteCarloConfig, out: &Path) -> Result<Value, CliError> {
    if cfg.methods.is_empty() {
        return Err(CliError::Config("montecarlo needs at least one method".into()));
    }
    let truth = synthesize_wavefront(&cfg.wavefront, cfg.amplitude, cfg.width, cfg.height)?;
    let psa = cfg.psa.build()?;
    let mask = match (cfg.cutoff, &cfg.carrier) {
        (Some(c), _) => Some(SpectralMask::with_cutoff(c)?),
        (None, Some(c)) => Some(SpectralMask::for_carrier(c)?),
        (None, None) => None,
    };
    let crop = cfg.crop.unwrap_or(mask.map_or(0, |m| m.border_crop));
    let mut checks = json!({ "crop": crop });
    for &method in &cfg.methods {
        let setup = TrialSetup {
            psa: psa.clone(),
            method,
            carrier: cfg.carrier,
            mask,
            background: cfg.background,
            contrast: cfg.contrast,
            noise_sigma: cfg.noise_sigma,
            crop,
            tilt: cfg.tilt,
        };
        let summary = montecarlo_repeatability(&truth, &setup, &cfg.error_model, cfg.trials, cfg.seed)?;
        let name = method_name(method);
        io::save_json(&out.join(format!("summary_{name}.json")), &summary)?;
        io::write_trials_csv(&out.join(format!("trials_{name}.csv")), &summary.records)?;
        checks[name] = json!({
            "trials": summary.trials,
            "failed": summary.failed,
            "pv": summary.pv,
            "rms": summary.rms,
            "oracle_pv": summary.oracle_pv,
        });
    }
    Ok(checks)
}

fn figure_stack_config(cfg: &FigureConfig) -> SimulateConfig {
    SimulateConfig {
        width: cfg.size,
        height: cfg.size,
        amplitude: cfg.amplitude,
        errors: cfg.errors.clone(),
        carrier: Some(CarrierSpec {
            u0: FRAC_PI_4,
            v0: 0.0,
        }),
        ..SimulateConfig::default()
    }
}

pub fn figure(cfg: &FigureConfig, out: &Path) -> Result<Value, CliError> {
    match cfg.figure {
        Figure::Fig1 => {
            let truth = synthesize_wavefront(&nlpsi::Wavefront::Defocus, cfg.amplitude, cfg.size, cfg.size)?;
            io::write_phase(out, "truth", &truth)?;
            leak_preview(&truth, 0.1, out)
        }
        Figure::Fig2 => ftf(
            &FtfConfig {
                psa: PsaConfig::Sh5,
                samples: 2048,
                span: 5.0,
            },
            out,
        ),
        Figure::Fig8 | Figure::Fig9 => {
            let sim = simulate(&figure_stack_config(cfg), out)?;
            let method = if cfg.figure == Figure::Fig8 {
                DemodMethod::Temporal
            } else {
                DemodMethod::Spatial
            };
            let dm = demod(
                &DemodConfig {
                    input: out.join("stack"),
                    method,
                    truth: Some(out.join("truth.json")),
                    pgm_gain: cfg.gain,
                    ..DemodConfig::default()
                },
                out,
            )?;
            Ok(json!({ "simulate": sim, "demod": dm }))
        }
    }
}
