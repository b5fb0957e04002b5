//! On-disk formats.
//!
//! Maps are stored as a raw little-endian `f32` file plus a JSON sidecar of the
//! same stem. Complex fields interleave `re, im`. Re-importing an export and
//! exporting again reproduces the bytes exactly.
//!
//! A stack is a directory with `stack.json` and one file per frame, either raw
//! `f32` or 8/16-bit binary PGM for measured data.

use crate::error::{Error, Result};
use crate::field::{CarrierSpec, ComplexField, ErrorSchedule, InterferogramStack, PhaseMap, StackMeta};
use crate::metrics::TrialRecord;
use crate::psa::FtfSample;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    /// Values in `[-pi, pi)`.
    WrappedPhase,
    /// Finite radians with no range constraint.
    Phase,
    /// Interleaved `re, im` pairs.
    Complex,
    /// Any other real-valued map (spectra, intensities).
    Real,
}

impl MapKind {
    fn channels(self) -> usize {
        if self == MapKind::Complex {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub kind: MapKind,
    pub width: usize,
    pub height: usize,
    /// Always `f32le`.
    pub dtype: String,
    /// Raw file name, relative to the sidecar.
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn io_ctx(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Format(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_ctx(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_ctx(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Nearest `f32`, pulled inside `[-pi, pi)` for wrapped data. The `f32`
/// nearest to pi lies above it, so plain rounding would break the range.
fn to_f32(v: f64, wrapped: bool) -> f32 {
    let mut f = v as f32;
    // one ulp toward zero, for either sign
    if wrapped && (f as f64 >= PI || (f as f64) < -PI) {
        f = f32::from_bits(f.to_bits() - 1);
    }
    f
}

fn encode(values: impl Iterator<Item = f32>) -> Vec<u8> {
    values.flat_map(f32::to_le_bytes).collect()
}

fn decode(bytes: &[u8], expected: usize, path: &Path) -> Result<Vec<f64>> {
    if bytes.len() != 4 * expected {
        return Err(Error::Format(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            4 * expected,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes `<dir>/<stem>.f32` and `<dir>/<stem>.json`; returns the sidecar path.
fn write_map(
    dir: &Path,
    stem: &str,
    kind: MapKind,
    width: usize,
    height: usize,
    values: &[f64],
    note: Option<String>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_ctx(dir))?;
    let wrapped = kind == MapKind::WrappedPhase;
    let data = format!("{stem}.f32");
    let raw = dir.join(&data);
    fs::write(&raw, encode(values.iter().map(|&v| to_f32(v, wrapped)))).map_err(io_ctx(&raw))?;
    let side = dir.join(format!("{stem}.json"));
    write_json(
        &side,
        &MapSidecar {
            kind,
            width,
            height,
            dtype: "f32le".into(),
            data,
            note,
        },
    )?;
    Ok(side)
}

fn read_map(sidecar: &Path) -> Result<(MapSidecar, Vec<f64>)> {
    let meta: MapSidecar = read_json(sidecar)?;
    if meta.dtype != "f32le" {
        return Err(Error::Format(format!("unsupported dtype {:?}", meta.dtype)));
    }
    let raw = sidecar.parent().unwrap_or(Path::new(".")).join(&meta.data);
    let bytes = fs::read(&raw).map_err(io_ctx(&raw))?;
    let values = decode(&bytes, meta.width * meta.height * meta.kind.channels(), &raw)?;
    Ok((meta, values))
}

pub fn write_phase(dir: &Path, stem: &str, map: &PhaseMap) -> Result<PathBuf> {
    let kind = if map.is_wrapped() {
        MapKind::WrappedPhase
    } else {
        MapKind::Phase
    };
    write_map(dir, stem, kind, map.width(), map.height(), map.values(), None)
}

pub fn read_phase(sidecar: &Path) -> Result<PhaseMap> {
    let (meta, values) = read_map(sidecar)?;
    match meta.kind {
        MapKind::WrappedPhase => PhaseMap::wrapped(meta.width, meta.height, values),
        MapKind::Phase => PhaseMap::unwrapped(meta.width, meta.height, values),
        k => Err(Error::Format(format!("{}: expected a phase map, found {k:?}", sidecar.display()))),
    }
}

pub fn write_complex(dir: &Path, stem: &str, field: &ComplexField) -> Result<PathBuf> {
    let flat: Vec<f64> = field.values().iter().flat_map(|c| [c.re, c.im]).collect();
    write_map(dir, stem, MapKind::Complex, field.width(), field.height(), &flat, None)
}

pub fn read_complex(sidecar: &Path) -> Result<ComplexField> {
    let (meta, values) = read_map(sidecar)?;
    if meta.kind != MapKind::Complex {
        return Err(Error::Format(format!("{}: not a complex field", sidecar.display())));
    }
    let z = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    ComplexField::new(meta.width, meta.height, z)
}

pub fn write_real(
    dir: &Path,
    stem: &str,
    width: usize,
    height: usize,
    values: &[f64],
    note: Option<&str>,
) -> Result<PathBuf> {
    if values.len() != width * height {
        return Err(Error::Invalid(format!(
            "{width}x{height} map needs {} values, got {}",
            width * height,
            values.len()
        )));
    }
    write_map(dir, stem, MapKind::Real, width, height, values, note.map(str::to_owned))
}

pub fn read_real(sidecar: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let (meta, values) = read_map(sidecar)?;
    if meta.kind != MapKind::Real {
        return Err(Error::Format(format!("{}: not a real map", sidecar.display())));
    }
    Ok((meta.width, meta.height, values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    F32le,
    Pgm,
}

/// `stack.json`. Acquisition fields unknown for measured data are null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSidecar {
    pub width: usize,
    pub height: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub omega0: f64,
    #[serde(default)]
    pub synthetic: bool,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub carrier: Option<CarrierSpec>,
    pub errors: Option<ErrorSchedule>,
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
    pub frame_format: FrameFormat,
    pub frames: Vec<String>,
}

pub const STACK_SIDECAR: &str = "stack.json";

/// Writes a stack as raw `f32` frames. Frames are rounded to `f32`.
pub fn write_stack(dir: &Path, stack: &InterferogramStack) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_ctx(dir))?;
    let mut names = Vec::with_capacity(stack.len());
    for (n, frame) in stack.frames().iter().enumerate() {
        let name = format!("frame_{n:03}.f32");
        let path = dir.join(&name);
        fs::write(&path, encode(frame.iter().map(|&v| v as f32))).map_err(io_ctx(&path))?;
        names.push(name);
    }
    let m = stack.meta();
    let side = dir.join(STACK_SIDECAR);
    write_json(
        &side,
        &StackSidecar {
            width: stack.width(),
            height: stack.height(),
            n: stack.len(),
            omega0: stack.nominal_step(),
            synthetic: m.synthetic,
            a: m.a,
            b: m.b,
            carrier: m.carrier,
            errors: m.errors.clone(),
            noise_sigma: m.noise_sigma,
            seed: m.seed,
            frame_format: FrameFormat::F32le,
            frames: names,
        },
    )?;
    Ok(side)
}

/// Reads a stack directory (or its `stack.json`).
pub fn read_stack(path: &Path) -> Result<InterferogramStack> {
    let side = if path.is_dir() {
        path.join(STACK_SIDECAR)
    } else {
        path.to_path_buf()
    };
    let dir = side.parent().unwrap_or(Path::new(".")).to_path_buf();
    let s: StackSidecar = read_json(&side)?;
    if s.frames.len() != s.n {
        return Err(Error::Format(format!(
            "{}: N = {} but {} frame files are listed",
            side.display(),
            s.n,
            s.frames.len()
        )));
    }
    let mut frames = Vec::with_capacity(s.n);
    for name in &s.frames {
        let path = dir.join(name);
        let frame = match s.frame_format {
            FrameFormat::F32le => {
                let bytes = fs::read(&path).map_err(io_ctx(&path))?;
                decode(&bytes, s.width * s.height, &path)?
            }
            FrameFormat::Pgm => read_pgm(&path, s.width, s.height)?,
        };
        frames.push(frame);
    }
    InterferogramStack::new(
        s.width,
        s.height,
        frames,
        s.omega0,
        StackMeta {
            synthetic: s.synthetic,
            a: s.a,
            b: s.b,
            carrier: s.carrier,
            errors: s.errors,
            noise_sigma: s.noise_sigma,
            seed: s.seed,
        },
    )
}

/// Reads an 8- or 16-bit binary graymap as raw gray levels.
pub fn read_pgm(path: &Path, width: usize, height: usize) -> Result<Vec<f64>> {
    let img = image::ImageReader::open(path)
        .map_err(io_ctx(path))?
        .with_guessed_format()
        .map_err(io_ctx(path))?
        .decode()?;
    if (img.width() as usize, img.height() as usize) != (width, height) {
        return Err(Error::DimensionMismatch {
            expected_w: width,
            expected_h: height,
            got_w: img.width() as usize,
            got_h: img.height() as usize,
        });
    }
    Ok(match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(f64::from).collect(),
        other => {
            return Err(Error::Format(format!(
                "{}: expected a graymap, found {:?}",
                path.display(),
                other.color()
            )))
        }
    })
}

/// Renders `values` as an 8-bit binary PGM, mapping `[lo, hi]` linearly onto
/// `0..=255` and clamping outside.
pub fn write_pgm8(path: &Path, width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> Result<()> {
    if values.len() != width * height || !(hi > lo) {
        return Err(Error::Invalid(format!(
            "cannot render {} values as {width}x{height} over [{lo}, {hi}]",
            values.len()
        )));
    }
    let bytes: Vec<u8> = values
        .iter()
        .map(|v| (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8)
        .collect();
    let file = fs::File::create(path).map_err(io_ctx(path))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&bytes, width as u32, height as u32, ExtendedColorType::L8)?;
    Ok(())
}

/// Writes a stack as 8-bit PGM frames spanning `[0, max intensity]` plus a
/// sidecar, the layout measured data arrives in.
pub fn write_stack_pgm(dir: &Path, stack: &InterferogramStack) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_ctx(dir))?;
    let peak = stack
        .frames()
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max(v))
        .max(f64::MIN_POSITIVE);
    let mut names = Vec::new();
    for (n, frame) in stack.frames().iter().enumerate() {
        let name = format!("frame_{n:03}.pgm");
        write_pgm8(&dir.join(&name), stack.width(), stack.height(), frame, 0.0, peak)?;
        names.push(name);
    }
    let side = dir.join(STACK_SIDECAR);
    write_json(
        &side,
        &StackSidecar {
            width: stack.width(),
            height: stack.height(),
            n: stack.len(),
            omega0: stack.nominal_step(),
            synthetic: false,
            a: None,
            b: None,
            carrier: None,
            errors: None,
            noise_sigma: None,
            seed: None,
            frame_format: FrameFormat::Pgm,
            frames: names,
        },
    )?;
    Ok(side)
}

/// Phase rendering: `gain * phi` over `[-pi, pi]` to gray levels. Gain is a
/// display option only.
pub fn write_phase_pgm(path: &Path, map: &PhaseMap, gain: f64) -> Result<()> {
    let v: Vec<f64> = map.values().iter().map(|p| gain * p).collect();
    write_pgm8(path, map.width(), map.height(), &v, -PI, PI)
}

/// Min-max normalized rendering.
pub fn write_autoscaled_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    write_pgm8(path, width, height, values, lo, hi)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_ctx(parent))?;
    }
    fs::write(path, text).map_err(io_ctx(path))
}

/// Columns `omega_over_pi, re_h, im_h, abs_h`.
pub fn write_ftf_csv(path: &Path, samples: &[FtfSample]) -> Result<()> {
    let mut s = String::from("omega_over_pi,re_h,im_h,abs_h\n");
    for p in samples {
        let _ = writeln!(
            s,
            "{:?},{:?},{:?},{:?}",
            p.omega / PI,
            p.value.re,
            p.value.im,
            p.value.norm()
        );
    }
    write_text(path, &s)
}

/// One row of each map, columns `x, <name>...`.
pub fn write_line_cut(path: &Path, row: usize, maps: &[(&str, &PhaseMap)]) -> Result<()> {
    let Some((_, first)) = maps.first() else {
        return Err(Error::Invalid("line cut needs at least one map".into()));
    };
    for (_, m) in maps {
        m.same_dims(first.width(), first.height())?;
    }
    if row >= first.height() {
        return Err(Error::Invalid(format!(
            "row {row} outside a map of height {}",
            first.height()
        )));
    }
    let mut s = String::from("x");
    for (name, _) in maps {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for x in 0..first.width() {
        let _ = write!(s, "{x}");
        for (_, m) in maps {
            let _ = write!(s, ",{:?}", m.get(x, row));
        }
        s.push('\n');
    }
    write_text(path, &s)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

pub fn write_trials_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut s = String::from("index,schedule_seed,noise_seed,leak_ratio,oracle_pv,pv,rms,error\n");
    for r in records {
        let err = r.error.as_deref().unwrap_or("").replace(['"', ',', '\n'], " ");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.index,
            r.schedule_seed,
            r.noise_seed,
            opt(r.leak_ratio),
            opt(r.oracle_pv),
            opt(r.pv),
            opt(r.rms),
            err
        );
    }
    write_text(path, &s)
}

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_ctx(parent))?;
    }
    write_json(path, value)
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}
