//! Row-major 2D DFT on top of `rustfft`.
//!
//! Forward transforms are unnormalized; the inverse applies `1 / (width * height)`
//! so that `inverse(forward(x)) == x`. Bin `k` along an axis of length `L` maps to
//! the signed spatial frequency `2*pi*k/L` rad/px, see [`bin_frequency`].

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use std::f64::consts::TAU;

pub fn forward(width: usize, height: usize, data: &mut [Complex64]) {
    transform(width, height, data, FftDirection::Forward);
}

pub fn inverse(width: usize, height: usize, data: &mut [Complex64]) {
    transform(width, height, data, FftDirection::Inverse);
    let scale = 1.0 / (width * height) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

fn transform(width: usize, height: usize, data: &mut [Complex64], direction: FftDirection) {
    assert_eq!(data.len(), width * height);
    let mut planner = FftPlanner::new();

    let rows = planner.plan_fft(width, direction);
    let mut scratch = vec![Complex64::default(); rows.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(width) {
        rows.process_with_scratch(row, &mut scratch);
    }

    let cols = planner.plan_fft(height, direction);
    let mut transposed = transpose(width, height, data);
    scratch.resize(cols.get_inplace_scratch_len(), Complex64::default());
    for col in transposed.chunks_exact_mut(height) {
        cols.process_with_scratch(col, &mut scratch);
    }
    let back = transpose(height, width, &transposed);
    data.copy_from_slice(&back);
}

fn transpose(width: usize, height: usize, m: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); m.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = m[y * width + x];
        }
    }
    out
}

/// Signed bin index: `0..L/2` stay positive, the upper half maps to negatives.
#[inline]
pub fn signed_bin(k: usize, len: usize) -> i64 {
    if 2 * k < len {
        k as i64
    } else {
        k as i64 - len as i64
    }
}

/// Spatial frequency in rad/px of bin `k` along an axis of length `len`.
#[inline]
pub fn bin_frequency(k: usize, len: usize) -> f64 {
    TAU * signed_bin(k, len) as f64 / len as f64
}

/// Reorders a row-major spectrum so the zero-frequency bin sits at the center.
pub fn fftshift<T: Copy + Default>(width: usize, height: usize, m: &[T]) -> Vec<T> {
    let mut out = vec![T::default(); m.len()];
    let (hx, hy) = (width / 2, height / 2);
    for y in 0..height {
        for x in 0..width {
            let sx = (x + hx) % width;
            let sy = (y + hy) % height;
            out[sy * width + sx] = m[y * width + x];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(width: usize, height: usize, data: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); data.len()];
        for ky in 0..height {
            for kx in 0..width {
                let mut acc = Complex64::default();
                for y in 0..height {
                    for x in 0..width {
                        let ang = -TAU
                            * ((kx * x) as f64 / width as f64 + (ky * y) as f64 / height as f64);
                        acc += data[y * width + x] * Complex64::from_polar(1.0, ang);
                    }
                }
                out[ky * width + kx] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft_on_rectangular_grid() {
        let (w, h) = (6, 5);
        let data: Vec<Complex64> = (0..w * h)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut fast = data.clone();
        forward(w, h, &mut fast);
        let slow = naive_dft(w, h, &data);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
        inverse(w, h, &mut fast);
        for (a, b) in fast.iter().zip(&data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn signed_bins() {
        assert_eq!(signed_bin(0, 8), 0);
        assert_eq!(signed_bin(3, 8), 3);
        assert_eq!(signed_bin(4, 8), -4);
        assert_eq!(signed_bin(7, 8), -1);
        assert_eq!(signed_bin(2, 5), 2);
        assert_eq!(signed_bin(3, 5), -2);
    }

    #[test]
    fn shift_moves_origin_to_center() {
        let m: Vec<u32> = (0..16).collect();
        let s = fftshift(4, 4, &m);
        assert_eq!(s[2 * 4 + 2], 0);
    }
}
