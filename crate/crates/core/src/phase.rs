//! Angle helpers shared by every module.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into `[-pi, pi)`.
#[inline]
pub fn wrap(angle: f64) -> f64 {
    let w = angle - TAU * ((angle + PI) / TAU).floor();
    // floor() can land exactly on +pi after rounding
    if w >= PI {
        w - TAU
    } else if w < -PI {
        -PI
    } else {
        w
    }
}

/// Radians to waves (1 wave = 2*pi rad).
#[inline]
pub fn to_waves(radians: f64) -> f64 {
    radians / TAU
}
