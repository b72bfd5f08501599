//! Interpolating reads at fractional pixel positions.
//!
//! Pixel `(x, y)` with integer coordinates is the center of the stored sample
//! `data[y][x]`. Every resampling path in the crate (deformable convolution,
//! fisheye synthesis, rectification) goes through [`interpolate`].

use crate::grid::Plane;

/// What a read sees outside the raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BorderPolicy {
    /// Out-of-bounds neighbors contribute zero.
    #[default]
    Zero,
    /// Coordinates are clamped into the raster.
    Clamp,
}

/// Bilinear blend of the four integer neighbors of `(x, y)` as supplied by `fetch`.
#[inline]
pub fn interpolate(x: f64, y: f64, fetch: impl Fn(i64, i64) -> f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    let a = fetch(xi, yi);
    let b = fetch(xi + 1, yi);
    let c = fetch(xi, yi + 1);
    let d = fetch(xi + 1, yi + 1);
    let top = a + fx * (b - a);
    let bottom = c + fx * (d - c);
    top + fy * (bottom - top)
}

#[inline]
fn fetch_zero(plane: &Plane<'_>, x: i64, y: i64) -> f64 {
    if x < 0 || y < 0 || x >= plane.width as i64 || y >= plane.height as i64 {
        0.0
    } else {
        plane.at(x as usize, y as usize)
    }
}

#[inline]
fn fetch_clamp(plane: &Plane<'_>, x: i64, y: i64) -> f64 {
    let x = x.clamp(0, plane.width as i64 - 1);
    let y = y.clamp(0, plane.height as i64 - 1);
    plane.at(x as usize, y as usize)
}

/// Bilinear read of one plane under `border`.
#[inline]
pub fn bilinear_sample(plane: &Plane<'_>, x: f64, y: f64, border: BorderPolicy) -> f64 {
    if plane.width == 0 || plane.height == 0 {
        return 0.0;
    }
    match border {
        BorderPolicy::Zero => {
            if x <= -1.0 || y <= -1.0 || x >= plane.width as f64 || y >= plane.height as f64 {
                return 0.0;
            }
            interpolate(x, y, |i, j| fetch_zero(plane, i, j))
        }
        BorderPolicy::Clamp => {
            let x = x.clamp(0.0, (plane.width - 1) as f64);
            let y = y.clamp(0.0, (plane.height - 1) as f64);
            interpolate(x, y, |i, j| fetch_clamp(plane, i, j))
        }
    }
}

/// Bilinear read that wraps horizontally and clamps vertically, for
/// equirectangular panoramas whose columns span a full turn of longitude.
#[inline]
pub fn bilinear_sample_wrap_x(plane: &Plane<'_>, x: f64, y: f64) -> f64 {
    let w = plane.width as i64;
    let y = y.clamp(0.0, (plane.height - 1) as f64);
    interpolate(x, y, |i, j| fetch_clamp(plane, i.rem_euclid(w), j))
}

/// Nearest-neighbor read; used for label maps which must not be blended.
#[inline]
pub fn nearest_sample(plane: &Plane<'_>, x: f64, y: f64, border: BorderPolicy) -> f64 {
    let (xi, yi) = (x.round() as i64, y.round() as i64);
    match border {
        BorderPolicy::Zero => fetch_zero(plane, xi, yi),
        BorderPolicy::Clamp => fetch_clamp(plane, xi, yi),
    }
}

/// Nearest-neighbor counterpart of [`bilinear_sample_wrap_x`].
#[inline]
pub fn nearest_sample_wrap_x(plane: &Plane<'_>, x: f64, y: f64) -> f64 {
    let xi = (x.round() as i64).rem_euclid(plane.width as i64);
    fetch_clamp(plane, xi, y.round() as i64)
}
