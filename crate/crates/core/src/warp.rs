//! Fisheye synthesis from equirectangular panoramas and rectification to perspective.
//!
//! Camera and panorama frames share axes: `x` right, `y` down, `z` forward.
//! A world ray maps to longitude `atan2(x, z)` and latitude `asin(−y)` (up is
//! positive). Panorama column 0 starts at longitude `−π`; row 0 is latitude
//! `+π/2`. Pixel centers sit at half-integer angular steps.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::{Calibration, RadialCamera, Ray};
use crate::grid::Grid;
use crate::sample::{
    bilinear_sample, bilinear_sample_wrap_x, nearest_sample, nearest_sample_wrap_x, BorderPolicy,
};

/// Largest elevation used by [`random_orientation`].
pub const MAX_ELEVATION_DEG: f64 = 45.0;

#[derive(Debug, thiserror::Error)]
pub enum WarpError {
    #[error("panorama must be 2:1 (got {width}x{height})")]
    BadAspect { width: usize, height: usize },
    #[error(
        "rectification needs rays up to {theta_deg:.2} deg but is only applicable when the field of view \
         keeps every ray below {limit_deg:.2} deg"
    )]
    FovExceeded { theta_deg: f64, limit_deg: f64 },
    #[error("invalid perspective intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("orientation is not a rotation matrix")]
    InvalidOrientation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Bilinear,
    /// For label maps.
    Nearest,
}

/// Camera-from-panorama rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation(Matrix3<f64>);

impl Orientation {
    pub fn new(m: Matrix3<f64>) -> Result<Self, WarpError> {
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-10) || (m.determinant() - 1.0).abs() > 1e-10 {
            return Err(WarpError::InvalidOrientation);
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Camera looking at longitude `yaw` and elevation `pitch`, no roll.
    pub fn from_yaw_pitch(yaw: f64, pitch: f64) -> Self {
        let world_from_camera = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch);
        Self(world_from_camera.inverse().into_inner())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row-major entries, for sidecar files.
    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// Composes a further camera rotation: `rot · self`.
    pub fn then(&self, rot: &Matrix3<f64>) -> Result<Self, WarpError> {
        Self::new(rot * self.0)
    }
}

/// Uniform azimuth, elevation uniform in ±[`MAX_ELEVATION_DEG`], zero roll.
pub fn random_orientation(rng: &mut impl Rng) -> Orientation {
    let yaw = rng.gen_range(-PI..PI);
    let limit = MAX_ELEVATION_DEG.to_radians();
    let pitch = rng.gen_range(-limit..=limit);
    Orientation::from_yaw_pitch(yaw, pitch)
}

/// [`random_orientation`] drawn from a ChaCha8 stream seeded with `seed`.
pub fn seeded_orientation(seed: u64) -> Orientation {
    random_orientation(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Pinhole target camera for rectification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PerspectiveIntrinsics {
    pub fn new(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, WarpError> {
        if width == 0 || height == 0 {
            return Err(WarpError::InvalidIntrinsics(format!("size {width}x{height}")));
        }
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(WarpError::InvalidIntrinsics(format!("focal lengths {fx}, {fy}")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(WarpError::InvalidIntrinsics("principal point must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        })
    }

    /// Centered square-pixel camera with horizontal field of view `hfov` (radians).
    ///
    /// A pinhole cannot see 180° or more, so such requests fail with `FovExceeded`.
    pub fn from_fov(width: usize, height: usize, hfov: f64) -> Result<Self, WarpError> {
        if !(hfov > 0.0) {
            return Err(WarpError::InvalidIntrinsics(format!("field of view {hfov}")));
        }
        if hfov >= PI {
            return Err(WarpError::FovExceeded {
                theta_deg: (0.5 * hfov).to_degrees(),
                limit_deg: 90.0,
            });
        }
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        Self::new(width, height, f, f, 0.5 * (width as f64 - 1.0), 0.5 * (height as f64 - 1.0))
    }

    /// Viewing ray of a pixel.
    pub fn ray(&self, u: f64, v: f64) -> Ray {
        Ray::new(Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0))
            .expect("pinhole rays are finite")
    }

    /// Largest incidence angle over the image (attained at a corner).
    pub fn max_theta(&self) -> f64 {
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .into_iter()
            .map(|(u, v)| {
                let rho = ((u - self.cx) / self.fx).hypot((v - self.cy) / self.fy);
                rho.atan2(1.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Continuous panorama coordinates of a world direction.
pub fn equirect_coords(dir: &Vector3<f64>, width: usize, height: usize) -> (f64, f64) {
    let lon = dir.x.atan2(dir.z);
    let lat = (-dir.y / dir.norm()).clamp(-1.0, 1.0).asin();
    let x = (lon + PI) / (2.0 * PI) * width as f64 - 0.5;
    let y = (FRAC_PI_2 - lat) / PI * height as f64 - 0.5;
    (x, y)
}

fn render_rows(
    channels: usize,
    height: usize,
    width: usize,
    pixel: impl Fn(usize, usize, &mut [f64]) + Sync,
) -> Grid {
    let rows: Vec<Vec<f64>> = (0..height)
        .into_par_iter()
        .map(|v| {
            let mut row = vec![0.0; channels * width];
            for (u, px) in row.chunks_mut(channels).enumerate() {
                pixel(u, v, px);
            }
            row
        })
        .collect();
    let plane = height * width;
    let mut data = vec![0.0; channels * plane];
    for (v, row) in rows.iter().enumerate() {
        for (u, px) in row.chunks(channels).enumerate() {
            for (c, &val) in px.iter().enumerate() {
                data[c * plane + v * width + u] = val;
            }
        }
    }
    Grid::new(channels, height, width, data).expect("rendered values are finite")
}

/// Whether `(u, v)` lies inside the elliptical image of the field-of-view cone.
pub fn in_fov<C: RadialCamera>(camera: &C, u: f64, v: f64) -> bool {
    let i = camera.intrinsics();
    let r = camera.fov_radius();
    let a = (u - i.cx) / (i.fx * r);
    let b = (v - i.cy) / (i.fy * r);
    a * a + b * b <= 1.0
}

/// Binary mask of the fisheye disk at the calibration resolution.
pub fn valid_mask(calib: &Calibration) -> Grid {
    valid_mask_for(calib, calib.width() as usize, calib.height() as usize)
}

pub fn valid_mask_for<C: RadialCamera>(camera: &C, width: usize, height: usize) -> Grid {
    Grid::from_fn(1, height, width, |_, v, u| in_fov(camera, u as f64, v as f64) as u8 as f64)
}

/// Renders the fisheye view of `pano` seen by `calib` at `orient`.
///
/// Pixels outside the field-of-view disk are zero.
pub fn equirect_to_fisheye(
    pano: &Grid,
    calib: &Calibration,
    orient: &Orientation,
    interp: Interpolation,
) -> Result<Grid, WarpError> {
    let (channels, ph, pw) = pano.dims();
    if ph == 0 || pw != 2 * ph {
        return Err(WarpError::BadAspect {
            width: pw,
            height: ph,
        });
    }
    let world_from_camera = orient.matrix().transpose();
    let planes: Vec<_> = (0..channels).map(|c| pano.plane(c)).collect();
    let (w, h) = (calib.width() as usize, calib.height() as usize);
    Ok(render_rows(channels, h, w, |u, v, out| {
        let (uf, vf) = (u as f64, v as f64);
        if !in_fov(calib, uf, vf) {
            return;
        }
        let Ok(ray) = calib.backproject((uf, vf)) else {
            return;
        };
        let dir = world_from_camera * ray.as_vector();
        let (x, y) = equirect_coords(&dir, pw, ph);
        for (slot, plane) in out.iter_mut().zip(&planes) {
            *slot = match interp {
                Interpolation::Bilinear => bilinear_sample_wrap_x(plane, x, y),
                Interpolation::Nearest => nearest_sample_wrap_x(plane, x, y),
            };
        }
    }))
}

/// Resamples a fisheye image onto a pinhole camera sharing its optical center.
pub fn fisheye_to_perspective(
    img: &Grid,
    calib: &Calibration,
    persp: &PerspectiveIntrinsics,
    interp: Interpolation,
) -> Result<Grid, WarpError> {
    let limit = FRAC_PI_2.min(0.5 * calib.fov());
    let theta = persp.max_theta();
    if theta >= limit {
        return Err(WarpError::FovExceeded {
            theta_deg: theta.to_degrees(),
            limit_deg: limit.to_degrees(),
        });
    }
    let planes: Vec<_> = (0..img.channels()).map(|c| img.plane(c)).collect();
    Ok(render_rows(img.channels(), persp.height, persp.width, |u, v, out| {
        let (x, y) = calib.project(&persp.ray(u as f64, v as f64));
        for (slot, plane) in out.iter_mut().zip(&planes) {
            *slot = match interp {
                Interpolation::Bilinear => bilinear_sample(plane, x, y, BorderPolicy::Zero),
                Interpolation::Nearest => nearest_sample(plane, x, y, BorderPolicy::Zero),
            };
        }
    }))
}
