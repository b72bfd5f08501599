//! Radially symmetric Kannala-Brandt fisheye model.
//!
//! The image radius of a ray is an odd polynomial of its incidence angle,
//!
//! ```text
//! d(θ) = k1·θ^e1 + k2·θ^e2 + k3·θ^e3 + k4·θ^e4,   (e1..e4) = (1, 3, 5, 9) by default
//! (u, v) = d(θ)·(fx·cos φ, fy·sin φ) + (cx, cy)
//! ```
//!
//! Back-projection inverts `d` numerically with a safeguarded Newton iteration.
//! Fields of view wider than 180° are supported: `θ` may exceed `π/2`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Exponents of the four polynomial terms unless a calibration overrides them.
pub const DEFAULT_EXPONENTS: [u32; 4] = [1, 3, 5, 9];

/// Number of uniform samples used to check that `d` is increasing.
pub const MONOTONICITY_SAMPLES: usize = 10_000;

/// Fraction added to `fov/2` to form the inversion search interval.
pub const INVERSION_MARGIN: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum CameraError {
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("radius {radius} is outside the representable range [0, {max}]")]
    OutOfRange { radius: f64, max: f64 },
    #[error("polynomial inversion did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("calibration file: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Stopping rule for [`KbPolynomial::inverse`].
#[derive(Debug, Clone, Copy)]
pub struct InverseOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// The radial distortion polynomial `d(θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KbPolynomial {
    coeffs: [f64; 4],
    exponents: [u32; 4],
}

impl KbPolynomial {
    pub fn new(coeffs: [f64; 4]) -> Self {
        Self::with_exponents(coeffs, DEFAULT_EXPONENTS)
    }

    pub fn with_exponents(coeffs: [f64; 4], exponents: [u32; 4]) -> Self {
        Self { coeffs, exponents }
    }

    /// The equidistant model `d(θ) = θ`.
    pub fn equidistant() -> Self {
        Self::new([1.0, 0.0, 0.0, 0.0])
    }

    pub fn coeffs(&self) -> [f64; 4] {
        self.coeffs
    }

    pub fn exponents(&self) -> [u32; 4] {
        self.exponents
    }

    /// Evaluates `d(θ)`.
    #[inline]
    pub fn eval(&self, theta: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.exponents)
            .map(|(k, e)| k * theta.powi(e as i32))
            .sum()
    }

    /// Evaluates `d′(θ)`.
    #[inline]
    pub fn derivative(&self, theta: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.exponents)
            .map(|(k, e)| match e {
                0 => 0.0,
                1 => *k,
                _ => k * e as f64 * theta.powi(e as i32 - 1),
            })
            .sum()
    }

    /// Solves `d(θ) = radius` for `θ ∈ [0, theta_max]`.
    ///
    /// Newton's method seeded with the equidistant guess `radius / k1`. Any step
    /// that leaves the current sign bracket, or is taken where `d′ ≤ 0`, is
    /// replaced by a bisection step. Once the residual is within `tol` a few more
    /// Newton steps are taken while they keep shrinking it.
    pub fn inverse(
        &self,
        radius: f64,
        theta_max: f64,
        opts: InverseOptions,
    ) -> Result<f64, CameraError> {
        let max = self.eval(theta_max);
        if !(radius >= 0.0) || radius > max {
            return Err(CameraError::OutOfRange { radius, max });
        }
        if radius == 0.0 {
            return Ok(0.0);
        }

        let (mut lo, mut hi) = (0.0, theta_max);
        let k1 = self.coeffs[0];
        let mut theta = if k1 > 0.0 && self.exponents[0] == 1 {
            radius / k1
        } else {
            0.5 * theta_max
        };
        if !(theta > lo && theta < hi) {
            theta = 0.5 * (lo + hi);
        }

        let mut residual = f64::INFINITY;
        for _ in 0..opts.max_iter {
            residual = self.eval(theta) - radius;
            if residual.abs() <= opts.tol {
                return Ok(self.polish(theta, radius, residual, lo, hi));
            }
            if residual < 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            let slope = self.derivative(theta);
            let next = theta - residual / slope;
            theta = if slope > 0.0 && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(CameraError::NoConvergence {
            iterations: opts.max_iter,
            residual: residual.abs(),
        })
    }

    fn polish(&self, mut theta: f64, radius: f64, mut residual: f64, lo: f64, hi: f64) -> f64 {
        for _ in 0..3 {
            if residual == 0.0 {
                break;
            }
            let slope = self.derivative(theta);
            if !(slope > 0.0) {
                break;
            }
            let next = theta - residual / slope;
            if !(next >= lo && next <= hi) {
                break;
            }
            let next_residual = self.eval(next) - radius;
            if next_residual.abs() >= residual.abs() {
                break;
            }
            theta = next;
            residual = next_residual;
        }
        theta
    }
}

/// A unit direction in the camera frame (`z` along the optical axis, `x` right, `y` down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray(Vector3<f64>);

impl Ray {
    /// Normalizes `v`. Returns `None` for zero or non-finite vectors.
    pub fn new(v: Vector3<f64>) -> Option<Self> {
        let n = v.norm();
        if n > 0.0 && n.is_finite() {
            Some(Self(v / n))
        } else {
            None
        }
    }

    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self(Vector3::new(st * cp, st * sp, ct))
    }

    pub fn optical_axis() -> Self {
        Self(Vector3::z())
    }

    /// Polar angle from the optical axis, in `[0, π]`.
    pub fn theta(&self) -> f64 {
        self.0.x.hypot(self.0.y).atan2(self.0.z)
    }

    /// Azimuth in `(−π, π]`; zero on the optical axis.
    pub fn phi(&self) -> f64 {
        let phi = self.0.y.atan2(self.0.x);
        if phi == -PI {
            PI
        } else {
            phi
        }
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_vector(self) -> Vector3<f64> {
        self.0
    }
}

/// Pinhole-style intrinsic parameters shared by every radial camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Anything that projects through a Kannala-Brandt polynomial.
///
/// Implemented by [`Calibration`] and by calibrations rescaled to a feature map.
pub trait RadialCamera {
    fn intrinsics(&self) -> Intrinsics;
    fn polynomial(&self) -> &KbPolynomial;
    /// Full field of view of the lens in radians.
    fn fov(&self) -> f64;

    /// Upper end of the back-projection search interval.
    fn theta_max(&self) -> f64 {
        0.5 * self.fov() * (1.0 + INVERSION_MARGIN)
    }

    /// Forward model. Rays outside the field of view still evaluate.
    #[inline]
    fn project(&self, ray: &Ray) -> (f64, f64) {
        let Intrinsics { fx, fy, cx, cy } = self.intrinsics();
        let v = ray.as_vector();
        let rho = v.x.hypot(v.y);
        if rho == 0.0 {
            if v.z > 0.0 {
                return (cx, cy);
            }
            // straight behind the camera; azimuth fixed to 0
            return (cx + fx * self.polynomial().eval(PI), cy);
        }
        let r = self.polynomial().eval(rho.atan2(v.z));
        (cx + fx * r * (v.x / rho), cy + fy * r * (v.y / rho))
    }

    /// Back-projection of a pixel to its incoming ray.
    fn backproject(&self, pixel: (f64, f64)) -> Result<Ray, CameraError> {
        self.backproject_with(pixel, InverseOptions::default())
    }

    fn backproject_with(&self, pixel: (f64, f64), opts: InverseOptions) -> Result<Ray, CameraError> {
        let Intrinsics { fx, fy, cx, cy } = self.intrinsics();
        let mx = (pixel.0 - cx) / fx;
        let my = (pixel.1 - cy) / fy;
        let radius = mx.hypot(my);
        let theta = self.polynomial().inverse(radius, self.theta_max(), opts)?;
        let phi = if radius == 0.0 { 0.0 } else { my.atan2(mx) };
        Ok(Ray::from_spherical(theta, phi))
    }

    /// Image radius (in normalized units) of the field-of-view boundary.
    fn fov_radius(&self) -> f64 {
        self.polynomial().eval(0.5 * self.fov())
    }
}

/// On-disk and user-facing calibration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationParams {
    pub width: u32,
    pub height: u32,
    pub cx: f64,
    pub cy: f64,
    pub fx: f64,
    pub fy: f64,
    pub k: [f64; 4],
    pub fov_deg: f64,
    #[serde(default = "default_exponents")]
    pub exponents: [u32; 4],
}

fn default_exponents() -> [u32; 4] {
    DEFAULT_EXPONENTS
}

/// A validated fisheye calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationParams", into = "CalibrationParams")]
pub struct Calibration {
    params: CalibrationParams,
    fov: f64,
    poly: KbPolynomial,
}

impl TryFrom<CalibrationParams> for Calibration {
    type Error = CameraError;

    fn try_from(params: CalibrationParams) -> Result<Self, Self::Error> {
        validate(params)
    }
}

impl From<Calibration> for CalibrationParams {
    fn from(c: Calibration) -> Self {
        c.params
    }
}

/// Checks every calibration invariant, including that `d` increases on `[0, fov/2]`.
pub fn validate(params: CalibrationParams) -> Result<Calibration, CameraError> {
    let invalid = |msg: String| Err(CameraError::InvalidCalibration(msg));
    let p = &params;
    if p.width == 0 || p.height == 0 {
        return invalid(format!("image size must be positive, got {}x{}", p.width, p.height));
    }
    for (name, value) in [("cx", p.cx), ("cy", p.cy), ("fov_deg", p.fov_deg)] {
        if !value.is_finite() {
            return invalid(format!("{name} must be finite"));
        }
    }
    if !(p.fx > 0.0 && p.fx.is_finite()) || !(p.fy > 0.0 && p.fy.is_finite()) {
        return invalid(format!("focal lengths must be positive, got fx={} fy={}", p.fx, p.fy));
    }
    if p.k.iter().any(|k| !k.is_finite()) {
        return invalid("distortion coefficients must be finite".into());
    }
    if p.exponents.iter().any(|&e| e % 2 == 0) {
        return invalid(format!("exponents must be odd and positive, got {:?}", p.exponents));
    }
    let fov = p.fov_deg.to_radians();
    if !(fov > 0.0 && fov <= 2.0 * PI) {
        return invalid(format!("field of view must lie in (0, 360] degrees, got {}", p.fov_deg));
    }

    let poly = KbPolynomial::with_exponents(p.k, p.exponents);
    let half = 0.5 * fov;
    let last = (MONOTONICITY_SAMPLES - 1) as f64;
    for i in 0..MONOTONICITY_SAMPLES {
        let theta = half * i as f64 / last;
        let slope = poly.derivative(theta);
        if !(slope > 0.0) {
            return invalid(format!(
                "d(theta) is not strictly increasing: d'({theta:.6}) = {slope:.6e}"
            ));
        }
    }

    Ok(Calibration { params, fov, poly })
}

impl Calibration {
    pub fn new(params: CalibrationParams) -> Result<Self, CameraError> {
        validate(params)
    }

    pub fn from_json(text: &str) -> Result<Self, CameraError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CameraError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CameraError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn params(&self) -> &CalibrationParams {
        &self.params
    }

    pub fn width(&self) -> u32 {
        self.params.width
    }

    pub fn height(&self) -> u32 {
        self.params.height
    }

    pub fn fov_deg(&self) -> f64 {
        self.params.fov_deg
    }

    /// Synthetic 165° calibration on a 1024×1024 sensor.
    pub fn f165() -> Self {
        Self::new(CalibrationParams {
            width: 1024,
            height: 1024,
            cx: 511.5,
            cy: 511.5,
            fx: 360.0,
            fy: 360.0,
            k: [1.0, -0.03, 0.002, -0.0001],
            fov_deg: 165.0,
            exponents: DEFAULT_EXPONENTS,
        })
        .expect("F165 preset is valid")
    }

    /// Synthetic 195° calibration on a 1024×1024 sensor.
    pub fn f195() -> Self {
        Self::new(CalibrationParams {
            width: 1024,
            height: 1024,
            cx: 511.5,
            cy: 511.5,
            fx: 310.0,
            fy: 310.0,
            k: [1.0, -0.02, 0.001, -0.00005],
            fov_deg: 195.0,
            exponents: DEFAULT_EXPONENTS,
        })
        .expect("F195 preset is valid")
    }
}

impl RadialCamera for Calibration {
    fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.params.fx,
            fy: self.params.fy,
            cx: self.params.cx,
            cy: self.params.cy,
        }
    }

    fn polynomial(&self) -> &KbPolynomial {
        &self.poly
    }

    fn fov(&self) -> f64 {
        self.fov
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: [f64; 4], fov_deg: f64) -> CalibrationParams {
        CalibrationParams {
            width: 640,
            height: 480,
            cx: 320.0,
            cy: 240.0,
            fx: 100.0,
            fy: 100.0,
            k,
            fov_deg,
            exponents: DEFAULT_EXPONENTS,
        }
    }

    /// Bisection to 1e-12 on a monotone polynomial.
    fn bisect_inverse(poly: &KbPolynomial, radius: f64, mut lo: f64, mut hi: f64) -> f64 {
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if poly.eval(mid) < radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn polynomial_values() {
        assert_eq!(KbPolynomial::equidistant().eval(0.5), 0.5);
        assert_eq!(KbPolynomial::new([0.3, -2.0, 7.0, 1.0]).eval(0.0), 0.0);
        assert!((KbPolynomial::new([1.0, 0.1, 0.0, 0.0]).eval(1.0) - 1.1).abs() < 1e-15);
        // the fourth term really is ninth order
        assert_eq!(KbPolynomial::new([0.0, 0.0, 0.0, 1.0]).eval(2.0), 512.0);
    }

    #[test]
    fn polynomial_is_odd() {
        let poly = KbPolynomial::new([1.0, 0.05, -0.01, 0.001]);
        for theta in [0.1, 0.7, 1.3, 2.9] {
            assert!((poly.eval(-theta) + poly.eval(theta)).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let poly = KbPolynomial::new([1.0, 0.05, -0.01, 0.001]);
        for theta in [0.0, 0.4, 1.1, 1.8] {
            let h = 1e-6;
            let fd = (poly.eval(theta + h) - poly.eval((theta - h).max(0.0)))
                / (theta + h - (theta - h).max(0.0));
            assert!((poly.derivative(theta) - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn inverse_trivial_cases() {
        let poly = KbPolynomial::equidistant();
        let opts = InverseOptions::default();
        assert_eq!(poly.inverse(0.0, 2.0, opts).unwrap(), 0.0);
        assert!((poly.inverse(0.7, 2.0, opts).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn inverse_matches_bisection_oracle() {
        let poly = KbPolynomial::new([1.0, 0.05, 0.0, 0.001]);
        let radius = poly.eval(1.2);
        let oracle = bisect_inverse(&poly, radius, 0.0, 2.0);
        assert!((oracle - 1.2).abs() < 1e-11);
        let theta = poly.inverse(radius, 2.0, InverseOptions::default()).unwrap();
        assert!((theta - 1.2).abs() < 1e-8);
        assert!((theta - oracle).abs() < 1e-8);
    }

    #[test]
    fn inverse_rejects_out_of_range() {
        let poly = KbPolynomial::equidistant();
        let err = poly.inverse(2.5, 2.0, InverseOptions::default()).unwrap_err();
        assert!(matches!(err, CameraError::OutOfRange { .. }));
        let err = poly.inverse(-0.1, 2.0, InverseOptions::default()).unwrap_err();
        assert!(matches!(err, CameraError::OutOfRange { .. }));
    }

    #[test]
    fn inverse_reports_no_convergence() {
        let poly = KbPolynomial::new([1.0, 0.05, 0.0, 0.001]);
        let opts = InverseOptions {
            tol: 0.0,
            max_iter: 2,
        };
        let err = poly.inverse(poly.eval(1.2), 2.0, opts).unwrap_err();
        assert!(matches!(err, CameraError::NoConvergence { .. }));
    }

    #[test]
    fn inverse_falls_back_when_newton_overshoots() {
        // k1 is tiny so the equidistant seed lands far outside the bracket
        let poly = KbPolynomial::new([1e-3, 1.0, 0.0, 0.0]);
        let theta = poly.inverse(poly.eval(0.9), 1.5, InverseOptions::default()).unwrap();
        assert!((theta - 0.9).abs() < 1e-9);
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let calib = Calibration::new(params([1.0, 0.0, 0.0, 0.0], 195.0)).unwrap();
        assert_eq!(calib.project(&Ray::optical_axis()), (320.0, 240.0));
    }

    #[test]
    fn projection_scalar_example() {
        let calib = Calibration::new(params([1.0, 0.0, 0.0, 0.0], 195.0)).unwrap();
        let (u, v) = calib.project(&Ray::from_spherical(PI / 4.0, 0.0));
        assert!((u - 398.539_816_339_744_8).abs() < 1e-9);
        assert!((v - 240.0).abs() < 1e-12);

        let (u, v) = calib.project(&Ray::from_spherical(1.1, PI / 2.0));
        assert!((u - 320.0).abs() < 1e-12);
        assert!((v - (240.0 + 100.0 * 1.1)).abs() < 1e-12);
    }

    #[test]
    fn projection_commutes_with_quarter_turns() {
        let calib = Calibration::new(params([1.0, -0.02, 0.001, -0.00005], 195.0)).unwrap();
        let (cx, cy) = (320.0, 240.0);
        for (theta, phi) in [(0.3, 0.1), (1.2, -2.0), (1.65, 2.9)] {
            let ray = Ray::from_spherical(theta, phi);
            let (u, v) = calib.project(&ray);
            for quarter in 1..4 {
                let beta = quarter as f64 * PI / 2.0;
                let (s, c) = (beta.sin().round(), beta.cos().round());
                let r = ray.as_vector();
                let turned = Ray::new(Vector3::new(c * r.x - s * r.y, s * r.x + c * r.y, r.z)).unwrap();
                let (ut, vt) = calib.project(&turned);
                let (eu, ev) = (cx + c * (u - cx) - s * (v - cy), cy + s * (u - cx) + c * (v - cy));
                assert!((ut - eu).abs() < 1e-9 && (vt - ev).abs() < 1e-9, "{quarter} {ut} {eu} {vt} {ev}");
            }
        }
    }

    #[test]
    fn backproject_center_and_axis() {
        let calib = Calibration::new(params([1.0, 0.0, 0.0, 0.0], 195.0)).unwrap();
        let ray = calib.backproject((320.0, 240.0)).unwrap();
        assert_eq!(ray.theta(), 0.0);
        assert_eq!(ray.phi(), 0.0);
        let ray = calib.backproject((370.0, 240.0)).unwrap();
        assert_eq!(ray.phi(), 0.0);
        assert!((ray.theta() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn backproject_outside_representable_radius() {
        let calib = Calibration::new(params([1.0, 0.0, 0.0, 0.0], 90.0)).unwrap();
        let err = calib.backproject((320.0 + 1000.0, 240.0)).unwrap_err();
        assert!(matches!(err, CameraError::OutOfRange { .. }));
    }

    #[test]
    fn rays_behind_the_camera_project() {
        let calib = Calibration::f195();
        let ray = Ray::from_spherical(1.65, 0.3);
        let p = calib.project(&ray);
        let back = calib.backproject(p).unwrap();
        assert!((back.theta() - 1.65).abs() < 1e-9);
        assert!((back.phi() - 0.3).abs() < 1e-9);
    }

    #[test]
    fn ray_phi_range() {
        let ray = Ray::new(Vector3::new(-1.0, -0.0, 0.0)).unwrap();
        assert_eq!(ray.phi(), PI);
        assert!(Ray::new(Vector3::zeros()).is_none());
    }

    #[test]
    fn validation_examples() {
        assert!(validate(params([1.0, 0.0, 0.0, 0.0], 195.0)).is_ok());

        let err = validate(params([1.0, -1.0, 0.0, 0.0], 195.0)).unwrap_err();
        assert!(err.to_string().contains("increasing"), "{err}");

        let mut p = params([1.0, 0.0, 0.0, 0.0], 195.0);
        p.fx = 0.0;
        assert!(validate(p).unwrap_err().to_string().contains("focal"));

        let mut p = params([1.0, 0.0, 0.0, 0.0], 195.0);
        p.width = 0;
        assert!(validate(p).is_err());

        assert!(validate(params([1.0, 0.0, 0.0, 0.0], 0.0)).is_err());
        assert!(validate(params([1.0, 0.0, 0.0, 0.0], 361.0)).is_err());

        let mut p = params([1.0, 0.0, 0.0, 0.0], 195.0);
        p.exponents = [1, 3, 5, 8];
        assert!(validate(p).is_err());
    }

    #[test]
    fn presets_are_valid() {
        for calib in [Calibration::f165(), Calibration::f195()] {
            let r = calib.fov_radius() * calib.intrinsics().fx;
            assert!(r < 0.5 * calib.width() as f64, "disk radius {r} leaves the sensor");
        }
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let text = r#"{"width":640,"height":480,"cx":320.5,"cy":240.25,"fx":100.1,"fy":99.9,
            "k":[1.0,0.01,-0.002,0.0001],"fov_deg":195.0}"#;
        let calib = Calibration::from_json(text).unwrap();
        assert_eq!(calib.params().exponents, DEFAULT_EXPONENTS);
        assert!((calib.fov() - 195f64.to_radians()).abs() < 1e-15);
        let again = Calibration::from_json(&calib.to_json()).unwrap();
        assert_eq!(again, calib);
    }

    #[test]
    fn json_rejects_unknown_keys_and_invalid_values() {
        let text = r#"{"width":640,"height":480,"cx":320,"cy":240,"fx":100,"fy":100,
            "k":[1,0,0,0],"fov_deg":195,"skew":0}"#;
        assert!(Calibration::from_json(text).is_err());
        let text = r#"{"width":640,"height":480,"cx":320,"cy":240,"fx":-1,"fy":100,
            "k":[1,0,0,0],"fov_deg":195}"#;
        assert!(Calibration::from_json(text).is_err());
    }

    #[test]
    fn configurable_exponents() {
        let mut p = params([1.0, 0.0, 0.0, 0.5], 120.0);
        p.exponents = [1, 3, 5, 7];
        let calib = Calibration::new(p).unwrap();
        assert_eq!(calib.polynomial().eval(2.0), 2.0 + 0.5 * 128.0);
    }
}
