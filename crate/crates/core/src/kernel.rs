//! Calibrated deformable kernels.
//!
//! A `ki × kj` kernel is treated as a tiny perspective camera whose focal
//! distance follows from the share of the lens field of view that the kernel
//! covers on the feature map. Its taps are lifted to the unit sphere, rotated
//! so the central tap looks along the ray of the anchor pixel, and projected
//! back through the fisheye model rescaled to the feature-map resolution. The
//! displacement of each projected tap from the regular grid position is the
//! offset consumed by [`crate::conv::deform_conv2d`].

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rayon::prelude::*;

use crate::camera::{Calibration, CameraError, Intrinsics, KbPolynomial, RadialCamera, Ray};

/// `θ` closer than this to `π` has no well-defined rotation axis.
pub const ANTIPODAL_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),
    #[error("kernel field of view {alpha} rad is not below pi")]
    DegenerateKernel { alpha: f64 },
    #[error("ray points straight back along the optical axis")]
    AntipodalRay,
    #[error("anchor ({u}, {v}) has no valid ray: {reason}")]
    InvalidAnchor { u: f64, v: f64, reason: String },
}

/// Kernel shape plus the feature map it is applied to.
///
/// `pad_w`/`pad_h` are the total padding added to the camera image before it
/// entered the network, not padding per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec {
    pub ki: usize,
    pub kj: usize,
    pub fm_width: usize,
    pub fm_height: usize,
    pub pad_w: usize,
    pub pad_h: usize,
}

impl KernelSpec {
    pub fn new(
        ki: usize,
        kj: usize,
        fm_width: usize,
        fm_height: usize,
        pad_w: usize,
        pad_h: usize,
    ) -> Result<Self, KernelError> {
        let spec = Self {
            ki,
            kj,
            fm_width,
            fm_height,
            pad_w,
            pad_h,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn square(k: usize, fm_width: usize, fm_height: usize) -> Result<Self, KernelError> {
        Self::new(k, k, fm_width, fm_height, 0, 0)
    }

    fn check(&self) -> Result<(), KernelError> {
        let bad = |m: String| Err(KernelError::InvalidSpec(m));
        if self.ki == 0 || self.kj == 0 || self.ki.is_multiple_of(2) || self.kj.is_multiple_of(2) {
            return bad(format!("kernel dims must be odd, got {}x{}", self.ki, self.kj));
        }
        if self.fm_width < self.ki || self.fm_height < self.kj {
            return bad(format!(
                "feature map {}x{} is smaller than the kernel {}x{}",
                self.fm_width, self.fm_height, self.ki, self.kj
            ));
        }
        Ok(())
    }
}

/// `α = ki·Φ / W`.
pub fn kernel_fov(ki: usize, fm_width: usize, fov: f64) -> Result<f64, KernelError> {
    if ki == 0 || fm_width < ki || !(fov > 0.0) {
        return Err(KernelError::InvalidSpec(format!(
            "kernel_fov needs 1 <= ki <= W and fov > 0 (ki={ki}, W={fm_width}, fov={fov})"
        )));
    }
    let alpha = ki as f64 * fov / fm_width as f64;
    if alpha >= PI {
        return Err(KernelError::DegenerateKernel { alpha });
    }
    Ok(alpha)
}

/// `d = ki / (2·tan(α/2))`.
pub fn kernel_focal(ki: usize, alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < PI);
    ki as f64 / (2.0 * (0.5 * alpha).tan())
}

/// Kernel taps lifted to the unit sphere, stored row-major (`i` outer, `j` inner).
///
/// Tap `(i, j)` starts as `(j, i, focal)` in camera axes, so `j` runs along
/// image `u` and `i` along image `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    pub ki: usize,
    pub kj: usize,
    pub alpha: f64,
    pub focal: f64,
    pub points: Vec<Vector3<f64>>,
}

impl KernelGrid {
    /// Signed tap coordinates `(i, j)` in the storage order of `points`.
    pub fn taps(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let hi = (self.ki / 2) as i64;
        let hj = (self.kj / 2) as i64;
        (-hi..=hi).flat_map(move |i| (-hj..=hj).map(move |j| (i, j)))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn build_kernel_grid(spec: &KernelSpec, fov: f64) -> Result<KernelGrid, KernelError> {
    spec.check()?;
    let alpha = kernel_fov(spec.ki, spec.fm_width, fov)?;
    let focal = kernel_focal(spec.ki, alpha);
    let mut grid = KernelGrid {
        ki: spec.ki,
        kj: spec.kj,
        alpha,
        focal,
        points: Vec::with_capacity(spec.ki * spec.kj),
    };
    let taps: Vec<_> = grid.taps().collect();
    grid.points = taps
        .into_iter()
        .map(|(i, j)| Vector3::new(j as f64, i as f64, focal).normalize())
        .collect();
    Ok(grid)
}

/// Fisheye calibration re-expressed in feature-map pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledCalibration {
    pub cx_k: f64,
    pub cy_k: f64,
    pub fx_k: f64,
    pub fy_k: f64,
    /// `(Wc + p_w) / W_FM`.
    pub s: f64,
    pub source: Calibration,
}

pub fn rescale_calibration(calib: &Calibration, spec: &KernelSpec) -> ScaledCalibration {
    let p = calib.params();
    let (wc, hc) = (p.width as f64, p.height as f64);
    let (wfm, hfm) = (spec.fm_width as f64, spec.fm_height as f64);
    let s = (wc + spec.pad_w as f64) / wfm;
    let scale_x = (wfm - spec.pad_w as f64 / s) / wc;
    let scale_y = (hfm - spec.pad_h as f64 / s) / hc;
    ScaledCalibration {
        cx_k: p.cx * scale_x,
        cy_k: p.cy * scale_y,
        fx_k: p.fx * scale_x,
        fy_k: p.fy * scale_y,
        s,
        source: calib.clone(),
    }
}

impl ScaledCalibration {
    /// Factor taking camera-image pixels to feature-map pixels along x.
    pub fn scale_x(&self) -> f64 {
        self.fx_k / self.source.params().fx
    }

    pub fn scale_y(&self) -> f64 {
        self.fy_k / self.source.params().fy
    }
}

impl RadialCamera for ScaledCalibration {
    fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx_k,
            fy: self.fy_k,
            cx: self.cx_k,
            cy: self.cy_k,
        }
    }

    fn polynomial(&self) -> &KbPolynomial {
        self.source.polynomial()
    }

    fn fov(&self) -> f64 {
        self.source.fov()
    }
}

/// Minimal rotation taking the optical axis onto `ray`: `Rz(φ)·Ry(θ)·Rz(−φ)`.
pub fn anchor_rotation(ray: &Ray) -> Result<Matrix3<f64>, KernelError> {
    let theta = ray.theta();
    if PI - theta <= ANTIPODAL_EPS {
        return Err(KernelError::AntipodalRay);
    }
    Ok(swing(theta, ray.phi()))
}

/// [`anchor_rotation`], resolving the antipodal case with a half turn about `x`.
pub fn anchor_rotation_or_flip(ray: &Ray) -> Matrix3<f64> {
    anchor_rotation(ray).unwrap_or_else(|_| *Rotation3::from_axis_angle(&Vector3::x_axis(), PI).matrix())
}

fn swing(theta: f64, phi: f64) -> Matrix3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let omc = 1.0 - ct;
    // expanded Rz(φ)·Ry(θ)·Rz(−φ)
    Matrix3::new(
        ct + sp * sp * omc,
        -sp * cp * omc,
        st * cp,
        -sp * cp * omc,
        ct + cp * cp * omc,
        st * sp,
        -st * cp,
        -st * sp,
        ct,
    )
}

/// Per-tap `(du, dv)` for a kernel centered on feature-map pixel `anchor`.
///
/// Taps are returned in [`KernelGrid`] order. The sampling position of tap
/// `(i, j)` is `(u0 + j + du, v0 + i + dv)`. Anchors whose ray cannot be
/// recovered, or lies outside the lens field of view, are rejected.
pub fn kernel_offsets_at<C: RadialCamera>(
    anchor: (f64, f64),
    grid: &KernelGrid,
    camera: &C,
) -> Result<Vec<[f64; 2]>, KernelError> {
    let mut out = vec![[0.0; 2]; grid.len()];
    offsets_into(anchor, grid, camera, &mut out)?;
    Ok(out)
}

fn offsets_into<C: RadialCamera>(
    anchor: (f64, f64),
    grid: &KernelGrid,
    camera: &C,
    out: &mut [[f64; 2]],
) -> Result<(), KernelError> {
    let (u0, v0) = anchor;
    let invalid = |reason: String| KernelError::InvalidAnchor { u: u0, v: v0, reason };
    let ray = camera
        .backproject(anchor)
        .map_err(|e: CameraError| invalid(e.to_string()))?;
    if ray.theta() > 0.5 * camera.fov() {
        return Err(invalid("outside the lens field of view".into()));
    }
    let rot = anchor_rotation_or_flip(&ray);
    for ((slot, point), (i, j)) in out.iter_mut().zip(&grid.points).zip(grid.taps()) {
        let tap = Ray::new(rot * point).expect("rotated unit vector");
        let (u, v) = camera.project(&tap);
        *slot = [u - (u0 + j as f64), v - (v0 + i as f64)];
    }
    Ok(())
}

/// Dense per-anchor kernel offsets for one feature-map resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField {
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    data: Vec<[f64; 2]>,
    valid: Vec<bool>,
}

impl OffsetField {
    /// A field with every offset zero and every anchor valid: a standard convolution.
    pub fn zeros(height: usize, width: usize, kh: usize, kw: usize) -> Self {
        Self {
            height,
            width,
            kh,
            kw,
            data: vec![[0.0; 2]; height * width * kh * kw],
            valid: vec![true; height * width],
        }
    }

    /// Assembles a field from raw `[v][u][i][j]` displacements and per-anchor validity.
    pub fn from_parts(
        height: usize,
        width: usize,
        kh: usize,
        kw: usize,
        data: Vec<[f64; 2]>,
        valid: Vec<bool>,
    ) -> Result<Self, KernelError> {
        if data.len() != height * width * kh * kw || valid.len() != height * width {
            return Err(KernelError::InvalidSpec(format!(
                "offset field {height}x{width}x{kh}x{kw} given {} offsets and {} flags",
                data.len(),
                valid.len()
            )));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(KernelError::InvalidSpec("offset field has non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            kh,
            kw,
            data,
            valid,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, v: usize, u: usize) -> bool {
        self.valid[v * self.width + u]
    }

    /// Offsets of every tap at anchor `(u, v)`, row-major over taps.
    pub fn anchor(&self, v: usize, u: usize) -> &[[f64; 2]] {
        let n = self.kh * self.kw;
        let start = (v * self.width + u) * n;
        &self.data[start..start + n]
    }

    /// Offset of tap `(ti, tj)` (0-based, top-left origin) at anchor `(u, v)`.
    #[inline]
    pub fn get(&self, v: usize, u: usize, ti: usize, tj: usize) -> [f64; 2] {
        self.data[((v * self.width + u) * self.kh + ti) * self.kw + tj]
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data
            .iter()
            .map(|[du, dv]| du.hypot(*dv))
            .fold(0.0, f64::max)
    }
}

/// Offset field for `calib` rescaled to the feature map described by `spec`.
///
/// Rows are computed in parallel on the current rayon pool; the result does
/// not depend on the number of workers.
pub fn offset_field(calib: &Calibration, spec: &KernelSpec) -> Result<OffsetField, KernelError> {
    let grid = build_kernel_grid(spec, calib.fov())?;
    let scaled = rescale_calibration(calib, spec);
    Ok(offset_field_for(&scaled, &grid, spec.fm_width, spec.fm_height))
}

/// Offset field for an explicit camera and kernel grid.
pub fn offset_field_for<C: RadialCamera + Sync>(
    camera: &C,
    grid: &KernelGrid,
    width: usize,
    height: usize,
) -> OffsetField {
    let taps = grid.len();
    let rows: Vec<(Vec<[f64; 2]>, Vec<bool>)> = (0..height)
        .into_par_iter()
        .map(|v| {
            let mut data = vec![[0.0; 2]; width * taps];
            let mut valid = vec![false; width];
            for (u, (chunk, flag)) in data.chunks_mut(taps).zip(valid.iter_mut()).enumerate() {
                match offsets_into((u as f64, v as f64), grid, camera, chunk) {
                    Ok(()) => *flag = true,
                    Err(_) => chunk.fill([0.0; 2]),
                }
            }
            (data, valid)
        })
        .collect();

    let mut data = Vec::with_capacity(height * width * taps);
    let mut valid = Vec::with_capacity(height * width);
    for (d, m) in rows {
        data.extend(d);
        valid.extend(m);
    }
    OffsetField {
        height,
        width,
        kh: grid.ki,
        kw: grid.kj,
        data,
        valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CalibrationParams, DEFAULT_EXPONENTS};
    use proptest::prelude::*;

    fn square_calib(size: u32, k: [f64; 4], fov_deg: f64, f: f64) -> Calibration {
        let c = (size as f64 - 1.0) / 2.0;
        Calibration::new(CalibrationParams {
            width: size,
            height: size,
            cx: c,
            cy: c,
            fx: f,
            fy: f,
            k,
            fov_deg,
            exponents: DEFAULT_EXPONENTS,
        })
        .unwrap()
    }

    /// Rodrigues rotation taking `z` onto `target`.
    fn rodrigues(target: &Vector3<f64>) -> Matrix3<f64> {
        let z = Vector3::z();
        let axis = z.cross(target);
        let s = axis.norm();
        let c = z.dot(target);
        if s < 1e-15 {
            return Matrix3::identity();
        }
        let k = axis / s;
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Matrix3::identity() + kx * s + kx * kx * (1.0 - c)
    }

    #[test]
    fn kernel_fov_examples() {
        let a = kernel_fov(3, 256, 195f64.to_radians()).unwrap();
        assert!((a.to_degrees() - 2.285_156_25).abs() < 1e-12);
        let a = kernel_fov(1, 100, 1.3).unwrap();
        assert!((a - 0.013).abs() < 1e-15);
        assert!(matches!(
            kernel_fov(3, 6, 2.0 * PI),
            Err(KernelError::DegenerateKernel { .. })
        ));
    }

    #[test]
    fn kernel_focal_examples() {
        assert!((kernel_focal(3, PI / 2.0) - 1.5).abs() < 1e-15);
        assert!((kernel_focal(1, PI / 2.0) - 0.5).abs() < 1e-15);
        let alpha = kernel_fov(3, 256, 195f64.to_radians()).unwrap();
        let d = kernel_focal(3, alpha);
        // 3 / (2 tan(1.142578125°))
        assert!((d - 75.209_103_503).abs() < 1e-8, "{d}");
    }

    #[test]
    fn kernel_spec_validation() {
        assert!(KernelSpec::new(3, 3, 64, 64, 0, 0).is_ok());
        assert!(KernelSpec::new(2, 3, 64, 64, 0, 0).is_err());
        assert!(KernelSpec::new(3, 0, 64, 64, 0, 0).is_err());
        assert!(KernelSpec::new(5, 5, 4, 64, 0, 0).is_err());
    }

    #[test]
    fn grid_shapes() {
        let fov = 195f64.to_radians();
        let g = build_kernel_grid(&KernelSpec::square(1, 64, 64).unwrap(), fov).unwrap();
        assert_eq!(g.points, vec![Vector3::z()]);

        let g = build_kernel_grid(&KernelSpec::square(3, 64, 64).unwrap(), fov).unwrap();
        assert_eq!(g.points[4], Vector3::z());
        let corner = Vector3::new(1.0, 1.0, g.focal).normalize();
        assert_eq!(g.points[8], corner);
        for p in &g.points {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        let taps: Vec<_> = g.taps().collect();
        assert_eq!(taps[0], (-1, -1));
        assert_eq!(taps[5], (0, 1));
    }

    #[test]
    fn rectangular_grid_puts_j_on_x() {
        let spec = KernelSpec::new(3, 5, 64, 64, 0, 0).unwrap();
        let g = build_kernel_grid(&spec, 3.0).unwrap();
        assert_eq!(g.len(), 15);
        // tap (i=-1, j=2) is the last of the first row
        assert!(g.points[4].x > 0.0 && g.points[4].y < 0.0);
    }

    #[test]
    fn rescale_identity() {
        let calib = square_calib(64, [1.0, 0.0, 0.0, 0.0], 180.0, 20.0);
        let s = rescale_calibration(&calib, &KernelSpec::square(3, 64, 64).unwrap());
        assert_eq!(s.s, 1.0);
        assert_eq!((s.cx_k, s.cy_k, s.fx_k, s.fy_k), (31.5, 31.5, 20.0, 20.0));
    }

    #[test]
    fn rescale_pure_downscale() {
        let calib = square_calib(1024, [1.0, 0.0, 0.0, 0.0], 180.0, 300.0);
        let s = rescale_calibration(&calib, &KernelSpec::square(3, 256, 256).unwrap());
        assert_eq!(s.s, 4.0);
        assert!((s.cx_k - calib.params().cx / 4.0).abs() <= 1e-12 * s.cx_k);
        assert!((s.fx_k - 75.0).abs() <= 1e-12 * 75.0);
    }

    #[test]
    fn rescale_with_padding() {
        let calib = Calibration::new(CalibrationParams {
            width: 1000,
            height: 1000,
            cx: 499.5,
            cy: 480.0,
            fx: 300.0,
            fy: 290.0,
            k: [1.0, 0.0, 0.0, 0.0],
            fov_deg: 180.0,
            exponents: DEFAULT_EXPONENTS,
        })
        .unwrap();
        let spec = KernelSpec::new(3, 3, 256, 256, 24, 24).unwrap();
        let s = rescale_calibration(&calib, &spec);
        assert_eq!(s.s, 4.0);
        assert!((s.cx_k - 0.25 * 499.5).abs() <= 1e-12 * s.cx_k);
        assert!((s.cy_k - 0.25 * 480.0).abs() <= 1e-12 * s.cy_k);
        assert!((s.fy_k - 0.25 * 290.0).abs() <= 1e-12 * s.fy_k);
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(anchor_rotation(&Ray::optical_axis()).unwrap(), Matrix3::identity());

        let r = anchor_rotation(&Ray::new(Vector3::x()).unwrap()).unwrap();
        let expected = Rotation3::from_axis_angle(&Vector3::y_axis(), PI / 2.0);
        assert!((r - expected.matrix()).abs().max() < 1e-15);

        let back = Ray::new(-Vector3::z()).unwrap();
        assert!(matches!(anchor_rotation(&back), Err(KernelError::AntipodalRay)));
        let flip = anchor_rotation_or_flip(&back);
        assert!((flip * Vector3::z() + Vector3::z()).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn rotation_matches_rodrigues(theta in 0.0f64..3.1, phi in -PI..PI) {
            let ray = Ray::from_spherical(theta, phi);
            let r = anchor_rotation(&ray).unwrap();
            prop_assert!((r * Vector3::z() - ray.as_vector()).norm() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
            prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
            prop_assert!((r - rodrigues(ray.as_vector())).abs().max() < 1e-12);
        }
    }

    #[test]
    fn single_tap_kernel_has_no_offset() {
        let calib = Calibration::f195();
        let spec = KernelSpec::square(1, 64, 64).unwrap();
        let grid = build_kernel_grid(&spec, calib.fov()).unwrap();
        let scaled = rescale_calibration(&calib, &spec);
        let off = kernel_offsets_at((40.0, 20.0), &grid, &scaled).unwrap();
        assert_eq!(off.len(), 1);
        assert!(off[0][0].abs() < 1e-9 && off[0][1].abs() < 1e-9);
    }

    #[test]
    fn antisymmetric_at_principal_point() {
        for k in [[1.0, 0.0, 0.0, 0.0], [1.0, -0.02, 0.001, -0.00005]] {
            let calib = square_calib(64, k, 195.0, 19.0);
            let spec = KernelSpec::square(3, 64, 64).unwrap();
            let grid = build_kernel_grid(&spec, calib.fov()).unwrap();
            let scaled = rescale_calibration(&calib, &spec);
            let off = kernel_offsets_at((scaled.cx_k, scaled.cy_k), &grid, &scaled).unwrap();
            for t in 0..9 {
                let m = 8 - t;
                assert!((off[t][0] + off[m][0]).abs() < 1e-9);
                assert!((off[t][1] + off[m][1]).abs() < 1e-9);
            }
            assert!(off[4][0].abs() < 1e-9 && off[4][1].abs() < 1e-9);
        }
    }

    #[test]
    fn rotated_anchor_rotates_footprint() {
        let calib = square_calib(64, [1.0, 0.0, 0.0, 0.0], 195.0, 19.0);
        let spec = KernelSpec::square(3, 64, 64).unwrap();
        let grid = build_kernel_grid(&spec, calib.fov()).unwrap();
        let scaled = rescale_calibration(&calib, &spec);
        let (cx, cy) = (scaled.cx_k, scaled.cy_k);

        let positions = |(u0, v0): (f64, f64)| -> Vec<(f64, f64)> {
            let off = kernel_offsets_at((u0, v0), &grid, &scaled).unwrap();
            grid.taps()
                .zip(off)
                .map(|((i, j), [du, dv])| (u0 + j as f64 + du, v0 + i as f64 + dv))
                .collect()
        };

        for anchor in [(50.0, 30.0), (10.0, 12.0), (45.0, 58.0)] {
            let reference = positions(anchor);
            let rotated_anchor = (cx - (anchor.1 - cy), cy + (anchor.0 - cx));
            let rotated = positions(rotated_anchor);
            for (u, v) in reference {
                let expected = (cx - (v - cy), cy + (u - cx));
                let best = rotated
                    .iter()
                    .map(|p| (p.0 - expected.0).hypot(p.1 - expected.1))
                    .fold(f64::INFINITY, f64::min);
                assert!(best < 1e-6, "anchor {anchor:?}: miss by {best}");
            }
        }
    }

    #[test]
    fn tangential_offsets_grow_with_radius() {
        let calib = square_calib(128, [1.0, 0.0, 0.0, 0.0], 190.0, 38.0);
        let spec = KernelSpec::square(3, 128, 128).unwrap();
        let grid = build_kernel_grid(&spec, calib.fov()).unwrap();
        let scaled = rescale_calibration(&calib, &spec);
        let (cx, cy) = (scaled.cx_k, scaled.cy_k);
        let limit = scaled.fov_radius() * scaled.fx_k;

        // For the equidistant model the tangential tap spacing is f·δ·θ/sin θ,
        // which grows with θ, while the radial spacing stays near f·δ.
        let mut last_tangential = f64::NEG_INFINITY;
        let mut r = 1.0;
        while r < limit {
            let off = kernel_offsets_at((cx + r, cy), &grid, &scaled).unwrap();
            // tap (i=1, j=0) sits across the radial direction
            let tangential = off[7][1];
            assert!(tangential > last_tangential, "r={r}");
            last_tangential = tangential;
            r += 2.0;
        }
        let off = kernel_offsets_at((cx + limit - 1.0, cy), &grid, &scaled).unwrap();
        assert!(off[7][1] > 0.5);
        assert!(off[5][0].abs() < 0.1);
    }

    #[test]
    fn anchors_outside_fov_are_rejected() {
        let calib = Calibration::f165();
        let spec = KernelSpec::square(3, 64, 64).unwrap();
        let grid = build_kernel_grid(&spec, calib.fov()).unwrap();
        let scaled = rescale_calibration(&calib, &spec);
        let err = kernel_offsets_at((0.0, 0.0), &grid, &scaled).unwrap_err();
        assert!(matches!(err, KernelError::InvalidAnchor { .. }));
    }

    #[test]
    fn field_matches_standalone_anchors() {
        let calib = Calibration::f195();
        let spec = KernelSpec::square(3, 64, 64).unwrap();
        let field = offset_field(&calib, &spec).unwrap();
        let grid = build_kernel_grid(&spec, calib.fov()).unwrap();
        let scaled = rescale_calibration(&calib, &spec);
        assert_eq!((field.height(), field.width(), field.kh(), field.kw()), (64, 64, 3, 3));
        for v in (0..64).step_by(7) {
            for u in (0..64).step_by(5) {
                match kernel_offsets_at((u as f64, v as f64), &grid, &scaled) {
                    Ok(off) => {
                        assert!(field.is_valid(v, u));
                        assert_eq!(field.anchor(v, u), off.as_slice());
                    }
                    Err(_) => {
                        assert!(!field.is_valid(v, u));
                        assert!(field.anchor(v, u).iter().all(|o| *o == [0.0, 0.0]));
                    }
                }
            }
        }
        assert!(field.invalid_count() > 0, "corners lie outside the fisheye disk");
    }

    #[test]
    fn unit_kernel_field_is_zero() {
        let field = offset_field(&Calibration::f165(), &KernelSpec::square(1, 32, 32).unwrap()).unwrap();
        assert!(field.data().iter().all(|[du, dv]| du.abs() < 1e-9 && dv.abs() < 1e-9));
    }

    #[test]
    fn from_parts_checks_lengths() {
        assert!(OffsetField::from_parts(2, 2, 1, 1, vec![[0.0; 2]; 3], vec![true; 4]).is_err());
        assert!(OffsetField::from_parts(1, 1, 1, 1, vec![[f64::NAN, 0.0]], vec![true]).is_err());
        assert!(OffsetField::from_parts(1, 1, 1, 1, vec![[0.5, 0.0]], vec![true]).is_ok());
    }

    /// Absolute feature-map positions of every tap for anchor `(u, v)`.
    fn positions(u: f64, v: f64, grid: &KernelGrid, scaled: &ScaledCalibration) -> Option<Vec<(f64, f64)>> {
        let off = kernel_offsets_at((u, v), grid, scaled).ok()?;
        Some(grid.taps().zip(off).map(|((i, j), [du, dv])| (u + j as f64 + du, v + i as f64 + dv)).collect())
    }

    /// Largest disagreement between tap (i, j) at `w` and tap (2i, 2j) of a
    /// kernel twice as dense at `2w`, over all aligned anchors inside the disk.
    fn doubling_error(calib: &Calibration, k: usize, w: usize) -> f64 {
        let (s1, s2) = (KernelSpec::square(k, w, w).unwrap(), KernelSpec::square(2 * k - 1, 2 * w, 2 * w).unwrap());
        let (g1, g2) = (build_kernel_grid(&s1, calib.fov()).unwrap(), build_kernel_grid(&s2, calib.fov()).unwrap());
        let (c1, c2) = (rescale_calibration(calib, &s1), rescale_calibration(calib, &s2));
        let (h, k2) = ((k / 2) as i64, 2 * k - 1);
        let mut worst: f64 = 0.0;
        for v in 0..w {
            for u in 0..w {
                let (Some(a), Some(b)) = (
                    positions(u as f64, v as f64, &g1, &c1),
                    positions(2.0 * u as f64, 2.0 * v as f64, &g2, &c2),
                ) else {
                    continue;
                };
                for (t, (i, j)) in g1.taps().enumerate() {
                    let q = b[((2 * i + 2 * h) as usize) * k2 + (2 * j + 2 * h) as usize];
                    worst = worst.max((a[t].0 - q.0 / 2.0).hypot(a[t].1 - q.1 / 2.0));
                }
            }
        }
        worst
    }

    #[test]
    fn resolution_doubling_keeps_sampling_directions() {
        // Doubling the feature map halves the kernel's angular extent, so tap
        // (i, j) at W looks along the same ray as tap (2i, 2j) at 2W.
        for k in [[1.0, 0.0, 0.0, 0.0], [1.0, -0.02, 0.001, -0.00005]] {
            let calib = square_calib(1024, k, 180.0, 320.0);
            let coarse = doubling_error(&calib, 3, 64);
            let fine = doubling_error(&calib, 3, 128);
            assert!(fine < 1e-3, "{fine}");
            // second-order agreement of the continuous model
            assert!(fine < 0.3 * coarse, "{coarse} -> {fine}");
        }
    }

    #[test]
    fn resolution_doubling_converges_for_a_fixed_kernel() {
        let calib = Calibration::f195();
        let field_gap = |w: usize| {
            let (s1, s2) = (KernelSpec::square(3, w, w).unwrap(), KernelSpec::square(3, 2 * w, 2 * w).unwrap());
            let (g1, g2) = (build_kernel_grid(&s1, calib.fov()).unwrap(), build_kernel_grid(&s2, calib.fov()).unwrap());
            let (c1, c2) = (rescale_calibration(&calib, &s1), rescale_calibration(&calib, &s2));
            let mut worst: f64 = 0.0;
            for v in 0..w {
                for u in 0..w {
                    let (Some(a), Some(b)) = (
                        positions(u as f64, v as f64, &g1, &c1),
                        positions(2.0 * u as f64, 2.0 * v as f64, &g2, &c2),
                    ) else {
                        continue;
                    };
                    // the anchor tap lands on the same image point
                    assert!((a[4].0 - b[4].0 / 2.0).abs() < 1e-9 && (a[4].1 - b[4].1 / 2.0).abs() < 1e-9);
                    let off1 = kernel_offsets_at((u as f64, v as f64), &g1, &c1).unwrap();
                    let off2 = kernel_offsets_at((2.0 * u as f64, 2.0 * v as f64), &g2, &c2).unwrap();
                    for (p, q) in off1.iter().zip(&off2) {
                        worst = worst.max((p[0] - q[0]).hypot(p[1] - q[1]));
                    }
                }
            }
            worst
        };
        let (a, b) = (field_gap(32), field_gap(64));
        assert!(b < 0.6 * a, "{a} -> {b}");
    }

    #[test]
    fn offset_magnitude_grows_along_azimuth_rays() {
        // The disk spans the feature map, so the kernel focal length matches
        // the fisheye scale at the center and offsets start from zero there.
        for fov_deg in [180.0, 195.0] {
            let size = 128;
            let calib = square_calib(size, [1.0, 0.0, 0.0, 0.0], fov_deg, size as f64 / fov_deg.to_radians());
            let spec = KernelSpec::square(3, 128, 128).unwrap();
            let grid = build_kernel_grid(&spec, calib.fov()).unwrap();
            let scaled = rescale_calibration(&calib, &spec);
            let limit = scaled.fov_radius() * scaled.fx_k;
            for phi in [0.0, PI / 4.0, 0.7, 2.0, -2.5] {
                let mut last = [0.0f64; 9];
                let mut r = 0.0;
                while r < limit - 0.5 {
                    let anchor = (scaled.cx_k + r * phi.cos(), scaled.cy_k + r * phi.sin());
                    let off = kernel_offsets_at(anchor, &grid, &scaled).unwrap();
                    for (t, o) in off.iter().enumerate() {
                        let m = o[0].hypot(o[1]);
                        assert!(m >= last[t] - 1e-12, "fov {fov_deg} phi {phi} r {r} tap {t}");
                        last[t] = m;
                    }
                    r += 0.5;
                }
            }
        }
    }
}
