//! Depth and segmentation metrics, and error profiles over distance to the
//! principal point.

use std::fmt::Write as _;

use serde::Serialize;

use crate::camera::{Calibration, RadialCamera};
use crate::grid::Grid;

/// Predictions at or below zero are clamped here before ratios and logarithms.
pub const PRED_FLOOR: f64 = 1e-6;

/// Header of radial-profile CSV files.
pub const PROFILE_CSV_HEADER: &str = "bin_lo,bin_hi,mean,std,count";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no pixel left to evaluate")]
    EmptyMask,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} is neither below {n_classes} nor the ignore label")]
    InvalidLabel { label: f64, n_classes: usize },
    #[error("need at least one bin")]
    NoBins,
}

fn check_dims(a: &Grid, b: &Grid, what: &str) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthReport {
    pub mre: f64,
    pub mae: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n: u64,
}

/// Running sums behind a [`DepthReport`]; merge per-image accumulators for
/// dataset-level numbers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DepthAccumulator {
    n: u64,
    rel: f64,
    abs: f64,
    sq: f64,
    sq_log: f64,
    within: [u64; 3],
}

impl DepthAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one pixel. `gt` must be positive.
    pub fn add(&mut self, pred: f64, gt: f64) {
        let p = pred.max(PRED_FLOOR);
        let err = pred - gt;
        self.n += 1;
        self.rel += err.abs() / gt;
        self.abs += err.abs();
        self.sq += err * err;
        let dl = p.log10() - gt.log10();
        self.sq_log += dl * dl;
        let ratio = (p / gt).max(gt / p);
        let mut threshold = 1.0;
        for count in &mut self.within {
            threshold *= 1.25;
            if ratio < threshold {
                *count += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.rel += other.rel;
        self.abs += other.abs;
        self.sq += other.sq;
        self.sq_log += other.sq_log;
        for (a, b) in self.within.iter_mut().zip(other.within) {
            *a += b;
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn report(&self) -> Result<DepthReport, MetricsError> {
        if self.n == 0 {
            return Err(MetricsError::EmptyMask);
        }
        let n = self.n as f64;
        Ok(DepthReport {
            mre: self.rel / n,
            mae: self.abs / n,
            rmse: (self.sq / n).sqrt(),
            rmse_log: (self.sq_log / n).sqrt(),
            delta1: self.within[0] as f64 / n,
            delta2: self.within[1] as f64 / n,
            delta3: self.within[2] as f64 / n,
            n: self.n,
        })
    }
}

/// Whether a depth pixel takes part in evaluation.
#[inline]
pub fn depth_pixel_valid(pred: f64, gt: f64, mask: Option<f64>) -> bool {
    mask.is_none_or(|m| m > 0.0) && gt > 0.0 && gt.is_finite() && pred.is_finite()
}

/// Accumulates the pixels of one prediction/ground-truth pair.
pub fn depth_accumulate(pred: &Grid, gt: &Grid, mask: Option<&Grid>) -> Result<DepthAccumulator, MetricsError> {
    check_dims(pred, gt, "pred/gt")?;
    if let Some(m) = mask {
        check_dims(pred, m, "pred/mask")?;
    }
    let mut acc = DepthAccumulator::new();
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if depth_pixel_valid(p, g, mask.map(|m| m.data()[i])) {
            acc.add(p, g);
        }
    }
    Ok(acc)
}

/// Depth metrics over pixels with a nonzero mask and positive ground truth.
pub fn depth_metrics(pred: &Grid, gt: &Grid, mask: Option<&Grid>) -> Result<DepthReport, MetricsError> {
    depth_accumulate(pred, gt, mask)?.report()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegReport {
    pub miou: f64,
    pub macc: f64,
    /// `None` for classes absent from the ground truth.
    pub per_class_iou: Vec<Option<f64>>,
    #[serde(skip)]
    pub n_classes: usize,
}

/// Row = ground truth, column = prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
    misses: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
            misses: vec![0; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n_classes + pred]
    }

    /// Adds every labeled pixel of a pair. Pixels whose ground truth is
    /// `ignore` are skipped; a prediction of `ignore` on a labeled pixel
    /// counts as a miss for the true class.
    pub fn accumulate(&mut self, pred: &Grid, gt: &Grid, ignore: Option<u32>) -> Result<(), MetricsError> {
        check_dims(pred, gt, "pred/gt")?;
        let n = self.n_classes;
        let parse = |v: f64| -> Result<Option<usize>, MetricsError> {
            if ignore.is_some_and(|i| v == i as f64) {
                return Ok(None);
            }
            if v >= 0.0 && v.fract() == 0.0 && (v as usize) < n {
                Ok(Some(v as usize))
            } else {
                Err(MetricsError::InvalidLabel { label: v, n_classes: n })
            }
        };
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            let Some(g) = parse(g)? else { continue };
            match parse(p)? {
                Some(p) => self.counts[g * n + p] += 1,
                None => self.misses[g] += 1,
            }
        }
        Ok(())
    }

    /// Labeled pixels whose prediction was the ignore label.
    pub fn misses(&self, gt: usize) -> u64 {
        self.misses[gt]
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.n_classes, other.n_classes, "class counts differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.misses.iter_mut().zip(&other.misses) {
            *a += b;
        }
    }

    pub fn report(&self) -> Result<SegReport, MetricsError> {
        let n = self.n_classes;
        let mut ious = Vec::with_capacity(n);
        let (mut iou_sum, mut acc_sum, mut present) = (0.0, 0.0, 0usize);
        for c in 0..n {
            let tp = self.get(c, c);
            let row: u64 = (0..n).map(|p| self.get(c, p)).sum::<u64>() + self.misses(c);
            if row == 0 {
                ious.push(None);
                continue;
            }
            let col: u64 = (0..n).map(|g| self.get(g, c)).sum();
            let fn_ = row - tp;
            let fp = col - tp;
            let iou = tp as f64 / (tp + fp + fn_) as f64;
            iou_sum += iou;
            acc_sum += tp as f64 / row as f64;
            present += 1;
            ious.push(Some(iou));
        }
        if present == 0 {
            return Err(MetricsError::EmptyMask);
        }
        Ok(SegReport {
            miou: iou_sum / present as f64,
            macc: acc_sum / present as f64,
            per_class_iou: ious,
            n_classes: n,
        })
    }
}

/// mIoU and mAcc over classes present in `gt`, skipping the `ignore` label.
pub fn seg_metrics(pred: &Grid, gt: &Grid, n_classes: usize, ignore: Option<u32>) -> Result<SegReport, MetricsError> {
    let mut cm = ConfusionMatrix::new(n_classes);
    cm.accumulate(pred, gt, ignore)?;
    cm.report()
}

/// Per-pixel radial bin assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMap {
    pub width: usize,
    pub height: usize,
    pub n_bins: usize,
    /// Largest in-mask distance to the principal point, in pixels.
    pub r_max: f64,
    /// `None` outside the field-of-view disk.
    pub bins: Vec<Option<usize>>,
}

impl BinMap {
    pub fn get(&self, y: usize, x: usize) -> Option<usize> {
        self.bins[y * self.width + x]
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins)
            .map(|i| self.r_max * i as f64 / self.n_bins as f64)
            .collect()
    }

    /// Bin indices as a grid, with −1 outside the disk.
    pub fn to_grid(&self) -> Grid {
        Grid::from_fn(1, self.height, self.width, |_, y, x| {
            self.get(y, x).map_or(-1.0, |b| b as f64)
        })
    }

    pub fn in_mask_count(&self) -> usize {
        self.bins.iter().flatten().count()
    }
}

/// Uniform bins of pixel distance to the principal point over `[0, r_max]`.
///
/// The last bin is closed on the right. When `shape` differs from the
/// calibration resolution, intrinsics scale with the image size.
pub fn radial_bins(calib: &Calibration, shape: (usize, usize), n_bins: usize) -> Result<BinMap, MetricsError> {
    let (width, height) = shape;
    let p = calib.params();
    let sx = width as f64 / p.width as f64;
    let sy = height as f64 / p.height as f64;
    let (cx, cy) = (p.cx * sx, p.cy * sy);
    let r = calib.fov_radius();
    let (ax, ay) = (p.fx * sx * r, p.fy * sy * r);
    radial_bins_with(shape, (cx, cy), n_bins, |x, y| {
        ((x - cx) / ax).powi(2) + ((y - cy) / ay).powi(2) <= 1.0
    })
}

/// Radial binning about an arbitrary center, keeping pixels where `inside` holds.
pub fn radial_bins_with(
    shape: (usize, usize),
    center: (f64, f64),
    n_bins: usize,
    inside: impl Fn(f64, f64) -> bool,
) -> Result<BinMap, MetricsError> {
    if n_bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let (width, height) = shape;
    let mut dist = Vec::with_capacity(width * height);
    let mut r_max: f64 = 0.0;
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            let d = (xf - center.0).hypot(yf - center.1);
            let keep = inside(xf, yf);
            if keep {
                r_max = r_max.max(d);
            }
            dist.push(keep.then_some(d));
        }
    }
    let bins = dist
        .into_iter()
        .map(|d| {
            d.map(|d| {
                if r_max == 0.0 {
                    0
                } else {
                    ((d / r_max * n_bins as f64) as usize).min(n_bins - 1)
                }
            })
        })
        .collect();
    Ok(BinMap {
        width,
        height,
        n_bins,
        r_max,
        bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub bin_edges: Vec<f64>,
    /// `None` for empty bins.
    pub mean: Vec<Option<f64>>,
    /// Population standard deviation; `None` for empty bins.
    pub std: Vec<Option<f64>>,
    pub count: Vec<u64>,
}

impl RadialProfile {
    pub fn n_bins(&self) -> usize {
        self.count.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(PROFILE_CSV_HEADER);
        out.push('\n');
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for b in 0..self.n_bins() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.bin_edges[b],
                self.bin_edges[b + 1],
                fmt(self.mean[b]),
                fmt(self.std[b]),
                self.count[b]
            );
        }
        out
    }
}

/// Streaming per-bin mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileAccumulator {
    edges: Vec<f64>,
    count: Vec<u64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ProfileAccumulator {
    pub fn new(edges: Vec<f64>) -> Self {
        let n = edges.len().saturating_sub(1);
        Self {
            edges,
            count: vec![0; n],
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    pub fn add(&mut self, bin: usize, value: f64) {
        self.count[bin] += 1;
        let delta = value - self.mean[bin];
        self.mean[bin] += delta / self.count[bin] as f64;
        self.m2[bin] += delta * (value - self.mean[bin]);
    }

    pub fn finish(&self) -> RadialProfile {
        let stat = |b: usize, v: f64| (self.count[b] > 0).then_some(v);
        RadialProfile {
            bin_edges: self.edges.clone(),
            mean: (0..self.count.len()).map(|b| stat(b, self.mean[b])).collect(),
            std: (0..self.count.len())
                .map(|b| stat(b, (self.m2[b] / self.count[b].max(1) as f64).sqrt()))
                .collect(),
            count: self.count.clone(),
        }
    }
}

/// Per-bin statistics of a single-channel metric map. Pixels where `valid`
/// is false (or outside the disk) are left out.
pub fn radial_profile(metric: &Grid, bins: &BinMap, valid: Option<&[bool]>) -> Result<RadialProfile, MetricsError> {
    if metric.dims() != (1, bins.height, bins.width) {
        return Err(MetricsError::ShapeMismatch(format!(
            "metric {:?} vs bins {}x{}",
            metric.dims(),
            bins.width,
            bins.height
        )));
    }
    if valid.is_some_and(|v| v.len() != bins.bins.len()) {
        return Err(MetricsError::ShapeMismatch("validity length".into()));
    }
    let mut acc = ProfileAccumulator::new(bins.edges());
    for (i, (&m, b)) in metric.data().iter().zip(&bins.bins).enumerate() {
        if let Some(b) = b {
            if valid.is_none_or(|v| v[i]) {
                acc.add(*b, m);
            }
        }
    }
    Ok(acc.finish())
}
