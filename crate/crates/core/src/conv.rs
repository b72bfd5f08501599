//! Direct and deformable 2D cross-correlation at desk scale.
//!
//! No kernel flip (deep-learning convention). Inputs are expected to be padded
//! already, so each spatial output size is `(in - k) / stride + 1`. All sums are
//! accumulated in `f64` in the order input channel, tap row, tap column.

use rayon::prelude::*;

use crate::grid::{Grid, Plane};
use crate::kernel::OffsetField;
use crate::sample::{bilinear_sample, BorderPolicy};

#[derive(Debug, thiserror::Error)]
pub enum ConvError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("offset field is {got_h}x{got_w} but the output is {want_h}x{want_w}")]
    OffsetResolutionMismatch {
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
}

/// `out × in × kh × kw` filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    out_channels: usize,
    in_channels: usize,
    kh: usize,
    kw: usize,
    data: Vec<f64>,
}

impl ConvWeights {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        data: Vec<f64>,
    ) -> Result<Self, ConvError> {
        if data.len() != out_channels * in_channels * kh * kw {
            return Err(ConvError::ShapeMismatch(format!(
                "{} weights for a {out_channels}x{in_channels}x{kh}x{kw} bank",
                data.len()
            )));
        }
        if kh == 0 || kw == 0 {
            return Err(ConvError::ShapeMismatch("empty kernel".into()));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kh,
            kw,
            data,
        })
    }

    pub fn from_fn(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(out_channels * in_channels * kh * kw);
        for o in 0..out_channels {
            for c in 0..in_channels {
                for i in 0..kh {
                    for j in 0..kw {
                        data.push(f(o, c, i, j));
                    }
                }
            }
        }
        Self::new(out_channels, in_channels, kh, kw, data).expect("consistent shape")
    }

    /// `(out, in, kh, kw)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.out_channels, self.in_channels, self.kh, self.kw)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, o: usize, c: usize, i: usize, j: usize) -> f64 {
        self.data[((o * self.in_channels + c) * self.kh + i) * self.kw + j]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvParams {
    pub stride: usize,
    pub border: BorderPolicy,
    pub bias: Option<Vec<f64>>,
}

impl ConvParams {
    pub fn new(stride: usize) -> Self {
        Self {
            stride,
            ..Self::default()
        }
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Self {
        self.bias = Some(bias);
        self
    }

    pub fn with_border(mut self, border: BorderPolicy) -> Self {
        self.border = border;
        self
    }
}

/// Spatial output size, or `None` when the kernel does not fit.
pub fn output_size(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    (stride > 0 && input >= kernel).then(|| (input - kernel) / stride + 1)
}

struct Plan {
    out_h: usize,
    out_w: usize,
}

fn plan(input: &Grid, weights: &ConvWeights, params: &ConvParams) -> Result<Plan, ConvError> {
    let (out_c, in_c, kh, kw) = weights.dims();
    if params.stride == 0 {
        return Err(ConvError::ShapeMismatch("stride must be at least 1".into()));
    }
    if in_c != input.channels() {
        return Err(ConvError::ShapeMismatch(format!(
            "weights expect {in_c} input channels, input has {}",
            input.channels()
        )));
    }
    if let Some(bias) = &params.bias {
        if bias.len() != out_c {
            return Err(ConvError::ShapeMismatch(format!(
                "{} bias values for {out_c} output channels",
                bias.len()
            )));
        }
    }
    let out_h = output_size(input.height(), kh, params.stride);
    let out_w = output_size(input.width(), kw, params.stride);
    match (out_h, out_w) {
        (Some(out_h), Some(out_w)) => Ok(Plan { out_h, out_w }),
        _ => Err(ConvError::ShapeMismatch(format!(
            "{kh}x{kw} kernel does not fit a {}x{} input",
            input.height(),
            input.width()
        ))),
    }
}

fn assemble(out_c: usize, plan: &Plan, rows: Vec<Vec<f64>>) -> Grid {
    let data = rows.into_iter().flatten().collect();
    Grid::new(out_c, plan.out_h, plan.out_w, data).expect("convolution output is finite")
}

/// Dense cross-correlation plus optional bias.
pub fn conv2d(input: &Grid, weights: &ConvWeights, params: &ConvParams) -> Result<Grid, ConvError> {
    let plan = plan(input, weights, params)?;
    let (out_c, in_c, kh, kw) = weights.dims();
    let stride = params.stride;
    let planes: Vec<Plane<'_>> = (0..in_c).map(|c| input.plane(c)).collect();

    let rows = (0..out_c * plan.out_h)
        .into_par_iter()
        .map(|row| {
            let (o, v) = (row / plan.out_h, row % plan.out_h);
            let bias = params.bias.as_ref().map_or(0.0, |b| b[o]);
            (0..plan.out_w)
                .map(|u| {
                    let mut acc = bias;
                    for (c, plane) in planes.iter().enumerate() {
                        for i in 0..kh {
                            for j in 0..kw {
                                acc += weights.get(o, c, i, j) * plane.at(u * stride + j, v * stride + i);
                            }
                        }
                    }
                    acc
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(assemble(out_c, &plan, rows))
}

/// Cross-correlation whose taps are displaced by `offsets` and read bilinearly.
///
/// `offsets` holds one displacement set per output anchor; tap `(i, j)` of
/// output `(u, v)` is read at `(u·stride + j + du, v·stride + i + dv)`.
/// Anchors flagged invalid are read without displacement.
pub fn deform_conv2d(
    input: &Grid,
    weights: &ConvWeights,
    offsets: &OffsetField,
    params: &ConvParams,
) -> Result<Grid, ConvError> {
    let plan = plan(input, weights, params)?;
    let (out_c, in_c, kh, kw) = weights.dims();
    if offsets.kh() != kh || offsets.kw() != kw {
        return Err(ConvError::ShapeMismatch(format!(
            "offsets are for a {}x{} kernel, weights are {kh}x{kw}",
            offsets.kh(),
            offsets.kw()
        )));
    }
    if offsets.height() != plan.out_h || offsets.width() != plan.out_w {
        return Err(ConvError::OffsetResolutionMismatch {
            got_h: offsets.height(),
            got_w: offsets.width(),
            want_h: plan.out_h,
            want_w: plan.out_w,
        });
    }
    let stride = params.stride;
    let border = params.border;
    let planes: Vec<Plane<'_>> = (0..in_c).map(|c| input.plane(c)).collect();

    let rows = (0..out_c * plan.out_h)
        .into_par_iter()
        .map(|row| {
            let (o, v) = (row / plan.out_h, row % plan.out_h);
            let bias = params.bias.as_ref().map_or(0.0, |b| b[o]);
            (0..plan.out_w)
                .map(|u| {
                    let valid = offsets.is_valid(v, u);
                    let mut acc = bias;
                    for (c, plane) in planes.iter().enumerate() {
                        for i in 0..kh {
                            for j in 0..kw {
                                let [du, dv] = if valid { offsets.get(v, u, i, j) } else { [0.0, 0.0] };
                                let x = (u * stride + j) as f64 + du;
                                let y = (v * stride + i) as f64 + dv;
                                acc += weights.get(o, c, i, j) * bilinear_sample(plane, x, y, border);
                            }
                        }
                    }
                    acc
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(assemble(out_c, &plan, rows))
}
