use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "kbconv", version, about = "Calibration-aware convolution toolkit for fisheye cameras")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the kernel offset field of a calibration and write it as KBOF.
    GenOffsets(GenOffsetsArgs),
    /// Render a fisheye image (plus mask and sidecar) from an equirectangular panorama.
    SynthFisheye(SynthArgs),
    /// Resample a fisheye image onto a pinhole camera.
    Rectify(RectifyArgs),
    /// Run a standard or offset-driven convolution on KBTN tensors.
    Conv(ConvArgs),
    /// Draw kernel sampling positions on a fisheye image.
    Viz(VizArgs),
    /// Evaluate depth or segmentation predictions against ground truth.
    Metrics(MetricsArgs),
}

/// `AxB` pair; width first for image sizes, columns first for kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub w: usize,
    pub h: usize,
}

pub fn parse_dims(s: &str) -> Result<Dims, String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected AxB, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad number {t:?} in {s:?}"));
    Ok(Dims { w: num(a)?, h: num(b)? })
}

/// Target pinhole camera: `WxH:FX,FY,CX,CY`, or `WxH@DEG` for a centered
/// camera with horizontal field of view `DEG`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerspSpec {
    Explicit { size: Dims, fx: f64, fy: f64, cx: f64, cy: f64 },
    Fov { size: Dims, hfov_deg: f64 },
}

pub fn parse_persp(s: &str) -> Result<PerspSpec, String> {
    if let Some((size, fov)) = s.split_once('@') {
        let hfov_deg = fov.trim().parse().map_err(|_| format!("bad field of view {fov:?}"))?;
        return Ok(PerspSpec::Fov { size: parse_dims(size)?, hfov_deg });
    }
    let (size, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("expected WxH:FX,FY,CX,CY or WxH@DEG, got {s:?}"))?;
    let vals: Vec<f64> = rest
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad number {t:?}")))
        .collect::<Result<_, _>>()?;
    let [fx, fy, cx, cy] = vals[..] else {
        return Err(format!("expected four intrinsics, got {}", vals.len()));
    };
    Ok(PerspSpec::Explicit { size: parse_dims(size)?, fx, fy, cx, cy })
}

/// Anchor list in image pixels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Anchors(pub Vec<(f64, f64)>);

/// `u,v;u,v;...`. An empty string is an empty list.
pub fn parse_anchors(s: &str) -> Result<Anchors, String> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (u, v) = t.split_once(',').ok_or_else(|| format!("expected u,v, got {t:?}"))?;
            let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("bad coordinate {x:?}"));
            Ok((num(u)?, num(v)?))
        })
        .collect::<Result<_, String>>()
        .map(Anchors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Interp {
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Border {
    Zero,
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Depth,
    Seg,
}

#[derive(Debug, Args)]
pub struct GenOffsetsArgs {
    #[arg(long)]
    pub calib: PathBuf,
    /// Kernel size, columns x rows (both odd).
    #[arg(long, value_parser = parse_dims, default_value = "3x3")]
    pub kernel: Dims,
    /// Feature-map size the kernel is applied to.
    #[arg(long, value_parser = parse_dims)]
    pub fm: Dims,
    /// Total padding added to the camera image before it entered the network.
    #[arg(long, value_parser = parse_dims, default_value = "0x0")]
    pub pad: Dims,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub calib: PathBuf,
    /// Equirectangular panorama (PPM or PGM, 2:1).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output image; the mask and JSON sidecar are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Draw the orientation at random (uniform azimuth, elevation within ±45°).
    #[arg(long)]
    pub random_orient: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Viewing azimuth in degrees, when not random.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub yaw: f64,
    /// Viewing elevation in degrees, when not random.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub pitch: f64,
    /// Use `nearest` for label maps.
    #[arg(long, value_enum, default_value_t = Interp::Bilinear)]
    pub interp: Interp,
}

#[derive(Debug, Args)]
pub struct RectifyArgs {
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `WxH:FX,FY,CX,CY` or `WxH@HFOV_DEG`.
    #[arg(long, value_parser = parse_persp)]
    pub persp: PerspSpec,
    #[arg(long, value_enum, default_value_t = Interp::Bilinear)]
    pub interp: Interp,
}

#[derive(Debug, Args)]
pub struct ConvArgs {
    /// Input KBTN tensor, `[C, H, W]` or `[1, C, H, W]`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Weight KBTN tensor, `[OUT, IN, KH, KW]`.
    #[arg(long)]
    pub weights: PathBuf,
    /// KBOF offsets at the output resolution; switches to deformable sampling.
    #[arg(long)]
    pub offsets: Option<PathBuf>,
    /// Bias KBTN tensor, `[OUT]`.
    #[arg(long)]
    pub bias: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, value_enum, default_value_t = Border::Zero)]
    pub border: Border,
    /// Zero-pad the input by half the kernel so the output keeps its size.
    #[arg(long)]
    pub same: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long, value_parser = parse_dims, default_value = "3x3")]
    pub kernel: Dims,
    /// Feature-map size whose kernels are drawn; defaults to 1/16 of the image.
    #[arg(long, value_parser = parse_dims)]
    pub fm: Option<Dims>,
    /// Background image; a blank disk when omitted.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Anchor pixels in image coordinates, `u,v;u,v`.
    #[arg(long, value_parser = parse_anchors, default_value = "")]
    pub anchors: Anchors,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Prediction file or directory.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Ground-truth file or directory (paired by file name).
    #[arg(long)]
    pub gt: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Calibration for radial binning; without it bins are centered on the image.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Number of classes (segmentation).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Label excluded from segmentation scoring.
    #[arg(long)]
    pub ignore: Option<u32>,
}
