use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kbconv::camera::Calibration;
use kbconv::conv::{conv2d, deform_conv2d, ConvParams};
use kbconv::formats::{self, Pnm, Tensor};
use kbconv::grid::Grid;
use kbconv::kernel::{offset_field, KernelSpec};
use kbconv::sample::BorderPolicy;
use kbconv::warp::{self, Interpolation, Orientation, PerspectiveIntrinsics};
use serde_json::json;

use crate::args::{Border, ConvArgs, GenOffsetsArgs, Interp, PerspSpec, RectifyArgs, SynthArgs};

pub fn load_calib(path: &Path) -> Result<Calibration> {
    Calibration::load(path).with_context(|| format!("loading calibration {}", path.display()))
}

pub fn read_image(path: &Path) -> Result<Pnm> {
    formats::read_pnm(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn interpolation(i: Interp) -> Interpolation {
    match i {
        Interp::Bilinear => Interpolation::Bilinear,
        Interp::Nearest => Interpolation::Nearest,
    }
}

fn with_suffix(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

pub fn gen_offsets(args: &GenOffsetsArgs) -> Result<()> {
    let calib = load_calib(&args.calib)?;
    let spec = KernelSpec::new(args.kernel.h, args.kernel.w, args.fm.w, args.fm.h, args.pad.w, args.pad.h)?;
    let field = offset_field(&calib, &spec)?;
    formats::write_offsets(&args.out, &field).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "offset field {}x{} for a {}x{} kernel: max |offset| {:.6} px, {} invalid anchors -> {}",
        field.width(),
        field.height(),
        field.kw(),
        field.kh(),
        field.max_magnitude(),
        field.invalid_count(),
        args.out.display()
    );
    Ok(())
}

pub fn synth_fisheye(args: &SynthArgs) -> Result<()> {
    let calib = load_calib(&args.calib)?;
    let pano = read_image(&args.input)?;
    let orient = if args.random_orient {
        warp::seeded_orientation(args.seed)
    } else {
        Orientation::from_yaw_pitch(args.yaw.to_radians(), args.pitch.to_radians())
    };
    let image = warp::equirect_to_fisheye(&pano.to_grid(), &calib, &orient, interpolation(args.interp))?;
    let mask = warp::valid_mask(&calib).map(|m| m * 255.0);

    formats::write_pnm(&args.out, &Pnm::from_grid(&image, pano.maxval)?)?;
    let mask_path = with_suffix(&args.out, "_mask", "pgm");
    formats::write_pnm(&mask_path, &Pnm::from_grid(&mask, 255)?)?;
    let sidecar = args.out.with_extension("json");
    write_json(
        &sidecar,
        &json!({
            "source": args.input.display().to_string(),
            "calibration": calib,
            "orientation": orient.to_rows(),
            "random_orient": args.random_orient,
            "seed": args.random_orient.then_some(args.seed),
            "interp": format!("{:?}", args.interp).to_lowercase(),
        }),
    )?;
    println!(
        "wrote {} ({}x{}), {} and {}",
        args.out.display(),
        image.width(),
        image.height(),
        mask_path.display(),
        sidecar.display()
    );
    Ok(())
}

pub fn perspective(spec: &PerspSpec) -> Result<PerspectiveIntrinsics> {
    Ok(match *spec {
        PerspSpec::Explicit { size, fx, fy, cx, cy } => PerspectiveIntrinsics::new(size.w, size.h, fx, fy, cx, cy)?,
        PerspSpec::Fov { size, hfov_deg } => PerspectiveIntrinsics::from_fov(size.w, size.h, hfov_deg.to_radians())?,
    })
}

pub fn rectify(args: &RectifyArgs) -> Result<()> {
    let calib = load_calib(&args.calib)?;
    let img = read_image(&args.input)?;
    if (img.width, img.height) != (calib.width() as usize, calib.height() as usize) {
        bail!(
            "image is {}x{} but the calibration is for {}x{}",
            img.width,
            img.height,
            calib.width(),
            calib.height()
        );
    }
    let persp = perspective(&args.persp)?;
    let out = warp::fisheye_to_perspective(&img.to_grid(), &calib, &persp, interpolation(args.interp))?;
    formats::write_pnm(&args.out, &Pnm::from_grid(&out, img.maxval)?)?;
    println!("wrote {} ({}x{})", args.out.display(), out.width(), out.height());
    Ok(())
}

fn pad_zero(grid: &Grid, ph: usize, pw: usize) -> Grid {
    let (c, h, w) = grid.dims();
    Grid::from_fn(c, h + 2 * ph, w + 2 * pw, |ch, y, x| {
        if y < ph || x < pw || y >= h + ph || x >= w + pw {
            0.0
        } else {
            grid.get(ch, y - ph, x - pw)
        }
    })
}

pub fn conv(args: &ConvArgs) -> Result<()> {
    let input = formats::read_tensor(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let weights = formats::read_tensor(&args.weights)
        .with_context(|| format!("reading {}", args.weights.display()))?
        .to_weights()?;
    let mut x = input.to_grid()?;
    let (_, _, kh, kw) = weights.dims();
    if args.same {
        x = pad_zero(&x, kh / 2, kw / 2);
    }
    let border = match args.border {
        Border::Zero => BorderPolicy::Zero,
        Border::Clamp => BorderPolicy::Clamp,
    };
    let mut params = ConvParams::new(args.stride).with_border(border);
    if let Some(path) = &args.bias {
        let bias = formats::read_tensor(path).with_context(|| format!("reading {}", path.display()))?;
        if bias.dims.len() != 1 {
            bail!("bias must be a rank-1 tensor, got dims {:?}", bias.dims);
        }
        params = params.with_bias(bias.data.iter().map(|&v| v as f64).collect());
    }
    let y = match &args.offsets {
        Some(path) => {
            let field = formats::read_offsets(path).with_context(|| format!("reading {}", path.display()))?;
            deform_conv2d(&x, &weights, &field, &params)?
        }
        None => conv2d(&x, &weights, &params)?,
    };
    let mut out = Tensor::from_grid(&y);
    if input.dims.len() == 4 {
        out.dims.insert(0, 1);
    }
    formats::write_tensor(&args.out, &out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} with dims {:?}", args.out.display(), out.dims);
    Ok(())
}
