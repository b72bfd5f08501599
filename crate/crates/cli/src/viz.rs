use anyhow::{bail, Result};
use kbconv::camera::{Calibration, RadialCamera};
use kbconv::formats::{self, Pnm};
use kbconv::grid::Grid;
use kbconv::kernel::{build_kernel_grid, kernel_offsets_at, rescale_calibration, KernelError, KernelSpec};
use kbconv::warp;

use crate::args::{Dims, VizArgs};
use crate::commands::{load_calib, read_image};

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

/// Background level of the field-of-view disk when no image is given.
const DISK_LEVEL: f64 = 48.0;

/// Image-pixel sampling positions of the kernel anchored at image pixel
/// `anchor`, computed on the feature map `fm`, in row-major tap order.
pub fn footprint(calib: &Calibration, kernel: Dims, fm: Dims, anchor: (f64, f64)) -> Result<Vec<(f64, f64)>, KernelError> {
    let spec = KernelSpec::new(kernel.h, kernel.w, fm.w, fm.h, 0, 0)?;
    let grid = build_kernel_grid(&spec, calib.fov())?;
    let scaled = rescale_calibration(calib, &spec);
    let (sx, sy) = (scaled.scale_x(), scaled.scale_y());
    let (uf, vf) = (anchor.0 * sx, anchor.1 * sy);
    let offsets = kernel_offsets_at((uf, vf), &grid, &scaled)?;
    Ok(grid
        .taps()
        .zip(offsets)
        .map(|((i, j), [du, dv])| ((uf + j as f64 + du) / sx, (vf + i as f64 + dv) / sy))
        .collect())
}

struct Canvas {
    width: usize,
    height: usize,
    rgb: Vec<[u8; 3]>,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.rgb[y as usize * self.width + x as usize] = color;
        }
    }

    fn dot(&mut self, x: f64, y: f64, radius: i64, color: [u8; 3]) {
        let (cx, cy) = (x.round() as i64, y.round() as i64);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy <= radius * radius {
                    self.put(cx + dx, cy + dy, color);
                }
            }
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
        let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let x = a.0 + (b.0 - a.0) * t;
            let y = a.1 + (b.1 - a.1) * t;
            self.put(x.round() as i64, y.round() as i64, color);
        }
    }

    fn to_grid(&self) -> Grid {
        Grid::from_fn(3, self.height, self.width, |c, y, x| self.rgb[y * self.width + x][c] as f64)
    }
}

fn background(calib: &Calibration, input: Option<&Pnm>) -> Canvas {
    let (width, height) = (calib.width() as usize, calib.height() as usize);
    let rgb = match input {
        Some(img) => {
            let scale = 255.0 / img.maxval as f64;
            (0..width * height)
                .map(|p| {
                    let px = &img.samples[p * img.channels..(p + 1) * img.channels];
                    let level = |s: u16| (s as f64 * scale).round() as u8;
                    if img.channels == 1 {
                        [level(px[0]); 3]
                    } else {
                        [level(px[0]), level(px[1]), level(px[2])]
                    }
                })
                .collect()
        }
        None => warp::valid_mask(calib)
            .data()
            .iter()
            .map(|&m| [(m * DISK_LEVEL) as u8; 3])
            .collect(),
    };
    Canvas { width, height, rgb }
}

pub fn viz(args: &VizArgs) -> Result<()> {
    let calib = load_calib(&args.calib)?;
    let (width, height) = (calib.width() as usize, calib.height() as usize);
    let input = args.input.as_deref().map(read_image).transpose()?;
    if let Some(img) = &input {
        if (img.width, img.height) != (width, height) {
            bail!("image is {}x{} but the calibration is for {width}x{height}", img.width, img.height);
        }
    }
    let fm = args.fm.unwrap_or(Dims {
        w: (width / 16).max(args.kernel.w),
        h: (height / 16).max(args.kernel.h),
    });
    let mut canvas = background(&calib, input.as_ref());
    let mut drawn = 0;
    for (n, &(u, v)) in args.anchors.0.iter().enumerate() {
        if !(u >= 0.0 && v >= 0.0 && u <= (width - 1) as f64 && v <= (height - 1) as f64) {
            eprintln!("warning: anchor ({u}, {v}) lies outside the {width}x{height} image, skipped");
            continue;
        }
        let points = match footprint(&calib, args.kernel, fm, (u, v)) {
            Ok(p) => p,
            Err(KernelError::InvalidAnchor { reason, .. }) => {
                eprintln!("warning: anchor ({u}, {v}) skipped: {reason}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let color = PALETTE[n % PALETTE.len()];
        let (kh, kw) = (args.kernel.h, args.kernel.w);
        for i in 0..kh {
            for j in 0..kw {
                let p = points[i * kw + j];
                if j + 1 < kw {
                    canvas.line(p, points[i * kw + j + 1], color);
                }
                if i + 1 < kh {
                    canvas.line(p, points[(i + 1) * kw + j], color);
                }
            }
        }
        for (t, &(x, y)) in points.iter().enumerate() {
            let center = t == (kh / 2) * kw + kw / 2;
            canvas.dot(x, y, if center { 3 } else { 2 }, color);
        }
        drawn += 1;
    }
    formats::write_pnm(&args.out, &Pnm::from_grid(&canvas.to_grid(), 255)?)?;
    println!(
        "drew {drawn} of {} kernels ({}x{} feature map) -> {}",
        args.anchors.0.len(),
        fm.w,
        fm.h,
        args.out.display()
    );
    Ok(())
}
