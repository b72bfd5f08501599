use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kbconv::camera::Calibration;
use kbconv::formats;
use kbconv::grid::Grid;
use kbconv::metrics::{
    depth_pixel_valid, radial_bins, radial_bins_with, BinMap, ConfusionMatrix, DepthAccumulator,
    ProfileAccumulator,
};

use crate::args::{MetricsArgs, Task};
use crate::commands::{load_calib, read_image, write_json};

/// Prediction/ground-truth pairs keyed by output stem.
fn pairs(pred: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if pred.is_dir() != gt.is_dir() {
        bail!("--in and --gt must both be files or both be directories");
    }
    if !pred.is_dir() {
        let stem = pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![(stem, pred.to_path_buf(), gt.to_path_buf())]);
    }
    let mut names: Vec<_> = fs::read_dir(pred)
        .with_context(|| format!("listing {}", pred.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| matches!(e.to_str(), Some("pgm" | "ppm" | "pnm")))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no PNM files in {}", pred.display());
    }
    names
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_owned();
            let g = gt.join(&name);
            if !g.is_file() {
                bail!("no ground truth {} for {}", g.display(), p.display());
            }
            let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
            Ok((stem, p, g))
        })
        .collect()
}

fn bins_for(calib: Option<&Calibration>, width: usize, height: usize, n_bins: usize) -> Result<BinMap> {
    Ok(match calib {
        Some(c) => radial_bins(c, (width, height), n_bins)?,
        None => {
            let center = (0.5 * (width as f64 - 1.0), 0.5 * (height as f64 - 1.0));
            radial_bins_with((width, height), center, n_bins, |_, _| true)?
        }
    })
}

fn read_labels(path: &Path) -> Result<Grid> {
    let img = read_image(path)?;
    if img.channels != 1 {
        bail!("{}: label maps must be single-channel PGM", path.display());
    }
    Ok(img.to_grid())
}

/// Per-pixel error and whether the pixel is scored.
fn pixel_errors(args: &MetricsArgs, pred: &Grid, gt: &Grid) -> Vec<Option<f64>> {
    let ignore = args.ignore.map(|i| i as f64);
    pred.data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| match args.task {
            Task::Depth => depth_pixel_valid(p, g, None).then(|| (p - g).abs()),
            Task::Seg => (Some(g) != ignore).then_some((p == g) as u8 as f64),
        })
        .collect()
}

enum Totals {
    Depth(DepthAccumulator),
    Seg(ConfusionMatrix),
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let calib = args.calib.as_deref().map(load_calib).transpose()?;
    let n_classes = match (args.task, args.classes) {
        (Task::Seg, None) => bail!("--classes is required for --task seg"),
        (_, c) => c.unwrap_or(0),
    };
    let list = pairs(&args.input, &args.gt)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut totals = match args.task {
        Task::Depth => Totals::Depth(DepthAccumulator::new()),
        Task::Seg => Totals::Seg(ConfusionMatrix::new(n_classes)),
    };
    let mut aggregate_profile: Option<(BinMap, ProfileAccumulator)> = None;
    let mut profile_shapes_agree = true;

    for (stem, pred_path, gt_path) in &list {
        let (pred, gt) = match args.task {
            Task::Depth => (formats::read_depth(pred_path)?, formats::read_depth(gt_path)?),
            Task::Seg => (read_labels(pred_path)?, read_labels(gt_path)?),
        };
        if pred.dims() != gt.dims() {
            bail!(
                "{} is {}x{} but {} is {}x{}",
                pred_path.display(),
                pred.width(),
                pred.height(),
                gt_path.display(),
                gt.width(),
                gt.height()
            );
        }
        let report = match &mut totals {
            Totals::Depth(total) => {
                let acc = kbconv::metrics::depth_accumulate(&pred, &gt, None)?;
                total.merge(&acc);
                serde_json::to_value(acc.report().with_context(|| format!("evaluating {stem}"))?)?
            }
            Totals::Seg(total) => {
                let mut cm = ConfusionMatrix::new(n_classes);
                cm.accumulate(&pred, &gt, args.ignore)?;
                total.merge(&cm);
                serde_json::to_value(cm.report().with_context(|| format!("evaluating {stem}"))?)?
            }
        };
        write_json(&args.out.join(format!("{stem}.json")), &report)?;

        let bins = bins_for(calib.as_ref(), pred.width(), pred.height(), args.bins)?;
        let mut profile = ProfileAccumulator::new(bins.edges());
        if aggregate_profile.is_none() {
            aggregate_profile = Some((bins.clone(), ProfileAccumulator::new(bins.edges())));
        }
        let (agg_bins, agg) = aggregate_profile.as_mut().unwrap();
        let same_shape = agg_bins.width == bins.width && agg_bins.height == bins.height;
        profile_shapes_agree &= same_shape;
        for (err, bin) in pixel_errors(args, &pred, &gt).into_iter().zip(&bins.bins) {
            if let (Some(e), Some(b)) = (err, bin) {
                profile.add(*b, e);
                if same_shape {
                    agg.add(*b, e);
                }
            }
        }
        let csv = args.out.join(format!("{stem}_radial.csv"));
        fs::write(&csv, profile.finish().to_csv()).with_context(|| format!("writing {}", csv.display()))?;
        println!("{stem}: {report}");
    }

    let aggregate = match &totals {
        Totals::Depth(t) => serde_json::to_value(t.report()?)?,
        Totals::Seg(t) => serde_json::to_value(t.report()?)?,
    };
    write_json(&args.out.join("aggregate.json"), &aggregate)?;
    match aggregate_profile {
        Some((_, agg)) if profile_shapes_agree => {
            let csv = args.out.join("aggregate_radial.csv");
            fs::write(&csv, agg.finish().to_csv()).with_context(|| format!("writing {}", csv.display()))?;
        }
        _ => eprintln!("warning: image sizes differ, no aggregate radial profile written"),
    }
    println!("aggregate over {} pairs: {aggregate}", list.len());
    Ok(())
}
