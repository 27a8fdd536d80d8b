//! Raster plots of an evaluation report: a per-class IoU bar chart and a
//! row-normalized confusion heatmap.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use segland_core::eval::{ClassGroup, EvalReport};

use crate::error::{CliError, Result};

pub const IOU_PLOT: &str = "iou.png";
pub const CONFUSION_PLOT: &str = "confusion.png";

const BAR_WIDTH: u32 = 24;
const GAP: u32 = 8;
const HEIGHT: u32 = 200;
const MARGIN: u32 = 10;

fn group_color(group: &ClassGroup) -> Rgb<u8> {
    match group {
        ClassGroup::Background => Rgb([150, 150, 150]),
        ClassGroup::Base => Rgb([52, 101, 164]),
        ClassGroup::Novel => Rgb([230, 120, 30]),
    }
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, color: Rgb<u8>) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, color);
        }
    }
}

/// Bars in class order, height ∝ IoU; gridlines every 20 points; undefined
/// IoUs are drawn as a short hatched stub.
pub fn iou_chart(report: &EvalReport) -> RgbImage {
    let n = report.classes.len() as u32;
    let width = 2 * MARGIN + n * BAR_WIDTH + n.saturating_sub(1) * GAP;
    let mut img = RgbImage::from_pixel(width.max(2 * MARGIN + 1), HEIGHT + 2 * MARGIN, Rgb([255, 255, 255]));
    for tick in 0..=5 {
        let y = MARGIN + HEIGHT - tick * HEIGHT / 5;
        fill(&mut img, MARGIN / 2, y, width - MARGIN, 1, Rgb([220, 220, 220]));
    }
    for (i, class) in report.classes.iter().enumerate() {
        let x = MARGIN + i as u32 * (BAR_WIDTH + GAP);
        match class.iou {
            Some(iou) => {
                let h = ((iou.clamp(0.0, 100.0) / 100.0) * HEIGHT as f64).round() as u32;
                fill(&mut img, x, MARGIN + HEIGHT - h, BAR_WIDTH, h, group_color(&class.group));
            }
            None => {
                for k in 0..4 {
                    fill(&mut img, x, MARGIN + HEIGHT - 2 * k - 1, BAR_WIDTH, 1, Rgb([200, 0, 0]));
                }
            }
        }
    }
    fill(&mut img, MARGIN / 2, MARGIN + HEIGHT, width - MARGIN, 1, Rgb([0, 0, 0]));
    img
}

/// K×K heatmap, each truth row normalized to its total, drawn dark for high
/// fractions.
pub fn confusion_heatmap(report: &EvalReport) -> RgbImage {
    let cm = &report.confusion;
    let k = cm.k as u32;
    let cell = (HEIGHT / k.max(1)).clamp(4, 32);
    let mut img = RgbImage::from_pixel(2 * MARGIN + k * cell, 2 * MARGIN + k * cell, Rgb([255, 255, 255]));
    for t in 0..cm.k {
        let total = cm.row_sum(t);
        for p in 0..cm.k {
            let frac = if total == 0 {
                0.0
            } else {
                cm.get(t, p) as f64 / total as f64
            };
            let v = (255.0 * (1.0 - frac)).round() as u8;
            let color = if t == p { Rgb([v, v, 255]) } else { Rgb([255, v, v]) };
            fill(&mut img, MARGIN + p as u32 * cell, MARGIN + t as u32 * cell, cell, cell, color);
        }
    }
    img
}

pub fn render_report(report: &EvalReport, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let paths = vec![out.join(IOU_PLOT), out.join(CONFUSION_PLOT)];
    for (img, path) in [iou_chart(report), confusion_heatmap(report)].iter().zip(&paths) {
        img.save(path).map_err(|e| CliError::Plot(format!("{}: {e}", path.display())))?;
    }
    Ok(paths)
}
