//! PNG renderings of the comparison histograms.

use std::path::{Path, PathBuf};

use anyhow::Result;
use cosmos::validate::{ComparisonReport, Histogram2D};
use image::{Rgb, RgbImage};

const CELL: u32 = 12;
const GAP: u32 = 8;

/// Dark blue through teal to yellow.
fn colormap(v: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 4] = [[68.0, 1.0, 84.0], [49.0, 104.0, 142.0], [53.0, 183.0, 121.0], [253.0, 231.0, 37.0]];
    let v = v.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (v.floor() as usize).min(STOPS.len() - 2);
    let f = v - i as f64;
    let c = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn draw(img: &mut RgbImage, h: &Histogram2D, x_off: u32) {
    let ny = h.normalized.first().map_or(0, |c| c.len()) as u32;
    for (ix, col) in h.normalized.iter().enumerate() {
        for (iy, &v) in col.iter().enumerate() {
            let px = x_off + ix as u32 * CELL;
            // high values at the top
            let py = (ny - 1 - iy as u32) * CELL;
            for dx in 0..CELL {
                for dy in 0..CELL {
                    img.put_pixel(px + dx, py + dy, colormap(v));
                }
            }
        }
    }
}

/// One image per statistic: template on the left, simulation on the right;
/// distance runs along x and the statistic along y.
pub fn write_histograms(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for s in &report.statistics {
        let nx = s.template_hist.normalized.len() as u32;
        let ny = s.template_hist.normalized.first().map_or(0, |c| c.len()) as u32;
        let (w, h) = (2 * nx * CELL + GAP, ny * CELL);
        let mut img = RgbImage::from_pixel(w.max(1), h.max(1), Rgb([255, 255, 255]));
        draw(&mut img, &s.template_hist, 0);
        draw(&mut img, &s.simulated_hist, nx * CELL + GAP);
        let path = dir.join(format!("{}.png", s.statistic.short_name()));
        img.save(&path)?;
        written.push(path);
    }
    Ok(written)
}
