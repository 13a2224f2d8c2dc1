//! Minimal PNG charts: line series, heatmaps and histograms. No text; the
//! axes span the data range.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{CoreError, Result};

const MARGIN: u32 = 24;
const AXIS: Rgb<u8> = Rgb([60, 60, 60]);
pub const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189], [140, 86, 75]];

fn canvas(w: u32, h: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    for x in MARGIN..w - MARGIN / 2 {
        img.put_pixel(x, h - MARGIN, AXIS);
    }
    for y in MARGIN / 2..=h - MARGIN {
        img.put_pixel(MARGIN, y, AXIS);
    }
    img
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// One polyline per series over a shared y range, x = index.
pub fn line_chart(series: &[Vec<f64>], width: u32, height: u32) -> RgbImage {
    let mut img = canvas(width, height);
    let (lo, hi) = range(series.iter().flatten().copied());
    let (pw, ph) = ((width - MARGIN - MARGIN / 2) as f64, (height - MARGIN - MARGIN / 2) as f64);
    for (k, s) in series.iter().enumerate() {
        let c = Rgb(PALETTE[k % PALETTE.len()]);
        let n = s.len().max(2) - 1;
        let pt = |i: usize, v: f64| {
            let x = MARGIN as f64 + pw * i as f64 / n as f64;
            let y = (height - MARGIN) as f64 - ph * (v - lo) / (hi - lo);
            (x.round() as i64, y.round() as i64)
        };
        for i in 1..s.len() {
            if s[i - 1].is_finite() && s[i].is_finite() {
                line(&mut img, pt(i - 1, s[i - 1]), pt(i, s[i]), c);
            }
        }
        if s.len() == 1 {
            let (x, y) = pt(0, s[0]);
            line(&mut img, (x - 2, y), (x + 2, y), c);
        }
    }
    img
}

/// Grid of cells shaded from white (minimum) to dark red (maximum).
pub fn heatmap(rows: &[Vec<f64>], cell: u32) -> RgbImage {
    let nr = rows.len().max(1) as u32;
    let nc = rows.iter().map(Vec::len).max().unwrap_or(1).max(1) as u32;
    let mut img = RgbImage::from_pixel(nc * cell, nr * cell, Rgb([255, 255, 255]));
    let (lo, hi) = range(rows.iter().flatten().copied());
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            let px = Rgb([(255.0 - 90.0 * t) as u8, (255.0 * (1.0 - t)) as u8, (255.0 * (1.0 - t)) as u8]);
            for y in 0..cell {
                for x in 0..cell {
                    img.put_pixel(c as u32 * cell + x, r as u32 * cell + y, px);
                }
            }
        }
    }
    img
}

/// Bar histogram of `values` in `bins` equal-width bins.
pub fn histogram(values: &[f64], bins: usize, width: u32, height: u32) -> RgbImage {
    let mut img = canvas(width, height);
    let bins = bins.max(1);
    let (lo, hi) = range(values.iter().copied());
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let b = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let pw = (width - MARGIN - MARGIN / 2) as f64 / bins as f64;
    let ph = (height - MARGIN - MARGIN / 2) as f64;
    for (b, &n) in counts.iter().enumerate() {
        let x0 = (MARGIN as f64 + b as f64 * pw).round() as u32 + 1;
        let x1 = (MARGIN as f64 + (b + 1) as f64 * pw).round() as u32;
        let y0 = ((height - MARGIN) as f64 - ph * n as f64 / top).round() as u32;
        for x in x0..x1 {
            for y in y0..height - MARGIN {
                img.put_pixel(x, y, Rgb(PALETTE[0]));
            }
        }
    }
    img
}

pub fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| CoreError::Image { path: path.to_path_buf(), source: e })
}
