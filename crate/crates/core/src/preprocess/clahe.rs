//! Contrast-limited adaptive histogram equalization.

use crate::error::{Error, Result};

const BINS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClaheConfig {
    /// Multiple of the uniform bin height a bin may hold before clipping.
    /// `f64::INFINITY` disables clipping.
    pub clip_limit: f64,
    /// Tile grid `(rows, cols)`.
    pub tiles: (usize, usize),
}

impl Default for ClaheConfig {
    fn default() -> Self {
        ClaheConfig {
            clip_limit: 2.0,
            tiles: (8, 8),
        }
    }
}

/// Half-open pixel ranges of `n` near-equal tiles over `len` pixels.
fn tile_bounds(len: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i * len / n, (i + 1) * len / n)).collect()
}

/// For a coordinate, the two neighbouring tile indices and the weight of the
/// second, interpolating between tile centres and clamping at the borders.
fn blend(pos: usize, centers: &[f64]) -> (usize, usize, f64) {
    let p = pos as f64;
    let last = centers.len() - 1;
    if p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= p) - 1;
    let t = (p - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, t)
}

/// Equalizes one `h × w` slice; output values lie in `[0, 1]`.
///
/// Intensities are quantized into 256 bins between the slice minimum and
/// maximum. Each tile's histogram is clipped at
/// `clip_limit · tile_pixels / 256`, the excess is spread evenly over all
/// bins, and the normalized CDF becomes the tile's mapping. Pixels blend the
/// mappings of the four nearest tile centres bilinearly.
pub fn clahe(slice: &[f32], h: usize, w: usize, cfg: &ClaheConfig) -> Result<Vec<f32>> {
    if !(cfg.clip_limit > 0.0) {
        return Err(Error::config(format!(
            "CLAHE clip limit must be positive, got {}",
            cfg.clip_limit
        )));
    }
    let (ty, tx) = cfg.tiles;
    if ty == 0 || tx == 0 || ty > h || tx > w {
        return Err(Error::config(format!(
            "CLAHE tile grid {ty}x{tx} does not fit a {h}x{w} slice"
        )));
    }
    if slice.len() != h * w {
        return Err(Error::shape(format!(
            "CLAHE slice has {} values, expected {h}x{w}",
            slice.len()
        )));
    }
    if let Some(v) = slice.iter().find(|v| !v.is_finite()) {
        return Err(Error::contract(format!(
            "CLAHE input contains non-finite value {v}"
        )));
    }
    let lo = slice.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = slice.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let range = hi - lo;
    let bins: Vec<u8> = slice
        .iter()
        .map(|&v| {
            if range > 0.0 {
                (((v as f64 - lo) / range * BINS as f64) as usize).min(BINS - 1) as u8
            } else {
                0
            }
        })
        .collect();

    let rows = tile_bounds(h, ty);
    let cols = tile_bounds(w, tx);
    let mut maps = vec![[0.0f64; BINS]; ty * tx];
    for (i, &(y0, y1)) in rows.iter().enumerate() {
        for (j, &(x0, x1)) in cols.iter().enumerate() {
            let mut hist = [0.0f64; BINS];
            for y in y0..y1 {
                for &b in &bins[y * w + x0..y * w + x1] {
                    hist[b as usize] += 1.0;
                }
            }
            let pixels = ((y1 - y0) * (x1 - x0)) as f64;
            if cfg.clip_limit.is_finite() {
                let limit = (cfg.clip_limit * pixels / BINS as f64).max(1.0);
                let mut excess = 0.0;
                for c in hist.iter_mut() {
                    if *c > limit {
                        excess += *c - limit;
                        *c = limit;
                    }
                }
                let share = excess / BINS as f64;
                for c in hist.iter_mut() {
                    *c += share;
                }
            }
            let map = &mut maps[i * tx + j];
            let mut acc = 0.0;
            for b in 0..BINS {
                acc += hist[b];
                map[b] = (acc / pixels).min(1.0);
            }
        }
    }

    let cy: Vec<f64> = rows
        .iter()
        .map(|&(a, b)| (a + b) as f64 / 2.0 - 0.5)
        .collect();
    let cx: Vec<f64> = cols
        .iter()
        .map(|&(a, b)| (a + b) as f64 / 2.0 - 0.5)
        .collect();
    let xw: Vec<_> = (0..w).map(|x| blend(x, &cx)).collect();
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        let (i0, i1, ay) = blend(y, &cy);
        for x in 0..w {
            let (j0, j1, ax) = xw[x];
            let b = bins[y * w + x] as usize;
            let top = (1.0 - ax) * maps[i0 * tx + j0][b] + ax * maps[i0 * tx + j1][b];
            let bottom = (1.0 - ax) * maps[i1 * tx + j0][b] + ax * maps[i1 * tx + j1][b];
            out[y * w + x] = ((1.0 - ay) * top + ay * bottom).clamp(0.0, 1.0) as f32;
        }
    }
    Ok(out)
}
