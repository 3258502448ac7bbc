use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::{
    clahe, gaussian_normalize, load_mhd, unify, ClaheConfig, GeometryRecord, UniformMethod, Volume,
    VolumeKind,
};

pub const MASK_SUFFIX: &str = "_segmentation";

/// An image volume on disk and its mask, if present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseFiles {
    pub id: String,
    /// File stem of the image, e.g. `Case05`.
    pub stem: String,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

/// `Case05` → `05`; stems without the prefix are their own id.
pub fn case_id(stem: &str) -> String {
    stem.strip_prefix("Case").unwrap_or(stem).to_string()
}

pub fn mask_file_name(stem: &str) -> String {
    format!("{stem}{MASK_SUFFIX}.mhd")
}

fn mhd_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "mhd") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

/// Image volumes in `dir`, sorted by id. Every `X.mhd` that is not itself
/// a mask is an image; its mask is `X_segmentation.mhd`.
pub fn discover_cases(dir: &Path) -> Result<Vec<CaseFiles>> {
    let stems = mhd_stems(dir)?;
    let mut cases: Vec<CaseFiles> = stems
        .iter()
        .filter(|s| !s.ends_with(MASK_SUFFIX))
        .map(|stem| {
            let mask = dir.join(mask_file_name(stem));
            CaseFiles {
                id: case_id(stem),
                stem: stem.clone(),
                image: dir.join(format!("{stem}.mhd")),
                mask: mask.exists().then_some(mask),
            }
        })
        .collect();
    if cases.is_empty() {
        return Err(Error::config(format!(
            "no image volumes (*.mhd) in {}",
            dir.display()
        )));
    }
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = cases.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::config(format!(
            "two volumes share case id {} in {}",
            w[0].id,
            dir.display()
        )));
    }
    Ok(cases)
}

/// Mask volumes (`*_segmentation.mhd`) in `dir` as `(id, path)`, sorted by id.
pub fn discover_masks(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out: Vec<(String, PathBuf)> = mhd_stems(dir)?
        .iter()
        .filter_map(|s| {
            s.strip_suffix(MASK_SUFFIX)
                .map(|base| (case_id(base), dir.join(format!("{s}.mhd"))))
        })
        .collect();
    if out.is_empty() {
        return Err(Error::config(format!(
            "no masks (*{MASK_SUFFIX}.mhd) in {}",
            dir.display()
        )));
    }
    out.sort();
    Ok(out)
}

pub fn load_mask(path: &Path) -> Result<Volume> {
    load_mhd(path)?
        .with_kind(VolumeKind::Mask)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn load_image(path: &Path) -> Result<Volume> {
    load_mhd(path)?.with_kind(VolumeKind::Intensity)
}

/// Image → uniform size → CLAHE → Gaussian normalization, slice by slice.
pub fn prepare_input(
    image: &Volume,
    method: UniformMethod,
    target: (usize, usize),
    cfg: &ClaheConfig,
) -> Result<(Volume, GeometryRecord)> {
    let (u, rec) = unify(
        &image.clone().with_kind(VolumeKind::Intensity)?,
        method,
        target,
    )?;
    let (h, w) = u.slice_dims();
    let slices = u
        .slices()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|s| clahe(s, h, w, cfg).map(|eq| gaussian_normalize(&eq)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Volume::from_slices(&slices, (h, w), u.spacing(), VolumeKind::Intensity)?,
        rec,
    ))
}

/// In-plane boundary: foreground pixels with a 4-neighbour that is
/// background or outside the slice.
fn boundary2d(m: &[f32], h: usize, w: usize) -> Vec<bool> {
    let fg = |y: isize, x: isize| {
        y >= 0
            && x >= 0
            && (y as usize) < h
            && (x as usize) < w
            && m[y as usize * w + x as usize] != 0.0
    };
    let mut out = vec![false; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            if fg(y, x) && !(fg(y - 1, x) && fg(y + 1, x) && fg(y, x - 1) && fg(y, x + 1)) {
                out[y as usize * w + x as usize] = true;
            }
        }
    }
    out
}

/// Binary PPM of one slice: grey image scaled from `[lo, hi]`, reference
/// boundary in red, predicted boundary in green on top.
pub fn overlay_ppm(
    image: &[f32],
    (h, w): (usize, usize),
    (lo, hi): (f32, f32),
    pred: &[f32],
    reference: Option<&[f32]>,
) -> Vec<u8> {
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let pb = boundary2d(pred, h, w);
    let rb = reference.map(|r| boundary2d(r, h, w));
    for i in 0..h * w {
        let g = ((image[i] - lo) * scale).round().clamp(0.0, 255.0) as u8;
        let px = if pb[i] {
            [0, 255, 0]
        } else if rb.as_ref().is_some_and(|b| b[i]) {
            [255, 0, 0]
        } else {
            [g; 3]
        };
        out.extend_from_slice(&px);
    }
    out
}
