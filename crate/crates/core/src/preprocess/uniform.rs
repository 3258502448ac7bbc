//! The three ways of bringing every axial slice to a common in-plane size, and
//! their inverses.
//!
//! * pad-and-cut: centre-crop axes that are too large, zero-pad axes that are
//!   too small. Lossless for anything inside the retained window.
//! * 2D resize: nearest-neighbour resample of each slice.
//! * 3D resize: resample the volume to an isotropic grid first (trilinear for
//!   intensities, nearest neighbour for masks), then 2D resize each slice.

use std::fmt;
use std::str::FromStr;

use super::resample::{resize2d_nn, resize3d_nn, resize3d_trilinear};
use super::{Volume, VolumeKind};
use crate::error::{Error, Result};

/// Isotropic voxel size used by the 3D resize, in mm.
pub const ISO_SPACING: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum UniformMethod {
    #[default]
    PadCut,
    Resize2d,
    Resize3d,
}

impl UniformMethod {
    pub const ALL: [UniformMethod; 3] = [
        UniformMethod::PadCut,
        UniformMethod::Resize2d,
        UniformMethod::Resize3d,
    ];
}

impl fmt::Display for UniformMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UniformMethod::PadCut => "pad_cut",
            UniformMethod::Resize2d => "resize2d",
            UniformMethod::Resize3d => "resize3d",
        })
    }
}

impl FromStr for UniformMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pad_cut" => Ok(UniformMethod::PadCut),
            "resize2d" => Ok(UniformMethod::Resize2d),
            "resize3d" => Ok(UniformMethod::Resize3d),
            other => Err(Error::config(format!(
                "unknown uniform method {other:?} (expected pad_cut, resize2d or resize3d)"
            ))),
        }
    }
}

/// Everything needed to undo a unify step.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryRecord {
    pub method: UniformMethod,
    pub original_dims: [usize; 3],
    pub original_spacing: [f64; 3],
    pub target: (usize, usize),
    /// Pad-and-cut only: per in-plane axis, the crop start (positive) or the
    /// negated padding before the data (negative).
    pub offsets: [isize; 2],
    /// 3D resize only: dims of the isotropic intermediate grid.
    pub iso_dims: Option<[usize; 3]>,
}

impl GeometryRecord {
    /// Dims of the unified volume this record describes.
    pub fn unified_dims(&self) -> [usize; 3] {
        let d = self.iso_dims.map_or(self.original_dims[0], |iso| iso[0]);
        [d, self.target.0, self.target.1]
    }
}

fn check_target(target: (usize, usize)) -> Result<()> {
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::geometry(format!(
            "target size {target:?} must be positive"
        )));
    }
    Ok(())
}

fn pad_cut_offset(len: usize, target: usize) -> isize {
    if len >= target {
        ((len - target) / 2) as isize
    } else {
        -(((target - len) / 2) as isize)
    }
}

/// `dst[j] = src[j + off]` where defined, zero elsewhere, per in-plane axis.
fn shifted(src: &[f32], from: (usize, usize), to: (usize, usize), off: [isize; 2]) -> Vec<f32> {
    let mut out = vec![0.0f32; to.0 * to.1];
    for y in 0..to.0 {
        let sy = y as isize + off[0];
        if sy < 0 || sy >= from.0 as isize {
            continue;
        }
        let row = &src[sy as usize * from.1..][..from.1];
        for x in 0..to.1 {
            let sx = x as isize + off[1];
            if sx >= 0 && sx < from.1 as isize {
                out[y * to.1 + x] = row[sx as usize];
            }
        }
    }
    out
}

fn per_slice(v: &Volume, to: (usize, usize), f: impl Fn(&[f32]) -> Vec<f32>) -> Vec<f32> {
    let mut data = Vec::with_capacity(v.depth() * to.0 * to.1);
    for s in v.slices() {
        data.extend(f(s));
    }
    data
}

pub fn unify_pad_cut(v: &Volume, target: (usize, usize)) -> Result<(Volume, GeometryRecord)> {
    check_target(target)?;
    let [d, h, w] = v.dims();
    let offsets = [pad_cut_offset(h, target.0), pad_cut_offset(w, target.1)];
    let data = per_slice(v, target, |s| shifted(s, (h, w), target, offsets));
    let out = Volume::new([d, target.0, target.1], v.spacing(), data, v.kind())?;
    let rec = GeometryRecord {
        method: UniformMethod::PadCut,
        original_dims: v.dims(),
        original_spacing: v.spacing(),
        target,
        offsets,
        iso_dims: None,
    };
    Ok((out, rec))
}

pub fn reconstruct_pad_cut(v: &Volume, rec: &GeometryRecord) -> Result<Volume> {
    check_unified(v, rec, UniformMethod::PadCut)?;
    let [d, h, w] = rec.original_dims;
    let back = [-rec.offsets[0], -rec.offsets[1]];
    let data = per_slice(v, (h, w), |s| shifted(s, rec.target, (h, w), back));
    Volume::new([d, h, w], rec.original_spacing, data, v.kind())
}

pub fn unify_resize2d(v: &Volume, target: (usize, usize)) -> Result<(Volume, GeometryRecord)> {
    check_target(target)?;
    let [d, h, w] = v.dims();
    let [sz, sy, sx] = v.spacing();
    let data = per_slice(v, target, |s| resize2d_nn(s, (h, w), target));
    let spacing = [
        sz,
        sy * h as f64 / target.0 as f64,
        sx * w as f64 / target.1 as f64,
    ];
    let out = Volume::new([d, target.0, target.1], spacing, data, v.kind())?;
    let rec = GeometryRecord {
        method: UniformMethod::Resize2d,
        original_dims: v.dims(),
        original_spacing: v.spacing(),
        target,
        offsets: [0, 0],
        iso_dims: None,
    };
    Ok((out, rec))
}

pub fn reconstruct_resize2d(v: &Volume, rec: &GeometryRecord) -> Result<Volume> {
    check_unified(v, rec, UniformMethod::Resize2d)?;
    let [d, h, w] = rec.original_dims;
    let data = per_slice(v, (h, w), |s| resize2d_nn(s, rec.target, (h, w)));
    Volume::new([d, h, w], rec.original_spacing, data, v.kind())
}

fn iso_dims(dims: [usize; 3], spacing: [f64; 3]) -> Result<[usize; 3]> {
    let mut out = [0; 3];
    for k in 0..3 {
        out[k] = (dims[k] as f64 * spacing[k] / ISO_SPACING).round() as usize;
    }
    if out.contains(&0) {
        return Err(Error::geometry(format!(
            "isotropic resample of {dims:?} at {spacing:?} mm gives degenerate dims {out:?}"
        )));
    }
    Ok(out)
}

pub fn unify_resize3d(v: &Volume, target: (usize, usize)) -> Result<(Volume, GeometryRecord)> {
    check_target(target)?;
    let iso = iso_dims(v.dims(), v.spacing())?;
    let iso_data = match v.kind() {
        VolumeKind::Mask => resize3d_nn(v.data(), v.dims(), iso),
        VolumeKind::Intensity => resize3d_trilinear(v.data(), v.dims(), iso),
    };
    let iso_vol = Volume::new(iso, [ISO_SPACING; 3], iso_data, v.kind())?;
    let (out, _) = unify_resize2d(&iso_vol, target)?;
    let rec = GeometryRecord {
        method: UniformMethod::Resize3d,
        original_dims: v.dims(),
        original_spacing: v.spacing(),
        target,
        offsets: [0, 0],
        iso_dims: Some(iso),
    };
    Ok((out, rec))
}

/// Nearest neighbour through both stages, whatever the volume kind.
pub fn reconstruct_resize3d(v: &Volume, rec: &GeometryRecord) -> Result<Volume> {
    check_unified(v, rec, UniformMethod::Resize3d)?;
    let iso = rec
        .iso_dims
        .ok_or_else(|| Error::geometry("3D resize record without isotropic dims"))?;
    let iso_data = per_slice(v, (iso[1], iso[2]), |s| {
        resize2d_nn(s, rec.target, (iso[1], iso[2]))
    });
    let data = resize3d_nn(&iso_data, iso, rec.original_dims);
    Volume::new(rec.original_dims, rec.original_spacing, data, v.kind())
}

fn check_unified(v: &Volume, rec: &GeometryRecord, method: UniformMethod) -> Result<()> {
    if rec.method != method {
        return Err(Error::geometry(format!(
            "record was made by {}, not {method}",
            rec.method
        )));
    }
    if v.dims() != rec.unified_dims() {
        return Err(Error::shape(format!(
            "{method} reconstruction expects dims {:?}, got {:?}",
            rec.unified_dims(),
            v.dims()
        )));
    }
    Ok(())
}

pub fn unify(
    v: &Volume,
    method: UniformMethod,
    target: (usize, usize),
) -> Result<(Volume, GeometryRecord)> {
    match method {
        UniformMethod::PadCut => unify_pad_cut(v, target),
        UniformMethod::Resize2d => unify_resize2d(v, target),
        UniformMethod::Resize3d => unify_resize3d(v, target),
    }
}

pub fn reconstruct(v: &Volume, rec: &GeometryRecord) -> Result<Volume> {
    match rec.method {
        UniformMethod::PadCut => reconstruct_pad_cut(v, rec),
        UniformMethod::Resize2d => reconstruct_resize2d(v, rec),
        UniformMethod::Resize3d => reconstruct_resize3d(v, rec),
    }
}
