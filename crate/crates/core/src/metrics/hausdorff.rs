//! Symmetric Hausdorff distance between mask boundaries.
//!
//! A boundary voxel is a foreground voxel with at least one 6-neighbour that
//! is background or outside the volume. Distances are Euclidean in mm:
//! `sqrt((dz·sz)² + (dy·sy)² + (dx·sx)²)` on integer index offsets, and the
//! nearest-neighbour search is an exact k-d tree over the same expression, so
//! results are identical to an all-pairs scan.

use crate::error::{Error, Result};
use crate::preprocess::Volume;

/// Maximum (exact Hausdorff) or 95th percentile of directed distances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HausdorffMode {
    #[default]
    Max,
    Percentile95,
}

impl std::fmt::Display for HausdorffMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HausdorffMode::Max => "max",
            HausdorffMode::Percentile95 => "p95",
        })
    }
}

impl std::str::FromStr for HausdorffMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(HausdorffMode::Max),
            "p95" => Ok(HausdorffMode::Percentile95),
            _ => Err(Error::config(format!(
                "hd_mode must be max or p95, got {s:?}"
            ))),
        }
    }
}

pub type Voxel = [i32; 3];

/// Boundary voxels of a mask in row-major order.
pub fn boundary_voxels(m: &Volume) -> Vec<Voxel> {
    let [d, h, w] = m.dims();
    let fg = |z: isize, y: isize, x: isize| {
        z >= 0
            && y >= 0
            && x >= 0
            && (z as usize) < d
            && (y as usize) < h
            && (x as usize) < w
            && m.get(z as usize, y as usize, x as usize) != 0.0
    };
    let mut out = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if m.get(z, y, x) == 0.0 {
                    continue;
                }
                let (zi, yi, xi) = (z as isize, y as isize, x as isize);
                let interior = fg(zi - 1, yi, xi)
                    && fg(zi + 1, yi, xi)
                    && fg(zi, yi - 1, xi)
                    && fg(zi, yi + 1, xi)
                    && fg(zi, yi, xi - 1)
                    && fg(zi, yi, xi + 1);
                if !interior {
                    out.push([z as i32, y as i32, x as i32]);
                }
            }
        }
    }
    out
}

/// Squared physical distance between two voxels.
#[inline]
pub fn dist2(a: Voxel, b: Voxel, spacing: [f64; 3]) -> f64 {
    let dz = (a[0] - b[0]) as f64 * spacing[0];
    let dy = (a[1] - b[1]) as f64 * spacing[1];
    let dx = (a[2] - b[2]) as f64 * spacing[2];
    dz * dz + dy * dy + dx * dx
}

/// Static 3-d tree stored as an implicit balanced array.
struct KdTree {
    points: Vec<Voxel>,
    spacing: [f64; 3],
}

impl KdTree {
    fn build(mut points: Vec<Voxel>, spacing: [f64; 3]) -> Self {
        fn rec(p: &mut [Voxel], depth: usize) {
            if p.len() <= 1 {
                return;
            }
            let axis = depth % 3;
            let mid = p.len() / 2;
            p.select_nth_unstable_by_key(mid, |v| v[axis]);
            let (left, right) = p.split_at_mut(mid);
            rec(left, depth + 1);
            rec(&mut right[1..], depth + 1);
        }
        rec(&mut points, 0);
        KdTree { points, spacing }
    }

    /// Squared distance from `q` to its nearest point.
    fn nearest2(&self, q: Voxel) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.points, 0, q, &mut best);
        best
    }

    fn search(&self, p: &[Voxel], depth: usize, q: Voxel, best: &mut f64) {
        if p.is_empty() {
            return;
        }
        let mid = p.len() / 2;
        let axis = depth % 3;
        let d = dist2(p[mid], q, self.spacing);
        if d < *best {
            *best = d;
        }
        let diff = q[axis] - p[mid][axis];
        let (near, far) = if diff < 0 {
            (&p[..mid], &p[mid + 1..])
        } else {
            (&p[mid + 1..], &p[..mid])
        };
        self.search(near, depth + 1, q, best);
        // Any point across the split plane is at least this far along `axis`;
        // adding the other (non-negative) terms can only increase it.
        let plane = diff as f64 * self.spacing[axis];
        if plane * plane < *best {
            self.search(far, depth + 1, q, best);
        }
    }
}

/// Squared distances from each of `from` to the nearest of `to`.
fn directed2(from: &[Voxel], to: Vec<Voxel>, spacing: [f64; 3]) -> Vec<f64> {
    let tree = KdTree::build(to, spacing);
    from.iter().map(|&q| tree.nearest2(q)).collect()
}

/// 95th percentile by nearest rank.
fn percentile95(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Symmetric Hausdorff distance in mm between the boundaries of `a` and `b`.
///
/// `Percentile95` pools the directed distances of both directions and takes
/// their 95th percentile.
pub fn hausdorff(a: &Volume, b: &Volume, mode: HausdorffMode) -> Result<f64> {
    a.require_same_dims(b, "hausdorff")?;
    if a.spacing() != b.spacing() {
        return Err(Error::shape(format!(
            "hausdorff: spacing {:?} vs {:?}",
            a.spacing(),
            b.spacing()
        )));
    }
    hausdorff_with_spacing(a, b, a.spacing(), mode)
}

/// Like [`hausdorff`] but measures with `spacing`, ignoring the volumes' own.
pub fn hausdorff_with_spacing(
    a: &Volume,
    b: &Volume,
    spacing: [f64; 3],
    mode: HausdorffMode,
) -> Result<f64> {
    a.require_same_dims(b, "hausdorff")?;
    let (ba, bb) = (boundary_voxels(a), boundary_voxels(b));
    if ba.is_empty() || bb.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "hausdorff distance needs two nonempty masks ({} and {} boundary voxels)",
            ba.len(),
            bb.len()
        )));
    }
    let mut ab = directed2(&ba, bb.clone(), spacing);
    let ba_d = directed2(&bb, ba, spacing);
    let d2 = match mode {
        HausdorffMode::Max => ab.iter().chain(&ba_d).copied().fold(0.0, f64::max),
        HausdorffMode::Percentile95 => {
            ab.extend(ba_d);
            percentile95(ab)
        }
    };
    Ok(d2.sqrt())
}
