//! Synthetic prostate-like phantoms on clinical scan geometries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::resample::resize3d_trilinear;
use super::{Volume, VolumeKind};
use crate::error::{Error, Result};

/// A scan geometry: case id, `(d, h, w)` dims and `(sz, sy, sx)` spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomGeometry {
    pub id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

/// The five held-out case geometries of the public prostate MR challenge
/// data this engine targets.
pub fn clinical_geometries() -> Vec<PhantomGeometry> {
    let g = |id: &str, dims: [usize; 3], spacing: [f64; 3]| PhantomGeometry {
        id: id.to_string(),
        dims,
        spacing,
    };
    vec![
        g("05", [42, 512, 512], [2.20, 0.27, 0.27]),
        g("15", [20, 320, 320], [3.6, 0.63, 0.63]),
        g("25", [18, 256, 256], [4.0, 0.75, 0.75]),
        g("35", [23, 256, 256], [3.3, 0.7, 0.7]),
        g("45", [24, 320, 320], [3.6, 0.63, 0.63]),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhantomShape {
    /// Ball of the given radius in voxel index units.
    Sphere { radius: f64 },
    /// Ellipsoid with `(z, y, x)` semi-axes in millimetres.
    Ellipsoid { semi_axes_mm: [f64; 3] },
}

impl Default for PhantomShape {
    fn default() -> Self {
        PhantomShape::Ellipsoid {
            semi_axes_mm: [20.0, 18.0, 25.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub shape: PhantomShape,
    pub seed: u64,
    pub background: f32,
    pub foreground: f32,
    /// Amplitude of the smooth noise field.
    pub noise: f32,
}

impl PhantomSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], shape: PhantomShape, seed: u64) -> Self {
        PhantomSpec {
            dims,
            spacing,
            shape,
            seed,
            background: 100.0,
            foreground: 180.0,
            noise: 20.0,
        }
    }

    pub fn from_geometry(g: &PhantomGeometry, shape: PhantomShape, seed: u64) -> Self {
        Self::new(g.dims, g.spacing, shape, seed)
    }

    /// Centre voxel, `floor(dim / 2)` per axis.
    pub fn center(&self) -> [usize; 3] {
        self.dims.map(|d| d / 2)
    }

    /// Half-extent of the solid along each axis in voxels.
    fn extent(&self) -> Result<[f64; 3]> {
        match self.shape {
            PhantomShape::Sphere { radius } => {
                if !(radius >= 0.0) {
                    return Err(Error::geometry(format!(
                        "sphere radius {radius} must be >= 0"
                    )));
                }
                Ok([radius; 3])
            }
            PhantomShape::Ellipsoid { semi_axes_mm } => {
                if !semi_axes_mm.iter().all(|&a| a > 0.0) {
                    return Err(Error::geometry(format!(
                        "ellipsoid semi-axes {semi_axes_mm:?} must be positive"
                    )));
                }
                Ok([0, 1, 2].map(|k| semi_axes_mm[k] / self.spacing[k]))
            }
        }
    }

    /// Whether voxel `(z, y, x)` lies inside the solid.
    pub fn contains(&self, z: usize, y: usize, x: usize) -> bool {
        let c = self.center();
        let d = [
            z as f64 - c[0] as f64,
            y as f64 - c[1] as f64,
            x as f64 - c[2] as f64,
        ];
        match self.shape {
            PhantomShape::Sphere { radius } => {
                d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= radius * radius
            }
            PhantomShape::Ellipsoid { semi_axes_mm } => {
                (0..3)
                    .map(|k| (d[k] * self.spacing[k] / semi_axes_mm[k]).powi(2))
                    .sum::<f64>()
                    <= 1.0
            }
        }
    }
}

/// Builds an intensity volume and its binary mask.
///
/// The mask is the analytic solid centred at [`PhantomSpec::center`]. The
/// intensity is `background` outside, `foreground` inside, plus a smooth
/// noise field upsampled from a coarse seeded lattice.
pub fn make_phantom(spec: &PhantomSpec) -> Result<(Volume, Volume)> {
    if spec.dims.contains(&0) {
        return Err(Error::geometry(format!(
            "phantom dims {:?} must be positive",
            spec.dims
        )));
    }
    let extent = spec.extent()?;
    let c = spec.center();
    for k in 0..3 {
        if c[k] as f64 - extent[k] < 0.0 || c[k] as f64 + extent[k] > (spec.dims[k] - 1) as f64 {
            return Err(Error::geometry(format!(
                "phantom shape {:?} does not fit dims {:?} at spacing {:?}",
                spec.shape, spec.dims, spec.spacing
            )));
        }
    }
    let [d, h, w] = spec.dims;
    let mut mask = vec![0.0f32; d * h * w];
    // Only scan the bounding box.
    let lo = |k: usize| (c[k] as f64 - extent[k]).floor().max(0.0) as usize;
    let hi = |k: usize| ((c[k] as f64 + extent[k]).ceil() as usize).min(spec.dims[k] - 1);
    for z in lo(0)..=hi(0) {
        for y in lo(1)..=hi(1) {
            for x in lo(2)..=hi(2) {
                if spec.contains(z, y, x) {
                    mask[(z * h + y) * w + x] = 1.0;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let coarse = [
        d.div_ceil(4).max(2),
        h.div_ceil(16).max(2),
        w.div_ceil(16).max(2),
    ];
    let lattice: Vec<f32> = (0..coarse.iter().product::<usize>())
        .map(|_| rng.gen_range(-1.0f32..=1.0))
        .collect();
    let field = resize3d_trilinear(&lattice, coarse, spec.dims);
    let intensity: Vec<f32> = mask
        .iter()
        .zip(&field)
        .map(|(&m, &n)| {
            let base = if m > 0.0 {
                spec.foreground
            } else {
                spec.background
            };
            base + spec.noise * n
        })
        .collect();
    Ok((
        Volume::new(spec.dims, spec.spacing, intensity, VolumeKind::Intensity)?,
        Volume::new(spec.dims, spec.spacing, mask, VolumeKind::Mask)?,
    ))
}
