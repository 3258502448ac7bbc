//! Volumes and everything that happens to them before and after the network:
//! MetaImage I/O, CLAHE, Gaussian normalization, the three uniform-size
//! methods with their inverse reconstruction, augmentation, and synthetic
//! phantoms.

mod augment;
mod clahe;
mod mhd;
mod normalize;
mod phantom;
mod resample;
mod uniform;

pub use augment::{augment, AugmentSpec, Transform2d};
pub use clahe::{clahe, ClaheConfig};
pub use mhd::{load_mhd, save_mhd, ElementType};
pub use normalize::gaussian_normalize;
pub use phantom::{clinical_geometries, make_phantom, PhantomGeometry, PhantomShape, PhantomSpec};
pub use resample::{nn_index, resize2d_nn, resize3d_nn, resize3d_trilinear};
pub use uniform::{
    reconstruct, reconstruct_pad_cut, reconstruct_resize2d, reconstruct_resize3d, unify,
    unify_pad_cut, unify_resize2d, unify_resize3d, GeometryRecord, UniformMethod, ISO_SPACING,
};

use crate::error::{Error, Result};

/// Whether a volume holds intensities or a binary mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VolumeKind {
    Intensity,
    Mask,
}

/// A 3D scalar volume, row-major `(depth, height, width)`, with voxel spacing
/// `(sz, sy, sx)` in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f32>,
    kind: VolumeKind,
}

impl Volume {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        data: Vec<f32>,
        kind: VolumeKind,
    ) -> Result<Self> {
        let len = dims.iter().product::<usize>();
        if dims.contains(&0) {
            return Err(Error::shape(format!(
                "volume dimensions must be >= 1, got {dims:?}"
            )));
        }
        if data.len() != len {
            return Err(Error::shape(format!(
                "volume data has {} values, dims {dims:?} need {len}",
                data.len()
            )));
        }
        if !spacing.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::geometry(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if kind == VolumeKind::Mask {
            if let Some(i) = data.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::contract(format!(
                    "mask value {} at index {i} is not binary",
                    data[i]
                )));
            }
        }
        Ok(Volume {
            dims,
            spacing,
            data,
            kind,
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], kind: VolumeKind) -> Result<Self> {
        Self::new(dims, spacing, vec![0.0; dims.iter().product()], kind)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn depth(&self) -> usize {
        self.dims[0]
    }

    /// `(height, width)` of one axial slice.
    pub fn slice_dims(&self) -> (usize, usize) {
        (self.dims[1], self.dims[2])
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.dims[1] * self.dims[2];
        &self.data[z * n..(z + 1) * n]
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dims[1] * self.dims[2])
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    /// Number of nonzero voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Same data reinterpreted; masks must be binary.
    pub fn with_kind(self, kind: VolumeKind) -> Result<Self> {
        Volume::new(self.dims, self.spacing, self.data, kind)
    }

    /// Rebuilds a volume from equally sized axial slices.
    pub fn from_slices(
        slices: &[Vec<f32>],
        hw: (usize, usize),
        spacing: [f64; 3],
        kind: VolumeKind,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(slices.len() * hw.0 * hw.1);
        for (z, s) in slices.iter().enumerate() {
            if s.len() != hw.0 * hw.1 {
                return Err(Error::shape(format!(
                    "slice {z} has {} values, expected {}",
                    s.len(),
                    hw.0 * hw.1
                )));
            }
            data.extend_from_slice(s);
        }
        Volume::new([slices.len(), hw.0, hw.1], spacing, data, kind)
    }

    pub(crate) fn require_same_dims(&self, other: &Volume, what: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "{what}: dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}
