//! Random rotation, horizontal flip and zoom applied identically to a slice
//! and its mask.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentSpec {
    /// Rotation is drawn uniformly from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
    /// Flip horizontally with probability ½.
    pub flip: bool,
    pub zoom: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            rotation_deg: 15.0,
            flip: true,
            zoom: (0.9, 1.1),
            seed: 0,
        }
    }
}

impl AugmentSpec {
    /// Never changes anything.
    pub fn identity() -> Self {
        AugmentSpec {
            rotation_deg: 0.0,
            flip: false,
            zoom: (1.0, 1.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.zoom;
        if !(a > 0.0 && b >= a && b.is_finite()) {
            return Err(Error::config(format!(
                "zoom range {:?} must be positive and ordered",
                self.zoom
            )));
        }
        if !(self.rotation_deg >= 0.0 && self.rotation_deg <= 180.0) {
            return Err(Error::config(format!(
                "rotation {} must lie in [0, 180]",
                self.rotation_deg
            )));
        }
        Ok(())
    }
}

/// One concrete transform: rotate by `angle_deg` and scale by `zoom` about the
/// slice centre, then optionally mirror left-right.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform2d {
    pub angle_deg: f64,
    pub zoom: f64,
    pub flip: bool,
}

impl Transform2d {
    pub const IDENTITY: Transform2d = Transform2d {
        angle_deg: 0.0,
        zoom: 1.0,
        flip: false,
    };

    pub fn sample(spec: &AugmentSpec, rng: &mut impl Rng) -> Self {
        let angle_deg = if spec.rotation_deg > 0.0 {
            rng.gen_range(-spec.rotation_deg..=spec.rotation_deg)
        } else {
            0.0
        };
        let zoom = if spec.zoom.1 > spec.zoom.0 {
            rng.gen_range(spec.zoom.0..=spec.zoom.1)
        } else {
            spec.zoom.0
        };
        let flip = spec.flip && rng.gen_bool(0.5);
        Transform2d {
            angle_deg,
            zoom,
            flip,
        }
    }

    fn is_identity(&self) -> bool {
        self.angle_deg == 0.0 && self.zoom == 1.0 && !self.flip
    }

    /// Resamples `src` (`h × w`). Bilinear or nearest neighbour, zero outside.
    pub fn apply(&self, src: &[f32], h: usize, w: usize, bilinear: bool) -> Vec<f32> {
        if self.is_identity() {
            return src.to_vec();
        }
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let (sin, cos) = self.angle_deg.to_radians().sin_cos();
        let at = |y: isize, x: isize| -> f32 {
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                0.0
            } else {
                src[y as usize * w + x as usize]
            }
        };
        let mut out = vec![0.0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                let qx = if self.flip {
                    (w - 1 - x) as f64
                } else {
                    x as f64
                };
                let (dy, dx) = ((y as f64 - cy) / self.zoom, (qx - cx) / self.zoom);
                // Inverse rotation of the output offset.
                let py = cy + cos * dy - sin * dx;
                let px = cx + sin * dy + cos * dx;
                out[y * w + x] = if bilinear {
                    let (y0, x0) = (py.floor(), px.floor());
                    let (ty, tx) = ((py - y0) as f32, (px - x0) as f32);
                    let (y0, x0) = (y0 as isize, x0 as isize);
                    let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
                    let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
                    top * (1.0 - ty) + bottom * ty
                } else {
                    at(py.round() as isize, px.round() as isize)
                };
            }
        }
        out
    }
}

/// Draws one transform from `spec.seed` and applies it to both inputs:
/// bilinear for the slice, nearest neighbour for the mask.
pub fn augment(
    slice: &[f32],
    mask: &[f32],
    h: usize,
    w: usize,
    spec: &AugmentSpec,
) -> Result<(Vec<f32>, Vec<f32>)> {
    spec.validate()?;
    if slice.len() != h * w || mask.len() != h * w {
        return Err(Error::shape(format!(
            "augment: slice {} and mask {} values for a {h}x{w} grid",
            slice.len(),
            mask.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t = Transform2d::sample(spec, &mut rng);
    Ok((t.apply(slice, h, w, true), t.apply(mask, h, w, false)))
}
