//! Soft Dice loss.
//!
//! For one item with prediction `z ∈ [0,1]^M` and binary mask `y`,
//! `L = 1 − (2·Σ z·y + s) / (Σ z + Σ y + s)`. The batch loss is the mean over
//! items. `z` stays soft during training; thresholding happens only at
//! prediction time.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiceConfig {
    /// Smoothing added to numerator and denominator.
    pub s: f64,
}

impl Default for DiceConfig {
    fn default() -> Self {
        DiceConfig { s: 1.0 }
    }
}

impl DiceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s >= 0.0) || !self.s.is_finite() {
            return Err(Error::config(format!(
                "dice smoothing must be finite and >= 0, got {}",
                self.s
            )));
        }
        Ok(())
    }
}

/// Loss per batch item and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct DiceLoss {
    pub per_item: Vec<f64>,
    pub mean: f64,
}

/// Sums accumulated in f64: `(Σ z·y, Σ z, Σ y)` per item.
fn sums<T: Scalar>(z: &Tensor4<T>, y: &Tensor4<T>) -> Result<Vec<(f64, f64, f64)>> {
    if z.shape() != y.shape() {
        return Err(Error::shape(format!(
            "dice: prediction {} and mask {} differ",
            z.shape(),
            y.shape()
        )));
    }
    let n = z.shape().n;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (mut zy, mut sz, mut sy) = (0.0, 0.0, 0.0);
        for (k, (&zv, &yv)) in z.item(i).iter().zip(y.item(i)).enumerate() {
            let (zv, yv) = (zv.as_f64(), yv.as_f64());
            if yv != 0.0 && yv != 1.0 {
                return Err(Error::contract(format!(
                    "dice: mask value {yv} at item {i}, index {k} is not binary"
                )));
            }
            if !(0.0..=1.0).contains(&zv) {
                return Err(Error::contract(format!(
                    "dice: prediction {zv} at item {i}, index {k} is outside [0, 1]"
                )));
            }
            zy += zv * yv;
            sz += zv;
            sy += yv;
        }
        out.push((zy, sz, sy));
    }
    Ok(out)
}

pub fn dice_loss<T: Scalar>(z: &Tensor4<T>, y: &Tensor4<T>, cfg: &DiceConfig) -> Result<DiceLoss> {
    cfg.validate()?;
    let s = cfg.s;
    let per_item: Vec<f64> = sums(z, y)?
        .into_iter()
        .map(|(zy, sz, sy)| {
            let d = sz + sy + s;
            // Both empty with s = 0: perfect agreement.
            if d == 0.0 {
                0.0
            } else {
                1.0 - (2.0 * zy + s) / d
            }
        })
        .collect();
    let mean = per_item.iter().sum::<f64>() / per_item.len() as f64;
    Ok(DiceLoss { per_item, mean })
}

/// Gradient of the batch-mean loss with respect to `z`.
pub fn dice_loss_backward<T: Scalar>(
    z: &Tensor4<T>,
    y: &Tensor4<T>,
    cfg: &DiceConfig,
) -> Result<Tensor4<T>> {
    cfg.validate()?;
    let s = cfg.s;
    let n = z.shape().n;
    let stats = sums(z, y)?;
    let mut g = Tensor4::zeros(z.shape());
    for (i, &(zy, sz, sy)) in stats.iter().enumerate() {
        let d = sz + sy + s;
        if d == 0.0 {
            return Err(Error::contract(format!(
                "dice gradient undefined for item {i}: empty prediction and mask with s = 0"
            )));
        }
        let num = 2.0 * zy + s;
        let scale = 1.0 / (n as f64 * d * d);
        for (gj, &yj) in g.item_mut(i).iter_mut().zip(y.item(i)) {
            *gj = T::lit(-(2.0 * yj.as_f64() * d - num) * scale);
        }
    }
    Ok(g)
}
