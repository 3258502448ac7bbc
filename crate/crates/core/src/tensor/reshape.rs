//! Channel concatenation, center cropping and nearest-neighbour upsampling,
//! each with its adjoint.

use super::{Scalar, Shape4, Tensor4};
use crate::error::{Error, Result};

/// Stacks `b`'s channels after `a`'s. Batch and spatial dimensions must agree.
pub fn concat_channels<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::shape(format!(
            "concat_channels: batch/spatial mismatch {sa} vs {sb}"
        )));
    }
    let os = Shape4::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(os.len());
    for n in 0..sa.n {
        data.extend_from_slice(a.item(n));
        data.extend_from_slice(b.item(n));
    }
    Tensor4::from_vec(os, data)
}

/// Inverse of [`concat_channels`]: the first `first` channels and the rest.
pub fn split_channels<T: Scalar>(x: &Tensor4<T>, first: usize) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let s = x.shape();
    if first == 0 || first >= s.c {
        return Err(Error::shape(format!(
            "split_channels: cannot split {} channels at {first}",
            s.c
        )));
    }
    let sa = Shape4::new(s.n, first, s.h, s.w);
    let sb = Shape4::new(s.n, s.c - first, s.h, s.w);
    let (mut da, mut db) = (Vec::with_capacity(sa.len()), Vec::with_capacity(sb.len()));
    for n in 0..s.n {
        let item = x.item(n);
        da.extend_from_slice(&item[..sa.item()]);
        db.extend_from_slice(&item[sa.item()..]);
    }
    Ok((Tensor4::from_vec(sa, da)?, Tensor4::from_vec(sb, db)?))
}

fn crop_offsets(h: usize, w: usize, h2: usize, w2: usize) -> (usize, usize) {
    ((h - h2) / 2, (w - w2) / 2)
}

/// Central `h2 × w2` window, offset `((h-h2)/2, (w-w2)/2)` rounded down.
pub fn center_crop<T: Scalar>(x: &Tensor4<T>, h2: usize, w2: usize) -> Result<Tensor4<T>> {
    let s = x.shape();
    if h2 == 0 || w2 == 0 || h2 > s.h || w2 > s.w {
        return Err(Error::shape(format!(
            "center_crop: target {h2}x{w2} does not fit in {s}"
        )));
    }
    let (oy, ox) = crop_offsets(s.h, s.w, h2, w2);
    Ok(Tensor4::from_fn([s.n, s.c, h2, w2], |n, c, i, j| {
        x.get(n, c, i + oy, j + ox)
    }))
}

/// Adjoint of [`center_crop`]: zero-pads `grad` back into a `src_h × src_w` frame.
pub fn center_crop_backward<T: Scalar>(
    grad: &Tensor4<T>,
    src_h: usize,
    src_w: usize,
) -> Result<Tensor4<T>> {
    let s = grad.shape();
    if s.h > src_h || s.w > src_w {
        return Err(Error::shape(format!(
            "center_crop_backward: {s} does not fit in {src_h}x{src_w}"
        )));
    }
    let (oy, ox) = crop_offsets(src_h, src_w, s.h, s.w);
    let mut out = Tensor4::zeros([s.n, s.c, src_h, src_w]);
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..s.h {
                for j in 0..s.w {
                    out.set(n, c, i + oy, j + ox, grad.get(n, c, i, j));
                }
            }
        }
    }
    Ok(out)
}

/// Replicates every cell into a 2×2 block.
pub fn upsample2x_nearest<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let s = x.shape();
    Tensor4::from_fn([s.n, s.c, 2 * s.h, 2 * s.w], |n, c, i, j| {
        x.get(n, c, i / 2, j / 2)
    })
}

/// Adjoint of [`upsample2x_nearest`]: sums each 2×2 block.
pub fn upsample2x_nearest_backward<T: Scalar>(grad: &Tensor4<T>) -> Result<Tensor4<T>> {
    let s = grad.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape(format!(
            "upsample2x_nearest_backward: gradient {s} has odd spatial dims"
        )));
    }
    Ok(Tensor4::from_fn(
        [s.n, s.c, s.h / 2, s.w / 2],
        |n, c, i, j| {
            grad.get(n, c, 2 * i, 2 * j)
                + grad.get(n, c, 2 * i, 2 * j + 1)
                + grad.get(n, c, 2 * i + 1, 2 * j)
                + grad.get(n, c, 2 * i + 1, 2 * j + 1)
        },
    ))
}
