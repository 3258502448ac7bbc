//! Same-size 3×3 convolution (stride 1, zero padding 1) lowered to im2col + GEMM.
//!
//! Each batch item is processed in horizontal bands of output rows so the
//! column buffer stays bounded regardless of image size.

use rayon::prelude::*;

use super::{Scalar, Shape4, Tensor4};
use crate::error::{Error, Result};

/// Taps per input channel.
const TAPS: usize = 9;
/// Upper bound on output pixels lowered into one column buffer.
const BAND_PIXELS: usize = 16 * 1024;

/// Borrowed weights of a 3×3 convolution layer.
///
/// `weight` is laid out `(out_channels, in_channels, 3, 3)`; `bias` has one
/// entry per output channel. Gradients live wherever the caller keeps them
/// (see [`ConvGrads::accumulate_into`]).
#[derive(Clone, Copy, Debug)]
pub struct ConvParams<'a, T> {
    pub weight: &'a [T],
    pub bias: &'a [T],
    pub in_channels: usize,
    pub out_channels: usize,
}

impl<'a, T: Scalar> ConvParams<'a, T> {
    pub fn new(
        weight: &'a [T],
        bias: &'a [T],
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::shape(
                "convolution needs at least one input and output channel",
            ));
        }
        if weight.len() != out_channels * in_channels * TAPS {
            return Err(Error::shape(format!(
                "conv weight has {} elements, expected ({out_channels}, {in_channels}, 3, 3)",
                weight.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::shape(format!(
                "conv bias has {} elements, expected {out_channels}",
                bias.len()
            )));
        }
        Ok(ConvParams {
            weight,
            bias,
            in_channels,
            out_channels,
        })
    }

    fn check_input(&self, x: Shape4) -> Result<()> {
        if x.c != self.in_channels {
            return Err(Error::shape(format!(
                "conv2d channel mismatch: input {x} vs weight ({}, {}, 3, 3)",
                self.out_channels, self.in_channels
            )));
        }
        Ok(())
    }

    fn output_shape(&self, x: Shape4) -> Shape4 {
        Shape4::new(x.n, self.out_channels, x.h, x.w)
    }
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrads<T> {
    /// Adds the parameter gradients into the caller's accumulators.
    pub fn accumulate_into(&self, weight: &mut [T], bias: &mut [T]) {
        add_assign(weight, &self.weight);
        add_assign(bias, &self.bias);
    }
}

pub(crate) fn add_assign<T: Scalar>(acc: &mut [T], v: &[T]) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = *a + b;
    }
}

fn band_rows(w: usize) -> usize {
    (BAND_PIXELS / w).max(1)
}

/// Lowers output rows `r0..r1` of one `(c, h, w)` item into a `(c*9) × ((r1-r0)*w)` matrix.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, r0: usize, r1: usize, cols: &mut [T]) {
    let p = (r1 - r0) * w;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for di in 0..3 {
            for dj in 0..3 {
                let row = &mut cols[(ci * TAPS + di * 3 + dj) * p..][..p];
                for r in r0..r1 {
                    let seg = &mut row[(r - r0) * w..][..w];
                    let src_r = r + di;
                    if src_r == 0 || src_r > h {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(src_r - 1) * w..][..w];
                    match dj {
                        0 => {
                            seg[0] = T::zero();
                            seg[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => seg.copy_from_slice(src),
                        _ => {
                            seg[..w - 1].copy_from_slice(&src[1..]);
                            seg[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds a column matrix back onto an item.
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, r0: usize, r1: usize, x: &mut [T]) {
    let p = (r1 - r0) * w;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for di in 0..3 {
            for dj in 0..3 {
                let row = &cols[(ci * TAPS + di * 3 + dj) * p..][..p];
                for r in r0..r1 {
                    let src_r = r + di;
                    if src_r == 0 || src_r > h {
                        continue;
                    }
                    let seg = &row[(r - r0) * w..][..w];
                    let dst = &mut plane[(src_r - 1) * w..][..w];
                    match dj {
                        0 => add_assign(&mut dst[..w - 1], &seg[1..]),
                        1 => add_assign(dst, seg),
                        _ => add_assign(&mut dst[1..], &seg[..w - 1]),
                    }
                }
            }
        }
    }
}

/// Same-size 3×3 cross-correlation: `out[n,o,i,j] = bias[o] + Σ x[n,c,i+di-1,j+dj-1]·w[o,c,di,dj]`.
pub fn conv2d_forward<T: Scalar>(x: &Tensor4<T>, p: &ConvParams<'_, T>) -> Result<Tensor4<T>> {
    let xs = x.shape();
    p.check_input(xs)?;
    let os = p.output_shape(xs);
    let (c, h, w, hw) = (xs.c, xs.h, xs.w, xs.plane());
    let k = c * TAPS;
    let rows = band_rows(w);
    let mut out = Tensor4::zeros(os);
    out.data_mut()
        .par_chunks_mut(os.item())
        .zip(x.data().par_chunks(xs.item()))
        .for_each(|(out_item, x_item)| {
            let mut cols = vec![T::zero(); k * rows.min(h) * w];
            let mut r0 = 0;
            while r0 < h {
                let r1 = (r0 + rows).min(h);
                let np = (r1 - r0) * w;
                im2col(x_item, c, h, w, r0, r1, &mut cols);
                T::gemm(
                    p.out_channels,
                    k,
                    np,
                    (p.weight, k as isize, 1),
                    (&cols, np as isize, 1),
                    T::zero(),
                    (&mut out_item[r0 * w..], hw as isize, 1),
                );
                r0 = r1;
            }
            for (o, plane) in out_item.chunks_mut(hw).enumerate() {
                let b = p.bias[o];
                plane.iter_mut().for_each(|v| *v = *v + b);
            }
        });
    Ok(out)
}

/// Reverse-mode rule for [`conv2d_forward`]. Returns gradients with respect to
/// the input, the weight and the bias, each the exact transpose of the forward
/// linear map applied to `grad_out`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    p: &ConvParams<'_, T>,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    p.check_input(xs)?;
    let os = p.output_shape(xs);
    if grad_out.shape() != os {
        return Err(Error::shape(format!(
            "conv2d_backward: grad_out {} does not match output shape {os}",
            grad_out.shape()
        )));
    }
    let (c, h, w, hw) = (xs.c, xs.h, xs.w, xs.plane());
    let k = c * TAPS;
    let cout = p.out_channels;
    let rows = band_rows(w);
    let mut grad_input = Tensor4::zeros(xs);

    // Per-item weight/bias partials, reduced below in item order.
    let partials: Vec<(Vec<T>, Vec<T>)> = grad_input
        .data_mut()
        .par_chunks_mut(xs.item())
        .zip(x.data().par_chunks(xs.item()))
        .zip(grad_out.data().par_chunks(os.item()))
        .map(|((gx_item, x_item), g_item)| {
            let mut gw = vec![T::zero(); cout * k];
            let mut cols = vec![T::zero(); k * rows.min(h) * w];
            let mut gcols = vec![T::zero(); k * rows.min(h) * w];
            let mut r0 = 0;
            while r0 < h {
                let r1 = (r0 + rows).min(h);
                let np = (r1 - r0) * w;
                im2col(x_item, c, h, w, r0, r1, &mut cols);
                // dW += G · colsᵀ
                T::gemm(
                    cout,
                    np,
                    k,
                    (&g_item[r0 * w..], hw as isize, 1),
                    (&cols, 1, np as isize),
                    T::one(),
                    (&mut gw, k as isize, 1),
                );
                // dcols = Wᵀ · G
                T::gemm(
                    k,
                    cout,
                    np,
                    (p.weight, 1, k as isize),
                    (&g_item[r0 * w..], hw as isize, 1),
                    T::zero(),
                    (&mut gcols, np as isize, 1),
                );
                col2im(&gcols, c, h, w, r0, r1, gx_item);
                r0 = r1;
            }
            let gb = g_item
                .chunks(hw)
                .map(|plane| plane.iter().copied().sum())
                .collect();
            (gw, gb)
        })
        .collect();

    let mut weight = vec![T::zero(); cout * k];
    let mut bias = vec![T::zero(); cout];
    for (gw, gb) in &partials {
        add_assign(&mut weight, gw);
        add_assign(&mut bias, gb);
    }
    Ok(ConvGrads {
        input: grad_input,
        weight,
        bias,
    })
}
