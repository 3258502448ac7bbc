use super::{Scalar, Shape4, Tensor4};
use crate::error::{Error, Result};

/// Argmax bookkeeping from [`maxpool2x2_forward`].
#[derive(Clone, Debug)]
pub struct PoolCache {
    input_shape: Shape4,
    /// Flat input index of the winning cell, one per output element.
    argmax: Vec<usize>,
}

impl PoolCache {
    pub fn input_shape(&self) -> Shape4 {
        self.input_shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// 2×2 max pooling with stride 2. Ties go to the first cell in row-major
/// window order.
pub fn maxpool2x2_forward<T: Scalar>(x: &Tensor4<T>) -> Result<(Tensor4<T>, PoolCache)> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape(format!(
            "maxpool2x2 needs even height and width, got {s}"
        )));
    }
    let os = Shape4::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = Vec::with_capacity(os.len());
    let mut argmax = Vec::with_capacity(os.len());
    let data = x.data();
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..os.h {
                for j in 0..os.w {
                    let base = s.offset(n, c, 2 * i, 2 * j);
                    let cells = [base, base + 1, base + s.w, base + s.w + 1];
                    let mut best = cells[0];
                    for &cell in &cells[1..] {
                        if data[cell] > data[best] {
                            best = cell;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((
        Tensor4::from_vec(os, out)?,
        PoolCache {
            input_shape: s,
            argmax,
        },
    ))
}

/// Routes each output gradient to the input cell that won the forward max.
pub fn maxpool2x2_backward<T: Scalar>(
    cache: &PoolCache,
    grad_out: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let s = cache.input_shape;
    let os = Shape4::new(s.n, s.c, s.h / 2, s.w / 2);
    if grad_out.shape() != os {
        return Err(Error::shape(format!(
            "maxpool2x2_backward: grad_out {} does not match pooled shape {os}",
            grad_out.shape()
        )));
    }
    let mut gx = Tensor4::zeros(s);
    let gd = gx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        gd[idx] = gd[idx] + g;
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_max_and_routes_gradient() {
        let x = Tensor4::<f32>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, cache) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let g = maxpool2x2_backward(&cache, &Tensor4::full([1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ties_go_to_first_cell() {
        let x = Tensor4::<f64>::full([1, 2, 4, 4], 3.0);
        let (y, cache) = maxpool2x2_forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.0));
        let g = maxpool2x2_backward(&cache, &Tensor4::full(y.shape(), 1.0)).unwrap();
        for c in 0..2 {
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i % 2 == 0 && j % 2 == 0 { 1.0 } else { 0.0 };
                    assert_eq!(g.get(0, c, i, j), want);
                }
            }
        }
    }

    #[test]
    fn argmax_stays_in_its_window() {
        let x = Tensor4::<f64>::from_fn([2, 3, 6, 8], |n, c, h, w| {
            ((n * 31 + c * 17 + h * 7 + w * 3) % 11) as f64
        });
        let (_, cache) = maxpool2x2_forward(&x).unwrap();
        let s = x.shape();
        let mut k = 0;
        for n in 0..s.n {
            for c in 0..s.c {
                for i in 0..s.h / 2 {
                    for j in 0..s.w / 2 {
                        let idx = cache.argmax()[k];
                        let (hh, ww) = ((idx / s.w) % s.h, idx % s.w);
                        assert_eq!(idx / s.plane(), n * s.c + c);
                        assert_eq!((hh / 2, ww / 2), (i, j));
                        k += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn halves_default_input() {
        let x = Tensor4::<f32>::zeros([1, 1, 256, 256]);
        let (y, _) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 128, 128));
    }

    #[test]
    fn odd_dims_rejected() {
        assert!(maxpool2x2_forward(&Tensor4::<f32>::zeros([1, 1, 3, 4])).is_err());
    }
}
