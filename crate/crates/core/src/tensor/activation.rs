use super::{Scalar, Tensor4};
use crate::error::Result;

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `grad_out` where `x > 0`. The subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    x.require_same_shape(grad_out, "relu_backward")?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::from_vec(x.shape(), data)
}

pub fn sigmoid<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| {
        // Evaluate on the side that cannot overflow.
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

/// Backward of [`sigmoid`] given its *output* `y`: `grad · y · (1 - y)`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    y.require_same_shape(grad_out, "sigmoid_backward")?;
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&p, &g)| g * p * (T::one() - p))
        .collect();
    Tensor4::from_vec(y.shape(), data)
}
