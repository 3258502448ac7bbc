//! Dense rank-4 tensors and the forward/backward kernels every network layer
//! is built from.
//!
//! Layout is always row-major `(batch, channels, height, width)`. Kernels are
//! plain functions: forward passes return their output plus whatever cache the
//! backward pass needs, and backward passes return input gradients while
//! accumulating parameter gradients into caller-owned slices. Nothing builds a
//! graph; layers are composed explicitly by the model.

mod activation;
mod batchnorm;
mod conv;
mod dump;
mod gradcheck;
mod pool;
mod reshape;
mod scalar;

use std::fmt;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, update_running_stats, BatchNormCache, BatchNormGrads,
    BatchNormParams, Mode, DEFAULT_EPS as DEFAULT_BN_EPS, DEFAULT_MOMENTUM as DEFAULT_BN_MOMENTUM,
};
pub(crate) use conv::add_assign;
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams};
pub use dump::{read_dump, write_dump};
pub use gradcheck::{
    grad_check, grad_check_coords, grad_check_step, relative_error, GradCheckReport, FD_STEP,
    REL_FLOOR,
};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolCache};
pub use reshape::{
    center_crop, center_crop_backward, concat_channels, split_channels, upsample2x_nearest,
    upsample2x_nearest_backward,
};
pub use scalar::{Precision, Scalar};

use crate::error::{Error, Result};

/// Dimensions of a [`Tensor4`]: batch, channels, height, width.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape4 { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one `(h, w)` plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Elements in one batch item.
    pub const fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub fn to_array(self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Debug for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<[usize; 4]> for Shape4 {
    fn from(a: [usize; 4]) -> Self {
        Shape4::new(a[0], a[1], a[2], a[3])
    }
}

/// Dense rank-4 array with an optional gradient buffer of the same length.
#[derive(Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: Shape4,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: impl Into<Shape4>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Shape4>, value: T) -> Self {
        let shape = shape.into();
        Tensor4 {
            shape,
            data: vec![value; shape.len()],
            grad: None,
        }
    }

    /// Wraps `data`, checking that its length matches `shape` and that every
    /// dimension is at least one.
    pub fn from_vec(shape: impl Into<Shape4>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.to_array().contains(&0) {
            return Err(Error::shape(format!(
                "tensor dimensions must be >= 1, got {shape}"
            )));
        }
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.len()
            )));
        }
        Ok(Tensor4 {
            shape,
            data,
            grad: None,
        })
    }

    pub fn from_fn(
        shape: impl Into<Shape4>,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor4 {
            shape,
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.offset(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: T) {
        let i = self.shape.offset(n, c, h, w);
        self.data[i] = value;
    }

    /// Contiguous data of batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let len = self.shape.item();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.shape.item();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Inner product of the flattened data.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.require_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterprets the same data under a new shape with equal element count.
    pub fn reshape(self, shape: impl Into<Shape4>) -> Result<Self> {
        let shape = shape.into();
        Tensor4::from_vec(shape, self.data)
    }

    /// Converts every element to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
            grad: None,
        }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let len = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); len])
    }

    /// Adds `g` into the gradient buffer.
    pub fn accumulate_grad(&mut self, g: &Tensor4<T>) -> Result<()> {
        self.require_same_shape(g, "accumulate_grad")?;
        for (acc, &v) in self.grad_mut().iter_mut().zip(&g.data) {
            *acc = *acc + v;
        }
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn require_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{op}: shapes differ: {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

impl<T> fmt::Debug for Tensor4<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor4")
            .field("shape", &self.shape)
            .field("has_grad", &self.grad.is_some())
            .finish_non_exhaustive()
    }
}
