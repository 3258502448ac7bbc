//! Per-channel batch normalization over `(n, h, w)`.
//!
//! The forward pass is pure: in training mode it normalizes with batch
//! statistics and reports them in the cache, and the caller folds them into
//! the running estimates with [`update_running_stats`]. That keeps repeated
//! evaluations (finite differences, replays) free of hidden state changes.

use super::{Scalar, Shape4, Tensor4};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Normalize with batch statistics and keep caches for backward.
    #[default]
    Train,
    /// Normalize with running statistics.
    Eval,
}

/// Default exponential-moving-average momentum: `running = m·running + (1-m)·batch`.
pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPS: f64 = 1e-5;

/// Borrowed parameters and running statistics of one batch-norm layer.
#[derive(Clone, Copy, Debug)]
pub struct BatchNormParams<'a, T> {
    pub gamma: &'a [T],
    pub beta: &'a [T],
    pub running_mean: &'a [T],
    pub running_var: &'a [T],
    pub eps: T,
    pub momentum: T,
}

impl<'a, T: Scalar> BatchNormParams<'a, T> {
    pub fn new(gamma: &'a [T], beta: &'a [T], running_mean: &'a [T], running_var: &'a [T]) -> Self {
        BatchNormParams {
            gamma,
            beta,
            running_mean,
            running_var,
            eps: T::lit(DEFAULT_EPS),
            momentum: T::lit(DEFAULT_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self, x: Shape4) -> Result<()> {
        let c = self.channels();
        if self.beta.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(Error::shape(format!(
                "batchnorm parameter lengths disagree: gamma {c}, beta {}, mean {}, var {}",
                self.beta.len(),
                self.running_mean.len(),
                self.running_var.len()
            )));
        }
        if x.c != c {
            return Err(Error::shape(format!(
                "batchnorm channel mismatch: input {x} vs {c} parameters"
            )));
        }
        if !(self.eps > T::zero()) {
            return Err(Error::config("batchnorm eps must be positive"));
        }
        Ok(())
    }
}

/// State saved by [`batchnorm_forward`].
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    mode: Mode,
    xhat: Option<Tensor4<T>>,
    inv_std: Vec<T>,
    batch_mean: Vec<T>,
    /// Biased (population) variance of the batch.
    batch_var: Vec<T>,
    count: usize,
}

impl<T: Scalar> BatchNormCache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_mean(&self) -> &[T] {
        &self.batch_mean
    }

    pub fn batch_var(&self) -> &[T] {
        &self.batch_var
    }
}

/// Gradients produced by [`batchnorm_backward`].
#[derive(Clone, Debug)]
pub struct BatchNormGrads<T> {
    pub input: Tensor4<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

fn channel_values<T: Scalar>(x: &Tensor4<T>, c: usize) -> impl Iterator<Item = &T> {
    let s = x.shape();
    (0..s.n).flat_map(move |n| {
        let start = s.offset(n, c, 0, 0);
        x.data()[start..start + s.plane()].iter()
    })
}

fn channel_values_mut<T: Scalar>(
    data: &mut [T],
    s: Shape4,
    c: usize,
) -> impl Iterator<Item = &mut T> {
    data.chunks_mut(s.plane())
        .enumerate()
        .filter(move |(k, _)| k % s.c == c)
        .flat_map(|(_, plane)| plane.iter_mut())
}

pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor4<T>,
    p: &BatchNormParams<'_, T>,
    mode: Mode,
) -> Result<(Tensor4<T>, BatchNormCache<T>)> {
    let s = x.shape();
    p.validate(s)?;
    let channels = s.c;
    let count = s.n * s.plane();
    let mut out = x.clone();
    let mut cache = BatchNormCache {
        mode,
        xhat: None,
        inv_std: Vec::with_capacity(channels),
        batch_mean: Vec::with_capacity(channels),
        batch_var: Vec::with_capacity(channels),
        count,
    };
    let mut xhat = match mode {
        Mode::Train => Some(x.clone()),
        Mode::Eval => None,
    };
    let eps = p.eps.as_f64();
    for c in 0..channels {
        let (mean, var) = match mode {
            Mode::Train => {
                let mean = channel_values(x, c).map(|v| v.as_f64()).sum::<f64>() / count as f64;
                let var = channel_values(x, c)
                    .map(|v| {
                        let d = v.as_f64() - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / count as f64;
                cache.batch_mean.push(T::lit(mean));
                cache.batch_var.push(T::lit(var));
                (mean, var)
            }
            Mode::Eval => (p.running_mean[c].as_f64(), p.running_var[c].as_f64()),
        };
        let inv_std = 1.0 / (var + eps).sqrt();
        cache.inv_std.push(T::lit(inv_std));
        let (mean_t, inv_t, g, b) = (T::lit(mean), T::lit(inv_std), p.gamma[c], p.beta[c]);
        if let Some(xh) = xhat.as_mut() {
            for v in channel_values_mut(xh.data_mut(), s, c) {
                *v = (*v - mean_t) * inv_t;
            }
        }
        for v in channel_values_mut(out.data_mut(), s, c) {
            *v = g * ((*v - mean_t) * inv_t) + b;
        }
    }
    cache.xhat = xhat;
    Ok((out, cache))
}

/// Folds a training batch's statistics into running estimates:
/// `running = momentum·running + (1 - momentum)·batch`, using the unbiased
/// batch variance.
pub fn update_running_stats<T: Scalar>(
    running_mean: &mut [T],
    running_var: &mut [T],
    cache: &BatchNormCache<T>,
    momentum: T,
) -> Result<()> {
    if cache.mode != Mode::Train {
        return Err(Error::contract(
            "running statistics can only be updated from a training batch",
        ));
    }
    if running_mean.len() != cache.batch_mean.len() || running_var.len() != cache.batch_var.len() {
        return Err(Error::shape(
            "running statistics length does not match cache",
        ));
    }
    let m = cache.count as f64;
    let correction = if cache.count > 1 {
        T::lit(m / (m - 1.0))
    } else {
        T::one()
    };
    let keep = T::one() - momentum;
    for c in 0..running_mean.len() {
        running_mean[c] = momentum * running_mean[c] + keep * cache.batch_mean[c];
        running_var[c] = momentum * running_var[c] + keep * cache.batch_var[c] * correction;
    }
    Ok(())
}

/// Full batch-norm gradient, including the paths through the batch mean and
/// variance. Only defined for training-mode caches.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    grad_out: &Tensor4<T>,
) -> Result<BatchNormGrads<T>> {
    let xhat = match (&cache.mode, &cache.xhat) {
        (Mode::Train, Some(xh)) => xh,
        _ => {
            return Err(Error::contract(
                "batchnorm_backward requires a cache from a training-mode forward pass",
            ))
        }
    };
    xhat.require_same_shape(grad_out, "batchnorm_backward")?;
    let s = xhat.shape();
    if gamma.len() != s.c {
        return Err(Error::shape(format!(
            "batchnorm_backward: {} gamma entries for {} channels",
            gamma.len(),
            s.c
        )));
    }
    let m = cache.count as f64;
    let mut gx = grad_out.clone();
    let mut g_gamma = Vec::with_capacity(s.c);
    let mut g_beta = Vec::with_capacity(s.c);
    for c in 0..s.c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for (&g, &xh) in channel_values(grad_out, c).zip(channel_values(xhat, c)) {
            sum_g += g.as_f64();
            sum_gx += g.as_f64() * xh.as_f64();
        }
        g_gamma.push(T::lit(sum_gx));
        g_beta.push(T::lit(sum_g));
        // With dxhat = γ·g: dx = inv_std/m · (m·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)).
        let gm = gamma[c].as_f64();
        let scale = T::lit(gm * cache.inv_std[c].as_f64());
        let mean_g = T::lit(sum_g / m);
        let mean_gx = T::lit(sum_gx / m);
        let xh_c: Vec<T> = channel_values(xhat, c).copied().collect();
        for (v, xh) in channel_values_mut(gx.data_mut(), s, c).zip(xh_c) {
            *v = scale * (*v - mean_g - xh * mean_gx);
        }
    }
    Ok(BatchNormGrads {
        input: gx,
        gamma: g_gamma,
        beta: g_beta,
    })
}
