//! Building blocks: conv→BN→ReLU units, encoder (Z or U) blocks, decoder
//! Z-blocks and the 1×1 sigmoid head.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Architecture, SkipAlign};
use super::params::{ParamId, ParamKind, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{
    batchnorm_backward, batchnorm_forward, center_crop, center_crop_backward, concat_channels,
    conv2d_backward, conv2d_forward, maxpool2x2_backward, maxpool2x2_forward, relu, relu_backward,
    split_channels, upsample2x_nearest, upsample2x_nearest_backward, BatchNormCache,
    BatchNormParams, ConvParams, Mode, PoolCache, Scalar, Tensor4,
};

/// Batch statistics observed by one BN layer during a training forward pass.
#[derive(Clone, Debug)]
pub(crate) struct BnUpdate<T> {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub cache: BatchNormCache<T>,
}

fn he_normal<T: Scalar>(len: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite positive std");
    (0..len).map(|_| T::lit(normal.sample(rng))).collect()
}

/// 3×3 convolution → batch norm → ReLU.
#[derive(Clone, Debug)]
pub struct Cbr {
    pub in_channels: usize,
    pub out_channels: usize,
    weight: ParamId,
    bias: ParamId,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct CbrCache<T> {
    input: Tensor4<T>,
    bn: BatchNormCache<T>,
    pre_relu: Tensor4<T>,
}

impl Cbr {
    /// Registers `{prefix}conv{idx}/…` and `{prefix}bn{idx}/…` entries.
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        idx: usize,
        in_channels: usize,
        out_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let conv = format!("{prefix}conv{idx}");
        let bn = format!("{prefix}bn{idx}");
        let wlen = out_channels * in_channels * 9;
        let weight = store.insert(
            &format!("{conv}/weight"),
            &[out_channels, in_channels, 3, 3],
            he_normal(wlen, 9 * in_channels, rng),
            ParamKind::Trainable,
        )?;
        let zeros = vec![T::zero(); out_channels];
        let ones = vec![T::one(); out_channels];
        let bias = store.insert(
            &format!("{conv}/bias"),
            &[out_channels],
            zeros.clone(),
            ParamKind::Trainable,
        )?;
        let gamma = store.insert(
            &format!("{bn}/gamma"),
            &[out_channels],
            ones.clone(),
            ParamKind::Trainable,
        )?;
        let beta = store.insert(
            &format!("{bn}/beta"),
            &[out_channels],
            zeros.clone(),
            ParamKind::Trainable,
        )?;
        let running_mean = store.insert(
            &format!("{bn}/running_mean"),
            &[out_channels],
            zeros,
            ParamKind::Buffer,
        )?;
        let running_var = store.insert(
            &format!("{bn}/running_var"),
            &[out_channels],
            ones,
            ParamKind::Buffer,
        )?;
        Ok(Cbr {
            in_channels,
            out_channels,
            weight,
            bias,
            gamma,
            beta,
            running_mean,
            running_var,
        })
    }

    /// Trainable scalars in this unit.
    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * 9 + 3 * self.out_channels
    }

    fn conv<'a, T: Scalar>(&self, store: &'a ParamStore<T>) -> Result<ConvParams<'a, T>> {
        ConvParams::new(
            store.value(self.weight),
            store.value(self.bias),
            self.in_channels,
            self.out_channels,
        )
    }

    pub(crate) fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor4<T>,
        mode: Mode,
        updates: &mut Vec<BnUpdate<T>>,
    ) -> Result<(Tensor4<T>, Option<CbrCache<T>>)> {
        let c = conv2d_forward(x, &self.conv(store)?)?;
        let bnp = BatchNormParams::new(
            store.value(self.gamma),
            store.value(self.beta),
            store.value(self.running_mean),
            store.value(self.running_var),
        );
        let (b, bn) = batchnorm_forward(&c, &bnp, mode)?;
        let out = relu(&b);
        match mode {
            Mode::Train => {
                updates.push(BnUpdate {
                    mean_id: self.running_mean,
                    var_id: self.running_var,
                    cache: bn.clone(),
                });
                Ok((
                    out,
                    Some(CbrCache {
                        input: x.clone(),
                        bn,
                        pre_relu: b,
                    }),
                ))
            }
            Mode::Eval => Ok((out, None)),
        }
    }

    pub(crate) fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        cache: &CbrCache<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let g = relu_backward(&cache.pre_relu, grad_out)?;
        let bn = batchnorm_backward(&cache.bn, store.value(self.gamma), &g)?;
        let conv = conv2d_backward(&cache.input, &self.conv(store)?, &bn.input)?;
        let (gg, gb) = store.grads_pair_mut(self.gamma, self.beta);
        crate::tensor::add_assign(gg, &bn.gamma);
        crate::tensor::add_assign(gb, &bn.beta);
        let (gw, gbias) = store.grads_pair_mut(self.weight, self.bias);
        conv.accumulate_into(gw, gbias);
        Ok(conv.input)
    }
}

/// Result of an encoder block.
#[derive(Clone, Debug)]
pub struct ZBlockOutput<T> {
    /// Fused features at half resolution.
    pub down: Tensor4<T>,
    /// Pre-pool features at input resolution, handed to the mirrored decoder.
    pub skip: Tensor4<T>,
}

/// Encoder block with three conv→BN→ReLU units.
///
/// Z-block: `a = cbr1(x)`, `z2 = cbr2(a)`, `z4 = cbr3(pool(z2))`, and
/// `down = concat(align(z2), z4)` where `align` is a max pool or center crop.
/// U-block: identical except `cbr3` widens to the full output width and
/// `down = z4`.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub kind: Architecture,
    pub skip_align: SkipAlign,
    pub in_channels: usize,
    pub out_channels: usize,
    pub convs: [Cbr; 3],
}

#[derive(Clone, Debug)]
pub(crate) struct EncoderCache<T> {
    cbr: [CbrCache<T>; 3],
    pool: PoolCache,
    skip_shape: (usize, usize),
}

impl EncoderBlock {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        kind: Architecture,
        skip_align: SkipAlign,
        in_channels: usize,
        out_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if out_channels < 2 || out_channels % 2 != 0 {
            return Err(Error::config(format!(
                "{prefix}: encoder output channels must be even, got {out_channels}"
            )));
        }
        let half = out_channels / 2;
        let third = match kind {
            Architecture::ZNet => half,
            Architecture::UNet => out_channels,
        };
        let convs = [
            Cbr::register(store, prefix, 1, in_channels, half, rng)?,
            Cbr::register(store, prefix, 2, half, half, rng)?,
            Cbr::register(store, prefix, 3, half, third, rng)?,
        ];
        Ok(EncoderBlock {
            kind,
            skip_align,
            in_channels,
            out_channels,
            convs,
        })
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Cbr::param_count).sum()
    }

    /// Runs the block without keeping caches or touching running statistics.
    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor4<T>,
        mode: Mode,
    ) -> Result<ZBlockOutput<T>> {
        let mut updates = Vec::new();
        Ok(self.forward_cached(store, x, mode, &mut updates)?.0)
    }

    pub(crate) fn forward_cached<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor4<T>,
        mode: Mode,
        updates: &mut Vec<BnUpdate<T>>,
    ) -> Result<(ZBlockOutput<T>, Option<EncoderCache<T>>)> {
        let s = x.shape();
        if s.c != self.in_channels {
            return Err(Error::shape(format!(
                "encoder block expects {} input channels, got {s}",
                self.in_channels
            )));
        }
        if s.h % 2 != 0 || s.w % 2 != 0 {
            return Err(Error::shape(format!(
                "encoder block input {s} must have even spatial dims"
            )));
        }
        let (a, c1) = self.convs[0].forward(store, x, mode, updates)?;
        let (z2, c2) = self.convs[1].forward(store, &a, mode, updates)?;
        drop(a);
        let (z3, pool) = maxpool2x2_forward(&z2)?;
        let (z4, c3) = self.convs[2].forward(store, &z3, mode, updates)?;
        let down = match self.kind {
            Architecture::UNet => z4,
            Architecture::ZNet => {
                let aligned = match self.skip_align {
                    SkipAlign::Pool => z3,
                    SkipAlign::Crop => center_crop(&z2, s.h / 2, s.w / 2)?,
                };
                concat_channels(&aligned, &z4)?
            }
        };
        let cache = match (c1, c2, c3) {
            (Some(c1), Some(c2), Some(c3)) => Some(EncoderCache {
                cbr: [c1, c2, c3],
                pool,
                skip_shape: (s.h, s.w),
            }),
            _ => None,
        };
        Ok((ZBlockOutput { down, skip: z2 }, cache))
    }

    /// Returns the gradient with respect to the block input given gradients
    /// for both outputs.
    pub(crate) fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        cache: &EncoderCache<T>,
        grad_down: &Tensor4<T>,
        grad_skip: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let mut g_z2 = grad_skip.clone();
        let g_z3 = match self.kind {
            Architecture::UNet => self.convs[2].backward(store, &cache.cbr[2], grad_down)?,
            Architecture::ZNet => {
                let (g_aligned, g_z4) = split_channels(grad_down, self.out_channels / 2)?;
                let mut g_z3 = self.convs[2].backward(store, &cache.cbr[2], &g_z4)?;
                match self.skip_align {
                    SkipAlign::Pool => add_into(&mut g_z3, &g_aligned)?,
                    SkipAlign::Crop => {
                        let (h, w) = cache.skip_shape;
                        add_into(&mut g_z2, &center_crop_backward(&g_aligned, h, w)?)?;
                    }
                }
                g_z3
            }
        };
        add_into(&mut g_z2, &maxpool2x2_backward(&cache.pool, &g_z3)?)?;
        let g_a = self.convs[1].backward(store, &cache.cbr[1], &g_z2)?;
        self.convs[0].backward(store, &cache.cbr[0], &g_a)
    }
}

fn add_into<T: Scalar>(acc: &mut Tensor4<T>, g: &Tensor4<T>) -> Result<()> {
    acc.require_same_shape(g, "gradient accumulation")?;
    crate::tensor::add_assign(acc.data_mut(), g.data());
    Ok(())
}

/// Mirror of the Z-block: `a = cbr1(x)`, `f = concat(upsample(a), skip)`,
/// `out = cbr3(cbr2(f))`.
///
/// Takes `x` with `C` channels at half resolution and a skip with `C/2`
/// channels at full resolution; returns `C/2` channels at full resolution.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub level: usize,
    pub in_channels: usize,
    pub convs: [Cbr; 3],
}

#[derive(Clone, Debug)]
pub(crate) struct DecoderCache<T> {
    cbr: [CbrCache<T>; 3],
}

impl DecoderBlock {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        level: usize,
        in_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if in_channels < 2 || in_channels % 2 != 0 {
            return Err(Error::config(format!(
                "{prefix}: decoder input channels must be even, got {in_channels}"
            )));
        }
        let half = in_channels / 2;
        let convs = [
            Cbr::register(store, prefix, 1, in_channels, half, rng)?,
            Cbr::register(store, prefix, 2, in_channels, half, rng)?,
            Cbr::register(store, prefix, 3, half, half, rng)?,
        ];
        Ok(DecoderBlock {
            level,
            in_channels,
            convs,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels / 2
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Cbr::param_count).sum()
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor4<T>,
        skip: &Tensor4<T>,
        mode: Mode,
    ) -> Result<Tensor4<T>> {
        let mut updates = Vec::new();
        Ok(self.forward_cached(store, x, skip, mode, &mut updates)?.0)
    }

    pub(crate) fn forward_cached<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor4<T>,
        skip: &Tensor4<T>,
        mode: Mode,
        updates: &mut Vec<BnUpdate<T>>,
    ) -> Result<(Tensor4<T>, Option<DecoderCache<T>>)> {
        let (xs, ss) = (x.shape(), skip.shape());
        let half = self.in_channels / 2;
        if xs.c != self.in_channels {
            return Err(Error::shape(format!(
                "decoder level {}: input {xs} must have {} channels",
                self.level, self.in_channels
            )));
        }
        if ss.c != half || ss.n != xs.n || ss.h != 2 * xs.h || ss.w != 2 * xs.w {
            return Err(Error::shape(format!(
                "decoder level {}: skip {ss} must have {half} channels at twice the resolution of input {xs}",
                self.level
            )));
        }
        let (a, c1) = self.convs[0].forward(store, x, mode, updates)?;
        let f = concat_channels(&upsample2x_nearest(&a), skip)?;
        drop(a);
        let (b, c2) = self.convs[1].forward(store, &f, mode, updates)?;
        drop(f);
        let (out, c3) = self.convs[2].forward(store, &b, mode, updates)?;
        let cache = match (c1, c2, c3) {
            (Some(c1), Some(c2), Some(c3)) => Some(DecoderCache { cbr: [c1, c2, c3] }),
            _ => None,
        };
        Ok((out, cache))
    }

    /// Returns `(grad_x, grad_skip)`.
    pub(crate) fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        cache: &DecoderCache<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, Tensor4<T>)> {
        let g_b = self.convs[2].backward(store, &cache.cbr[2], grad_out)?;
        let g_f = self.convs[1].backward(store, &cache.cbr[1], &g_b)?;
        let (g_u, g_skip) = split_channels(&g_f, self.in_channels / 2)?;
        let g_a = upsample2x_nearest_backward(&g_u)?;
        let g_x = self.convs[0].backward(store, &cache.cbr[0], &g_a)?;
        Ok((g_x, g_skip))
    }
}

/// 1×1 convolution to a single channel.
#[derive(Clone, Debug)]
pub struct Head {
    pub in_channels: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Head {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        in_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weight = store.insert(
            "head/weight",
            &[1, in_channels, 1, 1],
            he_normal(in_channels, in_channels, rng),
            ParamKind::Trainable,
        )?;
        let bias = store.insert("head/bias", &[1], vec![T::zero()], ParamKind::Trainable)?;
        Ok(Head {
            in_channels,
            weight,
            bias,
        })
    }

    pub fn param_count(&self) -> usize {
        self.in_channels + 1
    }

    pub(crate) fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let s = x.shape();
        if s.c != self.in_channels {
            return Err(Error::shape(format!(
                "head expects {} channels, got {s}",
                self.in_channels
            )));
        }
        let (w, b) = (store.value(self.weight), store.value(self.bias)[0]);
        let plane = s.plane();
        let mut out = Tensor4::full([s.n, 1, s.h, s.w], b);
        for n in 0..s.n {
            let item = x.item(n);
            let o = out.item_mut(n);
            for (c, &wc) in w.iter().enumerate() {
                for (acc, &v) in o.iter_mut().zip(&item[c * plane..(c + 1) * plane]) {
                    *acc = *acc + wc * v;
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        x: &Tensor4<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let s = x.shape();
        let plane = s.plane();
        let w = store.value(self.weight).to_vec();
        let mut gx = Tensor4::zeros(s);
        let mut gw = vec![T::zero(); self.in_channels];
        let mut gb = T::zero();
        for n in 0..s.n {
            let g = grad_out.item(n);
            gb = gb + g.iter().copied().sum();
            let item = x.item(n);
            let gxi = gx.item_mut(n);
            for c in 0..self.in_channels {
                let xs = &item[c * plane..(c + 1) * plane];
                gw[c] = gw[c] + xs.iter().zip(g).map(|(&a, &b)| a * b).sum();
                for (d, &gv) in gxi[c * plane..(c + 1) * plane].iter_mut().zip(g) {
                    *d = w[c] * gv;
                }
            }
        }
        let (dw, db) = store.grads_pair_mut(self.weight, self.bias);
        crate::tensor::add_assign(dw, &gw);
        db[0] = db[0] + gb;
        Ok(gx)
    }
}
