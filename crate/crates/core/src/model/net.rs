use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::blocks::{BnUpdate, DecoderBlock, DecoderCache, EncoderBlock, EncoderCache, Head};
use super::config::{Architecture, ZNetConfig};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{
    sigmoid, sigmoid_backward, update_running_stats, Mode, Scalar, Shape4, Tensor4,
};

/// An assembled encoder/decoder segmentation network together with the
/// parameters it owns.
///
/// `depth` encoder blocks with output widths `base, 2·base, …` are followed by
/// `depth` decoder blocks consuming the encoder skips in reverse order, then a
/// 1×1 convolution to one channel and an elementwise sigmoid.
#[derive(Clone, Debug)]
pub struct ZNet<T> {
    cfg: ZNetConfig,
    arch: Architecture,
    store: ParamStore<T>,
    encoders: Vec<EncoderBlock>,
    decoders: Vec<DecoderBlock>,
    head: Head,
}

/// Output of a forward pass plus whatever the backward pass needs.
#[derive(Debug)]
pub struct ForwardPass<T> {
    pub output: Tensor4<T>,
    caches: Option<NetCache<T>>,
    bn_updates: Vec<BnUpdate<T>>,
}

#[derive(Debug)]
struct NetCache<T> {
    encoders: Vec<EncoderCache<T>>,
    decoders: Vec<DecoderCache<T>>,
    head_input: Tensor4<T>,
}

/// Per-level channel widths and parameter counts of a built network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSummary {
    pub level: usize,
    pub encoder_out_channels: usize,
    pub resolution: (usize, usize),
    pub encoder_params: usize,
    pub decoder_params: usize,
}

impl<T: Scalar> ZNet<T> {
    /// Builds a Z-net with He-initialized weights drawn from `seed`.
    pub fn new(cfg: ZNetConfig, seed: u64) -> Result<Self> {
        Self::build(cfg, Architecture::ZNet, seed)
    }

    /// Same contract, but every encoder block widens through its third
    /// convolution instead of by concatenation.
    pub fn unet_baseline(cfg: ZNetConfig, seed: u64) -> Result<Self> {
        Self::build(cfg, Architecture::UNet, seed)
    }

    pub fn build(cfg: ZNetConfig, arch: Architecture, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.precision != T::PRECISION {
            return Err(Error::config(format!(
                "config asks for {}-bit precision but the network scalar is {}-bit",
                cfg.precision.bits(),
                T::PRECISION.bits()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut encoders = Vec::with_capacity(cfg.depth);
        let mut cin = cfg.in_channels;
        for k in 0..cfg.depth {
            let cout = cfg.encoder_channels(k);
            encoders.push(EncoderBlock::register(
                &mut store,
                &format!("enc{}/", k + 1),
                arch,
                cfg.skip_align,
                cin,
                cout,
                &mut rng,
            )?);
            cin = cout;
        }
        // Decoders are registered deepest first, the order they run in.
        let mut decoders = Vec::with_capacity(cfg.depth);
        for k in (0..cfg.depth).rev() {
            decoders.push(DecoderBlock::register(
                &mut store,
                &format!("dec{}/", k + 1),
                k + 1,
                cfg.encoder_channels(k),
                &mut rng,
            )?);
        }
        decoders.reverse();
        let head = Head::register(&mut store, cfg.base_channels / 2, &mut rng)?;
        Ok(ZNet {
            cfg,
            arch,
            store,
            encoders,
            decoders,
            head,
        })
    }

    /// Rebuilds a network around an existing store, which must have exactly
    /// the layout `cfg` and `arch` produce.
    pub fn from_store(cfg: ZNetConfig, arch: Architecture, store: ParamStore<T>) -> Result<Self> {
        let mut net = Self::build(cfg, arch, 0)?;
        net.store.check_layout(&store)?;
        net.store = store;
        Ok(net)
    }

    pub fn config(&self) -> &ZNetConfig {
        &self.cfg
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn into_store(self) -> ParamStore<T> {
        self.store
    }

    pub fn encoders(&self) -> &[EncoderBlock] {
        &self.encoders
    }

    pub fn decoders(&self) -> &[DecoderBlock] {
        &self.decoders
    }

    /// Total 3×3 and 1×1 convolution layers: `6·depth + 1`.
    pub fn conv_layer_count(&self) -> usize {
        self.encoders.iter().map(|b| b.convs.len()).sum::<usize>()
            + self.decoders.iter().map(|b| b.convs.len()).sum::<usize>()
            + 1
    }

    pub fn param_count(&self) -> usize {
        self.store.trainable_count()
    }

    pub fn level_summary(&self) -> Vec<LevelSummary> {
        (0..self.cfg.depth)
            .map(|k| LevelSummary {
                level: k + 1,
                encoder_out_channels: self.encoders[k].out_channels,
                resolution: self.cfg.encoder_resolution(k),
                encoder_params: self.encoders[k].param_count(),
                decoder_params: self.decoders[k].param_count(),
            })
            .collect()
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let s = x.shape();
        let (h, w) = self.cfg.input_size;
        if s.c != self.cfg.in_channels || s.h != h || s.w != w {
            return Err(Error::shape(format!(
                "network expects (n, {}, {h}, {w}) input, got {s}",
                self.cfg.in_channels
            )));
        }
        Ok(())
    }

    /// Pure forward pass. In [`Mode::Train`] batch statistics are used and the
    /// caches for [`backward`](Self::backward) are kept, but running
    /// statistics are left untouched; see [`forward_train`](Self::forward_train).
    pub fn forward(&self, x: &Tensor4<T>, mode: Mode) -> Result<ForwardPass<T>> {
        self.check_input(x)?;
        let mut updates = Vec::new();
        let mut skips = Vec::with_capacity(self.cfg.depth);
        let mut enc_caches = Vec::new();
        let mut cur = x.clone();
        for block in &self.encoders {
            let (out, cache) = block.forward_cached(&self.store, &cur, mode, &mut updates)?;
            skips.push(out.skip);
            enc_caches.extend(cache);
            cur = out.down;
        }
        let mut dec_caches = Vec::new();
        for (block, skip) in self.decoders.iter().zip(skips).rev() {
            let (out, cache) =
                block.forward_cached(&self.store, &cur, &skip, mode, &mut updates)?;
            dec_caches.extend(cache);
            cur = out;
        }
        dec_caches.reverse();
        let output = sigmoid(&self.head.forward(&self.store, &cur)?);
        let caches = match mode {
            Mode::Train => Some(NetCache {
                encoders: enc_caches,
                decoders: dec_caches,
                head_input: cur,
            }),
            Mode::Eval => None,
        };
        Ok(ForwardPass {
            output,
            caches,
            bn_updates: updates,
        })
    }

    /// Training forward pass that also folds batch statistics into every
    /// batch-norm layer's running estimates.
    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<ForwardPass<T>> {
        let pass = self.forward(x, Mode::Train)?;
        let momentum = T::lit(crate::tensor::DEFAULT_BN_MOMENTUM);
        for u in &pass.bn_updates {
            let (mean, var) = self.store.values_pair_mut(u.mean_id, u.var_id);
            update_running_stats(mean, var, &u.cache, momentum)?;
        }
        Ok(pass)
    }

    /// Inference with running statistics.
    pub fn predict_proba(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(self.forward(x, Mode::Eval)?.output)
    }

    /// Accumulates `dL/dθ` into the store given `dL/d(prediction)`; the sigmoid
    /// head is differentiated here.
    pub fn backward(&mut self, pass: &ForwardPass<T>, grad_output: &Tensor4<T>) -> Result<()> {
        let caches = pass.caches.as_ref().ok_or_else(|| {
            Error::contract("backward called without training-mode forward caches")
        })?;
        if grad_output.shape() != pass.output.shape() {
            return Err(Error::shape(format!(
                "loss gradient {} does not match prediction {}",
                grad_output.shape(),
                pass.output.shape()
            )));
        }
        let g_logits = sigmoid_backward(&pass.output, grad_output)?;
        let mut g = self
            .head
            .backward(&mut self.store, &caches.head_input, &g_logits)?;
        let mut skip_grads = Vec::with_capacity(self.cfg.depth);
        for (block, cache) in self.decoders.iter().zip(&caches.decoders) {
            let (g_x, g_skip) = block.backward(&mut self.store, cache, &g)?;
            skip_grads.push(g_skip);
            g = g_x;
        }
        for ((block, cache), g_skip) in self
            .encoders
            .iter()
            .zip(&caches.encoders)
            .zip(&skip_grads)
            .rev()
        {
            g = block.backward(&mut self.store, cache, &g, g_skip)?;
        }
        debug_assert_eq!(
            g.shape(),
            Shape4::new(
                pass.output.shape().n,
                self.cfg.in_channels,
                self.cfg.input_size.0,
                self.cfg.input_size.1
            )
        );
        Ok(())
    }
}
