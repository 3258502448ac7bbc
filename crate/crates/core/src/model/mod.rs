//! Z-blocks, decoder Z-blocks and the assembled network.
//!
//! A Z-block runs three conv→BN→ReLU units. Its pre-pool features `z2` are
//! brought to half resolution and concatenated with the post-pool convolution
//! output `z4`, so the block's width doubles through fusion rather than a
//! wider convolution. The decoder block mirrors it with one upsample and one
//! skip concatenation.

mod blocks;
mod checkpoint;
mod config;
mod net;
mod params;

pub use blocks::{Cbr, DecoderBlock, EncoderBlock, Head, ZBlockOutput};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, TrainState,
};
pub use config::{Architecture, SkipAlign, ZNetConfig};
pub use net::{ForwardPass, LevelSummary, ZNet};
pub use params::{ParamId, ParamKind, ParamStore};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Mode, Precision, Shape4, Tensor4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], seed: u64) -> Tensor4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    fn block(cin: usize, cout: usize, kind: Architecture) -> (ParamStore<f32>, EncoderBlock) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = EncoderBlock::register(
            &mut store,
            "enc1/",
            kind,
            SkipAlign::Pool,
            cin,
            cout,
            &mut rng,
        )
        .unwrap();
        (store, b)
    }

    #[test]
    fn zblock_doubles_by_fusion() {
        let (store, b) = block(1, 32, Architecture::ZNet);
        let out = b
            .forward(&store, &random([1, 1, 256, 256], 1), Mode::Train)
            .unwrap();
        assert_eq!(out.down.shape(), Shape4::new(1, 32, 128, 128));
        assert_eq!(out.skip.shape(), Shape4::new(1, 16, 256, 256));

        let (store, b) = block(32, 64, Architecture::ZNet);
        let out = b
            .forward(&store, &random([1, 32, 128, 128], 2), Mode::Eval)
            .unwrap();
        assert_eq!(out.down.shape(), Shape4::new(1, 64, 64, 64));
        assert_eq!(out.down.shape().c, 2 * out.skip.shape().c);
        assert!(b.convs.iter().all(|c| c.out_channels == 32));
    }

    #[test]
    fn crop_alignment_has_same_shapes() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = EncoderBlock::register(
            &mut store,
            "e/",
            Architecture::ZNet,
            SkipAlign::Crop,
            2,
            8,
            &mut rng,
        )
        .unwrap();
        let out = b
            .forward(&store, &random([2, 2, 16, 16], 3), Mode::Train)
            .unwrap();
        assert_eq!(out.down.shape(), Shape4::new(2, 8, 8, 8));
    }

    #[test]
    fn small_zblock_parameter_count() {
        // conv 1→2: 20, BN 4, conv 2→2: 38, BN 4, conv 2→2: 38, BN 4.
        let (store, b) = block(1, 4, Architecture::ZNet);
        assert_eq!(b.param_count(), 108);
        assert_eq!(store.trainable_count(), 108);
    }

    #[test]
    fn ublock_widens_by_convolution() {
        let (store, b) = block(1, 8, Architecture::UNet);
        assert_eq!(b.convs[2].in_channels, 4);
        assert_eq!(b.convs[2].out_channels, 8);
        let out = b
            .forward(&store, &random([1, 1, 16, 16], 4), Mode::Train)
            .unwrap();
        assert_eq!(out.down.shape(), Shape4::new(1, 8, 8, 8));
        assert_eq!(out.skip.shape(), Shape4::new(1, 4, 16, 16));
    }

    #[test]
    fn decoder_mirrors_encoder() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = DecoderBlock::register(&mut store, "dec5/", 5, 512, &mut rng).unwrap();
        let out = d
            .forward(
                &store,
                &random([1, 512, 8, 8], 5),
                &random([1, 256, 16, 16], 6),
                Mode::Eval,
            )
            .unwrap();
        assert_eq!(out.shape(), Shape4::new(1, 256, 16, 16));

        let d = DecoderBlock::register(&mut store, "dec1/", 1, 64, &mut rng).unwrap();
        let err = d
            .forward(
                &store,
                &random([1, 64, 128, 128], 7),
                &random([1, 16, 256, 256], 8),
                Mode::Eval,
            )
            .unwrap_err();
        assert!(err.to_string().contains("32 channels"), "{err}");
    }

    #[test]
    fn tiny_net_closes_shapes_and_counts_convs() {
        let net = ZNet::<f32>::new(ZNetConfig::tiny(), 1).unwrap();
        let y = net.predict_proba(&random([3, 1, 32, 32], 9)).unwrap();
        assert_eq!(y.shape(), Shape4::new(3, 1, 32, 32));
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(net.conv_layer_count(), 6 * 2 + 1);
    }

    #[test]
    fn config_validation() {
        let bad = [
            ZNetConfig {
                depth: 0,
                ..ZNetConfig::tiny()
            },
            ZNetConfig {
                base_channels: 3,
                ..ZNetConfig::tiny()
            },
            ZNetConfig {
                input_size: (34, 32),
                ..ZNetConfig::tiny()
            },
        ];
        for cfg in bad {
            assert!(ZNet::<f32>::new(cfg, 0).is_err(), "{cfg:?}");
        }
        let f64_cfg = ZNetConfig {
            precision: Precision::F64,
            ..ZNetConfig::tiny()
        };
        assert!(ZNet::<f32>::new(f64_cfg, 0).is_err());
        assert!(ZNet::<f64>::new(f64_cfg, 0).is_ok());
    }

    #[test]
    fn init_is_seeded_and_standard() {
        let a = ZNet::<f32>::new(ZNetConfig::tiny(), 42).unwrap();
        let b = ZNet::<f32>::new(ZNetConfig::tiny(), 42).unwrap();
        let c = ZNet::<f32>::new(ZNetConfig::tiny(), 43).unwrap();
        assert_eq!(a.store(), b.store());
        assert_ne!(a.store().flat_values(), c.store().flat_values());
        let s = a.store();
        for id in s.ids() {
            let name = s.name(id);
            if name.ends_with("/gamma") || name.ends_with("/running_var") {
                assert!(s.value(id).iter().all(|&v| v == 1.0), "{name}");
            }
            if name.ends_with("/bias") || name.ends_with("/beta") || name.ends_with("/running_mean")
            {
                assert!(s.value(id).iter().all(|&v| v == 0.0), "{name}");
            }
        }
        // He std for a 1→2 conv is sqrt(2/9); check a larger layer's empirical std.
        let w = s.value(s.id("dec2/conv2/weight").unwrap());
        let std = (w.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        let want = (2.0 / (9.0 * 8.0f64)).sqrt();
        assert!((std - want).abs() < 0.15 * want, "{std} vs {want}");
    }

    #[test]
    fn eval_pass_has_no_caches() {
        let mut net = ZNet::<f32>::new(ZNetConfig::tiny(), 1).unwrap();
        let x = random([2, 1, 32, 32], 10);
        let pass = net.forward(&x, Mode::Eval).unwrap();
        let g = Tensor4::full(pass.output.shape(), 1.0);
        assert!(matches!(
            net.backward(&pass, &g),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_param_grads() {
        let mut net = ZNet::<f32>::new(ZNetConfig::tiny(), 1).unwrap();
        let x = random([2, 1, 32, 32], 11);
        let pass = net.forward_train(&x).unwrap();
        net.backward(&pass, &Tensor4::zeros(pass.output.shape()))
            .unwrap();
        assert!(net.store().flat_grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn forward_train_moves_running_stats_only() {
        let mut net = ZNet::<f32>::new(ZNetConfig::tiny(), 1).unwrap();
        let before = net.store().clone();
        net.forward_train(&random([2, 1, 32, 32], 12)).unwrap();
        assert_eq!(before.flat_values(), net.store().flat_values());
        let id = net.store().id("enc1/bn1/running_mean").unwrap();
        assert_ne!(before.value(id), net.store().value(id));
    }

    #[test]
    fn backward_is_deterministic() {
        let x = random([2, 1, 32, 32], 13);
        let g = random([2, 1, 32, 32], 14);
        let run = || {
            let mut net = ZNet::<f32>::new(ZNetConfig::tiny(), 5).unwrap();
            let pass = net.forward_train(&x).unwrap();
            net.backward(&pass, &g).unwrap();
            net.store().flat_grads()
        };
        let (a, b) = (run(), run());
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
