//! Property tests of the invariants each module promises.

use proptest::prelude::*;
use znet::loss::{dice_loss, DiceConfig};
use znet::metrics::{hausdorff, ravd, vdsc, HausdorffMode};
use znet::preprocess::*;
use znet::tensor::Tensor4;

fn mask_strategy(max: [usize; 3]) -> impl Strategy<Value = Volume> {
    (1..=max[0], 1..=max[1], 1..=max[2], 0.3f64..3.0, 0.3f64..3.0).prop_flat_map(
        |(d, h, w, sz, sxy)| {
            proptest::collection::vec(any::<bool>(), d * h * w).prop_map(move |bits| {
                let data = bits.into_iter().map(|b| b as u8 as f32).collect();
                Volume::new([d, h, w], [sz, sxy, sxy], data, VolumeKind::Mask).unwrap()
            })
        },
    )
}

fn mask_pair(max: [usize; 3]) -> impl Strategy<Value = (Volume, Volume)> {
    mask_strategy(max).prop_flat_map(|a| {
        let n = a.data().len();
        let (dims, spacing) = (a.dims(), a.spacing());
        proptest::collection::vec(any::<bool>(), n).prop_map(move |bits| {
            let data = bits.into_iter().map(|b| b as u8 as f32).collect();
            (
                a.clone(),
                Volume::new(dims, spacing, data, VolumeKind::Mask).unwrap(),
            )
        })
    })
}

fn as_tensor(v: &Volume) -> Tensor4<f64> {
    Tensor4::from_vec(
        [1, 1, 1, v.data().len()],
        v.data().iter().map(|&x| x as f64).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dice_loss_in_unit_interval(
        z in proptest::collection::vec(0.0f64..=1.0, 1..40),
        bits in proptest::collection::vec(any::<bool>(), 40),
        s in 0.01f64..5.0,
    ) {
        let y: Vec<f64> = bits[..z.len()].iter().map(|&b| b as u8 as f64).collect();
        let n = z.len();
        let zt = Tensor4::from_vec([1, 1, 1, n], z).unwrap();
        let yt = Tensor4::from_vec([1, 1, 1, n], y).unwrap();
        let l = dice_loss(&zt, &yt, &DiceConfig { s }).unwrap().mean;
        prop_assert!((0.0..1.0).contains(&l), "loss {l}");
    }

    #[test]
    fn dice_loss_binary_symmetric_and_zero_iff_equal((a, b) in mask_pair([2, 6, 6])) {
        let d = DiceConfig::default();
        let (ta, tb) = (as_tensor(&a), as_tensor(&b));
        let ab = dice_loss(&ta, &tb, &d).unwrap().mean;
        prop_assert_eq!(ab, dice_loss(&tb, &ta, &d).unwrap().mean);
        prop_assert_eq!(ab == 0.0, a.data() == b.data());
        prop_assert_eq!(dice_loss(&ta, &ta, &d).unwrap().mean, 0.0);
    }

    #[test]
    fn vdsc_symmetric_and_reflexive((a, b) in mask_pair([3, 8, 8])) {
        prop_assert_eq!(vdsc(&a, &b).unwrap(), vdsc(&b, &a).unwrap());
        prop_assert_eq!(vdsc(&a, &a).unwrap(), 100.0);
        let v = vdsc(&a, &b).unwrap();
        prop_assert!((0.0..=100.0).contains(&v));
    }

    #[test]
    fn vdsc_grows_with_intersection((a, b) in mask_pair([2, 8, 8])) {
        // Move one voxel of b from outside a to inside a: sizes fixed, overlap +1.
        let from = (0..b.data().len()).find(|&i| b.data()[i] == 1.0 && a.data()[i] == 0.0);
        let to = (0..b.data().len()).find(|&i| b.data()[i] == 0.0 && a.data()[i] == 1.0);
        if let (Some(from), Some(to)) = (from, to) {
            let mut data = b.data().to_vec();
            data[from] = 0.0;
            data[to] = 1.0;
            let moved = Volume::new(b.dims(), b.spacing(), data, VolumeKind::Mask).unwrap();
            prop_assert!(vdsc(&a, &moved).unwrap() > vdsc(&a, &b).unwrap());
        }
    }

    #[test]
    fn hausdorff_symmetric_and_zero_on_equal((a, b) in mask_pair([3, 7, 7])) {
        for mode in [HausdorffMode::Max, HausdorffMode::Percentile95] {
            match (hausdorff(&a, &b, mode), hausdorff(&b, &a, mode)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "asymmetric definedness {:?}", other),
            }
            if a.count() > 0 {
                prop_assert_eq!(hausdorff(&a, &a, mode).unwrap(), 0.0);
            }
        }
        if let Ok(h) = hausdorff(&a, &b, HausdorffMode::Max) {
            prop_assert!(h >= hausdorff(&a, &b, HausdorffMode::Percentile95).unwrap());
        }
    }

    #[test]
    fn ravd_depends_only_on_counts((a, b) in mask_pair([2, 6, 6]), rot in 0usize..72) {
        let mut shuffled = a.data().to_vec();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let a2 = Volume::new(a.dims(), a.spacing(), shuffled, VolumeKind::Mask).unwrap();
        match (ravd(&a, &b), ravd(&a2, &b)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (Err(_), Err(_)) => prop_assert_eq!(b.count(), 0),
            _ => prop_assert!(false),
        }
        if b.count() > 0 {
            prop_assert_eq!(ravd(&b, &b).unwrap(), 0.0);
        }
    }

    #[test]
    fn nn_index_is_monotone_and_in_range(src in 1usize..600, dst in 1usize..600) {
        let mut prev = 0;
        for i in 0..dst {
            let j = nn_index(i, src, dst);
            prop_assert!(j < src);
            prop_assert!(j >= prev);
            prev = j;
        }
    }

    #[test]
    fn unify_reconstruct_restores_geometry_and_binarity(
        m in mask_strategy([4, 40, 40]),
        th in 1usize..6,
        tw in 1usize..6,
    ) {
        let target = (th * 8, tw * 8);
        for method in UniformMethod::ALL {
            let (u, rec) = match unify(&m, method, target) {
                Ok(r) => r,
                // Isotropic resampling of a tiny volume can collapse an axis.
                Err(znet::Error::Geometry(_)) if method == UniformMethod::Resize3d => continue,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            prop_assert_eq!(u.slice_dims(), target);
            prop_assert!(u.is_binary());
            let back = reconstruct(&u, &rec).unwrap();
            prop_assert_eq!(back.dims(), m.dims());
            prop_assert_eq!(back.spacing(), m.spacing());
            prop_assert!(back.is_binary());
            if method == UniformMethod::PadCut && u.count() == m.count() {
                // Nothing was cut away, so the round trip is the identity.
                prop_assert_eq!(back.data(), m.data());
            }
        }
    }

    #[test]
    fn normalize_ignores_positive_affine_maps(
        v in proptest::collection::vec(-100.0f32..100.0, 2..200),
        a in 0.1f32..10.0,
        b in -50.0f32..50.0,
    ) {
        prop_assume!(v.iter().any(|&x| (x - v[0]).abs() > 1.0));
        let n1 = gaussian_normalize(&v);
        let w: Vec<f32> = v.iter().map(|&x| a * x + b).collect();
        let n2 = gaussian_normalize(&w);
        for (x, y) in n1.iter().zip(&n2) {
            prop_assert!((x - y).abs() < 1e-3, "{x} vs {y}");
        }
        let mean: f64 = n1.iter().map(|&x| x as f64).sum::<f64>() / n1.len() as f64;
        prop_assert!(mean.abs() < 1e-4);
    }

    #[test]
    fn clahe_output_in_unit_interval(
        v in proptest::collection::vec(0.0f32..1000.0, 24 * 20),
        clip in 0.5f64..6.0,
        tr in 1usize..5,
        tc in 1usize..5,
    ) {
        let out = clahe(&v, 24, 20, &ClaheConfig { clip_limit: clip, tiles: (tr, tc) }).unwrap();
        prop_assert!(out.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn augmentation_keeps_masks_binary(seed in any::<u64>(), r in 2usize..9) {
        let (h, w) = (24, 20);
        let mask: Vec<f32> = (0..h * w)
            .map(|i| (((i / w) as isize - 12).pow(2) + ((i % w) as isize - 10).pow(2) <= (r * r) as isize) as u8 as f32)
            .collect();
        let img: Vec<f32> = mask.iter().map(|m| m * 2.0 - 1.0).collect();
        let spec = AugmentSpec { seed, ..AugmentSpec::default() };
        let (ai, am) = augment(&img, &mask, h, w, &spec).unwrap();
        prop_assert_eq!(ai.len(), h * w);
        prop_assert_eq!(am.len(), h * w);
        prop_assert!(am.iter().all(|&x| x == 0.0 || x == 1.0));
        let (ii, im) = augment(&img, &mask, h, w, &AugmentSpec { seed, ..AugmentSpec::identity() }).unwrap();
        prop_assert_eq!(ii, img);
        prop_assert_eq!(im, mask);
    }
}
