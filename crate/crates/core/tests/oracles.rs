//! Independent oracles: finite differences, hand-iterated Adam, all-pairs
//! Hausdorff and direct metric formulas.

mod common;

use common::*;
use rand::Rng;
use znet::loss::{dice_loss, dice_loss_backward, DiceConfig};
use znet::metrics::{hausdorff, ravd, vdsc, HausdorffMode};
use znet::model::{ParamKind, ParamStore};
use znet::optim::{adam_step, AdamState};
use znet::preprocess::{Volume, VolumeKind};
use znet::tensor::Tensor4;

#[test]
fn every_kernel_matches_finite_differences() {
    for (name, err) in kernel_grad_checks() {
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn composed_network_matches_finite_differences() {
    let rep = composed_grad_check(3);
    assert!(rep.max_rel_error < 1e-3, "{rep:?}");
    assert!(rep.checked > 500);
}

fn t(v: &[f64]) -> Tensor4<f64> {
    Tensor4::from_vec([1, 1, 1, v.len()], v.to_vec()).unwrap()
}

#[test]
fn dice_loss_worked_values() {
    let d = DiceConfig::default();
    let y = t(&[1.0, 1.0, 0.0, 1.0]);
    assert_eq!(dice_loss(&y, &y, &d).unwrap().mean, 0.0);
    let zeros = t(&[0.0; 4]);
    assert!((dice_loss(&zeros, &y, &d).unwrap().mean - (1.0 - 1.0 / 4.0)).abs() < 1e-15);
    let z = t(&[1.0, 1.0, 0.0, 0.0]);
    let y = t(&[0.0, 1.0, 1.0, 0.0]);
    assert!((dice_loss(&z, &y, &d).unwrap().mean - 0.4).abs() < 1e-15);
}

#[test]
fn dice_gradient_matches_central_differences() {
    let d = DiceConfig::default();
    let mut r = rng(11);
    let shape = [3, 1, 5, 7];
    for trial in 0..5 {
        let y = Tensor4::from_fn(shape, |_, _, _, _| r.gen_bool(0.4) as u8 as f64);
        // Trial 0: empty reference everywhere.
        let y = if trial == 0 { y.map(|_| 0.0) } else { y };
        let z = Tensor4::from_fn(shape, |_, _, _, _| r.gen_range(0.05..0.95));
        let g = dice_loss_backward(&z, &y, &d).unwrap();
        let h = 1e-6;
        for i in 0..z.data().len() {
            let mut up = z.clone();
            up.data_mut()[i] += h;
            let mut dn = z.clone();
            dn.data_mut()[i] -= h;
            let num = (dice_loss(&up, &y, &d).unwrap().mean - dice_loss(&dn, &y, &d).unwrap().mean)
                / (2.0 * h);
            let a = g.data()[i];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-12);
            assert!(
                rel < 1e-6,
                "trial {trial} coord {i}: analytic {a:e}, numeric {num:e}"
            );
        }
    }
}

#[test]
fn constant_perturbation() {
    // d/dε L(z + ε·1) at ε = 0 equals Σ_j ∂L/∂z_j.
    let d = DiceConfig::default();
    let y = Tensor4::from_fn([1, 1, 4, 4], |_, _, h, w| ((h + w) % 2) as f64);
    let z = y.map(|v| 0.3 + 0.4 * v);
    let g = dice_loss_backward(&z, &y, &d).unwrap();
    let h = 1e-6;
    let l = |e: f64| dice_loss(&z.map(|v| v + e), &y, &d).unwrap().mean;
    let num = (l(h) - l(-h)) / (2.0 * h);
    assert!(
        (g.sum() - num).abs() < 1e-6 * num.abs().max(1e-9),
        "{} vs {num}",
        g.sum()
    );
}

fn single_param(value: f64) -> (ParamStore<f64>, znet::model::ParamId) {
    let mut s = ParamStore::new();
    let id = s
        .insert("w", &[1], vec![value], ParamKind::Trainable)
        .unwrap();
    (s, id)
}

#[test]
fn adam_two_steps_by_hand() {
    let (mut store, id) = single_param(0.0);
    let mut st = AdamState::default();
    let (b1, b2, lr, eps) = (0.9f64, 0.999f64, 1e-3f64, 1e-8f64);
    let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, 0.0f64);
    for (t, g) in [(1, 1.0f64), (2, -1.0)] {
        store.grad_mut(id)[0] = g;
        adam_step(&mut store, &mut st).unwrap();
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        theta -= lr * mh / (vh.sqrt() + eps);
        let (sm, sv) = store.adam_moments(id);
        assert!(
            (sm[0] - m).abs() < 1e-15 && (sv[0] - v).abs() < 1e-15,
            "step {t}"
        );
        assert!(
            (store.value(id)[0] - theta).abs() < 1e-15,
            "step {t}: {} vs {theta}",
            store.value(id)[0]
        );
        assert_eq!(store.grad(id)[0], 0.0);
    }
    assert_eq!(st.t, 2);
    // First step is -lr·sign(g) up to eps; the second moves back by lr·0.0526.
    assert!((theta - (-1e-3 / (1.0 + 1e-8) + 1e-3 * (0.01 / 0.19) / (1.0 + 1e-8))).abs() < 1e-15);
}

#[test]
fn adam_first_step_is_bounded_by_lr() {
    // The first update is -lr·g/(|g| + eps): exactly lr/(1 + eps) at |g| = 1
    // and below lr for every g.
    for g in [1e-6, 0.3, 1.0, -7.0, 1e6] {
        let (mut store, id) = single_param(0.0);
        store.grad_mut(id)[0] = g;
        adam_step(&mut store, &mut AdamState::default()).unwrap();
        let step = store.value(id)[0];
        assert!(step.abs() < 1e-3);
        assert_eq!(step.signum(), -g.signum());
        assert!((step.abs() - 1e-3 * g.abs() / (g.abs() + 1e-8)).abs() < 1e-18);
    }
}

#[test]
fn adam_with_zero_gradients_never_moves() {
    let (mut store, id) = single_param(0.25);
    let mut st = AdamState::default();
    for _ in 0..50 {
        adam_step(&mut store, &mut st).unwrap();
    }
    assert_eq!(store.value(id)[0], 0.25);
}

#[test]
fn optimized_hausdorff_equals_all_pairs() {
    let mut r = rng(99);
    for _ in 0..60 {
        let a = random_mask(&mut r, 12);
        let b = random_mask_like(&mut r, &a);
        for (mode, p95) in [
            (HausdorffMode::Max, false),
            (HausdorffMode::Percentile95, true),
        ] {
            match (hausdorff(&a, &b, mode), brute_hausdorff(&a, &b, p95)) {
                (Ok(x), Some(y)) => assert_eq!(x, y, "{:?} {mode:?}", a.dims()),
                (Err(_), None) => {}
                other => panic!("disagreement on emptiness: {other:?}"),
            }
        }
    }
}

#[test]
fn hausdorff_triangle_inequality_spot_checks() {
    let mut r = rng(5);
    for _ in 0..40 {
        let a = random_mask(&mut r, 10);
        let b = random_mask_like(&mut r, &a);
        let c = random_mask_like(&mut r, &a);
        let h = |x: &Volume, y: &Volume| hausdorff(x, y, HausdorffMode::Max);
        if let (Ok(ab), Ok(bc), Ok(ac)) = (h(&a, &b), h(&b, &c), h(&a, &c)) {
            assert!(ac <= ab + bc + 1e-12);
            assert_eq!(ab, h(&b, &a).unwrap());
        }
    }
}

#[test]
fn vdsc_and_ravd_direct_formulas() {
    let mut r = rng(3);
    for _ in 0..100 {
        let a = random_mask(&mut r, 9);
        let b = random_mask_like(&mut r, &a);
        let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
        for (x, y) in a.data().iter().zip(b.data()) {
            inter += (*x == 1.0 && *y == 1.0) as usize;
            na += (*x == 1.0) as usize;
            nb += (*y == 1.0) as usize;
        }
        let expected = if na + nb == 0 {
            100.0
        } else {
            100.0 * (2 * inter) as f64 / (na + nb) as f64
        };
        assert_eq!(vdsc(&a, &b).unwrap(), expected);
        if nb > 0 {
            assert_eq!(
                ravd(&a, &b).unwrap(),
                100.0 * na.abs_diff(nb) as f64 / nb as f64
            );
        }
    }
}

#[test]
fn vdsc_agrees_with_unsmoothed_dice_loss() {
    let mut r = rng(8);
    let zero = DiceConfig { s: 0.0 };
    for _ in 0..100 {
        let a = random_mask(&mut r, 10);
        let b = random_mask_like(&mut r, &a);
        if a.count() + b.count() == 0 {
            continue;
        }
        let l = dice_loss(&mask_tensor(&a), &mask_tensor(&b), &zero)
            .unwrap()
            .mean;
        assert!((vdsc(&a, &b).unwrap() / 100.0 - (1.0 - l)).abs() <= 1e-9);
    }
}

#[test]
fn worked_metric_values() {
    let m =
        |v: &[f32]| Volume::new([1, 1, v.len()], [1.0; 3], v.to_vec(), VolumeKind::Mask).unwrap();
    let a = m(&[1.0; 90]
        .iter()
        .chain(&[0.0; 10])
        .copied()
        .collect::<Vec<_>>());
    let b = m(&[1.0; 100]);
    assert_eq!(ravd(&a, &b).unwrap(), 10.0);
    assert_eq!(vdsc(&b, &b).unwrap(), 100.0);
}
