//! Oracles and fixtures shared by the integration tests and the acceptance
//! suite. Each test binary uses a different subset.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use znet::loss::{dice_loss, dice_loss_backward, DiceConfig};
use znet::model::{ZNet, ZNetConfig};
use znet::preprocess::{Volume, VolumeKind};
use znet::tensor::*;
use znet::train::Dataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor4<f64> {
    let mut r = rng(seed);
    Tensor4::from_fn(shape, |_, _, _, _| r.gen_range(-1.0..1.0))
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// Random binary mask with dims in `1..=max_dim` per axis, a random
/// foreground density and a random anisotropic spacing.
pub fn random_mask(r: &mut impl Rng, max_dim: usize) -> Volume {
    let dims = [0; 3].map(|_| r.gen_range(1..=max_dim));
    let spacing = [0; 3].map(|_| r.gen_range(0.25..4.0));
    let p: f64 = r.gen_range(0.02..0.7);
    let data = (0..dims.iter().product())
        .map(|_| r.gen_bool(p) as u8 as f32)
        .collect();
    Volume::new(dims, spacing, data, VolumeKind::Mask).unwrap()
}

/// Same dims and spacing as `like`, fresh random content.
pub fn random_mask_like(r: &mut impl Rng, like: &Volume) -> Volume {
    let p: f64 = r.gen_range(0.02..0.7);
    let data = (0..like.data().len())
        .map(|_| r.gen_bool(p) as u8 as f32)
        .collect();
    Volume::new(like.dims(), like.spacing(), data, VolumeKind::Mask).unwrap()
}

/// Foreground voxels with a background or out-of-volume face neighbour.
pub fn brute_boundary(m: &Volume) -> Vec<[i64; 3]> {
    let [d, h, w] = m.dims().map(|v| v as i64);
    let at = |z: i64, y: i64, x: i64| {
        (0..d).contains(&z)
            && (0..h).contains(&y)
            && (0..w).contains(&x)
            && m.get(z as usize, y as usize, x as usize) == 1.0
    };
    let mut out = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let face = [
                    (-1, 0, 0),
                    (1, 0, 0),
                    (0, -1, 0),
                    (0, 1, 0),
                    (0, 0, -1),
                    (0, 0, 1),
                ];
                if at(z, y, x) && face.iter().any(|&(a, b, c)| !at(z + a, y + b, x + c)) {
                    out.push([z, y, x]);
                }
            }
        }
    }
    out
}

/// All-pairs symmetric Hausdorff distance; `None` if a boundary is empty.
pub fn brute_hausdorff(a: &Volume, b: &Volume, p95: bool) -> Option<f64> {
    let s = a.spacing();
    let (ba, bb) = (brute_boundary(a), brute_boundary(b));
    if ba.is_empty() || bb.is_empty() {
        return None;
    }
    let d2 = |p: [i64; 3], q: [i64; 3]| {
        let dz = (p[0] - q[0]) as f64 * s[0];
        let dy = (p[1] - q[1]) as f64 * s[1];
        let dx = (p[2] - q[2]) as f64 * s[2];
        dz * dz + dy * dy + dx * dx
    };
    let directed = |from: &[[i64; 3]], to: &[[i64; 3]]| -> Vec<f64> {
        from.iter()
            .map(|&p| to.iter().map(|&q| d2(p, q)).fold(f64::INFINITY, f64::min))
            .collect()
    };
    let mut all = directed(&ba, &bb);
    all.extend(directed(&bb, &ba));
    let v = if p95 {
        all.sort_by(f64::total_cmp);
        let rank = ((0.95 * all.len() as f64).ceil() as usize).clamp(1, all.len());
        all[rank - 1]
    } else {
        all.iter().copied().fold(0.0, f64::max)
    };
    Some(v.sqrt())
}

/// Masks as a `(1, 1, d·h, w)` tensor, the layout the Dice loss works on.
pub fn mask_tensor(v: &Volume) -> Tensor4<f64> {
    let [d, h, w] = v.dims();
    Tensor4::from_vec(
        [1, 1, d * h, w],
        v.data().iter().map(|&x| x as f64).collect(),
    )
    .unwrap()
}

/// Finite-difference checks of every layer kernel; `(name, max relative error)`.
pub fn kernel_grad_checks() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();

    // Each check differentiates <op(x), r> for a random probe r.
    let shape = [2, 3, 6, 6];
    let x = random_tensor(shape, 1);
    let r_same = random_tensor(shape, 2);

    {
        let w = random_vec(4 * 3 * 9, 3);
        let b = random_vec(4, 4);
        let r = random_tensor([2, 4, 6, 6], 5);
        let g = conv2d_backward(&x, &ConvParams::new(&w, &b, 3, 4).unwrap(), &r).unwrap();
        let f = |x: &[f64], w: &[f64], b: &[f64]| {
            let xt = Tensor4::from_vec(shape, x.to_vec()).unwrap();
            conv2d_forward(&xt, &ConvParams::new(w, b, 3, 4).unwrap())
                .unwrap()
                .dot(&r)
                .unwrap()
        };
        out.push((
            "conv3x3/input",
            grad_check(|p| f(p, &w, &b), x.data(), g.input.data())
                .unwrap()
                .max_rel_error,
        ));
        out.push((
            "conv3x3/weight",
            grad_check(|p| f(x.data(), p, &b), &w, &g.weight)
                .unwrap()
                .max_rel_error,
        ));
        out.push((
            "conv3x3/bias",
            grad_check(|p| f(x.data(), &w, p), &b, &g.bias)
                .unwrap()
                .max_rel_error,
        ));
    }
    {
        let gamma = [0.5, 1.5, -0.7];
        let beta = [0.1, -0.2, 0.3];
        let (zero, one) = ([0.0; 3], [1.0; 3]);
        let (_, cache) = batchnorm_forward(
            &x,
            &BatchNormParams::new(&gamma, &beta, &zero, &one),
            Mode::Train,
        )
        .unwrap();
        let g = batchnorm_backward(&cache, &gamma, &r_same).unwrap();
        let f = |x: &[f64], gamma: &[f64], beta: &[f64]| {
            let xt = Tensor4::from_vec(shape, x.to_vec()).unwrap();
            let (y, _) = batchnorm_forward(
                &xt,
                &BatchNormParams::new(gamma, beta, &zero, &one),
                Mode::Train,
            )
            .unwrap();
            y.dot(&r_same).unwrap()
        };
        out.push((
            "batchnorm/input",
            grad_check(|p| f(p, &gamma, &beta), x.data(), g.input.data())
                .unwrap()
                .max_rel_error,
        ));
        out.push((
            "batchnorm/gamma",
            grad_check(|p| f(x.data(), p, &beta), &gamma, &g.gamma)
                .unwrap()
                .max_rel_error,
        ));
        out.push((
            "batchnorm/beta",
            grad_check(|p| f(x.data(), &gamma, p), &beta, &g.beta)
                .unwrap()
                .max_rel_error,
        ));
    }
    let unary = |name: &'static str,
                 fwd: &dyn Fn(&Tensor4<f64>) -> Tensor4<f64>,
                 grad: Tensor4<f64>,
                 x: &Tensor4<f64>,
                 r: &Tensor4<f64>| {
        let s = x.shape();
        let f = |p: &[f64]| {
            fwd(&Tensor4::from_vec(s, p.to_vec()).unwrap())
                .dot(r)
                .unwrap()
        };
        (
            name,
            grad_check(f, x.data(), grad.data()).unwrap().max_rel_error,
        )
    };
    // Keep inputs away from the kinks of relu and max pool.
    let x_smooth = x.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    out.push(unary(
        "relu",
        &|t| relu(t),
        relu_backward(&x_smooth, &r_same).unwrap(),
        &x_smooth,
        &r_same,
    ));
    out.push(unary(
        "sigmoid",
        &|t| sigmoid(t),
        sigmoid_backward(&sigmoid(&x), &r_same).unwrap(),
        &x,
        &r_same,
    ));
    {
        let r = random_tensor([2, 3, 3, 3], 6);
        let (_, cache) = maxpool2x2_forward(&x).unwrap();
        out.push(unary(
            "maxpool2x2",
            &|t| maxpool2x2_forward(t).unwrap().0,
            maxpool2x2_backward(&cache, &r).unwrap(),
            &x,
            &r,
        ));
        out.push(unary(
            "center_crop",
            &|t| center_crop(t, 3, 3).unwrap(),
            center_crop_backward(&r, 6, 6).unwrap(),
            &x,
            &r,
        ));
    }
    {
        let r = random_tensor([2, 3, 12, 12], 7);
        out.push(unary(
            "upsample2x",
            &|t| upsample2x_nearest(t),
            upsample2x_nearest_backward(&r).unwrap(),
            &x,
            &r,
        ));
    }
    {
        let other = random_tensor(shape, 8);
        let r = random_tensor([2, 6, 6, 6], 9);
        let (ga, _) = split_channels(&r, 3).unwrap();
        out.push(unary(
            "concat",
            &|t| concat_channels(t, &other).unwrap(),
            ga,
            &x,
            &r,
        ));
    }
    {
        let y = Tensor4::from_fn([2, 1, 6, 6], |n, _, h, w| {
            ((n + h + w) % 3 == 0) as u8 as f64
        });
        let z = random_tensor([2, 1, 6, 6], 10).map(|v| 0.5 + 0.4 * v);
        let d = DiceConfig::default();
        let g = dice_loss_backward(&z, &y, &d).unwrap();
        let f = |p: &[f64]| {
            dice_loss(
                &Tensor4::from_vec([2, 1, 6, 6], p.to_vec()).unwrap(),
                &y,
                &d,
            )
            .unwrap()
            .mean
        };
        out.push((
            "dice_loss",
            grad_check(f, z.data(), g.data()).unwrap().max_rel_error,
        ));
    }
    out
}

/// Finite-difference check of the whole depth-2, base-4, 32×32 network with
/// the Dice loss in 64-bit, over every `stride`-th trainable coordinate.
pub fn composed_grad_check(stride: usize) -> GradCheckReport {
    let cfg = ZNetConfig {
        precision: Precision::F64,
        ..ZNetConfig::tiny()
    };
    let mut net = ZNet::<f64>::new(cfg, 5).unwrap();
    let x = random_tensor([2, 1, 32, 32], 1);
    let y = Tensor4::from_fn([2, 1, 32, 32], |_, _, h, w| ((h / 8 + w / 8) % 2) as f64);
    let d = DiceConfig::default();
    let pass = net.forward(&x, Mode::Train).unwrap();
    let g = dice_loss_backward(&pass.output, &y, &d).unwrap();
    net.backward(&pass, &g).unwrap();
    let analytic = net.store().flat_grads();
    let theta = net.store().flat_values();
    let mut probe = net.clone();
    let f = |t: &[f64]| {
        probe.store_mut().set_flat_values(t).unwrap();
        dice_loss(&probe.forward(&x, Mode::Train).unwrap().output, &y, &d)
            .unwrap()
            .mean
    };
    let coords: Vec<usize> = (0..theta.len()).step_by(stride).collect();
    grad_check_step(f, &theta, &analytic, &coords, 1e-6).unwrap()
}

/// Four 32×32 discs of radius 11–14 on a textured background.
pub fn disc_slices() -> Dataset {
    let mut d = Dataset::new((32, 32));
    for k in 0..4usize {
        let (cy, cx, r) = (14.0 + k as f64, 15.0 + k as f64, 11.0 + k as f64);
        let mut img = vec![0f32; 1024];
        let mut m = vec![0f32; 1024];
        for y in 0..32 {
            for x in 0..32 {
                let inside = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r;
                m[y * 32 + x] = inside as u8 as f32;
                img[y * 32 + x] = if inside { 1.0 } else { -0.3 }
                    + 0.1 * (((y * 7 + x * 13 + k) % 5) as f32 - 2.0);
            }
        }
        d.push(img, m).unwrap();
    }
    d
}
