//! Grid resampling. Nearest neighbour uses `src = floor(dst · src_len / dst_len)`
//! on every axis; trilinear aligns voxel centres.

use rayon::prelude::*;

/// Source index of destination index `dst` when `src_len` samples are
/// resampled to `dst_len`.
#[inline]
pub fn nn_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    dst * src_len / dst_len
}

pub fn resize2d_nn(src: &[f32], from: (usize, usize), to: (usize, usize)) -> Vec<f32> {
    assert_eq!(src.len(), from.0 * from.1, "resize2d_nn: source length");
    if from == to {
        return src.to_vec();
    }
    let xs: Vec<usize> = (0..to.1).map(|x| nn_index(x, from.1, to.1)).collect();
    let mut out = Vec::with_capacity(to.0 * to.1);
    for y in 0..to.0 {
        let row = &src[nn_index(y, from.0, to.0) * from.1..][..from.1];
        out.extend(xs.iter().map(|&x| row[x]));
    }
    out
}

pub fn resize3d_nn(src: &[f32], from: [usize; 3], to: [usize; 3]) -> Vec<f32> {
    assert_eq!(
        src.len(),
        from.iter().product::<usize>(),
        "resize3d_nn: source length"
    );
    if from == to {
        return src.to_vec();
    }
    let plane = from[1] * from[2];
    let mut out = vec![0.0f32; to.iter().product()];
    out.par_chunks_mut(to[1] * to[2])
        .enumerate()
        .for_each(|(z, dst)| {
            let sz = nn_index(z, from[0], to[0]);
            dst.copy_from_slice(&resize2d_nn(
                &src[sz * plane..][..plane],
                (from[1], from[2]),
                (to[1], to[2]),
            ));
        });
    out
}

/// Two neighbouring source indices and the weight of the second for a
/// centre-aligned linear resample.
fn linear_taps(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f32) {
    let p = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
        .clamp(0.0, (src_len - 1) as f64);
    let i0 = p.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, (p - i0 as f64) as f32)
}

pub fn resize3d_trilinear(src: &[f32], from: [usize; 3], to: [usize; 3]) -> Vec<f32> {
    assert_eq!(
        src.len(),
        from.iter().product::<usize>(),
        "resize3d_trilinear: source length"
    );
    if from == to {
        return src.to_vec();
    }
    let ys: Vec<_> = (0..to[1]).map(|y| linear_taps(y, from[1], to[1])).collect();
    let xs: Vec<_> = (0..to[2]).map(|x| linear_taps(x, from[2], to[2])).collect();
    let at = |z: usize, y: usize, x: usize| src[(z * from[1] + y) * from[2] + x];
    let mut out = vec![0.0f32; to.iter().product()];
    out.par_chunks_mut(to[1] * to[2])
        .enumerate()
        .for_each(|(z, dst)| {
            let (z0, z1, tz) = linear_taps(z, from[0], to[0]);
            for (y, &(y0, y1, ty)) in ys.iter().enumerate() {
                for (x, &(x0, x1, tx)) in xs.iter().enumerate() {
                    let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
                    let plane = |zz| {
                        lerp(
                            lerp(at(zz, y0, x0), at(zz, y0, x1), tx),
                            lerp(at(zz, y1, x0), at(zz, y1, x1), tx),
                            ty,
                        )
                    };
                    dst[y * to[2] + x] = lerp(plane(z0), plane(z1), tz);
                }
            }
        });
    out
}
