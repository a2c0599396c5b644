//! Forward kernels and the raw-slice GEMM helpers shared with the tape's
//! backward rules. Every reduction runs in a fixed sequential order.

use super::Tensor;
use crate::error::{dim_err, Result};

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            c[i * n + j] += acc;
        }
    }
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let a_pi = a[p * m + i];
            if a_pi == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_pi * bv;
            }
        }
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.expect_rank(2, "matmul lhs")?;
    b.expect_rank(2, "matmul rhs")?;
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return dim_err(format!(
            "matmul inner extents differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let mut out = vec![0.0; m * n];
    gemm_nn(a.data(), b.data(), &mut out, m, k, n);
    Ok(Tensor::from_parts(vec![m, n], out))
}

pub(crate) fn softmax_rows_inplace(data: &mut [f64], width: usize) {
    for row in data.chunks_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Softmax over the last axis with max subtraction.
pub fn softmax_lastdim(x: &Tensor) -> Result<Tensor> {
    if x.rank() == 0 || x.is_empty() {
        return dim_err("softmax of an empty tensor");
    }
    let width = *x.shape().last().unwrap();
    let mut data = x.data().to_vec();
    softmax_rows_inplace(&mut data, width);
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

/// Output plus the attention probabilities, for a single `[Lq×d]·[Lk×d]ᵀ` problem
/// laid out in raw slices.
pub(crate) fn attention_raw(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    lq: usize,
    lk: usize,
    d: usize,
    dv: usize,
) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (d as f64).sqrt();
    let mut probs = vec![0.0; lq * lk];
    gemm_nt(q, k, &mut probs, lq, d, lk);
    for p in probs.iter_mut() {
        *p *= scale;
    }
    softmax_rows_inplace(&mut probs, lk);
    let mut out = vec![0.0; lq * dv];
    gemm_nn(&probs, v, &mut out, lq, lk, dv);
    (out, probs)
}

pub(crate) fn check_attention_shapes(q: &[usize], k: &[usize], v: &[usize]) -> Result<()> {
    let r = q.len();
    if r < 2 || k.len() != r || v.len() != r {
        return dim_err(format!("attention ranks differ: {q:?} {k:?} {v:?}"));
    }
    if q[..r - 2] != k[..r - 2] || q[..r - 2] != v[..r - 2] {
        return dim_err(format!("attention batch extents differ: {q:?} {k:?} {v:?}"));
    }
    if q[r - 1] != k[r - 1] {
        return dim_err(format!("query/key feature extents differ: {q:?} vs {k:?}"));
    }
    if k[r - 2] != v[r - 2] {
        return dim_err(format!("key/value lengths differ: {k:?} vs {v:?}"));
    }
    Ok(())
}

/// `softmax(Q·Kᵀ/√d)·V` for `Q[Lq×d]`, `K[Lk×d]`, `V[Lk×dv]`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    q.expect_rank(2, "attention query")?;
    check_attention_shapes(q.shape(), k.shape(), v.shape())?;
    let (lq, d) = (q.shape()[0], q.shape()[1]);
    let (lk, dv) = (k.shape()[0], v.shape()[1]);
    let (out, _) = attention_raw(q.data(), k.data(), v.data(), lq, lk, d, dv);
    Ok(Tensor::from_parts(vec![lq, dv], out))
}

/// Expands `x[C×H×W]` into `[C·9 × H·W]` columns for a 3×3, pad-1 kernel.
pub(crate) fn im2col3(x: &[f64], c: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..(ci * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let out = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (xx, o) in out.iter_mut().enumerate() {
                        let sx = xx as isize + kx as isize - 1;
                        *o = if sx < 0 || sx >= w as isize {
                            0.0
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: accumulates columns back into `dx[C×H×W]`.
pub(crate) fn col2im3(cols: &[f64], c: usize, h: usize, w: usize, dx: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..(ci * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize] += row[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvDims {
    pub n: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
}

pub(crate) fn conv_dims(x: &[usize], w: &[usize], b: &[usize]) -> Result<ConvDims> {
    if x.len() != 4 || w.len() != 4 || b.len() != 1 {
        return dim_err(format!("conv2d_3x3 ranks: x {x:?}, w {w:?}, b {b:?}"));
    }
    if w[2] != 3 || w[3] != 3 {
        return dim_err(format!("conv2d_3x3 kernel must be 3x3, got {w:?}"));
    }
    if w[1] != x[1] {
        return dim_err(format!(
            "conv2d_3x3 channel mismatch: input has {}, kernel expects {}",
            x[1], w[1]
        ));
    }
    if b[0] != w[0] {
        return dim_err(format!("conv2d_3x3 bias {b:?} vs kernel {w:?}"));
    }
    Ok(ConvDims {
        n: x[0],
        c_in: x[1],
        c_out: w[0],
        h: x[2],
        w: x[3],
    })
}

/// Batched 3×3 cross-correlation with zero padding 1: `x[N×Cin×H×W]` → `[N×Cout×H×W]`.
pub fn conv2d_3x3_batched(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d = conv_dims(x.shape(), w.shape(), b.shape())?;
    let hw = d.h * d.w;
    let k = d.c_in * 9;
    let mut cols = vec![0.0; k * hw];
    let mut out = vec![0.0; d.n * d.c_out * hw];
    for img in 0..d.n {
        im2col3(
            &x.data()[img * d.c_in * hw..(img + 1) * d.c_in * hw],
            d.c_in,
            d.h,
            d.w,
            &mut cols,
        );
        let o = &mut out[img * d.c_out * hw..(img + 1) * d.c_out * hw];
        for (co, bias) in b.data().iter().enumerate() {
            o[co * hw..(co + 1) * hw].fill(*bias);
        }
        gemm_nn(w.data(), &cols, o, d.c_out, k, hw);
    }
    Ok(Tensor::from_parts(vec![d.n, d.c_out, d.h, d.w], out))
}

/// `x[Cin×H×W]`, `w[Cout×Cin×3×3]`, `b[Cout]` → `[Cout×H×W]`.
pub fn conv2d_3x3(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    x.expect_rank(3, "conv2d_3x3 input")?;
    let s = x.shape();
    let batched = x.reshape(&[1, s[0], s[1], s[2]])?;
    let out = conv2d_3x3_batched(&batched, w, b)?;
    let os = out.shape().to_vec();
    out.reshape(&os[1..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.at(&[i, p]) * b.at(&[p, j]);
                }
                out.set(&[i, j], s);
            }
        }
        out
    }

    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let co = w.shape()[0];
        let mut out = Tensor::zeros(&[co, h, wd]);
        for o in 0..co {
            for y in 0..h {
                for xx in 0..wd {
                    let mut s = b.at(&[o]);
                    for c in 0..ci {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                                    s += w.at(&[o, c, ky, kx]) * x.at(&[c, sy as usize, sx as usize]);
                                }
                            }
                        }
                    }
                    out.set(&[o, y, xx], s);
                }
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_annihilation() {
        let i2 = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matmul(&i2, &m).unwrap(), m);
        let a = t(&[2, 2], &[1.0, 0.0, 0.0, 0.0]);
        let b = t(&[2, 2], &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(matmul(&a, &b).unwrap(), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[4, 2], 1.0, &mut rng);
        let diff = matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)).unwrap();
        assert!(diff <= 1e-12);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &a), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_lastdim(&t(&[3], &[0.0, 0.0, 0.0])).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_lastdim(&t(&[2], &[1000.0, 0.0])).unwrap();
        assert!(s.all_finite());
        assert_eq!(s.data()[0], 1.0);
        assert!(s.data()[1] < 1e-300);

        // exp/normalize oracle
        let s = softmax_lastdim(&t(&[3], &[1.0, 2.0, 3.0])).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in s.data().iter().enumerate() {
            assert!((v - ((i + 1) as f64).exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_single_key_and_zero_query() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = Tensor::randn(&[4, 3], 1.0, &mut rng);
        let k = Tensor::randn(&[1, 3], 1.0, &mut rng);
        let v = Tensor::randn(&[1, 2], 1.0, &mut rng);
        let out = scaled_dot_attention(&q, &k, &v).unwrap();
        for r in 0..4 {
            assert_eq!(out.at(&[r, 0]), v.at(&[0, 0]));
            assert_eq!(out.at(&[r, 1]), v.at(&[0, 1]));
        }

        let q0 = Tensor::zeros(&[2, 3]);
        let k = Tensor::randn(&[5, 3], 1.0, &mut rng);
        let v = Tensor::randn(&[5, 2], 1.0, &mut rng);
        let out = scaled_dot_attention(&q0, &k, &v).unwrap();
        for c in 0..2 {
            let mean: f64 = (0..5).map(|r| v.at(&[r, c])).sum::<f64>() / 5.0;
            assert!((out.at(&[0, c]) - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_matches_two_step_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = Tensor::randn(&[3, 2], 1.0, &mut rng);
        let k = Tensor::randn(&[3, 2], 1.0, &mut rng);
        let v = Tensor::randn(&[3, 2], 1.0, &mut rng);
        let out = scaled_dot_attention(&q, &k, &v).unwrap();
        for i in 0..3 {
            let scores: Vec<f64> = (0..3)
                .map(|j| (q.at(&[i, 0]) * k.at(&[j, 0]) + q.at(&[i, 1]) * k.at(&[j, 1])) / 2f64.sqrt())
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for c in 0..2 {
                let expected: f64 = (0..3).map(|j| scores[j].exp() / z * v.at(&[j, c])).sum();
                assert!((out.at(&[i, c]) - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn attention_shape_errors() {
        let q = Tensor::zeros(&[2, 3]);
        let k = Tensor::zeros(&[2, 4]);
        let v = Tensor::zeros(&[2, 2]);
        assert!(scaled_dot_attention(&q, &k, &v).is_err());
        let k = Tensor::zeros(&[2, 3]);
        let v = Tensor::zeros(&[3, 2]);
        assert!(scaled_dot_attention(&q, &k, &v).is_err());
    }

    #[test]
    fn conv_identity_kernel_and_zero_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(&[2, 4, 5], 1.0, &mut rng);
        let mut w = Tensor::zeros(&[2, 2, 3, 3]);
        w.set(&[0, 0, 1, 1], 1.0);
        w.set(&[1, 1, 1, 1], 1.0);
        let b = Tensor::zeros(&[2]);
        assert_eq!(conv2d_3x3(&x, &w, &b).unwrap(), x);

        let w = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng);
        let b = t(&[3], &[0.5, -1.0, 2.0]);
        let out = conv2d_3x3(&Tensor::zeros(&[2, 4, 4]), &w, &b).unwrap();
        for c in 0..3 {
            for y in 0..4 {
                for xx in 0..4 {
                    assert_eq!(out.at(&[c, y, xx]), b.at(&[c]));
                }
            }
        }
    }

    #[test]
    fn conv_matches_six_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::randn(&[2, 4, 4], 1.0, &mut rng);
        let w = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng);
        let b = Tensor::randn(&[3], 1.0, &mut rng);
        let diff = conv2d_3x3(&x, &w, &b)
            .unwrap()
            .max_abs_diff(&naive_conv(&x, &w, &b))
            .unwrap();
        assert!(diff <= 1e-12);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(&[3, 4, 4]);
        let w = Tensor::zeros(&[2, 2, 3, 3]);
        let b = Tensor::zeros(&[2]);
        assert!(matches!(conv2d_3x3(&x, &w, &b), Err(crate::Error::Dimension(_))));
    }
}
