use crate::error::{dim_err, Result};
use crate::numerics::{compensated_sum, Tensor};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 1e-4;
pub const C2: f64 = 9e-4;

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    let mid = (WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *t = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= s;
    }
    taps
}

/// Windowed weighted mean of `x[H×W]` over all fully contained windows.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let (ho, wo) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for xo in 0..wo {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * x[y * w + xo + k];
            }
            rows[y * wo + xo] = acc;
        }
    }
    let mut out = vec![0.0; ho * wo];
    for yo in 0..ho {
        for xo in 0..wo {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * rows[(yo + k) * wo + xo];
            }
            out[yo * wo + xo] = acc;
        }
    }
    out
}

/// Per-window SSIM from local statistics.
pub fn ssim_from_stats(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let num = (2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2);
    let den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2);
    num / den
}

/// Mean SSIM over channels and valid 11×11 Gaussian windows of two `[C×H×W]` images in `[0, 1]`.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_rank(3, "ssim")?;
    a.expect_same_shape(b, "ssim")?;
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    if h < WINDOW || w < WINDOW {
        return dim_err(format!("ssim needs extents ≥ {WINDOW}, got {h}×{w}"));
    }
    let taps = gaussian_taps();
    let plane = h * w;
    let mut values = Vec::new();
    for ch in 0..c {
        let pa = &a.data()[ch * plane..(ch + 1) * plane];
        let pb = &b.data()[ch * plane..(ch + 1) * plane];
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(pa, h, w, &taps);
        let mu_b = filter_valid(pb, h, w, &taps);
        let e_aa = filter_valid(&aa, h, w, &taps);
        let e_bb = filter_valid(&bb, h, w, &taps);
        let e_ab = filter_valid(&ab, h, w, &taps);
        for i in 0..mu_a.len() {
            let var_a = e_aa[i] - mu_a[i] * mu_a[i];
            let var_b = e_bb[i] - mu_b[i] * mu_b[i];
            let cov = e_ab[i] - mu_a[i] * mu_b[i];
            values.push(ssim_from_stats(mu_a[i], mu_b[i], var_a, var_b, cov));
        }
    }
    let n = values.len() as f64;
    Ok(compensated_sum(values) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct 2-D weighted window statistics, no separability.
    fn naive(a: &Tensor, b: &Tensor) -> f64 {
        let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
        let mid = 5.0;
        let mut wts = [[0.0; WINDOW]; WINDOW];
        let mut total = 0.0;
        for (i, row) in wts.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let d2 = (i as f64 - mid).powi(2) + (j as f64 - mid).powi(2);
                *v = (-d2 / (2.0 * 1.5 * 1.5)).exp();
                total += *v;
            }
        }
        let mut sum = 0.0;
        let mut count = 0.0;
        for ch in 0..c {
            for y in 0..=h - WINDOW {
                for x in 0..=w - WINDOW {
                    let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..WINDOW {
                        for j in 0..WINDOW {
                            let wt = wts[i][j] / total;
                            let va = a.at(&[ch, y + i, x + j]);
                            let vb = b.at(&[ch, y + i, x + j]);
                            ma += wt * va;
                            mb += wt * vb;
                            saa += wt * va * va;
                            sbb += wt * vb * vb;
                            sab += wt * va * vb;
                        }
                    }
                    let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                    sum += ((2.0 * ma * mb + 1e-4) * (2.0 * cov + 9e-4))
                        / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
                    count += 1.0;
                }
            }
        }
        sum / count
    }

    fn uniform(shape: &[usize], seed: u64) -> Tensor {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn self_similarity_is_exactly_one() {
        for seed in 0..5 {
            let x = uniform(&[3, 16, 20], seed);
            assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        }
        let flat = Tensor::full(&[3, 12, 12], 0.3);
        assert_eq!(ssim(&flat, &flat).unwrap(), 1.0);
    }

    #[test]
    fn inverted_checkerboard_is_negative() {
        let mut x = Tensor::zeros(&[1, 16, 16]);
        for y in 0..16 {
            for z in 0..16 {
                x.set(&[0, y, z], ((y + z) % 2) as f64);
            }
        }
        let inv = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &inv).unwrap() < 0.0);
    }

    #[test]
    fn matches_naive_window_oracle() {
        for seed in 0..3 {
            let a = uniform(&[3, 14, 17], seed);
            let b = uniform(&[3, 14, 17], seed + 10);
            let blend = a.zip_map(&b, |x, y| 0.7 * x + 0.3 * y).unwrap();
            for (p, q) in [(&a, &b), (&a, &blend)] {
                let fast = ssim(p, q).unwrap();
                assert!((fast - naive(p, q)).abs() <= 1e-9, "{fast}");
                assert!((fast - ssim(q, p).unwrap()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rejects_small_or_mismatched() {
        assert!(ssim(&Tensor::zeros(&[3, 10, 20]), &Tensor::zeros(&[3, 10, 20])).is_err());
        assert!(ssim(&Tensor::zeros(&[3, 12, 12]), &Tensor::zeros(&[3, 12, 13])).is_err());
    }

    #[test]
    fn taps_are_normalised() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }
}
