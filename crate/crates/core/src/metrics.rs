//! Evaluation metrics. PSNR lives with the losses; SSIM is evaluation-only
//! and never recorded on a tape.

use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

pub use crate::losses::{psnr, psnr_from_rmse, rmse, PsnrConfig};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Valid-mode separable Gaussian filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of one pair of `h × w` planes.
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, max_value: f64) -> Result<f64> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return shape_err(
            "ssim",
            format!("image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        );
    }
    if a.len() != h * w || b.len() != h * w {
        return shape_err("ssim", format!("planes must hold {h}x{w} values"));
    }
    let k = gaussian_kernel();
    let c1 = (0.01 * max_value).powi(2);
    let c2 = (0.03 * max_value).powi(2);
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let aa = filter_valid(&prod(|x, _| x * x), h, w, &k);
    let bb = filter_valid(&prod(|_, y| y * y), h, w, &k);
    let ab = filter_valid(&prod(|x, y| x * y), h, w, &k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}

/// SSIM averaged over every (sample, channel) plane.
pub fn ssim<R: Real>(pred: &Tensor<R>, target: &Tensor<R>, max_value: f64) -> Result<f64> {
    if pred.shape() != target.shape() {
        return shape_err("ssim", format!("{} vs {}", pred.shape(), target.shape()));
    }
    let s = pred.shape();
    let mut total = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            let a: Vec<f64> = pred.plane(n, c).iter().map(|v| v.as_f64()).collect();
            let b: Vec<f64> = target.plane(n, c).iter().map(|v| v.as_f64()).collect();
            total += ssim_plane(&a, &b, s.h, s.w, max_value)?;
        }
    }
    Ok(total / (s.n * s.c) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(shape, (0..shape.numel()).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert_abs_diff_eq!(k.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(k[i], k[SSIM_WINDOW - 1 - i]);
        }
    }

    #[test]
    fn identical_images_score_one() {
        let x = random(Shape::new(2, 3, 16, 16), 1);
        assert_abs_diff_eq!(ssim(&x, &x, 1.0).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn symmetric() {
        let x = random(Shape::new(1, 3, 16, 20), 2);
        let y = random(Shape::new(1, 3, 16, 20), 3);
        assert_abs_diff_eq!(
            ssim(&x, &y, 1.0).unwrap(),
            ssim(&y, &x, 1.0).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn inverted_binary_image_is_negative() {
        let s = Shape::new(1, 1, 16, 16);
        let x = Tensor::<f32>::from_vec(
            s,
            (0..256).map(|i| if (i / 16 + i % 16) % 2 == 0 { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        let inv = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &inv, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn constant_planes_closed_form() {
        let s = Shape::new(1, 1, 12, 12);
        let a = Tensor::<f64>::full(s, 0.5);
        let b = Tensor::<f64>::full(s, 0.6);
        let expected = (2.0 * 0.5 * 0.6 + 1e-4) / (0.25 + 0.36 + 1e-4);
        assert_abs_diff_eq!(ssim(&a, &b, 1.0).unwrap(), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(expected, 0.9836, epsilon = 1e-4);
    }

    #[test]
    fn rejects_small_images() {
        let x = random(Shape::new(1, 3, 10, 32), 4);
        assert!(ssim(&x, &x, 1.0).is_err());
    }

    #[test]
    fn psnr_is_symmetric() {
        let x = random(Shape::new(1, 3, 8, 8), 5);
        let y = random(Shape::new(1, 3, 8, 8), 6);
        let cfg = PsnrConfig::default();
        assert_eq!(psnr(&x, &y, &cfg).unwrap(), psnr(&y, &x, &cfg).unwrap());
    }
}
