use crate::error::{Error, Result};
use crate::image::{GrayImage, RasterImage};

/// ITU-R BT.601 luma, normalized to `[0, 1]`.
pub fn to_grayscale(img: &RasterImage) -> GrayImage {
    let data = img
        .pixels()
        .map(|[r, g, b]| (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0)
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    GrayImage {
        width: img.width(),
        height: img.height(),
        data,
    }
}

/// Normalized 1-D Gaussian taps of radius `ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let k = gaussian_kernel(sigma)?;
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width, img.height);

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * img.get_clamped(x as isize + i as isize - r, y as isize);
            }
            tmp[y * w + x] = acc;
        }
    }
    let tmp = GrayImage { width: w, height: h, data: tmp };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp.get_clamped(x as isize, y as isize + i as isize - r);
            }
            out[y * w + x] = acc;
        }
    }
    Ok(GrayImage { width: w, height: h, data: out })
}

/// Per-pixel Sobel response. Orientation is `atan2(gy, gx)` in radians with
/// y pointing down.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub orientation: Vec<f64>,
}

pub fn sobel_gradients(img: &GrayImage) -> GradientField {
    let (w, h) = (img.width, img.height);
    let n = w * h;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y as usize * w + x as usize;
            gx[i] = sx;
            gy[i] = sy;
        }
    }
    let magnitude = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let orientation = gx.iter().zip(&gy).map(|(a, b)| b.atan2(*a)).collect();
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
        orientation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_extremes() {
        let black = to_grayscale(&RasterImage::filled(4, 3, [0, 0, 0]));
        assert!(black.data.iter().all(|&v| v == 0.0));
        let white = to_grayscale(&RasterImage::filled(4, 3, [255, 255, 255]));
        assert!(white.data.iter().all(|&v| (v - 1.0).abs() < 1e-6));
        let red = to_grayscale(&RasterImage::filled(4, 3, [255, 0, 0]));
        assert!(red.data.iter().all(|&v| (v - 0.299).abs() < 1e-6));
    }

    #[test]
    fn kernel_normalized() {
        for sigma in [0.3, 0.5, 1.0, 1.4, 2.0, 3.7] {
            let k = gaussian_kernel(sigma).unwrap();
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
        }
    }

    #[test]
    fn blur_rejects_non_positive_sigma() {
        let img = GrayImage::filled(3, 3, 0.5);
        assert!(gaussian_blur(&img, 0.0).is_err());
        assert!(gaussian_blur(&img, -1.0).is_err());
    }

    #[test]
    fn blur_preserves_constant() {
        let img = GrayImage::filled(9, 7, 0.42);
        for sigma in [0.5, 1.4, 3.0] {
            let out = gaussian_blur(&img, sigma).unwrap();
            assert!(out.data.iter().all(|v| (v - 0.42).abs() < 1e-6));
        }
    }

    #[test]
    fn blur_impulse_matches_analytic_kernel() {
        let n = 21;
        let mut img = GrayImage::filled(n, n, 0.0);
        img.data[10 * n + 10] = 1.0;
        let out = gaussian_blur(&img, 1.0).unwrap();
        // Oracle: sample exp(-(x^2+y^2)/2) on the 7x7 support and normalize.
        let mut norm = 0.0;
        for dy in -3i32..=3 {
            for dx in -3i32..=3 {
                norm += (-((dx * dx + dy * dy) as f64) / 2.0).exp();
            }
        }
        for y in 0..n {
            for x in 0..n {
                let (dx, dy) = (x as i32 - 10, y as i32 - 10);
                let expected = if dx.abs() <= 3 && dy.abs() <= 3 {
                    (-((dx * dx + dy * dy) as f64) / 2.0).exp() / norm
                } else {
                    0.0
                };
                assert!((out.get(x, y) - expected).abs() < 1e-12, "({x},{y})");
            }
        }
        assert!((out.data.iter().sum::<f64>() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn sobel_constant_is_zero() {
        let g = sobel_gradients(&GrayImage::filled(8, 8, 0.7));
        assert!(g.magnitude.iter().all(|&m| m.abs() < 1e-12));
    }

    #[test]
    fn sobel_vertical_step() {
        let (w, h) = (8, 6);
        let img = GrayImage::new(w, h, (0..w * h).map(|i| if i % w >= w / 2 { 1.0 } else { 0.0 }).collect()).unwrap();
        let g = sobel_gradients(&img);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                assert_eq!(g.gy[i], 0.0);
                // Hand convolution: the columns either side of the step see
                // (1 + 2 + 1) * (1 - 0) = 4, all others see nothing.
                let expected = if x == w / 2 - 1 || x == w / 2 { 4.0 } else { 0.0 };
                assert_eq!(g.gx[i], expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn sobel_transpose_swaps_axes() {
        let (w, h) = (7, 5);
        let img = GrayImage::new(w, h, (0..w * h).map(|i| ((i * 37) % 11) as f64 / 10.0).collect()).unwrap();
        let a = sobel_gradients(&img);
        let b = sobel_gradients(&img.transpose());
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let j = x * h + y;
                assert!((a.gx[i] - b.gy[j]).abs() < 1e-12);
                assert!((a.gy[i] - b.gx[j]).abs() < 1e-12);
            }
        }
    }
}
