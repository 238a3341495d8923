use crate::error::{Error, Result};
use crate::image::{BinaryMask, RasterImage};

/// Bilinear resize with half-pixel-center sampling and clamp-to-edge borders.
pub fn resize_bilinear(img: &RasterImage, w: usize, h: usize) -> Result<RasterImage> {
    if w == 0 || h == 0 {
        return Err(Error::param("target dimensions must be at least 1x1"));
    }
    if img.dims() == (w, h) {
        return Ok(img.clone());
    }
    let (sw, sh) = img.dims();
    let sx = sw as f64 / w as f64;
    let sy = sh as f64 / h as f64;
    let mut out = RasterImage::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        for x in 0..w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            out.set(x, y, sample_bilinear(img, fx, fy));
        }
    }
    Ok(out)
}

/// Bilinear sample at a position already clamped inside the image.
pub(crate) fn sample_bilinear(img: &RasterImage, fx: f64, fy: f64) -> [u8; 3] {
    let (sw, sh) = img.dims();
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let x1 = (x0 + 1).min(sw - 1);
    let y1 = (y0 + 1).min(sh - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
    let mut px = [0u8; 3];
    for ch in 0..3 {
        let top = a[ch] as f64 * (1.0 - tx) + b[ch] as f64 * tx;
        let bottom = c[ch] as f64 * (1.0 - tx) + d[ch] as f64 * tx;
        px[ch] = (top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8;
    }
    px
}

/// Nearest-neighbor resize for masks.
pub fn resize_nearest_mask(mask: &BinaryMask, w: usize, h: usize) -> BinaryMask {
    if mask.dims() == (w, h) {
        return mask.clone();
    }
    let (sw, sh) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        let sx = (((x as f64 + 0.5) * sw as f64 / w as f64) as usize).min(sw - 1);
        let sy = (((y as f64 + 0.5) * sh as f64 / h as f64) as usize).min(sh - 1);
        mask.get(sx, sy)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let img = RasterImage::new(3, 2, (0..18).map(|v| v as u8 * 13).collect()).unwrap();
        assert_eq!(resize_bilinear(&img, 3, 2).unwrap(), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = RasterImage::filled(5, 7, [12, 200, 99]);
        let out = resize_bilinear(&img, 13, 3).unwrap();
        assert!(out.pixels().all(|p| p == [12, 200, 99]));
    }

    #[test]
    fn two_pixel_ramp_upsampled() {
        let img = RasterImage::new(2, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let out = resize_bilinear(&img, 4, 1).unwrap();
        // Half-pixel centers map to source x = -0.25, 0.25, 0.75, 1.25.
        let vals: Vec<u8> = out.pixels().map(|p| p[0]).collect();
        assert_eq!(vals, vec![0, 64, 191, 255]);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_zero_target() {
        let img = RasterImage::filled(2, 2, [0, 0, 0]);
        assert!(resize_bilinear(&img, 0, 2).is_err());
    }

    #[test]
    fn nearest_mask_upsample() {
        let mut m = BinaryMask::new(2, 2);
        m.set(1, 1, true);
        let up = resize_nearest_mask(&m, 4, 4);
        assert_eq!(up.count(), 4);
        assert!(up.get(3, 3) && up.get(2, 2) && !up.get(1, 1));
    }
}
