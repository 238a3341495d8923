use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::filter::{gaussian_blur, sobel_gradients, GradientField};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, EdgeMap, GrayImage};

/// Canny operating point. Thresholds apply to gradient magnitudes normalized
/// by the image's maximum Sobel response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.1,
            high: 0.25,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::param(format!("canny sigma must be positive, got {}", self.sigma)));
        }
        if !(self.low >= 0.0 && self.low < self.high) {
            return Err(Error::param(format!(
                "canny thresholds need 0 <= low < high, got low={} high={}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Neighbor offset along the quantized gradient direction (4 bins).
pub(crate) fn direction_offset(orientation: f64) -> (isize, isize) {
    let mut deg = orientation.to_degrees() % 180.0;
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Normalized magnitudes after non-maximum suppression; suppressed pixels are 0.
pub(crate) fn non_max_suppression(g: &GradientField, normalized: &[f64]) -> Vec<f64> {
    let (w, h) = (g.width as isize, g.height as isize);
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            normalized[(y * w + x) as usize]
        }
    };
    let mut out = vec![0.0; normalized.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let m = normalized[i];
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = direction_offset(g.orientation[i]);
            // Strict on one side so that symmetric plateaus keep one pixel.
            if m > at(x - dx, y - dy) && m >= at(x + dx, y + dy) {
                out[i] = m;
            }
        }
    }
    out
}

/// Blur, Sobel, non-maximum suppression, then double-threshold hysteresis
/// with 8-connectivity.
pub fn canny(img: &GrayImage, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    let blurred = gaussian_blur(img, params.sigma)?;
    let g = sobel_gradients(&blurred);
    let (w, h) = (img.width, img.height);
    let max = g.magnitude.iter().cloned().fold(0.0, f64::max);
    let mut edges = BinaryMask::new(w, h);
    if max <= 1e-12 {
        return Ok(EdgeMap(edges));
    }
    let normalized: Vec<f64> = g.magnitude.iter().map(|m| m / max).collect();
    let thin = non_max_suppression(&g, &normalized);

    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= params.high {
            edges.data[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges.data[j] && thin[j] > 0.0 && thin[j] >= params.low {
                    edges.data[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(EdgeMap(edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_fixture() -> GrayImage {
        GrayImage::new(
            100,
            100,
            (0..100 * 100)
                .map(|i| {
                    let (x, y) = (i % 100, i / 100);
                    if (30..70).contains(&x) && (30..70).contains(&y) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_thresholds() {
        let img = GrayImage::filled(4, 4, 0.0);
        let p = CannyParams { low: 0.3, high: 0.3, ..Default::default() };
        assert!(canny(&img, &p).is_err());
    }

    #[test]
    fn constant_has_no_edges() {
        let e = canny(&GrayImage::filled(32, 24, 0.3), &CannyParams::default()).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn threshold_monotonicity() {
        let img = square_fixture();
        let strict = canny(&img, &CannyParams { sigma: 1.4, low: 0.1, high: 0.3 }).unwrap();
        let loose = canny(&img, &CannyParams { sigma: 1.4, low: 0.05, high: 0.15 }).unwrap();
        assert!(strict.is_subset_of(&loose));
    }

    #[test]
    fn direction_bins() {
        assert_eq!(direction_offset(0.0), (1, 0));
        assert_eq!(direction_offset(std::f64::consts::PI), (1, 0));
        assert_eq!(direction_offset(std::f64::consts::FRAC_PI_4), (1, 1));
        assert_eq!(direction_offset(std::f64::consts::FRAC_PI_2), (0, 1));
        assert_eq!(direction_offset(-std::f64::consts::FRAC_PI_2), (0, 1));
        assert_eq!(direction_offset(3.0 * std::f64::consts::FRAC_PI_4), (-1, 1));
    }
}
