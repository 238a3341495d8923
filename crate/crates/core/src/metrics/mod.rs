//! Image-quality and detection metrics, plus the before/after evaluation
//! harness.

mod eval;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use eval::{eval_run, EvalMetadata, EvalOptions, EvalReport, EvalRow, CSV_HEADER};

use crate::detector::ArtifactClass;
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage, RasterImage};
use crate::vision::to_grayscale;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn ssim_window(len: usize) -> Vec<f64> {
    let r = (len / 2) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable weighted sum over every fully-contained window position.
fn valid_filter(data: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * data[y * w + x + i];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * rows[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, ow, oh)
}

/// SSIM on grayscale intensities in `[0, 1]`.
pub fn ssim_gray(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::dims((a.width, a.height), (b.width, b.height)));
    }
    let (w, h) = (a.width, a.height);
    let mut win = SSIM_WINDOW.min(w).min(h);
    if win % 2 == 0 {
        win -= 1;
    }
    let k = ssim_window(win);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let xx: Vec<f64> = a.data.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = b.data.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    let (mx, _, _) = valid_filter(&a.data, w, h, &k);
    let (my, _, _) = valid_filter(&b.data, w, h, &k);
    let (sxx, _, _) = valid_filter(&xx, w, h, &k);
    let (syy, _, _) = valid_filter(&yy, w, h, &k);
    let (sxy, _, _) = valid_filter(&xy, w, h, &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = (sxx[i] - ux * ux).max(0.0);
        let vy = (syy[i] - uy * uy).max(0.0);
        let cov = sxy[i] - ux * uy;
        let num = (2.0 * ux * uy + c1) * (2.0 * cov + c2);
        let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok((total / mx.len() as f64).clamp(-1.0, 1.0))
}

/// SSIM of two RGB images, computed on luma with an 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03 and dynamic range 1.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    ssim_gray(&to_grayscale(a), &to_grayscale(b))
}

/// Intersection over union; two empty masks score 1.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    pub predicted: usize,
    pub truth: usize,
    pub matched: usize,
}

impl ClassScore {
    /// Vacuous precision (no predictions) is reported as 1.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            1.0
        } else {
            self.matched as f64 / self.predicted as f64
        }
    }

    /// Vacuous recall (no ground truth) is reported as 1.
    pub fn recall(&self) -> f64 {
        if self.truth == 0 {
            1.0
        } else {
            self.matched as f64 / self.truth as f64
        }
    }

    pub fn add(&mut self, other: &ClassScore) {
        self.predicted += other.predicted;
        self.truth += other.truth;
        self.matched += other.matched;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionScore {
    pub per_class: BTreeMap<ArtifactClass, ClassScore>,
    pub matched_ious: Vec<f64>,
}

impl DetectionScore {
    pub fn class(&self, c: ArtifactClass) -> ClassScore {
        self.per_class.get(&c).copied().unwrap_or_default()
    }

    /// Mean IoU over matched pairs; `None` when nothing matched.
    pub fn mean_iou(&self) -> Option<f64> {
        if self.matched_ious.is_empty() {
            None
        } else {
            Some(self.matched_ious.iter().sum::<f64>() / self.matched_ious.len() as f64)
        }
    }

    pub fn total_predicted(&self) -> usize {
        self.per_class.values().map(|s| s.predicted).sum()
    }

    pub fn merge(&mut self, other: &DetectionScore) {
        for (c, s) in &other.per_class {
            self.per_class.entry(*c).or_default().add(s);
        }
        self.matched_ious.extend_from_slice(&other.matched_ious);
    }
}

/// Greedy one-to-one matching by descending IoU. A pair matches when the
/// classes agree and IoU reaches `iou_thresh`.
pub fn detection_score(
    predicted: &[(BinaryMask, ArtifactClass)],
    truth: &[(BinaryMask, ArtifactClass)],
    iou_thresh: f64,
) -> Result<DetectionScore> {
    let mut candidates = Vec::new();
    for (i, (pm, pc)) in predicted.iter().enumerate() {
        for (j, (tm, tc)) in truth.iter().enumerate() {
            if pc != tc {
                continue;
            }
            let iou = mask_iou(pm, tm)?;
            if iou >= iou_thresh && iou > 0.0 {
                candidates.push((iou, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; predicted.len()];
    let mut used_t = vec![false; truth.len()];
    let mut score = DetectionScore::default();
    for c in ArtifactClass::ALL {
        score.per_class.insert(
            c,
            ClassScore {
                predicted: predicted.iter().filter(|p| p.1 == c).count(),
                truth: truth.iter().filter(|t| t.1 == c).count(),
                matched: 0,
            },
        );
    }
    for (iou, i, j) in candidates {
        if used_p[i] || used_t[j] {
            continue;
        }
        used_p[i] = true;
        used_t[j] = true;
        score.per_class.get_mut(&predicted[i].1).expect("all classes present").matched += 1;
        score.matched_ious.push(iou);
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::BoundingBox;
    use crate::rng::SplitMix64;
    use crate::vision::gaussian_blur;

    fn random_image(rng: &mut SplitMix64, w: usize, h: usize) -> RasterImage {
        RasterImage::new(w, h, (0..w * h * 3).map(|_| (rng.next_u64() & 0xff) as u8).collect()).unwrap()
    }

    fn natural_fixture() -> GrayImage {
        // Smooth gradients plus a few hard shapes.
        let (w, h) = (64, 48);
        GrayImage::new(
            w,
            h,
            (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f64, (i / w) as f64);
                    let base = 0.5 + 0.3 * (x / 9.0).sin() * (y / 7.0).cos();
                    if (x - 30.0).powi(2) + (y - 20.0).powi(2) < 100.0 {
                        0.95
                    } else if x > 50.0 && y > 30.0 {
                        0.05
                    } else {
                        base
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ssim_identity() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..5 {
            let x = random_image(&mut rng, 23, 17);
            assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ssim_checkerboard_inverse_negative() {
        let w = 16;
        let x = GrayImage::new(w, w, (0..w * w).map(|i| ((i % w + i / w) % 2) as f64).collect()).unwrap();
        let inv = GrayImage::new(w, w, x.data.iter().map(|v| 1.0 - v).collect()).unwrap();
        // Closed form per window: means ~0.5 each, cov = -var, so the
        // structure term approaches -1.
        let s = ssim_gray(&x, &inv).unwrap();
        assert!(s < 0.0, "{s}");
    }

    #[test]
    fn ssim_degrades_with_blur() {
        let x = natural_fixture();
        let strong = ssim_gray(&x, &gaussian_blur(&x, 2.0).unwrap()).unwrap();
        let weak = ssim_gray(&x, &gaussian_blur(&x, 0.5).unwrap()).unwrap();
        assert!(strong < weak, "{strong} vs {weak}");
    }

    #[test]
    fn ssim_dimension_mismatch() {
        let a = RasterImage::filled(12, 12, [0, 0, 0]);
        let b = RasterImage::filled(13, 12, [0, 0, 0]);
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn iou_cases() {
        let a = BoundingBox::new(0, 0, 9, 9).to_mask(30, 30);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        let far = BoundingBox::new(20, 20, 25, 25).to_mask(30, 30);
        assert_eq!(mask_iou(&a, &far).unwrap(), 0.0);
        // 10x10 squares overlapping in a 5x10 band: 50 / 150.
        let b = BoundingBox::new(5, 0, 14, 9).to_mask(30, 30);
        assert!((mask_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mask_iou(&BinaryMask::new(3, 3), &BinaryMask::new(3, 3)).unwrap(), 1.0);
        assert!(mask_iou(&BinaryMask::new(3, 3), &BinaryMask::new(4, 3)).is_err());
    }

    #[test]
    fn detection_score_cases() {
        let m = |bb: BoundingBox| bb.to_mask(40, 40);
        let t = vec![(m(BoundingBox::new(0, 0, 9, 9)), ArtifactClass::ColorTexture)];
        let s = detection_score(&t, &t, 0.3).unwrap();
        let c = s.class(ArtifactClass::ColorTexture);
        assert_eq!((c.precision(), c.recall()), (1.0, 1.0));

        let s = detection_score(&[], &t, 0.3).unwrap();
        let c = s.class(ArtifactClass::ColorTexture);
        assert_eq!((c.precision(), c.recall()), (1.0, 0.0));

        // One correct and one spurious prediction: P = 1/2, R = 1/1.
        let p = vec![t[0].clone(), (m(BoundingBox::new(25, 25, 35, 35)), ArtifactClass::ColorTexture)];
        let s = detection_score(&p, &t, 0.3).unwrap();
        let c = s.class(ArtifactClass::ColorTexture);
        assert_eq!((c.precision(), c.recall()), (0.5, 1.0));
        assert_eq!(s.mean_iou(), Some(1.0));

        // Class mismatch never matches.
        let wrong = vec![(t[0].0.clone(), ArtifactClass::Deformation)];
        let s = detection_score(&wrong, &t, 0.3).unwrap();
        assert_eq!(s.class(ArtifactClass::ColorTexture).recall(), 0.0);
    }

    #[test]
    fn detection_score_one_to_one() {
        let m = BoundingBox::new(0, 0, 9, 9).to_mask(20, 20);
        let p = vec![(m.clone(), ArtifactClass::Deformation), (m.clone(), ArtifactClass::Deformation)];
        let t = vec![(m, ArtifactClass::Deformation)];
        let s = detection_score(&p, &t, 0.3).unwrap();
        assert_eq!(s.class(ArtifactClass::Deformation).matched, 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn iou_one_implies_equal(a in proptest::collection::vec(any::<bool>(), 36),
                                     b in proptest::collection::vec(any::<bool>(), 36)) {
                let ma = BinaryMask { width: 6, height: 6, data: a };
                let mb = BinaryMask { width: 6, height: 6, data: b };
                let iou = mask_iou(&ma, &mb).unwrap();
                prop_assert!((0.0..=1.0).contains(&iou));
                prop_assert_eq!(iou, mask_iou(&mb, &ma).unwrap());
                if iou == 1.0 {
                    prop_assert_eq!(ma, mb);
                }
            }
        }
    }
}
