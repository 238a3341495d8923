//! K-means color quantization in RGB.
//!
//! Clustering runs over the histogram of distinct colors (each color weighted
//! by its pixel count), which is equivalent to per-pixel Lloyd iterations and
//! much cheaper on flat-shaded images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, RasterImage};
use crate::rng::SplitMix64;

pub const MAX_ITERATIONS: usize = 50;
pub const CONVERGENCE_TOL: f64 = 1e-3;
pub const MAX_K: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub entries: Vec<[f64; 3]>,
    /// Fraction of participating pixels assigned to each entry.
    pub weights: Vec<f64>,
}

impl Palette {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index and Euclidean distance of the entry nearest to `color`.
    pub fn nearest(&self, color: [f64; 3]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, e) in self.entries.iter().enumerate() {
            let d = dist2(*e, color);
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, best.1.sqrt())
    }
}

/// Per-pixel palette index; `None` for pixels outside the region.
pub type LabelAssignment = Vec<Option<u8>>;

#[derive(Debug, Clone)]
pub struct Quantization {
    pub palette: Palette,
    pub labels: LabelAssignment,
    /// Objective (weighted sum of squared distances) after each Lloyd step.
    pub objective_trace: Vec<f64>,
}

#[inline]
fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

fn to_f(c: [u8; 3]) -> [f64; 3] {
    [c[0] as f64, c[1] as f64, c[2] as f64]
}

fn pack(c: [u8; 3]) -> u32 {
    (c[0] as u32) << 16 | (c[1] as u32) << 8 | c[2] as u32
}

fn unpack(v: u32) -> [u8; 3] {
    [(v >> 16) as u8, (v >> 8) as u8, v as u8]
}

pub fn quantize_palette(
    img: &RasterImage,
    k: usize,
    seed: u64,
    region: Option<&BinaryMask>,
) -> Result<Quantization> {
    if !(1..=MAX_K).contains(&k) {
        return Err(Error::param(format!("palette size must be in 1..={MAX_K}, got {k}")));
    }
    if let Some(r) = region {
        if r.dims() != img.dims() {
            return Err(Error::dims(img.dims(), r.dims()));
        }
    }
    let participating = |i: usize| region.map_or(true, |r| r.data[i]);

    // Sorted histogram of distinct colors for deterministic ordering.
    let mut packed: Vec<u32> = img
        .pixels()
        .enumerate()
        .filter(|(i, _)| participating(*i))
        .map(|(_, c)| pack(c))
        .collect();
    let total = packed.len();
    if total == 0 {
        return Err(Error::EmptyRegion("palette quantization region has no pixels".into()));
    }
    packed.sort_unstable();
    let mut colors: Vec<u32> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for v in packed {
        if colors.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            colors.push(v);
            counts.push(1.0);
        }
    }
    let points: Vec<[f64; 3]> = colors.iter().map(|&c| to_f(unpack(c))).collect();

    let mut trace = Vec::new();
    let (centroids, point_label) = if points.len() <= k {
        (points.clone(), (0..points.len()).collect::<Vec<_>>())
    } else {
        lloyd(&points, &counts, k, seed, &mut trace)
    };

    let mut weights = vec![0.0; centroids.len()];
    for (p, &l) in point_label.iter().enumerate() {
        weights[l] += counts[p];
    }
    weights.iter_mut().for_each(|w| *w /= total as f64);

    let mut labels = vec![None; img.width() * img.height()];
    for (i, c) in img.pixels().enumerate() {
        if participating(i) {
            let idx = colors.binary_search(&pack(c)).expect("color in histogram");
            labels[i] = Some(point_label[idx] as u8);
        }
    }
    Ok(Quantization {
        palette: Palette {
            entries: centroids,
            weights,
        },
        labels,
        objective_trace: trace,
    })
}

fn kmeans_pp_init(points: &[[f64; 3]], counts: &[f64], k: usize, rng: &mut SplitMix64) -> Vec<[f64; 3]> {
    let total: f64 = counts.iter().sum();
    let pick = |weights: &[f64], sum: f64, rng: &mut SplitMix64| -> usize {
        let target = rng.next_f64() * sum;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if acc > target {
                return i;
            }
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    };
    let mut centroids = vec![points[pick(counts, total, rng)]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(*p, centroids[0])).collect();
    while centroids.len() < k {
        let weights: Vec<f64> = d2.iter().zip(counts).map(|(d, c)| d * c).collect();
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            break;
        }
        let c = points[pick(&weights, sum, rng)];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(*p, c));
        }
    }
    centroids
}

fn assign(points: &[[f64; 3]], centroids: &[[f64; 3]]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.iter().enumerate() {
                let d = dist2(*p, *c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}

fn objective(points: &[[f64; 3]], counts: &[f64], centroids: &[[f64; 3]], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(counts)
        .zip(labels)
        .map(|((p, c), &l)| c * dist2(*p, centroids[l]))
        .sum()
}

fn lloyd(
    points: &[[f64; 3]],
    counts: &[f64],
    k: usize,
    seed: u64,
    trace: &mut Vec<f64>,
) -> (Vec<[f64; 3]>, Vec<usize>) {
    let mut rng = SplitMix64::new(seed);
    let mut centroids = kmeans_pp_init(points, counts, k, &mut rng);
    let mut labels = assign(points, &centroids);
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![[0.0f64; 3]; centroids.len()];
        let mut mass = vec![0.0f64; centroids.len()];
        for ((p, c), &l) in points.iter().zip(counts).zip(&labels) {
            for ch in 0..3 {
                sums[l][ch] += p[ch] * c;
            }
            mass[l] += c;
        }
        let mut shift: f64 = 0.0;
        for j in 0..centroids.len() {
            // An emptied cluster keeps its previous centroid.
            if mass[j] > 0.0 {
                let next = [sums[j][0] / mass[j], sums[j][1] / mass[j], sums[j][2] / mass[j]];
                shift = shift.max(dist2(next, centroids[j]).sqrt());
                centroids[j] = next;
            }
        }
        labels = assign(points, &centroids);
        trace.push(objective(points, counts, &centroids, &labels));
        if shift < CONVERGENCE_TOL {
            break;
        }
    }
    // Drop clusters that ended up empty so weights stay meaningful.
    let mut used = vec![false; centroids.len()];
    labels.iter().for_each(|&l| used[l] = true);
    if used.iter().all(|&u| u) {
        return (centroids, labels);
    }
    let mut remap = vec![usize::MAX; centroids.len()];
    let mut kept = Vec::new();
    for (j, c) in centroids.iter().enumerate() {
        if used[j] {
            remap[j] = kept.len();
            kept.push(*c);
        }
    }
    (kept, labels.iter().map(|&l| remap[l]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy_image(seed: u64) -> RasterImage {
        let mut rng = SplitMix64::new(seed);
        let (w, h) = (40, 30);
        let data = (0..w * h * 3).map(|_| (rng.next_u64() % 256) as u8).collect();
        RasterImage::new(w, h, data).unwrap()
    }

    #[test]
    fn two_colors_exact() {
        let (w, h) = (10, 6);
        let mut img = RasterImage::filled(w, h, [200, 10, 10]);
        let mut blue = 0;
        for y in 0..h {
            for x in 0..w {
                if x < 3 || y == 0 {
                    img.set(x, y, [5, 20, 240]);
                    blue += 1;
                }
            }
        }
        let q = quantize_palette(&img, 2, 1, None).unwrap();
        // Exhaustive check: each entry is one of the two input colors, with
        // weight equal to its pixel fraction.
        assert_eq!(q.palette.len(), 2);
        for (e, wgt) in q.palette.entries.iter().zip(&q.palette.weights) {
            if *e == [5.0, 20.0, 240.0] {
                assert!((wgt - blue as f64 / 60.0).abs() < 1e-12);
            } else {
                assert_eq!(*e, [200.0, 10.0, 10.0]);
                assert!((wgt - (60 - blue) as f64 / 60.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn k1_is_mean_color() {
        let img = noisy_image(3);
        let q = quantize_palette(&img, 1, 9, None).unwrap();
        let n = (img.width() * img.height()) as f64;
        let mut mean = [0.0; 3];
        for p in img.pixels() {
            for c in 0..3 {
                mean[c] += p[c] as f64 / n;
            }
        }
        for c in 0..3 {
            assert!((q.palette.entries[0][c] - mean[c]).abs() <= 0.5);
        }
        assert!((q.palette.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_for_seed() {
        let img = noisy_image(11);
        let a = quantize_palette(&img, 8, 42, None).unwrap();
        let b = quantize_palette(&img, 8, 42, None).unwrap();
        assert_eq!(a.palette, b.palette);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn objective_non_increasing() {
        let img = noisy_image(5);
        let q = quantize_palette(&img, 6, 2, None).unwrap();
        assert!(!q.objective_trace.is_empty());
        for w in q.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{:?}", w);
        }
    }

    #[test]
    fn weights_sum_to_one_and_labels_nearest() {
        let img = noisy_image(8);
        let q = quantize_palette(&img, 8, 7, None).unwrap();
        assert!((q.palette.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for (i, p) in img.pixels().enumerate() {
            let (nearest, _) = q.palette.nearest(to_f(p));
            let l = q.labels[i].unwrap() as usize;
            let dl = dist2(q.palette.entries[l], to_f(p));
            let dn = dist2(q.palette.entries[nearest], to_f(p));
            assert!((dl - dn).abs() < 1e-9);
        }
    }

    #[test]
    fn region_restricts_participation() {
        let mut img = RasterImage::filled(6, 6, [0, 0, 0]);
        img.set(5, 5, [255, 255, 255]);
        let region = BinaryMask::from_fn(6, 6, |x, _| x < 3);
        let q = quantize_palette(&img, 4, 0, Some(&region)).unwrap();
        assert_eq!(q.palette.entries, vec![[0.0, 0.0, 0.0]]);
        assert!(q.labels[5 * 6 + 5].is_none());
        assert!(quantize_palette(&img, 4, 0, Some(&BinaryMask::new(6, 6))).is_err());
    }

    #[test]
    fn fewer_colors_than_k() {
        let img = RasterImage::filled(4, 4, [10, 20, 30]);
        let q = quantize_palette(&img, 8, 0, None).unwrap();
        assert_eq!(q.palette.len(), 1);
        assert!(quantize_palette(&img, 0, 0, None).is_err());
        assert!(quantize_palette(&img, 65, 0, None).is_err());
    }
}
