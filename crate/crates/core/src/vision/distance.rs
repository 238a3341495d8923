use crate::error::{Error, Result};
use crate::image::{BinaryMask, EdgeMap};

const DIAG: f64 = std::f64::consts::SQRT_2;

/// Two-pass chamfer distance transform (8-neighbor, weights 1 and sqrt 2).
/// Pixels with no feature anywhere in the image get `f64::INFINITY`.
pub fn distance_transform(features: &BinaryMask) -> Vec<f64> {
    let (w, h) = features.dims();
    let mut d: Vec<f64> = features
        .data
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut v = d[i];
            if x > 0 {
                v = v.min(d[i - 1] + 1.0);
            }
            if y > 0 {
                v = v.min(d[i - w] + 1.0);
                if x > 0 {
                    v = v.min(d[i - w - 1] + DIAG);
                }
                if x + 1 < w {
                    v = v.min(d[i - w + 1] + DIAG);
                }
            }
            d[i] = v;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            let mut v = d[i];
            if x + 1 < w {
                v = v.min(d[i + 1] + 1.0);
            }
            if y + 1 < h {
                v = v.min(d[i + w] + 1.0);
                if x + 1 < w {
                    v = v.min(d[i + w + 1] + DIAG);
                }
                if x > 0 {
                    v = v.min(d[i + w - 1] + DIAG);
                }
            }
            d[i] = v;
        }
    }
    d
}

#[derive(Debug, Clone)]
pub struct EdgeDistance {
    /// Nearest-counterpart distance at every in-region edge pixel of either
    /// map; 0 elsewhere.
    pub field: Vec<f64>,
    pub score: f64,
}

/// Symmetric chamfer distance between two edge maps inside `region`.
///
/// When exactly one side has edges in the region, every such edge pixel is
/// assigned the region's bounding-box diagonal, which is also the score.
pub fn edge_distance(a: &EdgeMap, b: &EdgeMap, region: &BinaryMask) -> Result<EdgeDistance> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    if a.dims() != region.dims() {
        return Err(Error::dims(a.dims(), region.dims()));
    }
    let ra = a.intersect(region);
    let rb = b.intersect(region);
    let n = ra.data.len();
    let mut field = vec![0.0; n];
    let (ca, cb) = (ra.count(), rb.count());
    if ca == 0 && cb == 0 {
        return Ok(EdgeDistance { field, score: 0.0 });
    }
    if ca == 0 || cb == 0 {
        let cap = region.bbox().map_or(0.0, |bb| bb.diagonal());
        for i in 0..n {
            if ra.data[i] || rb.data[i] {
                field[i] = cap;
            }
        }
        return Ok(EdgeDistance { field, score: cap });
    }
    let da = distance_transform(&ra);
    let db = distance_transform(&rb);
    let mut sum = 0.0;
    for i in 0..n {
        let mut v: f64 = 0.0;
        if ra.data[i] {
            sum += db[i];
            v = v.max(db[i]);
        }
        if rb.data[i] {
            sum += da[i];
            v = v.max(da[i]);
        }
        field[i] = v;
    }
    Ok(EdgeDistance {
        field,
        score: sum / (ca + cb) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vertical_line(w: usize, h: usize, x0: usize) -> EdgeMap {
        EdgeMap(BinaryMask::from_fn(w, h, |x, _| x == x0))
    }

    /// Brute-force oracle: mean over both edge sets of the Euclidean distance
    /// to the nearest pixel of the other set.
    fn brute_force(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let pts = |m: &BinaryMask| -> Vec<(f64, f64)> {
            (0..m.data.len())
                .filter(|&i| m.data[i])
                .map(|i| ((i % m.width) as f64, (i / m.width) as f64))
                .collect()
        };
        let (pa, pb) = (pts(a), pts(b));
        let nearest = |p: (f64, f64), set: &[(f64, f64)]| {
            set.iter().map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()).fold(f64::INFINITY, f64::min)
        };
        let s: f64 = pa.iter().map(|&p| nearest(p, &pb)).sum::<f64>() + pb.iter().map(|&p| nearest(p, &pa)).sum::<f64>();
        s / (pa.len() + pb.len()) as f64
    }

    #[test]
    fn identical_maps_score_zero() {
        let e = vertical_line(20, 10, 4);
        let r = BinaryMask::full(20, 10);
        assert_eq!(edge_distance(&e, &e, &r).unwrap().score, 0.0);
    }

    #[test]
    fn shifted_line_scores_shift() {
        let r = BinaryMask::full(30, 20);
        let a = vertical_line(30, 20, 5);
        for d in 1..8 {
            let b = vertical_line(30, 20, 5 + d);
            let got = edge_distance(&a, &b, &r).unwrap().score;
            let oracle = brute_force(&a, &b);
            assert!((oracle - d as f64).abs() < 1e-12);
            assert!((got - d as f64).abs() <= 0.5, "d={d} got={got}");
        }
    }

    #[test]
    fn both_empty_scores_zero() {
        let e = EdgeMap(BinaryMask::new(8, 8));
        assert_eq!(edge_distance(&e, &e, &BinaryMask::full(8, 8)).unwrap().score, 0.0);
    }

    #[test]
    fn one_side_empty_scores_cap() {
        let a = vertical_line(10, 10, 3);
        let b = EdgeMap(BinaryMask::new(10, 10));
        let region = BinaryMask::from_fn(10, 10, |x, y| x < 4 && y < 3);
        let got = edge_distance(&a, &b, &region).unwrap().score;
        assert!((got - 5.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let a = vertical_line(10, 10, 3);
        let b = vertical_line(11, 10, 3);
        assert!(edge_distance(&a, &b, &BinaryMask::full(10, 10)).is_err());
    }

    #[test]
    fn transform_matches_city_block_on_axis() {
        let mut f = BinaryMask::new(9, 1);
        f.set(0, 0, true);
        let d = distance_transform(&f);
        assert_eq!(d, (0..9).map(|v| v as f64).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn symmetric(seed_a in proptest::collection::vec(proptest::bool::weighted(0.1), 144),
                     seed_b in proptest::collection::vec(proptest::bool::weighted(0.1), 144)) {
            let a = EdgeMap(BinaryMask { width: 12, height: 12, data: seed_a });
            let b = EdgeMap(BinaryMask { width: 12, height: 12, data: seed_b });
            let r = BinaryMask::from_fn(12, 12, |x, y| x + y > 3);
            let ab = edge_distance(&a, &b, &r).unwrap().score;
            let ba = edge_distance(&b, &a, &r).unwrap().score;
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!(ab >= 0.0);
        }
    }
}
