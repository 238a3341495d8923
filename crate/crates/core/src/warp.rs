//! Thin-plate-spline warping driven by keypoint correspondences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, RasterImage};
use crate::pose::{PoseKeypoints, ALIGNMENT_JOINTS, CONFIDENCE_GATE};
use crate::vision::sample_bilinear;

pub type Point = (f64, f64);

/// Radial basis `r^2 log r^2`, with `U(0) = 0`.
#[inline]
fn tps_kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

/// A solved TPS mapping `f(p) = A p + t + sum_i w_i U(|p - c_i|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpsTransform {
    pub control_points: Vec<Point>,
    /// `[[t_x, a_xx, a_xy], [t_y, a_yx, a_yy]]`.
    pub affine: [[f64; 3]; 2],
    /// One `(w_x, w_y)` pair per control point.
    pub weights: Vec<(f64, f64)>,
    pub lambda: f64,
}

impl TpsTransform {
    pub fn apply(&self, p: Point) -> Point {
        let [ax, ay] = self.affine;
        let mut x = ax[0] + ax[1] * p.0 + ax[2] * p.1;
        let mut y = ay[0] + ay[1] * p.0 + ay[2] * p.1;
        for (c, w) in self.control_points.iter().zip(&self.weights) {
            let u = tps_kernel((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2));
            x += w.0 * u;
            y += w.1 * u;
        }
        (x, y)
    }

    /// Pure translation, handy for tests and simple alignments.
    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            control_points: Vec::new(),
            affine: [[dx, 1.0, 0.0], [dy, 0.0, 1.0]],
            weights: Vec::new(),
            lambda: 0.0,
        }
    }
}

/// Solves the dense `(N+3) x (N+3)` TPS system mapping `src[i]` to `dst[i]`,
/// with `lambda` added to the kernel diagonal.
pub fn solve_tps(src: &[Point], dst: &[Point], lambda: f64) -> Result<TpsTransform> {
    if src.len() != dst.len() {
        return Err(Error::param(format!(
            "correspondence count mismatch: {} source vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 control points, got {}", src.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param(format!("lambda must be non-negative, got {lambda}")));
    }
    if collinear(src) {
        return Err(Error::Degenerate("control points are collinear".into()));
    }
    let n = src.len();
    let m = n + 3;
    let mut a = vec![vec![0.0; m]; m];
    for i in 0..n {
        for j in 0..n {
            let r2 = (src[i].0 - src[j].0).powi(2) + (src[i].1 - src[j].1).powi(2);
            a[i][j] = tps_kernel(r2);
        }
        a[i][i] += lambda;
        let row = [1.0, src[i].0, src[i].1];
        for k in 0..3 {
            a[i][n + k] = row[k];
            a[n + k][i] = row[k];
        }
    }
    let mut rhs = vec![[0.0; 2]; m];
    for i in 0..n {
        rhs[i] = [dst[i].0, dst[i].1];
    }
    let sol = solve_dense(a, rhs)?;
    Ok(TpsTransform {
        control_points: src.to_vec(),
        affine: [
            [sol[n][0], sol[n + 1][0], sol[n + 2][0]],
            [sol[n][1], sol[n + 1][1], sol[n + 2][1]],
        ],
        weights: sol[..n].iter().map(|v| (v[0], v[1])).collect(),
        lambda,
    })
}

fn collinear(pts: &[Point]) -> bool {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.0 - mx, p.1 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let det = sxx * syy - sxy * sxy;
    let tr = sxx + syy;
    tr <= 0.0 || det <= 1e-10 * tr * tr
}

/// Gaussian elimination with partial pivoting for two right-hand sides.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<[f64; 2]>) -> Result<Vec<[f64; 2]>> {
    let m = a.len();
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() <= 1e-13 * scale {
            return Err(Error::Numerical("singular TPS system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..m {
                a[row][k] -= f * a[col][k];
            }
            b[row][0] -= f * b[col][0];
            b[row][1] -= f * b[col][1];
        }
    }
    let mut x = vec![[0.0; 2]; m];
    for row in (0..m).rev() {
        let mut acc = b[row];
        for k in row + 1..m {
            acc[0] -= a[row][k] * x[k][0];
            acc[1] -= a[row][k] * x[k][1];
        }
        x[row] = [acc[0] / a[row][row], acc[1] / a[row][row]];
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite TPS solution".into()));
    }
    Ok(x)
}

/// Resamples `img` into an `out_w x out_h` raster. `inverse` maps output
/// coordinates to source coordinates; samples falling outside the source
/// are black.
pub fn apply_tps(inverse: &TpsTransform, img: &RasterImage, out_w: usize, out_h: usize) -> RasterImage {
    let (sw, sh) = img.dims();
    let mut out = RasterImage::filled(out_w, out_h, [0, 0, 0]);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = inverse.apply((x as f64, y as f64));
            if sx < -0.5 || sy < -0.5 || sx >= sw as f64 - 0.5 || sy >= sh as f64 - 0.5 {
                continue;
            }
            let fx = sx.clamp(0.0, (sw - 1) as f64);
            let fy = sy.clamp(0.0, (sh - 1) as f64);
            out.set(x, y, sample_bilinear(img, fx, fy));
        }
    }
    out
}

/// Nearest-neighbor counterpart of [`apply_tps`] for masks.
pub fn apply_tps_mask(inverse: &TpsTransform, mask: &BinaryMask, out_w: usize, out_h: usize) -> BinaryMask {
    let (sw, sh) = mask.dims();
    BinaryMask::from_fn(out_w, out_h, |x, y| {
        let (sx, sy) = inverse.apply((x as f64, y as f64));
        let (rx, ry) = (sx.round(), sy.round());
        if rx < 0.0 || ry < 0.0 || rx >= sw as f64 || ry >= sh as f64 {
            return false;
        }
        mask.get(rx as usize, ry as usize)
    })
}

/// Regularization used for keypoint-driven alignment: `factor * d^2` where
/// `d` is the mean pairwise distance between source points.
pub fn default_lambda(src: &[Point], factor: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..src.len() {
        for j in i + 1..src.len() {
            sum += ((src[i].0 - src[j].0).powi(2) + (src[i].1 - src[j].1).powi(2)).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return 0.0;
    }
    let d = sum / count as f64;
    factor * d * d
}

/// How the TPS regularization is chosen for an alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Fixed(f64),
    /// Multiple of the squared mean pairwise control-point distance.
    Relative(f64),
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub cloth: RasterImage,
    pub mask: BinaryMask,
    /// Output-to-source mapping used for resampling.
    pub inverse: TpsTransform,
}

/// Torso/arm joints confident in both poses, as `(src, dst)` point lists.
pub fn common_alignment_points(src_pose: &PoseKeypoints, dst_pose: &PoseKeypoints) -> (Vec<Point>, Vec<Point>) {
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for name in ALIGNMENT_JOINTS {
        if let (Some(a), Some(b)) = (src_pose.confident(name), dst_pose.confident(name)) {
            debug_assert!(a.confidence >= CONFIDENCE_GATE);
            src.push((a.x, a.y));
            dst.push((b.x, b.y));
        }
    }
    (src, dst)
}

/// Warps a cloth image (and its mask) from the pose it was photographed in
/// to the target pose, at `out_w x out_h`.
pub fn cloth_alignment(
    cloth: &RasterImage,
    cloth_mask: &BinaryMask,
    src_pose: &PoseKeypoints,
    dst_pose: &PoseKeypoints,
    lambda: Lambda,
    out_w: usize,
    out_h: usize,
) -> Result<Alignment> {
    if cloth.dims() != cloth_mask.dims() {
        return Err(Error::dims(cloth.dims(), cloth_mask.dims()));
    }
    let (src, dst) = common_alignment_points(src_pose, dst_pose);
    if src.len() < 3 {
        return Err(Error::InsufficientCorrespondence {
            found: src.len(),
            needed: 3,
        });
    }
    // Resampling needs the output->source direction, so solve dst -> src.
    let lam = match lambda {
        Lambda::Fixed(v) => v,
        Lambda::Relative(f) => default_lambda(&dst, f),
    };
    let inverse = solve_tps(&dst, &src, lam)?;
    Ok(Alignment {
        cloth: apply_tps(&inverse, cloth, out_w, out_h),
        mask: apply_tps_mask(&inverse, cloth_mask, out_w, out_h),
        inverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_points(rng: &mut SplitMix64, n: usize, w: f64, h: f64) -> Vec<Point> {
        (0..n).map(|_| (rng.range_f64(0.0, w), rng.range_f64(0.0, h))).collect()
    }

    #[test]
    fn too_few_or_collinear_points() {
        let p = vec![(0.0, 0.0), (1.0, 1.0)];
        assert!(matches!(solve_tps(&p, &p, 0.0), Err(Error::Degenerate(_))));
        let line = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (5.0, 5.0)];
        assert!(matches!(solve_tps(&line, &line, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn identity_when_src_equals_dst() {
        let mut rng = SplitMix64::new(1);
        let pts = random_points(&mut rng, 7, 200.0, 300.0);
        let t = solve_tps(&pts, &pts, 0.0).unwrap();
        for p in random_points(&mut rng, 100, 200.0, 300.0) {
            let q = t.apply(p);
            assert!((q.0 - p.0).abs() < 1e-6 && (q.1 - p.1).abs() < 1e-6);
        }
    }

    #[test]
    fn corner_displacement_interpolates() {
        let src = vec![(0.0, 0.0), (100.0, 0.0), (0.0, 100.0), (100.0, 100.0)];
        let mut dst = src.clone();
        dst[3] = (112.0, 93.0);
        let t = solve_tps(&src, &dst, 0.0).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            let q = t.apply(*s);
            assert!((q.0 - d.0).abs() < 1e-6 && (q.1 - d.1).abs() < 1e-6);
        }
    }

    #[test]
    fn side_conditions_hold() {
        let mut rng = SplitMix64::new(4);
        let src = random_points(&mut rng, 9, 100.0, 100.0);
        let dst = random_points(&mut rng, 9, 100.0, 100.0);
        for lambda in [0.0, 10.0] {
            let t = solve_tps(&src, &dst, lambda).unwrap();
            for k in 0..2 {
                let w = |i: usize| if k == 0 { t.weights[i].0 } else { t.weights[i].1 };
                let s0: f64 = (0..9).map(w).sum();
                let sx: f64 = (0..9).map(|i| w(i) * src[i].0).sum();
                let sy: f64 = (0..9).map(|i| w(i) * src[i].1).sum();
                assert!(s0.abs() < 1e-8 && sx.abs() < 1e-8 && sy.abs() < 1e-8, "{s0} {sx} {sy}");
            }
        }
    }

    #[test]
    fn translation_warp_shifts_pixels() {
        let (w, h) = (40, 20);
        let img = RasterImage::new(w, h, (0..w * h * 3).map(|i| (i % 251) as u8).collect()).unwrap();
        let src = vec![(0.0, 0.0), (39.0, 0.0), (0.0, 19.0), (39.0, 19.0)];
        let dst: Vec<Point> = src.iter().map(|p| (p.0 + 10.0, p.1)).collect();
        // Inverse direction: output -> source.
        let inv = solve_tps(&dst, &src, 0.0).unwrap();
        let out = apply_tps(&inv, &img, w, h);
        for y in 0..h {
            for x in 0..w {
                let got = out.get(x, y);
                if x < 10 {
                    assert_eq!(got, [0, 0, 0]);
                } else {
                    let want = img.get(x - 10, y);
                    for c in 0..3 {
                        assert!((got[c] as i32 - want[c] as i32).abs() <= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn identity_mask_warp_is_exact() {
        let m = BinaryMask::from_fn(30, 25, |x, y| (x * 7 + y * 3) % 5 == 0);
        let pts = vec![(0.0, 0.0), (29.0, 0.0), (0.0, 24.0), (15.0, 12.0)];
        let t = solve_tps(&pts, &pts, 0.0).unwrap();
        assert_eq!(apply_tps_mask(&t, &m, 30, 25), m);
        let empty = BinaryMask::new(30, 25);
        assert_eq!(apply_tps_mask(&t, &empty, 30, 25), empty);
    }
}
