//! Condition-image rendering: pose skeletons and color-coded parsing maps.

use crate::error::Result;
use crate::image::{LabelMap, RasterImage};
use crate::parsing::label_color;
use crate::pose::{hand_joint_name, PoseKeypoints, BODY_JOINTS, BODY_LIMBS, CONFIDENCE_GATE, HAND_LIMBS};

pub const JOINT_RADIUS: f64 = 4.0;
pub const LIMB_WIDTH: f64 = 4.0;

/// Body colors, indexed by limb for segments and by joint for discs.
pub const BODY_COLORS: [[u8; 3]; 18] = [
    [255, 0, 0],
    [255, 85, 0],
    [255, 170, 0],
    [255, 255, 0],
    [170, 255, 0],
    [85, 255, 0],
    [0, 255, 0],
    [0, 255, 85],
    [0, 255, 170],
    [0, 255, 255],
    [0, 170, 255],
    [0, 85, 255],
    [0, 0, 255],
    [85, 0, 255],
    [170, 0, 255],
    [255, 0, 255],
    [255, 0, 170],
    [255, 0, 85],
];

pub const HAND_JOINT_COLOR: [u8; 3] = [0, 0, 255];

/// Rainbow color for finger segment `i` of 20.
pub fn hand_limb_color(i: usize) -> [u8; 3] {
    let h = i as f64 / HAND_LIMBS.len() as f64 * 6.0;
    let sector = h.floor() as i32;
    let f = h - sector as f64;
    let q = ((1.0 - f) * 255.0).round() as u8;
    let t = (f * 255.0).round() as u8;
    match sector.rem_euclid(6) {
        0 => [255, t, 0],
        1 => [q, 255, 0],
        2 => [0, 255, t],
        3 => [0, q, 255],
        4 => [t, 0, 255],
        _ => [255, 0, q],
    }
}

/// Distance from `p` to the segment `a-b`.
pub(crate) fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * vx, a.1 + t * vy);
    (p.0 - cx).hypot(p.1 - cy)
}

fn draw_segment(img: &mut RasterImage, a: (f64, f64), b: (f64, f64), half_width: f64, color: [u8; 3]) {
    let (w, h) = img.dims();
    let x0 = (a.0.min(b.0) - half_width).floor().max(0.0) as usize;
    let y0 = (a.1.min(b.1) - half_width).floor().max(0.0) as usize;
    let x1 = ((a.0.max(b.0) + half_width).ceil().max(0.0) as usize).min(w - 1);
    let y1 = ((a.1.max(b.1) + half_width).ceil().max(0.0) as usize).min(h - 1);
    if x0 > x1 || y0 > y1 {
        return;
    }
    for y in y0..=y1 {
        for x in x0..=x1 {
            if segment_distance((x as f64, y as f64), a, b) <= half_width {
                img.set(x, y, color);
            }
        }
    }
}

fn draw_disc(img: &mut RasterImage, c: (f64, f64), r: f64, color: [u8; 3]) {
    draw_segment(img, c, c, r, color);
}

/// Renders confident joints and the limbs between them on black.
pub fn render_pose_condition(pose: &PoseKeypoints, width: usize, height: usize) -> RasterImage {
    let mut img = RasterImage::filled(width, height, [0, 0, 0]);
    let at = |name: &str| pose.confident(name).map(|j| (j.x, j.y));

    for (i, &(a, b)) in BODY_LIMBS.iter().enumerate() {
        if let (Some(pa), Some(pb)) = (at(BODY_JOINTS[a]), at(BODY_JOINTS[b])) {
            draw_segment(&mut img, pa, pb, LIMB_WIDTH / 2.0, BODY_COLORS[i]);
        }
    }
    for side in ["left", "right"] {
        for (i, &(a, b)) in HAND_LIMBS.iter().enumerate() {
            if let (Some(pa), Some(pb)) = (at(&hand_joint_name(side, a)), at(&hand_joint_name(side, b))) {
                draw_segment(&mut img, pa, pb, LIMB_WIDTH / 2.0, hand_limb_color(i));
            }
        }
    }
    for (i, name) in BODY_JOINTS.iter().enumerate() {
        if let Some(p) = at(name) {
            draw_disc(&mut img, p, JOINT_RADIUS, BODY_COLORS[i]);
        }
    }
    for j in &pose.joints {
        if j.confidence >= CONFIDENCE_GATE && j.name.contains("_hand_") {
            draw_disc(&mut img, (j.x, j.y), JOINT_RADIUS, HAND_JOINT_COLOR);
        }
    }
    img
}

/// Color-codes a parsing map with the bijective label table.
pub fn make_seg_condition(parsing: &LabelMap) -> Result<RasterImage> {
    let mut lut = [[0u8; 3]; 256];
    let mut seen = [false; 256];
    for &l in &parsing.data {
        if !seen[l as usize] {
            lut[l as usize] = label_color(l)?;
            seen[l as usize] = true;
        }
    }
    let data = parsing.data.iter().flat_map(|&l| lut[l as usize]).collect();
    RasterImage::new(parsing.width, parsing.height, data)
}

/// Inverse of [`make_seg_condition`].
pub fn decode_seg_condition(img: &RasterImage) -> Option<LabelMap> {
    let mut data = Vec::with_capacity(img.width() * img.height());
    for p in img.pixels() {
        data.push(crate::parsing::color_label(p)?);
    }
    Some(LabelMap {
        width: img.width(),
        height: img.height(),
        data,
    })
}
