//! Procedural person renderer used as the clean source for synthetic
//! corpora. Shapes and the shirt texture are defined in body coordinates,
//! so two renders under different similarity transforms are exact warps of
//! each other.

use crate::conditioning::segment_distance;
use crate::detector::{Detection, FeatureLabel};
use crate::image::{BoundingBox, LabelMap, RasterImage};
use crate::parsing::{BACKGROUND, FACE, HAIR, LEFT_ARM, NECK, PANTS, RIGHT_ARM, UPPER_CLOTHES};
use crate::pose::{hand_joint_name, Joint, PoseKeypoints, HAND_POINTS};
use crate::rng::SplitMix64;

pub const SCENE_WIDTH: usize = 192;
pub const SCENE_HEIGHT: usize = 256;

/// Scene colors: background, hair, skin, shirt, stripe, pants.
pub const PALETTE: [[u8; 3]; 6] = [
    [198, 208, 222],
    [52, 36, 28],
    [224, 178, 148],
    [242, 242, 236],
    [32, 46, 112],
    [72, 72, 80],
];
const BG: usize = 0;
const HAIR_C: usize = 1;
const SKIN: usize = 2;
const SHIRT: usize = 3;
const STRIPE: usize = 4;
const PANTS_C: usize = 5;

/// Stripe band height in body units; the period is twice this.
pub const STRIPE_BAND: f64 = 6.0;
pub const NOISE_AMPLITUDE: i64 = 3;
const HAND_RADIUS: f64 = 8.0;

type P = (f64, f64);

/// `p = scale * (q - center) + center + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub center: P,
    pub shift: P,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        scale: 1.0,
        center: (0.0, 0.0),
        shift: (0.0, 0.0),
    };

    pub fn forward(&self, q: P) -> P {
        (
            self.scale * (q.0 - self.center.0) + self.center.0 + self.shift.0,
            self.scale * (q.1 - self.center.1) + self.center.1 + self.shift.1,
        )
    }

    pub fn inverse(&self, p: P) -> P {
        (
            (p.0 - self.center.0 - self.shift.0) / self.scale + self.center.0,
            (p.1 - self.center.1 - self.shift.1) / self.scale + self.center.1,
        )
    }
}

/// A person in body coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Body joints by name, with confidences.
    pub joints: Vec<(&'static str, P, f64)>,
    /// Hand keypoints per side (`"left"`, `"right"`).
    pub hands: Vec<(&'static str, Vec<P>, f64)>,
}

/// Rendered image plus its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub image: RasterImage,
    pub parsing: LabelMap,
    pub pose: PoseKeypoints,
    pub detections: Vec<Detection>,
}

fn polar(angle_deg: f64, len: f64, dir: f64) -> P {
    let a = angle_deg.to_radians();
    (dir * a.sin() * len, a.cos() * len)
}

fn add(a: P, b: P) -> P {
    (a.0 + b.0, a.1 + b.1)
}

fn in_polygon(q: P, poly: &[P]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi.1 > q.1) != (pj.1 > q.1) && q.0 < (pj.0 - pi.0) * (q.1 - pi.1) / (pj.1 - pi.1) + pi.0 {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn in_ellipse(q: P, c: P, rx: f64, ry: f64) -> bool {
    let (dx, dy) = ((q.0 - c.0) / rx, (q.1 - c.1) / ry);
    dx * dx + dy * dy <= 1.0
}

impl Scene {
    /// Random standing pose with outstretched arms, sized for
    /// [`SCENE_WIDTH`] x [`SCENE_HEIGHT`].
    pub fn random(rng: &mut SplitMix64) -> Scene {
        let (gx, gy) = (rng.range_f64(-6.0, 6.0), rng.range_f64(-3.0, 3.0));
        let at = |x: f64, y: f64| (x + gx, y + gy);
        let nose = at(96.0, 44.0);
        let neck = at(96.0, 66.0);
        let r_sh = at(72.0, 71.0);
        let l_sh = at(120.0, 71.0);
        let r_hip = at(84.0, 146.0);
        let l_hip = at(108.0, 146.0);

        let mut arm = |shoulder: P, dir: f64| {
            let upper = rng.range_f64(32.0, 36.0);
            let fore = rng.range_f64(30.0, 34.0);
            let a1 = rng.range_f64(28.0, 42.0);
            let a2 = (a1 + rng.range_f64(-8.0, 18.0)).min(56.0);
            let elbow = add(shoulder, polar(a1, upper, dir));
            let wrist = add(elbow, polar(a2, fore, dir));
            (elbow, wrist, a2)
        };
        let (r_el, r_wr, r_ang) = arm(r_sh, -1.0);
        let (l_el, l_wr, l_ang) = arm(l_sh, 1.0);

        let mut leg = |hip: P| {
            let knee = add(hip, (rng.range_f64(-2.0, 2.0), 44.0));
            let ankle = add(knee, (rng.range_f64(-2.0, 2.0), 44.0));
            (knee, ankle)
        };
        let (r_kn, r_an) = leg(r_hip);
        let (l_kn, l_an) = leg(l_hip);

        let mut conf = || rng.range_f64(0.75, 0.98);
        let joints = vec![
            ("nose", nose, conf()),
            ("neck", neck, conf()),
            ("right_shoulder", r_sh, conf()),
            ("right_elbow", r_el, conf()),
            ("right_wrist", r_wr, conf()),
            ("left_shoulder", l_sh, conf()),
            ("left_elbow", l_el, conf()),
            ("left_wrist", l_wr, conf()),
            ("right_hip", r_hip, conf()),
            ("right_knee", r_kn, conf()),
            ("right_ankle", r_an, conf()),
            ("left_hip", l_hip, conf()),
            ("left_knee", l_kn, conf()),
            ("left_ankle", l_an, conf()),
            ("right_eye", add(nose, (-6.0, -5.0)), conf()),
            ("left_eye", add(nose, (6.0, -5.0)), conf()),
            ("right_ear", add(nose, (-14.0, -1.0)), conf()),
            ("left_ear", add(nose, (14.0, -1.0)), conf()),
        ];

        let hand = |wrist: P, angle: f64, dir: f64| {
            let mut pts = vec![wrist];
            for finger in 0..5 {
                let a = angle + (finger as f64 - 2.0) * 18.0;
                for k in 1..=4 {
                    pts.push(add(wrist, polar(a, 4.0 + 3.0 * k as f64, dir)));
                }
            }
            debug_assert_eq!(pts.len(), HAND_POINTS);
            pts
        };
        let hands = vec![
            ("left", hand(l_wr, l_ang, 1.0), rng.range_f64(0.6, 0.9)),
            ("right", hand(r_wr, r_ang, -1.0), rng.range_f64(0.6, 0.9)),
        ];
        Scene { joints, hands }
    }

    pub fn joint(&self, name: &str) -> P {
        self.joints
            .iter()
            .find(|j| j.0 == name)
            .map(|j| j.1)
            .unwrap_or_else(|| panic!("scene has no joint {name}"))
    }

    fn hand_center(&self, side: &str) -> P {
        let elbow = self.joint(&format!("{side}_elbow"));
        let wrist = self.joint(&format!("{side}_wrist"));
        let (dx, dy) = (wrist.0 - elbow.0, wrist.1 - elbow.1);
        let len = dx.hypot(dy).max(1e-9);
        add(wrist, (dx / len * 7.0, dy / len * 7.0))
    }

    fn torso(&self) -> [P; 4] {
        let (rs, ls) = (self.joint("right_shoulder"), self.joint("left_shoulder"));
        let (rh, lh) = (self.joint("right_hip"), self.joint("left_hip"));
        let top = self.joint("neck").1 - 2.0;
        [
            (rs.0 - 5.0, top),
            (ls.0 + 5.0, top),
            (lh.0 + 7.0, lh.1 + 4.0),
            (rh.0 - 7.0, rh.1 + 4.0),
        ]
    }

    /// Parsing label and palette index at body coordinate `q`.
    pub fn sample(&self, q: P) -> (u8, usize) {
        let j = |n: &str| self.joint(n);
        let nose = j("nose");
        if in_ellipse(q, (nose.0, nose.1 + 2.0), 15.0, 19.0) {
            return (FACE, SKIN);
        }
        if in_ellipse(q, (nose.0, nose.1 - 7.0), 19.0, 21.0) {
            return (HAIR, HAIR_C);
        }
        if segment_distance(q, j("neck"), (nose.0, nose.1 + 14.0)) <= 7.0 {
            return (NECK, SKIN);
        }
        if in_polygon(q, &self.torso()) {
            let band = ((q.1 - j("neck").1) / STRIPE_BAND).floor() as i64;
            return (UPPER_CLOTHES, if band.rem_euclid(2) == 1 { STRIPE } else { SHIRT });
        }
        for (side, label) in [("left", LEFT_ARM), ("right", RIGHT_ARM)] {
            let (s, e, w) = (
                j(&format!("{side}_shoulder")),
                j(&format!("{side}_elbow")),
                j(&format!("{side}_wrist")),
            );
            let c = self.hand_center(side);
            if segment_distance(q, s, e) <= 7.0
                || segment_distance(q, e, w) <= 6.0
                || (q.0 - c.0).hypot(q.1 - c.1) <= HAND_RADIUS
            {
                return (label, SKIN);
            }
        }
        let (rh, lh) = (j("right_hip"), j("left_hip"));
        let pelvis = [
            (rh.0 - 9.0, rh.1 - 8.0),
            (lh.0 + 9.0, lh.1 - 8.0),
            (lh.0 + 10.0, lh.1 + 12.0),
            (rh.0 - 10.0, rh.1 + 12.0),
        ];
        if in_polygon(q, &pelvis) {
            return (PANTS, PANTS_C);
        }
        for side in ["left", "right"] {
            let (h, k, a) = (
                j(&format!("{side}_hip")),
                j(&format!("{side}_knee")),
                j(&format!("{side}_ankle")),
            );
            if segment_distance(q, h, k) <= 10.0 || segment_distance(q, k, a) <= 10.0 {
                return (PANTS, PANTS_C);
            }
        }
        (BACKGROUND, BG)
    }

    /// Renders the scene through `t` with deterministic per-pixel noise.
    pub fn render(&self, t: &Similarity, width: usize, height: usize, noise_seed: u64) -> RenderedScene {
        let mut rng = SplitMix64::new(noise_seed);
        let mut image = RasterImage::filled(width, height, [0, 0, 0]);
        let mut parsing = LabelMap::filled(width, height, BACKGROUND);
        for y in 0..height {
            for x in 0..width {
                let (label, color) = self.sample(t.inverse((x as f64, y as f64)));
                let base = PALETTE[color];
                let px = base.map(|c| {
                    let n = rng.range_usize(0, 2 * NOISE_AMPLITUDE as usize + 1) as i64 - NOISE_AMPLITUDE;
                    (c as i64 + n).clamp(0, 255) as u8
                });
                image.set(x, y, px);
                parsing.set(x, y, label);
            }
        }

        let mut joints: Vec<Joint> = self
            .joints
            .iter()
            .map(|&(n, q, c)| {
                let p = t.forward(q);
                Joint::new(n, p.0, p.1, c)
            })
            .collect();
        for (side, pts, c) in &self.hands {
            for (i, &q) in pts.iter().enumerate() {
                let p = t.forward(q);
                joints.push(Joint::new(hand_joint_name(side, i), p.0, p.1, *c));
            }
        }

        let clamp_box = |x0: f64, y0: f64, x1: f64, y1: f64| {
            let cx = |v: f64| v.round().clamp(0.0, (width - 1) as f64) as usize;
            let cy = |v: f64| v.round().clamp(0.0, (height - 1) as f64) as usize;
            BoundingBox::new(cx(x0), cy(y0), cx(x1), cy(y1))
        };
        let nose = t.forward(self.joint("nose"));
        let s = t.scale;
        let mut detections = vec![Detection {
            label: FeatureLabel::Face,
            bbox: clamp_box(nose.0 - 15.0 * s, nose.1 - 17.0 * s, nose.0 + 15.0 * s, nose.1 + 21.0 * s),
            confidence: 0.9,
        }];
        for (side, label) in [("left", FeatureLabel::HandLeft), ("right", FeatureLabel::HandRight)] {
            let c = t.forward(self.hand_center(side));
            let r = (HAND_RADIUS + 2.0) * s;
            detections.push(Detection {
                label,
                bbox: clamp_box(c.0 - r, c.1 - r, c.0 + r, c.1 + r),
                confidence: 0.85,
            });
        }

        RenderedScene {
            image,
            parsing,
            pose: PoseKeypoints::new(joints),
            detections,
        }
    }
}

/// Renders a random scene with the identity transform.
pub fn render_scene(seed: u64) -> RenderedScene {
    let mut rng = SplitMix64::new(seed);
    let scene = Scene::random(&mut rng);
    scene.render(&Similarity::IDENTITY, SCENE_WIDTH, SCENE_HEIGHT, rng.next_u64())
}
