use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, LabelMap, RasterImage};
use crate::parsing::BodyRegionLabel;
use crate::vision::quantize_palette;

/// Where on the body a mask sits, by majority vote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyRegion {
    pub label: BodyRegionLabel,
    /// Fraction of mask pixels carrying `label`.
    pub coverage: f64,
}

pub fn identify_mask_region(mask: &BinaryMask, parsing: &LabelMap) -> Result<BodyRegion> {
    if mask.dims() != parsing.dims() {
        return Err(Error::dims(parsing.dims(), mask.dims()));
    }
    let total = mask.count();
    if total == 0 {
        return Err(Error::EmptyRegion("cannot identify the body region of an empty mask".into()));
    }
    let mut counts = [0usize; 6];
    for (i, &m) in mask.data.iter().enumerate() {
        if m {
            let r = BodyRegionLabel::from_parsing(parsing.data[i]);
            counts[BodyRegionLabel::ALL.iter().position(|&l| l == r).expect("taxonomy")] += 1;
        }
    }
    let (label, count) = BodyRegionLabel::ALL
        .iter()
        .zip(counts)
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.priority().cmp(&a.0.priority())))
        .map(|(&l, c)| (l, c))
        .expect("six labels");
    Ok(BodyRegion {
        label,
        coverage: count as f64 / total as f64,
    })
}

/// Cloth regions use the cloth image when there is one; everything else
/// uses the distorted image itself.
pub fn choose_reference<'a>(region: &BodyRegion, cloth: Option<&'a RasterImage>, distorted: &'a RasterImage) -> &'a RasterImage {
    match cloth {
        Some(c) if region.label.is_cloth() => c,
        _ => distorted,
    }
}

/// Describes an image in a short phrase.
pub trait Captioner: Send + Sync {
    fn caption(&self, image: &RasterImage) -> std::result::Result<String, String>;
}

/// Always returns the same caption.
#[derive(Debug, Clone)]
pub struct FixedCaptioner(pub String);

impl Captioner for FixedCaptioner {
    fn caption(&self, _: &RasterImage) -> std::result::Result<String, String> {
        Ok(self.0.clone())
    }
}

/// Always fails; exercises the template-only fallback.
#[derive(Debug, Clone, Default)]
pub struct FailingCaptioner;

impl Captioner for FailingCaptioner {
    fn caption(&self, _: &RasterImage) -> std::result::Result<String, String> {
        Err("captioner unavailable".into())
    }
}

const COLOR_NAMES: [(&str, [f64; 3]); 14] = [
    ("black", [20.0, 20.0, 20.0]),
    ("white", [240.0, 240.0, 240.0]),
    ("gray", [128.0, 128.0, 128.0]),
    ("red", [200.0, 30.0, 30.0]),
    ("orange", [240.0, 140.0, 30.0]),
    ("yellow", [235.0, 220.0, 40.0]),
    ("green", [40.0, 170.0, 60.0]),
    ("cyan", [40.0, 200.0, 210.0]),
    ("blue", [40.0, 90.0, 210.0]),
    ("navy", [25.0, 35.0, 95.0]),
    ("purple", [130.0, 50.0, 160.0]),
    ("pink", [240.0, 150.0, 190.0]),
    ("brown", [120.0, 75.0, 40.0]),
    ("beige", [215.0, 190.0, 150.0]),
];

fn color_name(c: [f64; 3]) -> &'static str {
    let d = |a: [f64; 3]| (0..3).map(|i| (a[i] - c[i]).powi(2)).sum::<f64>();
    COLOR_NAMES
        .iter()
        .min_by(|a, b| d(a.1).total_cmp(&d(b.1)))
        .map(|(n, _)| *n)
        .expect("non-empty table")
}

/// Deterministic stand-in for a captioning model: names the dominant
/// colors of the image.
#[derive(Debug, Clone, Default)]
pub struct PaletteCaptioner;

impl Captioner for PaletteCaptioner {
    fn caption(&self, image: &RasterImage) -> std::result::Result<String, String> {
        let q = quantize_palette(image, 3, 0, None).map_err(|e| e.to_string())?;
        let mut entries: Vec<_> = q.palette.entries.iter().zip(&q.palette.weights).collect();
        entries.sort_by(|a, b| b.1.total_cmp(a.1));
        let mut names: Vec<&str> = Vec::new();
        for (c, _) in entries {
            let n = color_name(*c);
            if !names.contains(&n) {
                names.push(n);
            }
        }
        Ok(match names.as_slice() {
            [] => return Err("empty image".into()),
            [a] => format!("predominantly {a}"),
            [a, b, ..] => format!("predominantly {a} with {b} details"),
        })
    }
}

/// Fixed phrase per body region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionPhrases {
    pub hair: String,
    pub face_neck: String,
    pub hands: String,
    pub upper_cloth: String,
    pub lower_cloth: String,
    pub other: String,
}

impl Default for RegionPhrases {
    fn default() -> Self {
        Self {
            hair: "hair".into(),
            face_neck: "a human face and neck".into(),
            hands: "human hands and arms".into(),
            upper_cloth: "upper-body clothing".into(),
            lower_cloth: "lower-body clothing".into(),
            other: "a person".into(),
        }
    }
}

impl RegionPhrases {
    pub fn phrase(&self, label: BodyRegionLabel) -> &str {
        match label {
            BodyRegionLabel::Hair => &self.hair,
            BodyRegionLabel::FaceNeck => &self.face_neck,
            BodyRegionLabel::Hands => &self.hands,
            BodyRegionLabel::UpperCloth => &self.upper_cloth,
            BodyRegionLabel::LowerCloth => &self.lower_cloth,
            BodyRegionLabel::Other => &self.other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Uses `{region}` and `{caption}` placeholders.
    pub template: String,
    /// Used when the captioner fails; uses `{region}`.
    pub fallback_template: String,
    pub negative_prompt: String,
    pub regions: RegionPhrases,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            template: "a high quality photo of {region}, {caption}".into(),
            fallback_template: "a high quality photo of {region}".into(),
            negative_prompt: "low quality, blurry, deformed, distorted, disfigured, bad anatomy, extra fingers, watermark"
                .into(),
            regions: RegionPhrases::default(),
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.template.contains("{region}") || !self.fallback_template.contains("{region}") {
            return Err(Error::Config("prompt templates must contain {region}".into()));
        }
        if self.template.trim().is_empty() || self.fallback_template.trim().is_empty() {
            return Err(Error::Config("prompt templates must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompts {
    pub prompt: String,
    pub negative_prompt: String,
    /// Set when the captioner failed and the fallback template was used.
    pub caption_failed: bool,
}

pub fn generate_prompt(reference: &RasterImage, region: &BodyRegion, captioner: &dyn Captioner, cfg: &PromptConfig) -> Prompts {
    let phrase = cfg.regions.phrase(region.label);
    let (prompt, caption_failed) = match captioner.caption(reference) {
        Ok(c) if !c.trim().is_empty() => (cfg.template.replace("{region}", phrase).replace("{caption}", c.trim()), false),
        Ok(_) => (cfg.fallback_template.replace("{region}", phrase), true),
        Err(e) => {
            log::warn!("captioner failed, using template-only prompt: {e}");
            (cfg.fallback_template.replace("{region}", phrase), true)
        }
    };
    Prompts {
        prompt,
        negative_prompt: cfg.negative_prompt.clone(),
        caption_failed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parsing::{FACE, HAIR, LEFT_ARM, UPPER_CLOTHES};

    fn split_parsing(w: usize, split: usize, left: u8, right: u8) -> LabelMap {
        let mut p = LabelMap::filled(w, 1, right);
        for x in 0..split {
            p.set(x, 0, left);
        }
        p
    }

    #[test]
    fn region_majority_and_ties() {
        let mask = BinaryMask::full(10, 1);
        let r = identify_mask_region(&mask, &LabelMap::filled(10, 1, UPPER_CLOTHES)).unwrap();
        assert_eq!((r.label, r.coverage), (BodyRegionLabel::UpperCloth, 1.0));

        let r = identify_mask_region(&mask, &split_parsing(10, 6, HAIR, FACE)).unwrap();
        assert_eq!(r.label, BodyRegionLabel::Hair);
        assert!((r.coverage - 0.6).abs() < 1e-12);

        let r = identify_mask_region(&mask, &split_parsing(10, 5, LEFT_ARM, UPPER_CLOTHES)).unwrap();
        assert_eq!(r.label, BodyRegionLabel::UpperCloth);

        assert!(identify_mask_region(&BinaryMask::new(10, 1), &LabelMap::filled(10, 1, 0)).is_err());
    }

    #[test]
    fn reference_rule() {
        let cloth = RasterImage::filled(2, 2, [1, 1, 1]);
        let distorted = RasterImage::filled(2, 2, [2, 2, 2]);
        let upper = BodyRegion {
            label: BodyRegionLabel::UpperCloth,
            coverage: 1.0,
        };
        let hair = BodyRegion {
            label: BodyRegionLabel::Hair,
            coverage: 1.0,
        };
        assert_eq!(choose_reference(&upper, Some(&cloth), &distorted), &cloth);
        assert_eq!(choose_reference(&hair, Some(&cloth), &distorted), &distorted);
        assert_eq!(choose_reference(&upper, None, &distorted), &distorted);
    }

    #[test]
    fn prompt_templates() {
        let img = RasterImage::filled(4, 4, [200, 0, 0]);
        let cfg = PromptConfig::default();
        let upper = BodyRegion {
            label: BodyRegionLabel::UpperCloth,
            coverage: 1.0,
        };
        let p = generate_prompt(&img, &upper, &FixedCaptioner("a red striped shirt".into()), &cfg);
        assert_eq!(p.prompt, "a high quality photo of upper-body clothing, a red striped shirt");
        assert!(!p.caption_failed);
        assert_eq!(p, generate_prompt(&img, &upper, &FixedCaptioner("a red striped shirt".into()), &cfg));

        let hands = BodyRegion {
            label: BodyRegionLabel::Hands,
            coverage: 1.0,
        };
        let p = generate_prompt(&img, &hands, &FailingCaptioner, &cfg);
        assert!(p.caption_failed);
        assert!(p.prompt.contains(&cfg.regions.hands));
        assert!(!p.negative_prompt.is_empty());
    }

    #[test]
    fn palette_captioner_names_colors() {
        let mut img = RasterImage::filled(10, 10, [240, 240, 240]);
        for x in 0..3 {
            for y in 0..10 {
                img.set(x, y, [25, 35, 95]);
            }
        }
        let c = PaletteCaptioner.caption(&img).unwrap();
        assert_eq!(c, "predominantly white with navy details");
    }
}
