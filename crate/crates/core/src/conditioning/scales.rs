use serde::{Deserialize, Serialize};

use crate::detector::{ArtifactClass, ArtifactReport};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, RasterImage};

/// Per-condition influence, normalized to [0, 1]. The backend maps 1.0 to
/// its native maximum strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleVector {
    pub canny: f64,
    pub pose: f64,
    pub segmentation: f64,
    pub ip_adapter: f64,
}

impl ScaleVector {
    pub const fn new(canny: f64, pose: f64, segmentation: f64, ip_adapter: f64) -> Self {
        Self {
            canny,
            pose,
            segmentation,
            ip_adapter,
        }
    }

    pub fn components(&self) -> [f64; 4] {
        [self.canny, self.pose, self.segmentation, self.ip_adapter]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in ["canny", "pose", "segmentation", "ip_adapter"].iter().zip(self.components()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(format!("scale {name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn max(&self, other: &ScaleVector) -> ScaleVector {
        ScaleVector::new(
            self.canny.max(other.canny),
            self.pose.max(other.pose),
            self.segmentation.max(other.segmentation),
            self.ip_adapter.max(other.ip_adapter),
        )
    }

    /// Name of the strictly largest component, if there is one.
    pub fn argmax(&self) -> Option<&'static str> {
        let names = ["canny", "pose", "segmentation", "ip_adapter"];
        let c = self.components();
        let (best, &v) = c
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        if c.iter().enumerate().any(|(i, &o)| i != best && o >= v) {
            return None;
        }
        Some(names[best])
    }
}

/// One scale row per artifact class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleRules {
    pub cloth_design: ScaleVector,
    pub deformation: ScaleVector,
    pub color_texture: ScaleVector,
}

impl Default for ScaleRules {
    fn default() -> Self {
        Self {
            cloth_design: ScaleVector::new(0.9, 0.3, 0.4, 0.6),
            deformation: ScaleVector::new(0.2, 0.9, 0.7, 0.4),
            color_texture: ScaleVector::new(0.3, 0.3, 0.6, 0.9),
        }
    }
}

impl ScaleRules {
    pub fn row(&self, class: ArtifactClass) -> ScaleVector {
        match class {
            ArtifactClass::ClothDesign => self.cloth_design,
            ArtifactClass::Deformation => self.deformation,
            ArtifactClass::ColorTexture => self.color_texture,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, row) in [
            ("cloth_design", &self.cloth_design),
            ("deformation", &self.deformation),
            ("color_texture", &self.color_texture),
        ] {
            row.validate().map_err(|e| Error::Config(format!("scales.{name}: {e}")))?;
        }
        Ok(())
    }
}

/// A learned predictor of condition scales, such as an image-context
/// regression network.
pub trait ScaleModel: Send + Sync {
    fn predict(&self, distorted: &RasterImage, mask: &BinaryMask) -> Result<ScaleVector>;
}

/// Rule baseline: component-wise maximum of the class rows of all reports,
/// unless a learned model is supplied.
pub fn generate_scales(
    reports: &[ArtifactReport],
    rules: &ScaleRules,
    model: Option<(&dyn ScaleModel, &RasterImage, &BinaryMask)>,
) -> Result<ScaleVector> {
    if reports.is_empty() {
        return Err(Error::NothingToRepair);
    }
    let scales = match model {
        Some((m, image, mask)) => m.predict(image, mask)?,
        None => {
            let mut iter = reports.iter().map(|r| rules.row(r.class));
            let first = iter.next().expect("non-empty");
            iter.fold(first, |acc, row| acc.max(&row))
        }
    };
    scales.validate()?;
    Ok(scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn report(class: ArtifactClass) -> ArtifactReport {
        ArtifactReport {
            class,
            mask: BinaryMask::full(2, 2),
            inpaint_mask: BinaryMask::full(2, 2),
            strategies: BTreeSet::new(),
            score: 1.0,
        }
    }

    #[test]
    fn single_class_argmax() {
        let rules = ScaleRules::default();
        let expect = [
            (ArtifactClass::ClothDesign, "canny"),
            (ArtifactClass::Deformation, "pose"),
            (ArtifactClass::ColorTexture, "ip_adapter"),
        ];
        for (class, name) in expect {
            let s = generate_scales(&[report(class)], &rules, None).unwrap();
            assert_eq!(s.argmax(), Some(name), "{class:?}");
        }
    }

    #[test]
    fn combination_is_componentwise_max() {
        let s = generate_scales(
            &[report(ArtifactClass::ClothDesign), report(ArtifactClass::ColorTexture)],
            &ScaleRules::default(),
            None,
        )
        .unwrap();
        assert_eq!(s, ScaleVector::new(0.9, 0.3, 0.6, 0.9));
    }

    #[test]
    fn all_combinations_in_unit_range() {
        let rules = ScaleRules::default();
        for bits in 1u8..8 {
            let reports: Vec<_> = ArtifactClass::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, &c)| report(c))
                .collect();
            generate_scales(&reports, &rules, None).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn empty_reports_error() {
        assert!(matches!(
            generate_scales(&[], &ScaleRules::default(), None),
            Err(Error::NothingToRepair)
        ));
    }

    struct Fixed(ScaleVector);
    impl ScaleModel for Fixed {
        fn predict(&self, _: &RasterImage, _: &BinaryMask) -> Result<ScaleVector> {
            Ok(self.0)
        }
    }

    #[test]
    fn learned_model_delegation_and_range_check() {
        let img = RasterImage::filled(2, 2, [0, 0, 0]);
        let mask = BinaryMask::full(2, 2);
        let reports = [report(ArtifactClass::ClothDesign)];
        let m = Fixed(ScaleVector::new(0.1, 0.2, 0.3, 0.4));
        let s = generate_scales(&reports, &ScaleRules::default(), Some((&m, &img, &mask))).unwrap();
        assert_eq!(s, m.0);
        let bad = Fixed(ScaleVector::new(1.5, 0.2, 0.3, 0.4));
        assert!(generate_scales(&reports, &ScaleRules::default(), Some((&bad, &img, &mask))).is_err());
    }
}
