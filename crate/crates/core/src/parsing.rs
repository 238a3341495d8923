//! Human-parsing label table (the 20-class set used by VTON-HD parse maps),
//! its segmentation color coding, and the coarse body-region taxonomy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LABEL_NAMES: [&str; 20] = [
    "background",
    "hat",
    "hair",
    "glove",
    "sunglasses",
    "upper-clothes",
    "dress",
    "coat",
    "socks",
    "pants",
    "neck",
    "scarf",
    "skirt",
    "face",
    "left-arm",
    "right-arm",
    "left-leg",
    "right-leg",
    "left-shoe",
    "right-shoe",
];

pub const BACKGROUND: u8 = 0;
pub const HAIR: u8 = 2;
pub const UPPER_CLOTHES: u8 = 5;
pub const PANTS: u8 = 9;
pub const NECK: u8 = 10;
pub const FACE: u8 = 13;
pub const LEFT_ARM: u8 = 14;
pub const RIGHT_ARM: u8 = 15;

pub fn label_name(label: u8) -> Option<&'static str> {
    LABEL_NAMES.get(label as usize).copied()
}

pub fn is_clothing(label: u8) -> bool {
    matches!(label, 5 | 6 | 7 | 9 | 11 | 12)
}

/// Segmentation color for a label: the label's bits spread MSB-first over
/// the three channels. Distinct labels get distinct colors.
pub fn label_color(label: u8) -> Result<[u8; 3]> {
    if label as usize >= LABEL_NAMES.len() {
        return Err(Error::UnknownLabel(label));
    }
    let mut rgb = [0u8; 3];
    let mut lab = label;
    let mut i = 0;
    while lab != 0 {
        for (ch, c) in rgb.iter_mut().enumerate() {
            *c |= ((lab >> ch) & 1) << (7 - i);
        }
        i += 1;
        lab >>= 3;
    }
    Ok(rgb)
}

/// Inverse of [`label_color`].
pub fn color_label(rgb: [u8; 3]) -> Option<u8> {
    (0..LABEL_NAMES.len() as u8).find(|&l| label_color(l).ok() == Some(rgb))
}

/// Coarse placement taxonomy for artifact regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BodyRegionLabel {
    Hair,
    FaceNeck,
    Hands,
    UpperCloth,
    LowerCloth,
    Other,
}

impl BodyRegionLabel {
    pub const ALL: [BodyRegionLabel; 6] = [
        BodyRegionLabel::FaceNeck,
        BodyRegionLabel::Hair,
        BodyRegionLabel::Hands,
        BodyRegionLabel::UpperCloth,
        BodyRegionLabel::LowerCloth,
        BodyRegionLabel::Other,
    ];

    /// Tie-break rank; lower wins.
    pub fn priority(self) -> u8 {
        match self {
            BodyRegionLabel::UpperCloth => 0,
            BodyRegionLabel::LowerCloth => 1,
            BodyRegionLabel::Hands => 2,
            BodyRegionLabel::Hair => 3,
            BodyRegionLabel::FaceNeck => 4,
            BodyRegionLabel::Other => 5,
        }
    }

    pub fn from_parsing(label: u8) -> Self {
        match label {
            1 | 2 => BodyRegionLabel::Hair,
            4 | 10 | 13 => BodyRegionLabel::FaceNeck,
            3 | 14 | 15 => BodyRegionLabel::Hands,
            5 | 6 | 7 | 11 => BodyRegionLabel::UpperCloth,
            9 | 12 => BodyRegionLabel::LowerCloth,
            _ => BodyRegionLabel::Other,
        }
    }

    pub fn is_cloth(self) -> bool {
        matches!(self, BodyRegionLabel::UpperCloth | BodyRegionLabel::LowerCloth)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BodyRegionLabel::Hair => "Hair",
            BodyRegionLabel::FaceNeck => "FaceNeck",
            BodyRegionLabel::Hands => "Hands",
            BodyRegionLabel::UpperCloth => "UpperCloth",
            BodyRegionLabel::LowerCloth => "LowerCloth",
            BodyRegionLabel::Other => "Other",
        }
    }
}
