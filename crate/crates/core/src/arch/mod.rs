//! Desk-scale builders for the seven CNN families.
//!
//! Every family shares the same skeleton: a 3×3 stem, three stages with the
//! spatial extent halved between stages, and a global-average-pool → dense →
//! softmax head. What differs is the per-stage block, which carries the
//! family's defining mechanism (dense concatenation, parallel branches,
//! residual addition, separable or inverted-residual convolutions).

mod builder;
mod model;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builder::build_family;
pub use model::{BlockInfo, BlockKind, ForwardPass, Layer, LayerKind, LayerRow, Model, RunningStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyId {
    Vgg,
    DenseNet,
    Inception,
    ResNetV2,
    InceptionResNetV2,
    Xception,
    MobileNetV2,
}

impl FamilyId {
    pub const ALL: [FamilyId; 7] = [
        FamilyId::Vgg,
        FamilyId::DenseNet,
        FamilyId::ResNetV2,
        FamilyId::Inception,
        FamilyId::InceptionResNetV2,
        FamilyId::Xception,
        FamilyId::MobileNetV2,
    ];

    /// Name accepted on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            FamilyId::Vgg => "vgg19",
            FamilyId::DenseNet => "densenet",
            FamilyId::Inception => "inceptionv3",
            FamilyId::ResNetV2 => "resnetv2",
            FamilyId::InceptionResNetV2 => "inceptionresnetv2",
            FamilyId::Xception => "xception",
            FamilyId::MobileNetV2 => "mobilenetv2",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            FamilyId::Vgg => "VGG19",
            FamilyId::DenseNet => "DenseNet201",
            FamilyId::Inception => "InceptionV3",
            FamilyId::ResNetV2 => "ResNetV2",
            FamilyId::InceptionResNetV2 => "InceptionResNetV2",
            FamilyId::Xception => "Xception",
            FamilyId::MobileNetV2 => "MobileNetV2",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|f| f.cli_name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for FamilyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|f| f.cli_name() == lower)
            .ok_or_else(|| Error::UnknownFamily { name: s.to_string(), valid: Self::valid_names() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input_size: usize,
    pub input_channels: usize,
    pub num_classes: usize,
    pub width_mult: f64,
    pub depth_mult: f64,
    pub init_seed: u64,
    /// Depth label for families published at several depths: 16 or 19 for
    /// vgg (default 19), 121 or 201 for densenet (default 201).
    pub variant: Option<u32>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            input_channels: 3,
            num_classes: 2,
            width_mult: 0.25,
            depth_mult: 0.5,
            init_seed: 0,
            variant: None,
        }
    }
}

pub const MIN_INPUT_SIZE: usize = 32;
pub const STAGES: usize = 3;

/// Rounds half up.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("width_mult", self.width_mult), ("depth_mult", self.depth_mult)] {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::Config(format!("{name} = {m} would produce zero channels or blocks")));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.input_channels == 0 {
            return Err(Error::Config("input_channels must be >= 1".into()));
        }
        if self.input_size < MIN_INPUT_SIZE {
            return Err(Error::Config(format!(
                "input_size {} is too small for {STAGES} stages (minimum {MIN_INPUT_SIZE})",
                self.input_size
            )));
        }
        Ok(())
    }

    /// `base * width_mult`, rounded half up, at least one channel.
    pub fn channels(&self, base: f64) -> usize {
        round_half_up(base * self.width_mult).max(1)
    }

    pub fn blocks_per_stage(&self) -> usize {
        round_half_up(2.0 * self.depth_mult).max(1)
    }

    /// Stem width: 16 · width_mult · 4.
    pub fn stem_channels(&self) -> usize {
        self.channels(64.0)
    }

    /// DenseNet growth rate: 4 · width_mult · 4.
    pub fn growth_rate(&self) -> usize {
        self.channels(16.0)
    }

    /// Channels of stage `s`; doubled at each downsampling.
    pub fn stage_channels(&self, s: usize) -> usize {
        self.stem_channels() << s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_case_insensitively() {
        assert_eq!("VGG19".parse::<FamilyId>().unwrap(), FamilyId::Vgg);
        assert_eq!("MobileNetV2".parse::<FamilyId>().unwrap(), FamilyId::MobileNetV2);
        for f in FamilyId::ALL {
            assert_eq!(f.cli_name().parse::<FamilyId>().unwrap(), f);
        }
        let err = "alexnet".parse::<FamilyId>().unwrap_err().to_string();
        for f in FamilyId::ALL {
            assert!(err.contains(f.cli_name()), "{err}");
        }
    }

    #[test]
    fn default_scales() {
        let c = ArchConfig::default();
        assert_eq!(c.stem_channels(), 16);
        assert_eq!(c.growth_rate(), 4);
        assert_eq!(c.blocks_per_stage(), 1);
        assert_eq!(c.stage_channels(2), 64);
    }

    #[test]
    fn multipliers_round_half_up_and_floor_at_one() {
        let c = ArchConfig { width_mult: 0.0001, depth_mult: 0.75, ..ArchConfig::default() };
        assert_eq!(c.stem_channels(), 1);
        assert_eq!(c.blocks_per_stage(), 2);
        let c = ArchConfig { width_mult: 0.5 / 64.0, ..ArchConfig::default() };
        assert_eq!(c.stem_channels(), 1);
    }

    #[test]
    fn invalid_configs() {
        let bad = |c: ArchConfig| c.validate().is_err();
        assert!(bad(ArchConfig { width_mult: 0.0, ..Default::default() }));
        assert!(bad(ArchConfig { depth_mult: -1.0, ..Default::default() }));
        assert!(bad(ArchConfig { input_size: 16, ..Default::default() }));
        assert!(bad(ArchConfig { num_classes: 1, ..Default::default() }));
        assert!(ArchConfig::default().validate().is_ok());
    }
}
