use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::image::decode_image;
use crate::data::manifest::{ClassOrder, Label, ManifestEntry};
use crate::data::preprocess::{preprocess, PreprocessConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// 80/20 train/test; validation monitors the test partition.
    #[default]
    Holdout,
    /// 80/20, then the 80% halved into train and validation.
    ThreeWay,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Holdout => "holdout",
            SplitMode::ThreeWay => "three_way",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "holdout" => Ok(SplitMode::Holdout),
            "three_way" => Ok(SplitMode::ThreeWay),
            _ => Err(Error::Config(format!("unknown split mode {s:?} (expected holdout or three_way)"))),
        }
    }
}

pub const TEST_FRACTION: f64 = 0.2;

/// Partition membership as indices into the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub mode: SplitMode,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    /// In holdout mode the validation partition is the test partition.
    pub fn validation_is_test(&self) -> bool {
        self.mode == SplitMode::Holdout
    }

    /// SHA-256 over the ordered partition paths, hex encoded.
    pub fn fingerprint(&self, entries: &[ManifestEntry]) -> String {
        let mut h = Sha256::new();
        for (name, part) in [("train", &self.train), ("validation", &self.validation), ("test", &self.test)] {
            h.update(name.as_bytes());
            h.update(b"\n");
            for &i in part {
                h.update(entries[i].image_path.as_bytes());
                h.update(b"\n");
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Round half up, kept inside `1..=n-1` so both sides of a cut are non-empty.
fn cut(n: usize, fraction: f64) -> usize {
    (((n as f64) * fraction + 0.5).floor() as usize).clamp(1, n.saturating_sub(1).max(1))
}

fn interleave(groups: Vec<Vec<usize>>) -> Vec<usize> {
    let longest = groups.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::with_capacity(groups.iter().map(Vec::len).sum());
    for i in 0..longest {
        for g in &groups {
            if let Some(&v) = g.get(i) {
                out.push(v);
            }
        }
    }
    out
}

/// Stratified split: each class is shuffled on its own, cut into partitions,
/// and the per-class pieces are interleaved in class order.
pub fn plan_split(entries: &[ManifestEntry], seed: u64, mode: SplitMode) -> Result<SplitPlan> {
    let order = ClassOrder::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for label in order.labels {
        let mut idx: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].label == label).collect();
        let need = match mode {
            SplitMode::Holdout => 2,
            SplitMode::ThreeWay => 3,
        };
        if idx.is_empty() {
            return Err(Error::Split(format!("class {label} is absent from the manifest")));
        }
        if idx.len() < need {
            return Err(Error::Split(format!(
                "class {label} has {} entries; {mode} needs at least {need}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_test = cut(n, TEST_FRACTION);
        let rest = idx.split_off(n_test);
        test.push(idx);
        match mode {
            SplitMode::Holdout => train.push(rest),
            SplitMode::ThreeWay => {
                let mut rest = rest;
                let n_train = rest.len() - rest.len() / 2;
                let v = rest.split_off(n_train);
                train.push(rest);
                val.push(v);
            }
        }
    }
    let test = interleave(test);
    let validation = match mode {
        SplitMode::Holdout => test.clone(),
        SplitMode::ThreeWay => interleave(val),
    };
    Ok(SplitPlan { seed, mode, train: interleave(train), validation, test })
}

#[derive(Clone, Debug)]
pub struct Sample {
    /// `[3, S, S]` in `[0, 1]`.
    pub image: Tensor<f32>,
    /// One-hot `[2]` under [`ClassOrder`].
    pub target: Tensor<f32>,
    pub label: Label,
    pub path: String,
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub plan: SplitPlan,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl DatasetSplit {
    pub fn seed(&self) -> u64 {
        self.plan.seed
    }

    pub fn mode(&self) -> SplitMode {
        self.plan.mode
    }
}

/// Decodes and preprocesses one manifest entry.
pub fn load_sample(entry: &ManifestEntry, manifest_dir: &Path, config: &PreprocessConfig) -> Result<Sample> {
    let raster = decode_image(entry.resolve(manifest_dir))?;
    Ok(Sample {
        image: preprocess(&raster, config)?,
        target: ClassOrder::default().one_hot(entry.label),
        label: entry.label,
        path: entry.image_path.clone(),
    })
}

/// Plans the split, then decodes and preprocesses every image it references.
pub fn split_dataset(
    entries: &[ManifestEntry],
    manifest_dir: &Path,
    seed: u64,
    mode: SplitMode,
    config: &PreprocessConfig,
) -> Result<DatasetSplit> {
    let plan = plan_split(entries, seed, mode)?;
    let loaded: Vec<Result<Sample>> =
        exec::map_indexed(entries.len(), |i| load_sample(&entries[i], manifest_dir, config));
    let samples = loaded.into_iter().collect::<Result<Vec<_>>>()?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&plan.train),
        validation: pick(&plan.validation),
        test: pick(&plan.test),
        plan,
    })
}
