//! Manifest ingestion, image decoding, preprocessing and stratified splits.

pub mod image;
pub mod manifest;
pub mod preprocess;
pub mod split;
pub mod synth;

pub use image::{decode_image, Raster};
pub use manifest::{load_manifest, write_manifest, ClassOrder, Label, ManifestEntry};
pub use preprocess::{preprocess, resize_bilinear, PreprocessConfig};
pub use split::{load_sample, plan_split, split_dataset, DatasetSplit, Sample, SplitMode, SplitPlan};
pub use synth::gen_synthetic;
