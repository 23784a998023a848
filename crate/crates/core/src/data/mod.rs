//! Dataset model and bit-exact on-disk formats.
//!
//! A dataset directory holds four files:
//!
//! - `meta.json` — UTF-8 manifest: counts, names, split assignment, ordered
//!   image ids.
//! - `features.bin` — magic `ANAXFEAT`, then N*k*d little-endian f32 in
//!   image-major, region-major, feature-minor order. Stored 32-bit, widened
//!   to f64 in memory.
//! - `labels.bin` — magic `ANAXLABL`, then N*k*M bytes, each 0 or 1.
//! - `mask.bin` — magic `ANAXMASK`, then N*k presence bytes, each 0 or 1.
//!
//! Loaders zero the feature rows of absent regions; whatever was stored
//! there never reaches the model.

mod binfmt;
mod checkpoint;
mod synth;

pub use checkpoint::{
    load_adjacency, load_checkpoint, save_adjacency, save_checkpoint, Checkpoint,
};
pub use synth::{generate_synthetic, SynthSpec};

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use binfmt::{Reader, Writer, FORMAT_VERSION};

const FEATURES_MAGIC: &[u8; 8] = b"ANAXFEAT";
const LABELS_MAGIC: &[u8; 8] = b"ANAXLABL";
const MASK_MAGIC: &[u8; 8] = b"ANAXMASK";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

/// `meta.json` contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    #[serde(rename = "N")]
    pub image_count: usize,
    #[serde(rename = "k")]
    pub regions: usize,
    #[serde(rename = "d")]
    pub feature_dim: usize,
    #[serde(rename = "M")]
    pub label_count: usize,
    pub region_names: Vec<String>,
    pub label_names: Vec<String>,
    /// Image id -> split. Every id in `image_ids` appears exactly once.
    pub splits: BTreeMap<String, Split>,
    /// Record order of the binary payloads.
    pub image_ids: Vec<String>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.region_names.len() != self.regions {
            return Err(Error::Data(format!(
                "{} region names for {} regions",
                self.region_names.len(),
                self.regions
            )));
        }
        if self.label_names.len() != self.label_count {
            return Err(Error::Data(format!(
                "{} label names for {} labels",
                self.label_names.len(),
                self.label_count
            )));
        }
        if self.image_ids.len() != self.image_count {
            return Err(Error::Data(format!(
                "{} image ids for N={}",
                self.image_ids.len(),
                self.image_count
            )));
        }
        if self.splits.len() != self.image_count
            || self.image_ids.iter().any(|id| !self.splits.contains_key(id))
        {
            return Err(Error::Data(
                "split assignment does not partition the image ids exactly".into(),
            ));
        }
        Ok(())
    }

    pub fn split_ids(&self, split: Split) -> impl Iterator<Item = (usize, &str)> {
        self.image_ids
            .iter()
            .enumerate()
            .filter(move |(_, id)| self.splits.get(*id) == Some(&split))
            .map(|(i, id)| (i, id.as_str()))
    }
}

/// One image: identifier, k x d features, k presence bytes, k x M labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub features: Matrix,
    pub mask: Vec<u8>,
    pub labels: Matrix,
}

/// The 18 anatomical region names of the reference task, used when k = 18;
/// other sizes get generic names.
pub fn default_region_names(k: usize) -> Vec<String> {
    const CANONICAL: [&str; 18] = [
        "right lung",
        "right apical zone",
        "right upper lung zone",
        "right mid lung zone",
        "right lower lung zone",
        "right hilar structures",
        "right costophrenic angle",
        "left lung",
        "left apical zone",
        "left upper lung zone",
        "left mid lung zone",
        "left lower lung zone",
        "left hilar structures",
        "left costophrenic angle",
        "mediastinum",
        "upper mediastinum",
        "cardiac silhouette",
        "trachea",
    ];
    if k == 18 {
        CANONICAL.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=k).map(|i| format!("region_{i:02}")).collect()
    }
}

/// The nine finding names of the reference task, used when M = 9; other
/// sizes get plain L1..LM ids.
pub fn default_label_names(m: usize) -> Vec<String> {
    const CANONICAL: [&str; 9] = [
        "Lung Opacity",
        "Pleural Effusion",
        "Atelectasis",
        "Enlarged Cardiac Silhouette",
        "Pulmonary Edema/Hazy Opacity",
        "Pneumothorax",
        "Consolidation",
        "Fluid Overload/Heart Failure",
        "Pneumonia",
    ];
    if m == 9 {
        CANONICAL.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=m).map(|i| format!("L{i}")).collect()
    }
}

fn check_records(manifest: &DatasetManifest, records: &[ImageRecord]) -> Result<()> {
    manifest.validate()?;
    if records.len() != manifest.image_count {
        return Err(Error::Data(format!(
            "{} records for manifest N={}",
            records.len(),
            manifest.image_count
        )));
    }
    for (record, id) in records.iter().zip(&manifest.image_ids) {
        if &record.id != id {
            return Err(Error::Data(format!(
                "record id '{}' does not match manifest order (expected '{id}')",
                record.id
            )));
        }
        if record.features.shape() != (manifest.regions, manifest.feature_dim) {
            return Err(Error::Data(format!(
                "features of '{id}' are {:?}, expected ({}, {})",
                record.features.shape(),
                manifest.regions,
                manifest.feature_dim
            )));
        }
        if record.labels.shape() != (manifest.regions, manifest.label_count) {
            return Err(Error::Data(format!(
                "labels of '{id}' are {:?}, expected ({}, {})",
                record.labels.shape(),
                manifest.regions,
                manifest.label_count
            )));
        }
        if record.mask.len() != manifest.regions {
            return Err(Error::Data(format!("mask of '{id}' has wrong length")));
        }
        if record.mask.iter().any(|&b| b > 1) {
            return Err(Error::Data(format!("mask of '{id}' holds non-binary bytes")));
        }
        if record.labels.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data(format!("labels of '{id}' are not strictly 0/1")));
        }
    }
    Ok(())
}

/// Write the manifest and the three binary payloads. Byte output is a pure
/// function of the input.
pub fn write_dataset(manifest: &DatasetManifest, records: &[ImageRecord], dir: &Path) -> Result<()> {
    check_records(manifest, records)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta_path = dir.join("meta.json");
    let mut meta = serde_json::to_vec_pretty(manifest).map_err(|e| Error::Json {
        path: meta_path.clone(),
        source: e,
    })?;
    meta.push(b'\n');
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;

    let (k, d, m) = (manifest.regions, manifest.feature_dim, manifest.label_count);
    let n = manifest.image_count as u32;

    let feat_path = dir.join("features.bin");
    let file = fs::File::create(&feat_path).map_err(|e| Error::io(&feat_path, e))?;
    let mut w = Writer::new(BufWriter::new(file), &feat_path);
    w.header(FEATURES_MAGIC)?;
    for v in [n, k as u32, d as u32] {
        w.write_u32(v)?;
    }
    for record in records {
        w.write_f32_block(record.features.data())?;
    }
    w.finish()?;

    let labels_path = dir.join("labels.bin");
    let file = fs::File::create(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut w = Writer::new(BufWriter::new(file), &labels_path);
    w.header(LABELS_MAGIC)?;
    for v in [n, k as u32, m as u32] {
        w.write_u32(v)?;
    }
    for record in records {
        let bytes: Vec<u8> = record.labels.data().iter().map(|&v| v as u8).collect();
        w.write_bytes(&bytes)?;
    }
    w.finish()?;

    let mask_path = dir.join("mask.bin");
    let file = fs::File::create(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
    let mut w = Writer::new(BufWriter::new(file), &mask_path);
    w.header(MASK_MAGIC)?;
    for v in [n, k as u32] {
        w.write_u32(v)?;
    }
    for record in records {
        w.write_bytes(&record.mask)?;
    }
    w.finish()
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let meta_path = dir.join("meta.json");
    let bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::Json { path: meta_path.clone(), source: e })?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::format(
            &meta_path,
            format!("unsupported manifest version {}, expected {FORMAT_VERSION}", manifest.version),
        ));
    }
    manifest.validate()?;
    Ok(manifest)
}

/// Load the records of one split, in manifest order, with absent-region
/// feature rows zeroed.
pub fn load_dataset(dir: &Path, split: Split) -> Result<(DatasetManifest, Vec<ImageRecord>)> {
    let manifest = load_manifest(dir)?;
    let (n, k, d, m) = (
        manifest.image_count,
        manifest.regions,
        manifest.feature_dim,
        manifest.label_count,
    );

    let feat_path = dir.join("features.bin");
    let file = fs::File::open(&feat_path).map_err(|e| Error::io(&feat_path, e))?;
    let mut r = Reader::new(BufReader::new(file), &feat_path);
    r.expect_magic(FEATURES_MAGIC)?;
    r.expect_version()?;
    for (expected, what) in [(n, "N"), (k, "k"), (d, "d")] {
        let got = r.read_u32(what)? as usize;
        if got != expected {
            return Err(Error::format(
                &feat_path,
                format!("{what} is {got}, manifest says {expected}"),
            ));
        }
    }
    let features = r.read_f32_block(n * k * d, "feature payload")?;
    r.expect_eof()?;

    let labels_path = dir.join("labels.bin");
    let file = fs::File::open(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut r = Reader::new(BufReader::new(file), &labels_path);
    r.expect_magic(LABELS_MAGIC)?;
    r.expect_version()?;
    for (expected, what) in [(n, "N"), (k, "k"), (m, "M")] {
        let got = r.read_u32(what)? as usize;
        if got != expected {
            return Err(Error::format(
                &labels_path,
                format!("{what} is {got}, manifest says {expected}"),
            ));
        }
    }
    let labels = r.read_bit_bytes(n * k * m, "label payload")?;
    r.expect_eof()?;

    let mask_path = dir.join("mask.bin");
    let file = fs::File::open(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
    let mut r = Reader::new(BufReader::new(file), &mask_path);
    r.expect_magic(MASK_MAGIC)?;
    r.expect_version()?;
    for (expected, what) in [(n, "N"), (k, "k")] {
        let got = r.read_u32(what)? as usize;
        if got != expected {
            return Err(Error::format(
                &mask_path,
                format!("{what} is {got}, manifest says {expected}"),
            ));
        }
    }
    let masks = r.read_bit_bytes(n * k, "mask payload")?;
    r.expect_eof()?;

    let mut records = Vec::new();
    for (index, id) in manifest.split_ids(split) {
        let mask: Vec<u8> = masks[index * k..(index + 1) * k].to_vec();
        let mut feat =
            Matrix::new(k, d, features[index * k * d..(index + 1) * k * d].to_vec())?;
        for (row, &present) in mask.iter().enumerate() {
            if present == 0 {
                feat.row_mut(row).fill(0.0);
            }
        }
        let label_slice = &labels[index * k * m..(index + 1) * k * m];
        let label_matrix = Matrix::new(k, m, label_slice.iter().map(|&b| f64::from(b)).collect())?;
        records.push(ImageRecord {
            id: id.to_string(),
            features: feat,
            mask,
            labels: label_matrix,
        });
    }

    Ok((manifest, records))
}
