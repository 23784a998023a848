//! Model checkpoints (`model.bin`) and adjacency files (`adjacency.bin`),
//! both bit-exact little-endian formats.
//!
//! `model.bin`: magic `ANAXMODL`, u32 version, u32 k, u32 d, u32 M,
//! u32 layer count, per-layer u32 output dims, then every weight matrix as
//! f64 — the GCN layers in order, then the classifier. The per-region
//! baseline stores layer count 0 and a single d x M matrix.
//!
//! `adjacency.bin`: magic `ANAXADJM`, u32 version, u32 k, f64 tau, then
//! three k x k f64 blocks: raw Jaccard scores, thresholded binary,
//! normalized propagation matrix.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::binfmt::{Reader, Writer};
use crate::adjacency::AdjacencyMatrix;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Matrix;

const MODEL_MAGIC: &[u8; 8] = b"ANAXMODL";
const ADJACENCY_MAGIC: &[u8; 8] = b"ANAXADJM";

/// A trained model of either variant, together with its dimensions.
#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    AnaxNet {
        regions: usize,
        feature_dim: usize,
        label_count: usize,
        gcn_dims: Vec<usize>,
        params: ModelParams,
    },
    BaselineFc {
        regions: usize,
        feature_dim: usize,
        label_count: usize,
        weight: Matrix,
    },
}

impl Checkpoint {
    pub fn regions(&self) -> usize {
        match self {
            Checkpoint::AnaxNet { regions, .. } | Checkpoint::BaselineFc { regions, .. } => *regions,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Checkpoint::AnaxNet { feature_dim, .. } | Checkpoint::BaselineFc { feature_dim, .. } => {
                *feature_dim
            }
        }
    }

    pub fn label_count(&self) -> usize {
        match self {
            Checkpoint::AnaxNet { label_count, .. } | Checkpoint::BaselineFc { label_count, .. } => {
                *label_count
            }
        }
    }

    pub fn model_config(&self) -> Option<ModelConfig> {
        match self {
            Checkpoint::AnaxNet { regions, feature_dim, label_count, gcn_dims, .. } => {
                Some(ModelConfig {
                    regions: *regions,
                    feature_dim: *feature_dim,
                    gcn_dims: gcn_dims.clone(),
                    label_count: *label_count,
                    seed: 0,
                })
            }
            Checkpoint::BaselineFc { .. } => None,
        }
    }

    /// Per-region label probabilities for one image. The AnaxNet variant
    /// needs the normalized adjacency; the baseline ignores it.
    pub fn predict(&self, features: &Matrix, mask: &[u8], a_norm: Option<&Matrix>) -> Result<Matrix> {
        match self {
            Checkpoint::AnaxNet { params, .. } => {
                let a = a_norm.ok_or_else(|| {
                    Error::Contract("the anaxnet variant needs an adjacency matrix to predict".into())
                })?;
                crate::model::predict(features, mask, a, params)
            }
            Checkpoint::BaselineFc { weight, .. } => {
                crate::model::predict_baseline(features, mask, weight)
            }
        }
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer::new(BufWriter::new(file), path);
    w.header(MODEL_MAGIC)?;
    match checkpoint {
        Checkpoint::AnaxNet { regions, feature_dim, label_count, gcn_dims, params } => {
            for v in [*regions, *feature_dim, *label_count, gcn_dims.len()] {
                w.write_u32(v as u32)?;
            }
            for &dim in gcn_dims {
                w.write_u32(dim as u32)?;
            }
            w.write_f64_block(params.w1_layer1.data())?;
            w.write_f64_block(params.w1_layer2.data())?;
            w.write_f64_block(params.w2.data())?;
        }
        Checkpoint::BaselineFc { regions, feature_dim, label_count, weight } => {
            for v in [*regions, *feature_dim, *label_count, 0] {
                w.write_u32(v as u32)?;
            }
            w.write_f64_block(weight.data())?;
        }
    }
    w.finish()
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(BufReader::new(file), path);
    r.expect_magic(MODEL_MAGIC)?;
    r.expect_version()?;
    let regions = r.read_u32("k")? as usize;
    let feature_dim = r.read_u32("d")? as usize;
    let label_count = r.read_u32("M")? as usize;
    let layer_count = r.read_u32("layer count")? as usize;

    let checkpoint = if layer_count == 0 {
        let weight = Matrix::new(
            feature_dim,
            label_count,
            r.read_f64_block(feature_dim * label_count, "baseline weights")?,
        )?;
        Checkpoint::BaselineFc { regions, feature_dim, label_count, weight }
    } else {
        if layer_count != 2 {
            return Err(Error::format(
                path,
                format!("unsupported GCN layer count {layer_count}"),
            ));
        }
        let mut gcn_dims = Vec::with_capacity(layer_count);
        for i in 0..layer_count {
            gcn_dims.push(r.read_u32(&format!("gcn dim {i}"))? as usize);
        }
        if gcn_dims[1] != feature_dim {
            return Err(Error::format(
                path,
                format!("last GCN dim {} must equal d {feature_dim}", gcn_dims[1]),
            ));
        }
        let w1_layer1 = Matrix::new(
            feature_dim,
            gcn_dims[0],
            r.read_f64_block(feature_dim * gcn_dims[0], "w1_layer1")?,
        )?;
        let w1_layer2 = Matrix::new(
            gcn_dims[0],
            gcn_dims[1],
            r.read_f64_block(gcn_dims[0] * gcn_dims[1], "w1_layer2")?,
        )?;
        let w2 = Matrix::new(
            2 * feature_dim,
            label_count,
            r.read_f64_block(2 * feature_dim * label_count, "w2")?,
        )?;
        Checkpoint::AnaxNet {
            regions,
            feature_dim,
            label_count,
            gcn_dims,
            params: ModelParams { w1_layer1, w1_layer2, w2 },
        }
    };
    r.expect_eof()?;
    Ok(checkpoint)
}

pub fn save_adjacency(adjacency: &AdjacencyMatrix, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer::new(BufWriter::new(file), path);
    w.header(ADJACENCY_MAGIC)?;
    w.write_u32(adjacency.regions() as u32)?;
    w.write_f64(adjacency.tau)?;
    w.write_f64_block(adjacency.raw.data())?;
    w.write_f64_block(adjacency.binary.data())?;
    w.write_f64_block(adjacency.normalized.data())?;
    w.finish()
}

pub fn load_adjacency(path: &Path) -> Result<AdjacencyMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(BufReader::new(file), path);
    r.expect_magic(ADJACENCY_MAGIC)?;
    r.expect_version()?;
    let k = r.read_u32("k")? as usize;
    let tau = r.read_f64("tau")?;
    let raw = Matrix::new(k, k, r.read_f64_block(k * k, "raw block")?)?;
    let binary = Matrix::new(k, k, r.read_f64_block(k * k, "binary block")?)?;
    let normalized = Matrix::new(k, k, r.read_f64_block(k * k, "normalized block")?)?;
    r.expect_eof()?;
    Ok(AdjacencyMatrix { raw, binary, normalized, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacency;
    use crate::model::{forward, init_params};

    fn anaxnet_checkpoint(seed: u64) -> Checkpoint {
        let config = ModelConfig::with_dims(3, 6, 2, seed);
        Checkpoint::AnaxNet {
            regions: 3,
            feature_dim: 6,
            label_count: 2,
            gcn_dims: config.gcn_dims.clone(),
            params: init_params(&config).unwrap(),
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        let ck = anaxnet_checkpoint(11);
        save_checkpoint(&ck, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded, ck);
    }

    #[test]
    fn loaded_params_produce_identical_forward_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let ck = anaxnet_checkpoint(13);
        save_checkpoint(&ck, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();

        let (fresh, reload) = match (&ck, &loaded) {
            (Checkpoint::AnaxNet { params: a, .. }, Checkpoint::AnaxNet { params: b, .. }) => (a, b),
            _ => panic!("variant changed across round trip"),
        };
        let r = Matrix::from_fn(3, 6, |i, j| 0.3 * (i as f64) - 0.2 * (j as f64) + 0.1);
        let a_norm = adjacency::normalize(&Matrix::zeros(3, 3));
        let out_a = forward(&r, &[1; 3], &a_norm, fresh).unwrap().logits;
        let out_b = forward(&r, &[1; 3], &a_norm, reload).unwrap().logits;
        assert_eq!(out_a, out_b);
    }

    #[test]
    fn tampered_length_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&anaxnet_checkpoint(17), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));

        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, &longer).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn baseline_checkpoint_stores_single_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baseline.bin");
        let ck = Checkpoint::BaselineFc {
            regions: 4,
            feature_dim: 5,
            label_count: 3,
            weight: Matrix::from_fn(5, 3, |r, c| (r * 3 + c) as f64 * 0.125),
        };
        save_checkpoint(&ck, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, ck);
        // header (8 magic + 4 version + 4*4 dims) + 15 f64 weights
        let expected_len = 8 + 4 + 16 + 15 * 8;
        assert_eq!(std::fs::read(&path).unwrap().len(), expected_len);
    }

    #[test]
    fn adjacency_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adjacency.bin");
        let mut graph = Matrix::zeros(3, 3);
        graph[(0, 1)] = 1.0;
        graph[(1, 0)] = 1.0;
        let adj = AdjacencyMatrix {
            raw: Matrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.37 }),
            binary: graph.clone(),
            normalized: adjacency::normalize(&graph),
            tau: 0.5,
        };
        save_adjacency(&adj, &path).unwrap();
        let loaded = load_adjacency(&path).unwrap();
        assert_eq!(loaded, adj);

        let path2 = dir.path().join("again.bin");
        save_adjacency(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
