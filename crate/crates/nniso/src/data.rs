//! Dataset ingestion: IDX image files (MNIST / Fashion-MNIST layout) and the
//! two bundled synthetic tasks. All inputs are normalized into
//! `[0, input_bound]` with `input_bound = 1`, the bound later handed to the
//! transform.

use crate::rng::SeededRng;
use crate::tensor::Tensor;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Default sequence length of the synthetic sequence task and the matching
/// recurrent preset.
pub const TOY_SEQ_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated IDX payload (want {want} bytes, have {have})")]
    Truncated {
        path: String,
        want: usize,
        have: usize,
    },
    #[error("images ({images}) and labels ({labels}) disagree in length")]
    LengthMismatch { images: usize, labels: usize },
}

/// A labeled split with inputs already normalized to `[0, input_bound]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `[N, ...sample shape]`
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub input_bound: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    /// Gathers the given rows into a `[B, ...sample]` batch.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let sample = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * sample);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.inputs.data()[i * sample..(i + 1) * sample]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        (Tensor::new(shape, data).expect("gather shape"), labels)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ])
}

/// Loads an IDX image file as `[N, rows, cols]` with pixels scaled into
/// `[0, 1]` by division with 255.
pub fn load_idx_images(path: &Path) -> Result<Tensor, DataError> {
    let bytes = read_file(path)?;
    let name = path.display().to_string();
    if bytes.len() < 16 {
        return Err(DataError::Truncated {
            path: name,
            want: 16,
            have: bytes.len(),
        });
    }
    let magic = be_u32(&bytes, 0);
    if magic != IDX_IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: name,
            found: magic,
            expected: IDX_IMAGE_MAGIC,
        });
    }
    let n = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    let want = 16 + n * rows * cols;
    if bytes.len() < want {
        return Err(DataError::Truncated {
            path: name,
            want,
            have: bytes.len(),
        });
    }
    let data = bytes[16..want].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Tensor::new(vec![n, rows, cols], data).expect("idx shape"))
}

/// Loads an IDX label file as class indices.
pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>, DataError> {
    let bytes = read_file(path)?;
    let name = path.display().to_string();
    if bytes.len() < 8 {
        return Err(DataError::Truncated {
            path: name,
            want: 8,
            have: bytes.len(),
        });
    }
    let magic = be_u32(&bytes, 0);
    if magic != IDX_LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: name,
            found: magic,
            expected: IDX_LABEL_MAGIC,
        });
    }
    let n = be_u32(&bytes, 4) as usize;
    let want = 8 + n;
    if bytes.len() < want {
        return Err(DataError::Truncated {
            path: name,
            want,
            have: bytes.len(),
        });
    }
    Ok(bytes[8..want].iter().map(|&b| b as usize).collect())
}

/// Loads an image/label IDX pair into a dataset.
pub fn load_idx_pair(
    images: &Path,
    labels: &Path,
    num_classes: usize,
) -> Result<Dataset, DataError> {
    let inputs = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    if inputs.shape()[0] != labels.len() {
        return Err(DataError::LengthMismatch {
            images: inputs.shape()[0],
            labels: labels.len(),
        });
    }
    Ok(Dataset {
        inputs,
        labels,
        num_classes,
        input_bound: 1.0,
    })
}

/// Loads the conventional `train-*`/`t10k-*` file quartet from a directory.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset), DataError> {
    let train = load_idx_pair(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        10,
    )?;
    let test = load_idx_pair(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        10,
    )?;
    Ok((train, test))
}

/// Blob centers of the 2D toy task. Separating them needs a positive-slope
/// boundary, i.e. a negative weight on `x0` — the situation a non-negative
/// linear classifier cannot represent.
pub const TOY2D_MEAN_CLASS0: (f64, f64) = (0.7, 0.3);
pub const TOY2D_MEAN_CLASS1: (f64, f64) = (0.3, 0.7);
pub const TOY2D_SIGMA: f64 = 0.08;

/// Two Gaussian blobs inside the unit square, clipped to `[0, 1]^2`.
pub fn gen_toy2d(n_per_class: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let n = 2 * n_per_class;
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let (mx, my) = if class == 0 {
            TOY2D_MEAN_CLASS0
        } else {
            TOY2D_MEAN_CLASS1
        };
        let x = (mx + TOY2D_SIGMA * rng.normal()).clamp(0.0, 1.0);
        let y = (my + TOY2D_SIGMA * rng.normal()).clamp(0.0, 1.0);
        data.push(x);
        data.push(y);
        labels.push(class);
    }
    Dataset {
        inputs: Tensor::new(vec![n, 2], data).expect("toy2d shape"),
        labels,
        num_classes: 2,
        input_bound: 1.0,
    }
}

/// Label rule of the synthetic sequence task: class 1 iff the sequence mean
/// exceeds 0.5.
pub fn toy_sequence_label(seq: &[f64]) -> usize {
    let mean = seq.iter().sum::<f64>() / seq.len() as f64;
    usize::from(mean > 0.5)
}

/// Noisy random walks in `[0, 1]`, labeled by [`toy_sequence_label`].
pub fn gen_toy_sequences(n: usize, length: usize, seed: u64) -> Dataset {
    assert!(length >= 2, "sequence length must be at least 2");
    let mut rng = SeededRng::new(seed);
    let mut data = Vec::with_capacity(n * length);
    let mut labels = Vec::with_capacity(n);
    let mut seq = vec![0.0; length];
    for _ in 0..n {
        let mut s = rng.uniform();
        for slot in seq.iter_mut() {
            *slot = s;
            s = (s + rng.uniform_range(-0.1, 0.1)).clamp(0.0, 1.0);
        }
        labels.push(toy_sequence_label(&seq));
        data.extend_from_slice(&seq);
    }
    Dataset {
        inputs: Tensor::new(vec![n, length], data).expect("toyseq shape"),
        labels,
        num_classes: 2,
        input_bound: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy2d_stays_in_unit_square() {
        let ds = gen_toy2d(200, 3);
        assert!(ds.inputs.min_value().unwrap() >= 0.0);
        assert!(ds.inputs.max_value().unwrap() <= 1.0);
        assert_eq!(ds.len(), 400);
    }

    #[test]
    fn toy2d_class_means_near_configuration() {
        let ds = gen_toy2d(2000, 5);
        let mut sums = [[0.0; 2]; 2];
        let mut counts = [0usize; 2];
        for i in 0..ds.len() {
            let c = ds.labels[i];
            sums[c][0] += ds.inputs.data()[2 * i];
            sums[c][1] += ds.inputs.data()[2 * i + 1];
            counts[c] += 1;
        }
        let tol = 3.0 * TOY2D_SIGMA / (2000.0_f64).sqrt();
        for (c, mean) in [(0, TOY2D_MEAN_CLASS0), (1, TOY2D_MEAN_CLASS1)] {
            let mx = sums[c][0] / counts[c] as f64;
            let my = sums[c][1] / counts[c] as f64;
            assert!((mx - mean.0).abs() < tol, "class {c} x mean {mx}");
            assert!((my - mean.1).abs() < tol, "class {c} y mean {my}");
        }
    }

    #[test]
    fn toy2d_is_reproducible() {
        let a = gen_toy2d(50, 9);
        let b = gen_toy2d(50, 9);
        assert_eq!(a.inputs.data(), b.inputs.data());
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn sequence_label_rule() {
        assert_eq!(toy_sequence_label(&[0.9; 8]), 1);
        assert_eq!(toy_sequence_label(&[0.1; 8]), 0);
    }

    #[test]
    fn sequence_label_balance() {
        let ds = gen_toy_sequences(10_000, TOY_SEQ_LEN, 17);
        let ones = ds.labels.iter().filter(|&&l| l == 1).count() as f64;
        let frac = ones / ds.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "balance {frac}");
        assert!(ds.inputs.min_value().unwrap() >= 0.0);
        assert!(ds.inputs.max_value().unwrap() <= 1.0);
    }

    #[test]
    fn idx_loader_rejects_bad_magic() {
        let dir = std::env::temp_dir().join("nniso_idx_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad-magic");
        let mut bytes = vec![0u8; 16];
        bytes[3] = 0x05; // wrong type byte
        std::fs::write(&path, &bytes).unwrap();
        let err = load_idx_images(&path).unwrap_err();
        assert!(matches!(err, DataError::BadMagic { .. }), "{err}");
    }

    #[test]
    fn idx_loader_rejects_truncation() {
        let dir = std::env::temp_dir().join("nniso_idx_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("truncated");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&4u32.to_be_bytes());
        bytes.extend_from_slice(&4u32.to_be_bytes());
        bytes.extend_from_slice(&[7u8; 10]); // want 32 payload bytes
        std::fs::write(&path, &bytes).unwrap();
        let err = load_idx_images(&path).unwrap_err();
        assert!(matches!(err, DataError::Truncated { .. }), "{err}");
    }

    #[test]
    fn idx_roundtrip_small_file() {
        let dir = std::env::temp_dir().join("nniso_idx_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ok-images");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&3u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255, 255, 204, 153, 102, 51, 0]);
        std::fs::write(&path, &bytes).unwrap();
        let t = load_idx_images(&path).unwrap();
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert!(t.min_value().unwrap() >= 0.0 && t.max_value().unwrap() <= 1.0);
        assert_eq!(t.data()[1], 51.0 / 255.0);
    }
}
