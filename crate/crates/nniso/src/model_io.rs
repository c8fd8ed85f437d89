//! Model file format: a human-inspectable JSON manifest followed by raw
//! little-endian parameter blobs.
//!
//! ```text
//! bytes 0..8   magic "NNISOMDL"
//! bytes 8..12  format version, u32 LE
//! bytes 12..20 manifest length in bytes, u64 LE
//! manifest     JSON: architecture, activations (with shifting points),
//!              transform metadata, blob directory, payload checksum
//! payload      blobs back to back; f64 LE for parameters, i8 for masks
//! ```
//!
//! Round-trips are bitwise: loading a saved model reproduces every parameter,
//! shifting point, input bound and mask exactly. The SHA-256 of the payload
//! is stored in the manifest and re-checked on load.

use crate::activation::Activation;
use crate::layer::{AvgPool2DLayer, Conv2DLayer, DenseLayer, Layer, RecurrentLayer};
use crate::network::{Network, NetworkError};
use crate::tensor::Tensor;
use crate::transform::{LayerTransform, TransformBundle};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

pub const MODEL_MAGIC: &[u8; 8] = b"NNISOMDL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: not a model file (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion {
        path: String,
        found: u32,
        supported: u32,
    },
    #[error("{path}: payload checksum mismatch")]
    Checksum { path: String },
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: blob '{name}' {reason}")]
    Blob {
        path: String,
        name: String,
        reason: String,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerManifest {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        activation: Activation,
    },
    Recurrent {
        inputs: usize,
        units: usize,
        activation: Activation,
    },
    AvgPool2d {
        size: usize,
    },
    Flatten,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformLayerManifest {
    Pass,
    Dense { alpha: f64 },
    Conv2d { alpha: f64 },
    Recurrent { alpha_in: f64, alpha_rec: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TransformManifest {
    pub input_bound: f64,
    pub layers: Vec<TransformLayerManifest>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlobDesc {
    pub name: String,
    /// "f64" (little-endian) or "i8" (rotation masks)
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len_bytes: u64,
}

/// The JSON header of a model file; enough to list shapes and transform
/// metadata without touching the payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelManifest {
    pub version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerManifest>,
    pub transform: Option<TransformManifest>,
    pub blobs: Vec<BlobDesc>,
    pub payload_sha256: String,
}

struct PayloadWriter {
    blobs: Vec<BlobDesc>,
    bytes: Vec<u8>,
}

impl PayloadWriter {
    fn new() -> Self {
        PayloadWriter {
            blobs: Vec::new(),
            bytes: Vec::new(),
        }
    }

    fn push_f64(&mut self, name: String, t: &Tensor) {
        let offset = self.bytes.len() as u64;
        for v in t.data() {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.blobs.push(BlobDesc {
            name,
            dtype: "f64".into(),
            shape: t.shape().to_vec(),
            offset,
            len_bytes: (t.len() * 8) as u64,
        });
    }

    fn push_mask(&mut self, name: String, t: &Tensor) {
        let offset = self.bytes.len() as u64;
        for &v in t.data() {
            self.bytes.push((if v < 0.0 { -1i8 } else { 1i8 }) as u8);
        }
        self.blobs.push(BlobDesc {
            name,
            dtype: "i8".into(),
            shape: t.shape().to_vec(),
            offset,
            len_bytes: t.len() as u64,
        });
    }
}

/// Serializes a network (and, if present, its transform bundle) to `path`.
pub fn save_model(
    path: &Path,
    net: &Network,
    bundle: Option<&TransformBundle>,
) -> Result<(), ModelIoError> {
    let io_err = |source| ModelIoError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut payload = PayloadWriter::new();
    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        match layer {
            Layer::Dense(l) => {
                layers.push(LayerManifest::Dense {
                    inputs: l.in_dim(),
                    outputs: l.out_dim(),
                    activation: l.activation,
                });
                payload.push_f64(format!("layer{i}.weights"), &l.weights);
                payload.push_f64(format!("layer{i}.bias"), &l.bias);
            }
            Layer::Conv2D(l) => {
                layers.push(LayerManifest::Conv2d {
                    in_channels: l.in_channels(),
                    out_channels: l.out_channels(),
                    kernel: [l.kernel().0, l.kernel().1],
                    stride: l.stride,
                    activation: l.activation,
                });
                payload.push_f64(format!("layer{i}.weights"), &l.weights);
                payload.push_f64(format!("layer{i}.bias"), &l.bias);
            }
            Layer::Recurrent(l) => {
                layers.push(LayerManifest::Recurrent {
                    inputs: l.in_dim(),
                    units: l.units(),
                    activation: l.activation,
                });
                payload.push_f64(format!("layer{i}.w_in"), &l.w_in);
                payload.push_f64(format!("layer{i}.w_rec"), &l.w_rec);
                payload.push_f64(format!("layer{i}.bias"), &l.bias);
                payload.push_f64(format!("layer{i}.h0"), &l.h0);
            }
            Layer::AvgPool2D(l) => layers.push(LayerManifest::AvgPool2d { size: l.size }),
            Layer::Flatten => layers.push(LayerManifest::Flatten),
        }
    }
    let transform = bundle.map(|b| TransformManifest {
        input_bound: b.input_bound,
        layers: b
            .layers
            .iter()
            .enumerate()
            .map(|(i, lt)| match lt {
                LayerTransform::Pass => TransformLayerManifest::Pass,
                LayerTransform::Dense { mask, alpha } => {
                    payload.push_mask(format!("layer{i}.mask"), mask);
                    TransformLayerManifest::Dense { alpha: *alpha }
                }
                LayerTransform::Conv2D { mask, alpha } => {
                    payload.push_mask(format!("layer{i}.mask"), mask);
                    TransformLayerManifest::Conv2d { alpha: *alpha }
                }
                LayerTransform::Recurrent {
                    mask_in,
                    mask_rec,
                    alpha_in,
                    alpha_rec,
                } => {
                    payload.push_mask(format!("layer{i}.mask_in"), mask_in);
                    payload.push_mask(format!("layer{i}.mask_rec"), mask_rec);
                    TransformLayerManifest::Recurrent {
                        alpha_in: *alpha_in,
                        alpha_rec: *alpha_rec,
                    }
                }
            })
            .collect(),
    });
    let manifest = ModelManifest {
        version: MODEL_VERSION,
        input_shape: net.input_shape.clone(),
        layers,
        transform,
        blobs: payload.blobs,
        payload_sha256: hex_digest(&payload.bytes),
    };
    let manifest_json =
        serde_json::to_vec_pretty(&manifest).expect("manifest serialization cannot fail");
    let mut out = Vec::with_capacity(20 + manifest_json.len() + payload.bytes.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    out.extend_from_slice(&payload.bytes);
    std::fs::write(path, out).map_err(io_err)
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn read_header(path: &Path, bytes: &[u8]) -> Result<(ModelManifest, usize), ModelIoError> {
    let name = path.display().to_string();
    if bytes.len() < 20 || &bytes[..8] != MODEL_MAGIC {
        return Err(ModelIoError::BadMagic { path: name });
    }
    let version = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
    if version != MODEL_VERSION {
        return Err(ModelIoError::UnsupportedVersion {
            path: name,
            found: version,
            supported: MODEL_VERSION,
        });
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    if bytes.len() < 20 + mlen {
        return Err(ModelIoError::BadMagic { path: name });
    }
    let manifest: ModelManifest =
        serde_json::from_slice(&bytes[20..20 + mlen]).map_err(|source| {
            ModelIoError::Manifest {
                path: name,
                source,
            }
        })?;
    Ok((manifest, 20 + mlen))
}

/// Reads only the manifest — magic, version and JSON header — leaving the
/// payload untouched.
pub fn inspect_model(path: &Path) -> Result<ModelManifest, ModelIoError> {
    let io_err = |source| ModelIoError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::open(path).map_err(io_err)?;
    let mut head = [0u8; 20];
    file.read_exact(&mut head).map_err(io_err)?;
    if &head[..8] != MODEL_MAGIC {
        return Err(ModelIoError::BadMagic {
            path: path.display().to_string(),
        });
    }
    let mlen = u64::from_le_bytes(head[12..20].try_into().expect("8 bytes")) as usize;
    let mut manifest_bytes = vec![0u8; mlen];
    file.read_exact(&mut manifest_bytes).map_err(io_err)?;
    let mut bytes = head.to_vec();
    bytes.extend_from_slice(&manifest_bytes);
    Ok(read_header(path, &bytes)?.0)
}

struct BlobReader<'a> {
    path: String,
    payload: &'a [u8],
    blobs: &'a [BlobDesc],
}

impl<'a> BlobReader<'a> {
    fn err(&self, name: &str, reason: impl Into<String>) -> ModelIoError {
        ModelIoError::Blob {
            path: self.path.clone(),
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    fn find(&self, name: &str) -> Result<&'a BlobDesc, ModelIoError> {
        self.blobs
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| self.err(name, "missing"))
    }

    fn f64(&self, name: &str, expect_shape: &[usize]) -> Result<Tensor, ModelIoError> {
        let desc = self.find(name)?;
        if desc.dtype != "f64" || desc.shape != expect_shape {
            return Err(self.err(
                name,
                format!("expected f64 {expect_shape:?}, found {} {:?}", desc.dtype, desc.shape),
            ));
        }
        let start = desc.offset as usize;
        let end = start + desc.len_bytes as usize;
        let count: usize = expect_shape.iter().product();
        if desc.len_bytes as usize != count * 8 || end > self.payload.len() {
            return Err(self.err(name, "payload bounds"));
        }
        let data = self.payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(expect_shape.to_vec(), data)
            .map_err(|e| self.err(name, e.to_string()))
    }

    fn mask(&self, name: &str, expect_shape: &[usize]) -> Result<Tensor, ModelIoError> {
        let desc = self.find(name)?;
        if desc.dtype != "i8" || desc.shape != expect_shape {
            return Err(self.err(
                name,
                format!("expected i8 {expect_shape:?}, found {} {:?}", desc.dtype, desc.shape),
            ));
        }
        let start = desc.offset as usize;
        let end = start + desc.len_bytes as usize;
        let count: usize = expect_shape.iter().product();
        if desc.len_bytes as usize != count || end > self.payload.len() {
            return Err(self.err(name, "payload bounds"));
        }
        let data = self.payload[start..end]
            .iter()
            .map(|&b| if (b as i8) < 0 { -1.0 } else { 1.0 })
            .collect();
        Tensor::new(expect_shape.to_vec(), data)
            .map_err(|e| self.err(name, e.to_string()))
    }
}

/// Loads a model file, verifying version and payload checksum; returns the
/// network and, when present, its transform bundle.
pub fn load_model(path: &Path) -> Result<(Network, Option<TransformBundle>), ModelIoError> {
    let name = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| ModelIoError::Io {
        path: name.clone(),
        source,
    })?;
    let (manifest, payload_start) = read_header(path, &bytes)?;
    let payload = &bytes[payload_start..];
    if hex_digest(payload) != manifest.payload_sha256 {
        return Err(ModelIoError::Checksum { path: name });
    }
    let reader = BlobReader {
        path: name,
        payload,
        blobs: &manifest.blobs,
    };
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, lm) in manifest.layers.iter().enumerate() {
        layers.push(match *lm {
            LayerManifest::Dense {
                inputs,
                outputs,
                activation,
            } => Layer::Dense(DenseLayer {
                weights: reader.f64(&format!("layer{i}.weights"), &[outputs, inputs])?,
                bias: reader.f64(&format!("layer{i}.bias"), &[outputs])?,
                activation,
            }),
            LayerManifest::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                activation,
            } => Layer::Conv2D(Conv2DLayer {
                weights: reader.f64(
                    &format!("layer{i}.weights"),
                    &[out_channels, in_channels, kernel[0], kernel[1]],
                )?,
                bias: reader.f64(&format!("layer{i}.bias"), &[out_channels])?,
                stride,
                activation,
            }),
            LayerManifest::Recurrent {
                inputs,
                units,
                activation,
            } => Layer::Recurrent(RecurrentLayer {
                w_in: reader.f64(&format!("layer{i}.w_in"), &[units, inputs])?,
                w_rec: reader.f64(&format!("layer{i}.w_rec"), &[units, units])?,
                bias: reader.f64(&format!("layer{i}.bias"), &[units])?,
                activation,
                h0: reader.f64(&format!("layer{i}.h0"), &[units])?,
            }),
            LayerManifest::AvgPool2d { size } => Layer::AvgPool2D(AvgPool2DLayer { size }),
            LayerManifest::Flatten => Layer::Flatten,
        });
    }
    let bundle = match &manifest.transform {
        None => None,
        Some(tm) => {
            let mut lts = Vec::with_capacity(tm.layers.len());
            for (i, ltm) in tm.layers.iter().enumerate() {
                lts.push(match *ltm {
                    TransformLayerManifest::Pass => LayerTransform::Pass,
                    TransformLayerManifest::Dense { alpha } => {
                        let shape = match &layers[i] {
                            Layer::Dense(l) => l.weights.shape().to_vec(),
                            _ => {
                                return Err(reader.err(
                                    &format!("layer{i}.mask"),
                                    "transform kind does not match layer kind",
                                ))
                            }
                        };
                        LayerTransform::Dense {
                            mask: reader.mask(&format!("layer{i}.mask"), &shape)?,
                            alpha,
                        }
                    }
                    TransformLayerManifest::Conv2d { alpha } => {
                        let shape = match &layers[i] {
                            Layer::Conv2D(l) => l.weights.shape().to_vec(),
                            _ => {
                                return Err(reader.err(
                                    &format!("layer{i}.mask"),
                                    "transform kind does not match layer kind",
                                ))
                            }
                        };
                        LayerTransform::Conv2D {
                            mask: reader.mask(&format!("layer{i}.mask"), &shape)?,
                            alpha,
                        }
                    }
                    TransformLayerManifest::Recurrent {
                        alpha_in,
                        alpha_rec,
                    } => {
                        let (in_shape, rec_shape) = match &layers[i] {
                            Layer::Recurrent(l) => {
                                (l.w_in.shape().to_vec(), l.w_rec.shape().to_vec())
                            }
                            _ => {
                                return Err(reader.err(
                                    &format!("layer{i}.mask_in"),
                                    "transform kind does not match layer kind",
                                ))
                            }
                        };
                        LayerTransform::Recurrent {
                            mask_in: reader.mask(&format!("layer{i}.mask_in"), &in_shape)?,
                            mask_rec: reader.mask(&format!("layer{i}.mask_rec"), &rec_shape)?,
                            alpha_in,
                            alpha_rec,
                        }
                    }
                });
            }
            Some(TransformBundle {
                input_bound: tm.input_bound,
                layers: lts,
            })
        }
    };
    let net = Network::new(manifest.input_shape, layers)?;
    Ok((net, bundle))
}
