use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{NnError, Params, Tensor};

const FORMAT: &str = "glossboot-weights/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub kind: String,
    pub config: serde_json::Value,
    /// Output class names (alphabet symbols or sign vocabulary).
    pub labels: Vec<String>,
    /// sha256 of the canonical config JSON.
    pub fingerprint: String,
    pub blob_sha256: String,
    pub blob_bytes: usize,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsBundle {
    pub kind: String,
    pub config: serde_json::Value,
    pub labels: Vec<String>,
    pub fingerprint: String,
    pub params: Params,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// sha256 over the compact JSON of `config` with object keys sorted.
pub fn config_fingerprint(config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("json values serialize");
    hex(&Sha256::digest(canonical.as_bytes()))
}

fn encode_blob(params: &Params) -> (Vec<u8>, Vec<TensorEntry>) {
    let mut blob = Vec::with_capacity(params.num_scalars() * 4);
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: [t.rows(), t.cols()],
            offset: blob.len(),
        });
        for &v in t.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    (blob, tensors)
}

/// Identifies a model: architecture fingerprint plus the sha256 of its
/// weight blob (the manifest's `blob_sha256`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFingerprint {
    pub architecture: String,
    pub weights_sha256: String,
}

impl ModelFingerprint {
    pub fn of(config: &impl Serialize, params: &Params) -> Self {
        let config = serde_json::to_value(config).expect("configs serialize");
        ModelFingerprint {
            architecture: config_fingerprint(&config),
            weights_sha256: hex(&Sha256::digest(encode_blob(params).0)),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NnError + '_ {
    move |source| NnError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `manifest.json` and `weights.bin` (little-endian f32) into `dir`.
/// Returns the architecture fingerprint.
pub fn save_weights(
    dir: &Path,
    kind: &str,
    config: &impl Serialize,
    labels: &[String],
    params: &Params,
) -> Result<String, NnError> {
    let config = serde_json::to_value(config).map_err(|e| NnError::Config(e.to_string()))?;
    let fingerprint = config_fingerprint(&config);
    let (blob, tensors) = encode_blob(params);
    let manifest = Manifest {
        format: FORMAT.to_string(),
        kind: kind.to_string(),
        config,
        labels: labels.to_vec(),
        fingerprint: fingerprint.clone(),
        blob_sha256: hex(&Sha256::digest(&blob)),
        blob_bytes: blob.len(),
        tensors,
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    let blob_path = dir.join(BLOB_FILE);
    fs::write(&blob_path, &blob).map_err(io_err(&blob_path))?;
    Ok(fingerprint)
}

/// Reads a model directory, verifying blob integrity and the config
/// fingerprint. Shape agreement with a concrete architecture is checked by
/// the caller via [`Params::check_layout`].
pub fn load_weights(dir: &Path, expected_kind: &str) -> Result<WeightsBundle, NnError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| NnError::Corrupt(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != FORMAT {
        return Err(NnError::Corrupt(format!("unknown format {:?}", manifest.format)));
    }
    if manifest.kind != expected_kind {
        return Err(NnError::Kind {
            expected: expected_kind.to_string(),
            found: manifest.kind,
        });
    }
    let computed = config_fingerprint(&manifest.config);
    if computed != manifest.fingerprint {
        return Err(NnError::Fingerprint {
            manifest: manifest.fingerprint,
            computed,
        });
    }
    let blob_path = dir.join(BLOB_FILE);
    let blob = fs::read(&blob_path).map_err(io_err(&blob_path))?;
    if blob.len() != manifest.blob_bytes {
        return Err(NnError::Corrupt(format!(
            "blob has {} bytes, manifest declares {}",
            blob.len(),
            manifest.blob_bytes
        )));
    }
    if hex(&Sha256::digest(&blob)) != manifest.blob_sha256 {
        return Err(NnError::Corrupt("blob checksum mismatch".into()));
    }
    let mut params = Params::new();
    for entry in &manifest.tensors {
        let [rows, cols] = entry.shape;
        let end = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(entry.offset))
            .filter(|&end| end <= blob.len())
            .ok_or_else(|| {
                NnError::Shape(format!(
                    "{}: shape {:?} at offset {} exceeds the blob",
                    entry.name, entry.shape, entry.offset
                ))
            })?;
        let data: Vec<f64> = blob[entry.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Corrupt(format!("{} holds non-finite values", entry.name)));
        }
        if params.get(&entry.name).is_some() {
            return Err(NnError::Corrupt(format!("duplicate tensor {}", entry.name)));
        }
        params.push(entry.name.clone(), Tensor::from_vec(rows, cols, data)?);
    }
    Ok(WeightsBundle {
        kind: manifest.kind,
        config: manifest.config,
        labels: manifest.labels,
        fingerprint: manifest.fingerprint,
        params,
    })
}
