//! Model files: an 8-byte magic, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header, then the head's weights
//! and biases as little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClassifierModel, IdentifierModel, InputMode, LinearHead};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"EVINFMDL";
const VERSION: u32 = 1;

/// SHA-256 (hex) of the JSON form of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Identifier(IdentifierModel),
    Classifier(ClassifierModel),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Identifier,
    Classifier,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: Kind,
    encoder_identity: String,
    conditioned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_mode: Option<InputMode>,
    config_hash: String,
    best_epoch: usize,
    heldout_macro_f: Vec<f64>,
    n_in: usize,
    n_out: usize,
    payload_sha256: String,
}

fn payload(head: &LinearHead) -> Vec<u8> {
    head.weights.iter().chain(&head.bias).flat_map(|x| x.to_le_bytes()).collect()
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let (kind, identity, conditioned, input_mode, hash, best_epoch, scores, head) = match model {
        Model::Identifier(m) => {
            (Kind::Identifier, &m.encoder_identity, m.conditioned, None, &m.config_hash, m.best_epoch, &m.heldout_macro_f, &m.head)
        }
        Model::Classifier(m) => (
            Kind::Classifier,
            &m.encoder_identity,
            m.conditioned,
            Some(m.input_mode),
            &m.config_hash,
            m.best_epoch,
            &m.heldout_macro_f,
            &m.head,
        ),
    };
    let body = payload(head);
    let header = Header {
        kind,
        encoder_identity: identity.clone(),
        conditioned,
        input_mode,
        config_hash: hash.clone(),
        best_epoch,
        heldout_macro_f: scores.clone(),
        n_in: head.n_in,
        n_out: head.n_out,
        payload_sha256: hex::encode(Sha256::digest(&body)),
    };
    let header = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(20 + header.len() + body.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&body);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::BadModelFile(format!("{}: {m}", path.display()));
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a model file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_end = 20usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end]).map_err(|e| bad(&e.to_string()))?;
    let body = &bytes[header_end..];
    let n_values = header.n_out * (header.n_in + 1);
    if body.len() != n_values * 8 {
        return Err(bad("payload size does not match the declared shape"));
    }
    if hex::encode(Sha256::digest(body)) != header.payload_sha256 {
        return Err(bad("payload checksum mismatch"));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let split = header.n_out * header.n_in;
    let head = LinearHead { n_in: header.n_in, n_out: header.n_out, weights: values[..split].to_vec(), bias: values[split..].to_vec() };
    Ok(match header.kind {
        Kind::Identifier => Model::Identifier(IdentifierModel {
            encoder_identity: header.encoder_identity,
            conditioned: header.conditioned,
            head,
            config_hash: header.config_hash,
            best_epoch: header.best_epoch,
            heldout_macro_f: header.heldout_macro_f,
        }),
        Kind::Classifier => Model::Classifier(ClassifierModel {
            encoder_identity: header.encoder_identity,
            conditioned: header.conditioned,
            input_mode: header.input_mode.ok_or_else(|| bad("classifier header lacks input_mode"))?,
            head,
            config_hash: header.config_hash,
            best_epoch: header.best_epoch,
            heldout_macro_f: header.heldout_macro_f,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classifier() -> ClassifierModel {
        let mut head = LinearHead::zeros(4, 3);
        head.weights.iter_mut().enumerate().for_each(|(i, w)| *w = (i as f64).sin());
        head.bias = vec![0.1, -0.2, 1e-300];
        ClassifierModel {
            encoder_identity: "hashing-bow-v1/d2/s0".into(),
            conditioned: true,
            input_mode: InputMode::GoldSpan,
            head,
            config_hash: config_hash(&1),
            best_epoch: 3,
            heldout_macro_f: vec![0.5, 0.75, 0.8],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m/classifier.bin");
        let model = Model::Classifier(classifier());
        save_model(&path, &model).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
        let first = fs::read(&path).unwrap();
        save_model(&path, &model).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save_model(&path, &Model::Classifier(classifier())).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&path, &bytes).unwrap();
        assert_eq!(load_model(&path).unwrap_err().code(), "BAD_MODEL_FILE");
        fs::write(&path, b"nonsense").unwrap();
        assert_eq!(load_model(&path).unwrap_err().code(), "BAD_MODEL_FILE");
        assert_eq!(load_model(&dir.path().join("absent")).unwrap_err().code(), "MISSING_FILE");
    }
}
