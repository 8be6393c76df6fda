//! Model file: one JSON header line, then the JSON body. The header carries
//! the sha256 of the body bytes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::MatchModel;
use super::MatchModelError;
use crate::lingfeat::{FEATURE_COUNT, FEATURE_NAMES, FEATURE_SCHEMA_VERSION};

pub const MODEL_MAGIC: &str = "rpad-match-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub magic: String,
    pub format_version: u32,
    pub schema_version: u32,
    pub threshold: f64,
    pub seed: u64,
    pub dataset_hash: String,
    pub body_sha256: String,
}

pub fn to_bytes(model: &MatchModel) -> Vec<u8> {
    let body = serde_json::to_vec(model).expect("model serializes");
    let header = ModelHeader {
        magic: MODEL_MAGIC.into(),
        format_version: MODEL_FORMAT_VERSION,
        schema_version: model.schema_version,
        threshold: model.threshold,
        seed: model.seed,
        dataset_hash: model.dataset_hash.clone(),
        body_sha256: crate::sha256_hex(&body),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&body);
    out.push(b'\n');
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<MatchModel, MatchModelError> {
    let corrupt = |m: &str| MatchModelError::CorruptFile(m.to_owned());
    let split = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| corrupt("missing header line"))?;
    let header: ModelHeader =
        serde_json::from_slice(&bytes[..split]).map_err(|e| corrupt(&format!("header: {e}")))?;
    if header.magic != MODEL_MAGIC {
        return Err(corrupt("not a match model file"));
    }
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(MatchModelError::VersionMismatch {
            what: "model format",
            found: header.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    if header.schema_version != FEATURE_SCHEMA_VERSION {
        return Err(MatchModelError::VersionMismatch {
            what: "feature schema",
            found: header.schema_version,
            expected: FEATURE_SCHEMA_VERSION,
        });
    }
    let body = bytes[split + 1..].strip_suffix(b"\n").unwrap_or(&bytes[split + 1..]);
    if crate::sha256_hex(body) != header.body_sha256 {
        return Err(corrupt("body checksum mismatch"));
    }
    let model: MatchModel =
        serde_json::from_slice(body).map_err(|e| corrupt(&format!("body: {e}")))?;
    if !model.feature_names.iter().map(String::as_str).eq(FEATURE_NAMES) {
        return Err(MatchModelError::SchemaMismatch(format!(
            "model features {:?} differ from the current slot names",
            model.feature_names
        )));
    }
    let consistent = model.schema_version == header.schema_version
        && model.threshold == header.threshold
        && model.dataset_hash == header.dataset_hash
        && model.medians.len() == FEATURE_COUNT
        && !model.members.is_empty()
        && model
            .members
            .iter()
            .all(|m| m.trees.iter().all(|t| t.is_well_formed(FEATURE_COUNT)));
    if !consistent {
        return Err(corrupt("body disagrees with header or schema"));
    }
    Ok(model)
}

pub fn save(model: &MatchModel, path: &Path) -> Result<(), MatchModelError> {
    let io = |e: std::io::Error| MatchModelError::Io(format!("{}: {e}", path.display()));
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&to_bytes(model)).map_err(io)?;
    f.sync_all().map_err(io)
}

pub fn load(path: &Path) -> Result<MatchModel, MatchModelError> {
    let bytes = std::fs::read(path).map_err(|e| MatchModelError::Io(format!("{}: {e}", path.display())))?;
    from_bytes(&bytes)
}
