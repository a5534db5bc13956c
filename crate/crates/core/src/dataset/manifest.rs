//! Line-delimited JSON manifest.
//!
//! ```text
//! {"name":"demo","version":"1","created":"2024-05-01T00:00:00Z"}
//! {"case_id":"c1","source_image":"src/c1.png","edited_image":"edit/c1.png","prompt":"make it snow","prompt_type":"style","editing_method":"masactrl","content_tags":["landscape"]}
//! ```
//!
//! The first record is the header; every following line is one [`EditCase`].

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_caseset, CaseSet, DatasetError, DatasetMetadata, EditCase, MethodInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub name: String,
    pub version: String,
    pub created: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<MethodInfo>,
}

/// Parses manifest text without touching the filesystem or validating cases.
pub fn parse_manifest(text: &str) -> Result<(ManifestHeader, Vec<EditCase>), DatasetError> {
    let mut header = None;
    let mut cases = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        if header.is_none() {
            let h: ManifestHeader = serde_json::from_str(line)
                .map_err(|e| DatasetError::Parse { line: lineno, message: format!("header: {e}") })?;
            header = Some(h);
        } else {
            let c: EditCase = serde_json::from_str(line)
                .map_err(|e| DatasetError::Parse { line: lineno, message: e.to_string() })?;
            cases.push(c);
        }
    }
    let header = header.ok_or(DatasetError::Parse { line: 1, message: "missing header record".into() })?;
    Ok((header, cases))
}

/// Reads, parses and validates a manifest. Image references resolve against its directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CaseSet, DatasetError> {
    let cs = read_manifest_unvalidated(path)?;
    let violations = validate_caseset(&cs);
    if !violations.is_empty() {
        return Err(DatasetError::Validation(violations));
    }
    Ok(cs)
}

/// Reads and parses a manifest, skipping validation.
pub fn read_manifest_unvalidated(path: impl AsRef<Path>) -> Result<CaseSet, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    let (header, cases) = parse_manifest(&text)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let metadata = DatasetMetadata { name: header.name, version: header.version, created: header.created };
    Ok(CaseSet::new(metadata, cases).with_methods(header.methods).with_root(root))
}

/// Serialises a case set to manifest text (canonical case order, LF endings).
pub fn manifest_to_string(cs: &CaseSet) -> String {
    let header = ManifestHeader {
        name: cs.metadata.name.clone(),
        version: cs.metadata.version.clone(),
        created: cs.metadata.created.clone(),
        methods: cs.methods.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serialises");
    out.push('\n');
    for c in cs.cases() {
        out.push_str(&serde_json::to_string(c).expect("case serialises"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(cs: &CaseSet, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(manifest_to_string(cs).as_bytes()).map_err(io)?;
    f.flush().map_err(io)
}
