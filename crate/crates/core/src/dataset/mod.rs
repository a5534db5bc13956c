//! Case schema, manifest format and image preparation for source → prompt → edited datasets.
//!
//! A dataset is a [`CaseSet`]: an ordered list of [`EditCase`]s plus a small metadata header.
//! On disk it is a line-delimited JSON manifest (see [`manifest`]); image references are
//! relative paths resolved against the manifest's directory.

pub mod images;
pub mod manifest;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use images::{
    decode_rgb, encode_png, resize_shorter_side, shorter_side_dims, DirImageProvider, ImageProvider,
    MemoryImageProvider, DEFAULT_SHORTER_SIDE,
};
pub use manifest::{
    load_manifest, manifest_to_string, parse_manifest, read_manifest_unvalidated, write_manifest,
    ManifestHeader,
};

/// The three prompt classes of the editing taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptType {
    /// Colour, texture or overall ambiance changes.
    Style,
    /// Background changes and local add/replace/remove edits.
    Semantic,
    /// Object size, pose or motion changes.
    Structural,
}

impl PromptType {
    pub const ALL: [PromptType; 3] = [PromptType::Style, PromptType::Semantic, PromptType::Structural];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptType::Style => "style",
            PromptType::Semantic => "semantic",
            PromptType::Structural => "structural",
        }
    }
}

impl fmt::Display for PromptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One source image, editing prompt and edited result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditCase {
    pub case_id: String,
    pub source_image: String,
    pub edited_image: String,
    pub prompt: String,
    pub prompt_type: PromptType,
    pub editing_method: String,
    #[serde(default)]
    pub content_tags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditParadigm {
    InstructionBased,
    DescriptionBased,
}

/// Describes one editing method whose outputs appear in a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodInfo {
    pub name: String,
    pub zero_shot: bool,
    pub paradigm: EditParadigm,
    pub backbone_version: String,
}

impl MethodInfo {
    /// The five editing methods used to build the reference benchmark.
    pub fn reference_methods() -> Vec<MethodInfo> {
        let m = |name: &str, zero_shot, paradigm, sd: &str| MethodInfo {
            name: name.to_string(),
            zero_shot,
            paradigm,
            backbone_version: sd.to_string(),
        };
        use EditParadigm::*;
        vec![
            m("instruct-pix2pix", false, InstructionBased, "sd-1.4"),
            m("prompt-to-prompt", true, DescriptionBased, "sd-1.5"),
            m("magicbrush", false, InstructionBased, "sd-1.5"),
            m("masactrl", true, DescriptionBased, "sd-1.4"),
            m("infedit", true, DescriptionBased, "sd-2.1"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub name: String,
    pub version: String,
    /// Creation timestamp, RFC 3339 by convention; stored verbatim.
    pub created: String,
}

/// A validated, canonically ordered collection of cases.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSet {
    pub metadata: DatasetMetadata,
    pub methods: Vec<MethodInfo>,
    cases: Vec<EditCase>,
    /// Directory that relative image references resolve against.
    pub root: Option<PathBuf>,
}

impl CaseSet {
    /// Builds a case set, sorting cases by `case_id`. No validation is performed.
    pub fn new(metadata: DatasetMetadata, mut cases: Vec<EditCase>) -> Self {
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        CaseSet { metadata, methods: Vec::new(), cases, root: None }
    }

    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = Some(root.into());
        self
    }

    pub fn with_methods(mut self, methods: Vec<MethodInfo>) -> Self {
        self.methods = methods;
        self
    }

    pub fn cases(&self) -> &[EditCase] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&EditCase> {
        self.cases
            .binary_search_by(|c| c.case_id.as_str().cmp(case_id))
            .ok()
            .map(|i| &self.cases[i])
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.cases.iter().map(|c| c.case_id.as_str())
    }

    /// Returns a new case set holding only the listed ids (unknown ids are ignored).
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> CaseSet {
        let cases = ids.into_iter().filter_map(|id| self.get(id).cloned()).collect();
        CaseSet {
            metadata: self.metadata.clone(),
            methods: self.methods.clone(),
            cases,
            root: self.root.clone(),
        }
        .resorted()
    }

    fn resorted(mut self) -> Self {
        self.cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        self
    }

    /// Image provider resolving references against [`CaseSet::root`] (or the working directory).
    pub fn image_provider(&self) -> DirImageProvider {
        DirImageProvider::new(self.root.clone().unwrap_or_else(|| PathBuf::from(".")))
    }
}

/// Which invariant a case violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    DuplicateCaseId,
    EmptyCaseId,
    EmptyPrompt,
    UnresolvableImage { path: String, reason: String },
    DuplicateMethod,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::DuplicateCaseId => f.write_str("duplicate case_id"),
            Rule::EmptyCaseId => f.write_str("empty case_id"),
            Rule::EmptyPrompt => f.write_str("empty prompt"),
            Rule::UnresolvableImage { path, reason } => {
                write!(f, "unresolvable image {path}: {reason}")
            }
            Rule::DuplicateMethod => f.write_str("duplicate method name"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending case id (or method name for [`Rule::DuplicateMethod`]).
    pub case_id: String,
    pub rule: Rule,
}

impl Violation {
    fn new(case_id: &str, rule: Rule) -> Self {
        Violation { case_id: case_id.to_string(), rule }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.case_id, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest failed validation ({} violation(s)): {}", .0.len(), summarize(.0))]
    Validation(Vec<Violation>),
    #[error("image has zero dimension ({width}x{height})")]
    ZeroDimension { width: u32, height: u32 },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn summarize(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Checks every case invariant, resolving images through the case set's own root.
pub fn validate_caseset(cs: &CaseSet) -> Vec<Violation> {
    validate_caseset_with(cs, &cs.image_provider())
}

/// Checks every case invariant, resolving images through `images`.
///
/// Violations come out grouped by case in case order; duplicates are reported once per id.
pub fn validate_caseset_with(cs: &CaseSet, images: &dyn ImageProvider) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut seen_methods = HashMap::new();
    for m in &cs.methods {
        if seen_methods.insert(m.name.as_str(), ()).is_some() {
            out.push(Violation::new(&m.name, Rule::DuplicateMethod));
        }
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for c in cs.cases() {
        *counts.entry(c.case_id.as_str()).or_default() += 1;
    }
    let mut reported_dup = HashMap::new();
    for c in cs.cases() {
        if c.case_id.trim().is_empty() {
            out.push(Violation::new(&c.case_id, Rule::EmptyCaseId));
        }
        if counts[c.case_id.as_str()] > 1 && reported_dup.insert(c.case_id.as_str(), ()).is_none() {
            out.push(Violation::new(&c.case_id, Rule::DuplicateCaseId));
        }
        if c.prompt.trim().is_empty() {
            out.push(Violation::new(&c.case_id, Rule::EmptyPrompt));
        }
        for reference in [&c.source_image, &c.edited_image] {
            if let Err(e) = images.probe(reference) {
                out.push(Violation::new(
                    &c.case_id,
                    Rule::UnresolvableImage { path: reference.clone(), reason: e.to_string() },
                ));
            }
        }
    }
    out
}
