//! Dataset class → synset mapping: most-frequent-sense heuristic, manual
//! overrides, and a manual-gloss fallback for labels the knowledge base does
//! not cover.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{self, RecordError};
use crate::skb::{SkbGraph, SynsetId};

/// One class of a dataset as declared in the class list file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub class_id: String,
    pub label: String,
    #[serde(rename = "synset", skip_serializing_if = "Option::is_none", default)]
    pub override_synset: Option<SynsetId>,
    #[serde(rename = "gloss", skip_serializing_if = "Option::is_none", default)]
    pub manual_gloss: Option<String>,
}

/// How a class got resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingSource {
    Heuristic,
    Override,
    Fallback,
}

/// A class's semantic anchor: a synset in the graph, or the manually written
/// definition when no synset fits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Synset(SynsetId),
    ManualGloss(String),
}

impl Resolution {
    pub fn synset(&self) -> Option<&SynsetId> {
        match self {
            Resolution::Synset(id) => Some(id),
            Resolution::ManualGloss(_) => None,
        }
    }
}

/// Result of mapping one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMapping {
    pub class_id: String,
    /// Normalized lemma key of the label.
    pub lemma: String,
    pub resolved: Resolution,
    pub source: MappingSource,
    pub warnings: Vec<String>,
}

/// Wire form of [`ClassMapping`] for the mapping record file.
#[derive(Debug, Serialize, Deserialize)]
struct MappingRecord {
    class_id: String,
    lemma: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    synset: Option<SynsetId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    gloss: Option<String>,
    source: MappingSource,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    warnings: Vec<String>,
}

impl From<&ClassMapping> for MappingRecord {
    fn from(m: &ClassMapping) -> Self {
        let (synset, gloss) = match &m.resolved {
            Resolution::Synset(id) => (Some(id.clone()), None),
            Resolution::ManualGloss(g) => (None, Some(g.clone())),
        };
        Self {
            class_id: m.class_id.clone(),
            lemma: m.lemma.clone(),
            synset,
            gloss,
            source: m.source,
            warnings: m.warnings.clone(),
        }
    }
}

impl TryFrom<MappingRecord> for ClassMapping {
    type Error = String;

    fn try_from(r: MappingRecord) -> Result<Self, String> {
        let resolved = match (r.synset, r.gloss) {
            (Some(id), None) => Resolution::Synset(id),
            (None, Some(g)) => Resolution::ManualGloss(g),
            _ => return Err(format!("class {}: exactly one of synset/gloss required", r.class_id)),
        };
        Ok(Self {
            class_id: r.class_id,
            lemma: r.lemma,
            resolved,
            source: r.source,
            warnings: r.warnings,
        })
    }
}

/// Batch summary: per-source counts, aggregated warnings, and the ambiguity
/// audit (classes that share one synset).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingReport {
    pub heuristic: usize,
    #[serde(rename = "override")]
    pub override_count: usize,
    pub fallback: usize,
    pub warnings: Vec<String>,
    pub ambiguities: Vec<AmbiguityGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityGroup {
    pub synset: SynsetId,
    pub class_ids: Vec<String>,
}

impl fmt::Display for MappingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mapped {} classes: {} heuristic, {} override, {} fallback",
            self.heuristic + self.override_count + self.fallback,
            self.heuristic,
            self.override_count,
            self.fallback
        )?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        for a in &self.ambiguities {
            writeln!(
                f,
                "ambiguity: synset {} shared by classes {}",
                a.synset,
                a.class_ids.join(", ")
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("class {class_id}: empty label")]
    EmptyLabel { class_id: String },
    #[error("class {class_id}: no synset, no override, no manual gloss")]
    UnresolvedClass { class_id: String },
    #[error("class {class_id}: override synset {synset} not in graph")]
    UnknownOverride { class_id: String, synset: SynsetId },
    #[error("duplicate class id {0}")]
    DuplicateClassId(String),
    #[error("no classes to map")]
    EmptyDataset,
    #[error("{} classes failed to resolve: {}", .0.len(), summarize(.0))]
    Batch(Vec<MappingError>),
    #[error(transparent)]
    Record(#[from] RecordError),
}

fn summarize(errors: &[MappingError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

fn is_separator(c: char) -> bool {
    c.is_whitespace() || c == '-' || c == '_'
}

/// Lowercases a label and joins its words with single underscores, the lemma
/// key convention of the knowledge base.
pub fn normalize_label(label: &str) -> Result<String, String> {
    let mut out = String::with_capacity(label.len());
    let mut pending_sep = false;
    for c in label.trim().chars() {
        if is_separator(c) {
            pending_sep = !out.is_empty();
        } else {
            if pending_sep {
                out.push('_');
                pending_sep = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    if out.is_empty() {
        return Err("label normalizes to the empty string".into());
    }
    Ok(out)
}

/// Maps one class: override if given, else the first (most frequent) sense of
/// the normalized label, else the manual gloss.
pub fn map_class(graph: &SkbGraph, spec: &ClassSpec) -> Result<ClassMapping, MappingError> {
    let lemma = normalize_label(&spec.label)
        .map_err(|_| MappingError::EmptyLabel { class_id: spec.class_id.clone() })?;
    let mut warnings = Vec::new();

    if let Some(id) = &spec.override_synset {
        if !graph.contains(id) {
            return Err(MappingError::UnknownOverride {
                class_id: spec.class_id.clone(),
                synset: id.clone(),
            });
        }
        return Ok(ClassMapping {
            class_id: spec.class_id.clone(),
            lemma,
            resolved: Resolution::Synset(id.clone()),
            source: MappingSource::Override,
            warnings,
        });
    }

    let senses = graph.senses(&lemma);
    if let Some(first) = senses.first() {
        if !graph.frequency_reliable() {
            warnings.push("sense ranking derived from data order; heuristic may mis-rank".into());
        }
        if senses.len() > 1 {
            warnings.push(format!(
                "label {:?} is polysemous ({} senses); took the most frequent",
                spec.label,
                senses.len()
            ));
        }
        return Ok(ClassMapping {
            class_id: spec.class_id.clone(),
            lemma,
            resolved: Resolution::Synset(first.clone()),
            source: MappingSource::Heuristic,
            warnings,
        });
    }

    if let Some(gloss) = &spec.manual_gloss {
        return Ok(ClassMapping {
            class_id: spec.class_id.clone(),
            lemma,
            resolved: Resolution::ManualGloss(gloss.clone()),
            source: MappingSource::Fallback,
            warnings,
        });
    }

    Err(MappingError::UnresolvedClass { class_id: spec.class_id.clone() })
}

/// Maps a whole dataset. Per-class failures are aggregated; the batch fails
/// only when at least one class cannot resolve.
pub fn map_dataset(
    graph: &SkbGraph,
    specs: &[ClassSpec],
) -> Result<(Vec<ClassMapping>, MappingReport), MappingError> {
    if specs.is_empty() {
        return Err(MappingError::EmptyDataset);
    }
    let mut seen = std::collections::HashSet::new();
    for spec in specs {
        if !seen.insert(&spec.class_id) {
            return Err(MappingError::DuplicateClassId(spec.class_id.clone()));
        }
    }

    let mut mappings = Vec::with_capacity(specs.len());
    let mut errors = Vec::new();
    for spec in specs {
        match map_class(graph, spec) {
            Ok(m) => mappings.push(m),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(MappingError::Batch(errors));
    }

    let mut report = MappingReport::default();
    let mut by_synset: BTreeMap<&SynsetId, Vec<&str>> = BTreeMap::new();
    for m in &mappings {
        match m.source {
            MappingSource::Heuristic => report.heuristic += 1,
            MappingSource::Override => report.override_count += 1,
            MappingSource::Fallback => report.fallback += 1,
        }
        for w in &m.warnings {
            report.warnings.push(format!("class {}: {w}", m.class_id));
        }
        if let Resolution::Synset(id) = &m.resolved {
            by_synset.entry(id).or_default().push(&m.class_id);
        }
    }
    for (synset, class_ids) in by_synset {
        if class_ids.len() > 1 {
            let mut class_ids: Vec<String> =
                class_ids.iter().map(|s| s.to_string()).collect();
            class_ids.sort();
            report.ambiguities.push(AmbiguityGroup { synset: synset.clone(), class_ids });
        }
    }
    Ok((mappings, report))
}

/// Reads the class list file (line-delimited `class_id`/`label` records with
/// optional `synset` and `gloss`).
pub fn read_class_specs(reader: impl BufRead) -> Result<Vec<ClassSpec>, MappingError> {
    Ok(records::read_jsonl(reader)?)
}

pub fn write_mappings(
    writer: impl Write,
    mappings: &[ClassMapping],
) -> Result<(), MappingError> {
    Ok(records::write_jsonl(writer, mappings.iter().map(MappingRecord::from))?)
}

pub fn read_mappings(reader: impl BufRead) -> Result<Vec<ClassMapping>, MappingError> {
    let raw: Vec<MappingRecord> = records::read_jsonl(reader)?;
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            ClassMapping::try_from(r)
                .map_err(|reason| RecordError::Malformed { line: i + 1, reason }.into())
        })
        .collect()
}
