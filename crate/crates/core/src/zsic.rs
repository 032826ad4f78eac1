//! Zero-shot image classification: unit-norm ensemble prototypes per class,
//! cosine-argmax prediction, and the accuracy / confusion / false-positive
//! reporting used to audit the contrastive selection.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{self, RecordError};

/// Norm below which a vector counts as zero.
const ZERO_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty description ensemble")]
    EmptyEnsemble,
    #[error("zero vector: {0}")]
    ZeroVector(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite component in {0}")]
    NonFinite(String),
    #[error("no prototypes")]
    NoPrototypes,
    #[error("gold class {0} has no prototype")]
    UnknownGoldClass(String),
    #[error("unknown class {0}")]
    UnknownClass(String),
    #[error("no embedding stored for {0}")]
    MissingEmbedding(String),
    #[error("embedding provider unavailable after {attempts} attempts: {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("malformed embedding file, line {line}: {reason}")]
    MalformedEmbeddingFile { line: usize, reason: String },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed-dimension real vector from an embedding provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn check_finite(&self, context: &str) -> Result<(), EvalError> {
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite(context.to_string()));
        }
        Ok(())
    }

    fn normalized(&self, context: &str) -> Result<EmbeddingVector, EvalError> {
        let n = self.norm();
        if n < ZERO_EPS {
            return Err(EvalError::ZeroVector(context.to_string()));
        }
        Ok(EmbeddingVector(self.0.iter().map(|v| v / n).collect()))
    }
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EvalError> {
    if a.dim() != b.dim() {
        return Err(EvalError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom < ZERO_EPS {
        return Err(EvalError::ZeroVector("cosine operand".into()));
    }
    Ok(dot / denom)
}

/// Unit-norm aggregate of one class's description embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrototype {
    pub class_id: String,
    pub vector: EmbeddingVector,
    /// How many descriptions went into the aggregate.
    pub count: usize,
}

/// Aggregates an ensemble: L2-normalize each vector, take the arithmetic
/// mean, re-normalize. Duplicated vectors deliberately weight the mean.
pub fn class_prototype(
    class_id: impl Into<String>,
    vectors: &[EmbeddingVector],
) -> Result<ClassPrototype, EvalError> {
    let class_id = class_id.into();
    let Some(first) = vectors.first() else {
        return Err(EvalError::EmptyEnsemble);
    };
    let dim = first.dim();
    let mut mean = vec![0.0; dim];
    for (i, v) in vectors.iter().enumerate() {
        if v.dim() != dim {
            return Err(EvalError::DimensionMismatch { expected: dim, got: v.dim() });
        }
        v.check_finite(&format!("ensemble vector {i} of class {class_id}"))?;
        let unit = v.normalized(&format!("ensemble vector {i} of class {class_id}"))?;
        for (slot, value) in mean.iter_mut().zip(&unit.0) {
            *slot += value;
        }
    }
    let n = vectors.len() as f64;
    for slot in &mut mean {
        *slot /= n;
    }
    let vector = EmbeddingVector(mean).normalized(&format!("mean of class {class_id}"))?;
    Ok(ClassPrototype { class_id, vector, count: vectors.len() })
}

/// Argmax result plus the full per-prototype score list for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_id: String,
    pub scores: Vec<(String, f64)>,
}

/// Predicts the class whose prototype has the highest cosine similarity to
/// the image vector; ties go to the smallest class id.
pub fn classify(
    prototypes: &[ClassPrototype],
    image: &EmbeddingVector,
) -> Result<Prediction, EvalError> {
    if prototypes.is_empty() {
        return Err(EvalError::NoPrototypes);
    }
    image.check_finite("image vector")?;
    if image.norm() < ZERO_EPS {
        return Err(EvalError::ZeroVector("image vector".into()));
    }
    let mut scores = Vec::with_capacity(prototypes.len());
    for p in prototypes {
        scores.push((p.class_id.clone(), cosine(&p.vector, image)?));
    }
    let best = scores
        .iter()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .expect("non-empty scores");
    Ok(Prediction { class_id: best.0.clone(), scores })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub correct: usize,
    pub total: usize,
}

impl ClassStats {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Evaluation outcome: top-1 accuracy, per-class accuracy, and gold →
/// predicted confusion counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub correct: usize,
    pub total: usize,
    pub top1_accuracy: f64,
    pub per_class: BTreeMap<String, ClassStats>,
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

impl EvalReport {
    /// Structural invariant: each confusion row sums to its class total.
    pub fn check_consistency(&self) -> Result<(), String> {
        let mut correct = 0;
        let mut total = 0;
        for (gold, stats) in &self.per_class {
            let row_sum: usize =
                self.confusion.get(gold).map(|row| row.values().sum()).unwrap_or(0);
            if row_sum != stats.total {
                return Err(format!(
                    "confusion row for {gold} sums to {row_sum}, class total is {}",
                    stats.total
                ));
            }
            let diag = self
                .confusion
                .get(gold)
                .and_then(|row| row.get(gold))
                .copied()
                .unwrap_or(0);
            if diag != stats.correct {
                return Err(format!(
                    "diagonal for {gold} is {diag}, class correct is {}",
                    stats.correct
                ));
            }
            correct += stats.correct;
            total += stats.total;
        }
        if correct != self.correct || total != self.total {
            return Err("per-class stats disagree with the summary counts".into());
        }
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "top-1 accuracy: {:.4} ({}/{})",
            self.top1_accuracy, self.correct, self.total
        )?;
        writeln!(f, "{:<24} {:>8} {:>8} {:>10}", "class", "correct", "total", "accuracy")?;
        for (class_id, stats) in &self.per_class {
            writeln!(
                f,
                "{:<24} {:>8} {:>8} {:>10.4}",
                class_id,
                stats.correct,
                stats.total,
                stats.accuracy()
            )?;
        }
        Ok(())
    }
}

/// Classifies every labeled image and accumulates the report. Images are
/// scored in parallel; the counts merge deterministically.
pub fn evaluate(
    prototypes: &[ClassPrototype],
    labeled: &[(EmbeddingVector, String)],
) -> Result<EvalReport, EvalError> {
    if prototypes.is_empty() {
        return Err(EvalError::NoPrototypes);
    }
    let known: std::collections::HashSet<&str> =
        prototypes.iter().map(|p| p.class_id.as_str()).collect();
    for (_, gold) in labeled {
        if !known.contains(gold.as_str()) {
            return Err(EvalError::UnknownGoldClass(gold.clone()));
        }
    }

    let predictions: Vec<String> = labeled
        .par_iter()
        .map(|(vec, _)| classify(prototypes, vec).map(|p| p.class_id))
        .collect::<Result<_, _>>()?;

    let mut per_class: BTreeMap<String, ClassStats> = BTreeMap::new();
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut correct = 0;
    for ((_, gold), predicted) in labeled.iter().zip(&predictions) {
        let stats = per_class.entry(gold.clone()).or_default();
        stats.total += 1;
        if gold == predicted {
            stats.correct += 1;
            correct += 1;
        }
        *confusion.entry(gold.clone()).or_default().entry(predicted.clone()).or_insert(0) += 1;
    }
    let total = labeled.len();
    let report = EvalReport {
        correct,
        total,
        top1_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        per_class,
        confusion,
    };
    debug_assert!(report.check_consistency().is_ok());
    Ok(report)
}

/// One false-positive table row: a class predicted when the gold label was
/// something else, with its count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FpEntry {
    pub class_id: String,
    pub count: usize,
}

/// The classes most often predicted when the gold label is `class_id`,
/// excluding correct predictions, by descending count (ties by ascending
/// class id), truncated to `top_m`.
pub fn false_positive_report(
    report: &EvalReport,
    class_id: &str,
    top_m: usize,
) -> Result<Vec<FpEntry>, EvalError> {
    if !report.per_class.contains_key(class_id) {
        return Err(EvalError::UnknownClass(class_id.to_string()));
    }
    let mut entries: Vec<FpEntry> = report
        .confusion
        .get(class_id)
        .map(|row| {
            row.iter()
                .filter(|(predicted, _)| predicted.as_str() != class_id)
                .map(|(predicted, &count)| FpEntry { class_id: predicted.clone(), count })
                .collect()
        })
        .unwrap_or_default();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.class_id.cmp(&b.class_id)));
    entries.truncate(top_m);
    Ok(entries)
}

/// Marks each false positive as hit (also chosen by the contrastive
/// selection) or miss, for the side-by-side audit table.
pub fn mark_contrastive_hits(
    false_positives: &[FpEntry],
    selected: &[String],
) -> Vec<(FpEntry, bool)> {
    false_positives
        .iter()
        .map(|e| (e.clone(), selected.contains(&e.class_id)))
        .collect()
}

/// Line-delimited form of an [`EvalReport`].
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum ReportLine {
    Summary { correct: usize, total: usize, top1_accuracy: f64 },
    Class { class_id: String, correct: usize, total: usize },
    Confusion { gold: String, predicted: String, count: usize },
}

pub fn write_report(writer: impl Write, report: &EvalReport) -> Result<(), EvalError> {
    let mut lines = vec![ReportLine::Summary {
        correct: report.correct,
        total: report.total,
        top1_accuracy: report.top1_accuracy,
    }];
    for (class_id, stats) in &report.per_class {
        lines.push(ReportLine::Class {
            class_id: class_id.clone(),
            correct: stats.correct,
            total: stats.total,
        });
    }
    for (gold, row) in &report.confusion {
        for (predicted, &count) in row {
            lines.push(ReportLine::Confusion {
                gold: gold.clone(),
                predicted: predicted.clone(),
                count,
            });
        }
    }
    Ok(records::write_jsonl(writer, &lines)?)
}

pub fn read_report(reader: impl BufRead) -> Result<EvalReport, EvalError> {
    let lines: Vec<ReportLine> = records::read_jsonl(reader)?;
    let mut report = EvalReport {
        correct: 0,
        total: 0,
        top1_accuracy: 0.0,
        per_class: BTreeMap::new(),
        confusion: BTreeMap::new(),
    };
    let mut saw_summary = false;
    for line in lines {
        match line {
            ReportLine::Summary { correct, total, top1_accuracy } => {
                report.correct = correct;
                report.total = total;
                report.top1_accuracy = top1_accuracy;
                saw_summary = true;
            }
            ReportLine::Class { class_id, correct, total } => {
                report.per_class.insert(class_id, ClassStats { correct, total });
            }
            ReportLine::Confusion { gold, predicted, count } => {
                *report.confusion.entry(gold).or_default().entry(predicted).or_insert(0) = count;
            }
        }
    }
    if !saw_summary {
        return Err(RecordError::Malformed { line: 0, reason: "missing summary record".into() }
            .into());
    }
    report
        .check_consistency()
        .map_err(|reason| RecordError::Malformed { line: 0, reason })?;
    Ok(report)
}
