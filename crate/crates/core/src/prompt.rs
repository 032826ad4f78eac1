//! Prompt assembly: semantic payloads pulled from the graph, the fixed
//! in-context exemplar session, and the normal / contrastive prompt builders.
//!
//! The exemplar wording ships as a versioned data file rather than code
//! constants; its content hash goes into artifact provenance so generated
//! descriptions stay auditable when the wording changes.

use std::sync::OnceLock;

use thiserror::Error;

use crate::mapping::{ClassMapping, Resolution};
use crate::records::sha256_hex;
use crate::skb::{SkbGraph, SynsetId};

/// Direct hyponyms included in a payload are capped so prompt size stays
/// bounded on classes with hundreds of children.
pub const HYPONYM_CAP: usize = 10;

const BUILTIN_EXEMPLARS: &str = include_str!("../data/exemplars.v1.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("target and neighbor describe the same class")]
    SameClass,
    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),
    #[error("bad exemplar file: {0}")]
    BadExemplarFile(String),
}

/// Everything the graph knows about one class, in display form (underscores
/// already turned into spaces), ready for prompt rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticPayload {
    pub lemma: String,
    pub synonyms: Vec<String>,
    pub gloss: String,
    pub examples: Vec<String>,
    pub hypernyms: Vec<String>,
    pub hyponyms: Vec<String>,
}

fn display(lemma: &str) -> String {
    lemma.replace('_', " ")
}

fn dedup_preserving_order(items: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items.into_iter().filter(|s| seen.insert(s.clone())).collect()
}

/// Pulls a class's semantic payload from the graph. Fallback-mapped classes
/// carry only their normalized label and manual gloss.
pub fn build_semantic_payload(
    graph: &SkbGraph,
    mapping: &ClassMapping,
) -> Result<SemanticPayload, PromptError> {
    match &mapping.resolved {
        Resolution::ManualGloss(gloss) => Ok(SemanticPayload {
            lemma: display(&mapping.lemma),
            synonyms: vec![],
            gloss: gloss.clone(),
            examples: vec![],
            hypernyms: vec![],
            hyponyms: vec![],
        }),
        Resolution::Synset(id) => {
            let synset = graph.get(id).ok_or_else(|| PromptError::UnknownSynset(id.clone()))?;
            let lemma = display(&synset.lemmas[0]);
            let synonyms = dedup_preserving_order(
                synset.lemmas[1..].iter().map(|l| display(l)).collect(),
            );
            let primary = |sid: &SynsetId| -> String {
                display(&graph.get(sid).expect("validated edge").lemmas[0])
            };
            let hypernyms =
                dedup_preserving_order(synset.hypernym_ids.iter().map(primary).collect());
            let hyponyms = dedup_preserving_order(
                graph.hyponyms(id).iter().take(HYPONYM_CAP).map(primary).collect(),
            );
            Ok(SemanticPayload {
                lemma,
                synonyms,
                gloss: synset.gloss.clone(),
                examples: synset.examples.clone(),
                hypernyms,
                hyponyms,
            })
        }
    }
}

/// The fixed in-context session: one task instruction plus the exemplar
/// input→output blocks, parsed from the versioned data file.
#[derive(Debug, Clone)]
pub struct ExemplarSet {
    instruction: String,
    examples: Vec<String>,
    hash: String,
}

impl ExemplarSet {
    /// Parses the `exemplars v1` block format: a header line, one
    /// `:: instruction` section, then one `:: example` section per exemplar.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let bad = |m: &str| PromptError::BadExemplarFile(m.to_string());
        let mut lines = text.lines();
        match lines.next() {
            Some("exemplars v1") => {}
            other => return Err(bad(&format!("bad header {other:?}"))),
        }
        let mut instruction: Option<String> = None;
        let mut examples = Vec::new();
        let mut section: Option<(bool, Vec<&str>)> = None;
        let flush = |section: &mut Option<(bool, Vec<&str>)>,
                         instruction: &mut Option<String>,
                         examples: &mut Vec<String>|
         -> Result<(), PromptError> {
            if let Some((is_instruction, body)) = section.take() {
                let body = body.join("\n").trim().to_string();
                if body.is_empty() {
                    return Err(PromptError::BadExemplarFile("empty section".into()));
                }
                if is_instruction {
                    if instruction.replace(body).is_some() {
                        return Err(PromptError::BadExemplarFile(
                            "multiple instruction sections".into(),
                        ));
                    }
                } else {
                    examples.push(body);
                }
            }
            Ok(())
        };
        for line in lines {
            match line.trim_end() {
                ":: instruction" => {
                    flush(&mut section, &mut instruction, &mut examples)?;
                    section = Some((true, Vec::new()));
                }
                ":: example" => {
                    flush(&mut section, &mut instruction, &mut examples)?;
                    section = Some((false, Vec::new()));
                }
                other => match &mut section {
                    Some((_, body)) => body.push(other),
                    None if other.trim().is_empty() => {}
                    None => return Err(bad(&format!("content outside section: {other:?}"))),
                },
            }
        }
        flush(&mut section, &mut instruction, &mut examples)?;
        let instruction = instruction.ok_or_else(|| bad("missing instruction section"))?;
        if examples.is_empty() {
            return Err(bad("no exemplar sections"));
        }
        Ok(Self { instruction, examples, hash: sha256_hex(text.as_bytes()) })
    }

    /// The exemplar set compiled into the library.
    pub fn builtin() -> &'static ExemplarSet {
        static BUILTIN: OnceLock<ExemplarSet> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            ExemplarSet::parse(BUILTIN_EXEMPLARS).expect("builtin exemplar file is valid")
        })
    }

    /// Content hash of the exemplar file, recorded in provenance.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn examples(&self) -> &[String] {
        &self.examples
    }
}

/// Renders a payload as an input block in the exemplar field layout. Absent
/// fields are omitted, not rendered empty. Ends at the output slot.
fn render_input_block(p: &SemanticPayload) -> String {
    let mut out = String::new();
    out.push_str("Class: ");
    out.push_str(&p.lemma);
    if !p.synonyms.is_empty() {
        out.push_str("\nSynonyms: ");
        out.push_str(&p.synonyms.join(", "));
    }
    if !p.hypernyms.is_empty() {
        out.push_str("\nKind of: ");
        out.push_str(&p.hypernyms.join(", "));
    }
    if !p.hyponyms.is_empty() {
        out.push_str("\nKinds: ");
        out.push_str(&p.hyponyms.join(", "));
    }
    if !p.gloss.is_empty() {
        out.push_str("\nDefinition: ");
        out.push_str(&p.gloss);
    }
    if !p.examples.is_empty() {
        let quoted: Vec<String> = p.examples.iter().map(|e| format!("\"{e}\"")).collect();
        out.push_str("\nUsage: ");
        out.push_str(&quoted.join("; "));
    }
    out.push_str("\nLooks like:");
    out
}

/// Builds the normal prompt: instruction, the fixed exemplars, then the
/// target's input block ending at the empty output slot. Byte-identical for
/// identical payloads.
pub fn build_normal_prompt(exemplars: &ExemplarSet, payload: &SemanticPayload) -> String {
    let mut parts = Vec::with_capacity(exemplars.examples.len() + 2);
    parts.push(exemplars.instruction.clone());
    parts.extend(exemplars.examples.iter().cloned());
    parts.push(render_input_block(payload));
    parts.join("\n\n")
}

/// Builds the contrastive prompt: the normal scaffold plus a negative
/// instruction naming the neighbor. Asymmetric in (target, neighbor).
pub fn build_contrastive_prompt(
    exemplars: &ExemplarSet,
    target: &SemanticPayload,
    neighbor: &SemanticPayload,
) -> Result<String, PromptError> {
    if target == neighbor {
        return Err(PromptError::SameClass);
    }
    let negative = format!(
        "Describe the {target} but not the {neighbor}: mention visible features that tell a \
         {target} apart from a {neighbor}.",
        target = target.lemma,
        neighbor = neighbor.lemma,
    );
    let mut parts = Vec::with_capacity(exemplars.examples.len() + 3);
    parts.push(exemplars.instruction.clone());
    parts.extend(exemplars.examples.iter().cloned());
    parts.push(negative);
    parts.push(render_input_block(target));
    Ok(parts.join("\n\n"))
}

/// Hash recorded per description record so outputs can be traced back to the
/// exact prompt bytes.
pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}
