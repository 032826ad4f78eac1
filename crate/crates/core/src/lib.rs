//! Pipeline toolkit that turns concepts from a lexical semantic knowledge
//! base into vision-optimized class descriptions via a text-generation
//! backend, and evaluates them with zero-shot image classification over
//! ensemble-mean prototypes.

pub mod embed;
pub mod gen;
pub mod llm;
pub mod mapping;
pub mod prompt;
pub mod records;
pub mod similarity;
pub mod skb;
#[cfg(test)]
pub(crate) mod testhttp;
pub mod wordnet;
pub mod zsic;

pub use embed::{EmbedItem, EmbeddingProvider, FileEmbeddings, MockEmbedder, RemoteEmbedder};
pub use gen::{DescriptionRecord, EnsembleConfig, GenContext, Mode};
pub use llm::{GenParams, LlmBackend, MockBackend, RemoteBackend};
pub use mapping::{ClassMapping, ClassSpec, MappingReport, MappingSource, Resolution};
pub use prompt::{ExemplarSet, SemanticPayload};
pub use similarity::{build_similarity_matrix, Metric, SimilarityMatrix};
pub use skb::{PartOfSpeech, SkbError, SkbGraph, Subsumer, Synset, SynsetId};
pub use wordnet::import_wordnet;
pub use zsic::{ClassPrototype, EmbeddingVector, EvalReport};
