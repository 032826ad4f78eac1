//! Shared builders for the benchmark targets.

use visdesc_core::skb::{PartOfSpeech, SkbGraph, Synset, SynsetId};

/// Balanced taxonomy: `branching^depth` leaves under a single root.
pub fn balanced_taxonomy(branching: usize, depth: usize) -> SkbGraph {
    let mut records = vec![Synset {
        id: SynsetId::from("root-n"),
        pos: PartOfSpeech::Noun,
        lemmas: vec!["root".into()],
        gloss: "the root concept".into(),
        examples: vec![],
        hypernym_ids: vec![],
    }];
    let mut frontier = vec!["root-n".to_string()];
    let mut counter = 0usize;
    for _ in 0..depth {
        let mut next = Vec::with_capacity(frontier.len() * branching);
        for parent in &frontier {
            for _ in 0..branching {
                let id = format!("n{counter:06}-n");
                counter += 1;
                records.push(Synset {
                    id: SynsetId::new(id.clone()),
                    pos: PartOfSpeech::Noun,
                    lemmas: vec![format!("lemma{counter}")],
                    gloss: format!("concept number {counter}"),
                    examples: vec![],
                    hypernym_ids: vec![SynsetId::new(parent.clone())],
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    SkbGraph::build(records, None, true).unwrap()
}

/// The ids of every leaf (deepest level) of a balanced taxonomy.
pub fn leaves(graph: &SkbGraph) -> Vec<SynsetId> {
    graph
        .iter()
        .filter(|s| graph.hyponyms(&s.id).is_empty())
        .map(|s| s.id.clone())
        .collect()
}
