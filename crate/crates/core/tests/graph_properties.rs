//! Structural properties of the hierarchy queries over seeded random DAGs.

use std::collections::HashSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use visdesc_core::skb::{PartOfSpeech, SkbGraph, Subsumer, Synset, SynsetId};

fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize) -> SkbGraph {
    let n = rng.gen_range(2..=max_nodes);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("n{i:03}-n");
        let parents: Vec<String> = if i == 0 {
            vec![]
        } else {
            let roll: f64 = rng.gen();
            let count = if roll < 0.15 {
                0
            } else if roll < 0.8 {
                1
            } else {
                2.min(i)
            };
            let mut picks = HashSet::new();
            while picks.len() < count {
                picks.insert(rng.gen_range(0..i));
            }
            picks.iter().map(|p| format!("n{p:03}-n")).collect()
        };
        records.push(Synset {
            id: SynsetId::new(id),
            pos: PartOfSpeech::Noun,
            lemmas: vec![format!("lemma{i}")],
            gloss: String::new(),
            examples: vec![],
            hypernym_ids: parents.into_iter().map(SynsetId::new).collect(),
        });
    }
    SkbGraph::build(records, None, true).unwrap()
}

#[test]
fn depth_is_at_least_two_and_grows_along_edges() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = random_dag(&mut rng, 40);
        for synset in graph.iter() {
            let depth = graph.depth(&synset.id).unwrap();
            assert!(depth >= 2, "seed {seed}: depth({}) = {depth}", synset.id);
            for parent in &synset.hypernym_ids {
                let parent_depth = graph.depth(parent).unwrap();
                assert!(
                    depth >= parent_depth + 1,
                    "seed {seed}: depth({}) = {depth} vs parent {} = {parent_depth}",
                    synset.id,
                    parent
                );
            }
        }
    }
}

#[test]
fn lcs_is_symmetric_with_bounded_depth() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let graph = random_dag(&mut rng, 25);
        let ids: Vec<SynsetId> = graph.iter().map(|s| s.id.clone()).collect();
        for a in &ids {
            for b in &ids {
                let ab = graph.lcs(a, b).unwrap();
                let ba = graph.lcs(b, a).unwrap();
                assert_eq!(ab, ba, "seed {seed}: lcs({a},{b})");
                if let Subsumer::Synset(l) = ab {
                    let bound = graph.depth(a).unwrap().min(graph.depth(b).unwrap());
                    assert!(
                        graph.depth(&l).unwrap() <= bound,
                        "seed {seed}: lcs({a},{b}) deeper than its inputs"
                    );
                }
            }
        }
    }
}

#[test]
fn graphs_round_trip_through_the_interchange_format() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let graph = random_dag(&mut rng, 30);
        let mut first = Vec::new();
        graph.save(&mut first).unwrap();
        let reloaded = SkbGraph::load(first.as_slice()).unwrap();
        let mut second = Vec::new();
        reloaded.save(&mut second).unwrap();
        assert_eq!(first, second, "seed {seed}");
        assert_eq!(graph.lemma_index(), reloaded.lemma_index(), "seed {seed}");
    }
}
