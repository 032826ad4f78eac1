//! Concept graph: synsets, the hypernym hierarchy, and the depth /
//! lowest-common-subsumer queries the similarity metrics are built on.
//!
//! A [`SkbGraph`] is immutable after construction and safe to share across
//! threads. A virtual unified root sits above every parentless synset so that
//! depth and subsumer queries are well-defined even when the hierarchy has
//! several roots; the virtual root has depth 1 and a graph-root synset
//! depth 2. Depth is the node count of the longest hypernym path up to the
//! virtual root.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque synset key. WordNet imports use `<8-digit offset>-<pos>`,
/// e.g. `02084071-n`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynsetId(String);

impl SynsetId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SynsetId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Part-of-speech tag carried by every synset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartOfSpeech {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adjective,
    #[serde(rename = "r")]
    Adverb,
}

impl PartOfSpeech {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'n' => Some(Self::Noun),
            'v' => Some(Self::Verb),
            'a' | 's' => Some(Self::Adjective),
            'r' => Some(Self::Adverb),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Self::Noun => 'n',
            Self::Verb => 'v',
            Self::Adjective => 'a',
            Self::Adverb => 'r',
        }
    }
}

/// One concept node of the graph.
///
/// The serialized form is the interchange record: a flat object with exactly
/// the fields `id`, `pos`, `lemmas`, `gloss`, `examples`, `hypernyms`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synset {
    pub id: SynsetId,
    pub pos: PartOfSpeech,
    /// Lowercase lemma strings, underscores for spaces, first = primary.
    pub lemmas: Vec<String>,
    pub gloss: String,
    pub examples: Vec<String>,
    #[serde(rename = "hypernyms")]
    pub hypernym_ids: Vec<SynsetId>,
}

impl Synset {
    /// Checks the per-record invariants; returns a reason on violation.
    fn validate(&self) -> Result<(), String> {
        if self.id.as_str().is_empty() {
            return Err("empty synset id".into());
        }
        if self.lemmas.is_empty() {
            return Err(format!("synset {} has no lemmas", self.id));
        }
        let mut seen = HashSet::new();
        for h in &self.hypernym_ids {
            if h == &self.id {
                return Err(format!("synset {} lists itself as a hypernym", self.id));
            }
            if !seen.insert(h) {
                return Err(format!("synset {} has duplicate hypernym {}", self.id, h));
            }
        }
        Ok(())
    }
}

/// Result of a lowest-common-subsumer query: either a concrete synset or the
/// virtual unified root when the inputs share no synset ancestor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subsumer {
    VirtualRoot,
    Synset(SynsetId),
}

impl fmt::Display for Subsumer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subsumer::VirtualRoot => f.write_str("*root*"),
            Subsumer::Synset(id) => f.write_str(id.as_str()),
        }
    }
}

/// Reflexive transitive hypernym closure of one synset, with shortest edge
/// distances. `virtual_root_distance` is the shortest edge count up to the
/// virtual root (always ≥ 1).
#[derive(Debug, Clone)]
pub struct AncestorMap {
    pub distances: HashMap<SynsetId, u32>,
    pub virtual_root_distance: u32,
}

#[derive(Debug, Error)]
pub enum SkbError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("synset {child} references unknown hypernym {id}")]
    DanglingHypernym { child: SynsetId, id: SynsetId },
    #[error("hypernym cycle through: {}", format_ids(.0))]
    CycleDetected(Vec<SynsetId>),
    #[error("duplicate synset id {0}")]
    DuplicateId(SynsetId),
    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),
    #[error("invalid synset {id}: {reason}")]
    InvalidSynset { id: SynsetId, reason: String },
    #[error("lemma index entry {lemma} references unknown synset {id}")]
    BadIndexEntry { lemma: String, id: SynsetId },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_ids(ids: &[SynsetId]) -> String {
    ids.iter().map(SynsetId::as_str).collect::<Vec<_>>().join(" -> ")
}

/// Immutable concept graph plus the lemma → senses index (first sense = most
/// frequent).
#[derive(Debug, Clone)]
pub struct SkbGraph {
    synsets: HashMap<SynsetId, Synset>,
    /// Record order; also the serialization order, which is what carries the
    /// sense ranking through the interchange format.
    order: Vec<SynsetId>,
    lemma_index: BTreeMap<String, Vec<SynsetId>>,
    hyponyms: HashMap<SynsetId, Vec<SynsetId>>,
    depths: HashMap<SynsetId, u32>,
    frequency_reliable: bool,
}

impl SkbGraph {
    /// Validated constructor. `lemma_index` of `None` derives the index from
    /// record order (first occurrence = first sense).
    pub fn build(
        records: Vec<Synset>,
        lemma_index: Option<BTreeMap<String, Vec<SynsetId>>>,
        frequency_reliable: bool,
    ) -> Result<Self, SkbError> {
        let mut synsets = HashMap::with_capacity(records.len());
        let mut order = Vec::with_capacity(records.len());
        for s in records {
            s.validate().map_err(|reason| SkbError::InvalidSynset {
                id: s.id.clone(),
                reason,
            })?;
            if synsets.contains_key(&s.id) {
                return Err(SkbError::DuplicateId(s.id));
            }
            order.push(s.id.clone());
            synsets.insert(s.id.clone(), s);
        }

        // Dangling references and hyponym adjacency.
        let mut hyponyms: HashMap<SynsetId, Vec<SynsetId>> = HashMap::new();
        for id in &order {
            for h in &synsets[id].hypernym_ids {
                if !synsets.contains_key(h) {
                    return Err(SkbError::DanglingHypernym {
                        child: id.clone(),
                        id: h.clone(),
                    });
                }
                hyponyms.entry(h.clone()).or_default().push(id.clone());
            }
        }
        for children in hyponyms.values_mut() {
            children.sort();
        }

        let depths = compute_depths(&synsets, &hyponyms, &order)?;

        let lemma_index = match lemma_index {
            Some(index) => {
                for (lemma, ids) in &index {
                    for id in ids {
                        if !synsets.contains_key(id) {
                            return Err(SkbError::BadIndexEntry {
                                lemma: lemma.clone(),
                                id: id.clone(),
                            });
                        }
                    }
                }
                index
            }
            None => derive_lemma_index(&synsets, &order),
        };

        Ok(Self {
            synsets,
            order,
            lemma_index,
            hyponyms,
            depths,
            frequency_reliable,
        })
    }

    /// Loads a graph from the line-delimited interchange format.
    pub fn load(reader: impl BufRead) -> Result<Self, SkbError> {
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let synset: Synset =
                serde_json::from_str(&line).map_err(|e| SkbError::MalformedRecord {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            synset.validate().map_err(|reason| SkbError::MalformedRecord {
                line: idx + 1,
                reason,
            })?;
            records.push(synset);
        }
        Self::build(records, None, true)
    }

    /// Writes the graph back out in record order, one record per line.
    pub fn save(&self, mut writer: impl Write) -> Result<(), SkbError> {
        for id in &self.order {
            let line = serde_json::to_string(&self.synsets[id])
                .expect("synset serialization cannot fail");
            writer.write_all(line.as_bytes())?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, id: &SynsetId) -> bool {
        self.synsets.contains_key(id)
    }

    pub fn get(&self, id: &SynsetId) -> Option<&Synset> {
        self.synsets.get(id)
    }

    /// Synsets in record order.
    pub fn iter(&self) -> impl Iterator<Item = &Synset> {
        self.order.iter().map(|id| &self.synsets[id])
    }

    /// Ordered senses of a lemma, most frequent first.
    pub fn senses(&self, lemma: &str) -> &[SynsetId] {
        self.lemma_index.get(lemma).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn lemma_index(&self) -> &BTreeMap<String, Vec<SynsetId>> {
        &self.lemma_index
    }

    /// Direct hyponyms (inverse hypernym edges), sorted by id.
    pub fn hyponyms(&self, id: &SynsetId) -> &[SynsetId] {
        self.hyponyms.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Whether the sense ordering in `lemma_index` is trustworthy. False when
    /// the graph was imported without frequency information.
    pub fn frequency_reliable(&self) -> bool {
        self.frequency_reliable
    }

    /// Node count of the longest hypernym path from `id` up to the virtual
    /// root (virtual root = 1, so a graph root has depth 2).
    pub fn depth(&self, id: &SynsetId) -> Result<u32, SkbError> {
        self.depths
            .get(id)
            .copied()
            .ok_or_else(|| SkbError::UnknownSynset(id.clone()))
    }

    /// Reflexive transitive hypernym closure with shortest edge distances.
    pub fn ancestor_map(&self, id: &SynsetId) -> Result<AncestorMap, SkbError> {
        if !self.synsets.contains_key(id) {
            return Err(SkbError::UnknownSynset(id.clone()));
        }
        let mut distances = HashMap::new();
        distances.insert(id.clone(), 0u32);
        let mut queue = VecDeque::new();
        queue.push_back(id.clone());
        let mut nearest_root = u32::MAX;
        while let Some(cur) = queue.pop_front() {
            let d = distances[&cur];
            let parents = &self.synsets[&cur].hypernym_ids;
            if parents.is_empty() {
                nearest_root = nearest_root.min(d);
            }
            for p in parents {
                if !distances.contains_key(p) {
                    distances.insert(p.clone(), d + 1);
                    queue.push_back(p.clone());
                }
            }
        }
        Ok(AncestorMap {
            distances,
            virtual_root_distance: nearest_root + 1,
        })
    }

    /// Deepest common subsumer of `a` and `b` in the reflexive transitive
    /// hypernym closure; ties broken by smallest id. Returns the virtual-root
    /// marker when the only common subsumer is the virtual root.
    pub fn lcs(&self, a: &SynsetId, b: &SynsetId) -> Result<Subsumer, SkbError> {
        let anc_a = self.ancestor_map(a)?;
        let anc_b = self.ancestor_map(b)?;
        let mut best: Option<(u32, &SynsetId)> = None;
        for id in anc_a.distances.keys() {
            if !anc_b.distances.contains_key(id) {
                continue;
            }
            let depth = self.depths[id];
            best = match best {
                None => Some((depth, id)),
                Some((bd, bid)) => {
                    if depth > bd || (depth == bd && id < bid) {
                        Some((depth, id))
                    } else {
                        Some((bd, bid))
                    }
                }
            };
        }
        Ok(match best {
            Some((_, id)) => Subsumer::Synset(id.clone()),
            None => Subsumer::VirtualRoot,
        })
    }
}

/// Longest-path depths for every node, virtual root = 1. Rejects cycles.
fn compute_depths(
    synsets: &HashMap<SynsetId, Synset>,
    hyponyms: &HashMap<SynsetId, Vec<SynsetId>>,
    order: &[SynsetId],
) -> Result<HashMap<SynsetId, u32>, SkbError> {
    // Kahn's algorithm over hypernym edges, parents first.
    let mut remaining: HashMap<&SynsetId, usize> = HashMap::with_capacity(order.len());
    let mut queue = VecDeque::new();
    for id in order {
        let n = synsets[id].hypernym_ids.len();
        remaining.insert(id, n);
        if n == 0 {
            queue.push_back(id);
        }
    }
    let mut depths: HashMap<SynsetId, u32> = HashMap::with_capacity(order.len());
    while let Some(id) = queue.pop_front() {
        let depth = synsets[id]
            .hypernym_ids
            .iter()
            .map(|p| depths[p] + 1)
            .max()
            .unwrap_or(2);
        depths.insert(id.clone(), depth);
        for child in hyponyms.get(id).map(Vec::as_slice).unwrap_or(&[]) {
            let slot = remaining.get_mut(child).expect("child tracked");
            *slot -= 1;
            if *slot == 0 {
                queue.push_back(child);
            }
        }
    }
    if depths.len() != order.len() {
        let stuck: HashSet<&SynsetId> = remaining
            .iter()
            .filter(|(_, n)| **n > 0)
            .map(|(id, _)| *id)
            .collect();
        return Err(SkbError::CycleDetected(trace_cycle(synsets, &stuck)));
    }
    Ok(depths)
}

/// Walks hypernym links inside the stuck set until a node repeats, yielding
/// one explicit cycle for the error message.
fn trace_cycle(
    synsets: &HashMap<SynsetId, Synset>,
    stuck: &HashSet<&SynsetId>,
) -> Vec<SynsetId> {
    let start = stuck.iter().min().expect("cycle set is non-empty");
    let mut path: Vec<SynsetId> = vec![(*start).clone()];
    let mut seen: HashMap<&SynsetId, usize> = HashMap::new();
    let mut cur = *start;
    loop {
        seen.insert(cur, path.len() - 1);
        let next = synsets[cur]
            .hypernym_ids
            .iter()
            .find(|h| stuck.contains(h))
            .expect("stuck node has a stuck parent");
        if let Some(&at) = seen.get(next) {
            path.push(next.clone());
            return path.split_off(at);
        }
        path.push(next.clone());
        cur = next;
    }
}

fn derive_lemma_index(
    synsets: &HashMap<SynsetId, Synset>,
    order: &[SynsetId],
) -> BTreeMap<String, Vec<SynsetId>> {
    let mut index: BTreeMap<String, Vec<SynsetId>> = BTreeMap::new();
    for id in order {
        for lemma in &synsets[id].lemmas {
            let senses = index.entry(lemma.clone()).or_default();
            if !senses.contains(id) {
                senses.push(id.clone());
            }
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syn(id: &str, lemmas: &[&str], hypernyms: &[&str]) -> Synset {
        Synset {
            id: SynsetId::from(id),
            pos: PartOfSpeech::Noun,
            lemmas: lemmas.iter().map(|s| s.to_string()).collect(),
            gloss: format!("gloss of {id}"),
            examples: vec![],
            hypernym_ids: hypernyms.iter().map(|s| SynsetId::from(*s)).collect(),
        }
    }

    fn toy_chain() -> SkbGraph {
        SkbGraph::build(
            vec![
                syn("entity-n", &["entity"], &[]),
                syn("organism-n", &["organism"], &["entity-n"]),
                syn("animal-n", &["animal"], &["organism-n"]),
                syn("dog-n", &["dog"], &["animal-n"]),
                syn("cat-n", &["cat"], &["animal-n"]),
            ],
            None,
            true,
        )
        .unwrap()
    }

    // Test-only oracle: every upward path as an explicit node list.
    fn all_paths(g: &SkbGraph, id: &SynsetId) -> Vec<Vec<SynsetId>> {
        let parents = &g.get(id).unwrap().hypernym_ids;
        if parents.is_empty() {
            return vec![vec![id.clone()]];
        }
        let mut out = Vec::new();
        for p in parents {
            for mut path in all_paths(g, p) {
                path.insert(0, id.clone());
                out.push(path);
            }
        }
        out
    }

    fn oracle_depth(g: &SkbGraph, id: &SynsetId) -> u32 {
        // +1 for the virtual root node above every path.
        all_paths(g, id).iter().map(|p| p.len() as u32 + 1).max().unwrap()
    }

    #[test]
    fn toy_graph_counts_and_hyponyms() {
        let g = toy_chain();
        assert_eq!(g.len(), 5);
        assert_eq!(
            g.hyponyms(&SynsetId::from("animal-n")),
            &[SynsetId::from("cat-n"), SynsetId::from("dog-n")]
        );
    }

    #[test]
    fn depth_matches_path_enumeration_oracle() {
        let g = toy_chain();
        for id in ["entity-n", "organism-n", "animal-n", "dog-n", "cat-n"] {
            let id = SynsetId::from(id);
            assert_eq!(g.depth(&id).unwrap(), oracle_depth(&g, &id));
        }
        assert_eq!(g.depth(&SynsetId::from("entity-n")).unwrap(), 2);
        assert_eq!(g.depth(&SynsetId::from("dog-n")).unwrap(), 5);
    }

    #[test]
    fn depth_of_root_is_two() {
        let g = SkbGraph::build(vec![syn("r-n", &["r"], &[])], None, true).unwrap();
        assert_eq!(g.depth(&SynsetId::from("r-n")).unwrap(), 2);
    }

    #[test]
    fn depth_takes_longest_path_in_diamond() {
        // dog has paths of node-lengths 4 and 6 up to the virtual root.
        let g = SkbGraph::build(
            vec![
                syn("root-n", &["root"], &[]),
                syn("a-n", &["a"], &["root-n"]),
                syn("d-n", &["d"], &["root-n"]),
                syn("c-n", &["c"], &["d-n"]),
                syn("b-n", &["b"], &["c-n"]),
                syn("dog-n", &["dog"], &["a-n", "b-n"]),
            ],
            None,
            true,
        )
        .unwrap();
        let dog = SynsetId::from("dog-n");
        assert_eq!(oracle_depth(&g, &dog), 6);
        assert_eq!(g.depth(&dog).unwrap(), 6);
    }

    #[test]
    fn depth_exceeds_parent_on_every_edge() {
        let g = toy_chain();
        for synset in g.iter() {
            for parent in &synset.hypernym_ids {
                assert!(g.depth(&synset.id).unwrap() >= g.depth(parent).unwrap() + 1);
            }
        }
    }

    #[test]
    fn lcs_examples() {
        let g = toy_chain();
        let dog = SynsetId::from("dog-n");
        let cat = SynsetId::from("cat-n");
        assert_eq!(
            g.lcs(&dog, &cat).unwrap(),
            Subsumer::Synset(SynsetId::from("animal-n"))
        );
        assert_eq!(g.lcs(&dog, &dog).unwrap(), Subsumer::Synset(dog.clone()));
        // Symmetry.
        assert_eq!(g.lcs(&dog, &cat).unwrap(), g.lcs(&cat, &dog).unwrap());
    }

    #[test]
    fn lcs_of_disconnected_roots_is_virtual_root() {
        let g = SkbGraph::build(
            vec![syn("r1-n", &["r1"], &[]), syn("r2-n", &["r2"], &[])],
            None,
            true,
        )
        .unwrap();
        assert_eq!(
            g.lcs(&SynsetId::from("r1-n"), &SynsetId::from("r2-n")).unwrap(),
            Subsumer::VirtualRoot
        );
    }

    #[test]
    fn lcs_depth_bounded_by_inputs() {
        let g = toy_chain();
        let dog = SynsetId::from("dog-n");
        let cat = SynsetId::from("cat-n");
        if let Subsumer::Synset(l) = g.lcs(&dog, &cat).unwrap() {
            let dl = g.depth(&l).unwrap();
            assert!(dl <= g.depth(&dog).unwrap().min(g.depth(&cat).unwrap()));
        } else {
            panic!("expected synset lcs");
        }
    }

    #[test]
    fn lcs_tie_breaks_by_smallest_id() {
        // x and y have two common subsumers at equal depth.
        let g = SkbGraph::build(
            vec![
                syn("root-n", &["root"], &[]),
                syn("p1-n", &["p1"], &["root-n"]),
                syn("p2-n", &["p2"], &["root-n"]),
                syn("x-n", &["x"], &["p1-n", "p2-n"]),
                syn("y-n", &["y"], &["p1-n", "p2-n"]),
            ],
            None,
            true,
        )
        .unwrap();
        assert_eq!(
            g.lcs(&SynsetId::from("x-n"), &SynsetId::from("y-n")).unwrap(),
            Subsumer::Synset(SynsetId::from("p1-n"))
        );
    }

    #[test]
    fn load_rejects_dangling_hypernym() {
        let data = concat!(
            r#"{"id":"a-n","pos":"n","lemmas":["a"],"gloss":"","examples":[],"hypernyms":["missing-n"]}"#,
            "\n"
        );
        match SkbGraph::load(data.as_bytes()) {
            Err(SkbError::DanglingHypernym { id, .. }) => {
                assert_eq!(id, SynsetId::from("missing-n"))
            }
            other => panic!("expected DanglingHypernym, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_cycle() {
        let data = concat!(
            r#"{"id":"a-n","pos":"n","lemmas":["a"],"gloss":"","examples":[],"hypernyms":["b-n"]}"#,
            "\n",
            r#"{"id":"b-n","pos":"n","lemmas":["b"],"gloss":"","examples":[],"hypernyms":["a-n"]}"#,
            "\n"
        );
        match SkbGraph::load(data.as_bytes()) {
            Err(SkbError::CycleDetected(ids)) => assert!(ids.len() >= 2),
            other => panic!("expected CycleDetected, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_duplicate_id() {
        let rec = r#"{"id":"a-n","pos":"n","lemmas":["a"],"gloss":"","examples":[],"hypernyms":[]}"#;
        let data = format!("{rec}\n{rec}\n");
        match SkbGraph::load(data.as_bytes()) {
            Err(SkbError::DuplicateId(id)) => assert_eq!(id, SynsetId::from("a-n")),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_unknown_field() {
        let data = concat!(
            r#"{"id":"a-n","pos":"n","lemmas":["a"],"gloss":"","examples":[],"hypernyms":[],"extra":1}"#,
            "\n"
        );
        match SkbGraph::load(data.as_bytes()) {
            Err(SkbError::MalformedRecord { line: 1, .. }) => {}
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_self_hypernym() {
        let data = concat!(
            r#"{"id":"a-n","pos":"n","lemmas":["a"],"gloss":"","examples":[],"hypernyms":["a-n"]}"#,
            "\n"
        );
        assert!(matches!(
            SkbGraph::load(data.as_bytes()),
            Err(SkbError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn save_load_round_trip_is_identical() {
        let g = toy_chain();
        let mut buf = Vec::new();
        g.save(&mut buf).unwrap();
        let g2 = SkbGraph::load(buf.as_slice()).unwrap();
        let mut buf2 = Vec::new();
        g2.save(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
        assert_eq!(g.lemma_index(), g2.lemma_index());
        assert_eq!(g.len(), g2.len());
    }

    #[test]
    fn unknown_synset_errors() {
        let g = toy_chain();
        let missing = SynsetId::from("nope-n");
        assert!(matches!(g.depth(&missing), Err(SkbError::UnknownSynset(_))));
        assert!(matches!(
            g.lcs(&missing, &SynsetId::from("dog-n")),
            Err(SkbError::UnknownSynset(_))
        ));
    }
}
