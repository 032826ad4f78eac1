//! WordNet 3.0 database-file import: `data.noun` and `index.noun` parsing
//! plus conversion into an [`SkbGraph`].
//!
//! The file grammar is the published WordNet 3.0 one: space-separated fields,
//! word count as 2-digit hex, pointer count as 3-digit decimal, pointers as
//! `symbol offset pos source/target`, gloss after ` | `. License-header lines
//! begin with two spaces and are skipped. Only `@` (hypernym) and `@i`
//! (instance hypernym) pointers become graph edges; every other pointer is
//! parsed and dropped.

use std::collections::BTreeMap;
use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::io::BufRead;

use thiserror::Error;

use crate::skb::{PartOfSpeech, SkbError, SkbGraph, Synset, SynsetId};

#[derive(Debug, Error)]
pub enum WordNetError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("index references offset {offset} absent from data")]
    IndexDataMismatch { offset: String },
    #[error(transparent)]
    Skb(#[from] SkbError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One pointer field of a data line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pointer {
    pub symbol: String,
    pub target_offset: String,
    pub target_pos: char,
    /// Source/target word numbers, 4 hex digits; 0000 means semantic.
    pub source_target: u16,
}

/// A decoded `data.noun` line before conversion to a [`Synset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataLine {
    pub synset_offset: String,
    pub lex_filenum: u8,
    pub ss_type: char,
    /// `(word, lex_id)` pairs in file order, case preserved.
    pub words: Vec<(String, u32)>,
    pub pointers: Vec<Pointer>,
    pub gloss: String,
}

/// Sequential token reader that reports which field was missing or bad.
struct Fields<'a> {
    tokens: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn new(s: &'a str) -> Self {
        Self { tokens: s.split_ascii_whitespace() }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, String> {
        self.tokens.next().ok_or_else(|| format!("truncated line: missing {what}"))
    }

    fn finish(mut self) -> Result<(), String> {
        match self.tokens.next() {
            None => Ok(()),
            Some(tok) => Err(format!("unexpected trailing token {tok:?}")),
        }
    }
}

fn parse_hex(tok: &str, what: &str) -> Result<u32, String> {
    u32::from_str_radix(tok, 16).map_err(|_| format!("bad hex {what} {tok:?}"))
}

fn parse_dec(tok: &str, what: &str) -> Result<u32, String> {
    tok.parse().map_err(|_| format!("bad decimal {what} {tok:?}"))
}

fn parse_offset(tok: &str, what: &str) -> Result<String, String> {
    if tok.len() == 8 && tok.bytes().all(|b| b.is_ascii_digit()) {
        Ok(tok.to_owned())
    } else {
        Err(format!("bad synset offset {what} {tok:?}"))
    }
}

impl RawDataLine {
    /// Decodes one data line (without the trailing newline).
    pub fn parse(line: &str) -> Result<Self, String> {
        let (head, gloss) = line
            .split_once(" | ")
            .ok_or_else(|| "missing \" | \" gloss separator".to_string())?;
        let mut f = Fields::new(head);

        let synset_offset = parse_offset(f.next("synset_offset")?, "synset_offset")?;
        let lex_filenum = parse_dec(f.next("lex_filenum")?, "lex_filenum")? as u8;
        let ss_type_tok = f.next("ss_type")?;
        let ss_type = match ss_type_tok {
            "n" | "v" | "a" | "s" | "r" => ss_type_tok.chars().next().unwrap(),
            _ => return Err(format!("bad ss_type {ss_type_tok:?}")),
        };

        let w_cnt_tok = f.next("w_cnt")?;
        if w_cnt_tok.len() != 2 {
            return Err(format!("word count must be 2 hex digits, got {w_cnt_tok:?}"));
        }
        let w_cnt = parse_hex(w_cnt_tok, "w_cnt")?;
        if w_cnt == 0 {
            return Err("word count is zero".into());
        }
        let mut words = Vec::with_capacity(w_cnt as usize);
        for _ in 0..w_cnt {
            let word = f.next("word")?.to_owned();
            let lex_id = parse_hex(f.next("lex_id")?, "lex_id")?;
            words.push((word, lex_id));
        }

        let p_cnt_tok = f.next("p_cnt")?;
        if p_cnt_tok.len() != 3 || !p_cnt_tok.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("pointer count must be 3 decimal digits, got {p_cnt_tok:?}"));
        }
        let p_cnt = parse_dec(p_cnt_tok, "p_cnt")?;
        let mut pointers = Vec::with_capacity(p_cnt as usize);
        for _ in 0..p_cnt {
            let symbol = f.next("pointer symbol")?.to_owned();
            let target_offset = parse_offset(f.next("pointer offset")?, "pointer offset")?;
            let pos_tok = f.next("pointer pos")?;
            let target_pos = match pos_tok {
                "n" | "v" | "a" | "s" | "r" => pos_tok.chars().next().unwrap(),
                _ => return Err(format!("bad pointer pos {pos_tok:?}")),
            };
            let st_tok = f.next("source/target")?;
            if st_tok.len() != 4 {
                return Err(format!("source/target must be 4 hex digits, got {st_tok:?}"));
            }
            let source_target = parse_hex(st_tok, "source/target")? as u16;
            pointers.push(Pointer { symbol, target_offset, target_pos, source_target });
        }
        f.finish()?;

        Ok(Self {
            synset_offset,
            lex_filenum,
            ss_type,
            words,
            pointers,
            gloss: gloss.to_owned(),
        })
    }

    /// Converts to the interchange synset: lowercased lemmas, `@`/`@i`
    /// pointers as hypernym edges, gloss split into definition and examples.
    pub fn into_synset(self) -> Synset {
        let (gloss, examples) = split_gloss(&self.gloss);
        let hypernym_ids = self
            .pointers
            .iter()
            .filter(|p| p.symbol == "@" || p.symbol == "@i")
            .map(|p| SynsetId::new(format!("{}-{}", p.target_offset, p.target_pos)))
            .collect();
        Synset {
            id: SynsetId::new(format!("{}-{}", self.synset_offset, self.ss_type)),
            pos: PartOfSpeech::from_char(self.ss_type).unwrap_or(PartOfSpeech::Noun),
            lemmas: self.words.iter().map(|(w, _)| w.to_lowercase()).collect(),
            gloss,
            examples,
            hypernym_ids,
        }
    }
}

/// Splits a raw WordNet gloss into the definition and the quoted usage
/// examples that follow it.
fn split_gloss(raw: &str) -> (String, Vec<String>) {
    let Some(at) = raw.find("; \"") else {
        return (raw.trim().to_owned(), Vec::new());
    };
    let definition = raw[..at].trim().to_owned();
    let examples = raw[at..]
        .split('"')
        .skip(1)
        .step_by(2)
        .map(str::to_owned)
        .filter(|s| !s.trim().is_empty())
        .collect();
    (definition, examples)
}

fn is_header(line: &str) -> bool {
    line.starts_with("  ")
}

/// Parses a `data.noun` stream into interchange synsets, one per data line.
pub fn parse_data_noun(reader: impl BufRead) -> Result<Vec<Synset>, WordNetError> {
    let mut synsets = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if is_header(&line) || line.trim().is_empty() {
            continue;
        }
        let raw = RawDataLine::parse(&line)
            .map_err(|reason| WordNetError::MalformedLine { line: idx + 1, reason })?;
        synsets.push(raw.into_synset());
    }
    Ok(synsets)
}

/// Parses an `index.noun` stream into lemma → ordered synset offsets. The
/// offset order on each line is the sense-frequency ranking and is preserved
/// exactly.
pub fn parse_index_noun(
    reader: impl BufRead,
) -> Result<BTreeMap<String, Vec<String>>, WordNetError> {
    let mut index = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if is_header(&line) || line.trim().is_empty() {
            continue;
        }
        let (lemma, offsets) = parse_index_line(&line)
            .map_err(|reason| WordNetError::MalformedLine { line: idx + 1, reason })?;
        if index.insert(lemma.clone(), offsets).is_some() {
            return Err(WordNetError::MalformedLine {
                line: idx + 1,
                reason: format!("duplicate lemma {lemma:?}"),
            });
        }
    }
    Ok(index)
}

fn parse_index_line(line: &str) -> Result<(String, Vec<String>), String> {
    let mut f = Fields::new(line);
    let lemma = f.next("lemma")?.to_owned();
    let pos = f.next("pos")?;
    if !matches!(pos, "n" | "v" | "a" | "r") {
        return Err(format!("bad pos {pos:?}"));
    }
    let synset_cnt = parse_dec(f.next("synset_cnt")?, "synset_cnt")?;
    if synset_cnt == 0 {
        return Err("synset count is zero".into());
    }
    let p_cnt = parse_dec(f.next("p_cnt")?, "p_cnt")?;
    for _ in 0..p_cnt {
        f.next("pointer symbol")?;
    }
    let _sense_cnt = parse_dec(f.next("sense_cnt")?, "sense_cnt")?;
    let _tagsense_cnt = parse_dec(f.next("tagsense_cnt")?, "tagsense_cnt")?;
    let mut offsets = Vec::with_capacity(synset_cnt as usize);
    for _ in 0..synset_cnt {
        offsets.push(parse_offset(f.next("synset offset")?, "synset offset")?);
    }
    f.finish()?;
    Ok((lemma, offsets))
}

/// Imports WordNet data + index streams into a validated graph. The lemma
/// index ordering comes from `index.noun`; pass `None` to fall back to
/// data-line word order, which marks the graph's sense ranking unreliable.
pub fn import_wordnet(
    data: impl BufRead,
    index: Option<impl BufRead>,
) -> Result<SkbGraph, WordNetError> {
    let synsets = parse_data_noun(data)?;
    let index = match index {
        Some(reader) => {
            let parsed = parse_index_noun(reader)?;
            if parsed.is_empty() { None } else { Some(parsed) }
        }
        None => None,
    };

    let Some(index) = index else {
        log::warn!("no index: deriving sense ranking from data order (unreliable)");
        return Ok(SkbGraph::build(synsets, None, false)?);
    };

    let pos_by_id: HashMap<&SynsetId, usize> =
        synsets.iter().enumerate().map(|(i, s)| (&s.id, i)).collect();
    let mut lemma_index: BTreeMap<String, Vec<SynsetId>> = BTreeMap::new();
    for (lemma, offsets) in &index {
        let mut ids = Vec::with_capacity(offsets.len());
        for offset in offsets {
            let id = SynsetId::new(format!("{offset}-n"));
            if !pos_by_id.contains_key(&id) {
                return Err(WordNetError::IndexDataMismatch { offset: offset.clone() });
            }
            ids.push(id);
        }
        lemma_index.insert(lemma.clone(), ids);
    }

    let order = sense_consistent_order(&synsets, &lemma_index, &pos_by_id);
    let by_id: HashMap<SynsetId, Synset> =
        synsets.into_iter().map(|s| (s.id.clone(), s)).collect();
    let mut by_id = by_id;
    let ordered: Vec<Synset> = order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("order covers every synset once"))
        .collect();
    Ok(SkbGraph::build(ordered, Some(lemma_index), true)?)
}

/// Serialization order consistent with every lemma's sense ranking, so the
/// ranking survives a round trip through the interchange format (which infers
/// sense order from record order). Kahn's algorithm over the per-lemma
/// precedence constraints, preferring original data order.
fn sense_consistent_order(
    synsets: &[Synset],
    lemma_index: &BTreeMap<String, Vec<SynsetId>>,
    pos_by_id: &HashMap<&SynsetId, usize>,
) -> Vec<SynsetId> {
    let n = synsets.len();
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for senses in lemma_index.values() {
        for pair in senses.windows(2) {
            let a = pos_by_id[&pair[0]];
            let b = pos_by_id[&pair[1]];
            successors[a].push(b);
            indegree[b] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(synsets[i].id.clone());
        for &j in &successors[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.push(Reverse(j));
            }
        }
    }
    if order.len() < n {
        // Conflicting sense rankings across lemmas; keep data order for the
        // remainder and let the round-trip test surface the divergence.
        log::warn!("sense rankings conflict; export order falls back to data order");
        let emitted: std::collections::HashSet<SynsetId> = order.iter().cloned().collect();
        for s in synsets {
            if !emitted.contains(&s.id) {
                order.push(s.id.clone());
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOG_LINE: &str = "02084071 05 n 03 dog 0 domestic_dog 0 Canis_familiaris 0 004 @ 02083346 n 0000 @ 01317541 n 0000 ~ 02084732 n 0000 #m 02083863 n 0000 | a member of the genus Canis (probably descended from the common wolf) that has been domesticated by man since prehistoric times; \"the dog barked all night\"";

    #[test]
    fn decodes_dog_line() {
        let raw = RawDataLine::parse(DOG_LINE).unwrap();
        assert_eq!(raw.synset_offset, "02084071");
        assert_eq!(raw.lex_filenum, 5);
        assert_eq!(raw.ss_type, 'n');
        assert_eq!(raw.words.len(), 3);
        assert_eq!(raw.words[2], ("Canis_familiaris".to_string(), 0));
        assert_eq!(raw.pointers.len(), 4);

        let s = raw.into_synset();
        assert_eq!(s.id, SynsetId::from("02084071-n"));
        assert_eq!(s.lemmas, vec!["dog", "domestic_dog", "canis_familiaris"]);
        assert_eq!(
            s.hypernym_ids,
            vec![SynsetId::from("02083346-n"), SynsetId::from("01317541-n")]
        );
        assert_eq!(
            s.gloss,
            "a member of the genus Canis (probably descended from the common wolf) \
             that has been domesticated by man since prehistoric times"
        );
        assert_eq!(s.examples, vec!["the dog barked all night"]);
    }

    #[test]
    fn header_lines_are_skipped() {
        let data = format!("  1 license text\n  2 more license text\n{DOG_LINE}\n");
        let synsets = parse_data_noun(data.as_bytes()).unwrap();
        assert_eq!(synsets.len(), 1);
    }

    #[test]
    fn word_count_mismatch_is_malformed() {
        // Declares 3 words but provides only 2 pairs.
        let line = "02084071 05 n 03 dog 0 domestic_dog 0 001 @ 02083346 n 0000 | a dog";
        let err = parse_data_noun(line.as_bytes()).unwrap_err();
        assert!(matches!(err, WordNetError::MalformedLine { line: 1, .. }), "{err}");
    }

    #[test]
    fn pointer_count_mismatch_is_malformed() {
        let line = "02084071 05 n 01 dog 0 002 @ 02083346 n 0000 | a dog";
        assert!(matches!(
            parse_data_noun(line.as_bytes()),
            Err(WordNetError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn instance_hypernym_becomes_edge() {
        let line = "02129991 05 n 01 elsa 0 001 @i 02129165 n 0000 | a lioness raised by game wardens in Kenya";
        let synsets = parse_data_noun(line.as_bytes()).unwrap();
        assert_eq!(synsets[0].hypernym_ids, vec![SynsetId::from("02129165-n")]);
    }

    #[test]
    fn non_hypernym_pointers_are_dropped() {
        let line = "02083346 05 n 02 canine 0 canid 0 002 ~ 02084071 n 0000 %m 02083863 n 0000 | fissiped mammals";
        let synsets = parse_data_noun(line.as_bytes()).unwrap();
        assert!(synsets[0].hypernym_ids.is_empty());
    }

    #[test]
    fn decodes_index_line_preserving_order() {
        let line = "dog n 7 5 @ ~ #m #p %p 7 2 02084071 10114209 10023039 09886220 07692347 03901548 02710044";
        let index = parse_index_noun(line.as_bytes()).unwrap();
        let senses = &index["dog"];
        assert_eq!(senses.len(), 7);
        assert_eq!(senses[0], "02084071");
        assert_eq!(senses[1], "10114209");
    }

    #[test]
    fn empty_index_stream_is_empty() {
        let index = parse_index_noun("".as_bytes()).unwrap();
        assert!(index.is_empty());
    }

    #[test]
    fn duplicate_lemma_is_malformed() {
        let data = "cat n 1 1 @ 1 1 02121620\ncat n 1 1 @ 1 1 02128925\n";
        match parse_index_noun(data.as_bytes()) {
            Err(WordNetError::MalformedLine { line: 2, reason }) => {
                assert!(reason.contains("duplicate lemma"), "{reason}");
            }
            other => panic!("expected duplicate-lemma error, got {other:?}"),
        }
    }

    #[test]
    fn index_referencing_missing_offset_fails() {
        let data = "02084071 05 n 01 dog 0 000 | a dog";
        let index = "dog n 2 1 @ 2 1 02084071 99999999";
        match import_wordnet(data.as_bytes(), Some(index.as_bytes())) {
            Err(WordNetError::IndexDataMismatch { offset }) => {
                assert_eq!(offset, "99999999")
            }
            other => panic!("expected IndexDataMismatch, got {other:?}"),
        }
    }

    #[test]
    fn data_only_import_is_flagged_unreliable() {
        let data = "02084071 05 n 02 dog 0 domestic_dog 0 000 | a dog";
        let g = import_wordnet(data.as_bytes(), None::<&[u8]>).unwrap();
        assert!(!g.frequency_reliable());
        assert_eq!(g.senses("dog"), &[SynsetId::from("02084071-n")]);
    }

    #[test]
    fn gloss_without_examples() {
        let (def, ex) = split_gloss("a young dog");
        assert_eq!(def, "a young dog");
        assert!(ex.is_empty());
    }

    #[test]
    fn gloss_with_two_clauses_and_example() {
        let (def, ex) = split_gloss(
            "a tangible and visible entity; an entity that can cast a shadow; \
             \"it was full of rackets, balls and other objects\"",
        );
        assert_eq!(def, "a tangible and visible entity; an entity that can cast a shadow");
        assert_eq!(ex, vec!["it was full of rackets, balls and other objects"]);
    }

    #[test]
    fn gloss_with_multiple_examples() {
        let (def, ex) = split_gloss("to be; \"first one\"; \"second one\"");
        assert_eq!(def, "to be");
        assert_eq!(ex, vec!["first one", "second one"]);
    }
}
