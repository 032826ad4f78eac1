//! Class-similarity metrics over the hypernym hierarchy, and the all-pairs
//! similarity matrix the contrastive selection runs on.
//!
//! Both metrics use the virtual unified root, so every pair of synsets gets a
//! score in (0, 1]. Depths relative to the chosen subsumer keep scores ≤ 1
//! under multiple inheritance.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::skb::{AncestorMap, SkbError, SkbGraph, SynsetId};

/// Selectable similarity metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Wu-Palmer: `2·depth(lcs) / (d_a + d_b)`.
    Wup,
    /// Path: `1 / (edges(a,b) + 1)` through the cheapest common subsumer.
    Path,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Wup => "wup",
            Metric::Path => "path",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wup" => Ok(Metric::Wup),
            "path" => Ok(Metric::Path),
            other => Err(format!("unknown metric {other:?} (expected wup or path)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("empty class set")]
    EmptyClassSet,
    #[error("matrix line {line}: {reason}")]
    MalformedMatrix { line: usize, reason: String },
    #[error(transparent)]
    Skb(#[from] SkbError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Deepest common subsumer of two ancestor maps under the (max depth,
/// smallest id) rule, as `(depth, dist_a, dist_b)`.
fn deepest_common(graph: &SkbGraph, a: &AncestorMap, b: &AncestorMap) -> Option<(u32, u32, u32)> {
    let (small, big) = if a.distances.len() <= b.distances.len() {
        (a, b)
    } else {
        (b, a)
    };
    let mut best: Option<(&SynsetId, u32)> = None;
    for id in small.distances.keys() {
        if !big.distances.contains_key(id) {
            continue;
        }
        let depth = graph.depth(id).expect("ancestor is in graph");
        best = match best {
            None => Some((id, depth)),
            Some((bid, bd)) => {
                if depth > bd || (depth == bd && id < bid) {
                    Some((id, depth))
                } else {
                    Some((bid, bd))
                }
            }
        };
    }
    best.map(|(id, depth)| (depth, a.distances[id], b.distances[id]))
}

fn wup_from_maps(graph: &SkbGraph, a: &AncestorMap, b: &AncestorMap) -> f64 {
    let (d_lcs, da_edges, db_edges) = match deepest_common(graph, a, b) {
        Some((depth, da, db)) => (f64::from(depth), f64::from(da), f64::from(db)),
        None => (
            1.0,
            f64::from(a.virtual_root_distance),
            f64::from(b.virtual_root_distance),
        ),
    };
    2.0 * d_lcs / ((d_lcs + da_edges) + (d_lcs + db_edges))
}

fn path_from_maps(a: &AncestorMap, b: &AncestorMap) -> f64 {
    let mut d = a.virtual_root_distance + b.virtual_root_distance;
    let (small, big) = if a.distances.len() <= b.distances.len() {
        (a, b)
    } else {
        (b, a)
    };
    for (id, da) in &small.distances {
        if let Some(db) = big.distances.get(id) {
            d = d.min(da + db);
        }
    }
    1.0 / f64::from(d + 1)
}

/// Wu-Palmer similarity of two synsets: `2·d_lcs / (d_a + d_b)` where
/// `d_lcs` is the depth of their lowest common subsumer (virtual root = 1)
/// and `d_a`, `d_b` are `d_lcs` plus the shortest hypernym path to it.
pub fn wup_similarity(
    graph: &SkbGraph,
    a: &SynsetId,
    b: &SynsetId,
) -> Result<f64, SimilarityError> {
    let ma = graph.ancestor_map(a)?;
    let mb = graph.ancestor_map(b)?;
    Ok(wup_from_maps(graph, &ma, &mb))
}

/// Path similarity: `1 / (d + 1)` with `d` the minimum is-a edge count
/// between the synsets through any common subsumer, virtual root included.
pub fn path_similarity(
    graph: &SkbGraph,
    a: &SynsetId,
    b: &SynsetId,
) -> Result<f64, SimilarityError> {
    let ma = graph.ancestor_map(a)?;
    let mb = graph.ancestor_map(b)?;
    Ok(path_from_maps(&ma, &mb))
}

/// |S|×|S| class-similarity scores; symmetric, unit diagonal, entries in
/// (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    class_ids: Vec<SynsetId>,
    values: Vec<f64>,
    metric: Metric,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.class_ids.len()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn class_ids(&self) -> &[SynsetId] {
        &self.class_ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n()..(i + 1) * self.n()]
    }

    /// Writes the matrix file: header `simmatrix v1 <metric> <n>`, the
    /// ordered class ids one per line, then n rows of n scores.
    pub fn save(&self, mut w: impl Write) -> Result<(), SimilarityError> {
        let n = self.n();
        writeln!(w, "simmatrix v1 {} {}", self.metric, n)?;
        for id in &self.class_ids {
            writeln!(w, "{id}")?;
        }
        for i in 0..n {
            let row: Vec<String> = self.row(i).iter().map(f64::to_string).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn load(reader: impl BufRead) -> Result<Self, SimilarityError> {
        let mut lines = reader.lines().enumerate();
        let bad = |line: usize, reason: String| SimilarityError::MalformedMatrix { line, reason };
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "empty matrix file".into()))?;
        let header = header?;
        let parts: Vec<&str> = header.split_ascii_whitespace().collect();
        let (metric, n) = match parts.as_slice() {
            ["simmatrix", "v1", metric, n] => {
                let metric = Metric::from_str(metric).map_err(|e| bad(1, e))?;
                let n: usize = n.parse().map_err(|_| bad(1, format!("bad size {n:?}")))?;
                (metric, n)
            }
            _ => return Err(bad(1, format!("bad header {header:?}"))),
        };

        let mut class_ids = Vec::with_capacity(n);
        for _ in 0..n {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| bad(n + 1, "truncated class-id list".into()))?;
            class_ids.push(SynsetId::new(line?.trim().to_owned()));
            let _ = idx;
        }

        let mut values = Vec::with_capacity(n * n);
        for r in 0..n {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| bad(n + 2 + r, "truncated score rows".into()))?;
            let line = line?;
            let mut count = 0usize;
            for tok in line.split_ascii_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| bad(idx + 1, format!("bad score {tok:?}")))?;
                values.push(v);
                count += 1;
            }
            if count != n {
                return Err(bad(idx + 1, format!("expected {n} scores, got {count}")));
            }
        }

        let m = Self { class_ids, values, metric };
        m.validate().map_err(|reason| bad(0, reason))?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), String> {
        let n = self.n();
        for i in 0..n {
            if self.get(i, i) != 1.0 {
                return Err(format!("diagonal entry {i} is {}, not 1", self.get(i, i)));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !(v > 0.0 && v <= 1.0) {
                    return Err(format!("entry ({i},{j}) = {v} outside (0, 1]"));
                }
                if self.get(i, j) != self.get(j, i) {
                    return Err(format!("asymmetry at ({i},{j})"));
                }
            }
        }
        Ok(())
    }
}

/// Builds the all-pairs matrix `M[i][j] = metric(S[i], S[j])`, evaluating
/// only the upper triangle and mirroring it. Rows are computed in parallel;
/// the result is deterministic.
pub fn build_similarity_matrix(
    graph: &SkbGraph,
    class_ids: &[SynsetId],
    metric: Metric,
) -> Result<SimilarityMatrix, SimilarityError> {
    if class_ids.is_empty() {
        return Err(SimilarityError::EmptyClassSet);
    }
    let maps: Vec<AncestorMap> = class_ids
        .par_iter()
        .map(|id| graph.ancestor_map(id))
        .collect::<Result<_, _>>()?;

    let n = class_ids.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| match metric {
                    Metric::Wup => wup_from_maps(graph, &maps[i], &maps[j]),
                    Metric::Path => path_from_maps(&maps[i], &maps[j]),
                })
                .collect()
        })
        .collect();

    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for (k, &v) in upper[i].iter().enumerate() {
            let j = i + 1 + k;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(SimilarityMatrix { class_ids: class_ids.to_vec(), values, metric })
}
