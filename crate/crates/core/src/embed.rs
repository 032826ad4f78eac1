//! Embedding providers behind one interface: precomputed vectors from the
//! `embfile v1` format, a remote encoder service, and a deterministic mock
//! that hashes items onto the unit sphere.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::records::sha256_hex;
use crate::zsic::{EmbeddingVector, EvalError};

/// What gets embedded: description text or an image reference resolved by
/// the provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ItemPayload {
    Text(String),
    ImageRef(String),
}

/// One unit of embedding work, keyed by a caller-chosen id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedItem {
    pub id: String,
    pub payload: ItemPayload,
}

impl EmbedItem {
    pub fn text(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), payload: ItemPayload::Text(text.into()) }
    }

    pub fn image(id: impl Into<String>, image_ref: impl Into<String>) -> Self {
        Self { id: id.into(), payload: ItemPayload::ImageRef(image_ref.into()) }
    }
}

/// An embedding source with a fixed dimension. Returns one vector per item,
/// in item order.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, items: &[EmbedItem]) -> Result<Vec<EmbeddingVector>, EvalError>;
}

pub fn embed_texts(
    provider: &dyn EmbeddingProvider,
    items: &[(String, String)],
) -> Result<Vec<EmbeddingVector>, EvalError> {
    let items: Vec<EmbedItem> =
        items.iter().map(|(id, text)| EmbedItem::text(id, text)).collect();
    provider.embed(&items)
}

pub fn embed_images(
    provider: &dyn EmbeddingProvider,
    items: &[(String, String)],
) -> Result<Vec<EmbeddingVector>, EvalError> {
    let items: Vec<EmbedItem> =
        items.iter().map(|(id, image_ref)| EmbedItem::image(id, image_ref)).collect();
    provider.embed(&items)
}

/// Precomputed vectors keyed by item id, read from an `embfile v1` stream:
/// a `embfile v1 <dim> <count>` header, then per item an id line followed by
/// a line of `dim` space-separated decimals.
#[derive(Debug, Clone)]
pub struct FileEmbeddings {
    dim: usize,
    vectors: HashMap<String, EmbeddingVector>,
}

impl FileEmbeddings {
    pub fn load(reader: impl BufRead) -> Result<Self, EvalError> {
        let bad = |line: usize, reason: String| EvalError::MalformedEmbeddingFile { line, reason };
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "empty embedding file".into()))??;
        let parts: Vec<&str> = header.split_ascii_whitespace().collect();
        let (dim, count) = match parts.as_slice() {
            ["embfile", "v1", dim, count] => {
                let dim: usize =
                    dim.parse().map_err(|_| bad(1, format!("bad dimension {dim:?}")))?;
                let count: usize =
                    count.parse().map_err(|_| bad(1, format!("bad count {count:?}")))?;
                (dim, count)
            }
            _ => return Err(bad(1, format!("bad header {header:?}"))),
        };
        if dim == 0 {
            return Err(bad(1, "dimension must be positive".into()));
        }

        let mut vectors = HashMap::with_capacity(count);
        for i in 0..count {
            let id_line = 2 + 2 * i;
            let id = lines
                .next()
                .ok_or_else(|| bad(id_line, "truncated file: missing id line".into()))??
                .trim()
                .to_string();
            if id.is_empty() {
                return Err(bad(id_line, "empty item id".into()));
            }
            let values_line = lines
                .next()
                .ok_or_else(|| bad(id_line + 1, "truncated file: missing vector line".into()))??;
            let values: Vec<f64> = values_line
                .split_ascii_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(id_line + 1, format!("bad component: {e}")))?;
            if values.len() != dim {
                return Err(bad(
                    id_line + 1,
                    format!("expected {dim} components, got {}", values.len()),
                ));
            }
            let vector = EmbeddingVector(values);
            vector.check_finite(&format!("stored vector {id}"))?;
            if vectors.insert(id.clone(), vector).is_some() {
                return Err(bad(id_line, format!("duplicate item id {id:?}")));
            }
        }
        Ok(Self { dim, vectors })
    }

    /// Writes vectors in the given order.
    pub fn save(
        mut writer: impl Write,
        dim: usize,
        items: &[(String, EmbeddingVector)],
    ) -> Result<(), EvalError> {
        writeln!(writer, "embfile v1 {dim} {}", items.len())?;
        for (id, vector) in items {
            if vector.dim() != dim {
                return Err(EvalError::DimensionMismatch { expected: dim, got: vector.dim() });
            }
            writeln!(writer, "{id}")?;
            let cells: Vec<String> = vector.0.iter().map(f64::to_string).collect();
            writeln!(writer, "{}", cells.join(" "))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, items: &[EmbedItem]) -> Result<Vec<EmbeddingVector>, EvalError> {
        items
            .iter()
            .map(|item| {
                self.vectors
                    .get(&item.id)
                    .cloned()
                    .ok_or_else(|| EvalError::MissingEmbedding(item.id.clone()))
            })
            .collect()
    }
}

/// What part of an item the mock hashes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockKey {
    /// Hash the payload: identical texts embed identically.
    Payload,
    /// Hash the item id up to the first `#`. Items keyed `<class>#<rest>`
    /// then embed onto one vector per class, which aligns descriptions with
    /// images of the same class in end-to-end runs.
    IdPrefix,
}

/// Deterministic offline provider: a stable hash of the item seeds the
/// vector components, which are then normalized onto the unit sphere.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    key: MockKey,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, key: MockKey::Payload, seed }
    }

    pub fn class_aligned(dim: usize, seed: u64) -> Self {
        Self { dim, key: MockKey::IdPrefix, seed }
    }

    fn key_of<'a>(&self, item: &'a EmbedItem) -> &'a str {
        match self.key {
            MockKey::Payload => match &item.payload {
                ItemPayload::Text(t) => t,
                ItemPayload::ImageRef(r) => r,
            },
            MockKey::IdPrefix => item.id.split('#').next().unwrap_or(&item.id),
        }
    }

    fn vector_for(&self, key: &str) -> EmbeddingVector {
        let mut values = Vec::with_capacity(self.dim);
        let mut block = 0u64;
        'outer: loop {
            let material = format!("{}\x1f{}\x1f{}", self.seed, block, key);
            let digest = sha256_hex(material.as_bytes());
            // 64 hex chars give four u64 components per block.
            for chunk in digest.as_bytes().chunks(16) {
                let hex = std::str::from_utf8(chunk).expect("hex digest is ascii");
                let raw = u64::from_str_radix(hex, 16).expect("valid hex");
                values.push((raw as f64 / u64::MAX as f64) * 2.0 - 1.0);
                if values.len() == self.dim {
                    break 'outer;
                }
            }
            block += 1;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-9 {
            values[0] = 1.0;
            return EmbeddingVector(values);
        }
        EmbeddingVector(values.into_iter().map(|v| v / norm).collect())
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, items: &[EmbedItem]) -> Result<Vec<EmbeddingVector>, EvalError> {
        Ok(items.iter().map(|item| self.vector_for(self.key_of(item))).collect())
    }
}

#[derive(Serialize)]
struct WireItem<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_ref: Option<&'a str>,
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    items: Vec<WireItem<'a>>,
}

#[derive(Deserialize)]
struct WireVector {
    id: String,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct EncodeResponse {
    vectors: Vec<WireVector>,
}

/// Remote encoder client: POST `{items: [{id, text | image_ref}]}`, read
/// back `{vectors: [{id, values}]}`. The dimension is fixed at construction
/// and every response is checked against it.
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    auth_token: Option<String>,
    dim: usize,
    max_attempts: u32,
    retry_delay: Duration,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, auth_token: Option<String>, dim: usize) -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
            endpoint: endpoint.into(),
            auth_token,
            dim,
            max_attempts: 5,
            retry_delay: Duration::from_millis(250),
        }
    }

    pub fn with_retry(mut self, max_attempts: u32, retry_delay: Duration) -> Self {
        self.max_attempts = max_attempts;
        self.retry_delay = retry_delay;
        self
    }

    fn post(&self, req: &EncodeRequest<'_>) -> Result<EncodeResponse, EvalError> {
        let mut last_reason = String::new();
        for attempt in 1..=self.max_attempts {
            let mut builder = self.client.post(&self.endpoint).json(req);
            if let Some(token) = &self.auth_token {
                builder = builder.bearer_auth(token);
            }
            match builder.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json().map_err(|e| EvalError::ProviderUnavailable {
                        attempts: attempt,
                        reason: format!("bad response body: {e}"),
                    });
                }
                Ok(resp) if resp.status().as_u16() == 429 || resp.status().is_server_error() => {
                    last_reason = format!("status {}", resp.status());
                }
                Ok(resp) => {
                    return Err(EvalError::ProviderUnavailable {
                        attempts: attempt,
                        reason: format!("request rejected ({})", resp.status()),
                    });
                }
                Err(e) => last_reason = format!("transport error: {e}"),
            }
            if attempt < self.max_attempts {
                log::warn!(
                    "encoder attempt {attempt}/{} failed ({last_reason}); retrying",
                    self.max_attempts
                );
                std::thread::sleep(self.retry_delay * attempt);
            }
        }
        Err(EvalError::ProviderUnavailable {
            attempts: self.max_attempts,
            reason: last_reason,
        })
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, items: &[EmbedItem]) -> Result<Vec<EmbeddingVector>, EvalError> {
        let wire: Vec<WireItem<'_>> = items
            .iter()
            .map(|item| match &item.payload {
                ItemPayload::Text(t) => {
                    WireItem { id: &item.id, text: Some(t), image_ref: None }
                }
                ItemPayload::ImageRef(r) => {
                    WireItem { id: &item.id, text: None, image_ref: Some(r) }
                }
            })
            .collect();
        let response = self.post(&EncodeRequest { items: wire })?;
        let mut by_id: HashMap<String, Vec<f64>> =
            response.vectors.into_iter().map(|v| (v.id, v.values)).collect();
        items
            .iter()
            .map(|item| {
                let values = by_id
                    .remove(&item.id)
                    .ok_or_else(|| EvalError::MissingEmbedding(item.id.clone()))?;
                if values.len() != self.dim {
                    return Err(EvalError::DimensionMismatch {
                        expected: self.dim,
                        got: values.len(),
                    });
                }
                let vector = EmbeddingVector(values);
                vector.check_finite(&format!("encoded vector {}", item.id))?;
                Ok(vector)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testhttp::stub_server;

    #[test]
    fn remote_embedder_round_trip_with_retry() {
        let body = r#"{"vectors":[{"id":"b","values":[0.0,1.0]},{"id":"a","values":[1.0,0.0]}]}"#;
        let (addr, handle) =
            stub_server(vec![(429, String::new()), (200, body.to_string())]);
        let remote = RemoteEmbedder::new(addr, Some("token".into()), 2)
            .with_retry(3, Duration::from_millis(2));
        let out = remote
            .embed(&[EmbedItem::text("a", "first"), EmbedItem::image("b", "img.png")])
            .unwrap();
        // Request order preserved even though the response was reordered.
        assert_eq!(out[0], EmbeddingVector(vec![1.0, 0.0]));
        assert_eq!(out[1], EmbeddingVector(vec![0.0, 1.0]));
        assert_eq!(handle.join().unwrap(), 2);
    }

    #[test]
    fn remote_embedder_flags_missing_ids_and_bad_dims() {
        let body = r#"{"vectors":[{"id":"a","values":[1.0,0.0]}]}"#;
        let (addr, handle) = stub_server(vec![(200, body.to_string())]);
        let remote =
            RemoteEmbedder::new(addr, None, 2).with_retry(1, Duration::from_millis(1));
        match remote.embed(&[EmbedItem::text("a", "x"), EmbedItem::text("zz", "y")]) {
            Err(EvalError::MissingEmbedding(id)) => assert_eq!(id, "zz"),
            other => panic!("expected MissingEmbedding, got {other:?}"),
        }
        handle.join().unwrap();

        let body = r#"{"vectors":[{"id":"a","values":[1.0,0.0,0.0]}]}"#;
        let (addr, handle) = stub_server(vec![(200, body.to_string())]);
        let remote =
            RemoteEmbedder::new(addr, None, 2).with_retry(1, Duration::from_millis(1));
        match remote.embed(&[EmbedItem::text("a", "x")]) {
            Err(EvalError::DimensionMismatch { expected: 2, got: 3 }) => {}
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
        handle.join().unwrap();
    }

    #[test]
    fn remote_embedder_gives_up_after_server_errors() {
        let (addr, handle) = stub_server(vec![(500, String::new()); 2]);
        let remote =
            RemoteEmbedder::new(addr, None, 2).with_retry(2, Duration::from_millis(1));
        match remote.embed(&[EmbedItem::text("a", "x")]) {
            Err(EvalError::ProviderUnavailable { attempts: 2, .. }) => {}
            other => panic!("expected ProviderUnavailable, got {other:?}"),
        }
        handle.join().unwrap();
    }

    #[test]
    fn mock_same_text_embeds_identically() {
        let mock = MockEmbedder::new(16, 7);
        let a = mock.embed(&[EmbedItem::text("x1", "a dog")]).unwrap();
        let b = mock.embed(&[EmbedItem::text("x2", "a dog")]).unwrap();
        assert_eq!(a[0], b[0]);
        assert!((a[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mock_distinct_texts_differ() {
        let mock = MockEmbedder::new(16, 7);
        let out = mock
            .embed(&[EmbedItem::text("x", "a dog"), EmbedItem::text("y", "a cat")])
            .unwrap();
        assert_ne!(out[0], out[1]);
    }

    #[test]
    fn mock_seed_changes_vectors() {
        let a = MockEmbedder::new(8, 1).embed(&[EmbedItem::text("x", "t")]).unwrap();
        let b = MockEmbedder::new(8, 2).embed(&[EmbedItem::text("x", "t")]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn class_aligned_mock_groups_by_id_prefix() {
        let mock = MockEmbedder::class_aligned(16, 7);
        let out = mock
            .embed(&[
                EmbedItem::text("dog#0", "first description"),
                EmbedItem::text("dog#1", "second description"),
                EmbedItem::image("cat#img0", "whatever.png"),
            ])
            .unwrap();
        assert_eq!(out[0], out[1]);
        assert_ne!(out[0], out[2]);
    }

    #[test]
    fn embfile_round_trip_and_lookup_order() {
        let mock = MockEmbedder::new(4, 3);
        let vectors = mock
            .embed(&[EmbedItem::text("a", "1"), EmbedItem::text("b", "2"), EmbedItem::text("c", "3")])
            .unwrap();
        let items: Vec<(String, EmbeddingVector)> = ["a", "b", "c"]
            .iter()
            .zip(vectors)
            .map(|(id, v)| (id.to_string(), v))
            .collect();
        let mut buf = Vec::new();
        FileEmbeddings::save(&mut buf, 4, &items).unwrap();
        let file = FileEmbeddings::load(buf.as_slice()).unwrap();
        assert_eq!(file.len(), 3);
        assert_eq!(file.dim(), 4);

        // Request order is preserved regardless of storage order.
        let out = file
            .embed(&[EmbedItem::text("c", ""), EmbedItem::text("a", "")])
            .unwrap();
        assert_eq!(&out[0], file.get("c").unwrap());
        assert_eq!(&out[1], file.get("a").unwrap());
    }

    #[test]
    fn embfile_missing_id_errors() {
        let mut buf = Vec::new();
        FileEmbeddings::save(&mut buf, 2, &[("a".to_string(), EmbeddingVector(vec![1.0, 0.0]))])
            .unwrap();
        let file = FileEmbeddings::load(buf.as_slice()).unwrap();
        match file.embed(&[EmbedItem::text("zz", "")]) {
            Err(EvalError::MissingEmbedding(id)) => assert_eq!(id, "zz"),
            other => panic!("expected MissingEmbedding, got {other:?}"),
        }
    }

    #[test]
    fn embfile_rejects_malformed_input() {
        assert!(FileEmbeddings::load("nonsense\n".as_bytes()).is_err());
        assert!(FileEmbeddings::load("embfile v1 2 1\na\n1.0\n".as_bytes()).is_err());
        assert!(FileEmbeddings::load("embfile v1 2 2\na\n1.0 2.0\n".as_bytes()).is_err());
        // Duplicate id.
        assert!(
            FileEmbeddings::load("embfile v1 1 2\na\n1.0\na\n2.0\n".as_bytes()).is_err()
        );
    }

    #[test]
    fn embfile_preserves_full_precision() {
        let v = EmbeddingVector(vec![1.0 / 3.0, -0.123456789012345678, 2.5e-17]);
        let mut buf = Vec::new();
        FileEmbeddings::save(&mut buf, 3, &[("x".to_string(), v.clone())]).unwrap();
        let file = FileEmbeddings::load(buf.as_slice()).unwrap();
        assert_eq!(file.get("x").unwrap(), &v);
    }
}
