//! Pipeline configuration: a flat key = value file, per-field command-line
//! overrides, and the canonical hash stamped into artifact provenance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use visdesc_core::gen::EnsembleConfig;
use visdesc_core::llm::default_stop_sequences;
use visdesc_core::records::sha256_hex;
use visdesc_core::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Remote,
}

impl FromStr for BackendKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(Self::Mock),
            "remote" => Ok(Self::Remote),
            other => bail!("unknown backend {other:?} (expected mock or remote)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Mock,
    File,
    Remote,
}

impl FromStr for ProviderKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(Self::Mock),
            "file" => Ok(Self::File),
            "remote" => Ok(Self::Remote),
            other => bail!("unknown provider {other:?} (expected mock, file or remote)"),
        }
    }
}

/// How the mock embedder keys its hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockAlign {
    /// One vector per class-id prefix; classes separate cleanly.
    Class,
    /// One vector per distinct payload.
    Payload,
}

impl FromStr for MockAlign {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(Self::Class),
            "payload" => Ok(Self::Payload),
            other => bail!("unknown mock_align {other:?} (expected class or payload)"),
        }
    }
}

/// Everything a subcommand needs beyond its input/output paths.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub skb: Option<PathBuf>,
    pub wordnet_dir: Option<PathBuf>,
    pub classes: Option<PathBuf>,
    pub overrides: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,

    pub n_normal: usize,
    pub t_normal: f64,
    pub n_contrastive: usize,
    pub t_contrastive: f64,
    pub lambda: f64,
    pub top_n: usize,
    pub k: usize,
    pub max_tokens: usize,
    pub stop: Vec<String>,

    pub metric: Metric,
    pub seed: Option<u64>,
    pub in_flight: usize,

    pub backend: BackendKind,
    pub backend_url: Option<String>,
    pub backend_url_env: String,
    pub backend_token_env: String,

    pub provider: ProviderKind,
    pub embeddings: Option<PathBuf>,
    pub provider_url: Option<String>,
    pub provider_url_env: String,
    pub provider_token_env: String,
    pub embed_dim: usize,
    pub mock_align: MockAlign,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ec = EnsembleConfig::default();
        Self {
            skb: None,
            wordnet_dir: None,
            classes: None,
            overrides: None,
            output_dir: None,
            exemplars: None,
            n_normal: ec.n_normal,
            t_normal: ec.t_normal,
            n_contrastive: ec.n_contrastive_total,
            t_contrastive: ec.t_contrastive,
            lambda: ec.lambda,
            top_n: ec.top_n,
            k: ec.k,
            max_tokens: ec.max_tokens,
            stop: default_stop_sequences(),
            metric: Metric::Wup,
            seed: None,
            in_flight: 4,
            backend: BackendKind::Mock,
            backend_url: None,
            backend_url_env: "VISDESC_BACKEND_URL".into(),
            backend_token_env: "VISDESC_BACKEND_TOKEN".into(),
            provider: ProviderKind::Mock,
            embeddings: None,
            provider_url: None,
            provider_url_env: "VISDESC_ENCODER_URL".into(),
            provider_token_env: "VISDESC_ENCODER_TOKEN".into(),
            embed_dim: 64,
            mock_align: MockAlign::Class,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n").replace('\t', "\\t").replace(',', "\\,")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

fn split_stop_list(raw: &str) -> Vec<String> {
    // Comma-separated with backslash escapes.
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                current.push('\\');
                if let Some(next) = chars.next() {
                    current.push(next);
                }
            }
            ',' => {
                parts.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    parts.push(current);
    parts.into_iter().map(|p| unescape(&p)).filter(|p| !p.is_empty()).collect()
}

impl PipelineConfig {
    /// Parses the flat `key = value` format. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key = value", idx + 1))?;
            let key = key.trim();
            let value = value.trim();
            config
                .set(key, value)
                .with_context(|| format!("config line {}: key {key:?}", idx + 1))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "skb" => self.skb = Some(PathBuf::from(value)),
            "wordnet_dir" => self.wordnet_dir = Some(PathBuf::from(value)),
            "classes" => self.classes = Some(PathBuf::from(value)),
            "overrides" => self.overrides = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "exemplars" => self.exemplars = Some(PathBuf::from(value)),
            "n_normal" => self.n_normal = value.parse()?,
            "t_normal" => self.t_normal = value.parse()?,
            "n_contrastive" => self.n_contrastive = value.parse()?,
            "t_contrastive" => self.t_contrastive = value.parse()?,
            "lambda" => self.lambda = value.parse()?,
            "top_n" => self.top_n = value.parse()?,
            "k" => self.k = value.parse()?,
            "max_tokens" => self.max_tokens = value.parse()?,
            "stop" => self.stop = split_stop_list(value),
            "metric" => self.metric = value.parse().map_err(|e: String| anyhow!(e))?,
            "seed" => self.seed = Some(value.parse()?),
            "in_flight" => self.in_flight = value.parse()?,
            "backend" => self.backend = value.parse()?,
            "backend_url" => self.backend_url = Some(value.to_string()),
            "backend_url_env" => self.backend_url_env = value.to_string(),
            "backend_token_env" => self.backend_token_env = value.to_string(),
            "provider" => self.provider = value.parse()?,
            "embeddings" => self.embeddings = Some(PathBuf::from(value)),
            "provider_url" => self.provider_url = Some(value.to_string()),
            "provider_url_env" => self.provider_url_env = value.to_string(),
            "provider_token_env" => self.provider_token_env = value.to_string(),
            "embed_dim" => self.embed_dim = value.parse()?,
            "mock_align" => self.mock_align = value.parse()?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Canonical rendering of the effective configuration; its hash is the
    /// config hash embedded in artifact provenance.
    pub fn canonical(&self) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        };
        let mut fields: BTreeMap<&str, String> = BTreeMap::new();
        fields.insert("skb", path(&self.skb));
        fields.insert("wordnet_dir", path(&self.wordnet_dir));
        fields.insert("classes", path(&self.classes));
        fields.insert("overrides", path(&self.overrides));
        fields.insert("output_dir", path(&self.output_dir));
        fields.insert("exemplars", path(&self.exemplars));
        fields.insert("n_normal", self.n_normal.to_string());
        fields.insert("t_normal", self.t_normal.to_string());
        fields.insert("n_contrastive", self.n_contrastive.to_string());
        fields.insert("t_contrastive", self.t_contrastive.to_string());
        fields.insert("lambda", self.lambda.to_string());
        fields.insert("top_n", self.top_n.to_string());
        fields.insert("k", self.k.to_string());
        fields.insert("max_tokens", self.max_tokens.to_string());
        fields.insert(
            "stop",
            self.stop.iter().map(|s| escape(s)).collect::<Vec<_>>().join(","),
        );
        fields.insert("metric", self.metric.to_string());
        fields.insert("seed", self.seed.map(|s| s.to_string()).unwrap_or_default());
        fields.insert("in_flight", self.in_flight.to_string());
        fields.insert(
            "backend",
            match self.backend {
                BackendKind::Mock => "mock".into(),
                BackendKind::Remote => "remote".into(),
            },
        );
        fields.insert("backend_url", self.backend_url.clone().unwrap_or_default());
        fields.insert("backend_url_env", self.backend_url_env.clone());
        fields.insert("backend_token_env", self.backend_token_env.clone());
        fields.insert(
            "provider",
            match self.provider {
                ProviderKind::Mock => "mock".into(),
                ProviderKind::File => "file".into(),
                ProviderKind::Remote => "remote".into(),
            },
        );
        fields.insert("embeddings", path(&self.embeddings));
        fields.insert("provider_url", self.provider_url.clone().unwrap_or_default());
        fields.insert("provider_url_env", self.provider_url_env.clone());
        fields.insert("provider_token_env", self.provider_token_env.clone());
        fields.insert("embed_dim", self.embed_dim.to_string());
        fields.insert(
            "mock_align",
            match self.mock_align {
                MockAlign::Class => "class".into(),
                MockAlign::Payload => "payload".into(),
            },
        );
        let mut out = String::new();
        for (key, value) in fields {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig> {
        let seed = match self.backend {
            BackendKind::Mock => self
                .seed
                .ok_or_else(|| anyhow!("backend = mock requires a seed (--seed or seed =)"))?,
            BackendKind::Remote => self.seed.unwrap_or(0),
        };
        let config = EnsembleConfig {
            n_normal: self.n_normal,
            t_normal: self.t_normal,
            n_contrastive_total: self.n_contrastive,
            t_contrastive: self.t_contrastive,
            lambda: self.lambda,
            top_n: self.top_n,
            k: self.k,
            max_tokens: self.max_tokens,
            stop_sequences: self.stop.clone(),
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_key_values() {
        let text = "\
# comment
lambda = 0.6
top_n = 2
k = 10
n_contrastive = 20
backend = mock
seed = 7
metric = path
stop = \\n,--,END
";
        let c = PipelineConfig::parse(text).unwrap();
        assert_eq!(c.lambda, 0.6);
        assert_eq!(c.top_n, 2);
        assert_eq!(c.metric, Metric::Path);
        assert_eq!(c.stop, vec!["\n", "--", "END"]);
        assert_eq!(c.seed, Some(7));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(PipelineConfig::parse("nope = 1\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = PipelineConfig::parse("lambda = 0.5\nseed = 7\n").unwrap();
        let b = PipelineConfig::parse("seed = 7\nlambda = 0.5\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = PipelineConfig::parse("lambda = 0.6\nseed = 7\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn mock_backend_requires_seed() {
        let c = PipelineConfig::parse("backend = mock\n").unwrap();
        assert!(c.ensemble().is_err());
        let c = PipelineConfig::parse("backend = mock\nseed = 1\n").unwrap();
        assert!(c.ensemble().is_ok());
    }

    #[test]
    fn ensemble_consistency_is_enforced() {
        let c = PipelineConfig::parse("seed = 1\nk = 3\n").unwrap();
        // 5 * 3 != 20
        assert!(c.ensemble().is_err());
        let c = PipelineConfig::parse("seed = 1\nk = 3\ntop_n = 4\nn_contrastive = 12\n").unwrap();
        assert!(c.ensemble().is_ok());
    }
}
