//! Subcommand implementations: each one composes the library modules, writes
//! its artifact, and stamps a provenance sidecar with the config hash and
//! tool version.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use visdesc_core::embed::{
    EmbedItem, EmbeddingProvider, FileEmbeddings, MockEmbedder, RemoteEmbedder,
};
use visdesc_core::gen::{
    self, run_checkpointed, select_contrastive_targets, DescriptionRecord, GenContext, Mode,
};
use visdesc_core::llm::{LlmBackend, MockBackend, RemoteBackend};
use visdesc_core::mapping::{self, ClassMapping, ClassSpec};
use visdesc_core::prompt::ExemplarSet;
use visdesc_core::records::Provenance;
use visdesc_core::similarity::{build_similarity_matrix, SimilarityMatrix};
use visdesc_core::skb::{SkbGraph, SynsetId};
use visdesc_core::wordnet;
use visdesc_core::zsic::{
    self, class_prototype, classify, evaluate, false_positive_report, mark_contrastive_hits,
    ClassPrototype, EmbeddingVector,
};

use crate::config::{BackendKind, MockAlign, PipelineConfig, ProviderKind};

pub struct Ctx {
    pub config: PipelineConfig,
    pub config_hash: String,
}

impl Ctx {
    pub fn new(config: PipelineConfig) -> Self {
        let config_hash = config.hash();
        Self { config, config_hash }
    }

    fn provenance(&self, exemplar_hash: Option<String>) -> Provenance {
        Provenance {
            tool: "visdesc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.config_hash.clone(),
            exemplar_hash,
        }
    }

    /// Joins relative outputs onto the configured output directory.
    pub fn resolve_out(&self, out: &Path) -> PathBuf {
        match (&self.config.output_dir, out.is_relative()) {
            (Some(dir), true) => dir.join(out),
            _ => out.to_path_buf(),
        }
    }

    fn exemplars(&self) -> Result<ExemplarSet> {
        match &self.config.exemplars {
            None => Ok(ExemplarSet::builtin().clone()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading exemplars {}", path.display()))?;
                Ok(ExemplarSet::parse(&text)?)
            }
        }
    }

    fn backend(&self) -> Result<Box<dyn LlmBackend>> {
        match self.config.backend {
            BackendKind::Mock => Ok(Box::new(MockBackend::new())),
            BackendKind::Remote => {
                let url = match &self.config.backend_url {
                    Some(url) => url.clone(),
                    None => std::env::var(&self.config.backend_url_env).map_err(|_| {
                        anyhow!(
                            "backend = remote needs backend_url or the {} environment variable",
                            self.config.backend_url_env
                        )
                    })?,
                };
                let token = std::env::var(&self.config.backend_token_env).ok();
                Ok(Box::new(RemoteBackend::new(url, token)))
            }
        }
    }

    fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let seed = self.config.seed.unwrap_or(0);
        match self.config.provider {
            ProviderKind::Mock => Ok(match self.config.mock_align {
                MockAlign::Class => Box::new(MockEmbedder::class_aligned(self.config.embed_dim, seed)),
                MockAlign::Payload => Box::new(MockEmbedder::new(self.config.embed_dim, seed)),
            }),
            ProviderKind::File => {
                let path = self
                    .config
                    .embeddings
                    .as_ref()
                    .ok_or_else(|| anyhow!("provider = file needs embeddings = <path>"))?;
                let file = FileEmbeddings::load(open(path)?)?;
                Ok(Box::new(file))
            }
            ProviderKind::Remote => {
                let url = match &self.config.provider_url {
                    Some(url) => url.clone(),
                    None => std::env::var(&self.config.provider_url_env).map_err(|_| {
                        anyhow!(
                            "provider = remote needs provider_url or the {} environment variable",
                            self.config.provider_url_env
                        )
                    })?,
                };
                let token = std::env::var(&self.config.provider_token_env).ok();
                Ok(Box::new(RemoteEmbedder::new(url, token, self.config.embed_dim)))
            }
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_graph(path: &Path) -> Result<SkbGraph> {
    Ok(SkbGraph::load(open(path)?)?)
}

fn load_mappings(path: &Path) -> Result<Vec<ClassMapping>> {
    Ok(mapping::read_mappings(open(path)?)?)
}

/// Classes that resolved to a synset, in mapping order; the similarity
/// matrix and the contrastive pass run over exactly this subset.
fn synset_resolved(mappings: &[ClassMapping]) -> Vec<ClassMapping> {
    mappings.iter().filter(|m| m.resolved.synset().is_some()).cloned().collect()
}

pub fn import_wordnet(ctx: &Ctx, data: &Path, index: Option<&Path>, out: &Path) -> Result<()> {
    let out = ctx.resolve_out(out);
    let index_reader = match index {
        Some(path) => Some(open(path)?),
        None => None,
    };
    let graph = wordnet::import_wordnet(open(data)?, index_reader)?;
    graph.save(&mut create(&out)?)?;
    ctx.provenance(None).write_for(&out)?;
    if !graph.frequency_reliable() {
        log::warn!("imported without an index file; sense ranking is data order");
    }
    println!(
        "imported {} synsets, {} indexed lemmas -> {}",
        graph.len(),
        graph.lemma_index().len(),
        out.display()
    );
    Ok(())
}

/// Extra override records merged onto the class list before mapping.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideRow {
    class_id: String,
    #[serde(default)]
    synset: Option<SynsetId>,
    #[serde(default)]
    gloss: Option<String>,
}

fn apply_overrides(specs: &mut [ClassSpec], path: &Path) -> Result<()> {
    let rows: Vec<OverrideRow> = visdesc_core::records::read_jsonl(open(path)?)?;
    for row in rows {
        let spec = specs
            .iter_mut()
            .find(|s| s.class_id == row.class_id)
            .ok_or_else(|| anyhow!("override for unknown class {:?}", row.class_id))?;
        if row.synset.is_some() {
            spec.override_synset = row.synset;
        }
        if row.gloss.is_some() {
            spec.manual_gloss = row.gloss;
        }
    }
    Ok(())
}

pub fn map_classes(
    ctx: &Ctx,
    skb: &Path,
    classes: &Path,
    overrides: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let out = ctx.resolve_out(out);
    let graph = load_graph(skb)?;
    let mut specs = mapping::read_class_specs(open(classes)?)?;
    if let Some(path) = overrides {
        apply_overrides(&mut specs, path)?;
    }
    let (mappings, report) = mapping::map_dataset(&graph, &specs)?;
    mapping::write_mappings(&mut create(&out)?, &mappings)?;
    ctx.provenance(None).write_for(&out)?;
    print!("{report}");
    Ok(())
}

pub fn simmatrix(ctx: &Ctx, skb: &Path, mappings_path: &Path, out: &Path) -> Result<()> {
    let out = ctx.resolve_out(out);
    let graph = load_graph(skb)?;
    let mappings = load_mappings(mappings_path)?;
    let resolved = synset_resolved(&mappings);
    let skipped = mappings.len() - resolved.len();
    if skipped > 0 {
        log::warn!("{skipped} gloss-mapped classes are not in the similarity matrix");
    }
    let ids: Vec<SynsetId> = resolved
        .iter()
        .map(|m| m.resolved.synset().expect("filtered").clone())
        .collect();
    let matrix = build_similarity_matrix(&graph, &ids, ctx.config.metric)?;
    matrix.save(&mut create(&out)?)?;
    ctx.provenance(None).write_for(&out)?;
    println!(
        "similarity matrix {}x{} ({}) -> {}",
        matrix.n(),
        matrix.n(),
        matrix.metric(),
        out.display()
    );
    Ok(())
}

fn load_aligned_matrix(
    matrix_path: &Path,
    mappings: &[ClassMapping],
) -> Result<(SimilarityMatrix, Vec<ClassMapping>)> {
    let matrix = SimilarityMatrix::load(open(matrix_path)?)?;
    let resolved = synset_resolved(mappings);
    gen::verify_matrix_alignment(&resolved, &matrix)?;
    Ok((matrix, resolved))
}

#[derive(Debug, Serialize, Deserialize)]
struct NeighborRow {
    class_id: String,
    synset: SynsetId,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionRow {
    class_id: String,
    neighbors: Vec<NeighborRow>,
}

pub fn select_contrastive(
    ctx: &Ctx,
    matrix_path: &Path,
    mappings_path: &Path,
    out: &Path,
) -> Result<()> {
    let out = ctx.resolve_out(out);
    let mappings = load_mappings(mappings_path)?;
    let (matrix, resolved) = load_aligned_matrix(matrix_path, &mappings)?;
    let lambda = ctx.config.lambda;
    let top_n = ctx.config.top_n;
    let mut rows = Vec::with_capacity(resolved.len());
    for (i, m) in resolved.iter().enumerate() {
        let neighbors = select_contrastive_targets(&matrix, i, lambda, top_n)?
            .into_iter()
            .map(|j| NeighborRow {
                class_id: resolved[j].class_id.clone(),
                synset: matrix.class_ids()[j].clone(),
                score: matrix.get(i, j),
            })
            .collect();
        rows.push(SelectionRow { class_id: m.class_id.clone(), neighbors });
    }
    visdesc_core::records::write_jsonl(&mut create(&out)?, &rows)?;
    ctx.provenance(None).write_for(&out)?;
    println!("contrastive selection (lambda {lambda}, top {top_n}) -> {}", out.display());
    Ok(())
}

fn checkpoint_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".checkpoint.json");
    out.with_file_name(name)
}

struct GenRun<'a> {
    graph: SkbGraph,
    exemplars: ExemplarSet,
    backend: Box<dyn LlmBackend>,
    ctx: &'a Ctx,
    out: PathBuf,
    resume: bool,
}

impl<'a> GenRun<'a> {
    fn prepare(ctx: &'a Ctx, skb: &Path, out: &Path, resume: bool) -> Result<Self> {
        Ok(Self {
            graph: load_graph(skb)?,
            exemplars: ctx.exemplars()?,
            backend: ctx.backend()?,
            ctx,
            out: ctx.resolve_out(out),
            resume,
        })
    }

    fn run(
        &self,
        mode: Mode,
        order: &[String],
        gen_class: impl Fn(&GenContext<'_>, usize) -> Result<Vec<DescriptionRecord>, gen::GenError>
            + Sync,
    ) -> Result<()> {
        let config = self.ctx.config.ensemble()?;
        let gen_ctx = GenContext {
            graph: &self.graph,
            exemplars: &self.exemplars,
            backend: self.backend.as_ref(),
            config: &config,
        };
        let cp = checkpoint_path(&self.out);
        if !self.resume && cp.exists() {
            std::fs::remove_file(&cp)?;
        }
        run_checkpointed(
            &self.out,
            &cp,
            &self.ctx.config_hash,
            mode,
            order,
            self.ctx.config.in_flight,
            |i| gen_class(&gen_ctx, i),
        )?;
        // A finished run needs no resume point; clearing it keeps reruns
        // regenerating from scratch.
        if cp.exists() {
            std::fs::remove_file(&cp)?;
        }
        self.ctx
            .provenance(Some(self.exemplars.hash().to_string()))
            .write_for(&self.out)?;
        println!("{mode} descriptions for {} classes -> {}", order.len(), self.out.display());
        Ok(())
    }
}

pub fn gen_normal(
    ctx: &Ctx,
    skb: &Path,
    mappings_path: &Path,
    out: &Path,
    resume: bool,
) -> Result<()> {
    let mappings = load_mappings(mappings_path)?;
    let run = GenRun::prepare(ctx, skb, out, resume)?;
    let order: Vec<String> = mappings.iter().map(|m| m.class_id.clone()).collect();
    run.run(Mode::Normal, &order, |gen_ctx, i| gen_ctx.normal_for_class(&mappings[i]))
}

pub fn gen_contrastive(
    ctx: &Ctx,
    skb: &Path,
    mappings_path: &Path,
    matrix_path: &Path,
    out: &Path,
    resume: bool,
) -> Result<()> {
    let mappings = load_mappings(mappings_path)?;
    let (matrix, resolved) = load_aligned_matrix(matrix_path, &mappings)?;
    let run = GenRun::prepare(ctx, skb, out, resume)?;
    let order: Vec<String> = resolved.iter().map(|m| m.class_id.clone()).collect();
    run.run(Mode::Contrastive, &order, |gen_ctx, i| {
        gen_ctx.contrastive_for_class(&resolved, &matrix, i)
    })
}

pub fn build_silver(
    ctx: &Ctx,
    skb: &Path,
    mappings_path: &Path,
    out: &Path,
    resume: bool,
) -> Result<()> {
    let mut mappings = load_mappings(mappings_path)?;
    mappings.sort_by(|a, b| a.class_id.cmp(&b.class_id));
    let run = GenRun::prepare(ctx, skb, out, resume)?;
    let order: Vec<String> = mappings.iter().map(|m| m.class_id.clone()).collect();
    run.run(Mode::Silver, &order, |gen_ctx, i| {
        gen_ctx.silver_for_class(&mappings[i]).map(|r| vec![r])
    })
}

fn read_description_files(paths: &[PathBuf]) -> Result<Vec<DescriptionRecord>> {
    let mut records = Vec::new();
    for path in paths {
        records.extend(gen::read_descriptions(open(path)?)?);
    }
    Ok(records)
}

pub fn prototypes(
    ctx: &Ctx,
    description_paths: &[PathBuf],
    mappings_path: &Path,
    out: &Path,
) -> Result<()> {
    let out = ctx.resolve_out(out);
    let mappings = load_mappings(mappings_path)?;
    let class_ids: Vec<String> = mappings.iter().map(|m| m.class_id.clone()).collect();
    let records = read_description_files(description_paths)?;
    let (contrastive, normal): (Vec<_>, Vec<_>) =
        records.into_iter().partition(|r| r.mode == Mode::Contrastive);
    let combined = gen::combine_ensembles(&class_ids, &normal, &contrastive)?;

    let provider = ctx.provider()?;
    let mut stored = Vec::with_capacity(combined.len());
    for (class_id, class_records) in &combined {
        let items: Vec<EmbedItem> = class_records
            .iter()
            .enumerate()
            .map(|(i, r)| EmbedItem::text(format!("{class_id}#{i}"), &r.text))
            .collect();
        let vectors = provider.embed(&items)?;
        let prototype = class_prototype(class_id.clone(), &vectors)?;
        log::debug!("class {class_id}: prototype over {} descriptions", prototype.count);
        stored.push((class_id.clone(), prototype.vector));
    }
    FileEmbeddings::save(&mut create(&out)?, provider.dim(), &stored)?;
    ctx.provenance(None).write_for(&out)?;
    println!("{} class prototypes (dim {}) -> {}", stored.len(), provider.dim(), out.display());
    Ok(())
}

fn load_prototypes(path: &Path) -> Result<Vec<ClassPrototype>> {
    let file = FileEmbeddings::load(open(path)?)?;
    let mut ids: Vec<String> = file.ids().map(str::to_owned).collect();
    ids.sort();
    Ok(ids
        .into_iter()
        .map(|class_id| {
            let vector = file.get(&class_id).expect("listed id").clone();
            ClassPrototype { class_id, vector, count: 1 }
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct ImageRow {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    image_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    gold: Option<String>,
}

fn embed_images(
    provider: &dyn EmbeddingProvider,
    rows: &[ImageRow],
) -> Result<Vec<EmbeddingVector>> {
    let items: Vec<EmbedItem> = rows
        .iter()
        .map(|row| EmbedItem::image(&row.id, row.image_ref.clone().unwrap_or_else(|| row.id.clone())))
        .collect();
    Ok(provider.embed(&items)?)
}

#[derive(Debug, Serialize)]
struct PredictionRow<'a> {
    id: &'a str,
    predicted: String,
    score: f64,
}

pub fn classify_cmd(ctx: &Ctx, prototypes_path: &Path, images: &Path, out: &Path) -> Result<()> {
    let out = ctx.resolve_out(out);
    let prototypes = load_prototypes(prototypes_path)?;
    let rows: Vec<ImageRow> = visdesc_core::records::read_jsonl(open(images)?)?;
    let vectors = embed_images(ctx.provider()?.as_ref(), &rows)?;
    let mut predictions = Vec::with_capacity(rows.len());
    for (row, vector) in rows.iter().zip(&vectors) {
        let p = classify(&prototypes, vector)?;
        let score = p
            .scores
            .iter()
            .find(|(c, _)| c == &p.class_id)
            .map(|(_, s)| *s)
            .unwrap_or_default();
        predictions.push(PredictionRow { id: &row.id, predicted: p.class_id, score });
    }
    visdesc_core::records::write_jsonl(&mut create(&out)?, &predictions)?;
    ctx.provenance(None).write_for(&out)?;
    println!("classified {} images -> {}", predictions.len(), out.display());
    Ok(())
}

pub fn eval_cmd(ctx: &Ctx, prototypes_path: &Path, images: &Path, out: &Path) -> Result<()> {
    let out = ctx.resolve_out(out);
    let prototypes = load_prototypes(prototypes_path)?;
    let rows: Vec<ImageRow> = visdesc_core::records::read_jsonl(open(images)?)?;
    for row in &rows {
        if row.gold.is_none() {
            bail!("image {} has no gold label; eval needs labeled images", row.id);
        }
    }
    let vectors = embed_images(ctx.provider()?.as_ref(), &rows)?;
    let labeled: Vec<(EmbeddingVector, String)> = rows
        .iter()
        .zip(vectors)
        .map(|(row, v)| (v, row.gold.clone().expect("checked above")))
        .collect();
    let report = evaluate(&prototypes, &labeled)?;
    report.check_consistency().map_err(|reason| anyhow!("inconsistent report: {reason}"))?;
    zsic::write_report(&mut create(&out)?, &report)?;
    ctx.provenance(None).write_for(&out)?;
    print!("{report}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct FpRow<'a> {
    class_id: &'a str,
    count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    contrastive_hit: Option<bool>,
}

pub fn report_fp(
    ctx: &Ctx,
    report_path: &Path,
    class_id: &str,
    top_m: usize,
    selections: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let report = zsic::read_report(open(report_path)?)?;
    let fp = false_positive_report(&report, class_id, top_m)?;
    let selected: Option<Vec<String>> = match selections {
        None => None,
        Some(path) => {
            let rows: Vec<SelectionRow> = visdesc_core::records::read_jsonl(open(path)?)?;
            let row = rows
                .into_iter()
                .find(|r| r.class_id == class_id)
                .ok_or_else(|| anyhow!("class {class_id:?} not in the selection file"))?;
            Some(row.neighbors.into_iter().map(|n| n.class_id).collect())
        }
    };

    println!("false positives for gold = {class_id}");
    let marked: Vec<(zsic::FpEntry, Option<bool>)> = match &selected {
        Some(sel) => mark_contrastive_hits(&fp, sel)
            .into_iter()
            .map(|(e, hit)| (e, Some(hit)))
            .collect(),
        None => fp.into_iter().map(|e| (e, None)).collect(),
    };
    for (entry, hit) in &marked {
        match hit {
            Some(true) => println!("  {:<24} {:>6}  hit", entry.class_id, entry.count),
            Some(false) => println!("  {:<24} {:>6}  miss", entry.class_id, entry.count),
            None => println!("  {:<24} {:>6}", entry.class_id, entry.count),
        }
    }
    if marked.is_empty() {
        println!("  (none; every prediction for this class was correct)");
    }

    if let Some(out) = out {
        let out = ctx.resolve_out(out);
        let rows: Vec<FpRow<'_>> = marked
            .iter()
            .map(|(e, hit)| FpRow {
                class_id: &e.class_id,
                count: e.count,
                contrastive_hit: *hit,
            })
            .collect();
        visdesc_core::records::write_jsonl(&mut create(&out)?, &rows)?;
        ctx.provenance(None).write_for(&out)?;
    }
    Ok(())
}

fn safe_file_name(class_id: &str) -> String {
    class_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

#[derive(Debug, Serialize)]
struct ZscigIndexRow {
    class_id: String,
    file: String,
    descriptions: usize,
}

/// Writes one prompt file per class for downstream image generators.
pub fn export_zscig_prompts(
    ctx: &Ctx,
    description_paths: &[PathBuf],
    out_dir: &Path,
) -> Result<()> {
    let out_dir = ctx.resolve_out(out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let records = read_description_files(description_paths)?;
    let mut per_class: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in records {
        per_class.entry(r.class_id).or_default().push(r.text);
    }
    if per_class.is_empty() {
        bail!("no descriptions to export");
    }

    let mut index = Vec::with_capacity(per_class.len());
    let mut used = std::collections::HashSet::new();
    for (class_id, texts) in &per_class {
        let file = format!("{}.txt", safe_file_name(class_id));
        if !used.insert(file.clone()) {
            bail!("class ids {class_id:?} collide on file name {file:?} after sanitizing");
        }
        let mut w = create(&out_dir.join(&file))?;
        for text in texts {
            writeln!(w, "{text}")?;
        }
        index.push(ZscigIndexRow {
            class_id: class_id.clone(),
            file,
            descriptions: texts.len(),
        });
    }
    let index_path = out_dir.join("index.jsonl");
    visdesc_core::records::write_jsonl(&mut create(&index_path)?, &index)?;
    ctx.provenance(None).write_for(&index_path)?;
    println!("exported prompts for {} classes -> {}", index.len(), out_dir.display());
    Ok(())
}
