//! `visdesc`: pipeline front door. Imports a knowledge base, maps dataset
//! classes onto it, builds similarity matrices, drives description
//! generation, and evaluates zero-shot classification over the results.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "visdesc", version, about = "Vision-optimized class descriptions: generation and zero-shot evaluation")]
struct Cli {
    #[command(flatten)]
    overrides: ConfigArgs,

    #[command(subcommand)]
    command: Command,
}

/// `--config` plus per-field overrides applied on top of it.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Configuration file (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Similarity threshold for contrastive selection.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// Maximum neighbors per class in contrastive selection.
    #[arg(long = "top-n", global = true)]
    top_n: Option<usize>,

    /// Contrastive generations per class pair.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Normal-ensemble size per class.
    #[arg(long = "n-normal", global = true)]
    n_normal: Option<usize>,

    /// Contrastive-ensemble size per class (must equal top-n x k).
    #[arg(long = "n-contrastive", global = true)]
    n_contrastive: Option<usize>,

    /// Sampling temperature for normal generation.
    #[arg(long = "t-normal", global = true)]
    t_normal: Option<f64>,

    /// Sampling temperature for contrastive generation.
    #[arg(long = "t-contrastive", global = true)]
    t_contrastive: Option<f64>,

    /// Generation token budget.
    #[arg(long = "max-tokens", global = true)]
    max_tokens: Option<usize>,

    /// Similarity metric: wup | path.
    #[arg(long, global = true)]
    metric: Option<String>,

    /// Text-generation backend: mock | remote.
    #[arg(long, global = true)]
    backend: Option<String>,

    /// Embedding provider: mock | file | remote.
    #[arg(long, global = true)]
    provider: Option<String>,

    /// Embedding file for provider = file.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,

    /// Embedding dimension for mock and remote providers.
    #[arg(long = "embed-dim", global = true)]
    embed_dim: Option<usize>,

    /// Mock embedder keying: class | payload.
    #[arg(long = "mock-align", global = true)]
    mock_align: Option<String>,

    /// Seed for all mock components (required with backend = mock).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Maximum concurrent backend requests.
    #[arg(long = "in-flight", global = true)]
    in_flight: Option<usize>,

    /// Exemplar file overriding the built-in prompt session.
    #[arg(long, global = true)]
    exemplars: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.lambda {
            config.lambda = v;
        }
        if let Some(v) = self.top_n {
            config.top_n = v;
        }
        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(v) = self.n_normal {
            config.n_normal = v;
        }
        if let Some(v) = self.n_contrastive {
            config.n_contrastive = v;
        }
        if let Some(v) = self.t_normal {
            config.t_normal = v;
        }
        if let Some(v) = self.t_contrastive {
            config.t_contrastive = v;
        }
        if let Some(v) = self.max_tokens {
            config.max_tokens = v;
        }
        if let Some(v) = &self.metric {
            config.metric = v.parse().map_err(|e: String| anyhow!(e))?;
        }
        if let Some(v) = &self.backend {
            config.backend = v.parse()?;
        }
        if let Some(v) = &self.provider {
            config.provider = v.parse()?;
        }
        if let Some(v) = &self.embeddings {
            config.embeddings = Some(v.clone());
        }
        if let Some(v) = self.embed_dim {
            config.embed_dim = v;
        }
        if let Some(v) = &self.mock_align {
            config.mock_align = v.parse()?;
        }
        if let Some(v) = self.seed {
            config.seed = Some(v);
        }
        if let Some(v) = self.in_flight {
            config.in_flight = v;
        }
        if let Some(v) = &self.exemplars {
            config.exemplars = Some(v.clone());
        }
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Import WordNet 3.0 noun database files into the knowledge-base format.
    ImportWordnet {
        /// data.noun file.
        #[arg(long)]
        data: PathBuf,
        /// index.noun file; omitting it falls back to data-order sense
        /// ranking (unreliable).
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map dataset class labels onto knowledge-base synsets.
    MapClasses {
        #[arg(long)]
        skb: Option<PathBuf>,
        /// Class list (line-delimited records: class_id, label, optional
        /// synset/gloss).
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Extra override records merged onto the class list.
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the all-pairs class-similarity matrix.
    Simmatrix {
        #[arg(long)]
        skb: Option<PathBuf>,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dry-run the contrastive neighbor selection.
    SelectContrastive {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the normal description ensemble.
    GenNormal {
        #[arg(long)]
        skb: Option<PathBuf>,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint left by an interrupted run.
        #[arg(long)]
        resume: bool,
    },
    /// Generate contrastive descriptions for similar class pairs.
    GenContrastive {
        #[arg(long)]
        skb: Option<PathBuf>,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: bool,
    },
    /// Generate one greedy description per class.
    BuildSilver {
        #[arg(long)]
        skb: Option<PathBuf>,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: bool,
    },
    /// Embed description ensembles into unit-norm class prototypes.
    Prototypes {
        /// Description files; pass normal before contrastive.
        #[arg(long = "descriptions", required = true)]
        descriptions: Vec<PathBuf>,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict classes for unlabeled images.
    Classify {
        #[arg(long)]
        prototypes: PathBuf,
        /// Image records: id, optional image_ref.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate top-1 accuracy over labeled images.
    Eval {
        #[arg(long)]
        prototypes: PathBuf,
        /// Labeled image records: id, optional image_ref, gold.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// False-positive table for one class, optionally marked against the
    /// contrastive selection.
    ReportFp {
        #[arg(long)]
        report: PathBuf,
        #[arg(long = "class")]
        class_id: String,
        #[arg(long = "top-m", default_value_t = 5)]
        top_m: usize,
        #[arg(long)]
        selections: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export per-class description texts for downstream image generators.
    ExportZscigPrompts {
        #[arg(long = "descriptions", required = true)]
        descriptions: Vec<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
}

fn path_or_config(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| anyhow!("no {what} given (flag or config)"))
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.overrides.resolve()?;
    // One process-wide pool caps backend concurrency.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(config.in_flight.max(1))
        .build_global();
    let ctx = commands::Ctx::new(config);

    match cli.command {
        Command::ImportWordnet { data, index, out } => {
            commands::import_wordnet(&ctx, &data, index.as_deref(), &out)
        }
        Command::MapClasses { skb, classes, overrides, out } => {
            let skb = path_or_config(skb, &ctx.config.skb, "skb file")?;
            let classes = path_or_config(classes, &ctx.config.classes, "class list")?;
            let overrides = overrides.or_else(|| ctx.config.overrides.clone());
            commands::map_classes(&ctx, &skb, &classes, overrides.as_deref(), &out)
        }
        Command::Simmatrix { skb, mappings, out } => {
            let skb = path_or_config(skb, &ctx.config.skb, "skb file")?;
            commands::simmatrix(&ctx, &skb, &mappings, &out)
        }
        Command::SelectContrastive { matrix, mappings, out } => {
            commands::select_contrastive(&ctx, &matrix, &mappings, &out)
        }
        Command::GenNormal { skb, mappings, out, resume } => {
            let skb = path_or_config(skb, &ctx.config.skb, "skb file")?;
            commands::gen_normal(&ctx, &skb, &mappings, &out, resume)
        }
        Command::GenContrastive { skb, mappings, matrix, out, resume } => {
            let skb = path_or_config(skb, &ctx.config.skb, "skb file")?;
            commands::gen_contrastive(&ctx, &skb, &mappings, &matrix, &out, resume)
        }
        Command::BuildSilver { skb, mappings, out, resume } => {
            let skb = path_or_config(skb, &ctx.config.skb, "skb file")?;
            commands::build_silver(&ctx, &skb, &mappings, &out, resume)
        }
        Command::Prototypes { descriptions, mappings, out } => {
            commands::prototypes(&ctx, &descriptions, &mappings, &out)
        }
        Command::Classify { prototypes, images, out } => {
            commands::classify_cmd(&ctx, &prototypes, &images, &out)
        }
        Command::Eval { prototypes, images, out } => {
            commands::eval_cmd(&ctx, &prototypes, &images, &out)
        }
        Command::ReportFp { report, class_id, top_m, selections, out } => {
            commands::report_fp(&ctx, &report, &class_id, top_m, selections.as_deref(), out.as_deref())
        }
        Command::ExportZscigPrompts { descriptions, out_dir } => {
            commands::export_zscig_prompts(&ctx, &descriptions, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Machine-readable error record on stderr.
            eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            ExitCode::FAILURE
        }
    }
}
