//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mmgraph_core::encoder::EncoderConfig;
use mmgraph_core::eval::{evaluate, GainScheme};
use mmgraph_core::ingest::{build_graph, BuildConfig};
use mmgraph_core::optim::OptimizerKind;
use mmgraph_core::rng::derive_seed;
use mmgraph_core::sampler::{cap_adjacency, generate_pairs_on, SamplerConfig};
use mmgraph_core::trainer::{embed_all, train_with, TrainConfig};

use crate::api::{self, ConnectivityName, SearchRequest};
use crate::formats;
use crate::service::{self, AppState};
use crate::snapshot::{ArtifactPaths, Snapshot};
use crate::synth::TwoClusters;
use crate::textio;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "mmgraph",
    version,
    about = "Multi-modal image/tag graph embeddings and retrieval"
)]
pub struct Cli {
    /// Directory holding graph.mmgf, weights.mmgw and embeddings.mmge.
    #[arg(long, global = true, env = "MMG_ARTIFACT_DIR", default_value = ".")]
    pub artifact_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the image/tag graph from a JSON Lines file.
    BuildGraph(BuildArgs),
    /// Train encoder weights on a graph.
    Train(TrainArgs),
    /// Embed every node with trained weights.
    Embed(EmbedArgs),
    /// Retrieve images for an image and/or tags.
    Query(QueryArgs),
    /// Rank tags for an image.
    PredictTags(PredictArgs),
    /// Score a judgments file.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a synthetic two-cluster corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.65)]
    pub threshold: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub tag_init_scale: f32,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Defaults to loss.csv in the artifact directory.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Write the first epoch's positive pairs as JSON Lines.
    #[arg(long)]
    pub pairs_dump: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    /// Layer widths as `d1,d2`.
    #[arg(long, default_value = "128,128", value_parser = parse_pair)]
    pub hidden: [usize; 2],
    /// Neighbors sampled per layer as `outer,inner`.
    #[arg(long, default_value = "25,10", value_parser = parse_pair)]
    pub fanouts: [usize; 2],
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f32,
    #[arg(long, default_value_t = 50)]
    pub walks: usize,
    #[arg(long, default_value_t = 5)]
    pub walk_length: usize,
    #[arg(long, default_value_t = 20)]
    pub negatives: usize,
    #[arg(long, default_value_t = 100)]
    pub max_degree: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConnectivityArg {
    ImageOnly,
    TagOnly,
    Both,
}

impl From<ConnectivityArg> for ConnectivityName {
    fn from(c: ConnectivityArg) -> Self {
        match c {
            ConnectivityArg::ImageOnly => ConnectivityName::ImageOnly,
            ConnectivityArg::TagOnly => ConnectivityName::TagOnly,
            ConnectivityArg::Both => ConnectivityName::Both,
        }
    }
}

#[derive(Args, Debug)]
pub struct ImageSource {
    /// Key of an image already in the graph.
    #[arg(long, conflicts_with = "feature_file")]
    pub image_key: Option<String>,
    /// JSON array holding a feature vector.
    #[arg(long)]
    pub feature_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[command(flatten)]
    pub image: ImageSource,
    /// Comma-separated tag names.
    #[arg(long, value_delimiter = ',')]
    pub tags: Vec<String>,
    /// Weight of the visual component, in [0, 1].
    #[arg(long, default_value_t = 1.0, value_parser = parse_weight)]
    pub visual_weight: f32,
    /// Number of results.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Nodes the query attaches to.
    #[arg(long, value_enum, default_value_t = ConnectivityArg::ImageOnly)]
    pub connectivity: ConnectivityArg,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub image: ImageSource,
    /// Number of tags.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GainArg {
    Exponential,
    Linear,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub judgments: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GainArg::Exponential)]
    pub gain: GainArg,
    #[arg(long, value_delimiter = ',', default_values_t = [3, 5])]
    pub cutoffs: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Static explorer assets served under /ui/.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 3.0)]
    pub offset: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_pair(s: &str) -> std::result::Result<[usize; 2], String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    <[usize; 2]>::try_from(parts).map_err(|p| format!("expected two values, got {}", p.len()))
}

fn parse_weight(s: &str) -> std::result::Result<f32, String> {
    let w: f32 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&w) {
        Ok(w)
    } else {
        Err(format!("{w} is outside [0, 1]"))
    }
}

/// Parse and execute, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

fn or_default(p: &Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| dir.join(name))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_feature(path: &Path) -> Result<Vec<f32>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        optimizer: match a.optimizer {
            OptimizerArg::Adam => OptimizerKind::default(),
            OptimizerArg::Sgd => OptimizerKind::Sgd,
        },
        hidden: a.hidden,
        sampler: SamplerConfig {
            walks_per_node: a.walks,
            walk_length: a.walk_length,
            fanouts: a.fanouts,
            max_degree: a.max_degree,
            negatives_per_positive: a.negatives,
            rng_seed: a.seed,
            ..SamplerConfig::default()
        },
        encoder: EncoderConfig {
            dropout: a.dropout,
            ..EncoderConfig::default()
        },
        regenerate_pairs: true,
        rng_seed: a.seed,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let dir = &cli.artifact_dir;
    let paths = ArtifactPaths::in_dir(dir);
    match &cli.command {
        Command::BuildGraph(a) => {
            let f = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
            let records = textio::read_images(BufReader::new(f))?;
            let d_in = records.first().map_or(0, |r| r.init_feature.len());
            let cfg = BuildConfig {
                k_neighbors: a.k,
                similarity_threshold: a.threshold,
                d_in,
                rng_seed: a.seed,
                tag_init_scale: a.tag_init_scale,
            };
            let g = build_graph(&records, &cfg)?;
            let out = a.output.clone().unwrap_or(paths.graph);
            formats::save_graph(&out, &g)?;
            log::info!(
                "wrote {} ({} nodes, {} edges)",
                out.display(),
                g.node_count(),
                g.edge_count()
            );
        }
        Command::Train(a) => {
            let g = formats::load_graph(&a.graph.clone().unwrap_or(paths.graph))?;
            let cfg = train_config(a);
            if let Some(p) = &a.pairs_dump {
                // Same pairs as the first training epoch.
                let sc = &cfg.sampler;
                let pairs = generate_pairs_on(
                    &cap_adjacency(&g, sc),
                    g.node_count(),
                    sc.walks_per_node,
                    sc.walk_length,
                    derive_seed(sc.rng_seed, 1),
                );
                textio::write_pairs(create(p)?, &g, &pairs)?;
            }
            let outcome = train_with::<f32>(&g, &cfg, |epoch, loss| {
                log::info!("epoch {epoch}: mean loss {loss:.6}");
            })?;
            formats::save_model(&a.output.clone().unwrap_or(paths.weights), &outcome.model)?;
            let mut w = create(&or_default(&a.loss_csv, dir, "loss.csv"))?;
            textio::write_loss_csv(&mut w, &outcome.epoch_losses)?;
            w.flush()?;
        }
        Command::Embed(a) => {
            let g = formats::load_graph(&a.graph.clone().unwrap_or(paths.graph))?;
            let model = formats::load_model(&a.weights.clone().unwrap_or(paths.weights))?;
            let table = embed_all(&g, &model)?;
            formats::save_embeddings(&a.output.clone().unwrap_or(paths.embeddings), &table)?;
        }
        Command::Query(a) => {
            let snap = Snapshot::load(&paths)?;
            let req = SearchRequest {
                image_key: a.image.image_key.clone(),
                feature: a.image.feature_file.as_deref().map(read_feature).transpose()?,
                tags: a.tags.clone(),
                visual_weight: a.visual_weight,
                k: Some(a.k),
                connectivity: Some(a.connectivity.into()),
            };
            print_json(&api::search(&snap, &req)?)?;
        }
        Command::PredictTags(a) => {
            let snap = Snapshot::load(&paths)?;
            let feature = a.image.feature_file.as_deref().map(read_feature).transpose()?;
            print_json(&api::predict_tags(
                &snap,
                a.image.image_key.as_deref(),
                feature,
                Some(a.k),
            )?)?;
        }
        Command::Eval(a) => {
            let f = File::open(&a.judgments).with_context(|| format!("opening {}", a.judgments.display()))?;
            let judgments = textio::read_judgments(BufReader::new(f))?;
            let scheme = match a.gain {
                GainArg::Exponential => GainScheme::Exponential,
                GainArg::Linear => GainScheme::Linear,
            };
            let report = textio::ReportJson::from(&evaluate(&judgments, &a.cutoffs, scheme)?);
            match &a.output {
                Some(p) => {
                    let mut w = create(p)?;
                    serde_json::to_writer_pretty(&mut w, &report)?;
                    w.write_all(b"\n")?;
                    w.flush()?;
                }
                None => print_json(&report)?,
            }
        }
        Command::Serve(a) => {
            let state = Arc::new(AppState::new(paths));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(SocketAddr::new(a.bind, a.port), state, a.ui_dir.clone()))?;
        }
        Command::Synth(a) => {
            let cfg = TwoClusters {
                per_cluster: a.per_cluster,
                dim: a.dim,
                offset: a.offset,
                seed: a.seed,
                ..TwoClusters::default()
            };
            let mut w = create(&a.output)?;
            textio::write_images(&mut w, &cfg.generate())?;
            w.flush()?;
        }
    }
    Ok(())
}
