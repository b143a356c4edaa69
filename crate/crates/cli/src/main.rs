use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctl_cli::{AppState, ServiceConfig};
use ctl_core::eval::ablation::{evaluate_model, run_ablation, AblationPlan, FeatureSet, MethodSpec};
use ctl_core::eval::judgment::{compute_precision, export_judgment_tasks, read_jsonl, write_jsonl, Recommender};
use ctl_core::eval::{CorpusMode, EvalConfig, EvalTable};
use ctl_core::model::file_digest;
use ctl_core::outfit::{
    dataset_stats, generate_synthetic_dataset, outfit_to_raw, read_corpus, read_raw_images, read_released_dataset,
    run_pipeline, split_dataset, write_corpus, write_raw_images, CleanupConfig, SynthConfig,
};
use ctl_core::retrieval::{
    build_inverted_index, catalog_from_outfits, filter_product_shot, read_catalog, write_catalog, CatalogItem,
    ComplementaryMap, Engine, EngineConfig, IndexBuildConfig, InvertedIndex, DEFAULT_PRODUCT_SHOT_THRESHOLD,
};
use ctl_core::train::{train, write_loss_curve, TrainConfig, TrainError, TrainInput};
use ctl_core::{Checkpoint, CategoryVocab, FeatureStore, Outfit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "ctl", version, about = "Complete-the-look pipeline and service")]
struct Cli {
    /// Category vocabulary file, one name per line (default: the built-in 13 categories).
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean raw detections into an outfit corpus.
    Clean(CleanArgs),
    /// Generate a synthetic corpus, feature store and catalog.
    Synth(SynthArgs),
    /// Split a corpus into train and test by hashed outfit id.
    Split(SplitArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
    /// Train a style-embedding model.
    Train(TrainArgs),
    /// Build the per-category retrieval index for a catalog.
    Index(IndexArgs),
    /// Compute Recall@K and FITB for a checkpoint.
    Eval(EvalArgs),
    /// Train and evaluate a grid of methods, feature sets and sizes.
    Ablate(AblateArgs),
    /// Export blinded judgment tasks for one or more engines.
    ExportJudgments(ExportArgs),
    /// Compute per-method precision from judgments.
    Precision(PrecisionArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    /// One JSON image record per line.
    Jsonl,
    /// Released tabular file (CSV or TSV, one row per item).
    Released,
}

#[derive(Args)]
struct CleanArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: InputFormat,
    #[arg(long)]
    output: PathBuf,
    /// Rejection counts as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    polyvore_threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    nms_iou: f64,
    #[arg(long)]
    no_monochrome_filter: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    outfits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    noise: f32,
    #[arg(long, default_value_t = 64)]
    feature_dim: usize,
    #[arg(long, default_value_t = 16)]
    style_dim: usize,
    #[arg(long)]
    category_groups: Option<usize>,
    /// Fraction of catalog items given a low ProductShot score.
    #[arg(long, default_value_t = 0.05)]
    non_product_fraction: f64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// proxy, contrastive, contrastive_16, triplet or triplet_cat.
    #[arg(long, default_value = "triplet_cat")]
    method: String,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Full training config as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    loss_curve: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.9)]
    product_shot_threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerCategory,
    AllCategories,
}

#[derive(Args, Clone)]
struct EvalOpts {
    #[arg(long, value_enum, default_value = "per-category")]
    mode: Mode,
    #[arg(long, default_value_t = 200)]
    corpus_size: usize,
    #[arg(long, default_value_t = 5)]
    outfit_size: usize,
    #[arg(long, default_value_t = 0)]
    eval_seed: u64,
}

impl EvalOpts {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            mode: match self.mode {
                Mode::PerCategory => CorpusMode::PerCategory,
                Mode::AllCategories => CorpusMode::AllCategories,
            },
            corpus_size: self.corpus_size,
            outfit_size: self.outfit_size,
            seed: self.eval_seed,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Test corpus.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    opts: EvalOpts,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Feature sets as NAME=PATH; repeatable.
    #[arg(long = "features", required = true)]
    features: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "proxy,contrastive,contrastive_16,triplet,triplet_cat")]
    methods: Vec<String>,
    /// Training-set sizes (prefixes of the training corpus); default is the whole corpus.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    opts: EvalOpts,
}

#[derive(Args)]
struct ExportArgs {
    /// Engines as NAME=CHECKPOINT,INDEX; repeatable.
    #[arg(long = "method", required = true)]
    methods: Vec<String>,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Query item ids, one per line; otherwise a seeded sample of the catalog.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 120)]
    num_queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long)]
    salt: String,
    #[arg(long)]
    tasks_out: PathBuf,
    /// Tag-to-method key; keep it away from raters.
    #[arg(long)]
    key_out: PathBuf,
    #[arg(long)]
    complementary_map: Option<PathBuf>,
}

#[derive(Args)]
struct PrecisionArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    judgments: PathBuf,
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// key = value config file; CTL_* environment variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let body = serde_json::json!({ "error": format!("{e:#}") });
        eprintln!("{body}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let vocab = match &cli.vocab {
        Some(p) => CategoryVocab::from_lines(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => CategoryVocab::default(),
    };
    match cli.command {
        Command::Clean(a) => clean(a, &vocab),
        Command::Synth(a) => synth(a, &vocab),
        Command::Split(a) => split(a, &vocab),
        Command::Stats(a) => stats(a, &vocab),
        Command::Train(a) => train_cmd(a, &vocab),
        Command::Index(a) => index(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a, &vocab),
        Command::ExportJudgments(a) => export(a),
        Command::Precision(a) => precision(a),
        Command::Serve(a) => serve(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_corpus(path: &Path, vocab: &CategoryVocab) -> Result<Vec<Outfit>> {
    read_corpus(open(path)?, vocab).with_context(|| format!("reading corpus {}", path.display()))
}

fn load_features(path: &Path) -> Result<FeatureStore> {
    FeatureStore::load(path).with_context(|| format!("reading features {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, CategoryVocab)> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let vocab = CategoryVocab::new(ckpt.meta.vocab.iter())?;
    Ok((ckpt, vocab))
}

fn clean(a: CleanArgs, vocab: &CategoryVocab) -> Result<()> {
    let cfg = CleanupConfig {
        polyvore_threshold: a.polyvore_threshold,
        nms_iou: a.nms_iou,
        monochrome_filter: !a.no_monochrome_filter,
        ..Default::default()
    };
    let (out, unknown) = match a.format {
        InputFormat::Jsonl => (run_pipeline(read_raw_images(open(&a.input)?, vocab), &cfg)?, BTreeMap::new()),
        InputFormat::Released => {
            let ds = read_released_dataset(&a.input, vocab)?;
            (run_pipeline(ds.images.into_iter().map(Ok), &cfg)?, ds.unknown_categories)
        }
    };
    write_corpus(create(&a.output)?, &out.outfits, vocab)?;
    let rejects: BTreeMap<String, usize> = out.rejects.iter().map(|(r, n)| (format!("{r:?}"), *n)).collect();
    if let Some(p) = &a.report {
        write_json(
            p,
            &serde_json::json!({
                "outfits": out.outfits.len(),
                "rejects": rejects,
                "malformed": out.malformed,
                "unknown_categories": unknown,
            }),
        )?;
    }
    println!("kept {} outfits, malformed {}", out.outfits.len(), out.malformed);
    for (r, n) in &rejects {
        println!("  rejected {r}: {n}");
    }
    Ok(())
}

fn synth(a: SynthArgs, vocab: &CategoryVocab) -> Result<()> {
    let cfg = SynthConfig {
        n_outfits: a.outfits,
        feature_dim: a.feature_dim,
        style_dim: a.style_dim,
        noise: a.noise,
        seed: a.seed,
        category_groups: a.category_groups,
        ..Default::default()
    };
    let ds = generate_synthetic_dataset(&cfg, vocab)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_corpus(create(&a.out_dir.join("corpus.jsonl"))?, &ds.outfits, vocab)?;
    let raw: Vec<_> = ds.outfits.iter().map(outfit_to_raw).collect();
    let mut w = create(&a.out_dir.join("raw.jsonl"))?;
    write_raw_images(&mut w, &raw, vocab)?;
    w.flush()?;
    ds.features.save(a.out_dir.join("features.ctlf"))?;
    let catalog = catalog_from_outfits(&ds.outfits, vocab, a.non_product_fraction, a.seed);
    write_catalog(create(&a.out_dir.join("catalog.jsonl"))?, &catalog)?;
    write_json(&a.out_dir.join("synth.json"), &cfg)?;
    println!(
        "wrote {} outfits, {} feature vectors, {} catalog items to {}",
        ds.outfits.len(),
        ds.features.len(),
        catalog.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn split(a: SplitArgs, vocab: &CategoryVocab) -> Result<()> {
    let outfits = load_corpus(&a.input, vocab)?;
    let (train, test) = split_dataset(&outfits, a.holdout, a.seed)?;
    write_corpus(create(&a.train)?, &train, vocab)?;
    write_corpus(create(&a.test)?, &test, vocab)?;
    println!("train {} outfits, test {} outfits", train.len(), test.len());
    Ok(())
}

fn stats(a: StatsArgs, vocab: &CategoryVocab) -> Result<()> {
    let s = dataset_stats(&load_corpus(&a.input, vocab)?, vocab);
    if let Some(p) = &a.output {
        write_json(p, &s)?;
    }
    print!("{}", s.to_table());
    Ok(())
}

fn train_cmd(a: TrainArgs, vocab: &CategoryVocab) -> Result<()> {
    let spec = MethodSpec::parse(&a.method)?;
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => serde_json::from_reader(open(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::default(),
    };
    cfg = spec.apply(&cfg);
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.adam.lr = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let outfits = load_corpus(&a.corpus, vocab)?;
    let features = load_features(&a.features)?;
    let input = TrainInput {
        outfits: &outfits,
        features: &features,
        vocab,
    };
    let outcome = match train(spec.method, input, &cfg, Some(&a.output)) {
        Ok(o) => o,
        Err(TrainError::Diverged { epoch, reason, curve, .. }) => {
            if let Some(p) = &a.loss_curve {
                write_loss_curve(create(p)?, &curve)?;
            }
            bail!(
                "training diverged in epoch {epoch}: {reason}; last good parameters kept in {}",
                a.output.display()
            );
        }
        Err(TrainError::Core(e)) => return Err(e.into()),
    };
    if let Some(p) = &a.loss_curve {
        write_loss_curve(create(p)?, &outcome.curve)?;
    }
    for e in &outcome.curve {
        println!("epoch {:>3}  loss {:.5}  category {:.5}  {:.1}s", e.epoch, e.loss, e.category_loss, e.wall_seconds);
    }
    println!("checkpoint {} ({})", a.output.display(), file_digest(&a.output)?);
    Ok(())
}

fn index(a: IndexArgs) -> Result<()> {
    let (ckpt, vocab) = load_checkpoint(&a.checkpoint)?;
    let digest = file_digest(&a.checkpoint)?;
    let catalog = read_catalog(open(&a.catalog)?)?;
    let features = load_features(&a.features)?;
    let cfg = IndexBuildConfig {
        product_shot_threshold: a.product_shot_threshold,
        seed: a.seed,
        ..Default::default()
    };
    let idx = build_inverted_index(&catalog, &features, &ckpt.params, &vocab, &digest, &cfg)?;
    idx.save(&a.output, &vocab)?;
    let m = &idx.meta;
    println!(
        "indexed {} of {} catalog items ({} not product shots, {} missing features, {} label disagreements)",
        m.indexed, m.catalog_items, m.filtered_not_product_shot, m.skipped_missing_features, m.label_disagreements
    );
    for (c, ann) in &idx.categories {
        println!("  {:<22} {:>7} items  {:>4} partitions", vocab.name(*c), ann.len(), ann.partitions());
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (ckpt, vocab) = load_checkpoint(&a.checkpoint)?;
    let test = load_corpus(&a.corpus, &vocab)?;
    let features = load_features(&a.features)?;
    let report = evaluate_model(&ckpt.meta.method, &ckpt.params, &test, &features, &a.opts.config())?;
    if let Some(p) = &a.output {
        write_json(p, &report)?;
    }
    print!("{}", EvalTable { rows: vec![report.clone()] }.to_text());
    println!(
        "{} recall corpora ({} skipped), {} FITB questions ({} skipped)",
        report.recall_corpora, report.recall_skipped, report.fitb_questions, report.fitb_skipped
    );
    Ok(())
}

fn ablate(a: AblateArgs, vocab: &CategoryVocab) -> Result<()> {
    let train_o = load_corpus(&a.train, vocab)?;
    let test_o = load_corpus(&a.test, vocab)?;
    let mut stores = Vec::new();
    for spec in &a.features {
        let (name, path) = spec
            .split_once('=')
            .with_context(|| format!("feature set {spec:?} must be NAME=PATH"))?;
        stores.push((name.to_string(), load_features(Path::new(path))?));
    }
    let methods = a.methods.iter().map(|m| MethodSpec::parse(m)).collect::<Result<Vec<_>, _>>()?;
    let plan = AblationPlan {
        methods,
        feature_sets: stores
            .iter()
            .map(|(name, store)| FeatureSet {
                name: name.clone(),
                store,
            })
            .collect(),
        dataset_sizes: if a.sizes.is_empty() { vec![train_o.len()] } else { a.sizes.clone() },
        train_outfits: &train_o,
        test_outfits: &test_o,
        vocab,
        train: TrainConfig {
            epochs: a.epochs,
            seed: a.seed,
            ..Default::default()
        },
        eval: a.opts.config(),
    };
    let table = run_ablation(&plan);
    if let Some(p) = &a.output {
        write_json(p, &table)?;
    }
    print!("{}", table.to_text());
    Ok(())
}

fn build_engine(
    checkpoint: &Path,
    index: &Path,
    catalog: &[CatalogItem],
    features: &FeatureStore,
    map_path: Option<&Path>,
) -> Result<Engine> {
    let (ckpt, vocab) = load_checkpoint(checkpoint)?;
    let idx = InvertedIndex::load(index, &vocab).with_context(|| format!("reading index {}", index.display()))?;
    if idx.meta.checkpoint_digest != file_digest(checkpoint)? {
        bail!("index {} was not built from {}", index.display(), checkpoint.display());
    }
    let mut map = ComplementaryMap::with_curated_defaults(&vocab);
    if let Some(p) = map_path {
        map.apply(&ComplementaryMap::parse(&std::fs::read_to_string(p)?, &vocab)?);
    }
    Ok(Engine::new(
        ckpt.params,
        vocab,
        map,
        idx,
        catalog.to_vec(),
        features.clone(),
        EngineConfig::default(),
    )?)
}

fn export(a: ExportArgs) -> Result<()> {
    let catalog = read_catalog(open(&a.catalog)?)?;
    let features = load_features(&a.features)?;
    let mut engines = Vec::new();
    for spec in &a.methods {
        let (name, paths) = spec
            .split_once('=')
            .with_context(|| format!("method {spec:?} must be NAME=CHECKPOINT,INDEX"))?;
        let (ckpt, idx) = paths
            .split_once(',')
            .with_context(|| format!("method {spec:?} must be NAME=CHECKPOINT,INDEX"))?;
        let engine = build_engine(Path::new(ckpt), Path::new(idx), &catalog, &features, a.complementary_map.as_deref())?;
        engines.push((name.to_string(), engine));
    }
    let queries: Vec<String> = match &a.queries {
        Some(p) => std::fs::read_to_string(p)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        None => sample_queries(&catalog, a.num_queries, a.seed),
    };
    let methods: Vec<(&str, &dyn Recommender)> = engines.iter().map(|(n, e)| (n.as_str(), e as &dyn Recommender)).collect();
    let export = export_judgment_tasks(&methods, &queries, a.k, &a.salt);
    write_jsonl(create(&a.tasks_out)?, &export.tasks)?;
    write_json(&a.key_out, &export.key)?;
    println!(
        "{} tasks for {} queries x {} methods; {} query failures",
        export.tasks.len(),
        queries.len(),
        methods.len(),
        export.failures.len()
    );
    for (m, q, e) in export.failures.iter().take(5) {
        println!("  {m} {q}: {e}");
    }
    Ok(())
}

/// Seeded sample of product-shot catalog items, sorted by id.
fn sample_queries(catalog: &[CatalogItem], n: usize, seed: u64) -> Vec<String> {
    let eligible: Vec<&str> = catalog
        .iter()
        .filter(|c| filter_product_shot(&c.style_scores, DEFAULT_PRODUCT_SHOT_THRESHOLD))
        .map(|c| c.item_id.as_str())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<String> = rand::seq::index::sample(&mut rng, eligible.len(), n.min(eligible.len()))
        .into_iter()
        .map(|i| eligible[i].to_string())
        .collect();
    picked.sort();
    picked
}

fn precision(a: PrecisionArgs) -> Result<()> {
    let tasks = read_jsonl(open(&a.tasks)?)?;
    let records = read_jsonl(open(&a.judgments)?)?;
    let key: Option<BTreeMap<String, String>> = match &a.key {
        Some(p) => Some(serde_json::from_reader(open(p)?)?),
        None => None,
    };
    let report = compute_precision(&records, &tasks, key.as_ref())?;
    if let Some(p) = &a.output {
        write_json(p, &report)?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::default();
    if let Some(p) = &a.config {
        cfg.apply_text(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?;
    }
    cfg.apply_env(std::env::vars())?;
    if let Some(l) = &a.listen {
        cfg.set("listen", l)?;
    }
    cfg.validate()?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
        println!("listening on {}", listener.local_addr()?);
        let state = Arc::new(AppState::new(cfg)?);
        let loader = state.clone();
        tokio::task::spawn_blocking(move || match loader.reload() {
            Ok(snap) => println!(
                "engine loaded: checkpoint {} with {} indexed items",
                snap.checkpoint_sha256,
                snap.engine.index().len()
            ),
            Err(e) => eprintln!("{}", serde_json::json!({ "error": format!("initial load failed: {e}") })),
        });
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        ctl_cli::service::serve(listener, state, shutdown).await?;
        Ok(())
    })
}
