//! Shared fixtures: a synthetic catalog with a model, index, judgment tasks and an
//! in-process server.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;

use ctl_cli::{load_snapshot, AppState, ServiceConfig};
use ctl_core::eval::judgment::{export_judgment_tasks, write_jsonl, JudgmentTask, Recommender};
use ctl_core::model::file_digest;
use ctl_core::outfit::{generate_synthetic_dataset, write_corpus, SynthConfig};
use ctl_core::retrieval::{
    build_inverted_index, catalog_from_outfits, filter_product_shot, write_catalog, CatalogItem, ComplementaryMap,
    Engine, EngineConfig, IndexBuildConfig, DEFAULT_PRODUCT_SHOT_THRESHOLD,
};
use ctl_core::train::{train, Method, TrainConfig, TrainInput};
use ctl_core::{Checkpoint, CheckpointMeta, CategoryVocab, FeatureStore, ModelParams, ModelShape, Outfit};
use tempfile::TempDir;
use tokio::sync::oneshot;

pub struct FixtureOptions {
    pub outfits: usize,
    pub seed: u64,
    /// `None` keeps the randomly initialized model.
    pub train_epochs: Option<usize>,
    pub map_text: Option<String>,
    pub judgment_queries: usize,
    pub non_product_fraction: f64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            outfits: 400,
            seed: 11,
            train_epochs: Some(1),
            map_text: None,
            judgment_queries: 6,
            non_product_fraction: 0.05,
        }
    }
}

pub struct Fixture {
    pub dir: TempDir,
    pub vocab: CategoryVocab,
    pub outfits: Vec<Outfit>,
    pub features: FeatureStore,
    pub catalog: Vec<CatalogItem>,
    pub checkpoint: PathBuf,
    pub config: ServiceConfig,
    pub tasks: Vec<JudgmentTask>,
    pub key: BTreeMap<String, String>,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Catalog ids that pass the product-shot filter, in catalog order.
    pub fn product_shots(&self) -> Vec<String> {
        self.catalog
            .iter()
            .filter(|c| filter_product_shot(&c.style_scores, DEFAULT_PRODUCT_SHOT_THRESHOLD))
            .map(|c| c.item_id.clone())
            .collect()
    }

    pub fn non_product_shot(&self) -> Option<String> {
        self.catalog
            .iter()
            .find(|c| !filter_product_shot(&c.style_scores, DEFAULT_PRODUCT_SHOT_THRESHOLD))
            .map(|c| c.item_id.clone())
    }

    /// A fresh engine over the fixture files, independent of any server state.
    pub fn engine(&self) -> Engine {
        load_snapshot(&self.config).expect("fixture snapshot").engine
    }
}

fn create(path: &std::path::Path) -> BufWriter<File> {
    BufWriter::new(File::create(path).expect("create fixture file"))
}

pub fn build_fixture(opts: FixtureOptions) -> Fixture {
    let dir = tempfile::tempdir().expect("tempdir");
    let vocab = CategoryVocab::default();
    let ds = generate_synthetic_dataset(
        &SynthConfig {
            n_outfits: opts.outfits,
            seed: opts.seed,
            ..Default::default()
        },
        &vocab,
    )
    .expect("synthetic dataset");
    let checkpoint = dir.path().join("model.ctlt");
    match opts.train_epochs {
        Some(epochs) => {
            let cfg = TrainConfig {
                epochs,
                seed: opts.seed,
                ..Default::default()
            };
            let input = TrainInput {
                outfits: &ds.outfits,
                features: &ds.features,
                vocab: &vocab,
            };
            train(Method::Triplet, input, &cfg, Some(&checkpoint)).expect("training");
        }
        None => {
            let params = ModelParams::init(ModelShape::new(ds.features.dim(), vocab.len()), 0.5, opts.seed)
                .expect("model init");
            let meta = CheckpointMeta::new("triplet", serde_json::json!({}), &vocab, &params);
            Checkpoint { params, meta }.save(&checkpoint).expect("save checkpoint");
        }
    }
    let ckpt = Checkpoint::load(&checkpoint).expect("load checkpoint");
    let digest = file_digest(&checkpoint).expect("digest");

    let catalog = catalog_from_outfits(&ds.outfits, &vocab, opts.non_product_fraction, opts.seed);
    write_catalog(create(&dir.path().join("catalog.jsonl")), &catalog).expect("catalog");
    ds.features.save(dir.path().join("features.ctlf")).expect("features");
    write_corpus(create(&dir.path().join("corpus.jsonl")), &ds.outfits, &vocab).expect("corpus");
    let index = build_inverted_index(
        &catalog,
        &ds.features,
        &ckpt.params,
        &vocab,
        &digest,
        &IndexBuildConfig::default(),
    )
    .expect("index");
    index.save(dir.path().join("index.ctli"), &vocab).expect("save index");

    let mut map = ComplementaryMap::with_curated_defaults(&vocab);
    if let Some(text) = &opts.map_text {
        std::fs::write(dir.path().join("complementary.txt"), text).expect("map file");
        map.apply(&ComplementaryMap::parse(text, &vocab).expect("map text"));
    }
    let engine = Engine::new(
        ckpt.params,
        vocab.clone(),
        map,
        index,
        catalog.clone(),
        ds.features.clone(),
        EngineConfig::default(),
    )
    .expect("engine");
    let queries: Vec<String> = catalog
        .iter()
        .filter(|c| filter_product_shot(&c.style_scores, DEFAULT_PRODUCT_SHOT_THRESHOLD))
        .take(opts.judgment_queries)
        .map(|c| c.item_id.clone())
        .collect();
    let methods: Vec<(&str, &dyn Recommender)> =
        vec![("triplet_cat", &engine as &dyn Recommender), ("contrastive", &engine as &dyn Recommender)];
    let export = export_judgment_tasks(&methods, &queries, 4, "fixture-salt");
    write_jsonl(create(&dir.path().join("tasks.jsonl")), &export.tasks).expect("tasks");
    std::fs::write(
        dir.path().join("key.json"),
        serde_json::to_vec(&export.key).expect("key json"),
    )
    .expect("key");

    let mut config = ServiceConfig::default();
    config.listen = "127.0.0.1:0".parse().unwrap();
    config.checkpoint = Some(checkpoint.clone());
    config.index = Some(dir.path().join("index.ctli"));
    config.features = Some(dir.path().join("features.ctlf"));
    config.catalog = Some(dir.path().join("catalog.jsonl"));
    config.judgment_tasks = Some(dir.path().join("tasks.jsonl"));
    config.judgment_key = Some(dir.path().join("key.json"));
    config.judgment_store = Some(dir.path().join("judgments.jsonl"));
    if opts.map_text.is_some() {
        config.complementary_map = Some(dir.path().join("complementary.txt"));
    }

    Fixture {
        dir,
        vocab,
        outfits: ds.outfits,
        features: ds.features,
        catalog,
        checkpoint,
        config,
        tasks: export.tasks,
        key: export.key,
    }
}

/// A server on an ephemeral port; shuts down when dropped.
pub struct TestServer {
    pub base: String,
    pub state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl TestServer {
    /// Starts serving; with `load` the engine snapshot is installed first.
    pub async fn start(config: ServiceConfig, load: bool) -> Self {
        let state = Arc::new(AppState::new(config).expect("app state"));
        if load {
            let worker = state.clone();
            tokio::task::spawn_blocking(move || worker.reload())
                .await
                .unwrap()
                .expect("initial load");
        }
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel::<()>();
        let handle = tokio::spawn(ctl_cli::service::serve(listener, state.clone(), async move {
            let _ = rx.await;
        }));
        Self {
            base,
            state,
            shutdown: Some(tx),
            handle: Some(handle),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            h.await.unwrap().unwrap();
        }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// GET returning status and raw body bytes.
pub async fn get(client: &reqwest::Client, url: &str) -> (u16, Vec<u8>) {
    let resp = client.get(url).send().await.expect("request");
    let status = resp.status().as_u16();
    (status, resp.bytes().await.expect("body").to_vec())
}

pub async fn post(client: &reqwest::Client, url: &str, body: &[u8]) -> (u16, Vec<u8>) {
    let resp = client
        .post(url)
        .header("content-type", "application/json")
        .body(body.to_vec())
        .send()
        .await
        .expect("request");
    let status = resp.status().as_u16();
    (status, resp.bytes().await.expect("body").to_vec())
}

pub fn json(body: &[u8]) -> serde_json::Value {
    serde_json::from_slice(body).unwrap_or_else(|e| panic!("invalid json {e}: {}", String::from_utf8_lossy(body)))
}

pub async fn get_query(client: &reqwest::Client, url: &str, query: &[(&str, &str)]) -> (u16, Vec<u8>) {
    let resp = client.get(url).query(query).send().await.expect("request");
    let status = resp.status().as_u16();
    (status, resp.bytes().await.expect("body").to_vec())
}
