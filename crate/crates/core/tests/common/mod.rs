#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use scenetag::backend::{
    BackendConfig, BackendError, CallError, Endpoint, InferenceRequest, MockBackend, RequestContext, VisionBackend,
};
use scenetag::cli::BackendFactory;
use scenetag::dataset::{load_manifest, Manifest};
use scenetag::report::{read_latency_csv, read_scores_csv, LatencyRow, ModelCategoryCell};
use scenetag::{builtin_schema, CategorySchema};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn scene_manifest_path() -> PathBuf {
    fixtures().join("scenes").join("manifest.jsonl")
}

pub fn scene_manifest(schema: &CategorySchema) -> Manifest {
    let path = scene_manifest_path();
    let mut m = load_manifest(BufReader::new(File::open(&path).unwrap()), schema).unwrap();
    m.resolve_paths(path.parent().unwrap());
    m
}

pub fn schema_and_scenes() -> (CategorySchema, Manifest) {
    let schema = builtin_schema();
    let m = scene_manifest(&schema);
    (schema, m)
}

pub fn published_best_cells() -> Vec<ModelCategoryCell> {
    read_scores_csv(File::open(fixtures().join("published_best_scores.csv")).unwrap()).unwrap()
}

pub fn published_latency_rows() -> Vec<LatencyRow> {
    read_latency_csv(File::open(fixtures().join("published_latency.csv")).unwrap()).unwrap()
}

/// Best model per category as published: (category, best model, accuracy %, F1 %).
pub const PUBLISHED_BEST: [(&str, &str, f64, f64); 16] = [
    ("Land use", "Llava-1.6-7(7B)", 66.5, 51.9),
    ("Lanemarks", "Composer-HD(8B)", 70.8, 65.8),
    ("Number of lanes", "Llava-1.6-7(7B)", 49.4, 28.6),
    ("Number of VRU", "Composer-HD(8B)", 68.9, 54.1),
    ("Person", "Llava-1.6-13(13B)", 90.7, 90.6),
    ("Road condition", "CogVLM(18B)", 99.2, 86.6),
    ("Road intersection", "Composer-HD(8B)", 75.5, 73.3),
    ("Street configuration", "Deepseek(8B)", 63.0, 57.0),
    ("Time of day", "Llava-1.6-13(13B)", 90.7, 54.1),
    ("Traffic light", "CogAgent(18B)", 92.6, 86.6),
    ("Traffic scene", "Llava-1.6-13(13B)", 83.7, 52.2),
    ("Traffic sign", "Llava-1.6-7(7B)", 77.8, 77.5),
    ("Urban environment", "Llava-1.5(13B)", 89.1, 67.9),
    ("Vehicle maneuver", "Llava-1.6-34(34B)", 73.9, 35.4),
    ("VIB", "Composer-HD-336", 88.7, 81.6),
    ("Weather", "Composer-HD(8B)", 76.7, 37.5),
];

/// Counts calls and tracks how many are outstanding at once.
#[derive(Default)]
pub struct Probe {
    pub calls: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub peak: AtomicUsize,
}

impl Probe {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

/// Wraps a transport with a [`Probe`] and an optional random delay.
pub struct Probed {
    pub inner: Arc<dyn VisionBackend>,
    pub probe: Arc<Probe>,
    pub max_delay_ms: u64,
    rng: Mutex<rand::rngs::StdRng>,
}

impl Probed {
    pub fn new(inner: Arc<dyn VisionBackend>, probe: Arc<Probe>, max_delay_ms: u64, seed: u64) -> Self {
        Self { inner, probe, max_delay_ms, rng: Mutex::new(rand::rngs::StdRng::seed_from_u64(seed)) }
    }
}

impl VisionBackend for Probed {
    fn complete(&self, request: &InferenceRequest, ctx: &RequestContext<'_>) -> Result<String, CallError> {
        self.probe.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.probe.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.probe.peak.fetch_max(now, Ordering::SeqCst);
        if self.max_delay_ms > 0 {
            let ms = self.rng.lock().unwrap().gen_range(0..=self.max_delay_ms);
            std::thread::sleep(Duration::from_millis(ms));
        }
        let out = self.inner.complete(request, ctx);
        self.probe.in_flight.fetch_sub(1, Ordering::SeqCst);
        out
    }
}

pub fn probed_endpoint(spec: &str, manifest: Option<&Manifest>, max_in_flight: usize, max_delay_ms: u64) -> (Endpoint, Arc<Probe>) {
    let mut cfg = BackendConfig::mock(spec);
    cfg.max_in_flight = max_in_flight;
    let probe = Arc::new(Probe::default());
    let inner = Arc::new(MockBackend::from_spec(spec, manifest).unwrap());
    let ep = Endpoint::new(cfg, Arc::new(Probed::new(inner, probe.clone(), max_delay_ms, 11))).unwrap();
    (ep, probe)
}

/// CLI backend factory that routes every transport through one shared probe.
#[derive(Default)]
pub struct ProbeFactory {
    pub probe: Arc<Probe>,
}

impl BackendFactory for ProbeFactory {
    fn build(&self, config: BackendConfig, manifest: Option<&Manifest>) -> Result<Endpoint, BackendError> {
        let inner = Arc::new(MockBackend::from_spec(&config.base_url, manifest)?);
        Endpoint::new(config, Arc::new(Probed::new(inner, self.probe.clone(), 0, 0)))
    }
}

/// Reference tally of accuracy and full-vocabulary macro-F1, computed by
/// counting TP/FP/FN per class directly from the label vectors.
pub fn brute_force_scores(truth: &[usize], pred: &[usize], n_classes: usize) -> (f64, f64) {
    let n = truth.len();
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    let mut f1_sum = 0.0;
    for c in 0..n_classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for k in 0..n {
            match (truth[k] == c, pred[k] == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1_sum += (2 * tp) as f64 / denom as f64;
        }
    }
    (correct as f64 / n as f64, f1_sum / n_classes as f64)
}
