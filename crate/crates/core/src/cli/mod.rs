//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 domain failure (validation, evaluation, nothing
//! to do), 2 environment failure (I/O, unusable backend configuration).

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{parse_backend_flag, RunConfig, RunConfigFile, SchemaSource, Shifts};

use crate::backend::{
    bench_latency, run_campaign, run_jobs, BackendConfig, BackendError, CampaignOptions, Endpoint, Job,
    ResponseCache,
};
use crate::dataset::{adapt_bdd100k, load_manifest, manifest_violations, Manifest};
use crate::metrics::{mean_scores, score_category, shift_consistency, write_per_tag_csv, write_scores_csv, MetricsError};
use crate::record::{read_jsonl, write_jsonl, PredictionRecord};
use crate::report::{
    export_plot_data, read_latency_csv, read_scores_csv, render_tables, write_latency_csv, LatencyRow,
    ModelCategoryCell, ReportBundle, TableFormat,
};
use crate::schema::{builtin_schema, load_schema, validate_schema, CategorySchema, SchemaError};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const PARSE_FAILURES_FILE: &str = "parse_failures.log";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Env(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Env(_) => 2,
        }
    }
}

fn env_err(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Env(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "scenetag", version, about = "Tag traffic-scene images with vision-language models and score the results")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Schema file, or "builtin"
    #[arg(long, global = true)]
    pub schema: Option<String>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// mock:<kind> or <model>@<base_url>; repeatable, replaces configured backends
    #[arg(long, global = true)]
    pub backend: Vec<String>,
    #[arg(long, global = true, conflicts_with = "lenient")]
    pub strict: bool,
    /// Map unparseable answers to the category's fallback tag
    #[arg(long, global = true)]
    pub lenient: bool,
    /// none, all, or a comma-separated list
    #[arg(long, global = true)]
    pub shifts: Option<Shifts>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Downscale images so the long side is at most this many pixels
    #[arg(long, global = true)]
    pub resize: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the schema and manifest
    Validate,
    /// Query every backend for every sample and category
    Categorize,
    /// Score a results file against the manifest
    Evaluate {
        /// Defaults to <out>/results.jsonl
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Measure answer stability under rotation of the tag order
    ShiftTest,
    /// Time single-image requests per backend
    Bench {
        image: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
    /// Convert a BDD100K label file into a manifest
    AdaptBdd100k {
        label_file: PathBuf,
        image_root: PathBuf,
        out_manifest: PathBuf,
    },
    /// Build comparison tables from score and latency CSVs
    Report {
        #[arg(long, required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        latency: Vec<PathBuf>,
    },
}

/// Turns a backend config into a ready endpoint. Swappable so callers can
/// wrap or instrument the transports.
pub trait BackendFactory {
    fn build(&self, config: BackendConfig, manifest: Option<&Manifest>) -> Result<Endpoint, BackendError>;
}

pub struct DefaultFactory;

impl BackendFactory for DefaultFactory {
    fn build(&self, config: BackendConfig, manifest: Option<&Manifest>) -> Result<Endpoint, BackendError> {
        Endpoint::from_config(config, manifest)
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli, factory: &dyn BackendFactory) -> i32 {
    match execute(cli, factory) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, factory: &dyn BackendFactory) -> Result<i32, CliError> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Validate => cmd_validate(&cfg),
        Command::Categorize => cmd_categorize(&cfg, factory),
        Command::Evaluate { results } => {
            let path = results.unwrap_or_else(|| cfg.output_dir.join(RESULTS_FILE));
            cmd_evaluate(&cfg, &path)
        }
        Command::ShiftTest => cmd_shift_test(&cfg, factory),
        Command::Bench { image, runs } => cmd_bench(&cfg, factory, &image, runs),
        Command::AdaptBdd100k { label_file, image_root, out_manifest } => {
            cmd_adapt_bdd100k(&cfg, &label_file, &image_root, &out_manifest)
        }
        Command::Report { scores, latency } => cmd_report(&cfg, &scores, &latency),
    }
}

fn load_schema_from(cfg: &RunConfig) -> Result<CategorySchema, CliError> {
    match &cfg.schema {
        SchemaSource::Builtin => Ok(builtin_schema()),
        SchemaSource::File(path) => {
            let f = File::open(path).map_err(env_err(format!("cannot open schema {}", path.display())))?;
            load_schema(BufReader::new(f)).map_err(|e| match e {
                SchemaError::Io(e) => CliError::Env(format!("{}: {e}", path.display())),
                other => CliError::Domain(format!("{}: {other}", path.display())),
            })
        }
    }
}

fn manifest_path(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.manifest_path
        .as_deref()
        .ok_or_else(|| CliError::Domain("no manifest given (--manifest or config \"manifest\")".into()))
}

fn load_manifest_from(cfg: &RunConfig, schema: &CategorySchema) -> Result<Manifest, CliError> {
    let path = manifest_path(cfg)?;
    let f = File::open(path).map_err(env_err(format!("cannot open manifest {}", path.display())))?;
    let mut m = load_manifest(BufReader::new(f), schema)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    if let Some(dir) = path.parent() {
        m.resolve_paths(dir);
    }
    m.dataset_name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(m)
}

fn create_output_dir(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_dir).map_err(env_err(format!("cannot create {}", cfg.output_dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(env_err(format!("cannot write {}", path.display())))
}

fn build_endpoints(
    cfg: &RunConfig,
    factory: &dyn BackendFactory,
    manifest: Option<&Manifest>,
) -> Result<Vec<Endpoint>, CliError> {
    if cfg.backends.is_empty() {
        return Err(CliError::Env("no backends configured (--backend or config \"backends\")".into()));
    }
    cfg.backends
        .iter()
        .map(|b| factory.build(b.clone(), manifest).map_err(|e| CliError::Env(e.to_string())))
        .collect()
}

fn open_cache(cfg: &RunConfig) -> Result<ResponseCache, CliError> {
    ResponseCache::on_disk(&cfg.cache_dir).map_err(env_err(format!("cannot create cache {}", cfg.cache_dir.display())))
}

fn campaign_options(cfg: &RunConfig) -> CampaignOptions {
    CampaignOptions {
        template: cfg.template.clone(),
        strict: cfg.strict,
        resize_long_side: cfg.resize_long_side,
    }
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<i32, CliError> {
    let schema = match &cfg.schema {
        SchemaSource::Builtin => builtin_schema(),
        SchemaSource::File(path) => {
            let text = fs::read(path).map_err(env_err(format!("cannot read schema {}", path.display())))?;
            match serde_json::from_slice::<CategorySchema>(&text) {
                Ok(s) => s,
                Err(e) => {
                    println!("schema {}: {e}", path.display());
                    return Ok(1);
                }
            }
        }
    };
    let mut problems: Vec<String> = validate_schema(&schema).iter().map(|v| format!("schema: {v}")).collect();

    if let Some(path) = &cfg.manifest_path {
        let f = File::open(path).map_err(env_err(format!("cannot open manifest {}", path.display())))?;
        match manifest_violations(BufReader::new(f), &schema) {
            Ok(v) => problems.extend(v.iter().map(|e| format!("manifest: {e}"))),
            Err(e) => problems.push(format!("manifest: {e}")),
        }
    }
    for p in &problems {
        println!("{p}");
    }
    if problems.is_empty() {
        println!("ok: {} categories", schema.categories.len());
        Ok(0)
    } else {
        println!("{} problem(s)", problems.len());
        Ok(1)
    }
}

pub fn cmd_categorize(cfg: &RunConfig, factory: &dyn BackendFactory) -> Result<i32, CliError> {
    let schema = load_schema_from(cfg)?;
    let manifest = load_manifest_from(cfg, &schema)?;
    let endpoints = build_endpoints(cfg, factory, Some(&manifest))?;
    let cache = open_cache(cfg)?;
    create_output_dir(cfg)?;
    let options = campaign_options(cfg);

    let mut all = Vec::new();
    let mut unreachable = Vec::new();
    for ep in &endpoints {
        let records = run_campaign(ep, &manifest.samples, &schema, &options, 0, &cache)
            .map_err(|e| CliError::Domain(e.to_string()))?;
        let answered = records.iter().filter(|r| r.raw_text.is_some()).count();
        let parsed = records.iter().filter(|r| r.tag.is_some()).count();
        let cached = records.iter().filter(|r| r.from_cache).count();
        println!(
            "{}: {} requests, {answered} answered ({cached} cached), {parsed} parsed",
            ep.config.name,
            records.len()
        );
        if !records.is_empty() && answered == 0 {
            unreachable.push(ep.config.name.clone());
        }
        all.extend(records);
    }

    let results_path = cfg.output_dir.join(RESULTS_FILE);
    let mut out = BufWriter::new(File::create(&results_path).map_err(env_err(results_path.display()))?);
    write_jsonl(&mut out, &all).and_then(|_| out.flush()).map_err(env_err(results_path.display()))?;

    let mut failures = String::new();
    for r in all.iter().filter(|r| r.error.is_some()) {
        failures.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.model,
            r.sample_id,
            r.category,
            r.error.as_deref().unwrap_or_default()
        ));
    }
    write_file(&cfg.output_dir.join(PARSE_FAILURES_FILE), failures.as_bytes())?;

    if unreachable.is_empty() {
        Ok(0)
    } else {
        eprintln!("unreachable backend(s): {}", unreachable.join(", "));
        Ok(1)
    }
}

fn to_cell(model: &str, s: &crate::metrics::CategoryScores) -> ModelCategoryCell {
    ModelCategoryCell {
        model: model.to_string(),
        category: s.category_name.clone(),
        accuracy: s.accuracy * 100.0,
        macro_f1: s.macro_f1 * 100.0,
    }
}

fn write_report(cfg: &RunConfig, bundle: &ReportBundle) -> Result<(), CliError> {
    write_file(&cfg.output_dir.join("report.md"), &render_tables(bundle, TableFormat::Markdown))?;
    write_file(&cfg.output_dir.join("report.csv"), &render_tables(bundle, TableFormat::Csv))?;
    write_file(&cfg.output_dir.join("plotdata.csv"), &export_plot_data(bundle))
}

pub fn cmd_evaluate(cfg: &RunConfig, results_path: &Path) -> Result<i32, CliError> {
    let schema = load_schema_from(cfg)?;
    let manifest = load_manifest_from(cfg, &schema)?;
    let f = File::open(results_path).map_err(env_err(format!("cannot open results {}", results_path.display())))?;
    let records = read_jsonl(BufReader::new(f))
        .map_err(|e| CliError::Domain(format!("{}: {e}", results_path.display())))?;
    if records.is_empty() {
        return Err(CliError::Domain(format!("{} holds no results", results_path.display())));
    }

    let mut models: Vec<&str> = Vec::new();
    for r in &records {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut scored = Vec::new();
    for model in &models {
        let mine: Vec<PredictionRecord> = records.iter().filter(|r| r.model == *model).cloned().collect();
        let mut per_category = Vec::new();
        for category in &schema.categories {
            if !mine.iter().any(|r| r.category == category.name) {
                continue;
            }
            match score_category(&mine, &manifest, category) {
                Ok(s) => per_category.push(s),
                Err(MetricsError::NoLabeledSamples(_)) => {}
                Err(e) => return Err(CliError::Domain(e.to_string())),
            }
        }
        if let Ok(means) = mean_scores(&per_category) {
            println!(
                "{model}: {} categories, mean accuracy {:.3}, mean macro-F1 {:.3}",
                per_category.len(),
                means.mean_accuracy,
                means.mean_macro_f1
            );
        }
        scored.extend(per_category.into_iter().map(|s| (model.to_string(), s)));
    }
    if scored.is_empty() {
        return Err(CliError::Domain("no category could be scored against the manifest".into()));
    }

    create_output_dir(cfg)?;
    let mut buf = Vec::new();
    write_scores_csv(&mut buf, &scored).map_err(|e| CliError::Env(e.to_string()))?;
    write_file(&cfg.output_dir.join("scores.csv"), &buf)?;
    let mut buf = Vec::new();
    write_per_tag_csv(&mut buf, &scored).map_err(|e| CliError::Env(e.to_string()))?;
    write_file(&cfg.output_dir.join("per_tag.csv"), &buf)?;

    let cells = scored.iter().map(|(m, s)| to_cell(m, s)).collect();
    let bundle = ReportBundle::build(cells, vec![]).map_err(|e| CliError::Domain(e.to_string()))?;
    write_report(cfg, &bundle)?;
    Ok(0)
}

pub fn cmd_shift_test(cfg: &RunConfig, factory: &dyn BackendFactory) -> Result<i32, CliError> {
    if cfg.shifts == Shifts::None {
        return Err(CliError::Domain("shift test needs --shifts all or a list of shifts".into()));
    }
    let schema = load_schema_from(cfg)?;
    let manifest = load_manifest_from(cfg, &schema)?;
    let endpoints = build_endpoints(cfg, factory, Some(&manifest))?;
    let cache = open_cache(cfg)?;
    create_output_dir(cfg)?;
    let options = campaign_options(cfg);

    let shifts_for = |n_tags: usize| -> Vec<usize> {
        match &cfg.shifts {
            Shifts::All => (0..n_tags).collect(),
            Shifts::Explicit(list) => {
                let mut v: Vec<usize> = list.iter().map(|k| k % n_tags).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            Shifts::None => vec![],
        }
    };
    let jobs: Vec<Job> = (0..manifest.samples.len())
        .flat_map(|sample| {
            schema.categories.iter().enumerate().flat_map(move |(category, c)| {
                shifts_for(c.tags.len()).into_iter().map(move |shift| Job { sample, category, shift })
            })
        })
        .collect();

    let mut csv = String::from("model,category,shifts,consistency\n");
    let mut all = Vec::new();
    for ep in &endpoints {
        let records = run_jobs(ep, &manifest.samples, &schema, &options, jobs.clone(), &cache)
            .map_err(|e| CliError::Domain(e.to_string()))?;
        for category in &schema.categories {
            let mut by_shift: BTreeMap<usize, Vec<PredictionRecord>> = BTreeMap::new();
            for r in records.iter().filter(|r| r.category == category.name) {
                by_shift.entry(r.shift).or_default().push(r.clone());
            }
            let Ok(consistency) = shift_consistency(&by_shift) else {
                continue;
            };
            println!("{}\t{}\t{} shifts\t{consistency:.3}", ep.config.name, category.name, by_shift.len());
            csv.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&ep.config.name),
                csv_field(&category.name),
                by_shift.len(),
                consistency
            ));
        }
        all.extend(records);
    }
    write_file(&cfg.output_dir.join("shift_consistency.csv"), csv.as_bytes())?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &all).map_err(env_err("shift results"))?;
    write_file(&cfg.output_dir.join("shift_results.jsonl"), &buf)?;
    Ok(0)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn cmd_bench(cfg: &RunConfig, factory: &dyn BackendFactory, image: &Path, runs: usize) -> Result<i32, CliError> {
    let bytes = fs::read(image).map_err(env_err(format!("cannot read image {}", image.display())))?;
    if runs == 0 {
        return Err(CliError::Domain("--runs must be at least 1".into()));
    }
    let endpoints = build_endpoints(cfg, factory, None)?;
    let mut rows = Vec::new();
    for ep in &endpoints {
        let stats = bench_latency(ep, &bytes, runs).map_err(|e| CliError::Domain(format!("{}: {e}", ep.config.name)))?;
        println!(
            "{}\tmean {:.3}s\tmedian {:.3}s\tmin {:.3}s\tmax {:.3}s",
            ep.config.name, stats.mean, stats.median, stats.min, stats.max
        );
        rows.push(LatencyRow { model: ep.config.name.clone(), latency_s: stats.mean });
    }
    create_output_dir(cfg)?;
    write_file(&cfg.output_dir.join("latency.csv"), &write_latency_csv(&rows))?;
    Ok(0)
}

pub fn cmd_adapt_bdd100k(
    cfg: &RunConfig,
    label_file: &Path,
    image_root: &Path,
    out_manifest: &Path,
) -> Result<i32, CliError> {
    let schema = load_schema_from(cfg)?;
    if !image_root.is_dir() {
        return Err(CliError::Env(format!("image root {} is not a directory", image_root.display())));
    }
    let root = image_root.canonicalize().map_err(env_err(image_root.display()))?;
    let f = File::open(label_file).map_err(env_err(format!("cannot open {}", label_file.display())))?;
    let adapted = adapt_bdd100k(BufReader::new(f), &root, &schema)
        .map_err(|e| CliError::Domain(format!("{}: {e}", label_file.display())))?;
    for w in &adapted.warnings {
        log::warn!("{w}");
        eprintln!("warning: {w}");
    }
    if let Some(dir) = out_manifest.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(env_err(dir.display()))?;
    }
    let mut buf = Vec::new();
    adapted.manifest.write_jsonl(&mut buf).map_err(env_err("manifest"))?;
    write_file(out_manifest, &buf)?;
    println!("wrote {} samples to {}", adapted.manifest.samples.len(), out_manifest.display());
    Ok(0)
}

pub fn cmd_report(cfg: &RunConfig, scores: &[PathBuf], latency: &[PathBuf]) -> Result<i32, CliError> {
    let mut cells = Vec::new();
    for p in scores {
        let f = File::open(p).map_err(env_err(format!("cannot open {}", p.display())))?;
        cells.extend(read_scores_csv(f).map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?);
    }
    let mut rows = Vec::new();
    for p in latency {
        let f = File::open(p).map_err(env_err(format!("cannot open {}", p.display())))?;
        rows.extend(read_latency_csv(f).map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?);
    }
    let bundle = ReportBundle::build(cells, rows).map_err(|e| CliError::Domain(e.to_string()))?;
    create_output_dir(cfg)?;
    write_report(cfg, &bundle)?;
    print!("{}", String::from_utf8_lossy(&render_tables(&bundle, TableFormat::Markdown)));
    Ok(0)
}
