//! End-to-end runs: train, predict, cross-region evaluation and synthetic
//! scene generation.
//!
//! Run definitions live in TOML files (see [`PipelineConfig`]). Relative
//! paths in a config resolve against the config file's directory. Command
//! line flags override file values.
//!
//! Every command writes a `manifest.json` next to its artifacts holding the
//! resolved configuration, seed, tool version, and SHA-256 digests of every
//! input and output. No timestamps are recorded, so repeating a run
//! reproduces its manifest byte for byte.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cca::{CcaError, Ridge};
use crate::forest::{self, Forest, ForestConfig, ForestError};
use crate::metrics::{self, Cell, CrossEvalTable, EvalError, EvalReport, MetricsError};
use crate::raster::{self, BandId, RasterError, DEFAULT_BANDS};
use crate::sampling::{self, PixelDataset, SamplingError, Standardizer};
use crate::seed::{self, streams};
use crate::synth::{self, SceneSpec, SynthError};

pub const THREADS_ENV: &str = "CCFMAP_THREADS";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

/// Process exit status of a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Bad configuration or unreadable / inconsistent input.
    Input = 2,
    /// Model and data disagree on bands, dimensions or format version.
    Incompatible = 3,
    /// A numerical routine failed.
    Numerical = 4,
}

#[derive(Debug, thiserror::Error)]
pub struct PipelineError {
    pub stage: &'static str,
    pub kind: ExitKind,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl PipelineError {
    pub fn new(stage: &'static str, kind: ExitKind, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

trait Classify: fmt::Display {
    fn kind(&self) -> ExitKind;
}

impl Classify for RasterError {
    fn kind(&self) -> ExitKind {
        ExitKind::Input
    }
}

impl Classify for SamplingError {
    fn kind(&self) -> ExitKind {
        match self {
            SamplingError::FeatureCount { .. } => ExitKind::Incompatible,
            _ => ExitKind::Input,
        }
    }
}

impl Classify for CcaError {
    fn kind(&self) -> ExitKind {
        match self {
            CcaError::InvalidRidge(_) => ExitKind::Input,
            _ => ExitKind::Numerical,
        }
    }
}

impl Classify for ForestError {
    fn kind(&self) -> ExitKind {
        match self {
            ForestError::Cca(e) => e.kind(),
            ForestError::NonFiniteFeature(_) => ExitKind::Numerical,
            ForestError::Dimension { .. }
            | ForestError::BandMismatch { .. }
            | ForestError::VersionMismatch { .. } => ExitKind::Incompatible,
            ForestError::Sampling(e) => e.kind(),
            _ => ExitKind::Input,
        }
    }
}

impl Classify for MetricsError {
    fn kind(&self) -> ExitKind {
        ExitKind::Numerical
    }
}

impl Classify for EvalError {
    fn kind(&self) -> ExitKind {
        match self {
            EvalError::Forest(e) => e.kind(),
            EvalError::Metrics(e) => e.kind(),
        }
    }
}

impl Classify for SynthError {
    fn kind(&self) -> ExitKind {
        match self {
            SynthError::Raster(e) => e.kind(),
            _ => ExitKind::Input,
        }
    }
}

fn at<E: Classify>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::new(stage, e.kind(), e.to_string())
}

fn io_at<'a>(stage: &'static str, path: &'a Path) -> impl FnOnce(std::io::Error) -> PipelineError + 'a {
    move |e| PipelineError::new(stage, ExitKind::Input, format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSection {
    pub n_trees: usize,
    pub min_node_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    pub ridge: Ridge,
}

impl Default for ForestSection {
    fn default() -> Self {
        let d = ForestConfig::default();
        Self {
            n_trees: d.n_trees,
            min_node_size: d.min_node_size,
            max_depth: d.max_depth,
            ridge: d.ridge,
        }
    }
}

/// One region's run definition.
///
/// ```toml
/// region = "north"
/// raster = "north/raster"      # raster container directory
/// mask = "north/mask.pgm"
/// bands = ["B2", "B3", "B4"]   # default: B2-B8, B8A, B11, B12
/// train_fraction = 0.8
/// seed = 7
/// out = "runs/north"
///
/// [forest]
/// n_trees = 10
/// min_node_size = 2
/// max_depth = 12               # optional, unlimited if absent
/// ridge = { kind = "diagonal", value = 1e-8 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub region: String,
    pub raster: PathBuf,
    pub mask: PathBuf,
    #[serde(default = "default_bands")]
    pub bands: Vec<BandId>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub forest: ForestSection,
}

fn default_bands() -> Vec<BandId> {
    DEFAULT_BANDS.to_vec()
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that replace config file values when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trees: Option<usize>,
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(region: impl Into<String>, raster: impl Into<PathBuf>, mask: impl Into<PathBuf>) -> Self {
        Self {
            region: region.into(),
            raster: raster.into(),
            mask: mask.into(),
            bands: default_bands(),
            train_fraction: default_train_fraction(),
            seed: 0,
            out: default_out(),
            forest: ForestSection::default(),
        }
    }

    /// Parses TOML, resolving relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text)
            .map_err(|e| PipelineError::new("config", ExitKind::Input, e.to_string()))?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` object of a run manifest when
    /// the file ends in `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_at("config", path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: Value = serde_json::from_str(&text)
                .map_err(|e| PipelineError::new("config", ExitKind::Input, e.to_string()))?;
            let mut cfg: PipelineConfig =
                serde_json::from_value(manifest.get("config").cloned().unwrap_or(Value::Null))
                    .map_err(|e| {
                        PipelineError::new("config", ExitKind::Input, format!("manifest config: {e}"))
                    })?;
            cfg.resolve(base);
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.raster, &mut self.mask, &mut self.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.trees {
            self.forest.n_trees = t;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::new("config", ExitKind::Input, m));
        if self.region.is_empty() {
            return bad("region name is empty".into());
        }
        if self.bands.is_empty() {
            return bad("band list is empty".into());
        }
        for (i, b) in self.bands.iter().enumerate() {
            if self.bands[..i].contains(b) {
                return bad(format!("band {b} listed twice"));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        self.forest_config()
            .validate()
            .map_err(at("config"))
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.forest.n_trees,
            min_node_size: self.forest.min_node_size,
            max_depth: self.forest.max_depth,
            ridge: self.forest.ridge,
            seed: self.seed,
        }
    }

    fn check_inputs_exist(&self) -> Result<(), PipelineError> {
        for (what, p) in [("raster", &self.raster), ("mask", &self.mask)] {
            if !p.exists() {
                return Err(PipelineError::new(
                    "config",
                    ExitKind::Input,
                    format!("{what} path {} does not exist", p.display()),
                ));
            }
        }
        Ok(())
    }
}

/// Raw labeled rows of one region, before balancing.
pub fn load_labeled(cfg: &PipelineConfig) -> Result<PixelDataset, PipelineError> {
    cfg.check_inputs_exist()?;
    let raster = raster::load_raster(&cfg.raster).map_err(at("load"))?;
    let mask = raster::load_mask(&cfg.mask).map_err(at("load"))?;
    let selected = sampling::select_bands(&raster, &cfg.bands).map_err(at("select_bands"))?;
    let common = sampling::resample_to_common_grid(&selected).map_err(at("resample"))?;
    let ex = sampling::extract_labeled_pixels(&common, &mask).map_err(at("extract"))?;
    if ex.dropped_nodata > 0 {
        log::info!("{}: skipped {} labeled nodata pixels", cfg.region, ex.dropped_nodata);
    }
    Ok(ex.dataset.with_region(&cfg.region))
}

/// Balanced rows split into raw train and test sets, reproducing exactly
/// what `cmd_train` uses for a given config.
pub fn prepare_split(cfg: &PipelineConfig) -> Result<(PixelDataset, PixelDataset), PipelineError> {
    let raw = load_labeled(cfg)?;
    let balanced =
        sampling::balance_classes(&raw, seed::derive(cfg.seed, streams::BALANCE)).map_err(at("balance"))?;
    log::info!(
        "{}: {} labeled rows, {} after balancing",
        cfg.region,
        raw.len(),
        balanced.len()
    );
    sampling::split_train_test(
        &balanced,
        cfg.train_fraction,
        seed::derive(cfg.seed, streams::SPLIT),
    )
    .map_err(at("split"))
}

/// Fits the standardizer on `train` and grows the forest.
pub fn fit_forest(train: &PixelDataset, config: &ForestConfig) -> Result<Forest, PipelineError> {
    let standardizer = Standardizer::fit(train).map_err(at("standardize"))?;
    let z = standardizer.apply(train).map_err(at("standardize"))?;
    let forest = forest::train_forest(&z, config).map_err(at("train"))?;
    forest.with_standardizer(standardizer).map_err(at("train"))
}

fn sha256_hex(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(io_at("manifest", path))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Files making up a raster container or a plain file.
fn artifact_files(path: &Path) -> Vec<PathBuf> {
    if path.is_dir() {
        vec![path.join(raster::HEADER_FILE), path.join(raster::PAYLOAD_FILE)]
    } else {
        vec![path.to_path_buf()]
    }
}

/// Paths under `base` are recorded relative to it.
fn digests(paths: &[PathBuf], base: &Path) -> Result<Value, PipelineError> {
    let mut out = Vec::new();
    for p in paths {
        for f in artifact_files(p) {
            if f.exists() {
                let shown = f.strip_prefix(base).unwrap_or(&f).display().to_string();
                out.push(json!({"path": shown, "sha256": sha256_hex(&f)?}));
            }
        }
    }
    Ok(Value::Array(out))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(io_at("write", path))
}

fn write_manifest(
    path: &Path,
    command: &str,
    seed: u64,
    config: Value,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<(), PipelineError> {
    let base = path.parent().unwrap_or(Path::new(""));
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": digests(inputs, base)?,
        "outputs": digests(outputs, base)?,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest is plain data");
    text.push('\n');
    write_text(path, &text)
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(io_at("write", path))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub forest: Forest,
    pub report: EvalReport,
    pub model_path: PathBuf,
    pub n_train: usize,
    pub n_test: usize,
}

/// Trains on the 80% split of one region and scores the held-out rows.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutcome, PipelineError> {
    cfg.validate()?;
    let (train, test) = prepare_split(cfg)?;
    let forest = fit_forest(&train, &cfg.forest_config())?.with_region(&cfg.region);
    let report = metrics::evaluate(&forest, &test, &cfg.region, &cfg.region).map_err(at("evaluate"))?;
    log::info!(
        "{}: held-out pixel accuracy {:.4}, mean IoU {:.4} over {} rows",
        cfg.region,
        report.pixel_accuracy,
        report.mean_iou,
        test.len()
    );

    create_dir(&cfg.out)?;
    let model_path = cfg.out.join(MODEL_FILE);
    forest::serialize_forest(&forest, &model_path).map_err(at("write"))?;
    let report_json = json!({
        "seed": cfg.seed,
        "train_rows": train.len(),
        "test_rows": test.len(),
        "report": report,
    });
    let mut text = serde_json::to_string_pretty(&report_json).expect("report is plain data");
    text.push('\n');
    write_text(&cfg.out.join(REPORT_JSON), &text)?;
    write_text(
        &cfg.out.join(REPORT_CSV),
        &format!("{}\n{}\n", metrics::CELLS_CSV_HEADER, metrics::report_csv_row(&report)),
    )?;
    write_manifest(
        &cfg.out.join(MANIFEST_FILE),
        "train",
        cfg.seed,
        serde_json::to_value(cfg).expect("config is plain data"),
        &[cfg.raster.clone(), cfg.mask.clone()],
        &[
            model_path.clone(),
            cfg.out.join(REPORT_JSON),
            cfg.out.join(REPORT_CSV),
        ],
    )?;
    Ok(TrainOutcome {
        forest,
        report,
        model_path,
        n_train: train.len(),
        n_test: test.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOutcome {
    pub nodata_pixels: usize,
    pub informal_fraction: f64,
    pub manifest_path: PathBuf,
}

/// Manifest path written alongside a predicted map.
pub fn predict_manifest_path(map: &Path) -> PathBuf {
    let mut s = map.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Classifies a whole raster and writes the map with its probability layer.
pub fn cmd_predict(model: &Path, raster_path: &Path, out: &Path) -> Result<PredictOutcome, PipelineError> {
    let forest = forest::deserialize_forest(model).map_err(at("model"))?;
    let raster = raster::load_raster(raster_path).map_err(at("load"))?;
    let pred = forest::predict_map(&forest, &raster).map_err(at("predict"))?;
    let total = pred.map.width() * pred.map.height();
    if pred.nodata_pixels == total {
        log::warn!("every pixel of {} is nodata; the map is all environment", raster_path.display());
    }
    let informal_fraction = pred.map.informal_fraction();
    log::info!(
        "{} nodata pixels, informal fraction {:.4}",
        pred.nodata_pixels,
        informal_fraction
    );
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    raster::save_class_map(&pred.map, out).map_err(at("write"))?;
    let (prob_json, prob_bin) = raster::probability_paths(out);
    let manifest_path = predict_manifest_path(out);
    write_manifest(
        &manifest_path,
        "predict",
        forest.config.seed,
        json!({
            "model": model.display().to_string(),
            "raster": raster_path.display().to_string(),
            "out": out.display().to_string(),
        }),
        &[model.to_path_buf(), raster_path.to_path_buf()],
        &[out.to_path_buf(), prob_json, prob_bin],
    )?;
    Ok(PredictOutcome {
        nodata_pixels: pred.nodata_pixels,
        informal_fraction,
        manifest_path,
    })
}

/// Rows a dataset contributes to one cross-evaluation column.
struct Column {
    name: String,
    cfg: PipelineConfig,
    /// Whole balanced set, used for models from other regions.
    balanced: PixelDataset,
    /// Held-out split, used for the model trained on this region.
    test: PixelDataset,
}

fn load_column(path: &Path) -> Result<Column, PipelineError> {
    let cfg = PipelineConfig::load(path)?;
    let raw = load_labeled(&cfg)?;
    let balanced =
        sampling::balance_classes(&raw, seed::derive(cfg.seed, streams::BALANCE)).map_err(at("balance"))?;
    let (_, test) = sampling::split_train_test(
        &balanced,
        cfg.train_fraction,
        seed::derive(cfg.seed, streams::SPLIT),
    )
    .map_err(at("split"))?;
    Ok(Column {
        name: cfg.region.clone(),
        cfg,
        balanced,
        test,
    })
}

fn model_name(path: &Path, forest: Option<&Forest>) -> String {
    forest
        .and_then(|f| f.region.clone())
        .unwrap_or_else(|| path.display().to_string())
}

/// Evaluates every model on every dataset.
///
/// A model scored on its own region uses that region's held-out split
/// (reproduced from the dataset config's seed and fraction); any other
/// pairing uses the dataset's whole balanced set. Models or datasets that
/// fail to load, and pairings that fail to evaluate, become error cells.
pub fn cmd_crosseval(
    models: &[PathBuf],
    datasets: &[PathBuf],
    out: &Path,
) -> Result<CrossEvalTable, PipelineError> {
    if models.is_empty() || datasets.is_empty() {
        return Err(PipelineError::new(
            "config",
            ExitKind::Input,
            "cross-evaluation needs at least one model and one dataset",
        ));
    }
    let forests: Vec<Result<Forest, String>> = models
        .iter()
        .map(|p| forest::deserialize_forest(p).map_err(|e| format!("[model] {e}")))
        .collect();
    let columns: Vec<Result<Column, String>> = datasets
        .iter()
        .map(|p| load_column(p).map_err(|e| e.to_string()))
        .collect();

    let mut cells = Vec::with_capacity(models.len());
    for (mpath, forest) in models.iter().zip(&forests) {
        let mname = model_name(mpath, forest.as_ref().ok());
        let row = columns
            .iter()
            .map(|col| match (forest, col) {
                (Err(e), _) | (_, Err(e)) => Cell::Error(e.clone()),
                (Ok(f), Ok(c)) => {
                    let rows = if f.region.as_deref() == Some(c.name.as_str()) {
                        &c.test
                    } else {
                        &c.balanced
                    };
                    match metrics::evaluate(f, rows, &mname, &c.name) {
                        Ok(r) => Cell::Report(r),
                        Err(e) => Cell::Error(e.to_string()),
                    }
                }
            })
            .collect();
        cells.push(row);
    }
    let table = CrossEvalTable {
        models: models
            .iter()
            .zip(&forests)
            .map(|(p, f)| model_name(p, f.as_ref().ok()))
            .collect(),
        datasets: datasets
            .iter()
            .zip(&columns)
            .map(|(p, c)| match c {
                Ok(c) => c.name.clone(),
                Err(_) => p.display().to_string(),
            })
            .collect(),
        cells,
    };
    let errors = table.error_count();
    if errors > 0 {
        log::warn!("{errors} of {} cross-evaluation cells failed", models.len() * datasets.len());
        for row in &table.cells {
            for cell in row {
                if let Cell::Error(e) = cell {
                    log::warn!("{e}");
                }
            }
        }
    }

    create_dir(out)?;
    let files = [
        ("cells.csv", table.cells_csv()),
        ("accuracy_table.csv", table.accuracy_table_csv()),
        ("iou_table.csv", table.iou_table_csv()),
        ("crosseval.json", table.to_json()),
    ];
    for (name, text) in &files {
        write_text(&out.join(name), text)?;
    }
    let seeds: Vec<Value> = columns
        .iter()
        .filter_map(|c| c.as_ref().ok())
        .map(|c| json!({"region": c.name, "seed": c.cfg.seed}))
        .collect();
    let inputs: Vec<PathBuf> = models.iter().chain(datasets).cloned().collect();
    let outputs: Vec<PathBuf> = files.iter().map(|(n, _)| out.join(n)).collect();
    write_manifest(
        &out.join(MANIFEST_FILE),
        "crosseval",
        0,
        json!({
            "models": models.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "datasets": datasets.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "dataset_seeds": seeds,
        }),
        &inputs,
        &outputs,
    )?;
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub raster: PathBuf,
    pub mask: PathBuf,
    /// A ready-to-train config pointing at the generated pair.
    pub config: PathBuf,
}

/// Writes `raster/`, `mask.pgm`, `scene.toml`, `pipeline.toml` and the
/// manifest into `out`. `seed` replaces the spec's seed when given.
pub fn cmd_synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<SynthOutcome, PipelineError> {
    let mut spec = SceneSpec::load(spec_path).map_err(at("config"))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let region = spec_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic".to_string());
    synth_to_dir(&spec, &region, out)
}

/// [`cmd_synth`] for an in-memory spec.
pub fn synth_to_dir(spec: &SceneSpec, region: &str, out: &Path) -> Result<SynthOutcome, PipelineError> {
    let (raster, mask) = synth::generate_scene(spec).map_err(at("synth"))?;
    create_dir(out)?;
    let raster_path = out.join("raster");
    let mask_path = out.join("mask.pgm");
    let scene_path = out.join("scene.toml");
    let config_path = out.join("pipeline.toml");
    raster::save_raster(&raster, &raster_path).map_err(at("write"))?;
    raster::save_mask(&mask, &mask_path).map_err(at("write"))?;
    write_text(&scene_path, &spec.to_toml())?;
    let mut cfg = PipelineConfig::new(region, "raster", "mask.pgm");
    cfg.seed = spec.seed;
    cfg.out = PathBuf::from("run");
    write_text(
        &config_path,
        &toml::to_string(&cfg).expect("config is plain data"),
    )?;
    write_manifest(
        &out.join(MANIFEST_FILE),
        "synth",
        spec.seed,
        serde_json::to_value(spec).expect("spec is plain data"),
        &[],
        &[raster_path.clone(), mask_path.clone(), scene_path, config_path.clone()],
    )?;
    Ok(SynthOutcome {
        raster: raster_path,
        mask: mask_path,
        config: config_path,
    })
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(PipelineError::new(
            "config",
            ExitKind::Input,
            "thread count must be at least 1",
        )),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::new("config", ExitKind::Input, e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
