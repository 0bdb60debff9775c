//! Canonical correlation trees and forests.
//!
//! Each internal node fits CCA between the features and the one-hot labels of
//! a bootstrap resample of its rows, then searches every canonical direction
//! for the threshold with the largest Gini gain over *all* of the node's rows.
//! Rows whose projection is `<= threshold` go left.
//!
//! All randomness is drawn from per-node seeds derived from the tree seed and
//! the node's path, and trees are seeded from the forest seed and the tree
//! index, so a trained forest never depends on how many threads grew it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cca::{compute_cca, one_hot, CcaError, Ridge};
use crate::raster::{BandId, Class, ClassMap, MultiSpectralRaster, RasterError};
use crate::sampling::{self, PixelDataset, SamplingError, Standardizer};
use crate::seed;

pub const FORMAT_NAME: &str = "ccfmap-forest";
pub const FORMAT_VERSION: u32 = 1;

/// Smallest Gini gain accepted as a real split.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("cannot grow a tree on an empty dataset")]
    EmptyData,
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("CCA failed: {0}")]
    Cca(#[from] CcaError),
    #[error("expected {expected} features, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("feature {0} is not finite")]
    NonFiniteFeature(usize),
    #[error("model bands {model:?} do not match data bands {data:?}")]
    BandMismatch {
        model: Vec<BandId>,
        data: Vec<BandId>,
    },
    #[error("model format version {found} is not supported (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u64 },
    #[error("malformed model document: {0}")]
    Malformed(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub ridge: Ridge,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 10,
            min_node_size: 2,
            max_depth: None,
            ridge: Ridge::default(),
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(ForestError::InvalidConfig(
                "min_node_size must be at least 1".into(),
            ));
        }
        self.ridge
            .validate()
            .map_err(|e| ForestError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// Seed of tree `index`.
    pub fn tree_seed(&self, index: usize) -> u64 {
        seed::derive(self.seed, index as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        /// Unit-norm hyperplane normal.
        direction: Vec<f64>,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training rows per class reaching this leaf.
        class_counts: [u64; 2],
    },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcTree {
    nodes: Vec<Node>,
    root: usize,
}

pub fn project(row: &[f64], direction: &[f64]) -> f64 {
    row.iter().zip(direction).map(|(a, b)| a * b).sum()
}

impl CcTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Index of the leaf `row` lands in.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = self.root;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Internal {
                    direction,
                    threshold,
                    left,
                    right,
                } => {
                    i = if project(row, direction) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn leaf_counts(&self, row: &[f64]) -> [u64; 2] {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { class_counts } => *class_counts,
            Node::Internal { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Share of informal training rows in the leaf `row` lands in.
    pub fn informal_proportion(&self, row: &[f64]) -> f64 {
        let [env, inf] = self.leaf_counts(row);
        inf as f64 / (env + inf) as f64
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &CcTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, self.root)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

pub fn gini_impurity(class_counts: &[u64]) -> Result<f64, ForestError> {
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(ForestError::EmptyData);
    }
    Ok(gini_unchecked(class_counts, total))
}

fn gini_unchecked(class_counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    1.0 - class_counts
        .iter()
        .map(|&c| (c as f64 / n).powi(2))
        .sum::<f64>()
}

/// Impurity of `parent` minus the size-weighted impurities of the children.
pub fn gini_gain(parent: &[u64], left: &[u64], right: &[u64]) -> Result<f64, ForestError> {
    let n: u64 = parent.iter().sum();
    let nl: u64 = left.iter().sum();
    let nr: u64 = right.iter().sum();
    if n == 0 || nl == 0 || nr == 0 {
        return Err(ForestError::EmptyData);
    }
    Ok(gain_unchecked(parent, n, left, nl, right, nr))
}

fn gain_unchecked(parent: &[u64], n: u64, left: &[u64], nl: u64, right: &[u64], nr: u64) -> f64 {
    let total = n as f64;
    gini_unchecked(parent, n)
        - (nl as f64 / total) * gini_unchecked(left, nl)
        - (nr as f64 / total) * gini_unchecked(right, nr)
}

struct Task {
    slot: usize,
    rows: Vec<usize>,
    depth: usize,
    key: u64,
}

struct Split {
    direction: Vec<f64>,
    threshold: f64,
    projections: Vec<f64>,
}

fn counts_of(data: &PixelDataset, rows: &[usize]) -> [u64; 2] {
    let mut c = [0u64; 2];
    for &r in rows {
        c[data.labels()[r].index()] += 1;
    }
    c
}

/// Grows one canonical correlation tree on standardized `data`.
pub fn grow_tree(
    data: &PixelDataset,
    config: &ForestConfig,
    tree_seed: u64,
) -> Result<CcTree, ForestError> {
    if data.is_empty() {
        return Err(ForestError::EmptyData);
    }
    config.validate()?;
    let mut nodes = vec![Node::Leaf {
        class_counts: [0, 0],
    }];
    let mut stack = vec![Task {
        slot: 0,
        rows: (0..data.len()).collect(),
        depth: 0,
        key: tree_seed,
    }];
    while let Some(task) = stack.pop() {
        let counts = counts_of(data, &task.rows);
        let stop = counts[0] == 0
            || counts[1] == 0
            || task.rows.len() < config.min_node_size
            || config.max_depth.is_some_and(|d| task.depth >= d);
        let split = if stop {
            None
        } else {
            best_split(data, &task.rows, counts, config.ridge, task.key)?
        };
        let Some(split) = split else {
            nodes[task.slot] = Node::Leaf {
                class_counts: counts,
            };
            continue;
        };
        let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
        for (&r, &p) in task.rows.iter().zip(&split.projections) {
            if p <= split.threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf {
            class_counts: [0, 0],
        });
        nodes.push(Node::Leaf {
            class_counts: [0, 0],
        });
        nodes[task.slot] = Node::Internal {
            direction: split.direction,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push(Task {
            slot: right,
            rows: right_rows,
            depth: task.depth + 1,
            key: seed::derive(task.key, 2),
        });
        stack.push(Task {
            slot: left,
            rows: left_rows,
            depth: task.depth + 1,
            key: seed::derive(task.key, 1),
        });
    }
    Ok(CcTree { nodes, root: 0 })
}

fn best_split(
    data: &PixelDataset,
    rows: &[usize],
    counts: [u64; 2],
    ridge: Ridge,
    key: u64,
) -> Result<Option<Split>, ForestError> {
    let n = rows.len();
    let d = data.n_features();
    let mut rng = seed::rng(key);
    let mut sample: Vec<usize> = (0..n).map(|_| rows[rng.random_range(0..n)]).collect();
    let labels = data.labels();
    // a one-class resample carries no label signal; fit on the node itself
    if sample.iter().all(|&r| labels[r] == labels[sample[0]]) {
        sample = rows.to_vec();
    }

    let x = DMatrix::from_fn(sample.len(), d, |i, j| data.row(sample[i])[j]);
    let sample_labels: Vec<usize> = sample.iter().map(|&r| labels[r].index()).collect();
    let y = one_hot(&sample_labels, Class::COUNT)?;
    let cca = compute_cca(&x, &y, ridge)?;

    let mut best: Option<(f64, Split)> = None;
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..cca.n_components() {
        let mut direction: Vec<f64> = cca.proj_x.column(k).iter().copied().collect();
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            continue;
        }
        direction.iter_mut().for_each(|v| *v /= norm);
        // orient so informal rows project higher on the fitting sample; this
        // makes the split independent of the sign the eigensolver picked
        let mut sums = [0.0f64; 2];
        let mut ns = [0usize; 2];
        for &r in &sample {
            let c = labels[r].index();
            sums[c] += project(data.row(r), &direction);
            ns[c] += 1;
        }
        if ns[0] > 0 && ns[1] > 0 && sums[1] / (ns[1] as f64) < sums[0] / (ns[0] as f64) {
            direction.iter_mut().for_each(|v| *v = -*v);
        }

        let projections: Vec<f64> = rows
            .iter()
            .map(|&r| project(data.row(r), &direction))
            .collect();
        order.sort_by(|&a, &b| projections[a].total_cmp(&projections[b]).then(a.cmp(&b)));

        let mut left = [0u64; 2];
        let mut found: Option<(f64, f64)> = None;
        for w in 0..n - 1 {
            left[labels[rows[order[w]]].index()] += 1;
            let lo = projections[order[w]];
            let hi = projections[order[w + 1]];
            if lo >= hi {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let nl = (w + 1) as u64;
            let gain = gain_unchecked(&counts, n as u64, &left, nl, &right, n as u64 - nl);
            if found.is_none_or(|(g, _)| gain > g) {
                let mut mid = lo + (hi - lo) / 2.0;
                if mid >= hi {
                    mid = lo;
                }
                found = Some((gain, mid));
            }
        }
        if let Some((gain, threshold)) = found {
            if gain > MIN_GAIN && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((
                    gain,
                    Split {
                        direction,
                        threshold,
                        projections,
                    },
                ));
            }
        }
    }
    Ok(best.map(|(_, s)| s))
}

/// A trained ensemble plus everything needed to apply it to raw spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub config: ForestConfig,
    pub trees: Vec<CcTree>,
    pub standardizer: Standardizer,
    pub bands: Vec<BandId>,
    pub region: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: Class,
    pub probability_informal: f64,
}

/// Trains `config.n_trees` trees on standardized `train`, in parallel on the
/// current rayon pool.
///
/// The returned forest carries an identity standardizer; attach the one that
/// produced `train` with [`Forest::with_standardizer`].
pub fn train_forest(train: &PixelDataset, config: &ForestConfig) -> Result<Forest, ForestError> {
    if train.is_empty() {
        return Err(ForestError::EmptyData);
    }
    config.validate()?;
    let counts = train.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        log::warn!(
            "training set holds a single class ({} environment, {} informal); every tree is one leaf",
            counts[0],
            counts[1]
        );
    }
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(train, config, config.tree_seed(t)))
        .collect::<Result<Vec<_>, _>>()?;
    let d = train.n_features();
    Ok(Forest {
        config: config.clone(),
        trees,
        standardizer: Standardizer {
            means: vec![0.0; d],
            stds: vec![1.0; d],
            zero_variance: vec![false; d],
        },
        bands: train.bands().to_vec(),
        region: train.region().map(str::to_string),
    })
}

impl Forest {
    pub fn with_standardizer(mut self, standardizer: Standardizer) -> Result<Self, ForestError> {
        if standardizer.dims() != self.bands.len() {
            return Err(ForestError::Dimension {
                expected: self.bands.len(),
                actual: standardizer.dims(),
            });
        }
        self.standardizer = standardizer;
        Ok(self)
    }

    pub fn with_region(mut self, region: impl Into<String>) -> Self {
        self.region = Some(region.into());
        self
    }

    pub fn n_features(&self) -> usize {
        self.bands.len()
    }

    /// Training rows per class, read off the leaves of the first tree.
    pub fn training_class_counts(&self) -> [u64; 2] {
        self.trees[0]
            .nodes()
            .iter()
            .fold([0, 0], |acc, n| match n {
                Node::Leaf { class_counts } => [acc[0] + class_counts[0], acc[1] + class_counts[1]],
                Node::Internal { .. } => acc,
            })
    }

    /// Classifies one standardized feature vector. Each tree votes with its
    /// leaf's informal proportion; exactly 0.5 resolves to environment.
    pub fn predict_class(&self, features: &[f64]) -> Result<Prediction, ForestError> {
        if features.len() != self.n_features() {
            return Err(ForestError::Dimension {
                expected: self.n_features(),
                actual: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFiniteFeature(i));
        }
        Ok(self.vote(features))
    }

    fn vote(&self, features: &[f64]) -> Prediction {
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| t.informal_proportion(features))
            .sum();
        let probability_informal = sum / self.trees.len() as f64;
        let class = if probability_informal > 0.5 {
            Class::Informal
        } else {
            Class::Environment
        };
        Prediction {
            class,
            probability_informal,
        }
    }

    /// Standardizes a raw reflectance vector with the stored standardizer,
    /// then classifies it.
    pub fn predict_raw(&self, raw: &[f64]) -> Result<Prediction, ForestError> {
        if raw.len() != self.n_features() {
            return Err(ForestError::Dimension {
                expected: self.n_features(),
                actual: raw.len(),
            });
        }
        let mut row = raw.to_vec();
        self.standardizer.apply_row(&mut row);
        self.predict_class(&row)
    }

    /// Predicts every row of a raw (unstandardized) dataset.
    pub fn predict_dataset(&self, raw: &PixelDataset) -> Result<Vec<Prediction>, ForestError> {
        self.check_bands(raw.bands())?;
        let std = self.standardizer.apply(raw)?;
        std.rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|row| self.predict_class(row))
            .collect()
    }

    pub fn check_bands(&self, bands: &[BandId]) -> Result<(), ForestError> {
        if bands != self.bands.as_slice() {
            return Err(ForestError::BandMismatch {
                model: self.bands.clone(),
                data: bands.to_vec(),
            });
        }
        Ok(())
    }
}

/// Class map from [`predict_map`] plus the number of nodata pixels.
#[derive(Debug, Clone)]
pub struct MapPrediction {
    pub map: ClassMap,
    pub nodata_pixels: usize,
}

/// Classifies every pixel of `raster`. The model's bands are selected and
/// brought onto the 10m grid first; pixels with nodata in any band become
/// environment with probability 0.
pub fn predict_map(forest: &Forest, raster: &MultiSpectralRaster) -> Result<MapPrediction, ForestError> {
    let selected = sampling::select_bands(raster, &forest.bands).map_err(|e| match e {
        SamplingError::MissingBand(_) => ForestError::BandMismatch {
            model: forest.bands.clone(),
            data: raster.band_ids(),
        },
        other => other.into(),
    })?;
    let common = sampling::resample_to_common_grid(&selected)?;
    let (w, h) = (common.width(), common.height());
    let d = forest.n_features();
    let grids: Vec<&[f32]> = (0..d).map(|i| common.band(i)).collect();

    let rows: Vec<(Vec<Class>, Vec<f32>, usize)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut classes = Vec::with_capacity(w);
            let mut probs = Vec::with_capacity(w);
            let mut nodata = 0;
            let mut buf = vec![0.0f64; d];
            for x in 0..w {
                let p = y * w + x;
                if grids.iter().any(|g| common.is_nodata(g[p])) {
                    classes.push(Class::Environment);
                    probs.push(0.0);
                    nodata += 1;
                    continue;
                }
                for (b, g) in buf.iter_mut().zip(&grids) {
                    *b = g[p] as f64;
                }
                forest.standardizer.apply_row(&mut buf);
                let pred = forest.vote(&buf);
                classes.push(pred.class);
                probs.push(probability_f32(pred));
            }
            (classes, probs, nodata)
        })
        .collect();

    let mut classes = Vec::with_capacity(w * h);
    let mut probs = Vec::with_capacity(w * h);
    let mut nodata_pixels = 0;
    for (c, p, n) in rows {
        classes.extend(c);
        probs.extend(p);
        nodata_pixels += n;
    }
    Ok(MapPrediction {
        map: ClassMap::new(w, h, classes, Some(probs))?,
        nodata_pixels,
    })
}

/// Narrows the probability without letting rounding land an informal pixel
/// on exactly 0.5.
fn probability_f32(pred: Prediction) -> f32 {
    let p = pred.probability_informal as f32;
    if pred.class == Class::Informal && p <= 0.5 {
        f32::from_bits(0.5f32.to_bits() + 1)
    } else if pred.class == Class::Environment && p > 0.5 {
        0.5
    } else {
        p
    }
}

// ---------------------------------------------------------------------------
// model file

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    format_version: u64,
    bands: Vec<BandId>,
    config: ForestConfig,
    region: Option<String>,
    standardizer: Standardizer,
    trees: Vec<TreeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeDoc {
    root: usize,
    nodes: Vec<NodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NodeDoc {
    Split {
        direction: Vec<f64>,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class_counts: [u64; 2],
    },
}

/// Canonical UTF-8 JSON: sorted keys, two-space indent, scalar arrays on one
/// line, floats as 17 significant digits in exponent form.
pub fn to_canonical_string(forest: &Forest) -> String {
    let doc = ModelDoc {
        format: FORMAT_NAME.to_string(),
        format_version: FORMAT_VERSION as u64,
        bands: forest.bands.clone(),
        config: forest.config.clone(),
        region: forest.region.clone(),
        standardizer: forest.standardizer.clone(),
        trees: forest
            .trees
            .iter()
            .map(|t| TreeDoc {
                root: t.root,
                nodes: t
                    .nodes
                    .iter()
                    .map(|n| match n {
                        Node::Internal {
                            direction,
                            threshold,
                            left,
                            right,
                        } => NodeDoc::Split {
                            direction: direction.clone(),
                            threshold: *threshold,
                            left: *left,
                            right: *right,
                        },
                        Node::Leaf { class_counts } => NodeDoc::Leaf {
                            class_counts: *class_counts,
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    let value = serde_json::to_value(&doc).expect("model document is plain data");
    let mut out = String::new();
    write_canonical(&value, 0, &mut out);
    out.push('\n');
    out
}

fn format_float(f: f64) -> String {
    format!("{f:.16e}")
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_canonical(v: &Value, indent: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else {
                out.push_str(&format_float(n.as_f64().expect("finite number")));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_canonical(item, indent, out);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_canonical(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, indent + 1);
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push_str(": ");
                write_canonical(&map[k.as_str()], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

pub fn from_canonical_str(text: &str) -> Result<Forest, ForestError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ForestError::Malformed(e.to_string()))?;
    match value.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(found) => return Err(ForestError::VersionMismatch { found }),
        None => return Err(ForestError::Malformed("missing format_version".into())),
    }
    let doc: ModelDoc =
        serde_json::from_value(value).map_err(|e| ForestError::Malformed(e.to_string()))?;
    if doc.format != FORMAT_NAME {
        return Err(ForestError::Malformed(format!(
            "unexpected format {:?}",
            doc.format
        )));
    }
    doc.config.validate()?;
    let d = doc.bands.len();
    if doc.trees.len() != doc.config.n_trees {
        return Err(ForestError::Malformed(format!(
            "{} trees stored but n_trees is {}",
            doc.trees.len(),
            doc.config.n_trees
        )));
    }
    let s = &doc.standardizer;
    if s.means.len() != d || s.stds.len() != d || s.zero_variance.len() != d {
        return Err(ForestError::Dimension {
            expected: d,
            actual: s.means.len(),
        });
    }
    if s.stds.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(ForestError::Malformed("standard deviations must be positive".into()));
    }
    let trees = doc
        .trees
        .into_iter()
        .map(|t| tree_from_doc(t, d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Forest {
        config: doc.config,
        trees,
        standardizer: doc.standardizer,
        bands: doc.bands,
        region: doc.region,
    })
}

fn tree_from_doc(doc: TreeDoc, d: usize) -> Result<CcTree, ForestError> {
    let n = doc.nodes.len();
    if doc.root >= n {
        return Err(ForestError::Malformed("root index out of range".into()));
    }
    let mut parents = vec![0usize; n];
    let mut nodes = Vec::with_capacity(n);
    for node in doc.nodes {
        nodes.push(match node {
            NodeDoc::Split {
                direction,
                threshold,
                left,
                right,
            } => {
                if direction.len() != d {
                    return Err(ForestError::Dimension {
                        expected: d,
                        actual: direction.len(),
                    });
                }
                let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                if direction.iter().any(|v| !v.is_finite()) || (norm - 1.0).abs() > 1e-9 {
                    return Err(ForestError::Malformed("split direction is not unit norm".into()));
                }
                if !threshold.is_finite() || left >= n || right >= n || left == right {
                    return Err(ForestError::Malformed("invalid split node".into()));
                }
                parents[left] += 1;
                parents[right] += 1;
                Node::Internal {
                    direction,
                    threshold,
                    left,
                    right,
                }
            }
            NodeDoc::Leaf { class_counts } => {
                if class_counts[0] + class_counts[1] == 0 {
                    return Err(ForestError::Malformed("empty leaf".into()));
                }
                Node::Leaf { class_counts }
            }
        });
    }
    // a proper binary tree: the root has no parent, every other node one,
    // and every node is reachable from the root
    let proper = parents
        .iter()
        .enumerate()
        .all(|(i, &p)| p == usize::from(i != doc.root));
    if !proper {
        return Err(ForestError::Malformed("nodes do not form a binary tree".into()));
    }
    let mut seen = 0;
    let mut stack = vec![doc.root];
    while let Some(i) = stack.pop() {
        seen += 1;
        if seen > n {
            break;
        }
        if let Node::Internal { left, right, .. } = &nodes[i] {
            stack.push(*left);
            stack.push(*right);
        }
    }
    if seen != n {
        return Err(ForestError::Malformed("nodes do not form a binary tree".into()));
    }
    Ok(CcTree {
        nodes,
        root: doc.root,
    })
}

pub fn serialize_forest(forest: &Forest, path: impl AsRef<Path>) -> Result<(), ForestError> {
    let path = path.as_ref();
    fs::write(path, to_canonical_string(forest)).map_err(|source| ForestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn deserialize_forest(path: impl AsRef<Path>) -> Result<Forest, ForestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ForestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_canonical_str(&text)
}
