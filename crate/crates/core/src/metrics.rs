//! Confusion-matrix metrics and the cross-region evaluation table.
//!
//! Entry `(i, j)` of a confusion matrix counts pixels of true class `i`
//! predicted as class `j`; `t_i` is the row sum. From it:
//!
//! * pixel accuracy = `sum_i n_ii / sum_i t_i`
//! * per-class accuracy = `n_ii / t_i`
//! * per-class IoU = `n_ii / (t_i + sum_j n_ji - n_ii)`, mean IoU averaging
//!   the classes whose IoU is defined (a class absent from both truth and
//!   prediction is `0/0` and left out).

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::forest::{Forest, ForestError};
use crate::raster::{Class, Label};
use crate::sampling::PixelDataset;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("{predicted} predictions for {truth} ground-truth entries")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("class {class} out of range for {n_class} classes")]
    ClassOutOfRange { class: usize, n_class: usize },
    #[error("confusion matrix is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_class: usize,
    /// Row-major `n_class x n_class` counts.
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n_class: usize) -> Self {
        Self {
            n_class,
            counts: vec![0; n_class * n_class],
        }
    }

    pub fn from_rows(rows: &[&[u64]]) -> Self {
        let n_class = rows.len();
        assert!(rows.iter().all(|r| r.len() == n_class), "square matrix");
        Self {
            n_class,
            counts: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn n_class(&self) -> usize {
        self.n_class
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_class + predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n_class + predicted] += 1;
    }

    /// `t_i`: pixels whose true class is `i`.
    pub fn truth_total(&self, i: usize) -> u64 {
        (0..self.n_class).map(|j| self.get(i, j)).sum()
    }

    /// Pixels predicted as class `j`.
    pub fn predicted_total(&self, j: usize) -> u64 {
        (0..self.n_class).map(|i| self.get(i, j)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_class).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.n_class.max(1))
            .map(<[u64]>::to_vec)
            .collect()
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n_class, other.n_class, "merging matrices of different size");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(mut self, other: ConfusionMatrix) -> ConfusionMatrix {
        self += &other;
        self
    }
}

pub fn confusion_matrix(
    predicted: &[usize],
    truth: &[usize],
    n_class: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(n_class);
    for (&p, &t) in predicted.iter().zip(truth) {
        for class in [p, t] {
            if class >= n_class {
                return Err(MetricsError::ClassOutOfRange { class, n_class });
            }
        }
        cm.record(t, p);
    }
    Ok(cm)
}

/// Binary confusion matrix against a mask, skipping unlabeled pixels.
pub fn confusion_against_labels(
    predicted: &[Class],
    truth: &[Label],
) -> Result<ConfusionMatrix, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(Class::COUNT);
    for (p, t) in predicted.iter().zip(truth) {
        if let Some(t) = t.class() {
            cm.record(t.index(), p.index());
        }
    }
    Ok(cm)
}

pub fn pixel_accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Recall of each class; `None` when the class is absent from the truth.
pub fn per_class_accuracy(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.n_class())
        .map(|i| {
            let t = cm.truth_total(i);
            (t > 0).then(|| cm.get(i, i) as f64 / t as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouScores {
    /// `None` for a class absent from both truth and prediction.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

pub fn iou(cm: &ConfusionMatrix) -> Result<IouScores, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::Empty);
    }
    let per_class: Vec<Option<f64>> = (0..cm.n_class())
        .map(|i| {
            let union = cm.truth_total(i) + cm.predicted_total(i) - cm.get(i, i);
            (union > 0).then(|| cm.get(i, i) as f64 / union as f64)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(IouScores { per_class, mean })
}

/// Metrics of one model on one evaluation set, with the matrix they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_region: String,
    pub test_region: String,
    pub pixel_accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub per_class_iou: Vec<Option<f64>>,
    pub mean_iou: f64,
    pub n_pixels: u64,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_confusion(
        confusion: ConfusionMatrix,
        train_region: impl Into<String>,
        test_region: impl Into<String>,
    ) -> Result<Self, MetricsError> {
        let scores = iou(&confusion)?;
        Ok(EvalReport {
            train_region: train_region.into(),
            test_region: test_region.into(),
            pixel_accuracy: pixel_accuracy(&confusion)?,
            per_class_accuracy: per_class_accuracy(&confusion),
            per_class_iou: scores.per_class,
            mean_iou: scores.mean,
            n_pixels: confusion.total(),
            confusion,
        })
    }

    pub fn class_accuracy(&self, class: Class) -> Option<f64> {
        self.per_class_accuracy[class.index()]
    }

    pub fn class_iou(&self, class: Class) -> Option<f64> {
        self.per_class_iou[class.index()]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Runs `forest` on a raw (unstandardized) dataset and scores it.
pub fn evaluate(
    forest: &Forest,
    raw: &PixelDataset,
    train_region: &str,
    test_region: &str,
) -> Result<EvalReport, EvalError> {
    let preds = forest.predict_dataset(raw)?;
    let predicted: Vec<usize> = preds.iter().map(|p| p.class.index()).collect();
    let truth: Vec<usize> = raw.labels().iter().map(|c| c.index()).collect();
    let cm = confusion_matrix(&predicted, &truth, Class::COUNT)?;
    Ok(EvalReport::from_confusion(cm, train_region, test_region)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    Report(EvalReport),
    Error(String),
}

impl Cell {
    pub fn report(&self) -> Option<&EvalReport> {
        match self {
            Cell::Report(r) => Some(r),
            Cell::Error(_) => None,
        }
    }
}

/// Models (rows) evaluated on datasets (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `cells[model][dataset]`.
    pub cells: Vec<Vec<Cell>>,
}

/// Evaluates every model on every raw dataset; each model standardizes with
/// its own stored statistics. A failing pairing becomes an error cell.
pub fn cross_region_matrix(
    models: &[(String, Forest)],
    datasets: &[(String, PixelDataset)],
) -> CrossEvalTable {
    let cells = models
        .iter()
        .map(|(model_name, forest)| {
            datasets
                .iter()
                .map(|(data_name, data)| match evaluate(forest, data, model_name, data_name) {
                    Ok(r) => Cell::Report(r),
                    Err(e) => Cell::Error(e.to_string()),
                })
                .collect()
        })
        .collect();
    CrossEvalTable {
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        datasets: datasets.iter().map(|(n, _)| n.clone()).collect(),
        cells,
    }
}

pub const CELLS_CSV_HEADER: &str =
    "train_region,test_region,pixel_acc,acc_env,acc_inf,iou_env,iou_inf,mean_iou,n_pixels";

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn pct_opt(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_else(|| "NA".to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One line of the flat per-cell CSV (no trailing newline).
pub fn report_csv_row(r: &EvalReport) -> String {
    [
        csv_field(&r.train_region),
        csv_field(&r.test_region),
        pct(r.pixel_accuracy),
        pct_opt(r.class_accuracy(Class::Environment)),
        pct_opt(r.class_accuracy(Class::Informal)),
        pct_opt(r.class_iou(Class::Environment)),
        pct_opt(r.class_iou(Class::Informal)),
        pct(r.mean_iou),
        r.n_pixels.to_string(),
    ]
    .join(",")
}

impl CrossEvalTable {
    pub fn get(&self, model: &str, dataset: &str) -> Option<&Cell> {
        let i = self.models.iter().position(|m| m == model)?;
        let j = self.datasets.iter().position(|d| d == dataset)?;
        Some(&self.cells[i][j])
    }

    pub fn error_count(&self) -> usize {
        self.cells
            .iter()
            .flatten()
            .filter(|c| matches!(c, Cell::Error(_)))
            .count()
    }

    /// Flat table, one line per (model, dataset) pair.
    pub fn cells_csv(&self) -> String {
        let mut out = format!("{CELLS_CSV_HEADER}\n");
        for (i, model) in self.models.iter().enumerate() {
            for (j, data) in self.datasets.iter().enumerate() {
                match &self.cells[i][j] {
                    Cell::Report(r) => out.push_str(&report_csv_row(r)),
                    Cell::Error(_) => {
                        let _ = write!(
                            out,
                            "{},{},ERROR,ERROR,ERROR,ERROR,ERROR,ERROR,",
                            csv_field(model),
                            csv_field(data)
                        );
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    fn grid_csv(&self, rows: &[(&str, &dyn Fn(&EvalReport) -> Option<f64>)]) -> String {
        let mut out = String::from("model,row");
        for d in &self.datasets {
            out.push(',');
            out.push_str(&csv_field(d));
        }
        out.push('\n');
        for (i, model) in self.models.iter().enumerate() {
            for (label, metric) in rows {
                out.push_str(&csv_field(model));
                out.push(',');
                out.push_str(label);
                for cell in &self.cells[i] {
                    out.push(',');
                    match cell {
                        Cell::Report(r) => out.push_str(&pct_opt(metric(r))),
                        Cell::Error(_) => out.push_str("ERROR"),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// Per-class accuracy grid: an `Informal` and an `Environment` row per
    /// model, one column per dataset, percentages.
    pub fn accuracy_table_csv(&self) -> String {
        self.grid_csv(&[
            ("Informal", &|r| r.class_accuracy(Class::Informal)),
            ("Environment", &|r| r.class_accuracy(Class::Environment)),
        ])
    }

    /// IoU grid: informal, environment and mean IoU rows per model.
    pub fn iou_table_csv(&self) -> String {
        self.grid_csv(&[
            ("Informal IOU", &|r| r.class_iou(Class::Informal)),
            ("Environment IOU", &|r| r.class_iou(Class::Environment)),
            ("Mean IOU", &|r| Some(r.mean_iou)),
        ])
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table is plain data");
        s.push('\n');
        s
    }
}
