//! Informal-settlement mapping from multispectral imagery with canonical
//! correlation forests.

pub mod cca;
pub mod forest;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod sampling;
pub mod seed;
pub mod synth;

pub use cca::{compute_cca, CcaResult, Ridge};
pub use forest::{
    deserialize_forest, predict_map, serialize_forest, train_forest, CcTree, Forest, ForestConfig,
    Prediction,
};
pub use metrics::{confusion_matrix, cross_region_matrix, evaluate, ConfusionMatrix, EvalReport};
pub use raster::{
    load_class_map, load_mask, load_raster, save_class_map, save_mask, save_raster, BandId, Class,
    ClassMap, Label, LabelMask, MultiSpectralRaster,
};
pub use sampling::{
    balance_classes, extract_labeled_pixels, split_train_test, PixelDataset, Standardizer,
};
pub use synth::{generate_scene, SceneSpec};
