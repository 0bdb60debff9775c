//! Trains a forest on a synthetic scene, scores it on the held-out rows and
//! round-trips it through the JSON model format.
//!
//! cargo run --example train_forest [-- N_TREES]

use std::error::Error;

use ccfmap::sampling::{balance_classes, extract_labeled_pixels, split_train_test, Standardizer};
use ccfmap::seed::{self, streams};
use ccfmap::{deserialize_forest, evaluate, serialize_forest, train_forest, ForestConfig, SceneSpec};

fn main() -> Result<(), Box<dyn Error>> {
    let n_trees = std::env::args().nth(1).map_or(Ok(10), |s| s.parse())?;
    let spec = SceneSpec::demo(128, 128, 4.0, 0.2, 9);
    let (raster, mask) = ccfmap::generate_scene(&spec)?;
    let rows = extract_labeled_pixels(&raster, &mask)?.dataset;
    let balanced = balance_classes(&rows, seed::derive(spec.seed, streams::BALANCE))?;
    let (train, test) = split_train_test(&balanced, 0.8, seed::derive(spec.seed, streams::SPLIT))?;

    let std = Standardizer::fit(&train)?;
    let config = ForestConfig {
        n_trees,
        seed: spec.seed,
        ..ForestConfig::default()
    };
    let forest = train_forest(&std.apply(&train)?, &config)?
        .with_standardizer(std)?
        .with_region("demo");
    let depths: Vec<usize> = forest.trees.iter().map(|t| t.depth()).collect();
    println!("{} trees, depths {depths:?}", forest.trees.len());

    let report = evaluate(&forest, &test, "demo", "demo")?;
    println!(
        "held-out: accuracy {:.2}%, mean IoU {:.2}% over {} rows",
        100.0 * report.pixel_accuracy,
        100.0 * report.mean_iou,
        report.n_pixels
    );

    let path = std::env::temp_dir().join("ccfmap-demo-model.json");
    serialize_forest(&forest, &path)?;
    let back = deserialize_forest(&path)?;
    println!("model round trip identical: {} ({})", back == forest, path.display());

    let p = back.predict_raw(test.row(0))?;
    println!("first test row: {:?} with p(informal) = {:.2}", p.class, p.probability_informal);
    Ok(())
}
