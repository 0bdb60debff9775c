//! Turns a synthetic scene into balanced, standardized train and test rows.
//!
//! cargo run --example sampling

use std::error::Error;

use ccfmap::sampling::{balance_classes, extract_labeled_pixels, split_train_test, Standardizer};
use ccfmap::seed::{self, streams};
use ccfmap::SceneSpec;

fn main() -> Result<(), Box<dyn Error>> {
    let spec = SceneSpec::demo(64, 64, 4.0, 0.3, 3);
    let (raster, mask) = ccfmap::generate_scene(&spec)?;

    let extraction = extract_labeled_pixels(&raster, &mask)?;
    let rows = extraction.dataset;
    let [env, inf] = rows.class_counts();
    println!("labeled rows: {} ({env} environment, {inf} informal)", rows.len());

    let balanced = balance_classes(&rows, seed::derive(spec.seed, streams::BALANCE))?;
    println!("balanced: {:?}", balanced.class_counts());

    let (train, test) = split_train_test(&balanced, 0.8, seed::derive(spec.seed, streams::SPLIT))?;
    println!("train {:?}, test {:?}", train.class_counts(), test.class_counts());

    // statistics come from the training rows only
    let std = Standardizer::fit(&train)?;
    let z = std.apply(&test)?;
    println!("first standardized test row: {:.3?}", z.row(0));

    let mut csv = Vec::new();
    train.select(&[0, 1, 2]).write_csv(&mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}
