//! Full run on a generated scene: synthesize, train, predict the whole map
//! and time each stage.
//!
//! cargo run --release --example end_to_end [-- SIZE]

use std::error::Error;
use std::time::Instant;

use ccfmap::pipeline::{cmd_predict, cmd_train, synth_to_dir, PipelineConfig};
use ccfmap::raster::{load_class_map, load_mask, Label};
use ccfmap::SceneSpec;

fn main() -> Result<(), Box<dyn Error>> {
    let size: usize = std::env::args().nth(1).map_or(Ok(512), |s| s.parse())?;
    let dir = std::env::temp_dir().join("ccfmap-end-to-end");
    let spec = SceneSpec::demo(size, size, 6.0, 0.05, 2024);

    let t = Instant::now();
    let synth = synth_to_dir(&spec, "scene", &dir)?;
    println!("synth   {:>8.3} s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let cfg = PipelineConfig::load(&synth.config)?;
    let trained = cmd_train(&cfg)?;
    println!(
        "train   {:>8.3} s  ({} rows, {} trees)",
        t.elapsed().as_secs_f64(),
        trained.n_train,
        trained.forest.trees.len()
    );

    let t = Instant::now();
    let map_path = dir.join("map.pgm");
    let predicted = cmd_predict(&trained.model_path, &synth.raster, &map_path)?;
    println!(
        "predict {:>8.3} s  ({} pixels, {:.1}% informal)",
        t.elapsed().as_secs_f64(),
        size * size,
        100.0 * predicted.informal_fraction
    );

    println!(
        "held-out accuracy {:.2}%, mean IoU {:.2}%",
        100.0 * trained.report.pixel_accuracy,
        100.0 * trained.report.mean_iou
    );
    let map = load_class_map(&map_path)?;
    let mask = load_mask(&synth.mask)?;
    let (mut agree, mut labeled) = (0, 0);
    for (c, l) in map.classes().iter().zip(mask.labels()) {
        if *l != Label::Unlabeled {
            labeled += 1;
            agree += usize::from(Label::from(*c) == *l);
        }
    }
    println!("map agrees with {agree} of {labeled} annotated pixels");
    println!("outputs in {}", dir.display());
    Ok(())
}
