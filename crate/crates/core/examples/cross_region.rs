//! Trains one model per synthetic region and evaluates every model on every
//! region. The regions share an environment model but shift the informal
//! class in opposite directions, so models lose accuracy away from home.
//!
//! cargo run --example cross_region [-- SHIFT]

use std::error::Error;

use ccfmap::pipeline::{cmd_crosseval, cmd_train, synth_to_dir, PipelineConfig};
use ccfmap::SceneSpec;

fn main() -> Result<(), Box<dyn Error>> {
    let shift: f64 = std::env::args().nth(1).map_or(Ok(0.015), |s| s.parse())?;
    let dir = std::env::temp_dir().join("ccfmap-cross-region");
    let (mut models, mut configs) = (Vec::new(), Vec::new());
    for (name, sign, seed) in [("north", 1.0, 11), ("south", -1.0, 13)] {
        let mut spec = SceneSpec::demo(128, 128, 3.0, 0.2, seed);
        spec.shift = Some((0..10).map(|b| if b % 2 == 0 { sign * shift } else { -sign * shift }).collect());
        let synth = synth_to_dir(&spec, name, &dir.join(name))?;
        let cfg = PipelineConfig::load(&synth.config)?;
        let trained = cmd_train(&cfg)?;
        models.push(trained.model_path);
        configs.push(synth.config);
    }
    let table = cmd_crosseval(&models, &configs, &dir.join("crosseval"))?;
    print!("{}", table.accuracy_table_csv());
    print!("{}", table.iou_table_csv());
    println!("tables written to {}", dir.join("crosseval").display());
    Ok(())
}
