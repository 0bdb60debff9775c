//! Two classes split by the diagonal x1 + x2 = 0 with overlapping ranges on
//! each axis: one oblique cut separates them, no axis-aligned cut can.
//!
//! cargo run --example hyperplane_split

use ccfmap::forest::{grow_tree, ForestConfig, Node};
use ccfmap::raster::Class;
use ccfmap::synth::{axis_aligned_ceiling, diagonal_dataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = diagonal_dataset(100, 1);
    println!("best single axis threshold: {:.1}% accuracy", 100.0 * axis_aligned_ceiling(&data));

    let tree = grow_tree(&data, &ForestConfig::default(), 17)?;
    let hits = data
        .rows()
        .zip(data.labels())
        .filter(|(r, l)| {
            let class = if tree.informal_proportion(r) > 0.5 {
                Class::Informal
            } else {
                Class::Environment
            };
            class == **l
        })
        .count();
    println!(
        "canonical correlation tree: depth {}, {} leaves, {:.1}% accuracy",
        tree.depth(),
        tree.n_leaves(),
        100.0 * hits as f64 / data.len() as f64
    );
    if let Node::Internal { direction, threshold, .. } = &tree.nodes()[tree.root()] {
        println!("root split: {direction:.3?} . x <= {threshold:.3}");
    }
    Ok(())
}
