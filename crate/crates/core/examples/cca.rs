//! Canonical correlation analysis of features against one-hot labels,
//! checked against the slow eigenvalue reference.
//!
//! cargo run --example cca

use std::error::Error;

use ccfmap::cca::{compute_cca, one_hot, Ridge};
use ccfmap::synth::brute_force_cca;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn Error>> {
    let mut rng = ccfmap::seed::rng(42);
    let (n, d) = (40, 4);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let shift = [1.5, -0.5, 0.0, 0.8];
    let x = DMatrix::from_fn(n, d, |i, j| {
        let z: f64 = rng.sample(StandardNormal);
        z + shift[j] * labels[i] as f64
    });
    let y = one_hot(&labels, 2)?;

    let fast = compute_cca(&x, &y, Ridge::default())?;
    let slow = brute_force_cca(&x, &y, Ridge::default())?;
    println!("components: {}", fast.n_components());
    println!("correlation:           {:.12}", fast.correlations[0]);
    println!("reference correlation: {:.12}", slow.correlations[0]);
    println!("difference: {:.2e}", (fast.correlations[0] - slow.correlations[0]).abs());
    println!("feature direction: {:.4?}", fast.proj_x.column(0).normalize().as_slice());
    Ok(())
}
