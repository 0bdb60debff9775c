#![allow(dead_code)]

use ccfmap::cca::one_hot;
use ccfmap::raster::{BandId, Class, DEFAULT_BANDS};
use ccfmap::sampling::PixelDataset;
use ccfmap::seed;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Random two-class CCA instance: N in [8, 50], D in [1, 6], labels from
/// both classes, features shifted per class.
pub fn cca_instance(case: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = seed::rng(seed::derive(0xCCA0, case));
    let n = rng.random_range(8..=50);
    let d = rng.random_range(1..=6);
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let scale: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..3.0)).collect();
    let x = DMatrix::from_fn(n, d, |i, j| {
        let z: f64 = rng.sample(StandardNormal);
        scale[j] * z + shift[j] * labels[i] as f64
    });
    (x, one_hot(&labels, 2).unwrap())
}

/// Column-wise `a_j * x + b_j` with `|a_j|` in [0.2, 5], random sign and
/// offsets in [-50, 50].
pub fn affine(x: &DMatrix<f64>, case: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed::derive(0xAFF1, case));
    let d = x.ncols();
    let a: Vec<f64> = (0..d)
        .map(|_| {
            let m = rng.random_range(0.2..5.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    let b: Vec<f64> = (0..d).map(|_| rng.random_range(-50.0..50.0)).collect();
    DMatrix::from_fn(x.nrows(), d, |i, j| a[j] * x[(i, j)] + b[j])
}

pub fn dataset_from_matrix(x: &DMatrix<f64>, labels: &[Class]) -> PixelDataset {
    let d = x.ncols();
    let bands: Vec<BandId> = DEFAULT_BANDS[..d].to_vec();
    let mut features = Vec::with_capacity(x.len());
    for i in 0..x.nrows() {
        features.extend(x.row(i).iter().copied());
    }
    PixelDataset::new(bands, features, labels.to_vec()).unwrap()
}

pub fn dataset_matrix(data: &PixelDataset) -> DMatrix<f64> {
    DMatrix::from_row_slice(data.len(), data.n_features(), data.features())
}

/// Overlapping Gaussian classes with `n` rows and `d` features.
pub fn gaussian_dataset(n: usize, d: usize, gap: f64, case: u64) -> PixelDataset {
    let mut rng = seed::rng(seed::derive(0x6A55, case));
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = if i % 2 == 0 { Class::Environment } else { Class::Informal };
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let mu = if class == Class::Informal { gap / (j + 1) as f64 } else { 0.0 };
            features.push(z + mu);
        }
        labels.push(class);
    }
    PixelDataset::new(DEFAULT_BANDS[..d].to_vec(), features, labels).unwrap()
}

/// Balanced, split raw rows of a generated scene.
pub fn scene_split(spec: &ccfmap::SceneSpec) -> (PixelDataset, PixelDataset) {
    use ccfmap::sampling::{balance_classes, extract_labeled_pixels, split_train_test};
    use ccfmap::seed::streams;
    let (raster, mask) = ccfmap::generate_scene(spec).unwrap();
    let rows = extract_labeled_pixels(&raster, &mask).unwrap().dataset;
    let balanced = balance_classes(&rows, seed::derive(spec.seed, streams::BALANCE)).unwrap();
    split_train_test(&balanced, 0.8, seed::derive(spec.seed, streams::SPLIT)).unwrap()
}

/// Held-out accuracy of a default forest trained on the scene.
pub fn forest_accuracy(spec: &ccfmap::SceneSpec, n_trees: usize) -> f64 {
    let (train, test) = scene_split(spec);
    let config = ccfmap::ForestConfig {
        n_trees,
        seed: spec.seed,
        ..Default::default()
    };
    let forest = ccfmap::pipeline::fit_forest(&train, &config).unwrap();
    ccfmap::evaluate(&forest, &test, "a", "a").unwrap().pixel_accuracy
}

/// Nearest-centroid accuracy on the standardized split.
pub fn centroid_accuracy(spec: &ccfmap::SceneSpec) -> f64 {
    let (train, test) = scene_split(spec);
    let std = ccfmap::Standardizer::fit(&train).unwrap();
    ccfmap::synth::nearest_centroid_oracle(&std.apply(&train).unwrap(), &std.apply(&test).unwrap())
        .unwrap()
}

/// Pattern orthogonal to the default all-ones separation direction.
pub fn alternating_shift(amount: f64) -> Vec<f64> {
    (0..10).map(|i| if i % 2 == 0 { amount } else { -amount }).collect()
}

/// Two regions sharing the environment model but with opposite informal
/// shifts; returns the 2x2 accuracy grid `acc[model][dataset]`.
pub fn shift_grid(size: usize, shift: f64, seed: u64) -> [[f64; 2]; 2] {
    let region = |sign: f64, s: u64| {
        let mut spec = ccfmap::SceneSpec::demo(size, size, 3.0, 0.2, s);
        spec.shift = Some(alternating_shift(sign * shift));
        spec
    };
    let specs = [region(1.0, seed), region(-1.0, seed + 1)];
    let splits: Vec<_> = specs.iter().map(scene_split).collect();
    let forests: Vec<_> = splits
        .iter()
        .zip(&specs)
        .map(|((train, _), spec)| {
            let config = ccfmap::ForestConfig {
                seed: spec.seed,
                ..Default::default()
            };
            ccfmap::pipeline::fit_forest(train, &config).unwrap()
        })
        .collect();
    let mut acc = [[0.0; 2]; 2];
    for (m, forest) in forests.iter().enumerate() {
        for (d, (_, test)) in splits.iter().enumerate() {
            acc[m][d] = ccfmap::evaluate(forest, test, "m", "d").unwrap().pixel_accuracy;
        }
    }
    acc
}
