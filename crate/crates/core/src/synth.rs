//! Synthetic scenes and brute-force oracles.
//!
//! A scene is a 10-band raster whose pixels belong to the environment class
//! except inside rectangular informal regions. Each class draws its spectra
//! from an independent Gaussian per band. The informal mean sits
//! `separation` units (measured in the largest per-band standard deviation)
//! away from the environment mean along `direction`, plus an optional
//! additive `shift` used to fake a different geography.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cca::{component_count, orient_components, CcaError, CcaResult, Ridge};
use crate::raster::{
    BandInfo, Class, Label, LabelMask, MultiSpectralRaster, RasterError, Resolution, DEFAULT_BANDS,
};
use crate::sampling::PixelDataset;
use crate::seed;

pub const SCENE_BANDS: usize = DEFAULT_BANDS.len();

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("scene spec could not be read: {0}")]
    Parse(String),
    #[error("class {} is absent from the training rows", .0.name())]
    ClassAbsent(Class),
    #[error("no test rows to score")]
    EmptyTest,
    #[error("train has {train} features but test has {test}")]
    FeatureMismatch { train: usize, test: usize },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub class: Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub label_fraction: f64,
    pub separation: f64,
    pub environment: ClassModel,
    pub informal_std: Vec<f64>,
    /// Direction of the informal offset; normalized before use. Defaults to
    /// equal weight on every band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    /// Extra additive offset on the informal mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Vec<f64>>,
    #[serde(default)]
    pub regions: Vec<RegionRect>,
}

/// Rough top-of-atmosphere reflectances of vegetated ground, bands 2..12.
const ENV_MEAN: [f64; SCENE_BANDS] = [0.09, 0.08, 0.07, 0.11, 0.19, 0.23, 0.25, 0.27, 0.21, 0.13];

impl SceneSpec {
    /// A scene with three informal blocks covering a bit over a quarter of
    /// the area, 0.02 standard deviation per band for both classes.
    pub fn demo(width: usize, height: usize, separation: f64, label_fraction: f64, seed: u64) -> Self {
        let block = |fx: f64, fy: f64, fw: f64, fh: f64| RegionRect {
            x: (fx * width as f64) as usize,
            y: (fy * height as f64) as usize,
            width: ((fw * width as f64) as usize).max(1),
            height: ((fh * height as f64) as usize).max(1),
            class: Class::Informal,
        };
        SceneSpec {
            width,
            height,
            seed,
            label_fraction,
            separation,
            environment: ClassModel {
                mean: ENV_MEAN.to_vec(),
                std: vec![0.02; SCENE_BANDS],
            },
            informal_std: vec![0.02; SCENE_BANDS],
            direction: None,
            shift: None,
            regions: vec![
                block(0.1, 0.1, 0.3, 0.4),
                block(0.55, 0.2, 0.35, 0.25),
                block(0.3, 0.65, 0.4, 0.25),
            ],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec is plain data")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.width == 0 || self.height == 0 {
            return bad("scene dimensions must be positive".into());
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return bad(format!("label_fraction {} outside (0, 1]", self.label_fraction));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!("separation {} must be finite and >= 0", self.separation));
        }
        let vectors = [
            ("environment.mean", Some(&self.environment.mean)),
            ("environment.std", Some(&self.environment.std)),
            ("informal_std", Some(&self.informal_std)),
            ("direction", self.direction.as_ref()),
            ("shift", self.shift.as_ref()),
        ];
        for (name, v) in vectors {
            let Some(v) = v else { continue };
            if v.len() != SCENE_BANDS {
                return bad(format!("{name} needs {SCENE_BANDS} values, got {}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} has a non-finite value"));
            }
        }
        if self
            .environment
            .std
            .iter()
            .chain(&self.informal_std)
            .any(|&s| s <= 0.0)
        {
            return bad("standard deviations must be positive".into());
        }
        if let Some(d) = &self.direction {
            if d.iter().all(|&x| x == 0.0) {
                return bad("direction must be non-zero".into());
            }
        }
        for r in &self.regions {
            if r.width == 0
                || r.height == 0
                || r.x + r.width > self.width
                || r.y + r.height > self.height
            {
                return bad(format!("region {r:?} is empty or out of bounds"));
            }
        }
        Ok(())
    }

    pub fn informal_mean(&self) -> Vec<f64> {
        let scale = self
            .environment
            .std
            .iter()
            .chain(&self.informal_std)
            .fold(0.0f64, |a, &b| a.max(b));
        let dir = self
            .direction
            .clone()
            .unwrap_or_else(|| vec![1.0; SCENE_BANDS]);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let shift = self.shift.clone().unwrap_or_else(|| vec![0.0; SCENE_BANDS]);
        self.environment
            .mean
            .iter()
            .zip(&dir)
            .zip(&shift)
            .map(|((m, d), s)| m + self.separation * scale * d / norm + s)
            .collect()
    }

    /// Class of every pixel, row-major. Later regions paint over earlier ones.
    pub fn class_layout(&self) -> Vec<Class> {
        let mut grid = vec![Class::Environment; self.width * self.height];
        for r in &self.regions {
            for y in r.y..r.y + r.height {
                grid[y * self.width + r.x..y * self.width + r.x + r.width].fill(r.class);
            }
        }
        grid
    }
}

/// Draws the raster and the annotation mask. Identical specs give identical
/// output.
pub fn generate_scene(spec: &SceneSpec) -> Result<(MultiSpectralRaster, LabelMask), SynthError> {
    spec.validate()?;
    let n = spec.width * spec.height;
    let layout = spec.class_layout();
    let informal = ClassModel {
        mean: spec.informal_mean(),
        std: spec.informal_std.clone(),
    };
    let models = [&spec.environment, &informal];

    let mut rng = seed::rng(seed::derive(spec.seed, 1));
    let mut data = vec![Vec::with_capacity(n); SCENE_BANDS];
    for class in &layout {
        let m = models[class.index()];
        for (b, grid) in data.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            grid.push((m.mean[b] + m.std[b] * z) as f32);
        }
    }
    let bands = DEFAULT_BANDS
        .iter()
        .map(|&b| BandInfo::new(b, Resolution::M10))
        .collect();
    let raster = MultiSpectralRaster::new(spec.width, spec.height, bands, data, None)?;

    let n_labeled = ((spec.label_fraction * n as f64).round() as usize).clamp(1, n);
    let mut labels = vec![Label::Unlabeled; n];
    let mut rng = seed::rng(seed::derive(spec.seed, 2));
    for p in index::sample(&mut rng, n, n_labeled) {
        labels[p] = layout[p].into();
    }
    let mask = LabelMask::new(spec.width, spec.height, labels)?;
    Ok((raster, mask))
}

fn class_means(train: &PixelDataset) -> Result<[Vec<f64>; 2], SynthError> {
    let d = train.n_features();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (row, label) in train.rows().zip(train.labels()) {
        let c = label.index();
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(row) {
            *s += v;
        }
    }
    for class in [Class::Environment, Class::Informal] {
        let c = class.index();
        if counts[c] == 0 {
            return Err(SynthError::ClassAbsent(class));
        }
        sums[c].iter_mut().for_each(|s| *s /= counts[c] as f64);
    }
    Ok(sums)
}

/// Nearest class mean; equidistant rows go to environment.
pub fn nearest_centroid_predict(
    train: &PixelDataset,
    test: &PixelDataset,
) -> Result<Vec<Class>, SynthError> {
    if train.n_features() != test.n_features() {
        return Err(SynthError::FeatureMismatch {
            train: train.n_features(),
            test: test.n_features(),
        });
    }
    let [env, inf] = class_means(train)?;
    let dist = |row: &[f64], m: &[f64]| -> f64 {
        row.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    Ok(test
        .rows()
        .map(|row| {
            if dist(row, &inf) < dist(row, &env) {
                Class::Informal
            } else {
                Class::Environment
            }
        })
        .collect())
}

/// Held-out accuracy of the nearest-centroid baseline.
pub fn nearest_centroid_oracle(train: &PixelDataset, test: &PixelDataset) -> Result<f64, SynthError> {
    if test.is_empty() {
        return Err(SynthError::EmptyTest);
    }
    let preds = nearest_centroid_predict(train, test)?;
    let hits = preds.iter().zip(test.labels()).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / test.len() as f64)
}

/// Two diagonal bands of points in 2-D. Rows of class `c` satisfy
/// `x1 + x2 = 2a` with `|a|` in `[sqrt(2), sqrt(2) + 1]` (sign by class), so
/// the classes sit at least 4 apart across the line `x1 + x2 = 0`. Along the
/// band they spread over 12 units, which makes the per-axis class ranges
/// overlap.
pub fn diagonal_dataset(n_per_class: usize, seed: u64) -> PixelDataset {
    let mut rng = seed::rng(seed);
    let mut features = Vec::with_capacity(4 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for class in [Class::Environment, Class::Informal] {
        let sign = if class == Class::Informal { 1.0 } else { -1.0 };
        for _ in 0..n_per_class {
            let a = sign * (std::f64::consts::SQRT_2 + rng.random::<f64>());
            let u = rng.random_range(-6.0..6.0);
            features.extend([a + u, a - u]);
            labels.push(class);
        }
    }
    PixelDataset::new(DEFAULT_BANDS[..2].to_vec(), features, labels)
        .expect("rows are well formed")
}

/// Best training accuracy of any single threshold on one feature, found by
/// trying every cut between distinct sorted values (and the empty cut) in
/// both orientations.
pub fn axis_aligned_ceiling(data: &PixelDataset) -> f64 {
    let n = data.len();
    if n == 0 {
        return 0.0;
    }
    let total_inf = data.class_counts()[Class::Informal.index()];
    let mut best = 0usize;
    for j in 0..data.n_features() {
        let mut order: Vec<(f64, Class)> = data.rows().map(|r| r[j]).zip(data.labels().iter().copied()).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        // informal rows at or below the cut so far
        let mut inf_left = 0usize;
        for i in 0..=n {
            if i == 0 || i == n || order[i - 1].0 < order[i].0 {
                let env_left = i - inf_left;
                let env_right = (n - total_inf) - env_left;
                let inf_right = total_inf - inf_left;
                // left environment / right informal, or the reverse
                best = best.max(env_left + inf_right).max(inf_left + env_right);
            }
            if i < n && order[i].1 == Class::Informal {
                inf_left += 1;
            }
        }
    }
    best as f64 / n as f64
}

/// CCA straight from the generalized eigenproblem, for checking
/// [`crate::cca::compute_cca`].
///
/// Covariances are accumulated with plain loops, the ridged problem is
/// reduced to `Cxx^-1 Cxy Cyy^-1 Cyx a = rho^2 a` with LU inverses, and
/// the eigenvalues of that non-symmetric matrix come from a real Schur
/// decomposition. Meant for small instances only.
pub fn brute_force_cca(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: Ridge) -> Result<CcaResult, CcaError> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(CcaError::RowMismatch { x: n, y: y.nrows() });
    }
    if n < 2 {
        return Err(CcaError::TooFewRows(n));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CcaError::NonFinite("feature"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CcaError::NonFinite("label"));
    }
    let ridge = ridge.validate()?;
    let (d, c) = (x.ncols(), y.ncols());
    let k = component_count(x, y);

    let mean = |m: &DMatrix<f64>, j: usize| (0..n).map(|i| m[(i, j)]).sum::<f64>() / n as f64;
    let mx: Vec<f64> = (0..d).map(|j| mean(x, j)).collect();
    let my: Vec<f64> = (0..c).map(|j| mean(y, j)).collect();
    let cov = |a: &DMatrix<f64>, ma: &[f64], b: &DMatrix<f64>, mb: &[f64]| {
        DMatrix::from_fn(a.ncols(), b.ncols(), |p, q| {
            let mut s = 0.0;
            for i in 0..n {
                s += (a[(i, p)] - ma[p]) * (b[(i, q)] - mb[q]);
            }
            s / (n - 1) as f64
        })
    };
    let mut cxx = cov(x, &mx, x, &mx);
    let mut cyy = cov(y, &my, y, &my);
    let cxy = cov(x, &mx, y, &my);
    ridge.apply(&mut cxx);
    ridge.apply(&mut cyy);
    // LU rather than the closed-form small-matrix inverse: the ridged label
    // covariance is nearly singular and a determinant-based inverse would
    // carry its cancellation error into every entry.
    let cxx_inv = cxx
        .clone()
        .lu()
        .try_inverse()
        .ok_or(CcaError::NotPositiveDefinite("feature"))?;
    let cyy_inv = cyy
        .clone()
        .lu()
        .try_inverse()
        .ok_or(CcaError::NotPositiveDefinite("label"))?;
    let cyx = cxy.transpose();
    let a = &cxx_inv * &cxy * &cyy_inv * &cyx;

    let mut eig: Vec<f64> = a.complex_eigenvalues().iter().map(|z| z.re).collect();
    eig.sort_by(|p, q| q.total_cmp(p));
    eig.truncate(k);

    let mut proj_x = DMatrix::zeros(d, k);
    let mut proj_y = DMatrix::zeros(c, k);
    let mut correlations = Vec::with_capacity(k);
    for (j, &mu) in eig.iter().enumerate() {
        let rho = mu.max(0.0).sqrt();
        // eigenvector: right singular vector of (A - mu I) with the smallest
        // singular value
        let shifted = &a - DMatrix::identity(d, d) * mu;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let smallest = svd.singular_values.imin();
        let mut va = v_t.row(smallest).transpose();
        let scale = (va.transpose() * &cxx * &va)[(0, 0)].sqrt();
        va /= scale;
        let mut vb = &cyy_inv * &cyx * &va;
        let bnorm = (vb.transpose() * &cyy * &vb)[(0, 0)].sqrt();
        if bnorm > 0.0 {
            vb /= bnorm;
        }
        proj_x.set_column(j, &va);
        proj_y.set_column(j, &vb);
        correlations.push(rho);
    }
    orient_components(&mut proj_x, &mut proj_y);
    Ok(CcaResult {
        proj_x,
        proj_y,
        correlations,
    })
}
