//! From a raster and its annotation mask to balanced, standardized
//! train/test pixel datasets.
//!
//! The protocol is: keep the ten classification bands, bring 20m bands onto
//! the 10m grid, read one spectrum per annotated pixel, balance the two
//! classes, split each class 80/20 at random, then standardize every feature
//! with statistics from the training rows only.

use std::io::{self, Write};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::raster::{
    BandId, BandInfo, Class, LabelMask, MultiSpectralRaster, RasterError, Resolution,
};
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum SamplingError {
    #[error("band {0} is not present in the raster")]
    MissingBand(BandId),
    #[error("band {0} is stored at 60m; only 10m and 20m bands can be resampled")]
    CoarseBand(BandId),
    #[error("raster must be on the common 10m grid before extraction")]
    NotCommonGrid,
    #[error("mask is {mask_w}x{mask_h} but the raster grid is {raster_w}x{raster_h}")]
    DimensionMismatch {
        mask_w: usize,
        mask_h: usize,
        raster_w: usize,
        raster_h: usize,
    },
    #[error("class {} has no rows", .0.name())]
    ClassAbsent(Class),
    #[error("class {} has {} rows; at least 2 are needed to split", .0.name(), .1)]
    TooFewRows(Class, usize),
    #[error("train fraction {fraction} leaves an empty side for class {}", .class.name())]
    DegenerateSplit { fraction: f64, class: Class },
    #[error("cannot fit a standardizer on an empty training set")]
    EmptyTrainingSet,
    #[error("expected {expected} features, got {actual}")]
    FeatureCount { expected: usize, actual: usize },
    #[error("row {row} contains a non-finite feature")]
    NonFinite { row: usize },
    #[error("{features} feature values do not form {labels} rows of {dims}")]
    Shape {
        features: usize,
        labels: usize,
        dims: usize,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Pixel coordinates on the 10m grid a dataset row was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelTag {
    pub x: u32,
    pub y: u32,
}

/// N x D feature matrix (row-major) with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDataset {
    bands: Vec<BandId>,
    features: Vec<f64>,
    labels: Vec<Class>,
    provenance: Option<Vec<PixelTag>>,
    region: Option<String>,
}

impl PixelDataset {
    pub fn new(
        bands: Vec<BandId>,
        features: Vec<f64>,
        labels: Vec<Class>,
    ) -> Result<Self, SamplingError> {
        let dims = bands.len();
        if dims == 0 || features.len() != labels.len() * dims {
            return Err(SamplingError::Shape {
                features: features.len(),
                labels: labels.len(),
                dims,
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(SamplingError::NonFinite { row: i / dims });
        }
        Ok(Self {
            bands,
            features,
            labels,
            provenance: None,
            region: None,
        })
    }

    pub fn with_provenance(mut self, tags: Vec<PixelTag>) -> Self {
        assert_eq!(tags.len(), self.labels.len(), "one tag per row");
        self.provenance = Some(tags);
        self
    }

    pub fn with_region(mut self, region: impl Into<String>) -> Self {
        self.region = Some(region.into());
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.bands.len()
    }

    pub fn bands(&self) -> &[BandId] {
        &self.bands
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features())
    }

    pub fn labels(&self) -> &[Class] {
        &self.labels
    }

    pub fn provenance(&self) -> Option<&[PixelTag]> {
        self.provenance.as_deref()
    }

    pub fn region(&self) -> Option<&str> {
        self.region.as_deref()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PixelDataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        PixelDataset {
            bands: self.bands.clone(),
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: self
                .provenance
                .as_ref()
                .map(|p| indices.iter().map(|&i| p[i]).collect()),
            region: self.region.clone(),
        }
    }

    fn indices_of(&self, class: Class) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    /// CSV export: `x,y,label,b2,...,b12`, one pixel per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "x,y,label")?;
        for b in &self.bands {
            write!(w, ",b{}", b.token().to_ascii_lowercase())?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            match self.provenance.as_ref().map(|p| p[i]) {
                Some(t) => write!(w, "{},{}", t.x, t.y)?,
                None => write!(w, ",")?,
            }
            write!(w, ",{}", self.labels[i].index())?;
            for v in self.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Keeps `band_ids`, in exactly that order.
pub fn select_bands(
    raster: &MultiSpectralRaster,
    band_ids: &[BandId],
) -> Result<MultiSpectralRaster, SamplingError> {
    let mut bands = Vec::with_capacity(band_ids.len());
    let mut data = Vec::with_capacity(band_ids.len());
    for &id in band_ids {
        let i = raster
            .band_index(id)
            .ok_or(SamplingError::MissingBand(id))?;
        bands.push(raster.bands()[i]);
        data.push(raster.band(i).to_vec());
    }
    Ok(MultiSpectralRaster::new(
        raster.width(),
        raster.height(),
        bands,
        data,
        raster.nodata(),
    )?
    .with_geotransform(raster.geotransform()))
}

/// Moves every band onto the 10m grid. 20m samples are replicated into the
/// 2x2 block of 10m pixels they cover.
pub fn resample_to_common_grid(
    raster: &MultiSpectralRaster,
) -> Result<MultiSpectralRaster, SamplingError> {
    if let Some(b) = raster
        .bands()
        .iter()
        .find(|b| b.native_resolution == Resolution::M60)
    {
        return Err(SamplingError::CoarseBand(b.band_id));
    }
    if raster.is_common_grid() {
        return Ok(raster.clone());
    }
    let (w, h) = (raster.width(), raster.height());
    let (bands, data) = raster.clone().into_parts();
    let mut out_bands = Vec::with_capacity(bands.len());
    let mut out_data = Vec::with_capacity(bands.len());
    for (info, grid) in bands.into_iter().zip(data) {
        match info.native_resolution {
            Resolution::M10 => out_data.push(grid),
            _ => {
                let (cw, _) = info.native_resolution.grid_dims(w, h);
                let mut fine = Vec::with_capacity(w * h);
                for y in 0..h {
                    let src = &grid[(y / 2) * cw..(y / 2 + 1) * cw];
                    fine.extend((0..w).map(|x| src[x / 2]));
                }
                out_data.push(fine);
            }
        }
        out_bands.push(BandInfo::new(info.band_id, Resolution::M10));
    }
    Ok(
        MultiSpectralRaster::new(w, h, out_bands, out_data, raster.nodata())?
            .with_geotransform(raster.geotransform()),
    )
}

/// Labeled pixels of one raster/mask pair.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub dataset: PixelDataset,
    /// Annotated pixels skipped because some band held the nodata sentinel.
    pub dropped_nodata: usize,
}

/// Reads one row per annotated mask cell, in row-major scan order.
pub fn extract_labeled_pixels(
    raster: &MultiSpectralRaster,
    mask: &LabelMask,
) -> Result<Extraction, SamplingError> {
    check_pairing(raster, mask)?;
    if !raster.is_common_grid() {
        return Err(SamplingError::NotCommonGrid);
    }
    let d = raster.bands().len();
    let grids: Vec<&[f32]> = (0..d).map(|i| raster.band(i)).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut tags = Vec::new();
    let mut dropped = 0;
    for (pixel, label) in mask.labels().iter().enumerate() {
        let Some(class) = label.class() else { continue };
        if grids.iter().any(|g| raster.is_nodata(g[pixel])) {
            dropped += 1;
            continue;
        }
        features.extend(grids.iter().map(|g| g[pixel] as f64));
        labels.push(class);
        tags.push(PixelTag {
            x: (pixel % mask.width()) as u32,
            y: (pixel / mask.width()) as u32,
        });
    }
    let dataset = PixelDataset::new(raster.band_ids(), features, labels)?.with_provenance(tags);
    Ok(Extraction {
        dataset,
        dropped_nodata: dropped,
    })
}

/// Mask and raster must share the 10m grid.
pub fn check_pairing(raster: &MultiSpectralRaster, mask: &LabelMask) -> Result<(), SamplingError> {
    if mask.width() != raster.width() || mask.height() != raster.height() {
        return Err(SamplingError::DimensionMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            raster_w: raster.width(),
            raster_h: raster.height(),
        });
    }
    Ok(())
}

/// Subsamples the larger class (uniformly, without replacement) down to the
/// size of the smaller one, then shuffles the result.
pub fn balance_classes(dataset: &PixelDataset, seed: u64) -> Result<PixelDataset, SamplingError> {
    let counts = dataset.class_counts();
    for class in [Class::Environment, Class::Informal] {
        if counts[class.index()] == 0 {
            return Err(SamplingError::ClassAbsent(class));
        }
    }
    let n = counts[0].min(counts[1]);
    let mut rng = seed::rng(seed);
    let mut keep = Vec::with_capacity(2 * n);
    for class in [Class::Environment, Class::Informal] {
        let rows = dataset.indices_of(class);
        let mut picked: Vec<usize> = index::sample(&mut rng, rows.len(), n)
            .into_iter()
            .map(|i| rows[i])
            .collect();
        picked.sort_unstable();
        keep.extend(picked);
    }
    keep.shuffle(&mut rng);
    Ok(dataset.select(&keep))
}

/// Per class, `floor(train_fraction * n)` random rows go to training and the
/// rest to testing.
pub fn split_train_test(
    dataset: &PixelDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(PixelDataset, PixelDataset), SamplingError> {
    let mut rng = seed::rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [Class::Environment, Class::Informal] {
        let mut rows = dataset.indices_of(class);
        if rows.len() < 2 {
            return Err(SamplingError::TooFewRows(class, rows.len()));
        }
        let n_train = (train_fraction * rows.len() as f64).floor();
        if !(n_train >= 1.0 && n_train < rows.len() as f64) {
            return Err(SamplingError::DegenerateSplit {
                fraction: train_fraction,
                class,
            });
        }
        rows.shuffle(&mut rng);
        let (a, b) = rows.split_at(n_train as usize);
        train.extend_from_slice(a);
        test.extend_from_slice(b);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((dataset.select(&train), dataset.select(&test)))
}

/// Per-feature centering and scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; 1 for zero-variance features.
    pub stds: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: &PixelDataset) -> Result<Standardizer, SamplingError> {
        if train.is_empty() {
            return Err(SamplingError::EmptyTrainingSet);
        }
        let d = train.n_features();
        let n = train.len() as f64;
        let mut means = vec![0.0; d];
        for row in train.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in train.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let mut stds = Vec::with_capacity(d);
        let mut zero_variance = Vec::with_capacity(d);
        for (s, m) in var.iter().zip(&means) {
            let std = (s / n).sqrt();
            // a constant column can leave rounding residue in the two-pass sum
            let flat = std <= 1e-12 * m.abs().max(1.0);
            stds.push(if flat { 1.0 } else { std });
            zero_variance.push(flat);
        }
        Ok(Standardizer {
            means,
            stds,
            zero_variance,
        })
    }

    pub fn dims(&self) -> usize {
        self.means.len()
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.stds) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply(&self, dataset: &PixelDataset) -> Result<PixelDataset, SamplingError> {
        if dataset.n_features() != self.dims() {
            return Err(SamplingError::FeatureCount {
                expected: self.dims(),
                actual: dataset.n_features(),
            });
        }
        let mut out = dataset.clone();
        for row in out.features.chunks_exact_mut(self.dims()) {
            self.apply_row(row);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Label, DEFAULT_BANDS};

    fn raster_all(bands: &[(BandId, Resolution)], w: usize, h: usize) -> MultiSpectralRaster {
        let infos: Vec<BandInfo> = bands.iter().map(|&(b, r)| BandInfo::new(b, r)).collect();
        let data = infos
            .iter()
            .enumerate()
            .map(|(k, info)| {
                let (bw, bh) = info.native_resolution.grid_dims(w, h);
                (0..bw * bh).map(|i| (k * 100 + i) as f32).collect()
            })
            .collect();
        MultiSpectralRaster::new(w, h, infos, data, Some(-1.0)).unwrap()
    }

    fn dataset(labels: &[usize]) -> PixelDataset {
        let labels: Vec<Class> = labels.iter().map(|&l| Class::from_index(l).unwrap()).collect();
        let features = (0..labels.len()).map(|i| i as f64).collect();
        let tags = (0..labels.len())
            .map(|i| PixelTag { x: i as u32, y: 0 })
            .collect();
        PixelDataset::new(vec![BandId::B2], features, labels)
            .unwrap()
            .with_provenance(tags)
    }

    #[test]
    fn default_selection_drops_atmospheric_bands() {
        let all: Vec<_> = BandId::ALL.iter().map(|&b| (b, Resolution::M10)).collect();
        let r = raster_all(&all, 2, 2);
        let s = select_bands(&r, &DEFAULT_BANDS).unwrap();
        assert_eq!(s.band_ids(), DEFAULT_BANDS.to_vec());
        assert_eq!(s.bands().len(), 10);
        for dropped in [BandId::B1, BandId::B9, BandId::B10] {
            assert!(s.band_index(dropped).is_none());
        }
        let ident = select_bands(&s, &s.band_ids()).unwrap();
        assert_eq!(ident, s);
        assert!(matches!(
            select_bands(&s, &[BandId::B10]),
            Err(SamplingError::MissingBand(BandId::B10))
        ));
    }

    #[test]
    fn single_coarse_pixel_replicates() {
        let r = MultiSpectralRaster::new(
            2,
            2,
            vec![BandInfo::new(BandId::B11, Resolution::M20)],
            vec![vec![0.3]],
            None,
        )
        .unwrap();
        let up = resample_to_common_grid(&r).unwrap();
        assert_eq!(up.band(0), &[0.3; 4]);
        assert_eq!(up.bands()[0].native_resolution, Resolution::M10);
    }

    #[test]
    fn mixed_grid_resamples_by_block_replication() {
        let r = raster_all(
            &[(BandId::B2, Resolution::M10), (BandId::B11, Resolution::M20)],
            4,
            4,
        );
        let up = resample_to_common_grid(&r).unwrap();
        assert_eq!(up.band(0), r.band(0));
        let coarse = r.band(1);
        // hand-replicated 2x2 -> 4x4 grid
        let expected: Vec<f32> = [0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3]
            .iter()
            .map(|&i| coarse[i])
            .collect();
        assert_eq!(up.band(1), expected.as_slice());
        assert_eq!(up.band(1)[0], coarse[0]);
        assert_eq!(up.band(1)[3], coarse[1]);
        assert_eq!(up.band(1)[12], coarse[2]);
        assert_eq!(up.band(1)[15], coarse[3]);

        let odd = raster_all(
            &[(BandId::B2, Resolution::M10), (BandId::B5, Resolution::M20)],
            3,
            1,
        );
        let up = resample_to_common_grid(&odd).unwrap();
        assert_eq!(up.band(1), &[100.0, 100.0, 101.0]);
    }

    #[test]
    fn sixty_metre_bands_are_refused() {
        let r = raster_all(&[(BandId::B1, Resolution::M60)], 6, 6);
        assert!(matches!(
            resample_to_common_grid(&r),
            Err(SamplingError::CoarseBand(BandId::B1))
        ));
        let r = raster_all(&[(BandId::B2, Resolution::M10)], 3, 3);
        assert_eq!(resample_to_common_grid(&r).unwrap(), r);
    }

    #[test]
    fn extraction_follows_scan_order_and_drops_nodata() {
        let r = raster_all(&[(BandId::B2, Resolution::M10), (BandId::B11, Resolution::M10)], 3, 2);
        use Label::*;
        let mask = LabelMask::new(
            3,
            2,
            vec![Informal, Environment, Informal, Unlabeled, Informal, Environment],
        )
        .unwrap();
        let ex = extract_labeled_pixels(&r, &mask).unwrap();
        assert_eq!(ex.dataset.len(), 5);
        let labels: Vec<usize> = ex.dataset.labels().iter().map(|c| c.index()).collect();
        assert_eq!(labels, vec![1, 0, 1, 1, 0]);
        assert_eq!(ex.dataset.row(3), &[4.0, 104.0]);
        assert_eq!(ex.dataset.provenance().unwrap()[3], PixelTag { x: 1, y: 1 });

        let empty = LabelMask::new(3, 2, vec![Unlabeled; 6]).unwrap();
        let ex = extract_labeled_pixels(&r, &empty).unwrap();
        assert!(ex.dataset.is_empty());

        let mut data = vec![r.band(0).to_vec(), r.band(1).to_vec()];
        data[1][4] = -1.0;
        let holed = MultiSpectralRaster::new(3, 2, r.bands().to_vec(), data, Some(-1.0)).unwrap();
        let ex = extract_labeled_pixels(&holed, &mask).unwrap();
        assert_eq!(ex.dataset.len(), 4);
        assert_eq!(ex.dropped_nodata, 1);

        let small = LabelMask::new(2, 2, vec![Unlabeled; 4]).unwrap();
        assert!(matches!(
            extract_labeled_pixels(&r, &small),
            Err(SamplingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn balancing_keeps_min_count() {
        let mut labels = vec![0; 100];
        labels.extend(vec![1; 40]);
        let d = dataset(&labels);
        let b = balance_classes(&d, 3).unwrap();
        assert_eq!(b.class_counts(), [40, 40]);
        assert_eq!(b, balance_classes(&d, 3).unwrap());

        let even = dataset(&[0, 1, 0, 1, 1, 0]);
        let b = balance_classes(&even, 9).unwrap();
        let mut xs: Vec<u32> = b.provenance().unwrap().iter().map(|t| t.x).collect();
        xs.sort_unstable();
        assert_eq!(xs, vec![0, 1, 2, 3, 4, 5]);

        assert!(matches!(
            balance_classes(&dataset(&[0, 0]), 1),
            Err(SamplingError::ClassAbsent(Class::Informal))
        ));
    }

    #[test]
    fn split_is_eighty_twenty_per_class() {
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let d = dataset(&labels);
        let (train, test) = split_train_test(&d, 0.8, 5).unwrap();
        assert_eq!(train.class_counts(), [8, 8]);
        assert_eq!(test.class_counts(), [2, 2]);
        assert!(matches!(
            split_train_test(&d, 1.0, 5),
            Err(SamplingError::DegenerateSplit { .. })
        ));
        assert!(matches!(
            split_train_test(&dataset(&[0, 1, 1]), 0.8, 5),
            Err(SamplingError::TooFewRows(Class::Environment, 1))
        ));
    }

    #[test]
    fn standardizer_hand_values() {
        let d = PixelDataset::new(
            vec![BandId::B2, BandId::B3],
            vec![2.0, 5.0, 4.0, 5.0, 6.0, 5.0],
            vec![Class::Environment; 3],
        )
        .unwrap();
        let s = Standardizer::fit(&d).unwrap();
        assert!((s.means[0] - 4.0).abs() < 1e-12);
        assert!((s.stds[0] - 1.632_993_161_855_452).abs() < 1e-12);
        assert_eq!(s.zero_variance, vec![false, true]);
        assert_eq!(s.stds[1], 1.0);
        let z = s.apply(&d).unwrap();
        let col0: Vec<f64> = z.rows().map(|r| r[0]).collect();
        for (got, want) in col0.iter().zip([-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(z.rows().all(|r| r[1] == 0.0));

        let empty = d.select(&[]);
        assert!(s.apply(&empty).unwrap().is_empty());
        assert!(matches!(
            Standardizer::fit(&empty),
            Err(SamplingError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn csv_layout() {
        let d = PixelDataset::new(
            vec![BandId::B2, BandId::B8A],
            vec![0.5, 0.25],
            vec![Class::Informal],
        )
        .unwrap()
        .with_provenance(vec![PixelTag { x: 3, y: 4 }]);
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "x,y,label,b2,b8a\n3,4,1,0.5,0.25\n");
    }
}
