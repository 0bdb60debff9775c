//! Multi-spectral rasters, label masks and output class maps.
//!
//! A raster lives in a directory holding `header.json` and `bands.bin`. The
//! header is UTF-8 JSON describing the 10m reference grid, the ordered band
//! list, the sample type (`"f32le"`) and optional nodata / geotransform
//! metadata. `bands.bin` is band-sequential: each band's row-major grid of
//! little-endian `f32` values, in header order, with no padding.
//!
//! The header `width` and `height` always describe the 10m reference grid.
//! A band stored at a coarser resolution `r` has a grid of
//! `ceil(width * 10 / r) x ceil(height * 10 / r)` samples.
//!
//! Masks and class maps are binary PGM (P5) images with 8-bit samples.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const HEADER_FILE: &str = "header.json";
pub const PAYLOAD_FILE: &str = "bands.bin";
pub const SAMPLE_DTYPE: &str = "f32le";

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("payload size mismatch: expected {expected} bytes, found {actual}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("duplicate band id {0}")]
    DuplicateBand(BandId),
    #[error("unknown band id {0:?}")]
    UnknownBand(String),
    #[error("unsupported resolution {0}m (expected 10, 20 or 60)")]
    InvalidResolution(u32),
    #[error("band {band} sample {index} is not finite and not the nodata sentinel")]
    NonFinite { band: BandId, index: usize },
    #[error("nodata sentinel must be a finite value")]
    InvalidNodata,
    #[error("band {band} has {actual} samples, expected {expected}")]
    BandSize {
        band: BandId,
        expected: usize,
        actual: usize,
    },
    #[error("grid dimensions must be positive, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },
    #[error("invalid PGM: {0}")]
    Pgm(String),
    #[error("invalid label byte {value} at pixel {index} (expected 0, 128 or 255)")]
    InvalidLabel { value: u8, index: usize },
    #[error("invalid class map: {0}")]
    InvalidClassMap(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RasterError + '_ {
    move |source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sentinel-2 spectral band identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BandId {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
    B8A,
    B9,
    B10,
    B11,
    B12,
}

impl BandId {
    pub const ALL: [BandId; 13] = [
        BandId::B1,
        BandId::B2,
        BandId::B3,
        BandId::B4,
        BandId::B5,
        BandId::B6,
        BandId::B7,
        BandId::B8,
        BandId::B8A,
        BandId::B9,
        BandId::B10,
        BandId::B11,
        BandId::B12,
    ];

    pub fn token(self) -> &'static str {
        match self {
            BandId::B1 => "1",
            BandId::B2 => "2",
            BandId::B3 => "3",
            BandId::B4 => "4",
            BandId::B5 => "5",
            BandId::B6 => "6",
            BandId::B7 => "7",
            BandId::B8 => "8",
            BandId::B8A => "8A",
            BandId::B9 => "9",
            BandId::B10 => "10",
            BandId::B11 => "11",
            BandId::B12 => "12",
        }
    }
}

/// The ten bands used for classification: 2-8, 8A, 11 and 12. Bands 1, 9 and
/// 10 are 60m atmospheric bands and are left out.
pub const DEFAULT_BANDS: [BandId; 10] = [
    BandId::B2,
    BandId::B3,
    BandId::B4,
    BandId::B5,
    BandId::B6,
    BandId::B7,
    BandId::B8,
    BandId::B8A,
    BandId::B11,
    BandId::B12,
];

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for BandId {
    type Err = RasterError;

    /// Accepts `"8A"`, `"8a"`, `"B8A"` and `"b8a"` alike.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let t = t
            .strip_prefix('B')
            .or_else(|| t.strip_prefix('b'))
            .unwrap_or(t);
        BandId::ALL
            .iter()
            .copied()
            .find(|b| b.token().eq_ignore_ascii_case(t))
            .ok_or_else(|| RasterError::UnknownBand(s.to_string()))
    }
}

impl Serialize for BandId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for BandId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let token = BandToken::deserialize(d)?;
        token.parse().map_err(serde::de::Error::custom)
    }
}

/// Band ids may be written as strings (`"8A"`) or bare integers (`11`).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum BandToken {
    Text(String),
    Number(u64),
}

impl BandToken {
    fn parse(&self) -> Result<BandId, RasterError> {
        match self {
            BandToken::Text(s) => s.parse(),
            BandToken::Number(n) => n.to_string().parse(),
        }
    }
}

/// Ground sampling distance of a stored band grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    M10,
    M20,
    M60,
}

impl Resolution {
    pub fn meters(self) -> u32 {
        match self {
            Resolution::M10 => 10,
            Resolution::M20 => 20,
            Resolution::M60 => 60,
        }
    }

    /// Grid dimensions of a band at this resolution on a 10m reference grid.
    pub fn grid_dims(self, width: usize, height: usize) -> (usize, usize) {
        let factor = (self.meters() / 10) as usize;
        (width.div_ceil(factor), height.div_ceil(factor))
    }
}

impl TryFrom<u32> for Resolution {
    type Error = RasterError;

    fn try_from(m: u32) -> Result<Self, Self::Error> {
        match m {
            10 => Ok(Resolution::M10),
            20 => Ok(Resolution::M20),
            60 => Ok(Resolution::M60),
            other => Err(RasterError::InvalidResolution(other)),
        }
    }
}

impl Serialize for Resolution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u32(self.meters())
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = u32::deserialize(d)?;
        Resolution::try_from(m).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandInfo {
    pub band_id: BandId,
    pub native_resolution: Resolution,
}

impl BandInfo {
    pub fn new(band_id: BandId, native_resolution: Resolution) -> Self {
        Self {
            band_id,
            native_resolution,
        }
    }
}

/// Top-of-atmosphere reflectance grids for an ordered set of bands.
///
/// Immutable once constructed; every constructor validates the invariants
/// (unique band ids, grid sizes matching each band's resolution, samples
/// finite or equal to the nodata sentinel).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSpectralRaster {
    width: usize,
    height: usize,
    bands: Vec<BandInfo>,
    data: Vec<Vec<f32>>,
    nodata: Option<f32>,
    geotransform: Option<[f64; 6]>,
}

impl MultiSpectralRaster {
    pub fn new(
        width: usize,
        height: usize,
        bands: Vec<BandInfo>,
        data: Vec<Vec<f32>>,
        nodata: Option<f32>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyGrid { width, height });
        }
        if let Some(nd) = nodata {
            if !nd.is_finite() {
                return Err(RasterError::InvalidNodata);
            }
        }
        if bands.len() != data.len() {
            return Err(RasterError::MalformedHeader(format!(
                "{} bands declared but {} grids supplied",
                bands.len(),
                data.len()
            )));
        }
        for (i, b) in bands.iter().enumerate() {
            if bands[..i].iter().any(|o| o.band_id == b.band_id) {
                return Err(RasterError::DuplicateBand(b.band_id));
            }
        }
        for (info, grid) in bands.iter().zip(&data) {
            let (w, h) = info.native_resolution.grid_dims(width, height);
            if grid.len() != w * h {
                return Err(RasterError::BandSize {
                    band: info.band_id,
                    expected: w * h,
                    actual: grid.len(),
                });
            }
            if let Some(index) = grid
                .iter()
                .position(|&v| !v.is_finite() && Some(v) != nodata)
            {
                return Err(RasterError::NonFinite {
                    band: info.band_id,
                    index,
                });
            }
        }
        Ok(Self {
            width,
            height,
            bands,
            data,
            nodata,
            geotransform: None,
        })
    }

    pub fn with_geotransform(mut self, geotransform: Option<[f64; 6]>) -> Self {
        self.geotransform = geotransform;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> &[BandInfo] {
        &self.bands
    }

    pub fn band_ids(&self) -> Vec<BandId> {
        self.bands.iter().map(|b| b.band_id).collect()
    }

    pub fn nodata(&self) -> Option<f32> {
        self.nodata
    }

    pub fn geotransform(&self) -> Option<[f64; 6]> {
        self.geotransform
    }

    pub fn band_index(&self, id: BandId) -> Option<usize> {
        self.bands.iter().position(|b| b.band_id == id)
    }

    /// Row-major grid of the band at position `index`.
    pub fn band(&self, index: usize) -> &[f32] {
        &self.data[index]
    }

    pub fn band_dims(&self, index: usize) -> (usize, usize) {
        self.bands[index]
            .native_resolution
            .grid_dims(self.width, self.height)
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        self.nodata == Some(v)
    }

    /// True when every band is stored on the 10m reference grid.
    pub fn is_common_grid(&self) -> bool {
        self.bands
            .iter()
            .all(|b| b.native_resolution == Resolution::M10)
    }

    pub(crate) fn into_parts(self) -> (Vec<BandInfo>, Vec<Vec<f32>>) {
        (self.bands, self.data)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHeader {
    width: usize,
    height: usize,
    dtype: String,
    bands: Vec<RawBand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodata: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geotransform: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawBand {
    band_id: serde_json::Value,
    native_resolution: u32,
}

impl RawBand {
    fn resolve(&self) -> Result<BandInfo, RasterError> {
        let token: BandToken = serde_json::from_value(self.band_id.clone())
            .map_err(|_| RasterError::UnknownBand(self.band_id.to_string()))?;
        Ok(BandInfo::new(
            token.parse()?,
            Resolution::try_from(self.native_resolution)?,
        ))
    }
}

/// Loads a raster container directory.
pub fn load_raster(path: impl AsRef<Path>) -> Result<MultiSpectralRaster, RasterError> {
    let dir = path.as_ref();
    let header_path = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
    let header: RawHeader =
        serde_json::from_str(&text).map_err(|e| RasterError::MalformedHeader(e.to_string()))?;
    if header.dtype != SAMPLE_DTYPE {
        return Err(RasterError::MalformedHeader(format!(
            "unsupported dtype {:?}, expected {SAMPLE_DTYPE:?}",
            header.dtype
        )));
    }
    let geotransform = match header.geotransform {
        None => None,
        Some(g) => Some(<[f64; 6]>::try_from(g.as_slice()).map_err(|_| {
            RasterError::MalformedHeader(format!("geotransform needs 6 values, got {}", g.len()))
        })?),
    };
    let bands = header
        .bands
        .iter()
        .map(RawBand::resolve)
        .collect::<Result<Vec<_>, _>>()?;
    if header.width == 0 || header.height == 0 {
        return Err(RasterError::EmptyGrid {
            width: header.width,
            height: header.height,
        });
    }
    for (i, b) in bands.iter().enumerate() {
        if bands[..i].iter().any(|o| o.band_id == b.band_id) {
            return Err(RasterError::DuplicateBand(b.band_id));
        }
    }

    let payload_path = dir.join(PAYLOAD_FILE);
    let bytes = fs::read(&payload_path).map_err(io_err(&payload_path))?;
    let sizes: Vec<usize> = bands
        .iter()
        .map(|b| {
            let (w, h) = b.native_resolution.grid_dims(header.width, header.height);
            w * h
        })
        .collect();
    let expected = sizes.iter().sum::<usize>() * 4;
    if bytes.len() != expected {
        return Err(RasterError::PayloadSize {
            expected,
            actual: bytes.len(),
        });
    }
    let mut data = Vec::with_capacity(bands.len());
    let mut offset = 0;
    for n in sizes {
        let grid: Vec<f32> = bytes[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        offset += 4 * n;
        data.push(grid);
    }
    Ok(
        MultiSpectralRaster::new(header.width, header.height, bands, data, header.nodata)?
            .with_geotransform(geotransform),
    )
}

/// Writes a raster container directory, creating it if needed.
pub fn save_raster(raster: &MultiSpectralRaster, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let dir = path.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let header = RawHeader {
        width: raster.width,
        height: raster.height,
        dtype: SAMPLE_DTYPE.to_string(),
        bands: raster
            .bands
            .iter()
            .map(|b| RawBand {
                band_id: serde_json::Value::String(b.band_id.token().to_string()),
                native_resolution: b.native_resolution.meters(),
            })
            .collect(),
        nodata: raster.nodata,
        geotransform: raster.geotransform.map(|g| g.to_vec()),
    };
    let mut text = serde_json::to_string_pretty(&header)
        .map_err(|e| RasterError::MalformedHeader(e.to_string()))?;
    text.push('\n');
    let header_path = dir.join(HEADER_FILE);
    fs::write(&header_path, text).map_err(io_err(&header_path))?;

    let total: usize = raster.data.iter().map(Vec::len).sum();
    let mut bytes = Vec::with_capacity(total * 4);
    for grid in &raster.data {
        for v in grid {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let payload_path = dir.join(PAYLOAD_FILE);
    fs::write(&payload_path, bytes).map_err(io_err(&payload_path))
}

/// Ground-truth annotation of one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Unlabeled,
    Environment,
    Informal,
}

impl Label {
    pub fn from_byte(b: u8) -> Option<Label> {
        match b {
            0 => Some(Label::Unlabeled),
            128 => Some(Label::Environment),
            255 => Some(Label::Informal),
            _ => None,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Label::Unlabeled => 0,
            Label::Environment => 128,
            Label::Informal => 255,
        }
    }

    pub fn class(self) -> Option<Class> {
        match self {
            Label::Unlabeled => None,
            Label::Environment => Some(Class::Environment),
            Label::Informal => Some(Class::Informal),
        }
    }
}

impl From<Class> for Label {
    fn from(c: Class) -> Self {
        match c {
            Class::Environment => Label::Environment,
            Class::Informal => Label::Informal,
        }
    }
}

/// Binary classification target. The discriminant is the class index used
/// by datasets, confusion matrices and serialized leaf counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Environment = 0,
    Informal = 1,
}

impl Class {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Class> {
        match i {
            0 => Some(Class::Environment),
            1 => Some(Class::Informal),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Environment => "environment",
            Class::Informal => "informal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<Label>) -> Result<Self, RasterError> {
        if labels.len() != width * height {
            return Err(RasterError::Pgm(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Binary prediction map with an optional informal-class probability layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    width: usize,
    height: usize,
    classes: Vec<Class>,
    probabilities: Option<Vec<f32>>,
}

impl ClassMap {
    pub fn new(
        width: usize,
        height: usize,
        classes: Vec<Class>,
        probabilities: Option<Vec<f32>>,
    ) -> Result<Self, RasterError> {
        if classes.len() != width * height {
            return Err(RasterError::InvalidClassMap(format!(
                "{} classes for a {width}x{height} map",
                classes.len()
            )));
        }
        if let Some(p) = &probabilities {
            if p.len() != classes.len() {
                return Err(RasterError::InvalidClassMap(format!(
                    "{} probabilities for {} pixels",
                    p.len(),
                    classes.len()
                )));
            }
            for (i, (&prob, &class)) in p.iter().zip(&classes).enumerate() {
                if !(0.0..=1.0).contains(&prob) {
                    return Err(RasterError::InvalidClassMap(format!(
                        "probability {prob} at pixel {i} outside [0, 1]"
                    )));
                }
                if (prob > 0.5) != (class == Class::Informal) {
                    return Err(RasterError::InvalidClassMap(format!(
                        "pixel {i}: class {} disagrees with probability {prob}",
                        class.name()
                    )));
                }
            }
        }
        Ok(Self {
            width,
            height,
            classes,
            probabilities,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> &[Class] {
        &self.classes
    }

    pub fn probabilities(&self) -> Option<&[f32]> {
        self.probabilities.as_deref()
    }

    pub fn informal_fraction(&self) -> f64 {
        let n = self
            .classes
            .iter()
            .filter(|&&c| c == Class::Informal)
            .count();
        n as f64 / self.classes.len() as f64
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, &[u8]), RasterError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(RasterError::Pgm("missing P5 magic number".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and `#` comments may separate header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(RasterError::Pgm("truncated header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::Pgm("header field out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(RasterError::Pgm(format!(
            "expected 8-bit samples with maxval 255, got {maxval}"
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(RasterError::Pgm("missing separator after header".into()));
    }
    pos += 1;
    let pixels = &bytes[pos..];
    if pixels.len() != width * height {
        return Err(RasterError::Pgm(format!(
            "expected {} pixel bytes, found {}",
            width * height,
            pixels.len()
        )));
    }
    Ok((width, height, pixels))
}

fn pgm_bytes(width: usize, height: usize, pixels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels);
    out
}

/// Loads an annotation mask: 0 = unlabeled, 128 = environment, 255 = informal.
pub fn load_mask(path: impl AsRef<Path>) -> Result<LabelMask, RasterError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (width, height, pixels) = parse_pgm(&bytes)?;
    let labels = pixels
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            Label::from_byte(value).ok_or(RasterError::InvalidLabel { value, index })
        })
        .collect::<Result<Vec<_>, _>>()?;
    LabelMask::new(width, height, labels)
}

pub fn save_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let bytes = pgm_bytes(
        mask.width,
        mask.height,
        mask.labels.iter().map(|l| l.to_byte()),
    );
    fs::write(path, bytes).map_err(io_err(path))
}

/// Header and payload paths of the probability layer that accompanies a
/// class map PGM: `map.pgm` -> (`map.prob.json`, `map.prob.bin`).
pub fn probability_paths(map_path: &Path) -> (PathBuf, PathBuf) {
    (
        map_path.with_extension("prob.json"),
        map_path.with_extension("prob.bin"),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbabilityHeader {
    width: usize,
    height: usize,
    dtype: String,
    layer: String,
}

const PROBABILITY_LAYER: &str = "informal_probability";

/// Writes the class map as PGM (informal = 255, environment = 0) and, when
/// present, the probability layer as `f32le` with its own JSON header.
pub fn save_class_map(map: &ClassMap, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let bytes = pgm_bytes(
        map.width,
        map.height,
        map.classes.iter().map(|c| match c {
            Class::Informal => 255,
            Class::Environment => 0,
        }),
    );
    fs::write(path, bytes).map_err(io_err(path))?;

    let (header_path, payload_path) = probability_paths(path);
    match &map.probabilities {
        Some(probs) => {
            let header = ProbabilityHeader {
                width: map.width,
                height: map.height,
                dtype: SAMPLE_DTYPE.to_string(),
                layer: PROBABILITY_LAYER.to_string(),
            };
            let mut text = serde_json::to_string_pretty(&header)
                .map_err(|e| RasterError::MalformedHeader(e.to_string()))?;
            text.push('\n');
            fs::write(&header_path, text).map_err(io_err(&header_path))?;
            let payload: Vec<u8> = probs.iter().flat_map(|p| p.to_le_bytes()).collect();
            fs::write(&payload_path, payload).map_err(io_err(&payload_path))?;
        }
        None => {
            // a stale layer from an earlier run would be attached on reload
            for p in [&header_path, &payload_path] {
                match fs::remove_file(p) {
                    Ok(()) => {}
                    Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                    Err(e) => return Err(io_err(p)(e)),
                }
            }
        }
    }
    Ok(())
}

/// Reads a class map PGM plus its probability layer if one sits next to it.
pub fn load_class_map(path: impl AsRef<Path>) -> Result<ClassMap, RasterError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (width, height, pixels) = parse_pgm(&bytes)?;
    let classes = pixels
        .iter()
        .enumerate()
        .map(|(index, &value)| match value {
            0 => Ok(Class::Environment),
            255 => Ok(Class::Informal),
            _ => Err(RasterError::InvalidLabel { value, index }),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let (header_path, payload_path) = probability_paths(path);
    let probabilities = if header_path.exists() {
        let text = fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
        let header: ProbabilityHeader = serde_json::from_str(&text)
            .map_err(|e| RasterError::MalformedHeader(e.to_string()))?;
        if header.width != width || header.height != height || header.dtype != SAMPLE_DTYPE {
            return Err(RasterError::MalformedHeader(
                "probability header does not match the class map".into(),
            ));
        }
        let payload = fs::read(&payload_path).map_err(io_err(&payload_path))?;
        if payload.len() != 4 * width * height {
            return Err(RasterError::PayloadSize {
                expected: 4 * width * height,
                actual: payload.len(),
            });
        }
        Some(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    } else {
        None
    };
    ClassMap::new(width, height, classes, probabilities)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b10(id: BandId) -> BandInfo {
        BandInfo::new(id, Resolution::M10)
    }

    fn write_header(dir: &Path, json: &str, payload: &[f32]) {
        fs::write(dir.join(HEADER_FILE), json).unwrap();
        let bytes: Vec<u8> = payload.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(PAYLOAD_FILE), bytes).unwrap();
    }

    const HEADER_2X2: &str = r#"{"width":2,"height":2,"dtype":"f32le","bands":[
        {"band_id":"4","native_resolution":10},
        {"band_id":"3","native_resolution":10},
        {"band_id":2,"native_resolution":10}]}"#;

    #[test]
    fn loads_minimal_raster_in_header_order() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f32> = (0..12).map(|i| i as f32 * 0.1).collect();
        write_header(dir.path(), HEADER_2X2, &values);
        let r = load_raster(dir.path()).unwrap();
        assert_eq!(r.band_ids(), vec![BandId::B4, BandId::B3, BandId::B2]);
        assert_eq!(r.bands().len(), 3);
        for i in 0..3 {
            assert_eq!(r.band(i).len(), 4);
            assert_eq!(r.band(i), &values[4 * i..4 * i + 4]);
        }
    }

    #[test]
    fn short_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_header(dir.path(), HEADER_2X2, &[0.0; 11]);
        assert!(matches!(
            load_raster(dir.path()),
            Err(RasterError::PayloadSize {
                expected: 48,
                actual: 44
            })
        ));
    }

    #[test]
    fn duplicate_and_unknown_bands_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let dup = r#"{"width":1,"height":1,"dtype":"f32le","bands":[
            {"band_id":"4","native_resolution":10},{"band_id":"B4","native_resolution":10}]}"#;
        write_header(dir.path(), dup, &[0.0; 2]);
        assert!(matches!(
            load_raster(dir.path()),
            Err(RasterError::DuplicateBand(BandId::B4))
        ));

        let unknown = r#"{"width":1,"height":1,"dtype":"f32le","bands":[
            {"band_id":"13","native_resolution":10}]}"#;
        write_header(dir.path(), unknown, &[0.0]);
        assert!(matches!(
            load_raster(dir.path()),
            Err(RasterError::UnknownBand(_))
        ));
    }

    #[test]
    fn malformed_header_and_dtype() {
        let dir = tempfile::tempdir().unwrap();
        write_header(dir.path(), "{not json", &[0.0]);
        assert!(matches!(
            load_raster(dir.path()),
            Err(RasterError::MalformedHeader(_))
        ));
        let f64_header = r#"{"width":1,"height":1,"dtype":"f64le","bands":[
            {"band_id":"4","native_resolution":10}]}"#;
        write_header(dir.path(), f64_header, &[0.0]);
        assert!(matches!(
            load_raster(dir.path()),
            Err(RasterError::MalformedHeader(_))
        ));
    }

    #[test]
    fn nan_samples_are_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let h = r#"{"width":1,"height":1,"dtype":"f32le","bands":[
            {"band_id":"4","native_resolution":10}]}"#;
        write_header(dir.path(), h, &[f32::NAN]);
        assert!(matches!(
            load_raster(dir.path()),
            Err(RasterError::NonFinite { .. })
        ));
    }

    #[test]
    fn single_zero_pixel_payload_is_four_zero_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let r = MultiSpectralRaster::new(1, 1, vec![b10(BandId::B2)], vec![vec![0.0]], None)
            .unwrap();
        save_raster(&r, dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join(PAYLOAD_FILE)).unwrap(), vec![0u8; 4]);
    }

    #[test]
    fn nodata_and_geotransform_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = MultiSpectralRaster::new(
            2,
            1,
            vec![b10(BandId::B8A)],
            vec![vec![-9999.0, 0.125]],
            Some(-9999.0),
        )
        .unwrap()
        .with_geotransform(Some([300000.0, 10.0, 0.0, 9900000.0, 0.0, -10.0]));
        save_raster(&r, dir.path()).unwrap();
        let back = load_raster(dir.path()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.nodata(), Some(-9999.0));
        assert!(back.is_nodata(back.band(0)[0]));
    }

    #[test]
    fn coarse_bands_use_ceil_scaled_grids() {
        let r = MultiSpectralRaster::new(
            3,
            3,
            vec![b10(BandId::B2), BandInfo::new(BandId::B11, Resolution::M20)],
            vec![vec![0.0; 9], vec![0.0; 4]],
            None,
        )
        .unwrap();
        assert_eq!(r.band_dims(1), (2, 2));
        let bad = MultiSpectralRaster::new(
            3,
            3,
            vec![BandInfo::new(BandId::B11, Resolution::M20)],
            vec![vec![0.0; 9]],
            None,
        );
        assert!(matches!(bad, Err(RasterError::BandSize { .. })));
    }

    #[test]
    fn band_tokens_parse_loosely() {
        assert_eq!("8a".parse::<BandId>().unwrap(), BandId::B8A);
        assert_eq!("B12".parse::<BandId>().unwrap(), BandId::B12);
        assert!("0".parse::<BandId>().is_err());
        assert!(Resolution::try_from(30).is_err());
    }

    #[test]
    fn mask_bytes_map_to_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        fs::write(&p, b"P5\n2 1\n255\n\xff\x80").unwrap();
        let m = load_mask(&p).unwrap();
        assert_eq!(m.labels(), &[Label::Informal, Label::Environment]);

        fs::write(&p, b"P5\n# comment\n2 1\n255\n\x00\x07").unwrap();
        assert!(matches!(
            load_mask(&p),
            Err(RasterError::InvalidLabel { value: 7, index: 1 })
        ));

        fs::write(&p, b"P5 3 2 255\n\x00\x00\x00\x00\x00\x00").unwrap();
        let m = load_mask(&p).unwrap();
        assert_eq!(m.count(Label::Unlabeled), 6);

        fs::write(&p, b"P2\n1 1\n255\n0\n").unwrap();
        assert!(matches!(load_mask(&p), Err(RasterError::Pgm(_))));
        fs::write(&p, b"P5\n1 1\n65535\n\x00\x00").unwrap();
        assert!(matches!(load_mask(&p), Err(RasterError::Pgm(_))));
    }

    #[test]
    fn class_map_pgm_and_probability_layer() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("map.pgm");
        let map = ClassMap::new(2, 1, vec![Class::Informal, Class::Environment], None).unwrap();
        save_class_map(&map, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[255, 0]);
        assert_eq!(load_class_map(&p).unwrap(), map);

        let map = ClassMap::new(
            3,
            2,
            vec![Class::Environment; 6],
            Some(vec![0.0, 0.5, 0.25, 0.1, 0.0, 0.49]),
        )
        .unwrap();
        save_class_map(&map, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.ends_with(&[0; 6]));
        let (_, payload) = probability_paths(&p);
        assert_eq!(fs::read(&payload).unwrap().len(), 4 * 3 * 2);
        assert_eq!(load_class_map(&p).unwrap(), map);
    }

    #[test]
    fn class_map_rejects_disagreeing_probability() {
        assert!(ClassMap::new(1, 1, vec![Class::Informal], Some(vec![0.5])).is_err());
        assert!(ClassMap::new(1, 1, vec![Class::Environment], Some(vec![0.5])).is_ok());
        assert!(ClassMap::new(1, 1, vec![Class::Informal], Some(vec![1.5])).is_err());
    }
}
