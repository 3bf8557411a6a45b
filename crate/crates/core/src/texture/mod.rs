//! Whole-lung radiomics: intensity discretisation, first-order statistics,
//! the five gray-level texture matrices and 3D shape descriptors, run over
//! the filter bank to produce a 1691-feature vector.
//!
//! Matrices are built on a [`GrayVolume`] where level 0 marks voxels
//! outside the region. Texture matrices with a direction use the 13 unique
//! offsets at distance 1; zones, neighbourhood differences and dependences
//! use 26-connectivity. See [`dictionary`] for the full feature list.

pub mod dictionary;
mod first_order;
mod glcm;
mod gldm;
mod glrlm;
mod glszm;
mod marching_cubes;
mod mc_tables;
mod ngtdm;
mod shape;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::filterbank::{enumerate_filter_bank, FilterCache, FilterError, FilterSpec};
use crate::volume::{crop_to_mask_bbox, AlignmentToken, LabelMask, VolumeError, VoxelVolume};

pub use first_order::{first_order_features, FIRST_ORDER_NAMES};
pub use glcm::{glcm_features, glcm_features_from_matrices, glcm_matrices, GLCM_NAMES};
pub use gldm::{gldm_features, gldm_features_from_matrix, gldm_matrix, GLDM_NAMES};
pub use glrlm::{glrlm_features, glrlm_features_from_matrices, glrlm_matrices, GLRLM_NAMES};
pub use glszm::{glszm_features, glszm_features_from_matrix, glszm_matrix, GLSZM_NAMES};
pub use marching_cubes::{marching_cubes, Mesh};
pub use ngtdm::{ngtdm_features, ngtdm_features_from_stats, ngtdm_stats, NgtdmStats, NGTDM_NAMES};
pub use shape::{shape_features, SHAPE_NAMES};

/// Texture features per filter: 18 + 24 + 16 + 16 + 5 + 14.
pub const TEXTURE_FEATURES_PER_FILTER: usize = 93;
pub const SHAPE_FEATURE_COUNT: usize = 17;
/// 17 shape features plus 93 texture features for each of 18 filters.
pub const WLR_FEATURE_COUNT: usize = SHAPE_FEATURE_COUNT + 18 * TEXTURE_FEATURES_PER_FILTER;

/// Coarseness when the neighbourhood difference sum is zero.
pub const COARSENESS_CAP: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TextureError {
    #[error("mask has no nonzero voxel")]
    EmptyMask,
    #[error("bin width must be finite and > 0, got {0}")]
    NonPositiveBinWidth(f64),
    #[error("bin count must be >= 1")]
    ZeroBinCount,
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Dense count matrix, row-major. Rows are gray levels `1..=rows`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u64>,
}

impl CountMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, n: u64) {
        self.data[r * self.cols + c] += n;
    }
    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }
    /// Probabilities `count / total`; all zero when empty.
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total();
        if t == 0 {
            return vec![0.0; self.data.len()];
        }
        let t = t as f64;
        self.data.iter().map(|&c| c as f64 / t).collect()
    }
    /// Drops trailing columns that are entirely zero (keeps at least one).
    pub fn trim_cols(mut self) -> Self {
        let mut keep = self.cols;
        while keep > 1 && (0..self.rows).all(|r| self.at(r, keep - 1) == 0) {
            keep -= 1;
        }
        if keep < self.cols {
            let mut data = Vec::with_capacity(self.rows * keep);
            for r in 0..self.rows {
                data.extend_from_slice(&self.data[r * self.cols..r * self.cols + keep]);
            }
            self.data = data;
            self.cols = keep;
        }
        self
    }
    pub fn add_matrix(&mut self, other: &CountMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Discretised region: `levels[i]` is in `1..=ng` inside the mask, 0 outside.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayVolume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub levels: Vec<u16>,
    pub ng: usize,
    pub bin_width: f64,
    pub bin_origin: f64,
}

impl GrayVolume {
    /// Wraps already-discretised levels; `ng` is taken as the maximum level.
    pub fn from_levels(dims: [usize; 3], levels: Vec<u16>) -> Self {
        assert_eq!(levels.len(), dims.iter().product::<usize>());
        let ng = levels.iter().copied().max().unwrap_or(0).max(1) as usize;
        Self {
            dims,
            spacing: [1.0; 3],
            levels,
            ng,
            bin_width: 1.0,
            bin_origin: 1.0,
        }
    }

    pub fn n_voxels(&self) -> usize {
        self.levels.iter().filter(|&&l| l != 0).count()
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    /// Index of `i + off`, if inside the grid.
    #[inline]
    pub fn offset(&self, i: usize, off: [isize; 3]) -> Option<usize> {
        let p = self.coords(i);
        let mut q = [0usize; 3];
        for a in 0..3 {
            let v = p[a] as isize + off[a];
            if v < 0 || v >= self.dims[a] as isize {
                return None;
            }
            q[a] = v as usize;
        }
        Some(q[0] + self.dims[0] * (q[1] + self.dims[1] * q[2]))
    }
}

/// The 13 unique unit offsets of the 26-neighbourhood.
pub const DIRECTIONS_13: [[isize; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [-1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, 1],
    [1, 1, 1],
    [-1, 1, 1],
    [1, -1, 1],
    [-1, -1, 1],
];

/// All 26 neighbour offsets.
pub fn neighbors_26() -> impl Iterator<Item = [isize; 3]> {
    DIRECTIONS_13
        .into_iter()
        .flat_map(|d| [d, [-d[0], -d[1], -d[2]]])
}

fn masked_range(volume: &VoxelVolume, mask: &LabelMask) -> Result<(f64, f64), TextureError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (v, &l) in volume.values().iter().zip(mask.labels()) {
        if l != 0 {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if lo > hi {
        return Err(TextureError::EmptyMask);
    }
    Ok((lo, hi))
}

fn bin_levels(
    volume: &VoxelVolume,
    mask: &LabelMask,
    lo: f64,
    width: f64,
    ng: usize,
) -> GrayVolume {
    let levels = volume
        .values()
        .iter()
        .zip(mask.labels())
        .map(|(&x, &l)| {
            if l == 0 {
                0
            } else {
                let k = ((x - lo) / width).floor() as i64 + 1;
                k.clamp(1, ng as i64) as u16
            }
        })
        .collect();
    GrayVolume {
        dims: volume.dims(),
        spacing: volume.spacing(),
        levels,
        ng,
        bin_width: width,
        bin_origin: lo,
    }
}

/// Fixed-width binning anchored at the masked minimum:
/// `level = floor((x - min) / bin_width) + 1`, so `ng` is the level of the
/// masked maximum.
pub fn discretize(
    volume: &VoxelVolume,
    mask: &LabelMask,
    bin_width: f64,
) -> Result<GrayVolume, TextureError> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(TextureError::NonPositiveBinWidth(bin_width));
    }
    let (lo, hi) = masked_range(volume, mask)?;
    let ng = ((hi - lo) / bin_width).floor() as usize + 1;
    Ok(bin_levels(volume, mask, lo, bin_width, ng))
}

/// Fixed-count binning: `n_bins` equal-width bins over the masked range,
/// the maximum falling into the last bin. A constant region gets one level.
pub fn discretize_bin_count(
    volume: &VoxelVolume,
    mask: &LabelMask,
    n_bins: usize,
) -> Result<GrayVolume, TextureError> {
    if n_bins == 0 {
        return Err(TextureError::ZeroBinCount);
    }
    let (lo, hi) = masked_range(volume, mask)?;
    if hi == lo {
        return Ok(bin_levels(volume, mask, lo, 1.0, 1));
    }
    let width = (hi - lo) / n_bins as f64;
    Ok(bin_levels(volume, mask, lo, width, n_bins))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Discretization {
    FixedWidth(f64),
    FixedCount(usize),
}

impl Discretization {
    pub fn apply(&self, volume: &VoxelVolume, mask: &LabelMask) -> Result<GrayVolume, TextureError> {
        match *self {
            Discretization::FixedWidth(w) => discretize(volume, mask, w),
            Discretization::FixedCount(n) => discretize_bin_count(volume, mask, n),
        }
    }
}

/// How directional matrices are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DirectionAggregation {
    /// Features per direction, then averaged over non-empty directions.
    #[default]
    Average,
    /// One matrix summed over directions.
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureConfig {
    /// Discretisation of the unfiltered image (HU).
    pub original: Discretization,
    /// Discretisation of every filtered image.
    pub filtered: Discretization,
    pub gldm_alpha: u16,
    pub aggregation: DirectionAggregation,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            original: Discretization::FixedWidth(25.0),
            filtered: Discretization::FixedCount(32),
            gldm_alpha: 0,
            aggregation: DirectionAggregation::Average,
        }
    }
}

impl TextureConfig {
    pub fn discretization_for(&self, spec: &FilterSpec) -> Discretization {
        if spec.is_original() {
            self.original
        } else {
            self.filtered
        }
    }
}

/// The 93 texture features of one (filtered) image inside `mask`.
pub fn texture_features(
    volume: &VoxelVolume,
    mask: &LabelMask,
    discretization: Discretization,
    config: &TextureConfig,
) -> Result<FeatureVector, TextureError> {
    let gray = discretization.apply(volume, mask)?;
    let mut out = FeatureVector::with_capacity(TEXTURE_FEATURES_PER_FILTER);
    out.extend(first_order_features(volume, mask, &gray)?.prefixed("FirstOrder"));
    out.extend(glcm_features(&gray, config.aggregation).prefixed("GLCM"));
    out.extend(glrlm_features(&gray, config.aggregation).prefixed("GLRLM"));
    out.extend(glszm_features(&gray).prefixed("GLSZM"));
    out.extend(ngtdm_features(&gray).prefixed("NGTDM"));
    out.extend(gldm_features(&gray, config.gldm_alpha).prefixed("GLDM"));
    Ok(out)
}

/// Computes the full 1691-feature bank inside the opacity mask: shape on the
/// original mask, then the 93 texture features for each filter in bank order.
/// Names are `<filter>-<family>-<feature>`.
pub fn extract_wlr(
    volume: &VoxelVolume,
    opacity_mask: &LabelMask,
    token: &AlignmentToken,
    config: &TextureConfig,
) -> Result<FeatureVector, TextureError> {
    token.covers(volume, opacity_mask)?;
    if opacity_mask.count_nonzero() == 0 {
        return Err(TextureError::EmptyMask);
    }
    let bank = enumerate_filter_bank();
    let cache = FilterCache::new(volume);
    // Wavelet bands are shared; compute them up front so the parallel loop
    // only borrows.
    let filtered: Vec<_> = bank
        .iter()
        .map(|spec| cache.get(spec))
        .collect::<Result<_, _>>()?;

    let mut out = FeatureVector::with_capacity(WLR_FEATURE_COUNT);
    let (_, cropped_mask) = crop_to_mask_bbox(volume, opacity_mask, 0)?;
    out.extend(shape_features(&cropped_mask)?.prefixed("Original-Shape"));

    let blocks: Vec<Result<FeatureVector, TextureError>> = bank
        .par_iter()
        .zip(filtered.par_iter())
        .map(|(spec, img)| {
            let (v, m) = crop_to_mask_bbox(img, opacity_mask, 0)?;
            let f = texture_features(&v, &m, config.discretization_for(spec), config)?;
            Ok(f.prefixed(&spec.canonical_name()))
        })
        .collect();
    for b in blocks {
        out.extend(b?);
    }
    debug_assert_eq!(out.len(), WLR_FEATURE_COUNT);
    Ok(out)
}

/// Canonical names of the 1691 WLR features, in extraction order.
pub fn wlr_feature_names() -> Vec<String> {
    let mut names: Vec<String> = SHAPE_NAMES
        .iter()
        .map(|n| format!("Original-Shape-{n}"))
        .collect();
    for spec in enumerate_filter_bank() {
        let f = spec.canonical_name();
        for (family, list) in texture_families() {
            names.extend(list.iter().map(|n| format!("{f}-{family}-{n}")));
        }
    }
    names
}

pub(crate) fn texture_families() -> [(&'static str, &'static [&'static str]); 6] {
    [
        ("FirstOrder", &FIRST_ORDER_NAMES),
        ("GLCM", &GLCM_NAMES),
        ("GLRLM", &GLRLM_NAMES),
        ("GLSZM", &GLSZM_NAMES),
        ("NGTDM", &NGTDM_NAMES),
        ("GLDM", &GLDM_NAMES),
    ]
}

/// `-sum p log2 p` over positive entries.
pub(crate) fn entropy(p: impl IntoIterator<Item = f64>) -> f64 {
    -p.into_iter()
        .filter(|&v| v > 0.0)
        .map(|v| v * v.log2())
        .sum::<f64>()
}

/// Averages equally-long feature rows.
pub(crate) fn average_rows(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    if rows.is_empty() {
        return vec![0.0; width];
    }
    let mut acc = vec![0.0; width];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

pub(crate) fn named(names: &[&str], values: Vec<f64>) -> FeatureVector {
    FeatureVector {
        names: names.iter().map(|s| s.to_string()).collect(),
        values,
    }
}
