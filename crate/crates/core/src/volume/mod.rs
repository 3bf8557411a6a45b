//! CT volumes, label masks and the grid bookkeeping shared by every extractor.
//!
//! Voxels are stored x-fastest: `index = x + nx * (y + ny * z)`.

mod nifti;
mod raw;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nifti::{read_nifti, write_nifti, NiftiDataType};
pub use raw::{read_raw, write_raw, RawDataType};

/// Relative tolerance used when comparing voxel spacings of two grids.
pub const SPACING_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("non-finite voxel value at index {0}")]
    NonFiniteData(usize),
    #[error("label {label} out of range for {semantics:?} (index {index})")]
    LabelOutOfRange {
        label: f64,
        semantics: MaskSemantics,
        index: usize,
    },
    #[error("non-integral mask value {value} at index {index}")]
    NonIntegralData { value: f64, index: usize },
    #[error("dims mismatch: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("spacing mismatch: {0:?} vs {1:?}")]
    SpacingMismatch([f64; 3], [f64; 3]),
    #[error("frame mismatch: {0} vs {1}")]
    FrameMismatch(FrameId, FrameId),
    #[error("mask has no nonzero voxel")]
    EmptyMask,
    #[error("value count {got} does not match dims {dims:?}")]
    LengthMismatch { dims: [usize; 3], got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("sidecar json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VolumeError>;

/// Opaque identity of the voxel grid a volume or mask lives on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameId(pub String);

impl FrameId {
    /// Frame derived purely from grid geometry.
    pub fn from_geometry(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        // FNV-1a over the little-endian bytes of the geometry.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for d in dims {
            feed(&(d as u64).to_le_bytes());
        }
        for s in spacing.iter().chain(origin.iter()) {
            feed(&s.to_le_bytes());
        }
        FrameId(format!("grid-{h:016x}"))
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn check_geometry(dims: [usize; 3], spacing: [f64; 3], len: usize) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(VolumeError::CorruptHeader(format!(
            "dims must be >= 1, got {dims:?}"
        )));
    }
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(VolumeError::CorruptHeader(format!(
            "spacing must be finite and > 0, got {spacing:?}"
        )));
    }
    let n = dims[0] * dims[1] * dims[2];
    if n != len {
        return Err(VolumeError::LengthMismatch { dims, got: len });
    }
    Ok(())
}

/// A scalar 3D grid (HU or filtered intensity) with physical spacing in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    values: Vec<f64>,
    frame_id: FrameId,
}

impl VoxelVolume {
    /// Builds a volume whose frame is derived from its geometry.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], values: Vec<f64>) -> Result<Self> {
        let frame = FrameId::from_geometry(dims, spacing, [0.0; 3]);
        Self::with_frame(dims, spacing, values, frame)
    }

    pub fn with_frame(
        dims: [usize; 3],
        spacing: [f64; 3],
        values: Vec<f64>,
        frame_id: FrameId,
    ) -> Result<Self> {
        check_geometry(dims, spacing, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFiniteData(i));
        }
        Ok(Self {
            dims,
            spacing,
            values,
            frame_id,
        })
    }

    /// A volume on the same grid with new values. Values must be finite.
    pub fn map_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self {
            dims: self.dims,
            spacing: self.spacing,
            values,
            frame_id: self.frame_id.clone(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }
    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaskSemantics {
    /// 0 = background, 1..=5 = lung lobes.
    LobeMap,
    /// 0 = outside, 1 = inside.
    BinaryOpacity,
}

impl MaskSemantics {
    pub fn max_label(self) -> u8 {
        match self {
            MaskSemantics::LobeMap => 5,
            MaskSemantics::BinaryOpacity => 1,
        }
    }
}

/// Integer label grid aligned to a [`VoxelVolume`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    dims: [usize; 3],
    spacing: [f64; 3],
    labels: Vec<u8>,
    semantics: MaskSemantics,
    frame_id: FrameId,
}

impl LabelMask {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        labels: Vec<u8>,
        semantics: MaskSemantics,
        frame_id: FrameId,
    ) -> Result<Self> {
        check_geometry(dims, spacing, labels.len())?;
        let max = semantics.max_label();
        if let Some(i) = labels.iter().position(|&l| l > max) {
            return Err(VolumeError::LabelOutOfRange {
                label: f64::from(labels[i]),
                semantics,
                index: i,
            });
        }
        Ok(Self {
            dims,
            spacing,
            labels,
            semantics,
            frame_id,
        })
    }

    /// Mask on the grid of `volume`.
    pub fn on_grid_of(
        volume: &VoxelVolume,
        labels: Vec<u8>,
        semantics: MaskSemantics,
    ) -> Result<Self> {
        Self::new(
            volume.dims,
            volume.spacing,
            labels,
            semantics,
            volume.frame_id.clone(),
        )
    }

    /// Binary mask on the same grid, set where `keep` holds.
    pub fn binary_from_fn(&self, mut keep: impl FnMut(usize) -> bool) -> LabelMask {
        let labels = (0..self.labels.len()).map(|i| u8::from(keep(i))).collect();
        LabelMask {
            dims: self.dims,
            spacing: self.spacing,
            labels,
            semantics: MaskSemantics::BinaryOpacity,
            frame_id: self.frame_id.clone(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
    pub fn semantics(&self) -> MaskSemantics {
        self.semantics
    }
    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }
    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }
    #[inline]
    pub fn is_set(&self, i: usize) -> bool {
        self.labels[i] != 0
    }
    pub fn count_nonzero(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}

/// Proof that a volume and a set of masks share one grid.
///
/// Only [`validate_alignment`] constructs it; extractors check that the pair
/// they receive is covered by the token.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentToken {
    dims: [usize; 3],
    spacing: [f64; 3],
    frame_id: FrameId,
}

impl AlignmentToken {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn frame_id(&self) -> &FrameId {
        &self.frame_id
    }

    /// Checks that `volume` and `mask` are on the validated grid.
    pub fn covers(&self, volume: &VoxelVolume, mask: &LabelMask) -> Result<()> {
        self.check(volume.dims, volume.spacing, &volume.frame_id)?;
        self.check(mask.dims, mask.spacing, &mask.frame_id)
    }

    pub fn covers_mask(&self, mask: &LabelMask) -> Result<()> {
        self.check(mask.dims, mask.spacing, &mask.frame_id)
    }

    fn check(&self, dims: [usize; 3], spacing: [f64; 3], frame: &FrameId) -> Result<()> {
        compare_grid(
            (self.dims, self.spacing, &self.frame_id),
            (dims, spacing, frame),
        )
    }
}

fn spacing_close(a: [f64; 3], b: [f64; 3]) -> bool {
    a.iter()
        .zip(b.iter())
        .all(|(x, y)| (x - y).abs() <= SPACING_REL_TOL * x.abs().max(y.abs()))
}

fn compare_grid(
    a: ([usize; 3], [f64; 3], &FrameId),
    b: ([usize; 3], [f64; 3], &FrameId),
) -> Result<()> {
    if a.0 != b.0 {
        return Err(VolumeError::DimsMismatch(a.0, b.0));
    }
    if !spacing_close(a.1, b.1) {
        return Err(VolumeError::SpacingMismatch(a.1, b.1));
    }
    if a.2 != b.2 {
        return Err(VolumeError::FrameMismatch(a.2.clone(), b.2.clone()));
    }
    Ok(())
}

/// Checks that every mask shares dims, spacing (relative 1e-6) and frame
/// with `volume`.
pub fn validate_alignment(volume: &VoxelVolume, masks: &[&LabelMask]) -> Result<AlignmentToken> {
    for m in masks {
        compare_grid(
            (volume.dims, volume.spacing, &volume.frame_id),
            (m.dims, m.spacing, &m.frame_id),
        )?;
    }
    Ok(AlignmentToken {
        dims: volume.dims,
        spacing: volume.spacing,
        frame_id: volume.frame_id.clone(),
    })
}

/// Inclusive voxel bounding box of nonzero labels.
pub fn mask_bbox(mask: &LabelMask) -> Option<([usize; 3], [usize; 3])> {
    let [nx, ny, _] = mask.dims;
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (i, &l) in mask.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        any = true;
        let p = [i % nx, (i / nx) % ny, i / (nx * ny)];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    any.then_some((lo, hi))
}

/// Crops a volume/mask pair to the mask's bounding box dilated by `margin`.
pub fn crop_to_mask_bbox(
    volume: &VoxelVolume,
    mask: &LabelMask,
    margin: usize,
) -> Result<(VoxelVolume, LabelMask)> {
    compare_grid(
        (volume.dims, volume.spacing, &volume.frame_id),
        (mask.dims, mask.spacing, &mask.frame_id),
    )?;
    let (lo, hi) = mask_bbox(mask).ok_or(VolumeError::EmptyMask)?;
    let lo = [0, 1, 2].map(|a| lo[a].saturating_sub(margin));
    let hi = [0, 1, 2].map(|a| (hi[a] + margin).min(volume.dims[a] - 1));
    let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    let n = dims[0] * dims[1] * dims[2];
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            let row = volume.index(lo[0], y, z);
            values.extend_from_slice(&volume.values[row..row + dims[0]]);
            labels.extend_from_slice(&mask.labels[row..row + dims[0]]);
        }
    }
    let frame = FrameId(format!(
        "{}/crop[{}..{},{}..{},{}..{}]",
        volume.frame_id, lo[0], hi[0], lo[1], hi[1], lo[2], hi[2]
    ));
    let v = VoxelVolume {
        dims,
        spacing: volume.spacing,
        values,
        frame_id: frame.clone(),
    };
    let m = LabelMask {
        dims,
        spacing: mask.spacing,
        labels,
        semantics: mask.semantics,
        frame_id: frame,
    };
    Ok((v, m))
}

enum Format {
    Nifti,
    Raw,
}

fn detect_format(path: &Path) -> Result<Format> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    if name.ends_with(".nii") || name.ends_with(".nii.gz") {
        Ok(Format::Nifti)
    } else if name.ends_with(".json") || name.ends_with(".bin") {
        Ok(Format::Raw)
    } else {
        Err(VolumeError::UnsupportedFormat(path.display().to_string()))
    }
}

/// Loads a NIfTI-1 (`.nii`, `.nii.gz`) or raw (`.bin` + `.json`) volume.
pub fn load_volume(path: impl AsRef<Path>) -> Result<VoxelVolume> {
    let path = path.as_ref();
    match detect_format(path)? {
        Format::Nifti => read_nifti(path),
        Format::Raw => read_raw(path),
    }
}

/// Loads a label mask and validates its labels against `semantics`.
pub fn load_mask(path: impl AsRef<Path>, semantics: MaskSemantics) -> Result<LabelMask> {
    let vol = load_volume(path)?;
    mask_from_values(&vol, semantics)
}

/// Converts stored mask values (integral) into validated labels.
pub fn mask_from_values(vol: &VoxelVolume, semantics: MaskSemantics) -> Result<LabelMask> {
    let max = f64::from(semantics.max_label());
    let mut labels = Vec::with_capacity(vol.len());
    for (index, &value) in vol.values.iter().enumerate() {
        if value.fract() != 0.0 {
            return Err(VolumeError::NonIntegralData { value, index });
        }
        if !(0.0..=max).contains(&value) {
            return Err(VolumeError::LabelOutOfRange {
                label: value,
                semantics,
                index,
            });
        }
        labels.push(value as u8);
    }
    Ok(LabelMask {
        dims: vol.dims,
        spacing: vol.spacing,
        labels,
        semantics,
        frame_id: vol.frame_id.clone(),
    })
}

/// The mask's labels as a float volume on the same grid, for writing.
pub fn mask_as_volume(mask: &LabelMask) -> VoxelVolume {
    VoxelVolume {
        dims: mask.dims,
        spacing: mask.spacing,
        values: mask.labels.iter().map(|&l| f64::from(l)).collect(),
        frame_id: mask.frame_id.clone(),
    }
}
