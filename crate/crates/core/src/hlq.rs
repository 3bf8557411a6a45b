//! Lobe-wise opacity quantification: 8 lung ROIs, each split into 4 HU
//! bands, with the opacity volume (VPO) and ratio (RPO) of every component.

use thiserror::Error;

use crate::features::FeatureVector;
use crate::volume::{validate_alignment, LabelMask, MaskSemantics, VolumeError, VoxelVolume};

/// Band boundaries; band `k` (1-based) is `[HU_BOUNDS[k-2], HU_BOUNDS[k-1])`
/// with infinite outer ends.
pub const HU_BOUNDS: [f64; 3] = [-750.0, -300.0, 50.0];
pub const HLQ_FEATURE_COUNT: usize = 64;

#[derive(Debug, Error)]
pub enum HlqError {
    #[error("lobe mask has no labelled voxel")]
    EmptyMask,
    #[error("expected a lobe map, got {0:?}")]
    WrongSemantics(MaskSemantics),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// HU band of a value, 1..=4.
pub fn hu_band(x: f64) -> usize {
    1 + HU_BOUNDS.iter().filter(|&&b| x >= b).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Roi {
    WholeLung,
    LeftLung,
    RightLung,
    Lobe(u8),
}

impl Roi {
    pub const ALL: [Roi; 8] = [
        Roi::WholeLung,
        Roi::LeftLung,
        Roi::RightLung,
        Roi::Lobe(1),
        Roi::Lobe(2),
        Roi::Lobe(3),
        Roi::Lobe(4),
        Roi::Lobe(5),
    ];

    pub fn name(self) -> String {
        match self {
            Roi::WholeLung => "Whole Lung".into(),
            Roi::LeftLung => "Left Lung".into(),
            Roi::RightLung => "Right Lung".into(),
            Roi::Lobe(k) => format!("Lobe#{k}"),
        }
    }

    /// Lobes 1-3 form the right lung, 4-5 the left.
    pub fn contains_label(self, label: u8) -> bool {
        match self {
            Roi::WholeLung => (1..=5).contains(&label),
            Roi::RightLung => (1..=3).contains(&label),
            Roi::LeftLung => (4..=5).contains(&label),
            Roi::Lobe(k) => label == k,
        }
    }
}

/// The 8 binary ROI masks in [`Roi::ALL`] order.
#[derive(Debug, Clone)]
pub struct RoiSet {
    pub rois: Vec<(Roi, LabelMask)>,
}

impl RoiSet {
    pub fn get(&self, roi: Roi) -> &LabelMask {
        &self.rois.iter().find(|(r, _)| *r == roi).expect("all rois present").1
    }
}

pub fn build_rois(lobe_mask: &LabelMask) -> Result<RoiSet, HlqError> {
    if lobe_mask.semantics() != MaskSemantics::LobeMap {
        return Err(HlqError::WrongSemantics(lobe_mask.semantics()));
    }
    if lobe_mask.count_nonzero() == 0 {
        return Err(HlqError::EmptyMask);
    }
    let labels = lobe_mask.labels();
    let rois = Roi::ALL
        .iter()
        .map(|&r| (r, lobe_mask.binary_from_fn(|i| r.contains_label(labels[i]))))
        .collect();
    Ok(RoiSet { rois })
}

/// Voxels of `roi` whose value falls in HU band `hu_index` (1..=4).
pub fn component_mask(volume: &VoxelVolume, roi: &LabelMask, hu_index: usize) -> LabelMask {
    assert!((1..=4).contains(&hu_index), "hu_index {hu_index}");
    let v = volume.values();
    roi.binary_from_fn(|i| roi.is_set(i) && hu_band(v[i]) == hu_index)
}

fn overlap(a: &LabelMask, b: &LabelMask) -> usize {
    a.labels()
        .iter()
        .zip(b.labels())
        .filter(|(&x, &y)| x != 0 && y != 0)
        .count()
}

/// Opacity volume inside `component`, in mm^3.
pub fn vpo(opacity_mask: &LabelMask, component: &LabelMask, spacing: [f64; 3]) -> f64 {
    overlap(opacity_mask, component) as f64 * spacing.iter().product::<f64>()
}

/// Opacity fraction of `component`; 0 for an empty component. Spacing
/// cancels out and is accepted only to mirror [`vpo`].
pub fn rpo(opacity_mask: &LabelMask, component: &LabelMask, _spacing: [f64; 3]) -> f64 {
    let n = component.count_nonzero();
    if n == 0 {
        return 0.0;
    }
    overlap(opacity_mask, component) as f64 / n as f64
}

pub fn hlq_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(HLQ_FEATURE_COUNT);
    for r in Roi::ALL {
        for k in 1..=4 {
            for kind in ["VPO", "RPO"] {
                names.push(format!("{} {kind} HU{k}", r.name()));
            }
        }
    }
    names
}

/// 64 features ordered ROI, then HU band, then VPO before RPO.
///
/// Computed in one pass over the voxels: per (lobe label, band) the voxel
/// and opacity counts, from which every ROI is a sum of lobes.
pub fn extract_hlq(
    volume: &VoxelVolume,
    lobe_mask: &LabelMask,
    opacity_mask: &LabelMask,
) -> Result<FeatureVector, HlqError> {
    validate_alignment(volume, &[lobe_mask, opacity_mask])?;
    if lobe_mask.semantics() != MaskSemantics::LobeMap {
        return Err(HlqError::WrongSemantics(lobe_mask.semantics()));
    }
    if lobe_mask.count_nonzero() == 0 {
        return Err(HlqError::EmptyMask);
    }
    // [label][band] -> (voxels, opaque voxels)
    let mut counts = [[(0u64, 0u64); 4]; 6];
    for ((&x, &l), &o) in volume
        .values()
        .iter()
        .zip(lobe_mask.labels())
        .zip(opacity_mask.labels())
    {
        if l == 0 {
            continue;
        }
        let c = &mut counts[l as usize][hu_band(x) - 1];
        c.0 += 1;
        c.1 += u64::from(o != 0);
    }
    let vox = volume.voxel_volume();
    let mut out = FeatureVector::with_capacity(HLQ_FEATURE_COUNT);
    for r in Roi::ALL {
        for band in 0..4 {
            let (n, op) = (1..=5u8)
                .filter(|&l| r.contains_label(l))
                .map(|l| counts[l as usize][band])
                .fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
            let name = r.name();
            out.push(format!("{name} VPO HU{}", band + 1), op as f64 * vox);
            let ratio = if n == 0 { 0.0 } else { op as f64 / n as f64 };
            out.push(format!("{name} RPO HU{}", band + 1), ratio);
        }
    }
    Ok(out)
}
