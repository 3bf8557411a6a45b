//! Per-subject image features (HLQ then WLR) and assembly of the learning
//! table.

use thiserror::Error;

use crate::clinical::{ClinicalError, ClinicalTable};
use crate::features::{FeatureGroup, FeatureTable, FeatureVector, TableError};
use crate::hlq::{extract_hlq, hlq_feature_names, HlqError, HLQ_FEATURE_COUNT};
use crate::texture::{extract_wlr, wlr_feature_names, TextureConfig, TextureError, WLR_FEATURE_COUNT};
use crate::volume::{validate_alignment, LabelMask, VolumeError, VoxelVolume};

pub const IMAGE_FEATURE_COUNT: usize = HLQ_FEATURE_COUNT + WLR_FEATURE_COUNT;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("hlq: {0}")]
    Hlq(#[from] HlqError),
    #[error("wlr: {0}")]
    Texture(#[from] TextureError),
    #[error("subject {0:?} has no clinical row")]
    MissingClinicalRow(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Clinical(#[from] ClinicalError),
}

/// The 1755 image features of one subject: 64 HLQ, then 1691 WLR.
pub fn extract_image_features(
    volume: &VoxelVolume,
    lobe_mask: &LabelMask,
    opacity_mask: &LabelMask,
    config: &TextureConfig,
) -> Result<FeatureVector, ExtractError> {
    let token = validate_alignment(volume, &[lobe_mask, opacity_mask])?;
    let mut out = extract_hlq(volume, lobe_mask, opacity_mask)?;
    out.extend(extract_wlr(volume, opacity_mask, &token, config)?);
    Ok(out)
}

pub fn image_feature_names() -> Vec<String> {
    let mut n = hlq_feature_names();
    n.extend(wlr_feature_names());
    n
}

pub fn image_feature_groups() -> Vec<FeatureGroup> {
    let mut g = vec![FeatureGroup::Hlq; HLQ_FEATURE_COUNT];
    g.extend(std::iter::repeat_n(FeatureGroup::Wlr, WLR_FEATURE_COUNT));
    g
}

/// Image rows joined with the clinical table by subject id. Labels come
/// from `clinical`; subjects absent from it are an error. DVB columns go
/// last and keep their missing cells.
pub fn assemble_table(
    images: &[(String, FeatureVector)],
    clinical: &ClinicalTable,
) -> Result<FeatureTable, ExtractError> {
    let names = image_feature_names();
    let mut t = FeatureTable::new(names.clone(), image_feature_groups())?;
    for (id, fv) in images {
        if fv.names != names {
            return Err(TableError::RowLength {
                row: t.n_rows(),
                got: fv.len(),
                want: names.len(),
            }
            .into());
        }
        let r = clinical
            .subjects
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| ExtractError::MissingClinicalRow(id.clone()))?;
        t.push_row(id.clone(), &fv.values, clinical.labels[r])?;
    }
    Ok(t.join_columns(&clinical.to_feature_table()?)?)
}
