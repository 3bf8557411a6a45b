//! Lung CT radiomics and ICU-admission prediction.
//!
//! The pipeline turns a CT volume plus lobe and opacity masks into three
//! feature groups (lobe-wise opacity quantification, a filtered radiomics
//! bank, clinical variables), ranks features with random-forest Gini
//! importance and evaluates prediction with stratified cross-validation.

pub mod clinical;
pub mod eval;
pub mod extract;
pub mod features;
pub mod filterbank;
pub mod forest;
pub mod hlq;
pub mod synth;
pub mod texture;
pub mod volume;

pub use features::{FeatureGroup, FeatureTable, FeatureVector};
pub use volume::{LabelMask, MaskSemantics, VoxelVolume};
