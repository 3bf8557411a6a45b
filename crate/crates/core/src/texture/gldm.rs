use super::glrlm::size_stats;
use super::{named, neighbors_26, CountMatrix, GrayVolume};
use crate::features::FeatureVector;

pub const GLDM_NAMES: [&str; 14] = [
    "SmallDependenceEmphasis",
    "LargeDependenceEmphasis",
    "GrayLevelNonUniformity",
    "DependenceNonUniformity",
    "DependenceNonUniformityNormalized",
    "GrayLevelVariance",
    "DependenceVariance",
    "DependenceEntropy",
    "LowGrayLevelEmphasis",
    "HighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis",
    "SmallDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis",
    "LargeDependenceHighGrayLevelEmphasis",
];

/// Dependence matrix: entry `(i-1, k)` counts voxels of level `i` with `k`
/// in-region 26-neighbours whose level differs by at most `alpha`
/// (`k` in `0..=26`, so the dependence column index is `k + 1` in the
/// 1-based formulas).
pub fn gldm_matrix(gray: &GrayVolume, alpha: u16) -> CountMatrix {
    let offsets: Vec<[isize; 3]> = neighbors_26().collect();
    let mut m = CountMatrix::zeros(gray.ng, 27);
    for (v, &a) in gray.levels.iter().enumerate() {
        if a == 0 {
            continue;
        }
        let mut dep = 0;
        for &off in &offsets {
            if let Some(w) = gray.offset(v, off) {
                let b = gray.levels[w];
                if b != 0 && a.abs_diff(b) <= alpha {
                    dep += 1;
                }
            }
        }
        m.add(a as usize - 1, dep, 1);
    }
    m
}

pub fn gldm_features_from_matrix(m: &CountMatrix) -> FeatureVector {
    let n = m.total() as usize;
    let s = size_stats(m, n.max(1));
    named(
        &GLDM_NAMES,
        vec![
            s.short,
            s.long,
            s.gln,
            s.sn,
            s.snn,
            s.gl_var,
            s.size_var,
            s.entropy,
            s.low_gl,
            s.high_gl,
            s.short_low,
            s.short_high,
            s.long_low,
            s.long_high,
        ],
    )
}

pub fn gldm_features(gray: &GrayVolume, alpha: u16) -> FeatureVector {
    gldm_features_from_matrix(&gldm_matrix(gray, alpha))
}
