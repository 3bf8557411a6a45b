use super::glrlm::size_stats;
use super::{named, neighbors_26, CountMatrix, GrayVolume};
use crate::features::FeatureVector;

pub const GLSZM_NAMES: [&str; 16] = [
    "SmallAreaEmphasis",
    "LargeAreaEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "ZonePercentage",
    "GrayLevelVariance",
    "ZoneVariance",
    "ZoneEntropy",
    "LowGrayLevelZoneEmphasis",
    "HighGrayLevelZoneEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
];

/// Size-zone matrix: entry `(i-1, s-1)` counts 26-connected zones of level
/// `i` with `s` voxels. Columns are trimmed to the largest zone.
pub fn glszm_matrix(gray: &GrayVolume) -> CountMatrix {
    let n = gray.n_voxels().max(1);
    let mut m = CountMatrix::zeros(gray.ng, n);
    let offsets: Vec<[isize; 3]> = neighbors_26().collect();
    let mut seen = vec![false; gray.levels.len()];
    let mut stack = Vec::new();
    for (seed, &a) in gray.levels.iter().enumerate() {
        if a == 0 || seen[seed] {
            continue;
        }
        seen[seed] = true;
        stack.push(seed);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &off in &offsets {
                if let Some(w) = gray.offset(v, off) {
                    if !seen[w] && gray.levels[w] == a {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        m.add(a as usize - 1, size - 1, 1);
    }
    m.trim_cols()
}

pub fn glszm_features_from_matrix(m: &CountMatrix, n_voxels: usize) -> FeatureVector {
    let s = size_stats(m, n_voxels);
    named(
        &GLSZM_NAMES,
        vec![
            s.short,
            s.long,
            s.gln,
            s.glnn,
            s.sn,
            s.snn,
            s.percentage,
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

pub fn glszm_features(gray: &GrayVolume) -> FeatureVector {
    glszm_features_from_matrix(&glszm_matrix(gray), gray.n_voxels())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_cube_one_zone() {
        let g = GrayVolume::from_levels([2, 2, 2], vec![1; 8]);
        let m = glszm_matrix(&g);
        assert_eq!(m.at(0, 7), 1);
        assert_eq!(m.total(), 1);
        let f = glszm_features(&g);
        assert_eq!(f.get("ZonePercentage"), Some(1.0 / 8.0));
    }

    #[test]
    fn diagonal_voxels_connect() {
        let mut levels = vec![0; 8];
        levels[0] = 2; // (0,0,0)
        levels[7] = 2; // (1,1,1)
        let g = GrayVolume::from_levels([2, 2, 2], levels);
        let m = glszm_matrix(&g);
        assert_eq!(m.total(), 1);
        assert_eq!(m.at(1, 1), 1);
    }

    #[test]
    fn different_levels_split_zones() {
        let g = GrayVolume::from_levels([4, 1, 1], vec![1, 2, 2, 1]);
        let m = glszm_matrix(&g);
        assert_eq!(m.at(0, 0), 2);
        assert_eq!(m.at(1, 1), 1);
    }
}
