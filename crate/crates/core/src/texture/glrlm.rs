use super::{average_rows, entropy, named, CountMatrix, DirectionAggregation, GrayVolume, DIRECTIONS_13};
use crate::features::FeatureVector;

pub const GLRLM_NAMES: [&str; 16] = [
    "ShortRunEmphasis",
    "LongRunEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "GrayLevelVariance",
    "RunVariance",
    "RunEntropy",
    "LowGrayLevelRunEmphasis",
    "HighGrayLevelRunEmphasis",
    "ShortRunLowGrayLevelEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LongRunHighGrayLevelEmphasis",
];

/// Run-length matrices for the 13 directions. Entry `(i-1, r-1)` counts
/// maximal in-region runs of level `i` and length `r`. Columns span
/// `1..=max(dims)`.
pub fn glrlm_matrices(gray: &GrayVolume) -> Vec<CountMatrix> {
    let max_len = *gray.dims.iter().max().unwrap();
    DIRECTIONS_13
        .iter()
        .map(|&d| {
            let back = [-d[0], -d[1], -d[2]];
            let mut m = CountMatrix::zeros(gray.ng, max_len);
            for (start, &a) in gray.levels.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let continues = gray
                    .offset(start, back)
                    .is_some_and(|p| gray.levels[p] == a);
                if continues {
                    continue;
                }
                let mut len = 1;
                let mut cur = start;
                while let Some(next) = gray.offset(cur, d) {
                    if gray.levels[next] != a {
                        break;
                    }
                    len += 1;
                    cur = next;
                }
                m.add(a as usize - 1, len - 1, 1);
            }
            m
        })
        .collect()
}

/// Shared emphasis / non-uniformity statistics of a (level, size) matrix,
/// used by run-length, size-zone and dependence matrices. `n_voxels` is the
/// region size for the percentage feature.
pub(crate) struct SizeStats {
    pub short: f64,
    pub long: f64,
    pub gln: f64,
    pub glnn: f64,
    pub sn: f64,
    pub snn: f64,
    pub percentage: f64,
    pub gl_var: f64,
    pub size_var: f64,
    pub entropy: f64,
    pub low_gl: f64,
    pub high_gl: f64,
    pub short_low: f64,
    pub short_high: f64,
    pub long_low: f64,
    pub long_high: f64,
}

pub(crate) fn size_stats(m: &CountMatrix, n_voxels: usize) -> SizeStats {
    let total = m.total() as f64;
    let p = m.normalized();
    let mut s = SizeStats {
        short: 0.0,
        long: 0.0,
        gln: 0.0,
        glnn: 0.0,
        sn: 0.0,
        snn: 0.0,
        percentage: total / n_voxels as f64,
        gl_var: 0.0,
        size_var: 0.0,
        entropy: entropy(p.iter().copied()),
        low_gl: 0.0,
        high_gl: 0.0,
        short_low: 0.0,
        short_high: 0.0,
        long_low: 0.0,
        long_high: 0.0,
    };
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for r in 0..m.rows {
        for c in 0..m.cols {
            let v = p[r * m.cols + c];
            if v == 0.0 {
                continue;
            }
            let i = (r + 1) as f64;
            let j = (c + 1) as f64;
            let (i2, j2) = (i * i, j * j);
            s.short += v / j2;
            s.long += v * j2;
            s.low_gl += v / i2;
            s.high_gl += v * i2;
            s.short_low += v / (i2 * j2);
            s.short_high += v * i2 / j2;
            s.long_low += v * j2 / i2;
            s.long_high += v * i2 * j2;
            mu_i += v * i;
            mu_j += v * j;
        }
    }
    for r in 0..m.rows {
        let row: u64 = (0..m.cols).map(|c| m.at(r, c)).sum();
        let row = row as f64;
        s.gln += row * row;
    }
    for c in 0..m.cols {
        let col: u64 = (0..m.rows).map(|r| m.at(r, c)).sum();
        let col = col as f64;
        s.sn += col * col;
    }
    s.glnn = s.gln / (total * total);
    s.gln /= total;
    s.snn = s.sn / (total * total);
    s.sn /= total;
    for r in 0..m.rows {
        for c in 0..m.cols {
            let v = p[r * m.cols + c];
            if v == 0.0 {
                continue;
            }
            s.gl_var += v * ((r + 1) as f64 - mu_i).powi(2);
            s.size_var += v * ((c + 1) as f64 - mu_j).powi(2);
        }
    }
    s
}

fn features_of(m: &CountMatrix, n_voxels: usize) -> Vec<f64> {
    let s = size_stats(m, n_voxels);
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
    ]
}

/// With merged aggregation the run percentage divides by `13 * n_voxels`.
pub fn glrlm_features_from_matrices(
    matrices: &[CountMatrix],
    n_voxels: usize,
    aggregation: DirectionAggregation,
) -> FeatureVector {
    let values = match aggregation {
        DirectionAggregation::Average => {
            let rows: Vec<Vec<f64>> = matrices
                .iter()
                .filter(|m| m.total() > 0)
                .map(|m| features_of(m, n_voxels))
                .collect();
            average_rows(&rows, GLRLM_NAMES.len())
        }
        DirectionAggregation::Merged => {
            let mut sum = CountMatrix::zeros(matrices[0].rows, matrices[0].cols);
            matrices.iter().for_each(|m| sum.add_matrix(m));
            features_of(&sum, n_voxels * matrices.len())
        }
    };
    named(&GLRLM_NAMES, values)
}

pub fn glrlm_features(gray: &GrayVolume, aggregation: DirectionAggregation) -> FeatureVector {
    glrlm_features_from_matrices(&glrlm_matrices(gray), gray.n_voxels(), aggregation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_of_five() {
        let g = GrayVolume::from_levels([5, 1, 1], vec![2; 5]);
        let m = glrlm_matrices(&g);
        assert_eq!(m[0].at(1, 4), 1);
        assert_eq!(m[0].total(), 1);
        // perpendicular direction: five runs of length 1
        assert_eq!(m[1].at(1, 0), 5);
    }

    #[test]
    fn constant_cube_run_percentage() {
        let g = GrayVolume::from_levels([3, 3, 3], vec![1; 27]);
        let m = glrlm_matrices(&g);
        let runs: Vec<u64> = m.iter().map(|x| x.total()).collect();
        // axis directions 9 runs, face diagonals 15, body diagonals 19
        let mut sorted = runs.clone();
        sorted.sort();
        assert_eq!(sorted, [9, 9, 9, 15, 15, 15, 15, 15, 15, 19, 19, 19, 19]);
        let f = glrlm_features(&g, DirectionAggregation::Average);
        let rp = f.get("RunPercentage").unwrap();
        assert!((rp - 193.0 / 351.0).abs() < 1e-15);
    }

    #[test]
    fn runs_break_at_mask_and_level() {
        let g = GrayVolume::from_levels([6, 1, 1], vec![1, 1, 0, 1, 2, 2]);
        let m = glrlm_matrices(&g);
        assert_eq!(m[0].at(0, 1), 1);
        assert_eq!(m[0].at(0, 0), 1);
        assert_eq!(m[0].at(1, 1), 1);
        assert_eq!(m[0].total(), 3);
    }
}
