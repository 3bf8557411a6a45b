use super::{named, neighbors_26, GrayVolume, COARSENESS_CAP};
use crate::features::FeatureVector;

pub const NGTDM_NAMES: [&str; 5] = ["Coarseness", "Contrast", "Busyness", "Complexity", "Strength"];

/// Per-level neighbourhood difference statistics. Index `i-1` holds level
/// `i`: `counts` is the number of voxels with at least one in-region
/// 26-neighbour and `sums` the total of `|i - mean neighbour level|`.
#[derive(Debug, Clone, PartialEq)]
pub struct NgtdmStats {
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
}

pub fn ngtdm_stats(gray: &GrayVolume) -> NgtdmStats {
    let offsets: Vec<[isize; 3]> = neighbors_26().collect();
    let mut counts = vec![0u64; gray.ng];
    let mut sums = vec![0.0; gray.ng];
    for (v, &a) in gray.levels.iter().enumerate() {
        if a == 0 {
            continue;
        }
        let mut total = 0u64;
        let mut k = 0u64;
        for &off in &offsets {
            if let Some(w) = gray.offset(v, off) {
                let b = gray.levels[w];
                if b != 0 {
                    total += u64::from(b);
                    k += 1;
                }
            }
        }
        if k == 0 {
            continue;
        }
        let mean = total as f64 / k as f64;
        counts[a as usize - 1] += 1;
        sums[a as usize - 1] += (f64::from(a) - mean).abs();
    }
    NgtdmStats { counts, sums }
}

/// Zero denominators give 0, except coarseness which is capped at
/// [`COARSENESS_CAP`].
pub fn ngtdm_features_from_stats(stats: &NgtdmStats) -> FeatureVector {
    let nvp: u64 = stats.counts.iter().sum();
    if nvp == 0 {
        return named(&NGTDM_NAMES, vec![COARSENESS_CAP, 0.0, 0.0, 0.0, 0.0]);
    }
    let nvp = nvp as f64;
    let present: Vec<(f64, f64, f64)> = stats
        .counts
        .iter()
        .zip(&stats.sums)
        .enumerate()
        .filter(|(_, (&n, _))| n > 0)
        .map(|(i, (&n, &s))| ((i + 1) as f64, n as f64 / nvp, s))
        .collect();
    let ngp = present.len() as f64;
    let ps: f64 = present.iter().map(|&(_, p, s)| p * s).sum();
    let s_total: f64 = present.iter().map(|&(_, _, s)| s).sum();

    let coarseness = if ps > 0.0 { 1.0 / ps } else { COARSENESS_CAP };

    let (mut pair_sq, mut busy_den, mut complexity, mut strength_num) = (0.0, 0.0, 0.0, 0.0);
    for &(i, pi, si) in &present {
        for &(j, pj, sj) in &present {
            let d = i - j;
            pair_sq += pi * pj * d * d;
            busy_den += (i * pi - j * pj).abs();
            complexity += d.abs() * (pi * si + pj * sj) / (pi + pj);
            strength_num += (pi + pj) * d * d;
        }
    }
    let contrast = if ngp > 1.0 {
        pair_sq / (ngp * (ngp - 1.0)) * s_total / nvp
    } else {
        0.0
    };
    let busyness = if busy_den > 0.0 { ps / busy_den } else { 0.0 };
    let strength = if s_total > 0.0 { strength_num / s_total } else { 0.0 };
    named(
        &NGTDM_NAMES,
        vec![coarseness, contrast, busyness, complexity / nvp, strength],
    )
}

pub fn ngtdm_features(gray: &GrayVolume) -> FeatureVector {
    ngtdm_features_from_stats(&ngtdm_stats(gray))
}
