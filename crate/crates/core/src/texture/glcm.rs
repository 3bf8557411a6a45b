use nalgebra::DMatrix;

use super::{average_rows, entropy, named, CountMatrix, DirectionAggregation, GrayVolume, DIRECTIONS_13};
use crate::features::FeatureVector;

pub const GLCM_NAMES: [&str; 24] = [
    "Autocorrelation",
    "JointAverage",
    "ClusterProminence",
    "ClusterShade",
    "ClusterTendency",
    "Contrast",
    "Correlation",
    "DifferenceAverage",
    "DifferenceEntropy",
    "DifferenceVariance",
    "JointEnergy",
    "JointEntropy",
    "Imc1",
    "Imc2",
    "Idm",
    "Idmn",
    "Id",
    "Idn",
    "InverseVariance",
    "MaximumProbability",
    "SumAverage",
    "SumEntropy",
    "SumSquares",
    "MCC",
];

/// Symmetric co-occurrence counts for each of the 13 directions at
/// distance 1. Entry `(i-1, j-1)` counts ordered pairs with levels `(i, j)`.
pub fn glcm_matrices(gray: &GrayVolume) -> Vec<CountMatrix> {
    let ng = gray.ng;
    DIRECTIONS_13
        .iter()
        .map(|&d| {
            let mut m = CountMatrix::zeros(ng, ng);
            for (i, &a) in gray.levels.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                if let Some(j) = gray.offset(i, d) {
                    let b = gray.levels[j];
                    if b != 0 {
                        m.add(a as usize - 1, b as usize - 1, 1);
                        m.add(b as usize - 1, a as usize - 1, 1);
                    }
                }
            }
            m
        })
        .collect()
}

fn features_of(m: &CountMatrix, ng: usize) -> Vec<f64> {
    let p = m.normalized();
    let n = m.rows;
    let at = |i: usize, j: usize| p[i * n + j];
    let lv = |i: usize| (i + 1) as f64;

    let px: Vec<f64> = (0..n).map(|i| (0..n).map(|j| at(i, j)).sum()).collect();
    let py: Vec<f64> = (0..n).map(|j| (0..n).map(|i| at(i, j)).sum()).collect();
    let mux: f64 = (0..n).map(|i| lv(i) * px[i]).sum();
    let muy: f64 = (0..n).map(|j| lv(j) * py[j]).sum();
    let varx: f64 = (0..n).map(|i| (lv(i) - mux).powi(2) * px[i]).sum();
    let vary: f64 = (0..n).map(|j| (lv(j) - muy).powi(2) * py[j]).sum();

    let mut pxpy = vec![0.0; 2 * n + 1]; // index k = i + j (levels), 2..=2n
    let mut pxmy = vec![0.0; n]; // index |i - j|
    let mut auto = 0.0;
    let (mut prom, mut shade, mut tend) = (0.0, 0.0, 0.0);
    let mut contrast = 0.0;
    let (mut idm, mut idmn, mut id, mut idn) = (0.0, 0.0, 0.0, 0.0);
    let mut energy = 0.0;
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    let ng2 = (ng * ng) as f64;
    for i in 0..n {
        for j in 0..n {
            let v = at(i, j);
            let (a, b) = (lv(i), lv(j));
            let q = px[i] * py[j];
            if q > 0.0 {
                hxy2 -= q * q.log2();
            }
            if v == 0.0 {
                continue;
            }
            let diff = (a - b).abs();
            pxpy[i + j + 2] += v;
            pxmy[i.abs_diff(j)] += v;
            auto += a * b * v;
            let c = a + b - mux - muy;
            tend += c * c * v;
            shade += c * c * c * v;
            prom += c * c * c * c * v;
            contrast += diff * diff * v;
            idm += v / (1.0 + diff * diff);
            idmn += v / (1.0 + diff * diff / ng2);
            id += v / (1.0 + diff);
            idn += v / (1.0 + diff / ng as f64);
            energy += v * v;
            hxy1 -= v * q.log2();
        }
    }
    let hxy = entropy(p.iter().copied());
    let hx = entropy(px.iter().copied());
    let hy = entropy(py.iter().copied());

    let sd = (varx * vary).sqrt();
    let correlation = if sd > 0.0 { (auto - mux * muy) / sd } else { 1.0 };
    let diff_avg: f64 = pxmy.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let diff_var: f64 = pxmy
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64 - diff_avg).powi(2) * v)
        .sum();
    let inv_var: f64 = pxmy
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, v)| v / (k * k) as f64)
        .sum();
    let sum_avg: f64 = pxpy.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let hmax = hx.max(hy);
    let imc1 = if hmax > 0.0 { (hxy - hxy1) / hmax } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy).max(0.0)).exp()).max(0.0).sqrt();
    let max_p = p.iter().copied().fold(0.0, f64::max);

    vec![
        auto,
        mux,
        prom,
        shade,
        tend,
        contrast,
        correlation,
        diff_avg,
        entropy(pxmy.iter().copied()),
        diff_var,
        energy,
        hxy,
        imc1,
        imc2,
        idm,
        idmn,
        id,
        idn,
        inv_var,
        max_p,
        sum_avg,
        entropy(pxpy.iter().copied()),
        varx,
        mcc(&p, &px, &py, n),
    ]
}

/// Maximal correlation coefficient: square root of the second-largest
/// eigenvalue of `Q(i,j) = sum_k p(i,k) p(j,k) / (px(i) py(k))`, via the
/// similar symmetric matrix `C C^T` with `C(i,k) = p(i,k) / sqrt(px(i) py(k))`.
/// Defined as 1 when a single gray level is present.
fn mcc(p: &[f64], px: &[f64], py: &[f64], n: usize) -> f64 {
    let rows: Vec<usize> = (0..n).filter(|&i| px[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&k| py[k] > 0.0).collect();
    if rows.len() < 2 {
        return 1.0;
    }
    let c = DMatrix::from_fn(rows.len(), cols.len(), |r, k| {
        let (i, j) = (rows[r], cols[k]);
        p[i * n + j] / (px[i] * py[j]).sqrt()
    });
    let q = &c * c.transpose();
    let mut eig: Vec<f64> = q.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[1].max(0.0).sqrt()
}

pub fn glcm_features_from_matrices(
    matrices: &[CountMatrix],
    ng: usize,
    aggregation: DirectionAggregation,
) -> FeatureVector {
    let values = match aggregation {
        DirectionAggregation::Average => {
            let rows: Vec<Vec<f64>> = matrices
                .iter()
                .filter(|m| m.total() > 0)
                .map(|m| features_of(m, ng))
                .collect();
            average_rows(&rows, GLCM_NAMES.len())
        }
        DirectionAggregation::Merged => {
            let mut sum = CountMatrix::zeros(ng, ng);
            matrices.iter().for_each(|m| sum.add_matrix(m));
            if sum.total() > 0 {
                features_of(&sum, ng)
            } else {
                vec![0.0; GLCM_NAMES.len()]
            }
        }
    };
    named(&GLCM_NAMES, values)
}

/// GLCM features averaged over directions that contain at least one pair.
/// A region without any neighbouring pair yields all zeros.
pub fn glcm_features(gray: &GrayVolume, aggregation: DirectionAggregation) -> FeatureVector {
    glcm_features_from_matrices(&glcm_matrices(gray), gray.ng, aggregation)
}
