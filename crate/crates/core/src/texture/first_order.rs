use super::{entropy, named, GrayVolume, TextureError};
use crate::features::FeatureVector;
use crate::volume::{LabelMask, VoxelVolume};

pub const FIRST_ORDER_NAMES: [&str; 18] = [
    "Energy",
    "TotalEnergy",
    "Entropy",
    "Minimum",
    "10Percentile",
    "90Percentile",
    "Maximum",
    "Mean",
    "Median",
    "InterquartileRange",
    "Range",
    "MeanAbsoluteDeviation",
    "RobustMeanAbsoluteDeviation",
    "RootMeanSquared",
    "StandardDeviation",
    "Skewness",
    "Kurtosis",
    "Variance",
];

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Intensity statistics of the masked voxels. Entropy uses the gray levels
/// of `gray`. Standard deviation and variance are population moments;
/// kurtosis is not excess-corrected. Skewness and kurtosis are 0 for a
/// constant region.
pub fn first_order_features(
    volume: &VoxelVolume,
    mask: &LabelMask,
    gray: &GrayVolume,
) -> Result<FeatureVector, TextureError> {
    let x: Vec<f64> = volume
        .values()
        .iter()
        .zip(mask.labels())
        .filter(|(_, &l)| l != 0)
        .map(|(&v, _)| v)
        .collect();
    if x.is_empty() {
        return Err(TextureError::EmptyMask);
    }
    let n = x.len() as f64;
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);

    let energy: f64 = x.iter().map(|v| v * v).sum();
    let total_energy = energy * volume.voxel_volume();

    let mut hist = vec![0u64; gray.ng + 1];
    for &l in &gray.levels {
        if l != 0 {
            hist[l as usize] += 1;
        }
    }
    let total: u64 = hist.iter().sum();
    let ent = entropy(hist.iter().map(|&c| c as f64 / total as f64));

    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let p10 = percentile(&sorted, 0.10);
    let p90 = percentile(&sorted, 0.90);
    let p25 = percentile(&sorted, 0.25);
    let p75 = percentile(&sorted, 0.75);
    let median = percentile(&sorted, 0.5);
    let mean = x.iter().sum::<f64>() / n;
    let mad = x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;

    let robust: Vec<f64> = x
        .iter()
        .copied()
        .filter(|&v| v >= p10 && v <= p90)
        .collect();
    let rmean = robust.iter().sum::<f64>() / robust.len() as f64;
    let rmad = robust.iter().map(|v| (v - rmean).abs()).sum::<f64>() / robust.len() as f64;

    let rms = (energy / n).sqrt();
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in &x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };

    Ok(named(
        &FIRST_ORDER_NAMES,
        vec![
            energy,
            total_energy,
            ent,
            min,
            p10,
            p90,
            max,
            mean,
            median,
            p75 - p25,
            max - min,
            mad,
            rmad,
            rms,
            m2.sqrt(),
            skew,
            kurt,
            m2,
        ],
    ))
}
