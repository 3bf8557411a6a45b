//! Markdown feature dictionary: formulas, conventions and the ordered list of
//! all WLR feature names.

use std::fmt::Write;

use super::{texture_families, wlr_feature_names, SHAPE_NAMES, WLR_FEATURE_COUNT};
use crate::filterbank::enumerate_filter_bank;

fn formula(family: &str, name: &str) -> &'static str {
    match (family, name) {
        ("FirstOrder", "Energy") => "sum x^2",
        ("FirstOrder", "TotalEnergy") => "Energy * voxel volume (mm^3)",
        ("FirstOrder", "Entropy") => "-sum p(i) log2 p(i) over the gray-level histogram",
        ("FirstOrder", "Minimum") => "min x",
        ("FirstOrder", "10Percentile") => "10th percentile, linear interpolation",
        ("FirstOrder", "90Percentile") => "90th percentile, linear interpolation",
        ("FirstOrder", "Maximum") => "max x",
        ("FirstOrder", "Mean") => "mean x",
        ("FirstOrder", "Median") => "50th percentile",
        ("FirstOrder", "InterquartileRange") => "P75 - P25",
        ("FirstOrder", "Range") => "max - min",
        ("FirstOrder", "MeanAbsoluteDeviation") => "mean |x - mean|",
        ("FirstOrder", "RobustMeanAbsoluteDeviation") => "mean |x - mean_r| over P10 <= x <= P90",
        ("FirstOrder", "RootMeanSquared") => "sqrt(Energy / N)",
        ("FirstOrder", "StandardDeviation") => "sqrt(Variance)",
        ("FirstOrder", "Skewness") => "m3 / m2^1.5; 0 when m2 = 0",
        ("FirstOrder", "Kurtosis") => "m4 / m2^2 (not excess); 0 when m2 = 0",
        ("FirstOrder", "Variance") => "m2 (population)",
        ("GLCM", "Autocorrelation") => "sum p(i,j) i j",
        ("GLCM", "JointAverage") => "mu_x = sum i p_x(i)",
        ("GLCM", "ClusterProminence") => "sum (i + j - mu_x - mu_y)^4 p(i,j)",
        ("GLCM", "ClusterShade") => "sum (i + j - mu_x - mu_y)^3 p(i,j)",
        ("GLCM", "ClusterTendency") => "sum (i + j - mu_x - mu_y)^2 p(i,j)",
        ("GLCM", "Contrast") => "sum (i - j)^2 p(i,j)",
        ("GLCM", "Correlation") => "(sum p i j - mu_x mu_y) / (sigma_x sigma_y); 1 when sigma_x sigma_y = 0",
        ("GLCM", "DifferenceAverage") => "sum k p_{x-y}(k)",
        ("GLCM", "DifferenceEntropy") => "-sum p_{x-y} log2 p_{x-y}",
        ("GLCM", "DifferenceVariance") => "sum (k - DA)^2 p_{x-y}(k)",
        ("GLCM", "JointEnergy") => "sum p^2",
        ("GLCM", "JointEntropy") => "HXY = -sum p log2 p",
        ("GLCM", "Imc1") => "(HXY - HXY1) / max(HX, HY); 0 when max = 0",
        ("GLCM", "Imc2") => "sqrt(1 - exp(-2 (HXY2 - HXY)))",
        ("GLCM", "Idm") => "sum p / (1 + (i - j)^2)",
        ("GLCM", "Idmn") => "sum p / (1 + (i - j)^2 / Ng^2)",
        ("GLCM", "Id") => "sum p / (1 + |i - j|)",
        ("GLCM", "Idn") => "sum p / (1 + |i - j| / Ng)",
        ("GLCM", "InverseVariance") => "sum_{k>0} p_{x-y}(k) / k^2",
        ("GLCM", "MaximumProbability") => "max p",
        ("GLCM", "SumAverage") => "sum k p_{x+y}(k)",
        ("GLCM", "SumEntropy") => "-sum p_{x+y} log2 p_{x+y}",
        ("GLCM", "SumSquares") => "sum (i - mu_x)^2 p(i,j)",
        ("GLCM", "MCC") => "sqrt(second eigenvalue of Q); 1 when one level present",
        (_, "ShortRunEmphasis" | "SmallAreaEmphasis" | "SmallDependenceEmphasis") => "sum p(i,j) / j^2",
        (_, "LongRunEmphasis" | "LargeAreaEmphasis" | "LargeDependenceEmphasis") => "sum p(i,j) j^2",
        (_, "GrayLevelNonUniformity") => "sum_i (sum_j P(i,j))^2 / N",
        (_, "GrayLevelNonUniformityNormalized") => "sum_i (sum_j P(i,j))^2 / N^2",
        (_, "RunLengthNonUniformity" | "SizeZoneNonUniformity" | "DependenceNonUniformity") => {
            "sum_j (sum_i P(i,j))^2 / N"
        }
        (
            _,
            "RunLengthNonUniformityNormalized"
            | "SizeZoneNonUniformityNormalized"
            | "DependenceNonUniformityNormalized",
        ) => "sum_j (sum_i P(i,j))^2 / N^2",
        (_, "RunPercentage" | "ZonePercentage") => "N / number of voxels",
        (_, "GrayLevelVariance") => "sum p (i - mu_i)^2",
        (_, "RunVariance" | "ZoneVariance" | "DependenceVariance") => "sum p (j - mu_j)^2",
        (_, "RunEntropy" | "ZoneEntropy" | "DependenceEntropy") => "-sum p log2 p",
        (_, "LowGrayLevelRunEmphasis" | "LowGrayLevelZoneEmphasis" | "LowGrayLevelEmphasis") => {
            "sum p / i^2"
        }
        (_, "HighGrayLevelRunEmphasis" | "HighGrayLevelZoneEmphasis" | "HighGrayLevelEmphasis") => {
            "sum p i^2"
        }
        (
            _,
            "ShortRunLowGrayLevelEmphasis"
            | "SmallAreaLowGrayLevelEmphasis"
            | "SmallDependenceLowGrayLevelEmphasis",
        ) => "sum p / (i^2 j^2)",
        (
            _,
            "ShortRunHighGrayLevelEmphasis"
            | "SmallAreaHighGrayLevelEmphasis"
            | "SmallDependenceHighGrayLevelEmphasis",
        ) => "sum p i^2 / j^2",
        (
            _,
            "LongRunLowGrayLevelEmphasis"
            | "LargeAreaLowGrayLevelEmphasis"
            | "LargeDependenceLowGrayLevelEmphasis",
        ) => "sum p j^2 / i^2",
        (
            _,
            "LongRunHighGrayLevelEmphasis"
            | "LargeAreaHighGrayLevelEmphasis"
            | "LargeDependenceHighGrayLevelEmphasis",
        ) => "sum p i^2 j^2",
        ("NGTDM", "Coarseness") => "1 / sum p_i s_i; 1e6 when the sum is 0",
        ("NGTDM", "Contrast") => "[sum p_i p_j (i-j)^2 / (Ngp (Ngp-1))] * sum s_i / Nvp; 0 when Ngp = 1",
        ("NGTDM", "Busyness") => "sum p_i s_i / sum |i p_i - j p_j|; 0 when denominator is 0",
        ("NGTDM", "Complexity") => "sum |i-j| (p_i s_i + p_j s_j) / (p_i + p_j) / Nvp",
        ("NGTDM", "Strength") => "sum (p_i + p_j)(i-j)^2 / sum s_i; 0 when sum s_i = 0",
        _ => "",
    }
}

fn shape_formula(name: &str) -> &'static str {
    match name {
        "MeshVolume" => "volume enclosed by the marching-cubes mesh (iso 0.5)",
        "VoxelVolume" => "voxel count * voxel volume",
        "SurfaceArea" => "sum of mesh triangle areas",
        "SurfaceVolumeRatio" => "A / V",
        "Sphericity" => "(36 pi V^2)^(1/3) / A",
        "Compactness1" => "V / (sqrt(pi) A^(3/2))",
        "Compactness2" => "36 pi V^2 / A^3",
        "SphericalDisproportion" => "A / (36 pi V^2)^(1/3)",
        "Maximum3DDiameter" => "largest distance between mesh vertices",
        "Maximum2DDiameterSlice" => "largest vertex distance within an axial (constant z) plane",
        "Maximum2DDiameterColumn" => "largest vertex distance within a coronal (constant y) plane",
        "Maximum2DDiameterRow" => "largest vertex distance within a sagittal (constant x) plane",
        "MajorAxisLength" => "4 sqrt(lambda_1) of the voxel coordinate covariance",
        "MinorAxisLength" => "4 sqrt(lambda_2)",
        "LeastAxisLength" => "4 sqrt(lambda_3)",
        "Elongation" => "sqrt(lambda_2 / lambda_1); 1 when lambda_1 = 0",
        "Flatness" => "sqrt(lambda_3 / lambda_1); 1 when lambda_1 = 0",
        _ => "",
    }
}

/// Renders the dictionary as Markdown.
pub fn feature_dictionary_markdown() -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# WLR feature dictionary\n");
    let _ = writeln!(
        s,
        "{WLR_FEATURE_COUNT} features: 17 shape features on the original mask, then 93 texture \
         features for each of 18 filtered images. Names are `<filter>-<family>-<feature>`.\n"
    );
    let _ = writeln!(s, "## Conventions\n");
    for line in [
        "Voxels are indexed x-fastest; all distances and volumes are in mm / mm^3.",
        "Original image: fixed bin width 25 HU anchored at the masked minimum, level = floor((x - min) / w) + 1.",
        "Filtered images: 32 equal-width bins over the masked range (1 level for a constant region).",
        "GLCM and GLRLM use the 13 unique offsets at distance 1; features are computed per direction and averaged over directions with a non-empty matrix.",
        "GLSZM zones, NGTDM neighbourhoods and GLDM dependences use 26-connectivity; GLDM alpha = 0.",
        "Entropies use log2 and skip zero probabilities.",
        "A region without any neighbouring voxel pair yields GLCM features of 0.",
        "p denotes a matrix normalised to unit sum, i the gray level (1-based), j the run length, zone size or dependence + 1.",
    ] {
        let _ = writeln!(s, "- {line}");
    }
    let _ = writeln!(s, "\n## Filters\n");
    for f in enumerate_filter_bank() {
        let _ = writeln!(s, "- `{}`", f.canonical_name());
    }
    let _ = writeln!(s, "\n## Shape (17)\n\n| feature | definition |\n|---|---|");
    for n in SHAPE_NAMES {
        let _ = writeln!(s, "| {n} | {} |", shape_formula(n));
    }
    for (family, names) in texture_families() {
        let _ = writeln!(s, "\n## {family} ({})\n\n| feature | definition |\n|---|---|", names.len());
        for n in names {
            let _ = writeln!(s, "| {n} | {} |", formula(family, n));
        }
    }
    let _ = writeln!(s, "\n## All features in extraction order\n");
    for (i, n) in wlr_feature_names().iter().enumerate() {
        let _ = writeln!(s, "{}. `{n}`", i + 1);
    }
    s
}
