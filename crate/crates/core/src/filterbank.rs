//! The 18 image filters applied before texture extraction.
//!
//! Intensity maps use `m = max|x|` over the whole volume and are the identity
//! when `m == 0`:
//!
//! | filter      | map                                              |
//! |-------------|--------------------------------------------------|
//! | Square      | `(x / sqrt(m))^2`                                |
//! | Sqrt        | `sign(x) * sqrt(m * |x|)`                        |
//! | Logarithm   | `sign(x) * ln(|x| + 1) * m / ln(m + 1)`          |
//! | Exponential | `exp(x * ln(m) / m)`                             |
//!
//! LoG: Gaussian smoothing with sigma in millimetres (per-axis `sigma /
//! spacing` voxels, radius `ceil(4 sigma / spacing)`, taps renormalised to
//! unit sum), then the 6-neighbour Laplacian scaled by `1 / spacing^2`.
//!
//! Wavelet: one undecimated separable level with Coiflet-1 analysis filters.
//! Letter `i` of the sub-band code selects low or high pass along axis `i`
//! in `x, y, z` order. Both LoG and wavelet use half-sample symmetric
//! reflection at the borders.

use std::borrow::Cow;
use std::cell::OnceCell;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::VoxelVolume;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("LoG sigma must be finite and > 0, got {0}")]
    InvalidSigma(f64),
}

/// Sub-band code over `{L, H}^3`, letters in `x, y, z` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subband {
    pub high: [bool; 3],
}

impl Subband {
    /// Listing order of the filter bank.
    pub const ALL: [Subband; 8] = [
        Subband::from_bits([true, true, true]),
        Subband::from_bits([true, true, false]),
        Subband::from_bits([true, false, true]),
        Subband::from_bits([false, true, true]),
        Subband::from_bits([true, false, false]),
        Subband::from_bits([false, true, false]),
        Subband::from_bits([false, false, true]),
        Subband::from_bits([false, false, false]),
    ];

    pub const fn from_bits(high: [bool; 3]) -> Self {
        Subband { high }
    }

    pub fn parse(code: &str) -> Option<Self> {
        let b = code.as_bytes();
        if b.len() != 3 {
            return None;
        }
        let mut high = [false; 3];
        for (h, c) in high.iter_mut().zip(b) {
            *h = match c {
                b'H' => true,
                b'L' => false,
                _ => return None,
            };
        }
        Some(Subband { high })
    }

    /// Position in the `L/H` tree where bit 2 is the x letter.
    fn tree_index(self) -> usize {
        (usize::from(self.high[0]) << 2) | (usize::from(self.high[1]) << 1) | usize::from(self.high[2])
    }
}

impl fmt::Display for Subband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for h in self.high {
            f.write_str(if h { "H" } else { "L" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FilterSpec {
    Original,
    Square,
    Sqrt,
    Logarithm,
    Exponential,
    Wavelet(Subband),
    LoG { sigma_mm: f64 },
}

/// LoG sigmas of the standard bank, in millimetres.
pub const LOG_SIGMAS_MM: [f64; 5] = [0.5, 1.5, 2.5, 3.5, 4.5];

impl FilterSpec {
    pub fn canonical_name(&self) -> String {
        match self {
            FilterSpec::Original => "Original".into(),
            FilterSpec::Square => "Square".into(),
            FilterSpec::Sqrt => "Sqrt".into(),
            FilterSpec::Logarithm => "Logarithm".into(),
            FilterSpec::Exponential => "Exponential".into(),
            FilterSpec::Wavelet(s) => s.to_string(),
            FilterSpec::LoG { sigma_mm } => format!("LoG(σ={sigma_mm})"),
        }
    }

    pub fn is_original(&self) -> bool {
        matches!(self, FilterSpec::Original)
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_name())
    }
}

/// The 18 filters in feature-naming order: the original image, four
/// intensity maps, eight wavelet sub-bands, five LoG sigmas ascending.
pub fn enumerate_filter_bank() -> Vec<FilterSpec> {
    let mut bank = vec![
        FilterSpec::Original,
        FilterSpec::Square,
        FilterSpec::Sqrt,
        FilterSpec::Logarithm,
        FilterSpec::Exponential,
    ];
    bank.extend(Subband::ALL.iter().map(|&s| FilterSpec::Wavelet(s)));
    bank.extend(
        LOG_SIGMAS_MM
            .iter()
            .map(|&sigma_mm| FilterSpec::LoG { sigma_mm }),
    );
    bank
}

pub fn apply_filter(volume: &VoxelVolume, spec: &FilterSpec) -> Result<VoxelVolume, FilterError> {
    Ok(match *spec {
        FilterSpec::Original => volume.clone(),
        FilterSpec::Square | FilterSpec::Sqrt | FilterSpec::Logarithm | FilterSpec::Exponential => {
            intensity_map(volume, spec)
        }
        FilterSpec::Wavelet(band) => wavelet_subband(volume, band, Boundary::Symmetric),
        FilterSpec::LoG { sigma_mm } => laplacian_of_gaussian(volume, sigma_mm)?,
    })
}

fn intensity_map(volume: &VoxelVolume, spec: &FilterSpec) -> VoxelVolume {
    let m = volume.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return volume.clone();
    }
    let f: Box<dyn Fn(f64) -> f64> = match spec {
        FilterSpec::Square => {
            let c = 1.0 / m.sqrt();
            Box::new(move |x| (c * x) * (c * x))
        }
        FilterSpec::Sqrt => Box::new(move |x: f64| x.signum() * (m * x.abs()).sqrt()),
        FilterSpec::Logarithm => {
            let scale = m / (m + 1.0).ln();
            Box::new(move |x: f64| x.signum() * (x.abs() + 1.0).ln() * scale)
        }
        FilterSpec::Exponential => {
            let c = m.ln() / m;
            Box::new(move |x: f64| (c * x).exp())
        }
        _ => unreachable!("not an intensity map"),
    };
    let values = volume
        .values()
        .iter()
        .map(|&x| if x == 0.0 && !matches!(spec, FilterSpec::Exponential) { 0.0 } else { f(x) })
        .collect();
    volume.map_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Half-sample symmetric: `x[-1] = x[0]`.
    Symmetric,
    Periodic,
}

/// Maps an arbitrary (possibly far out of range) index into `0..n`.
#[inline]
pub fn boundary_index(i: isize, n: usize, boundary: Boundary) -> usize {
    let n = n as isize;
    match boundary {
        Boundary::Periodic => i.rem_euclid(n) as usize,
        Boundary::Symmetric => {
            let m = i.rem_euclid(2 * n);
            (if m < n { m } else { 2 * n - 1 - m }) as usize
        }
    }
}

/// `out[i] = sum_t kernel[t] * in[i + t - origin]` along one axis.
pub fn correlate_axis(
    values: &[f64],
    dims: [usize; 3],
    axis: usize,
    kernel: &[f64],
    origin: usize,
    boundary: Boundary,
) -> Vec<f64> {
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let n = dims[axis];
    let mut out = vec![0.0; values.len()];
    // Precomputed source offsets for each output position along the line.
    let taps: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..kernel.len())
                .map(|t| boundary_index(i as isize + t as isize - origin as isize, n, boundary))
                .collect()
        })
        .collect();
    let lines = values.len() / n;
    for line in 0..lines {
        let base = match axis {
            0 => line * n,
            1 => (line / dims[0]) * dims[0] * dims[1] + line % dims[0],
            _ => line,
        };
        for (i, src) in taps.iter().enumerate() {
            let mut acc = 0.0;
            for (k, &s) in kernel.iter().zip(src) {
                acc += k * values[base + s * stride];
            }
            out[base + i * stride] = acc;
        }
    }
    out
}

/// Sampled Gaussian with `sigma_vox` voxels, radius `ceil(4 sigma_vox)`,
/// normalised to unit sum.
pub fn gaussian_kernel(sigma_vox: f64) -> Vec<f64> {
    let r = (4.0 * sigma_vox).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub fn laplacian_of_gaussian(volume: &VoxelVolume, sigma_mm: f64) -> Result<VoxelVolume, FilterError> {
    if !(sigma_mm.is_finite() && sigma_mm > 0.0) {
        return Err(FilterError::InvalidSigma(sigma_mm));
    }
    let dims = volume.dims();
    let sp = volume.spacing();
    let mut smooth = volume.values().to_vec();
    for axis in 0..3 {
        let k = gaussian_kernel(sigma_mm / sp[axis]);
        smooth = correlate_axis(&smooth, dims, axis, &k, k.len() / 2, Boundary::Symmetric);
    }
    let mut out = vec![0.0; smooth.len()];
    for axis in 0..3 {
        let w = 1.0 / (sp[axis] * sp[axis]);
        let d2 = correlate_axis(&smooth, dims, axis, &[w, -2.0 * w, w], 1, Boundary::Symmetric);
        for (o, d) in out.iter_mut().zip(d2) {
            *o += d;
        }
    }
    Ok(volume.map_values(out))
}

/// Coiflet-1 decomposition low-pass taps.
pub const COIF1_LO: [f64; 6] = [
    -0.015_655_728_135_464_54,
    -0.072_732_619_512_853_9,
    0.384_864_846_864_202_86,
    0.852_572_020_212_255_4,
    0.337_897_662_457_809_2,
    -0.072_732_619_512_853_9,
];

/// Coiflet-1 decomposition high-pass taps (quadrature mirror of the low pass).
pub fn coif1_hi() -> [f64; 6] {
    let n = COIF1_LO.len();
    std::array::from_fn(|t| {
        let v = COIF1_LO[n - 1 - t];
        if t % 2 == 0 {
            v
        } else {
            -v
        }
    })
}

fn wavelet_pass(values: &[f64], dims: [usize; 3], axis: usize, high: bool, b: Boundary) -> Vec<f64> {
    // Convolution: reverse taps for correlate_axis.
    let taps: Vec<f64> = if high {
        coif1_hi().iter().rev().copied().collect()
    } else {
        COIF1_LO.iter().rev().copied().collect()
    };
    correlate_axis(values, dims, axis, &taps, taps.len() / 2, b)
}

pub fn wavelet_subband(volume: &VoxelVolume, band: Subband, boundary: Boundary) -> VoxelVolume {
    let dims = volume.dims();
    let mut v = volume.values().to_vec();
    for axis in 0..3 {
        v = wavelet_pass(&v, dims, axis, band.high[axis], boundary);
    }
    volume.map_values(v)
}

/// All eight sub-bands in [`Subband::ALL`] order, sharing the partial passes.
pub fn wavelet_decompose(volume: &VoxelVolume, boundary: Boundary) -> Vec<VoxelVolume> {
    let dims = volume.dims();
    let mut level = vec![volume.values().to_vec()];
    for axis in 0..3 {
        level = level
            .iter()
            .flat_map(|v| {
                [false, true].map(|high| wavelet_pass(v, dims, axis, high, boundary))
            })
            .collect();
    }
    Subband::ALL
        .iter()
        .map(|b| volume.map_values(level[b.tree_index()].clone()))
        .collect()
}

/// Lazily filtered images of one volume; the wavelet decomposition is
/// computed once on first use.
pub struct FilterCache<'a> {
    volume: &'a VoxelVolume,
    wavelet: OnceCell<Vec<VoxelVolume>>,
}

impl<'a> FilterCache<'a> {
    pub fn new(volume: &'a VoxelVolume) -> Self {
        Self {
            volume,
            wavelet: OnceCell::new(),
        }
    }

    pub fn get(&self, spec: &FilterSpec) -> Result<Cow<'_, VoxelVolume>, FilterError> {
        Ok(match spec {
            FilterSpec::Original => Cow::Borrowed(self.volume),
            FilterSpec::Wavelet(b) => {
                let bands = self
                    .wavelet
                    .get_or_init(|| wavelet_decompose(self.volume, Boundary::Symmetric));
                let pos = Subband::ALL.iter().position(|s| s == b).unwrap();
                Cow::Borrowed(&bands[pos])
            }
            other => Cow::Owned(apply_filter(self.volume, other)?),
        })
    }
}
