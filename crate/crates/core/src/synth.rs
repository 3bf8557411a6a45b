//! Synthetic cohorts: lung phantoms with planted opacity blobs and known
//! HLQ values, matching clinical records, and plain feature tables with
//! planted signal.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clinical::{ClinicalColumn, ClinicalTable};
use crate::features::{FeatureGroup, FeatureTable, FeatureVector, TableError};
use crate::hlq::{Roi, HLQ_FEATURE_COUNT};
use crate::volume::{LabelMask, MaskSemantics, VolumeError, VoxelVolume};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Table(#[from] TableError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// HU drawn for normal parenchyma and for blobs in bands 2..=4. Every range
/// sits strictly inside its band.
const PARENCHYMA_HU: (f64, f64) = (-900.0, -800.0);
const BLOB_HU: [(f64, f64); 3] = [(-700.0, -350.0), (-250.0, 0.0), (100.0, 300.0)];
const BODY_HU: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub min_count: usize,
    pub max_count: usize,
    /// Cubic blobs of side `2h + 1` voxels, `h` in this range.
    pub min_half_size: usize,
    pub max_half_size: usize,
    /// HU bands (2..=4) a blob may fall in.
    pub bands: Vec<usize>,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            min_count: 1,
            max_count: 4,
            min_half_size: 1,
            max_half_size: 3,
            bands: vec![2, 3],
        }
    }
}

/// `logit P(icu) = intercept + sum beta * z(feature)`, with `z` the
/// cohort-standardised value of an HLQ or DVB feature (display names).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelRule {
    pub intercept: f64,
    pub effects: Vec<(String, f64)>,
}

impl Default for LabelRule {
    fn default() -> Self {
        Self {
            intercept: 0.0,
            effects: vec![("Whole Lung VPO HU2".into(), 2.5), ("SpO2".into(), -2.5)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub blobs: BlobSpec,
    pub label_rule: LabelRule,
    /// Fraction of temperature and SpO2 cells left empty in the CSV.
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 40,
            dims: [32, 32, 20],
            spacing: [1.0, 1.0, 1.0],
            blobs: BlobSpec::default(),
            label_rule: LabelRule::default(),
            missing_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_subjects < 2 {
            return bad(format!("n_subjects {} < 2", self.n_subjects));
        }
        if self.dims.iter().any(|&d| d < 8) {
            return bad(format!("dims {:?}: every axis needs >= 8 voxels", self.dims));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return bad(format!("spacing {:?}", self.spacing));
        }
        let b = &self.blobs;
        if b.min_count == 0 || b.min_count > b.max_count {
            return bad(format!("blob count range {}..={}", b.min_count, b.max_count));
        }
        if b.min_half_size > b.max_half_size {
            return bad(format!("blob half-size range {}..={}", b.min_half_size, b.max_half_size));
        }
        if b.bands.is_empty() || b.bands.iter().any(|k| !(2..=4).contains(k)) {
            return bad(format!("blob bands {:?} must be within 2..=4", b.bands));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate {}", self.missing_rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub lobe: u8,
    pub band: usize,
    /// Inclusive voxel corners.
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl Blob {
    pub fn n_voxels(&self) -> usize {
        (0..3).map(|a| self.max[a] - self.min[a] + 1).product()
    }
}

#[derive(Debug, Clone)]
pub struct SynthSubject {
    pub id: String,
    pub volume: VoxelVolume,
    pub lobe_mask: LabelMask,
    pub opacity_mask: LabelMask,
    pub blobs: Vec<Blob>,
    /// The 64 HLQ values, from the construction bookkeeping.
    pub hlq_truth: FeatureVector,
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub subjects: Vec<SynthSubject>,
    /// Complete clinical values (before cells are blanked).
    pub clinical_truth: ClinicalTable,
    /// Site-A layout, with missing cells.
    pub clinical_csv: String,
    pub labels: Vec<u8>,
    /// `P(icu)` each label was drawn from.
    pub label_probability: Vec<f64>,
    pub spec: SynthSpec,
}

/// Lobe of voxel `(x, y, z)`: two ellipsoidal lungs split along z, lobes
/// 1-3 on the right (low x), 4-5 on the left.
fn lobe_at(dims: [usize; 3], x: usize, y: usize, z: usize) -> u8 {
    let c = |i: usize, n: usize| (i as f64 + 0.5) / n as f64;
    let (u, v, w) = (c(x, dims[0]), c(y, dims[1]), c(z, dims[2]));
    let e = |cx: f64| ((u - cx) / 0.21).powi(2) + ((v - 0.5) / 0.38).powi(2) + ((w - 0.5) / 0.46).powi(2);
    if e(0.28) <= 1.0 {
        if w >= 2.0 / 3.0 {
            1
        } else if w >= 0.4 {
            2
        } else {
            3
        }
    } else if e(0.72) <= 1.0 {
        if w >= 0.5 {
            4
        } else {
            5
        }
    } else {
        0
    }
}

/// The 64 HLQ values from per-(lobe, band) voxel and opacity counts.
fn hlq_from_counts(counts: &[[(u64, u64); 4]; 6], voxel_volume: f64) -> FeatureVector {
    let mut out = FeatureVector::with_capacity(HLQ_FEATURE_COUNT);
    for r in Roi::ALL {
        for band in 0..4 {
            let mut n = 0;
            let mut op = 0;
            for l in 1..=5u8 {
                if r.contains_label(l) {
                    n += counts[l as usize][band].0;
                    op += counts[l as usize][band].1;
                }
            }
            let name = r.name();
            out.push(format!("{name} VPO HU{}", band + 1), op as f64 * voxel_volume);
            out.push(
                format!("{name} RPO HU{}", band + 1),
                if n == 0 { 0.0 } else { op as f64 / n as f64 },
            );
        }
    }
    out
}

fn place_blob(
    lobes: &[u8],
    taken: &[bool],
    dims: [usize; 3],
    h: usize,
    rng: &mut ChaCha8Rng,
) -> Option<([usize; 3], [usize; 3], u8)> {
    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    for _ in 0..200 {
        let c = [
            rng.random_range(h..dims[0] - h),
            rng.random_range(h..dims[1] - h),
            rng.random_range(h..dims[2] - h),
        ];
        let lobe = lobes[idx(c[0], c[1], c[2])];
        if lobe == 0 {
            continue;
        }
        let (min, max) = ([c[0] - h, c[1] - h, c[2] - h], [c[0] + h, c[1] + h, c[2] + h]);
        let fits = (min[2]..=max[2]).all(|z| {
            (min[1]..=max[1]).all(|y| {
                (min[0]..=max[0]).all(|x| {
                    let i = idx(x, y, z);
                    lobes[i] == lobe && !taken[i]
                })
            })
        });
        if fits {
            return Some((min, max, lobe));
        }
    }
    None
}

fn synth_subject(spec: &SynthSpec, i: usize) -> Result<SynthSubject> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64);
    let dims = spec.dims;
    let n = dims[0] * dims[1] * dims[2];
    let mut lobes = vec![0u8; n];
    let mut hu = vec![BODY_HU; n];
    let mut counts = [[(0u64, 0u64); 4]; 6];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = x + dims[0] * (y + dims[1] * z);
                let l = lobe_at(dims, x, y, z);
                lobes[i] = l;
                if l != 0 {
                    hu[i] = rng.random_range(PARENCHYMA_HU.0..PARENCHYMA_HU.1);
                    counts[l as usize][0].0 += 1;
                }
            }
        }
    }

    let b = &spec.blobs;
    let n_blobs = rng.random_range(b.min_count..=b.max_count);
    let mut taken = vec![false; n];
    let mut blobs = Vec::with_capacity(n_blobs);
    for _ in 0..n_blobs {
        let band = b.bands[rng.random_range(0..b.bands.len())];
        let mut h = rng.random_range(b.min_half_size..=b.max_half_size);
        let placed = loop {
            if let Some(p) = place_blob(&lobes, &taken, dims, h, &mut rng) {
                break p;
            }
            if h == 0 {
                return Err(SynthError::InvalidSpec(format!(
                    "no room for blob {} in subject {i}",
                    blobs.len() + 1
                )));
            }
            h -= 1;
        };
        let (min, max, lobe) = placed;
        let (lo, hi) = BLOB_HU[band - 2];
        for z in min[2]..=max[2] {
            for y in min[1]..=max[1] {
                for x in min[0]..=max[0] {
                    let v = x + dims[0] * (y + dims[1] * z);
                    taken[v] = true;
                    hu[v] = rng.random_range(lo..hi);
                }
            }
        }
        let c = &mut counts[lobe as usize];
        let k = ((max[0] - min[0] + 1) * (max[1] - min[1] + 1) * (max[2] - min[2] + 1)) as u64;
        c[0].0 -= k;
        c[band - 1].0 += k;
        c[band - 1].1 += k;
        blobs.push(Blob { lobe, band, min, max });
    }

    let volume = VoxelVolume::new(dims, spec.spacing, hu)?;
    let lobe_mask = LabelMask::on_grid_of(&volume, lobes, MaskSemantics::LobeMap)?;
    let opacity_mask = LabelMask::on_grid_of(
        &volume,
        taken.iter().map(|&t| u8::from(t)).collect(),
        MaskSemantics::BinaryOpacity,
    )?;
    let hlq_truth = hlq_from_counts(&counts, volume.voxel_volume());
    Ok(SynthSubject {
        id: format!("S{:04}", i + 1),
        volume,
        lobe_mask,
        opacity_mask,
        blobs,
        hlq_truth,
    })
}

fn draw_clinical(rng: &mut ChaCha8Rng) -> [f64; 7] {
    let mut normal = |m: f64, s: f64| Normal::new(m, s).expect("positive sd").sample(rng);
    let age = normal(60.0, 12.0).clamp(18.0, 95.0).round();
    let wbc = normal(6500.0, 1500.0).clamp(1000.0, 20000.0).round();
    let lym = normal(1300.0, 400.0).clamp(100.0, 0.8 * wbc).round();
    let temperature = (normal(37.3, 0.6).clamp(35.5, 41.0) * 10.0).round() / 10.0;
    let spo2 = normal(94.0, 3.0).clamp(70.0, 100.0).round();
    let sex = f64::from(u8::from(rng.random_bool(0.5)));
    let lym_ratio = (1000.0 * lym / wbc).round() / 10.0;
    [age, sex, wbc, lym, lym_ratio, temperature, spo2]
}

fn standardized(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    x.iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect()
}

fn fmt_cell(v: f64) -> String {
    format!("{v}")
}

/// Builds a deterministic cohort: phantoms are generated in parallel from
/// per-subject streams of `seed`; clinical values, labels and blanked cells
/// come from one further stream.
pub fn synth_cohort(spec: &SynthSpec) -> Result<SynthCohort> {
    spec.validate()?;
    let subjects: Vec<SynthSubject> = (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| synth_subject(spec, i))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX);
    let clinical: Vec<[f64; 7]> = (0..spec.n_subjects).map(|_| draw_clinical(&mut rng)).collect();

    let mut logit = vec![spec.label_rule.intercept; spec.n_subjects];
    for (name, beta) in &spec.label_rule.effects {
        let values: Vec<f64> = if let Some(c) = ClinicalColumn::ALL.iter().position(|c| c.name() == name) {
            clinical.iter().map(|r| r[c]).collect()
        } else if subjects[0].hlq_truth.get(name).is_some() {
            subjects.iter().map(|s| s.hlq_truth.get(name).expect("same names")).collect()
        } else {
            return Err(SynthError::InvalidSpec(format!("label rule names unknown feature {name:?}")));
        };
        for (l, z) in logit.iter_mut().zip(standardized(&values)) {
            *l += beta * z;
        }
    }
    let label_probability: Vec<f64> = logit.iter().map(|l| 1.0 / (1.0 + (-l).exp())).collect();
    let labels: Vec<u8> = label_probability
        .iter()
        .map(|&p| u8::from(rng.random::<f64>() < p))
        .collect();

    let mut csv = String::from("id,age,sex,wbc,lym,lym_ratio,temperature,spo2,icu\n");
    for ((s, r), y) in subjects.iter().zip(&clinical).zip(&labels) {
        let blank_t = rng.random::<f64>() < spec.missing_rate;
        let blank_s = rng.random::<f64>() < spec.missing_rate;
        let opt = |v: f64, blank: bool| if blank { String::new() } else { fmt_cell(v) };
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            s.id,
            fmt_cell(r[0]),
            if r[1] == 1.0 { "M" } else { "F" },
            fmt_cell(r[2]),
            fmt_cell(r[3]),
            fmt_cell(r[4]),
            opt(r[5], blank_t),
            opt(r[6], blank_s),
            y
        )
        .expect("write to string");
    }

    let clinical_truth = ClinicalTable {
        subjects: subjects.iter().map(|s| s.id.clone()).collect(),
        columns: ClinicalColumn::ALL.to_vec(),
        cells: clinical.iter().flat_map(|r| r.iter().map(|&v| Some(v))).collect(),
        labels: labels.clone(),
    };
    Ok(SynthCohort {
        subjects,
        clinical_truth,
        clinical_csv: csv,
        labels,
        label_probability,
        spec: spec.clone(),
    })
}

/// Clinical CSV shaped like Site A: 113 subjects, 42 ICU admissions, SpO2
/// present for 100 subjects with mean exactly 91.9 (integer sum 9190),
/// temperature present for 98.
pub fn site_a_shaped_csv(seed: u64) -> String {
    const N: usize = 113;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = (0..N).map(|i| u8::from(i < 42)).collect();
    labels.shuffle(&mut rng);
    let rows: Vec<[f64; 7]> = (0..N).map(|_| draw_clinical(&mut rng)).collect();

    let mut spo2: Vec<i64> = (0..100).map(|i| rows[i][6].clamp(80.0, 99.0) as i64).collect();
    let mut sum: i64 = spo2.iter().sum();
    while sum != 9190 {
        let j = rng.random_range(0..spo2.len());
        if sum < 9190 && spo2[j] < 99 {
            spo2[j] += 1;
            sum += 1;
        } else if sum > 9190 && spo2[j] > 80 {
            spo2[j] -= 1;
            sum -= 1;
        }
    }
    let mut order: Vec<usize> = (0..N).collect();
    order.shuffle(&mut rng);
    let mut spo2_cell = vec![None; N];
    for (k, &r) in order[..100].iter().enumerate() {
        spo2_cell[r] = Some(spo2[k]);
    }
    order.shuffle(&mut rng);
    let mut temp_present = vec![false; N];
    for &r in &order[..98] {
        temp_present[r] = true;
    }

    let mut csv = String::from("id,age,sex,wbc,lym,lym_ratio,temperature,spo2,icu\n");
    for r in 0..N {
        let v = &rows[r];
        writeln!(
            csv,
            "A{:03},{},{},{},{},{},{},{},{}",
            r + 1,
            fmt_cell(v[0]),
            if v[1] == 1.0 { "M" } else { "F" },
            fmt_cell(v[2]),
            fmt_cell(v[3]),
            fmt_cell(v[4]),
            if temp_present[r] { fmt_cell(v[5]) } else { String::new() },
            spo2_cell[r].map(|s| s.to_string()).unwrap_or_default(),
            labels[r]
        )
        .expect("write to string");
    }
    csv
}

/// Gaussian feature table where `n_informative` columns are shifted by
/// `+-effect / 2` between the classes (so their standardised mean
/// difference is `effect`) and the rest are noise offset by `noise_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedSpec {
    pub n_subjects: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub effect: f64,
    pub noise_shift: f64,
    pub group: FeatureGroup,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            n_features: 300,
            n_informative: 3,
            effect: 1.0,
            noise_shift: 0.0,
            group: FeatureGroup::Wlr,
            seed: 0,
        }
    }
}

/// Returns the table and the sorted indices of the informative columns.
/// Classes are balanced (`n / 2` positives) and shuffled.
pub fn planted_table(spec: &PlantedSpec) -> Result<(FeatureTable, Vec<usize>)> {
    if spec.n_subjects < 4 || spec.n_informative > spec.n_features || spec.n_features == 0 {
        return Err(SynthError::InvalidSpec(format!(
            "planted cohort n={} d={} informative={}",
            spec.n_subjects, spec.n_features, spec.n_informative
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<u8> = (0..spec.n_subjects)
        .map(|i| u8::from(i < spec.n_subjects / 2))
        .collect();
    labels.shuffle(&mut rng);
    let mut informative = rand::seq::index::sample(&mut rng, spec.n_features, spec.n_informative).into_vec();
    informative.sort_unstable();
    let mut is_inf = vec![false; spec.n_features];
    informative.iter().for_each(|&j| is_inf[j] = true);

    let names = (0..spec.n_features).map(|j| format!("f{j:03}")).collect();
    let mut t = FeatureTable::new(names, vec![spec.group; spec.n_features])?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for (i, &y) in labels.iter().enumerate() {
        let sign = if y == 1 { 0.5 } else { -0.5 };
        let row: Vec<f64> = (0..spec.n_features)
            .map(|j| {
                let e: f64 = normal.sample(&mut rng);
                if is_inf[j] {
                    e + sign * spec.effect
                } else {
                    e + spec.noise_shift
                }
            })
            .collect();
        t.push_row(format!("P{:04}", i + 1), &row, y)?;
    }
    Ok((t, informative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinical::{parse_clinical_reader, ClinicalSchema};
    use crate::hlq::extract_hlq;

    fn small() -> SynthSpec {
        SynthSpec {
            n_subjects: 6,
            dims: [20, 20, 12],
            ..Default::default()
        }
    }

    #[test]
    fn hlq_truth_matches_extraction() {
        let c = synth_cohort(&small()).unwrap();
        for s in &c.subjects {
            let f = extract_hlq(&s.volume, &s.lobe_mask, &s.opacity_mask).unwrap();
            assert_eq!(f, s.hlq_truth);
            let opaque: usize = s.blobs.iter().map(Blob::n_voxels).sum();
            assert_eq!(s.opacity_mask.count_nonzero(), opaque);
        }
    }

    #[test]
    fn deterministic() {
        let a = synth_cohort(&small()).unwrap();
        let b = synth_cohort(&small()).unwrap();
        assert_eq!(a.clinical_csv, b.clinical_csv);
        for (x, y) in a.subjects.iter().zip(&b.subjects) {
            assert_eq!(x.volume, y.volume);
            assert_eq!(x.opacity_mask, y.opacity_mask);
        }
    }

    #[test]
    fn csv_parses_with_site_a_schema() {
        let c = synth_cohort(&SynthSpec {
            missing_rate: 0.3,
            ..small()
        })
        .unwrap();
        let t = parse_clinical_reader(c.clinical_csv.as_bytes(), &ClinicalSchema::site_a()).unwrap();
        assert_eq!(t.labels, c.labels);
        assert_eq!(t.subjects, c.clinical_truth.subjects);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            SynthSpec { n_subjects: 1, ..small() },
            SynthSpec { dims: [4, 20, 20], ..small() },
            SynthSpec {
                blobs: BlobSpec { bands: vec![1], ..Default::default() },
                ..small()
            },
            SynthSpec {
                label_rule: LabelRule { intercept: 0.0, effects: vec![("nope".into(), 1.0)] },
                ..small()
            },
        ];
        for s in bad {
            assert!(matches!(synth_cohort(&s), Err(SynthError::InvalidSpec(_))), "{s:?}");
        }
    }

    #[test]
    fn site_a_shape() {
        let t = parse_clinical_reader(site_a_shaped_csv(3).as_bytes(), &ClinicalSchema::site_a()).unwrap();
        assert_eq!(t.n_rows(), 113);
        assert_eq!(t.labels.iter().filter(|&&y| y == 1).count(), 42);
        let spo2: Vec<f64> = (0..113).filter_map(|r| t.get(r, ClinicalColumn::Spo2)).collect();
        assert_eq!(spo2.len(), 100);
        assert_eq!(spo2.iter().sum::<f64>(), 9190.0);
        let temps = (0..113).filter(|&r| t.get(r, ClinicalColumn::Temperature).is_some()).count();
        assert_eq!(temps, 98);
    }

    #[test]
    fn planted_columns() {
        let (t, inf) = planted_table(&PlantedSpec {
            n_subjects: 40,
            n_features: 12,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(inf.len(), 3);
        assert_eq!(t.labels.iter().filter(|&&y| y == 1).count(), 20);
        assert_eq!(t.n_cols(), 12);
    }
}
