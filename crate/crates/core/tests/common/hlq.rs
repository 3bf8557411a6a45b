//! HLQ ground truth from phantom geometry, and the lobe-additivity check.

use radlung_core::hlq::{extract_hlq, Roi};
use radlung_core::synth::SynthSubject;
use radlung_core::{FeatureVector, LabelMask, MaskSemantics, VoxelVolume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every lobe voxel outside a blob is parenchyma (band 1) and every blob
/// voxel is opaque and lies in its blob's band, so the per-(lobe, band)
/// counts follow from the lobe sizes and the blob list alone.
pub fn truth_from_geometry(s: &SynthSubject) -> Vec<(String, f64)> {
    let vox: f64 = s.volume.spacing().iter().product();
    let mut total = [[0u64; 4]; 6];
    let mut opaque = [[0u64; 4]; 6];
    for l in 1..=5u8 {
        total[l as usize][0] = s.lobe_mask.labels().iter().filter(|&&x| x == l).count() as u64;
    }
    for b in &s.blobs {
        let n = b.n_voxels() as u64;
        let l = b.lobe as usize;
        total[l][0] -= n;
        total[l][b.band - 1] += n;
        opaque[l][b.band - 1] += n;
    }
    let mut out = Vec::new();
    for r in Roi::ALL {
        for band in 0..4 {
            let lobes = (1..=5u8).filter(|&l| r.contains_label(l));
            let (n, o) = lobes.fold((0, 0), |a, l| (a.0 + total[l as usize][band], a.1 + opaque[l as usize][band]));
            out.push((format!("{} VPO HU{}", r.name(), band + 1), o as f64 * vox));
            out.push((format!("{} RPO HU{}", r.name(), band + 1), if n == 0 { 0.0 } else { o as f64 / n as f64 }));
        }
    }
    out
}

/// Whole = left + right and each lung = sum of its lobes, for VPO in every
/// band; returns the largest violation relative to the whole-lung value.
pub fn additivity_error(f: &FeatureVector) -> f64 {
    let get = |roi: &str, band: usize| f.get(&format!("{roi} VPO HU{band}")).expect("feature present");
    let mut worst = 0.0f64;
    for band in 1..=4 {
        let whole = get("Whole Lung", band);
        let right = get("Right Lung", band);
        let left = get("Left Lung", band);
        let lobes: Vec<f64> = (1..=5).map(|k| get(&format!("Lobe#{k}"), band)).collect();
        let scale = whole.abs().max(f64::MIN_POSITIVE);
        for e in [
            whole - (left + right),
            whole - lobes.iter().sum::<f64>(),
            right - (lobes[0] + lobes[1] + lobes[2]),
            left - (lobes[3] + lobes[4]),
        ] {
            worst = worst.max(e.abs() / scale);
        }
    }
    worst
}

/// Random labels, HU and opacity on a small grid with the given spacing.
pub fn random_phantom(seed: u64, spacing: [f64; 3]) -> (VoxelVolume, LabelMask, LabelMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [rng.random_range(4..16), rng.random_range(4..16), rng.random_range(2..10)];
    let n: usize = dims.iter().product();
    let hu: Vec<f64> = (0..n).map(|_| rng.random_range(-1100.0..400.0)).collect();
    let mut lobes: Vec<u8> = (0..n).map(|_| rng.random_range(0..=5)).collect();
    lobes[0] = 1;
    let op: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
    let v = VoxelVolume::new(dims, spacing, hu).unwrap();
    let l = LabelMask::on_grid_of(&v, lobes, MaskSemantics::LobeMap).unwrap();
    let o = LabelMask::on_grid_of(&v, op, MaskSemantics::BinaryOpacity).unwrap();
    (v, l, o)
}

pub fn hlq_of(p: &(VoxelVolume, LabelMask, LabelMask)) -> FeatureVector {
    extract_hlq(&p.0, &p.1, &p.2).unwrap()
}
