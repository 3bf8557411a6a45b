use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Matrix3;

use super::marching_cubes::{marching_cubes, Mesh};
use super::{named, TextureError};
use crate::features::FeatureVector;
use crate::volume::LabelMask;

pub const SHAPE_NAMES: [&str; 17] = [
    "MeshVolume",
    "VoxelVolume",
    "SurfaceArea",
    "SurfaceVolumeRatio",
    "Sphericity",
    "Compactness1",
    "Compactness2",
    "SphericalDisproportion",
    "Maximum3DDiameter",
    "Maximum2DDiameterSlice",
    "Maximum2DDiameterColumn",
    "Maximum2DDiameterRow",
    "MajorAxisLength",
    "MinorAxisLength",
    "LeastAxisLength",
    "Elongation",
    "Flatness",
];

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn max_pairwise(points: &[[f64; 3]]) -> f64 {
    let mut best = 0.0f64;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            best = best.max(dist2(a, b));
        }
    }
    best.sqrt()
}

/// Keeps, for every line parallel to `axis`, only its two extreme vertices.
/// Interior points of a segment never end a farthest pair.
fn line_extremes(mesh: &Mesh, ids: &[usize], axis: usize) -> Vec<[f64; 3]> {
    let mut ext: HashMap<[i64; 2], (usize, usize)> = HashMap::new();
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    for &i in ids {
        let k = mesh.keys[i];
        let key = [k[others[0]], k[others[1]]];
        let e = ext.entry(key).or_insert((i, i));
        if k[axis] < mesh.keys[e.0][axis] {
            e.0 = i;
        }
        if k[axis] > mesh.keys[e.1][axis] {
            e.1 = i;
        }
    }
    let mut keys: Vec<_> = ext.into_iter().collect();
    keys.sort_unstable_by_key(|(k, _)| *k);
    keys.into_iter()
        .flat_map(|(_, (lo, hi))| {
            if lo == hi {
                vec![mesh.positions[lo]]
            } else {
                vec![mesh.positions[lo], mesh.positions[hi]]
            }
        })
        .collect()
}

/// Largest vertex distance among vertices sharing a plane normal to `axis`.
fn max_planar(mesh: &Mesh, axis: usize) -> f64 {
    let mut planes: HashMap<i64, Vec<usize>> = HashMap::new();
    for (i, k) in mesh.keys.iter().enumerate() {
        planes.entry(k[axis]).or_default().push(i);
    }
    let in_plane = (axis + 1) % 3;
    planes
        .values()
        .map(|ids| max_pairwise(&line_extremes(mesh, ids, in_plane)))
        .fold(0.0, f64::max)
}

/// 3D shape descriptors of the nonzero region of `mask` in physical units.
///
/// Mesh quantities come from [`marching_cubes`]. Axis lengths are
/// `4 sqrt(lambda)` for the eigenvalues of the population covariance of voxel
/// centre coordinates; elongation and flatness are 1 when the major
/// eigenvalue is 0 (single voxel).
pub fn shape_features(mask: &LabelMask) -> Result<FeatureVector, TextureError> {
    let count = mask.count_nonzero();
    if count == 0 {
        return Err(TextureError::EmptyMask);
    }
    let sp = mask.spacing();
    let voxel_volume = count as f64 * mask.voxel_volume();
    let mesh = marching_cubes(mask);
    let v = mesh.volume();
    let a = mesh.area();

    let sphere = (36.0 * PI * v * v).cbrt();
    let sphericity = sphere / a;
    let compactness1 = v / (PI.sqrt() * a.powf(1.5));
    let compactness2 = 36.0 * PI * v * v / (a * a * a);
    let disproportion = a / sphere;

    let all: Vec<usize> = (0..mesh.keys.len()).collect();
    let diam3 = max_pairwise(&line_extremes(&mesh, &all, 2));
    let slice = max_planar(&mesh, 2);
    let column = max_planar(&mesh, 1);
    let row = max_planar(&mesh, 0);

    let [nx, ny, _] = mask.dims();
    let mut mean = [0.0; 3];
    let pts: Vec<[f64; 3]> = mask
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != 0)
        .map(|(i, _)| {
            let p = [i % nx, (i / nx) % ny, i / (nx * ny)];
            [0, 1, 2].map(|ax| p[ax] as f64 * sp[ax])
        })
        .collect();
    for p in &pts {
        for ax in 0..3 {
            mean[ax] += p[ax];
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut cov = Matrix3::<f64>::zeros();
    for p in &pts {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    cov /= count as f64;
    let mut eig: Vec<f64> = cov
        .symmetric_eigenvalues()
        .iter()
        .map(|&e| e.max(0.0))
        .collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    let (l1, l2, l3) = (eig[0], eig[1], eig[2]);
    let (elongation, flatness) = if l1 > 0.0 {
        ((l2 / l1).sqrt(), (l3 / l1).sqrt())
    } else {
        (1.0, 1.0)
    };

    Ok(named(
        &SHAPE_NAMES,
        vec![
            v,
            voxel_volume,
            a,
            a / v,
            sphericity,
            compactness1,
            compactness2,
            disproportion,
            diam3,
            slice,
            column,
            row,
            4.0 * l1.sqrt(),
            4.0 * l2.sqrt(),
            4.0 * l3.sqrt(),
            elongation,
            flatness,
        ],
    ))
}
