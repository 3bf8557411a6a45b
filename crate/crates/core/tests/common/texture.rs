//! Brute-force texture matrices by exhaustive voxel-pair enumeration, and
//! the textbook feature formulas evaluated directly on them.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radlung_core::texture::{self, CountMatrix, DirectionAggregation, GrayVolume, COARSENESS_CAP, DIRECTIONS_13};

/// Dense `ng x cols` count matrix, `m[i-1][c]`.
pub type Counts = Vec<Vec<u64>>;

pub struct Voxel {
    pub p: [isize; 3],
    pub level: u16,
}

/// In-region voxels with coordinates.
pub fn voxels(g: &GrayVolume) -> Vec<Voxel> {
    let mut out = Vec::new();
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                let l = g.levels[x + g.dims[0] * (y + g.dims[1] * z)];
                if l != 0 {
                    out.push(Voxel {
                        p: [x as isize, y as isize, z as isize],
                        level: l,
                    });
                }
            }
        }
    }
    out
}

fn level_at(g: &GrayVolume, p: [isize; 3]) -> u16 {
    if (0..3).any(|a| p[a] < 0 || p[a] >= g.dims[a] as isize) {
        return 0;
    }
    let [x, y, z] = p.map(|v| v as usize);
    g.levels[x + g.dims[0] * (y + g.dims[1] * z)]
}

fn sub(a: [isize; 3], b: [isize; 3]) -> [isize; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Random region with at least one voxel: dims in `1..=8`, levels in
/// `1..=ng` (ng <= 5), about a quarter of the grid masked out.
pub fn random_gray(rng: &mut ChaCha8Rng) -> GrayVolume {
    loop {
        let dims = [rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8)];
        let ng: u16 = rng.random_range(1..=5);
        let n = dims.iter().product();
        let levels: Vec<u16> = (0..n)
            .map(|_| if rng.random_bool(0.25) { 0 } else { rng.random_range(1..=ng) })
            .collect();
        if levels.iter().any(|&l| l != 0) {
            return GrayVolume::from_levels(dims, levels);
        }
    }
}

pub fn volumes(n: usize, seed: u64) -> Vec<GrayVolume> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_gray(&mut rng)).collect()
}

/// Every ordered voxel pair whose displacement is `+d` or `-d`.
pub fn glcm(g: &GrayVolume) -> Vec<Counts> {
    let v = voxels(g);
    DIRECTIONS_13
        .iter()
        .map(|&d| {
            let neg = [-d[0], -d[1], -d[2]];
            let mut m = vec![vec![0u64; g.ng]; g.ng];
            for a in &v {
                for b in &v {
                    let delta = sub(b.p, a.p);
                    if delta == d || delta == neg {
                        m[a.level as usize - 1][b.level as usize - 1] += 1;
                    }
                }
            }
            m
        })
        .collect()
}

/// Every segment `p, p+d, ..., p+(L-1)d` of one level whose two outer
/// neighbours are not that level.
pub fn glrlm(g: &GrayVolume) -> Vec<Counts> {
    let max_len = *g.dims.iter().max().unwrap();
    let v = voxels(g);
    DIRECTIONS_13
        .iter()
        .map(|&d| {
            let mut m = vec![vec![0u64; max_len]; g.ng];
            for s in &v {
                for len in 1..=max_len as isize {
                    let at = |k: isize| level_at(g, [s.p[0] + k * d[0], s.p[1] + k * d[1], s.p[2] + k * d[2]]);
                    if (0..len).all(|k| at(k) == s.level) && at(-1) != s.level && at(len) != s.level {
                        m[s.level as usize - 1][len as usize - 1] += 1;
                    }
                }
            }
            m
        })
        .collect()
}

fn adjacent(a: [isize; 3], b: [isize; 3]) -> bool {
    a != b && (0..3).all(|k| (a[k] - b[k]).abs() <= 1)
}

/// 26-connected zones by union-find over all voxel pairs.
pub fn glszm(g: &GrayVolume) -> Counts {
    let v = voxels(g);
    let mut parent: Vec<usize> = (0..v.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i].level == v[j].level && adjacent(v[i].p, v[j].p) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut size = vec![0usize; v.len()];
    for i in 0..v.len() {
        let r = find(&mut parent, i);
        size[r] += 1;
    }
    let mut m = vec![vec![0u64; v.len()]; g.ng];
    for i in 0..v.len() {
        if find(&mut parent, i) == i {
            m[v[i].level as usize - 1][size[i] - 1] += 1;
        }
    }
    let keep = (0..v.len()).rev().find(|&c| m.iter().any(|r| r[c] > 0)).unwrap() + 1;
    m.iter_mut().for_each(|r| r.truncate(keep));
    m
}

/// Per level: voxels with an in-region neighbour, and the summed
/// `|level - mean neighbour level|`.
pub fn ngtdm(g: &GrayVolume) -> (Vec<u64>, Vec<f64>) {
    let v = voxels(g);
    let mut n = vec![0u64; g.ng];
    let mut s = vec![0.0; g.ng];
    for a in &v {
        let nb: Vec<u16> = v.iter().filter(|b| adjacent(a.p, b.p)).map(|b| b.level).collect();
        if nb.is_empty() {
            continue;
        }
        let mean = nb.iter().map(|&l| f64::from(l)).sum::<f64>() / nb.len() as f64;
        n[a.level as usize - 1] += 1;
        s[a.level as usize - 1] += (f64::from(a.level) - mean).abs();
    }
    (n, s)
}

/// Column `k` counts voxels with `k` dependent neighbours.
pub fn gldm(g: &GrayVolume, alpha: u16) -> Counts {
    let v = voxels(g);
    let mut m = vec![vec![0u64; 27]; g.ng];
    for a in &v {
        let k = v
            .iter()
            .filter(|b| adjacent(a.p, b.p) && a.level.abs_diff(b.level) <= alpha)
            .count();
        m[a.level as usize - 1][k] += 1;
    }
    m
}

fn total(m: &Counts) -> f64 {
    m.iter().flatten().sum::<u64>() as f64
}

fn h(p: impl Iterator<Item = f64>) -> f64 {
    p.filter(|&x| x > 0.0).map(|x| -x * x.log2()).sum()
}

fn mean_rows(rows: Vec<Vec<f64>>, width: usize) -> Vec<f64> {
    if rows.is_empty() {
        return vec![0.0; width];
    }
    (0..width)
        .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Second eigenvalue of the non-symmetric `Q` directly.
fn mcc(p: &[Vec<f64>], px: &[f64], py: &[f64]) -> f64 {
    let idx: Vec<usize> = (0..p.len()).filter(|&i| px[i] > 0.0).collect();
    if idx.len() < 2 {
        return 1.0;
    }
    let n = idx.len();
    let q = DMatrix::from_fn(n, n, |a, b| {
        let (i, j) = (idx[a], idx[b]);
        (0..p.len())
            .filter(|&k| py[k] > 0.0)
            .map(|k| p[i][k] * p[j][k] / (px[i] * py[k]))
            .sum::<f64>()
    });
    let mut eig: Vec<f64> = q.complex_eigenvalues().iter().map(|c| c.re).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[1].max(0.0).sqrt()
}

fn glcm_one(m: &Counts, ng: usize) -> Vec<f64> {
    let t = total(m);
    let n = m.len();
    let p: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|&c| c as f64 / t).collect()).collect();
    let l = |i: usize| (i + 1) as f64;
    let px: Vec<f64> = (0..n).map(|i| p[i].iter().sum()).collect();
    let py: Vec<f64> = (0..n).map(|j| (0..n).map(|i| p[i][j]).sum()).collect();
    let mux: f64 = (0..n).map(|i| l(i) * px[i]).sum();
    let muy: f64 = (0..n).map(|j| l(j) * py[j]).sum();
    let sx = (0..n).map(|i| (l(i) - mux).powi(2) * px[i]).sum::<f64>().sqrt();
    let sy = (0..n).map(|j| (l(j) - muy).powi(2) * py[j]).sum::<f64>().sqrt();
    let all = || (0..n).flat_map(move |i| (0..n).map(move |j| (i, j)));
    let sum = |f: &dyn Fn(f64, f64, f64) -> f64| -> f64 { all().map(|(i, j)| f(l(i), l(j), p[i][j])).sum() };

    let mut pplus = vec![0.0; 2 * n + 1];
    let mut pminus = vec![0.0; n];
    for (i, j) in all() {
        pplus[i + j + 2] += p[i][j];
        pminus[i.abs_diff(j)] += p[i][j];
    }
    let da: f64 = (0..n).map(|k| k as f64 * pminus[k]).sum();
    let hxy = h(all().map(|(i, j)| p[i][j]));
    let hx = h(px.iter().copied());
    let hy = h(py.iter().copied());
    let hxy1: f64 = all()
        .filter(|&(i, j)| p[i][j] > 0.0)
        .map(|(i, j)| -p[i][j] * (px[i] * py[j]).log2())
        .sum();
    let hxy2 = h(all().map(|(i, j)| px[i] * py[j]));
    let g2 = (ng * ng) as f64;
    vec![
        sum(&|i, j, v| i * j * v),
        mux,
        sum(&|i, j, v| (i + j - mux - muy).powi(4) * v),
        sum(&|i, j, v| (i + j - mux - muy).powi(3) * v),
        sum(&|i, j, v| (i + j - mux - muy).powi(2) * v),
        sum(&|i, j, v| (i - j).powi(2) * v),
        if sx * sy > 0.0 { (sum(&|i, j, v| i * j * v) - mux * muy) / (sx * sy) } else { 1.0 },
        da,
        h(pminus.iter().copied()),
        (0..n).map(|k| (k as f64 - da).powi(2) * pminus[k]).sum(),
        sum(&|_, _, v| v * v),
        hxy,
        if hx.max(hy) > 0.0 { (hxy - hxy1) / hx.max(hy) } else { 0.0 },
        (1.0 - (-2.0 * (hxy2 - hxy).max(0.0)).exp()).max(0.0).sqrt(),
        sum(&|i, j, v| v / (1.0 + (i - j).powi(2))),
        sum(&|i, j, v| v / (1.0 + (i - j).powi(2) / g2)),
        sum(&|i, j, v| v / (1.0 + (i - j).abs())),
        sum(&|i, j, v| v / (1.0 + (i - j).abs() / ng as f64)),
        (1..n).map(|k| pminus[k] / (k * k) as f64).sum(),
        all().map(|(i, j)| p[i][j]).fold(0.0, f64::max),
        (2..=2 * n).map(|k| k as f64 * pplus[k]).sum(),
        h(pplus.iter().copied()),
        sx * sx,
        mcc(&p, &px, &py),
    ]
}

pub fn glcm_features(ms: &[Counts], ng: usize) -> Vec<f64> {
    mean_rows(ms.iter().filter(|m| total(m) > 0.0).map(|m| glcm_one(m, ng)).collect(), 24)
}

/// The 16 (level, size) statistics shared by run-length and size-zone
/// matrices; `np` is the region size.
fn size_family(m: &Counts, np: f64) -> Vec<f64> {
    let t = total(m);
    let cells = || {
        m.iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &c)| ((i + 1) as f64, (j + 1) as f64, c as f64 / t)))
    };
    let e = |f: &dyn Fn(f64, f64) -> f64| -> f64 { cells().map(|(i, j, p)| f(i, j) * p).sum() };
    let rows: Vec<f64> = m.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..m[0].len()).map(|c| m.iter().map(|r| r[c]).sum::<u64>() as f64).collect();
    let gln = rows.iter().map(|r| r * r).sum::<f64>() / t;
    let sn = cols.iter().map(|c| c * c).sum::<f64>() / t;
    let mi = e(&|i, _| i);
    let mj = e(&|_, j| j);
    vec![
        e(&|_, j| 1.0 / (j * j)),
        e(&|_, j| j * j),
        gln,
        gln / t,
        sn,
        sn / t,
        t / np,
        e(&|i, _| (i - mi).powi(2)),
        e(&|_, j| (j - mj).powi(2)),
        h(cells().map(|c| c.2)),
        e(&|i, _| 1.0 / (i * i)),
        e(&|i, _| i * i),
        e(&|i, j| 1.0 / (i * i * j * j)),
        e(&|i, j| i * i / (j * j)),
        e(&|i, j| j * j / (i * i)),
        e(&|i, j| i * i * j * j),
    ]
}

pub fn glrlm_features(ms: &[Counts], np: usize) -> Vec<f64> {
    mean_rows(
        ms.iter().filter(|m| total(m) > 0.0).map(|m| size_family(m, np as f64)).collect(),
        16,
    )
}

pub fn glszm_features(m: &Counts, np: usize) -> Vec<f64> {
    size_family(m, np as f64)
}

/// Dependence features; column `k` is dependence `k + 1` in the formulas.
pub fn gldm_features(m: &Counts) -> Vec<f64> {
    let f = size_family(m, total(m));
    // drop the normalised gray-level non-uniformity and the percentage
    [0, 1, 2, 4, 5, 7, 8, 9, 10, 11, 12, 13, 14, 15].iter().map(|&k| f[k]).collect()
}

pub fn ngtdm_features(n: &[u64], s: &[f64]) -> Vec<f64> {
    let nvp = n.iter().sum::<u64>() as f64;
    if nvp == 0.0 {
        return vec![COARSENESS_CAP, 0.0, 0.0, 0.0, 0.0];
    }
    let lv: Vec<usize> = (0..n.len()).filter(|&i| n[i] > 0).collect();
    let p = |i: usize| n[i] as f64 / nvp;
    let g = |i: usize| (i + 1) as f64;
    let ngp = lv.len() as f64;
    let ps: f64 = lv.iter().map(|&i| p(i) * s[i]).sum();
    let st: f64 = lv.iter().map(|&i| s[i]).sum();
    let pairs = || lv.iter().flat_map(|&i| lv.iter().map(move |&j| (i, j)));
    let contrast = if ngp > 1.0 {
        pairs().map(|(i, j)| p(i) * p(j) * (g(i) - g(j)).powi(2)).sum::<f64>() / (ngp * (ngp - 1.0)) * st / nvp
    } else {
        0.0
    };
    let bden: f64 = pairs().map(|(i, j)| (g(i) * p(i) - g(j) * p(j)).abs()).sum();
    vec![
        if ps > 0.0 { 1.0 / ps } else { COARSENESS_CAP },
        contrast,
        if bden > 0.0 { ps / bden } else { 0.0 },
        pairs()
            .map(|(i, j)| (g(i) - g(j)).abs() * (p(i) * s[i] + p(j) * s[j]) / (p(i) + p(j)))
            .sum::<f64>()
            / nvp,
        if st > 0.0 {
            pairs().map(|(i, j)| (p(i) + p(j)) * (g(i) - g(j)).powi(2)).sum::<f64>() / st
        } else {
            0.0
        },
    ]
}

/// `|a - b| <= tol * max(|a|, |b|, 1)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn same_counts(name: &str, got: &CountMatrix, want: &Counts) -> Result<(), String> {
    let rows: Vec<Vec<u64>> = (0..got.rows).map(|r| (0..got.cols).map(|c| got.at(r, c)).collect()).collect();
    if &rows != want {
        return Err(format!("{name} matrix differs: got {rows:?}, want {want:?}"));
    }
    Ok(())
}

fn same_features(name: &str, got: &[f64], want: &[f64], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{name}: {} features, want {}", got.len(), want.len()));
    }
    for (k, (&a, &b)) in got.iter().zip(want).enumerate() {
        if !close(a, b, tol) {
            return Err(format!("{name}[{k}]: got {a}, want {b}"));
        }
    }
    Ok(())
}

/// Compares every matrix exactly and every feature to `tol` against the
/// brute-force references.
pub fn check_volume(g: &GrayVolume, tol: f64) -> Result<(), String> {
    let np = g.n_voxels();
    let glcm_ref = glcm(g);
    let glcm_got = texture::glcm_matrices(g);
    for (m, w) in glcm_got.iter().zip(&glcm_ref) {
        same_counts("GLCM", m, w)?;
    }
    same_features(
        "GLCM",
        &texture::glcm_features(g, DirectionAggregation::Average).values,
        &glcm_features(&glcm_ref, g.ng),
        tol,
    )?;

    let glrlm_ref = glrlm(g);
    for (m, w) in texture::glrlm_matrices(g).iter().zip(&glrlm_ref) {
        same_counts("GLRLM", m, w)?;
    }
    same_features(
        "GLRLM",
        &texture::glrlm_features(g, DirectionAggregation::Average).values,
        &glrlm_features(&glrlm_ref, np),
        tol,
    )?;

    let glszm_ref = glszm(g);
    same_counts("GLSZM", &texture::glszm_matrix(g), &glszm_ref)?;
    same_features(
        "GLSZM",
        &texture::glszm_features(g).values,
        &glszm_features(&glszm_ref, np),
        tol,
    )?;

    let (n, s) = ngtdm(g);
    let st = texture::ngtdm_stats(g);
    if st.counts != n {
        return Err(format!("NGTDM counts {:?}, want {n:?}", st.counts));
    }
    for (a, b) in st.sums.iter().zip(&s) {
        if !close(*a, *b, tol) {
            return Err(format!("NGTDM sums {:?}, want {s:?}", st.sums));
        }
    }
    same_features("NGTDM", &texture::ngtdm_features(g).values, &ngtdm_features(&n, &s), tol)?;

    for alpha in [0u16, 1] {
        let gldm_ref = gldm(g, alpha);
        same_counts("GLDM", &texture::gldm_matrix(g, alpha), &gldm_ref)?;
        same_features("GLDM", &texture::gldm_features(g, alpha).values, &gldm_features(&gldm_ref), tol)?;
    }
    Ok(())
}
