//! Dense 3-D LoG kernel applied by direct convolution.

/// Unit-sum sampled Gaussian on `-r..=r`, `r = ceil(4 sigma)`, zero outside.
fn gauss(sigma: f64) -> (isize, Vec<f64>) {
    let r = (4.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r).map(|t| (-0.5 * (t as f64 / sigma).powi(2)).exp()).collect();
    let z: f64 = raw.iter().sum();
    (r, raw.into_iter().map(|v| v / z).collect())
}

fn tap(g: &(isize, Vec<f64>), t: isize) -> f64 {
    if t.abs() > g.0 {
        0.0
    } else {
        g.1[(t + g.0) as usize]
    }
}

/// Mirror index with period `2n`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = ((i % (2 * n)) + 2 * n) % (2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// `K(t) = sum_a c_a(t_a) / sp_a^2 * prod_{b != a} g_b(t_b)` with
/// `c_a(u) = g_a(u+1) - 2 g_a(u) + g_a(u-1)`, correlated with the
/// half-sample mirrored volume.
pub fn dense_log(values: &[f64], dims: [usize; 3], spacing: [f64; 3], sigma_mm: f64) -> Vec<f64> {
    let g: Vec<(isize, Vec<f64>)> = (0..3).map(|a| gauss(sigma_mm / spacing[a])).collect();
    let r: Vec<isize> = g.iter().map(|k| k.0 + 1).collect();
    let mut kernel = Vec::new();
    for tz in -r[2]..=r[2] {
        for ty in -r[1]..=r[1] {
            for tx in -r[0]..=r[0] {
                let t = [tx, ty, tz];
                let mut k = 0.0;
                for a in 0..3 {
                    let c = tap(&g[a], t[a] + 1) - 2.0 * tap(&g[a], t[a]) + tap(&g[a], t[a] - 1);
                    let mut prod = c / (spacing[a] * spacing[a]);
                    for b in (0..3).filter(|&b| b != a) {
                        prod *= tap(&g[b], t[b]);
                    }
                    k += prod;
                }
                if k != 0.0 {
                    kernel.push((t, k));
                }
            }
        }
    }
    let at = |x: usize, y: usize, z: usize| values[x + dims[0] * (y + dims[1] * z)];
    let mut out = vec![0.0; values.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [x as isize, y as isize, z as isize];
                out[x + dims[0] * (y + dims[1] * z)] = kernel
                    .iter()
                    .map(|(t, k)| {
                        k * at(
                            reflect(p[0] + t[0], dims[0]),
                            reflect(p[1] + t[1], dims[1]),
                            reflect(p[2] + t[2], dims[2]),
                        )
                    })
                    .sum();
            }
        }
    }
    out
}
