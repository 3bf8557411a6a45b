//! Pairwise and exhaustive-scan references for the evaluation metrics.

use statrs::function::gamma::ln_gamma;

/// `(2 #wins + #ties) / (2 P N)` over all positive-negative pairs.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1;
            twice += if si > sj {
                2
            } else if si == sj {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pairs) as f64
}

/// Best sensitivity over all thresholds `s >= c` (one per observed score)
/// whose PPV reaches the target; `None` when no threshold does.
pub fn best_sensitivity_scan(scores: &[f64], labels: &[u8], target: f64) -> Option<f64> {
    let p = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut best: Option<f64> = None;
    for &c in scores {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= c && **l == 1).count() as f64;
        let called = scores.iter().filter(|s| **s >= c).count() as f64;
        if tp / called >= target {
            best = Some(best.map_or(tp / p, |b: f64| b.max(tp / p)));
        }
    }
    best
}

/// Confusion at threshold `c`: `(sensitivity, ppv)`.
pub fn at_threshold(scores: &[f64], labels: &[u8], c: f64) -> (f64, f64) {
    let p = labels.iter().filter(|&&l| l == 1).count() as f64;
    let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= c && **l == 1).count() as f64;
    let called = scores.iter().filter(|s| **s >= c).count() as f64;
    (tp / p, tp / called)
}

fn t_density(x: f64, df: f64) -> f64 {
    let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (x * x / df).ln_1p()).exp()
}

/// Upper tail `P(T > t)` as `1/2 - int_0^t f`, composite Simpson.
pub fn t_upper_tail_quadrature(t: f64, df: f64) -> f64 {
    let n = 200_000;
    let h = t / n as f64;
    let mut s = t_density(0.0, df) + t_density(t, df);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * t_density(k as f64 * h, df);
    }
    0.5 - s * h / 3.0
}

/// Paired differences reduced to `(t, df)`.
pub fn paired_t(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m / (v / n).sqrt(), n - 1.0)
}

/// AUC of the score `-|x - c1|^2 + |x - c0|^2` with class centroids of
/// the given rows.
pub fn nearest_centroid_auc(rows: &[Vec<f64>], labels: &[u8]) -> f64 {
    let d = rows[0].len();
    let centroid = |cls: u8| -> Vec<f64> {
        let members: Vec<&Vec<f64>> = rows.iter().zip(labels).filter(|(_, &l)| l == cls).map(|(r, _)| r).collect();
        (0..d).map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64).collect()
    };
    let (c0, c1) = (centroid(0), centroid(1));
    let dist = |r: &[f64], c: &[f64]| r.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let scores: Vec<f64> = rows.iter().map(|r| dist(r, &c0) - dist(r, &c1)).collect();
    pairwise_auc(&scores, labels)
}

/// Random scored sets with both classes present; about half use a small
/// integer score range so that ties are common.
pub fn random_sets(count: usize, max_n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<u8>)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=max_n);
            let levels = rng.random_range(1..=20u32);
            let tied = rng.random_bool(0.5);
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
            labels[0] = 0;
            labels[1] = 1;
            let scores = (0..n)
                .map(|_| {
                    if tied {
                        f64::from(rng.random_range(0..levels)) / 4.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            (scores, labels)
        })
        .collect()
}

pub fn check_auc(sets: &[(Vec<f64>, Vec<u8>)]) -> Result<(), String> {
    for (k, (s, l)) in sets.iter().enumerate() {
        let got = radlung_core::eval::roc_auc(s, l).map_err(|e| e.to_string())?;
        let want = pairwise_auc(s, l);
        if got.to_bits() != want.to_bits() {
            return Err(format!("set {k}: roc_auc {got}, pairwise {want}"));
        }
    }
    Ok(())
}

/// The reported point must reach the target at its own threshold and no
/// threshold may reach it with higher sensitivity.
pub fn check_ppv(sets: &[(Vec<f64>, Vec<u8>)], targets: &[f64]) -> Result<(), String> {
    use radlung_core::eval::{sensitivity_at_ppv, PpvOutcome};
    for (k, (s, l)) in sets.iter().enumerate() {
        for &t in targets {
            let got = sensitivity_at_ppv(s, l, t).map_err(|e| e.to_string())?;
            match (got, best_sensitivity_scan(s, l, t)) {
                (PpvOutcome::Unattainable, None) => {}
                (PpvOutcome::Attained(p), Some(best)) => {
                    let (sens, ppv) = at_threshold(s, l, p.threshold);
                    if sens != p.sensitivity || ppv != p.ppv || ppv < t || sens != best {
                        return Err(format!("set {k} target {t}: {p:?}, scan best {best}"));
                    }
                }
                (g, w) => return Err(format!("set {k} target {t}: got {g:?}, scan {w:?}")),
            }
        }
    }
    Ok(())
}
