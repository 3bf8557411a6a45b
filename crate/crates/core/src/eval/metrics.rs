use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

fn check(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::InvalidScore(i));
    }
    let p = labels.iter().filter(|&&l| l == 1).count() as u64;
    let n = labels.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((p, n))
}

/// Indices sorted by descending score.
fn desc_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Groups of equal score in descending order as `(score, positives, negatives)`.
fn tie_groups(scores: &[f64], labels: &[u8]) -> Vec<(f64, u64, u64)> {
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in desc_order(scores) {
        let s = scores[i];
        match groups.last_mut() {
            Some(g) if g.0 == s => {}
            _ => groups.push((s, 0, 0)),
        }
        let g = groups.last_mut().expect("pushed");
        if labels[i] == 1 {
            g.1 += 1;
        } else {
            g.2 += 1;
        }
    }
    groups
}

/// Mann-Whitney AUC, `P(s+ > s-) + P(s+ = s-) / 2`.
///
/// The statistic is accumulated as the integer `2 U` and divided once, so
/// the result is exactly `(2 #wins + #ties) / (2 P N)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, n) = check(scores, labels)?;
    let mut u2: u128 = 0;
    let mut neg_below = n;
    for (_, gp, gn) in tie_groups(scores, labels) {
        neg_below -= gn;
        u2 += u128::from(gp) * u128::from(2 * neg_below + gn);
    }
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// ROC polyline `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per
/// distinct score.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (p, n) = check(scores, labels)?;
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    for (_, gp, gn) in tie_groups(scores, labels) {
        tp += gp;
        fp += gn;
        pts.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(pts)
}

/// TPR of a ROC polyline at `fpr`, interpolating linearly between vertices
/// and taking the top of vertical segments.
pub fn tpr_at(curve: &[(f64, f64)], fpr: f64) -> f64 {
    let mut best = 0.0f64;
    for w in curve.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.0 <= fpr && fpr <= b.0 {
            let t = if b.0 > a.0 {
                a.1 + (b.1 - a.1) * (fpr - a.0) / (b.0 - a.0)
            } else {
                b.1
            };
            best = best.max(t);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Scores `>= threshold` are called positive.
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub ppv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PpvOutcome {
    Attained(OperatingPoint),
    Unattainable,
}

impl PpvOutcome {
    pub fn point(&self) -> Option<&OperatingPoint> {
        match self {
            PpvOutcome::Attained(p) => Some(p),
            PpvOutcome::Unattainable => None,
        }
    }
}

/// Highest-sensitivity threshold among distinct scores whose PPV reaches
/// `ppv_target`; ties go to the higher threshold.
pub fn sensitivity_at_ppv(scores: &[f64], labels: &[u8], ppv_target: f64) -> Result<PpvOutcome> {
    let (p, n) = check(scores, labels)?;
    let mut best: Option<OperatingPoint> = None;
    let (mut tp, mut fp) = (0u64, 0u64);
    for (s, gp, gn) in tie_groups(scores, labels) {
        tp += gp;
        fp += gn;
        let ppv = tp as f64 / (tp + fp) as f64;
        if ppv < ppv_target {
            continue;
        }
        let sens = tp as f64 / p as f64;
        if best.is_none_or(|b| sens > b.sensitivity) {
            best = Some(OperatingPoint {
                threshold: s,
                sensitivity: sens,
                specificity: (n - fp) as f64 / n as f64,
                accuracy: (tp + n - fp) as f64 / (p + n) as f64,
                ppv,
            });
        }
    }
    Ok(best.map_or(PpvOutcome::Unattainable, PpvOutcome::Attained))
}
