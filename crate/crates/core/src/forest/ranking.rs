use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{train_forest_prepared, Dataset, ForestError, ForestParams, Presorted, Result};
use crate::eval::{roc_auc, stratified_kfold};

/// Rank aggregation over repeated forests: each run ranks features by
/// descending importance (0 = best) and the ranks are summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub names: Vec<String>,
    pub summed_score: Vec<u64>,
    pub mean_importance: Vec<f64>,
    /// Feature indices, best first.
    pub final_order: Vec<usize>,
    pub n_runs: usize,
    pub base_seed: u64,
}

impl FeatureRanking {
    pub fn top(&self, k: usize) -> &[usize] {
        &self.final_order[..k.min(self.final_order.len())]
    }

    pub fn top_names(&self, k: usize) -> Vec<String> {
        self.top(k).iter().map(|&i| self.names[i].clone()).collect()
    }

    /// `rank,name,summed_score,mean_importance`, best first.
    pub fn write_csv<W: Write>(&self, w: W, metadata: &[String]) -> std::io::Result<()> {
        let mut w = w;
        for m in metadata {
            writeln!(w, "# {m}")?;
        }
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["rank", "name", "summed_score", "mean_importance"])?;
        for (r, &i) in self.final_order.iter().enumerate() {
            cw.write_record([
                (r + 1).to_string(),
                self.names[i].clone(),
                self.summed_score[i].to_string(),
                format!("{:.12e}", self.mean_importance[i]),
            ])?;
        }
        cw.flush()
    }
}

/// Indices sorted by descending score, ties by ascending index.
pub(crate) fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn aggregate_ranks(
    data: &Dataset,
    y: &[u8],
    params: &ForestParams,
    n_runs: usize,
    base_seed: u64,
) -> Result<FeatureRanking> {
    aggregate_ranks_prepared(data, &Presorted::new(data), y, params, n_runs, base_seed)
}

/// Run `r` trains with seed `base_seed + r`; `params.seed` is ignored.
pub fn aggregate_ranks_prepared(
    data: &Dataset,
    pre: &Presorted,
    y: &[u8],
    params: &ForestParams,
    n_runs: usize,
    base_seed: u64,
) -> Result<FeatureRanking> {
    if n_runs == 0 {
        return Err(ForestError::InvalidParams("n_runs must be >= 1".into()));
    }
    let d = data.n_cols;
    let mut summed = vec![0u64; d];
    let mut imp_sum = vec![0.0; d];
    for r in 0..n_runs {
        let p = ForestParams {
            seed: base_seed.wrapping_add(r as u64),
            ..params.clone()
        };
        let imp = train_forest_prepared(data, pre, y, &p)?.gini_importance();
        for (rank, &f) in order_desc(&imp).iter().enumerate() {
            summed[f] += rank as u64;
        }
        for (s, v) in imp_sum.iter_mut().zip(&imp) {
            *s += v;
        }
    }
    let mut final_order: Vec<usize> = (0..d).collect();
    final_order.sort_by_key(|&i| (summed[i], i));
    Ok(FeatureRanking {
        names: data.names.clone(),
        summed_score: summed,
        mean_importance: imp_sum.iter().map(|s| s / n_runs as f64).collect(),
        final_order,
        n_runs,
        base_seed,
    })
}

/// Mean cross-validated AUC for each `K` in `1..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub best_k: usize,
    /// `(K, mean AUC)`.
    pub curve: Vec<(usize, f64)>,
}

/// For each K, trains on the top-K ranked features of every training fold
/// (forest seed `params.seed`) and averages the held-out fold AUCs. Ties go
/// to the smaller K.
pub fn top_k_sweep(
    data: &Dataset,
    y: &[u8],
    ranking: &FeatureRanking,
    k_max: usize,
    n_folds: usize,
    cv_seed: u64,
    params: &ForestParams,
) -> Result<KSweep> {
    if k_max == 0 || k_max > data.n_cols {
        return Err(ForestError::InvalidParams(format!(
            "k_max {k_max} outside 1..={}",
            data.n_cols
        )));
    }
    let folds = stratified_kfold(y, n_folds, cv_seed).map_err(Box::new)?;
    let splits: Vec<(Vec<usize>, &Vec<usize>)> = folds
        .iter()
        .map(|test| {
            let mut in_test = vec![false; y.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            ((0..y.len()).filter(|&i| !in_test[i]).collect(), test)
        })
        .collect();
    let mut curve = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let cols = ranking.top(k);
        let mut total = 0.0;
        for (train, test) in &splits {
            let tr = data.select(train, cols);
            let te = data.select(test, cols);
            let ytr: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let yte: Vec<u8> = test.iter().map(|&i| y[i]).collect();
            let f = train_forest_prepared(&tr, &Presorted::new(&tr), &ytr, params)?;
            total += roc_auc(&f.predict_proba(&te)?, &yte).map_err(Box::new)?;
        }
        curve.push((k, total / splits.len() as f64));
    }
    let mut best = curve[0];
    for &c in &curve[1..] {
        if c.1 > best.1 {
            best = c;
        }
    }
    Ok(KSweep {
        best_k: best.0,
        curve,
    })
}
