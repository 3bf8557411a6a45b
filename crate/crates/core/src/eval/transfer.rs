use serde::{Deserialize, Serialize};

use super::experiment::{impute_column_means, ExperimentConfig};
use super::logistic::LogisticModel;
use super::metrics::roc_auc;
use super::{EvalError, Result};
use crate::features::FeatureTable;
use crate::forest::{aggregate_ranks_prepared, top_k_sweep, train_forest_prepared, Dataset, ForestParams, Presorted};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub auc: f64,
    pub chosen_k: usize,
    pub shared_features: usize,
    pub selected: Vec<String>,
    pub logistic_auc: Option<f64>,
}

impl TransferResult {
    /// `0.740 (36)`.
    pub fn cell(&self) -> String {
        format!("{:.3} ({})", self.auc, self.chosen_k)
    }
}

/// Columns of `a` (in `a`'s order, restricted to `groups`) also present in `b`.
fn shared_columns(a: &FeatureTable, b: &FeatureTable, config: &ExperimentConfig) -> Vec<String> {
    a.columns_in_groups(&config.feature_groups)
        .into_iter()
        .map(|c| a.names[c].clone())
        .filter(|n| b.column_index(n).is_some())
        .collect()
}

fn by_names(t: &FeatureTable, names: &[String]) -> FeatureTable {
    let cols: Vec<usize> = names
        .iter()
        .map(|n| t.column_index(n).expect("shared column"))
        .collect();
    t.select_columns(&cols)
}

/// Ranks, sweeps K and trains on `train` only, then scores `test`.
/// Missing cells on both sides are filled with `train` means.
pub fn transfer_experiment(train: &FeatureTable, test: &FeatureTable, config: &ExperimentConfig) -> Result<TransferResult> {
    config.validate()?;
    let names = shared_columns(train, test, config);
    if names.is_empty() {
        return Err(EvalError::NoSharedFeatures);
    }
    let tr = by_names(train, &names);
    let te = by_names(test, &names);
    let all_train: Vec<usize> = (0..tr.n_rows()).collect();
    let tr = impute_column_means(&tr, &all_train)?;
    // test cells are filled from the training means
    let mut stacked = tr.clone();
    for r in 0..te.n_rows() {
        stacked.push_row(format!("test:{}", te.subjects[r]), te.row(r), te.labels[r])?;
    }
    let te = impute_column_means(&stacked, &all_train)?.select_rows(&(tr.n_rows()..stacked.n_rows()).collect::<Vec<_>>());

    let dtr = Dataset::from_table(&tr)?;
    let dte = Dataset::from_table(&te)?;
    let pre = Presorted::new(&dtr);
    let ranking = aggregate_ranks_prepared(&dtr, &pre, &tr.labels, &config.forest, config.ranking_runs, config.ranking_seed)?;
    let sweep = top_k_sweep(
        &dtr,
        &tr.labels,
        &ranking,
        config.k_max.min(dtr.n_cols),
        config.n_folds,
        config.fold_seed,
        &ForestParams {
            seed: config.ranking_seed,
            ..config.forest.clone()
        },
    )?;
    let cols = ranking.top(sweep.best_k).to_vec();
    let rows_tr: Vec<usize> = (0..dtr.n_rows).collect();
    let rows_te: Vec<usize> = (0..dte.n_rows).collect();
    let xtr = dtr.select(&rows_tr, &cols);
    let xte = dte.select(&rows_te, &cols);
    let params = ForestParams {
        seed: config.model_seed,
        ..config.forest.clone()
    };
    let forest = train_forest_prepared(&xtr, &Presorted::new(&xtr), &tr.labels, &params)?;
    let auc = roc_auc(&forest.predict_proba(&xte)?, &te.labels)?;
    let logistic_auc = if config.logistic_baseline {
        let m = LogisticModel::fit(&dtr, &tr.labels, &rows_tr, config.logistic_lambda);
        Some(roc_auc(&m.predict_proba(&dte, &rows_te), &te.labels)?)
    } else {
        None
    };
    Ok(TransferResult {
        auc,
        chosen_k: sweep.best_k,
        shared_features: names.len(),
        selected: ranking.top_names(sweep.best_k),
        logistic_auc,
    })
}

/// Markdown matrix, rows = training site, columns = test site.
pub fn transfer_markdown(sites: &[String], cells: &[Vec<TransferResult>]) -> String {
    let mut s = format!("| Train \\ Test | {} |\n", sites.join(" | "));
    s.push_str(&format!("|---|{}\n", "---|".repeat(sites.len())));
    for (site, row) in sites.iter().zip(cells) {
        let c: Vec<String> = row.iter().map(TransferResult::cell).collect();
        s.push_str(&format!("| {site} | {} |\n", c.join(" | ")));
    }
    if cells.iter().flatten().all(|c| c.logistic_auc.is_some()) {
        s.push_str("\nLogistic Regression\n\n");
        s.push_str(&format!("| Train \\ Test | {} |\n", sites.join(" | ")));
        s.push_str(&format!("|---|{}\n", "---|".repeat(sites.len())));
        for (site, row) in sites.iter().zip(cells) {
            let c: Vec<String> = row
                .iter()
                .map(|c| format!("{:.3}", c.logistic_auc.unwrap_or(f64::NAN)))
                .collect();
            s.push_str(&format!("| {site} | {} |\n", c.join(" | ")));
        }
    }
    s
}
