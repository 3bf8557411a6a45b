use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{complement, stratified_kfold};
use super::logistic::{logistic_baseline, DEFAULT_LAMBDA};
use super::metrics::{roc_auc, roc_curve, sensitivity_at_ppv, tpr_at, PpvOutcome};
use super::stats::{format_p, mean_ci, one_tailed_paired_ttest};
use super::{EvalError, Result};
use crate::features::{FeatureGroup, FeatureTable};
use crate::forest::{
    aggregate_ranks_prepared, top_k_sweep, train_forest_prepared, Dataset, ForestParams, Presorted,
};

/// Where feature ranking and K selection see data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Ranking, K sweep and imputation are fit on each training split.
    #[default]
    Nested,
    /// Ranking, K sweep and imputation are fit once on the whole cohort.
    PaperFaithful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub feature_groups: Vec<FeatureGroup>,
    pub n_folds: usize,
    pub n_model_seeds: usize,
    pub ranking_runs: usize,
    pub k_max: usize,
    pub ppv_target: f64,
    pub ci_level: f64,
    pub fold_seed: u64,
    pub ranking_seed: u64,
    pub model_seed: u64,
    pub forest: ForestParams,
    pub selection: SelectionMode,
    pub logistic_baseline: bool,
    pub logistic_lambda: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            feature_groups: vec![FeatureGroup::Hlq, FeatureGroup::Wlr, FeatureGroup::Dvb],
            n_folds: 5,
            n_model_seeds: 5,
            ranking_runs: 100,
            k_max: 100,
            ppv_target: 0.70,
            ci_level: 0.95,
            fold_seed: 0,
            ranking_seed: 0,
            model_seed: 0,
            forest: ForestParams::default(),
            selection: SelectionMode::Nested,
            logistic_baseline: false,
            logistic_lambda: DEFAULT_LAMBDA,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.feature_groups.is_empty() {
            return bad("no feature group selected".into());
        }
        if !(self.ppv_target > 0.0 && self.ppv_target <= 1.0) {
            return bad(format!("ppv_target {} outside (0, 1]", self.ppv_target));
        }
        if self.n_folds < 2 {
            return bad(format!("n_folds {} < 2", self.n_folds));
        }
        if self.n_model_seeds < 2 {
            return bad(format!("n_model_seeds {} < 2", self.n_model_seeds));
        }
        if self.ranking_runs == 0 || self.k_max == 0 {
            return bad("ranking_runs and k_max must be >= 1".into());
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let mut g = self.feature_groups.clone();
        g.sort();
        g.dedup();
        g.iter().map(|g| g.as_str()).collect::<Vec<_>>().join("+")
    }
}

/// Data-access stages reported to an [`AccessObserver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Imputation,
    Ranking,
    KSweep,
    Training,
    Prediction,
}

/// Instrumentation hook: told which subject rows each stage reads, per
/// outer fold (`None` for cohort-wide steps).
pub trait AccessObserver: Sync {
    fn access(&self, fold: Option<usize>, stage: Stage, rows: &[usize]);
}

struct NoObserver;

impl AccessObserver for NoObserver {
    fn access(&self, _: Option<usize>, _: Stage, _: &[usize]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Summary {
    pub fn of(values: &[f64], level: f64) -> Result<Self> {
        let (mean, lower, upper) = mean_ci(values, level)?;
        Ok(Self { mean, lower, upper })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Outer fold the selection was fit on; `None` for cohort-wide.
    pub fold: Option<usize>,
    pub k: usize,
    /// Top-K features with their mean normalised Gini importance.
    pub features: Vec<(String, f64)>,
    pub k_curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub mean_tpr: f64,
    pub per_seed_tpr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticSummary {
    pub fold_auc: Vec<f64>,
    pub auc: Summary,
    pub non_converged_folds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub selection_mode: SelectionMode,
    pub n_subjects: usize,
    pub n_features: usize,
    pub folds: Vec<Vec<usize>>,
    /// `[seed][fold]`.
    pub fold_auc: Vec<Vec<f64>>,
    pub seed_auc: Vec<f64>,
    /// Across seed-level means.
    pub auc: Summary,
    pub ppv_target: f64,
    /// One per seed, on the pooled out-of-fold scores.
    pub operating_points: Vec<PpvOutcome>,
    /// Present only when every seed attains the PPV target.
    pub sensitivity: Option<Summary>,
    pub specificity: Option<Summary>,
    pub accuracy: Option<Summary>,
    /// Median of the per-fold K in nested mode.
    pub chosen_k: usize,
    pub selections: Vec<Selection>,
    pub roc: Vec<RocPoint>,
    pub logistic: Option<LogisticSummary>,
    pub auc_p_value: Option<f64>,
    pub sensitivity_p_value: Option<f64>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    /// Fold AUCs flattened in `(seed, fold)` order.
    pub fn paired_auc(&self) -> Vec<f64> {
        self.fold_auc.iter().flatten().copied().collect()
    }

    pub fn seed_sensitivity(&self) -> Option<Vec<f64>> {
        self.operating_points
            .iter()
            .map(|o| o.point().map(|p| p.sensitivity))
            .collect()
    }

    pub fn write_roc_csv<W: Write>(&self, w: W, metadata: &[String]) -> std::io::Result<()> {
        let mut w = w;
        for m in metadata {
            writeln!(w, "# {m}")?;
        }
        let mut cw = csv::Writer::from_writer(w);
        let mut header = vec!["fpr".to_string(), "mean_tpr".to_string()];
        header.extend((0..self.fold_auc.len()).map(|s| format!("tpr_seed{s}")));
        cw.write_record(&header)?;
        for p in &self.roc {
            let mut rec = vec![format!("{:.2}", p.fpr), p.mean_tpr.to_string()];
            rec.extend(p.per_seed_tpr.iter().map(f64::to_string));
            cw.write_record(&rec)?;
        }
        cw.flush()
    }
}

/// Replaces NaN cells of each column by the mean of that column's present
/// values among `fit_rows`.
pub fn impute_column_means(t: &FeatureTable, fit_rows: &[usize]) -> Result<FeatureTable> {
    let nc = t.n_cols();
    let mut out = t.clone();
    for c in 0..nc {
        if !(0..t.n_rows()).any(|r| t.get(r, c).is_nan()) {
            continue;
        }
        let (mut sum, mut n) = (0.0, 0usize);
        for &r in fit_rows {
            let x = t.get(r, c);
            if !x.is_nan() {
                sum += x;
                n += 1;
            }
        }
        if n == 0 {
            return Err(EvalError::AllMissingColumn(t.names[c].clone()));
        }
        let m = sum / n as f64;
        for r in 0..t.n_rows() {
            if out.values[r * nc + c].is_nan() {
                out.values[r * nc + c] = m;
            }
        }
    }
    Ok(out)
}

fn select_features(
    data: &Dataset,
    y: &[u8],
    rows: &[usize],
    config: &ExperimentConfig,
    fold: Option<usize>,
) -> Result<Selection> {
    let all: Vec<usize> = (0..data.n_cols).collect();
    let sub = data.select(rows, &all);
    let ys: Vec<u8> = rows.iter().map(|&r| y[r]).collect();
    let pre = Presorted::new(&sub);
    let ranking = aggregate_ranks_prepared(&sub, &pre, &ys, &config.forest, config.ranking_runs, config.ranking_seed)?;
    let sweep_seed = config.fold_seed.wrapping_add(1 + fold.map_or(0, |f| f as u64 + 1));
    let sweep_params = ForestParams {
        seed: config.ranking_seed,
        ..config.forest.clone()
    };
    let sweep = top_k_sweep(
        &sub,
        &ys,
        &ranking,
        config.k_max.min(data.n_cols),
        config.n_folds,
        sweep_seed,
        &sweep_params,
    )?;
    Ok(Selection {
        fold,
        k: sweep.best_k,
        features: ranking
            .top(sweep.best_k)
            .iter()
            .map(|&i| (ranking.names[i].clone(), ranking.mean_importance[i]))
            .collect(),
        k_curve: sweep.curve,
    })
}

pub fn run_experiment(table: &FeatureTable, config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_observed(table, config, &NoObserver)
}

/// Ranks and selects features, then trains `n_model_seeds` forests per
/// outer fold on the selected columns. All folds share one partition
/// (`fold_seed`); model seed `s` uses forest seed `model_seed + s`.
pub fn run_experiment_observed(
    table: &FeatureTable,
    config: &ExperimentConfig,
    obs: &dyn AccessObserver,
) -> Result<ExperimentReport> {
    config.validate()?;
    let cols = table.columns_in_groups(&config.feature_groups);
    if cols.is_empty() {
        return Err(EvalError::InvalidConfig(format!(
            "table has no {} columns",
            config.label()
        )));
    }
    let t = table.select_columns(&cols);
    let y = &t.labels;
    let n = y.len();
    let folds = stratified_kfold(y, config.n_folds, config.fold_seed)?;
    let trains: Vec<Vec<usize>> = folds.iter().map(|f| complement(n, f)).collect();

    // (imputed data, selection) per outer fold
    let prepared: Vec<(Dataset, Selection)> = match config.selection {
        SelectionMode::PaperFaithful => {
            let all: Vec<usize> = (0..n).collect();
            obs.access(None, Stage::Imputation, &all);
            let data = Dataset::from_table(&impute_column_means(&t, &all)?)?;
            obs.access(None, Stage::Ranking, &all);
            obs.access(None, Stage::KSweep, &all);
            let sel = select_features(&data, y, &all, config, None)?;
            vec![(data, sel); folds.len()]
        }
        SelectionMode::Nested => trains
            .iter()
            .enumerate()
            .map(|(f, train)| {
                obs.access(Some(f), Stage::Imputation, train);
                let data = Dataset::from_table(&impute_column_means(&t, train)?)?;
                obs.access(Some(f), Stage::Ranking, train);
                obs.access(Some(f), Stage::KSweep, train);
                let sel = select_features(&data, y, train, config, Some(f))?;
                Ok((data, sel))
            })
            .collect::<Result<_>>()?,
    };

    let jobs: Vec<(usize, usize)> = (0..config.n_model_seeds)
        .flat_map(|s| (0..folds.len()).map(move |f| (s, f)))
        .collect();
    let scored: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(s, f)| {
            let (data, sel) = &prepared[f];
            let sel_cols: Vec<usize> = sel
                .features
                .iter()
                .map(|(name, _)| data.names.iter().position(|n| n == name).expect("selected from data"))
                .collect();
            let train = &trains[f];
            let test = &folds[f];
            obs.access(Some(f), Stage::Training, train);
            let tr = data.select(train, &sel_cols);
            let ytr: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let params = ForestParams {
                seed: config.model_seed.wrapping_add(s as u64),
                ..config.forest.clone()
            };
            let forest = train_forest_prepared(&tr, &Presorted::new(&tr), &ytr, &params)?;
            obs.access(Some(f), Stage::Prediction, test);
            Ok(forest.predict_proba(&data.select(test, &sel_cols))?)
        })
        .collect::<Result<_>>()?;

    let mut fold_auc = vec![vec![0.0; folds.len()]; config.n_model_seeds];
    let mut oof = vec![vec![0.0; n]; config.n_model_seeds];
    for (&(s, f), scores) in jobs.iter().zip(&scored) {
        let yt: Vec<u8> = folds[f].iter().map(|&i| y[i]).collect();
        fold_auc[s][f] = roc_auc(scores, &yt)?;
        for (&i, &p) in folds[f].iter().zip(scores) {
            oof[s][i] = p;
        }
    }
    let seed_auc: Vec<f64> = fold_auc
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    let auc = Summary::of(&seed_auc, config.ci_level)?;

    let operating_points: Vec<PpvOutcome> = oof
        .iter()
        .map(|s| sensitivity_at_ppv(s, y, config.ppv_target))
        .collect::<Result<_>>()?;
    let pts: Option<Vec<_>> = operating_points.iter().map(|o| o.point().copied()).collect();
    let summarize = |g: fn(&super::OperatingPoint) -> f64| -> Result<Option<Summary>> {
        pts.as_ref()
            .map(|p| Summary::of(&p.iter().map(g).collect::<Vec<_>>(), config.ci_level))
            .transpose()
    };
    let sensitivity = summarize(|p| p.sensitivity)?;
    let specificity = summarize(|p| p.specificity)?;
    let accuracy = summarize(|p| p.accuracy)?;

    let curves: Vec<Vec<(f64, f64)>> = oof.iter().map(|s| roc_curve(s, y)).collect::<Result<_>>()?;
    let roc = (0..=100)
        .map(|i| {
            let fpr = i as f64 / 100.0;
            let per_seed_tpr: Vec<f64> = curves.iter().map(|c| tpr_at(c, fpr)).collect();
            RocPoint {
                fpr,
                mean_tpr: per_seed_tpr.iter().sum::<f64>() / per_seed_tpr.len() as f64,
                per_seed_tpr,
            }
        })
        .collect();

    // Standardisation is fit per training fold; imputation follows the
    // selection mode through `prepared`.
    let logistic = if config.logistic_baseline {
        let mut fold_auc = Vec::with_capacity(folds.len());
        let mut non_converged = Vec::new();
        for (f, test) in folds.iter().enumerate() {
            let r = logistic_baseline(&prepared[f].0, y, std::slice::from_ref(test), config.logistic_lambda)?;
            fold_auc.push(r.fold_auc[0]);
            if !r.non_converged.is_empty() {
                non_converged.push(f);
            }
        }
        Some(LogisticSummary {
            auc: Summary::of(&fold_auc, config.ci_level)?,
            fold_auc,
            non_converged_folds: non_converged,
        })
    } else {
        None
    };

    let selections: Vec<Selection> = match config.selection {
        SelectionMode::PaperFaithful => vec![prepared[0].1.clone()],
        SelectionMode::Nested => prepared.into_iter().map(|p| p.1).collect(),
    };
    let mut ks: Vec<usize> = selections.iter().map(|s| s.k).collect();
    ks.sort_unstable();
    let chosen_k = ks[(ks.len() - 1) / 2];

    Ok(ExperimentReport {
        label: config.label(),
        selection_mode: config.selection,
        n_subjects: n,
        n_features: t.n_cols(),
        folds,
        fold_auc,
        seed_auc,
        auc,
        ppv_target: config.ppv_target,
        operating_points,
        sensitivity,
        specificity,
        accuracy,
        chosen_k,
        selections,
        roc,
        logistic,
        auc_p_value: None,
        sensitivity_p_value: None,
        config: config.clone(),
    })
}

/// Reports of several feature-group combinations on the same folds, with
/// one-tailed p-values against the best mean AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ExperimentReport>,
    pub best: usize,
    /// p-value of the logistic baseline against the best row, paired by fold
    /// on the seed-averaged fold AUCs.
    pub logistic_p_value: Option<f64>,
}

pub fn compare(mut rows: Vec<ExperimentReport>) -> Result<Comparison> {
    if rows.is_empty() {
        return Err(EvalError::InvalidConfig("nothing to compare".into()));
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.auc.mean > rows[best].auc.mean {
            best = i;
        }
    }
    let best_auc = rows[best].paired_auc();
    let best_sens = rows[best].seed_sensitivity();
    for i in 0..rows.len() {
        if i == best {
            continue;
        }
        let other = rows[i].paired_auc();
        rows[i].auc_p_value = Some(one_tailed_paired_ttest(&best_auc, &other)?);
        if let (Some(b), Some(o)) = (&best_sens, rows[i].seed_sensitivity()) {
            if b.len() == o.len() {
                rows[i].sensitivity_p_value = Some(one_tailed_paired_ttest(b, &o)?);
            }
        }
    }
    let logistic_p_value = match rows.iter().find_map(|r| r.logistic.as_ref()) {
        Some(l) => {
            let b = &rows[best];
            let per_fold: Vec<f64> = (0..b.folds.len())
                .map(|f| b.fold_auc.iter().map(|s| s[f]).sum::<f64>() / b.fold_auc.len() as f64)
                .collect();
            Some(one_tailed_paired_ttest(&per_fold, &l.fold_auc)?)
        }
        None => None,
    };
    Ok(Comparison {
        rows,
        best,
        logistic_p_value,
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

impl Comparison {
    /// Markdown table: AUC and sensitivity at the PPV target, each with mean,
    /// 95% CI and p-value against the best row, plus the chosen K.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let ppv = self.rows.first().map_or(0.7, |r| r.ppv_target);
        let _ = writeln!(
            s,
            "| Features | AUC Mean | 95% CI | p Value | Sensitivity (PPV {}) | 95% CI | p Value | K |",
            pct(ppv)
        );
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
        for (i, r) in self.rows.iter().enumerate() {
            let p_auc = if i == self.best {
                "-".to_string()
            } else {
                r.auc_p_value.map_or("-".into(), format_p)
            };
            let (sens, sens_ci) = match &r.sensitivity {
                Some(x) => (pct(x.mean), format!("({}, {})", pct(x.lower), pct(x.upper))),
                None => ("unattainable".into(), "-".into()),
            };
            let p_sens = if i == self.best {
                "-".to_string()
            } else {
                r.sensitivity_p_value.map_or("-".into(), format_p)
            };
            let _ = writeln!(
                s,
                "| {} | {:.3} | ({:.3}, {:.3}) | {} | {} | {} | {} | {} |",
                r.label, r.auc.mean, r.auc.lower, r.auc.upper, p_auc, sens, sens_ci, p_sens, r.chosen_k
            );
        }
        if let Some(l) = self.rows.iter().find_map(|r| r.logistic.as_ref()) {
            let p = self.logistic_p_value.map_or("-".into(), format_p);
            let _ = writeln!(
                s,
                "| Logistic Regression | {:.3} | ({:.3}, {:.3}) | {} | - | - | - | - |",
                l.auc.mean, l.auc.lower, l.auc.upper, p
            );
        }
        s
    }
}
