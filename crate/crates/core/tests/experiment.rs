mod common;

use std::collections::HashMap;
use std::sync::Mutex;

use common::metrics::nearest_centroid_auc;
use radlung_core::eval::{
    run_experiment, run_experiment_observed, transfer_experiment, AccessObserver, EvalError, ExperimentConfig,
    SelectionMode, Stage,
};
use radlung_core::forest::ForestParams;
use radlung_core::synth::{planted_table, PlantedSpec};
use radlung_core::{FeatureGroup, FeatureTable};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick(groups: Vec<FeatureGroup>) -> ExperimentConfig {
    ExperimentConfig {
        feature_groups: groups,
        ranking_runs: 5,
        k_max: 15,
        forest: ForestParams { n_trees: 50, ..ForestParams::default() },
        ..ExperimentConfig::default()
    }
}

fn planted(n: usize, d: usize, informative: usize, effect: f64, seed: u64) -> FeatureTable {
    planted_table(&PlantedSpec {
        n_subjects: n,
        n_features: d,
        n_informative: informative,
        effect,
        seed,
        ..PlantedSpec::default()
    })
    .unwrap()
    .0
}

#[derive(Default)]
struct Recorder(Mutex<Vec<(Option<usize>, Stage, Vec<usize>)>>);

impl AccessObserver for Recorder {
    fn access(&self, fold: Option<usize>, stage: Stage, rows: &[usize]) {
        self.0.lock().unwrap().push((fold, stage, rows.to_vec()));
    }
}

#[test]
fn nested_selection_never_reads_test_rows() {
    let t = planted(60, 20, 3, 1.5, 1);
    let cfg = quick(vec![FeatureGroup::Wlr]);
    let rec = Recorder::default();
    let report = run_experiment_observed(&t, &cfg, &rec).unwrap();
    let log = rec.0.into_inner().unwrap();
    let mut seen: HashMap<(usize, Stage), usize> = HashMap::new();
    for (fold, stage, rows) in &log {
        let f = fold.expect("nested mode has no cohort-wide stage");
        let test = &report.folds[f];
        let hits = rows.iter().filter(|r| test.binary_search(r).is_ok()).count();
        if *stage == Stage::Prediction {
            assert_eq!(rows, test);
        } else {
            assert_eq!(hits, 0, "fold {f} stage {stage:?} read {hits} test rows");
        }
        *seen.entry((f, *stage)).or_default() += 1;
    }
    for f in 0..cfg.n_folds {
        for s in [Stage::Imputation, Stage::Ranking, Stage::KSweep] {
            assert_eq!(seen[&(f, s)], 1);
        }
        assert_eq!(seen[&(f, Stage::Training)], cfg.n_model_seeds);
    }
}

/// Overwriting the test rows of one fold leaves that fold's selection
/// untouched.
#[test]
fn selection_ignores_test_fold_values() {
    let t = planted(60, 20, 3, 1.5, 2);
    let cfg = quick(vec![FeatureGroup::Wlr]);
    let a = run_experiment(&t, &cfg).unwrap();
    let test = &a.folds[0];
    let mut poisoned = t.clone();
    let nc = t.n_cols();
    for &r in test {
        for c in 0..nc {
            poisoned.values[r * nc + c] = if c % 3 == 0 { f64::NAN } else { 1e6 * (c as f64 + 1.0) };
        }
    }
    let b = run_experiment(&poisoned, &cfg).unwrap();
    assert_eq!(a.folds, b.folds);
    assert_eq!(a.selections[0], b.selections[0]);
}

#[test]
fn paper_faithful_selects_once_on_all_rows() {
    let t = planted(60, 20, 3, 1.5, 3);
    let cfg = ExperimentConfig { selection: SelectionMode::PaperFaithful, ..quick(vec![FeatureGroup::Wlr]) };
    let rec = Recorder::default();
    let report = run_experiment_observed(&t, &cfg, &rec).unwrap();
    let log = rec.0.into_inner().unwrap();
    let wide: Vec<_> = log.iter().filter(|e| e.0.is_none()).collect();
    assert_eq!(wide.len(), 3);
    assert!(wide.iter().all(|e| e.2.len() == 60));
    assert_eq!(report.selections.len(), 1);
    assert_eq!(report.chosen_k, report.selections[0].k);
}

#[test]
fn report_is_deterministic_and_bounded() {
    let t = planted(80, 30, 4, 1.2, 4);
    let cfg = ExperimentConfig { logistic_baseline: true, ..quick(vec![FeatureGroup::Wlr]) };
    let a = run_experiment(&t, &cfg).unwrap();
    let b = run_experiment(&t, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    assert!(a.fold_auc.iter().flatten().all(|&x| unit(x)));
    assert!(a.auc.lower <= a.auc.mean && a.auc.mean <= a.auc.upper);
    for s in [&a.sensitivity, &a.specificity, &a.accuracy].into_iter().flatten() {
        assert!(s.lower <= s.mean && s.mean <= s.upper && unit(s.mean));
    }
    assert_eq!(a.roc.len(), 101);
    assert!(a.roc.windows(2).all(|w| w[0].mean_tpr <= w[1].mean_tpr));
    let lr = a.logistic.as_ref().unwrap();
    assert!(lr.non_converged_folds.is_empty());
    assert!(lr.fold_auc.iter().all(|&x| unit(x)));
}

#[test]
fn planted_signal_found_and_permutation_null() {
    let t = planted(200, 300, 20, 1.0, 5);
    let rows: Vec<Vec<f64>> = (0..t.n_rows()).map(|r| t.row(r).to_vec()).collect();
    assert!(nearest_centroid_auc(&rows, &t.labels) >= 0.85);
    let cfg = quick(vec![FeatureGroup::Wlr]);
    let report = run_experiment(&t, &cfg).unwrap();
    assert!(report.auc.mean >= 0.85, "{}", report.auc.mean);

    let mut permuted = t.clone();
    permuted.labels.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    let null = run_experiment(&permuted, &cfg).unwrap();
    assert!((0.35..=0.65).contains(&null.auc.mean), "{}", null.auc.mean);
}

#[test]
fn self_transfer_is_optimistic() {
    let t = planted(120, 40, 4, 1.2, 6);
    let cfg = quick(vec![FeatureGroup::Wlr]);
    let cv = run_experiment(&t, &cfg).unwrap().auc.mean;
    let tr = transfer_experiment(&t, &t, &cfg).unwrap();
    assert!(tr.auc >= cv - 0.05, "{} vs {cv}", tr.auc);
    assert_eq!(tr.shared_features, 40);
    assert_eq!(tr.selected.len(), tr.chosen_k);
}

#[test]
fn shifted_site_transfers() {
    let a = planted(150, 40, 5, 1.5, 7);
    // same informative columns, different draws and a noise offset
    let spec = |seed, shift| PlantedSpec {
        n_subjects: 150,
        n_features: 40,
        n_informative: 5,
        effect: 1.5,
        noise_shift: shift,
        seed,
        ..PlantedSpec::default()
    };
    let (a2, inf_a) = planted_table(&spec(7, 0.0)).unwrap();
    assert_eq!(a2, a);
    let (b, inf_b) = planted_table(&spec(7_000, 0.7)).unwrap();
    // align site B so its informative columns carry site A's names
    let mut order: Vec<usize> = (0..40).filter(|j| !inf_b.contains(j)).collect();
    let mut target: Vec<usize> = (0..40).filter(|j| !inf_a.contains(j)).collect();
    order.extend(&inf_b);
    target.extend(&inf_a);
    let mut cols = vec![0; 40];
    for (src, dst) in order.iter().zip(&target) {
        cols[*dst] = *src;
    }
    let mut b = b.select_columns(&cols);
    b.names = a.names.clone();

    let cfg = quick(vec![FeatureGroup::Wlr]);
    let within = run_experiment(&b, &cfg).unwrap().auc.mean;
    let across = transfer_experiment(&a, &b, &cfg).unwrap().auc;
    assert!((across - within).abs() <= 0.15, "{across} vs {within}");
}

#[test]
fn disjoint_names_rejected() {
    let a = planted(40, 5, 1, 1.0, 8);
    let mut b = a.clone();
    b.names = (0..5).map(|j| format!("other{j}")).collect();
    let cfg = quick(vec![FeatureGroup::Wlr]);
    assert!(matches!(transfer_experiment(&a, &b, &cfg), Err(EvalError::NoSharedFeatures)));
}
