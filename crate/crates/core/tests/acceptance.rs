//! One line per acceptance criterion, `PASS` or `FAIL`, then a single
//! assertion over all of them.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::clinical::{column_cells, mean};
use common::filters::dense_log;
use common::hlq::{additivity_error, hlq_of, random_phantom, truth_from_geometry};
use common::metrics::{check_auc, check_ppv, nearest_centroid_auc, paired_t, random_sets, t_upper_tail_quadrature};
use common::texture::{check_volume, volumes};
use radlung_core::clinical::{parse_clinical_reader, ClinicalColumn, ClinicalSchema};
use radlung_core::eval::{
    impute_column_means, mean_ci, one_tailed_paired_ttest, run_experiment, Design, ExperimentConfig, P_FLOOR,
};
use radlung_core::extract::{assemble_table, extract_image_features, IMAGE_FEATURE_COUNT};
use radlung_core::filterbank::{
    enumerate_filter_bank, laplacian_of_gaussian, wavelet_subband, Boundary, Subband,
};
use radlung_core::forest::{aggregate_ranks, Dataset, ForestParams};
use radlung_core::hlq::extract_hlq;
use radlung_core::synth::{planted_table, synth_cohort, PlantedSpec, SynthCohort, SynthSpec};
use radlung_core::texture::{extract_wlr, TextureConfig, SHAPE_FEATURE_COUNT, WLR_FEATURE_COUNT};
use radlung_core::volume::validate_alignment;
use radlung_core::{FeatureTable, VoxelVolume};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: Vec<(bool, String)>) -> Outcome {
    Outcome {
        pass: checks.iter().all(|c| c.0),
        detail: checks
            .into_iter()
            .map(|(ok, s)| if ok { s } else { format!("{s} [failed]") })
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn within(limit: Duration, elapsed: Duration) -> (bool, String) {
    (elapsed < limit, format!("{:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn cardinality() -> Outcome {
    let spec = SynthSpec { n_subjects: 2, dims: [64, 64, 40], seed: 1, ..SynthSpec::default() };
    let cohort = synth_cohort(&spec).unwrap();
    let s = &cohort.subjects[0];
    let start = Instant::now();
    let token = validate_alignment(&s.volume, &[&s.lobe_mask, &s.opacity_mask]).unwrap();
    let wlr = extract_wlr(&s.volume, &s.opacity_mask, &token, &TextureConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let image = extract_image_features(&s.volume, &s.lobe_mask, &s.opacity_mask, &TextureConfig::default()).unwrap();

    let bank = enumerate_filter_bank();
    let families = [("FirstOrder", 18), ("GLCM", 24), ("GLRLM", 16), ("GLSZM", 16), ("NGTDM", 5), ("GLDM", 14)];
    let mut family_ok = true;
    for f in &bank {
        for (fam, want) in families {
            let prefix = format!("{}-{fam}-", f.canonical_name());
            let got = wlr.names.iter().filter(|n| n.starts_with(&prefix)).count();
            family_ok &= got == want;
        }
    }
    let shape = wlr.names.iter().filter(|n| n.starts_with("Original-Shape-")).count();
    outcome(vec![
        (wlr.len() == 1691 && WLR_FEATURE_COUNT == 1691, format!("{} WLR features", wlr.len())),
        (family_ok, "per-filter families 18/24/16/16/5/14".into()),
        (shape == 17 && SHAPE_FEATURE_COUNT == 17, format!("{shape} shape")),
        (bank.len() == 18, format!("{} filters", bank.len())),
        (image.len() == 1755 && IMAGE_FEATURE_COUNT == 1755, format!("{} image features", image.len())),
        (wlr.names_unique(), "names unique".into()),
        (wlr.values.iter().all(|v| v.is_finite()), "all finite".into()),
        within(Duration::from_secs(60), elapsed),
    ])
}

fn texture_oracle() -> Outcome {
    let start = Instant::now();
    let vols = volumes(300, 17);
    let failures: Vec<String> = vols.iter().filter_map(|g| check_volume(g, 1e-10).err()).collect();
    let elapsed = start.elapsed();
    outcome(vec![
        (failures.is_empty(), format!("{} of {} volumes match", vols.len() - failures.len(), vols.len())),
        within(Duration::from_secs(300), elapsed),
    ])
}

fn hlq_exactness() -> Outcome {
    let mut planted_ok = true;
    let mut n_checked = 0;
    for (seed, spacing) in [(1, [1.0; 3]), (2, [0.75, 0.75, 1.5]), (3, [0.7, 0.7, 1.25])] {
        let spec = SynthSpec { n_subjects: 10, dims: [24, 24, 14], spacing, seed, ..SynthSpec::default() };
        for s in &synth_cohort(&spec).unwrap().subjects {
            let f = extract_hlq(&s.volume, &s.lobe_mask, &s.opacity_mask).unwrap();
            for (name, want) in truth_from_geometry(s) {
                planted_ok &= f.get(&name) == Some(want);
                n_checked += 1;
            }
        }
    }
    let worst = (0..100u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sx = rng.random_range(0.3..2.0);
            let sz = rng.random_range(0.5..3.0);
            additivity_error(&hlq_of(&random_phantom(1000 + seed, [sx, sx, sz])))
        })
        .fold(0.0f64, f64::max);
    outcome(vec![
        (planted_ok && n_checked == 30 * 64, format!("{n_checked} planted values exact")),
        (worst <= 4.0 * f64::EPSILON, format!("additivity worst {worst:.2e} relative over 100 phantoms")),
    ])
}

fn random_volume(dims: [usize; 3], spacing: [f64; 3], seed: u64) -> VoxelVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    VoxelVolume::new(dims, spacing, (0..n).map(|_| rng.random_range(-1000.0..400.0)).collect()).unwrap()
}

fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

fn filter_checks() -> Outcome {
    let constant_ok = [0.0, 1.0, -850.0, 3.25e4].iter().all(|&c| {
        let v = VoxelVolume::new([9, 7, 5], [0.7, 0.7, 1.5], vec![c; 315]).unwrap();
        [0.5, 1.5, 4.5]
            .iter()
            .all(|&s| laplacian_of_gaussian(&v, s).unwrap().values().iter().all(|&x| x == 0.0))
    });

    let v = random_volume([9, 9, 9], [1.0; 3], 3);
    let base = laplacian_of_gaussian(&v, 1.5).unwrap();
    let scaled = |a: f64| {
        let s = v.map_values(v.values().iter().map(|x| a * x).collect());
        laplacian_of_gaussian(&s, 1.5).unwrap()
    };
    let exact_ok = [2.0, 0.5, -4.0, 1024.0, -0.125].iter().all(|&a| {
        scaled(a).values().iter().zip(base.values()).all(|(x, y)| x.to_bits() == (a * y).to_bits())
    });
    let other_err = [3.0, -0.3, 7.77]
        .iter()
        .map(|&a| {
            let want: Vec<f64> = base.values().iter().map(|y| a * y).collect();
            max_rel_err(scaled(a).values(), &want)
        })
        .fold(0.0f64, f64::max);

    let dense_err = (0..10u64)
        .map(|seed| {
            let v = random_volume([9, 9, 9], [1.0; 3], 100 + seed);
            let sigma = [0.5, 1.5, 2.5][seed as usize % 3];
            let got = laplacian_of_gaussian(&v, sigma).unwrap();
            max_rel_err(got.values(), &dense_log(v.values(), v.dims(), v.spacing(), sigma))
        })
        .fold(0.0f64, f64::max);

    let c = -640.0;
    let flat = VoxelVolume::new([8, 6, 5], [1.0; 3], vec![c; 240]).unwrap();
    let hhh = wavelet_subband(&flat, Subband::parse("HHH").unwrap(), Boundary::Symmetric);
    let hhh_max = hhh.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));

    outcome(vec![
        (constant_ok, "LoG of constant exactly 0".into()),
        (exact_ok, "LoG linear bitwise for power-of-two factors".into()),
        (other_err <= 1e-12, format!("other factors within {other_err:.1e}")),
        (dense_err <= 1e-10, format!("dense-kernel oracle within {dense_err:.1e} on 10 volumes 9x9x9")),
        (hhh_max <= 1e-12 * c.abs(), format!("HHH of constant max |x| {hhh_max:.1e}")),
    ])
}

fn auc_oracle() -> Outcome {
    let auc = check_auc(&random_sets(1000, 500, 1));
    let ppv = check_ppv(&random_sets(300, 200, 2), &[0.3, 0.5, 0.7, 0.9, 1.0]);
    outcome(vec![
        (auc.is_ok(), format!("AUC bit-exact on 1000 sets{}", auc.err().map_or(String::new(), |e| format!(": {e}")))),
        (ppv.is_ok(), format!("sens@PPV optimal on 300 sets{}", ppv.err().map_or(String::new(), |e| format!(": {e}")))),
    ])
}

fn ranking_recovery() -> Outcome {
    let start = Instant::now();
    let (t, informative) = planted_table(&PlantedSpec { seed: 2024, ..PlantedSpec::default() }).unwrap();
    let data = Dataset::from_table(&t).unwrap();
    let params = ForestParams::default();
    let trials = 20;
    let hits = (0..trials)
        .filter(|&trial| {
            let r = aggregate_ranks(&data, &t.labels, &params, 100, 10_000 * trial as u64).unwrap();
            informative.iter().all(|i| r.top(5).contains(i))
        })
        .count();
    let elapsed = start.elapsed();
    outcome(vec![
        (hits * 100 >= 95 * trials, format!("{hits}/{trials} trials with all 3 planted in top 5")),
        within(Duration::from_secs(600), elapsed),
    ])
}

fn cohort_table(cohort: &SynthCohort) -> FeatureTable {
    let images: Vec<_> = cohort
        .subjects
        .iter()
        .map(|s| {
            let f = extract_image_features(&s.volume, &s.lobe_mask, &s.opacity_mask, &TextureConfig::default());
            (s.id.clone(), f.unwrap())
        })
        .collect();
    let clinical = parse_clinical_reader(cohort.clinical_csv.as_bytes(), &ClinicalSchema::site_a()).unwrap();
    assemble_table(&images, &clinical).unwrap()
}

/// Nearest-centroid AUC on the standardised columns the label rule uses.
fn oracle_auc(t: &FeatureTable, columns: &[&str]) -> f64 {
    let all: Vec<usize> = (0..t.n_rows()).collect();
    let t = impute_column_means(t, &all).unwrap();
    let cols: Vec<usize> = columns.iter().map(|c| t.column_index(c).unwrap()).collect();
    let z: Vec<Vec<f64>> = {
        let stats: Vec<(f64, f64)> = cols
            .iter()
            .map(|&c| {
                let v: Vec<f64> = all.iter().map(|&r| t.get(r, c)).collect();
                let m = mean(&v);
                let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
                (m, sd)
            })
            .collect();
        all.iter()
            .map(|&r| cols.iter().zip(&stats).map(|(&c, (m, sd))| (t.get(r, c) - m) / sd).collect())
            .collect()
    };
    nearest_centroid_auc(&z, &t.labels)
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec { n_subjects: 100, dims: [32, 32, 20], missing_rate: 0.05, seed: 11, ..SynthSpec::default() };
    let cohort = synth_cohort(&spec).unwrap();
    let table = cohort_table(&cohort);
    let rule: Vec<&str> = spec.label_rule.effects.iter().map(|e| e.0.as_str()).collect();
    let oracle = oracle_auc(&table, &rule);

    let cfg = ExperimentConfig {
        ranking_runs: 20,
        k_max: 20,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&table, &cfg).unwrap();

    let mut permuted = table.clone();
    permuted.labels.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    let null = run_experiment(&permuted, &cfg).unwrap().auc.mean;

    let again = cohort_table(&synth_cohort(&spec).unwrap());
    let rerun = run_experiment(&again, &cfg).unwrap();
    let csv = |t: &FeatureTable| {
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &[]).unwrap();
        buf
    };
    let json = |r| serde_json::to_string(r).unwrap();
    let identical = csv(&again) == csv(&table) && json(&rerun) == json(&report);
    let elapsed = start.elapsed();

    outcome(vec![
        (oracle >= 0.85, format!("nearest-centroid oracle {oracle:.3}")),
        (report.auc.mean >= 0.85, format!("mean AUC {:.3} (K {})", report.auc.mean, report.chosen_k)),
        ((0.35..=0.65).contains(&null), format!("permuted labels {null:.3}")),
        (identical, "rerun byte-identical".into()),
        (true, format!("{} subjects x {} columns, {:.0}s", table.n_rows(), table.n_cols(), elapsed.as_secs_f64())),
    ])
}

fn statistics() -> Outcome {
    let t975 = 12.706_204_736_174_7;
    let (m, lo, hi) = mean_ci(&[0.0, 1.0], 0.95).unwrap();
    let h = t975 * 0.5f64.sqrt() / 2f64.sqrt();
    let ci_err = (hi - m - h).abs().max((m - lo - h).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut t_err = 0.0f64;
    for _ in 0..40 {
        let n = rng.random_range(2..=25);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..0.95)).collect();
        let b: Vec<f64> = a.iter().map(|x| x - rng.random_range(-0.05..0.08)).collect();
        let (t, df) = paired_t(&a, &b);
        let want = t_upper_tail_quadrature(t, df).max(P_FLOOR);
        t_err = t_err.max((one_tailed_paired_ttest(&a, &b).unwrap() - want).abs());
    }

    let (n, d) = (30, 6);
    let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
    let des = Design { x: &x, y: &y, d };
    let mut g_err = 0.0f64;
    for lambda in [0.0, 0.1, 1.0] {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-0.5..0.5);
        let g = des.gradient(&w, b, lambda);
        let h = 1e-5;
        let fd: Vec<f64> = (0..=d)
            .map(|j| {
                let f = |s: f64| {
                    let mut w2 = w.clone();
                    let mut b2 = b;
                    if j < d {
                        w2[j] += s;
                    } else {
                        b2 += s;
                    }
                    des.objective(&w2, b2, lambda)
                };
                (f(h) - f(-h)) / (2.0 * h)
            })
            .collect();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        g_err = g_err.max(err / scale);
    }
    outcome(vec![
        (ci_err <= 1e-6, format!("df=1 CI half-width off by {ci_err:.1e}")),
        (t_err <= 1e-9, format!("t-test vs quadrature {t_err:.1e}")),
        (g_err <= 1e-6, format!("logistic gradient vs finite differences {g_err:.1e} relative")),
    ])
}

fn imputation() -> Outcome {
    let csv = radlung_core::synth::site_a_shaped_csv(7);
    let (present, missing) = column_cells(&csv, "spo2");
    let want = mean(&present);
    let table = parse_clinical_reader(csv.as_bytes(), &ClinicalSchema::site_a()).unwrap();
    let all: Vec<usize> = (0..table.n_rows()).collect();
    let imputed = table.impute_means(&all).unwrap();
    let ft = table.to_feature_table().unwrap();
    let c = ft.column_index("SpO2").unwrap();
    let via_table = impute_column_means(&ft, &all).unwrap();
    let exact = !missing.is_empty()
        && missing.iter().all(|&r| {
            imputed.get(r, ClinicalColumn::Spo2).map(f64::to_bits) == Some(want.to_bits())
                && via_table.get(r, c).to_bits() == want.to_bits()
        });
    outcome(vec![
        (want == 91.9, format!("engineered mean {want}")),
        (exact, format!("{} missing cells bit-exact", missing.len())),
    ])
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("feature-bank cardinality", cardinality),
        ("texture oracle equivalence", texture_oracle),
        ("HLQ exactness", hlq_exactness),
        ("filter checks", filter_checks),
        ("AUC oracle", auc_oracle),
        ("ranking recovery", ranking_recovery),
        ("end-to-end protocol", end_to_end),
        ("statistics", statistics),
        ("imputation", imputation),
    ];
    let mut failed = Vec::new();
    std::io::stderr().write_all(b"\n").unwrap();
    for (name, run) in criteria {
        let o = run();
        // written past the test harness capture so the report shows in plain `cargo test`
        let line = format!("{}: {name}: {}\n", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        if !o.pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
