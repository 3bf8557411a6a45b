use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use radlung_core::clinical::parse_clinical_csv;
use radlung_core::eval::{
    compare, impute_column_means, run_experiment, transfer_experiment, transfer_markdown, Comparison,
    EvalError, ExperimentConfig, SelectionMode, TransferResult,
};
use radlung_core::extract::{assemble_table, extract_image_features};
use radlung_core::forest::{aggregate_ranks, top_k_sweep, Dataset, ForestParams};
use radlung_core::synth::synth_cohort;
use radlung_core::volume::{load_mask, load_volume, mask_as_volume, write_nifti, NiftiDataType};
use radlung_core::{FeatureTable, FeatureVector, MaskSemantics};

use crate::config::{ManifestEntry, Resolved};
use crate::output::{markdown_header, sha256_hex, temp_sibling, write_atomic};
use crate::CliError;

const FEATURES: &str = "features.csv";
const RANKING: &str = "ranking.csv";
const K_SWEEP: &str = "k_sweep.csv";
const EVAL_JSON: &str = "eval_report.json";
const EVAL_MD: &str = "eval_table.md";
const TRANSFER_JSON: &str = "transfer.json";
const TRANSFER_MD: &str = "transfer.md";

fn require(path: &Path, stage: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingStage {
            path: path.to_path_buf(),
            stage: stage.into(),
        })
    }
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::InvalidConfig(m) => CliError::Validation(m),
        other => CliError::Runtime(other.into()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn json_with_meta<T: Serialize>(r: &Resolved, key: &str, value: &T) -> String {
    let v = serde_json::json!({
        "config_hash": r.hash,
        "seed": r.seed(),
        key: value,
    });
    serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
}

fn read_table(path: &Path, stage: &str) -> Result<FeatureTable, CliError> {
    require(path, stage)?;
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FeatureTable::read_csv(f)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::Runtime)
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    require(path, "synth (or set `manifest` in the config)")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    // a bare list, or the object written by `synth` with its metadata
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Manifest {
        List(Vec<ManifestEntry>),
        Tagged { subjects: Vec<ManifestEntry> },
    }
    let mut entries = match serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("manifest {}: {e}", path.display())))?
    {
        Manifest::List(v) | Manifest::Tagged { subjects: v } => v,
    };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for e in &mut entries {
        for p in [&mut e.volume, &mut e.lobe_mask, &mut e.opacity_mask] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    for e in &entries {
        if !seen.insert(&e.subject) {
            return Err(CliError::Validation(format!("manifest lists subject {:?} twice", e.subject)));
        }
    }
    Ok(entries)
}

/// Key of a subject's cached features: input bytes plus extraction settings.
fn input_hash(e: &ManifestEntry, r: &Resolved) -> anyhow::Result<String> {
    let mut bytes = Vec::new();
    for p in [&e.volume, &e.lobe_mask, &e.opacity_mask] {
        let b = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        bytes.extend_from_slice(&(b.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&b);
    }
    bytes.extend_from_slice(serde_json::to_string(&r.config.texture)?.as_bytes());
    bytes.extend_from_slice(env!("CARGO_PKG_VERSION").as_bytes());
    Ok(sha256_hex(&bytes))
}

fn cached_features(path: &Path, hash: &str) -> Option<FeatureVector> {
    let text = fs::read_to_string(path).ok()?;
    let tag = format!("# input_hash: {hash}");
    if !text.lines().take_while(|l| l.starts_with('#')).any(|l| l == tag) {
        return None;
    }
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut fv = FeatureVector::default();
    for rec in rd.records() {
        let rec = rec.ok()?;
        fv.push(rec.get(0)?, rec.get(1)?.parse::<f64>().ok()?);
    }
    Some(fv)
}

fn features_csv(fv: &FeatureVector, meta: &[String]) -> String {
    let mut s: String = meta.iter().map(|m| format!("# {m}\n")).collect();
    s.push_str("name,value\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    for (n, v) in fv.names.iter().zip(&fv.values) {
        w.write_record([n.as_str(), &format!("{v:?}")]).expect("in-memory write");
    }
    s.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
    s
}

enum SubjectOutcome {
    Cached(FeatureVector),
    Computed(FeatureVector),
}

fn extract_one(e: &ManifestEntry, r: &Resolved) -> anyhow::Result<SubjectOutcome> {
    let hash = input_hash(e, r)?;
    let cache = r.out("features").join(format!("{}.csv", e.subject));
    if let Some(fv) = cached_features(&cache, &hash) {
        return Ok(SubjectOutcome::Cached(fv));
    }
    let volume = load_volume(&e.volume).with_context(|| format!("volume {}", e.volume.display()))?;
    let lobes = load_mask(&e.lobe_mask, MaskSemantics::LobeMap)
        .with_context(|| format!("lobe mask {}", e.lobe_mask.display()))?;
    let opacity = load_mask(&e.opacity_mask, MaskSemantics::BinaryOpacity)
        .with_context(|| format!("opacity mask {}", e.opacity_mask.display()))?;
    let fv = extract_image_features(&volume, &lobes, &opacity, &r.config.texture)?;
    let mut meta = r.metadata();
    meta.push(format!("input_hash: {hash}"));
    write_atomic(&cache, features_csv(&fv, &meta).as_bytes())?;
    Ok(SubjectOutcome::Computed(fv))
}

pub fn extract(r: &Resolved) -> Result<(), CliError> {
    let entries = read_manifest(&r.manifest_path())?;
    let source = r.clinical_source();
    require(&source.path, "synth (or set `clinical.path` in the config)")?;
    let schema = source.load_schema()?;
    let clinical = parse_clinical_csv(&source.path, &schema)
        .map_err(|e| CliError::Validation(format!("clinical file {}: {e}", source.path.display())))?
        .derive_lw_ratio();

    let outcomes: Vec<anyhow::Result<SubjectOutcome>> = entries.par_iter().map(|e| extract_one(e, r)).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut cached = 0;
    for (e, o) in entries.iter().zip(outcomes) {
        match o {
            Ok(SubjectOutcome::Cached(fv)) => {
                cached += 1;
                rows.push((e.clinical_key().to_string(), fv));
            }
            Ok(SubjectOutcome::Computed(fv)) => rows.push((e.clinical_key().to_string(), fv)),
            Err(err) => failures.push(format!("{}: {err:#}", e.subject)),
        }
    }
    info!(
        "extracted {} subjects ({} cached), {} failed",
        rows.len(),
        cached,
        failures.len()
    );

    let errors_path = r.out("extract_errors.txt");
    if failures.is_empty() {
        let _ = fs::remove_file(&errors_path);
    } else {
        let mut text: String = r.metadata().iter().map(|m| format!("# {m}\n")).collect();
        for f in &failures {
            warn!("{f}");
            text.push_str(f);
            text.push('\n');
        }
        write_text(&errors_path, &text)?;
    }
    if !rows.is_empty() {
        let table = assemble_table(&rows, &clinical).map_err(|e| CliError::Runtime(e.into()))?;
        let mut buf = Vec::new();
        table
            .write_csv(&mut buf, &r.metadata())
            .map_err(|e| CliError::Runtime(e.into()))?;
        write_atomic(&r.out(FEATURES), &buf).context("writing feature table")?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial {
            failed: failures.len(),
            total: entries.len(),
        })
    }
}

pub fn rank(r: &Resolved) -> Result<(), CliError> {
    let table = read_table(&r.out(FEATURES), "extract")?;
    let cols = table.columns_in_groups(&r.groups);
    if cols.is_empty() {
        return Err(CliError::Validation(format!(
            "{} has no columns in the selected feature groups",
            r.out(FEATURES).display()
        )));
    }
    let t = table.select_columns(&cols);
    let all: Vec<usize> = (0..t.n_rows()).collect();
    let t = impute_column_means(&t, &all).map_err(eval_error)?;
    let data = Dataset::from_table(&t).map_err(|e| CliError::Runtime(e.into()))?;
    let ev = &r.config.eval;
    let ranking = aggregate_ranks(&data, &t.labels, &ev.forest, ev.ranking_runs, ev.ranking_seed)
        .map_err(|e| CliError::Runtime(e.into()))?;
    let sweep = top_k_sweep(
        &data,
        &t.labels,
        &ranking,
        ev.k_max.min(data.n_cols),
        ev.n_folds,
        ev.fold_seed,
        &ForestParams {
            seed: ev.ranking_seed,
            ..ev.forest.clone()
        },
    )
    .map_err(|e| CliError::Runtime(e.into()))?;

    let mut buf = Vec::new();
    ranking.write_csv(&mut buf, &r.metadata()).context("ranking csv")?;
    write_atomic(&r.out(RANKING), &buf).context("writing ranking")?;
    let mut s: String = r.metadata().iter().map(|m| format!("# {m}\n")).collect();
    let _ = writeln!(s, "# best_k: {}", sweep.best_k);
    s.push_str("k,mean_auc\n");
    for (k, auc) in &sweep.curve {
        let _ = writeln!(s, "{k},{auc}");
    }
    write_text(&r.out(K_SWEEP), &s)?;
    info!("ranked {} features; best K = {}", data.n_cols, sweep.best_k);
    Ok(())
}

#[derive(Serialize)]
struct ModeReport {
    mode: SelectionMode,
    comparison: Comparison,
}

fn mode_title(m: SelectionMode) -> &'static str {
    match m {
        SelectionMode::Nested => "Nested selection",
        SelectionMode::PaperFaithful => "Paper-faithful selection",
    }
}

fn mode_slug(m: SelectionMode) -> &'static str {
    match m {
        SelectionMode::Nested => "nested",
        SelectionMode::PaperFaithful => "paper_faithful",
    }
}

pub fn eval(r: &Resolved) -> Result<(), CliError> {
    let table = read_table(&r.out(FEATURES), "extract")?;
    let mut modes = vec![SelectionMode::Nested];
    if r.paper_faithful {
        modes.push(SelectionMode::PaperFaithful);
    }
    let mut reports = Vec::new();
    let mut md = markdown_header(&r.metadata());
    for &mode in &modes {
        let mut rows = Vec::new();
        for combo in &r.combinations {
            let cfg = ExperimentConfig {
                feature_groups: combo.clone(),
                selection: mode,
                // one baseline row, on the widest combination
                logistic_baseline: r.config.eval.logistic_baseline && combo.len() == r.groups.len(),
                ..r.config.eval.clone()
            };
            info!("{}: {}", mode_slug(mode), cfg.label());
            rows.push(run_experiment(&table, &cfg).map_err(eval_error)?);
        }
        let comparison = compare(rows).map_err(eval_error)?;
        let _ = writeln!(md, "\n## {}\n", mode_title(mode));
        md.push_str(&comparison.to_markdown());
        for row in &comparison.rows {
            let mut buf = Vec::new();
            row.write_roc_csv(&mut buf, &r.metadata()).context("roc csv")?;
            let name = format!("roc_{}_{}.csv", mode_slug(mode), row.label.replace('+', "_"));
            write_atomic(&r.out(&name), &buf).context("writing roc curve")?;
        }
        reports.push(ModeReport { mode, comparison });
    }
    write_text(&r.out(EVAL_JSON), &json_with_meta(r, "modes", &reports))?;
    write_text(&r.out(EVAL_MD), &md)?;
    print!("{md}");
    Ok(())
}

pub fn transfer(r: &Resolved) -> Result<(), CliError> {
    let sites = &r.config.transfer;
    if sites.len() < 2 {
        return Err(CliError::Validation("`transfer` needs at least two sites in the config".into()));
    }
    let tables: Vec<FeatureTable> = sites
        .iter()
        .map(|s| read_table(&s.features, &format!("extract for site {}", s.name)))
        .collect::<Result<_, _>>()?;
    let cfg = ExperimentConfig {
        feature_groups: r.groups.clone(),
        ..r.config.eval.clone()
    };
    let mut cells = Vec::with_capacity(sites.len());
    for (i, train) in tables.iter().enumerate() {
        let mut row = Vec::with_capacity(sites.len());
        for (j, test) in tables.iter().enumerate() {
            info!("train {} / test {}", sites[i].name, sites[j].name);
            // the diagonal is the within-site cross-validated result
            let cell = if i == j {
                let rep = run_experiment(train, &cfg).map_err(eval_error)?;
                TransferResult {
                    auc: rep.auc.mean,
                    chosen_k: rep.chosen_k,
                    shared_features: rep.n_features,
                    selected: rep.selections[0].features.iter().map(|f| f.0.clone()).collect(),
                    logistic_auc: rep.logistic.map(|l| l.auc.mean),
                }
            } else {
                transfer_experiment(train, test, &cfg).map_err(eval_error)?
            };
            row.push(cell);
        }
        cells.push(row);
    }
    let names: Vec<String> = sites.iter().map(|s| s.name.clone()).collect();
    let md = markdown_header(&r.metadata()) + &transfer_markdown(&names, &cells);
    #[derive(Serialize)]
    struct Matrix<'a> {
        sites: &'a [String],
        cells: &'a [Vec<TransferResult>],
    }
    write_text(
        &r.out(TRANSFER_JSON),
        &json_with_meta(r, "transfer", &Matrix { sites: &names, cells: &cells }),
    )?;
    write_text(&r.out(TRANSFER_MD), &md)?;
    print!("{md}");
    Ok(())
}

fn write_nifti_atomic(path: &Path, vol: &radlung_core::VoxelVolume, dtype: NiftiDataType) -> anyhow::Result<()> {
    let tmp = temp_sibling(path)?;
    write_nifti(&tmp, vol, dtype)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn synth(r: &Resolved) -> Result<(), CliError> {
    let cohort = synth_cohort(&r.config.synth).map_err(|e| CliError::Validation(e.to_string()))?;
    let dir = r.out("synth");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let meta = r.metadata();

    cohort
        .subjects
        .par_iter()
        .map(|s| -> anyhow::Result<()> {
            write_nifti_atomic(&dir.join(format!("{}_ct.nii.gz", s.id)), &s.volume, NiftiDataType::F32)?;
            write_nifti_atomic(
                &dir.join(format!("{}_lobes.nii.gz", s.id)),
                &mask_as_volume(&s.lobe_mask),
                NiftiDataType::U8,
            )?;
            write_nifti_atomic(
                &dir.join(format!("{}_opacity.nii.gz", s.id)),
                &mask_as_volume(&s.opacity_mask),
                NiftiDataType::U8,
            )?;
            Ok(())
        })
        .collect::<anyhow::Result<()>>()?;

    let manifest: Vec<ManifestEntry> = cohort
        .subjects
        .iter()
        .map(|s| ManifestEntry {
            subject: s.id.clone(),
            volume: PathBuf::from(format!("{}_ct.nii.gz", s.id)),
            lobe_mask: PathBuf::from(format!("{}_lobes.nii.gz", s.id)),
            opacity_mask: PathBuf::from(format!("{}_opacity.nii.gz", s.id)),
            clinical_id: None,
        })
        .collect();
    write_text(&dir.join("manifest.json"), &json_with_meta(r, "subjects", &manifest))?;
    let clinical: String = meta.iter().map(|m| format!("# {m}\n")).collect::<String>() + &cohort.clinical_csv;
    write_text(&dir.join("clinical.csv"), &clinical)?;

    let mut truth = FeatureTable::new(
        cohort.subjects[0].hlq_truth.names.clone(),
        vec![radlung_core::FeatureGroup::Hlq; cohort.subjects[0].hlq_truth.len()],
    )
    .map_err(|e| CliError::Runtime(e.into()))?;
    for (s, &y) in cohort.subjects.iter().zip(&cohort.labels) {
        truth
            .push_row(s.id.clone(), &s.hlq_truth.values, y)
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    let mut buf = Vec::new();
    truth
        .write_csv(&mut buf, &meta)
        .map_err(|e| CliError::Runtime(e.into()))?;
    write_atomic(&dir.join("hlq_truth.csv"), &buf).context("writing hlq truth")?;

    #[derive(Serialize)]
    struct Truth<'a> {
        spec: &'a radlung_core::synth::SynthSpec,
        labels: &'a [u8],
        label_probability: &'a [f64],
        blobs: Vec<(&'a str, &'a [radlung_core::synth::Blob])>,
    }
    let truth = Truth {
        spec: &cohort.spec,
        labels: &cohort.labels,
        label_probability: &cohort.label_probability,
        blobs: cohort.subjects.iter().map(|s| (s.id.as_str(), s.blobs.as_slice())).collect(),
    };
    write_text(&dir.join("synth.json"), &json_with_meta(r, "cohort", &truth))?;
    info!("wrote {} subjects to {}", cohort.subjects.len(), dir.display());
    Ok(())
}

pub fn report(r: &Resolved) -> Result<(), CliError> {
    let eval_md = r.out(EVAL_MD);
    require(&eval_md, "eval")?;
    let mut md = markdown_header(&r.metadata());
    md.push_str("# ICU admission prediction report\n");
    let strip = |text: String| -> String {
        text.lines()
            .filter(|l| !l.starts_with("<!--"))
            .map(|l| format!("{l}\n"))
            .collect()
    };
    md.push_str(&strip(fs::read_to_string(&eval_md).context("reading eval table")?));
    let transfer_md = r.out(TRANSFER_MD);
    if transfer_md.exists() {
        md.push_str("\n## Cross-site transfer\n\n");
        md.push_str(&strip(fs::read_to_string(&transfer_md).context("reading transfer table")?));
    }
    let ranking = r.out(RANKING);
    if ranking.exists() {
        let text = fs::read_to_string(&ranking).context("reading ranking")?;
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        md.push_str("\n## Top ranked features\n\n| Rank | Feature | Mean importance |\n|---|---|---|\n");
        for rec in rd.records().take(20) {
            let rec = rec.context("ranking row")?;
            let _ = writeln!(md, "| {} | {} | {} |", &rec[0], &rec[1], &rec[3]);
        }
    }
    write_text(&r.out("report.md"), &md)?;
    print!("{md}");
    Ok(())
}
