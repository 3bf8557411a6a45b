use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use radlung_core::clinical::ClinicalSchema;
use radlung_core::eval::ExperimentConfig;
use radlung_core::synth::SynthSpec;
use radlung_core::texture::TextureConfig;
use radlung_core::FeatureGroup;

use crate::output::sha256_hex;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Subject manifest; defaults to the one written by `synth`.
    pub manifest: Option<PathBuf>,
    pub clinical: Option<ClinicalSource>,
    pub output_dir: PathBuf,
    /// Added to every component seed.
    pub seed: u64,
    pub texture: TextureConfig,
    /// Groups used by `rank` and as the full combination in `eval`.
    pub feature_groups: Vec<String>,
    /// Group combinations compared by `eval`; every non-empty subset of
    /// `feature_groups` when absent.
    pub combinations: Option<Vec<Vec<String>>>,
    pub eval: ExperimentConfig,
    pub synth: SynthSpec,
    pub transfer: Vec<TransferSite>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            clinical: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            texture: TextureConfig::default(),
            feature_groups: vec!["HLQ".into(), "WLR".into(), "DVB".into()],
            combinations: None,
            eval: ExperimentConfig::default(),
            synth: SynthSpec::default(),
            transfer: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicalSource {
    pub path: PathBuf,
    /// `site_a`, `site_b`, `site_c` or a path to a JSON schema.
    #[serde(default = "default_schema")]
    pub schema: String,
}

fn default_schema() -> String {
    "site_a".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSite {
    pub name: String,
    /// A feature table written by `extract`.
    pub features: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject: String,
    pub volume: PathBuf,
    pub lobe_mask: PathBuf,
    pub opacity_mask: PathBuf,
    /// Row id in the clinical file, when it differs from `subject`.
    #[serde(default)]
    pub clinical_id: Option<String>,
}

impl ManifestEntry {
    pub fn clinical_key(&self) -> &str {
        self.clinical_id.as_deref().unwrap_or(&self.subject)
    }
}

pub fn parse_groups(names: &[String]) -> Result<Vec<FeatureGroup>, CliError> {
    let mut out = Vec::with_capacity(names.len());
    for n in names {
        let g = FeatureGroup::parse(n).ok_or_else(|| {
            CliError::Validation(format!("unknown feature group {n:?} (expected HLQ, WLR or DVB)"))
        })?;
        if !out.contains(&g) {
            out.push(g);
        }
    }
    if out.is_empty() {
        return Err(CliError::Validation("no feature group selected".into()));
    }
    Ok(out)
}

/// A loaded configuration with relative paths resolved against the config
/// file's directory and the global seed folded into the component seeds.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub groups: Vec<FeatureGroup>,
    pub combinations: Vec<Vec<FeatureGroup>>,
    pub paper_faithful: bool,
    pub hash: String,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Resolved {
    pub fn load(path: Option<&Path>, seed: Option<u64>, paper_faithful: bool) -> Result<Self, CliError> {
        let (mut config, base) = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
                let c: PipelineConfig = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?;
                (c, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (PipelineConfig::default(), PathBuf::new()),
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        config.output_dir = resolve(&base, &config.output_dir);
        config.manifest = config.manifest.as_deref().map(|m| resolve(&base, m));
        if let Some(c) = &mut config.clinical {
            c.path = resolve(&base, &c.path);
            if !matches!(c.schema.as_str(), "site_a" | "site_b" | "site_c") {
                c.schema = resolve(&base, Path::new(&c.schema)).display().to_string();
            }
        }
        for t in &mut config.transfer {
            t.features = resolve(&base, &t.features);
        }

        let groups = parse_groups(&config.feature_groups)?;
        let combinations = match &config.combinations {
            Some(list) => list.iter().map(|c| parse_groups(c)).collect::<Result<Vec<_>, _>>()?,
            None => all_subsets(&groups),
        };
        let s = config.seed;
        config.eval.fold_seed = config.eval.fold_seed.wrapping_add(s);
        config.eval.ranking_seed = config.eval.ranking_seed.wrapping_add(s);
        config.eval.model_seed = config.eval.model_seed.wrapping_add(s);
        config.synth.seed = config.synth.seed.wrapping_add(s);
        config.eval.feature_groups = groups.clone();
        config
            .eval
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        config
            .synth
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        // the output location is not part of the experiment
        let hashed = PipelineConfig {
            output_dir: PathBuf::new(),
            ..config.clone()
        };
        let payload = serde_json::json!({ "config": hashed, "paper_faithful": paper_faithful });
        let hash = sha256_hex(payload.to_string().as_bytes());
        Ok(Self {
            config,
            groups,
            combinations,
            paper_faithful,
            hash: hash[..16].to_string(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.config
            .manifest
            .clone()
            .unwrap_or_else(|| self.out("synth").join("manifest.json"))
    }

    pub fn clinical_source(&self) -> ClinicalSource {
        self.config.clinical.clone().unwrap_or_else(|| ClinicalSource {
            path: self.out("synth").join("clinical.csv"),
            schema: default_schema(),
        })
    }

    /// Lines embedded at the top of every output file.
    pub fn metadata(&self) -> Vec<String> {
        vec![format!("config_hash: {}", self.hash), format!("seed: {}", self.seed())]
    }
}

impl ClinicalSource {
    pub fn load_schema(&self) -> Result<ClinicalSchema, CliError> {
        Ok(match self.schema.as_str() {
            "site_a" => ClinicalSchema::site_a(),
            "site_b" => ClinicalSchema::site_b(),
            "site_c" => ClinicalSchema::site_c(),
            path => ClinicalSchema::from_json_file(path)
                .map_err(|e| CliError::Validation(format!("clinical schema {path}: {e}")))?,
        })
    }
}

/// Non-empty subsets, smaller first, each in `groups` order.
fn all_subsets(groups: &[FeatureGroup]) -> Vec<Vec<FeatureGroup>> {
    let n = groups.len();
    let mut subsets: Vec<Vec<FeatureGroup>> = (1..1u32 << n)
        .map(|m| (0..n).filter(|&i| m & (1 << i) != 0).map(|i| groups[i]).collect())
        .collect();
    subsets.sort_by_key(|s| s.len());
    subsets
}
