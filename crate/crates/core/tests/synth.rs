use radlung_core::eval::{run_experiment, ExperimentConfig};
use radlung_core::forest::ForestParams;
use radlung_core::hlq::{extract_hlq, hlq_feature_names};
use radlung_core::synth::{synth_cohort, LabelRule, SynthSpec};
use radlung_core::{FeatureGroup, FeatureTable};

fn hlq_table(spec: &SynthSpec) -> FeatureTable {
    let c = synth_cohort(spec).unwrap();
    let mut t = FeatureTable::new(hlq_feature_names(), vec![FeatureGroup::Hlq; 64]).unwrap();
    for (s, &y) in c.subjects.iter().zip(&c.labels) {
        let f = extract_hlq(&s.volume, &s.lobe_mask, &s.opacity_mask).unwrap();
        t.push_row(s.id.clone(), &f.values, y).unwrap();
    }
    t
}

#[test]
fn zero_effect_gives_chance_auc() {
    let spec = SynthSpec {
        n_subjects: 100,
        dims: [20, 20, 12],
        label_rule: LabelRule { intercept: 0.0, effects: Vec::new() },
        seed: 21,
        ..SynthSpec::default()
    };
    let t = hlq_table(&spec);
    let cfg = ExperimentConfig {
        feature_groups: vec![FeatureGroup::Hlq],
        ranking_runs: 5,
        k_max: 10,
        forest: ForestParams { n_trees: 50, ..ForestParams::default() },
        ..ExperimentConfig::default()
    };
    let auc = run_experiment(&t, &cfg).unwrap().auc.mean;
    assert!((0.35..=0.65).contains(&auc), "{auc}");
}

#[test]
fn fixed_seed_is_byte_identical() {
    let spec = SynthSpec { n_subjects: 6, dims: [16, 16, 10], seed: 3, ..SynthSpec::default() };
    let a = synth_cohort(&spec).unwrap();
    let b = synth_cohort(&spec).unwrap();
    assert_eq!(a.clinical_csv, b.clinical_csv);
    for (x, y) in a.subjects.iter().zip(&b.subjects) {
        assert_eq!(x.volume.values(), y.volume.values());
        assert_eq!(x.lobe_mask.labels(), y.lobe_mask.labels());
        assert_eq!(x.opacity_mask.labels(), y.opacity_mask.labels());
    }
    assert_eq!(hlq_table(&spec), hlq_table(&spec));
}
