use std::collections::HashSet;

use proptest::prelude::*;
use tsgf::datasets::*;
use tsgf::distiller::*;
use tsgf::eval::*;
use tsgf::models::*;
use tsgf::Error;

fn splits() -> Splits {
    generate_toy_dataset(&ToySpec { train_per_class: 4, val_per_class: 1, test_per_class: 2, ..ToySpec::compact() }).unwrap()
}

fn teacher(s: &Splits) -> Model {
    let input = InputSpec { frames: 8, channels: 1, height: 16, width: 16, classes: s.classes() };
    Model::new(Architecture::with_widths(ArchKind::MiniC3D, input, &[4, 8, 8]).unwrap(), 5).unwrap()
}

fn tiny_eval() -> EvalConfig {
    EvalConfig { widths: vec![4, 8, 8], epochs: 2, seeds: vec![0, 1], ..Default::default() }
}

#[test]
fn random_selection_copies_real_videos_verbatim() {
    let s = splits();
    let ds = baseline_random_select(&s.train, &s.class_names, 3, 7).unwrap();
    assert_eq!(ds.len(), 3 * s.classes());
    let mut used = HashSet::new();
    for sample in &ds.samples {
        let src = sample.source_id.as_deref().unwrap();
        assert!(used.insert(src.to_string()), "{src} picked twice");
        let real = s.train.iter().find(|r| r.id == src).unwrap();
        assert_eq!(real.video, sample.video);
        assert_eq!(real.label.class(), sample.class);
        assert!(sample.soft_label.is_none());
    }
    for c in 0..s.classes() {
        assert_eq!(ds.samples.iter().filter(|x| x.class == c).count(), 3);
    }
    assert!(baseline_random_select(&s.train, &s.class_names, 5, 7).is_err(), "only 4 per class available");
}

#[test]
fn random_selection_varies_with_seed() {
    let s = splits();
    let picks: HashSet<Vec<Option<String>>> = (0..10)
        .map(|seed| baseline_random_select(&s.train, &s.class_names, 1, seed).unwrap().samples.into_iter().map(|x| x.source_id).collect())
        .collect();
    assert!(picks.len() >= 9);
}

#[test]
fn reports_recompute_from_per_seed_values() {
    let s = splits();
    let ds = baseline_random_select(&s.train, &s.class_names, 1, 0).unwrap();
    let run = train_student("r", &ds, &s.test, &tiny_eval(), None).unwrap();
    let r = &run.report;
    assert_eq!(r.per_seed.len(), 2);
    let (m, sd) = mean_std(&r.per_seed);
    assert_eq!((r.mean, r.std), (m, sd));
    assert!(r.per_seed.iter().all(|a| (0.0..=1.0).contains(a)));
    assert_eq!(r.data_hash, ds.content_hash());
    assert_eq!(r.csv_row().split(',').count(), EvalReport::CSV_HEADER.split(',').count());
    assert_eq!(run.curves.iter().map(Vec::len).collect::<Vec<_>>(), [2, 2]);
}

#[test]
fn student_training_is_deterministic() {
    let s = splits();
    let t = teacher(&s);
    let ds = baseline_random_select(&s.train, &s.class_names, 2, 0).unwrap();
    for augment in [StudentAugment::None, StudentAugment::Gated, StudentAugment::FrameIndependent] {
        let cfg = EvalConfig { augment, ..tiny_eval() };
        let a = train_student("d", &ds, &s.test, &cfg, Some(&t)).unwrap();
        let b = train_student("d", &ds, &s.test, &cfg, Some(&t)).unwrap();
        assert_eq!(a.report, b.report, "{augment:?}");
        assert_eq!(a.models, b.models);
    }
}

#[test]
fn test_videos_cannot_seed_the_training_set() {
    let s = splits();
    let mut ds = baseline_random_select(&s.train, &s.class_names, 1, 0).unwrap();
    ds.samples[2].source_id = Some(s.test[0].id.clone());
    let err = train_student("leak", &ds, &s.test, &tiny_eval(), None).unwrap_err();
    assert!(err.to_string().contains(&s.test[0].id), "{err}");
}

#[test]
fn bad_evaluation_configs_are_rejected() {
    let s = splits();
    let ds = baseline_random_select(&s.train, &s.class_names, 1, 0).unwrap();
    let no_seeds = EvalConfig { seeds: vec![], ..tiny_eval() };
    assert!(matches!(train_student("x", &ds, &s.test, &no_seeds, None), Err(Error::Config(_))));
    let bad_widths = EvalConfig { widths: vec![], ..tiny_eval() };
    assert!(train_student("x", &ds, &s.test, &bad_widths, None).is_err());
}

#[test]
fn components_suite_has_the_four_rows() {
    let s = splits();
    let t = teacher(&s);
    let ctx = AblationContext {
        splits: &s,
        teacher: &t,
        teacher_cfg: TeacherTrainConfig { epochs: 1, ..Default::default() },
        teacher_widths: vec![4, 8, 8],
        distill: DistillConfig { iterations: 2, ipc: 1, ..Default::default() },
        eval: EvalConfig { seeds: vec![0], ..tiny_eval() },
        ipcs: vec![1],
        frames: vec![2],
    };
    let table = run_ablation(AblationSuite::Components, &ctx).unwrap();
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["baseline", "+tsgf_a", "+tsgf_o", "+tsgf_o+tsgf_a"]);
    assert_eq!(table.to_csv().lines().count(), 5);
    // Same init seed, so the component toggles are the only difference.
    let hashes: HashSet<&str> = table.rows.iter().map(|r| r.report.data_hash.as_str()).collect();
    assert_eq!(hashes.len(), 4);
}

#[test]
fn static_dynamic_split_separates_moving_classes() {
    let s = generate_toy_dataset(&ToySpec { noise: 0.0, train_per_class: 3, val_per_class: 1, test_per_class: 1, ..ToySpec::compact() }).unwrap();
    let split = StaticDynamicSplit::compute(&s);
    let mut all: Vec<usize> = split.static_classes.iter().chain(&split.dynamic_classes).copied().collect();
    all.sort();
    assert_eq!(all, (0..s.classes()).collect::<Vec<_>>());
    for &c in &split.dynamic_classes {
        assert!(split.energies[c] > split.threshold);
        assert!(split.static_classes.iter().all(|&k| split.energies[k] <= split.energies[c]));
    }
    // The noiseless static shapes never move.
    for c in 4..8 {
        assert!(split.static_classes.contains(&c));
        assert_eq!(split.energies[c], 0.0);
    }
}

proptest! {
    #[test]
    fn population_std_matches_definition(values in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let (m, s) = mean_std(&values);
        let n = values.len() as f64;
        prop_assert!((m * n - values.iter().sum::<f64>()).abs() < 1e-12);
        let var = values.iter().map(|v| v * v).sum::<f64>() / n - m * m;
        prop_assert!((s * s - var).abs() < 1e-9);
        prop_assert!(s >= 0.0);
    }
}
