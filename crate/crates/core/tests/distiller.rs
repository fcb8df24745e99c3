mod common;

use common::{FD_STEP, FD_TOL};
use tsgf::datasets::*;
use tsgf::distiller::*;
use tsgf::models::checkpoint::to_bytes;
use tsgf::models::*;
use tsgf::{video, Error, Tensor};

fn splits() -> Splits {
    generate_toy_dataset(&ToySpec { train_per_class: 3, val_per_class: 1, test_per_class: 1, ..ToySpec::compact() }).unwrap()
}

fn teacher(s: &Splits) -> Model {
    let input = InputSpec { frames: 8, channels: 1, height: 16, width: 16, classes: s.classes() };
    Model::new(Architecture::with_widths(ArchKind::MiniC3D, input, &[4, 8, 8]).unwrap(), 5).unwrap()
}

fn quick(iterations: usize) -> DistillConfig {
    DistillConfig { iterations, ipc: 2, tsgf_a: false, recalibrate: false, ..Default::default() }
}

#[test]
fn uniform_teacher_costs_log_classes() {
    let s = splits();
    let mut t = teacher(&s);
    for name in ["fc.weight", "fc.bias"] {
        t.param_mut(name).unwrap().value.iter_mut().for_each(|v| *v = 0.0);
    }
    let x = video::stack(s.train.iter().take(3).map(|v| &v.video)).unwrap();
    let terms = distill_loss(&x, &[0, 1, 2], &t, 0.0, 1.0).unwrap();
    assert!((terms.ce - (s.classes() as f64).ln()).abs() < 1e-12);
    assert_eq!(terms.total.item(), terms.ce);
}

#[test]
fn loss_combines_terms_linearly() {
    let s = splits();
    let t = teacher(&s);
    let x = video::stack(s.train.iter().take(2).map(|v| &v.video)).unwrap();
    let terms = distill_loss(&x, &[0, 0], &t, 0.3, 2.0).unwrap();
    assert!((terms.total.item() - (2.0 * terms.ce + 0.3 * terms.reg)).abs() < 1e-12);
    assert!(terms.reg > 0.0);
    assert!(distill_loss(&x, &[0], &t, 0.3, 2.0).is_err());
    assert!(distill_loss(&x, &[0, 99], &t, 0.3, 2.0).is_err());
}

#[test]
fn pixel_gradient_matches_finite_differences() {
    let s = splits();
    let t = teacher(&s);
    let x0 = video::stack(s.train[3..5].iter().map(|v| &v.video)).unwrap();
    let f = |data: Vec<f64>| distill_loss(&Tensor::new(x0.shape().to_vec(), data).unwrap(), &[1, 1], &t, 0.5, 1.0).unwrap().total.item();
    let x = Tensor::param(x0.shape().to_vec(), x0.to_vec()).unwrap();
    distill_loss(&x, &[1, 1], &t, 0.5, 1.0).unwrap().total.backward().unwrap();
    let g = x.grad().unwrap();
    let mut worst = 0.0f64;
    for i in (0..x0.len()).step_by(97) {
        let (mut p, mut m) = (x0.to_vec(), x0.to_vec());
        p[i] += FD_STEP;
        m[i] -= FD_STEP;
        let numeric = (f(p) - f(m)) / (2.0 * FD_STEP);
        worst = worst.max((g[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    assert!(worst < FD_TOL, "{worst}");
}

#[test]
fn masked_frames_never_move() {
    let s = splits();
    let t = teacher(&s);
    let cfg = DistillConfig { init: InitMethod::Noise, ..quick(4) };
    let mut zero_frames = 0;
    let mut obs = |v: &StepView<'_>| {
        for ((b, a), m) in v.before.iter().zip(v.after).zip(v.masks) {
            for (f, &w) in m.iter().enumerate() {
                assert!((0.0..=1.0).contains(&w));
                if w == 0.0 {
                    zero_frames += 1;
                    assert_eq!(b.frame(f), a.frame(f), "iteration {} frame {f}", v.iteration);
                }
            }
            assert!(a.in_unit_range());
        }
    };
    distill_from_train(&s.train, &s.class_names, &t, &cfg, Some(&mut obs)).unwrap();
    assert!(zero_frames > 0, "expected some gated frames on noise videos");
}

#[test]
fn zero_learning_rate_keeps_the_initialization() {
    let s = splits();
    let t = teacher(&s);
    let cfg = DistillConfig { lr: 0.0, ..quick(3) };
    let init = init_synthetic(cfg.init, &s.train, &s.class_names, cfg.ipc, 1).unwrap();
    let out = distill(init.clone(), &t, &cfg, None).unwrap();
    for (a, b) in init.samples.iter().zip(&out.dataset.samples) {
        assert_eq!(a.video, b.video);
    }
    assert_eq!(out.log.len(), 3);
}

#[test]
fn distillation_leaves_the_teacher_alone_and_is_deterministic() {
    let s = splits();
    let t = teacher(&s);
    let before = to_bytes(&t);
    let cfg = DistillConfig { tsgf_a: true, recalibrate: true, ..quick(3) };
    let a = distill_from_train(&s.train, &s.class_names, &t, &cfg, None).unwrap();
    let b = distill_from_train(&s.train, &s.class_names, &t, &cfg, None).unwrap();
    assert_eq!(to_bytes(&t), before);
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.log_csv(), b.log_csv());
    let c = distill_from_train(&s.train, &s.class_names, &t, &DistillConfig { seed: 1, ..cfg }, None).unwrap();
    assert_ne!(a.dataset, c.dataset);
}

#[test]
fn run_log_has_one_row_per_iteration() {
    let s = splits();
    let out = distill_from_train(&s.train, &s.class_names, &teacher(&s), &quick(5), None).unwrap();
    let csv = out.log_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], RUN_LOG_HEADER);
    assert_eq!(lines.len(), 6);
    assert!(out.log.iter().all(|r| r.ce.is_finite() && r.reg >= 0.0 && (0.0..=1.0).contains(&r.mean_mask)));
}

#[test]
fn invalid_configurations_are_rejected() {
    let s = splits();
    let t = teacher(&s);
    for cfg in [quick(0), DistillConfig { ipc: 0, ..quick(1) }, DistillConfig { lr: f64::NAN, ..quick(1) }, DistillConfig { r_bn: -1.0, ..quick(1) }] {
        assert!(matches!(distill_from_train(&s.train, &s.class_names, &t, &cfg, None), Err(Error::Config(_))));
    }
    // a teacher for a different clip length
    let other = Model::new(Architecture::standard(ArchKind::MiniC3D, InputSpec { frames: 4, ..t.input() }), 0).unwrap();
    assert!(distill_from_train(&s.train, &s.class_names, &other, &quick(1), None).is_err());
}

#[test]
fn recalibrated_labels_are_distributions_and_idempotent() {
    let s = splits();
    let t = teacher(&s);
    let init = init_synthetic(InitMethod::Real, &s.train, &s.class_names, 2, 3).unwrap();
    let once = recalibrate_labels(init, &t).unwrap();
    assert!(once.recalibrated);
    for sample in &once.samples {
        let p = sample.soft_label.as_ref().unwrap();
        assert_eq!(p.len(), s.classes());
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
    }
    let twice = recalibrate_labels(once.clone(), &t).unwrap();
    assert_eq!(once, twice);
}

#[test]
fn distilled_set_records_its_teacher() {
    let s = splits();
    let t = teacher(&s);
    let out = distill_from_train(&s.train, &s.class_names, &t, &quick(1), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("teacher.ckpt");
    checkpoint::save(&t, &ckpt).unwrap();
    save_distilled(&out.dataset, &dir.path().join("d")).unwrap();
    let (back, warning) = load_distilled_checked(&dir.path().join("d"), &ckpt).unwrap();
    assert!(warning.is_none(), "{warning:?}");
    assert_eq!(back.config, out.dataset.config);
    assert_eq!(back.teacher_hash, out.dataset.teacher_hash);
    for (a, b) in back.samples.iter().zip(&out.dataset.samples) {
        assert_eq!(a.video, b.video);
        assert_eq!(a.soft_label, b.soft_label);
        assert_eq!(a.profile, b.profile);
        assert_eq!(a, b);
    }
    assert_eq!(back, out.dataset);
}

#[test]
fn masks_follow_the_evolving_pixels() {
    let s = splits();
    let t = teacher(&s);
    let cfg = DistillConfig { init: InitMethod::Noise, lr: 2.0, ..quick(6) };
    let mut seen: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut obs = |v: &StepView<'_>| seen.push(v.masks.to_vec());
    distill_from_train(&s.train, &s.class_names, &t, &cfg, Some(&mut obs)).unwrap();
    assert_eq!(seen.len(), 6);
    assert_ne!(seen.first(), seen.last(), "masks never changed over the run");
}

#[test]
fn confident_real_inits_keep_their_class_after_recalibration() {
    let s = generate_toy_dataset(&ToySpec { train_per_class: 24, val_per_class: 1, test_per_class: 1, ..ToySpec::compact() }).unwrap();
    let input = InputSpec { frames: 8, channels: 1, height: 16, width: 16, classes: s.classes() };
    let arch = Architecture::with_widths(ArchKind::MiniC3D, input, &[8, 16, 32]).unwrap();
    let cfg = TeacherTrainConfig { epochs: 12, ..Default::default() };
    let t = train_teacher(&s.train, &[], arch, &cfg).unwrap().model;
    let init = init_synthetic(InitMethod::Real, &s.train, &s.class_names, 2, 3).unwrap();
    let x = video::stack(init.samples.iter().map(|v| &v.video)).unwrap();
    let probs = t.predict(&x).unwrap().softmax();
    let c = s.classes();
    let confident: Vec<bool> = init
        .samples
        .iter()
        .enumerate()
        .map(|(i, v)| probs.to_vec()[i * c + v.class] > 0.9)
        .collect();
    let n = confident.iter().filter(|&&b| b).count();
    assert!(n >= 4, "teacher is confident on only {n} inits");
    let out = distill(init, &t, &DistillConfig { recalibrate: true, ..quick(10) }, None).unwrap();
    for (v, _) in out.dataset.samples.iter().zip(&confident).filter(|(_, &b)| b) {
        let label = v.soft_label.as_ref().unwrap();
        let argmax = (0..c).max_by(|&a, &b| label[a].total_cmp(&label[b])).unwrap();
        assert_eq!(argmax, v.class, "{}", v.id);
    }
}
