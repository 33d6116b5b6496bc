//! End-to-end training runs at desk scale.

use infoplane_core::data::{make_synthetic_digits, make_zero_info, teacher_relabel};
use infoplane_core::student::{train_student, StudentConfig};
use infoplane_core::teacher::{train_teacher, TeacherConfig};

#[test]
fn teacher_gains_ten_nats_in_thirty_epochs() {
    let ds = make_synthetic_digits(50, 8, 0.2, 1).unwrap();
    let cfg = TeacherConfig {
        epochs: 30,
        ..TeacherConfig::default()
    };
    let a = train_teacher(&cfg, &ds.images, 3).unwrap();
    let last = *a.curve.last().unwrap();
    assert!(
        last - a.initial_elbo >= 10.0,
        "{} -> {}",
        a.initial_elbo,
        last
    );
    assert_eq!(a.curve.len(), 30);

    let b = train_teacher(&cfg, &ds.images, 3).unwrap();
    assert_eq!(a.model, b.model);
}

#[test]
fn student_learns_synthetic_digits() {
    let train = make_synthetic_digits(100, 8, 0.3, 1).unwrap();
    let eval = make_synthetic_digits(100, 8, 0.3, 2).unwrap();
    let cfg = StudentConfig {
        beta: 1e-3,
        epochs: 40,
        ..StudentConfig::default()
    };
    let mut epochs_seen = Vec::new();
    let out = train_student(&cfg, &train, Some(&eval), 5, |snap| {
        epochs_seen.push(snap.epoch);
        Ok(())
    })
    .unwrap();
    assert_eq!(epochs_seen, (1..=40).collect::<Vec<_>>());
    let last = out.history.last().unwrap().diagnostics;
    assert!(last.eval_accuracy >= 0.9, "{last:?}");
    assert!(out.model.accuracy(&eval).unwrap() >= 0.9);
    // Snapshots are frozen copies.
    assert_ne!(out.history[1].model.encoder(), out.model.encoder());
}

#[test]
fn student_on_teacher_relabeled_digits() {
    let base = make_synthetic_digits(100, 8, 0.3, 1).unwrap();
    let teacher = train_teacher(
        &TeacherConfig {
            epochs: 20,
            ..TeacherConfig::default()
        },
        &base.images,
        7,
    )
    .unwrap()
    .model;
    let train = teacher_relabel(&teacher, &base, 7).unwrap();
    let eval =
        teacher_relabel(&teacher, &make_synthetic_digits(50, 8, 0.3, 2).unwrap(), 7).unwrap();
    let cfg = StudentConfig {
        epochs: 20,
        ..StudentConfig::default()
    };
    let out = train_student(&cfg, &train, Some(&eval), 5, |_| Ok(())).unwrap();
    // Reconstructions blur some digits together, so the ceiling is below the clean-data one.
    assert!(out.history.last().unwrap().diagnostics.eval_accuracy >= 0.7);
}

#[test]
fn zero_info_student_stays_at_chance() {
    let base = make_synthetic_digits(100, 8, 0.3, 1).unwrap();
    let train = make_zero_info(&base, 11).unwrap();
    let eval = make_zero_info(&make_synthetic_digits(100, 8, 0.3, 2).unwrap(), 12).unwrap();
    let cfg = StudentConfig {
        beta: 1e-1,
        epochs: 30,
        ..StudentConfig::default()
    };
    let out = train_student(&cfg, &train, Some(&eval), 5, |_| Ok(())).unwrap();
    let acc = out.history.last().unwrap().diagnostics.eval_accuracy;
    assert!((acc - 0.1).abs() <= 0.03, "eval accuracy {acc}");
}

#[test]
fn unpenalized_mlp_fits_noisy_synthetic_digits() {
    let train = make_synthetic_digits(100, 8, 0.2, 1).unwrap();
    let cfg = StudentConfig {
        beta: 0.0,
        epochs: 50,
        ..StudentConfig::default()
    };
    let out = train_student(&cfg, &train, None, 2, |_| Ok(())).unwrap();
    let acc = out.history.last().unwrap().diagnostics.train_accuracy;
    assert!(acc >= 0.95, "train accuracy {acc}");
}

#[test]
fn trained_teacher_reconstructs_better_than_untrained() {
    let ds = make_synthetic_digits(30, 8, 0.2, 1).unwrap();
    let err = |epochs| {
        let t = train_teacher(
            &TeacherConfig {
                epochs,
                ..TeacherConfig::default()
            },
            &ds.images,
            4,
        )
        .unwrap();
        let r = teacher_relabel(&t.model, &ds, 4).unwrap();
        assert_eq!(r.labels, ds.labels);
        let diff = r.images.zip_map(&ds.images, |a, b| (a - b).abs()).unwrap();
        diff.mean()
    };
    assert!(err(10) < err(0));
}
