use std::sync::Arc;

use pointclimb::data::{generate_synthetic_classes, Dataset, TaskDataProvider, TaskDataset};
use pointclimb::harness::{evaluate_union, predict, AccuracyMatrix};
use pointclimb::losses::LossKind;
use pointclimb::sampler::{fixed_scenario, Scenario};
use pointclimb::trainer::{advance_task, train_base, train_joint, RunState, TrainConfig};
use pointclimb::BackboneKind;

fn small(loss: LossKind, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::desk(BackboneKind::PointnetLite, loss);
    cfg.epochs = 3;
    cfg.n_points = 32;
    cfg.batch_size = 8;
    cfg.seed = seed;
    cfg
}

fn dataset() -> Arc<Dataset> {
    Arc::new(generate_synthetic_classes(8, 10, 48, 5).unwrap())
}

/// Trains every task in order, evaluating the union after each.
fn run(provider: &TaskDataProvider, cfg: &TrainConfig) -> (RunState, AccuracyMatrix) {
    let mut rows = Vec::new();
    let mut state: Option<RunState> = None;
    for t in 0..provider.num_tasks() {
        let task = provider.task(t).unwrap();
        let next = match state {
            None => train_base(&task, cfg).unwrap(),
            Some(s) => advance_task(s, &task, cfg).unwrap(),
        };
        rows.push(
            evaluate_union(
                &next.student,
                &provider.pooled(t).unwrap(),
                cfg.n_points,
                cfg.batch_size,
            )
            .unwrap(),
        );
        state = Some(next);
    }
    (state.unwrap(), AccuracyMatrix { rows })
}

fn train_accuracy(model: &pointclimb::ModelState, data: &TaskDataset, n: usize) -> f64 {
    let clouds: Vec<_> = (0..data.train_len())
        .map(|i| data.train(i).eval_points(n).unwrap())
        .collect();
    let truth: Vec<usize> = (0..data.train_len()).map(|i| data.train(i).global_class).collect();
    let pred = predict(model, &clouds, 32).unwrap();
    pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

pub fn full_runs_are_bit_reproducible() {
    let data = dataset();
    let scenario = fixed_scenario(&[2, 2, 2, 2], 8, 3).unwrap();
    for loss in [LossKind::Ft, LossKind::Lwf, LossKind::Census] {
        let a = run(
            &TaskDataProvider::new(Arc::clone(&data), scenario.clone()).unwrap(),
            &small(loss, 1),
        );
        let b = run(
            &TaskDataProvider::new(Arc::clone(&data), scenario.clone()).unwrap(),
            &small(loss, 1),
        );
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.student, b.0.student);
        assert_eq!(a.0.records, b.0.records);
    }
}

pub fn lwf_and_census_coincide_when_lambda_is_eta_times_t() {
    let data = dataset();
    let scenario = fixed_scenario(&[3, 2], 8, 4).unwrap();
    let census = small(LossKind::Census, 2);
    let mut lwf = small(LossKind::Lwf, 2);
    lwf.loss.lambda_lwf = 2.0; // η = 2 classes, T = 1 elapsed task
    let a = run(
        &TaskDataProvider::new(Arc::clone(&data), scenario.clone()).unwrap(),
        &census,
    );
    let b = run(&TaskDataProvider::new(Arc::clone(&data), scenario).unwrap(), &lwf);
    assert_eq!(a.0.records[1].census_weight, Some(2.0));
    assert_eq!(a.0.student.checksum(), b.0.student.checksum());
    assert_eq!(a.1, b.1);
}

pub fn incremental_training_never_reads_earlier_tasks() {
    let data = dataset();
    let scenario = fixed_scenario(&[2, 2, 2, 2], 8, 5).unwrap();
    for loss in [LossKind::Ft, LossKind::Lwf, LossKind::Census] {
        let provider = TaskDataProvider::new(Arc::clone(&data), scenario.clone()).unwrap();
        let cfg = small(loss, 0);
        let mut state = train_base(&provider.task(0).unwrap(), &cfg).unwrap();
        for t in 1..4 {
            let before = provider.train_reads();
            state = advance_task(state, &provider.task(t).unwrap(), &cfg).unwrap();
            let after = provider.train_reads();
            for j in 0..4 {
                if j == t {
                    assert!(after[j] > before[j]);
                } else {
                    assert_eq!(after[j], before[j], "{loss}: task {t} read task {j}");
                }
            }
        }
    }
}

pub fn zero_epochs_student_copies_teacher_on_old_classes() {
    let data = dataset();
    let scenario = fixed_scenario(&[3, 3], 8, 6).unwrap();
    let provider = TaskDataProvider::new(Arc::clone(&data), scenario).unwrap();
    let mut cfg = small(LossKind::Census, 3);
    let base = train_base(&provider.task(0).unwrap(), &cfg).unwrap();
    cfg.epochs = 0;
    let next = advance_task(base, &provider.task(1).unwrap(), &cfg).unwrap();
    let teacher = next.teacher.as_ref().unwrap();
    let pooled = provider.pooled(1).unwrap();
    let clouds: Vec<_> = (0..pooled.test_len())
        .map(|i| pooled.test(i).eval_points(32).unwrap())
        .collect();
    let t = teacher.logits(&clouds).unwrap();
    let s = next.student.logits(&clouds).unwrap();
    for (tr, sr) in t.iter().zip(&s) {
        assert_eq!(tr[..], sr[..3]);
    }
    assert_eq!(next.student.head.class_slots, next.mapper.classes());
}

pub fn base_training_lowers_the_loss() {
    let data = dataset();
    let provider = TaskDataProvider::new(data, fixed_scenario(&[4], 8, 0).unwrap()).unwrap();
    let state = train_base(&provider.task(0).unwrap(), &small(LossKind::Ft, 0)).unwrap();
    let losses = &state.records[0].epoch_losses;
    assert!(losses.last().unwrap() < losses.first().unwrap(), "{losses:?}");
}

pub fn two_separable_classes_are_fit_to_ninety_nine_percent() {
    // Sphere against plane.
    let data = Arc::new(generate_synthetic_classes(10, 30, 128, 8).unwrap());
    let scenario = Scenario {
        seed: 0,
        sizes: vec![2],
        tasks: vec![vec![0, 5]],
    };
    let provider = TaskDataProvider::new(data, scenario).unwrap();
    let mut cfg = TrainConfig::desk(BackboneKind::PointnetLite, LossKind::Ft);
    cfg.epochs = 40;
    let task = provider.task(0).unwrap();
    let state = train_base(&task, &cfg).unwrap();
    let acc = train_accuracy(&state.student, &task, cfg.n_points);
    assert!(acc >= 0.99, "train accuracy {acc}");
}

pub fn joint_on_four_pooled_classes_reaches_ninety_percent() {
    let data = Arc::new(generate_synthetic_classes(10, 50, 256, 9).unwrap());
    let provider = TaskDataProvider::new(data, fixed_scenario(&[2, 2], 10, 1).unwrap()).unwrap();
    let cfg = TrainConfig::desk(BackboneKind::PointnetLite, LossKind::Joint);
    let pooled = provider.pooled(1).unwrap();
    let model = train_joint(&pooled, &cfg).unwrap();
    let row = evaluate_union(&model, &pooled, cfg.n_points, cfg.batch_size).unwrap();
    assert!(row.union >= 0.90, "joint accuracy {}", row.union);
}
