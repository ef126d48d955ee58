use pointclimb::losses::{census_loss, class_loss, distill_loss, lwf_loss, CensusContext, DistillConfig, LossKind};
use pointclimb::tensor::{softmax_with_temperature, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Batch {
    teacher: Vec<f64>,
    student: Vec<f64>,
    labels: Vec<usize>,
    n: usize,
    old: usize,
    m: usize,
}

fn batch(rng: &mut ChaCha8Rng) -> Batch {
    let n = rng.random_range(1..8);
    let old = rng.random_range(1..6);
    let m = old + rng.random_range(1..5);
    Batch {
        teacher: (0..n * old).map(|_| rng.random_range(-5.0..5.0)).collect(),
        student: (0..n * m).map(|_| rng.random_range(-5.0..5.0)).collect(),
        labels: (0..n).map(|_| rng.random_range(0..m)).collect(),
        n,
        old,
        m,
    }
}

fn vars(tape: &mut Tape, b: &Batch) -> (Var, Var) {
    let t = tape.constant(&Tensor::matrix(b.n, b.old, b.teacher.clone()).unwrap());
    let s = tape.leaf(&Tensor::matrix(b.n, b.m, b.student.clone()).unwrap().with_grad());
    (t, s)
}

fn value(f: impl FnOnce(&mut Tape, Var, Var) -> Var, b: &Batch) -> f64 {
    let mut tape = Tape::new();
    let (t, s) = vars(&mut tape, b);
    let out = f(&mut tape, t, s);
    tape.value(out)[0]
}

fn teacher_entropy(b: &Batch, tau: f64) -> f64 {
    let total: f64 = b
        .teacher
        .chunks(b.old)
        .map(|row| {
            softmax_with_temperature(row, tau)
                .unwrap()
                .iter()
                .map(|p| if *p > 0.0 { -p * p.ln() } else { 0.0 })
                .sum::<f64>()
        })
        .sum();
    total / b.n as f64
}

pub fn gibbs_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let b = batch(&mut rng);
        let tau = rng.random_range(0.5..5.0);
        let h = teacher_entropy(&b, tau);
        let d = value(|tape, t, s| distill_loss(tape, t, s, tau).unwrap(), &b);
        assert!(d - h >= -1e-12, "cross-entropy {d} below entropy {h}");

        // Student old slice equal to the teacher: the bound is met.
        let mut equal = b;
        for r in 0..equal.n {
            let src = equal.teacher[r * equal.old..(r + 1) * equal.old].to_vec();
            equal.student[r * equal.m..r * equal.m + equal.old].copy_from_slice(&src);
        }
        let d_eq = value(|tape, t, s| distill_loss(tape, t, s, tau).unwrap(), &equal);
        assert!((d_eq - h).abs() < 1e-12, "{d_eq} vs {h}");
    }
}

pub fn large_temperature_gives_log_old_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let b = batch(&mut rng);
        let d = value(|tape, t, s| distill_loss(tape, t, s, 1e6).unwrap(), &b);
        assert!((d - (b.old as f64).ln()).abs() < 1e-3, "{d} vs ln {}", b.old);
    }
}

pub fn lwf_and_census_recompose_from_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sizes = [20, 5, 5, 5, 5];
    for trial in 0..200 {
        let b = batch(&mut rng);
        let mut cfg = DistillConfig::new(LossKind::Lwf);
        cfg.tau = rng.random_range(0.5..4.0);
        let class = value(|tape, _, s| class_loss(tape, s, &b.labels).unwrap(), &b);
        let distill = value(|tape, t, s| distill_loss(tape, t, s, cfg.tau).unwrap(), &b);

        cfg.lambda_lwf = 0.0;
        let lwf0 = value(|tape, t, s| lwf_loss(tape, t, s, &b.labels, &cfg).unwrap(), &b);
        assert_eq!(lwf0, class);

        cfg.lambda_lwf = 1.0;
        let lwf1 = value(|tape, t, s| lwf_loss(tape, t, s, &b.labels, &cfg).unwrap(), &b);
        assert!((lwf1 - (class + distill)).abs() <= 1e-12);

        let ctx = CensusContext::for_task(&sizes, 1 + trial % 4, &cfg).unwrap();
        let census = value(|tape, t, s| census_loss(tape, t, s, &b.labels, &cfg, &ctx).unwrap(), &b);
        assert!((census - (class + ctx.weight() * distill)).abs() <= 1e-12 * census.max(1.0));

        cfg.lambda_lwf = ctx.weight();
        let lwf = value(|tape, t, s| lwf_loss(tape, t, s, &b.labels, &cfg).unwrap(), &b);
        assert!((census - lwf).abs() <= 1e-12, "census {census} lwf {lwf}");
    }
}

pub fn lwf_with_matching_teacher_and_perfect_labels_leaves_the_entropy() {
    // Old slice equals the teacher, the true class logit is far above the rest.
    let teacher = vec![0.3, -0.2, 0.1];
    let mut student = teacher.clone();
    student.push(1e4);
    let b = Batch {
        teacher,
        student,
        labels: vec![3],
        n: 1,
        old: 3,
        m: 4,
    };
    let cfg = DistillConfig::new(LossKind::Lwf);
    let lwf = value(|tape, t, s| lwf_loss(tape, t, s, &b.labels, &cfg).unwrap(), &b);
    assert!((lwf - teacher_entropy(&b, cfg.tau)).abs() < 1e-9);
}

pub fn census_weights_for_the_twenty_plus_four_fives_scenario() {
    let cfg = DistillConfig::new(LossKind::Census);
    let weights: Vec<f64> = (1..5)
        .map(|t| CensusContext::for_task(&[20, 5, 5, 5, 5], t, &cfg).unwrap().weight())
        .collect();
    assert_eq!(weights, vec![5.0, 10.0, 15.0, 20.0]);
}
