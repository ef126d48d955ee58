use std::sync::Arc;

use pointclimb::backbones::{
    edgeconv_lite_forward, expand_head, head_forward, knn, pointnet_lite_forward, ClassifierHead, FeatureExtractor,
    Layer,
};
use pointclimb::data::{generate_synthetic_classes, TaskDataProvider};
use pointclimb::losses::LossKind;
use pointclimb::sampler::fixed_scenario;
use pointclimb::tensor::Reduce;
use pointclimb::trainer::{advance_task, train_base, TrainConfig};
use pointclimb::{BackboneKind, ExtractorConfig, ModelState, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: u64 = 100;

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect()
}

fn as_tensor(points: &[[f64; 3]]) -> Tensor {
    Tensor::matrix(points.len(), 3, points.iter().flatten().copied().collect()).unwrap()
}

fn brute_force_knn(points: &[[f64; 3]], k: usize) -> Vec<Vec<usize>> {
    (0..points.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = (0..3).map(|a| (points[i][a] - points[j][a]).powi(2)).sum();
                    (d, j)
                })
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            others.iter().take(k).map(|&(_, j)| j).collect()
        })
        .collect()
}

pub fn knn_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..TRIALS {
        let n = rng.random_range(2..60);
        let k = rng.random_range(1..n);
        let mut pts = cloud(&mut rng, n);
        if trial % 2 == 0 {
            // A coarse grid forces many equal distances.
            for p in &mut pts {
                p.iter_mut().for_each(|c| *c = (*c * 2.0).round());
            }
        }
        assert_eq!(knn(&pts, k).unwrap(), brute_force_knn(&pts, k), "n={n} k={k}");
    }
}

pub fn knn_on_a_line_with_one_neighbour() {
    let xs = [0.0, 1.0, 3.0, 3.5, 10.0];
    let pts: Vec<[f64; 3]> = xs.iter().map(|&x| [x, 0.0, 0.0]).collect();
    let got: Vec<usize> = knn(&pts, 1).unwrap().into_iter().map(|v| v[0]).collect();
    assert_eq!(got, vec![1, 0, 3, 2, 3]);
}

fn hand_extractor(aggregation: Reduce) -> FeatureExtractor {
    FeatureExtractor {
        config: ExtractorConfig {
            kind: BackboneKind::PointnetLite,
            widths: vec![2],
            aggregation,
            k_neighbors: 8,
        },
        layers: vec![Layer {
            weight: Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, -1.0]).unwrap(),
            bias: Tensor::vector(vec![0.0, 0.5]).unwrap(),
        }],
        init_seed: 0,
    }
}

pub fn four_point_forward_by_hand() {
    // Per point relu(p·W + b):
    //   ( 1, 0, 0) -> [1, 0.5]
    //   ( 0, 2, 0) -> [0, 2.5]
    //   ( 0, 0, 1) -> [1, 0]      (pre-activation [1, -0.5])
    //   (-1,-1,-1) -> [0, 0.5]    (pre-activation [-2, 0.5])
    let pts = as_tensor(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0], [-1.0, -1.0, -1.0]]);
    for (agg, want) in [
        (Reduce::Max, [1.0, 2.5]),
        (Reduce::Mean, [0.5, 0.875]),
        (Reduce::Sum, [2.0, 3.5]),
    ] {
        let got = pointnet_lite_forward(&pts, &hand_extractor(agg)).unwrap();
        assert_eq!(got.data(), &want, "{agg}");
    }
}

pub fn coincident_edgeconv_points_see_zero_offsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let p = cloud(&mut rng, 1)[0];
        let mut config = ExtractorConfig::new(BackboneKind::EdgeconvLite).halved();
        config.aggregation = Reduce::Mean;
        config.k_neighbors = 3;
        let ext = FeatureExtractor::new(config, rng.random()).unwrap();
        let got = edgeconv_lite_forward(&as_tensor(&[p; 6]), &ext).unwrap();

        // MLP of the edge feature (x, 0) by hand.
        let mut h = vec![p[0], p[1], p[2], 0.0, 0.0, 0.0];
        for layer in &ext.layers {
            let out = layer.bias.shape()[0];
            h = (0..out)
                .map(|o| {
                    let z: f64 = h
                        .iter()
                        .enumerate()
                        .map(|(i, x)| x * layer.weight.at(&[i, o]))
                        .sum::<f64>()
                        + layer.bias.data()[o];
                    z.max(0.0)
                })
                .collect();
        }
        for (g, w) in got.data().iter().zip(&h) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}

pub fn permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let aggs = [Reduce::Max, Reduce::Mean, Reduce::Sum];
    for kind in [BackboneKind::PointnetLite, BackboneKind::EdgeconvLite] {
        let mut worst: f64 = 0.0;
        for trial in 0..TRIALS {
            let mut config = ExtractorConfig::new(kind).halved();
            config.aggregation = aggs[trial as usize % 3];
            let ext = FeatureExtractor::new(config, trial).unwrap();
            let n = rng.random_range(12..48);
            let pts = cloud(&mut rng, n);
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rng);
            let forward = match kind {
                BackboneKind::PointnetLite => pointnet_lite_forward,
                BackboneKind::EdgeconvLite => edgeconv_lite_forward,
            };
            let a = forward(&as_tensor(&pts), &ext).unwrap();
            let b = forward(&as_tensor(&shuffled), &ext).unwrap();
            assert_eq!(a.shape(), &[ext.config.feature_dim()]);
            let diff = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
        }
        assert!(worst <= 1e-9, "{kind}: {worst}");
    }
}

pub fn head_forward_matches_direct_matvec() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..TRIALS {
        let f = rng.random_range(1..20);
        let classes: Vec<usize> = (0..rng.random_range(1..12)).collect();
        let head = ClassifierHead::new(f, &classes, trial).unwrap();
        let feature: Vec<f64> = (0..f).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = head_forward(&Tensor::vector(feature.clone()).unwrap(), &head).unwrap();
        for (c, g) in got.data().iter().enumerate() {
            let want: f64 = (0..f).map(|i| head.weight.at(&[i, c]) * feature[i]).sum::<f64>() + head.bias.data()[c];
            assert!((g - want).abs() <= 1e-12, "{g} vs {want}");
        }
    }
    assert!(head_forward(
        &Tensor::vector(vec![1.0; 3]).unwrap(),
        &ClassifierHead::new(4, &[0], 0).unwrap()
    )
    .is_err());
}

pub fn expansion_preserves_old_logits_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..TRIALS {
        let f = rng.random_range(1..16);
        let old: Vec<usize> = (0..rng.random_range(1..20)).collect();
        let new: Vec<usize> = (100..100 + rng.random_range(0..8)).collect();
        let head = ClassifierHead::new(f, &old, trial).unwrap();
        let grown = expand_head(&head, &new, trial + 1).unwrap();
        assert_eq!(grown.num_classes(), old.len() + new.len());
        let feature = Tensor::vector((0..f).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let before = head_forward(&feature, &head).unwrap();
        let after = head_forward(&feature, &grown).unwrap();
        let bits = |s: &[f64]| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(before.data()), bits(&after.data()[..old.len()]));
    }
}

pub fn two_expansions_equal_one() {
    for seed in 0..TRIALS {
        let head = ClassifierHead::new(8, &(0..20).collect::<Vec<_>>(), seed).unwrap();
        let a = expand_head(&head, &[20, 21, 22, 23, 24], seed).unwrap();
        let a = expand_head(&a, &[25, 26, 27, 28, 29], seed).unwrap();
        let b = expand_head(&head, &(20..30).collect::<Vec<_>>(), seed).unwrap();
        assert_eq!(a, b);
    }
}

pub fn expansion_refuses_known_classes() {
    let head = ClassifierHead::new(4, &[3, 7], 0).unwrap();
    assert!(expand_head(&head, &[7, 9], 0).is_err());
    assert_eq!(expand_head(&head, &[], 5).unwrap(), head);
}

pub fn student_matches_teacher_on_old_classes_at_init() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..TRIALS {
        let kind = if trial % 2 == 0 {
            BackboneKind::PointnetLite
        } else {
            BackboneKind::EdgeconvLite
        };
        let old: Vec<usize> = (0..rng.random_range(1..6)).collect();
        let teacher = ModelState::new(ExtractorConfig::new(kind).halved(), &old, trial)
            .unwrap()
            .to_teacher();
        let student = ModelState::student_from(&teacher, &[10, 11, 12], trial).unwrap();
        let clouds: Vec<Vec<[f64; 3]>> = (0..3).map(|_| cloud(&mut rng, 16)).collect();
        let t = teacher.logits(&clouds).unwrap();
        let s = student.logits(&clouds).unwrap();
        for (tr, sr) in t.iter().zip(&s) {
            let bits = |r: &[f64]| r.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(tr), bits(&sr[..old.len()]));
        }
    }
}

pub fn teacher_is_untouched_by_incremental_training() {
    let data = Arc::new(generate_synthetic_classes(4, 5, 24, 9).unwrap());
    for trial in 0..TRIALS {
        let scenario = fixed_scenario(&[2, 2], 4, trial).unwrap();
        let provider = TaskDataProvider::new(Arc::clone(&data), scenario).unwrap();
        let kind = if trial % 2 == 0 {
            BackboneKind::PointnetLite
        } else {
            BackboneKind::EdgeconvLite
        };
        let loss = [LossKind::Ft, LossKind::Lwf, LossKind::Census][trial as usize % 3];
        let mut cfg = TrainConfig::desk(kind, loss);
        cfg.epochs = 1;
        cfg.n_points = 16;
        cfg.batch_size = 4;
        cfg.extractor.widths = vec![8, 8];
        cfg.seed = trial;
        let base = train_base(&provider.task(0).unwrap(), &cfg).unwrap();
        let before = base.student.checksum();
        let next = advance_task(base, &provider.task(1).unwrap(), &cfg).unwrap();
        let teacher = next.teacher.as_ref().unwrap();
        assert!(teacher.frozen);
        assert_eq!(teacher.checksum(), before);
        assert_eq!(next.records[1].teacher_checksum.as_deref(), Some(before.as_str()));
        assert_ne!(next.student.checksum(), before);
    }
}
