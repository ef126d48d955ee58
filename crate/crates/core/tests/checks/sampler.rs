use std::collections::HashSet;

use pointclimb::rng;
use pointclimb::sampler::{build_scenario, fixed_scenario, sample_task_sizes, SamplerConfig};

const CONFIGS: [(usize, usize, usize); 5] = [(40, 5, 5), (40, 3, 8), (7, 5, 5), (10, 1, 10), (25, 4, 6)];

/// The sampler loop replayed on the same draw stream: draw a size, and if the
/// remainder minus the draw is not positive, the remainder is the last task.
fn replay(cfg: &SamplerConfig) -> (Vec<usize>, usize) {
    let mut stream = rng::derived(cfg.seed, "task-sizes", 0);
    let mut tc = cfg.tc;
    let mut sizes = Vec::new();
    loop {
        let base = rng::randint(&mut stream, cfg.low, cfg.high);
        let condition = tc as i64 - base as i64;
        if condition <= 0 {
            sizes.push(tc);
            return (sizes, base);
        }
        sizes.push(base);
        tc = condition as usize;
    }
}

pub fn invariants_over_a_thousand_seeds_per_config() {
    for (tc, low, high) in CONFIGS {
        for seed in 0..1000 {
            let cfg = SamplerConfig { tc, low, high, seed };
            let s = build_scenario(&cfg).unwrap();

            let flat: Vec<usize> = s.tasks.iter().flatten().copied().collect();
            let mut sorted = flat.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..tc).collect::<Vec<_>>(), "partition {cfg:?}");
            assert_eq!(flat.iter().collect::<HashSet<_>>().len(), tc, "disjoint {cfg:?}");
            assert_eq!(*s.cumulative().last().unwrap(), tc);
            assert_eq!(s.sizes, s.tasks.iter().map(Vec::len).collect::<Vec<_>>());

            let (last, head) = s.sizes.split_last().unwrap();
            assert!(
                head.iter().all(|&n| (low..=high).contains(&n)),
                "bounds {cfg:?} {:?}",
                s.sizes
            );
            assert!((1..=high).contains(last));

            let (want, final_draw) = replay(&cfg);
            assert_eq!(s.sizes, want, "{cfg:?}");
            assert_eq!(*last, tc - head.iter().sum::<usize>());
            assert!(
                *last <= final_draw,
                "last task {last} did not absorb a remainder below draw {final_draw}"
            );

            assert_eq!(build_scenario(&cfg).unwrap(), s, "determinism {cfg:?}");
        }
    }
}

pub fn size_sweep_over_ten_thousand_seeds() {
    for seed in 0..10_000 {
        let sizes = sample_task_sizes(&SamplerConfig {
            tc: 40,
            low: 3,
            high: 8,
            seed,
        })
        .unwrap();
        assert_eq!(sizes.iter().sum::<usize>(), 40);
        let (_, head) = sizes.split_last().unwrap();
        assert!(head.iter().all(|&n| (3..=8).contains(&n)), "{sizes:?}");
    }
}

pub fn traced_examples() {
    let cfg = |tc, low, high| SamplerConfig {
        tc,
        low,
        high,
        seed: 42,
    };
    assert_eq!(sample_task_sizes(&cfg(40, 5, 5)).unwrap(), vec![5; 8]);
    assert_eq!(sample_task_sizes(&cfg(7, 5, 5)).unwrap(), vec![5, 2]);
    let single = build_scenario(&cfg(4, 4, 4)).unwrap();
    assert_eq!(single.tasks.len(), 1);
    assert_eq!(single.tasks[0].len(), 4);
    assert!(sample_task_sizes(&cfg(4, 0, 2)).is_err());
    assert!(sample_task_sizes(&cfg(4, 3, 2)).is_err());
    assert!(sample_task_sizes(&cfg(4, 2, 5)).is_err());
}

pub fn different_seeds_usually_shuffle_differently() {
    let orders: HashSet<Vec<Vec<usize>>> = (0..50)
        .map(|seed| {
            build_scenario(&SamplerConfig {
                tc: 40,
                low: 5,
                high: 5,
                seed,
            })
            .unwrap()
            .tasks
        })
        .collect();
    assert!(orders.len() > 45);
}

pub fn benchmark_shapes() {
    let s = fixed_scenario(&[20, 5, 5, 5, 5], 40, 0).unwrap();
    assert_eq!(s.cumulative(), vec![20, 25, 30, 35, 40]);

    let mut seven = vec![10];
    seven.extend([5; 6]);
    let s = fixed_scenario(&seven, 40, 1).unwrap();
    assert_eq!(s.num_tasks(), 7);
    assert_eq!(s.cumulative(), vec![10, 15, 20, 25, 30, 35, 40]);

    let s = fixed_scenario(&[4; 10], 40, 2).unwrap();
    assert_eq!(s.num_tasks(), 10);
    assert!(s.sizes.iter().all(|&n| n == 4));

    for seed in 0..100 {
        for sizes in [&[20, 5, 5, 5, 5][..], &seven, &[4; 10]] {
            let s = fixed_scenario(sizes, 40, seed).unwrap();
            let all: HashSet<usize> = s.tasks.iter().flatten().copied().collect();
            assert_eq!(all.len(), 40);
        }
    }
    assert!(fixed_scenario(&[30, 20], 40, 0).is_err());
}
