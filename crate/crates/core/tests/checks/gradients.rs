use pointclimb::losses::{census_loss, class_loss, distill_loss, lwf_loss, CensusContext, DistillConfig, LossKind};
use pointclimb::tensor::{Reduce, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-3;
const TRIALS: u64 = 50;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap().with_grad()
}

/// Values bounded away from zero so relu stays smooth within `H`.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap().with_grad()
}

/// Reduces an arbitrary output to a scalar with fixed random weights, so
/// every output coordinate contributes a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let shape = tape.shape(out).to_vec();
    let w = random_tensor(&mut rng, &shape, -1.0, 1.0);
    let w = tape.constant(&w);
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod).unwrap()
}

/// Compares tape gradients with central differences for every input coordinate.
fn check<F>(name: &str, inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let root = f(&mut tape, &vars);
    let grads = tape.backward(root).unwrap();

    let eval = |inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
        let root = f(&mut tape, &vars);
        tape.value(root)[0]
    };

    let mut worst: f64 = 0.0;
    for (k, var) in vars.iter().enumerate() {
        if !inputs[k].requires_grad() {
            continue;
        }
        let analytic = grads.wrt(&tape, *var);
        for i in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            let mut dp = plus[k].data().to_vec();
            dp[i] += H;
            plus[k] = Tensor::new(plus[k].shape().to_vec(), dp).unwrap().with_grad();
            let mut dm = minus[k].data().to_vec();
            dm[i] -= H;
            minus[k] = Tensor::new(minus[k].shape().to_vec(), dm).unwrap().with_grad();
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let err = rel_err(analytic[i], numeric);
            assert!(
                err <= TOL,
                "{name}: input {k} coord {i}: tape {} vs fd {numeric} (rel {err:e})",
                analytic[i]
            );
            worst = worst.max(err);
        }
    }
    worst
}

fn trials(name: &str, mut body: impl FnMut(&mut ChaCha8Rng, u64) -> f64) {
    let mut worst: f64 = 0.0;
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(trial * 7919 + name.len() as u64);
        worst = worst.max(body(&mut rng, trial));
    }
    println!("gradcheck {name:<14} trials={TRIALS} worst_rel_err={worst:.2e}");
}

pub fn matmul() {
    trials("matmul", |rng, seed| {
        let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        let a = random_tensor(rng, &[m, k], -1.0, 1.0);
        let b = random_tensor(rng, &[k, n], -1.0, 1.0);
        check("matmul", &[a, b], |t, v| {
            let o = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        })
    });
}

pub fn elementwise() {
    trials("add/sub/mul", |rng, seed| {
        let shape = [rng.random_range(1..4), rng.random_range(1..4)];
        let a = random_tensor(rng, &shape, -2.0, 2.0);
        let b = random_tensor(rng, &shape, -2.0, 2.0);
        let w1 = check("add", &[a.clone(), b.clone()], |t, v| {
            let o = t.add(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        });
        let w2 = check("sub", &[a.clone(), b.clone()], |t, v| {
            let o = t.sub(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        });
        let w3 = check("mul", &[a.clone(), a.clone()], |t, v| {
            let o = t.mul(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        });
        let w4 = check("mul-self", &[a], |t, v| {
            let o = t.mul(v[0], v[0]).unwrap();
            weighted_sum(t, o, seed)
        });
        w1.max(w2).max(w3).max(w4)
    });
}

pub fn add_row_and_scale() {
    trials("add_row/scale", |rng, seed| {
        let (r, c) = (rng.random_range(1..5), rng.random_range(1..5));
        let x = random_tensor(rng, &[r, c], -1.0, 1.0);
        let b = random_tensor(rng, &[c], -1.0, 1.0);
        let factor = rng.random_range(-3.0..3.0);
        check("add_row", &[x, b], |t, v| {
            let o = t.add_row(v[0], v[1]).unwrap();
            let o = t.scale(o, factor).unwrap();
            weighted_sum(t, o, seed)
        })
    });
}

pub fn relu() {
    trials("relu", |rng, seed| {
        let shape = [rng.random_range(1..5), rng.random_range(1..5)];
        let x = away_from_zero(rng, &shape);
        check("relu", &[x], |t, v| {
            let o = t.relu(v[0]).unwrap();
            weighted_sum(t, o, seed)
        })
    });
}

pub fn log() {
    trials("log", |rng, seed| {
        let len = rng.random_range(1..6);
        let x = random_tensor(rng, &[len], 0.2, 3.0);
        check("log", &[x], |t, v| {
            let o = t.log(v[0]).unwrap();
            weighted_sum(t, o, seed)
        })
    });
}

pub fn reductions() {
    for kind in [Reduce::Max, Reduce::Mean, Reduce::Sum] {
        trials(&format!("reduce-{kind}"), |rng, seed| {
            let group = rng.random_range(1..5);
            let groups = rng.random_range(1..4);
            let cols = rng.random_range(1..4);
            // distinct values spaced well beyond H keep the argmax stable
            let n = group * groups * cols;
            let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
            for i in (1..n).rev() {
                values.swap(i, rng.random_range(0..=i));
            }
            let x = Tensor::new(vec![group * groups, cols], values).unwrap().with_grad();
            check("reduce", &[x], |t, v| {
                let o = t.reduce_groups(v[0], group, kind).unwrap();
                weighted_sum(t, o, seed)
            })
        });
    }
}

pub fn concat_gather_slice_reshape() {
    trials("concat/gather", |rng, seed| {
        let rows = rng.random_range(1..5);
        let (ca, cb) = (rng.random_range(1..4), rng.random_range(1..4));
        let a = random_tensor(rng, &[rows, ca], -1.0, 1.0);
        let b = random_tensor(rng, &[rows, cb], -1.0, 1.0);
        let index: Vec<usize> = (0..rng.random_range(1..8)).map(|_| rng.random_range(0..rows)).collect();
        let w1 = check("concat_cols", &[a.clone(), b], |t, v| {
            let o = t.concat_cols(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        });
        let w2 = check("gather_rows", std::slice::from_ref(&a), |t, v| {
            let o = t.gather_rows(v[0], &index).unwrap();
            weighted_sum(t, o, seed)
        });
        let cols = a.shape()[1];
        let start = rng.random_range(0..cols);
        let end = rng.random_range(start + 1..=cols);
        let w3 = check("slice_cols", std::slice::from_ref(&a), |t, v| {
            let o = t.slice_cols(v[0], start, end).unwrap();
            weighted_sum(t, o, seed)
        });
        let w4 = check("reshape", &[a], |t, v| {
            let n = t.value(v[0]).len();
            let o = t.reshape(v[0], vec![n]).unwrap();
            weighted_sum(t, o, seed)
        });
        w1.max(w2).max(w3).max(w4)
    });
}

pub fn softmax_family() {
    trials("softmax", |rng, seed| {
        let shape = [rng.random_range(1..4), rng.random_range(1..6)];
        let x = random_tensor(rng, &shape, -3.0, 3.0);
        let tau = rng.random_range(0.5..4.0);
        let labels: Vec<usize> = (0..x.shape()[0]).map(|_| rng.random_range(0..x.shape()[1])).collect();
        let w1 = check("softmax", std::slice::from_ref(&x), |t, v| {
            let o = t.softmax(v[0], tau).unwrap();
            weighted_sum(t, o, seed)
        });
        let w2 = check("log_softmax", std::slice::from_ref(&x), |t, v| {
            let o = t.log_softmax(v[0], tau).unwrap();
            weighted_sum(t, o, seed)
        });
        let w3 = check("nll", std::slice::from_ref(&x), |t, v| {
            let o = t.log_softmax(v[0], 1.0).unwrap();
            t.nll(o, &labels).unwrap()
        });
        let w4 = check("log(softmax)", &[x], |t, v| {
            let p = t.softmax(v[0], tau).unwrap();
            let o = t.log(p).unwrap();
            let o = t.mean(o).unwrap();
            t.scale(o, -1.0).unwrap()
        });
        w1.max(w2).max(w3).max(w4)
    });
}

pub fn composed_losses() {
    trials("losses", |rng, _| {
        let n = rng.random_range(1..5);
        let old = rng.random_range(1..4);
        let m = old + rng.random_range(1..4);
        let features = random_tensor(rng, &[n, 3], -1.0, 1.0);
        let weight = random_tensor(rng, &[3, m], -2.0, 2.0);
        let bias = random_tensor(rng, &[m], -1.0, 1.0);
        let mut teacher = random_tensor(rng, &[n, old], -3.0, 3.0);
        teacher.set_requires_grad(false);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let mut cfg = DistillConfig::new(LossKind::Lwf);
        cfg.tau = rng.random_range(0.5..4.0);
        cfg.lambda_lwf = rng.random_range(0.0..3.0);
        let ctx = CensusContext {
            eta: m - old,
            tasks_elapsed: rng.random_range(1..5),
        };
        let inputs = [features, weight, bias, teacher];
        // logits = features · W + b, so the checks cover the head as well.
        let logits = |t: &mut Tape, v: &[Var]| {
            let z = t.matmul(v[0], v[1]).unwrap();
            t.add_row(z, v[2]).unwrap()
        };
        let w1 = check("class_loss", &inputs, |t, v| {
            let s = logits(t, v);
            class_loss(t, s, &labels).unwrap()
        });
        let w2 = check("distill_loss", &inputs, |t, v| {
            let s = logits(t, v);
            distill_loss(t, v[3], s, cfg.tau).unwrap()
        });
        let w3 = check("lwf_loss", &inputs, |t, v| {
            let s = logits(t, v);
            lwf_loss(t, v[3], s, &labels, &cfg).unwrap()
        });
        let w4 = check("census_loss", &inputs, |t, v| {
            let s = logits(t, v);
            census_loss(t, v[3], s, &labels, &cfg, &ctx).unwrap()
        });
        w1.max(w2).max(w3).max(w4)
    });
}
