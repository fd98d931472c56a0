use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const EPS: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|)`, with a floor so entries that are zero in both
/// agree trivially.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Central finite differences of `loss` with respect to every entry of `params`.
fn numeric_grad<P: Parameterized>(params: &P, loss: impl Fn(&P) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        let len = params.tensors()[ti].data().len();
        for k in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].data_mut()[k] += EPS;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].data_mut()[k] -= EPS;
            out.push((loss(&plus) - loss(&minus)) / (2.0 * EPS));
        }
    }
    out
}

fn random_inputs(rng: &mut ChaCha8Rng, steps: usize, batch: usize, dim: usize) -> Vec<Tensor2> {
    (0..steps)
        .map(|_| Tensor2::from_fn(batch, dim, |_, _| rng.random_range(-1.0..1.0)))
        .collect()
}

/// `L = sum coef * mean + 0.5 * sum mean^2` over every step.
fn policy_loss(net: &PolicyNet, xs: &[Tensor2], s0: &RecurrentState, coef: &[Tensor2]) -> f64 {
    let (means, _) = net.forward_sequence(xs, s0).unwrap();
    means
        .iter()
        .zip(coef)
        .map(|(m, c)| {
            m.data()
                .iter()
                .zip(c.data())
                .map(|(mv, cv)| cv * mv + 0.5 * mv * mv)
                .sum::<f64>()
        })
        .sum()
}

fn check_policy(recurrent: bool, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs_dim = rng.random_range(1..=6);
    let hidden = rng.random_range(1..=8);
    let steps = rng.random_range(1..=4);
    let batch = rng.random_range(1..=2);
    let shape = PolicyShape {
        obs_dim,
        hidden,
        action_dim: 2,
        recurrent,
        log_std_init: 0.0,
    };
    let mut net = PolicyNet::new(shape, &mut rng);
    // Larger head weights so the check is not dominated by tiny gradients.
    net.head.weight.data_mut().iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    let xs = random_inputs(&mut rng, steps, batch, obs_dim);
    let coef = random_inputs(&mut rng, steps, batch, 2);
    let s0 = RecurrentState {
        h: Tensor2::from_fn(batch, hidden, |_, _| rng.random_range(-0.5..0.5)),
        c: Tensor2::from_fn(batch, hidden, |_, _| rng.random_range(-0.5..0.5)),
    };
    let (means, tape) = net.forward_sequence(&xs, &s0).unwrap();
    let d_means: Vec<Tensor2> = means
        .iter()
        .zip(&coef)
        .map(|(m, c)| {
            let mut d = m.clone();
            d.add_assign(c).unwrap();
            d
        })
        .collect();
    let mut grads = net.zeroed();
    net.backward(&tape, &d_means, &mut grads).unwrap();
    let numeric = numeric_grad(&net, |p| policy_loss(p, &xs, &s0, &coef));
    grads
        .flat()
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

#[test]
fn lstm_policy_gradients_match_finite_differences() {
    for seed in 0..15 {
        let err = check_policy(true, seed);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn mlp_policy_gradients_match_finite_differences() {
    for seed in 0..15 {
        let err = check_policy(false, 100 + seed);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn critic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let net = ValueNet::new(5, 6, 2, &mut rng);
    let x = Tensor2::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
    let target = Tensor2::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
    let loss = |p: &ValueNet| -> f64 {
        let y = p.infer(&x).unwrap();
        y.data().iter().zip(target.data()).map(|(a, b)| 0.5 * (a - b).powi(2)).sum()
    };
    let (y, tape) = net.forward(&x).unwrap();
    let d = Tensor2::from_fn(3, 2, |r, c| y.get(r, c) - target.get(r, c));
    let mut grads = net.zeroed();
    net.backward(&tape, &d, &mut grads).unwrap();
    let numeric = numeric_grad(&net, loss);
    for (a, n) in grads.flat().iter().zip(&numeric) {
        assert!(rel_err(*a, *n) < 1e-4, "{a} vs {n}");
    }
}

#[test]
fn zero_output_gradient_gives_zero_parameter_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = PolicyShape {
        obs_dim: 3,
        hidden: 4,
        action_dim: 2,
        recurrent: true,
        log_std_init: 0.0,
    };
    let net = PolicyNet::new(shape, &mut rng);
    let xs = random_inputs(&mut rng, 3, 1, 3);
    let (means, tape) = net.forward_sequence(&xs, &net.initial_state(1)).unwrap();
    let zeros: Vec<Tensor2> = means.iter().map(|m| Tensor2::zeros(m.rows(), m.cols())).collect();
    let mut grads = net.zeroed();
    net.backward(&tape, &zeros, &mut grads).unwrap();
    assert!(grads.flat().iter().all(|&g| g == 0.0));
}

#[test]
fn backward_without_forward_is_missing_cache() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = PolicyShape {
        obs_dim: 3,
        hidden: 4,
        action_dim: 2,
        recurrent: true,
        log_std_init: 0.0,
    };
    let net = PolicyNet::new(shape, &mut rng);
    let mut grads = net.zeroed();
    let res = net.backward(&PolicyTape::default(), &[Tensor2::zeros(1, 2)], &mut grads);
    assert!(matches!(res, Err(NnError::MissingCache(_))));
    let critic = ValueNet::new(3, 4, 2, &mut rng);
    let mut cg = critic.zeroed();
    let res = critic.backward(&ValueTape::default(), &Tensor2::zeros(1, 2), &mut cg);
    assert!(matches!(res, Err(NnError::MissingCache(_))));
}

#[test]
fn act_matches_sequence_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shape = PolicyShape {
        obs_dim: 4,
        hidden: 5,
        action_dim: 2,
        recurrent: true,
        log_std_init: 0.0,
    };
    let net = PolicyNet::new(shape, &mut rng);
    let xs = random_inputs(&mut rng, 6, 1, 4);
    let (means, _) = net.forward_sequence(&xs, &net.initial_state(1)).unwrap();
    let mut state = net.initial_state(1);
    for (x, m) in xs.iter().zip(&means) {
        let a = net.act(x.data(), &mut state).unwrap();
        assert_eq!(a.as_slice(), m.data());
    }
}

#[test]
fn identical_seeds_give_identical_parameters() {
    let shape = PolicyShape {
        obs_dim: 4,
        hidden: 5,
        action_dim: 2,
        recurrent: true,
        log_std_init: -0.5,
    };
    let a = PolicyNet::new(shape, &mut ChaCha8Rng::seed_from_u64(1));
    let b = PolicyNet::new(shape, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a.checksum(), b.checksum());
    assert_eq!(a, b);
}
