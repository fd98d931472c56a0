//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Every oracle below is written from the definitions, independently of the
//! library code it checks.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wrsn_core::baselines::{run_baseline, train_scalar_ppo, BaselineKind, BaselineSpec};
use wrsn_core::emo::{emoppo_tml, hypervolume2, AlgoConfig, ParetoArchive, RunReport};
use wrsn_core::env::{pile_efficiency, Env, ScenarioConfig};
use wrsn_core::nn::{Parameterized, PolicyNet, PolicyShape, RecurrentState, Tensor2, ValueNet};
use wrsn_core::ppo::{compute_gae, evaluate_policy};

type Verdict = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
}

fn report(c: &Criterion, elapsed: Duration, verdict: Verdict) -> bool {
    let secs = elapsed.as_secs_f64();
    let (ok, detail) = match (verdict, c.budget) {
        (Ok(d), Some(b)) if elapsed > b => (false, format!("{d}; over budget {:.0}s", b.as_secs_f64())),
        (Ok(d), _) => (true, d),
        (Err(d), _) => (false, d),
    };
    println!("{} {:<24} {:>8.1}s  {}", if ok { "PASS" } else { "FAIL" }, c.name, secs, detail);
    ok
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- gradients

const FD_STEP: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

fn central_differences<P: Parameterized>(params: &P, loss: impl Fn(&P) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.param_count());
    for ti in 0..params.tensors().len() {
        for k in 0..params.tensors()[ti].data().len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].data_mut()[k] += FD_STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].data_mut()[k] -= FD_STEP;
            out.push((loss(&plus) - loss(&minus)) / (2.0 * FD_STEP));
        }
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half: f64) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-half..half))
}

/// Worst entry-wise relative error of one randomized actor and critic.
fn gradient_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs_dim = rng.random_range(1..=8);
    let hidden = rng.random_range(1..=16);
    let steps = rng.random_range(1..=6);
    let batch = rng.random_range(1..=3);
    let shape = PolicyShape {
        obs_dim,
        hidden,
        action_dim: 2,
        recurrent: true,
        log_std_init: 0.0,
    };
    let mut net = PolicyNet::new(shape, &mut rng);
    net.head.weight.data_mut().iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    let xs: Vec<Tensor2> = (0..steps).map(|_| uniform(&mut rng, batch, obs_dim, 1.0)).collect();
    let coef: Vec<Tensor2> = (0..steps).map(|_| uniform(&mut rng, batch, 2, 1.0)).collect();
    let s0 = RecurrentState {
        h: uniform(&mut rng, batch, hidden, 0.5),
        c: uniform(&mut rng, batch, hidden, 0.5),
    };
    // L = sum(coef * mean + mean^2 / 2), so dL/dmean = coef + mean.
    let loss = |p: &PolicyNet| -> f64 {
        let (means, _) = p.forward_sequence(&xs, &s0).unwrap();
        means
            .iter()
            .zip(&coef)
            .flat_map(|(m, c)| m.data().iter().zip(c.data()).map(|(m, c)| c * m + 0.5 * m * m))
            .sum()
    };
    let (means, tape) = net.forward_sequence(&xs, &s0).unwrap();
    let d_means: Vec<Tensor2> = means
        .iter()
        .zip(&coef)
        .map(|(m, c)| Tensor2::from_fn(m.rows(), m.cols(), |r, k| m.get(r, k) + c.get(r, k)))
        .collect();
    let mut grads = net.zeroed();
    net.backward(&tape, &d_means, &mut grads).unwrap();
    let numeric = central_differences(&net, loss);
    let actor = grads.flat().iter().zip(&numeric).map(|(&a, &n)| rel_err(a, n)).fold(0.0, f64::max);

    let critic = ValueNet::new(obs_dim, hidden, 2, &mut rng);
    let x = uniform(&mut rng, batch, obs_dim, 1.0);
    let target = uniform(&mut rng, batch, 2, 1.0);
    let closs = |p: &ValueNet| -> f64 {
        let y = p.infer(&x).unwrap();
        y.data().iter().zip(target.data()).map(|(a, b)| 0.5 * (a - b).powi(2)).sum()
    };
    let (y, ctape) = critic.forward(&x).unwrap();
    let d = Tensor2::from_fn(batch, 2, |r, k| y.get(r, k) - target.get(r, k));
    let mut cgrads = critic.zeroed();
    critic.backward(&ctape, &d, &mut cgrads).unwrap();
    let cnum = central_differences(&critic, closs);
    let critic_err = cgrads.flat().iter().zip(&cnum).map(|(&a, &n)| rel_err(a, n)).fold(0.0, f64::max);
    actor.max(critic_err)
}

fn gradient_fidelity() -> Verdict {
    let worst = (0..100).map(gradient_trial).fold(0.0, f64::max);
    check(worst < 1e-4, format!("max relative error {worst:.2e} over 100 trials (< 1e-4)"))
}

// ---------------------------------------------------------------------- GAE

fn gae_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let rewards: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let values: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let bootstrap = if rng.random_bool(0.5) { [0.0, 0.0] } else { [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)] };
        let got = compute_gae(&rewards, &values, bootstrap, gamma, lambda).unwrap();
        for k in 0..2 {
            let v = |t: usize| if t < n { values[t][k] } else { bootstrap[k] };
            for t in 0..n {
                // A_t = sum_l (gamma lambda)^l delta_{t+l}
                let mut want = 0.0;
                for l in 0..n - t {
                    let delta = rewards[t + l][k] + gamma * v(t + l + 1) - v(t + l);
                    want += (gamma * lambda).powi(l as i32) * delta;
                }
                worst = worst.max((got.advantages[t][k] - want).abs());
            }
        }
    }
    check(worst < 1e-10, format!("max abs error {worst:.2e} over 1000 traces (< 1e-10)"))
}

// -------------------------------------------------------------- hypervolume

fn weakly_covers(p: &[f64; 2], u: [f64; 2]) -> bool {
    u[0] <= p[0] && u[1] <= p[1]
}

/// Area under the staircase, summed over vertical strips between sorted x values.
fn strip_area(front: &[[f64; 2]]) -> f64 {
    let mut xs: Vec<f64> = front.iter().map(|p| p[0]).collect();
    xs.push(0.0);
    xs.sort_by(f64::total_cmp);
    xs.windows(2)
        .map(|w| {
            let height = front.iter().filter(|p| p[0] >= w[1]).map(|p| p[1]).fold(0.0, f64::max);
            (w[1] - w[0]) * height
        })
        .sum()
}

fn hypervolume_exactness() -> Verdict {
    let hand = hypervolume2(&[[0.8, 0.2], [0.2, 0.8]], [0.0, 0.0]).map_err(|e| e.to_string())?;
    if (hand - 0.28).abs() > 1e-12 {
        return Err(format!("two-point front gave {hand}, expected 0.28"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let samples = 1_000_000;
    let mut worst_sigmas = 0.0f64;
    let mut worst_strip = 0.0f64;
    for _ in 0..50 {
        let k = rng.random_range(1..=12);
        let front: Vec<[f64; 2]> = (0..k).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let exact = hypervolume2(&front, [0.0, 0.0]).map_err(|e| e.to_string())?;
        worst_strip = worst_strip.max((exact - strip_area(&front)).abs());
        let hits = (0..samples)
            .filter(|_| {
                let u = [rng.random::<f64>(), rng.random::<f64>()];
                front.iter().any(|p| weakly_covers(p, u))
            })
            .count();
        let p = hits as f64 / samples as f64;
        let sigma = (p * (1.0 - p) / samples as f64).sqrt().max(1e-12);
        worst_sigmas = worst_sigmas.max((exact - p).abs() / sigma);
    }
    check(
        worst_sigmas <= 3.0 && worst_strip < 1e-12,
        format!(
            "two-point front = {hand}; worst deviation {worst_sigmas:.2} sigma over 50 fronts (<= 3); strip-sum gap {worst_strip:.1e}"
        ),
    )
}

// ------------------------------------------------------------------ archive

fn strictly_better(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] >= b[0] && a[1] >= b[1] && (a[0] > b[0] || a[1] > b[1])
}

fn archive_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut archive = ParetoArchive::new([0.0, 0.0]);
    let mut inserted: Vec<[f64; 2]> = Vec::new();
    let mut prev = 0.0;
    let mut drops = 0;
    for i in 0..10_000usize {
        // Points near a quarter circle on a coarse grid give large fronts,
        // ties on one coordinate and exact duplicates.
        let angle = rng.random_range(0.0..FRAC_PI_2);
        let r = 1.0 - 0.2 * rng.random::<f64>().powi(3);
        let q = |v: f64| (v * 500.0).round() / 500.0;
        let p = [q(r * angle.cos()), q(r * angle.sin())];
        inserted.push(p);
        archive.insert(p, i);
        let hv = archive.hypervolume().map_err(|e| e.to_string())?;
        if hv < prev {
            drops += 1;
        }
        prev = hv;
    }
    let mut want: Vec<([f64; 2], usize)> = inserted
        .iter()
        .enumerate()
        .filter(|&(i, p)| {
            !inserted
                .iter()
                .enumerate()
                .any(|(j, q)| strictly_better(q, p) || (j < i && q == p))
        })
        .map(|(i, p)| (*p, i))
        .collect();
    let mut got: Vec<([f64; 2], usize)> = archive.entries().iter().map(|e| (e.objectives, e.payload)).collect();
    let key = |a: &([f64; 2], usize), b: &([f64; 2], usize)| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1]));
    want.sort_by(key);
    got.sort_by(key);
    check(
        got == want && drops == 0,
        format!(
            "archive {} entries, brute force {} ({}); hypervolume decreased {drops} times",
            got.len(),
            want.len(),
            if got == want { "equal" } else { "DIFFERENT" }
        ),
    )
}

// -------------------------------------------------------------- environment

fn env_conservation() -> Verdict {
    let cfg = Arc::new(ScenarioConfig::full_scale());
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let tau = cfg.network.slot_duration;
    let cap = cfg.sensor_capacity();
    let zeta = pile_efficiency(cfg.pile.coupling, cfg.pile.quality_factors[0], cfg.pile.quality_factors[1]);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |slot: usize, what: &str| {
        if failures.len() < 5 {
            failures.push(format!("slot {slot}: {what}"));
        }
    };
    let mut env = Env::new(Arc::clone(&cfg), 0).map_err(|e| e.to_string())?;
    let mut episode = 0;
    let mut docked_slots = 0;
    let mut charged_slots = 0;
    for slot in 0..10_000 {
        if env.is_done() {
            episode += 1;
            env = Env::new(Arc::clone(&cfg), episode).map_err(|e| e.to_string())?;
        }
        let before = env.state().clone();
        let theta = rng.random_range(0.0..=TAU);
        let d = rng.random_range(0.0..=cfg.charger.max_step);
        let out = env.advance(theta, d).map_err(|e| e.to_string())?;
        let after = env.state();
        let l = &out.ledger;

        let charge: f64 = l.e_charge.iter().sum();
        let loss: f64 = l.e_loss.iter().sum();
        let nonneg = [l.e_move, l.e_tx, l.pile_transfer_in, l.e_sum, l.traveled]
            .iter()
            .chain(&l.e_charge)
            .chain(&l.e_loss)
            .all(|v| *v >= 0.0);
        if !nonneg {
            fail(slot, "negative ledger entry");
        }
        if !close(after.charger.remaining_energy, before.charger.remaining_energy - l.e_move - l.e_tx + l.pile_transfer_in) {
            fail(slot, "charger energy balance");
        }
        if !close(l.e_sum, l.e_move + charge + loss) {
            fail(slot, "e_sum identity");
        }
        if l.e_tx > 0.0 && !close(l.e_tx, charge + loss) {
            fail(slot, "transmit energy not fully apportioned");
        }
        if l.e_tx == 0.0 && (charge > 0.0 || loss > 0.0) {
            fail(slot, "charge or loss without transmission");
        }
        if !close(l.e_move, cfg.charger.move_cost * l.traveled) || l.traveled > d + 1e-9 {
            fail(slot, "movement cost");
        }
        if l.docked {
            docked_slots += 1;
            let at_pile = dist(before.charger.position, cfg.pile.position) <= cfg.pile.proximity;
            if l.e_move != 0.0 || l.e_tx != 0.0 || !at_pile || l.pile_transfer_in > zeta * cfg.pile.power * tau * (1.0 + 1e-9) {
                fail(slot, "docked slot ledger");
            }
        }
        let p = after.charger.position;
        if !(0.0..=cfg.network.area[0]).contains(&p[0]) || !(0.0..=cfg.network.area[1]).contains(&p[1]) {
            fail(slot, "charger left the area");
        }
        if charge > 0.0 {
            charged_slots += 1;
        }
        for (i, (s0, s1)) in before.sensors.iter().zip(&after.sensors).enumerate() {
            let e = l.e_charge[i];
            if !s0.alive {
                if s1.remaining_energy != s0.remaining_energy || e != 0.0 {
                    fail(slot, "dead sensor changed");
                }
                continue;
            }
            if e > 0.0 {
                let r = dist(s0.position, p);
                if r > cfg.charger.charge_radius || e > cfg.wpt.alpha / (r + cfg.wpt.beta).powi(2) * tau * (1.0 + 1e-9) {
                    fail(slot, "charge exceeds the received-power bound");
                }
            }
            let topped = (s0.remaining_energy + e).min(cap);
            let ok = [1.0, 2.0]
                .iter()
                .take(if cfg.network.consumption_doubling_prob > 0.0 { 2 } else { 1 })
                .any(|k| close(s1.remaining_energy, (topped - k * s0.drain_rate).max(0.0)));
            if !ok {
                fail(slot, "sensor energy balance");
            }
        }
        let alive = after.sensors.iter().filter(|s| s.alive).count() as f64 / after.sensors.len() as f64;
        let eff = if l.e_sum > 0.0 { charge / l.e_sum } else { 0.0 };
        if !close(out.metrics.survival, alive) || !close(out.metrics.efficiency, eff) {
            fail(slot, "slot metrics");
        }
    }
    let summary = format!("10000 slots over {} episodes, {docked_slots} docked, {charged_slots} charging", episode + 1);
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

// ------------------------------------------------------------ learning runs

const MASTER_SEEDS: [u64; 3] = [1, 2, 3];

fn random_point_hypervolume(scenario: &Arc<ScenarioConfig>, algo: &AlgoConfig) -> Result<(f64, [f64; 2]), String> {
    let run = run_baseline(&BaselineSpec::new(BaselineKind::Random, 0), scenario, &algo.eval_seeds).map_err(|e| e.to_string())?;
    let hv = hypervolume2(&[run.stats.mean], [0.0, 0.0]).map_err(|e| e.to_string())?;
    Ok((hv, run.stats.mean))
}

fn learning_signal(runs: &[Result<RunReport, String>], random_hv: f64) -> Verdict {
    let mut wins = 0;
    let mut parts = Vec::new();
    for (seed, run) in MASTER_SEEDS.iter().zip(runs) {
        match run {
            Ok(r) => {
                let fin = r.final_hypervolume();
                if fin > random_hv && fin > r.warmup_hypervolume {
                    wins += 1;
                }
                parts.push(format!("seed {seed}: {:.4} -> {fin:.4}", r.warmup_hypervolume));
            }
            Err(e) => parts.push(format!("seed {seed}: {e}")),
        }
    }
    check(
        wins == MASTER_SEEDS.len(),
        format!("{wins}/3 seeds beat random {random_hv:.4} and warm-up ({})", parts.join(", ")),
    )
}

fn tradeoff_diversity(runs: &[Result<RunReport, String>]) -> Verdict {
    let mut wins = 0;
    let mut spans = Vec::new();
    for run in runs.iter().flatten() {
        let pts = run.archive.points();
        // The archive is mutually non-dominated, so any two entries qualify
        // when their f1 values are far enough apart.
        let span = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max)
            - pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        if pts.len() >= 2 && span >= 0.02 && run.archive.is_mutually_non_dominated() {
            wins += 1;
        }
        spans.push(format!("{} pts, f1 span {span:.4}", pts.len()));
    }
    check(wins >= 2, format!("{wins}/3 seeds with |df1| >= 0.02 ({})", spans.join("; ")))
}

fn scalarization_sanity(scenario: &Arc<ScenarioConfig>, algo: &AlgoConfig) -> Verdict {
    let mut sums = [[0.0; 2]; 2];
    for seed in 0..5u64 {
        for (k, w) in [[1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
            let spec = BaselineSpec::scalar_ppo(w, seed, 50, algo.ppo.clone());
            let run = run_baseline(&spec, scenario, &algo.eval_seeds).map_err(|e| e.to_string())?;
            sums[k][0] += run.stats.mean[0] / 5.0;
            sums[k][1] += run.stats.mean[1] / 5.0;
        }
    }
    let [w10, w01] = sums;
    check(
        w10[0] >= w01[0] && w01[1] >= w10[1],
        format!(
            "w=(1,0): ({:.4}, {:.4}); w=(0,1): ({:.4}, {:.4})",
            w10[0], w10[1], w01[0], w01[1]
        ),
    )
}

fn robustness(scenario: &ScenarioConfig, algo: &AlgoConfig) -> Verdict {
    let spec = BaselineSpec::scalar_ppo([1.0, 0.0], 0, 50, algo.ppo.clone());
    let (task, _) = train_scalar_ppo(&spec, &Arc::new(scenario.clone())).map_err(|e| e.to_string())?;
    let mut f1 = Vec::new();
    let mut repeatable = true;
    for p in [0.0, 0.25, 0.5] {
        let mut cfg = scenario.clone();
        cfg.network.consumption_doubling_prob = p;
        let cfg = Arc::new(cfg);
        let a = evaluate_policy(&task.policy, &cfg, &algo.eval_seeds, algo.ppo.gamma).map_err(|e| e.to_string())?;
        let b = evaluate_policy(&task.policy, &cfg, &algo.eval_seeds, algo.ppo.gamma).map_err(|e| e.to_string())?;
        repeatable &= a == b;
        f1.push(a.mean[0]);
    }
    let monotone = f1.windows(2).all(|w| w[1] < w[0]);
    check(
        monotone && repeatable,
        format!(
            "f1 at p = 0, 0.25, 0.5: {:.4}, {:.4}, {:.4}; repeat evaluation {}",
            f1[0],
            f1[1],
            f1[2],
            if repeatable { "identical" } else { "DIFFERS" }
        ),
    )
}

fn main() -> ExitCode {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let mut all = true;

    let c = Criterion { name: "gradient_fidelity", budget: secs(60) };
    let (v, t) = timed(gradient_fidelity);
    all &= report(&c, t, v);

    let c = Criterion { name: "gae_oracle", budget: secs(10) };
    let (v, t) = timed(gae_oracle);
    all &= report(&c, t, v);

    let c = Criterion { name: "hypervolume_exactness", budget: secs(60) };
    let (v, t) = timed(hypervolume_exactness);
    all &= report(&c, t, v);

    let c = Criterion { name: "archive_correctness", budget: secs(30) };
    let (v, t) = timed(archive_correctness);
    all &= report(&c, t, v);

    let c = Criterion { name: "env_conservation", budget: secs(30) };
    let (v, t) = timed(env_conservation);
    all &= report(&c, t, v);

    let scenario = Arc::new(ScenarioConfig::toy());
    let algo = AlgoConfig::toy();
    let c = Criterion { name: "learning_signal", budget: secs(30 * 60) };
    let ((runs, random), t) = timed(|| {
        let runs: Vec<Result<RunReport, String>> = MASTER_SEEDS
            .iter()
            .map(|&s| emoppo_tml(&scenario, &algo, s).map_err(|e| e.to_string()))
            .collect();
        (runs, random_point_hypervolume(&scenario, &algo))
    });
    let v = match random {
        Ok((hv, _)) => learning_signal(&runs, hv),
        Err(e) => Err(e),
    };
    all &= report(&c, t, v);

    let c = Criterion { name: "tradeoff_diversity", budget: None };
    all &= report(&c, Duration::ZERO, tradeoff_diversity(&runs));

    let c = Criterion { name: "scalarization_sanity", budget: None };
    let (v, t) = timed(|| scalarization_sanity(&scenario, &algo));
    all &= report(&c, t, v);

    let c = Criterion { name: "robustness", budget: None };
    let (v, t) = timed(|| robustness(&scenario, &algo));
    all &= report(&c, t, v);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
