//! Clipped-surrogate PPO over the recurrent Gaussian actor with a
//! vector-valued critic, and the multi-task runner that trains a set of
//! learning tasks independently.

mod gae;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gae::{
    clipped_surrogate, compute_gae, normalize_advantages, scalarize_advantage, AdvantageBatch, Surrogate, Vector,
};

use crate::env::ScenarioConfig;
use crate::momdp::{observation_len, rollout, Action, GreedyNetPolicy, MomdpError, WrsnMomdp};
use crate::nn::{Adam, Checkpoint, NnError, Parameterized, PolicyNet, PolicyShape, RecurrentState, Tensor2, ValueNet};
use crate::N_OBJECTIVES;

/// Bounds applied to the learned log standard deviation after each step.
const LOG_STD_RANGE: (f64, f64) = (-5.0, 1.0);

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("stale batch: collected with policy version {batch}, task is at version {current}")]
    StaleBatch { batch: u64, current: u64 },
    #[error("non-finite values after update of task {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Momdp(#[from] MomdpError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    /// Transitions per minibatch (rounded to whole sequence chunks).
    pub minibatch_size: usize,
    /// Length of the contiguous chunks used for recurrent minibatches.
    pub seq_len: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    /// Minimum transitions per iteration; whole episodes are collected.
    pub batch_transitions: usize,
    pub normalize_advantages: bool,
    pub hidden: usize,
    pub critic_hidden: usize,
    pub recurrent: bool,
    pub log_std_init: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch_size: 256,
            seq_len: 16,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            batch_transitions: 2048,
            normalize_advantages: true,
            hidden: 256,
            critic_hidden: 256,
            recurrent: true,
            log_std_init: -0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must lie in [0, 1], got {v}"))
            }
        };
        unit("gamma", self.gamma)?;
        unit("gae_lambda", self.gae_lambda)?;
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(format!("clip must lie in (0, 1), got {}", self.clip));
        }
        if self.seq_len == 0 || self.minibatch_size == 0 || self.batch_transitions == 0 {
            return Err("seq_len, minibatch_size and batch_transitions must be positive".into());
        }
        if self.hidden == 0 || self.critic_hidden == 0 {
            return Err("hidden sizes must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return Err("learning_rate and max_grad_norm must be positive".into());
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err("loss coefficients must be non-negative".into());
        }
        Ok(())
    }
}

/// Policy, critic and weight vector trained together.
#[derive(Debug, Clone)]
pub struct LearningTask {
    pub id: usize,
    /// Identifies the chain of parents this task descends from.
    pub lineage: u64,
    pub weight: Vector,
    pub policy: PolicyNet,
    pub critic: ValueNet,
    policy_opt: Adam,
    critic_opt: Adam,
    version: u64,
    rng: ChaCha8Rng,
    /// Evaluated objective vector, if any.
    pub objectives: Option<Vector>,
}

impl LearningTask {
    pub fn new(id: usize, weight: Vector, n_sensors: usize, cfg: &PpoConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs_dim = observation_len(n_sensors);
        let shape = PolicyShape {
            obs_dim,
            hidden: cfg.hidden,
            action_dim: 2,
            recurrent: cfg.recurrent,
            log_std_init: cfg.log_std_init,
        };
        let policy = PolicyNet::new(shape, &mut rng);
        let critic = ValueNet::new(obs_dim, cfg.critic_hidden, N_OBJECTIVES, &mut rng);
        Self::from_parts(id, id as u64, weight, policy, critic, cfg, rng.random())
    }

    pub fn from_parts(
        id: usize,
        lineage: u64,
        weight: Vector,
        policy: PolicyNet,
        critic: ValueNet,
        cfg: &PpoConfig,
        seed: u64,
    ) -> Self {
        Self {
            id,
            lineage,
            weight,
            policy_opt: Adam::new(&policy, cfg.learning_rate),
            critic_opt: Adam::new(&critic, cfg.learning_rate),
            policy,
            critic,
            version: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            objectives: None,
        }
    }

    /// Number of completed policy updates.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Copy that keeps the networks and optimizer state but trains under a
    /// different weight and random stream.
    pub fn offspring(&self, id: usize, weight: Vector, seed: u64) -> Self {
        let mut child = self.clone();
        child.id = id;
        child.weight = weight;
        child.rng = ChaCha8Rng::seed_from_u64(seed);
        child
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let sum: f64 = self.weight.iter().sum();
        if self.weight.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(PpoError::LengthMismatch(format!("weight {:?} is not on the simplex", self.weight)));
        }
        if self.policy.obs_dim() != self.critic.obs_dim() {
            return Err(PpoError::LengthMismatch("actor and critic input sizes differ".into()));
        }
        Ok(())
    }

    pub fn checkpoint(&self, seed: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(seed);
        ck.push_all(&self.policy);
        ck.push_all(&self.critic);
        ck.push("task.weight", Tensor2::row_vector(self.weight.to_vec()));
        if let Some(f) = self.objectives {
            ck.push("task.objectives", Tensor2::row_vector(f.to_vec()));
        }
        ck
    }
}

/// One collected episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub observations: Vec<Vec<f64>>,
    /// Pre-squash Gaussian samples.
    pub raw_actions: Vec<[f64; 2]>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<Vector>,
    pub values: Vec<Vector>,
    /// Recurrent state before each step.
    pub hidden: Vec<RecurrentState>,
    pub objectives: Vector,
    /// Per-objective discounted return.
    pub returns: Vector,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// On-policy data tagged with the policy version that produced it.
#[derive(Debug, Clone)]
pub struct Batch {
    pub task_id: usize,
    pub policy_version: u64,
    pub episodes: Vec<Episode>,
}

impl Batch {
    pub fn transitions(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }
}

fn log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

/// Samples whole episodes from the task's current policy until at least
/// `batch_transitions` transitions are gathered.
pub fn collect_batch(task: &mut LearningTask, scenario: &Arc<ScenarioConfig>, cfg: &PpoConfig) -> Result<Batch, PpoError> {
    let mut episodes = Vec::new();
    let mut total = 0;
    let max_step = scenario.charger.max_step;
    let log_std = task.policy.log_std.data().to_vec();
    while total < cfg.batch_transitions {
        let seed: u64 = task.rng.random();
        let (mut momdp, mut obs) = WrsnMomdp::reset(Arc::clone(scenario), seed)?;
        let mut state = task.policy.initial_state(1);
        let mut ep = Episode {
            observations: Vec::new(),
            raw_actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            hidden: Vec::new(),
            objectives: [0.0; N_OBJECTIVES],
            returns: [0.0; N_OBJECTIVES],
        };
        let mut metrics = Vec::new();
        while !momdp.is_done() {
            ep.hidden.push(state.clone());
            let mean = task.policy.act(&obs, &mut state)?;
            let u: [f64; 2] = std::array::from_fn(|k| {
                let eps: f64 = task.rng.sample(StandardNormal);
                mean[k] + log_std[k].exp() * eps
            });
            ep.log_probs.push(log_prob(&u, &mean, &log_std));
            let step = momdp.step(Action::squash(u, max_step))?;
            ep.raw_actions.push(u);
            ep.rewards.push(step.reward.r);
            metrics.push(step.metrics);
            ep.observations.push(std::mem::replace(&mut obs, step.observation));
        }
        let obs_t = Tensor2::from_fn(ep.len(), task.critic.obs_dim(), |r, c| ep.observations[r][c]);
        let v = task.critic.infer(&obs_t)?;
        ep.values = (0..ep.len()).map(|r| std::array::from_fn(|k| v.get(r, k))).collect();
        ep.objectives = crate::env::episode_objectives(&metrics);
        ep.returns = crate::momdp::discounted_return(&ep.rewards, cfg.gamma);
        total += ep.len();
        episodes.push(ep);
    }
    Ok(Batch {
        task_id: task.id,
        policy_version: task.version,
        episodes,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct UpdateStats {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    /// Largest ratio used inside a clipped branch (NaN if none was clipped).
    pub max_clipped_ratio: f64,
    pub min_clipped_ratio: f64,
}

/// GAE per episode, then batch-wide normalization and scalarization.
/// Returns `(scalar advantages, value targets)` in batch order.
pub fn prepare_advantages(batch: &Batch, weight: &Vector, cfg: &PpoConfig) -> Result<(Vec<f64>, Vec<Vector>), PpoError> {
    let mut advantages = Vec::with_capacity(batch.transitions());
    let mut targets = Vec::with_capacity(batch.transitions());
    for ep in &batch.episodes {
        let gae = compute_gae(&ep.rewards, &ep.values, [0.0; N_OBJECTIVES], cfg.gamma, cfg.gae_lambda)?;
        advantages.extend(gae.advantages);
        targets.extend(gae.value_targets);
    }
    if cfg.normalize_advantages {
        normalize_advantages(&mut advantages);
    }
    Ok((scalarize_advantage(&advantages, weight), targets))
}

/// Computes advantages for `batch` and runs the clipped update.
pub fn ppo_update(task: &mut LearningTask, batch: &Batch, cfg: &PpoConfig) -> Result<UpdateStats, PpoError> {
    check_fresh(task, batch)?;
    let (adv, targets) = prepare_advantages(batch, &task.weight, cfg)?;
    ppo_update_with(task, batch, &adv, &targets, cfg)
}

fn check_fresh(task: &LearningTask, batch: &Batch) -> Result<(), PpoError> {
    if batch.policy_version != task.version || batch.task_id != task.id {
        return Err(PpoError::StaleBatch {
            batch: batch.policy_version,
            current: task.version,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Chunk {
    episode: usize,
    start: usize,
    len: usize,
    /// Offset of the chunk's first transition in batch order.
    offset: usize,
}

/// Multi-epoch minibatch update with precomputed scalar advantages.
///
/// Minibatches are groups of contiguous sequence chunks; each chunk starts
/// from the recurrent state recorded during collection.
pub fn ppo_update_with(
    task: &mut LearningTask,
    batch: &Batch,
    advantages: &[f64],
    value_targets: &[Vector],
    cfg: &PpoConfig,
) -> Result<UpdateStats, PpoError> {
    check_fresh(task, batch)?;
    let n = batch.transitions();
    if advantages.len() != n || value_targets.len() != n {
        return Err(PpoError::LengthMismatch(format!(
            "{n} transitions, {} advantages, {} targets",
            advantages.len(),
            value_targets.len()
        )));
    }

    let mut chunks = sequence_chunks(batch, cfg.seq_len);
    let chunks_per_mb = (cfg.minibatch_size / cfg.seq_len).max(1);
    let obs_dim = task.policy.obs_dim();

    let mut stats = UpdateStats {
        max_clipped_ratio: f64::NAN,
        min_clipped_ratio: f64::NAN,
        ..Default::default()
    };
    let mut samples = 0usize;
    let mut clipped = 0usize;
    let mut n_minibatches = 0usize;

    for _ in 0..cfg.epochs {
        chunks.shuffle(&mut task.rng);
        for mb in chunks.chunks(chunks_per_mb) {
            let (s0, inputs) = minibatch_inputs(batch, mb, obs_dim)?;
            let mbg = minibatch_policy_grad(&task.policy, batch, mb, &inputs, &s0, advantages, cfg)?;
            let mut grads = mbg.grads;
            samples += mbg.samples;
            clipped += mbg.clipped;
            stats.mean_ratio += mbg.ratio_sum;
            stats.approx_kl += mbg.kl_sum;
            stats.max_clipped_ratio = stats.max_clipped_ratio.max(mbg.max_clipped_ratio);
            stats.min_clipped_ratio = stats.min_clipped_ratio.min(mbg.min_clipped_ratio);
            let policy_loss = mbg.loss;
            grads.clip_global_norm(cfg.max_grad_norm);
            task.policy_opt.step(&mut task.policy, &grads)?;
            for ls in task.policy.log_std.data_mut() {
                *ls = ls.clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1);
            }

            // Critic regression on the same transitions.
            let rows: Vec<(usize, usize)> = mb
                .iter()
                .flat_map(|c| (0..c.len).map(move |t| (c.episode, c.start + t)))
                .collect();
            let x = Tensor2::from_fn(rows.len(), obs_dim, |r, k| batch.episodes[rows[r].0].observations[rows[r].1][k]);
            let target_rows: Vec<Vector> = mb
                .iter()
                .flat_map(|c| (0..c.len).map(move |t| c.offset + t))
                .map(|i| value_targets[i])
                .collect();
            let (v, vtape) = task.critic.forward(&x)?;
            let denom = (rows.len() * N_OBJECTIVES) as f64;
            let mut value_loss = 0.0;
            let d_v = Tensor2::from_fn(rows.len(), N_OBJECTIVES, |r, k| {
                let diff = v.get(r, k) - target_rows[r][k];
                value_loss += 0.5 * diff * diff / denom;
                cfg.value_coef * diff / denom
            });
            let mut cgrads = task.critic.zeroed();
            task.critic.backward(&vtape, &d_v, &mut cgrads)?;
            cgrads.clip_global_norm(cfg.max_grad_norm);
            task.critic_opt.step(&mut task.critic, &cgrads)?;

            stats.policy_loss += policy_loss;
            stats.value_loss += value_loss;
            stats.entropy += entropy(task.policy.log_std.data());
            n_minibatches += 1;
        }
    }
    if !(task.policy.is_finite() && task.critic.is_finite()) {
        return Err(PpoError::NonFinite(task.id));
    }
    task.version += 1;
    if samples > 0 {
        stats.mean_ratio /= samples as f64;
        stats.approx_kl /= samples as f64;
        stats.clip_fraction = clipped as f64 / samples as f64;
    }
    if n_minibatches > 0 {
        stats.policy_loss /= n_minibatches as f64;
        stats.value_loss /= n_minibatches as f64;
        stats.entropy /= n_minibatches as f64;
    }
    Ok(stats)
}

struct MinibatchGrad {
    grads: PolicyNet,
    /// `-mean(surrogate) - entropy_coef * entropy`.
    loss: f64,
    samples: usize,
    clipped: usize,
    ratio_sum: f64,
    kl_sum: f64,
    max_clipped_ratio: f64,
    min_clipped_ratio: f64,
}

/// Actor loss and its gradient on one minibatch of chunks.
fn minibatch_policy_grad(
    policy: &PolicyNet,
    batch: &Batch,
    mb: &[Chunk],
    inputs: &[Tensor2],
    s0: &RecurrentState,
    advantages: &[f64],
    cfg: &PpoConfig,
) -> Result<MinibatchGrad, PpoError> {
    let b = mb.len();
    let (means, tape) = policy.forward_sequence(inputs, s0)?;
    let log_std = policy.log_std.data().to_vec();
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let n_valid: usize = mb.iter().map(|c| c.len).sum();
    let scale = 1.0 / n_valid as f64;

    let mut out = MinibatchGrad {
        grads: policy.zeroed(),
        loss: -cfg.entropy_coef * entropy(&log_std),
        samples: 0,
        clipped: 0,
        ratio_sum: 0.0,
        kl_sum: 0.0,
        max_clipped_ratio: f64::NAN,
        min_clipped_ratio: f64::NAN,
    };
    let mut d_means: Vec<Tensor2> = means.iter().map(|_| Tensor2::zeros(b, 2)).collect();
    let mut d_log_std = vec![-cfg.entropy_coef; log_std.len()];
    for (r, c) in mb.iter().enumerate() {
        let ep = &batch.episodes[c.episode];
        for t in 0..c.len {
            let idx = c.start + t;
            let mean = means[t].row(r);
            let u = &ep.raw_actions[idx];
            let lp = log_prob(u, mean, &log_std);
            let old = ep.log_probs[idx];
            let ratio = (lp - old).exp();
            let s = clipped_surrogate(ratio, advantages[c.offset + t], cfg.clip);
            if s.clipped {
                out.clipped += 1;
                let cr = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                out.max_clipped_ratio = out.max_clipped_ratio.max(cr);
                out.min_clipped_ratio = out.min_clipped_ratio.min(cr);
            }
            out.ratio_sum += ratio;
            out.kl_sum += old - lp;
            out.samples += 1;
            out.loss -= s.value * scale;
            // d(-surrogate)/d(log pi) = -d_ratio * ratio
            let g = -s.d_ratio * ratio * scale;
            if g != 0.0 {
                for k in 0..2 {
                    let diff = u[k] - mean[k];
                    let cur = d_means[t].get(r, k);
                    d_means[t].set(r, k, cur + g * diff * inv_var[k]);
                    d_log_std[k] += g * (diff * diff * inv_var[k] - 1.0);
                }
            }
        }
    }
    policy.backward(&tape, &d_means, &mut out.grads)?;
    for (g, d) in out.grads.log_std.data_mut().iter_mut().zip(&d_log_std) {
        *g += d;
    }
    Ok(out)
}

/// Splits every episode into contiguous chunks of at most `seq_len` steps.
fn sequence_chunks(batch: &Batch, seq_len: usize) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut offset = 0;
    for (e, ep) in batch.episodes.iter().enumerate() {
        let mut start = 0;
        while start < ep.len() {
            let len = seq_len.min(ep.len() - start);
            chunks.push(Chunk {
                episode: e,
                start,
                len,
                offset: offset + start,
            });
            start += len;
        }
        offset += ep.len();
    }
    chunks
}

/// Initial states and padded per-step inputs for a minibatch of chunks.
fn minibatch_inputs(batch: &Batch, mb: &[Chunk], obs_dim: usize) -> Result<(RecurrentState, Vec<Tensor2>), PpoError> {
    let steps = mb.iter().map(|c| c.len).max().unwrap_or(0);
    let snapshots: Vec<&RecurrentState> = mb
        .iter()
        .map(|c| &batch.episodes[c.episode].hidden[c.start])
        .collect();
    let s0 = RecurrentState::stack(&snapshots)?;
    let inputs = (0..steps)
        .map(|t| {
            Tensor2::from_fn(mb.len(), obs_dim, |r, k| {
                let c = &mb[r];
                if t < c.len {
                    batch.episodes[c.episode].observations[c.start + t][k]
                } else {
                    0.0
                }
            })
        })
        .collect();
    Ok((s0, inputs))
}

/// One row of the per-iteration training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub task_id: usize,
    pub mean_return_1: f64,
    pub mean_return_2: f64,
    pub mean_f1: f64,
    pub mean_f2: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

/// Runs `iterations` rounds of collect → advantages → update.
pub fn train_task(
    task: &mut LearningTask,
    iterations: usize,
    scenario: &Arc<ScenarioConfig>,
    cfg: &PpoConfig,
) -> Result<Vec<IterationDiagnostics>, PpoError> {
    task.validate()?;
    let mut log = Vec::with_capacity(iterations);
    for iteration in 0..iterations {
        let batch = collect_batch(task, scenario, cfg)?;
        let stats = ppo_update(task, &batch, cfg)?;
        let n = batch.episodes.len() as f64;
        let mean = |f: &dyn Fn(&Episode) -> f64| batch.episodes.iter().map(f).sum::<f64>() / n;
        log.push(IterationDiagnostics {
            iteration,
            task_id: task.id,
            mean_return_1: mean(&|e| e.returns[0]),
            mean_return_2: mean(&|e| e.returns[1]),
            mean_f1: mean(&|e| e.objectives[0]),
            mean_f2: mean(&|e| e.objectives[1]),
            clip_fraction: stats.clip_fraction,
            mean_ratio: stats.mean_ratio,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
        });
    }
    Ok(log)
}

/// Deterministic evaluation over a seed set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_seed: Vec<Vector>,
    /// Per-seed discounted returns.
    pub returns: Vec<Vector>,
    pub mean: Vector,
    pub mean_return: Vector,
}

/// Mean-action rollouts of `policy` on every seed, reduced in seed order.
pub fn evaluate_policy(
    policy: &PolicyNet,
    scenario: &Arc<ScenarioConfig>,
    seeds: &[u64],
    gamma: f64,
) -> Result<Evaluation, PpoError> {
    let results: Vec<Result<(Vector, Vector), PpoError>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut pol = GreedyNetPolicy::new(policy, scenario.charger.max_step);
            let r = rollout(&mut pol, Arc::clone(scenario), seed, gamma, None)?;
            Ok((r.objectives, r.returns))
        })
        .collect();
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut returns = Vec::with_capacity(seeds.len());
    for r in results {
        let (f, ret) = r?;
        per_seed.push(f);
        returns.push(ret);
    }
    Ok(Evaluation {
        mean: mean_vector(&per_seed),
        mean_return: mean_vector(&returns),
        per_seed,
        returns,
    })
}

fn mean_vector(xs: &[Vector]) -> Vector {
    let mut out = [0.0; N_OBJECTIVES];
    for x in xs {
        for k in 0..N_OBJECTIVES {
            out[k] += x[k];
        }
    }
    if !xs.is_empty() {
        out.iter_mut().for_each(|v| *v /= xs.len() as f64);
    }
    out
}

/// Result of training one task in [`lstm_mppo`].
#[derive(Debug)]
pub struct TaskRun {
    pub task: LearningTask,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub evaluation: Evaluation,
}

/// Trains every task independently for `iterations` rounds, then evaluates
/// each on `eval_seeds`. A failing task yields an error in its own slot.
pub fn lstm_mppo(
    tasks: Vec<LearningTask>,
    iterations: usize,
    scenario: &Arc<ScenarioConfig>,
    cfg: &PpoConfig,
    eval_seeds: &[u64],
) -> Vec<Result<TaskRun, PpoError>> {
    tasks
        .into_par_iter()
        .map(|mut task| {
            let diagnostics = train_task(&mut task, iterations, scenario, cfg)?;
            let evaluation = evaluate_policy(&task.policy, scenario, eval_seeds, cfg.gamma)?;
            task.objectives = Some(evaluation.mean);
            Ok(TaskRun {
                task,
                diagnostics,
                evaluation,
            })
        })
        .collect()
}

pub const DIAGNOSTICS_COLUMNS: [&str; 12] = [
    "iteration",
    "task_id",
    "mean_return_1",
    "mean_return_2",
    "mean_f1",
    "mean_f2",
    "clip_fraction",
    "mean_ratio",
    "policy_loss",
    "value_loss",
    "entropy",
    "approx_kl",
];

pub fn write_diagnostics_csv<W: Write>(out: W, rows: &[IterationDiagnostics]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(DIAGNOSTICS_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}
