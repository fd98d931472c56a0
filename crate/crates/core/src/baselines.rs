//! Comparison policies that run through the same rollout interface as the
//! learned ones: uniform random actions, a greedy lowest-energy chaser and a
//! fixed-weight feed-forward PPO.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::ScenarioConfig;
use crate::momdp::{rollout, Action, GreedyNetPolicy, MomdpError, Policy, Rollout, SampledNetPolicy};
use crate::nn::PolicyNet;
use crate::ppo::{train_task, IterationDiagnostics, LearningTask, PpoConfig, PpoError, Vector};
use crate::{mix_seed, N_OBJECTIVES};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid baseline spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Momdp(#[from] MomdpError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    GreedyEmergency,
    ScalarPpo,
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "greedy_emergency" => Ok(Self::GreedyEmergency),
            "scalar_ppo" => Ok(Self::ScalarPpo),
            other => Err(format!(
                "unknown baseline `{other}` (expected random, greedy_emergency or scalar_ppo)"
            )),
        }
    }
}

/// How a trained network picks actions during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Gaussian mean.
    Mean,
    /// Seeded samples from the Gaussian policy.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    /// Scalarization weight; used by `scalar_ppo` only.
    pub weight: Vector,
    pub seed: u64,
    /// Training iterations for `scalar_ppo`.
    pub train_iters: usize,
    /// Training settings for `scalar_ppo`; the policy is always feed-forward.
    pub ppo: PpoConfig,
    pub eval_mode: EvalMode,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind, seed: u64) -> Self {
        Self {
            kind,
            weight: [0.5, 0.5],
            seed,
            train_iters: 50,
            ppo: PpoConfig::default(),
            eval_mode: EvalMode::Sampled,
        }
    }

    pub fn scalar_ppo(weight: Vector, seed: u64, train_iters: usize, ppo: PpoConfig) -> Self {
        Self {
            kind: BaselineKind::ScalarPpo,
            weight,
            seed,
            train_iters,
            ppo,
            eval_mode: EvalMode::Sampled,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.kind == BaselineKind::ScalarPpo {
            let w = self.weight;
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (w[0] + w[1] - 1.0).abs() > 1e-9 {
                return Err(BaselineError::Spec(format!("weight {w:?} is not on the simplex")));
            }
            self.ppo.validate().map_err(BaselineError::Spec)?;
        }
        Ok(())
    }
}

/// Uniform headings and distances.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    max_step: f64,
}

impl RandomPolicy {
    pub fn new(seed: u64, max_step: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_step,
        }
    }
}

impl Policy for RandomPolicy {
    fn begin_episode(&mut self) {}

    fn act(&mut self, _: &[f64]) -> Result<Action, MomdpError> {
        Ok(Action {
            theta: self.rng.random_range(0.0..TAU),
            distance: self.rng.random_range(0.0..=self.max_step),
        })
    }
}

/// Heads for the alive sensor with the least energy (lowest index on ties),
/// at most `max_step` per slot. Reads positions and energies back out of
/// the observation.
#[derive(Debug, Clone)]
pub struct GreedyEmergencyPolicy {
    area: [f64; 2],
    capacity: f64,
    alive_threshold: f64,
    max_step: f64,
}

impl GreedyEmergencyPolicy {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            area: cfg.network.area,
            capacity: cfg.sensor_capacity(),
            alive_threshold: cfg.network.alive_threshold,
            max_step: cfg.charger.max_step,
        }
    }

    fn target(&self, obs: &[f64]) -> Option<[f64; 2]> {
        let mut best: Option<(f64, [f64; 2])> = None;
        for s in obs[5..].chunks_exact(3) {
            let energy = s[2] * self.capacity;
            if energy <= self.alive_threshold {
                continue;
            }
            if best.is_none_or(|(e, _)| energy < e) {
                best = Some((energy, [s[0] * self.area[0], s[1] * self.area[1]]));
            }
        }
        best.map(|(_, p)| p)
    }
}

impl Policy for GreedyEmergencyPolicy {
    fn begin_episode(&mut self) {}

    fn act(&mut self, obs: &[f64]) -> Result<Action, MomdpError> {
        let here = [obs[0] * self.area[0], obs[1] * self.area[1]];
        let Some(goal) = self.target(obs) else {
            return Ok(Action {
                theta: 0.0,
                distance: 0.0,
            });
        };
        let (dx, dy) = (goal[0] - here[0], goal[1] - here[1]);
        Ok(Action {
            theta: dy.atan2(dx).rem_euclid(TAU),
            distance: dx.hypot(dy).min(self.max_step),
        })
    }
}

/// Objective statistics over an evaluation seed set.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStats {
    pub per_seed: Vec<Vector>,
    pub mean: Vector,
    /// Sample standard deviation (0 for a single seed).
    pub std: Vector,
}

impl BaselineStats {
    pub fn from_samples(per_seed: Vec<Vector>) -> Self {
        let n = per_seed.len() as f64;
        let mut mean = [0.0; N_OBJECTIVES];
        let mut std = [0.0; N_OBJECTIVES];
        if !per_seed.is_empty() {
            for k in 0..N_OBJECTIVES {
                mean[k] = per_seed.iter().map(|f| f[k]).sum::<f64>() / n;
                if per_seed.len() > 1 {
                    let ss: f64 = per_seed.iter().map(|f| (f[k] - mean[k]).powi(2)).sum();
                    std[k] = (ss / (n - 1.0)).sqrt();
                }
            }
        }
        Self { per_seed, mean, std }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub stats: BaselineStats,
    /// One evaluation episode per seed, in seed order.
    pub rollouts: Vec<Rollout>,
    /// Trained network for `scalar_ppo`.
    pub policy: Option<PolicyNet>,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Trains the fixed-weight feed-forward PPO task of `spec`.
pub fn train_scalar_ppo(
    spec: &BaselineSpec,
    scenario: &Arc<ScenarioConfig>,
) -> Result<(LearningTask, Vec<IterationDiagnostics>), BaselineError> {
    spec.validate()?;
    let ppo = PpoConfig {
        recurrent: false,
        ..spec.ppo.clone()
    };
    let mut task = LearningTask::new(0, spec.weight, scenario.network.n_sensors, &ppo, spec.seed);
    let diagnostics = train_task(&mut task, spec.train_iters, scenario, &ppo)?;
    Ok((task, diagnostics))
}

/// Evaluates the baseline of `spec` on every seed (training first for
/// `scalar_ppo`).
pub fn run_baseline(
    spec: &BaselineSpec,
    scenario: &Arc<ScenarioConfig>,
    seeds: &[u64],
) -> Result<BaselineRun, BaselineError> {
    spec.validate()?;
    let (policy, diagnostics) = match spec.kind {
        BaselineKind::ScalarPpo => {
            let (task, diag) = train_scalar_ppo(spec, scenario)?;
            (Some(task.policy), diag)
        }
        _ => (None, Vec::new()),
    };
    let gamma = spec.ppo.gamma;
    let max_step = scenario.charger.max_step;
    let rollouts = match &policy {
        Some(net) => evaluate_network(net, scenario, seeds, spec.eval_mode, spec.seed, gamma)?,
        None => {
            let results: Vec<Result<Rollout, MomdpError>> = seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = Arc::clone(scenario);
                    if spec.kind == BaselineKind::Random {
                        let mut pol = RandomPolicy::new(mix_seed(spec.seed, seed), max_step);
                        rollout(&mut pol, cfg, seed, gamma, None)
                    } else {
                        rollout(&mut GreedyEmergencyPolicy::new(scenario), cfg, seed, gamma, None)
                    }
                })
                .collect();
            results.into_iter().collect::<Result<Vec<_>, _>>()?
        }
    };
    Ok(BaselineRun {
        stats: BaselineStats::from_samples(rollouts.iter().map(|r| r.objectives).collect()),
        rollouts,
        policy,
        diagnostics,
    })
}

/// One episode of `net` per seed, in seed order. Sampled actions draw from
/// a stream keyed by `(sample_seed, episode seed)`.
pub fn evaluate_network(
    net: &PolicyNet,
    scenario: &Arc<ScenarioConfig>,
    seeds: &[u64],
    mode: EvalMode,
    sample_seed: u64,
    gamma: f64,
) -> Result<Vec<Rollout>, BaselineError> {
    let max_step = scenario.charger.max_step;
    let results: Vec<Result<Rollout, MomdpError>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = Arc::clone(scenario);
            match mode {
                EvalMode::Mean => rollout(&mut GreedyNetPolicy::new(net, max_step), cfg, seed, gamma, None),
                EvalMode::Sampled => {
                    let mut pol = SampledNetPolicy::new(net, max_step, mix_seed(sample_seed, seed));
                    rollout(&mut pol, cfg, seed, gamma, None)
                }
            }
        })
        .collect();
    Ok(results.into_iter().collect::<Result<Vec<_>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ChargerState, Env, NetworkState, SensorState};
    use crate::momdp::{rollout_from, WrsnMomdp};

    #[test]
    fn stats_use_sample_deviation() {
        let s = BaselineStats::from_samples(vec![[0.0, 1.0], [2.0, 1.0]]);
        assert_eq!(s.mean, [1.0, 1.0]);
        assert!((s.std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.std[1], 0.0);
        assert_eq!(BaselineStats::from_samples(vec![[0.3, 0.2]]).std, [0.0, 0.0]);
    }

    #[test]
    fn random_without_charging_has_zero_efficiency() {
        let mut cfg = ScenarioConfig::toy();
        cfg.wpt.alpha = 0.0;
        let run = run_baseline(&BaselineSpec::new(BaselineKind::Random, 3), &Arc::new(cfg), &[1, 2, 3]).unwrap();
        for f in &run.stats.per_seed {
            assert_eq!(f[1], 0.0);
        }
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        let sc = Arc::new(ScenarioConfig::toy());
        let spec = BaselineSpec::new(BaselineKind::Random, 9);
        let a = run_baseline(&spec, &sc, &[4, 5]).unwrap();
        let b = run_baseline(&spec, &sc, &[4]).unwrap();
        assert_eq!(a.stats.per_seed[0], b.stats.per_seed[0]);
        assert_eq!(a.rollouts[0].records, b.rollouts[0].records);
    }

    fn lone_sensor(cfg: &ScenarioConfig, at: [f64; 2]) -> NetworkState {
        NetworkState::new(
            vec![SensorState {
                position: at,
                remaining_energy: 1.0,
                drain_rate: 0.01,
                alive: true,
            }],
            ChargerState {
                position: cfg.charger.start,
                remaining_energy: cfg.charger.capacity,
                docked: false,
            },
        )
    }

    #[test]
    fn greedy_reaches_sensor_in_geometric_step_count() {
        let mut cfg = ScenarioConfig::toy();
        cfg.network.n_sensors = 1;
        let cfg = Arc::new(cfg);
        let target = cfg.pile.position;
        let dist = (target[0] - cfg.charger.start[0]).hypot(target[1] - cfg.charger.start[1]);
        let slots = (dist / cfg.charger.max_step).ceil() as usize;

        let env = Env::from_state(Arc::clone(&cfg), lone_sensor(&cfg, target), 0).unwrap();
        let (momdp, obs) = WrsnMomdp::from_env(env);
        let mut pol = GreedyEmergencyPolicy::new(&cfg);
        let r = rollout_from(&mut pol, momdp, obs, 0.98, Some(slots + 3)).unwrap();
        let gap = |k: usize| {
            let p = r.records[k].charger_position;
            (p[0] - target[0]).hypot(p[1] - target[1])
        };
        assert!(gap(slots - 1) <= cfg.charger.charge_radius);
        assert!(gap(slots - 1) < 1e-9);
        if slots >= 2 {
            assert!(gap(slots - 2) > 1e-9);
        }
        for k in slots..r.records.len() {
            assert!(gap(k) < 1e-9);
        }
    }

    #[test]
    fn greedy_prefers_lowest_energy_then_lowest_index() {
        let cfg = ScenarioConfig::toy();
        let pol = GreedyEmergencyPolicy::new(&cfg);
        let mut obs = vec![0.0, 0.0, 1.0, 0.5, 0.5];
        obs.extend([0.1, 0.1, 0.5, 0.2, 0.2, 0.3, 0.3, 0.3, 0.3, 0.9, 0.9, 0.0]);
        let t = pol.target(&obs).unwrap();
        assert!((t[0] - 20.0).abs() < 1e-9 && (t[1] - 20.0).abs() < 1e-9);

        let act = {
            let mut p = pol.clone();
            p.act(&obs).unwrap()
        };
        assert!((act.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((act.distance - cfg.charger.max_step.min(20.0 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn scalar_spec_validation() {
        let mut spec = BaselineSpec::scalar_ppo([0.7, 0.7], 0, 1, PpoConfig::default());
        assert!(matches!(spec.validate(), Err(BaselineError::Spec(_))));
        spec.weight = [0.3, 0.7];
        assert!(spec.validate().is_ok());
        assert_eq!("greedy_emergency".parse::<BaselineKind>(), Ok(BaselineKind::GreedyEmergency));
        assert!("nope".parse::<BaselineKind>().is_err());
    }
}
