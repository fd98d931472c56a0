//! Multi-objective MDP view of the simulator: observation encoding, action
//! squashing, the two-component reward and episode rollouts.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::env::trace::{SlotRecord, TRACE_COLUMNS};
use crate::env::{episode_objectives, Env, EnvError, NetworkState, ScenarioConfig, SlotLedger, SlotMetrics};
use crate::nn::{NnError, PolicyNet, RecurrentState};
use crate::N_OBJECTIVES;

#[derive(Debug, Error)]
pub enum MomdpError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Length of the flat observation for `n_sensors` sensors.
pub fn observation_len(n_sensors: usize) -> usize {
    5 + 3 * n_sensors
}

/// Flat observation: charger `(x, y, E)`, pile `(x, y)`, then `(x, y, E)`
/// per sensor in index order. Positions are scaled by the area, energies by
/// the relevant capacity.
pub fn encode_observation(state: &NetworkState, cfg: &ScenarioConfig) -> Vec<f64> {
    let [xm, ym] = cfg.network.area;
    let unit = |v: f64| v.clamp(0.0, 1.0);
    let cap = cfg.sensor_capacity();
    let mut obs = Vec::with_capacity(observation_len(state.sensors.len()));
    obs.push(unit(state.charger.position[0] / xm));
    obs.push(unit(state.charger.position[1] / ym));
    obs.push(unit(state.charger.remaining_energy / cfg.charger.capacity));
    obs.push(unit(cfg.pile.position[0] / xm));
    obs.push(unit(cfg.pile.position[1] / ym));
    for s in &state.sensors {
        obs.push(unit(s.position[0] / xm));
        obs.push(unit(s.position[1] / ym));
        obs.push(unit(s.remaining_energy / cap));
    }
    obs
}

/// Movement command for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    /// Heading in `[0, 2π]`.
    pub theta: f64,
    /// Distance in `[0, max_step]`.
    pub distance: f64,
}

impl Action {
    /// Maps unbounded policy outputs onto the action box:
    /// `θ = π(1 + tanh u0)`, `d = d_max (1 + tanh u1) / 2`.
    pub fn squash(u: [f64; 2], max_step: f64) -> Self {
        Self {
            theta: PI * (1.0 + u[0].tanh()),
            distance: 0.5 * max_step * (1.0 + u[1].tanh()),
        }
    }
}

/// Vector reward of one slot with the shared terms broken out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardVec {
    pub r: [f64; N_OBJECTIVES],
    pub r_bound: f64,
    pub r_charge: f64,
}

/// Assembles `r1 = r_bound + r_charge + a E_charge + c/(N_dead + 1)` and
/// `r2 = r_bound + r_charge + b E_charge / E_sum` (ratio 0 when `E_sum = 0`).
///
/// `dock_onset` marks the first slot of a docking period; the pile bonus is
/// paid once per visit.
pub fn reward_vector(ledger: &SlotLedger, dock_onset: bool, cfg: &ScenarioConfig) -> RewardVec {
    let w = &cfg.reward;
    let r_bound = if ledger.boundary_violation { w.r_bound } else { 0.0 };
    let r_charge = if dock_onset { w.r_charge } else { 0.0 };
    let e_charge = ledger.e_charge_total();
    let ratio = if ledger.e_sum > 0.0 { e_charge / ledger.e_sum } else { 0.0 };
    RewardVec {
        r: [
            r_bound + r_charge + w.a * e_charge + w.c / (ledger.n_dead as f64 + 1.0),
            r_bound + r_charge + w.b * ratio,
        ],
        r_bound,
        r_charge,
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: RewardVec,
    pub done: bool,
    pub ledger: SlotLedger,
    pub metrics: SlotMetrics,
    pub record: SlotRecord,
}

/// The simulator behind the MOMDP interface.
#[derive(Debug, Clone)]
pub struct WrsnMomdp {
    env: Env,
}

impl WrsnMomdp {
    pub fn reset(cfg: Arc<ScenarioConfig>, seed: u64) -> Result<(Self, Vec<f64>), MomdpError> {
        Ok(Self::from_env(Env::new(cfg, seed)?))
    }

    pub fn from_env(env: Env) -> (Self, Vec<f64>) {
        let obs = encode_observation(env.state(), env.config());
        (Self { env }, obs)
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn config(&self) -> &ScenarioConfig {
        self.env.config()
    }

    pub fn state(&self) -> &NetworkState {
        self.env.state()
    }

    pub fn is_done(&self) -> bool {
        self.env.is_done()
    }

    pub fn observation(&self) -> Vec<f64> {
        encode_observation(self.env.state(), self.env.config())
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, MomdpError> {
        let was_docked = self.env.state().charger.docked;
        let outcome = self.env.advance(action.theta, action.distance)?;
        let reward = reward_vector(&outcome.ledger, outcome.ledger.docked && !was_docked, self.env.config());
        let record = SlotRecord::capture(self.env.state(), &outcome);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.env.is_done(),
            metrics: outcome.metrics,
            ledger: outcome.ledger,
            record,
        })
    }
}

/// Anything that maps observations to actions over an episode.
pub trait Policy {
    /// Called before the first step of every episode.
    fn begin_episode(&mut self);
    fn act(&mut self, observation: &[f64]) -> Result<Action, MomdpError>;
}

/// Deterministic (mean-action) evaluation of a network policy.
#[derive(Debug, Clone)]
pub struct GreedyNetPolicy<'a> {
    net: &'a PolicyNet,
    state: RecurrentState,
    max_step: f64,
}

impl<'a> GreedyNetPolicy<'a> {
    pub fn new(net: &'a PolicyNet, max_step: f64) -> Self {
        Self {
            net,
            state: net.initial_state(1),
            max_step,
        }
    }
}

impl Policy for GreedyNetPolicy<'_> {
    fn begin_episode(&mut self) {
        self.state = self.net.initial_state(1);
    }

    fn act(&mut self, observation: &[f64]) -> Result<Action, MomdpError> {
        let u = self.net.act(observation, &mut self.state)?;
        Ok(Action::squash([u[0], u[1]], self.max_step))
    }
}

/// Stochastic evaluation of a network policy: Gaussian samples around the
/// mean with the learned standard deviation, drawn from a seeded stream.
#[derive(Debug, Clone)]
pub struct SampledNetPolicy<'a> {
    net: &'a PolicyNet,
    state: RecurrentState,
    max_step: f64,
    rng: ChaCha8Rng,
}

impl<'a> SampledNetPolicy<'a> {
    pub fn new(net: &'a PolicyNet, max_step: f64, seed: u64) -> Self {
        Self {
            net,
            state: net.initial_state(1),
            max_step,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for SampledNetPolicy<'_> {
    fn begin_episode(&mut self) {
        self.state = self.net.initial_state(1);
    }

    fn act(&mut self, observation: &[f64]) -> Result<Action, MomdpError> {
        let mean = self.net.act(observation, &mut self.state)?;
        let std = self.net.log_std.data();
        let u: [f64; 2] = std::array::from_fn(|k| {
            let eps: f64 = self.rng.sample(StandardNormal);
            mean[k] + std[k].exp() * eps
        });
        Ok(Action::squash(u, self.max_step))
    }
}

/// Plays a fixed action every slot.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn begin_episode(&mut self) {}

    fn act(&mut self, _: &[f64]) -> Result<Action, MomdpError> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Action,
    pub reward: RewardVec,
    pub next_observation: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub records: Vec<SlotRecord>,
    pub metrics: Vec<SlotMetrics>,
    /// Episode means of survival rate and efficiency.
    pub objectives: [f64; N_OBJECTIVES],
    /// Per-objective discounted return `Σ γ^t r_t`.
    pub returns: [f64; N_OBJECTIVES],
}

/// Runs one episode of at most `max_slots` slots (the scenario horizon if `None`).
pub fn rollout(
    policy: &mut impl Policy,
    cfg: Arc<ScenarioConfig>,
    seed: u64,
    gamma: f64,
    max_slots: Option<usize>,
) -> Result<Rollout, MomdpError> {
    let (momdp, obs) = WrsnMomdp::reset(cfg, seed)?;
    rollout_from(policy, momdp, obs, gamma, max_slots)
}

/// As [`rollout`], starting from an already constructed MOMDP.
pub fn rollout_from(
    policy: &mut impl Policy,
    mut momdp: WrsnMomdp,
    mut obs: Vec<f64>,
    gamma: f64,
    max_slots: Option<usize>,
) -> Result<Rollout, MomdpError> {
    let limit = max_slots.unwrap_or(usize::MAX);
    policy.begin_episode();
    let mut transitions = Vec::new();
    let mut records = Vec::new();
    let mut metrics = Vec::new();
    let mut returns = [0.0; N_OBJECTIVES];
    let mut discount = 1.0;
    while !momdp.is_done() && transitions.len() < limit {
        let action = policy.act(&obs)?;
        let step = momdp.step(action)?;
        for (acc, r) in returns.iter_mut().zip(step.reward.r) {
            *acc += discount * r;
        }
        discount *= gamma;
        metrics.push(step.metrics);
        records.push(step.record);
        transitions.push(Transition {
            observation: std::mem::replace(&mut obs, step.observation.clone()),
            action,
            reward: step.reward,
            next_observation: step.observation,
            done: step.done,
        });
    }
    Ok(Rollout {
        objectives: episode_objectives(&metrics),
        transitions,
        records,
        metrics,
        returns,
    })
}

/// Discounted sum of a reward sequence, per objective.
pub fn discounted_return(rewards: &[[f64; N_OBJECTIVES]], gamma: f64) -> [f64; N_OBJECTIVES] {
    let mut out = [0.0; N_OBJECTIVES];
    for r in rewards.iter().rev() {
        for k in 0..N_OBJECTIVES {
            out[k] = r[k] + gamma * out[k];
        }
    }
    out
}

pub const REWARD_TRACE_COLUMNS: [&str; 11] = [
    TRACE_COLUMNS[0],
    TRACE_COLUMNS[1],
    TRACE_COLUMNS[2],
    TRACE_COLUMNS[3],
    TRACE_COLUMNS[4],
    TRACE_COLUMNS[5],
    TRACE_COLUMNS[6],
    TRACE_COLUMNS[7],
    TRACE_COLUMNS[8],
    "r1",
    "r2",
];

/// Slot trace with the two reward columns appended.
pub fn write_reward_trace_csv<W: Write>(out: W, rollout: &Rollout) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REWARD_TRACE_COLUMNS)?;
    for (rec, tr) in rollout.records.iter().zip(&rollout.transitions) {
        let mut row = rec.fields();
        row.push(tr.reward.r[0].to_string());
        row.push(tr.reward.r[1].to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
