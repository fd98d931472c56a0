//! Slot-by-slot physical simulation of a mobile-charger-assisted wireless
//! rechargeable sensor network.
//!
//! One slot applies, in order: the pile docking rule, either docking or
//! (move, then charge at the new position), sensor drain, and per-slot metrics.

mod config;
pub mod trace;

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{
    ChargerConfig, EpisodeConfig, NetworkConfig, PileConfig, RewardConfig, ScenarioConfig,
    WptConfig, SCENARIO_SCHEMA,
};

use crate::mix_seed;

const LAYOUT_STREAM: u64 = 0x4c41_594f_5554;
const EPISODE_STREAM: u64 = 0x4550_4953_4f44;
/// Direction components smaller than this are treated as exactly zero when
/// intersecting the movement ray with the area boundary.
const AXIS_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("bad scenario config: {0}")]
    BadConfig(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("charger is not within pile proximity ({distance:.3} m > {proximity:.3} m)")]
    NotAtPile { distance: f64, proximity: f64 },
    #[error("charger is docked; node charging is not possible this slot")]
    Docked,
    #[error("episode is already done")]
    EpisodeDone,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorState {
    pub position: [f64; 2],
    pub remaining_energy: f64,
    /// Joules drained per slot.
    pub drain_rate: f64,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargerState {
    pub position: [f64; 2],
    pub remaining_energy: f64,
    pub docked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub slot: usize,
    pub sensors: Vec<SensorState>,
    pub charger: ChargerState,
    survival_sum: f64,
    efficiency_sum: f64,
}

impl NetworkState {
    pub fn new(sensors: Vec<SensorState>, charger: ChargerState) -> Self {
        Self {
            slot: 0,
            sensors,
            charger,
            survival_sum: 0.0,
            efficiency_sum: 0.0,
        }
    }

    pub fn alive_count(&self) -> usize {
        self.sensors.iter().filter(|s| s.alive).count()
    }

    /// Running mean of per-slot survival rate (f1 so far).
    pub fn mean_survival(&self) -> f64 {
        if self.slot == 0 {
            0.0
        } else {
            self.survival_sum / self.slot as f64
        }
    }

    /// Running mean of per-slot energy usage efficiency (f2 so far).
    pub fn mean_efficiency(&self) -> f64 {
        if self.slot == 0 {
            0.0
        } else {
            self.efficiency_sum / self.slot as f64
        }
    }

    fn record(&mut self, metrics: SlotMetrics) {
        self.slot += 1;
        self.survival_sum += metrics.survival;
        self.efficiency_sum += metrics.efficiency;
    }
}

/// Energy bookkeeping for one slot. All entries are non-negative.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotLedger {
    pub e_move: f64,
    /// Transmit energy spent on node charging.
    pub e_tx: f64,
    pub e_charge: Vec<f64>,
    pub e_loss: Vec<f64>,
    pub pile_transfer_in: f64,
    /// `e_move + sum(e_charge + e_loss)`.
    pub e_sum: f64,
    pub n_dead: usize,
    pub traveled: f64,
    pub boundary_violation: bool,
    pub docked: bool,
    pub depleted: bool,
}

impl SlotLedger {
    pub fn empty(n_sensors: usize) -> Self {
        Self {
            e_charge: vec![0.0; n_sensors],
            e_loss: vec![0.0; n_sensors],
            ..Self::default()
        }
    }

    pub fn e_charge_total(&self) -> f64 {
        self.e_charge.iter().sum()
    }

    pub fn e_loss_total(&self) -> f64 {
        self.e_loss.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotMetrics {
    pub survival: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveOutcome {
    pub traveled: f64,
    pub e_move: f64,
    pub boundary_violation: bool,
    pub depleted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeOutcome {
    pub e_tx: f64,
    pub e_charge: Vec<f64>,
    pub e_loss: Vec<f64>,
    pub depleted: bool,
}

/// Power received by a sensor at distance `d` from the charger.
pub fn wpt_received_power(d: f64, cfg: &ScenarioConfig) -> f64 {
    if d > cfg.charger.charge_radius {
        0.0
    } else {
        cfg.wpt.alpha / (d + cfg.wpt.beta).powi(2)
    }
}

/// Resonant inductive link efficiency between the pile and the charger.
pub fn pile_efficiency(coupling: f64, q_s: f64, q_r: f64) -> f64 {
    let x = coupling * coupling * q_s * q_r;
    x / (1.0 + (1.0 + x).sqrt()).powi(2)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Moves the charger along heading `theta` for up to `distance` meters.
///
/// Movement stops at the first boundary crossing (flagged as a violation) or
/// where the battery runs out (flagged as depleted).
pub fn move_charger(
    charger: &mut ChargerState,
    theta: f64,
    distance: f64,
    cfg: &ScenarioConfig,
) -> Result<MoveOutcome, EnvError> {
    if !(theta.is_finite() && (0.0..=TAU).contains(&theta)) {
        return Err(EnvError::InvalidAction(format!("heading {theta} outside [0, 2pi]")));
    }
    if !(distance.is_finite() && distance >= 0.0 && distance <= cfg.diagonal()) {
        return Err(EnvError::InvalidAction(format!(
            "distance {distance} outside [0, {}]",
            cfg.diagonal()
        )));
    }
    let area = cfg.network.area;
    let dir = [theta.cos(), theta.sin()];

    let mut bound = distance;
    for axis in 0..2 {
        let p = charger.position[axis];
        let limit = if dir[axis] > AXIS_EPS {
            (area[axis] - p) / dir[axis]
        } else if dir[axis] < -AXIS_EPS {
            p / -dir[axis]
        } else {
            f64::INFINITY
        };
        bound = bound.min(limit.max(0.0));
    }
    let boundary_violation = bound < distance;

    let reachable = charger.remaining_energy / cfg.charger.move_cost;
    let depleted = reachable < bound;
    let traveled = bound.min(reachable);
    let e_move = cfg.charger.move_cost * traveled;

    for axis in 0..2 {
        let p = charger.position[axis] + traveled * dir[axis];
        charger.position[axis] = p.clamp(0.0, area[axis]);
    }
    charger.remaining_energy = (charger.remaining_energy - e_move).max(0.0);

    Ok(MoveOutcome {
        traveled,
        e_move,
        boundary_violation,
        depleted,
    })
}

/// Charges every alive sensor within the charging radius of the charger.
///
/// The charger spends `W_0 * tau` whenever at least one alive sensor is in
/// range; whatever the sensors do not absorb is booked as loss, split across
/// the in-range sensors in proportion to what each received.
pub fn charge_in_range(
    state: &mut NetworkState,
    cfg: &ScenarioConfig,
) -> Result<ChargeOutcome, EnvError> {
    if state.charger.docked {
        return Err(EnvError::Docked);
    }
    let n = state.sensors.len();
    let mut out = ChargeOutcome {
        e_tx: 0.0,
        e_charge: vec![0.0; n],
        e_loss: vec![0.0; n],
        depleted: false,
    };
    let tau = cfg.network.slot_duration;
    let in_range: Vec<(usize, f64)> = state
        .sensors
        .iter()
        .enumerate()
        .filter(|(_, s)| s.alive)
        .map(|(i, s)| (i, distance(s.position, state.charger.position)))
        .filter(|&(_, d)| d <= cfg.charger.charge_radius)
        .collect();
    if in_range.is_empty() {
        return Ok(out);
    }

    let nominal = cfg.charger.transmit_power * tau;
    let available = state.charger.remaining_energy;
    let scale = if available >= nominal { 1.0 } else { available / nominal };
    out.depleted = scale < 1.0;
    out.e_tx = nominal * scale;

    let mut offered: Vec<f64> = in_range
        .iter()
        .map(|&(_, d)| wpt_received_power(d, cfg) * tau * scale)
        .collect();
    // Sensors can never receive more than the charger transmitted.
    let offered_total: f64 = offered.iter().sum();
    if offered_total > out.e_tx {
        let shrink = out.e_tx / offered_total;
        offered.iter_mut().for_each(|e| *e *= shrink);
    }

    let capacity = cfg.sensor_capacity();
    for (&(i, _), &e) in in_range.iter().zip(&offered) {
        let headroom = (capacity - state.sensors[i].remaining_energy).max(0.0);
        out.e_charge[i] = e.min(headroom);
    }
    let delivered: f64 = out.e_charge.iter().sum();
    let loss_total = (out.e_tx - delivered).max(0.0);
    if delivered > 0.0 {
        for &(i, _) in &in_range {
            out.e_loss[i] = loss_total * out.e_charge[i] / delivered;
        }
    } else {
        let share = loss_total / in_range.len() as f64;
        for &(i, _) in &in_range {
            out.e_loss[i] = share;
        }
    }

    for &(i, _) in &in_range {
        let s = &mut state.sensors[i];
        s.remaining_energy = (s.remaining_energy + out.e_charge[i]).min(capacity);
    }
    state.charger.remaining_energy = (state.charger.remaining_energy - out.e_tx).max(0.0);
    Ok(out)
}

/// Recharges a charger sitting within pile proximity; returns the energy gained.
pub fn dock_and_recharge(charger: &mut ChargerState, cfg: &ScenarioConfig) -> Result<f64, EnvError> {
    let d = distance(charger.position, cfg.pile.position);
    if d > cfg.pile.proximity {
        return Err(EnvError::NotAtPile {
            distance: d,
            proximity: cfg.pile.proximity,
        });
    }
    let zeta = pile_efficiency(
        cfg.pile.coupling,
        cfg.pile.quality_factors[0],
        cfg.pile.quality_factors[1],
    );
    let offered = zeta * cfg.pile.power * cfg.network.slot_duration;
    let gain = offered.min((cfg.charger.capacity - charger.remaining_energy).max(0.0));
    charger.remaining_energy += gain;
    charger.docked = true;
    Ok(gain)
}

/// Drains every alive sensor by its rate (doubled per `doubling[i]`) and
/// returns the number of dead sensors afterwards.
pub fn drain_sensors(sensors: &mut [SensorState], doubling: &[bool], alive_threshold: f64) -> usize {
    debug_assert_eq!(sensors.len(), doubling.len());
    for (s, &twice) in sensors.iter_mut().zip(doubling) {
        if !s.alive {
            continue;
        }
        let rate = if twice { 2.0 * s.drain_rate } else { s.drain_rate };
        s.remaining_energy = (s.remaining_energy - rate).max(0.0);
        s.alive = s.remaining_energy > alive_threshold;
    }
    sensors.iter().filter(|s| !s.alive).count()
}

pub fn slot_metrics(ledger: &SlotLedger, state: &NetworkState) -> SlotMetrics {
    let n = state.sensors.len();
    let survival = if n == 0 {
        0.0
    } else {
        state.alive_count() as f64 / n as f64
    };
    let delivered = ledger.e_charge_total();
    let denom = delivered + ledger.e_loss_total() + ledger.e_move;
    let efficiency = if denom > 0.0 { delivered / denom } else { 0.0 };
    SlotMetrics {
        survival,
        efficiency,
    }
}

/// Episode objectives `(f1, f2)`: the means of per-slot survival and efficiency.
pub fn episode_objectives(trace: &[SlotMetrics]) -> [f64; 2] {
    if trace.is_empty() {
        return [0.0, 0.0];
    }
    let n = trace.len() as f64;
    let (s, e) = trace
        .iter()
        .fold((0.0, 0.0), |(s, e), m| (s + m.survival, e + m.efficiency));
    [s / n, e / n]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub ledger: SlotLedger,
    pub metrics: SlotMetrics,
    /// Charger energy at the start of the slot.
    pub charger_energy_before: f64,
}

/// A running scenario instance.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: Arc<ScenarioConfig>,
    state: NetworkState,
    rng: ChaCha8Rng,
    done: bool,
}

impl Env {
    /// Places and energizes the sensors for episode `seed`.
    ///
    /// Positions and drain rates come from the scenario's own seed unless
    /// `randomize_layout` is set; initial energies always come from `seed`.
    pub fn new(cfg: Arc<ScenarioConfig>, seed: u64) -> Result<Self, EnvError> {
        cfg.validate()?;
        let layout_seed = if cfg.network.randomize_layout {
            mix_seed(seed, LAYOUT_STREAM)
        } else {
            cfg.network.rng_seed
        };
        let mut layout_rng = ChaCha8Rng::seed_from_u64(layout_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, EPISODE_STREAM));

        let net = &cfg.network;
        let [e_lo, e_hi] = net.sensor_init_energy;
        let [r_lo, r_hi] = net.sensor_rate_range;
        let sensors = (0..net.n_sensors)
            .map(|_| {
                let position = [
                    layout_rng.random_range(0.0..=net.area[0]),
                    layout_rng.random_range(0.0..=net.area[1]),
                ];
                let drain_rate = layout_rng.random_range(r_lo..=r_hi);
                let remaining_energy = rng.random_range(e_lo..=e_hi);
                SensorState {
                    position,
                    remaining_energy,
                    drain_rate,
                    alive: remaining_energy > net.alive_threshold,
                }
            })
            .collect();
        let charger = ChargerState {
            position: cfg.charger.start,
            remaining_energy: cfg.charger.capacity,
            docked: false,
        };
        Ok(Self {
            state: NetworkState::new(sensors, charger),
            cfg,
            rng,
            done: false,
        })
    }

    /// Wraps an explicitly constructed state (used for scripted scenarios).
    pub fn from_state(cfg: Arc<ScenarioConfig>, state: NetworkState, seed: u64) -> Result<Self, EnvError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, EPISODE_STREAM)),
            done: false,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn shared_config(&self) -> &Arc<ScenarioConfig> {
        &self.cfg
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Whether the docking rule takes over the coming slot.
    pub fn will_dock(&self) -> bool {
        let ch = &self.state.charger;
        let cfg = &self.cfg.charger;
        if distance(ch.position, self.cfg.pile.position) > self.cfg.pile.proximity {
            return false;
        }
        ch.remaining_energy < cfg.emergency_threshold
            || (cfg.dock_until_full && ch.docked && ch.remaining_energy < cfg.capacity)
    }

    /// Advances one slot with the movement command `(theta, distance)`.
    /// The command is ignored on docked slots.
    pub fn advance(&mut self, theta: f64, distance: f64) -> Result<SlotOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let cfg = Arc::clone(&self.cfg);
        let n = self.state.sensors.len();
        let charger_energy_before = self.state.charger.remaining_energy;
        let mut ledger = SlotLedger::empty(n);

        if self.will_dock() {
            ledger.pile_transfer_in = dock_and_recharge(&mut self.state.charger, &cfg)?;
            ledger.docked = true;
        } else {
            self.state.charger.docked = false;
            let mv = move_charger(&mut self.state.charger, theta, distance, &cfg)?;
            ledger.e_move = mv.e_move;
            ledger.traveled = mv.traveled;
            ledger.boundary_violation = mv.boundary_violation;
            let ch = charge_in_range(&mut self.state, &cfg)?;
            ledger.e_tx = ch.e_tx;
            ledger.e_charge = ch.e_charge;
            ledger.e_loss = ch.e_loss;
            ledger.depleted = mv.depleted || ch.depleted;
        }

        // One draw per sensor per slot regardless of the probability keeps the
        // random stream aligned across different doubling probabilities.
        let p = cfg.network.consumption_doubling_prob;
        let doubling: Vec<bool> = (0..n).map(|_| self.rng.random::<f64>() < p).collect();
        ledger.n_dead = drain_sensors(&mut self.state.sensors, &doubling, cfg.network.alive_threshold);
        ledger.e_sum = ledger.e_move + ledger.e_charge_total() + ledger.e_loss_total();

        let metrics = slot_metrics(&ledger, &self.state);
        self.state.record(metrics);
        let all_dead = ledger.n_dead == n;
        self.done = self.state.slot >= cfg.network.n_slots
            || (cfg.episode.terminate_on_network_death && all_dead);
        Ok(SlotOutcome {
            ledger,
            metrics,
            charger_energy_before,
        })
    }
}
