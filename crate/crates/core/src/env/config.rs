//! Scenario description loaded from a versioned TOML file.
//!
//! The two shipped scenarios (`scenarios/default.toml` and `scenarios/toy.toml`)
//! are embedded at compile time and are the only place default constants live.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;

pub const SCENARIO_SCHEMA: u32 = 1;

const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/default.toml");
const TOY_SCENARIO: &str = include_str!("../../scenarios/toy.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub network: NetworkConfig,
    pub charger: ChargerConfig,
    pub wpt: WptConfig,
    pub pile: PileConfig,
    pub reward: RewardConfig,
    pub episode: EpisodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_sensors: usize,
    /// `[X_max, Y_max]` in meters.
    pub area: [f64; 2],
    /// Slot duration in seconds.
    pub slot_duration: f64,
    pub n_slots: usize,
    /// Uniform range for initial sensor energy (J).
    pub sensor_init_energy: [f64; 2],
    /// Battery capacity; falls back to the upper end of `sensor_init_energy`.
    #[serde(default)]
    pub sensor_capacity: Option<f64>,
    /// Uniform range for per-slot drain rates (J/slot).
    pub sensor_rate_range: [f64; 2],
    pub alive_threshold: f64,
    /// Probability that a sensor drains twice its rate in a given slot.
    #[serde(default)]
    pub consumption_doubling_prob: f64,
    /// Draw sensor positions from the episode seed instead of `rng_seed`.
    #[serde(default)]
    pub randomize_layout: bool,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargerConfig {
    pub capacity: f64,
    pub start: [f64; 2],
    /// Movement cost W_m in J/m.
    pub move_cost: f64,
    /// Charging radius rho in meters.
    pub charge_radius: f64,
    /// Transmit power W_0 in watts.
    pub transmit_power: f64,
    /// Upper end of the per-slot move distance produced by action squashing.
    pub max_step: f64,
    pub emergency_threshold: f64,
    /// Once docked, stay docked until the battery is full.
    #[serde(default = "default_true")]
    pub dock_until_full: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WptConfig {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PileConfig {
    pub position: [f64; 2],
    pub power: f64,
    pub coupling: f64,
    pub quality_factors: [f64; 2],
    pub proximity: f64,
}

/// Weights of the vector reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_bound: f64,
    pub r_charge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    #[serde(default)]
    pub terminate_on_network_death: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::full_scale()
    }
}

impl ScenarioConfig {
    /// The full-size scenario (100 sensors, 500 m field).
    pub fn full_scale() -> Self {
        Self::from_toml_str(DEFAULT_SCENARIO).expect("embedded default scenario is valid")
    }

    /// The desk-scale scenario used by the acceptance suite.
    pub fn toy() -> Self {
        Self::from_toml_str(TOY_SCENARIO).expect("embedded toy scenario is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, EnvError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| EnvError::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn diagonal(&self) -> f64 {
        self.network.area[0].hypot(self.network.area[1])
    }

    pub fn sensor_capacity(&self) -> f64 {
        self.network
            .sensor_capacity
            .unwrap_or(self.network.sensor_init_energy[1])
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        fn bad(msg: impl Into<String>) -> Result<(), EnvError> {
            Err(EnvError::BadConfig(msg.into()))
        }
        fn positive(name: &str, v: f64) -> Result<(), EnvError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                bad(format!("{name} must be finite and > 0, got {v}"))
            }
        }
        fn inside(name: &str, p: [f64; 2], area: [f64; 2]) -> Result<(), EnvError> {
            if (0.0..=area[0]).contains(&p[0]) && (0.0..=area[1]).contains(&p[1]) {
                Ok(())
            } else {
                bad(format!("{name} {p:?} lies outside the area {area:?}"))
            }
        }

        if self.schema != SCENARIO_SCHEMA {
            return bad(format!(
                "unsupported scenario schema {} (expected {SCENARIO_SCHEMA})",
                self.schema
            ));
        }
        let net = &self.network;
        if net.n_sensors == 0 {
            return bad("n_sensors must be at least 1");
        }
        if net.n_slots == 0 {
            return bad("n_slots must be at least 1");
        }
        positive("area[0]", net.area[0])?;
        positive("area[1]", net.area[1])?;
        positive("slot_duration", net.slot_duration)?;
        let [e_lo, e_hi] = net.sensor_init_energy;
        positive("sensor_init_energy[0]", e_lo)?;
        if e_hi < e_lo {
            return bad("sensor_init_energy range is reversed");
        }
        positive("sensor_capacity", self.sensor_capacity())?;
        if self.sensor_capacity() < e_hi {
            return bad("sensor_capacity is below the initial energy range");
        }
        let [r_lo, r_hi] = net.sensor_rate_range;
        positive("sensor_rate_range[0]", r_lo)?;
        if r_hi < r_lo {
            return bad("sensor_rate_range is reversed");
        }
        if !(net.alive_threshold >= 0.0 && net.alive_threshold.is_finite()) {
            return bad("alive_threshold must be >= 0");
        }
        if !(0.0..=1.0).contains(&net.consumption_doubling_prob) {
            return bad("consumption_doubling_prob must lie in [0, 1]");
        }

        let ch = &self.charger;
        positive("charger.capacity", ch.capacity)?;
        positive("charger.move_cost", ch.move_cost)?;
        positive("charger.transmit_power", ch.transmit_power)?;
        positive("charger.charge_radius", ch.charge_radius)?;
        if ch.charge_radius > self.diagonal() {
            return bad("charge_radius exceeds the area diagonal");
        }
        positive("charger.max_step", ch.max_step)?;
        if ch.max_step > self.diagonal() {
            return bad("max_step exceeds the area diagonal");
        }
        if !(ch.emergency_threshold >= 0.0 && ch.emergency_threshold <= ch.capacity) {
            return bad("emergency_threshold must lie in [0, capacity]");
        }
        inside("charger.start", ch.start, net.area)?;

        if !(self.wpt.alpha >= 0.0 && self.wpt.alpha.is_finite()) {
            return bad("wpt.alpha must be finite and >= 0");
        }
        positive("wpt.beta", self.wpt.beta)?;

        let pile = &self.pile;
        inside("pile.position", pile.position, net.area)?;
        positive("pile.power", pile.power)?;
        if !(0.0..=1.0).contains(&pile.coupling) {
            return bad("pile.coupling must lie in [0, 1]");
        }
        positive("pile.quality_factors[0]", pile.quality_factors[0])?;
        positive("pile.quality_factors[1]", pile.quality_factors[1])?;
        if !(pile.proximity >= 0.0 && pile.proximity.is_finite()) {
            return bad("pile.proximity must be >= 0");
        }

        let r = &self.reward;
        for (name, v) in [
            ("a", r.a),
            ("b", r.b),
            ("c", r.c),
            ("r_bound", r.r_bound),
            ("r_charge", r.r_charge),
        ] {
            if !v.is_finite() {
                return bad(format!("reward.{name} must be finite"));
            }
        }
        Ok(())
    }
}
