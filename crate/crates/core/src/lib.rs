//! Mobile-charger wireless rechargeable sensor network (WRSN) simulator and an
//! evolutionary multi-objective PPO trainer that produces Pareto archives of
//! charging policies trading node survival against energy usage efficiency.
//!
//! Module map:
//!
//! * [`env`]: slot-level physics (movement, wireless charging, pile docking, drain).
//! * [`momdp`]: observation/action/vector-reward wrapper and episode rollouts.
//! * [`nn`]: dense layers, an LSTM cell, backpropagation through time, Adam, checkpoints.
//! * [`ppo`]: GAE, weighted-advantage clipped PPO and the multi-task runner.
//! * [`emo`]: Pareto archive, hypervolume, task population update, increment
//!   models, time-varying evaluation, task selection and the full evolutionary loop.
//! * [`baselines`]: random, greedy and fixed-weight PPO comparison policies.

pub mod baselines;
pub mod emo;
pub mod env;
pub mod momdp;
pub mod nn;
pub mod ppo;

/// Number of objectives (node survival rate, energy usage efficiency).
pub const N_OBJECTIVES: usize = 2;

/// SplitMix64-style mixing of a base seed with a stream tag.
pub fn mix_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
