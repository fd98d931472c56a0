use super::PpoError;
use crate::N_OBJECTIVES;

pub type Vector = [f64; N_OBJECTIVES];

/// Per-transition, per-objective advantages and value targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageBatch {
    pub advantages: Vec<Vector>,
    pub value_targets: Vec<Vector>,
}

/// Generalized advantage estimation run independently per objective.
///
/// `bootstrap` is the value after the last transition (zero at a terminal).
pub fn compute_gae(
    rewards: &[Vector],
    values: &[Vector],
    bootstrap: Vector,
    gamma: f64,
    lambda: f64,
) -> Result<AdvantageBatch, PpoError> {
    if rewards.len() != values.len() {
        return Err(PpoError::LengthMismatch(format!(
            "{} rewards vs {} values",
            rewards.len(),
            values.len()
        )));
    }
    let n = rewards.len();
    let mut advantages = vec![[0.0; N_OBJECTIVES]; n];
    let mut running = [0.0; N_OBJECTIVES];
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { bootstrap };
        for k in 0..N_OBJECTIVES {
            let delta = rewards[t][k] + gamma * next[k] - values[t][k];
            running[k] = delta + gamma * lambda * running[k];
            advantages[t][k] = running[k];
        }
    }
    let value_targets = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| std::array::from_fn(|k| a[k] + v[k]))
        .collect();
    Ok(AdvantageBatch {
        advantages,
        value_targets,
    })
}

/// Shifts and scales each objective column to zero mean and unit variance.
/// Columns with zero spread are only centred.
pub fn normalize_advantages(advantages: &mut [Vector]) {
    let n = advantages.len();
    if n == 0 {
        return;
    }
    for k in 0..N_OBJECTIVES {
        let mean = advantages.iter().map(|a| a[k]).sum::<f64>() / n as f64;
        let var = advantages.iter().map(|a| (a[k] - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        for a in advantages.iter_mut() {
            a[k] = if std > 1e-12 { (a[k] - mean) / std } else { a[k] - mean };
        }
    }
}

/// Weighted sum `Σ_i w_i A^(i)` per transition.
pub fn scalarize_advantage(advantages: &[Vector], weight: &Vector) -> Vec<f64> {
    advantages
        .iter()
        .map(|a| a.iter().zip(weight).map(|(x, w)| x * w).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surrogate {
    pub value: f64,
    /// Derivative of `value` with respect to the ratio.
    pub d_ratio: f64,
    pub clipped: bool,
}

/// `min(r A, clip(r, 1 - ε, 1 + ε) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> Surrogate {
    let lo = 1.0 - clip;
    let hi = 1.0 + clip;
    let clipped_ratio = ratio.clamp(lo, hi);
    let unclipped = ratio * advantage;
    let clipped = clipped_ratio * advantage;
    if clipped < unclipped {
        debug_assert!((lo..=hi).contains(&clipped_ratio));
        Surrogate {
            value: clipped,
            d_ratio: 0.0,
            clipped: true,
        }
    } else {
        Surrogate {
            value: unclipped,
            d_ratio: advantage,
            clipped: false,
        }
    }
}
