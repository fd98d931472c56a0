use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::archive::{hypervolume2, non_dominated_indices};
use super::increment::IncrementModel;
use super::EmoError;
use crate::ppo::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TppeMode {
    /// `αH + (1 - α)D`
    Text,
    /// `H - αD`
    Algorithm,
}

impl std::str::FromStr for TppeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(TppeMode::Text),
            "algorithm" => Ok(TppeMode::Algorithm),
            other => Err(format!("unknown TPPE mode `{other}` (expected text or algorithm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TppeConfig {
    pub mode: TppeMode,
    /// Fixed coefficient instead of the `t / G_m` ramp.
    pub alpha: Option<f64>,
    /// Fixed decay instead of `1 - t / G_m`.
    pub lambda: Option<f64>,
    /// Fixed kernel bandwidth instead of the mean adjacent gap.
    pub bandwidth: Option<f64>,
    pub epsilon: f64,
    pub reference: Vector,
}

impl Default for TppeConfig {
    fn default() -> Self {
        Self {
            mode: TppeMode::Text,
            alpha: None,
            lambda: None,
            bandwidth: None,
            epsilon: 1e-6,
            reference: [0.0, 0.0],
        }
    }
}

impl TppeConfig {
    fn progress(t: usize, g_max: usize) -> f64 {
        if g_max == 0 {
            1.0
        } else {
            (t as f64 / g_max as f64).clamp(0.0, 1.0)
        }
    }

    pub fn alpha_at(&self, t: usize, g_max: usize) -> f64 {
        self.alpha.unwrap_or_else(|| Self::progress(t, g_max))
    }

    pub fn lambda_at(&self, t: usize, g_max: usize) -> f64 {
        self.lambda.unwrap_or_else(|| 1.0 - Self::progress(t, g_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TppeScore {
    pub score: f64,
    pub hypervolume: f64,
    pub diversity: f64,
}

/// Distance/density term over a front sorted by the first objective.
///
/// For each adjacent pair `(p_i, p_{i+1})` adds `λ |p_{i+1} - p_i| + (1 - λ) / (C_i + ε)`
/// where `C_i` is the mean Gaussian-kernel similarity of `p_i` to all points.
pub fn diversity(sorted: &[Vector], lambda: f64, bandwidth: Option<f64>, epsilon: f64) -> f64 {
    let n = sorted.len();
    if n < 2 {
        return 0.0;
    }
    let dist = |a: &Vector, b: &Vector| (a[0] - b[0]).hypot(a[1] - b[1]);
    let gaps: Vec<f64> = sorted.windows(2).map(|p| dist(&p[0], &p[1])).collect();
    let bw = bandwidth.unwrap_or_else(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
    let closeness = |i: usize| -> f64 {
        if bw <= 0.0 {
            return 1.0;
        }
        sorted
            .iter()
            .map(|q| (-dist(&sorted[i], q).powi(2) / (2.0 * bw * bw)).exp())
            .sum::<f64>()
            / n as f64
    };
    gaps.iter()
        .enumerate()
        .map(|(i, g)| lambda * g + (1.0 - lambda) / (closeness(i) + epsilon))
        .sum()
}

fn clamp_unit(v: Vector) -> Vector {
    [v[0].clamp(0.0, 1.0), v[1].clamp(0.0, 1.0)]
}

/// Non-dominated subset of `points`, sorted by the first objective.
fn front(points: &[Vector]) -> Vec<Vector> {
    let mut f: Vec<Vector> = non_dominated_indices(points).into_iter().map(|i| points[i]).collect();
    f.sort_by(|a, b| a[0].total_cmp(&b[0]).then(b[1].total_cmp(&a[1])));
    f
}

/// Scores the archive after adding the predicted point `f + delta`
/// (clamped to the unit box).
pub fn tppe(
    t: usize,
    g_max: usize,
    archive: &[Vector],
    f: Vector,
    delta: Vector,
    cfg: &TppeConfig,
) -> Result<TppeScore, EmoError> {
    let predicted = clamp_unit([f[0] + delta[0], f[1] + delta[1]]);
    let mut pts = archive.to_vec();
    pts.push(predicted);
    score_front(t, g_max, &front(&pts), cfg)
}

fn score_front(t: usize, g_max: usize, front: &[Vector], cfg: &TppeConfig) -> Result<TppeScore, EmoError> {
    if front.is_empty() {
        return Err(EmoError::EmptyArchive);
    }
    let h = hypervolume2(front, cfg.reference)?;
    let d = diversity(front, cfg.lambda_at(t, g_max), cfg.bandwidth, cfg.epsilon);
    let alpha = cfg.alpha_at(t, g_max);
    let score = match cfg.mode {
        TppeMode::Text => alpha * h + (1.0 - alpha) * d,
        TppeMode::Algorithm => h - alpha * d,
    };
    Ok(TppeScore {
        score,
        hypervolume: h,
        diversity: d,
    })
}

/// Archive-level metrics under the schedule at generation `t`.
pub fn archive_metrics(t: usize, g_max: usize, archive: &[Vector], cfg: &TppeConfig) -> Result<TppeScore, EmoError> {
    score_front(t, g_max, &front(archive), cfg)
}

/// `k` candidate weights around `w`: `w` itself, then draws from
/// `Dirichlet(κ w + 1)`.
pub fn candidate_weights(w: &Vector, k: usize, kappa: f64, rng: &mut impl Rng) -> Vec<Vector> {
    let mut out = Vec::with_capacity(k);
    if k == 0 {
        return out;
    }
    out.push(*w);
    let alpha = [kappa * w[0] + 1.0, kappa * w[1] + 1.0];
    let dist = Dirichlet::new(alpha).expect("concentrations are positive");
    while out.len() < k {
        out.push(dist.sample(rng));
    }
    out
}

/// One member of the population as seen by task selection.
#[derive(Debug, Clone, Copy)]
pub struct PitsCandidate<'a> {
    pub objectives: Vector,
    pub weight: Vector,
    pub model: &'a IncrementModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Index into the population.
    pub task: usize,
    pub weight_index: usize,
    pub weight: Vector,
    pub predicted: Vector,
    pub score: TppeScore,
}

/// Greedy prospective-increment task selection with freshly drawn weights.
#[allow(clippy::too_many_arguments)]
pub fn pits(
    n: usize,
    k: usize,
    t: usize,
    g_max: usize,
    population: &[PitsCandidate<'_>],
    archive: &[Vector],
    cfg: &TppeConfig,
    kappa: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Selection>, EmoError> {
    if population.is_empty() {
        return Err(EmoError::EmptyPopulation);
    }
    let weights: Vec<Vec<Vector>> = population
        .iter()
        .map(|c| candidate_weights(&c.weight, k.max(1), kappa, rng))
        .collect();
    pits_with_weights(n, t, g_max, population, &weights, archive, cfg)
}

/// Greedy selection over given candidate weights.
///
/// Each round scores every unselected `(task, weight)` pair against the
/// running virtual archive and keeps the best; ties prefer the larger
/// hypervolume, then the lower task index, then the lower weight index.
pub fn pits_with_weights(
    n: usize,
    t: usize,
    g_max: usize,
    population: &[PitsCandidate<'_>],
    weights: &[Vec<Vector>],
    archive: &[Vector],
    cfg: &TppeConfig,
) -> Result<Vec<Selection>, EmoError> {
    if population.is_empty() {
        return Err(EmoError::EmptyPopulation);
    }
    let pairs: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .flat_map(|(i, ws)| (0..ws.len()).map(move |j| (i, j)))
        .collect();
    let mut virtual_archive = front(archive);
    let mut taken = vec![false; pairs.len()];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n.min(pairs.len()) {
        let scored: Vec<Option<Result<(Vector, TppeScore), EmoError>>> = pairs
            .par_iter()
            .zip(&taken)
            .map(|(&(i, j), &used)| {
                if used {
                    return None;
                }
                let c = &population[i];
                let w = weights[i][j];
                let delta = c.model.predict(&w);
                let predicted = clamp_unit([c.objectives[0] + delta[0], c.objectives[1] + delta[1]]);
                Some(tppe(t, g_max, &virtual_archive, c.objectives, delta, cfg).map(|s| (predicted, s)))
            })
            .collect();
        let mut best: Option<(usize, Vector, TppeScore)> = None;
        for (p, s) in scored.into_iter().enumerate() {
            let Some(s) = s else { continue };
            let (predicted, score) = s?;
            let better = match &best {
                None => true,
                Some((_, _, b)) => {
                    score.score > b.score || (score.score == b.score && score.hypervolume > b.hypervolume)
                }
            };
            if better {
                best = Some((p, predicted, score));
            }
        }
        let Some((p, predicted, score)) = best else { break };
        taken[p] = true;
        let (i, j) = pairs[p];
        out.push(Selection {
            task: i,
            weight_index: j,
            weight: weights[i][j],
            predicted,
            score,
        });
        virtual_archive.push(predicted);
        virtual_archive = front(&virtual_archive);
    }
    Ok(out)
}
