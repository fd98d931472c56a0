use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archive::ParetoArchive;
use super::increment::{IncrementConfig, IncrementModel};
use super::select::{archive_metrics, pits, PitsCandidate, TppeConfig};
use super::tpu::tpu;
use super::EmoError;
use crate::env::ScenarioConfig;
use crate::nn::{Checkpoint, Tensor2};
use crate::ppo::{evaluate_policy, lstm_mppo, IterationDiagnostics, LearningTask, PpoConfig, TaskRun, Vector};
use crate::{mix_seed, N_OBJECTIVES};

const DEFAULT_ALGO: &str = include_str!("../../configs/default.toml");
const TOY_ALGO: &str = include_str!("../../configs/toy.toml");

/// Checkpoint entry holding the evaluation seeds as exact integers in f64.
pub const EVAL_SEEDS_TENSOR: &str = "eval.seeds";

/// Largest seed that survives the round trip through an f64 tensor.
const MAX_EXACT_SEED: u64 = 1 << 53;

// Seed stream tags.
const STREAM_TASK: u64 = 1 << 40;
const STREAM_PITS: u64 = 2 << 40;
const STREAM_MODEL: u64 = 3 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgoConfig {
    pub schema: u32,
    /// Tasks trained per generation (N).
    pub n_tasks: usize,
    /// Candidate weights per task during selection (K).
    pub k_candidates: usize,
    pub warmup_iters: usize,
    pub update_iters: usize,
    pub generations: usize,
    pub b_num: usize,
    pub b_size: usize,
    /// Concentration of the Dirichlet weight perturbation.
    pub kappa: f64,
    /// Episode seeds every objective vector is averaged over.
    pub eval_seeds: Vec<u64>,
    pub ppo: PpoConfig,
    pub tppe: TppeConfig,
    pub increment: IncrementConfig,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            schema: 1,
            n_tasks: 6,
            k_candidates: 5,
            warmup_iters: 400,
            update_iters: 50,
            generations: 120,
            b_num: 50,
            b_size: 2,
            kappa: 20.0,
            eval_seeds: (1000..1005).collect(),
            ppo: PpoConfig::default(),
            tppe: TppeConfig::default(),
            increment: IncrementConfig::default(),
        }
    }
}

impl AlgoConfig {
    pub fn full_scale() -> Self {
        Self::from_toml_str(DEFAULT_ALGO).expect("embedded default algorithm config is valid")
    }

    pub fn toy() -> Self {
        Self::from_toml_str(TOY_ALGO).expect("embedded toy algorithm config is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, EmoError> {
        let cfg: AlgoConfig = toml::from_str(text).map_err(|e| EmoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EmoError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("algorithm config serializes")
    }

    pub fn validate(&self) -> Result<(), EmoError> {
        let bad = |m: String| Err(EmoError::Config(m));
        if self.schema != 1 {
            return bad(format!("unsupported schema {}", self.schema));
        }
        if self.n_tasks == 0 || self.k_candidates == 0 {
            return bad("n_tasks and k_candidates must be positive".into());
        }
        if self.b_num == 0 || self.b_size == 0 {
            return bad("b_num and b_size must be positive".into());
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if self.eval_seeds.is_empty() {
            return bad("eval_seeds must not be empty".into());
        }
        if self.eval_seeds.iter().any(|&s| s > MAX_EXACT_SEED) {
            return bad(format!("eval_seeds must not exceed 2^53 ({MAX_EXACT_SEED})"));
        }
        for (name, v) in [("tppe.alpha", self.tppe.alpha), ("tppe.lambda", self.tppe.lambda)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("{name} must lie in [0, 1], got {v}"));
                }
            }
        }
        let positive = |v: f64| v > 0.0;
        if !positive(self.tppe.epsilon) || self.tppe.bandwidth.is_some_and(|b| !positive(b)) {
            return bad("tppe.epsilon and tppe.bandwidth must be positive".into());
        }
        if self.increment.steps > 0 && !positive(self.increment.learning_rate) || self.increment.ridge < 0.0 {
            return bad("increment learning_rate must be positive and ridge non-negative".into());
        }
        self.ppo.validate().map_err(|m| EmoError::Config(format!("ppo: {m}")))
    }
}

/// `n` evenly spaced weights on the two-objective simplex, ordered by
/// increasing weight on the first objective.
pub fn simplex_weights(n: usize) -> Vec<Vector> {
    match n {
        0 => Vec::new(),
        1 => vec![[0.5, 0.5]],
        _ => (0..n)
            .map(|i| {
                let w = i as f64 / (n - 1) as f64;
                [w, 1.0 - w]
            })
            .collect(),
    }
}

/// Archive payload: where a policy came from and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchivedPolicy {
    pub generation: usize,
    pub task_id: usize,
    pub lineage: u64,
    pub weight: Vector,
    pub objectives: Vector,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationMetrics {
    /// 0 is the warm-up stage.
    pub generation: usize,
    pub archive_size: usize,
    pub hypervolume: f64,
    /// Diversity term of the archive divided by its number of adjacent pairs.
    pub mean_diversity: f64,
    /// Weights trained this generation.
    pub selected: Vec<Vector>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub seed: u64,
    pub archive: ParetoArchive<ArchivedPolicy>,
    /// Hypervolume right after the warm-up stage.
    pub warmup_hypervolume: f64,
    pub generations: Vec<GenerationMetrics>,
    /// Per-iteration training log tagged with its generation.
    pub training: Vec<(usize, IterationDiagnostics)>,
}

impl RunReport {
    fn new(seed: u64, reference: Vector) -> Self {
        Self {
            seed,
            archive: ParetoArchive::new(reference),
            warmup_hypervolume: 0.0,
            generations: Vec::new(),
            training: Vec::new(),
        }
    }

    pub fn final_hypervolume(&self) -> f64 {
        self.generations.last().map_or(0.0, |g| g.hypervolume)
    }
}

/// Runs the warm-up stage and `cfg.generations` evolutionary generations.
///
/// A failure inside a generation returns [`EmoError::GenerationFailed`]
/// carrying everything recorded up to that point.
pub fn emoppo_tml(scenario: &Arc<ScenarioConfig>, cfg: &AlgoConfig, seed: u64) -> Result<RunReport, EmoError> {
    cfg.validate()?;
    scenario.validate().map_err(|e| EmoError::Config(e.to_string()))?;
    let mut report = RunReport::new(seed, cfg.tppe.reference);
    let mut state = RunState {
        scenario,
        cfg,
        seed,
        next_id: 0,
        history: BTreeMap::new(),
        population: Vec::new(),
        offspring: Vec::new(),
    };
    for generation in 0..=cfg.generations {
        let step = if generation == 0 {
            state.warm_up(&mut report)
        } else {
            state.generation(generation, &mut report)
        };
        if let Err(source) = step {
            return Err(EmoError::GenerationFailed {
                generation,
                source: Box::new(source),
                partial: Box::new(report),
            });
        }
        log::info!(
            "generation {generation}: |A| = {}, H = {:.6}",
            report.archive.len(),
            report.final_hypervolume()
        );
    }
    Ok(report)
}

struct RunState<'a> {
    scenario: &'a Arc<ScenarioConfig>,
    cfg: &'a AlgoConfig,
    seed: u64,
    next_id: usize,
    /// `(w, ΔF)` observations per lineage.
    history: BTreeMap<u64, Vec<(Vector, Vector)>>,
    population: Vec<LearningTask>,
    offspring: Vec<LearningTask>,
}

impl RunState<'_> {
    fn fresh_id(&mut self) -> usize {
        self.next_id += 1;
        self.next_id - 1
    }

    fn warm_up(&mut self, report: &mut RunReport) -> Result<(), EmoError> {
        let n_sensors = self.scenario.network.n_sensors;
        let weights = simplex_weights(self.cfg.n_tasks);
        let mut tasks = Vec::with_capacity(weights.len());
        let mut before = Vec::with_capacity(weights.len());
        for w in &weights {
            let id = self.fresh_id();
            let task = LearningTask::new(id, *w, n_sensors, &self.cfg.ppo, mix_seed(self.seed, STREAM_TASK + id as u64));
            let eval = evaluate_policy(&task.policy, self.scenario, &self.cfg.eval_seeds, self.cfg.ppo.gamma)?;
            before.push(eval.mean);
            tasks.push(task);
        }
        let runs = self.train(tasks, self.cfg.warmup_iters, 0, report)?;
        self.absorb(0, runs, &before, report)?;
        report.warmup_hypervolume = report.archive.hypervolume()?;
        self.record(0, weights, report)
    }

    fn generation(&mut self, t: usize, report: &mut RunReport) -> Result<(), EmoError> {
        let cfg = self.cfg;
        let population = std::mem::take(&mut self.population);
        let offspring = std::mem::take(&mut self.offspring);
        self.population = tpu(population, offspring, cfg.b_num, cfg.b_size, objectives_of);
        let alive: BTreeSet<u64> = self.population.iter().map(|t| t.lineage).collect();
        self.history.retain(|lineage, _| alive.contains(lineage));

        let models: BTreeMap<u64, IncrementModel> = alive
            .iter()
            .map(|&lineage| {
                let hist = self.history.get(&lineage).map_or(&[][..], Vec::as_slice);
                let s = mix_seed(self.seed, STREAM_MODEL + ((t as u64) << 20) + lineage);
                (lineage, IncrementModel::fit(hist, &cfg.increment, s))
            })
            .collect();
        let candidates: Vec<PitsCandidate> = self
            .population
            .iter()
            .map(|task| PitsCandidate {
                objectives: objectives_of(task),
                weight: task.weight,
                model: &models[&task.lineage],
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, STREAM_PITS + t as u64));
        let selections = pits(
            cfg.n_tasks,
            cfg.k_candidates,
            t,
            cfg.generations,
            &candidates,
            &report.archive.points(),
            &cfg.tppe,
            cfg.kappa,
            &mut rng,
        )?;

        let mut children = Vec::with_capacity(selections.len());
        let mut before = Vec::with_capacity(selections.len());
        for s in &selections {
            let id = self.fresh_id();
            let parent = &self.population[s.task];
            before.push(objectives_of(parent));
            children.push(parent.offspring(id, s.weight, mix_seed(self.seed, STREAM_TASK + id as u64)));
        }
        let runs = self.train(children, cfg.update_iters, t, report)?;
        self.absorb(t, runs, &before, report)?;
        self.record(t, selections.iter().map(|s| s.weight).collect(), report)
    }

    fn train(
        &self,
        tasks: Vec<LearningTask>,
        iterations: usize,
        generation: usize,
        report: &mut RunReport,
    ) -> Result<Vec<TaskRun>, EmoError> {
        let results = lstm_mppo(tasks, iterations, self.scenario, &self.cfg.ppo, &self.cfg.eval_seeds);
        let mut runs = Vec::with_capacity(results.len());
        for r in results {
            let run = r?;
            report
                .training
                .extend(run.diagnostics.iter().cloned().map(|d| (generation, d)));
            runs.push(run);
        }
        Ok(runs)
    }

    /// Records increments, updates the archive and stores the new offspring.
    fn absorb(&mut self, t: usize, runs: Vec<TaskRun>, before: &[Vector], report: &mut RunReport) -> Result<(), EmoError> {
        for (run, f0) in runs.into_iter().zip(before) {
            let task = run.task;
            let f = objectives_of(&task);
            let delta = [f[0] - f0[0], f[1] - f0[1]];
            self.history.entry(task.lineage).or_default().push((task.weight, delta));
            let payload = ArchivedPolicy {
                generation: t,
                task_id: task.id,
                lineage: task.lineage,
                weight: task.weight,
                objectives: f,
                checkpoint: self.checkpoint(&task),
            };
            report.archive.insert(f, payload);
            self.offspring.push(task);
        }
        if !report.archive.is_mutually_non_dominated() {
            return Err(EmoError::Config("archive lost mutual non-domination".into()));
        }
        Ok(())
    }

    /// Task checkpoint plus the evaluation seeds its objectives were averaged over.
    fn checkpoint(&self, task: &LearningTask) -> Checkpoint {
        let mut ck = task.checkpoint(self.seed);
        let seeds = self.cfg.eval_seeds.iter().map(|&s| s as f64).collect();
        ck.push(EVAL_SEEDS_TENSOR, Tensor2::row_vector(seeds));
        ck
    }

    fn record(&self, t: usize, selected: Vec<Vector>, report: &mut RunReport) -> Result<(), EmoError> {
        let points = report.archive.points();
        let m = archive_metrics(t, self.cfg.generations, &points, &self.cfg.tppe)?;
        report.generations.push(GenerationMetrics {
            generation: t,
            archive_size: points.len(),
            hypervolume: m.hypervolume,
            mean_diversity: m.diversity / points.len().saturating_sub(1).max(1) as f64,
            selected,
        });
        Ok(())
    }
}

fn objectives_of(task: &LearningTask) -> Vector {
    task.objectives.unwrap_or([0.0; N_OBJECTIVES])
}

pub const ARCHIVE_COLUMNS: [&str; 9] = [
    "manifest_id",
    "f1",
    "f2",
    "generation",
    "task_id",
    "lineage",
    "w1",
    "w2",
    "checkpoint_path",
];

/// One row per archive entry, in archive order.
pub fn write_archive_csv<W: Write>(
    out: W,
    archive: &ParetoArchive<ArchivedPolicy>,
    manifest_id: &str,
    checkpoint_path: impl Fn(usize, &ArchivedPolicy) -> String,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ARCHIVE_COLUMNS)?;
    for (i, e) in archive.entries().iter().enumerate() {
        let p = &e.payload;
        w.write_record([
            manifest_id.to_string(),
            e.objectives[0].to_string(),
            e.objectives[1].to_string(),
            p.generation.to_string(),
            p.task_id.to_string(),
            p.lineage.to_string(),
            p.weight[0].to_string(),
            p.weight[1].to_string(),
            checkpoint_path(i, p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const GENERATION_COLUMNS: [&str; 6] = [
    "manifest_id",
    "generation",
    "archive_size",
    "hypervolume",
    "mean_diversity",
    "selected_weights",
];

/// Selected weights are written as `w1:w2` pairs separated by `;`.
pub fn write_generation_csv<W: Write>(out: W, rows: &[GenerationMetrics], manifest_id: &str) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GENERATION_COLUMNS)?;
    for g in rows {
        let selected: Vec<String> = g.selected.iter().map(|s| format!("{}:{}", s[0], s[1])).collect();
        w.write_record([
            manifest_id.to_string(),
            g.generation.to_string(),
            g.archive_size.to_string(),
            g.hypervolume.to_string(),
            g.mean_diversity.to_string(),
            selected.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Training log with leading `manifest_id` and `generation` columns.
pub fn write_training_csv<W: Write>(
    out: W,
    rows: &[(usize, IterationDiagnostics)],
    manifest_id: &str,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["manifest_id", "generation"];
    header.extend(crate::ppo::DIAGNOSTICS_COLUMNS);
    w.write_record(&header)?;
    for (g, d) in rows {
        w.write_record([
            manifest_id.to_string(),
            g.to_string(),
            d.iteration.to_string(),
            d.task_id.to_string(),
            d.mean_return_1.to_string(),
            d.mean_return_2.to_string(),
            d.mean_f1.to_string(),
            d.mean_f2.to_string(),
            d.clip_fraction.to_string(),
            d.mean_ratio.to_string(),
            d.policy_loss.to_string(),
            d.value_loss.to_string(),
            d.entropy.to_string(),
            d.approx_kl.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_grid() {
        assert_eq!(simplex_weights(2), vec![[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(simplex_weights(3), vec![[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]);
        assert_eq!(simplex_weights(1), vec![[0.5, 0.5]]);
        for w in simplex_weights(7) {
            assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn embedded_configs_parse() {
        let d = AlgoConfig::full_scale();
        assert_eq!(d, AlgoConfig::default());
        assert_eq!((d.n_tasks, d.generations, d.warmup_iters, d.update_iters), (6, 120, 400, 50));
        assert_eq!((d.b_num, d.b_size), (50, 2));
        assert_eq!(d.ppo.hidden, 256);
        let t = AlgoConfig::toy();
        assert_eq!((t.n_tasks, t.generations, t.warmup_iters, t.update_iters), (3, 5, 40, 10));
        let back = AlgoConfig::from_toml_str(&t.to_toml_string()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = AlgoConfig::toy();
        c.eval_seeds.clear();
        assert!(matches!(c.validate(), Err(EmoError::Config(_))));
        assert!(matches!(
            AlgoConfig::from_toml_str("schema = 1\nbogus = 3\n"),
            Err(EmoError::Config(_))
        ));
        let mut c = AlgoConfig::toy();
        c.tppe.alpha = Some(1.5);
        assert!(c.validate().is_err());
    }
}
