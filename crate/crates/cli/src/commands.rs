use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;
use wrsn_core::baselines::{run_baseline, BaselineKind, BaselineSpec};
use wrsn_core::emo::{
    emoppo_tml, write_archive_csv, write_generation_csv, write_training_csv, AlgoConfig, EmoError, RunReport,
    EVAL_SEEDS_TENSOR,
};
use wrsn_core::env::ScenarioConfig;
use wrsn_core::momdp::{observation_len, rollout, GreedyNetPolicy, Rollout, REWARD_TRACE_COLUMNS};
use wrsn_core::nn::{Checkpoint, PolicyNet};
use wrsn_core::ppo::{IterationDiagnostics, Vector};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{BaselineArgs, EvalArgs, TrainArgs, TrajectoryArgs};

fn load_scenario(path: &Path) -> Result<Arc<ScenarioConfig>, CliError> {
    ScenarioConfig::from_path(path)
        .map(Arc::new)
        .map_err(|e| CliError::scenario(path, e))
}

fn load_checkpoint(path: &Path, scenario: &ScenarioConfig) -> Result<(Checkpoint, PolicyNet), CliError> {
    let ck = Checkpoint::load(path).map_err(|e| CliError::checkpoint(path, e))?;
    let policy = ck.policy().map_err(|e| CliError::checkpoint(path, e))?;
    let expected = observation_len(scenario.network.n_sensors);
    if policy.obs_dim() != expected {
        return Err(CliError::input(
            "CheckpointScenarioMismatch",
            format!(
                "{} expects {} inputs but the scenario produces {expected}",
                path.display(),
                policy.obs_dim()
            ),
        ));
    }
    Ok((ck, policy))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

/// Opens `rel` under the manifest's output directory and records it as an artifact.
fn create(manifest: &mut RunManifest, rel: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = manifest.out_dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::output(parent, e))?;
    }
    let file = File::create(&path).map_err(|e| CliError::output(&path, e))?;
    manifest.artifacts.push(rel.to_string());
    Ok((path, BufWriter::new(file)))
}

fn write_csv(
    manifest: &mut RunManifest,
    rel: &str,
    f: impl FnOnce(BufWriter<File>, &str) -> csv::Result<()>,
) -> Result<(), CliError> {
    let (path, out) = create(manifest, rel)?;
    let id = manifest.id.clone();
    f(out, &id).map_err(|e| CliError::output(&path, e))
}

/// Slot trace with reward columns, prefixed by the manifest id.
fn write_trace(out: BufWriter<File>, id: &str, r: &Rollout) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["manifest_id"];
    header.extend(REWARD_TRACE_COLUMNS);
    w.write_record(&header)?;
    for (rec, tr) in r.records.iter().zip(&r.transitions) {
        let mut row = vec![id.to_string()];
        row.extend(rec.fields());
        row.push(tr.reward.r[0].to_string());
        row.push(tr.reward.r[1].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn print_json(v: serde_json::Value) {
    println!("{v}");
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let mut algo = AlgoConfig::from_path(&args.algo).map_err(|e| CliError::algo(&args.algo, e))?;
    if let Some(g) = args.generations {
        algo.generations = g;
    }
    if let Some(m) = args.mode {
        algo.tppe.mode = m;
    }
    if let Some(s) = &args.eval_seeds {
        algo.eval_seeds = s.clone();
    }
    algo.validate().map_err(|e| CliError::algo(&args.algo, e))?;
    prepare_out(&args.out)?;

    let mut manifest = RunManifest::new(
        "train",
        &args.out,
        args.seed,
        &algo.eval_seeds,
        scenario.to_toml_string(),
        Some(algo.to_toml_string()),
    );
    manifest.scenario_path = Some(args.scenario.clone());
    manifest.algo_path = Some(args.algo.clone());

    match emoppo_tml(&scenario, &algo, args.seed) {
        Ok(report) => {
            write_report(&mut manifest, &report)?;
            manifest.write()?;
            print_json(json!({
                "manifest_id": manifest.id,
                "archive_size": report.archive.len(),
                "warmup_hypervolume": report.warmup_hypervolume,
                "hypervolume": report.final_hypervolume(),
                "archive": report.archive.points(),
            }));
            Ok(())
        }
        Err(EmoError::GenerationFailed {
            generation,
            source,
            partial,
        }) => {
            write_report(&mut manifest, &partial)?;
            manifest.write()?;
            Err(CliError::runtime(
                "GenerationFailed",
                format!("generation {generation}: {source}; partial results written"),
            ))
        }
        Err(EmoError::Config(m)) => Err(CliError::input("BadAlgoConfig", m)),
        Err(e) => Err(CliError::runtime("TrainingFailed", e.to_string())),
    }
}

fn checkpoint_rel(i: usize) -> String {
    format!("checkpoints/archive_{i:03}.ckpt")
}

fn write_report(manifest: &mut RunManifest, report: &RunReport) -> Result<(), CliError> {
    for (i, e) in report.archive.entries().iter().enumerate() {
        let rel = checkpoint_rel(i);
        let (path, out) = create(manifest, &rel)?;
        e.payload
            .checkpoint
            .write_to(out)
            .map_err(|err| CliError::output(&path, err))?;
    }
    write_csv(manifest, "archive.csv", |out, id| {
        write_archive_csv(out, &report.archive, id, |i, _| checkpoint_rel(i))
    })?;
    write_csv(manifest, "generations.csv", |out, id| {
        write_generation_csv(out, &report.generations, id)
    })?;
    let training: &[(usize, IterationDiagnostics)] = &report.training;
    write_csv(manifest, "training.csv", |out, id| write_training_csv(out, training, id))
}

fn recorded_seeds(ck: &Checkpoint) -> Option<Vec<u64>> {
    ck.get(EVAL_SEEDS_TENSOR)
        .map(|t| t.data().iter().map(|&s| s as u64).collect())
}

fn evaluate(policy: &PolicyNet, scenario: &Arc<ScenarioConfig>, seeds: &[u64]) -> Result<Vec<Rollout>, CliError> {
    let results: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            let mut pol = GreedyNetPolicy::new(policy, scenario.charger.max_step);
            rollout(&mut pol, Arc::clone(scenario), seed, 0.98, None)
        })
        .collect();
    results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::runtime("EvaluationFailed", e.to_string()))
}

fn mean(points: &[Vector]) -> Vector {
    let n = points.len().max(1) as f64;
    let mut m = [0.0; 2];
    for p in points {
        m[0] += p[0] / n;
        m[1] += p[1] / n;
    }
    m
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let (ck, policy) = load_checkpoint(&args.checkpoint, &scenario)?;
    let seeds = match (&args.eval_seeds, recorded_seeds(&ck)) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => s,
        (None, None) => {
            return Err(CliError::input(
                "MissingEvalSeeds",
                "checkpoint records no evaluation seeds; pass --eval-seeds",
            ))
        }
    };
    if seeds.is_empty() {
        return Err(CliError::input("MissingEvalSeeds", "--eval-seeds is empty"));
    }
    prepare_out(&args.out)?;
    let mut manifest = RunManifest::new("eval", &args.out, ck.seed, &seeds, scenario.to_toml_string(), None);
    manifest.bind(&ck.to_bytes());
    manifest.scenario_path = Some(args.scenario.clone());
    manifest.checkpoint_path = Some(args.checkpoint.clone());

    let rollouts = evaluate(&policy, &scenario, &seeds)?;
    write_csv(&mut manifest, "eval_summary.csv", |out, id| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["manifest_id", "seed", "f1", "f2", "return1", "return2"])?;
        for (seed, r) in seeds.iter().zip(&rollouts) {
            w.write_record([
                id.to_string(),
                seed.to_string(),
                r.objectives[0].to_string(),
                r.objectives[1].to_string(),
                r.returns[0].to_string(),
                r.returns[1].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    for (seed, r) in seeds.iter().zip(&rollouts) {
        write_csv(&mut manifest, &format!("traces/trace_seed_{seed}.csv"), |out, id| write_trace(out, id, r))?;
    }
    manifest.write()?;
    let per_seed: Vec<Vector> = rollouts.iter().map(|r| r.objectives).collect();
    print_json(json!({
        "manifest_id": manifest.id,
        "mean": mean(&per_seed),
        "per_seed": per_seed,
        "archived": ck.get("task.objectives").map(|t| t.data().to_vec()),
    }));
    Ok(())
}

pub const PATH_COLUMNS: [&str; 6] = ["manifest_id", "t", "x", "y", "charger_energy", "docked"];

pub fn trajectory(args: &TrajectoryArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let (ck, policy) = load_checkpoint(&args.checkpoint, &scenario)?;
    prepare_out(&args.out)?;
    let mut manifest = RunManifest::new(
        "trajectory",
        &args.out,
        args.seed,
        &[args.seed],
        scenario.to_toml_string(),
        None,
    );
    manifest.bind(&ck.to_bytes());
    manifest.scenario_path = Some(args.scenario.clone());
    manifest.checkpoint_path = Some(args.checkpoint.clone());

    let r = evaluate(&policy, &scenario, &[args.seed])?.remove(0);
    let start = scenario.charger.start;
    write_csv(&mut manifest, "path.csv", |out, id| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PATH_COLUMNS)?;
        w.write_record([
            id.to_string(),
            "0".into(),
            start[0].to_string(),
            start[1].to_string(),
            scenario.charger.capacity.to_string(),
            "false".into(),
        ])?;
        for rec in &r.records {
            w.write_record([
                id.to_string(),
                rec.t.to_string(),
                rec.charger_position[0].to_string(),
                rec.charger_position[1].to_string(),
                rec.charger_energy.to_string(),
                rec.docked.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    manifest.write()?;
    print_json(json!({ "manifest_id": manifest.id, "slots": r.records.len(), "objectives": r.objectives }));
    Ok(())
}

pub fn baseline(args: &BaselineArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario)?;
    let ppo = match &args.algo {
        Some(p) => AlgoConfig::from_path(p).map_err(|e| CliError::algo(p, e))?.ppo,
        None => AlgoConfig::toy().ppo,
    };
    let weight: Vector = match args.weight.as_slice() {
        [a, b] => [*a, *b],
        _ => return Err(CliError::input("BadArguments", "--weight takes exactly two values")),
    };
    if args.eval_seeds.is_empty() {
        return Err(CliError::input("BadArguments", "--eval-seeds is empty"));
    }
    let mut spec = BaselineSpec::scalar_ppo(weight, args.seed, args.iters, ppo);
    spec.kind = args.kind;
    spec.eval_mode = args.eval_mode;
    spec.validate().map_err(|e| CliError::input("BadArguments", e.to_string()))?;
    prepare_out(&args.out)?;

    let label = kind_label(args.kind);
    let algo_text = (args.kind == BaselineKind::ScalarPpo).then(|| {
        format!(
            "{label} w={weight:?} iters={} eval={:?}\n{}",
            args.iters,
            args.eval_mode,
            toml::to_string(&spec.ppo).unwrap_or_default()
        )
    });
    let mut manifest = RunManifest::new(
        &format!("baseline:{label}"),
        &args.out,
        args.seed,
        &args.eval_seeds,
        scenario.to_toml_string(),
        algo_text,
    );
    manifest.scenario_path = Some(args.scenario.clone());
    manifest.algo_path = args.algo.clone();

    let run = run_baseline(&spec, &scenario, &args.eval_seeds)
        .map_err(|e| CliError::runtime("BaselineFailed", e.to_string()))?;
    write_csv(&mut manifest, "baseline_summary.csv", |out, id| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["manifest_id", "kind", "seed", "f1", "f2"])?;
        for (seed, f) in args.eval_seeds.iter().zip(&run.stats.per_seed) {
            w.write_record([id.to_string(), label.into(), seed.to_string(), f[0].to_string(), f[1].to_string()])?;
        }
        for (name, v) in [("mean", run.stats.mean), ("std", run.stats.std)] {
            w.write_record([id.to_string(), label.into(), name.into(), v[0].to_string(), v[1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    for (seed, r) in args.eval_seeds.iter().zip(&run.rollouts) {
        write_csv(&mut manifest, &format!("traces/trace_seed_{seed}.csv"), |out, id| write_trace(out, id, r))?;
    }
    if let Some(net) = &run.policy {
        let mut ck = Checkpoint::new(args.seed);
        ck.push_all(net);
        let (path, out) = create(&mut manifest, "policy.ckpt")?;
        ck.write_to(out).map_err(|e| CliError::output(&path, e))?;
        write_csv(&mut manifest, "training.csv", |out, id| {
            let rows: Vec<(usize, IterationDiagnostics)> = run.diagnostics.iter().cloned().map(|d| (0, d)).collect();
            write_training_csv(out, &rows, id)
        })?;
    }
    manifest.write()?;
    print_json(json!({
        "manifest_id": manifest.id,
        "kind": label,
        "mean": run.stats.mean,
        "std": run.stats.std,
    }));
    Ok(())
}

fn kind_label(kind: BaselineKind) -> &'static str {
    match kind {
        BaselineKind::Random => "random",
        BaselineKind::GreedyEmergency => "greedy_emergency",
        BaselineKind::ScalarPpo => "scalar_ppo",
    }
}
