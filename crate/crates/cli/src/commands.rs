use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mel_core::ensemble::build_ensemble;
use mel_core::failover::{
    ensemble_family, simulate, summarize, Budget, ClusterScenario, FamilyEntry, PlacementPlan, PlacementPolicy,
    SimSummary,
};
use mel_core::theory::{check_bounds, mutual_informations, random_instance};
use mel_core::training::{train_individual, train_mel, train_small, train_standalone};
use mel_core::{Strategy, SubsetId, TrainReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSource, ExperimentConfig, FamilyConfig};
use crate::digest::digest_dir;
use crate::CliError;

/// Failover probabilities checked when none are given.
pub const DEFAULT_P: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Tolerance on the chain-identity residual.
const IDENTITY_TOLERANCE: f64 = 1e-9;

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(mel_core::Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Worker pool sized by `MEL_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MEL_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("MEL_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenOutcome {
    pub path: PathBuf,
    pub rows: usize,
    pub digest: String,
}

/// Writes the configured dataset to `<out>/dataset.csv`. `seed` replaces the
/// synthetic generator's seed.
pub fn cmd_gen(config: &ExperimentConfig, seed: Option<u64>, out: Option<&Path>) -> Result<GenOutcome, CliError> {
    let mut config = config.clone();
    if let (Some(s), DatasetSource::Synthetic(spec)) = (seed, &mut config.dataset) {
        spec.seed = s;
    }
    let data = config.load_dataset()?;
    let dir = out.unwrap_or(&config.out_dir);
    create_dir(dir)?;
    let path = dir.join("dataset.csv");
    data.write_csv(&path)?;
    let bytes =
        std::fs::read(&path).map_err(|e| CliError::Config(format!("cannot read back {}: {e}", path.display())))?;
    Ok(GenOutcome { rows: data.len(), digest: crate::digest_bytes(&bytes), path })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub strategy: Strategy,
    pub seed: u64,
    pub report: TrainReport,
}

/// Mean test accuracy per strategy and subset over the seed list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seeds: Vec<u64>,
    pub mean_test_accuracy: BTreeMap<Strategy, BTreeMap<SubsetId, f64>>,
}

impl TrainSummary {
    pub fn mean(&self, strategy: Strategy, s: &SubsetId) -> Option<f64> {
        self.mean_test_accuracy.get(&strategy)?.get(s).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub runs: Vec<TrainRun>,
    pub summary: TrainSummary,
    /// Checksum of everything written, timestamps excluded.
    pub digest: String,
    pub out_dir: PathBuf,
}

fn train_one(
    config: &ExperimentConfig,
    data: &mel_core::LabeledDataset,
    strategy: Strategy,
    seed: u64,
) -> Result<(TrainReport, mel_core::EnsembleModel), CliError> {
    let plan = config.plan_config(strategy).plan(strategy, seed);
    let spec = config.ensemble_spec(data, strategy)?;
    if strategy == Strategy::Small {
        return Ok(train_small(spec.input_dim, &config.small_arch(&spec), data, &plan).map(|(m, r)| (r, m))?);
    }
    let mut model = build_ensemble(&spec, seed)?;
    let weights = config.weights(spec.m());
    let report = match strategy {
        Strategy::Mel => train_mel(&mut model, data, &weights, &plan)?,
        Strategy::Standalone => train_standalone(&mut model, data, &weights, &plan)?,
        Strategy::Individual => train_individual(&mut model, data, &weights, &plan)?,
        Strategy::Small => unreachable!("handled above"),
    };
    Ok((report, model))
}

/// Trains every (strategy, seed) pair, in parallel, then writes
/// `<out>/train/<strategy>/seed-<seed>/{report.json,curves.csv,model.json}`
/// and `<out>/train/summary.json` from one thread.
pub fn cmd_train(
    config: &ExperimentConfig,
    strategies: Option<&[Strategy]>,
    seeds: Option<&[u64]>,
    out: Option<&Path>,
) -> Result<TrainOutcome, CliError> {
    let strategies = strategies.unwrap_or(&config.strategies);
    let seeds = seeds.unwrap_or(&config.seeds);
    if strategies.is_empty() || seeds.is_empty() {
        return Err(CliError::Config("need at least one strategy and one seed".into()));
    }
    let data = config.load_dataset()?;
    let jobs: Vec<(Strategy, u64)> = strategies.iter().flat_map(|&st| seeds.iter().map(move |&s| (st, s))).collect();
    let results: Vec<Result<(TrainReport, mel_core::EnsembleModel), CliError>> =
        thread_pool()?.install(|| jobs.par_iter().map(|&(st, s)| train_one(config, &data, st, s)).collect());

    let root = out.unwrap_or(&config.out_dir).join("train");
    let mut runs = Vec::with_capacity(jobs.len());
    let mut sums: BTreeMap<Strategy, BTreeMap<SubsetId, f64>> = BTreeMap::new();
    for (&(strategy, seed), result) in jobs.iter().zip(results) {
        let (report, model) = result?;
        let dir = root.join(strategy.as_str()).join(format!("seed-{seed}"));
        create_dir(&dir)?;
        report.write_json(&dir.join("report.json"))?;
        report.write_curves_csv(&dir.join("curves.csv"))?;
        model.save(&dir.join("model.json"))?;
        let acc = sums.entry(strategy).or_default();
        for (s, a) in &report.test_accuracy {
            *acc.entry(s.clone()).or_insert(0.0) += a / seeds.len() as f64;
        }
        runs.push(TrainRun { strategy, seed, report });
    }
    let summary = TrainSummary { seeds: seeds.to_vec(), mean_test_accuracy: sums };
    write_json(&root.join("summary.json"), &summary)?;
    Ok(TrainOutcome { runs, summary, digest: digest_dir(&root)?, out_dir: root })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub count: usize,
    pub seed: u64,
    pub p: Vec<f64>,
    pub max_identity_residual: f64,
    pub identity_failures: usize,
    pub lemma_failures: usize,
    pub proposition_failures: usize,
    pub data_processing_failures: usize,
}

impl TheorySummary {
    pub fn passed(&self) -> bool {
        self.identity_failures + self.lemma_failures + self.proposition_failures + self.data_processing_failures == 0
    }
}

/// Checks the chain identity and the generalization bounds on `count`
/// seeded random finite problems; a violation is a verification failure.
pub fn cmd_verify_theory(count: usize, seed: u64, p: &[f64]) -> Result<TheorySummary, CliError> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CliError::Config(format!("--p {bad} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances: Vec<_> = (0..count).map(|_| random_instance(&mut rng)).collect();
    let checked: Vec<Result<(f64, [usize; 4]), CliError>> = thread_pool()?.install(|| {
        instances
            .par_iter()
            .map(|(problem, learner)| {
                let residual = mutual_informations(problem, learner)?.identity_residual().abs();
                let mut fails = [usize::from(residual >= IDENTITY_TOLERANCE), 0, 0, 0];
                for &pv in p {
                    let r = check_bounds(problem, learner, pv)?;
                    fails[1] += usize::from(!(r.lemma_h1.holds && r.lemma_h2.holds && r.lemma_h12.holds));
                    fails[2] += usize::from(!r.proposition.holds);
                    fails[3] += usize::from(!r.data_processing_holds);
                }
                Ok((residual, fails))
            })
            .collect()
    });
    let mut summary = TheorySummary {
        count,
        seed,
        p: p.to_vec(),
        max_identity_residual: 0.0,
        identity_failures: 0,
        lemma_failures: 0,
        proposition_failures: 0,
        data_processing_failures: 0,
    };
    for c in checked {
        let (residual, [i, l, pr, d]) = c?;
        summary.max_identity_residual = summary.max_identity_residual.max(residual);
        summary.identity_failures += i;
        summary.lemma_failures += l;
        summary.proposition_failures += pr;
        summary.data_processing_failures += d;
    }
    Ok(summary)
}

/// Enumerates the ensemble family; `budget` overrides the configured one.
pub fn cmd_family(family: &FamilyConfig, budget: Option<Budget>) -> Result<Vec<FamilyEntry>, CliError> {
    ensemble_family(&family.arch, &family.options, budget.unwrap_or(family.budget))
        .map_err(|e| CliError::Config(format!("family: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub summary: SimSummary,
    pub placement: PlacementPlan,
    pub records_path: PathBuf,
    pub digest: String,
}

/// Runs a scenario and writes `<out>/simulate/{records.csv,summary.json}`.
/// `policy` overrides the scenario's placement policy.
pub fn cmd_simulate(scenario_path: &Path, policy: Option<PlacementPolicy>, out: &Path) -> Result<SimReport, CliError> {
    let mut scenario = ClusterScenario::load(scenario_path).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
    if let Some(p) = policy {
        scenario.policy = p;
    }
    let output = simulate(&scenario)?;
    let summary = summarize(&output, !scenario.latency.stage_work.is_empty());
    let dir = out.join("simulate");
    create_dir(&dir)?;
    let records_path = dir.join("records.csv");
    output.write_csv(&records_path)?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("placement.json"), &output.placement)?;
    Ok(SimReport { summary, placement: output.placement, records_path, digest: digest_dir(&dir)? })
}
