use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mel_core::data::gen_hierarchical;
use mel_core::failover::{Budget, DownstreamOption, OriginalArch};
use mel_core::tensor::AdamWConfig;
use mel_core::{
    EnsembleSpec, Granularity, LabeledDataset, LrSchedule, MelWeights, Strategy, SubsetId, SyntheticSpec, TrainPlan,
    UpstreamSpec,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// A file written by `mel gen`; the seed only labels the dataset.
    Csv {
        path: PathBuf,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::default())
    }
}

/// Either a symmetric layout whose class counts follow the dataset and the
/// plan's granularity, or a fully written-out ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EnsembleConfig {
    Layout(EnsembleLayout),
    Explicit(EnsembleSpec),
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig::Layout(EnsembleLayout::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleLayout {
    pub upstreams: usize,
    pub block_widths: Vec<usize>,
    pub downstream_hidden: Vec<usize>,
}

impl Default for EnsembleLayout {
    fn default() -> Self {
        // Narrow upstreams: each alone is capacity-limited, so combining pays.
        Self { upstreams: 2, block_widths: vec![8], downstream_hidden: Vec::new() }
    }
}

/// Training hyperparameters shared by every seed of a strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_rate: f64,
    pub warmup_epochs: usize,
    pub min_rate: f64,
    pub fine_tune_epochs: usize,
    pub fine_tune_rate: f64,
    pub granularity: BTreeMap<SubsetId, Granularity>,
    pub optimizer: AdamWConfig,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self::from_plan(&TrainPlan::desk(Strategy::Mel, 0))
    }
}

impl PlanConfig {
    fn from_plan(p: &TrainPlan) -> Self {
        Self {
            epochs: p.epochs,
            batch_size: p.batch_size,
            base_rate: p.schedule.base_rate,
            warmup_epochs: p.schedule.warmup_epochs,
            min_rate: p.schedule.min_rate,
            fine_tune_epochs: p.fine_tune_epochs,
            fine_tune_rate: p.fine_tune_rate,
            granularity: p.granularity.clone(),
            optimizer: p.optimizer,
        }
    }

    pub fn plan(&self, strategy: Strategy, seed: u64) -> TrainPlan {
        TrainPlan {
            epochs: self.epochs,
            batch_size: self.batch_size,
            schedule: LrSchedule {
                base_rate: self.base_rate,
                warmup_epochs: self.warmup_epochs,
                total_epochs: self.epochs,
                min_rate: self.min_rate,
            },
            fine_tune_epochs: self.fine_tune_epochs,
            fine_tune_rate: self.fine_tune_rate,
            seed,
            granularity: self.granularity.clone(),
            strategy,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub arch: OriginalArch,
    pub options: Vec<DownstreamOption>,
    #[serde(default = "unlimited")]
    pub budget: Budget,
}

fn unlimited() -> Budget {
    Budget::Unlimited
}

/// One experiment: data, model, objective, training plans, and the
/// deployment artifacts that go with them. Relative paths resolve against
/// the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    /// Uniform weights over every subset when absent.
    #[serde(default)]
    pub weights: Option<MelWeights>,
    #[serde(default)]
    pub plan: PlanConfig,
    /// Replaces `plan` for the named strategy.
    #[serde(default)]
    pub plans: BTreeMap<Strategy, PlanConfig>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Architecture of the small baseline; upstream 1 when absent.
    #[serde(default)]
    pub small: Option<UpstreamSpec>,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Mel]
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            ensemble: EnsembleConfig::default(),
            weights: None,
            plan: PlanConfig::default(),
            plans: BTreeMap::new(),
            strategies: default_strategies(),
            small: None,
            family: None,
            scenario: None,
            out_dir: default_out(),
            seeds: default_seeds(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; parse errors name the offending field path and
    /// relative paths are rebased onto the config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut config: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Config(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase(base);
        config.validate()?;
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.out_dir);
        if let Some(s) = &mut self.scenario {
            join(s);
        }
        if let DatasetSource::Csv { path, .. } = &mut self.dataset {
            join(path);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds: at least one seed is required".into()));
        }
        if self.strategies.is_empty() {
            return Err(CliError::Config("strategies: at least one strategy is required".into()));
        }
        if let Some(s) = &self.scenario {
            if !s.exists() {
                return Err(CliError::Config(format!("scenario: {} does not exist", s.display())));
            }
        }
        if let DatasetSource::Csv { path, .. } = &self.dataset {
            if !path.exists() {
                return Err(CliError::Config(format!("dataset.csv.path: {} does not exist", path.display())));
            }
        }
        if let EnsembleConfig::Layout(l) = &self.ensemble {
            if l.upstreams < 2 {
                return Err(CliError::Config("ensemble.layout.upstreams: need at least 2".into()));
            }
        }
        Ok(())
    }

    pub fn plan_config(&self, strategy: Strategy) -> &PlanConfig {
        self.plans.get(&strategy).unwrap_or(&self.plan)
    }

    pub fn load_dataset(&self) -> Result<LabeledDataset, CliError> {
        match &self.dataset {
            DatasetSource::Synthetic(spec) => {
                gen_hierarchical(spec).map_err(|e| CliError::Config(format!("dataset: {e}")))
            }
            DatasetSource::Csv { path, seed } => Ok(LabeledDataset::read_csv(path, *seed)?),
        }
    }

    /// The ensemble for `strategy`, with each subset's class count taken from
    /// its target granularity when the config gives a layout.
    pub fn ensemble_spec(&self, data: &LabeledDataset, strategy: Strategy) -> Result<EnsembleSpec, CliError> {
        let spec = match &self.ensemble {
            EnsembleConfig::Explicit(spec) => spec.clone(),
            EnsembleConfig::Layout(l) => {
                let granularity = &self.plan_config(strategy).granularity;
                EnsembleSpec::symmetric(l.upstreams, data.dim(), &l.block_widths, &l.downstream_hidden, |s| {
                    data.classes(granularity.get(s).copied().unwrap_or_default())
                })
            }
        };
        spec.validate().map_err(|e| CliError::Config(format!("ensemble: {e}")))?;
        Ok(spec)
    }

    pub fn weights(&self, m: usize) -> MelWeights {
        self.weights.clone().unwrap_or_else(|| MelWeights::uniform(m))
    }

    pub fn small_arch(&self, spec: &EnsembleSpec) -> UpstreamSpec {
        self.small.clone().unwrap_or_else(|| spec.upstreams[0].clone())
    }
}
