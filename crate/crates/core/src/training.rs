//! Joint multi-level training and the comparison baselines.
//!
//! The joint objective is `sum_S lambda_S * L(h_S)`, where `L` is the mean
//! softmax cross-entropy of `h_S` against its processed targets. All members
//! are optimized together with AdamW; an optional second phase fine-tunes the
//! exits and combiners with the upstream bodies frozen.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{process_dataset, Granularity, LabeledDataset, Split};
use crate::ensemble::{EnsembleModel, SubsetId, UpstreamSpec};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::{AdamWConfig, BlockGraph, DenseArray, LrSchedule, OptimizerState, ParamMut};

/// Lagrangian weights `lambda_S` and optional target risks `gamma_S`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MelWeights {
    pub lambda: BTreeMap<SubsetId, f64>,
    #[serde(default)]
    pub gamma: BTreeMap<SubsetId, f64>,
}

impl MelWeights {
    /// `lambda_S = 1` for every non-empty subset of `{1..m}`.
    pub fn uniform(m: usize) -> Self {
        Self { lambda: SubsetId::all(m).into_iter().map(|s| (s, 1.0)).collect(), gamma: BTreeMap::new() }
    }

    /// Singletons weighted `upstream`, every larger subset `downstream`.
    pub fn ratio(m: usize, upstream: f64, downstream: f64) -> Self {
        let lambda = SubsetId::all(m)
            .into_iter()
            .map(|s| {
                let w = if s.is_singleton() { upstream } else { downstream };
                (s, w)
            })
            .collect();
        Self { lambda, gamma: BTreeMap::new() }
    }

    pub fn weight(&self, s: &SubsetId) -> f64 {
        self.lambda.get(s).copied().unwrap_or(0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { lambda: self.lambda.iter().map(|(s, w)| (s.clone(), w * factor)).collect(), gamma: self.gamma.clone() }
    }

    pub fn validate(&self, model: &EnsembleModel) -> Result<()> {
        for (s, &w) in &self.lambda {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("lambda{s} must be a non-negative number, got {w}")));
            }
            if !model.has_subset(s) {
                return Err(Error::Config(format!("lambda names subset {s} which the ensemble lacks")));
            }
        }
        if !self.lambda.values().any(|&w| w > 0.0) {
            return Err(Error::Config("at least one lambda must be positive".into()));
        }
        if let Some(s) = self.gamma.keys().find(|s| !model.has_subset(s)) {
            return Err(Error::Config(format!("gamma names subset {s} which the ensemble lacks")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Joint training of all members on the weighted objective.
    Mel,
    /// Only the full-set model is supervised.
    Standalone,
    /// Upstreams trained alone first, then combiners on frozen upstreams.
    Individual,
    /// A single upstream-sized model trained on its own.
    Small,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Mel => "mel",
            Strategy::Standalone => "standalone",
            Strategy::Individual => "individual",
            Strategy::Small => "small",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mel" => Ok(Strategy::Mel),
            "standalone" => Ok(Strategy::Standalone),
            "individual" => Ok(Strategy::Individual),
            "small" => Ok(Strategy::Small),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate for epoch `e` (0-based) is `schedule.rate(e + 1)`.
    pub schedule: LrSchedule,
    #[serde(default)]
    pub fine_tune_epochs: usize,
    /// Starting rate of the fine-tune phase, cosine-decayed without warmup.
    #[serde(default = "default_fine_tune_rate")]
    pub fine_tune_rate: f64,
    pub seed: u64,
    /// Target granularity per subset; fine when absent.
    #[serde(default)]
    pub granularity: BTreeMap<SubsetId, Granularity>,
    pub strategy: Strategy,
    #[serde(default)]
    pub optimizer: AdamWConfig,
}

fn default_fine_tune_rate() -> f64 {
    1e-3
}

impl TrainPlan {
    /// Desk-scale defaults used by the experiments and acceptance runs.
    pub fn desk(strategy: Strategy, seed: u64) -> Self {
        let epochs = 30;
        Self {
            epochs,
            batch_size: 64,
            schedule: LrSchedule { base_rate: 5e-3, warmup_epochs: 3, total_epochs: epochs, min_rate: 1e-4 },
            fine_tune_epochs: 5,
            fine_tune_rate: 1e-3,
            seed,
            granularity: BTreeMap::new(),
            strategy,
            optimizer: AdamWConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.schedule.validate().map_err(|e| Error::Config(format!("schedule: {e}")))?;
        if self.schedule.total_epochs != self.epochs {
            return Err(Error::Config(format!(
                "schedule.total_epochs ({}) must equal epochs ({})",
                self.schedule.total_epochs, self.epochs
            )));
        }
        if self.schedule.min_rate <= 0.0 {
            return Err(Error::Config("schedule.min_rate must be positive so every epoch steps".into()));
        }
        if self.fine_tune_epochs > 0 && !(self.fine_tune_rate > 0.0 && self.fine_tune_rate.is_finite()) {
            return Err(Error::Config("fine_tune_rate must be positive".into()));
        }
        Ok(())
    }

    fn granularity_of(&self, s: &SubsetId) -> Granularity {
        self.granularity.get(s).copied().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: String,
    /// 1-based, counted across phases.
    pub epoch: usize,
    pub lr: f64,
    /// Training-set empirical risk after the epoch.
    pub risk: BTreeMap<SubsetId, f64>,
    pub val_accuracy: BTreeMap<SubsetId, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub strategy: Strategy,
    pub seed: u64,
    pub granularity: BTreeMap<SubsetId, Granularity>,
    pub lambda: BTreeMap<SubsetId, f64>,
    pub epochs: Vec<EpochRecord>,
    pub test_accuracy: BTreeMap<SubsetId, f64>,
    pub test_risk: BTreeMap<SubsetId, f64>,
    /// `test_risk <= gamma_S` for every subset with a declared target.
    pub gamma_satisfied: BTreeMap<SubsetId, bool>,
    pub param_counts: BTreeMap<SubsetId, usize>,
    /// Excluded from reproducibility checksums.
    pub wall_clock_ms: f64,
}

impl TrainReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Per-epoch curves: `epoch,phase,subset,risk,accuracy`.
    pub fn write_curves_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,phase,subset,risk,accuracy\n");
        for rec in &self.epochs {
            for (s, risk) in &rec.risk {
                let acc = rec.val_accuracy.get(s).copied().unwrap_or(f64::NAN);
                out.push_str(&format!("{},{},\"{}\",{:?},{:?}\n", rec.epoch, rec.phase, s, risk, acc));
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Inputs of one minibatch and the processed targets of every supervised subset.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: DenseArray,
    pub targets: BTreeMap<SubsetId, Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MelLoss {
    /// `sum_S lambda_S * per_subset[S]`.
    pub total: f64,
    /// Unweighted mean cross-entropy per subset with targets in the batch.
    pub per_subset: BTreeMap<SubsetId, f64>,
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &DenseArray, targets: &[usize]) -> Result<(f64, DenseArray)> {
    let (rows, k) = (logits.rows(), logits.cols());
    if targets.len() != rows {
        return Err(Error::Dimension(format!("{} targets for {rows} rows of logits", targets.len())));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(rows * k);
    for (r, &t) in targets.iter().enumerate() {
        if t >= k {
            return Err(Error::Argument(format!("target {t} outside {k} classes")));
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + max - row[t];
        grad.extend(exps.iter().enumerate().map(|(j, e)| {
            let p = e / sum;
            (if j == t { p - 1.0 } else { p }) / rows as f64
        }));
    }
    Ok((loss / rows as f64, DenseArray::new(logits.shape().to_vec(), grad)?))
}

fn check_weighted_targets(batch: &Batch, weights: &MelWeights) -> Result<()> {
    for (s, &w) in &weights.lambda {
        if w > 0.0 && !batch.targets.contains_key(s) {
            return Err(Error::Config(format!("subset {s} has weight {w} but no processed targets")));
        }
    }
    Ok(())
}

/// Weighted joint loss on one batch, without touching gradients.
pub fn mel_loss(model: &EnsembleModel, batch: &Batch, weights: &MelWeights) -> Result<MelLoss> {
    check_weighted_targets(batch, weights)?;
    let mut per_subset = BTreeMap::new();
    let mut total = 0.0;
    for (s, targets) in &batch.targets {
        let logits = model.forward_subset(s, &batch.x)?;
        let (loss, _) = cross_entropy(&logits, targets)?;
        total += weights.weight(s) * loss;
        per_subset.insert(s.clone(), loss);
    }
    Ok(MelLoss { total, per_subset })
}

/// Weighted joint loss on one batch; accumulates its gradient into the model.
///
/// Subsets with zero weight are evaluated but push no gradient. With
/// `freeze_upstreams` the upstream bodies receive no gradient at all.
pub fn mel_loss_grad(
    model: &mut EnsembleModel,
    batch: &Batch,
    weights: &MelWeights,
    freeze_upstreams: bool,
) -> Result<MelLoss> {
    check_weighted_targets(batch, weights)?;
    for s in batch.targets.keys() {
        if !model.has_subset(s) {
            return Err(Error::UnknownSubset(s.to_string()));
        }
    }
    let m = model.m();
    let needed: Vec<bool> = (1..=m).map(|i| batch.targets.keys().any(|s| s.contains(i))).collect();
    let (ups, exits, downs) = model.parts_mut();

    let mut reps: Vec<Option<DenseArray>> = Vec::with_capacity(m);
    for (k, up) in ups.iter_mut().enumerate() {
        reps.push(if needed[k] { Some(up.forward(&batch.x)?) } else { None });
    }
    let mut rep_grads: Vec<Option<DenseArray>> = vec![None; m];
    let accumulate = |slot: &mut Option<DenseArray>, g: DenseArray| -> Result<()> {
        match slot {
            Some(acc) => acc.add_assign(&g),
            None => {
                *slot = Some(g);
                Ok(())
            }
        }
    };

    let mut per_subset = BTreeMap::new();
    let mut total = 0.0;
    for (s, targets) in &batch.targets {
        let w = weights.weight(s);
        let head: &mut BlockGraph;
        let input;
        if s.is_singleton() {
            let i = s.members()[0];
            head = &mut exits[i - 1];
            input = reps[i - 1].clone().expect("forwarded above");
        } else {
            let parts: Vec<&DenseArray> =
                s.members().iter().map(|&i| reps[i - 1].as_ref().expect("forwarded above")).collect();
            input = DenseArray::concat_cols(&parts)?;
            head = downs.get_mut(s).expect("checked above");
        }
        let logits = head.forward(&input)?;
        let (loss, dlogits) = cross_entropy(&logits, targets)?;
        total += w * loss;
        per_subset.insert(s.clone(), loss);
        if w == 0.0 {
            continue;
        }
        let dinput = head.backward(&dlogits.scale(w))?;
        if freeze_upstreams {
            continue;
        }
        if s.is_singleton() {
            let i = s.members()[0];
            accumulate(&mut rep_grads[i - 1], dinput)?;
        } else {
            let widths: Vec<usize> = s.members().iter().map(|&i| ups[i - 1].out_width()).collect();
            for (&i, g) in s.members().iter().zip(dinput.split_cols(&widths)?) {
                accumulate(&mut rep_grads[i - 1], g)?;
            }
        }
    }
    for (up, g) in ups.iter_mut().zip(&rep_grads) {
        if let Some(g) = g {
            up.backward(g)?;
        }
    }
    Ok(MelLoss { total, per_subset })
}

/// Fraction of rows whose argmax (lowest index on ties) equals the target.
pub fn accuracy_from_logits(logits: &DenseArray, targets: &[usize]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Argument("cannot evaluate on an empty dataset".into()));
    }
    if logits.rows() != targets.len() {
        return Err(Error::Dimension(format!("{} rows for {} targets", logits.rows(), targets.len())));
    }
    let correct = targets.iter().enumerate().filter(|(r, &t)| logits.argmax_row(*r) == t).count();
    Ok(correct as f64 / targets.len() as f64)
}

/// Top-1 accuracy of `h_S` on a feature batch with processed targets.
pub fn evaluate(model: &EnsembleModel, s: &SubsetId, features: &DenseArray, targets: &[usize]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Argument("cannot evaluate on an empty dataset".into()));
    }
    accuracy_from_logits(&model.forward_subset(s, features)?, targets)
}

#[derive(Clone, Copy, Debug)]
enum ParamGroup {
    All,
    /// Exits and combiners.
    Heads,
    /// One upstream body with its exit.
    Upstream(usize),
    Combiners,
}

fn param_group(model: &mut EnsembleModel, group: ParamGroup) -> Vec<ParamMut<'_>> {
    let (ups, exits, downs) = model.parts_mut();
    let mut out = Vec::new();
    match group {
        ParamGroup::All => {
            ups.iter_mut().for_each(|g| out.extend(g.params_mut()));
            exits.iter_mut().for_each(|g| out.extend(g.params_mut()));
            downs.values_mut().for_each(|g| out.extend(g.params_mut()));
        }
        ParamGroup::Heads => {
            exits.iter_mut().for_each(|g| out.extend(g.params_mut()));
            downs.values_mut().for_each(|g| out.extend(g.params_mut()));
        }
        ParamGroup::Upstream(i) => {
            out.extend(ups[i - 1].params_mut());
            out.extend(exits[i - 1].params_mut());
        }
        ParamGroup::Combiners => downs.values_mut().for_each(|g| out.extend(g.params_mut())),
    }
    out
}

fn group_sizes(model: &mut EnsembleModel, group: ParamGroup) -> Vec<usize> {
    param_group(model, group).iter().map(|p| p.value.len()).collect()
}

/// Processed train/val/test targets for every subset of the model.
struct Prepared {
    train_x: DenseArray,
    train: BTreeMap<SubsetId, Vec<usize>>,
    val_x: DenseArray,
    val: BTreeMap<SubsetId, Vec<usize>>,
    test_x: DenseArray,
    test: BTreeMap<SubsetId, Vec<usize>>,
}

fn prepare(model: &EnsembleModel, data: &LabeledDataset, plan: &TrainPlan) -> Result<Prepared> {
    if data.dim() != model.spec().input_dim {
        return Err(Error::Config(format!(
            "dataset has {} features but the ensemble expects {}",
            data.dim(),
            model.spec().input_dim
        )));
    }
    let split_targets = |split: Split| -> Result<(DenseArray, BTreeMap<SubsetId, Vec<usize>>)> {
        let part = data.subset(split)?;
        let mut targets = BTreeMap::new();
        for s in model.subsets() {
            let view = process_dataset(&part, &s, &plan.granularity);
            let expected = model.spec().classes(&s).expect("model subset");
            if view.classes != expected {
                return Err(Error::Config(format!(
                    "subset {s}: model predicts {expected} classes but {:?} targets have {}",
                    view.granularity, view.classes
                )));
            }
            targets.insert(s, view.targets.to_vec());
        }
        Ok((part.features, targets))
    };
    let (train_x, train) = split_targets(Split::Train)?;
    let (val_x, val) = split_targets(Split::Val)?;
    let (test_x, test) = split_targets(Split::Test)?;
    Ok(Prepared { train_x, train, val_x, val, test_x, test })
}

struct Phase<'a> {
    name: &'a str,
    epochs: usize,
    schedule: LrSchedule,
    group: ParamGroup,
    freeze_upstreams: bool,
    weights: &'a MelWeights,
    /// Subsets supervised in this phase.
    subsets: Vec<SubsetId>,
    order_tag: String,
}

fn run_phase(
    model: &mut EnsembleModel,
    prep: &Prepared,
    plan: &TrainPlan,
    phase: &Phase<'_>,
    records: &mut Vec<EpochRecord>,
) -> Result<()> {
    let mut opt = OptimizerState::new(plan.optimizer, &group_sizes(model, phase.group));
    let n = prep.train_x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..phase.epochs {
        let lr = phase.schedule.rate(epoch + 1)?;
        let mut rng = rng_for(plan.seed, &format!("batches/{}/{epoch}", phase.order_tag));
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(plan.batch_size) {
            let batch = Batch {
                x: prep.train_x.select_rows(chunk)?,
                targets: phase
                    .subsets
                    .iter()
                    .map(|s| (s.clone(), chunk.iter().map(|&i| prep.train[s][i]).collect()))
                    .collect(),
            };
            model.zero_grad();
            let global_epoch = records.len() + 1;
            let loss = mel_loss_grad(model, &batch, phase.weights, phase.freeze_upstreams).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged { epoch: global_epoch, phase: phase.name.to_string() },
                other => other,
            })?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged { epoch: global_epoch, phase: phase.name.to_string() });
            }
            let mut params = param_group(model, phase.group);
            opt.adamw_step(&mut params, lr).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => {
                    Error::Diverged { epoch: global_epoch, phase: phase.name.to_string() }
                }
                other => other,
            })?;
            if params.iter().any(|p| p.value.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch: global_epoch, phase: phase.name.to_string() });
            }
        }
        model.zero_grad();
        let mut risk = BTreeMap::new();
        let mut val_accuracy = BTreeMap::new();
        for s in model.subsets() {
            let (r, _) = cross_entropy(&model.forward_subset(&s, &prep.train_x)?, &prep.train[&s])?;
            if !r.is_finite() {
                return Err(Error::Diverged { epoch: records.len() + 1, phase: phase.name.to_string() });
            }
            risk.insert(s.clone(), r);
            val_accuracy.insert(s.clone(), evaluate(model, &s, &prep.val_x, &prep.val[&s])?);
        }
        records.push(EpochRecord { phase: phase.name.to_string(), epoch: records.len() + 1, lr, risk, val_accuracy });
    }
    Ok(())
}

fn fine_tune_schedule(plan: &TrainPlan) -> LrSchedule {
    LrSchedule {
        base_rate: plan.fine_tune_rate,
        warmup_epochs: 0,
        total_epochs: plan.fine_tune_epochs,
        min_rate: plan.schedule.min_rate.min(plan.fine_tune_rate),
    }
}

fn finish(
    model: &EnsembleModel,
    prep: &Prepared,
    plan: &TrainPlan,
    weights: &MelWeights,
    epochs: Vec<EpochRecord>,
    started: Instant,
) -> Result<TrainReport> {
    let mut test_accuracy = BTreeMap::new();
    let mut test_risk = BTreeMap::new();
    let mut param_counts = BTreeMap::new();
    for s in model.subsets() {
        let logits = model.forward_subset(&s, &prep.test_x)?;
        test_accuracy.insert(s.clone(), accuracy_from_logits(&logits, &prep.test[&s])?);
        test_risk.insert(s.clone(), cross_entropy(&logits, &prep.test[&s])?.0);
        param_counts.insert(s.clone(), model.param_count(&s)?);
    }
    let gamma_satisfied =
        weights.gamma.iter().map(|(s, &g)| (s.clone(), test_risk.get(s).is_some_and(|&r| r <= g))).collect();
    Ok(TrainReport {
        strategy: plan.strategy,
        seed: plan.seed,
        granularity: model
            .subsets()
            .into_iter()
            .map(|s| {
                let g = plan.granularity_of(&s);
                (s, g)
            })
            .collect(),
        lambda: weights.lambda.clone(),
        epochs,
        test_accuracy,
        test_risk,
        gamma_satisfied,
        param_counts,
        wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn expect_strategy(plan: &TrainPlan, wanted: Strategy) -> Result<()> {
    plan.validate()?;
    if plan.strategy != wanted {
        return Err(Error::Config(format!(
            "plan strategy is {} but {} training was requested",
            plan.strategy.as_str(),
            wanted.as_str()
        )));
    }
    Ok(())
}

fn train_joint(
    model: &mut EnsembleModel,
    data: &LabeledDataset,
    weights: &MelWeights,
    plan: &TrainPlan,
) -> Result<TrainReport> {
    let started = Instant::now();
    weights.validate(model)?;
    let prep = prepare(model, data, plan)?;
    let supervised: Vec<SubsetId> = model.subsets().into_iter().filter(|s| weights.weight(s) > 0.0).collect();
    let mut records = Vec::new();
    run_phase(
        model,
        &prep,
        plan,
        &Phase {
            name: "joint",
            epochs: plan.epochs,
            schedule: plan.schedule,
            group: ParamGroup::All,
            freeze_upstreams: false,
            weights,
            subsets: supervised.clone(),
            order_tag: "joint".into(),
        },
        &mut records,
    )?;
    if plan.fine_tune_epochs > 0 {
        run_phase(
            model,
            &prep,
            plan,
            &Phase {
                name: "fine-tune",
                epochs: plan.fine_tune_epochs,
                schedule: fine_tune_schedule(plan),
                group: ParamGroup::Heads,
                freeze_upstreams: true,
                weights,
                subsets: supervised,
                order_tag: "fine-tune".into(),
            },
            &mut records,
        )?;
    }
    finish(model, &prep, plan, weights, records, started)
}

/// Joint training on the weighted objective, then optional fine-tuning of
/// exits and combiners with upstream bodies frozen.
pub fn train_mel(
    model: &mut EnsembleModel,
    data: &LabeledDataset,
    weights: &MelWeights,
    plan: &TrainPlan,
) -> Result<TrainReport> {
    expect_strategy(plan, Strategy::Mel)?;
    train_joint(model, data, weights, plan)
}

/// The weights standalone training uses: only the full set keeps its weight
/// (1 when undeclared or zero); every proper subset gets 0.
pub fn standalone_weights(m: usize, weights: &MelWeights) -> MelWeights {
    let full = SubsetId::full(m);
    let w = weights.weight(&full);
    let mut lambda: BTreeMap<SubsetId, f64> = SubsetId::all(m).into_iter().map(|s| (s, 0.0)).collect();
    lambda.insert(full, if w > 0.0 { w } else { 1.0 });
    MelWeights { lambda, gamma: weights.gamma.clone() }
}

/// Trains only `h_{1..M}`; identical to [`train_mel`] with every proper
/// subset's weight set to zero. `weights` supplies gamma targets and the
/// full-set weight.
pub fn train_standalone(
    model: &mut EnsembleModel,
    data: &LabeledDataset,
    weights: &MelWeights,
    plan: &TrainPlan,
) -> Result<TrainReport> {
    expect_strategy(plan, Strategy::Standalone)?;
    train_joint(model, data, &standalone_weights(model.m(), weights), plan)
}

/// Two-stage baseline: each upstream with its exit trained alone on its own
/// batch order, then every combiner trained on the frozen upstreams.
///
/// `weights.gamma` is used for reporting only; stage losses are unweighted.
pub fn train_individual(
    model: &mut EnsembleModel,
    data: &LabeledDataset,
    weights: &MelWeights,
    plan: &TrainPlan,
) -> Result<TrainReport> {
    expect_strategy(plan, Strategy::Individual)?;
    let started = Instant::now();
    let prep = prepare(model, data, plan)?;
    let mut records = Vec::new();
    for i in 1..=model.m() {
        let single = SubsetId::singleton(i);
        let w = MelWeights { lambda: [(single.clone(), 1.0)].into(), gamma: BTreeMap::new() };
        run_phase(
            model,
            &prep,
            plan,
            &Phase {
                name: "upstream",
                epochs: plan.epochs,
                schedule: plan.schedule,
                group: ParamGroup::Upstream(i),
                freeze_upstreams: false,
                weights: &w,
                subsets: vec![single],
                order_tag: format!("upstream-{i}"),
            },
            &mut records,
        )?;
    }
    let combined: Vec<SubsetId> = model.subsets().into_iter().filter(|s| !s.is_singleton()).collect();
    let w = MelWeights { lambda: combined.iter().map(|s| (s.clone(), 1.0)).collect(), gamma: BTreeMap::new() };
    run_phase(
        model,
        &prep,
        plan,
        &Phase {
            name: "combiner",
            epochs: plan.epochs,
            schedule: plan.schedule,
            group: ParamGroup::Combiners,
            freeze_upstreams: true,
            weights: &w,
            subsets: combined,
            order_tag: "joint".into(),
        },
        &mut records,
    )?;
    let mut reported = w;
    reported.lambda.extend((1..=model.m()).map(|i| (SubsetId::singleton(i), 1.0)));
    reported.gamma = weights.gamma.clone();
    finish(model, &prep, plan, &reported, records, started)
}

/// Trains one upstream-sized model with its exit, alone, as subset `{1}`.
/// The model is initialized from `plan.seed`.
pub fn train_small(
    input_dim: usize,
    arch: &UpstreamSpec,
    data: &LabeledDataset,
    plan: &TrainPlan,
) -> Result<(EnsembleModel, TrainReport)> {
    expect_strategy(plan, Strategy::Small)?;
    let started = Instant::now();
    let mut model = EnsembleModel::single(input_dim, arch.clone(), plan.seed)?;
    let prep = prepare(&model, data, plan)?;
    let single = SubsetId::singleton(1);
    let w = MelWeights { lambda: [(single.clone(), 1.0)].into(), gamma: BTreeMap::new() };
    let mut records = Vec::new();
    run_phase(
        &mut model,
        &prep,
        plan,
        &Phase {
            name: "small",
            epochs: plan.epochs,
            schedule: plan.schedule,
            group: ParamGroup::All,
            freeze_upstreams: false,
            weights: &w,
            subsets: vec![single],
            order_tag: "joint".into(),
        },
        &mut records,
    )?;
    let report = finish(&model, &prep, plan, &w, records, started)?;
    Ok((model, report))
}
