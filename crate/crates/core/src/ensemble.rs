//! Subset-indexed ensembles.
//!
//! Upstream `i` is a prefix-of-blocks feedforward model whose last hidden layer
//! is its intermediate representation. Every upstream has an exit head used when
//! it must serve alone. Every subset `S` with two or more members has a
//! downstream combiner that reads the members' representations concatenated in
//! ascending index order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::{Activation, BlockGraph, DenseArray};

/// Non-empty set of 1-based upstream indices, kept sorted.
///
/// Serializes as `"{1,2}"` so subset-keyed maps become JSON objects.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SubsetId(Vec<usize>);

impl SubsetId {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = members.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Argument("a subset needs at least one member".into()));
        }
        if set.contains(&0) {
            return Err(Error::Argument("upstream indices start at 1".into()));
        }
        Ok(Self(set.into_iter().collect()))
    }

    pub fn singleton(i: usize) -> Self {
        assert!(i >= 1, "upstream indices start at 1");
        Self(vec![i])
    }

    /// `{1, ..., m}`.
    pub fn full(m: usize) -> Self {
        assert!(m >= 1);
        Self((1..=m).collect())
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_singleton(&self) -> bool {
        self.0.len() == 1
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn is_subset_of(&self, other: &SubsetId) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    pub fn fits(&self, m: usize) -> bool {
        self.0.last().is_some_and(|&i| i <= m)
    }

    /// Every non-empty subset of `{1..m}`, by size and then lexicographically.
    pub fn all(m: usize) -> Vec<SubsetId> {
        let mut out: Vec<SubsetId> = (1u64..(1u64 << m))
            .map(|mask| SubsetId((1..=m).filter(|i| mask & (1 << (i - 1)) != 0).collect()))
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Subsets of `{1..m}` with at least two members: the ones needing a combiner.
    pub fn combined(m: usize) -> Vec<SubsetId> {
        Self::all(m).into_iter().filter(|s| s.len() >= 2).collect()
    }
}

impl fmt::Display for SubsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl FromStr for SubsetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('{').trim_end_matches('}');
        let members = inner
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| Error::Argument(format!("bad subset {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }
}

impl TryFrom<String> for SubsetId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SubsetId> for String {
    fn from(s: SubsetId) -> String {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpstreamSpec {
    /// Output width of each block; the last is the representation width.
    pub block_widths: Vec<usize>,
    /// Hidden widths of the exit head (empty for a single classifier layer).
    #[serde(default)]
    pub exit_hidden: Vec<usize>,
    /// Classes predicted by the exit head.
    pub classes: usize,
}

impl UpstreamSpec {
    pub fn rep_width(&self) -> usize {
        *self.block_widths.last().expect("validated non-empty")
    }

    fn body_widths(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim).chain(self.block_widths.iter().copied()).collect()
    }

    fn exit_widths(&self) -> Vec<usize> {
        std::iter::once(self.rep_width())
            .chain(self.exit_hidden.iter().copied())
            .chain(std::iter::once(self.classes))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamSpec {
    pub subset: SubsetId,
    /// Hidden widths after concatenation; empty means concat-then-classifier.
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub classes: usize,
}

/// Architecture of a whole ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub input_dim: usize,
    pub upstreams: Vec<UpstreamSpec>,
    pub downstreams: Vec<DownstreamSpec>,
}

fn mlp_params(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl EnsembleSpec {
    /// `m` identical upstreams and one combiner per subset of size two or more.
    pub fn symmetric(
        m: usize,
        input_dim: usize,
        block_widths: &[usize],
        downstream_hidden: &[usize],
        classes: impl Fn(&SubsetId) -> usize,
    ) -> Self {
        let upstreams = (1..=m)
            .map(|i| UpstreamSpec {
                block_widths: block_widths.to_vec(),
                exit_hidden: Vec::new(),
                classes: classes(&SubsetId::singleton(i)),
            })
            .collect();
        let downstreams = SubsetId::combined(m)
            .into_iter()
            .map(|s| DownstreamSpec { classes: classes(&s), hidden: downstream_hidden.to_vec(), subset: s })
            .collect();
        Self { input_dim, upstreams, downstreams }
    }

    pub fn m(&self) -> usize {
        self.upstreams.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if m < 2 {
            return Err(Error::Spec {
                subset: SubsetId::full(m.max(1)).to_string(),
                reason: format!("an ensemble needs at least two upstreams, got {m}"),
            });
        }
        self.validate_parts()?;
        let mut seen = BTreeSet::new();
        for d in &self.downstreams {
            let name = d.subset.to_string();
            if !d.subset.fits(m) {
                return Err(Error::Spec { subset: name, reason: format!("member outside 1..={m}") });
            }
            if d.subset.is_singleton() {
                return Err(Error::Spec { subset: name, reason: "singletons use exit heads, not combiners".into() });
            }
            if !seen.insert(d.subset.clone()) {
                return Err(Error::Spec { subset: name, reason: "duplicate combiner".into() });
            }
            if d.classes == 0 || d.hidden.contains(&0) {
                return Err(Error::Spec { subset: name, reason: "zero width".into() });
            }
        }
        if let Some(missing) = SubsetId::combined(m).into_iter().find(|s| !seen.contains(s)) {
            return Err(Error::Spec { subset: missing.to_string(), reason: "no combiner declared".into() });
        }
        Ok(())
    }

    fn validate_parts(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Spec { subset: "{1}".into(), reason: "input dimension is zero".into() });
        }
        for (k, u) in self.upstreams.iter().enumerate() {
            if u.block_widths.is_empty() || u.block_widths.contains(&0) || u.exit_hidden.contains(&0) || u.classes == 0
            {
                return Err(Error::Spec {
                    subset: SubsetId::singleton(k + 1).to_string(),
                    reason: format!("invalid upstream widths {:?} / classes {}", u.block_widths, u.classes),
                });
            }
        }
        Ok(())
    }

    pub fn downstream(&self, s: &SubsetId) -> Option<&DownstreamSpec> {
        self.downstreams.iter().find(|d| &d.subset == s)
    }

    /// Input width of the combiner for `s`: the sum of member representation widths.
    pub fn combiner_input_width(&self, s: &SubsetId) -> usize {
        s.members().iter().map(|&i| self.upstreams[i - 1].rep_width()).sum()
    }

    /// Output classes of `h_S`.
    pub fn classes(&self, s: &SubsetId) -> Option<usize> {
        if s.is_singleton() {
            self.upstreams.get(s.members()[0] - 1).map(|u| u.classes)
        } else {
            self.downstream(s).map(|d| d.classes)
        }
    }

    pub fn upstream_params(&self, i: usize) -> usize {
        let u = &self.upstreams[i - 1];
        mlp_params(&u.body_widths(self.input_dim)) + mlp_params(&u.exit_widths())
    }

    pub fn downstream_params(&self, s: &SubsetId) -> Option<usize> {
        let d = self.downstream(s)?;
        Some(mlp_params(&self.combiner_widths(d)))
    }

    /// Parameter count of `h_S` computed from widths alone: member upstreams with
    /// their exits, plus the combiner for `|S| >= 2`.
    pub fn param_count(&self, s: &SubsetId) -> Option<usize> {
        if !s.fits(self.m()) {
            return None;
        }
        let ups: usize = s.members().iter().map(|&i| self.upstream_params(i)).sum();
        if s.is_singleton() {
            Some(ups)
        } else {
            Some(ups + self.downstream_params(s)?)
        }
    }

    /// Parameters of the whole deployment: every upstream with its exit and
    /// every combiner.
    pub fn total_params(&self) -> usize {
        let ups: usize = (1..=self.m()).map(|i| self.upstream_params(i)).sum();
        let downs: usize = self.downstreams.iter().map(|d| mlp_params(&self.combiner_widths(d))).sum();
        ups + downs
    }

    fn combiner_widths(&self, d: &DownstreamSpec) -> Vec<usize> {
        std::iter::once(self.combiner_input_width(&d.subset))
            .chain(d.hidden.iter().copied())
            .chain(std::iter::once(d.classes))
            .collect()
    }
}

/// The trained (or initialized) family `{h_S}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleModel {
    spec: EnsembleSpec,
    upstreams: Vec<BlockGraph>,
    exits: Vec<BlockGraph>,
    downstreams: BTreeMap<SubsetId, BlockGraph>,
}

/// Builds an ensemble with weights drawn deterministically from `seed`.
///
/// Each component has its own stream keyed by its role and subset, so the
/// declaration order of combiners does not affect any weight.
pub fn build_ensemble(spec: &EnsembleSpec, seed: u64) -> Result<EnsembleModel> {
    spec.validate()?;
    build_unchecked(spec, seed)
}

fn build_unchecked(spec: &EnsembleSpec, seed: u64) -> Result<EnsembleModel> {
    let mut upstreams = Vec::with_capacity(spec.m());
    let mut exits = Vec::with_capacity(spec.m());
    for (k, u) in spec.upstreams.iter().enumerate() {
        let i = k + 1;
        let mut rng = rng_for(seed, &format!("upstream/{i}"));
        upstreams.push(BlockGraph::mlp(&u.body_widths(spec.input_dim), Activation::Relu, &mut rng)?);
        let mut rng = rng_for(seed, &format!("exit/{i}"));
        exits.push(BlockGraph::mlp(&u.exit_widths(), Activation::Identity, &mut rng)?);
    }
    let mut downstreams = BTreeMap::new();
    for d in &spec.downstreams {
        let mut rng = rng_for(seed, &format!("downstream/{}", d.subset));
        let graph = BlockGraph::mlp(&spec.combiner_widths(d), Activation::Identity, &mut rng)?;
        downstreams.insert(d.subset.clone(), graph);
    }
    let mut spec = spec.clone();
    spec.downstreams.sort_by(|a, b| a.subset.cmp(&b.subset));
    Ok(EnsembleModel { spec, upstreams, exits, downstreams })
}

impl EnsembleModel {
    /// A lone upstream with its exit head, addressed as subset `{1}`.
    pub fn single(input_dim: usize, upstream: UpstreamSpec, seed: u64) -> Result<Self> {
        let spec = EnsembleSpec { input_dim, upstreams: vec![upstream], downstreams: Vec::new() };
        spec.validate_parts()?;
        build_unchecked(&spec, seed)
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.upstreams.len()
    }

    /// Every subset with a model: all singletons and every declared combiner.
    pub fn subsets(&self) -> Vec<SubsetId> {
        let mut out: Vec<SubsetId> = (1..=self.m()).map(SubsetId::singleton).collect();
        out.extend(self.downstreams.keys().cloned());
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }

    pub fn has_subset(&self, s: &SubsetId) -> bool {
        if s.is_singleton() {
            s.fits(self.m())
        } else {
            self.downstreams.contains_key(s)
        }
    }

    fn check_upstream(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.m() {
            return Err(Error::Argument(format!("upstream index {i} outside 1..={}", self.m())));
        }
        Ok(())
    }

    fn check_subset(&self, s: &SubsetId) -> Result<()> {
        if self.has_subset(s) {
            Ok(())
        } else {
            Err(Error::UnknownSubset(s.to_string()))
        }
    }

    pub fn upstream(&self, i: usize) -> Result<&BlockGraph> {
        self.check_upstream(i)?;
        Ok(&self.upstreams[i - 1])
    }

    pub fn upstream_mut(&mut self, i: usize) -> Result<&mut BlockGraph> {
        self.check_upstream(i)?;
        Ok(&mut self.upstreams[i - 1])
    }

    pub fn exit(&self, i: usize) -> Result<&BlockGraph> {
        self.check_upstream(i)?;
        Ok(&self.exits[i - 1])
    }

    pub fn exit_mut(&mut self, i: usize) -> Result<&mut BlockGraph> {
        self.check_upstream(i)?;
        Ok(&mut self.exits[i - 1])
    }

    pub fn downstream(&self, s: &SubsetId) -> Result<&BlockGraph> {
        self.downstreams.get(s).ok_or_else(|| Error::UnknownSubset(s.to_string()))
    }

    pub fn downstream_mut(&mut self, s: &SubsetId) -> Result<&mut BlockGraph> {
        self.downstreams.get_mut(s).ok_or_else(|| Error::UnknownSubset(s.to_string()))
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [BlockGraph], &mut [BlockGraph], &mut BTreeMap<SubsetId, BlockGraph>) {
        (&mut self.upstreams, &mut self.exits, &mut self.downstreams)
    }

    /// Final hidden representation of upstream `i`, before its exit head.
    pub fn upstream_rep(&self, i: usize, x: &DenseArray) -> Result<DenseArray> {
        self.upstream(i)?.infer(x)
    }

    /// Logits of `h_S` on `x` (a single sample or a batch).
    pub fn forward_subset(&self, s: &SubsetId, x: &DenseArray) -> Result<DenseArray> {
        self.check_subset(s)?;
        if s.is_singleton() {
            let i = s.members()[0];
            let rep = self.upstream_rep(i, x)?;
            return self.exits[i - 1].infer(&rep);
        }
        let reps = s.members().iter().map(|&i| self.upstream_rep(i, x)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&DenseArray> = reps.iter().collect();
        self.downstreams[s].infer(&DenseArray::concat_cols(&refs)?)
    }

    /// Parameters used by `h_S`, counting member upstreams and their exits plus
    /// the combiner for `|S| >= 2`.
    pub fn param_count(&self, s: &SubsetId) -> Result<usize> {
        self.check_subset(s)?;
        let ups: usize =
            s.members().iter().map(|&i| self.upstreams[i - 1].param_count() + self.exits[i - 1].param_count()).sum();
        Ok(ups + self.downstreams.get(s).map_or(0, BlockGraph::param_count))
    }

    /// Parameters across every component of the model.
    pub fn total_param_count(&self) -> usize {
        self.upstreams.iter().chain(&self.exits).chain(self.downstreams.values()).map(BlockGraph::param_count).sum()
    }

    pub fn zero_grad(&mut self) {
        self.upstreams
            .iter_mut()
            .chain(&mut self.exits)
            .chain(self.downstreams.values_mut())
            .for_each(BlockGraph::zero_grad);
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            upstreams: self.upstreams.iter().map(BlockGraph::flat_params).collect(),
            exits: self.exits.iter().map(BlockGraph::flat_params).collect(),
            downstreams: self.downstreams.iter().map(|(s, g)| (s.clone(), g.flat_params())).collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Argument(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        let mut model = if ck.spec.m() == 1 {
            Self::single(ck.spec.input_dim, ck.spec.upstreams[0].clone(), 0)?
        } else {
            build_ensemble(&ck.spec, 0)?
        };
        if ck.upstreams.len() != model.m() || ck.exits.len() != model.m() {
            return Err(Error::Argument("checkpoint upstream count does not match spec".into()));
        }
        for (g, p) in model.upstreams.iter_mut().zip(&ck.upstreams) {
            g.set_flat_params(p)?;
        }
        for (g, p) in model.exits.iter_mut().zip(&ck.exits) {
            g.set_flat_params(p)?;
        }
        if ck.downstreams.len() != model.downstreams.len() {
            return Err(Error::Argument("checkpoint combiner count does not match spec".into()));
        }
        for (s, p) in &ck.downstreams {
            model.downstream_mut(s)?.set_flat_params(p)?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "mel-ensemble";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON checkpoint: the spec plus flat parameters per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: EnsembleSpec,
    pub upstreams: Vec<Vec<f64>>,
    pub exits: Vec<Vec<f64>>,
    pub downstreams: BTreeMap<SubsetId, Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Layer;

    fn s(m: &[usize]) -> SubsetId {
        SubsetId::new(m.iter().copied()).unwrap()
    }

    fn spec2(widths: &[usize]) -> EnsembleSpec {
        EnsembleSpec::symmetric(2, 4, widths, &[], |_| 3)
    }

    #[test]
    fn subset_ids_are_canonical() {
        assert_eq!(s(&[2, 1]), s(&[1, 2]));
        assert_eq!(s(&[3, 1]).to_string(), "{1,3}");
        assert_eq!("{1,3}".parse::<SubsetId>().unwrap(), s(&[1, 3]));
        assert_eq!("2, 1".parse::<SubsetId>().unwrap(), s(&[1, 2]));
        assert!(SubsetId::new([]).is_err());
        assert!(SubsetId::new([0, 1]).is_err());
        assert!("{a}".parse::<SubsetId>().is_err());
    }

    #[test]
    fn all_subsets_ordered_by_size() {
        let all: Vec<String> = SubsetId::all(3).iter().map(ToString::to_string).collect();
        assert_eq!(all, ["{1}", "{2}", "{3}", "{1,2}", "{1,3}", "{2,3}", "{1,2,3}"]);
    }

    #[test]
    fn two_upstreams_need_one_combiner() {
        let model = build_ensemble(&spec2(&[8]), 0).unwrap();
        let keys: Vec<String> = model.downstreams.keys().map(ToString::to_string).collect();
        assert_eq!(keys, ["{1,2}"]);
    }

    #[test]
    fn three_upstreams_need_four_combiners() {
        let spec = EnsembleSpec::symmetric(3, 4, &[8], &[], |_| 3);
        let model = build_ensemble(&spec, 0).unwrap();
        let keys: Vec<String> = model.downstreams.keys().map(ToString::to_string).collect();
        assert_eq!(keys, ["{1,2}", "{1,2,3}", "{1,3}", "{2,3}"]);
    }

    #[test]
    fn asymmetric_combiner_width_is_sum_of_reps() {
        let mut spec = spec2(&[8]);
        spec.upstreams[1].block_widths = vec![8, 16];
        assert_eq!(spec.combiner_input_width(&s(&[1, 2])), 24);
        let model = build_ensemble(&spec, 1).unwrap();
        assert_eq!(model.downstream(&s(&[1, 2])).unwrap().in_width(), 24);
    }

    #[test]
    fn missing_combiner_is_reported_by_subset() {
        let mut spec = EnsembleSpec::symmetric(3, 4, &[8], &[], |_| 3);
        spec.downstreams.retain(|d| d.subset != s(&[1, 3]));
        match build_ensemble(&spec, 0).unwrap_err() {
            Error::Spec { subset, .. } => assert_eq!(subset, "{1,3}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn singleton_forward_is_exit_of_rep() {
        let model = build_ensemble(&spec2(&[6, 5]), 4).unwrap();
        let x = DenseArray::vector(vec![0.1, -0.4, 2.0, 1.0]).unwrap();
        let rep = model.upstream_rep(1, &x).unwrap();
        assert_eq!(rep.len(), 5);
        let expected = model.exit(1).unwrap().infer(&rep).unwrap();
        assert_eq!(model.forward_subset(&s(&[1]), &x).unwrap(), expected);
    }

    #[test]
    fn identity_upstream_returns_input() {
        let mut model = build_ensemble(&EnsembleSpec::symmetric(2, 2, &[2], &[], |_| 2), 0).unwrap();
        let eye = Layer::new(
            DenseArray::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            DenseArray::zeros(&[2]),
            Activation::Relu,
        )
        .unwrap();
        *model.upstream_mut(1).unwrap().layer_mut(0) = eye;
        let x = DenseArray::vector(vec![0.25, 3.0]).unwrap();
        assert_eq!(model.upstream_rep(1, &x).unwrap(), x);
    }

    #[test]
    fn hand_set_combiner_matches_hand_computation() {
        // Identity upstreams on 2-d input; the classifier sees [x, x].
        let mut model = build_ensemble(&EnsembleSpec::symmetric(2, 2, &[2], &[], |_| 2), 0).unwrap();
        for i in 1..=2 {
            *model.upstream_mut(i).unwrap().layer_mut(0) = Layer::new(
                DenseArray::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                DenseArray::zeros(&[2]),
                Activation::Relu,
            )
            .unwrap();
        }
        let w = vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 3.0, 1.0];
        *model.downstream_mut(&s(&[1, 2])).unwrap().layer_mut(0) = Layer::new(
            DenseArray::matrix(2, 4, w).unwrap(),
            DenseArray::vector(vec![0.1, -0.2]).unwrap(),
            Activation::Identity,
        )
        .unwrap();
        let x = DenseArray::vector(vec![1.0, 2.0]).unwrap();
        let logits = model.forward_subset(&s(&[1, 2]), &x).unwrap();
        // concat = [1, 2, 1, 2]
        // row 0: 1 + 4 + 0 - 2 + 0.1 = 3.1 ; row 1: 0.5 + 0 + 3 + 2 - 0.2 = 5.3
        assert!((logits.data()[0] - 3.1).abs() < 1e-12);
        assert!((logits.data()[1] - 5.3).abs() < 1e-12);
    }

    #[test]
    fn declaration_order_does_not_change_outputs() {
        let spec = EnsembleSpec::symmetric(3, 4, &[5], &[4], |_| 3);
        let mut shuffled = spec.clone();
        shuffled.downstreams.reverse();
        let a = build_ensemble(&spec, 8).unwrap();
        let b = build_ensemble(&shuffled, 8).unwrap();
        let x = DenseArray::vector(vec![0.3, 0.1, -1.0, 0.7]).unwrap();
        for sub in a.subsets() {
            assert_eq!(a.forward_subset(&sub, &x).unwrap(), b.forward_subset(&sub, &x).unwrap());
        }
    }

    #[test]
    fn unknown_subset_is_a_lookup_error() {
        let model = build_ensemble(&spec2(&[4]), 0).unwrap();
        let x = DenseArray::vector(vec![0.0; 4]).unwrap();
        assert!(matches!(model.forward_subset(&s(&[1, 3]), &x), Err(Error::UnknownSubset(_))));
        assert!(model.upstream_rep(3, &x).is_err());
    }

    #[test]
    fn param_counts_follow_the_whole_ensemble_convention() {
        let model = build_ensemble(&spec2(&[8]), 0).unwrap();
        let one = model.param_count(&s(&[1])).unwrap();
        assert_eq!(one, (4 * 8 + 8) + (8 * 3 + 3));
        assert_eq!(one, model.param_count(&s(&[2])).unwrap());
        let down = model.downstream(&s(&[1, 2])).unwrap().param_count();
        assert_eq!(model.param_count(&s(&[1, 2])).unwrap(), 2 * one + down);
        for sub in model.subsets() {
            assert_eq!(model.spec().param_count(&sub), Some(model.param_count(&sub).unwrap()));
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_ensemble(&spec2(&[8, 4]), 42).unwrap();
        let b = build_ensemble(&spec2(&[8, 4]), 42).unwrap();
        let c = build_ensemble(&spec2(&[8, 4]), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let model = build_ensemble(&EnsembleSpec::symmetric(3, 4, &[7, 3], &[5], |_| 4), 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = EnsembleModel::load(&path).unwrap();
        assert_eq!(back, model);
        for (a, b) in model.upstreams.iter().zip(&back.upstreams) {
            let bits_a: Vec<u64> = a.flat_params().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.flat_params().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }
}
