//! Synthetic hierarchical classification data and label coarsification.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::SubsetId;
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::DenseArray;

/// Total, surjective map from fine labels to coarse labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelHierarchy {
    fine_to_coarse: Vec<usize>,
    coarse_count: usize,
}

impl LabelHierarchy {
    pub fn new(fine_to_coarse: Vec<usize>, coarse_count: usize) -> Result<Self> {
        if fine_to_coarse.is_empty() || coarse_count == 0 {
            return Err(Error::Argument("hierarchy needs at least one class".into()));
        }
        let mut hit = vec![false; coarse_count];
        for (f, &c) in fine_to_coarse.iter().enumerate() {
            if c >= coarse_count {
                return Err(Error::Argument(format!("fine label {f} maps to unknown coarse {c}")));
            }
            hit[c] = true;
        }
        if let Some(c) = hit.iter().position(|h| !h) {
            return Err(Error::Argument(format!("coarse label {c} has no fine labels")));
        }
        Ok(Self { fine_to_coarse, coarse_count })
    }

    /// `fine_per_coarse` consecutive fine labels under each coarse label.
    pub fn uniform(coarse_count: usize, fine_per_coarse: usize) -> Result<Self> {
        let map = (0..coarse_count * fine_per_coarse).map(|f| f / fine_per_coarse.max(1)).collect();
        Self::new(map, coarse_count)
    }

    pub fn identity(classes: usize) -> Result<Self> {
        Self::new((0..classes).collect(), classes)
    }

    pub fn fine_count(&self) -> usize {
        self.fine_to_coarse.len()
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse_count
    }

    pub fn coarse_of(&self, fine: usize) -> Option<usize> {
        self.fine_to_coarse.get(fine).copied()
    }

    /// Fine labels under `coarse`, ascending.
    pub fn preimage(&self, coarse: usize) -> Vec<usize> {
        (0..self.fine_count()).filter(|&f| self.fine_to_coarse[f] == coarse).collect()
    }
}

/// Maps fine labels to their coarse labels.
pub fn coarsify(labels: &[usize], hierarchy: &LabelHierarchy) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&f| hierarchy.coarse_of(f).ok_or_else(|| Error::Argument(format!("unknown fine label {f}"))))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split {other:?}"))),
        }
    }
}

/// Target label granularity for one subset's processed dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Fine,
    Coarse,
}

/// Parameters of the Gaussian-mixture generator.
///
/// Coarse centers are drawn with scale `inter_spread`, fine sub-centers around
/// them with scale `intra_spread`, and samples around the sub-centers with
/// scale `noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub coarse_classes: usize,
    pub fine_per_coarse: usize,
    pub dim: usize,
    pub samples_per_fine: usize,
    pub inter_spread: f64,
    pub intra_spread: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            coarse_classes: 4,
            fine_per_coarse: 4,
            dim: 16,
            samples_per_fine: 200,
            inter_spread: 1.0,
            intra_spread: 0.35,
            noise: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_classes == 0 || self.fine_per_coarse == 0 || self.dim == 0 {
            return Err(Error::Argument("class counts and dimension must be positive".into()));
        }
        if self.samples_per_fine < 3 {
            return Err(Error::Argument("need at least 3 samples per fine class to fill every split".into()));
        }
        let spreads = [self.inter_spread, self.intra_spread, self.noise];
        if spreads.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Argument("spreads must be positive".into()));
        }
        if self.intra_spread >= self.inter_spread {
            return Err(Error::Argument(format!(
                "intra/inter spread ratio must be below 1, got {}",
                self.intra_spread / self.inter_spread
            )));
        }
        Ok(())
    }

    pub fn hierarchy(&self) -> Result<LabelHierarchy> {
        LabelHierarchy::uniform(self.coarse_classes, self.fine_per_coarse)
    }

    pub fn fine_classes(&self) -> usize {
        self.coarse_classes * self.fine_per_coarse
    }

    /// Per-class sample counts for (train, val, test); val and test get at
    /// least one sample each.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let n = self.samples_per_fine;
        let held = ((n as f64 * 0.15).floor() as usize).max(1);
        (n - 2 * held, held, held)
    }
}

/// Features with fine and coarse labels and a split tag per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: DenseArray,
    pub fine: Vec<usize>,
    pub coarse: Vec<usize>,
    pub split: Vec<Split>,
    pub hierarchy: LabelHierarchy,
    pub seed: u64,
}

impl LabeledDataset {
    pub fn new(
        features: DenseArray,
        fine: Vec<usize>,
        split: Vec<Split>,
        hierarchy: LabelHierarchy,
        seed: u64,
    ) -> Result<Self> {
        let n = features.rows();
        if features.shape().len() != 2 || fine.len() != n || split.len() != n {
            return Err(Error::Dimension(format!(
                "{} feature rows, {} labels, {} split tags",
                n,
                fine.len(),
                split.len()
            )));
        }
        let coarse = coarsify(&fine, &hierarchy)?;
        Ok(Self { features, fine, coarse, split, hierarchy, seed })
    }

    pub fn len(&self) -> usize {
        self.fine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    /// The samples of one split as a standalone dataset.
    pub fn subset(&self, split: Split) -> Result<Self> {
        let idx = self.indices(split);
        if idx.is_empty() {
            return Err(Error::Argument(format!("split {} is empty", split.as_str())));
        }
        Ok(Self {
            features: self.features.select_rows(&idx)?,
            fine: idx.iter().map(|&i| self.fine[i]).collect(),
            coarse: idx.iter().map(|&i| self.coarse[i]).collect(),
            split: vec![split; idx.len()],
            hierarchy: self.hierarchy.clone(),
            seed: self.seed,
        })
    }

    pub fn labels(&self, granularity: Granularity) -> &[usize] {
        match granularity {
            Granularity::Fine => &self.fine,
            Granularity::Coarse => &self.coarse,
        }
    }

    pub fn classes(&self, granularity: Granularity) -> usize {
        match granularity {
            Granularity::Fine => self.hierarchy.fine_count(),
            Granularity::Coarse => self.hierarchy.coarse_count(),
        }
    }

    /// Writes one row per sample: features, fine, coarse, split.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.extend(["fine", "coarse", "split"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.fine[i].to_string());
            rec.push(self.coarse[i].to_string());
            rec.push(self.split[i].as_str().to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads the CSV layout of [`write_csv`](Self::write_csv). The hierarchy is
    /// rebuilt from the observed (fine, coarse) pairs.
    pub fn read_csv(path: &Path, seed: u64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let dim = r
            .headers()?
            .len()
            .checked_sub(3)
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Argument("csv needs feature columns plus fine, coarse, split".into()))?;
        let (mut data, mut fine, mut coarse, mut split) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Argument(format!("row {}: bad {what}", line + 1));
            for j in 0..dim {
                data.push(rec[j].parse::<f64>().map_err(|_| bad("feature"))?);
            }
            fine.push(rec[dim].parse::<usize>().map_err(|_| bad("fine label"))?);
            coarse.push(rec[dim + 1].parse::<usize>().map_err(|_| bad("coarse label"))?);
            split.push(Split::parse(&rec[dim + 2])?);
        }
        let fine_count = fine.iter().max().map_or(0, |m| m + 1);
        let coarse_count = coarse.iter().max().map_or(0, |m| m + 1);
        let mut map = vec![usize::MAX; fine_count];
        for (&f, &c) in fine.iter().zip(&coarse) {
            if map[f] != usize::MAX && map[f] != c {
                return Err(Error::Argument(format!("fine label {f} appears under two coarse labels")));
            }
            map[f] = c;
        }
        if let Some(f) = map.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Argument(format!("fine label {f} never appears")));
        }
        let hierarchy = LabelHierarchy::new(map, coarse_count)?;
        let features = DenseArray::matrix(fine.len(), dim, data)?;
        Self::new(features, fine, split, hierarchy, seed)
    }
}

/// Generates a stratified Gaussian-mixture dataset.
///
/// Samples of each fine class are assigned to train/val/test in the proportions
/// of [`SyntheticSpec::split_counts`] after a seeded shuffle; output rows are
/// ordered by fine class.
pub fn gen_hierarchical(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let hierarchy = spec.hierarchy()?;
    let mut rng = rng_for(spec.seed, "data/centers");
    let gaussian = |rng: &mut rand_chacha::ChaCha8Rng, scale: f64| -> Vec<f64> {
        (0..spec.dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let coarse_centers: Vec<Vec<f64>> =
        (0..spec.coarse_classes).map(|_| gaussian(&mut rng, spec.inter_spread)).collect();
    let fine_centers: Vec<Vec<f64>> = (0..spec.fine_classes())
        .map(|f| {
            let offset = gaussian(&mut rng, spec.intra_spread);
            let c = &coarse_centers[hierarchy.coarse_of(f).expect("in range")];
            c.iter().zip(offset).map(|(a, b)| a + b).collect()
        })
        .collect();

    let (n_train, n_val, _) = spec.split_counts();
    let mut rng = rng_for(spec.seed, "data/samples");
    let mut data = Vec::with_capacity(spec.fine_classes() * spec.samples_per_fine * spec.dim);
    let mut fine = Vec::new();
    let mut split = Vec::new();
    for (f, center) in fine_centers.iter().enumerate() {
        for _ in 0..spec.samples_per_fine {
            let noise = gaussian(&mut rng, spec.noise);
            data.extend(center.iter().zip(noise).map(|(a, b)| a + b));
            fine.push(f);
        }
        let mut tags: Vec<Split> = (0..spec.samples_per_fine)
            .map(|k| {
                if k < n_train {
                    Split::Train
                } else if k < n_train + n_val {
                    Split::Val
                } else {
                    Split::Test
                }
            })
            .collect();
        tags.shuffle(&mut rng);
        split.extend(tags);
    }
    let features = DenseArray::matrix(fine.len(), spec.dim, data)?;
    LabeledDataset::new(features, fine, split, hierarchy, spec.seed)
}

/// One subset's view of a dataset: shared features, processed targets.
#[derive(Clone, Debug)]
pub struct DatasetView<'a> {
    pub subset: SubsetId,
    pub granularity: Granularity,
    pub features: &'a DenseArray,
    pub targets: &'a [usize],
    pub classes: usize,
}

/// Targets for `subset` at its declared granularity (fine when undeclared).
/// Features are passed through untouched.
pub fn process_dataset<'a>(
    data: &'a LabeledDataset,
    subset: &SubsetId,
    granularity: &BTreeMap<SubsetId, Granularity>,
) -> DatasetView<'a> {
    let g = granularity.get(subset).copied().unwrap_or_default();
    DatasetView {
        subset: subset.clone(),
        granularity: g,
        features: &data.features,
        targets: data.labels(g),
        classes: data.classes(g),
    }
}
