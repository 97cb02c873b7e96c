//! Exact information-theoretic checks on finite learning problems.
//!
//! A finite problem has an instance space `Z` with distribution `P`, a sample
//! size `n` and three finite hypothesis spaces. A stochastic learner maps each
//! dataset `D` in `Z^n` to a pair `(h1, h2)` and then draws `h12` from the pair
//! alone, giving the Markov structure `D -> (h1, h2) -> h12`. Everything is
//! computed by enumerating all `|Z|^n` datasets, so mutual informations and
//! expected generalization gaps are exact up to floating-point rounding.
//!
//! All logarithms are natural; information is in nats.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of datasets `|Z|^n` that will be enumerated.
pub const MAX_DATASETS: u128 = 1_000_000;

/// Sub-Gaussian parameter of any loss bounded in `[0, 1]`.
pub const BOUNDED_LOSS_SIGMA: f64 = 0.5;

/// Slack allowed when comparing a realized quantity against its bound.
pub const BOUND_TOLERANCE: f64 = 1e-12;

const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// `sum p(a,b) ln(p(a,b) / (p(a) p(b)))` over a 2-D table, with `0 ln 0 = 0`.
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64> {
    let rows = joint.len();
    let cols = joint.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || joint.iter().any(|r| r.len() != cols) {
        return Err(Error::Argument("joint table must be a non-empty rectangle".into()));
    }
    let flat: Vec<f64> = joint.iter().flatten().copied().collect();
    mi_flat(&flat, rows, cols)
}

fn mi_flat(p: &[f64], rows: usize, cols: usize) -> Result<f64> {
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Argument(format!("probabilities must be non-negative, got {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Argument(format!("joint sums to {total}, not 1")));
    }
    let mut pa = vec![0.0; rows];
    let mut pb = vec![0.0; cols];
    for a in 0..rows {
        for b in 0..cols {
            pa[a] += p[a * cols + b];
            pb[b] += p[a * cols + b];
        }
    }
    let mut mi = 0.0;
    for a in 0..rows {
        for b in 0..cols {
            let v = p[a * cols + b];
            if v > 0.0 {
                mi += v * (v / (pa[a] * pb[b])).ln();
            }
        }
    }
    // Rounding can leave an independent table a hair below zero.
    Ok(mi.max(0.0))
}

/// Instance distribution, sample size and bounded loss tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteLearningProblem {
    /// `P(z)` for each instance.
    pub instance_probs: Vec<f64>,
    pub n: usize,
    /// `loss[h][z]` in `[0, 1]` for each hypothesis space.
    pub loss1: Vec<Vec<f64>>,
    pub loss2: Vec<Vec<f64>>,
    pub loss12: Vec<Vec<f64>>,
}

impl FiniteLearningProblem {
    pub fn instances(&self) -> usize {
        self.instance_probs.len()
    }

    pub fn dataset_count(&self) -> u128 {
        (self.instances() as u128).saturating_pow(self.n as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let z = self.instances();
        if z == 0 || self.n == 0 {
            return Err(Error::Argument("need at least one instance and one sample".into()));
        }
        let count = self.dataset_count();
        if count > MAX_DATASETS {
            return Err(Error::TooLarge { count, limit: MAX_DATASETS });
        }
        check_distribution(&self.instance_probs, "instance distribution")?;
        for (name, table) in [("loss1", &self.loss1), ("loss2", &self.loss2), ("loss12", &self.loss12)] {
            if table.is_empty() {
                return Err(Error::Argument(format!("{name}: empty hypothesis space")));
            }
            for row in table {
                if row.len() != z {
                    return Err(Error::Argument(format!("{name}: row has {} entries, expected {z}", row.len())));
                }
                if row.iter().any(|l| !(0.0..=1.0).contains(l)) {
                    return Err(Error::Argument(format!("{name}: losses must lie in [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Instance indices of dataset number `d` (base-`|Z|` digits, first sample
    /// least significant).
    fn dataset(&self, mut d: usize) -> Vec<usize> {
        let z = self.instances();
        (0..self.n)
            .map(|_| {
                let digit = d % z;
                d /= z;
                digit
            })
            .collect()
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Argument(format!("{what}: negative or non-finite probability")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Argument(format!("{what}: sums to {total}, not 1")));
    }
    Ok(())
}

/// How `(h1, h2)` is drawn given the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKernel {
    /// `P(h1|D) P(h2|D)`: the two upstream learners are independent given `D`.
    Independent { h1: Vec<Vec<f64>>, h2: Vec<Vec<f64>> },
    /// Arbitrary `P(h1, h2 | D)`, row `d` indexed by `h1 * |H2| + h2`.
    /// Breaks conditional independence; used as a negative control.
    Coupled { joint: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticLearner {
    pub pair: PairKernel,
    /// `P(h12 | h1, h2)`, row indexed by `h1 * |H2| + h2`.
    pub combine: Vec<Vec<f64>>,
}

impl StochasticLearner {
    pub fn is_conditionally_independent(&self) -> bool {
        matches!(self.pair, PairKernel::Independent { .. })
    }
}

/// Expected gap `L(h) - L_hat(h)` and expected squared gap for one hypothesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenTerm {
    pub gen: f64,
    pub mean_sq_gap: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenErrors {
    pub h1: GenTerm,
    pub h2: GenTerm,
    pub h12: GenTerm,
}

/// Every distribution the checks need, built by enumerating all datasets.
struct Enumerated {
    datasets: usize,
    h1: usize,
    h2: usize,
    h12: usize,
    /// `P(D, h1, h2)`, index `(d * h1 + a) * h2 + b`.
    d_pair: Vec<f64>,
    /// `P(D, h12)`, index `d * h12 + c`.
    d_h12: Vec<f64>,
    /// Empirical loss of each hypothesis on each dataset.
    emp1: Vec<Vec<f64>>,
    emp2: Vec<Vec<f64>>,
    emp12: Vec<Vec<f64>>,
}

fn enumerate(problem: &FiniteLearningProblem, learner: &StochasticLearner) -> Result<Enumerated> {
    problem.validate()?;
    let datasets = problem.dataset_count() as usize;
    let (k1, k2, k12) = (problem.loss1.len(), problem.loss2.len(), problem.loss12.len());
    let pair_rows: Vec<Vec<f64>> = match &learner.pair {
        PairKernel::Independent { h1, h2 } => {
            check_kernel(h1, datasets, k1, "P(h1|D)")?;
            check_kernel(h2, datasets, k2, "P(h2|D)")?;
            (0..datasets).map(|d| h1[d].iter().flat_map(|&a| h2[d].iter().map(move |&b| a * b)).collect()).collect()
        }
        PairKernel::Coupled { joint } => {
            check_kernel(joint, datasets, k1 * k2, "P(h1,h2|D)")?;
            joint.clone()
        }
    };
    check_kernel(&learner.combine, k1 * k2, k12, "P(h12|h1,h2)")?;

    let mut d_pair = vec![0.0; datasets * k1 * k2];
    let mut d_h12 = vec![0.0; datasets * k12];
    let mut emp1 = Vec::with_capacity(datasets);
    let mut emp2 = Vec::with_capacity(datasets);
    let mut emp12 = Vec::with_capacity(datasets);
    let empirical = |table: &[Vec<f64>], sample: &[usize]| -> Vec<f64> {
        table.iter().map(|row| sample.iter().map(|&z| row[z]).sum::<f64>() / sample.len() as f64).collect()
    };
    for d in 0..datasets {
        let sample = problem.dataset(d);
        let pd: f64 = sample.iter().map(|&z| problem.instance_probs[z]).product();
        for ab in 0..k1 * k2 {
            let p = pd * pair_rows[d][ab];
            d_pair[d * k1 * k2 + ab] = p;
            for c in 0..k12 {
                d_h12[d * k12 + c] += p * learner.combine[ab][c];
            }
        }
        emp1.push(empirical(&problem.loss1, &sample));
        emp2.push(empirical(&problem.loss2, &sample));
        emp12.push(empirical(&problem.loss12, &sample));
    }
    Ok(Enumerated { datasets, h1: k1, h2: k2, h12: k12, d_pair, d_h12, emp1, emp2, emp12 })
}

fn check_kernel(rows: &[Vec<f64>], expected_rows: usize, width: usize, what: &str) -> Result<()> {
    if rows.len() != expected_rows {
        return Err(Error::Argument(format!("{what}: {} rows, expected {expected_rows}", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Argument(format!("{what}: row {i} has {} entries, expected {width}", row.len())));
        }
        check_distribution(row, &format!("{what} row {i}"))?;
    }
    Ok(())
}

impl Enumerated {
    fn d_h1(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.datasets * self.h1];
        for d in 0..self.datasets {
            for a in 0..self.h1 {
                for b in 0..self.h2 {
                    out[d * self.h1 + a] += self.d_pair[(d * self.h1 + a) * self.h2 + b];
                }
            }
        }
        out
    }

    fn d_h2(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.datasets * self.h2];
        for d in 0..self.datasets {
            for a in 0..self.h1 {
                for b in 0..self.h2 {
                    out[d * self.h2 + b] += self.d_pair[(d * self.h1 + a) * self.h2 + b];
                }
            }
        }
        out
    }

    fn h1_h2(&self) -> Vec<f64> {
        let k = self.h1 * self.h2;
        let mut out = vec![0.0; k];
        for d in 0..self.datasets {
            for (o, v) in out.iter_mut().zip(&self.d_pair[d * k..(d + 1) * k]) {
                *o += v;
            }
        }
        out
    }

    fn mutual_informations(&self) -> Result<MutualInformations> {
        Ok(MutualInformations {
            d_h1: mi_flat(&self.d_h1(), self.datasets, self.h1)?,
            d_h2: mi_flat(&self.d_h2(), self.datasets, self.h2)?,
            h1_h2: mi_flat(&self.h1_h2(), self.h1, self.h2)?,
            d_pair: mi_flat(&self.d_pair, self.datasets, self.h1 * self.h2)?,
            d_h12: mi_flat(&self.d_h12, self.datasets, self.h12)?,
        })
    }
}

fn gen_term(joint: &[f64], width: usize, emp: &[Vec<f64>], losses: &[Vec<f64>], probs: &[f64]) -> GenTerm {
    let population: Vec<f64> = losses.iter().map(|row| row.iter().zip(probs).map(|(l, p)| l * p).sum()).collect();
    let mut term = GenTerm::default();
    for (d, emp_d) in emp.iter().enumerate() {
        for h in 0..width {
            let p = joint[d * width + h];
            let gap = population[h] - emp_d[h];
            term.gen += p * gap;
            term.mean_sq_gap += p * gap * gap;
        }
    }
    term
}

/// Exact expected generalization gap (and squared gap) of each hypothesis,
/// over all datasets and all learner randomness.
pub fn enumerate_gen_error(problem: &FiniteLearningProblem, learner: &StochasticLearner) -> Result<GenErrors> {
    let e = enumerate(problem, learner)?;
    Ok(gen_errors(problem, &e))
}

fn gen_errors(problem: &FiniteLearningProblem, e: &Enumerated) -> GenErrors {
    let p = &problem.instance_probs;
    GenErrors {
        h1: gen_term(&e.d_h1(), e.h1, &e.emp1, &problem.loss1, p),
        h2: gen_term(&e.d_h2(), e.h2, &e.emp2, &problem.loss2, p),
        h12: gen_term(&e.d_h12, e.h12, &e.emp12, &problem.loss12, p),
    }
}

/// The five mutual informations between data and hypotheses, in nats.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MutualInformations {
    pub d_h1: f64,
    pub d_h2: f64,
    pub h1_h2: f64,
    /// `I(D; (h1, h2))`.
    pub d_pair: f64,
    pub d_h12: f64,
}

impl MutualInformations {
    /// `I(D;(h1,h2)) - (I(D;h1) + I(D;h2) - I(h1;h2))`.
    pub fn identity_residual(&self) -> f64 {
        self.d_pair - (self.d_h1 + self.d_h2 - self.h1_h2)
    }
}

pub fn mutual_informations(problem: &FiniteLearningProblem, learner: &StochasticLearner) -> Result<MutualInformations> {
    enumerate(problem, learner)?.mutual_informations()
}

/// Residual of the chain identity for `I(D; (h1, h2))`; zero up to rounding
/// whenever `h1` and `h2` are independent given `D`. Reported, never asserted.
pub fn check_chain_identity(problem: &FiniteLearningProblem, learner: &StochasticLearner) -> Result<f64> {
    Ok(mutual_informations(problem, learner)?.identity_residual())
}

/// `(2 sigma^2 / n) I(D; h)`: the bound on the squared expected gap.
pub fn lemma_bound(mi: f64, n: usize, sigma: f64) -> f64 {
    2.0 * sigma * sigma / n as f64 * mi
}

/// `1/(1+p) (2 sigma^2/n) ((I(D;h1) + I(D;h2)) - (1-p) I(h1;h2))`.
pub fn proposition_bound(mi_d_h1: f64, mi_d_h2: f64, mi_h1_h2: f64, n: usize, sigma: f64, p: f64) -> f64 {
    lemma_bound((mi_d_h1 + mi_d_h2) - (1.0 - p) * mi_h1_h2, n, sigma) / (1.0 + p)
}

/// Mixture weights `((1-p)/(1+p), p/(1+p), p/(1+p))` for `(h12, h1, h2)`.
pub fn failover_weights(p: f64) -> [f64; 3] {
    [(1.0 - p) / (1.0 + p), p / (1.0 + p), p / (1.0 + p)]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    /// Squared expected gap.
    pub gen_sq: f64,
    pub bound: f64,
    pub holds: bool,
}

impl LemmaCheck {
    fn new(gen: f64, mi: f64, n: usize, sigma: f64) -> Self {
        let gen_sq = gen * gen;
        let bound = lemma_bound(mi, n, sigma);
        Self { gen_sq, bound, holds: gen_sq <= bound + BOUND_TOLERANCE }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionCheck {
    pub p: f64,
    /// Failover-weighted sum of squared expected gaps.
    pub gen_overall_sq: f64,
    /// Failover-weighted sum of expected squared gaps; reported only, since it
    /// includes variance the mutual-information bound does not control.
    pub mean_sq_gap_overall: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    pub instances: usize,
    pub n: usize,
    pub sigma: f64,
    pub mi: MutualInformations,
    pub identity_residual: f64,
    pub gen: GenErrors,
    pub lemma_h1: LemmaCheck,
    pub lemma_h2: LemmaCheck,
    pub lemma_h12: LemmaCheck,
    pub proposition: PropositionCheck,
    /// `I(D; h12) <= I(D; (h1, h2))`.
    pub data_processing_holds: bool,
}

impl InfoReport {
    pub fn all_hold(&self) -> bool {
        self.lemma_h1.holds
            && self.lemma_h2.holds
            && self.lemma_h12.holds
            && self.proposition.holds
            && self.data_processing_holds
    }
}

/// Checks the per-hypothesis mutual-information bounds and the failover
/// mixture bound at failover probability `p`, with `sigma = 1/2`.
pub fn check_bounds(problem: &FiniteLearningProblem, learner: &StochasticLearner, p: f64) -> Result<InfoReport> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Argument(format!("failover probability {p} outside [0, 1]")));
    }
    let e = enumerate(problem, learner)?;
    let mi = e.mutual_informations()?;
    let gen = gen_errors(problem, &e);
    let sigma = BOUNDED_LOSS_SIGMA;
    let n = problem.n;
    let [w12, w1, w2] = failover_weights(p);
    let gen_overall_sq = w12 * gen.h12.gen.powi(2) + w1 * gen.h1.gen.powi(2) + w2 * gen.h2.gen.powi(2);
    let mean_sq_gap_overall = w12 * gen.h12.mean_sq_gap + w1 * gen.h1.mean_sq_gap + w2 * gen.h2.mean_sq_gap;
    let bound = proposition_bound(mi.d_h1, mi.d_h2, mi.h1_h2, n, sigma, p);
    Ok(InfoReport {
        instances: problem.instances(),
        n,
        sigma,
        identity_residual: mi.identity_residual(),
        lemma_h1: LemmaCheck::new(gen.h1.gen, mi.d_h1, n, sigma),
        lemma_h2: LemmaCheck::new(gen.h2.gen, mi.d_h2, n, sigma),
        lemma_h12: LemmaCheck::new(gen.h12.gen, mi.d_h12, n, sigma),
        proposition: PropositionCheck {
            p,
            gen_overall_sq,
            mean_sq_gap_overall,
            bound,
            holds: gen_overall_sq <= bound + BOUND_TOLERANCE,
        },
        data_processing_holds: mi.d_h12 <= mi.d_pair + BOUND_TOLERANCE,
        gen,
        mi,
    })
}

fn simplex_row<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    // Normalized unit exponentials are Dirichlet(1, ..., 1).
    let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn loss_table<R: Rng>(rng: &mut R, h: usize, z: usize) -> Vec<Vec<f64>> {
    (0..h).map(|_| (0..z).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Random instance with `|Z| <= 3`, `n <= 2` and every hypothesis space of
/// size 2 to 4; conditionals are Dirichlet-uniform rows.
pub fn random_instance<R: Rng>(rng: &mut R) -> (FiniteLearningProblem, StochasticLearner) {
    let (problem, k1, k2, k12) = random_problem(rng);
    let datasets = problem.dataset_count() as usize;
    let h1 = (0..datasets).map(|_| simplex_row(rng, k1)).collect();
    let h2 = (0..datasets).map(|_| simplex_row(rng, k2)).collect();
    let combine = (0..k1 * k2).map(|_| simplex_row(rng, k12)).collect();
    (problem, StochasticLearner { pair: PairKernel::Independent { h1, h2 }, combine })
}

/// Like [`random_instance`] but with `(h1, h2)` drawn jointly given `D`.
pub fn random_coupled_instance<R: Rng>(rng: &mut R) -> (FiniteLearningProblem, StochasticLearner) {
    let (problem, k1, k2, k12) = random_problem(rng);
    let datasets = problem.dataset_count() as usize;
    let joint = (0..datasets).map(|_| simplex_row(rng, k1 * k2)).collect();
    let combine = (0..k1 * k2).map(|_| simplex_row(rng, k12)).collect();
    (problem, StochasticLearner { pair: PairKernel::Coupled { joint }, combine })
}

fn random_problem<R: Rng>(rng: &mut R) -> (FiniteLearningProblem, usize, usize, usize) {
    let z = rng.random_range(2..=3);
    let n = rng.random_range(1..=2);
    let (k1, k2, k12) = (rng.random_range(2..=4), rng.random_range(2..=4), rng.random_range(2..=4));
    let problem = FiniteLearningProblem {
        instance_probs: simplex_row(rng, z),
        n,
        loss1: loss_table(rng, k1, z),
        loss2: loss_table(rng, k2, z),
        loss12: loss_table(rng, k12, z),
    };
    (problem, k1, k2, k12)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn entropy(p: &[f64]) -> f64 {
        p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum()
    }

    #[test]
    fn product_distribution_has_zero_information() {
        let mi = mutual_information(&[vec![0.12, 0.28], vec![0.18, 0.42]]).unwrap();
        assert!(mi.abs() < 1e-15);
    }

    #[test]
    fn perfectly_correlated_bit_has_ln2() {
        let mi = mutual_information(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn symmetric_channel_matches_entropy_route() {
        let joint = [vec![0.4, 0.1], vec![0.1, 0.4]];
        let mi = mutual_information(&joint).unwrap();
        // H(A) + H(B) - H(A,B), evaluated independently of the implementation.
        let via_entropy = 2.0 * entropy(&[0.5, 0.5]) - entropy(&[0.4, 0.1, 0.1, 0.4]);
        // 0.8 ln 1.6 + 0.2 ln 0.4, to 20 digits with mpmath.
        const FROZEN: f64 = 0.192_744_757_021_757_43;
        assert!((mi - via_entropy).abs() < 1e-15);
        assert!((mi - FROZEN).abs() < 1e-15, "{mi}");
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(mutual_information(&[vec![0.6, -0.1], vec![0.25, 0.25]]).is_err());
        assert!(mutual_information(&[vec![0.5, 0.1], vec![0.1, 0.1]]).is_err());
        assert!(mutual_information(&[vec![1.0], vec![]]).is_err());
    }

    fn erm_problem() -> (FiniteLearningProblem, StochasticLearner) {
        // Z = {a, b}, P = (0.3, 0.7); h0 is right on a, h1 is right on b.
        let loss = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let problem = FiniteLearningProblem {
            instance_probs: vec![0.3, 0.7],
            n: 1,
            loss1: loss.clone(),
            loss2: loss.clone(),
            loss12: loss,
        };
        let erm = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let learner = StochasticLearner {
            pair: PairKernel::Independent { h1: erm.clone(), h2: erm },
            combine: vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5], vec![0.0, 1.0]],
        };
        (problem, learner)
    }

    #[test]
    fn erm_gap_matches_hand_enumeration() {
        // D = (a): picks h0, L = 0.7, L_hat = 0. D = (b): picks h1, L = 0.3, L_hat = 0.
        // gen = 0.3 * 0.7 + 0.7 * 0.3 = 0.42; squared gap = 0.3 * 0.49 + 0.7 * 0.09 = 0.21.
        let (problem, learner) = erm_problem();
        let g = enumerate_gen_error(&problem, &learner).unwrap();
        assert!((g.h1.gen - 0.42).abs() < 1e-15);
        assert!((g.h1.mean_sq_gap - 0.21).abs() < 1e-15);
        let mi = mutual_informations(&problem, &learner).unwrap();
        assert!((mi.d_h1 - entropy(&[0.3, 0.7])).abs() < 1e-15);
        let report = check_bounds(&problem, &learner, 0.5).unwrap();
        assert!(report.all_hold());
    }

    #[test]
    fn learner_ignoring_data_has_zero_gap() {
        let (mut problem, _) = erm_problem();
        problem.n = 2;
        let constant = vec![vec![0.25, 0.75]; 4];
        let learner = StochasticLearner {
            pair: PairKernel::Independent { h1: constant.clone(), h2: constant },
            combine: vec![vec![0.5, 0.5]; 4],
        };
        let g = enumerate_gen_error(&problem, &learner).unwrap();
        assert!(g.h1.gen.abs() < 1e-15 && g.h12.gen.abs() < 1e-15);
        let mi = mutual_informations(&problem, &learner).unwrap();
        assert!(mi.d_h1 < 1e-15 && mi.d_pair < 1e-15);
    }

    #[test]
    fn zero_loss_has_zero_gap() {
        let (mut problem, learner) = erm_problem();
        problem.loss1 = vec![vec![0.0, 0.0]; 2];
        let g = enumerate_gen_error(&problem, &learner).unwrap();
        assert_eq!(g.h1.gen, 0.0);
    }

    #[test]
    fn constant_second_learner_reduces_identity() {
        let (problem, mut learner) = erm_problem();
        if let PairKernel::Independent { h2, .. } = &mut learner.pair {
            *h2 = vec![vec![1.0, 0.0]; 2];
        }
        let mi = mutual_informations(&problem, &learner).unwrap();
        assert!((mi.d_pair - mi.d_h1).abs() < 1e-15);
        assert!(mi.identity_residual().abs() < 1e-15);
    }

    #[test]
    fn endpoints_of_the_failover_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (problem, learner) = random_instance(&mut rng);
        let mi = mutual_informations(&problem, &learner).unwrap();
        let n = problem.n;
        let at0 = check_bounds(&problem, &learner, 0.0).unwrap();
        // p = 0: the bound equals the full-pair lemma bound via the identity.
        assert!((at0.proposition.bound - lemma_bound(mi.d_pair, n, 0.5)).abs() < 1e-12);
        assert!(at0.proposition.holds);
        let at1 = check_bounds(&problem, &learner, 1.0).unwrap();
        let expected = 0.25 / n as f64 * (mi.d_h1 + mi.d_h2);
        assert!((at1.proposition.bound - expected).abs() < 1e-15);
        assert!(at1.proposition.holds);
    }

    #[test]
    fn random_instances_satisfy_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let (problem, learner) = random_instance(&mut rng);
            for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let r = check_bounds(&problem, &learner, p).unwrap();
                assert!(r.identity_residual.abs() < 1e-9);
                assert!(r.all_hold(), "{r:#?}");
            }
        }
    }

    #[test]
    fn coupled_learner_residual_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut nonzero = 0;
        for _ in 0..20 {
            let (problem, learner) = random_coupled_instance(&mut rng);
            assert!(!learner.is_conditionally_independent());
            let r = check_chain_identity(&problem, &learner).unwrap();
            assert!(r.is_finite());
            if r.abs() > 1e-9 {
                nonzero += 1;
            }
        }
        assert!(nonzero > 0);
    }

    #[test]
    fn guards_and_arguments() {
        let (mut problem, learner) = erm_problem();
        assert!(check_bounds(&problem, &learner, 1.5).is_err());
        problem.n = 20;
        problem.instance_probs = vec![0.1, 0.2, 0.7];
        assert!(matches!(problem.validate(), Err(Error::TooLarge { .. })));
        let (mut bad, learner) = erm_problem();
        bad.loss1[0][0] = 1.5;
        assert!(enumerate_gen_error(&bad, &learner).is_err());
    }

    #[test]
    fn bound_shrinks_as_upstreams_share_information() {
        let mut prev = f64::INFINITY;
        for k in 0..=10 {
            let b = proposition_bound(0.6, 0.5, 0.05 * k as f64, 2, 0.5, 0.3);
            assert!(b <= prev);
            prev = b;
        }
    }
}
