//! Bias-variance-noise decomposition of pairwise prediction error.
//!
//! For one pair with true label `t` (the optimal prediction), human labels
//! `h` resampled from finite judgments, and estimator labels `m` resampled
//! from finite test sets with main prediction `m*`:
//!
//! ```text
//! Noise = P(h != t)            Var = P(m != m*)         Bias = [m* != t]
//! c0    = 2 P(m = t) - 1       c1  = 1 - 2 Bias
//! P(h != m) = c0 Noise + Bias + c1 Var     (h, m independent)
//! ```
//!
//! Human and estimator labels for trial `i` come from independent substreams,
//! so the identity holds in expectation and, on the trial frequencies, up to
//! Monte Carlo covariance.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::{
    human_difference, metric_difference, run_trials, InjectedReplicates, Lane, ResamplePlan, Scheme, Scratch,
};
use crate::data::{Dataset, PairwiseExample};
use crate::error::{Error, Result};
use crate::estimators::{HumanPool, HumanWeighting, Label, MetricColumn, PairwiseLabel};

/// Substream purposes; combined with the pair index into a [`Lane`].
pub(crate) mod lanes {
    pub const HUMAN: u64 = 1;
    pub const HUMAN_ESTIMATOR: u64 = 2;
    pub const METRIC: u64 = 3;
    pub const CURVE: u64 = 4;
    pub const SIGNIFICANCE_HUMAN: u64 = 5;
    pub const SIGNIFICANCE_METRIC: u64 = 6;
    pub const UNBIASED: u64 = 7;
}

/// Where the optimal label and main prediction come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Sign of the full-data difference.
    #[default]
    FullData,
    /// Majority label over the bootstrap trials.
    ReplicateMajority,
}

impl std::str::FromStr for LabelSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "full_data" => Ok(LabelSource::FullData),
            "replicate_majority" => Ok(LabelSource::ReplicateMajority),
            other => Err(Error::Parameter(format!("unknown label source {other:?}"))),
        }
    }
}

/// The estimator whose error is decomposed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Estimator {
    /// Constant estimator predicting the optimal label.
    Optimal,
    /// The human estimator, resampled independently of the reference labels.
    Human,
    /// A metric with per-segment observations in the dataset.
    Metric(String),
    /// A metric scored from injected per-trial replicates.
    Injected(String),
}

impl Estimator {
    pub fn name(&self) -> &str {
        match self {
            Estimator::Optimal => "Optimal",
            Estimator::Human => "Human",
            Estimator::Metric(m) | Estimator::Injected(m) => m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairDecomposition {
    pub group_id: String,
    pub system_a: String,
    pub system_b: String,
    pub err_obs: f64,
    pub noise: f64,
    pub bias: u8,
    pub variance: f64,
    pub c0: f64,
    pub c0_noise: f64,
    pub c1: i8,
    pub c1_var: f64,
    pub optimal_label: Label,
    pub main_prediction: Label,
    pub n_trials: usize,
    pub seed: u64,
}

impl PairDecomposition {
    pub fn identity_gap(&self) -> f64 {
        (self.err_obs - (self.c0_noise + f64::from(self.bias) + self.c1_var)).abs()
    }
}

/// Per-pair terms plus unweighted averages over pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionResult {
    pub estimator: String,
    pub pairs: Vec<PairDecomposition>,
    pub err_obs: f64,
    pub noise: f64,
    pub bias: f64,
    pub variance: f64,
    pub c0_noise: f64,
    pub c1_var: f64,
    pub n_trials: usize,
    pub seed: u64,
}

impl DecompositionResult {
    fn from_pairs(estimator: &Estimator, pairs: Vec<PairDecomposition>, plan: &ResamplePlan) -> Self {
        let n = pairs.len().max(1) as f64;
        let avg = |f: &dyn Fn(&PairDecomposition) -> f64| pairs.iter().map(f).sum::<f64>() / n;
        DecompositionResult {
            estimator: estimator.name().to_string(),
            err_obs: avg(&|p| p.err_obs),
            noise: avg(&|p| p.noise),
            bias: avg(&|p| f64::from(p.bias)),
            variance: avg(&|p| p.variance),
            c0_noise: avg(&|p| p.c0_noise),
            c1_var: avg(&|p| p.c1_var),
            pairs,
            n_trials: plan.n_trials,
            seed: plan.seed,
        }
    }
}

/// Prepared per-pair data for resampling.
#[derive(Clone, Debug)]
pub struct PairContext {
    pub pair: PairwiseExample,
    pub index: usize,
    pub human_a: HumanPool,
    pub human_b: HumanPool,
}

struct HumanTrials {
    optimal: PairwiseLabel,
    labels: Vec<Label>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub k: usize,
    pub agreement: f64,
}

/// Runs decomposition quantities over every pair of a dataset. Human trial
/// labels are computed once per pair and shared by every estimator.
pub struct Decomposer<'a> {
    ds: &'a Dataset,
    contexts: Vec<PairContext>,
    plan: ResamplePlan,
    label_source: LabelSource,
    weighting: HumanWeighting,
    check_identity: bool,
    replicates: Option<&'a InjectedReplicates>,
    human: Vec<OnceLock<Result<HumanTrials, String>>>,
}

fn majority(labels: &[Label]) -> Label {
    let pos = labels.iter().filter(|&&l| l == Label::Positive).count();
    if 2 * pos >= labels.len() {
        Label::Positive
    } else {
        Label::Negative
    }
}

fn frac<T>(items: &[T], pred: impl Fn(&T) -> bool) -> f64 {
    items.iter().filter(|x| pred(x)).count() as f64 / items.len() as f64
}

impl<'a> Decomposer<'a> {
    /// `plan.scheme` selects the human resampling scheme (`JudgmentLevel` by
    /// default, or `Joint`); estimator labels always use paired segment
    /// resampling.
    pub fn new(ds: &'a Dataset, plan: ResamplePlan) -> Result<Self> {
        let pairs = ds.pairs()?;
        let contexts: Vec<PairContext> = pairs
            .into_iter()
            .enumerate()
            .map(|(index, pair)| {
                let g = &ds.groups()[pair.group_index];
                PairContext {
                    human_a: HumanPool::new(g, pair.index_a),
                    human_b: HumanPool::new(g, pair.index_b),
                    pair,
                    index,
                }
            })
            .collect();
        let human = contexts.iter().map(|_| OnceLock::new()).collect();
        Ok(Decomposer {
            ds,
            contexts,
            plan,
            label_source: LabelSource::FullData,
            weighting: HumanWeighting::Judgment,
            check_identity: true,
            replicates: None,
            human,
        })
    }

    pub fn with_label_source(mut self, source: LabelSource) -> Self {
        self.label_source = source;
        self
    }

    pub fn with_weighting(mut self, weighting: HumanWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn with_identity_check(mut self, check: bool) -> Self {
        self.check_identity = check;
        self
    }

    pub fn with_replicates(mut self, replicates: &'a InjectedReplicates) -> Self {
        self.replicates = Some(replicates);
        self
    }

    pub fn dataset(&self) -> &Dataset {
        self.ds
    }

    pub fn plan(&self) -> &ResamplePlan {
        &self.plan
    }

    pub fn weighting(&self) -> HumanWeighting {
        self.weighting
    }

    pub fn contexts(&self) -> &[PairContext] {
        &self.contexts
    }

    pub fn pairs(&self) -> impl Iterator<Item = &PairwiseExample> {
        self.contexts.iter().map(|c| &c.pair)
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    fn ctx(&self, i: usize) -> Result<&PairContext> {
        self.contexts
            .get(i)
            .ok_or_else(|| Error::Parameter(format!("pair index {i} out of range")))
    }

    /// Full-data human difference of pair `i`.
    pub fn full_human_difference(&self, i: usize) -> Result<PairwiseLabel> {
        let c = self.ctx(i)?;
        let a = c.human_a.weighted_mean(self.weighting)?;
        let b = c.human_b.weighted_mean(self.weighting)?;
        Ok(PairwiseLabel::from_difference(a - b))
    }

    /// Human labels for `n_trials` trials of `lane_tag` at an optional
    /// judgment subsample size.
    pub fn human_labels(
        &self,
        i: usize,
        lane_tag: &[u64],
        n_trials: usize,
        size: Option<usize>,
        scheme: Scheme,
    ) -> Result<Vec<Label>> {
        let c = self.ctx(i)?;
        let mut parts = vec![c.index as u64];
        parts.extend_from_slice(lane_tag);
        run_trials(self.plan.seed, Lane::new(&parts), n_trials, |_, rng| {
            let mut scratch = Scratch::default();
            human_difference(&c.human_a, &c.human_b, scheme, size, rng, &mut scratch).map(Label::from_difference)
        })
    }

    fn human_trials(&self, i: usize) -> Result<&HumanTrials> {
        let cell = &self.human[i];
        let res = cell.get_or_init(|| {
            let compute = || -> Result<HumanTrials> {
                let labels = self.human_labels(i, &[lanes::HUMAN], self.plan.n_trials, None, self.plan.scheme)?;
                let full = self.full_human_difference(i)?;
                let optimal = match self.label_source {
                    LabelSource::FullData => full,
                    LabelSource::ReplicateMajority => PairwiseLabel {
                        sign: majority(&labels),
                        difference: full.difference,
                    },
                };
                Ok(HumanTrials { optimal, labels })
            };
            compute().map_err(|e| e.to_string())
        });
        res.as_ref().map_err(|e| Error::Invalid(e.clone()))
    }

    /// The optimal prediction: the sign of the full-data human difference.
    pub fn optimal_label(&self, i: usize) -> Result<PairwiseLabel> {
        match self.label_source {
            LabelSource::FullData => self.full_human_difference(i),
            LabelSource::ReplicateMajority => Ok(self.human_trials(i)?.optimal),
        }
    }

    fn metric_columns(&self, i: usize, metric_id: &str) -> Result<(MetricColumn, MetricColumn)> {
        let c = self.ctx(i)?;
        let g = &self.ds.groups()[c.pair.group_index];
        Ok((
            MetricColumn::new(g, c.pair.index_a, metric_id)?,
            MetricColumn::new(g, c.pair.index_b, metric_id)?,
        ))
    }

    fn injected(&self, i: usize, metric_id: &str) -> Result<(&[f64], &[f64])> {
        let c = self.ctx(i)?;
        let reps = self
            .replicates
            .ok_or_else(|| Error::Replicates("no replicate file supplied".into()))?;
        let get = |sys: &str| {
            reps.get(&c.pair.group_id, sys, metric_id).ok_or_else(|| {
                Error::Replicates(format!(
                    "no replicates for group {:?}, system {sys:?}, metric {metric_id:?}",
                    c.pair.group_id
                ))
            })
        };
        Ok((get(&c.pair.system_a)?, get(&c.pair.system_b)?))
    }

    /// Estimator labels for each trial, at an optional segment subsample size.
    fn estimator_labels(
        &self,
        i: usize,
        estimator: &Estimator,
        n_trials: usize,
        size: Option<usize>,
        lane_tag: &[u64],
    ) -> Result<Vec<Label>> {
        let c = self.ctx(i)?;
        match estimator {
            Estimator::Optimal => Ok(vec![self.optimal_label(i)?.sign; n_trials]),
            Estimator::Human => self.human_labels(i, &[lanes::HUMAN_ESTIMATOR], n_trials, size, self.plan.scheme),
            Estimator::Metric(m) => {
                let (a, b) = self.metric_columns(i, m)?;
                let mut parts = vec![c.index as u64];
                parts.extend_from_slice(lane_tag);
                run_trials(self.plan.seed, Lane::new(&parts), n_trials, |_, rng| {
                    let mut scratch = Scratch::default();
                    metric_difference(&a, &b, size, rng, &mut scratch).map(Label::from_difference)
                })
            }
            Estimator::Injected(m) => {
                let (a, b) = self.injected(i, m)?;
                if a.len() != n_trials {
                    return Err(Error::Replicates(format!(
                        "replicate file has {} trials but {n_trials} were requested",
                        a.len()
                    )));
                }
                Ok(a.iter().zip(b).map(|(x, y)| Label::from_difference(x - y)).collect())
            }
        }
    }

    /// Main prediction of an estimator. Metrics use the full shared segment
    /// set; injected metrics, and every estimator under
    /// [`LabelSource::ReplicateMajority`], use the majority trial label.
    pub fn main_prediction(&self, i: usize, estimator: &Estimator) -> Result<PairwiseLabel> {
        match (estimator, self.label_source) {
            (Estimator::Optimal, _) => self.optimal_label(i),
            (Estimator::Human, LabelSource::FullData) => self.optimal_label(i),
            (Estimator::Metric(m), LabelSource::FullData) => {
                let (a, b) = self.metric_columns(i, m)?;
                Ok(PairwiseLabel::from_difference(a.full_score()? - b.full_score()?))
            }
            (Estimator::Injected(m), _) => {
                let (a, b) = self.injected(i, m)?;
                let labels: Vec<Label> = a.iter().zip(b).map(|(x, y)| Label::from_difference(x - y)).collect();
                let mean_diff = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / a.len().max(1) as f64;
                Ok(PairwiseLabel {
                    sign: majority(&labels),
                    difference: mean_diff,
                })
            }
            (_, LabelSource::ReplicateMajority) => {
                let labels = self.estimator_labels(i, estimator, self.plan.n_trials, None, &[lanes::METRIC])?;
                Ok(PairwiseLabel {
                    sign: majority(&labels),
                    difference: f64::NAN,
                })
            }
        }
    }

    /// Fraction of trials whose resampled human label differs from the
    /// optimal label.
    pub fn estimate_noise(&self, i: usize) -> Result<f64> {
        let h = self.human_trials(i)?;
        let t = self.optimal_label(i)?.sign;
        Ok(frac(&h.labels, |&l| l != t))
    }

    /// Fraction of trials whose resampled estimator label differs from its
    /// main prediction.
    pub fn estimate_variance(&self, i: usize, estimator: &Estimator) -> Result<f64> {
        let main = self.main_prediction(i, estimator)?.sign;
        let m = self.estimator_labels(i, estimator, self.plan.n_trials, None, &[lanes::METRIC])?;
        Ok(frac(&m, |&l| l != main))
    }

    pub fn compute_bias(&self, i: usize, estimator: &Estimator) -> Result<u8> {
        let t = self.optimal_label(i)?.sign;
        let main = self.main_prediction(i, estimator)?.sign;
        Ok(crate::estimators::zero_one_loss(t, main))
    }

    pub fn compute_c0(&self, i: usize, estimator: &Estimator) -> Result<f64> {
        let t = self.optimal_label(i)?.sign;
        let m = self.estimator_labels(i, estimator, self.plan.n_trials, None, &[lanes::METRIC])?;
        Ok(2.0 * frac(&m, |&l| l == t) - 1.0)
    }

    /// Fraction of trials where the resampled human label and the resampled
    /// estimator label disagree.
    pub fn observed_error(&self, i: usize, estimator: &Estimator) -> Result<f64> {
        Ok(self.decompose_pair(i, estimator)?.err_obs)
    }

    pub fn decompose_pair(&self, i: usize, estimator: &Estimator) -> Result<PairDecomposition> {
        let c = self.ctx(i)?;
        let h = self.human_trials(i)?;
        let t = self.optimal_label(i)?.sign;
        let main = self.main_prediction(i, estimator)?.sign;
        let m = self.estimator_labels(i, estimator, self.plan.n_trials, None, &[lanes::METRIC])?;
        let n = self.plan.n_trials;

        let noise = frac(&h.labels, |&l| l != t);
        let variance = frac(&m, |&l| l != main);
        let c0 = 2.0 * frac(&m, |&l| l == t) - 1.0;
        let bias = crate::estimators::zero_one_loss(t, main);
        let c1: i8 = if bias == 0 { 1 } else { -1 };
        let err_obs = h.labels.iter().zip(&m).filter(|(x, y)| x != y).count() as f64 / n as f64;

        let out = PairDecomposition {
            group_id: c.pair.group_id.clone(),
            system_a: c.pair.system_a.clone(),
            system_b: c.pair.system_b.clone(),
            err_obs,
            noise,
            bias,
            variance,
            c0,
            c0_noise: c0 * noise,
            c1,
            c1_var: f64::from(c1) * variance,
            optimal_label: t,
            main_prediction: main,
            n_trials: n,
            seed: self.plan.seed,
        };
        let tolerance = identity_tolerance(n);
        if self.check_identity && out.identity_gap() > tolerance {
            return Err(Error::IdentityViolation {
                pair: c.pair.label(),
                err_obs: out.err_obs,
                components: out.c0_noise + f64::from(out.bias) + out.c1_var,
                tolerance,
            });
        }
        Ok(out)
    }

    /// Decomposes every pair and averages with equal pair weights.
    pub fn decompose(&self, estimator: &Estimator) -> Result<DecompositionResult> {
        let pairs = (0..self.contexts.len())
            .into_par_iter()
            .map(|i| self.decompose_pair(i, estimator))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(DecompositionResult::from_pairs(estimator, pairs, &self.plan))
    }

    /// Dataset-average noise: the observed error of the constant optimal
    /// estimator and a floor on every estimator's observed error.
    pub fn lower_bound(&self) -> Result<f64> {
        let noises = (0..self.contexts.len())
            .into_par_iter()
            .map(|i| self.estimate_noise(i))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(noises.iter().sum::<f64>() / noises.len().max(1) as f64)
    }

    /// Dataset-average bias: the estimator's error against true labels with
    /// an infinite test set.
    pub fn adjusted_error(&self, estimator: &Estimator) -> Result<f64> {
        let biases = (0..self.contexts.len())
            .into_par_iter()
            .map(|i| self.compute_bias(i, estimator))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(biases.iter().map(|&b| f64::from(b)).sum::<f64>() / biases.len().max(1) as f64)
    }

    /// Dataset-average agreement between `k`-segment estimator labels and
    /// the main prediction, for each `k` in `grid`.
    pub fn convergence_curve(&self, estimator: &Estimator, grid: &[usize]) -> Result<Vec<CurvePoint>> {
        if grid.is_empty() {
            return Err(Error::Parameter("empty size grid".into()));
        }
        if matches!(estimator, Estimator::Injected(_)) {
            return Err(Error::Parameter(
                "convergence curves need per-segment observations; injected replicates have a fixed size".into(),
            ));
        }
        let max_k = self.contexts.iter().map(|c| c.pair.n_segments).min().unwrap_or(0);
        if let Some(&k) = grid.iter().find(|&&k| k == 0 || k > max_k) {
            return Err(Error::Parameter(format!(
                "grid size {k} must be between 1 and the smallest shared segment count {max_k}"
            )));
        }
        let mains = (0..self.contexts.len())
            .into_par_iter()
            .map(|i| self.main_prediction(i, estimator).map(|l| l.sign))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        grid.iter()
            .map(|&k| {
                let agreements = (0..self.contexts.len())
                    .into_par_iter()
                    .map(|i| {
                        let labels = self.estimator_labels(
                            i,
                            estimator,
                            self.plan.n_trials,
                            Some(k),
                            &[lanes::CURVE, k as u64],
                        )?;
                        Ok(frac(&labels, |&l| l == mains[i]))
                    })
                    .collect::<Vec<Result<f64>>>()
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                Ok(CurvePoint {
                    k,
                    agreement: agreements.iter().sum::<f64>() / agreements.len().max(1) as f64,
                })
            })
            .collect()
    }
}

/// Per-pair tolerance on the Monte Carlo decomposition identity.
pub fn identity_tolerance(n_trials: usize) -> f64 {
    4.0 / (n_trials as f64).sqrt()
}
