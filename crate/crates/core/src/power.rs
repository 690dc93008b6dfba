//! Power analysis for required judgment counts and paired bootstrap
//! significance tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bootstrap::{human_difference, metric_difference, run_trials, Lane, ResamplePlan, Scratch};
use crate::decomposition::{lanes, Decomposer};
use crate::error::{Error, Result};
use crate::estimators::{Label, MetricColumn};
use crate::numeric::normal_quantile;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    One,
    Two,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approximation {
    #[default]
    Normal,
    StudentT,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSpec {
    pub alpha: f64,
    /// Target power.
    pub beta: f64,
    pub sidedness: Sidedness,
    /// Per-judgment standard deviation.
    pub sigma: f64,
    /// Effect size in score units.
    pub delta: f64,
}

impl PowerSpec {
    pub fn new(alpha: f64, beta: f64, sidedness: Sidedness, sigma: f64, delta: f64) -> Result<Self> {
        let spec = PowerSpec {
            alpha,
            beta,
            sidedness,
            sigma,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Parameter(format!("beta must be in (0, 1), got {}", self.beta)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.delta == 0.0 {
            return Err(Error::Parameter("delta = 0 has no finite sample size".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Parameter(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }

    /// Per-tail false positive rate.
    pub fn tail_alpha(&self) -> f64 {
        match self.sidedness {
            Sidedness::One => self.alpha,
            Sidedness::Two => self.alpha / 2.0,
        }
    }
}

/// Judgments per system for a two-sample equal-variance comparison:
/// `ceil(2 sigma^2 (z_{1-alpha} + z_beta)^2 / delta^2)`.
pub fn required_sample_size(spec: &PowerSpec) -> Result<u64> {
    required_sample_size_with(spec, Approximation::Normal)
}

pub fn required_sample_size_with(spec: &PowerSpec, approx: Approximation) -> Result<u64> {
    spec.validate()?;
    let ratio = (spec.sigma / spec.delta).powi(2);
    let z = normal_quantile(1.0 - spec.tail_alpha()) + normal_quantile(spec.beta);
    let normal = (2.0 * ratio * z * z).ceil().max(1.0) as u64;
    match approx {
        Approximation::Normal => Ok(normal),
        Approximation::StudentT => {
            // t quantiles exceed z quantiles, so the answer is at least the
            // normal one; step up until the t-based bound is met.
            let mut n = normal.max(2);
            loop {
                let df = (2 * n - 2) as f64;
                let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Parameter(e.to_string()))?;
                let q = t.inverse_cdf(1.0 - spec.tail_alpha()) + t.inverse_cdf(spec.beta);
                if 2.0 * ratio * q * q <= n as f64 {
                    return Ok(n);
                }
                n += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerTableMeta {
    pub alpha: f64,
    pub beta: f64,
    pub sidedness: Sidedness,
    pub approximation: Approximation,
    /// Color anchors: log10 of the smallest and largest cell.
    pub log10_min: f64,
    pub log10_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerTable {
    pub sigmas: Vec<f64>,
    pub deltas: Vec<f64>,
    /// `counts[i][j]` for `sigmas[i]`, `deltas[j]`.
    pub counts: Vec<Vec<u64>>,
    pub meta: PowerTableMeta,
}

pub fn power_table(
    sigmas: &[f64],
    deltas: &[f64],
    alpha: f64,
    beta: f64,
    sidedness: Sidedness,
    approx: Approximation,
) -> Result<PowerTable> {
    if sigmas.is_empty() || deltas.is_empty() {
        return Err(Error::Parameter("power table grids must be non-empty".into()));
    }
    let counts = sigmas
        .iter()
        .map(|&sigma| {
            deltas
                .iter()
                .map(|&delta| required_sample_size_with(&PowerSpec::new(alpha, beta, sidedness, sigma, delta)?, approx))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let flat = counts.iter().flatten().copied();
    let min = flat.clone().min().unwrap_or(1).max(1);
    let max = flat.max().unwrap_or(1).max(1);
    Ok(PowerTable {
        sigmas: sigmas.to_vec(),
        deltas: deltas.to_vec(),
        counts,
        meta: PowerTableMeta {
            alpha,
            beta,
            sidedness,
            approximation: approx,
            log10_min: (min as f64).log10(),
            log10_max: (max as f64).log10(),
        },
    })
}

/// What a significance test compares.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SignificanceTarget {
    Human,
    Metric(String),
}

impl SignificanceTarget {
    pub fn name(&self) -> &str {
        match self {
            SignificanceTarget::Human => "Human",
            SignificanceTarget::Metric(m) => m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignificanceOutcome {
    pub group_id: String,
    pub system_a: String,
    pub system_b: String,
    pub estimator: String,
    pub observed_difference: f64,
    pub direction: Label,
    /// Fraction of replicate differences opposite to, or tying, the
    /// observed direction.
    pub p_fraction: f64,
    pub significant: bool,
    pub n_trials: usize,
}

/// Paired bootstrap test in the direction of the observed difference.
/// Human replicates use `plan.scheme`; metric replicates resample paired
/// segments. One-sided tests fire when `p_fraction < alpha`, two-sided tests
/// when `p_fraction < alpha / 2`.
pub fn bootstrap_significance(
    decomposer: &Decomposer,
    pair_index: usize,
    target: &SignificanceTarget,
    alpha: f64,
    sidedness: Sidedness,
    plan: &ResamplePlan,
) -> Result<SignificanceOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let c = decomposer
        .contexts()
        .get(pair_index)
        .ok_or_else(|| Error::Parameter(format!("pair index {pair_index} out of range")))?;
    let base = c.index as u64;
    let (observed, replicates) = match target {
        SignificanceTarget::Human => {
            let observed = decomposer.full_human_difference(pair_index)?.difference;
            let reps = run_trials(
                plan.seed,
                Lane::new(&[base, lanes::SIGNIFICANCE_HUMAN]),
                plan.n_trials,
                |_, rng| {
                    human_difference(
                        &c.human_a,
                        &c.human_b,
                        plan.scheme,
                        plan.subsample_size,
                        rng,
                        &mut Scratch::default(),
                    )
                },
            )?;
            (observed, reps)
        }
        SignificanceTarget::Metric(m) => {
            let g = &decomposer.dataset().groups()[c.pair.group_index];
            let a = MetricColumn::new(g, c.pair.index_a, m)?;
            let b = MetricColumn::new(g, c.pair.index_b, m)?;
            let observed = a.full_score()? - b.full_score()?;
            let reps = run_trials(
                plan.seed,
                Lane::new(&[base, lanes::SIGNIFICANCE_METRIC]),
                plan.n_trials,
                |_, rng| metric_difference(&a, &b, plan.subsample_size, rng, &mut Scratch::default()),
            )?;
            (observed, reps)
        }
    };
    let direction = Label::from_difference(observed);
    let against = replicates
        .iter()
        .filter(|&&r| match direction {
            Label::Positive => r <= 0.0,
            Label::Negative => r >= 0.0,
        })
        .count();
    let p_fraction = against as f64 / replicates.len() as f64;
    let level = match sidedness {
        Sidedness::One => alpha,
        Sidedness::Two => alpha / 2.0,
    };
    Ok(SignificanceOutcome {
        group_id: c.pair.group_id.clone(),
        system_a: c.pair.system_a.clone(),
        system_b: c.pair.system_b.clone(),
        estimator: target.name().to_string(),
        observed_difference: observed,
        direction,
        p_fraction,
        significant: p_fraction < level,
        n_trials: replicates.len(),
    })
}

/// Human-by-metric significance counts. Pairs are oriented so the human
/// difference is positive; the first letter is the human outcome, the
/// second the metric outcome (`h` significant, `m` not).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Cooccurrence {
    /// Both significant.
    pub hh: usize,
    /// Human significant, metric not.
    pub hm: usize,
    /// Metric significant, human not.
    pub mh: usize,
    /// Neither significant.
    pub mm: usize,
    /// Pairs where the metric's observed direction opposes the human's.
    pub direction_disagreements: usize,
    pub outcomes: Vec<(SignificanceOutcome, SignificanceOutcome)>,
}

impl Cooccurrence {
    pub fn total(&self) -> usize {
        self.hh + self.hm + self.mh + self.mm
    }

    /// Fraction of human-insignificant pairs on which the metric is
    /// significant.
    pub fn metric_rate_when_human_insignificant(&self) -> Option<f64> {
        let denom = self.mh + self.mm;
        (denom > 0).then(|| self.mh as f64 / denom as f64)
    }
}

pub fn cooccurrence(
    decomposer: &Decomposer,
    metric_id: &str,
    alpha: f64,
    sidedness: Sidedness,
    human_plan: &ResamplePlan,
    metric_plan: &ResamplePlan,
) -> Result<Cooccurrence> {
    let target = SignificanceTarget::Metric(metric_id.to_string());
    let outcomes = (0..decomposer.len())
        .into_par_iter()
        .map(|i| {
            let h = bootstrap_significance(decomposer, i, &SignificanceTarget::Human, alpha, sidedness, human_plan)?;
            let m = bootstrap_significance(decomposer, i, &target, alpha, sidedness, metric_plan)?;
            Ok((h, m))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut out = Cooccurrence::default();
    for (h, m) in &outcomes {
        match (h.significant, m.significant) {
            (true, true) => out.hh += 1,
            (true, false) => out.hm += 1,
            (false, true) => out.mh += 1,
            (false, false) => out.mm += 1,
        }
        if h.direction != m.direction {
            out.direction_disagreements += 1;
        }
    }
    out.outcomes = outcomes;
    Ok(out)
}
