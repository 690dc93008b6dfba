//! System-level scores, pairwise labels, and the 0-1 loss.

use serde::{Deserialize, Serialize};

use crate::data::{ComparisonGroup, MetricKind, MetricObservation, SystemRecord};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    HumanMean,
    Metric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SystemScore {
    pub value: f64,
    pub estimator_kind: EstimatorKind,
    pub n_used: usize,
}

/// Sign of a pairwise difference. A difference of exactly zero maps to
/// [`Label::Positive`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_difference(d: f64) -> Label {
        if d >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:+}", self.as_i8())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairwiseLabel {
    pub sign: Label,
    pub difference: f64,
}

impl PairwiseLabel {
    pub fn from_difference(difference: f64) -> Self {
        PairwiseLabel {
            sign: Label::from_difference(difference),
            difference,
        }
    }
}

pub fn pairwise_label(score_a: &SystemScore, score_b: &SystemScore) -> PairwiseLabel {
    debug_assert_eq!(score_a.estimator_kind, score_b.estimator_kind);
    PairwiseLabel::from_difference(score_a.value - score_b.value)
}

pub fn zero_one_loss(a: Label, b: Label) -> u8 {
    u8::from(a != b)
}

/// A `(segment, judgment)` position inside one system: `segment` indexes the
/// system's segment list and `judgment` that segment's judgments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JudgmentIndex {
    pub segment: usize,
    pub judgment: usize,
}

/// How repeat judgments on one segment enter the human system mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanWeighting {
    /// Flat mean over every selected judgment.
    #[default]
    Judgment,
    /// Mean over selected segments of the mean of their selected judgments.
    Segment,
}

impl std::str::FromStr for HumanWeighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "judgment" => Ok(HumanWeighting::Judgment),
            "segment" => Ok(HumanWeighting::Segment),
            other => Err(Error::Parameter(format!("unknown weighting {other:?}"))),
        }
    }
}

/// Mean of category-aggregated judgment values over `selection`.
pub fn human_score(sys: &SystemRecord, selection: &[JudgmentIndex], weighting: HumanWeighting) -> Result<SystemScore> {
    if selection.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no judgments selected for system {:?}",
            sys.system_id
        )));
    }
    let value_at = |ix: &JudgmentIndex| -> Result<f64> {
        sys.segments()
            .get(ix.segment)
            .and_then(|s| s.judgments.get(ix.judgment))
            .map(|j| j.aggregate())
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "judgment index {ix:?} does not resolve in system {:?}",
                    sys.system_id
                ))
            })
    };
    let value = match weighting {
        HumanWeighting::Judgment => {
            let vals = selection.iter().map(value_at).collect::<Result<Vec<_>>>()?;
            compensated_sum(vals) / selection.len() as f64
        }
        HumanWeighting::Segment => {
            let mut sorted = selection.to_vec();
            sorted.sort();
            let mut seg_means = Vec::new();
            for chunk in sorted.chunk_by(|a, b| a.segment == b.segment) {
                let vals = chunk.iter().map(value_at).collect::<Result<Vec<_>>>()?;
                seg_means.push(compensated_sum(vals) / chunk.len() as f64);
            }
            compensated_sum(seg_means.iter().copied()) / seg_means.len() as f64
        }
    };
    Ok(SystemScore {
        value,
        estimator_kind: EstimatorKind::HumanMean,
        n_used: selection.len(),
    })
}

/// Every judgment of a system, in segment order.
pub fn all_judgments(sys: &SystemRecord) -> Vec<JudgmentIndex> {
    sys.segments()
        .iter()
        .enumerate()
        .flat_map(|(s, seg)| {
            (0..seg.judgments.len()).map(move |j| JudgmentIndex {
                segment: s,
                judgment: j,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Mean,
    RatioOfSums,
}

impl Aggregator {
    pub fn for_kind(kind: MetricKind) -> Aggregator {
        match kind {
            MetricKind::Scalar => Aggregator::Mean,
            MetricKind::Statistics => Aggregator::RatioOfSums,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::RatioOfSums => "ratio_of_sums",
        }
    }
}

/// Aggregates per-segment observations (with multiplicity) into a
/// system-level metric score.
///
/// `mean` averages scalars. `ratio_of_sums` sums numerator and denominator
/// vectors elementwise, takes componentwise ratios, and averages them.
pub fn aggregate_observations<'a, I>(metric_id: &str, obs: I, aggregator: Aggregator) -> Result<f64>
where
    I: IntoIterator<Item = &'a MetricObservation>,
{
    let mismatch = || Error::KindMismatch {
        metric: metric_id.to_string(),
        aggregator: aggregator.name().to_string(),
    };
    match aggregator {
        Aggregator::Mean => {
            let mut n = 0usize;
            let mut acc = CompensatedSum::default();
            for o in obs {
                match o {
                    MetricObservation::Scalar(v) => acc.add(*v),
                    _ => return Err(mismatch()),
                }
                n += 1;
            }
            if n == 0 {
                return Err(Error::EmptySelection(format!("no segments for metric {metric_id:?}")));
            }
            Ok(acc.total() / n as f64)
        }
        Aggregator::RatioOfSums => {
            let mut num_sum: Vec<f64> = Vec::new();
            let mut den_sum: Vec<f64> = Vec::new();
            let mut any = false;
            for o in obs {
                let MetricObservation::Statistics { num, den } = o else {
                    return Err(mismatch());
                };
                if !any {
                    num_sum = vec![0.0; num.len()];
                    den_sum = vec![0.0; den.len()];
                    any = true;
                } else if num.len() != num_sum.len() {
                    return Err(Error::Invalid(format!(
                        "metric {metric_id:?}: statistics vectors differ in length across segments"
                    )));
                }
                for (acc, v) in num_sum.iter_mut().zip(num) {
                    *acc += v;
                }
                for (acc, v) in den_sum.iter_mut().zip(den) {
                    *acc += v;
                }
            }
            if !any {
                return Err(Error::EmptySelection(format!("no segments for metric {metric_id:?}")));
            }
            if den_sum.contains(&0.0) {
                return Err(Error::Invalid(format!("metric {metric_id:?}: zero denominator sum")));
            }
            let ratios = num_sum.iter().zip(&den_sum).map(|(n, d)| n / d);
            Ok(compensated_sum(ratios) / num_sum.len() as f64)
        }
    }
}

/// Metric score over a multiset of positions in the system's segment list.
pub fn metric_score(
    sys: &SystemRecord,
    metric_id: &str,
    segments: &[usize],
    aggregator: Aggregator,
) -> Result<SystemScore> {
    let obs = segments
        .iter()
        .map(|&i| {
            let seg = sys
                .segments()
                .get(i)
                .ok_or_else(|| Error::Invalid(format!("segment position {i} out of range for {:?}", sys.system_id)))?;
            seg.metric_scores.get(metric_id).ok_or_else(|| Error::MissingMetric {
                system: sys.system_id.clone(),
                segment: seg.segment_id.clone(),
                metric: metric_id.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let value = aggregate_observations(metric_id, obs, aggregator)?;
    Ok(SystemScore {
        value,
        estimator_kind: EstimatorKind::Metric,
        n_used: segments.len(),
    })
}

/// Aggregated judgment values of one system restricted to a group's shared
/// segments, laid out for fast resampling.
#[derive(Clone, Debug)]
pub struct HumanPool {
    pub system_id: String,
    /// Category-aggregated judgment values, grouped by shared segment.
    values: Vec<f64>,
    /// `values[offsets[s]..offsets[s + 1]]` are the judgments of shared segment `s`.
    offsets: Vec<usize>,
}

impl HumanPool {
    pub fn new(group: &ComparisonGroup, system_index: usize) -> Self {
        let sys = &group.systems()[system_index];
        let mut values = Vec::new();
        let mut offsets = vec![0];
        for &p in group.aligned_positions(system_index) {
            values.extend(sys.segments()[p].judgments.iter().map(|j| j.aggregate()));
            offsets.push(values.len());
        }
        HumanPool {
            system_id: sys.system_id.clone(),
            values,
            offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segment_values(&self, shared: usize) -> &[f64] {
        &self.values[self.offsets[shared]..self.offsets[shared + 1]]
    }

    pub fn n_segments(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Full-data judgment-weighted mean.
    pub fn mean(&self) -> Result<f64> {
        if self.values.is_empty() {
            return Err(Error::NoJudgments {
                system: self.system_id.clone(),
            });
        }
        Ok(compensated_sum(self.values.iter().copied()) / self.values.len() as f64)
    }

    /// Full-data mean under the given weighting.
    pub fn weighted_mean(&self, weighting: HumanWeighting) -> Result<f64> {
        match weighting {
            HumanWeighting::Judgment => self.mean(),
            HumanWeighting::Segment => {
                let means: Vec<f64> = (0..self.n_segments())
                    .map(|s| self.segment_values(s))
                    .filter(|v| !v.is_empty())
                    .map(|v| compensated_sum(v.iter().copied()) / v.len() as f64)
                    .collect();
                if means.is_empty() {
                    return Err(Error::NoJudgments {
                        system: self.system_id.clone(),
                    });
                }
                Ok(compensated_sum(means.iter().copied()) / means.len() as f64)
            }
        }
    }

    /// Mean of the judgments at flat positions `idx` (with multiplicity).
    pub fn mean_of(&self, idx: &[usize]) -> f64 {
        compensated_sum(idx.iter().map(|&i| self.values[i])) / idx.len() as f64
    }
}

/// One metric's observations for one system, aligned to shared segments.
#[derive(Clone, Debug)]
pub struct MetricColumn {
    pub metric_id: String,
    pub aggregator: Aggregator,
    obs: Vec<MetricObservation>,
}

impl MetricColumn {
    pub fn new(group: &ComparisonGroup, system_index: usize, metric_id: &str) -> Result<Self> {
        let sys = &group.systems()[system_index];
        let obs = group
            .aligned_positions(system_index)
            .iter()
            .map(|&p| {
                let seg = &sys.segments()[p];
                seg.metric_scores
                    .get(metric_id)
                    .cloned()
                    .ok_or_else(|| Error::MissingMetric {
                        system: sys.system_id.clone(),
                        segment: seg.segment_id.clone(),
                        metric: metric_id.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let aggregator = Aggregator::for_kind(obs[0].kind());
        if obs.iter().any(|o| Aggregator::for_kind(o.kind()) != aggregator) {
            return Err(Error::Invalid(format!(
                "metric {metric_id:?} mixes scalar and statistics observations in system {:?}",
                sys.system_id
            )));
        }
        Ok(MetricColumn {
            metric_id: metric_id.to_string(),
            aggregator,
            obs,
        })
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Score over shared-segment indices (with multiplicity).
    pub fn score(&self, shared: &[usize]) -> Result<f64> {
        aggregate_observations(&self.metric_id, shared.iter().map(|&i| &self.obs[i]), self.aggregator)
    }

    pub fn full_score(&self) -> Result<f64> {
        aggregate_observations(&self.metric_id, &self.obs, self.aggregator)
    }
}
