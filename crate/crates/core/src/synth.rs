//! Gaussian synthetic datasets with closed-form ground truth, and exact
//! enumeration of decomposition terms on tiny instances.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ComparisonGroup, Dataset, JudgmentRecord, MetricObservation, Scale, SegmentRecord, SystemRecord};
use crate::error::{Error, Result};
use crate::estimators::{HumanPool, Label, MetricColumn};
use crate::numeric::normal_cdf;

fn default_group() -> String {
    "synthetic".into()
}

fn default_metric() -> String {
    "oracle".into()
}

fn one() -> usize {
    1
}

/// Judgment `= quality + N(0, judgment_std^2)` with segment quality
/// `~ N(mean_S, segment_std^2)`; metric score `= quality + offset_S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub system_means: Vec<f64>,
    /// Per-system metric offsets; empty means all zero.
    #[serde(default)]
    pub metric_offsets: Vec<f64>,
    pub segment_std: f64,
    pub judgment_std: f64,
    pub n_segments: usize,
    #[serde(default = "one")]
    pub judgments_per_segment: usize,
    pub seed: u64,
    #[serde(default = "default_group")]
    pub group_id: String,
    #[serde(default = "default_metric")]
    pub metric_id: String,
    /// Clip judgments to this `[min, max]` scale and declare it.
    #[serde(default)]
    pub clip: Option<[f64; 2]>,
    /// Match each system's sample moments to the model exactly: segment
    /// qualities get sample mean `mean_S`, population variance
    /// `segment_std^2` and zero sample correlation across systems; judgment
    /// noise is centered, uncorrelated with quality and scaled to variance
    /// `judgment_std^2`.
    #[serde(default)]
    pub exact_moments: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            system_means: vec![50.0, 51.0],
            metric_offsets: Vec::new(),
            segment_std: 10.0,
            judgment_std: 10.0,
            n_segments: 200,
            judgments_per_segment: 1,
            seed: 0,
            group_id: default_group(),
            metric_id: default_metric(),
            clip: None,
            exact_moments: false,
        }
    }
}

impl GeneratorConfig {
    /// `n` systems with means `start, start + spacing, ...`.
    pub fn spaced(n: usize, start: f64, spacing: f64) -> Self {
        GeneratorConfig {
            system_means: (0..n).map(|i| start + spacing * i as f64).collect(),
            ..Default::default()
        }
    }

    pub fn n_systems(&self) -> usize {
        self.system_means.len()
    }

    pub fn offset(&self, s: usize) -> f64 {
        self.metric_offsets.get(s).copied().unwrap_or(0.0)
    }

    pub fn system_id(&self, s: usize) -> String {
        let width = self.n_systems().saturating_sub(1).to_string().len().max(2);
        format!("S{s:0width$}")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_systems() < 2 {
            return Err(Error::Parameter("at least two systems are required".into()));
        }
        if !self.metric_offsets.is_empty() && self.metric_offsets.len() != self.n_systems() {
            return Err(Error::Parameter(format!(
                "{} metric offsets for {} systems",
                self.metric_offsets.len(),
                self.n_systems()
            )));
        }
        if !(self.segment_std >= 0.0 && self.judgment_std >= 0.0) {
            return Err(Error::Parameter("standard deviations must be non-negative".into()));
        }
        if self.n_segments < 2 {
            return Err(Error::Parameter("at least two segments are required".into()));
        }
        if self.judgments_per_segment == 0 {
            return Err(Error::Parameter("judgments per segment must be at least 1".into()));
        }
        if self.exact_moments && self.segment_std > 0.0 && self.n_segments <= self.n_systems() {
            return Err(Error::Parameter("exact moments need more segments than systems".into()));
        }
        if let Some([lo, hi]) = self.clip {
            Scale::new(lo, hi)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTruth {
    pub system_a: String,
    pub system_b: String,
    pub delta_mu: f64,
    pub delta_b: f64,
    pub true_label: Label,
    pub noise: f64,
    pub variance: f64,
    pub bias: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GeneratorConfig,
    pub var_h: f64,
    pub var_p: f64,
    pub r: f64,
    pub pairs: Vec<PairTruth>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Components {
    pub true_label: Label,
    pub noise: f64,
    pub variance: f64,
    pub bias: u8,
}

/// Closed-form noise, metric variance and bias for systems `a` and `b`,
/// with `n_judgments` judgments per system and `n_segments` paired segments.
/// A zero quality gap takes the tie label with noise 0.5.
pub fn analytic_components(
    cfg: &GeneratorConfig,
    a: usize,
    b: usize,
    n_judgments: usize,
    n_segments: usize,
) -> Result<Components> {
    if a >= cfg.n_systems() || b >= cfg.n_systems() {
        return Err(Error::Parameter(format!("system index out of range: {a}, {b}")));
    }
    if n_judgments == 0 || n_segments == 0 {
        return Err(Error::Parameter("sample sizes must be positive".into()));
    }
    let dmu = cfg.system_means[a] - cfg.system_means[b];
    let dm = dmu + cfg.offset(a) - cfg.offset(b);
    let tau2 = cfg.segment_std * cfg.segment_std;
    let total = tau2 + cfg.judgment_std * cfg.judgment_std;
    let true_label = Label::from_difference(dmu);
    let noise = if dmu == 0.0 {
        0.5
    } else if total == 0.0 {
        0.0
    } else {
        normal_cdf(-dmu.abs() / (2.0 * total / n_judgments as f64).sqrt())
    };
    let variance = if tau2 == 0.0 {
        0.0
    } else {
        normal_cdf(-dm.abs() * (n_segments as f64).sqrt() / (cfg.segment_std * std::f64::consts::SQRT_2))
    };
    let bias = u8::from(Label::from_difference(dm) != true_label);
    Ok(Components {
        true_label,
        noise,
        variance,
        bias,
    })
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn center(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the components along each unit vector in `basis`, then rescales
/// to population standard deviation `sd`. Returns the unit-norm direction.
fn orthogonal_standardize(v: &mut [f64], basis: &[Vec<f64>], sd: f64) -> Result<Vec<f64>> {
    center(v);
    for u in basis {
        let p = dot(v, u);
        v.iter_mut().zip(u).for_each(|(x, ui)| *x -= p * ui);
    }
    let norm = dot(v, v).sqrt();
    if norm == 0.0 {
        return Err(Error::Parameter("degenerate draw while matching moments".into()));
    }
    let unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let scale = sd * (v.len() as f64).sqrt();
    v.iter_mut().zip(&unit).for_each(|(x, u)| *x = u * scale);
    Ok(unit)
}

/// Draws a dataset with a single comparison group and its ground truth.
/// Deterministic in `cfg.seed`.
pub fn generate(cfg: &GeneratorConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = match cfg.clip {
        Some([lo, hi]) => Scale::new(lo, hi)?,
        None => Scale::UNBOUNDED,
    };
    let n = cfg.n_segments;
    let k = cfg.judgments_per_segment;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut systems = Vec::with_capacity(cfg.n_systems());
    for (s, &mu) in cfg.system_means.iter().enumerate() {
        let mut z = standard_normals(&mut rng, n);
        let mut e = standard_normals(&mut rng, n * k);
        let quality: Vec<f64> = if cfg.exact_moments && cfg.segment_std > 0.0 {
            basis.push(orthogonal_standardize(&mut z, &basis, cfg.segment_std)?);
            z.iter().map(|x| mu + x).collect()
        } else {
            z.iter().map(|x| mu + cfg.segment_std * x).collect()
        };
        let noise: Vec<f64> = if cfg.exact_moments && cfg.judgment_std > 0.0 {
            let mut q: Vec<f64> = (0..n * k).map(|j| quality[j / k]).collect();
            center(&mut q);
            let qn = dot(&q, &q).sqrt();
            let qb = if qn > 0.0 {
                vec![q.iter().map(|x| x / qn).collect()]
            } else {
                vec![]
            };
            orthogonal_standardize(&mut e, &qb, cfg.judgment_std)?;
            e
        } else {
            e.iter().map(|x| cfg.judgment_std * x).collect()
        };
        let offset = cfg.offset(s);
        let segments = (0..n)
            .map(|i| {
                let judgments = (0..k)
                    .map(|j| {
                        let mut v = quality[i] + noise[i * k + j];
                        if cfg.clip.is_some() {
                            v = v.clamp(scale.min, scale.max);
                        }
                        JudgmentRecord::single(v, scale)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let metrics = BTreeMap::from([(cfg.metric_id.clone(), MetricObservation::Scalar(quality[i] + offset))]);
                SegmentRecord::new(format!("seg{i:06}"), judgments, metrics)
            })
            .collect::<Result<Vec<_>>>()?;
        systems.push(SystemRecord::new(cfg.system_id(s), segments)?);
    }
    let ds = Dataset::new(vec![ComparisonGroup::new(cfg.group_id.clone(), systems)?])?;
    Ok((ds, ground_truth(cfg)?))
}

pub fn ground_truth(cfg: &GeneratorConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let tau2 = cfg.segment_std * cfg.segment_std;
    let var_h = tau2 + cfg.judgment_std * cfg.judgment_std;
    let n_judgments = cfg.n_segments * cfg.judgments_per_segment;
    let mut pairs = Vec::new();
    for a in 0..cfg.n_systems() {
        for b in a + 1..cfg.n_systems() {
            let c = analytic_components(cfg, a, b, n_judgments, cfg.n_segments)?;
            pairs.push(PairTruth {
                system_a: cfg.system_id(a),
                system_b: cfg.system_id(b),
                delta_mu: cfg.system_means[a] - cfg.system_means[b],
                delta_b: cfg.offset(a) - cfg.offset(b),
                true_label: c.true_label,
                noise: c.noise,
                variance: c.variance,
                bias: c.bias,
            });
        }
    }
    Ok(GroundTruth {
        config: cfg.clone(),
        var_h,
        var_p: tau2,
        r: if tau2 > 0.0 { var_h / tau2 } else { f64::INFINITY },
        pairs,
    })
}

/// Exact decomposition terms of one pair under judgment-level human
/// resampling and paired segment metric resampling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactTerms {
    pub optimal_label: Label,
    pub main_prediction: Label,
    pub p_human_positive: f64,
    pub p_metric_positive: f64,
    pub noise: f64,
    pub variance: f64,
    pub bias: u8,
    pub c0: f64,
    pub c1: i8,
    pub err_obs: f64,
    /// Outcomes enumerated: human compositions for both systems plus metric
    /// index sequences.
    pub outcomes: u64,
    /// The identity checked in integer arithmetic on the common denominator.
    pub identity_exact: bool,
}

impl ExactTerms {
    pub fn identity_gap(&self) -> f64 {
        (self.err_obs - (self.c0 * self.noise + f64::from(self.bias) + f64::from(self.c1) * self.variance)).abs()
    }
}

/// Largest instance accepted by [`enumerate_exact`].
pub const MAX_EXACT_SEGMENTS: usize = 3;
pub const MAX_EXACT_JUDGMENTS_PER_SEGMENT: usize = 3;
pub const MAX_EXACT_OUTCOMES: u64 = 1_000_000;

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Every with-replacement resample of `values` (same size) as
/// `(sum, multinomial weight)`.
fn compositions(values: &[f64]) -> Vec<(f64, u128)> {
    let n = values.len();
    let nf = factorial(n);
    let mut out = Vec::new();
    let mut counts = vec![0usize; n];
    fn rec(i: usize, left: usize, values: &[f64], counts: &mut [usize], nf: u128, out: &mut Vec<(f64, u128)>) {
        if i == values.len() - 1 {
            counts[i] = left;
            let sum = values.iter().zip(counts.iter()).map(|(v, &c)| v * c as f64).sum();
            let denom: u128 = counts.iter().map(|&c| factorial(c)).product();
            out.push((sum, nf / denom));
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            rec(i + 1, left - c, values, counts, nf, out);
        }
    }
    rec(0, n, values, &mut counts, nf, &mut out);
    out
}

/// Enumerates every human and metric resample of pair `pair_index` and
/// returns exact term probabilities. Ties in a resampled difference take the
/// positive label. The metric must have per-segment observations.
pub fn enumerate_exact(ds: &Dataset, pair_index: usize, metric_id: &str) -> Result<ExactTerms> {
    let pairs = ds.pairs()?;
    let pair = pairs
        .get(pair_index)
        .ok_or_else(|| Error::Parameter(format!("pair index {pair_index} out of range")))?;
    let g = &ds.groups()[pair.group_index];
    let k = pair.n_segments;
    if k > MAX_EXACT_SEGMENTS {
        return Err(Error::TooLarge(format!(
            "{k} shared segments; at most {MAX_EXACT_SEGMENTS} can be enumerated"
        )));
    }
    let ha = HumanPool::new(g, pair.index_a);
    let hb = HumanPool::new(g, pair.index_b);
    for p in [&ha, &hb] {
        if p.is_empty() {
            return Err(Error::NoJudgments {
                system: p.system_id.clone(),
            });
        }
        if let Some(s) = (0..p.n_segments()).find(|&s| p.segment_values(s).len() > MAX_EXACT_JUDGMENTS_PER_SEGMENT) {
            return Err(Error::TooLarge(format!(
                "segment {} of system {:?} has {} judgments; at most {MAX_EXACT_JUDGMENTS_PER_SEGMENT} can be enumerated",
                s,
                p.system_id,
                p.segment_values(s).len()
            )));
        }
    }
    let (na, nb) = (ha.len(), hb.len());
    let metric_outcomes = (k as u64).pow(k as u32);
    let outcomes = binomial(2 * na as u64 - 1, na as u64) + binomial(2 * nb as u64 - 1, nb as u64) + metric_outcomes;
    if outcomes > MAX_EXACT_OUTCOMES {
        return Err(Error::TooLarge(format!(
            "{outcomes} outcomes exceed {MAX_EXACT_OUTCOMES}"
        )));
    }

    // mean_a >= mean_b  <=>  sum_a * nb >= sum_b * na
    let key_a: Vec<(f64, u128)> = compositions(ha.values())
        .into_iter()
        .map(|(s, w)| (s * nb as f64, w))
        .collect();
    let mut key_b: Vec<(f64, u128)> = compositions(hb.values())
        .into_iter()
        .map(|(s, w)| (s * na as f64, w))
        .collect();
    key_b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut prefix = Vec::with_capacity(key_b.len() + 1);
    prefix.push(0u128);
    for &(_, w) in &key_b {
        prefix.push(prefix.last().unwrap() + w);
    }
    let h_pos: u128 = key_a
        .iter()
        .map(|&(ka, wa)| wa * prefix[key_b.partition_point(|&(kb, _)| kb <= ka)])
        .sum();
    let h_den = (na as u128).pow(na as u32) * (nb as u128).pow(nb as u32);

    let ma = MetricColumn::new(g, pair.index_a, metric_id)?;
    let mb = MetricColumn::new(g, pair.index_b, metric_id)?;
    let mut idx = vec![0usize; k];
    let mut m_pos: u128 = 0;
    for code in 0..metric_outcomes {
        let mut c = code;
        for slot in idx.iter_mut() {
            *slot = (c % k as u64) as usize;
            c /= k as u64;
        }
        if Label::from_difference(ma.score(&idx)? - mb.score(&idx)?) == Label::Positive {
            m_pos += 1;
        }
    }
    let m_den = metric_outcomes as u128;

    let sum_a: f64 = ha.values().iter().sum();
    let sum_b: f64 = hb.values().iter().sum();
    let t = Label::from_difference(sum_a * nb as f64 - sum_b * na as f64);
    let main = Label::from_difference(ma.full_score()? - mb.full_score()?);

    let count = |pos: u128, den: u128, l: Label| if l == Label::Positive { pos } else { den - pos };
    let h_not_t = h_den - count(h_pos, h_den, t);
    let m_eq_t = count(m_pos, m_den, t);
    let m_ne_main = m_den - count(m_pos, m_den, main);
    let bias = u8::from(t != main);
    let c1: i8 = if bias == 0 { 1 } else { -1 };
    let err_num = h_pos * (m_den - m_pos) + (h_den - h_pos) * m_pos;

    // Err * D = c0 N D + B D + c1 V D with D = h_den * m_den
    let d = (h_den * m_den) as i128;
    let lhs = err_num as i128;
    let rhs = (2 * m_eq_t as i128 - m_den as i128) * h_not_t as i128
        + i128::from(bias) * d
        + i128::from(c1) * m_ne_main as i128 * h_den as i128;

    let noise = h_not_t as f64 / h_den as f64;
    let variance = m_ne_main as f64 / m_den as f64;
    Ok(ExactTerms {
        optimal_label: t,
        main_prediction: main,
        p_human_positive: h_pos as f64 / h_den as f64,
        p_metric_positive: m_pos as f64 / m_den as f64,
        noise,
        variance,
        bias,
        c0: 2.0 * m_eq_t as f64 / m_den as f64 - 1.0,
        c1,
        err_obs: err_num as f64 / d as f64,
        outcomes,
        identity_exact: lhs == rhs,
    })
}
