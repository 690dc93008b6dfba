//! Annotator variance model: total vs within-segment judgment variance,
//! the perfect-annotator variance and efficiency ratio, judgment-count error
//! curves for unbiased estimators, and metric breakeven points.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_trials, Lane, Scheme};
use crate::data::{ComparisonGroup, Dataset, SystemRecord};
use crate::decomposition::{lanes, Decomposer, Estimator};
use crate::error::{Error, Result};
use crate::estimators::Label;
use crate::numeric::{mean, normal_cdf, round_half_up, sample_variance, CompensatedSum};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnnotatorVarianceReport {
    /// Sample variance over every judgment.
    pub var_h: f64,
    /// Degrees-of-freedom weighted pooled variance over repeat judgments.
    pub within_var: f64,
    /// `var_h - within_var`, clamped at zero.
    pub var_p: f64,
    /// `var_h / var_p`; infinite when `var_p` is zero.
    pub ratio: f64,
    pub n_judgments: usize,
    pub n_repeat_segments: usize,
    /// Set when `var_h - within_var` was negative and clamped.
    pub clamped: bool,
}

/// Variance report over per-segment lists of category-aggregated judgments.
pub fn variance_report_from_segments<'a, I>(segments: I) -> Result<AnnotatorVarianceReport>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut all = Vec::new();
    let mut within = CompensatedSum::default();
    let mut df = 0usize;
    let mut repeat = 0usize;
    for seg in segments {
        all.extend_from_slice(seg);
        if seg.len() >= 2 {
            let v = sample_variance(seg).expect("two or more values");
            within.add(v * (seg.len() - 1) as f64);
            df += seg.len() - 1;
            repeat += 1;
        }
    }
    if df == 0 {
        return Err(Error::NoRepeatJudgments);
    }
    let var_h = sample_variance(&all).ok_or(Error::NoRepeatJudgments)?;
    let within_var = within.total() / df as f64;
    let raw = var_h - within_var;
    let clamped = raw < 0.0;
    if clamped {
        log::warn!(
            "within-segment variance {within_var:.4} exceeds total variance {var_h:.4}; perfect-annotator variance clamped to 0"
        );
    }
    let var_p = raw.max(0.0);
    let ratio = if var_p > 0.0 { var_h / var_p } else { f64::INFINITY };
    Ok(AnnotatorVarianceReport {
        var_h,
        within_var,
        var_p,
        ratio,
        n_judgments: all.len(),
        n_repeat_segments: repeat,
        clamped,
    })
}

fn system_segments(sys: &SystemRecord) -> impl Iterator<Item = Vec<f64>> + '_ {
    sys.segments()
        .iter()
        .map(|s| s.judgments.iter().map(|j| j.aggregate()).collect())
}

/// Report over one system's segments.
pub fn variance_report_system(sys: &SystemRecord) -> Result<AnnotatorVarianceReport> {
    let segs: Vec<Vec<f64>> = system_segments(sys).collect();
    variance_report_from_segments(segs.iter().map(Vec::as_slice))
}

/// Report over every segment of every system in a group.
pub fn variance_report(group: &ComparisonGroup) -> Result<AnnotatorVarianceReport> {
    let segs: Vec<Vec<f64>> = group.systems().iter().flat_map(system_segments).collect();
    variance_report_from_segments(segs.iter().map(Vec::as_slice))
}

/// Report over every segment in the dataset.
pub fn variance_report_dataset(ds: &Dataset) -> Result<AnnotatorVarianceReport> {
    let segs: Vec<Vec<f64>> = ds
        .groups()
        .iter()
        .flat_map(|g| g.systems().iter().flat_map(system_segments))
        .collect();
    variance_report_from_segments(segs.iter().map(Vec::as_slice))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorKind {
    Human,
    PerfectAnnotator,
}

impl AnnotatorKind {
    pub fn name(self) -> &'static str {
        match self {
            AnnotatorKind::Human => "human",
            AnnotatorKind::PerfectAnnotator => "perfect_annotator",
        }
    }

    fn tag(self) -> u64 {
        match self {
            AnnotatorKind::Human => 0,
            AnnotatorKind::PerfectAnnotator => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMethod {
    Bootstrap,
    Analytic,
}

impl CurveMethod {
    pub fn name(self) -> &'static str {
        match self {
            CurveMethod::Bootstrap => "bootstrap",
            CurveMethod::Analytic => "analytic",
        }
    }
}

impl std::str::FromStr for CurveMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(CurveMethod::Bootstrap),
            "analytic" => Ok(CurveMethod::Analytic),
            other => Err(Error::Parameter(format!("unknown curve method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub estimator_kind: AnnotatorKind,
    pub method: CurveMethod,
    pub points: Vec<(usize, f64)>,
}

/// Judgment-count error model for the unbiased estimators of a dataset.
pub struct AnnotatorModel<'d, 'a> {
    decomposer: &'d Decomposer<'a>,
    /// One report per group, indexed like `Dataset::groups`.
    reports: Vec<AnnotatorVarianceReport>,
    with_replacement: bool,
}

impl<'d, 'a> AnnotatorModel<'d, 'a> {
    /// Uses a single dataset-wide variance report for every pair.
    pub fn new(decomposer: &'d Decomposer<'a>) -> Result<Self> {
        let r = variance_report_dataset(decomposer.dataset())?;
        let n = decomposer.dataset().groups().len();
        Ok(Self::with_reports(decomposer, vec![r; n]))
    }

    /// Uses a separate variance report for each comparison group.
    pub fn per_group(decomposer: &'d Decomposer<'a>) -> Result<Self> {
        let reports = decomposer
            .dataset()
            .groups()
            .iter()
            .map(variance_report)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_reports(decomposer, reports))
    }

    pub fn with_reports(decomposer: &'d Decomposer<'a>, reports: Vec<AnnotatorVarianceReport>) -> Self {
        AnnotatorModel {
            decomposer,
            reports,
            with_replacement: true,
        }
    }

    /// Draw judgments without replacement in bootstrap curves; counts above
    /// a system's judgment pool then fail.
    pub fn without_replacement(mut self) -> Self {
        self.with_replacement = false;
        self
    }

    pub fn reports(&self) -> &[AnnotatorVarianceReport] {
        &self.reports
    }

    fn report_for(&self, pair_index: usize) -> &AnnotatorVarianceReport {
        let g = self.decomposer.contexts()[pair_index].pair.group_index;
        &self.reports[g]
    }

    /// Human judgments per system that stand in for `n` judgments of `kind`.
    pub fn effective_judgments(&self, pair_index: usize, n: usize, kind: AnnotatorKind) -> Result<usize> {
        match kind {
            AnnotatorKind::Human => Ok(n),
            AnnotatorKind::PerfectAnnotator => {
                let r = self.report_for(pair_index).ratio;
                if !r.is_finite() {
                    return Err(Error::Parameter(
                        "perfect-annotator variance is zero; efficiency ratio undefined".into(),
                    ));
                }
                Ok(round_half_up(r * n as f64).max(1) as usize)
            }
        }
    }

    /// Error of the `n`-judgment unbiased estimator on one pair, measured
    /// against the optimal label.
    pub fn unbiased_error_at(
        &self,
        pair_index: usize,
        n: usize,
        kind: AnnotatorKind,
        method: CurveMethod,
    ) -> Result<f64> {
        if n == 0 {
            return Err(Error::Parameter("judgment count must be at least 1".into()));
        }
        match method {
            CurveMethod::Analytic => {
                let delta = self.decomposer.full_human_difference(pair_index)?.difference;
                let rep = self.report_for(pair_index);
                let var = match kind {
                    AnnotatorKind::Human => rep.var_h,
                    AnnotatorKind::PerfectAnnotator => rep.var_p,
                };
                Ok(analytic_error(delta, var, n))
            }
            CurveMethod::Bootstrap => {
                let size = self.effective_judgments(pair_index, n, kind)?;
                let t = self.decomposer.optimal_label(pair_index)?.sign;
                let tag = [lanes::UNBIASED, kind.tag(), n as u64];
                let trials = self.decomposer.plan().n_trials;
                let labels = if self.with_replacement {
                    self.decomposer
                        .human_labels(pair_index, &tag, trials, Some(size), Scheme::JudgmentLevel)?
                } else {
                    self.labels_without_replacement(pair_index, &tag, trials, size)?
                };
                Ok(labels.iter().filter(|&&l| l != t).count() as f64 / trials as f64)
            }
        }
    }

    fn labels_without_replacement(
        &self,
        pair_index: usize,
        tag: &[u64],
        trials: usize,
        size: usize,
    ) -> Result<Vec<Label>> {
        let c = &self.decomposer.contexts()[pair_index];
        for p in [&c.human_a, &c.human_b] {
            if size > p.len() {
                return Err(Error::Parameter(format!(
                    "{size} judgments requested without replacement but system {:?} has {}",
                    p.system_id,
                    p.len()
                )));
            }
        }
        let mut parts = vec![c.index as u64];
        parts.extend_from_slice(tag);
        run_trials(self.decomposer.plan().seed, Lane::new(&parts), trials, |_, rng| {
            let ia = index::sample(rng, c.human_a.len(), size);
            let ma = mean(ia.iter().map(|i| c.human_a.values()[i])).unwrap_or(0.0);
            let ib = index::sample(rng, c.human_b.len(), size);
            let mb = mean(ib.iter().map(|i| c.human_b.values()[i])).unwrap_or(0.0);
            Ok(Label::from_difference(ma - mb))
        })
    }

    /// Pair-averaged unbiased error at `n` judgments.
    pub fn dataset_error_at(&self, n: usize, kind: AnnotatorKind, method: CurveMethod) -> Result<f64> {
        let errs = (0..self.decomposer.len())
            .into_par_iter()
            .map(|i| self.unbiased_error_at(i, n, kind, method))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(errs.iter().sum::<f64>() / errs.len().max(1) as f64)
    }

    pub fn error_curve(&self, grid: &[usize], kind: AnnotatorKind, method: CurveMethod) -> Result<ErrorCurve> {
        let points = grid
            .iter()
            .map(|&n| Ok((n, self.dataset_error_at(n, kind, method)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ErrorCurve {
            estimator_kind: kind,
            method,
            points,
        })
    }

    /// Smallest judgment count whose pair-averaged unbiased error is at most
    /// the metric's adjusted error. `None` when the metric has zero adjusted
    /// error or the target is not reached (within `cap` for the analytic
    /// method, within `grid` for the bootstrap method).
    pub fn breakeven(
        &self,
        metric: &Estimator,
        kind: AnnotatorKind,
        method: CurveMethod,
        grid: &[usize],
        cap: usize,
    ) -> Result<Option<usize>> {
        let target = self.decomposer.adjusted_error(metric)?;
        if target <= 0.0 {
            return Ok(None);
        }
        match method {
            CurveMethod::Bootstrap => {
                for &n in grid {
                    if self.dataset_error_at(n, kind, method)? <= target {
                        return Ok(Some(n));
                    }
                }
                Ok(None)
            }
            CurveMethod::Analytic => {
                let f = |n: usize| self.dataset_error_at(n, kind, method);
                if f(1)? <= target {
                    return Ok(Some(1));
                }
                let mut hi = 2usize;
                while f(hi)? > target {
                    if hi >= cap {
                        return Ok(None);
                    }
                    hi = (hi * 2).min(cap);
                }
                let mut lo = hi / 2;
                // f(lo) > target >= f(hi)
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if f(mid)? <= target {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(Some(hi))
            }
        }
    }
}

/// Normal-approximation error of an `n`-judgment-per-system estimator for a
/// true difference `delta` and per-judgment variance `var`.
pub fn analytic_error(delta: f64, var: f64, n: usize) -> f64 {
    if delta == 0.0 {
        return 0.5;
    }
    if var <= 0.0 {
        return 0.0;
    }
    normal_cdf(-delta.abs() / (2.0 * var / n as f64).sqrt())
}

/// `points` values spaced evenly in log space from `lo` to `hi`, rounded and
/// deduplicated.
pub fn log_grid(lo: usize, hi: usize, points: usize) -> Result<Vec<usize>> {
    if lo == 0 || hi < lo || points == 0 {
        return Err(Error::Parameter(format!(
            "invalid grid {lo}..{hi} with {points} points"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    Ok(out)
}

/// Default judgment grid: 10 to 10^4 with 20 log-spaced points.
pub fn default_grid() -> Vec<usize> {
    log_grid(10, 10_000, 20).expect("valid constant grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pooled_variance_by_degrees_of_freedom() {
        let segs: Vec<Vec<f64>> = vec![vec![1.0, 3.0], vec![10.0, 12.0, 14.0], vec![7.0]];
        let r = variance_report_from_segments(segs.iter().map(Vec::as_slice)).unwrap();
        // within: (2*1 + 4*2) / 3
        assert_abs_diff_eq!(r.within_var, 10.0 / 3.0, epsilon = 1e-12);
        let all = [1.0, 3.0, 10.0, 12.0, 14.0, 7.0];
        assert_abs_diff_eq!(r.var_h, sample_variance(&all).unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.var_p, r.var_h - r.within_var, epsilon = 1e-12);
        assert_eq!(r.n_repeat_segments, 2);
        assert!(!r.clamped);
    }

    #[test]
    fn noiseless_annotator_has_unit_ratio() {
        let segs: Vec<Vec<f64>> = vec![vec![1.0, 1.0], vec![5.0, 5.0], vec![9.0, 9.0]];
        let r = variance_report_from_segments(segs.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(r.within_var, 0.0);
        assert_eq!(r.var_p, r.var_h);
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn no_repeats_is_an_error() {
        let segs: Vec<Vec<f64>> = vec![vec![1.0], vec![5.0]];
        assert!(matches!(
            variance_report_from_segments(segs.iter().map(Vec::as_slice)),
            Err(Error::NoRepeatJudgments)
        ));
    }

    #[test]
    fn negative_perfect_variance_is_clamped() {
        // all spread is within segments, segment means identical
        let segs: Vec<Vec<f64>> = vec![vec![0.0, 10.0], vec![0.0, 10.0]];
        let r = variance_report_from_segments(segs.iter().map(Vec::as_slice)).unwrap();
        assert!(r.clamped);
        assert_eq!(r.var_p, 0.0);
        assert!(r.ratio.is_infinite());
    }

    #[test]
    fn analytic_error_values() {
        assert_eq!(analytic_error(0.0, 10.0, 5), 0.5);
        assert_abs_diff_eq!(analytic_error(1.0, 371.3, 2700), 0.02827, epsilon = 5e-5);
        assert_abs_diff_eq!(analytic_error(-1.0, 900.0, 1800), 0.158_655, epsilon = 1e-6);
        assert!(analytic_error(1.0, 900.0, 10_000_000) < 1e-12);
    }

    #[test]
    fn grid_shape() {
        let g = default_grid();
        assert_eq!(g.first(), Some(&10));
        assert_eq!(g.last(), Some(&10_000));
        assert_eq!(g.len(), 20);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(log_grid(0, 10, 3).is_err());
    }
}
