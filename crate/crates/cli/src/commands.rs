use std::collections::BTreeSet;
use std::io::Write;

use anyhow::{Context, Result};
use clap::Args;
use metaeval_core::annotator::{default_grid, log_grid, variance_report, variance_report_dataset};
use metaeval_core::data::ingest_with_metrics;
use metaeval_core::power::{cooccurrence, power_table};
use metaeval_core::report::{self, BreakevenRow};
use metaeval_core::synth::generate;
use metaeval_core::{
    AnnotatorKind, AnnotatorModel, Approximation, CurveMethod, Dataset, Decomposer, Estimator, GeneratorConfig,
    HumanWeighting, InjectedReplicates, LabelSource, ResamplePlan, Scheme, DEFAULT_SIGNIFICANCE_TRIALS, DEFAULT_TRIALS,
};
use serde::Serialize;

use crate::config::{input_error, Common, Settings};

fn load(s: &Settings) -> Result<Dataset> {
    let path = s.data()?;
    let ds = ingest_with_metrics(path, s.data_format()?, s.metric_scores.as_deref())?;
    Ok(ds)
}

fn load_replicates(s: &Settings) -> Result<Option<InjectedReplicates>> {
    let Some(path) = &s.replicates else { return Ok(None) };
    let f = std::fs::File::open(path)
        .map_err(|e| input_error(format!("cannot open replicates {}: {e}", path.display())))?;
    Ok(Some(InjectedReplicates::read(std::io::BufReader::new(f))?))
}

/// Metric estimators to evaluate: the requested ids, or every metric in the
/// dataset and replicate file.
fn metric_estimators(s: &Settings, ds: &Dataset, reps: Option<&InjectedReplicates>) -> Result<Vec<Estimator>> {
    let in_data: BTreeSet<String> = ds.metric_ids().into_iter().collect();
    let in_reps: BTreeSet<String> = reps.map(|r| r.metric_ids().into_iter().collect()).unwrap_or_default();
    let ids: Vec<String> = if s.metrics.is_empty() {
        in_data.union(&in_reps).cloned().collect()
    } else {
        s.metrics.clone()
    };
    ids.into_iter()
        .map(|id| {
            if in_data.contains(&id) {
                Ok(Estimator::Metric(id))
            } else if in_reps.contains(&id) {
                Ok(Estimator::Injected(id))
            } else {
                Err(input_error(format!(
                    "metric {id:?} has no scores in the dataset or replicate file"
                )))
            }
        })
        .collect()
}

fn trials(s: &Settings, reps: Option<&InjectedReplicates>, default: usize) -> usize {
    s.trials.or(reps.map(InjectedReplicates::n_trials)).unwrap_or(default)
}

fn file_slug(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn validate(common: &Common) -> Result<()> {
    let s = Settings::resolve(common)?;
    let ds = load(&s)?;
    let summary = ds.summary();
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "group\tsystems\tshared_segments\tdropped_segments\tjudgments\tpairs"
    )?;
    for g in &summary.groups {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            g.group_id, g.systems, g.shared_segments, g.dropped_segments, g.judgments, g.pairs
        )?;
    }
    writeln!(
        out,
        "total\t{}\t-\t{}\t{}\t{}",
        summary.total_systems(),
        summary.total_dropped(),
        summary.total_judgments(),
        summary.total_pairs()
    )?;
    let metrics = ds.metric_ids();
    if !metrics.is_empty() {
        writeln!(out, "metrics\t{}", metrics.join(","))?;
    }
    Ok(())
}

#[derive(Args, Debug, Clone, Default)]
pub struct DecomposeArgs {
    /// Where optimal labels and main predictions come from
    /// (full_data or replicate_majority).
    #[arg(long)]
    pub label_source: Option<LabelSource>,
    /// How repeat judgments weigh into the human mean (judgment or segment).
    #[arg(long)]
    pub weighting: Option<HumanWeighting>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    seed: u64,
    n_trials: usize,
    scheme: Scheme,
    label_source: LabelSource,
    weighting: HumanWeighting,
    estimators: Vec<String>,
    pairs: usize,
}

fn decomposer<'a>(
    s: &Settings,
    ds: &'a Dataset,
    n_trials: usize,
    label_source: LabelSource,
    weighting: HumanWeighting,
) -> Result<Decomposer<'a>> {
    let plan = ResamplePlan::new(s.seed()?, n_trials, s.scheme)?;
    Ok(Decomposer::new(ds, plan)?
        .with_label_source(label_source)
        .with_weighting(weighting))
}

pub fn decompose(common: &Common, args: &DecomposeArgs) -> Result<()> {
    let s = Settings::resolve(common)?;
    let label_source = s.pick(args.label_source, s.file.label_source.as_ref(), LabelSource::FullData)?;
    let weighting = s.pick(args.weighting, s.file.weighting.as_ref(), HumanWeighting::Judgment)?;
    let ds = load(&s)?;
    let reps = load_replicates(&s)?;
    let n_trials = trials(&s, reps.as_ref(), DEFAULT_TRIALS);
    let mut d = decomposer(&s, &ds, n_trials, label_source, weighting)?;
    if let Some(r) = &reps {
        d = d.with_replicates(r);
    }
    let mut estimators = vec![Estimator::Optimal, Estimator::Human];
    estimators.extend(metric_estimators(&s, &ds, reps.as_ref())?);
    let mut results = Vec::with_capacity(estimators.len());
    for e in &estimators {
        log::info!("decomposing {}", e.name());
        results.push(d.decompose(e).with_context(|| format!("decomposing {}", e.name()))?);
    }
    let rows = report::table1_order(results);
    report::write_table1(&rows, s.create("table1.csv")?)?;
    report::write_pairs(&rows, s.create("pairs.csv")?)?;
    report::write_json(
        &RunRecord {
            command: "decompose",
            seed: s.seed()?,
            n_trials,
            scheme: s.scheme,
            label_source,
            weighting,
            estimators: rows.iter().map(|r| r.estimator.clone()).collect(),
            pairs: d.len(),
        },
        s.create("run.json")?,
    )?;
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{:<24}{:>10}{:>10}{:>10}{:>10}",
        "estimator", "err_obs", "c0_noise", "bias", "c1_var"
    )?;
    for r in &rows {
        writeln!(
            out,
            "{:<24}{:>10.3}{:>10.3}{:>10.3}{:>10.3}",
            r.estimator, r.err_obs, r.c0_noise, r.bias, r.c1_var
        )?;
    }
    Ok(())
}

#[derive(Args, Debug, Clone, Default)]
pub struct BreakevenArgs {
    /// analytic, bootstrap, or both.
    #[arg(long)]
    pub method: Option<String>,
    /// Variance report per `dataset` or per `group`.
    #[arg(long)]
    pub report_scope: Option<String>,
    /// Largest judgment count searched by the analytic method.
    #[arg(long, default_value_t = 10_000_000)]
    pub cap: usize,
}

fn methods(spec: &str) -> Result<Vec<CurveMethod>> {
    match spec {
        "both" => Ok(vec![CurveMethod::Analytic, CurveMethod::Bootstrap]),
        other => Ok(vec![other
            .parse::<CurveMethod>()
            .map_err(|e| input_error(e.to_string()))?]),
    }
}

pub fn breakeven(common: &Common, args: &BreakevenArgs) -> Result<()> {
    let s = Settings::resolve(common)?;
    let method_spec = args
        .method
        .clone()
        .or_else(|| s.file.method.clone())
        .unwrap_or_else(|| "both".into());
    let methods = methods(&method_spec)?;
    let scope = args
        .report_scope
        .clone()
        .or_else(|| s.file.report_scope.clone())
        .unwrap_or_else(|| "dataset".into());
    let ds = load(&s)?;
    let reps = load_replicates(&s)?;
    let n_trials = trials(&s, reps.as_ref(), DEFAULT_TRIALS);
    let mut d = decomposer(&s, &ds, n_trials, LabelSource::FullData, HumanWeighting::Judgment)?;
    if let Some(r) = &reps {
        d = d.with_replicates(r);
    }
    let (model, slices) = match scope.as_str() {
        "dataset" => (
            AnnotatorModel::new(&d)?,
            vec![("all".to_string(), variance_report_dataset(&ds)?)],
        ),
        "group" => {
            let slices = ds
                .groups()
                .iter()
                .map(|g| Ok((g.group_id.clone(), variance_report(g)?)))
                .collect::<Result<Vec<_>>>()?;
            (AnnotatorModel::per_group(&d)?, slices)
        }
        other => {
            return Err(input_error(format!(
                "unknown report scope {other:?}; use dataset or group"
            )))
        }
    };
    report::write_variance_reports(&slices, s.create("variance_report.csv")?)?;

    let grid = if s.grid.is_empty() {
        default_grid()
    } else {
        s.grid.clone()
    };
    let kinds = [AnnotatorKind::Human, AnnotatorKind::PerfectAnnotator];
    let mut curves = Vec::new();
    for &m in &methods {
        for k in kinds {
            curves.push(model.error_curve(&grid, k, m)?);
        }
    }
    report::write_curves(&curves, s.create("curves.csv")?)?;

    let metrics = metric_estimators(&s, &ds, reps.as_ref())?;
    let mut rows = Vec::new();
    for e in &metrics {
        let adjusted = d.adjusted_error(e)?;
        for &m in &methods {
            for k in kinds {
                rows.push(BreakevenRow {
                    metric: e.name().to_string(),
                    adjusted_error: adjusted,
                    estimator_kind: k,
                    method: m,
                    breakeven: model.breakeven(e, k, m, &grid, args.cap)?,
                });
            }
        }
    }
    report::write_breakeven(&rows, s.create("breakeven.csv")?)?;

    let (lo, hi) = (
        *grid.iter().min().unwrap_or(&1) as f64,
        *grid.iter().max().unwrap_or(&1) as f64,
    );
    let mut points = Vec::new();
    for c in &curves {
        let series = format!("{}_{}", c.estimator_kind.name(), c.method.name());
        points.extend(c.points.iter().map(|&(n, e)| (n as f64, e, series.clone())));
    }
    let mut seen = BTreeSet::new();
    for r in &rows {
        if seen.insert(r.metric.clone()) {
            let series = format!("adjusted_{}", r.metric);
            points.push((lo, r.adjusted_error, series.clone()));
            points.push((hi, r.adjusted_error, series));
        }
    }
    report::write_xy(&points, s.create("breakeven_plot.csv")?)?;

    let mut out = std::io::stdout().lock();
    for (name, r) in &slices {
        writeln!(
            out,
            "{name}: sd_h={:.3} sd_within={:.3} sd_p={:.3} r={:.3}",
            r.var_h.sqrt(),
            r.within_var.sqrt(),
            r.var_p.sqrt(),
            r.ratio
        )?;
    }
    for r in &rows {
        let n = r
            .breakeven
            .map_or_else(|| "no breakeven".to_string(), |n| n.to_string());
        writeln!(
            out,
            "{} ({:.3}) {} {}: {n}",
            r.metric,
            r.adjusted_error,
            r.estimator_kind.name(),
            r.method.name()
        )?;
    }
    Ok(())
}

#[derive(Args, Debug, Clone, Default)]
pub struct PowerArgs {
    /// Per-judgment standard deviations; read from the dataset's variance
    /// report when omitted and --data is given.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Vec<f64>,
    /// Effect sizes in score units.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Vec<f64>,
    /// Refine the normal approximation with Student-t quantiles.
    #[arg(long)]
    pub student_t: bool,
}

#[derive(Serialize)]
struct PowerSidecar<'a> {
    meta: &'a metaeval_core::power::PowerTableMeta,
    sigmas: &'a [f64],
    deltas: &'a [f64],
}

pub fn power(common: &Common, args: &PowerArgs) -> Result<()> {
    let s = Settings::resolve(common)?;
    let sigmas = if !args.sigmas.is_empty() {
        args.sigmas.clone()
    } else if let Some(v) = &s.file.sigmas {
        v.clone()
    } else if s.data.is_some() {
        let r = variance_report_dataset(&load(&s)?)?;
        vec![r.var_p.sqrt(), r.var_h.sqrt()]
    } else {
        return Err(input_error("pass --sigmas or --data"));
    };
    let deltas = if !args.deltas.is_empty() {
        args.deltas.clone()
    } else {
        s.file.deltas.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0, 5.0, 10.0])
    };
    let approx = if args.student_t || s.file.student_t.unwrap_or(false) {
        Approximation::StudentT
    } else {
        Approximation::Normal
    };
    let t =
        power_table(&sigmas, &deltas, s.alpha, s.beta, s.sidedness, approx).map_err(|e| input_error(e.to_string()))?;
    report::write_power_table(&t, s.create("power_table.csv")?)?;
    report::write_json(
        &PowerSidecar {
            meta: &t.meta,
            sigmas: &t.sigmas,
            deltas: &t.deltas,
        },
        s.create("power_table.json")?,
    )?;
    let mut out = std::io::stdout().lock();
    write!(out, "{:>10}", "sigma")?;
    for d in &t.deltas {
        write!(out, "{d:>10}")?;
    }
    writeln!(out)?;
    for (sigma, row) in t.sigmas.iter().zip(&t.counts) {
        write!(out, "{sigma:>10.3}")?;
        for c in row {
            write!(out, "{c:>10}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn significance(common: &Common) -> Result<()> {
    let s = Settings::resolve(common)?;
    let ds = load(&s)?;
    let n_trials = s.trials.unwrap_or(DEFAULT_SIGNIFICANCE_TRIALS);
    let d = decomposer(&s, &ds, n_trials, LabelSource::FullData, HumanWeighting::Judgment)?;
    let human_plan = ResamplePlan::new(s.seed()?, n_trials, s.scheme)?;
    let metric_plan = ResamplePlan::new(s.seed()?, n_trials, Scheme::SegmentLevel)?;
    let metrics = metric_estimators(&s, &ds, None)?;
    let mut outcomes = Vec::new();
    let mut out = std::io::stdout().lock();
    writeln!(out, "metric\thh\thm\tmh\tmm\tmetric_sig_when_human_not")?;
    for (i, e) in metrics.iter().enumerate() {
        let c = cooccurrence(&d, e.name(), s.alpha, s.sidedness, &human_plan, &metric_plan)?;
        if i == 0 {
            outcomes.extend(c.outcomes.iter().map(|(h, _)| h.clone()));
        }
        outcomes.extend(c.outcomes.iter().map(|(_, m)| m.clone()));
        report::write_cooccurrence(&c, s.create(&format!("cooccurrence_{}.csv", file_slug(e.name())))?)?;
        let rate = c
            .metric_rate_when_human_insignificant()
            .map_or_else(|| "-".into(), |r| format!("{r:.3}"));
        writeln!(out, "{}\t{}\t{}\t{}\t{}\t{rate}", e.name(), c.hh, c.hm, c.mh, c.mm)?;
    }
    if metrics.is_empty() {
        for i in 0..d.len() {
            outcomes.push(metaeval_core::power::bootstrap_significance(
                &d,
                i,
                &metaeval_core::SignificanceTarget::Human,
                s.alpha,
                s.sidedness,
                &human_plan,
            )?);
        }
    }
    report::write_significance(&outcomes, s.create("significance.csv")?)?;
    Ok(())
}

pub fn convergence(common: &Common) -> Result<()> {
    let s = Settings::resolve(common)?;
    let ds = load(&s)?;
    let n_trials = s.trials.unwrap_or(DEFAULT_TRIALS);
    let d = decomposer(&s, &ds, n_trials, LabelSource::FullData, HumanWeighting::Judgment)?;
    let grid = if s.grid.is_empty() {
        let max = d.contexts().iter().map(|c| c.pair.n_segments).min().unwrap_or(1);
        log_grid(1, max, 20)?
    } else {
        s.grid.clone()
    };
    let mut series = Vec::new();
    for e in metric_estimators(&s, &ds, None)? {
        series.push((e.name().to_string(), d.convergence_curve(&e, &grid)?));
    }
    report::write_convergence(&series, s.create("convergence.csv")?)?;
    let mut out = std::io::stdout().lock();
    for (name, pts) in &series {
        let last = pts.last().map_or(f64::NAN, |p| p.agreement);
        writeln!(
            out,
            "{name}: {} points, agreement at k={} is {last:.3}",
            pts.len(),
            grid.last().unwrap_or(&0)
        )?;
    }
    Ok(())
}

#[derive(Args, Debug, Clone, Default)]
pub struct SynthArgs {
    /// Number of systems with evenly spaced means.
    #[arg(long)]
    pub systems: Option<usize>,
    #[arg(long)]
    pub start: Option<f64>,
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Explicit system means (overrides --systems/--start/--spacing).
    #[arg(long, value_delimiter = ',')]
    pub means: Vec<f64>,
    /// Per-system metric offsets.
    #[arg(long, value_delimiter = ',')]
    pub offsets: Vec<f64>,
    /// Segment-quality standard deviation.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Judgment-noise standard deviation.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long)]
    pub judgments: Option<usize>,
    /// Clip judgments to `min,max`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub clip: Vec<f64>,
    #[arg(long)]
    pub exact_moments: bool,
}

pub fn synth(common: &Common, args: &SynthArgs) -> Result<()> {
    let s = Settings::resolve(common)?;
    let mut cfg = s.file.synth.clone().unwrap_or_default();
    cfg.seed = s.seed()?;
    if !args.means.is_empty() {
        cfg.system_means = args.means.clone();
    } else if args.systems.is_some() || args.start.is_some() || args.spacing.is_some() {
        let n = args.systems.unwrap_or(cfg.n_systems());
        let spaced = GeneratorConfig::spaced(n, args.start.unwrap_or(50.0), args.spacing.unwrap_or(1.0));
        cfg.system_means = spaced.system_means;
    }
    if !args.offsets.is_empty() {
        cfg.metric_offsets = args.offsets.clone();
    }
    if let Some(t) = args.tau {
        cfg.segment_std = t;
    }
    if let Some(e) = args.eta {
        cfg.judgment_std = e;
    }
    if let Some(n) = args.segments {
        cfg.n_segments = n;
    }
    if let Some(j) = args.judgments {
        cfg.judgments_per_segment = j;
    }
    if let [lo, hi] = args.clip[..] {
        cfg.clip = Some([lo, hi]);
    }
    cfg.exact_moments |= args.exact_moments;
    cfg.validate().map_err(|e| input_error(e.to_string()))?;
    let (ds, truth) = generate(&cfg)?;
    let path = s.output("synthetic.jsonl")?;
    metaeval_core::data::write_jsonl(&ds, s.create("synthetic.jsonl")?)?;
    report::write_json(&truth, s.create("ground_truth.json")?)?;
    writeln!(
        std::io::stdout().lock(),
        "{} systems, {} segments, {} judgments per segment; r = {:.3}; wrote {}",
        cfg.n_systems(),
        cfg.n_segments,
        cfg.judgments_per_segment,
        truth.r,
        path.display()
    )?;
    Ok(())
}
