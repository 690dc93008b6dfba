//! CSV and JSON emitters for the result types.

use std::io::Write;

use serde::Serialize;

use crate::annotator::{AnnotatorKind, AnnotatorVarianceReport, CurveMethod, ErrorCurve};
use crate::decomposition::{CurvePoint, DecompositionResult};
use crate::error::Result;
use crate::power::{Cooccurrence, PowerTable, SignificanceOutcome};

/// Fixed precision for every emitted real.
pub fn fmt(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.6}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Orders rows as Optimal, Human, then the rest by ascending observed error
/// (name breaks ties).
pub fn table1_order(mut rows: Vec<DecompositionResult>) -> Vec<DecompositionResult> {
    let rank = |r: &DecompositionResult| match r.estimator.as_str() {
        "Optimal" => 0,
        "Human" => 1,
        _ => 2,
    };
    rows.sort_by(|a, b| {
        rank(a)
            .cmp(&rank(b))
            .then(a.err_obs.total_cmp(&b.err_obs))
            .then_with(|| a.estimator.cmp(&b.estimator))
    });
    rows
}

pub fn write_table1<W: Write>(rows: &[DecompositionResult], w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record(["estimator", "err_obs", "c0_noise", "bias", "c1_var"])?;
    for r in rows {
        w.write_record([
            r.estimator.clone(),
            fmt(r.err_obs),
            fmt(r.c0_noise),
            fmt(r.bias),
            fmt(r.c1_var),
        ])?;
    }
    finish(w)
}

pub fn write_pairs<W: Write>(rows: &[DecompositionResult], w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record([
        "estimator",
        "group",
        "system_a",
        "system_b",
        "optimal_label",
        "main_prediction",
        "err_obs",
        "noise",
        "bias",
        "variance",
        "c0",
        "c1",
        "c0_noise",
        "c1_var",
    ])?;
    for r in rows {
        for p in &r.pairs {
            w.write_record([
                r.estimator.clone(),
                p.group_id.clone(),
                p.system_a.clone(),
                p.system_b.clone(),
                p.optimal_label.as_i8().to_string(),
                p.main_prediction.as_i8().to_string(),
                fmt(p.err_obs),
                fmt(p.noise),
                p.bias.to_string(),
                fmt(p.variance),
                fmt(p.c0),
                p.c1.to_string(),
                fmt(p.c0_noise),
                fmt(p.c1_var),
            ])?;
        }
    }
    finish(w)
}

pub fn write_curves<W: Write>(curves: &[ErrorCurve], w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record(["estimator_kind", "method", "n", "error"])?;
    for c in curves {
        for &(n, e) in &c.points {
            w.write_record([c.estimator_kind.name(), c.method.name(), &n.to_string(), &fmt(e)])?;
        }
    }
    finish(w)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BreakevenRow {
    pub metric: String,
    pub adjusted_error: f64,
    pub estimator_kind: AnnotatorKind,
    pub method: CurveMethod,
    pub breakeven: Option<usize>,
}

/// `breakeven_n` is `none` when the curve never reaches the metric.
pub fn write_breakeven<W: Write>(rows: &[BreakevenRow], w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record(["metric", "adjusted_error", "estimator_kind", "method", "breakeven_n"])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            fmt(r.adjusted_error),
            r.estimator_kind.name().into(),
            r.method.name().into(),
            r.breakeven.map_or_else(|| "none".into(), |n| n.to_string()),
        ])?;
    }
    finish(w)
}

/// Plot-ready long format.
pub fn write_xy<W: Write>(points: &[(f64, f64, String)], w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record(["x", "y", "series"])?;
    for (x, y, s) in points {
        w.write_record([fmt(*x), fmt(*y), s.clone()])?;
    }
    finish(w)
}

pub fn write_convergence<W: Write>(series: &[(String, Vec<CurvePoint>)], w: W) -> Result<()> {
    let points: Vec<(f64, f64, String)> = series
        .iter()
        .flat_map(|(name, pts)| pts.iter().map(move |p| (p.k as f64, p.agreement, name.clone())))
        .collect();
    write_xy(&points, w)
}

pub fn write_variance_reports<W: Write>(rows: &[(String, AnnotatorVarianceReport)], w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record([
        "slice",
        "sd_h",
        "sd_within",
        "sd_p",
        "ratio",
        "var_h",
        "within_var",
        "var_p",
        "n_judgments",
        "n_repeat_segments",
        "clamped",
    ])?;
    for (name, r) in rows {
        w.write_record([
            name.clone(),
            fmt(r.var_h.sqrt()),
            fmt(r.within_var.sqrt()),
            fmt(r.var_p.sqrt()),
            fmt(r.ratio),
            fmt(r.var_h),
            fmt(r.within_var),
            fmt(r.var_p),
            r.n_judgments.to_string(),
            r.n_repeat_segments.to_string(),
            r.clamped.to_string(),
        ])?;
    }
    finish(w)
}

/// Header row of deltas, first column of sigmas.
pub fn write_power_table<W: Write>(t: &PowerTable, w: W) -> Result<()> {
    let mut w = writer(w);
    let mut header = vec!["sigma".to_string()];
    header.extend(t.deltas.iter().map(|d| fmt(*d)));
    w.write_record(&header)?;
    for (sigma, row) in t.sigmas.iter().zip(&t.counts) {
        let mut rec = vec![fmt(*sigma)];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_cooccurrence<W: Write>(c: &Cooccurrence, w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record(["cell", "count"])?;
    for (cell, n) in [("hh", c.hh), ("hm", c.hm), ("mh", c.mh), ("mm", c.mm)] {
        w.write_record([cell, &n.to_string()])?;
    }
    finish(w)
}

pub fn write_significance<W: Write>(rows: &[SignificanceOutcome], w: W) -> Result<()> {
    let mut w = writer(w);
    w.write_record([
        "estimator",
        "group",
        "system_a",
        "system_b",
        "observed_difference",
        "direction",
        "p_fraction",
        "significant",
        "n_trials",
    ])?;
    for s in rows {
        w.write_record([
            s.estimator.clone(),
            s.group_id.clone(),
            s.system_a.clone(),
            s.system_b.clone(),
            fmt(s.observed_difference),
            s.direction.as_i8().to_string(),
            fmt(s.p_fraction),
            s.significant.to_string(),
            s.n_trials.to_string(),
        ])?;
    }
    finish(w)
}
