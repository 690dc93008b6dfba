#![allow(dead_code)]

use std::collections::BTreeMap;

use metaeval_core::{ComparisonGroup, Dataset, JudgmentRecord, MetricObservation, Scale, SegmentRecord, SystemRecord};

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF by composite Simpson quadrature of the density.
pub fn phi(x: f64) -> f64 {
    if x > 0.0 {
        return 1.0 - phi(-x);
    }
    let lo = x - 14.0;
    let n = 40_000;
    let h = (x - lo) / n as f64;
    let mut s = pdf(lo) + pdf(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(lo + h * i as f64);
    }
    s * h / 3.0
}

/// Inverse of [`phi`] by bisection.
pub fn phi_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (-12.0, 12.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two systems `A`, `B`; each segment is `(judgments, metric)`.
pub fn two_systems(a: &[(Vec<f64>, f64)], b: &[(Vec<f64>, f64)]) -> Dataset {
    let sys = |id: &str, rows: &[(Vec<f64>, f64)]| {
        let segs = rows
            .iter()
            .enumerate()
            .map(|(i, (js, m))| {
                SegmentRecord::new(
                    format!("s{i}"),
                    js.iter()
                        .map(|&v| JudgmentRecord::single(v, Scale::UNBOUNDED).unwrap())
                        .collect(),
                    BTreeMap::from([("m".to_string(), MetricObservation::Scalar(*m))]),
                )
                .unwrap()
            })
            .collect();
        SystemRecord::new(id, segs).unwrap()
    };
    Dataset::new(vec![ComparisonGroup::new("g", vec![sys("A", a), sys("B", b)]).unwrap()]).unwrap()
}

/// Binomial standard error of a proportion.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
