//! Acceptance gate: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed; the
//! process exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use metaeval_core::annotator::variance_report_system;
use metaeval_core::data::ingest_with_metrics;
use metaeval_core::power::{bootstrap_significance, cooccurrence, required_sample_size};
use metaeval_core::synth::{enumerate_exact, generate};
use metaeval_core::{
    AnnotatorKind, AnnotatorModel, ComparisonGroup, CurveMethod, Dataset, Decomposer, Estimator, Format,
    GeneratorConfig, JudgmentRecord, MetricObservation, PowerSpec, ResamplePlan, Scale, Scheme, SegmentRecord,
    Sidedness, SignificanceTarget, SystemRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

// Tolerances.
const IDENTITY_EXACT: f64 = 1e-12;
const MC_SE_MULT: f64 = 3.0;
const ORACLE_TERM: f64 = 0.015;
const REPORT_SE_MULT: f64 = 3.0;
const SD_P_TOL: f64 = 0.01;
const RATIO_TOL: f64 = 0.01;
const RATIO_TOL_EXPERT: f64 = 0.005;
const POWER_TOL: u64 = 1;
const POWER_MC_ACCURACY: f64 = 0.88;
const NULL_RATE: f64 = 0.05;
const NULL_RATE_TOL: f64 = 0.02;
const TABLE_TOL_REFERENCE_ROWS: f64 = 0.01;
const TABLE_TOL_METRIC_ROWS: f64 = 0.02;

type Criterion = (&'static str, fn() -> Verdict);

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------
// independent oracles

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF by Simpson quadrature of the density.
fn phi(x: f64) -> f64 {
    if x > 0.0 {
        return 1.0 - phi(-x);
    }
    let lo = x - 14.0;
    let n = 20_000;
    let h = (x - lo) / n as f64;
    let mut s = pdf(lo) + pdf(x);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(lo + h * i as f64);
    }
    s * h / 3.0
}

fn phi_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (-12.0, 12.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

// ---------------------------------------------------------------------------
// 1. identity on enumerable instances

fn random_instance(rng: &mut ChaCha8Rng) -> Dataset {
    let k = rng.random_range(2..=3);
    let sys = |id: &str, rng: &mut ChaCha8Rng| {
        let segs = (0..k)
            .map(|s| {
                let n = rng.random_range(1..=3);
                let js = (0..n)
                    .map(|_| JudgmentRecord::single(f64::from(rng.random_range(1..=5)), Scale::UNBOUNDED).unwrap())
                    .collect();
                let m = f64::from(rng.random_range(0..=4));
                SegmentRecord::new(
                    format!("s{s}"),
                    js,
                    BTreeMap::from([("m".into(), MetricObservation::Scalar(m))]),
                )
                .unwrap()
            })
            .collect();
        SystemRecord::new(id, segs).unwrap()
    };
    let a = sys("A", rng);
    let b = sys("B", rng);
    Dataset::new(vec![ComparisonGroup::new("g", vec![a, b]).unwrap()]).unwrap()
}

fn criterion_identity() -> Verdict {
    const INSTANCES: usize = 60;
    const TRIALS: usize = 100_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let metric = Estimator::Metric("m".into());
    let mut worst_gap = 0.0f64;
    let mut worst_z = 0.0f64;
    let mut compared = 0;
    let mut failures = Vec::new();
    for i in 0..INSTANCES {
        let ds = random_instance(&mut rng);
        let exact = enumerate_exact(&ds, 0, "m").unwrap();
        worst_gap = worst_gap.max(exact.identity_gap());
        if !exact.identity_exact || exact.identity_gap() > IDENTITY_EXACT {
            failures.push(format!("instance {i}: identity gap {:e}", exact.identity_gap()));
        }
        let plan = ResamplePlan::new(1000 + i as u64, TRIALS, Scheme::JudgmentLevel).unwrap();
        let d = Decomposer::new(&ds, plan).unwrap();
        let mc = d.decompose_pair(0, &metric).unwrap();
        if mc.optimal_label != exact.optimal_label
            || mc.main_prediction != exact.main_prediction
            || mc.bias != exact.bias
            || mc.c1 != exact.c1
        {
            failures.push(format!("instance {i}: labels differ"));
        }
        let agree = |c0: f64| 0.5 * (c0 + 1.0);
        for (name, got, want) in [
            ("noise", mc.noise, exact.noise),
            ("variance", mc.variance, exact.variance),
            ("err_obs", mc.err_obs, exact.err_obs),
            ("c0", agree(mc.c0), agree(exact.c0)),
        ] {
            let se = binomial_se(want, TRIALS);
            let diff = (got - want).abs();
            if se > 0.0 {
                worst_z = worst_z.max(diff / se);
                compared += 1;
            }
            if diff > (MC_SE_MULT * se).max(1e-12) {
                failures.push(format!(
                    "instance {i}: {name} {got:.5} vs exact {want:.5} ({:.2} SE)",
                    diff / se
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        failures.push(format!("runtime {}", secs(elapsed)));
    }
    let detail = format!(
        "{INSTANCES} instances, max identity gap {worst_gap:.1e}, max |z| {worst_z:.2} over {compared} stochastic terms, {}",
        secs(elapsed)
    );
    if failures.is_empty() {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!("{detail}; {}", failures.join("; ")))
    }
}

// ---------------------------------------------------------------------------
// 2. bootstrap terms against the gaussian closed forms

fn criterion_synthetic_oracle() -> Verdict {
    let start = Instant::now();
    let mut cfg = GeneratorConfig::spaced(10, 0.0, 0.5);
    cfg.segment_std = 10.0;
    cfg.judgment_std = 10.0;
    cfg.n_segments = 2000;
    cfg.judgments_per_segment = 1;
    cfg.exact_moments = true;
    cfg.seed = 2;
    // two shifted metric qualities so some pairs carry bias
    cfg.metric_offsets = vec![0.0, 0.0, 0.0, 0.8, 0.0, 0.0, -1.3, 0.0, 0.0, 0.0];
    let (ds, truth) = generate(&cfg).unwrap();
    let plan = ResamplePlan::new(3, 10_000, Scheme::JudgmentLevel).unwrap();
    let d = Decomposer::new(&ds, plan).unwrap();
    let res = d.decompose(&Estimator::Metric(cfg.metric_id.clone())).unwrap();

    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut biased = 0;
    for p in &res.pairs {
        let t = truth
            .pairs
            .iter()
            .find(|t| {
                (t.system_a == p.system_a && t.system_b == p.system_b)
                    || (t.system_a == p.system_b && t.system_b == p.system_a)
            })
            .expect("ground truth for every pair");
        // closed forms, independent of the library's own
        let n = cfg.n_segments as f64;
        let (dmu, dm) = (t.delta_mu, t.delta_mu + t.delta_b);
        let noise = phi(-dmu.abs() / (2.0 * 200.0 / n).sqrt());
        let variance = phi(-dm.abs() / (2.0 * 100.0 / n).sqrt());
        let bias = u8::from((dmu >= 0.0) != (dm >= 0.0));
        biased += usize::from(bias);
        for (name, got, want) in [
            ("noise", p.noise, noise),
            ("variance", p.variance, variance),
            ("bias", f64::from(p.bias), f64::from(bias)),
        ] {
            worst = worst.max((got - want).abs());
            if (got - want).abs() > ORACLE_TERM {
                failures.push(format!("{}|{} {name} {got:.4} vs {want:.4}", p.system_a, p.system_b));
            }
        }
    }

    // variance report on independent data with repeat judgments
    let mut rep_cfg = GeneratorConfig::spaced(10, 0.0, 0.5);
    rep_cfg.n_segments = 2000;
    rep_cfg.judgments_per_segment = 2;
    rep_cfg.seed = 4;
    let (rep_ds, _) = generate(&rep_cfg).unwrap();
    let reports: Vec<_> = rep_ds.groups()[0]
        .systems()
        .iter()
        .map(|s| variance_report_system(s).unwrap())
        .collect();
    let k = reports.len() as f64;
    let mean = |f: &dyn Fn(&metaeval_core::AnnotatorVarianceReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let (var_h, within, ratio) = (mean(&|r| r.var_h), mean(&|r| r.within_var), mean(&|r| r.ratio));
    // per-system sampling errors for two correlated judgments per segment
    let m = rep_cfg.n_segments as f64;
    let (s2, e2, p2) = (200.0f64, 100.0f64, 100.0f64);
    let rho = p2 / s2;
    let se_h = (s2 * s2 * (1.0 + rho * rho) / m).sqrt() / k.sqrt();
    let se_w = (2.0 * e2 * e2 / m).sqrt() / k.sqrt();
    let se_r = (e2 / (p2 * p2)) * se_h + (s2 / (p2 * p2)) * se_w;
    for (name, got, want, se) in [
        ("var_h", var_h, 200.0, se_h),
        ("within", within, 100.0, se_w),
        ("r", ratio, 2.0, se_r),
    ] {
        if (got - want).abs() > REPORT_SE_MULT * se {
            failures.push(format!("{name} {got:.3} vs {want} (se {se:.3})"));
        }
    }
    let detail = format!(
        "{} pairs ({biased} biased), max term error {worst:.4}; var_h {var_h:.2}, within {within:.2}, r {ratio:.3}; {}",
        res.pairs.len(),
        secs(start.elapsed())
    );
    if failures.is_empty() {
        verdict(biased > 0, detail)
    } else {
        Verdict::Fail(format!("{detail}; {}", failures.join("; ")))
    }
}

// ---------------------------------------------------------------------------
// 3. efficiency ratio from summary statistics

/// One system of `m` segments, two judgments each, whose pooled within-segment
/// variance is `sd_within^2` and whose total sample variance is `sd_h^2`.
fn constructed_system(sd_h: f64, sd_within: f64, centre: f64, m: usize, scale: Scale) -> SystemRecord {
    let d = sd_within / 2f64.sqrt();
    let total = 2.0 * m as f64;
    let a = (((total - 1.0) * sd_h * sd_h - total * d * d) / total).sqrt();
    let segs = (0..m)
        .map(|i| {
            let q = if i % 2 == 0 { centre + a } else { centre - a };
            let js = [q + d, q - d]
                .into_iter()
                .map(|v| JudgmentRecord::single(v, scale).unwrap())
                .collect();
            SegmentRecord::new(format!("seg{i}"), js, BTreeMap::new()).unwrap()
        })
        .collect();
    SystemRecord::new("constructed", segs).unwrap()
}

fn criterion_efficiency_ratio() -> Verdict {
    let crowd = variance_report_system(&constructed_system(
        28.81,
        21.42,
        50.0,
        1000,
        Scale::new(0.0, 100.0).unwrap(),
    ))
    .unwrap();
    let expert = variance_report_system(&constructed_system(
        0.717,
        0.293,
        3.0,
        1000,
        Scale::new(1.0, 5.0).unwrap(),
    ))
    .unwrap();
    let sd_p = crowd.var_p.sqrt();
    let ok = (sd_p - 19.27).abs() <= SD_P_TOL
        && (crowd.ratio - 2.24).abs() <= RATIO_TOL
        && (expert.ratio - 1.201).abs() <= RATIO_TOL_EXPERT;
    verdict(
        ok,
        format!(
            "crowd sd_h {:.3}, sd_within {:.3}, sd_p {sd_p:.4}, r {:.4}; expert r {:.4}",
            crowd.var_h.sqrt(),
            crowd.within_var.sqrt(),
            crowd.ratio,
            expert.ratio
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. sample size formula

/// Smallest n whose one-sided z-test power reaches `beta`, by direct search
/// over the power function.
fn power_search(sigma: f64, delta: f64, alpha: f64, beta: f64) -> u64 {
    let z = phi_inv(1.0 - alpha);
    let power = |n: u64| phi(delta / (sigma * (2.0 / n as f64).sqrt()) - z);
    let mut hi = 1u64;
    while power(hi) < beta {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if power(mid) >= beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Fraction of simulated paired studies whose one-sided test fires in the
/// correct direction.
fn simulated_accuracy(n: u64, sigma: f64, delta: f64, alpha: f64, sims: usize) -> f64 {
    let crit = phi_inv(1.0 - alpha) * sigma * (2.0 / n as f64).sqrt();
    let hits: usize = (0..sims)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(90_000 + i as u64);
            let mut diff = 0.0;
            for _ in 0..n {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                diff += delta + sigma * (a - b);
            }
            usize::from(diff / n as f64 > crit)
        })
        .sum();
    hits as f64 / sims as f64
}

fn criterion_power() -> Verdict {
    let (sigma, delta, alpha, beta) = (19.27, 1.0, 0.05, 0.95);
    let spec = PowerSpec::new(alpha, beta, Sidedness::One, sigma, delta).unwrap();
    let n = required_sample_size(&spec).unwrap();
    let oracle = power_search(sigma, delta, alpha, beta);
    let accuracy = simulated_accuracy(n, sigma, delta, alpha, 10_000);
    let ok = n.abs_diff(oracle) <= POWER_TOL && 2 * n > 10_000 && accuracy >= POWER_MC_ACCURACY;
    verdict(
        ok,
        format!(
            "n {n} per system vs search {oracle}, total {}, simulated accuracy {accuracy:.4}",
            2 * n
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. null calibration

fn criterion_null_calibration() -> Verdict {
    const REPS: usize = 500;
    let start = Instant::now();
    let runs: Vec<[bool; 3]> = (0..REPS)
        .into_par_iter()
        .map(|rep| {
            let cfg = GeneratorConfig {
                system_means: vec![50.0, 50.0],
                n_segments: 200,
                seed: 500 + rep as u64,
                ..Default::default()
            };
            let (ds, _) = generate(&cfg).unwrap();
            let plan = ResamplePlan::new(rep as u64, 1000, Scheme::JudgmentLevel).unwrap();
            let metric_plan = plan.with_scheme(Scheme::SegmentLevel);
            let d = Decomposer::new(&ds, plan).unwrap();
            let fires = |target: &SignificanceTarget, sided: Sidedness, plan: &ResamplePlan| {
                bootstrap_significance(&d, 0, target, 0.05, sided, plan)
                    .unwrap()
                    .significant
            };
            let metric = SignificanceTarget::Metric(cfg.metric_id.clone());
            [
                fires(&SignificanceTarget::Human, Sidedness::Two, &plan),
                fires(&SignificanceTarget::Human, Sidedness::One, &plan),
                fires(&metric, Sidedness::Two, &metric_plan),
            ]
        })
        .collect();
    let rate = |j: usize| runs.iter().filter(|r| r[j]).count() as f64 / REPS as f64;
    let (two, one, metric) = (rate(0), rate(1), rate(2));
    verdict(
        (two - NULL_RATE).abs() <= NULL_RATE_TOL,
        format!(
            "two-sided human rate {two:.3} over {REPS} reps (metric {metric:.3}; one-sided in the observed direction {one:.3}); {}",
            secs(start.elapsed())
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. byte-identical CLI outputs

fn metaeval(workers: usize, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_metaeval"))
        .args(args)
        .env("METAEVAL_WORKERS", workers.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

/// Output files plus stdout, with the run-specific output directory masked.
fn snapshot(dir: &Path, stdout: Vec<u8>) -> BTreeMap<String, Vec<u8>> {
    let stdout = String::from_utf8_lossy(&stdout).replace(dir.to_str().unwrap(), "<out>");
    let mut files = BTreeMap::from([("<stdout>".to_string(), stdout.into_bytes())]);
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            files.insert(
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            );
        }
    }
    files
}

fn criterion_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = root.join("w1-synth").join("synthetic.jsonl");
    let data = data.to_str().unwrap().to_string();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        (
            "synth",
            vec![
                "synth",
                "--seed",
                "7",
                "--systems",
                "4",
                "--segments",
                "60",
                "--judgments",
                "2",
                "--offsets",
                "0,0,1.5,0",
            ],
        ),
        ("validate", vec!["validate", "--data", &data]),
        (
            "decompose",
            vec!["decompose", "--data", &data, "--seed", "7", "--trials", "400"],
        ),
        (
            "breakeven",
            vec![
                "breakeven",
                "--data",
                &data,
                "--seed",
                "7",
                "--trials",
                "200",
                "--grid",
                "10,40,160",
            ],
        ),
        ("power", vec!["power", "--data", &data, "--seed", "7"]),
        (
            "significance",
            vec!["significance", "--data", &data, "--seed", "7", "--trials", "400"],
        ),
        (
            "convergence",
            vec!["convergence", "--data", &data, "--seed", "7", "--trials", "200"],
        ),
    ];
    let mut checked = Vec::new();
    for (name, args) in &commands {
        let mut reference: Option<BTreeMap<String, Vec<u8>>> = None;
        for workers in [1, 2, 4] {
            let out = root.join(format!("w{workers}-{name}"));
            let mut full = args.clone();
            let out_str = out.to_str().unwrap().to_string();
            full.extend(["--out", &out_str]);
            let stdout = match metaeval(workers, &full) {
                Ok(s) => s,
                Err(e) => return Verdict::Fail(e),
            };
            let snap = snapshot(&out, stdout);
            match &reference {
                None => reference = Some(snap),
                Some(r) if *r != snap => {
                    return Verdict::Fail(format!("{name}: outputs differ between 1 and {workers} workers"))
                }
                Some(_) => {}
            }
        }
        checked.push(format!("{name} ({} files)", reference.map_or(0, |r| r.len() - 1)));
    }
    Verdict::Pass(format!("workers 1/2/4 identical: {}", checked.join(", ")))
}

// ---------------------------------------------------------------------------
// 7. reproduction on exported evaluation data

/// Published decomposition rows: err_obs, c0_noise, bias, c1_var.
const WMT_ROWS: &[(&str, [f64; 4])] = &[
    ("optimal", [0.047, 0.000, 0.000, 0.047]),
    ("human", [0.065, 0.019, 0.000, 0.047]),
    ("bertscore", [0.102, 0.003, 0.086, 0.013]),
    ("chrf", [0.124, 0.010, 0.105, 0.009]),
    ("bleurt", [0.128, 0.005, 0.108, 0.016]),
    ("bleu", [0.141, 0.008, 0.127, 0.007]),
    ("ter", [0.184, 0.002, 0.173, 0.009]),
];

const SUMMEVAL_ROWS: &[(&str, [f64; 4])] = &[
    ("optimal", [0.045, 0.000, 0.000, 0.045]),
    ("human", [0.067, 0.022, 0.000, 0.046]),
    ("rouge", [0.296, -0.006, 0.294, 0.008]),
    ("meteor", [0.296, 0.004, 0.287, 0.005]),
    ("rougewe", [0.317, 0.007, 0.301, 0.008]),
    ("bertscore", [0.330, -0.004, 0.338, -0.004]),
    ("supert", [0.390, 0.000, 0.382, 0.008]),
];

fn normalize(id: &str) -> String {
    id.chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

fn load_export(var: &str) -> Option<Result<Dataset, String>> {
    let path = PathBuf::from(std::env::var_os(var)?);
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Format::Csv,
        _ => Format::Jsonl,
    };
    let metrics = std::env::var_os(format!("{var}_METRICS")).map(PathBuf::from);
    Some(ingest_with_metrics(&path, format, metrics.as_deref()).map_err(|e| format!("{var}: {e}")))
}

fn compare_table(d: &Decomposer, rows: &[(&str, [f64; 4])], label: &str, failures: &mut Vec<String>) -> usize {
    let ids = d.dataset().metric_ids();
    let mut compared = 0;
    for (name, want) in rows {
        let (estimator, tol) = match *name {
            "optimal" => (Estimator::Optimal, TABLE_TOL_REFERENCE_ROWS),
            "human" => (Estimator::Human, TABLE_TOL_REFERENCE_ROWS),
            _ => match ids.iter().find(|id| normalize(id) == *name) {
                Some(id) => (Estimator::Metric(id.clone()), TABLE_TOL_METRIC_ROWS),
                None => continue,
            },
        };
        let r = match d.decompose(&estimator) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("{label} {name}: {e}"));
                continue;
            }
        };
        let mut got = [r.err_obs, r.c0_noise, r.bias, r.c1_var];
        let mut want = *want;
        if *name == "optimal" {
            // the published layout files the optimal row's error under the
            // variance column; compare the noise and variance cells as a sum
            got = [got[0], 0.0, got[2], got[1] + got[3]];
            want = [want[0], 0.0, want[2], want[1] + want[3]];
        }
        for (col, (g, w)) in ["err_obs", "c0_noise", "bias", "c1_var"]
            .iter()
            .zip(got.iter().zip(want))
        {
            if (g - w).abs() > tol {
                failures.push(format!("{label} {name} {col} {g:.3} vs {w:.3}"));
            }
        }
        compared += 1;
    }
    compared
}

fn criterion_reproduction() -> Verdict {
    let wmt = load_export("METAEVAL_WMT_DATA");
    let summeval = load_export("METAEVAL_SUMMEVAL_DATA");
    if wmt.is_none() && summeval.is_none() {
        return Verdict::Skip("set METAEVAL_WMT_DATA and/or METAEVAL_SUMMEVAL_DATA to exported datasets".into());
    }
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let plan = ResamplePlan::new(1, 10_000, Scheme::JudgmentLevel).unwrap();
    if let Some(ds) = wmt {
        let ds = match ds {
            Ok(ds) => ds,
            Err(e) => return Verdict::Fail(e),
        };
        let d = Decomposer::new(&ds, plan).unwrap();
        let start = Instant::now();
        let rows = compare_table(&d, WMT_ROWS, "wmt", &mut failures);
        let elapsed = start.elapsed();
        notes.push(format!("wmt: {} pairs, {rows} rows in {}", d.len(), secs(elapsed)));
        if elapsed > Duration::from_secs(30 * 60) {
            failures.push(format!("wmt decomposition took {}", secs(elapsed)));
        }
        if let Some(id) = ds.metric_ids().into_iter().find(|id| normalize(id) == "bertscore") {
            let metric = Estimator::Metric(id.clone());
            let model = AnnotatorModel::new(&d).unwrap();
            let grid = metaeval_core::annotator::default_grid();
            match model.breakeven(&metric, AnnotatorKind::Human, CurveMethod::Analytic, &grid, 10_000_000) {
                Ok(Some(n)) if (400..=800).contains(&n) => notes.push(format!("bertscore breakeven {n}")),
                Ok(other) => failures.push(format!("bertscore breakeven {other:?} outside [400, 800]")),
                Err(e) => failures.push(format!("bertscore breakeven: {e}")),
            }
            let sig_plan = ResamplePlan::new(1, 1000, Scheme::JudgmentLevel).unwrap();
            let metric_plan = sig_plan.with_scheme(Scheme::SegmentLevel);
            match cooccurrence(&d, &id, 0.05, Sidedness::One, &sig_plan, &metric_plan) {
                Ok(c) => match c.metric_rate_when_human_insignificant() {
                    Some(rate) if rate > 0.5 => notes.push(format!("bertscore significant on {rate:.3}")),
                    other => failures.push(format!("bertscore rate {other:?} not above 0.5")),
                },
                Err(e) => failures.push(format!("cooccurrence: {e}")),
            }
        }
    }
    if let Some(ds) = summeval {
        let ds = match ds {
            Ok(ds) => ds,
            Err(e) => return Verdict::Fail(e),
        };
        let d = Decomposer::new(&ds, plan).unwrap();
        let rows = compare_table(&d, SUMMEVAL_ROWS, "summeval", &mut failures);
        notes.push(format!("summeval: {} pairs, {rows} rows", d.len()));
    }
    let detail = notes.join("; ");
    if failures.is_empty() {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!("{detail}; {}", failures.join("; ")))
    }
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 decomposition identity", criterion_identity),
        ("2 synthetic oracle agreement", criterion_synthetic_oracle),
        ("3 efficiency ratio arithmetic", criterion_efficiency_ratio),
        ("4 sample size formula", criterion_power),
        ("5 null calibration", criterion_null_calibration),
        ("6 determinism", criterion_determinism),
        ("7 reproduction on exported data", criterion_reproduction),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let (tag, detail) = match run() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("acceptance {name}: {tag} ({detail})");
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
