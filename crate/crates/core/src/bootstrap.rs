//! Deterministic resampling engine.
//!
//! Every trial owns a ChaCha8 stream keyed by `(seed, lane)` with the trial
//! index as stream id, so replicate `t` depends only on `(seed, lane, t)`.
//! Trials can therefore run on any number of workers in any order and still
//! produce bitwise-identical replicate sets.

use std::collections::{BTreeSet, HashMap};
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PairwiseExample, SystemRecord};
use crate::error::{Error, Result};
use crate::estimators::{HumanPool, JudgmentIndex, MetricColumn};

pub type TrialRng = ChaCha8Rng;

/// Trials used for expectation estimates unless configured otherwise.
pub const DEFAULT_TRIALS: usize = 10_000;
/// Trials used by significance tests unless configured otherwise.
pub const DEFAULT_SIGNIFICANCE_TRIALS: usize = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Judgments drawn i.i.d. with replacement from all of a system's judgments.
    JudgmentLevel,
    /// Shared source segments drawn i.i.d. with replacement, paired across systems.
    SegmentLevel,
    /// Paired segments, then one judgment per chosen segment.
    Joint,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "judgment_level" | "judgment" => Ok(Scheme::JudgmentLevel),
            "segment_level" | "segment" => Ok(Scheme::SegmentLevel),
            "joint" => Ok(Scheme::Joint),
            other => Err(Error::Parameter(format!("unknown resampling scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub seed: u64,
    pub n_trials: usize,
    pub scheme: Scheme,
    pub subsample_size: Option<usize>,
}

impl ResamplePlan {
    pub fn new(seed: u64, n_trials: usize, scheme: Scheme) -> Result<Self> {
        if n_trials == 0 {
            return Err(Error::Parameter("n_trials must be at least 1".into()));
        }
        Ok(ResamplePlan {
            seed,
            n_trials,
            scheme,
            subsample_size: None,
        })
    }

    pub fn with_subsample(mut self, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Parameter("subsample size must be at least 1".into()));
        }
        self.subsample_size = Some(size);
        Ok(self)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateSet {
    pub values: Vec<f64>,
    pub plan: ResamplePlan,
}

impl ReplicateSet {
    pub fn mean(&self) -> f64 {
        crate::numeric::mean(self.values.iter().copied()).unwrap_or(f64::NAN)
    }

    /// Population standard deviation of the replicates.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        let ss = crate::numeric::compensated_sum(self.values.iter().map(|v| (v - m) * (v - m)));
        (ss / self.values.len() as f64).sqrt()
    }
}

/// Names an independent family of substreams, e.g. "human labels for pair 17".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lane(u64);

impl Lane {
    pub fn new(parts: &[u64]) -> Lane {
        let mut h = 0x6a09_e667_f3bc_c908_u64;
        for &p in parts {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        Lane(h)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The generator for trial `trial` of `lane` under `seed`.
pub fn trial_rng(seed: u64, lane: Lane, trial: u64) -> TrialRng {
    let mut key = [0u8; 32];
    let mut state = seed ^ lane.0.rotate_left(17);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state ^ lane.0);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}

/// Runs `n_trials` independent trials, each on its own substream, and returns
/// their results in trial order. Errors report the lowest failing trial.
pub fn run_trials<T, F>(seed: u64, lane: Lane, n_trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut TrialRng) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, lane, t);
            f(t, &mut rng).map_err(|e| Error::Trial {
                trial: t,
                source: Box::new(e),
            })
        })
        .collect();
    results.into_iter().collect()
}

/// Evaluates `statistic` once per trial of `plan`.
pub fn run_replicates<F>(plan: &ResamplePlan, lane: Lane, statistic: F) -> Result<ReplicateSet>
where
    F: Fn(&mut TrialRng) -> Result<f64> + Sync,
{
    let values = run_trials(plan.seed, lane, plan.n_trials, |_, rng| statistic(rng))?;
    Ok(ReplicateSet { values, plan: *plan })
}

/// `size` uniform draws from `0..n`, appended to `out`.
pub fn draw_indices(rng: &mut TrialRng, n: usize, size: usize, out: &mut Vec<usize>) {
    out.clear();
    out.extend((0..size).map(|_| rng.random_range(0..n)));
}

/// Draws judgment positions i.i.d. with replacement, uniform over every
/// judgment of the system. `size` defaults to the total judgment count.
pub fn resample_judgments(sys: &SystemRecord, rng: &mut TrialRng, size: Option<usize>) -> Result<Vec<JudgmentIndex>> {
    let all = crate::estimators::all_judgments(sys);
    if all.is_empty() {
        return Err(Error::NoJudgments {
            system: sys.system_id.clone(),
        });
    }
    let size = size.unwrap_or(all.len());
    Ok((0..size).map(|_| all[rng.random_range(0..all.len())]).collect())
}

/// Draws indices into the pair's shared segments i.i.d. with replacement.
/// Both systems are scored on the returned multiset.
pub fn resample_segments_paired(pair: &PairwiseExample, rng: &mut TrialRng, size: Option<usize>) -> Result<Vec<usize>> {
    if pair.n_segments == 0 {
        return Err(Error::EmptySelection(format!(
            "pair {} has no shared segments",
            pair.label()
        )));
    }
    let mut out = Vec::new();
    draw_indices(rng, pair.n_segments, size.unwrap_or(pair.n_segments), &mut out);
    Ok(out)
}

/// Reusable buffers for the per-trial hot loops.
#[derive(Default)]
pub struct Scratch {
    idx: Vec<usize>,
    eligible: Vec<usize>,
}

fn mean_at(values: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
}

/// One resampled human mean difference `mean_a - mean_b` for a pair.
///
/// `JudgmentLevel` resamples each system's judgments independently (system A
/// first, then B, from the same stream). `Joint` draws paired segments that
/// carry judgments in both systems, then one judgment per segment and system.
/// `SegmentLevel` draws paired segments and averages all of their judgments.
pub fn human_difference(
    a: &HumanPool,
    b: &HumanPool,
    scheme: Scheme,
    size: Option<usize>,
    rng: &mut TrialRng,
    scratch: &mut Scratch,
) -> Result<f64> {
    for p in [a, b] {
        if p.is_empty() {
            return Err(Error::NoJudgments {
                system: p.system_id.clone(),
            });
        }
    }
    match scheme {
        Scheme::JudgmentLevel => {
            draw_indices(rng, a.len(), size.unwrap_or(a.len()), &mut scratch.idx);
            let ma = mean_at(a.values(), &scratch.idx);
            draw_indices(rng, b.len(), size.unwrap_or(b.len()), &mut scratch.idx);
            let mb = mean_at(b.values(), &scratch.idx);
            Ok(ma - mb)
        }
        Scheme::Joint => {
            scratch.eligible.clear();
            scratch.eligible.extend(
                (0..a.n_segments()).filter(|&s| !a.segment_values(s).is_empty() && !b.segment_values(s).is_empty()),
            );
            if scratch.eligible.is_empty() {
                return Err(Error::EmptySelection(
                    "no shared segment carries judgments for both systems".into(),
                ));
            }
            let k = size.unwrap_or(scratch.eligible.len());
            let (mut sa, mut sb) = (0.0, 0.0);
            for _ in 0..k {
                let s = scratch.eligible[rng.random_range(0..scratch.eligible.len())];
                let va = a.segment_values(s);
                let vb = b.segment_values(s);
                sa += va[rng.random_range(0..va.len())];
                sb += vb[rng.random_range(0..vb.len())];
            }
            Ok((sa - sb) / k as f64)
        }
        Scheme::SegmentLevel => {
            let n = a.n_segments();
            draw_indices(rng, n, size.unwrap_or(n), &mut scratch.idx);
            let mean = |p: &HumanPool| -> Result<f64> {
                let (mut s, mut c) = (0.0, 0usize);
                for &i in &scratch.idx {
                    let v = p.segment_values(i);
                    s += v.iter().sum::<f64>();
                    c += v.len();
                }
                if c == 0 {
                    return Err(Error::EmptySelection(format!(
                        "resampled segments carry no judgments for {:?}",
                        p.system_id
                    )));
                }
                Ok(s / c as f64)
            };
            Ok(mean(a)? - mean(b)?)
        }
    }
}

/// One resampled metric difference on a paired segment multiset.
pub fn metric_difference(
    a: &MetricColumn,
    b: &MetricColumn,
    size: Option<usize>,
    rng: &mut TrialRng,
    scratch: &mut Scratch,
) -> Result<f64> {
    let n = a.len();
    if n == 0 {
        return Err(Error::EmptySelection("no shared segments".into()));
    }
    draw_indices(rng, n, size.unwrap_or(n), &mut scratch.idx);
    Ok(a.score(&scratch.idx)? - b.score(&scratch.idx)?)
}

/// Precomputed per-trial system scores for metrics whose aggregation cannot
/// be expressed per segment. Read from CSV with columns
/// `trial,group,system,metric_id,score`; trials must cover `0..n` for every
/// (group, system, metric) with the same `n`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InjectedReplicates {
    scores: HashMap<(String, String, String), Vec<f64>>,
    n_trials: usize,
}

#[derive(Deserialize)]
struct ReplicateRow {
    trial: usize,
    group: String,
    system: String,
    metric_id: String,
    score: f64,
}

impl InjectedReplicates {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut raw: HashMap<(String, String, String), Vec<(usize, f64)>> = HashMap::new();
        for row in rdr.deserialize() {
            let row: ReplicateRow = row?;
            if !row.score.is_finite() {
                return Err(Error::Replicates(format!("non-finite score at trial {}", row.trial)));
            }
            raw.entry((row.group, row.system, row.metric_id))
                .or_default()
                .push((row.trial, row.score));
        }
        let mut scores = HashMap::with_capacity(raw.len());
        let mut n_trials = None;
        for (key, mut rows) in raw {
            rows.sort_by_key(|r| r.0);
            if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
                return Err(Error::Replicates(format!(
                    "trials for {key:?} must be exactly 0..n without gaps or duplicates"
                )));
            }
            match n_trials {
                None => n_trials = Some(rows.len()),
                Some(n) if n != rows.len() => {
                    return Err(Error::Replicates(format!(
                        "{key:?} has {} trials, expected {n}",
                        rows.len()
                    )))
                }
                _ => {}
            }
            scores.insert(key, rows.into_iter().map(|r| r.1).collect());
        }
        Ok(InjectedReplicates {
            scores,
            n_trials: n_trials.unwrap_or(0),
        })
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn get(&self, group: &str, system: &str, metric_id: &str) -> Option<&[f64]> {
        self.scores
            .get(&(group.to_string(), system.to_string(), metric_id.to_string()))
            .map(Vec::as_slice)
    }

    pub fn metric_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&String> = self.scores.keys().map(|k| &k.2).collect();
        ids.into_iter().cloned().collect()
    }

    pub fn insert(&mut self, group: &str, system: &str, metric_id: &str, scores: Vec<f64>) -> Result<()> {
        if self.scores.is_empty() {
            self.n_trials = scores.len();
        } else if scores.len() != self.n_trials {
            return Err(Error::Replicates(format!(
                "expected {} trials, got {}",
                self.n_trials,
                scores.len()
            )));
        }
        self.scores
            .insert((group.to_string(), system.to_string(), metric_id.to_string()), scores);
        Ok(())
    }
}
