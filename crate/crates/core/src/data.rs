//! Evaluation data: human judgments and metric scores per segment, grouped by
//! system and comparison group, plus JSONL/CSV ingestion and pair construction.
//!
//! A comparison group is a set of systems that translated (or summarized) the
//! same source inputs. Only segments present in every system of a group take
//! part in pairwise comparisons; those are the group's shared segments.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Category name used for uncategorized judgments.
pub const DEFAULT_CATEGORY: &str = "score";

/// Declared judgment scale. Every judgment value must lie inside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

impl Scale {
    pub const UNBOUNDED: Scale = Scale {
        min: f64::MIN,
        max: f64::MAX,
    };

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(Error::Parameter(format!("invalid scale [{min}, {max}]")));
        }
        Ok(Scale { min, max })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JudgmentRecord {
    pub annotator_id: Option<String>,
    pub values: BTreeMap<String, f64>,
    pub scale: Scale,
}

impl JudgmentRecord {
    pub fn new(annotator_id: Option<String>, values: BTreeMap<String, f64>, scale: Scale) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("judgment has no category values".into()));
        }
        for &v in values.values() {
            if !v.is_finite() || !scale.contains(v) {
                return Err(Error::ScaleViolation {
                    line: 0,
                    value: v,
                    min: scale.min,
                    max: scale.max,
                });
            }
        }
        Ok(JudgmentRecord {
            annotator_id,
            values,
            scale,
        })
    }

    /// Single-category judgment under [`DEFAULT_CATEGORY`].
    pub fn single(value: f64, scale: Scale) -> Result<Self> {
        Self::new(None, BTreeMap::from([(DEFAULT_CATEGORY.to_string(), value)]), scale)
    }

    pub fn aggregate(&self) -> f64 {
        aggregate_categories(self)
    }
}

/// Unweighted mean over a judgment's category values.
pub fn aggregate_categories(j: &JudgmentRecord) -> f64 {
    numeric::mean(j.values.values().copied()).expect("judgment values are non-empty")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Scalar,
    Statistics,
}

/// Per-segment metric input: either a scalar score (mean-aggregated metrics)
/// or a vector of numerator/denominator statistics (ratio-of-sums metrics).
#[derive(Clone, Debug, PartialEq)]
pub enum MetricObservation {
    Scalar(f64),
    Statistics { num: Vec<f64>, den: Vec<f64> },
}

impl MetricObservation {
    pub fn statistics(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || num.len() != den.len() {
            return Err(Error::Invalid(format!(
                "statistics vectors must have equal non-zero length (got {} and {})",
                num.len(),
                den.len()
            )));
        }
        if num.iter().chain(&den).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite metric statistic".into()));
        }
        Ok(MetricObservation::Statistics { num, den })
    }

    pub fn kind(&self) -> MetricKind {
        match self {
            MetricObservation::Scalar(_) => MetricKind::Scalar,
            MetricObservation::Statistics { .. } => MetricKind::Statistics,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRecord {
    pub segment_id: String,
    pub judgments: Vec<JudgmentRecord>,
    pub metric_scores: BTreeMap<String, MetricObservation>,
}

impl SegmentRecord {
    pub fn new(
        segment_id: impl Into<String>,
        judgments: Vec<JudgmentRecord>,
        metric_scores: BTreeMap<String, MetricObservation>,
    ) -> Result<Self> {
        let segment_id = segment_id.into();
        if judgments.is_empty() && metric_scores.is_empty() {
            return Err(Error::Invalid(format!(
                "segment {segment_id:?} has neither judgments nor metric scores"
            )));
        }
        Ok(SegmentRecord {
            segment_id,
            judgments,
            metric_scores,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemRecord {
    pub system_id: String,
    segments: Vec<SegmentRecord>,
    index: HashMap<String, usize>,
}

impl SystemRecord {
    pub fn new(system_id: impl Into<String>, segments: Vec<SegmentRecord>) -> Result<Self> {
        let system_id = system_id.into();
        let mut index = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            if index.insert(s.segment_id.clone(), i).is_some() {
                return Err(Error::Invalid(format!(
                    "segment {:?} appears twice in system {system_id:?}",
                    s.segment_id
                )));
            }
        }
        Ok(SystemRecord {
            system_id,
            segments,
            index,
        })
    }

    pub fn segments(&self) -> &[SegmentRecord] {
        &self.segments
    }

    pub fn position(&self, segment_id: &str) -> Option<usize> {
        self.index.get(segment_id).copied()
    }

    pub fn segment(&self, segment_id: &str) -> Option<&SegmentRecord> {
        self.position(segment_id).map(|i| &self.segments[i])
    }

    pub fn judgment_count(&self) -> usize {
        self.segments.iter().map(|s| s.judgments.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonGroup {
    pub group_id: String,
    systems: Vec<SystemRecord>,
    shared_segment_ids: Vec<String>,
    /// Positions of each shared segment inside each system, `[system][shared]`.
    aligned: Vec<Vec<usize>>,
    dropped_segments: usize,
}

impl ComparisonGroup {
    /// Builds a group, sorting systems by id and computing the shared
    /// segments. Segments missing from any system are dropped from the shared
    /// set and counted in [`ComparisonGroup::dropped_segments`].
    pub fn new(group_id: impl Into<String>, mut systems: Vec<SystemRecord>) -> Result<Self> {
        let group_id = group_id.into();
        systems.sort_by(|a, b| a.system_id.cmp(&b.system_id));
        if let Some(w) = systems.windows(2).find(|w| w[0].system_id == w[1].system_id) {
            return Err(Error::Invalid(format!(
                "system {:?} appears twice in group {group_id:?}",
                w[0].system_id
            )));
        }
        let Some(first) = systems.first() else {
            return Err(Error::Invalid(format!("group {group_id:?} has no systems")));
        };
        let shared_segment_ids: Vec<String> = first
            .segments
            .iter()
            .map(|s| &s.segment_id)
            .filter(|id| systems.iter().all(|sys| sys.position(id).is_some()))
            .cloned()
            .collect();
        let all_ids: HashSet<&str> = systems
            .iter()
            .flat_map(|s| s.segments.iter().map(|x| x.segment_id.as_str()))
            .collect();
        let dropped_segments = all_ids.len() - shared_segment_ids.len();
        if shared_segment_ids.len() < 2 {
            return Err(Error::Invalid(format!(
                "group {group_id:?} has {} shared segment(s); at least 2 are required",
                shared_segment_ids.len()
            )));
        }
        let aligned = systems
            .iter()
            .map(|sys| {
                shared_segment_ids
                    .iter()
                    .map(|id| sys.position(id).expect("shared"))
                    .collect()
            })
            .collect();
        Ok(ComparisonGroup {
            group_id,
            systems,
            shared_segment_ids,
            aligned,
            dropped_segments,
        })
    }

    pub fn systems(&self) -> &[SystemRecord] {
        &self.systems
    }

    pub fn system(&self, system_id: &str) -> Option<&SystemRecord> {
        self.system_index(system_id).map(|i| &self.systems[i])
    }

    pub fn system_index(&self, system_id: &str) -> Option<usize> {
        self.systems
            .binary_search_by(|s| s.system_id.as_str().cmp(system_id))
            .ok()
    }

    pub fn shared_segment_ids(&self) -> &[String] {
        &self.shared_segment_ids
    }

    /// Positions of the shared segments inside system `system_index`, in
    /// shared-segment order.
    pub fn aligned_positions(&self, system_index: usize) -> &[usize] {
        &self.aligned[system_index]
    }

    pub fn dropped_segments(&self) -> usize {
        self.dropped_segments
    }
}

/// An unordered pair of systems within a group, stored with `system_a`
/// lexicographically first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PairwiseExample {
    pub group_id: String,
    pub system_a: String,
    pub system_b: String,
    pub n_segments: usize,
    /// Position of the group in its dataset, when built through [`Dataset::pairs`].
    pub group_index: usize,
    pub index_a: usize,
    pub index_b: usize,
}

impl PairwiseExample {
    pub fn label(&self) -> String {
        format!("{}:{}|{}", self.group_id, self.system_a, self.system_b)
    }
}

/// All `C(k, 2)` pairs of a group in canonical order.
pub fn build_pairs(g: &ComparisonGroup) -> Result<Vec<PairwiseExample>> {
    build_pairs_indexed(g, 0)
}

fn build_pairs_indexed(g: &ComparisonGroup, group_index: usize) -> Result<Vec<PairwiseExample>> {
    let k = g.systems.len();
    if k < 2 {
        return Err(Error::TooFewSystems {
            group: g.group_id.clone(),
            count: k,
        });
    }
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            out.push(PairwiseExample {
                group_id: g.group_id.clone(),
                system_a: g.systems[a].system_id.clone(),
                system_b: g.systems[b].system_id.clone(),
                n_segments: g.shared_segment_ids.len(),
                group_index,
                index_a: a,
                index_b: b,
            });
        }
    }
    Ok(out)
}

/// A validated collection of comparison groups, sorted by group id.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    groups: Vec<ComparisonGroup>,
}

impl Dataset {
    pub fn new(mut groups: Vec<ComparisonGroup>) -> Result<Self> {
        groups.sort_by(|a, b| a.group_id.cmp(&b.group_id));
        if let Some(w) = groups.windows(2).find(|w| w[0].group_id == w[1].group_id) {
            return Err(Error::Invalid(format!("group {:?} appears twice", w[0].group_id)));
        }
        Ok(Dataset { groups })
    }

    pub fn groups(&self) -> &[ComparisonGroup] {
        &self.groups
    }

    pub fn group(&self, group_id: &str) -> Option<&ComparisonGroup> {
        self.groups.iter().find(|g| g.group_id == group_id)
    }

    /// Pairs from every group, groups in order.
    pub fn pairs(&self) -> Result<Vec<PairwiseExample>> {
        let mut out = Vec::new();
        for (i, g) in self.groups.iter().enumerate() {
            out.extend(build_pairs_indexed(g, i)?);
        }
        Ok(out)
    }

    /// Group and the two systems of a pair produced by [`Dataset::pairs`].
    pub fn resolve(&self, pair: &PairwiseExample) -> (&ComparisonGroup, &SystemRecord, &SystemRecord) {
        let g = &self.groups[pair.group_index];
        (g, &g.systems[pair.index_a], &g.systems[pair.index_b])
    }

    /// Metric ids present on every shared segment of every system.
    pub fn metric_ids(&self) -> Vec<String> {
        let mut ids: Option<HashSet<&str>> = None;
        for g in &self.groups {
            for (si, sys) in g.systems.iter().enumerate() {
                for &p in g.aligned_positions(si) {
                    let here: HashSet<&str> = sys.segments[p].metric_scores.keys().map(String::as_str).collect();
                    ids = Some(match ids {
                        None => here,
                        Some(prev) => prev.intersection(&here).copied().collect(),
                    });
                }
            }
        }
        let mut v: Vec<String> = ids.unwrap_or_default().into_iter().map(str::to_string).collect();
        v.sort();
        v
    }

    pub fn summary(&self) -> DatasetSummary {
        let groups = self
            .groups
            .iter()
            .map(|g| GroupSummary {
                group_id: g.group_id.clone(),
                systems: g.systems.len(),
                shared_segments: g.shared_segment_ids.len(),
                dropped_segments: g.dropped_segments,
                min_segments_per_system: g.systems.iter().map(|s| s.segments.len()).min().unwrap_or(0),
                max_segments_per_system: g.systems.iter().map(|s| s.segments.len()).max().unwrap_or(0),
                judgments: g.systems.iter().map(SystemRecord::judgment_count).sum(),
                pairs: g.systems.len() * g.systems.len().saturating_sub(1) / 2,
            })
            .collect();
        DatasetSummary { groups }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroupSummary {
    pub group_id: String,
    pub systems: usize,
    pub shared_segments: usize,
    pub dropped_segments: usize,
    pub min_segments_per_system: usize,
    pub max_segments_per_system: usize,
    pub judgments: usize,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub groups: Vec<GroupSummary>,
}

impl DatasetSummary {
    pub fn total_systems(&self) -> usize {
        self.groups.iter().map(|g| g.systems).sum()
    }
    pub fn total_pairs(&self) -> usize {
        self.groups.iter().map(|g| g.pairs).sum()
    }
    pub fn total_judgments(&self) -> usize {
        self.groups.iter().map(|g| g.judgments).sum()
    }
    pub fn total_dropped(&self) -> usize {
        self.groups.iter().map(|g| g.dropped_segments).sum()
    }
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Parameter(format!("unknown format {other:?}"))),
        }
    }
}

/// Reads a dataset file. For CSV, metric scores are read from `metrics`
/// when given (the parallel metrics CSV).
pub fn ingest(path: &Path, format: Format) -> Result<Dataset> {
    ingest_with_metrics(path, format, None)
}

pub fn ingest_with_metrics(path: &Path, format: Format, metrics: Option<&Path>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Jsonl => read_jsonl(BufReader::new(file)),
        Format::Csv => {
            let m = metrics
                .map(|p| File::open(p).map_err(|e| Error::io(p, e)))
                .transpose()?;
            read_csv(BufReader::new(file), m.map(BufReader::new))
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    group: String,
    system: String,
    segment: String,
    scale: [f64; 2],
    #[serde(default)]
    judgments: Vec<JsonJudgment>,
    #[serde(default)]
    metrics: BTreeMap<String, JsonMetric>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonJudgment {
    annotator: Option<String>,
    values: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonMetric {
    Scalar(f64),
    Statistics { num: Vec<f64>, den: Vec<f64> },
}

/// Collects rows into groups while enforcing (group, system, segment)
/// uniqueness.
#[derive(Default)]
struct Builder {
    groups: BTreeMap<String, BTreeMap<String, Vec<SegmentRecord>>>,
    seen: HashSet<(String, String, String)>,
}

impl Builder {
    fn push(&mut self, line: usize, group: String, system: String, seg: SegmentRecord) -> Result<()> {
        let key = (group.clone(), system.clone(), seg.segment_id.clone());
        if !self.seen.insert(key) {
            return Err(Error::Duplicate {
                line,
                group,
                system,
                segment: seg.segment_id,
            });
        }
        self.groups
            .entry(group)
            .or_default()
            .entry(system)
            .or_default()
            .push(seg);
        Ok(())
    }

    fn finish(self) -> Result<Dataset> {
        let mut groups = Vec::with_capacity(self.groups.len());
        for (gid, systems) in self.groups {
            let systems = systems
                .into_iter()
                .map(|(sid, segs)| SystemRecord::new(sid, segs))
                .collect::<Result<Vec<_>>>()?;
            let g = ComparisonGroup::new(gid, systems)?;
            if g.dropped_segments > 0 {
                log::warn!(
                    "group {:?}: {} segment(s) not present in every system were dropped",
                    g.group_id,
                    g.dropped_segments
                );
            }
            groups.push(g);
        }
        Dataset::new(groups)
    }
}

fn judgment_at_line(
    line: usize,
    annotator: Option<String>,
    values: BTreeMap<String, f64>,
    scale: Scale,
) -> Result<JudgmentRecord> {
    JudgmentRecord::new(annotator, values, scale).map_err(|e| match e {
        Error::ScaleViolation { value, min, max, .. } => Error::ScaleViolation { line, value, min, max },
        Error::Invalid(message) => Error::Malformed { line, message },
        other => other,
    })
}

/// Reads the JSONL schema, one row per (group, system, segment).
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut b = Builder::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        let scale = Scale::new(row.scale[0], row.scale[1]).map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        let judgments = row
            .judgments
            .into_iter()
            .map(|j| judgment_at_line(lineno, j.annotator, j.values, scale))
            .collect::<Result<Vec<_>>>()?;
        let metric_scores = row
            .metrics
            .into_iter()
            .map(|(k, m)| {
                let obs = match m {
                    JsonMetric::Scalar(v) => Ok(MetricObservation::Scalar(v)),
                    JsonMetric::Statistics { num, den } => MetricObservation::statistics(num, den),
                };
                obs.map(|o| (k, o)).map_err(|e| Error::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let seg = SegmentRecord::new(row.segment, judgments, metric_scores).map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        b.push(lineno, row.group, row.system, seg)?;
    }
    b.finish()
}

/// Writes the dataset in the JSONL schema. Every segment of every system is
/// written, shared or not, so re-reading reproduces the same dataset.
pub fn write_jsonl<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    for g in &ds.groups {
        for sys in &g.systems {
            for seg in &sys.segments {
                let scale = seg.judgments.first().map(|j| j.scale).unwrap_or(Scale::UNBOUNDED);
                let row = JsonRow {
                    group: g.group_id.clone(),
                    system: sys.system_id.clone(),
                    segment: seg.segment_id.clone(),
                    scale: [scale.min, scale.max],
                    judgments: seg
                        .judgments
                        .iter()
                        .map(|j| JsonJudgment {
                            annotator: j.annotator_id.clone(),
                            values: j.values.clone(),
                        })
                        .collect(),
                    metrics: seg
                        .metric_scores
                        .iter()
                        .map(|(k, m)| {
                            let jm = match m {
                                MetricObservation::Scalar(v) => JsonMetric::Scalar(*v),
                                MetricObservation::Statistics { num, den } => JsonMetric::Statistics {
                                    num: num.clone(),
                                    den: den.clone(),
                                },
                            };
                            (k.clone(), jm)
                        })
                        .collect(),
                };
                serde_json::to_writer(&mut w, &row)?;
                w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
            }
        }
    }
    Ok(())
}

fn parse_scale_header(line: &str) -> Option<Scale> {
    let rest = line.trim().strip_prefix('#')?.trim().strip_prefix("scale")?;
    let rest = rest.trim_start().strip_prefix(['=', ':'])?;
    let (a, b) = rest.split_once(',')?;
    Scale::new(a.trim().parse().ok()?, b.trim().parse().ok()?).ok()
}

struct PendingSegment {
    line: usize,
    group: String,
    system: String,
    segment: String,
    judgments: Vec<JudgmentRecord>,
    current: Option<(Option<String>, BTreeMap<String, f64>, usize)>,
}

impl PendingSegment {
    fn flush_judgment(&mut self, scale: Scale) -> Result<()> {
        if let Some((annotator, values, line)) = self.current.take() {
            self.judgments.push(judgment_at_line(line, annotator, values, scale)?);
        }
        Ok(())
    }
}

/// Reads the long-format judgments CSV and an optional metrics CSV.
///
/// The judgments file must start with a `#scale=min,max` line followed by the
/// header `group,system,segment,annotator,category,value`. Consecutive rows
/// with the same (group, system, segment, annotator) form one judgment until a
/// category repeats, which starts the next judgment. The rows of one
/// (group, system, segment) must be contiguous.
///
/// The metrics file has header `group,system,segment,metric_id,value` and
/// carries scalar scores only.
pub fn read_csv<R: BufRead, M: Read>(mut judgments: R, metrics: Option<M>) -> Result<Dataset> {
    let mut first = String::new();
    judgments.read_line(&mut first).map_err(|e| Error::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    let scale = parse_scale_header(&first).ok_or_else(|| Error::Malformed {
        line: 1,
        message: "expected a '#scale=min,max' header line".into(),
    })?;

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(judgments);
    let cols = column_indices(
        rdr.headers()?,
        &["group", "system", "segment", "annotator", "category", "value"],
        2,
    )?;

    // Segments in file order, keyed for metrics lookup.
    let mut order: Vec<(String, String, SegmentRecord, usize)> = Vec::new();
    let mut lookup: HashMap<(String, String, String), usize> = HashMap::new();
    let mut pending: Option<PendingSegment> = None;

    let finish = |p: Option<PendingSegment>,
                  order: &mut Vec<(String, String, SegmentRecord, usize)>,
                  lookup: &mut HashMap<(String, String, String), usize>|
     -> Result<()> {
        let Some(mut p) = p else { return Ok(()) };
        p.flush_judgment(scale)?;
        let key = (p.group.clone(), p.system.clone(), p.segment.clone());
        if lookup.contains_key(&key) {
            return Err(Error::Duplicate {
                line: p.line,
                group: p.group,
                system: p.system,
                segment: p.segment,
            });
        }
        lookup.insert(key, order.len());
        let seg = SegmentRecord {
            segment_id: p.segment,
            judgments: p.judgments,
            metric_scores: BTreeMap::new(),
        };
        order.push((p.group, p.system, seg, p.line));
        Ok(())
    };

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize + 1).unwrap_or(0);
        let field = |i: usize| rec.get(cols[i]).unwrap_or("").to_string();
        let (group, system, segment) = (field(0), field(1), field(2));
        if group.is_empty() || system.is_empty() || segment.is_empty() {
            return Err(Error::Malformed {
                line,
                message: "group, system and segment must be non-empty".into(),
            });
        }
        let annotator = Some(field(3)).filter(|a| !a.is_empty());
        let category = Some(field(4))
            .filter(|c| !c.is_empty())
            .unwrap_or_else(|| DEFAULT_CATEGORY.to_string());
        let value: f64 = field(5).parse().map_err(|_| Error::Malformed {
            line,
            message: format!("value {:?} is not a number", field(5)),
        })?;
        if !scale.contains(value) || !value.is_finite() {
            return Err(Error::ScaleViolation {
                line,
                value,
                min: scale.min,
                max: scale.max,
            });
        }

        let same_segment = pending
            .as_ref()
            .is_some_and(|p| p.group == group && p.system == system && p.segment == segment);
        if !same_segment {
            finish(pending.take(), &mut order, &mut lookup)?;
            pending = Some(PendingSegment {
                line,
                group,
                system,
                segment,
                judgments: Vec::new(),
                current: None,
            });
        }
        let p = pending.as_mut().expect("pending segment");
        let continues = p
            .current
            .as_ref()
            .is_some_and(|(a, vals, _)| *a == annotator && !vals.contains_key(&category));
        if !continues {
            p.flush_judgment(scale)?;
            p.current = Some((annotator, BTreeMap::new(), line));
        }
        p.current.as_mut().expect("current judgment").1.insert(category, value);
    }
    finish(pending.take(), &mut order, &mut lookup)?;

    if let Some(m) = metrics {
        let mut mrdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(m);
        let mcols = column_indices(
            mrdr.headers()?,
            &["group", "system", "segment", "metric_id", "value"],
            1,
        )?;
        for rec in mrdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let field = |i: usize| rec.get(mcols[i]).unwrap_or("").to_string();
            let key = (field(0), field(1), field(2));
            let metric = field(3);
            let value: f64 = field(4).parse().map_err(|_| Error::Malformed {
                line,
                message: format!("metric value {:?} is not a number", field(4)),
            })?;
            if key.0.is_empty() || key.1.is_empty() || key.2.is_empty() || metric.is_empty() {
                return Err(Error::Malformed {
                    line,
                    message: "group, system, segment and metric_id must be non-empty".into(),
                });
            }
            let idx = match lookup.get(&key) {
                Some(&i) => i,
                None => {
                    lookup.insert(key.clone(), order.len());
                    order.push((
                        key.0.clone(),
                        key.1.clone(),
                        SegmentRecord {
                            segment_id: key.2.clone(),
                            judgments: Vec::new(),
                            metric_scores: BTreeMap::new(),
                        },
                        line,
                    ));
                    order.len() - 1
                }
            };
            let scores = &mut order[idx].2.metric_scores;
            if scores.contains_key(&metric) {
                return Err(Error::Duplicate {
                    line,
                    group: key.0,
                    system: key.1,
                    segment: format!("{} (metric {metric})", key.2),
                });
            }
            scores.insert(metric, MetricObservation::Scalar(value));
        }
    }

    let mut b = Builder::default();
    for (group, system, seg, line) in order {
        b.push(line, group, system, seg)?;
    }
    b.finish()
}

fn column_indices(headers: &csv::StringRecord, names: &[&str], header_line: usize) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            headers.iter().position(|h| h == *n).ok_or_else(|| Error::Malformed {
                line: header_line,
                message: format!("missing column {n:?}"),
            })
        })
        .collect()
}
