//! Meta-evaluation of pairwise system comparisons: data model, resampling
//! engine, error decomposition, annotator variance model, power analysis and
//! synthetic oracles.

pub mod annotator;
pub mod bootstrap;
pub mod data;
pub mod decomposition;
pub mod error;
pub mod estimators;
pub mod numeric;
pub mod power;
pub mod report;
pub mod synth;

pub use annotator::{AnnotatorKind, AnnotatorModel, AnnotatorVarianceReport, CurveMethod, ErrorCurve};
pub use bootstrap::{
    InjectedReplicates, ReplicateSet, ResamplePlan, Scheme, DEFAULT_SIGNIFICANCE_TRIALS, DEFAULT_TRIALS,
};
pub use data::{
    ComparisonGroup, Dataset, DatasetSummary, Format, JudgmentRecord, MetricKind, MetricObservation, PairwiseExample,
    Scale, SegmentRecord, SystemRecord,
};
pub use decomposition::{CurvePoint, Decomposer, DecompositionResult, Estimator, LabelSource, PairDecomposition};
pub use error::{Error, Result};
pub use estimators::{EstimatorKind, HumanWeighting, Label, PairwiseLabel, SystemScore};
pub use power::{
    Approximation, Cooccurrence, PowerSpec, PowerTable, Sidedness, SignificanceOutcome, SignificanceTarget,
};
pub use synth::{ExactTerms, GeneratorConfig, GroundTruth};
