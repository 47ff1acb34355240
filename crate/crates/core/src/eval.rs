//! Dataset evaluation: per-sample work on a thread pool, ordered merge,
//! per-condition sections, report construction.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::annotation::{derive_difficulty, DifficultyRaster};
use crate::confidence::{
    constant_confidence, marginal_confidences, oracle_confidence, panoptic_inference, ConfidenceKind,
    ConfidenceRaster, MaskClassificationOutput,
};
use crate::error::{check_dims, EvalError, Result};
use crate::io::{
    self, round6, AggregateEntry, ClassEntry, ConfigEcho, DatasetManifest, MetricReportFile, MiouEntry,
    ReportSection, SampleRecord, SweepEntry, CONDITIONS, SCHEMA_VERSION,
};
use crate::pq::{match_segments_pq, Aggregate, ConfusionMatrix, MetricReport, PanopticTally, QualityKind};
use crate::raster::{build_overlap_histogram, build_segment_table, ClassId, PanopticRaster};
use crate::sweep::{binarize_with, sweep_image, AreaSummary, Binarization, SweepReport, SweepSample, SweepTally, ThresholdGrid};
use crate::upq::{apply_confidence_masks, match_segments_upq};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Pq,
    Upq,
    Aupq,
    Miou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Counts pooled over all images, then one PQ per class.
    #[default]
    Dataset,
    /// Metrics per image, then averaged.
    PerImageMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Baseline {
    /// Confidence rasters from the manifest.
    #[default]
    None,
    Constant(f64),
    /// Marginalized mask-classification scores; the prediction is the
    /// inference result of the same output.
    Marginal,
    /// Confidences derived from the difficulty map.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictionSource {
    #[default]
    Prediction,
    /// Scores the first annotation stage against the ground truth.
    H1,
}

macro_rules! named {
    ($ty:ty { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $(Self::$variant => $name),* }
            }
        }

        impl FromStr for $ty {
            type Err = EvalError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)*
                    _ => Err(EvalError::InvalidArgument(format!(
                        "unknown {} '{s}'", stringify!($ty).to_lowercase()
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named!(Metric { Pq => "pq", Upq => "upq", Aupq => "aupq", Miou => "miou" });
named!(Aggregation { Dataset => "dataset", PerImageMean => "per-image-mean" });
named!(PredictionSource { Prediction => "prediction", H1 => "h1" });

impl Baseline {
    pub fn name(self) -> String {
        match self {
            Baseline::None => "none".into(),
            Baseline::Constant(v) => format!("constant:{v}"),
            Baseline::Marginal => "marginal".into(),
            Baseline::Oracle => "oracle".into(),
        }
    }
}

impl FromStr for Baseline {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Baseline> {
        match s {
            "none" => Ok(Baseline::None),
            "marginal" => Ok(Baseline::Marginal),
            "oracle" => Ok(Baseline::Oracle),
            _ => {
                let v = s
                    .strip_prefix("constant:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| (0.0..=1.0).contains(v))
                    .ok_or_else(|| EvalError::InvalidArgument(format!("unknown baseline '{s}'")))?;
                Ok(Baseline::Constant(v))
            }
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub metric: Metric,
    pub grid_size: usize,
    pub binarization: Binarization,
    pub aggregation: Aggregation,
    pub workers: usize,
    /// Keep samples carrying any of these tags; empty keeps all.
    pub conditions: Vec<String>,
    pub baseline: Baseline,
    pub source: PredictionSource,
    /// Class and instance thresholds for `upq`.
    pub thresholds: (f64, f64),
}

impl Default for EvalConfig {
    fn default() -> EvalConfig {
        EvalConfig {
            metric: Metric::Pq,
            grid_size: 16,
            binarization: Binarization::default(),
            aggregation: Aggregation::default(),
            workers: 1,
            conditions: Vec::new(),
            baseline: Baseline::default(),
            source: PredictionSource::default(),
            thresholds: (0.5, 0.5),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 1 {
            return Err(EvalError::InvalidArgument("grid size must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(EvalError::InvalidArgument("worker count must be at least 1".into()));
        }
        if let Some(c) = self.conditions.iter().find(|c| !CONDITIONS.contains(&c.as_str())) {
            return Err(EvalError::InvalidArgument(format!("unknown condition '{c}'")));
        }
        let (tc, ti) = self.thresholds;
        if !(0.0..=1.0).contains(&tc) || !(0.0..=1.0).contains(&ti) {
            return Err(EvalError::InvalidArgument("thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<ThresholdGrid> {
        ThresholdGrid::linear(self.grid_size)
    }

    fn needs_confidence(&self) -> bool {
        matches!(self.metric, Metric::Upq | Metric::Aupq)
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            grid_size: self.grid_size,
            binarization: self.binarization.name().into(),
            aggregation: self.aggregation.name().into(),
            baseline: self.baseline.name(),
            prediction_source: self.source.name().into(),
            condition_filter: self.conditions.clone(),
            thresholds: (self.metric == Metric::Upq).then_some([self.thresholds.0, self.thresholds.1]),
        }
    }
}

/// One in-memory sample. Which fields are needed depends on the config.
#[derive(Debug, Clone, Default)]
pub struct EvalSample {
    pub sample_id: String,
    pub conditions: Vec<String>,
    pub gt: Option<PanopticRaster>,
    pub pred: Option<PanopticRaster>,
    pub difficulty: Option<DifficultyRaster>,
    pub class_conf: Option<ConfidenceRaster>,
    pub inst_conf: Option<ConfidenceRaster>,
    pub h1: Option<PanopticRaster>,
    pub h2: Option<PanopticRaster>,
    pub semantic: Option<PanopticRaster>,
    pub mask_classification: Option<MaskClassificationOutput>,
}

fn missing(what: &str) -> EvalError {
    EvalError::Manifest(format!("{what} required by this configuration is missing"))
}

/// Per-sample contribution to the reduction.
#[derive(Debug, Clone)]
enum Partial {
    Tally(PanopticTally),
    Sweep(SweepTally),
    Confusion(ConfusionMatrix),
}

struct Resolved {
    pred: PanopticRaster,
    gt: PanopticRaster,
    difficulty: Option<DifficultyRaster>,
    confidence: Option<(ConfidenceRaster, ConfidenceRaster)>,
}

fn resolve(sample: EvalSample, config: &EvalConfig) -> Result<Resolved> {
    let gt = sample.gt.ok_or_else(|| missing("ground_truth"))?;
    let pred = match (config.source, config.baseline) {
        (PredictionSource::H1, _) => sample.h1.clone().ok_or_else(|| missing("h1"))?,
        (_, Baseline::Marginal) if config.needs_confidence() => {
            let mc = sample.mask_classification.as_ref().ok_or_else(|| missing("mask_classification"))?;
            panoptic_inference(mc)?
        }
        _ => sample.pred.ok_or_else(|| missing("prediction"))?,
    };
    check_dims(gt.dims(), pred.dims())?;
    if !config.needs_confidence() {
        return Ok(Resolved {
            pred,
            gt,
            difficulty: None,
            confidence: None,
        });
    }
    let difficulty = match (sample.difficulty, &sample.h1, &sample.h2) {
        (Some(d), _, _) => d,
        (None, Some(h1), Some(h2)) => derive_difficulty(h1, h2)?,
        _ => return Err(missing("difficulty")),
    };
    check_dims(gt.dims(), difficulty.dims())?;
    let confidence = match config.baseline {
        Baseline::None => {
            let c = sample.class_conf.ok_or_else(|| missing("class_conf"))?;
            let i = sample.inst_conf.ok_or_else(|| missing("inst_conf"))?;
            (c.with_kind(ConfidenceKind::Class), i.with_kind(ConfidenceKind::Instance))
        }
        Baseline::Constant(v) => constant_confidence(gt.dims(), v)?,
        Baseline::Oracle => oracle_confidence(&difficulty),
        Baseline::Marginal => {
            marginal_confidences(sample.mask_classification.as_ref().expect("checked above"), &pred)?
        }
    };
    check_dims(gt.dims(), confidence.0.dims())?;
    check_dims(gt.dims(), confidence.1.dims())?;
    Ok(Resolved {
        pred,
        gt,
        difficulty: Some(difficulty),
        confidence: Some(confidence),
    })
}

fn evaluate_one(sample: EvalSample, config: &EvalConfig, grid: &ThresholdGrid) -> Result<Partial> {
    if config.metric == Metric::Miou {
        let gt = sample.gt.as_ref().ok_or_else(|| missing("ground_truth"))?;
        let pred = match (&sample.semantic, config.source) {
            (Some(s), PredictionSource::Prediction) => s,
            (_, PredictionSource::H1) => sample.h1.as_ref().ok_or_else(|| missing("h1"))?,
            (None, _) => sample.pred.as_ref().ok_or_else(|| missing("prediction or semantic_prediction"))?,
        };
        return Ok(Partial::Confusion(ConfusionMatrix::from_rasters(pred, gt)?));
    }
    let r = resolve(sample, config)?;
    match config.metric {
        Metric::Pq => {
            let hist = build_overlap_histogram(&r.pred, &r.gt)?;
            let ledger = match_segments_pq(&hist, &build_segment_table(&r.pred)?, &build_segment_table(&r.gt)?)?;
            Ok(Partial::Tally(ledger.tally()))
        }
        Metric::Upq => {
            let difficulty = r.difficulty.as_ref().expect("resolved");
            let (cc, ic) = r.confidence.as_ref().expect("resolved");
            let cm = binarize_with(cc, config.thresholds.0, config.binarization)?;
            let im = binarize_with(ic, config.thresholds.1, config.binarization)?;
            let aug = apply_confidence_masks(&r.pred, &r.gt, difficulty, &cm, &im)?;
            Ok(Partial::Tally(match_segments_upq(&aug, &r.gt)?.0.tally()))
        }
        Metric::Aupq => {
            let (cc, ic) = r.confidence.as_ref().expect("resolved");
            let sample = SweepSample {
                pred: &r.pred,
                gt: &r.gt,
                difficulty: r.difficulty.as_ref().expect("resolved"),
                class_conf: Some(cc),
                inst_conf: Some(ic),
            };
            Ok(Partial::Sweep(sweep_image(&sample, grid, config.binarization)?))
        }
        Metric::Miou => unreachable!(),
    }
}

fn aggregate_entry(a: &Aggregate) -> AggregateEntry {
    AggregateEntry {
        pq: round6(a.pq),
        sq: round6(a.sq),
        rq: round6(a.rq),
        n: a.n,
    }
}

fn area_entry(a: &AreaSummary, n: usize) -> AggregateEntry {
    AggregateEntry {
        pq: round6(a.pq),
        sq: round6(a.sq),
        rq: round6(a.rq),
        n,
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn round_matrix(m: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    m.into_iter().map(|row| row.into_iter().map(round6).collect()).collect()
}

fn pq_section(reports: &[MetricReport], samples: usize) -> ReportSection {
    // one report for dataset aggregation, one per image otherwise
    let mut classes = BTreeMap::new();
    for c in ClassId::eval_classes() {
        let defined: Vec<_> = reports.iter().filter_map(|r| r.class(c)).collect();
        if defined.is_empty() {
            continue;
        }
        let col = |f: fn(&crate::pq::ClassMetrics) -> f64| round6(mean(&defined.iter().map(|m| f(m)).collect::<Vec<_>>()));
        let sq = if reports.len() == 1 {
            defined[0].sq.map(round6)
        } else {
            Some(col(|m| m.sq.unwrap_or(0.0)))
        };
        classes.insert(
            c.name().to_string(),
            ClassEntry {
                pq: col(|m| m.pq),
                sq,
                rq: col(|m| m.rq),
                tp: Some(defined.iter().map(|m| m.tp).sum()),
                fp: Some(defined.iter().map(|m| m.fp).sum()),
                fn_: Some(defined.iter().map(|m| m.fn_).sum()),
                iou_sum: Some(round6(defined.iter().map(|m| m.iou_sum).sum())),
            },
        );
    }
    let group = |f: fn(&MetricReport) -> Aggregate| {
        let aggs: Vec<Aggregate> = reports.iter().map(f).filter(|a| a.n > 0).collect();
        if reports.len() == 1 {
            return aggregate_entry(&f(&reports[0]));
        }
        AggregateEntry {
            pq: round6(mean(&aggs.iter().map(|a| a.pq).collect::<Vec<_>>())),
            sq: round6(mean(&aggs.iter().map(|a| a.sq).collect::<Vec<_>>())),
            rq: round6(mean(&aggs.iter().map(|a| a.rq).collect::<Vec<_>>())),
            n: aggs.len(),
        }
    };
    ReportSection {
        samples,
        all: Some(group(|r| r.all)),
        stuff: Some(group(|r| r.stuff)),
        things: Some(group(|r| r.things)),
        classes,
        sweep: None,
        miou: None,
    }
}

fn sweep_section(reports: &[SweepReport], samples: usize) -> ReportSection {
    let grid = &reports[0].grid;
    let cells = grid.cells();
    let mean_matrix = |f: fn(&Aggregate) -> f64| {
        let per_cell: Vec<f64> = (0..cells)
            .map(|k| mean(&reports.iter().map(|r| f(&r.cells[k].all)).collect::<Vec<_>>()))
            .collect();
        round_matrix(per_cell.chunks(grid.inst_thresholds().len()).map(<[f64]>::to_vec).collect())
    };
    let summary = |f: fn(&SweepReport) -> AreaSummary| {
        let all: Vec<AreaSummary> = reports.iter().map(f).collect();
        let s = AreaSummary {
            pq: mean(&all.iter().map(|a| a.pq).collect::<Vec<_>>()),
            sq: mean(&all.iter().map(|a| a.sq).collect::<Vec<_>>()),
            rq: mean(&all.iter().map(|a| a.rq).collect::<Vec<_>>()),
        };
        if reports.len() == 1 {
            all[0]
        } else {
            s
        }
    };
    let mut classes = BTreeMap::new();
    for c in ClassId::eval_classes() {
        let defined: Vec<AreaSummary> = reports.iter().filter_map(|r| r.classes[c.index()]).collect();
        if defined.is_empty() {
            continue;
        }
        classes.insert(
            c.name().to_string(),
            ClassEntry {
                pq: round6(mean(&defined.iter().map(|a| a.pq).collect::<Vec<_>>())),
                sq: Some(round6(mean(&defined.iter().map(|a| a.sq).collect::<Vec<_>>()))),
                rq: round6(mean(&defined.iter().map(|a| a.rq).collect::<Vec<_>>())),
                tp: None,
                fp: None,
                fn_: None,
                iou_sum: None,
            },
        );
    }
    let count = |f: fn(&MetricReport) -> Aggregate| reports.iter().map(|r| f(&r.cells[cells - 1]).n).max().unwrap_or(0);
    ReportSection {
        samples,
        all: Some(area_entry(&summary(|r| r.all), count(|r| r.all))),
        stuff: Some(area_entry(&summary(|r| r.stuff), count(|r| r.stuff))),
        things: Some(area_entry(&summary(|r| r.things), count(|r| r.things))),
        classes,
        sweep: Some(SweepEntry {
            class_thresholds: grid.class_thresholds().iter().copied().map(round6).collect(),
            inst_thresholds: grid.inst_thresholds().iter().copied().map(round6).collect(),
            pq: mean_matrix(|a| a.pq),
            sq: mean_matrix(|a| a.sq),
            rq: mean_matrix(|a| a.rq),
        }),
        miou: None,
    }
}

fn miou_section(matrices: &[ConfusionMatrix], samples: usize) -> ReportSection {
    let reports: Vec<_> = matrices.iter().map(ConfusionMatrix::report).collect();
    let classes = ClassId::eval_classes()
        .filter_map(|c| {
            let defined: Vec<f64> = reports.iter().filter_map(|r| r.class(c)).collect();
            (!defined.is_empty()).then(|| (c.name().to_string(), round6(mean(&defined))))
        })
        .collect();
    let (mean_iou, n) = if reports.len() == 1 {
        (reports[0].mean_iou, reports[0].n)
    } else {
        let valid: Vec<f64> = reports.iter().filter(|r| r.n > 0).map(|r| r.mean_iou).collect();
        (mean(&valid), valid.len())
    };
    ReportSection {
        samples,
        all: None,
        stuff: None,
        things: None,
        classes: BTreeMap::new(),
        sweep: None,
        miou: Some(MiouEntry {
            mean_iou: round6(mean_iou),
            n,
            classes,
        }),
    }
}

/// Section over the given partials, in order.
fn section(parts: &[&Partial], config: &EvalConfig, grid: &ThresholdGrid) -> ReportSection {
    let samples = parts.len();
    let pooled = config.aggregation == Aggregation::Dataset;
    match config.metric {
        Metric::Pq | Metric::Upq => {
            let kind = if config.metric == Metric::Pq { QualityKind::Pq } else { QualityKind::Upq };
            let tallies = parts.iter().map(|p| match p {
                Partial::Tally(t) => t,
                _ => unreachable!(),
            });
            let reports: Vec<MetricReport> = if pooled {
                let mut total = PanopticTally::default();
                tallies.for_each(|t| total.merge(t));
                vec![MetricReport::from_tally(&total, kind)]
            } else {
                tallies.map(|t| MetricReport::from_tally(t, kind)).collect()
            };
            if reports.is_empty() {
                return pq_section(&[MetricReport::from_tally(&PanopticTally::default(), kind)], 0);
            }
            pq_section(&reports, samples)
        }
        Metric::Aupq => {
            let tallies = parts.iter().map(|p| match p {
                Partial::Sweep(t) => t,
                _ => unreachable!(),
            });
            let reports: Vec<SweepReport> = if pooled || samples == 0 {
                let mut total = SweepTally::empty(grid);
                tallies.for_each(|t| total.merge(t));
                vec![SweepReport::from_tally(&total, grid)]
            } else {
                tallies.map(|t| SweepReport::from_tally(t, grid)).collect()
            };
            sweep_section(&reports, samples)
        }
        Metric::Miou => {
            let matrices = parts.iter().map(|p| match p {
                Partial::Confusion(m) => m,
                _ => unreachable!(),
            });
            let ms: Vec<ConfusionMatrix> = if pooled || samples == 0 {
                let mut total = ConfusionMatrix::default();
                matrices.for_each(|m| total.merge(m));
                vec![total]
            } else {
                matrices.cloned().collect()
            };
            miou_section(&ms, samples)
        }
    }
}

/// Evaluates `n` samples produced by `load(i)`. Samples are loaded and
/// scored in parallel; results are combined in index order, so the report
/// does not depend on the worker count.
pub fn evaluate_with<F>(n: usize, load: F, config: &EvalConfig) -> Result<MetricReportFile>
where
    F: Fn(usize) -> Result<Option<(String, Vec<String>, EvalSample)>> + Sync,
{
    config.validate()?;
    let grid = config.grid()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
    let results: Vec<Option<(Vec<String>, Partial)>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let Some((id, conditions, sample)) = load(i)? else {
                    return Ok(None);
                };
                let partial = evaluate_one(sample, config, &grid).map_err(|e| e.in_sample(&id))?;
                Ok(Some((conditions, partial)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let kept: Vec<&(Vec<String>, Partial)> = results.iter().flatten().collect();
    let overall = section(&kept.iter().map(|(_, p)| p).collect::<Vec<_>>(), config, &grid);
    let mut conditions = BTreeMap::new();
    for tag in CONDITIONS {
        if !config.conditions.is_empty() && !config.conditions.iter().any(|c| c == tag) {
            continue;
        }
        let parts: Vec<&Partial> = kept
            .iter()
            .filter(|(c, _)| c.iter().any(|t| t == tag))
            .map(|(_, p)| p)
            .collect();
        if !parts.is_empty() {
            conditions.insert(tag.to_string(), section(&parts, config, &grid));
        }
    }
    Ok(MetricReportFile {
        schema_version: SCHEMA_VERSION,
        metric: config.metric.name().into(),
        config: config.echo(),
        overall,
        conditions,
    })
}

fn passes_filter(conditions: &[String], config: &EvalConfig) -> bool {
    config.conditions.is_empty() || conditions.iter().any(|c| config.conditions.contains(c))
}

/// Evaluates in-memory samples.
pub fn evaluate_samples(samples: &[EvalSample], config: &EvalConfig) -> Result<MetricReportFile> {
    evaluate_with(
        samples.len(),
        |i| {
            let s = &samples[i];
            Ok(passes_filter(&s.conditions, config).then(|| (s.sample_id.clone(), s.conditions.clone(), s.clone())))
        },
        config,
    )
}

fn load_sample(manifest: &DatasetManifest, record: &SampleRecord, config: &EvalConfig) -> Result<EvalSample> {
    let enc = manifest.encoding;
    let panoptic = |p: &Option<std::path::PathBuf>| -> Result<Option<PanopticRaster>> {
        p.as_ref().map(|p| io::load_panoptic(&manifest.resolve(p), enc)).transpose()
    };
    let h1_mode = config.source == PredictionSource::H1;
    let confident = config.needs_confidence();
    let marginal = confident && config.baseline == Baseline::Marginal;
    let mut sample = EvalSample {
        sample_id: record.sample_id.clone(),
        conditions: record.conditions.clone(),
        gt: panoptic(&Some(record.ground_truth.clone()))?,
        ..EvalSample::default()
    };
    if config.metric == Metric::Miou && !h1_mode {
        sample.semantic = panoptic(&record.semantic_prediction)?;
    }
    if !h1_mode && !marginal && sample.semantic.is_none() {
        sample.pred = panoptic(&record.prediction)?;
    }
    if h1_mode || (confident && record.difficulty.is_none()) {
        sample.h1 = panoptic(&record.h1)?;
    }
    if confident {
        if record.difficulty.is_none() {
            sample.h2 = panoptic(&record.h2)?;
        }
        sample.difficulty = record
            .difficulty
            .as_ref()
            .map(|p| io::load_difficulty(&manifest.resolve(p)))
            .transpose()?;
        if config.baseline == Baseline::None {
            let conf = |p: &Option<std::path::PathBuf>, kind| {
                p.as_ref().map(|p| io::load_confidence(&manifest.resolve(p), kind)).transpose()
            };
            sample.class_conf = conf(&record.class_conf, ConfidenceKind::Class)?;
            sample.inst_conf = conf(&record.inst_conf, ConfidenceKind::Instance)?;
        }
        if marginal {
            sample.mask_classification = record
                .mask_classification
                .as_ref()
                .map(|p| io::load_mask_classification(&manifest.resolve(p)))
                .transpose()?;
        }
    }
    Ok(sample)
}

/// Evaluates the samples of a manifest.
pub fn evaluate_manifest(manifest: &DatasetManifest, config: &EvalConfig) -> Result<MetricReportFile> {
    manifest.validate()?;
    evaluate_with(
        manifest.samples.len(),
        |i| {
            let record = &manifest.samples[i];
            if !passes_filter(&record.conditions, config) {
                return Ok(None);
            }
            let sample = load_sample(manifest, record, config).map_err(|e| e.in_sample(&record.sample_id))?;
            Ok(Some((record.sample_id.clone(), record.conditions.clone(), sample)))
        },
        config,
    )
}

pub fn evaluate_manifest_path(path: &Path, config: &EvalConfig) -> Result<MetricReportFile> {
    evaluate_manifest(&io::load_manifest(path)?, config)
}
