//! Threshold-agnostic evaluation over a grid of (class, instance) confidence
//! thresholds.
//!
//! Pixels are scanned once per image. Each pixel's scores are reduced to bin
//! indices over the grid (the number of thresholds at which it is
//! confident), and for every (prediction, ground truth, outcome) group a 2-D
//! bin histogram is kept. Suffix sums over that histogram give, for any grid
//! cell, how many pixels of the group stay unchanged, are instance-unconfident,
//! or are class-unconfident, which is all the matching needs.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::annotation::{Difficulty, DifficultyRaster};
use crate::confidence::{BinaryConfidenceMask, ConfidenceKind, ConfidenceRaster};
use crate::error::{check_dims, EvalError, Result};
use crate::pq::{match_histogram, Aggregate, MetricReport, PanopticTally, QualityKind};
use crate::raster::{ClassId, Label, OverlapHistogram, PanopticRaster, Region};
use crate::upq::{uncertain_outcomes, PixelState};

/// Rule turning a score and a threshold into a confident/unconfident flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Binarization {
    /// Confident iff score >= threshold.
    #[default]
    AtLeast,
    /// Confident iff score > threshold.
    Above,
}

impl Binarization {
    #[inline]
    pub fn confident(self, score: f64, threshold: f64) -> bool {
        match self {
            Binarization::AtLeast => score >= threshold,
            Binarization::Above => score > threshold,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Binarization::AtLeast => "ge",
            Binarization::Above => "gt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    class: Vec<f64>,
    inst: Vec<f64>,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid::linear(16).expect("default grid is valid")
    }
}

impl ThresholdGrid {
    pub fn new(class: Vec<f64>, inst: Vec<f64>) -> Result<ThresholdGrid> {
        for axis in [&class, &inst] {
            if axis.is_empty() {
                return Err(EvalError::InvalidArgument("threshold grid axis is empty".into()));
            }
            if axis.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(EvalError::InvalidArgument("thresholds must lie in [0, 1]".into()));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(EvalError::InvalidArgument(
                    "thresholds must be strictly increasing".into(),
                ));
            }
        }
        Ok(ThresholdGrid { class, inst })
    }

    /// `n` equispaced thresholds `k / (n - 1)` on both axes; `n = 1` gives
    /// the single threshold 0.
    pub fn linear(n: usize) -> Result<ThresholdGrid> {
        if n == 0 {
            return Err(EvalError::InvalidArgument("grid size must be at least 1".into()));
        }
        let axis: Vec<f64> = if n == 1 {
            vec![0.0]
        } else {
            (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
        };
        ThresholdGrid::new(axis.clone(), axis)
    }

    pub fn class_thresholds(&self) -> &[f64] {
        &self.class
    }

    pub fn inst_thresholds(&self) -> &[f64] {
        &self.inst
    }

    pub fn cells(&self) -> usize {
        self.class.len() * self.inst.len()
    }

    /// Row-major cell index, class threshold first.
    pub fn cell(&self, class_idx: usize, inst_idx: usize) -> usize {
        class_idx * self.inst.len() + inst_idx
    }
}

/// Number of thresholds of `axis` at which `score` is confident. Thresholds
/// are increasing, so the pixel is confident exactly at indices below it.
#[inline]
fn bin(axis: &[f64], score: f64, rule: Binarization) -> usize {
    axis.partition_point(|&t| rule.confident(score, t))
}

pub fn binarize(conf: &ConfidenceRaster, threshold: f64) -> Result<BinaryConfidenceMask> {
    binarize_with(conf, threshold, Binarization::AtLeast)
}

pub fn binarize_with(
    conf: &ConfidenceRaster,
    threshold: f64,
    rule: Binarization,
) -> Result<BinaryConfidenceMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(EvalError::InvalidArgument(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let (w, h) = conf.dims();
    BinaryConfidenceMask::new(
        w,
        h,
        conf.kind(),
        conf.scores()
            .iter()
            .map(|&s| rule.confident(s, threshold))
            .collect(),
    )
}

/// Inputs of one image for confidence-aware evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SweepSample<'a> {
    pub pred: &'a PanopticRaster,
    pub gt: &'a PanopticRaster,
    pub difficulty: &'a DifficultyRaster,
    pub class_conf: Option<&'a ConfidenceRaster>,
    pub inst_conf: Option<&'a ConfidenceRaster>,
}

impl<'a> SweepSample<'a> {
    pub(crate) fn validated(&self) -> Result<(&'a ConfidenceRaster, &'a ConfidenceRaster)> {
        let (Some(class_conf), Some(inst_conf)) = (self.class_conf, self.inst_conf) else {
            return Err(EvalError::Manifest("missing class or instance confidence raster".into()));
        };
        if class_conf.kind() != ConfidenceKind::Class || inst_conf.kind() != ConfidenceKind::Instance {
            return Err(EvalError::MaskKind {
                expected: "class + instance",
                actual: "swapped or repeated confidence kinds",
            });
        }
        let dims = self.gt.dims();
        check_dims(dims, self.pred.dims())?;
        check_dims(dims, self.difficulty.dims())?;
        check_dims(dims, class_conf.dims())?;
        check_dims(dims, inst_conf.dims())?;
        Ok((class_conf, inst_conf))
    }
}

/// Pixels sharing a prediction region, ground-truth region and uncertain
/// outcomes, with their 2-D suffix-summed bin histogram.
struct BinnedGroup {
    pred: Region,
    gt: Region,
    class_unconfident: Region,
    instance_unconfident: Region,
    suffix: Vec<u64>,
}

fn outcome_region(state: PixelState, keep: Region) -> Region {
    match state {
        PixelState::Keep => keep,
        PixelState::Any => Region::Any,
        PixelState::VoidU => Region::VoidU,
    }
}

/// Per-cell match tallies of one image or of a set of images.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTally {
    pub cells: Vec<PanopticTally>,
}

impl SweepTally {
    pub fn empty(grid: &ThresholdGrid) -> SweepTally {
        SweepTally {
            cells: vec![PanopticTally::default(); grid.cells()],
        }
    }

    pub fn merge(&mut self, other: &SweepTally) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
    }
}

/// Sweeps one image: one pixel pass, then per-cell matching on derived
/// histograms.
pub fn sweep_image(
    sample: &SweepSample<'_>,
    grid: &ThresholdGrid,
    rule: Binarization,
) -> Result<SweepTally> {
    let (class_conf, inst_conf) = sample.validated()?;
    let nc = grid.class.len();
    let ni = grid.inst.len();
    // bins range over 0..=n, suffix arrays carry one extra zero row/column
    let stride = ni + 2;
    let size = (nc + 2) * stride;

    let mut groups: Vec<BinnedGroup> = Vec::new();
    let mut group_of: HashMap<(Region, Region, Region, Region), usize> = HashMap::new();
    let mut last: Option<((Label, Label, Difficulty), usize)> = None;

    let pixels = sample
        .pred
        .labels()
        .iter()
        .zip(sample.gt.labels())
        .zip(sample.difficulty.values())
        .zip(class_conf.scores().iter().zip(inst_conf.scores()));
    for (((&p, &g), &d), (&sc, &si)) in pixels {
        let group = match last {
            Some((raw, idx)) if raw == (p, g, d) => idx,
            _ => {
                let (cu, iu) = uncertain_outcomes(p, g, d);
                let pred = p.region();
                let key = (pred, g.region(), outcome_region(cu, pred), outcome_region(iu, pred));
                let idx = *group_of.entry(key).or_insert_with(|| {
                    groups.push(BinnedGroup {
                        pred: key.0,
                        gt: key.1,
                        class_unconfident: key.2,
                        instance_unconfident: key.3,
                        suffix: vec![0; size],
                    });
                    groups.len() - 1
                });
                last = Some(((p, g, d), idx));
                idx
            }
        };
        let bc = bin(&grid.class, sc, rule);
        let bi = bin(&grid.inst, si, rule);
        groups[group].suffix[bc * stride + bi] += 1;
    }

    for g in &mut groups {
        let s = &mut g.suffix;
        for a in (0..=nc).rev() {
            for b in (0..=ni).rev() {
                s[a * stride + b] += s[(a + 1) * stride + b] + s[a * stride + b + 1]
                    - s[(a + 1) * stride + b + 1];
            }
        }
    }

    let (w, h) = sample.gt.dims();
    let cells = (0..grid.cells())
        .into_par_iter()
        .map(|cell| {
            let (kc, ki) = (cell / ni, cell % ni);
            let mut entries = Vec::with_capacity(groups.len() * 3);
            for g in &groups {
                let s = &g.suffix;
                let total = s[0];
                let class_confident = s[(kc + 1) * stride];
                let unchanged = s[(kc + 1) * stride + ki + 1];
                entries.push(((g.pred, g.gt), unchanged));
                entries.push(((g.instance_unconfident, g.gt), class_confident - unchanged));
                entries.push(((g.class_unconfident, g.gt), total - class_confident));
            }
            match_histogram(&OverlapHistogram::from_counts(w, h, entries)).tally()
        })
        .collect();
    Ok(SweepTally { cells })
}

/// Sum by recursive halving. Deterministic, and exact for `2^k` equal values.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

pub(crate) fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

/// Means over grid cells of one group's PQ, SQ and RQ.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AreaSummary {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
}

impl AreaSummary {
    fn over(aggs: &[Aggregate]) -> AreaSummary {
        let col = |f: fn(&Aggregate) -> f64| pairwise_mean(&aggs.iter().map(f).collect::<Vec<_>>());
        AreaSummary {
            pq: col(|a| a.pq),
            sq: col(|a| a.sq),
            rq: col(|a| a.rq),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub grid: ThresholdGrid,
    /// Dataset-level report of every cell, row-major by class threshold.
    pub cells: Vec<MetricReport>,
    pub all: AreaSummary,
    pub stuff: AreaSummary,
    pub things: AreaSummary,
    /// Per class, means over the cells where the class is defined.
    pub classes: Vec<Option<AreaSummary>>,
}

impl SweepReport {
    pub fn from_tally(tally: &SweepTally, grid: &ThresholdGrid) -> SweepReport {
        let cells: Vec<MetricReport> = tally
            .cells
            .iter()
            .map(|t| MetricReport::from_tally(t, QualityKind::Upq))
            .collect();
        let group = |f: fn(&MetricReport) -> Aggregate| {
            AreaSummary::over(&cells.iter().map(f).collect::<Vec<_>>())
        };
        let classes = ClassId::eval_classes()
            .map(|c| {
                let defined: Vec<Aggregate> = cells
                    .iter()
                    .filter_map(|r| r.class(c))
                    .map(|m| Aggregate {
                        pq: m.pq,
                        sq: m.sq.unwrap_or(0.0),
                        rq: m.rq,
                        n: 1,
                    })
                    .collect();
                (!defined.is_empty()).then(|| AreaSummary::over(&defined))
            })
            .collect();
        SweepReport {
            grid: grid.clone(),
            all: group(|r| r.all),
            stuff: group(|r| r.stuff),
            things: group(|r| r.things),
            classes,
            cells,
        }
    }

    pub fn cell(&self, class_idx: usize, inst_idx: usize) -> &MetricReport {
        &self.cells[self.grid.cell(class_idx, inst_idx)]
    }

    /// `select(report)` for every cell as a class-threshold-major matrix.
    pub fn matrix(&self, select: impl Fn(&MetricReport) -> f64) -> Vec<Vec<f64>> {
        self.cells
            .chunks(self.grid.inst.len())
            .map(|row| row.iter().map(&select).collect())
            .collect()
    }
}

/// Dataset-level sweep: per-image tallies merged in sample order, then
/// averaged over the cells.
pub fn sweep(
    samples: &[SweepSample<'_>],
    grid: &ThresholdGrid,
    rule: Binarization,
) -> Result<SweepReport> {
    let per_image = samples
        .par_iter()
        .map(|s| sweep_image(s, grid, rule))
        .collect::<Result<Vec<_>>>()?;
    let mut total = SweepTally::empty(grid);
    for t in &per_image {
        total.merge(t);
    }
    Ok(SweepReport::from_tally(&total, grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conf(scores: Vec<f64>) -> ConfidenceRaster {
        let n = scores.len() as u32;
        ConfidenceRaster::new(n, 1, ConfidenceKind::Class, scores).unwrap()
    }

    #[test]
    fn default_grid() {
        let g = ThresholdGrid::default();
        assert_eq!(g.class_thresholds().len(), 16);
        assert_eq!(g.class_thresholds()[0], 0.0);
        assert_eq!(g.class_thresholds()[15], 1.0);
        assert_eq!(g.class_thresholds()[5], 5.0 / 15.0);
        assert!(ThresholdGrid::new(vec![0.5, 0.5], vec![0.0]).is_err());
        assert!(ThresholdGrid::new(vec![0.0, 1.5], vec![0.0]).is_err());
        assert_eq!(ThresholdGrid::linear(1).unwrap().class_thresholds(), &[0.0]);
    }

    #[test]
    fn binarize_boundaries() {
        let ones = conf(vec![1.0; 3]);
        for k in 0..16 {
            let t = k as f64 / 15.0;
            assert!(binarize(&ones, t).unwrap().confident().iter().all(|&c| c));
        }
        let zeros = conf(vec![0.0; 3]);
        assert!(binarize(&zeros, 0.0).unwrap().confident().iter().all(|&c| c));
        assert!(binarize(&zeros, 1.2).is_err());
        assert!(binarize(&zeros, -0.1).is_err());
    }

    #[test]
    fn half_scores_confident_at_eight_thresholds() {
        // enumerate: k/15 <= 0.5 holds for k = 0..=7
        let expected: usize = (0..16).filter(|&k| (k as f64) / 15.0 <= 0.5).count();
        assert_eq!(expected, 8);
        let half = conf(vec![0.5]);
        let grid = ThresholdGrid::default();
        let confident = grid
            .class_thresholds()
            .iter()
            .filter(|&&t| binarize(&half, t).unwrap().confident()[0])
            .count();
        assert_eq!(confident, 8);
        assert_eq!(bin(grid.class_thresholds(), 0.5, Binarization::AtLeast), 8);
        assert_eq!(bin(grid.class_thresholds(), 1.0, Binarization::Above), 15);
    }

    #[test]
    fn pairwise_mean_of_equal_values_is_exact() {
        for x in [0.1, 0.3, 2.0 / 3.0, 0.123456789] {
            assert_eq!(pairwise_mean(&[x; 256]), x);
        }
    }
}
