//! Segment matching, panoptic quality and mIoU.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{check_dims, EvalError, Result};
use crate::raster::{ClassId, OverlapHistogram, PanopticRaster, Region, SegmentKey, SegmentTable};

/// Predicted side of a true-positive match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PredSegment {
    /// A segment of the prediction raster.
    Original(SegmentKey),
    /// A segment created from ANY pixels covering an otherwise unmatched
    /// ground-truth segment. It carries the ground-truth labels.
    FromAny,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub pred: PredSegment,
    pub gt: SegmentKey,
    pub intersection: u64,
    pub union: u64,
    pub iou: f64,
}

impl MatchedPair {
    fn new(pred: PredSegment, gt: SegmentKey, intersection: u64, union: u64) -> MatchedPair {
        MatchedPair {
            pred,
            gt,
            intersection,
            union,
            iou: intersection as f64 / union as f64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassLedger {
    /// True positives, sorted by ground-truth key.
    pub matches: Vec<MatchedPair>,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Per-class true positives (with IoU), false positives and false negatives of
/// one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchLedger {
    classes: Vec<ClassLedger>,
}

impl Default for MatchLedger {
    fn default() -> Self {
        MatchLedger {
            classes: vec![ClassLedger::default(); ClassId::NUM_EVAL],
        }
    }
}

impl MatchLedger {
    pub fn class(&self, class: ClassId) -> &ClassLedger {
        &self.classes[class.index()]
    }

    pub fn class_mut(&mut self, class: ClassId) -> &mut ClassLedger {
        &mut self.classes[class.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &ClassLedger)> {
        ClassId::eval_classes().zip(self.classes.iter())
    }

    /// Sorts each class's matches by ground-truth key. Sums over a ledger are
    /// taken in this order.
    pub fn canonicalize(&mut self) {
        for class in &mut self.classes {
            class.matches.sort_by(|a, b| a.gt.cmp(&b.gt).then(a.pred.cmp(&b.pred)));
        }
    }

    /// Checks that no segment takes part in two matches.
    pub fn is_unique(&self) -> bool {
        let mut preds = BTreeSet::new();
        let mut gts = BTreeSet::new();
        self.classes.iter().flat_map(|c| &c.matches).all(|m| {
            let pred_ok = match m.pred {
                PredSegment::Original(key) => preds.insert(key),
                PredSegment::FromAny => true,
            };
            pred_ok && gts.insert(m.gt)
        })
    }

    pub fn tally(&self) -> PanopticTally {
        let mut tally = PanopticTally::default();
        for (ledger, class) in self.classes.iter().zip(tally.classes.iter_mut()) {
            class.iou_sum = ledger.matches.iter().map(|m| m.iou).sum();
            class.tp = ledger.matches.len() as u64;
            class.fp = ledger.false_positives;
            class.fn_ = ledger.false_negatives;
        }
        tally
    }
}

/// Summed match statistics of one class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassTally {
    pub iou_sum: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassTally {
    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    fn merge(&mut self, other: &ClassTally) {
        self.iou_sum += other.iou_sum;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Accumulator of per-class statistics over images. Merging in a fixed order
/// gives bit-identical sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PanopticTally {
    pub classes: [ClassTally; ClassId::NUM_EVAL],
}

impl Default for PanopticTally {
    fn default() -> Self {
        PanopticTally {
            classes: [ClassTally::default(); ClassId::NUM_EVAL],
        }
    }
}

impl PanopticTally {
    pub fn merge(&mut self, other: &PanopticTally) {
        for (a, b) in self.classes.iter_mut().zip(other.classes.iter()) {
            a.merge(b);
        }
    }

    pub fn class(&self, class: ClassId) -> &ClassTally {
        &self.classes[class.index()]
    }
}

/// Which quality family a report describes. The arithmetic is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityKind {
    Pq,
    Upq,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub pq: f64,
    /// Undefined when the class has no true positive.
    pub sq: Option<f64>,
    pub rq: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub iou_sum: f64,
}

impl ClassMetrics {
    pub fn from_tally(t: &ClassTally) -> Option<ClassMetrics> {
        if t.is_empty() {
            return None;
        }
        let denom = t.tp as f64 + 0.5 * t.fp as f64 + 0.5 * t.fn_ as f64;
        Some(ClassMetrics {
            pq: t.iou_sum / denom,
            sq: (t.tp > 0).then(|| t.iou_sum / t.tp as f64),
            rq: t.tp as f64 / denom,
            tp: t.tp,
            fp: t.fp,
            fn_: t.fn_,
            iou_sum: t.iou_sum,
        })
    }
}

/// Mean over the valid classes of a group. Undefined SQ counts as 0, as in
/// the reference panoptic tooling.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Aggregate {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub n: usize,
}

impl Aggregate {
    fn over<'a>(metrics: impl Iterator<Item = &'a ClassMetrics>) -> Aggregate {
        let mut agg = Aggregate::default();
        for m in metrics {
            agg.pq += m.pq;
            agg.sq += m.sq.unwrap_or(0.0);
            agg.rq += m.rq;
            agg.n += 1;
        }
        if agg.n > 0 {
            let n = agg.n as f64;
            agg.pq /= n;
            agg.sq /= n;
            agg.rq /= n;
        }
        agg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub kind: QualityKind,
    /// Indexed by class id; `None` for classes with no segment on either side.
    pub classes: Vec<Option<ClassMetrics>>,
    pub all: Aggregate,
    pub stuff: Aggregate,
    pub things: Aggregate,
}

impl MetricReport {
    pub fn from_tally(tally: &PanopticTally, kind: QualityKind) -> MetricReport {
        let classes: Vec<Option<ClassMetrics>> =
            tally.classes.iter().map(ClassMetrics::from_tally).collect();
        let group = |pred: fn(ClassId) -> bool| {
            Aggregate::over(
                ClassId::eval_classes()
                    .zip(classes.iter())
                    .filter(|(c, _)| pred(*c))
                    .filter_map(|(_, m)| m.as_ref()),
            )
        };
        MetricReport {
            kind,
            all: group(|_| true),
            stuff: group(ClassId::is_stuff),
            things: group(ClassId::is_thing),
            classes,
        }
    }

    pub fn class(&self, class: ClassId) -> Option<&ClassMetrics> {
        self.classes[class.index()].as_ref()
    }
}

/// Matches segments of one image from its overlap histogram.
///
/// Works for plain and confidence-masked predictions alike: `Any` pixels are
/// left out of the matching IoU and then filled into the matched
/// ground-truth segment; ground-truth segments more than half covered by
/// `Any` become matches of their own. Without `Any` entries this is the
/// standard panoptic matching.
pub(crate) fn match_histogram(hist: &OverlapHistogram) -> MatchLedger {
    let mut pred_area: BTreeMap<SegmentKey, u64> = BTreeMap::new();
    let mut pred_void: BTreeMap<SegmentKey, u64> = BTreeMap::new();
    let mut pred_ignored: BTreeMap<SegmentKey, u64> = BTreeMap::new();
    let mut gt_area: BTreeMap<SegmentKey, u64> = BTreeMap::new();
    let mut gt_any: BTreeMap<SegmentKey, u64> = BTreeMap::new();

    for (p, g, n) in hist.iter() {
        if let Region::Segment(pk) = p {
            *pred_area.entry(pk).or_default() += n;
            match g {
                Region::Void => {
                    *pred_void.entry(pk).or_default() += n;
                    *pred_ignored.entry(pk).or_default() += n;
                }
                Region::UnknownInstance(c) if c == pk.class => {
                    *pred_ignored.entry(pk).or_default() += n;
                }
                _ => {}
            }
        }
        if let Region::Segment(gk) = g {
            *gt_area.entry(gk).or_default() += n;
            if p == Region::Any {
                *gt_any.entry(gk).or_default() += n;
            }
        }
    }
    let get = |m: &BTreeMap<SegmentKey, u64>, k: &SegmentKey| m.get(k).copied().unwrap_or(0);

    let mut ledger = MatchLedger::default();
    let mut matched_pred = BTreeSet::new();
    let mut matched_gt = BTreeSet::new();

    for (p, g, inter) in hist.iter() {
        let (Region::Segment(pk), Region::Segment(gk)) = (p, g) else {
            continue;
        };
        if pk.class != gk.class {
            continue;
        }
        let pa = pred_area[&pk];
        let ga = gt_area[&gk];
        let any = get(&gt_any, &gk);
        let void = get(&pred_void, &pk);
        let union = pa + (ga - any) - inter - void;
        if 2 * inter > union {
            debug_assert!(!matched_pred.contains(&pk) && !matched_gt.contains(&gk));
            matched_pred.insert(pk);
            matched_gt.insert(gk);
            ledger.class_mut(gk.class).matches.push(MatchedPair::new(
                PredSegment::Original(pk),
                gk,
                inter + any,
                pa + ga - inter - void,
            ));
        }
    }

    for (&gk, &ga) in &gt_area {
        if matched_gt.contains(&gk) {
            continue;
        }
        let any = get(&gt_any, &gk);
        let class = ledger.class_mut(gk.class);
        if 2 * any > ga {
            class.matches.push(MatchedPair::new(PredSegment::FromAny, gk, any, ga));
        } else {
            class.false_negatives += 1;
        }
    }

    for (&pk, &pa) in &pred_area {
        if matched_pred.contains(&pk) {
            continue;
        }
        if 2 * get(&pred_ignored, &pk) > pa {
            continue;
        }
        ledger.class_mut(pk.class).false_positives += 1;
    }

    ledger.canonicalize();
    ledger
}

/// Standard panoptic matching: same-class pairs with IoU strictly above 0.5,
/// prediction pixels over unlabeled ground truth removed from the union, and
/// unmatched predictions mostly over unlabeled or same-class unknown-instance
/// ground truth not counted as false positives.
pub fn match_segments_pq(
    hist: &OverlapHistogram,
    pred_table: &SegmentTable,
    gt_table: &SegmentTable,
) -> Result<MatchLedger> {
    let pred_marginal = hist.pred_marginal();
    let gt_marginal = hist.gt_marginal();
    if pred_marginal.contains_key(&Region::Any) || pred_marginal.contains_key(&Region::VoidU) {
        return Err(EvalError::InvalidArgument(
            "confidence-masked histogram passed to standard matching".into(),
        ));
    }
    check_marginal(&pred_marginal, pred_table, "prediction")?;
    check_marginal(&gt_marginal, gt_table, "ground truth")?;
    Ok(match_histogram(hist))
}

fn check_marginal(
    marginal: &BTreeMap<Region, u64>,
    table: &SegmentTable,
    side: &str,
) -> Result<()> {
    let segments: Vec<(SegmentKey, u64)> = marginal
        .iter()
        .filter_map(|(r, &n)| r.segment().map(|k| (k, n)))
        .collect();
    let consistent =
        segments.len() == table.len() && segments.iter().all(|&(k, n)| table.area(k) == Some(n));
    if !consistent {
        return Err(EvalError::Structural(format!(
            "{side} segment table does not match the histogram"
        )));
    }
    Ok(())
}

pub fn compute_pq(ledger: &MatchLedger) -> MetricReport {
    MetricReport::from_tally(&ledger.tally(), QualityKind::Pq)
}

/// Class confusion counts over pixels with a valid ground-truth class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// `counts[gt * 19 + pred]`
    counts: Vec<u64>,
    /// Ground-truth pixels predicted as unlabeled, per ground-truth class.
    unlabeled: Vec<u64>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        ConfusionMatrix {
            counts: vec![0; ClassId::NUM_EVAL * ClassId::NUM_EVAL],
            unlabeled: vec![0; ClassId::NUM_EVAL],
        }
    }
}

impl ConfusionMatrix {
    pub fn from_rasters(pred: &PanopticRaster, gt: &PanopticRaster) -> Result<ConfusionMatrix> {
        check_dims(gt.dims(), pred.dims())?;
        let mut m = ConfusionMatrix::default();
        for (p, g) in pred.labels().iter().zip(gt.labels()) {
            if !g.class.is_eval() {
                continue;
            }
            if p.class.is_eval() {
                m.counts[g.class.index() * ClassId::NUM_EVAL + p.class.index()] += 1;
            } else {
                m.unlabeled[g.class.index()] += 1;
            }
        }
        Ok(m)
    }

    pub fn get(&self, gt: ClassId, pred: ClassId) -> u64 {
        self.counts[gt.index() * ClassId::NUM_EVAL + pred.index()]
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.unlabeled.iter_mut().zip(&other.unlabeled) {
            *a += b;
        }
    }

    pub fn report(&self) -> MiouReport {
        let n = ClassId::NUM_EVAL;
        let ious: Vec<Option<f64>> = (0..n)
            .map(|c| {
                let tp = self.counts[c * n + c];
                let row: u64 = self.counts[c * n..(c + 1) * n].iter().sum::<u64>() + self.unlabeled[c];
                let col: u64 = (0..n).map(|g| self.counts[g * n + c]).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect();
        let valid: Vec<f64> = ious.iter().flatten().copied().collect();
        let mean = if valid.is_empty() {
            0.0
        } else {
            valid.iter().sum::<f64>() / valid.len() as f64
        };
        MiouReport {
            class_iou: ious,
            mean_iou: mean,
            n: valid.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    /// Indexed by class id; `None` for classes with an empty union.
    pub class_iou: Vec<Option<f64>>,
    pub mean_iou: f64,
    pub n: usize,
}

impl MiouReport {
    pub fn class(&self, class: ClassId) -> Option<f64> {
        self.class_iou[class.index()]
    }
}

/// Per-class IoU of the semantic part of `pred` against `gt`, ignoring
/// unlabeled ground truth.
pub fn compute_miou(pred_semantic: &PanopticRaster, gt: &PanopticRaster) -> Result<MiouReport> {
    Ok(ConfusionMatrix::from_rasters(pred_semantic, gt)?.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{build_overlap_histogram, build_segment_table, Label};

    const ROAD: u8 = 0;
    const SIDEWALK: u8 = 1;
    const CAR: u8 = 13;

    fn ledger_for(pred: &PanopticRaster, gt: &PanopticRaster) -> MatchLedger {
        let hist = build_overlap_histogram(pred, gt).unwrap();
        match_segments_pq(
            &hist,
            &build_segment_table(pred).unwrap(),
            &build_segment_table(gt).unwrap(),
        )
        .unwrap()
    }

    fn row(labels: &[Label]) -> PanopticRaster {
        PanopticRaster::new(labels.len() as u32, 1, labels.to_vec()).unwrap()
    }

    #[test]
    fn iou_point_six_matches() {
        // pred 8 px, gt 8 px, overlap 6 -> union 10
        let mut p = vec![Label::stuff(ROAD); 12];
        let mut g = vec![Label::stuff(ROAD); 12];
        for x in 0..8 {
            p[x] = Label::thing(CAR, 1);
        }
        for x in 2..10 {
            g[x] = Label::thing(CAR, 4);
        }
        let ledger = ledger_for(&row(&p), &row(&g));
        let car = ledger.class(ClassId(CAR));
        assert_eq!(car.matches.len(), 1);
        assert_eq!(car.matches[0].iou, 0.6);
        assert_eq!(car.false_positives, 0);
        assert_eq!(car.false_negatives, 0);
    }

    #[test]
    fn iou_exactly_half_is_not_a_match() {
        // pred 6 px, gt 6 px, overlap 4 -> union 8 -> IoU 0.5
        let mut p = vec![Label::stuff(ROAD); 10];
        let mut g = vec![Label::stuff(ROAD); 10];
        for x in 0..6 {
            p[x] = Label::thing(CAR, 1);
        }
        for x in 2..8 {
            g[x] = Label::thing(CAR, 1);
        }
        let ledger = ledger_for(&row(&p), &row(&g));
        let car = ledger.class(ClassId(CAR));
        assert!(car.matches.is_empty());
        assert_eq!(car.false_positives, 1);
        assert_eq!(car.false_negatives, 1);
    }

    #[test]
    fn void_covered_prediction_is_neither_tp_nor_fp() {
        let mut p = vec![Label::stuff(ROAD); 10];
        let mut g = vec![Label::stuff(ROAD); 10];
        for x in 0..10 {
            p[x] = Label::thing(CAR, 1);
        }
        for x in 0..9 {
            g[x] = Label::UNKNOWN;
        }
        let ledger = ledger_for(&row(&p), &row(&g));
        let car = ledger.class(ClassId(CAR));
        assert!(car.matches.is_empty());
        assert_eq!(car.false_positives, 0);
        // the remaining road pixel is an unmatched gt segment
        assert_eq!(ledger.class(ClassId(ROAD)).false_negatives, 1);
    }

    #[test]
    fn unknown_instance_region_absorbs_false_positive() {
        let p = row(&[Label::thing(CAR, 1); 4]);
        let g = row(&[
            Label::unknown_instance(CAR),
            Label::unknown_instance(CAR),
            Label::unknown_instance(CAR),
            Label::stuff(ROAD),
        ]);
        let ledger = ledger_for(&p, &g);
        assert_eq!(ledger.class(ClassId(CAR)).false_positives, 0);
        assert_eq!(ledger.class(ClassId(ROAD)).false_negatives, 1);
    }

    #[test]
    fn pq_arithmetic() {
        let mut tally = PanopticTally::default();
        tally.classes[CAR as usize] = ClassTally {
            iou_sum: 0.8,
            tp: 1,
            fp: 0,
            fn_: 0,
        };
        tally.classes[ROAD as usize] = ClassTally {
            iou_sum: 0.6,
            tp: 1,
            fp: 1,
            fn_: 1,
        };
        let report = MetricReport::from_tally(&tally, QualityKind::Pq);
        let car = report.class(ClassId(CAR)).unwrap();
        assert_eq!((car.pq, car.sq, car.rq), (0.8, Some(0.8), 1.0));
        let road = report.class(ClassId(ROAD)).unwrap();
        assert_eq!(road.pq, 0.3);
        assert_eq!(road.rq, 0.5);
        assert!(report.class(ClassId(SIDEWALK)).is_none());
        assert_eq!(report.all.n, 2);
        assert_eq!(report.stuff.n, 1);
        assert_eq!(report.things.n, 1);
    }

    #[test]
    fn sq_undefined_without_true_positives() {
        let t = ClassTally {
            iou_sum: 0.0,
            tp: 0,
            fp: 2,
            fn_: 0,
        };
        let m = ClassMetrics::from_tally(&t).unwrap();
        assert_eq!(m.sq, None);
        assert_eq!(m.pq, 0.0);
    }

    #[test]
    fn miou_cases() {
        let g = PanopticRaster::from_fn(4, 2, |x, _| {
            if x < 2 {
                Label::stuff(ROAD)
            } else {
                Label::stuff(SIDEWALK)
            }
        })
        .unwrap();
        let same = compute_miou(&g, &g).unwrap();
        assert_eq!(same.class(ClassId(ROAD)), Some(1.0));
        assert_eq!(same.class(ClassId(SIDEWALK)), Some(1.0));
        assert_eq!(same.mean_iou, 1.0);

        let all_road = PanopticRaster::filled(4, 2, Label::stuff(ROAD)).unwrap();
        let r = compute_miou(&all_road, &g).unwrap();
        assert_eq!(r.class(ClassId(ROAD)), Some(0.5));
        assert_eq!(r.class(ClassId(SIDEWALK)), Some(0.0));
        assert_eq!(r.n, 2);
    }

    #[test]
    fn standard_matching_rejects_masked_histogram() {
        let g = PanopticRaster::filled(2, 1, Label::stuff(ROAD)).unwrap();
        let hist = OverlapHistogram::from_counts(2, 1, [((Region::Any, Label::stuff(ROAD).region()), 2)]);
        let t = build_segment_table(&g).unwrap();
        assert!(match_segments_pq(&hist, &t, &t).is_err());
    }
}
