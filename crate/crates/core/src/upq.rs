//! Uncertainty-aware panoptic quality.
//!
//! Binary class and instance confidences are compared with the ground-truth
//! difficulty map. Correctly uncertain prediction pixels become `Any`
//! wildcards; wrongly uncertain ones become `VoidU` and count as missing
//! predictions. Matching then ignores `Any` pixels, fills them into the
//! matched ground-truth segments, and lets ground-truth segments mostly
//! covered by `Any` match on their own.

use std::collections::BTreeMap;

use crate::annotation::{Difficulty, DifficultyRaster};
use crate::confidence::{BinaryConfidenceMask, ConfidenceKind};
use crate::error::{check_dims, EvalError, Result};
use crate::pq::{match_histogram, MatchLedger, MetricReport, PredSegment, QualityKind};
use crate::raster::{histogram_from_regions, Label, PanopticRaster, Region, SegmentId, SegmentKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PixelState {
    Keep,
    Any,
    VoidU,
}

/// What a pixel becomes when it is class-unconfident, and when it is
/// class-confident but instance-unconfident.
#[inline]
pub(crate) fn uncertain_outcomes(pred: Label, gt: Label, difficulty: Difficulty) -> (PixelState, PixelState) {
    let class_unconfident = if difficulty == Difficulty::DifficultClass {
        PixelState::Any
    } else {
        PixelState::VoidU
    };
    let instance_unconfident = if gt.is_void() {
        PixelState::Keep
    } else if pred.class != gt.class || difficulty == Difficulty::NotDifficult {
        PixelState::VoidU
    } else {
        PixelState::Any
    };
    (class_unconfident, instance_unconfident)
}

/// A prediction with some pixels turned into `Any` or `VoidU`.
#[derive(Debug, Clone)]
pub struct AugmentedPrediction<'a> {
    pred: &'a PanopticRaster,
    states: Vec<PixelState>,
}

impl<'a> AugmentedPrediction<'a> {
    /// The prediction with every pixel kept.
    pub fn identity(pred: &'a PanopticRaster) -> AugmentedPrediction<'a> {
        AugmentedPrediction {
            pred,
            states: vec![PixelState::Keep; pred.pixel_count()],
        }
    }

    pub fn prediction(&self) -> &PanopticRaster {
        self.pred
    }

    pub fn states(&self) -> &[PixelState] {
        &self.states
    }

    pub fn count(&self, state: PixelState) -> usize {
        self.states.iter().filter(|&&s| s == state).count()
    }

    pub(crate) fn regions(&self) -> impl Iterator<Item = Region> + '_ {
        self.pred
            .labels()
            .iter()
            .zip(&self.states)
            .map(|(l, s)| match s {
                PixelState::Keep => l.region(),
                PixelState::Any => Region::Any,
                PixelState::VoidU => Region::VoidU,
            })
    }
}

/// Splits pixels by class confidence, then class-confident ones by instance
/// confidence, and converts the unconfident ones to `Any` or `VoidU`.
///
/// Instance-unconfident pixels whose predicted class is wrong become `VoidU`;
/// over unlabeled ground truth they are left unchanged.
pub fn apply_confidence_masks<'a>(
    pred: &'a PanopticRaster,
    gt: &PanopticRaster,
    difficulty: &DifficultyRaster,
    class_mask: &BinaryConfidenceMask,
    inst_mask: &BinaryConfidenceMask,
) -> Result<AugmentedPrediction<'a>> {
    if class_mask.kind() != ConfidenceKind::Class {
        return Err(EvalError::MaskKind {
            expected: ConfidenceKind::Class.name(),
            actual: class_mask.kind().name(),
        });
    }
    if inst_mask.kind() != ConfidenceKind::Instance {
        return Err(EvalError::MaskKind {
            expected: ConfidenceKind::Instance.name(),
            actual: inst_mask.kind().name(),
        });
    }
    let dims = gt.dims();
    check_dims(dims, pred.dims())?;
    check_dims(dims, difficulty.dims())?;
    check_dims(dims, class_mask.dims())?;
    check_dims(dims, inst_mask.dims())?;

    let states = pred
        .labels()
        .iter()
        .zip(gt.labels())
        .zip(difficulty.values())
        .zip(class_mask.confident().iter().zip(inst_mask.confident()))
        .map(|(((&p, &g), &d), (&cc, &ic))| {
            if cc && ic {
                return PixelState::Keep;
            }
            let (cu, iu) = uncertain_outcomes(p, g, d);
            if !cc {
                cu
            } else {
                iu
            }
        })
        .collect();
    Ok(AugmentedPrediction { pred, states })
}

/// Pixel of a prediction after `Any` pixels have been filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilledPixel {
    /// Original prediction label (possibly unlabeled), or a filled pixel
    /// taking the label of the segment it was matched with.
    Pred(Label),
    /// `Any` pixel outside every matched ground-truth segment.
    Any,
    VoidU,
    /// Pixel of a segment created from `Any` pixels over this ground-truth
    /// segment.
    FromAny(SegmentKey),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilledPrediction {
    width: u32,
    height: u32,
    pixels: Vec<FilledPixel>,
}

impl FilledPrediction {
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[FilledPixel] {
        &self.pixels
    }

    /// Plain panoptic view. `Any` and `VoidU` become unlabeled; segments
    /// created from `Any` get fresh things ids above the prediction's largest.
    /// Stuff segments created from `Any` share their class's single stuff
    /// segment in this view, so it can merge segments that the ledger keeps
    /// apart.
    pub fn to_panoptic(&self) -> Result<PanopticRaster> {
        let mut next_id = self
            .pixels
            .iter()
            .filter_map(|p| match p {
                FilledPixel::Pred(l) if l.class.is_thing() && l.segment != SegmentId::UNKNOWN_INSTANCE => {
                    Some(l.segment.0)
                }
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut fresh: BTreeMap<SegmentKey, u32> = BTreeMap::new();
        for p in &self.pixels {
            if let FilledPixel::FromAny(gk) = p {
                if gk.class.is_thing() {
                    fresh.entry(*gk).or_insert(0);
                }
            }
        }
        for id in fresh.values_mut() {
            next_id += 1;
            *id = next_id;
        }
        let labels = self
            .pixels
            .iter()
            .map(|p| match p {
                FilledPixel::Pred(l) => *l,
                FilledPixel::Any | FilledPixel::VoidU => Label::UNKNOWN,
                FilledPixel::FromAny(gk) if gk.class.is_thing() => Label::thing(gk.class.0, fresh[gk]),
                FilledPixel::FromAny(gk) => Label::stuff(gk.class.0),
            })
            .collect();
        PanopticRaster::new(self.width, self.height, labels)
    }
}

/// Two-step matching of a confidence-masked prediction.
///
/// Step 1 matches same-class pairs with IoU > 0.5 computed without `Any`
/// pixels and fills the `Any` pixels of each matched ground-truth segment with
/// its predicted segment. Step 2 turns each still unmatched ground-truth
/// segment that is more than half `Any` into a match with a new segment made
/// of those pixels. Final IoUs are taken on the filled prediction; leftover
/// `Any` pixels count nowhere and never produce false positives or negatives.
pub fn match_segments_upq<'a>(
    aug: &AugmentedPrediction<'a>,
    gt: &PanopticRaster,
) -> Result<(MatchLedger, FilledPrediction)> {
    check_dims(gt.dims(), aug.pred.dims())?;
    let hist = histogram_from_regions(gt.dims(), aug.regions().zip(gt.labels().iter().map(|l| l.region())));
    let ledger = match_histogram(&hist);

    let mut fills: BTreeMap<SegmentKey, FilledPixel> = BTreeMap::new();
    for (_, class) in ledger.iter() {
        for m in &class.matches {
            let fill = match m.pred {
                PredSegment::Original(pk) => FilledPixel::Pred(pk.label()),
                PredSegment::FromAny => FilledPixel::FromAny(m.gt),
            };
            fills.insert(m.gt, fill);
        }
    }
    let pixels = aug
        .pred
        .labels()
        .iter()
        .zip(&aug.states)
        .zip(gt.labels())
        .map(|((&p, &s), &g)| match s {
            PixelState::Keep => FilledPixel::Pred(p),
            PixelState::VoidU => FilledPixel::VoidU,
            PixelState::Any => match g.region() {
                Region::Segment(gk) => fills.get(&gk).copied().unwrap_or(FilledPixel::Any),
                _ => FilledPixel::Any,
            },
        })
        .collect();
    let (width, height) = gt.dims();
    Ok((
        ledger,
        FilledPrediction {
            width,
            height,
            pixels,
        },
    ))
}

pub fn compute_upq(ledger: &MatchLedger) -> MetricReport {
    MetricReport::from_tally(&ledger.tally(), QualityKind::Upq)
}
