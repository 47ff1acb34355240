//! Confidence rasters and the confidence baselines: constant, ground-truth
//! oracle, and marginalization over mask-classification outputs.

use crate::annotation::{Difficulty, DifficultyRaster};
use crate::error::{EvalError, Result};
use crate::raster::{check_positive, ClassId, Label, PanopticRaster, SegmentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConfidenceKind {
    Class,
    Instance,
}

impl ConfidenceKind {
    pub fn name(self) -> &'static str {
        match self {
            ConfidenceKind::Class => "class",
            ConfidenceKind::Instance => "instance",
        }
    }
}

/// Per-pixel confidence score in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRaster {
    width: u32,
    height: u32,
    kind: ConfidenceKind,
    scores: Vec<f64>,
}

impl ConfidenceRaster {
    pub fn new(
        width: u32,
        height: u32,
        kind: ConfidenceKind,
        scores: Vec<f64>,
    ) -> Result<ConfidenceRaster> {
        check_positive(width, height)?;
        if scores.len() != width as usize * height as usize {
            return Err(EvalError::Structural(format!(
                "{} scores for a {width}x{height} raster",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(EvalError::InvalidArgument(format!(
                "confidence score {bad} outside [0, 1]"
            )));
        }
        Ok(ConfidenceRaster {
            width,
            height,
            kind,
            scores,
        })
    }

    pub fn filled(width: u32, height: u32, kind: ConfidenceKind, value: f64) -> Result<ConfidenceRaster> {
        check_positive(width, height)?;
        ConfidenceRaster::new(width, height, kind, vec![value; width as usize * height as usize])
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn kind(&self) -> ConfidenceKind {
        self.kind
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn with_kind(mut self, kind: ConfidenceKind) -> ConfidenceRaster {
        self.kind = kind;
        self
    }
}

/// Thresholded confidence: `true` marks a confident pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryConfidenceMask {
    width: u32,
    height: u32,
    kind: ConfidenceKind,
    confident: Vec<bool>,
}

impl BinaryConfidenceMask {
    pub fn new(
        width: u32,
        height: u32,
        kind: ConfidenceKind,
        confident: Vec<bool>,
    ) -> Result<BinaryConfidenceMask> {
        check_positive(width, height)?;
        if confident.len() != width as usize * height as usize {
            return Err(EvalError::Structural(format!(
                "{} mask values for a {width}x{height} raster",
                confident.len()
            )));
        }
        Ok(BinaryConfidenceMask {
            width,
            height,
            kind,
            confident,
        })
    }

    pub fn all_confident(width: u32, height: u32, kind: ConfidenceKind) -> Result<BinaryConfidenceMask> {
        check_positive(width, height)?;
        BinaryConfidenceMask::new(width, height, kind, vec![true; width as usize * height as usize])
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn kind(&self) -> ConfidenceKind {
        self.kind
    }

    pub fn confident(&self) -> &[bool] {
        &self.confident
    }
}

/// Both confidence rasters uniformly at `value`.
pub fn constant_confidence(dims: (u32, u32), value: f64) -> Result<(ConfidenceRaster, ConfidenceRaster)> {
    if !(0.0..=1.0).contains(&value) {
        return Err(EvalError::InvalidArgument(format!(
            "constant confidence {value} outside [0, 1]"
        )));
    }
    Ok((
        ConfidenceRaster::filled(dims.0, dims.1, ConfidenceKind::Class, value)?,
        ConfidenceRaster::filled(dims.0, dims.1, ConfidenceKind::Instance, value)?,
    ))
}

/// Confidences read off the ground-truth difficulty map.
///
/// Class-difficult pixels get instance score 1: they are already routed by
/// the class confidence, so the value is only there to make the raster total.
pub fn oracle_confidence(difficulty: &DifficultyRaster) -> (ConfidenceRaster, ConfidenceRaster) {
    let (w, h) = difficulty.dims();
    let score = |hit: Difficulty| -> Vec<f64> {
        difficulty
            .values()
            .iter()
            .map(|&d| if d == hit { 0.0 } else { 1.0 })
            .collect()
    };
    (
        ConfidenceRaster {
            width: w,
            height: h,
            kind: ConfidenceKind::Class,
            scores: score(Difficulty::DifficultClass),
        },
        ConfidenceRaster {
            width: w,
            height: h,
            kind: ConfidenceKind::Instance,
            scores: score(Difficulty::DifficultInstance),
        },
    )
}

/// Index of the no-object entry in a class distribution.
pub const NO_OBJECT: usize = ClassId::NUM_EVAL;

/// One (class distribution, soft mask) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    /// Probabilities over the 19 classes followed by no-object.
    pub probs: Vec<f64>,
    /// Row-major soft mask in [0, 1].
    pub mask: Vec<f64>,
}

impl MaskPair {
    /// Most likely entry of the distribution; the lowest index wins ties.
    pub fn top_class(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Output of a mask-classification network for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskClassificationOutput {
    width: u32,
    height: u32,
    pairs: Vec<MaskPair>,
}

impl MaskClassificationOutput {
    pub fn new(width: u32, height: u32, pairs: Vec<MaskPair>) -> Result<MaskClassificationOutput> {
        check_positive(width, height)?;
        if pairs.is_empty() {
            return Err(EvalError::InvalidArgument("mask classification output has no pairs".into()));
        }
        let n = width as usize * height as usize;
        for (i, pair) in pairs.iter().enumerate() {
            if pair.probs.len() != NO_OBJECT + 1 {
                return Err(EvalError::InvalidArgument(format!(
                    "pair {i}: {} class probabilities, expected {}",
                    pair.probs.len(),
                    NO_OBJECT + 1
                )));
            }
            let sum: f64 = pair.probs.iter().sum();
            if pair.probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
                return Err(EvalError::InvalidArgument(format!(
                    "pair {i}: class probabilities are not a distribution (sum {sum})"
                )));
            }
            if pair.mask.len() != n {
                return Err(EvalError::InvalidArgument(format!(
                    "pair {i}: mask has {} values for {n} pixels",
                    pair.mask.len()
                )));
            }
            if pair.mask.iter().any(|m| !(0.0..=1.0).contains(m)) {
                return Err(EvalError::InvalidArgument(format!("pair {i}: mask value outside [0, 1]")));
            }
        }
        Ok(MaskClassificationOutput {
            width,
            height,
            pairs,
        })
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pairs(&self) -> &[MaskPair] {
        &self.pairs
    }

    fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Best pair at a pixel among pairs whose top class passes `accept`.
    fn argmax(&self, px: usize, classes: &[usize], accept: impl Fn(usize) -> bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, pair) in self.pairs.iter().enumerate() {
            let c = classes[i];
            if c == NO_OBJECT || !accept(c) {
                continue;
            }
            let score = pair.probs[c] * pair.mask[px];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        best.filter(|&(_, s)| s > 0.0).map(|(i, _)| i)
    }

    fn top_classes(&self) -> Vec<usize> {
        self.pairs.iter().map(MaskPair::top_class).collect()
    }
}

fn pair_label(class: usize, pair: usize) -> Label {
    let class = ClassId(class as u8);
    if class.is_thing() {
        Label::thing(class.0, pair as u32 + 1)
    } else {
        Label::stuff(class.0)
    }
}

/// Assigns each pixel to the pair maximizing class probability times mask
/// score, skipping pairs whose top class is no-object. Things pairs become
/// segment `i + 1`; stuff pairs of one class merge into that class's single
/// segment. Pixels without a positive score stay unlabeled.
pub fn panoptic_inference(mc: &MaskClassificationOutput) -> Result<PanopticRaster> {
    let classes = mc.top_classes();
    let labels = (0..mc.pixel_count())
        .map(|px| match mc.argmax(px, &classes, |_| true) {
            Some(i) => pair_label(classes[i], i),
            None => Label::UNKNOWN,
        })
        .collect();
    PanopticRaster::new(mc.width, mc.height, labels)
}

/// Class and instance confidence by marginalizing over all pairs.
///
/// With masks normalized to sum to one over the pairs at each pixel,
/// the class score is the total probability of the assigned class and the
/// instance score is the assigned pair's share of it. Unlabeled pixels, and
/// pixels where every mask is zero, score 0 on both.
pub fn marginal_confidences(
    mc: &MaskClassificationOutput,
    assignment: &PanopticRaster,
) -> Result<(ConfidenceRaster, ConfidenceRaster)> {
    crate::error::check_dims(mc.dims(), assignment.dims())?;
    let classes = mc.top_classes();
    let n = mc.pixel_count();
    let mut s_class = vec![0.0; n];
    let mut s_inst = vec![0.0; n];
    for (px, label) in assignment.labels().iter().enumerate() {
        if label.is_void() || label.segment == SegmentId::UNKNOWN_INSTANCE {
            continue;
        }
        let mask_sum: f64 = mc.pairs.iter().map(|p| p.mask[px]).sum();
        if mask_sum <= 0.0 {
            continue;
        }
        let c = label.class.index();
        let assigned = if label.class.is_thing() {
            let i = label.segment.0 as usize - 1;
            (i < mc.pairs.len() && classes[i] == c).then_some(i)
        } else {
            mc.argmax(px, &classes, |k| k == c)
        };
        let Some(assigned) = assigned else {
            return Err(EvalError::Structural(format!(
                "pixel {px}: label {} does not come from this mask classification output",
                label.class
            )));
        };
        let class_score: f64 = mc
            .pairs
            .iter()
            .map(|p| p.probs[c] * (p.mask[px] / mask_sum))
            .sum();
        let pair = &mc.pairs[assigned];
        let pair_score = pair.probs[c] * (pair.mask[px] / mask_sum);
        s_class[px] = class_score.min(1.0);
        if class_score > 0.0 {
            s_inst[px] = (pair_score / class_score).min(1.0);
        }
    }
    Ok((
        ConfidenceRaster::new(mc.width, mc.height, ConfidenceKind::Class, s_class)?,
        ConfidenceRaster::new(mc.width, mc.height, ConfidenceKind::Instance, s_inst)?,
    ))
}
