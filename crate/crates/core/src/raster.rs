//! Label rasters, segment tables and the joint-overlap histogram.
//!
//! Every metric in this crate is computed from an [`OverlapHistogram`]: one pass
//! over the pixels of a (prediction, ground truth) pair produces the sparse
//! co-occurrence counts of their regions, and matching never looks at pixels
//! again.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{check_dims, EvalError, Result};

/// Names of the 19 evaluation classes, indexed by class id.
pub const CLASS_NAMES: [&str; 19] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

/// Semantic class of a pixel: one of the 19 evaluation classes or a sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub u8);

impl ClassId {
    pub const NUM_EVAL: usize = 19;
    /// First things class; ids below are stuff.
    pub const FIRST_THING: u8 = 11;
    pub const UNKNOWN: ClassId = ClassId(255);
    pub const OTHER: ClassId = ClassId(254);

    pub fn new(value: u8) -> Result<ClassId> {
        let class = ClassId(value);
        if class.is_eval() || class.is_sentinel() {
            Ok(class)
        } else {
            Err(EvalError::Structural(format!("class id {value} is not a valid class")))
        }
    }

    pub fn is_eval(self) -> bool {
        (self.0 as usize) < Self::NUM_EVAL
    }

    pub fn is_sentinel(self) -> bool {
        self == Self::UNKNOWN || self == Self::OTHER
    }

    pub fn is_thing(self) -> bool {
        self.is_eval() && self.0 >= Self::FIRST_THING
    }

    pub fn is_stuff(self) -> bool {
        self.0 < Self::FIRST_THING
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::UNKNOWN => "unknown_class",
            Self::OTHER => "other_class",
            c if c.is_eval() => CLASS_NAMES[c.index()],
            _ => "invalid",
        }
    }

    pub fn from_name(name: &str) -> Option<ClassId> {
        CLASS_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| ClassId(i as u8))
    }

    pub fn eval_classes() -> impl Iterator<Item = ClassId> {
        (0..Self::NUM_EVAL as u8).map(ClassId)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Instance identity of a pixel.
///
/// Stuff pixels carry [`SegmentId::NONE`]; the class alone names the segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentId(pub u32);

impl SegmentId {
    pub const NONE: SegmentId = SegmentId(0);
    pub const UNKNOWN_INSTANCE: SegmentId = SegmentId(u32::MAX);
}

/// Per-pixel panoptic label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub class: ClassId,
    pub segment: SegmentId,
}

impl Label {
    pub const UNKNOWN: Label = Label {
        class: ClassId::UNKNOWN,
        segment: SegmentId::UNKNOWN_INSTANCE,
    };
    pub const OTHER: Label = Label {
        class: ClassId::OTHER,
        segment: SegmentId::NONE,
    };

    pub fn stuff(class: u8) -> Label {
        Label {
            class: ClassId(class),
            segment: SegmentId::NONE,
        }
    }

    pub fn thing(class: u8, id: u32) -> Label {
        Label {
            class: ClassId(class),
            segment: SegmentId(id),
        }
    }

    pub fn unknown_instance(class: u8) -> Label {
        Label {
            class: ClassId(class),
            segment: SegmentId::UNKNOWN_INSTANCE,
        }
    }

    pub fn is_void(self) -> bool {
        self.class.is_sentinel()
    }

    /// Region this label occupies in an overlap histogram.
    pub fn region(self) -> Region {
        if self.class.is_sentinel() {
            Region::Void
        } else if self.segment == SegmentId::UNKNOWN_INSTANCE {
            Region::UnknownInstance(self.class)
        } else {
            Region::Segment(SegmentKey {
                class: self.class,
                segment: self.segment,
            })
        }
    }

    fn normalized(self) -> Result<Label> {
        let class = ClassId::new(self.class.0)?;
        if class == ClassId::UNKNOWN {
            return Ok(Label::UNKNOWN);
        }
        if class == ClassId::OTHER {
            return Ok(Label::OTHER);
        }
        if class.is_stuff() && self.segment != SegmentId::NONE {
            return Err(EvalError::Structural(format!(
                "stuff class {class} carries segment id {}",
                self.segment.0
            )));
        }
        if class.is_thing() && self.segment == SegmentId::NONE {
            return Err(EvalError::Structural(format!(
                "things class {class} pixel without a segment id"
            )));
        }
        Ok(self)
    }
}

/// Identity of an evaluable segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentKey {
    pub class: ClassId,
    pub segment: SegmentId,
}

impl SegmentKey {
    pub fn label(self) -> Label {
        Label {
            class: self.class,
            segment: self.segment,
        }
    }
}

/// A histogram key: an evaluable segment or one of the sentinel regions.
///
/// `Any` and `VoidU` only occur on the prediction side after confidence masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Segment(SegmentKey),
    /// Unlabeled pixels (unknown or other class).
    Void,
    /// Things pixels of a known class without instance identity.
    UnknownInstance(ClassId),
    Any,
    VoidU,
}

impl Region {
    pub fn segment(self) -> Option<SegmentKey> {
        match self {
            Region::Segment(key) => Some(key),
            _ => None,
        }
    }
}

/// Row-major label raster with top-left origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanopticRaster {
    width: u32,
    height: u32,
    labels: Vec<Label>,
}

impl PanopticRaster {
    /// Validates per-pixel label structure. Sentinel-class pixels are
    /// normalized: unknown class implies unknown instance, other class has no
    /// segment id.
    pub fn new(width: u32, height: u32, labels: Vec<Label>) -> Result<PanopticRaster> {
        check_positive(width, height)?;
        if labels.len() != width as usize * height as usize {
            return Err(EvalError::Structural(format!(
                "{} labels for a {width}x{height} raster",
                labels.len()
            )));
        }
        let labels = labels
            .into_iter()
            .map(Label::normalized)
            .collect::<Result<Vec<_>>>()?;
        Ok(PanopticRaster {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: u32, height: u32, label: Label) -> Result<PanopticRaster> {
        check_positive(width, height)?;
        PanopticRaster::new(width, height, vec![label; width as usize * height as usize])
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> Label,
    ) -> Result<PanopticRaster> {
        check_positive(width, height)?;
        let mut labels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        PanopticRaster::new(width, height, labels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, x: u32, y: u32) -> Label {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn into_labels(self) -> Vec<Label> {
        self.labels
    }
}

pub(crate) fn check_positive(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(EvalError::InvalidDimensions { width, height });
    }
    Ok(())
}

/// Areas of every evaluable segment of one raster, plus sentinel pixel counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentTable {
    entries: Vec<(SegmentKey, u64)>,
    index: HashMap<SegmentKey, usize>,
    void_pixels: u64,
    unknown_instance_pixels: u64,
}

impl SegmentTable {
    pub fn area(&self, key: SegmentKey) -> Option<u64> {
        self.index.get(&key).map(|&i| self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SegmentKey, u64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn void_pixels(&self) -> u64 {
        self.void_pixels
    }

    pub fn unknown_instance_pixels(&self) -> u64 {
        self.unknown_instance_pixels
    }

    /// Pixels that belong to no evaluable segment.
    pub fn sentinel_pixels(&self) -> u64 {
        self.void_pixels + self.unknown_instance_pixels
    }
}

/// Counts segment areas and checks that no things segment id spans two classes.
pub fn build_segment_table(raster: &PanopticRaster) -> Result<SegmentTable> {
    let mut areas: HashMap<Label, u64> = HashMap::new();
    let mut void_pixels = 0u64;
    let mut unknown_instance_pixels = 0u64;
    let mut run: Option<(Label, u64)> = None;
    let mut flush = |label: Label, n: u64, areas: &mut HashMap<Label, u64>| match label.region() {
        Region::Void => void_pixels += n,
        Region::UnknownInstance(_) => unknown_instance_pixels += n,
        _ => *areas.entry(label).or_insert(0) += n,
    };
    for &label in raster.labels() {
        match &mut run {
            Some((l, n)) if *l == label => *n += 1,
            _ => {
                if let Some((l, n)) = run.take() {
                    flush(l, n, &mut areas);
                }
                run = Some((label, 1));
            }
        }
    }
    if let Some((l, n)) = run {
        flush(l, n, &mut areas);
    }

    let mut entries: Vec<(SegmentKey, u64)> = areas
        .into_iter()
        .map(|(label, area)| {
            (
                SegmentKey {
                    class: label.class,
                    segment: label.segment,
                },
                area,
            )
        })
        .collect();
    entries.sort_unstable();

    let mut owner: HashMap<SegmentId, ClassId> = HashMap::new();
    for (key, _) in &entries {
        if key.class.is_thing() {
            if let Some(previous) = owner.insert(key.segment, key.class) {
                return Err(EvalError::Structural(format!(
                    "segment id {} appears with classes {} and {}",
                    key.segment.0, previous, key.class
                )));
            }
        }
    }
    let index = entries
        .iter()
        .enumerate()
        .map(|(i, (key, _))| (*key, i))
        .collect();
    Ok(SegmentTable {
        entries,
        index,
        void_pixels,
        unknown_instance_pixels,
    })
}

/// Sparse joint histogram of (prediction region, ground-truth region) pixel counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapHistogram {
    width: u32,
    height: u32,
    counts: BTreeMap<(Region, Region), u64>,
}

impl OverlapHistogram {
    /// Builds a histogram from raw counts. Zero entries are dropped.
    pub fn from_counts(
        width: u32,
        height: u32,
        counts: impl IntoIterator<Item = ((Region, Region), u64)>,
    ) -> OverlapHistogram {
        let mut map = BTreeMap::new();
        for (key, n) in counts {
            if n > 0 {
                *map.entry(key).or_insert(0) += n;
            }
        }
        OverlapHistogram {
            width,
            height,
            counts: map,
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, pred: Region, gt: Region) -> u64 {
        self.counts.get(&(pred, gt)).copied().unwrap_or(0)
    }

    /// Entries in (prediction, ground truth) key order.
    pub fn iter(&self) -> impl Iterator<Item = (Region, Region, u64)> + '_ {
        self.counts.iter().map(|(&(p, g), &n)| (p, g, n))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn pred_marginal(&self) -> BTreeMap<Region, u64> {
        let mut out = BTreeMap::new();
        for (&(p, _), &n) in &self.counts {
            *out.entry(p).or_insert(0) += n;
        }
        out
    }

    pub fn gt_marginal(&self) -> BTreeMap<Region, u64> {
        let mut out = BTreeMap::new();
        for (&(_, g), &n) in &self.counts {
            *out.entry(g).or_insert(0) += n;
        }
        out
    }

    /// Swaps the roles of prediction and ground truth.
    pub fn transposed(&self) -> OverlapHistogram {
        OverlapHistogram::from_counts(
            self.width,
            self.height,
            self.counts.iter().map(|(&(p, g), &n)| ((g, p), n)),
        )
    }
}

/// Single pass over both rasters counting region co-occurrences.
pub fn build_overlap_histogram(
    pred: &PanopticRaster,
    gt: &PanopticRaster,
) -> Result<OverlapHistogram> {
    check_dims(gt.dims(), pred.dims())?;
    Ok(histogram_from_regions(
        gt.dims(),
        pred.labels()
            .iter()
            .zip(gt.labels())
            .map(|(p, g)| (p.region(), g.region())),
    ))
}

pub(crate) fn histogram_from_regions(
    dims: (u32, u32),
    pairs: impl Iterator<Item = (Region, Region)>,
) -> OverlapHistogram {
    let mut counts: HashMap<(Region, Region), u64> = HashMap::new();
    let mut run: Option<((Region, Region), u64)> = None;
    for pair in pairs {
        match &mut run {
            Some((key, n)) if *key == pair => *n += 1,
            _ => {
                if let Some((key, n)) = run.take() {
                    *counts.entry(key).or_insert(0) += n;
                }
                run = Some((pair, 1));
            }
        }
    }
    if let Some((key, n)) = run {
        *counts.entry(key).or_insert(0) += n;
    }
    OverlapHistogram::from_counts(dims.0, dims.1, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROAD: u8 = 0;
    const CAR: u8 = 13;
    const BUS: u8 = 15;

    #[test]
    fn uniform_stuff_raster_has_one_segment() {
        let r = PanopticRaster::filled(2, 2, Label::stuff(ROAD)).unwrap();
        let table = build_segment_table(&r).unwrap();
        assert_eq!(table.len(), 1);
        let key = SegmentKey {
            class: ClassId(ROAD),
            segment: SegmentId::NONE,
        };
        assert_eq!(table.area(key), Some(4));
    }

    #[test]
    fn two_car_instances() {
        let r = PanopticRaster::new(
            2,
            2,
            vec![
                Label::thing(CAR, 1),
                Label::thing(CAR, 1),
                Label::thing(CAR, 2),
                Label::thing(CAR, 2),
            ],
        )
        .unwrap();
        let table = build_segment_table(&r).unwrap();
        let areas: Vec<u64> = table.iter().map(|(_, a)| a).collect();
        assert_eq!(areas, vec![2, 2]);
    }

    #[test]
    fn segment_id_shared_across_classes_is_rejected() {
        let r = PanopticRaster::new(2, 1, vec![Label::thing(CAR, 7), Label::thing(BUS, 7)]).unwrap();
        let err = build_segment_table(&r).unwrap_err();
        assert!(matches!(err, EvalError::Structural(_)), "{err}");
    }

    #[test]
    fn stuff_with_instance_id_is_rejected() {
        let err = PanopticRaster::new(1, 1, vec![Label::thing(ROAD, 3)]).unwrap_err();
        assert!(matches!(err, EvalError::Structural(_)));
        assert!(PanopticRaster::new(1, 1, vec![Label::stuff(CAR)]).is_err());
        assert!(PanopticRaster::new(1, 1, vec![Label::stuff(40)]).is_err());
        assert!(PanopticRaster::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn unknown_class_is_normalized() {
        let r = PanopticRaster::new(
            1,
            1,
            vec![Label {
                class: ClassId::UNKNOWN,
                segment: SegmentId(5),
            }],
        )
        .unwrap();
        assert_eq!(r.labels()[0], Label::UNKNOWN);
        let table = build_segment_table(&r).unwrap();
        assert!(table.is_empty());
        assert_eq!(table.sentinel_pixels(), 1);
    }

    #[test]
    fn identical_rasters_give_diagonal_histogram() {
        let r = PanopticRaster::from_fn(4, 3, |x, y| {
            if x < 2 {
                Label::thing(CAR, 1 + y)
            } else {
                Label::stuff(ROAD)
            }
        })
        .unwrap();
        let hist = build_overlap_histogram(&r, &r).unwrap();
        let table = build_segment_table(&r).unwrap();
        for (p, g, n) in hist.iter() {
            assert_eq!(p, g);
            assert_eq!(Some(n), table.area(p.segment().unwrap()));
        }
        assert_eq!(hist.len(), table.len());
    }

    #[test]
    fn one_pred_segment_over_two_gt_segments() {
        let pred = PanopticRaster::filled(10, 1, Label::thing(CAR, 1)).unwrap();
        let gt = PanopticRaster::from_fn(10, 1, |x, _| {
            if x < 6 {
                Label::thing(CAR, 1)
            } else {
                Label::thing(CAR, 2)
            }
        })
        .unwrap();
        let hist = build_overlap_histogram(&pred, &gt).unwrap();
        let p = Label::thing(CAR, 1).region();
        assert_eq!(hist.get(p, Label::thing(CAR, 1).region()), 6);
        assert_eq!(hist.get(p, Label::thing(CAR, 2).region()), 4);
        assert_eq!(hist.len(), 2);
    }

    #[test]
    fn dimension_mismatch() {
        let a = PanopticRaster::filled(2, 2, Label::stuff(ROAD)).unwrap();
        let b = PanopticRaster::filled(2, 3, Label::stuff(ROAD)).unwrap();
        assert!(matches!(
            build_overlap_histogram(&a, &b),
            Err(EvalError::DimensionMismatch { .. })
        ));
    }
}
