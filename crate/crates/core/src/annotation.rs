//! Ternary difficulty maps from two-stage annotations, and label coverage.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{check_dims, EvalError, Result};
use crate::raster::{check_positive, ClassId, PanopticRaster, SegmentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Difficulty {
    NotDifficult = 0,
    DifficultInstance = 1,
    DifficultClass = 2,
}

impl Difficulty {
    pub fn from_u8(v: u8) -> Option<Difficulty> {
        match v {
            0 => Some(Difficulty::NotDifficult),
            1 => Some(Difficulty::DifficultInstance),
            2 => Some(Difficulty::DifficultClass),
            _ => None,
        }
    }
}

/// Per-pixel difficulty, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifficultyRaster {
    width: u32,
    height: u32,
    values: Vec<Difficulty>,
}

impl DifficultyRaster {
    pub fn new(width: u32, height: u32, values: Vec<Difficulty>) -> Result<DifficultyRaster> {
        check_positive(width, height)?;
        if values.len() != width as usize * height as usize {
            return Err(EvalError::Structural(format!(
                "{} difficulty values for a {width}x{height} raster",
                values.len()
            )));
        }
        Ok(DifficultyRaster {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: u32, height: u32, value: Difficulty) -> Result<DifficultyRaster> {
        check_positive(width, height)?;
        DifficultyRaster::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[Difficulty] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> Difficulty {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self, value: Difficulty) -> usize {
        self.values.iter().filter(|&&v| v == value).count()
    }
}

/// Greedy maximal-overlap bijection between the things instances of two
/// stages, per class. Ties are broken by the raster position of each
/// segment's first pixel, so the result does not depend on the id values.
fn instance_correspondence(
    h1: &PanopticRaster,
    h2: &PanopticRaster,
) -> HashMap<SegmentId, SegmentId> {
    let mut overlap: HashMap<(SegmentId, SegmentId), u64> = HashMap::new();
    let mut first1: HashMap<SegmentId, usize> = HashMap::new();
    let mut first2: HashMap<SegmentId, usize> = HashMap::new();
    for (i, (a, b)) in h1.labels().iter().zip(h2.labels()).enumerate() {
        let known = |l: &crate::raster::Label| {
            l.class.is_thing() && l.segment != SegmentId::UNKNOWN_INSTANCE
        };
        if known(a) {
            first1.entry(a.segment).or_insert(i);
        }
        if known(b) {
            first2.entry(b.segment).or_insert(i);
        }
        if known(a) && known(b) && a.class == b.class {
            *overlap.entry((a.segment, b.segment)).or_insert(0) += 1;
        }
    }
    let mut candidates: Vec<_> = overlap
        .into_iter()
        .map(|((s1, s2), n)| (Reverse(n), first2[&s2], first1[&s1], s1, s2))
        .collect();
    candidates.sort_unstable();

    let mut forward = HashMap::new();
    let mut taken = BTreeSet::new();
    for (_, _, _, s1, s2) in candidates {
        if forward.contains_key(&s1) || taken.contains(&s2) {
            continue;
        }
        forward.insert(s1, s2);
        taken.insert(s2);
    }
    forward
}

/// Difficulty of each pixel from the stage-1 (`h1`) and final (`h2`) labels.
///
/// Consistent valid labels are not difficult. A consistent things class with a
/// different instance, or an unknown instance in either stage, is
/// `DifficultInstance`. A class change, or an unknown class in either stage,
/// is `DifficultClass`. The other-class fallback label is compared like a
/// stuff class.
pub fn derive_difficulty(h1: &PanopticRaster, h2: &PanopticRaster) -> Result<DifficultyRaster> {
    check_dims(h2.dims(), h1.dims())?;
    let correspondence = instance_correspondence(h1, h2);
    let values = h1
        .labels()
        .iter()
        .zip(h2.labels())
        .map(|(a, b)| {
            if a.class == ClassId::UNKNOWN || b.class == ClassId::UNKNOWN || a.class != b.class {
                Difficulty::DifficultClass
            } else if !b.class.is_thing() {
                Difficulty::NotDifficult
            } else if a.segment == SegmentId::UNKNOWN_INSTANCE
                || b.segment == SegmentId::UNKNOWN_INSTANCE
                || correspondence.get(&a.segment) != Some(&b.segment)
            {
                Difficulty::DifficultInstance
            } else {
                Difficulty::NotDifficult
            }
        })
        .collect();
    DifficultyRaster::new(h1.width(), h1.height(), values)
}

/// Pixel and instance counts behind the coverage fractions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoverageCounts {
    pub samples: u64,
    pub pixels: u64,
    /// Labeled in the final stage and already in stage 1.
    pub labeled_h1: u64,
    /// Labeled in the final stage only.
    pub added_h2: u64,
    /// Without a valid label in the final stage.
    pub unlabeled: u64,
    pub instances_h1: u64,
    pub instances_h2: u64,
}

impl CoverageCounts {
    fn merge(&mut self, o: &CoverageCounts) {
        self.samples += o.samples;
        self.pixels += o.pixels;
        self.labeled_h1 += o.labeled_h1;
        self.added_h2 += o.added_h2;
        self.unlabeled += o.unlabeled;
        self.instances_h1 += o.instances_h1;
        self.instances_h2 += o.instances_h2;
    }

    pub fn h1_fraction(&self) -> f64 {
        self.fraction(self.labeled_h1)
    }

    pub fn added_fraction(&self) -> f64 {
        self.fraction(self.added_h2)
    }

    pub fn unlabeled_fraction(&self) -> f64 {
        self.fraction(self.unlabeled)
    }

    fn fraction(&self, n: u64) -> f64 {
        if self.pixels == 0 {
            0.0
        } else {
            n as f64 / self.pixels as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageStats {
    pub overall: CoverageCounts,
    pub per_condition: BTreeMap<String, CoverageCounts>,
}

pub struct CoverageSample<'a> {
    pub sample_id: &'a str,
    pub h1: Option<&'a PanopticRaster>,
    pub h2: Option<&'a PanopticRaster>,
    pub conditions: &'a [String],
}

fn count_instances(r: &PanopticRaster) -> u64 {
    r.labels()
        .iter()
        .filter(|l| l.class.is_thing() && l.segment != SegmentId::UNKNOWN_INSTANCE)
        .map(|l| l.segment)
        .collect::<BTreeSet<_>>()
        .len() as u64
}

fn pair_counts(h1: &PanopticRaster, h2: &PanopticRaster) -> Result<CoverageCounts> {
    check_dims(h2.dims(), h1.dims())?;
    let mut c = CoverageCounts {
        samples: 1,
        pixels: h2.pixel_count() as u64,
        instances_h1: count_instances(h1),
        instances_h2: count_instances(h2),
        ..CoverageCounts::default()
    };
    for (a, b) in h1.labels().iter().zip(h2.labels()) {
        match (a.class.is_eval(), b.class.is_eval()) {
            (_, false) => c.unlabeled += 1,
            (true, true) => c.labeled_h1 += 1,
            (false, true) => c.added_h2 += 1,
        }
    }
    Ok(c)
}

/// Label coverage of each annotation stage, overall and per condition tag.
pub fn coverage_stats(samples: &[CoverageSample<'_>]) -> Result<CoverageStats> {
    let mut stats = CoverageStats::default();
    for s in samples {
        let (Some(h1), Some(h2)) = (s.h1, s.h2) else {
            return Err(EvalError::Manifest(format!(
                "sample '{}' lacks a stage-1 or stage-2 annotation",
                s.sample_id
            )));
        };
        let counts = pair_counts(h1, h2).map_err(|e| e.in_sample(s.sample_id))?;
        stats.overall.merge(&counts);
        for tag in s.conditions {
            stats
                .per_condition
                .entry(tag.clone())
                .or_default()
                .merge(&counts);
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Label;

    const CAR: u8 = 13;
    const ROAD: u8 = 0;

    fn one(l: Label) -> PanopticRaster {
        PanopticRaster::new(1, 1, vec![l]).unwrap()
    }

    fn derive1(a: Label, b: Label) -> Difficulty {
        derive_difficulty(&one(a), &one(b)).unwrap().values()[0]
    }

    #[test]
    fn documented_cases() {
        assert_eq!(derive1(Label::thing(CAR, 5), Label::thing(CAR, 2)), Difficulty::NotDifficult);
        assert_eq!(
            derive1(Label::unknown_instance(CAR), Label::thing(CAR, 2)),
            Difficulty::DifficultInstance
        );
        assert_eq!(derive1(Label::UNKNOWN, Label::thing(CAR, 2)), Difficulty::DifficultClass);
    }

    #[test]
    fn split_instance_is_instance_difficult() {
        // stage 1 sees one car, stage 2 splits it into two
        let h1 = PanopticRaster::filled(4, 1, Label::thing(CAR, 1)).unwrap();
        let h2 = PanopticRaster::from_fn(4, 1, |x, _| Label::thing(CAR, if x < 3 { 8 } else { 9 })).unwrap();
        let d = derive_difficulty(&h1, &h2).unwrap();
        assert_eq!(
            d.values(),
            &[
                Difficulty::NotDifficult,
                Difficulty::NotDifficult,
                Difficulty::NotDifficult,
                Difficulty::DifficultInstance
            ]
        );
    }

    #[test]
    fn coverage_fractions() {
        let full = PanopticRaster::filled(4, 1, Label::stuff(ROAD)).unwrap();
        let half = PanopticRaster::from_fn(4, 1, |x, _| if x < 2 { Label::stuff(ROAD) } else { Label::UNKNOWN })
            .unwrap();
        let tags = vec!["fog".to_string()];
        let stats = coverage_stats(&[CoverageSample {
            sample_id: "a",
            h1: Some(&full),
            h2: Some(&full),
            conditions: &tags,
        }])
        .unwrap();
        assert_eq!(stats.overall.h1_fraction(), 1.0);
        assert_eq!(stats.overall.added_fraction(), 0.0);

        let stats = coverage_stats(&[CoverageSample {
            sample_id: "b",
            h1: Some(&half),
            h2: Some(&full),
            conditions: &tags,
        }])
        .unwrap();
        assert_eq!(stats.per_condition["fog"].added_fraction(), 0.5);
        assert_eq!(stats.overall.unlabeled_fraction(), 0.0);

        let err = coverage_stats(&[CoverageSample {
            sample_id: "c",
            h1: None,
            h2: Some(&full),
            conditions: &tags,
        }]);
        assert!(err.is_err());
    }
}
