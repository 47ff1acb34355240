//! Seeded synthetic scenes for testing.
//!
//! Ground truth is a Voronoi partition into stuff classes with rectangular
//! things instances painted over it. The prediction is the same scene with
//! per-object perturbations (jitter, class flips, drops). Prediction errors of
//! "marked" perturbations are written into the difficulty map, so with
//! `difficulty_rate = 1` every error lies in a difficult region.
//!
//! All randomness comes from [`SplitMix64`] drawn in a fixed order, so a seed
//! determines the scene exactly on every platform.

use std::path::{Path, PathBuf};

use crate::annotation::{Difficulty, DifficultyRaster};
use crate::confidence::{ConfidenceKind, ConfidenceRaster};
use crate::error::{EvalError, Result};
use crate::io::{self, DatasetManifest, Encoding, SampleRecord};
use crate::raster::{ClassId, Label, PanopticRaster, SegmentId};

/// SplitMix64 generator (Steele, Lea and Flood).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Independent stream seeded from this one.
    pub fn fork(&mut self) -> SplitMix64 {
        SplitMix64::new(self.next_u64())
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n), by 128-bit multiply. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform integer in [lo, hi].
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfidenceMode {
    /// Low scores on difficult pixels, high elsewhere.
    Aligned,
    /// Uniform random scores, unrelated to difficulty.
    Random,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Number of stuff classes used, 1..=11.
    pub stuff_classes: u8,
    /// Number of things classes used, 0..=8.
    pub thing_classes: u8,
    /// Inclusive range of instances per things class.
    pub instances_per_class: (u32, u32),
    pub jitter_px: u32,
    pub class_flip_rate: f64,
    pub drop_rate: f64,
    /// Probability that a perturbed object's errors are marked difficult.
    pub difficulty_rate: f64,
    /// Probability of each of three unlabeled ground-truth rectangles.
    pub void_rate: f64,
    /// Probability that a ground-truth instance has no instance identity.
    pub unknown_instance_rate: f64,
    pub confidence: ConfidenceMode,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            width: 64,
            height: 64,
            stuff_classes: 4,
            thing_classes: 3,
            instances_per_class: (1, 3),
            jitter_px: 2,
            class_flip_rate: 0.1,
            drop_rate: 0.1,
            difficulty_rate: 0.5,
            void_rate: 0.3,
            unknown_instance_rate: 0.1,
            confidence: ConfidenceMode::Aligned,
        }
    }
}

impl SceneSpec {
    /// A spec with every perturbation switched off.
    pub fn unperturbed(seed: u64, width: u32, height: u32) -> SceneSpec {
        SceneSpec {
            seed,
            width,
            height,
            jitter_px: 0,
            class_flip_rate: 0.0,
            drop_rate: 0.0,
            ..SceneSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(EvalError::InvalidDimensions {
                width: self.width,
                height: self.height,
            });
        }
        let rates = [
            self.class_flip_rate,
            self.drop_rate,
            self.difficulty_rate,
            self.void_rate,
            self.unknown_instance_rate,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(EvalError::InvalidArgument("scene rates must lie in [0, 1]".into()));
        }
        if !(1..=11).contains(&self.stuff_classes) || self.thing_classes > 8 {
            return Err(EvalError::InvalidArgument("class counts out of range".into()));
        }
        if self.instances_per_class.0 > self.instances_per_class.1 {
            return Err(EvalError::InvalidArgument("empty instance count range".into()));
        }
        if let ConfidenceMode::Constant(v) = self.confidence {
            if !(0.0..=1.0).contains(&v) {
                return Err(EvalError::InvalidArgument("constant confidence outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub gt: PanopticRaster,
    pub difficulty: DifficultyRaster,
    pub pred: PanopticRaster,
    pub class_conf: ConfidenceRaster,
    pub inst_conf: ConfidenceRaster,
}

struct Rect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Rect {
    fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    fn shifted(&self, dx: i64, dy: i64) -> Rect {
        Rect {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }
}

fn random_rect(rng: &mut SplitMix64, w: u32, h: u32) -> Rect {
    let (w, h) = (w as u64, h as u64);
    let rw = rng.range((w / 10).max(1), (w / 3).max(2).min(w));
    let rh = rng.range((h / 10).max(1), (h / 3).max(2).min(h));
    let x0 = rng.range(0, w - rw.min(w)) as i64;
    let y0 = rng.range(0, h - rh.min(h)) as i64;
    Rect {
        x0,
        y0,
        x1: x0 + rw as i64,
        y1: y0 + rh as i64,
    }
}

struct StuffSeed {
    x: i64,
    y: i64,
    class: u8,
    pred_class: Option<u8>,
    marked: bool,
}

struct Instance {
    class: u8,
    id: u32,
    unknown: bool,
    rect: Rect,
    pred_class: Option<u8>,
    pred_rect: Rect,
    marked: bool,
}

fn other_class(rng: &mut SplitMix64, class: u8, first: u8, count: u8) -> u8 {
    // draw among the used classes when possible, otherwise among the group
    let (first, count) = if count > 1 {
        (first, count)
    } else if class < ClassId::FIRST_THING {
        (0, ClassId::FIRST_THING)
    } else {
        (ClassId::FIRST_THING, 8)
    };
    let k = rng.below(count as u64 - 1) as u8;
    let candidate = first + k;
    if candidate >= class {
        candidate + 1
    } else {
        candidate
    }
}

/// Generates a scene; a deterministic function of `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = SplitMix64::new(spec.seed);
    let mut layout = rng.fork();
    let mut perturb = rng.fork();
    let mut noise = rng.fork();

    let n_seeds = 2 * spec.stuff_classes as usize + 2;
    let mut seeds: Vec<StuffSeed> = (0..n_seeds)
        .map(|i| StuffSeed {
            x: layout.below(w as u64) as i64,
            y: layout.below(h as u64) as i64,
            class: if i < spec.stuff_classes as usize {
                i as u8
            } else {
                layout.below(spec.stuff_classes as u64) as u8
            },
            pred_class: None,
            marked: false,
        })
        .collect();

    let mut instances: Vec<Instance> = Vec::new();
    for k in 0..spec.thing_classes {
        let class = ClassId::FIRST_THING + k;
        let count = layout.range(spec.instances_per_class.0 as u64, spec.instances_per_class.1 as u64);
        for _ in 0..count {
            let rect = random_rect(&mut layout, w, h);
            let unknown = layout.chance(spec.unknown_instance_rate);
            instances.push(Instance {
                class,
                id: instances.len() as u32 + 1,
                unknown,
                pred_rect: rect.shifted(0, 0),
                rect,
                pred_class: None,
                marked: false,
            });
        }
    }
    let voids: Vec<Rect> = (0..3)
        .filter_map(|_| {
            let r = random_rect(&mut layout, w, h);
            layout.chance(spec.void_rate).then_some(r)
        })
        .collect();

    for s in &mut seeds {
        let dropped = perturb.chance(spec.drop_rate);
        let flipped = perturb.chance(spec.class_flip_rate);
        let new_class = other_class(&mut perturb, s.class, 0, spec.stuff_classes);
        s.pred_class = match (dropped, flipped) {
            (true, _) => None,
            (false, true) => Some(new_class),
            (false, false) => Some(s.class),
        };
        let marked = perturb.chance(spec.difficulty_rate);
        s.marked = (dropped || flipped) && marked;
    }
    let j = spec.jitter_px as u64;
    for inst in &mut instances {
        let dropped = perturb.chance(spec.drop_rate);
        let flipped = perturb.chance(spec.class_flip_rate);
        let new_class = other_class(&mut perturb, inst.class, ClassId::FIRST_THING, spec.thing_classes);
        let dx = perturb.range(0, 2 * j) as i64 - j as i64;
        let dy = perturb.range(0, 2 * j) as i64 - j as i64;
        let marked = perturb.chance(spec.difficulty_rate);
        inst.pred_class = match (dropped, flipped) {
            (true, _) => None,
            (false, true) => Some(new_class),
            (false, false) => Some(inst.class),
        };
        inst.pred_rect = inst.rect.shifted(dx, dy);
        inst.marked = (dropped || flipped || dx != 0 || dy != 0) && marked;
    }

    let n = w as usize * h as usize;
    let mut gt = Vec::with_capacity(n);
    let mut pred = Vec::with_capacity(n);
    let mut gt_owner = Vec::with_capacity(n);
    let mut pred_owner = Vec::with_capacity(n);
    let mut in_void = Vec::with_capacity(n);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let nearest = seeds
                .iter()
                .enumerate()
                .min_by_key(|(_, s)| (s.x - x).pow(2) + (s.y - y).pow(2))
                .map(|(i, _)| i)
                .expect("at least one seed");
            let seed = &seeds[nearest];
            let mut g = (Label::stuff(seed.class), Some(nearest));
            let mut p = (seed.pred_class.map_or(Label::UNKNOWN, Label::stuff), Some(nearest));
            for (k, inst) in instances.iter().enumerate() {
                let owner = Some(n_seeds + k);
                if inst.rect.contains(x, y) {
                    let label = if inst.unknown {
                        Label::unknown_instance(inst.class)
                    } else {
                        Label::thing(inst.class, inst.id)
                    };
                    g = (label, owner);
                }
                if let Some(c) = inst.pred_class {
                    if inst.pred_rect.contains(x, y) {
                        p = (Label::thing(c, inst.id), owner);
                    }
                }
            }
            let void = voids.iter().any(|r| r.contains(x, y));
            if void {
                g = (Label::UNKNOWN, None);
            }
            gt.push(g.0);
            gt_owner.push(g.1);
            pred.push(p.0);
            pred_owner.push(p.1);
            in_void.push(void);
        }
    }

    let marked = |owner: Option<usize>| match owner {
        Some(i) if i < n_seeds => seeds[i].marked,
        Some(i) => instances[i - n_seeds].marked,
        None => false,
    };
    let difficulty: Vec<Difficulty> = (0..n)
        .map(|i| {
            let (g, p) = (gt[i], pred[i]);
            if in_void[i] {
                return Difficulty::DifficultClass;
            }
            let class_err = p.class != g.class;
            let is_marked = marked(gt_owner[i]) || marked(pred_owner[i]);
            if g.segment == SegmentId::UNKNOWN_INSTANCE {
                return if class_err && is_marked {
                    Difficulty::DifficultClass
                } else {
                    Difficulty::DifficultInstance
                };
            }
            let inst_err = !class_err && g.class.is_thing() && p.segment != g.segment;
            match (class_err, inst_err, is_marked) {
                (true, _, true) => Difficulty::DifficultClass,
                (false, true, true) => Difficulty::DifficultInstance,
                _ => Difficulty::NotDifficult,
            }
        })
        .collect();

    let score = |rng: &mut SplitMix64, low: bool| -> f64 {
        match spec.confidence {
            ConfidenceMode::Aligned if low => 0.4 * rng.uniform(),
            ConfidenceMode::Aligned => 0.6 + 0.4 * rng.uniform(),
            ConfidenceMode::Random => rng.uniform(),
            ConfidenceMode::Constant(v) => v,
        }
    };
    let mut class_scores = Vec::with_capacity(n);
    let mut inst_scores = Vec::with_capacity(n);
    for &d in &difficulty {
        class_scores.push(score(&mut noise, d == Difficulty::DifficultClass));
        inst_scores.push(score(&mut noise, d == Difficulty::DifficultInstance));
    }

    Ok(SyntheticScene {
        gt: PanopticRaster::new(w, h, gt)?,
        difficulty: DifficultyRaster::new(w, h, difficulty)?,
        pred: PanopticRaster::new(w, h, pred)?,
        class_conf: ConfidenceRaster::new(w, h, ConfidenceKind::Class, class_scores)?,
        inst_conf: ConfidenceRaster::new(w, h, ConfidenceKind::Instance, inst_scores)?,
    })
}

/// Conditions of the `index`-th synthetic sample: a weather tag cycling over
/// clear, fog, rain, snow and a day/night tag alternating every four samples.
pub fn synthetic_conditions(index: usize) -> Vec<String> {
    let weather = ["clear", "fog", "rain", "snow"][index % 4];
    let time = if (index / 4).is_multiple_of(2) { "day" } else { "night" };
    vec![weather.to_string(), time.to_string()]
}

/// Writes `count` scenes with seeds `base.seed + i` into `out` and returns
/// their manifest (also written as `manifest.json`). Per sample `scene_NNNN`
/// the files are `_gt.png`, `_pred.png`, `_difficulty.png`,
/// `_class_conf.png` and `_inst_conf.png`, plus `.json` segment tables for
/// the RGB encoding.
pub fn write_dataset(out: &Path, base: &SceneSpec, count: usize, encoding: Encoding) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out).map_err(|e| EvalError::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let spec = SceneSpec {
            seed: base.seed.wrapping_add(i as u64),
            ..base.clone()
        };
        let scene = generate_scene(&spec)?;
        let id = format!("scene_{i:04}");
        let file = |suffix: &str| PathBuf::from(format!("{id}_{suffix}.png"));
        io::save_panoptic(&scene.gt, &out.join(file("gt")), encoding)?;
        io::save_panoptic(&scene.pred, &out.join(file("pred")), encoding)?;
        io::save_difficulty(&scene.difficulty, &out.join(file("difficulty")))?;
        io::save_confidence(&scene.class_conf, &out.join(file("class_conf")))?;
        io::save_confidence(&scene.inst_conf, &out.join(file("inst_conf")))?;
        let mut record = SampleRecord::new(id.clone(), file("gt"));
        record.prediction = Some(file("pred"));
        record.difficulty = Some(file("difficulty"));
        record.class_conf = Some(file("class_conf"));
        record.inst_conf = Some(file("inst_conf"));
        record.conditions = synthetic_conditions(i);
        samples.push(record);
    }
    let mut manifest = DatasetManifest::new(encoding, samples);
    io::save_manifest(&manifest, &out.join("manifest.json"))?;
    manifest.root = out.to_path_buf();
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // first outputs for seed 1234567, as published with the algorithm
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
    }

    #[test]
    fn deterministic() {
        let spec = SceneSpec {
            seed: 42,
            ..SceneSpec::default()
        };
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        let other = SceneSpec { seed: 43, ..spec };
        assert_ne!(generate_scene(&other).unwrap().gt, generate_scene(&SceneSpec { seed: 42, ..SceneSpec::default() }).unwrap().gt);
    }

    #[test]
    fn unperturbed_prediction_equals_gt_without_sentinels() {
        let spec = SceneSpec {
            void_rate: 0.0,
            unknown_instance_rate: 0.0,
            ..SceneSpec::unperturbed(7, 48, 40)
        };
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.pred, scene.gt);
        assert_eq!(scene.difficulty.count(Difficulty::NotDifficult), 48 * 40);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_scene(&SceneSpec { width: 0, ..SceneSpec::default() }).is_err());
        assert!(generate_scene(&SceneSpec { drop_rate: 1.5, ..SceneSpec::default() }).is_err());
        assert!(generate_scene(&SceneSpec { stuff_classes: 0, ..SceneSpec::default() }).is_err());
    }
}
