//! Brute-force reference implementations.
//!
//! Everything here works on explicit pixel sets and shares no matching or
//! histogram code with the fast path; it exists to be compared against it.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::annotation::{Difficulty, DifficultyRaster};
use crate::confidence::BinaryConfidenceMask;
use crate::error::{check_dims, Result};
use crate::pq::{match_segments_pq, MatchLedger, MatchedPair, PredSegment};
use crate::raster::{build_overlap_histogram, build_segment_table, Label, PanopticRaster, SegmentId, SegmentKey};
use crate::sweep::{binarize_with, sweep, Binarization, SweepReport, SweepSample, SweepTally, ThresholdGrid};
use crate::synth::{generate_scene, ConfidenceMode, SceneSpec, SplitMix64};
use crate::upq::{apply_confidence_masks, match_segments_upq, FilledPixel};

pub enum OracleMode<'a> {
    Pq,
    Upq {
        difficulty: &'a DifficultyRaster,
        class_mask: &'a BinaryConfidenceMask,
        inst_mask: &'a BinaryConfidenceMask,
    },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Keep,
    Any,
    VoidU,
}

fn oracle_states(pred: &PanopticRaster, gt: &PanopticRaster, mode: &OracleMode<'_>) -> Result<Vec<State>> {
    let n = pred.pixel_count();
    let OracleMode::Upq {
        difficulty,
        class_mask,
        inst_mask,
    } = mode
    else {
        return Ok(vec![State::Keep; n]);
    };
    check_dims(gt.dims(), difficulty.dims())?;
    check_dims(gt.dims(), class_mask.dims())?;
    check_dims(gt.dims(), inst_mask.dims())?;
    let mut states = Vec::with_capacity(n);
    for i in 0..n {
        let d = difficulty.values()[i];
        let p = pred.labels()[i];
        let g = gt.labels()[i];
        let state = match (class_mask.confident()[i], inst_mask.confident()[i]) {
            (false, _) => match d {
                Difficulty::DifficultClass => State::Any,
                _ => State::VoidU,
            },
            (true, false) => {
                if g.class.is_sentinel() {
                    State::Keep
                } else if p.class == g.class
                    && matches!(d, Difficulty::DifficultInstance | Difficulty::DifficultClass)
                {
                    State::Any
                } else {
                    State::VoidU
                }
            }
            (true, true) => State::Keep,
        };
        states.push(state);
    }
    Ok(states)
}

fn is_segment(l: Label) -> bool {
    l.class.is_eval() && l.segment != SegmentId::UNKNOWN_INSTANCE
}

fn key(l: Label) -> SegmentKey {
    SegmentKey {
        class: l.class,
        segment: l.segment,
    }
}

/// Sorted pixel-index sets.
type PixelSet = Vec<usize>;

fn count_in(set: &PixelSet, pred: impl Fn(usize) -> bool) -> u64 {
    set.iter().filter(|&&i| pred(i)).count() as u64
}

fn intersection(a: &PixelSet, b: &PixelSet) -> PixelSet {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn union_len(a: &PixelSet, b: &PixelSet) -> u64 {
    (a.len() + b.len() - intersection(a, b).len()) as u64
}

fn strictly_above_half(num: u64, den: u64) -> bool {
    den > 0 && num as f64 / den as f64 > 0.5
}

/// Matching by explicit pixel sets, with the panoptic or the two-step
/// uncertainty-aware rules. Also returns the filled prediction.
pub fn brute_force_detail(
    pred: &PanopticRaster,
    gt: &PanopticRaster,
    mode: &OracleMode<'_>,
) -> Result<(MatchLedger, Vec<FilledPixel>)> {
    check_dims(gt.dims(), pred.dims())?;
    let states = oracle_states(pred, gt, mode)?;
    let n = pred.pixel_count();
    let pl = pred.labels();
    let gl = gt.labels();

    let mut pred_sets: BTreeMap<SegmentKey, PixelSet> = BTreeMap::new();
    let mut gt_sets: BTreeMap<SegmentKey, PixelSet> = BTreeMap::new();
    let mut gt_void: PixelSet = Vec::new();
    for i in 0..n {
        if states[i] == State::Keep && is_segment(pl[i]) {
            pred_sets.entry(key(pl[i])).or_default().push(i);
        }
        if is_segment(gl[i]) {
            gt_sets.entry(key(gl[i])).or_default().push(i);
        }
        if gl[i].class.is_sentinel() {
            gt_void.push(i);
        }
    }
    let any: PixelSet = (0..n).filter(|&i| states[i] == State::Any).collect();

    // step 1
    let mut step1: Vec<(SegmentKey, SegmentKey)> = Vec::new();
    for (pk, p) in &pred_sets {
        for (gk, g) in &gt_sets {
            if pk.class != gk.class {
                continue;
            }
            let g_without_any: PixelSet = g.iter().copied().filter(|i| any.binary_search(i).is_err()).collect();
            let inter = intersection(p, &g_without_any).len() as u64;
            let union = union_len(p, &g_without_any) - intersection(p, &gt_void).len() as u64;
            if strictly_above_half(inter, union) {
                assert!(
                    step1.iter().all(|(a, b)| a != pk && b != gk),
                    "oracle: non-unique step-1 match"
                );
                step1.push((*pk, *gk));
            }
        }
    }

    let mut filled: Vec<FilledPixel> = (0..n)
        .map(|i| match states[i] {
            State::Keep => FilledPixel::Pred(pl[i]),
            State::Any => FilledPixel::Any,
            State::VoidU => FilledPixel::VoidU,
        })
        .collect();
    for (pk, gk) in &step1 {
        for &i in &gt_sets[gk] {
            if filled[i] == FilledPixel::Any {
                filled[i] = FilledPixel::Pred(pk.label());
            }
        }
    }

    // step 2
    let mut step2: Vec<SegmentKey> = Vec::new();
    for (gk, g) in &gt_sets {
        if step1.iter().any(|(_, b)| b == gk) {
            continue;
        }
        let remaining_any = count_in(g, |i| filled[i] == FilledPixel::Any);
        if strictly_above_half(remaining_any, g.len() as u64) {
            for &i in g {
                if filled[i] == FilledPixel::Any {
                    filled[i] = FilledPixel::FromAny(*gk);
                }
            }
            step2.push(*gk);
        }
    }

    // final IoU on the filled prediction
    let residual_any: PixelSet = (0..n).filter(|&i| filled[i] == FilledPixel::Any).collect();
    let mut ledger = MatchLedger::default();
    let final_pair = |segment: &PixelSet, gk: &SegmentKey| {
        let g: PixelSet = gt_sets[gk]
            .iter()
            .copied()
            .filter(|i| residual_any.binary_search(i).is_err())
            .collect();
        let inter = intersection(segment, &g).len() as u64;
        let union = union_len(segment, &g) - intersection(segment, &gt_void).len() as u64;
        (inter, union)
    };
    for (pk, gk) in &step1 {
        let segment: PixelSet = (0..n).filter(|&i| filled[i] == FilledPixel::Pred(pk.label())).collect();
        let (inter, union) = final_pair(&segment, gk);
        ledger.class_mut(gk.class).matches.push(MatchedPair {
            pred: PredSegment::Original(*pk),
            gt: *gk,
            intersection: inter,
            union,
            iou: inter as f64 / union as f64,
        });
    }
    for gk in &step2 {
        let segment: PixelSet = (0..n).filter(|&i| filled[i] == FilledPixel::FromAny(*gk)).collect();
        let (inter, union) = final_pair(&segment, gk);
        ledger.class_mut(gk.class).matches.push(MatchedPair {
            pred: PredSegment::FromAny,
            gt: *gk,
            intersection: inter,
            union,
            iou: inter as f64 / union as f64,
        });
    }

    for (pk, p) in &pred_sets {
        if step1.iter().any(|(a, _)| a == pk) {
            continue;
        }
        let ignored = count_in(p, |i| {
            gl[i].class.is_sentinel() || (gl[i].class == pk.class && gl[i].segment == SegmentId::UNKNOWN_INSTANCE)
        });
        if !strictly_above_half(ignored, p.len() as u64) {
            ledger.class_mut(pk.class).false_positives += 1;
        }
    }
    for gk in gt_sets.keys() {
        if !step1.iter().any(|(_, b)| b == gk) && !step2.contains(gk) {
            ledger.class_mut(gk.class).false_negatives += 1;
        }
    }
    ledger.canonicalize();
    Ok((ledger, filled))
}

pub fn brute_force_match(
    pred: &PanopticRaster,
    gt: &PanopticRaster,
    mode: &OracleMode<'_>,
) -> Result<MatchLedger> {
    Ok(brute_force_detail(pred, gt, mode)?.0)
}

/// Sweep by full re-evaluation at every grid cell: binarize, mask, match.
pub fn naive_sweep(
    samples: &[SweepSample<'_>],
    grid: &ThresholdGrid,
    rule: Binarization,
) -> Result<SweepReport> {
    let mut total = SweepTally::empty(grid);
    for sample in samples {
        let (class_conf, inst_conf) = sample.validated()?;
        for (ci, &tc) in grid.class_thresholds().iter().enumerate() {
            let class_mask = binarize_with(class_conf, tc, rule)?;
            for (ii, &ti) in grid.inst_thresholds().iter().enumerate() {
                let inst_mask = binarize_with(inst_conf, ti, rule)?;
                let aug = apply_confidence_masks(sample.pred, sample.gt, sample.difficulty, &class_mask, &inst_mask)?;
                let (ledger, _) = match_segments_upq(&aug, sample.gt)?;
                total.cells[grid.cell(ci, ii)].merge(&ledger.tally());
            }
        }
    }
    Ok(SweepReport::from_tally(&total, grid))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub property: &'static str,
    pub checked: usize,
    pub diffs: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.diffs == 0
    }
}

/// Grid indices of the threshold pairs sampled by [`selfcheck`].
pub const SELFCHECK_INDICES: [usize; 3] = [0, 7, 15];

/// Spec of the `i`-th self-check scene: sides drawn from 32..=128, the
/// confidence mode alternating between aligned and random.
pub fn selfcheck_spec(seed: u64, i: usize) -> SceneSpec {
    let mut rng = SplitMix64::new(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let width = rng.range(32, 128) as u32;
    let height = rng.range(32, 128) as u32;
    SceneSpec {
        seed: rng.next_u64(),
        width,
        height,
        confidence: if i.is_multiple_of(2) { ConfidenceMode::Aligned } else { ConfidenceMode::Random },
        ..SceneSpec::default()
    }
}

/// Compares the fast matchers with the brute-force ones on `scenes` seeded
/// scenes: panoptic ledgers, uncertainty-aware ledgers and filled
/// predictions at 9 threshold pairs, and the incremental sweep against the
/// naive one on the first `sweep_scenes` scenes.
pub fn selfcheck(scenes: usize, seed: u64, sweep_scenes: usize) -> Result<Vec<CheckResult>> {
    let grid = ThresholdGrid::default();
    let per_scene = (0..scenes)
        .into_par_iter()
        .map(|i| -> Result<[usize; 3]> {
            let s = generate_scene(&selfcheck_spec(seed, i))?;
            let mut diffs = [0; 3];
            let hist = build_overlap_histogram(&s.pred, &s.gt)?;
            let fast = match_segments_pq(&hist, &build_segment_table(&s.pred)?, &build_segment_table(&s.gt)?)?;
            if fast != brute_force_match(&s.pred, &s.gt, &OracleMode::Pq)? || !fast.is_unique() {
                diffs[0] += 1;
            }
            for &ci in &SELFCHECK_INDICES {
                for &ii in &SELFCHECK_INDICES {
                    let cm = binarize_with(&s.class_conf, grid.class_thresholds()[ci], Binarization::AtLeast)?;
                    let im = binarize_with(&s.inst_conf, grid.inst_thresholds()[ii], Binarization::AtLeast)?;
                    let aug = apply_confidence_masks(&s.pred, &s.gt, &s.difficulty, &cm, &im)?;
                    let (fast, filled) = match_segments_upq(&aug, &s.gt)?;
                    let mode = OracleMode::Upq {
                        difficulty: &s.difficulty,
                        class_mask: &cm,
                        inst_mask: &im,
                    };
                    let (slow, slow_filled) = brute_force_detail(&s.pred, &s.gt, &mode)?;
                    if fast != slow || !fast.is_unique() {
                        diffs[1] += 1;
                    }
                    if filled.pixels() != &slow_filled[..] {
                        diffs[2] += 1;
                    }
                }
            }
            Ok(diffs)
        })
        .collect::<Result<Vec<_>>>()?;
    let sum = |k: usize| per_scene.iter().map(|d| d[k]).sum();

    let sweep_scenes = sweep_scenes.min(scenes);
    let generated = (0..sweep_scenes)
        .map(|i| generate_scene(&selfcheck_spec(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut sweep_diffs = 0;
    for s in &generated {
        let sample = [SweepSample {
            pred: &s.pred,
            gt: &s.gt,
            difficulty: &s.difficulty,
            class_conf: Some(&s.class_conf),
            inst_conf: Some(&s.inst_conf),
        }];
        let fast = sweep(&sample, &grid, Binarization::AtLeast)?;
        let slow = naive_sweep(&sample, &grid, Binarization::AtLeast)?;
        if fast.cells != slow.cells {
            sweep_diffs += 1;
        }
    }
    Ok(vec![
        CheckResult {
            property: "pq ledger equals brute force",
            checked: scenes,
            diffs: sum(0),
        },
        CheckResult {
            property: "upq ledger equals brute force at 9 threshold pairs",
            checked: scenes * 9,
            diffs: sum(1),
        },
        CheckResult {
            property: "upq filled prediction equals brute force",
            checked: scenes * 9,
            diffs: sum(2),
        },
        CheckResult {
            property: "incremental sweep equals 256-pass sweep",
            checked: sweep_scenes,
            diffs: sweep_diffs,
        },
    ])
}
