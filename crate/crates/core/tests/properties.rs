use proptest::prelude::*;

use upq_core::annotation::{Difficulty, DifficultyRaster};
use upq_core::confidence::{BinaryConfidenceMask, ConfidenceKind};
use upq_core::oracle::{brute_force_detail, OracleMode};
use upq_core::pq::{compute_pq, match_segments_pq, MatchLedger};
use upq_core::raster::{build_overlap_histogram, build_segment_table, Label, PanopticRaster, Region, SegmentId};
use upq_core::synth::SplitMix64;
use upq_core::upq::{apply_confidence_masks, match_segments_upq};

/// Blocky random raster over a small label alphabet so that segments
/// overlap heavily.
fn raster(seed: u64, w: u32, h: u32) -> PanopticRaster {
    let mut rng = SplitMix64::new(seed);
    let palette = [
        Label::stuff(0),
        Label::stuff(1),
        Label::thing(13, 1),
        Label::thing(13, 2),
        Label::thing(11, 3),
        Label::unknown_instance(13),
        Label::UNKNOWN,
        Label::OTHER,
    ];
    let weights = [5, 3, 6, 4, 3, 1, 1, 1];
    let total: u64 = weights.iter().sum();
    let block = rng.range(1, 3) as u32;
    let mut cells = std::collections::HashMap::new();
    PanopticRaster::from_fn(w, h, |x, y| {
        *cells.entry((x / block, y / block)).or_insert_with(|| {
            let mut r = rng.below(total);
            let mut k = 0;
            while r >= weights[k] {
                r -= weights[k];
                k += 1;
            }
            palette[k]
        })
    })
    .unwrap()
}

fn pq_ledger(pred: &PanopticRaster, gt: &PanopticRaster) -> MatchLedger {
    let hist = build_overlap_histogram(pred, gt).unwrap();
    match_segments_pq(&hist, &build_segment_table(pred).unwrap(), &build_segment_table(gt).unwrap()).unwrap()
}

fn relabel(r: &PanopticRaster, map: impl Fn(u32) -> u32) -> PanopticRaster {
    let labels = r
        .labels()
        .iter()
        .map(|&l| {
            if l.class.is_thing() && l.segment != SegmentId::UNKNOWN_INSTANCE {
                Label::thing(l.class.0, map(l.segment.0))
            } else {
                l
            }
        })
        .collect();
    PanopticRaster::new(r.width(), r.height(), labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn histogram_mass_and_marginals(a in any::<u64>(), b in any::<u64>(), w in 1u32..24, h in 1u32..24) {
        let (pred, gt) = (raster(a, w, h), raster(b, w, h));
        let hist = build_overlap_histogram(&pred, &gt).unwrap();
        prop_assert_eq!(hist.total(), (w * h) as u64);
        let table = build_segment_table(&pred).unwrap();
        let marginal = hist.pred_marginal();
        for (key, area) in table.iter() {
            prop_assert_eq!(marginal.get(&Region::Segment(key)).copied(), Some(area));
        }
        let gt_table = build_segment_table(&gt).unwrap();
        let gt_marginal = hist.gt_marginal();
        for (key, area) in gt_table.iter() {
            prop_assert_eq!(gt_marginal.get(&Region::Segment(key)).copied(), Some(area));
        }
        prop_assert_eq!(build_overlap_histogram(&gt, &pred).unwrap(), hist.transposed());
    }

    #[test]
    fn pq_matching_is_unique_and_id_invariant(a in any::<u64>(), b in any::<u64>(), w in 1u32..24, h in 1u32..24) {
        let (pred, gt) = (raster(a, w, h), raster(b, w, h));
        let ledger = pq_ledger(&pred, &gt);
        prop_assert!(ledger.is_unique());
        let renamed = pq_ledger(&relabel(&pred, |id| 100 + 7 * id), &relabel(&gt, |id| 50 - id));
        let (x, y) = (compute_pq(&ledger), compute_pq(&renamed));
        prop_assert_eq!(x.classes, y.classes);
    }

    #[test]
    fn self_match_is_perfect(a in any::<u64>(), w in 1u32..24, h in 1u32..24) {
        let r = raster(a, w, h);
        let report = compute_pq(&pq_ledger(&r, &r));
        for m in report.classes.iter().flatten() {
            prop_assert_eq!(m.fp + m.fn_, 0);
            prop_assert_eq!(m.pq, 1.0);
        }
    }

    #[test]
    fn fast_matchers_equal_oracle_on_random_rasters(
        a in any::<u64>(), b in any::<u64>(), c in any::<u64>(), w in 1u32..16, h in 1u32..16,
    ) {
        let (pred, gt) = (raster(a, w, h), raster(b, w, h));
        prop_assert_eq!(pq_ledger(&pred, &gt), brute_force_detail(&pred, &gt, &OracleMode::Pq).unwrap().0);

        let mut rng = SplitMix64::new(c);
        let n = (w * h) as usize;
        let difficulty = DifficultyRaster::new(
            w,
            h,
            (0..n).map(|_| Difficulty::from_u8(rng.below(3) as u8).unwrap()).collect(),
        )
        .unwrap();
        let p_class = rng.uniform();
        let p_inst = rng.uniform();
        let cm = BinaryConfidenceMask::new(w, h, ConfidenceKind::Class, (0..n).map(|_| rng.chance(p_class)).collect()).unwrap();
        let im = BinaryConfidenceMask::new(w, h, ConfidenceKind::Instance, (0..n).map(|_| rng.chance(p_inst)).collect()).unwrap();
        let aug = apply_confidence_masks(&pred, &gt, &difficulty, &cm, &im).unwrap();
        let (fast, filled) = match_segments_upq(&aug, &gt).unwrap();
        let mode = OracleMode::Upq { difficulty: &difficulty, class_mask: &cm, inst_mask: &im };
        let (slow, slow_filled) = brute_force_detail(&pred, &gt, &mode).unwrap();
        prop_assert!(fast.is_unique());
        prop_assert_eq!(fast, slow);
        prop_assert_eq!(filled.pixels(), &slow_filled[..]);
    }
}
