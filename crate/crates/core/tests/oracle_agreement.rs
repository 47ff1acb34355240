use upq_core::oracle::{brute_force_detail, naive_sweep, OracleMode};
use upq_core::pq::{compute_pq, match_segments_pq};
use upq_core::raster::build_segment_table;
use upq_core::synth::{generate_scene, ConfidenceMode, SceneSpec};
use upq_core::upq::match_segments_upq;
use upq_core::{apply_confidence_masks, binarize, build_overlap_histogram, sweep, Binarization, SweepSample, ThresholdGrid};

fn spec(seed: u64, side: u32) -> SceneSpec {
    SceneSpec {
        seed,
        width: side,
        height: side,
        confidence: if seed % 2 == 0 { ConfidenceMode::Aligned } else { ConfidenceMode::Random },
        ..SceneSpec::default()
    }
}

#[test]
fn pq_matches_oracle() {
    for seed in 0..60 {
        let s = generate_scene(&spec(seed, 24 + (seed as u32 % 5) * 8)).unwrap();
        let hist = build_overlap_histogram(&s.pred, &s.gt).unwrap();
        let fast = match_segments_pq(
            &hist,
            &build_segment_table(&s.pred).unwrap(),
            &build_segment_table(&s.gt).unwrap(),
        )
        .unwrap();
        let slow = brute_force_detail(&s.pred, &s.gt, &OracleMode::Pq).unwrap().0;
        assert_eq!(fast, slow, "seed {seed}");
        assert!(fast.is_unique());
        let r = compute_pq(&fast);
        assert!((r.all.pq - compute_pq(&slow).all.pq).abs() == 0.0);
    }
}

#[test]
fn upq_matches_oracle_including_fill() {
    let grid = ThresholdGrid::default();
    for seed in 0..60 {
        let s = generate_scene(&spec(seed, 32)).unwrap();
        for &ci in &[0usize, 7, 15] {
            for &ii in &[0usize, 7, 15] {
                let cm = binarize(&s.class_conf, grid.class_thresholds()[ci]).unwrap();
                let im = binarize(&s.inst_conf, grid.inst_thresholds()[ii]).unwrap();
                let aug = apply_confidence_masks(&s.pred, &s.gt, &s.difficulty, &cm, &im).unwrap();
                let (fast, filled) = match_segments_upq(&aug, &s.gt).unwrap();
                let (slow, slow_filled) = brute_force_detail(
                    &s.pred,
                    &s.gt,
                    &OracleMode::Upq {
                        difficulty: &s.difficulty,
                        class_mask: &cm,
                        inst_mask: &im,
                    },
                )
                .unwrap();
                assert_eq!(fast, slow, "seed {seed} cell ({ci},{ii})");
                assert_eq!(filled.pixels(), &slow_filled[..]);
            }
        }
    }
}

#[test]
fn fast_sweep_matches_naive_sweep() {
    let grid = ThresholdGrid::linear(5).unwrap();
    let scenes: Vec<_> = (0..6).map(|seed| generate_scene(&spec(seed, 24)).unwrap()).collect();
    let samples: Vec<_> = scenes
        .iter()
        .map(|s| SweepSample {
            pred: &s.pred,
            gt: &s.gt,
            difficulty: &s.difficulty,
            class_conf: Some(&s.class_conf),
            inst_conf: Some(&s.inst_conf),
        })
        .collect();
    for rule in [Binarization::AtLeast, Binarization::Above] {
        let fast = sweep(&samples, &grid, rule).unwrap();
        let slow = naive_sweep(&samples, &grid, rule).unwrap();
        assert_eq!(fast.cells, slow.cells);
        assert_eq!(fast.all, slow.all);
    }
}
