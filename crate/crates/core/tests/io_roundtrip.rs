use std::path::Path;

use upq_core::annotation::{Difficulty, DifficultyRaster};
use upq_core::confidence::{ConfidenceKind, ConfidenceRaster};
use upq_core::eval::{evaluate_samples, EvalConfig, EvalSample, Metric};
use upq_core::io::*;
use upq_core::raster::{Label, PanopticRaster};
use upq_core::synth::SplitMix64;
use upq_core::EvalError;

fn random_raster(rng: &mut SplitMix64, max_instance: u32) -> PanopticRaster {
    let (w, h) = (rng.range(1, 20) as u32, rng.range(1, 20) as u32);
    // a things id belongs to one class; derive the class from the id
    PanopticRaster::from_fn(w, h, |_, _| match rng.below(6) {
        0 => Label::UNKNOWN,
        1 => Label::OTHER,
        2 => Label::unknown_instance(11 + rng.below(8) as u8),
        3 | 4 => {
            let id = rng.range(1, max_instance as u64) as u32;
            Label::thing(11 + (id % 8) as u8, id)
        }
        _ => Label::stuff(rng.below(11) as u8),
    })
    .unwrap()
}

#[test]
fn panoptic_round_trip_both_encodings() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SplitMix64::new(5);
    for i in 0..1000 {
        let (encoding, max_id) = if i % 2 == 0 { (Encoding::Rgb, 0xFD_FFFF) } else { (Encoding::Class1000, 998) };
        let r = random_raster(&mut rng, max_id);
        let path = dir.path().join(format!("r{i}.png"));
        save_panoptic(&r, &path, encoding).unwrap();
        assert_eq!(load_panoptic(&path, encoding).unwrap(), r, "raster {i}");
    }
}

#[test]
fn class1000_rejects_large_instances() {
    let dir = tempfile::tempdir().unwrap();
    let r = PanopticRaster::filled(2, 2, Label::thing(13, 999)).unwrap();
    let err = save_panoptic(&r, &dir.path().join("x.png"), Encoding::Class1000).unwrap_err();
    assert!(matches!(err, EvalError::InvalidArgument(_)));
}

#[test]
fn rgb_id_without_sidecar_entry_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.png");
    save_panoptic(&PanopticRaster::filled(2, 1, Label::thing(13, 7)).unwrap(), &path, Encoding::Rgb).unwrap();
    let side = sidecar_path(&path);
    let text = std::fs::read_to_string(&side).unwrap().replace("\"id\": 7", "\"id\": 8");
    std::fs::write(&side, text).unwrap();
    let err = load_panoptic(&path, Encoding::Rgb).unwrap_err();
    assert_eq!(err.kind_name(), "format");
}

#[test]
fn difficulty_round_trip_and_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let values = [Difficulty::NotDifficult, Difficulty::DifficultInstance, Difficulty::DifficultClass];
    let d = DifficultyRaster::new(3, 2, (0..6).map(|i| values[i % 3]).collect()).unwrap();
    let path = dir.path().join("d.png");
    save_difficulty(&d, &path).unwrap();
    assert_eq!(load_difficulty(&path).unwrap(), d);

    let zeros = DifficultyRaster::filled(4, 4, Difficulty::NotDifficult).unwrap();
    save_difficulty(&zeros, &path).unwrap();
    assert_eq!(load_difficulty(&path).unwrap().count(Difficulty::NotDifficult), 16);

    write_gray8(&path, 2, 1, &[0, 3]);
    assert_eq!(load_difficulty(&path).unwrap_err().kind_name(), "format");
}

fn write_gray8(path: &Path, w: u32, h: u32, data: &[u8]) {
    let file = std::fs::File::create(path).unwrap();
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header().unwrap().write_image_data(data).unwrap();
}

#[test]
fn confidence_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.png");
    let mut rng = SplitMix64::new(9);
    let mut scores: Vec<f64> = (0..4096).map(|_| rng.uniform()).collect();
    scores[0] = 0.0;
    scores[1] = 1.0;
    let c = ConfidenceRaster::new(64, 64, ConfidenceKind::Class, scores.clone()).unwrap();
    save_confidence(&c, &path).unwrap();
    let back = load_confidence(&path, ConfidenceKind::Class).unwrap();
    assert_eq!(back.scores()[0], 0.0);
    assert_eq!(back.scores()[1], 1.0);
    let worst = scores.iter().zip(back.scores()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1.0 / 131070.0, "max error {worst}");
}

#[test]
fn loaders_distinguish_bit_depth_dimensions_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let gray8 = dir.path().join("g8.png");
    write_gray8(&gray8, 2, 2, &[0; 4]);
    let depth = load_confidence(&gray8, ConfidenceKind::Class).unwrap_err();
    let rgb = load_panoptic(&gray8, Encoding::Class1000).unwrap_err();
    assert_eq!(depth.kind_name(), "bit_depth");
    assert_eq!(rgb.kind_name(), "bit_depth");

    let p = dir.path().join("p.png");
    save_panoptic(&PanopticRaster::filled(3, 2, Label::stuff(0)).unwrap(), &p, Encoding::Rgb).unwrap();
    let side = sidecar_path(&p);
    let text = std::fs::read_to_string(&side).unwrap();
    std::fs::write(&side, text.replace("\"width\": 3", "\"width\": 4")).unwrap();
    assert_eq!(load_panoptic(&p, Encoding::Rgb).unwrap_err().kind_name(), "dimension_mismatch");
    std::fs::write(&side, text.replace("\"schema_version\": 1", "\"schema_version\": 7")).unwrap();
    let schema = load_panoptic(&p, Encoding::Rgb).unwrap_err();
    assert!(matches!(schema, EvalError::Schema { found: 7, .. }));

    let m = dir.path().join("manifest.json");
    std::fs::write(&m, r#"{"schema_version": 2, "samples": []}"#).unwrap();
    assert_eq!(load_manifest(&m).unwrap_err().kind_name(), "schema");
}

#[test]
fn manifest_checks() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.png");
    save_panoptic(&PanopticRaster::filled(2, 2, Label::stuff(0)).unwrap(), &gt, Encoding::Class1000).unwrap();
    let mut rec = SampleRecord::new("a", "gt.png");
    rec.prediction = Some("gt.png".into());
    rec.conditions = vec!["fog".into(), "night".into()];
    let manifest = DatasetManifest::new(Encoding::Class1000, vec![rec.clone()]);
    let path = dir.path().join("m.json");
    save_manifest(&manifest, &path).unwrap();
    let loaded = load_manifest(&path).unwrap();
    assert_eq!(loaded.samples, manifest.samples);
    assert_eq!(loaded.encoding, Encoding::Class1000);

    let dup = DatasetManifest::new(Encoding::Rgb, vec![rec.clone(), rec.clone()]);
    assert!(dup.validate().is_err());
    let mut bad = rec.clone();
    bad.conditions = vec!["hail".into()];
    assert!(DatasetManifest::new(Encoding::Rgb, vec![bad]).validate().is_err());

    let mut missing = rec;
    missing.prediction = Some("nope.png".into());
    save_manifest(&DatasetManifest::new(Encoding::Class1000, vec![missing]), &path).unwrap();
    let err = load_manifest(&path).unwrap_err();
    assert!(err.to_string().contains("sample 'a'"), "{err}");
    assert_eq!(err.kind_name(), "io");
}

#[test]
fn report_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SplitMix64::new(3);
    let samples: Vec<EvalSample> = (0..4)
        .map(|i| {
            let gt = random_raster(&mut rng, 50);
            let pred = PanopticRaster::from_fn(gt.width(), gt.height(), |x, y| {
                if (x + y) % 5 == 0 {
                    Label::stuff(2)
                } else {
                    gt.get(x, y)
                }
            })
            .unwrap();
            EvalSample {
                sample_id: format!("s{i}"),
                conditions: vec![["rain", "snow"][i % 2].into()],
                gt: Some(gt),
                pred: Some(pred),
                ..EvalSample::default()
            }
        })
        .collect();
    for metric in [Metric::Pq, Metric::Miou] {
        let report = evaluate_samples(
            &samples,
            &EvalConfig {
                metric,
                ..EvalConfig::default()
            },
        )
        .unwrap();
        let path = dir.path().join("r.json");
        save_report(&report, &path).unwrap();
        let back = load_report(&path).unwrap();
        assert_eq!(back, report);
        assert_eq!(report_to_string(&back).unwrap(), std::fs::read_to_string(&path).unwrap());
        assert_eq!(report.conditions.len(), 2);
    }
}

#[test]
fn mask_classification_round_trip() {
    use upq_core::confidence::{MaskClassificationOutput, MaskPair, NO_OBJECT};
    let dir = tempfile::tempdir().unwrap();
    let mut probs = vec![0.0; NO_OBJECT + 1];
    probs[13] = 0.75;
    probs[NO_OBJECT] = 0.25;
    let mc = MaskClassificationOutput::new(
        2,
        2,
        vec![MaskPair {
            probs,
            mask: vec![0.0, 1.0, 0.5, 0.25],
        }],
    )
    .unwrap();
    let path = dir.path().join("mc.json");
    save_mask_classification(&mc, &path).unwrap();
    let back = load_mask_classification(&path).unwrap();
    assert_eq!(back.pairs()[0].probs, mc.pairs()[0].probs);
    for (a, b) in back.pairs()[0].mask.iter().zip(&mc.pairs()[0].mask) {
        assert!((a - b).abs() <= 1.0 / 131070.0);
    }
}
