use std::path::Path;
use std::process::{Command, Output};

use upq_core::io::{load_difficulty, load_report, save_manifest, save_panoptic, DatasetManifest, Encoding, SampleRecord};
use upq_core::raster::{Label, PanopticRaster};
use upq_core::Difficulty;

fn upq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upq"))
        .args(args)
        .env_remove("UPQ_WORKERS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, count: &str, seed: &str) {
    let out = upq(&["synth", path(dir), "--count", count, "--seed", seed, "--width", "48", "--height", "40"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_deterministic_and_writes_the_expected_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path(), "2", "11");
    synth(b.path(), "2", "11");
    let files = listing(a.path());
    assert_eq!(files, listing(b.path()));
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    let mut expected = vec!["manifest.json".to_string()];
    for i in 0..2 {
        for part in ["class_conf.png", "difficulty.png", "gt.json", "gt.png", "inst_conf.png", "pred.json", "pred.png"] {
            expected.push(format!("scene_{i:04}_{part}"));
        }
    }
    expected.sort();
    assert_eq!(names, expected);
}

#[test]
fn perfect_prediction_scores_one_and_constant_aupq_equals_pq() {
    let dir = tempfile::tempdir().unwrap();
    let gt = PanopticRaster::from_fn(16, 16, |x, _| if x < 8 { Label::stuff(0) } else { Label::thing(13, 4) }).unwrap();
    save_panoptic(&gt, &dir.path().join("gt.png"), Encoding::Rgb).unwrap();
    let mut rec = SampleRecord::new("only", "gt.png");
    rec.prediction = Some("gt.png".into());
    let manifest = dir.path().join("m.json");
    save_manifest(&DatasetManifest::new(Encoding::Rgb, vec![rec]), &manifest).unwrap();
    let report = dir.path().join("r.json");
    let out = upq(&["evaluate", path(&manifest), "-o", path(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_report(&report).unwrap().overall.all.unwrap().pq, 1.0);

    let data = tempfile::tempdir().unwrap();
    synth(data.path(), "3", "5");
    let m = data.path().join("manifest.json");
    let pq = data.path().join("pq.json");
    let aupq = data.path().join("aupq.json");
    assert!(upq(&["evaluate", path(&m), "-o", path(&pq)]).status.success());
    let out = upq(&["evaluate", path(&m), "--metric", "aupq", "--baseline", "constant:1.0", "--grid-size", "4", "-o", path(&aupq)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (pq, aupq) = (load_report(&pq).unwrap(), load_report(&aupq).unwrap());
    assert_eq!(pq.overall.all.unwrap().pq, aupq.overall.all.unwrap().pq);
}

#[test]
fn corrupt_raster_names_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2", "1");
    std::fs::write(dir.path().join("scene_0001_pred.png"), b"not a png").unwrap();
    let out = upq(&["evaluate", path(&dir.path().join("manifest.json"))]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("scene_0001"), "{stderr}");
}

#[test]
fn identical_stages_give_zero_difficulty() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2", "3");
    let stage = dir.path().join("stage");
    std::fs::create_dir(&stage).unwrap();
    for i in 0..2 {
        for ext in ["png", "json"] {
            let name = format!("scene_{i:04}_gt.{ext}");
            std::fs::copy(dir.path().join(&name), stage.join(&name)).unwrap();
        }
    }
    let out_dir = dir.path().join("difficulty");
    let out = upq(&["derive-difficulty", path(&stage), path(&stage), path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let map = load_difficulty(&out_dir.join("scene_0000_gt.png")).unwrap();
    assert_eq!(map.count(Difficulty::NotDifficult), 48 * 40);
}

#[test]
fn worker_count_does_not_change_bytes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "6", "8");
    let m = dir.path().join("manifest.json");
    let run = |workers: &str| {
        let out = upq(&["evaluate", path(&m), "--metric", "aupq", "--workers", workers]);
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("8"));
}

#[test]
fn report_diff_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "3", "2");
    let m = dir.path().join("manifest.json");
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert!(upq(&["evaluate", path(&m), "-o", path(&a)]).status.success());
    assert!(upq(&["evaluate", path(&m), "--aggregation", "per-image-mean", "-o", path(&b)]).status.success());
    assert_eq!(upq(&["report-diff", path(&a), path(&a)]).status.code(), Some(0));
    let out = upq(&["report-diff", path(&a), path(&b)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("$."));
}

#[test]
fn selfcheck_passes() {
    let out = upq(&["selfcheck", "--scenes", "100"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().last().unwrap().starts_with("PASS diffs=0"), "{stdout}");
}

#[test]
fn bad_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1", "0");
    let m = dir.path().join("manifest.json");
    let out = upq(&["evaluate", path(&m), "--metric", "aupq", "--grid-size", "0"]);
    assert_eq!(out.status.code(), Some(4));
    let out = upq(&["evaluate", path(&m), "--baseline", "sometimes"]);
    assert_ne!(out.status.code(), Some(0));
}
