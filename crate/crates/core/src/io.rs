//! File formats: panoptic rasters in two encodings, difficulty and
//! confidence rasters, mask-classification outputs, dataset manifests and
//! metric reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use png::{BitDepth, ColorType, Transformations};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::annotation::{Difficulty, DifficultyRaster};
use crate::confidence::{ConfidenceKind, ConfidenceRaster, MaskClassificationOutput, MaskPair};
use crate::error::{check_dims, EvalError, Result};
use crate::raster::{ClassId, Label, PanopticRaster, SegmentId};

pub const SCHEMA_VERSION: u32 = 1;

pub const CONDITIONS: [&str; 6] = ["clear", "fog", "rain", "snow", "day", "night"];

/// Panoptic raster encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// 8-bit RGB ids `r + 256 g + 65536 b` plus a JSON segment table.
    #[default]
    Rgb,
    /// 16-bit gray `class * 1000 + instance`.
    Class1000,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Rgb => "rgb",
            Encoding::Class1000 => "class1000",
        }
    }
}

const RGB_STUFF_BASE: u32 = 0xFF0000;
const RGB_UNKNOWN_INSTANCE_BASE: u32 = 0xFE0000;
const RGB_OTHER: u32 = RGB_STUFF_BASE + ClassId::OTHER.0 as u32;

pub const B_UNKNOWN: u16 = 65535;
pub const B_OTHER: u16 = 65534;
pub const B_UNKNOWN_INSTANCE: u16 = 999;

struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

fn read_png(path: &Path, color: ColorType, depth: BitDepth) -> Result<Image> {
    let file = File::open(path).map_err(|e| EvalError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| EvalError::format(path, e.to_string()))?;
    let info = reader.info();
    if info.color_type != color || info.bit_depth != depth {
        return Err(EvalError::BitDepth {
            path: path.to_path_buf(),
            detail: format!(
                "expected {:?} {:?}, found {:?} {:?}",
                depth, color, info.bit_depth, info.color_type
            ),
        });
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| EvalError::format(path, "image too large"))?;
    let mut data = vec![0; size];
    let frame = reader
        .next_frame(&mut data)
        .map_err(|e| EvalError::format(path, e.to_string()))?;
    data.truncate(frame.buffer_size());
    Ok(Image {
        width: frame.width,
        height: frame.height,
        data,
    })
}

fn write_png(path: &Path, width: u32, height: u32, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| EvalError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let encode_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => EvalError::io(path, e),
        other => EvalError::format(path, other.to_string()),
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(data).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

fn u16_samples(data: &[u8]) -> impl Iterator<Item = u16> + '_ {
    data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| EvalError::io(path, e))
}

/// Parses a JSON document after checking its `schema_version`.
fn parse_versioned<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let value: Value = serde_json::from_str(text).map_err(|e| EvalError::format(path, e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| EvalError::format(path, "missing schema_version"))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(EvalError::Schema {
            path: path.to_path_buf(),
            found: version,
            supported: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| EvalError::format(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Sidecar {
    schema_version: u32,
    width: u32,
    height: u32,
    segments: Vec<SidecarSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct SidecarSegment {
    id: u32,
    class: u8,
    is_thing: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    unknown_instance: bool,
}

/// Path of the segment table next to an encoding-A image.
pub fn sidecar_path(png_path: &Path) -> PathBuf {
    png_path.with_extension("json")
}

fn rgb_id(label: Label) -> Result<u32> {
    let class = label.class;
    Ok(if class == ClassId::UNKNOWN {
        0
    } else if class == ClassId::OTHER {
        RGB_OTHER
    } else if label.segment == SegmentId::UNKNOWN_INSTANCE {
        RGB_UNKNOWN_INSTANCE_BASE + class.0 as u32
    } else if class.is_stuff() {
        RGB_STUFF_BASE + class.0 as u32
    } else if label.segment.0 < RGB_UNKNOWN_INSTANCE_BASE {
        label.segment.0
    } else {
        return Err(EvalError::InvalidArgument(format!(
            "segment id {} does not fit the RGB encoding",
            label.segment.0
        )));
    })
}

fn label_from_sidecar(path: &Path, seg: &SidecarSegment) -> Result<Label> {
    let class = ClassId::new(seg.class).map_err(|e| EvalError::format(path, e.to_string()))?;
    if class.is_sentinel() {
        return Ok(if class == ClassId::UNKNOWN { Label::UNKNOWN } else { Label::OTHER });
    }
    if seg.is_thing != class.is_thing() {
        return Err(EvalError::format(
            path,
            format!("segment {}: is_thing={} disagrees with class {class}", seg.id, seg.is_thing),
        ));
    }
    if seg.unknown_instance {
        return Ok(Label::unknown_instance(class.0));
    }
    if class.is_stuff() {
        return Ok(Label::stuff(class.0));
    }
    if seg.id == 0 {
        return Err(EvalError::format(path, format!("things segment of class {class} with id 0")));
    }
    Ok(Label::thing(class.0, seg.id))
}

pub fn save_panoptic(raster: &PanopticRaster, path: &Path, encoding: Encoding) -> Result<()> {
    match encoding {
        Encoding::Rgb => save_panoptic_rgb(raster, path),
        Encoding::Class1000 => save_panoptic_class1000(raster, path),
    }
}

pub fn load_panoptic(path: &Path, encoding: Encoding) -> Result<PanopticRaster> {
    match encoding {
        Encoding::Rgb => load_panoptic_rgb(path),
        Encoding::Class1000 => load_panoptic_class1000(path),
    }
}

fn save_panoptic_rgb(raster: &PanopticRaster, path: &Path) -> Result<()> {
    let mut segments: BTreeMap<u32, SidecarSegment> = BTreeMap::new();
    let mut data = Vec::with_capacity(raster.pixel_count() * 3);
    let mut last: Option<(Label, u32)> = None;
    for &label in raster.labels() {
        let id = match last {
            Some((l, id)) if l == label => id,
            _ => {
                let id = rgb_id(label)?;
                if id != 0 {
                    let seg = SidecarSegment {
                        id,
                        class: label.class.0,
                        is_thing: label.class.is_thing(),
                        unknown_instance: label.class.is_eval() && label.segment == SegmentId::UNKNOWN_INSTANCE,
                    };
                    if let Some(prev) = segments.insert(id, seg) {
                        if prev != seg {
                            return Err(EvalError::Structural(format!(
                                "segment id {id} used by classes {} and {}",
                                prev.class, seg.class
                            )));
                        }
                    }
                }
                last = Some((label, id));
                id
            }
        };
        data.extend_from_slice(&[id as u8, (id >> 8) as u8, (id >> 16) as u8]);
    }
    let sidecar = Sidecar {
        schema_version: SCHEMA_VERSION,
        width: raster.width(),
        height: raster.height(),
        segments: segments.into_values().collect(),
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write_text(&sidecar_path(path), &(text + "\n"))?;
    write_png(path, raster.width(), raster.height(), ColorType::Rgb, BitDepth::Eight, &data)
}

fn load_panoptic_rgb(path: &Path) -> Result<PanopticRaster> {
    let side_path = sidecar_path(path);
    let sidecar: Sidecar = parse_versioned(&side_path, &read_text(&side_path)?)?;
    let image = read_png(path, ColorType::Rgb, BitDepth::Eight)?;
    check_dims((sidecar.width, sidecar.height), (image.width, image.height))?;
    let mut table: BTreeMap<u32, Label> = BTreeMap::new();
    for seg in &sidecar.segments {
        if table.insert(seg.id, label_from_sidecar(&side_path, seg)?).is_some() {
            return Err(EvalError::format(&side_path, format!("duplicate segment id {}", seg.id)));
        }
    }
    let mut labels = Vec::with_capacity(image.data.len() / 3);
    for px in image.data.chunks_exact(3) {
        let id = px[0] as u32 | (px[1] as u32) << 8 | (px[2] as u32) << 16;
        let label = match table.get(&id) {
            Some(&l) => l,
            None if id == 0 => Label::UNKNOWN,
            None => {
                return Err(EvalError::format(path, format!("pixel id {id} has no segment table entry")));
            }
        };
        labels.push(label);
    }
    PanopticRaster::new(image.width, image.height, labels).map_err(|e| EvalError::format(path, e.to_string()))
}

/// Encoding-B value of one label.
pub fn class1000_value(label: Label) -> Result<u16> {
    let class = label.class;
    if class == ClassId::UNKNOWN {
        return Ok(B_UNKNOWN);
    }
    if class == ClassId::OTHER {
        return Ok(B_OTHER);
    }
    let base = class.0 as u16 * 1000;
    if label.segment == SegmentId::UNKNOWN_INSTANCE {
        return Ok(base + B_UNKNOWN_INSTANCE);
    }
    if label.segment.0 >= B_UNKNOWN_INSTANCE as u32 {
        return Err(EvalError::InvalidArgument(format!(
            "instance {} >= {B_UNKNOWN_INSTANCE} cannot be stored as class*1000+instance",
            label.segment.0
        )));
    }
    Ok(base + label.segment.0 as u16)
}

/// Label of one encoding-B value.
pub fn class1000_label(value: u16) -> std::result::Result<Label, String> {
    match value {
        B_UNKNOWN => return Ok(Label::UNKNOWN),
        B_OTHER => return Ok(Label::OTHER),
        _ => {}
    }
    let class = ClassId((value / 1000) as u8);
    let instance = value % 1000;
    if !class.is_eval() || value / 1000 > u8::MAX as u16 {
        return Err(format!("value {value}: class {} is not an evaluation class", value / 1000));
    }
    if instance == B_UNKNOWN_INSTANCE {
        return Ok(Label::unknown_instance(class.0));
    }
    match (class.is_thing(), instance) {
        (false, 0) => Ok(Label::stuff(class.0)),
        (false, _) => Err(format!("value {value}: stuff class {class} with instance {instance}")),
        (true, 0) => Err(format!("value {value}: things class {class} with instance 0")),
        (true, i) => Ok(Label::thing(class.0, i as u32)),
    }
}

fn save_panoptic_class1000(raster: &PanopticRaster, path: &Path) -> Result<()> {
    let mut data = Vec::with_capacity(raster.pixel_count() * 2);
    for &label in raster.labels() {
        data.extend_from_slice(&class1000_value(label)?.to_be_bytes());
    }
    write_png(path, raster.width(), raster.height(), ColorType::Grayscale, BitDepth::Sixteen, &data)
}

fn load_panoptic_class1000(path: &Path) -> Result<PanopticRaster> {
    let image = read_png(path, ColorType::Grayscale, BitDepth::Sixteen)?;
    let labels = u16_samples(&image.data)
        .map(class1000_label)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| EvalError::format(path, e))?;
    PanopticRaster::new(image.width, image.height, labels)
}

pub fn save_difficulty(raster: &DifficultyRaster, path: &Path) -> Result<()> {
    let data: Vec<u8> = raster.values().iter().map(|&d| d as u8).collect();
    let (w, h) = raster.dims();
    write_png(path, w, h, ColorType::Grayscale, BitDepth::Eight, &data)
}

pub fn load_difficulty(path: &Path) -> Result<DifficultyRaster> {
    let image = read_png(path, ColorType::Grayscale, BitDepth::Eight)?;
    let values = image
        .data
        .iter()
        .map(|&v| Difficulty::from_u8(v).ok_or_else(|| EvalError::format(path, format!("difficulty value {v}"))))
        .collect::<Result<Vec<_>>>()?;
    DifficultyRaster::new(image.width, image.height, values)
}

/// Nearest 16-bit level of a score.
pub fn quantize_confidence(score: f64) -> u16 {
    (score * 65535.0).round() as u16
}

pub fn save_confidence(raster: &ConfidenceRaster, path: &Path) -> Result<()> {
    let mut data = Vec::with_capacity(raster.scores().len() * 2);
    for &s in raster.scores() {
        data.extend_from_slice(&quantize_confidence(s).to_be_bytes());
    }
    let (w, h) = raster.dims();
    write_png(path, w, h, ColorType::Grayscale, BitDepth::Sixteen, &data)
}

pub fn load_confidence(path: &Path, kind: ConfidenceKind) -> Result<ConfidenceRaster> {
    let image = read_png(path, ColorType::Grayscale, BitDepth::Sixteen)?;
    let scores = u16_samples(&image.data).map(|v| v as f64 / 65535.0).collect();
    ConfidenceRaster::new(image.width, image.height, kind, scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MaskClassificationFile {
    schema_version: u32,
    width: u32,
    height: u32,
    pairs: Vec<MaskPairEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MaskPairEntry {
    probs: Vec<f64>,
    /// 16-bit soft mask, relative to the JSON file.
    mask: PathBuf,
}

/// Writes `path` (JSON) and one `<stem>_mask<i>.png` per pair beside it.
/// Masks are quantized to 16 bits.
pub fn save_mask_classification(mc: &MaskClassificationOutput, path: &Path) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mc");
    let (width, height) = mc.dims();
    let mut pairs = Vec::new();
    for (i, pair) in mc.pairs().iter().enumerate() {
        let name = PathBuf::from(format!("{stem}_mask{i}.png"));
        let mask = ConfidenceRaster::new(width, height, ConfidenceKind::Class, pair.mask.clone())?;
        save_confidence(&mask, &dir.join(&name))?;
        pairs.push(MaskPairEntry {
            probs: pair.probs.clone(),
            mask: name,
        });
    }
    let file = MaskClassificationFile {
        schema_version: SCHEMA_VERSION,
        width,
        height,
        pairs,
    };
    write_text(path, &(serde_json::to_string_pretty(&file).expect("serializes") + "\n"))
}

pub fn load_mask_classification(path: &Path) -> Result<MaskClassificationOutput> {
    let file: MaskClassificationFile = parse_versioned(path, &read_text(path)?)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::with_capacity(file.pairs.len());
    for entry in file.pairs {
        let mask = load_confidence(&dir.join(&entry.mask), ConfidenceKind::Class)?;
        check_dims((file.width, file.height), mask.dims())?;
        pairs.push(MaskPair {
            probs: entry.probs,
            mask: mask.scores().to_vec(),
        });
    }
    MaskClassificationOutput::new(file.width, file.height, pairs)
}

/// One sample of a dataset manifest. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PathBuf>,
    pub ground_truth: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_conf: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inst_conf: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_prediction: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_classification: Option<PathBuf>,
    #[serde(default)]
    pub conditions: Vec<String>,
}

impl SampleRecord {
    pub fn new(sample_id: impl Into<String>, ground_truth: impl Into<PathBuf>) -> SampleRecord {
        SampleRecord {
            sample_id: sample_id.into(),
            prediction: None,
            ground_truth: ground_truth.into(),
            difficulty: None,
            class_conf: None,
            inst_conf: None,
            h1: None,
            h2: None,
            semantic_prediction: None,
            mask_classification: None,
            conditions: Vec::new(),
        }
    }

    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        [
            self.prediction.as_ref(),
            Some(&self.ground_truth),
            self.difficulty.as_ref(),
            self.class_conf.as_ref(),
            self.inst_conf.as_ref(),
            self.h1.as_ref(),
            self.h2.as_ref(),
            self.semantic_prediction.as_ref(),
            self.mask_classification.as_ref(),
        ]
        .into_iter()
        .flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    #[serde(default)]
    pub encoding: Encoding,
    pub samples: Vec<SampleRecord>,
    /// Directory the sample paths are relative to; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(encoding: Encoding, samples: Vec<SampleRecord>) -> DatasetManifest {
        DatasetManifest {
            schema_version: SCHEMA_VERSION,
            encoding,
            samples,
            root: PathBuf::new(),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.root.join(path)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for s in &self.samples {
            if !ids.insert(s.sample_id.as_str()) {
                return Err(EvalError::Manifest(format!("duplicate sample_id '{}'", s.sample_id)));
            }
            if let Some(c) = s.conditions.iter().find(|c| !CONDITIONS.contains(&c.as_str())) {
                return Err(EvalError::Manifest(format!(
                    "sample '{}': unknown condition '{c}' (expected one of {})",
                    s.sample_id,
                    CONDITIONS.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Loads and validates a manifest; every referenced file must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut manifest: DatasetManifest = parse_versioned(path, &read_text(path)?)?;
    manifest.root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    manifest.validate()?;
    for s in &manifest.samples {
        for p in s.paths() {
            let full = manifest.resolve(p);
            if !full.is_file() {
                let missing = std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist");
                return Err(EvalError::io(full, missing).in_sample(&s.sample_id));
            }
        }
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    write_text(path, &(serde_json::to_string_pretty(manifest).expect("serializes") + "\n"))
}

/// Rounds to the 6 decimals a report stores, so that values survive a
/// write/read cycle unchanged.
pub fn round6(x: f64) -> f64 {
    format!("{x:.6}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub grid_size: usize,
    pub binarization: String,
    pub aggregation: String,
    pub baseline: String,
    pub prediction_source: String,
    pub condition_filter: Vec<String>,
    /// Class and instance thresholds of a single-point evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateEntry {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub pq: f64,
    pub sq: Option<f64>,
    pub rq: f64,
    /// Counts are absent for swept reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tp: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp: Option<u64>,
    #[serde(default, rename = "fn", skip_serializing_if = "Option::is_none")]
    pub fn_: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou_sum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub class_thresholds: Vec<f64>,
    pub inst_thresholds: Vec<f64>,
    /// Rows follow class thresholds, columns instance thresholds.
    pub pq: Vec<Vec<f64>>,
    pub sq: Vec<Vec<f64>>,
    pub rq: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouEntry {
    pub mean_iou: f64,
    pub n: usize,
    pub classes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all: Option<AggregateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stuff: Option<AggregateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub things: Option<AggregateEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub classes: BTreeMap<String, ClassEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miou: Option<MiouEntry>,
}

/// Serialized evaluation result. For `upq` and `aupq` the pq/sq/rq keys hold
/// the uncertainty-aware (area) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReportFile {
    pub schema_version: u32,
    pub metric: String,
    pub config: ConfigEcho,
    pub overall: ReportSection,
    #[serde(default)]
    pub conditions: BTreeMap<String, ReportSection>,
}

/// Deterministic text form: sorted keys, two-space indent, floats with six
/// decimals, numeric arrays inline.
pub fn report_to_string(report: &MetricReportFile) -> Result<String> {
    let value = serde_json::to_value(report).map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
    let mut out = String::new();
    write_value(&value, 0, &mut out)?;
    out.push('\n');
    Ok(out)
}

fn write_value(value: &Value, indent: usize, out: &mut String) -> Result<()> {
    match value {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&value.to_string()),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => {
                if !f.is_finite() {
                    return Err(EvalError::InvalidArgument(format!("non-finite value {f} in report")));
                }
                out.push_str(&format!("{f:.6}"));
            }
            _ => out.push_str(&n.to_string()),
        },
        Value::Array(items) => {
            let nested = items.iter().any(|v| v.is_array() || v.is_object());
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                    if !nested {
                        out.push(' ');
                    }
                }
                if nested {
                    newline(indent + 1, out);
                }
                write_value(item, indent + 1, out)?;
            }
            if nested && !items.is_empty() {
                newline(indent, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent + 1, out);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(v, indent + 1, out)?;
            }
            if !map.is_empty() {
                newline(indent, out);
            }
            out.push('}');
        }
    }
    Ok(())
}

fn newline(indent: usize, out: &mut String) {
    out.push('\n');
    for _ in 0..indent {
        out.push_str("  ");
    }
}

pub fn save_report(report: &MetricReportFile, path: &Path) -> Result<()> {
    write_text(path, &report_to_string(report)?)
}

pub fn parse_report(path: &Path, text: &str) -> Result<MetricReportFile> {
    parse_versioned(path, text)
}

pub fn load_report(path: &Path) -> Result<MetricReportFile> {
    parse_report(path, &read_text(path)?)
}

/// Differences between two JSON documents, one line per differing path.
/// Numbers compare within `tolerance`.
pub fn diff_values(a: &Value, b: &Value, tolerance: f64) -> Vec<String> {
    let mut out = Vec::new();
    diff_at("$", a, b, tolerance, &mut out);
    out
}

fn diff_at(path: &str, a: &Value, b: &Value, tol: f64, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            // NaN never compares within tolerance
            if (x - y).abs() > tol || x.is_nan() != y.is_nan() {
                out.push(format!("{path}: {x} != {y}"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                let p = format!("{path}.{k}");
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => diff_at(&p, u, v, tol, out),
                    (Some(_), None) => out.push(format!("{p}: only in first")),
                    (None, _) => out.push(format!("{p}: only in second")),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                diff_at(&format!("{path}[{i}]"), u, v, tol, out);
            }
        }
        _ if a == b => {}
        _ => out.push(format!("{path}: {a} != {b}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class1000_values() {
        assert_eq!(class1000_label(13002), Ok(Label::thing(13, 2)));
        assert_eq!(class1000_label(13999), Ok(Label::unknown_instance(13)));
        assert_eq!(class1000_label(0), Ok(Label::stuff(0)));
        assert_eq!(class1000_label(65535), Ok(Label::UNKNOWN));
        assert_eq!(class1000_label(65534), Ok(Label::OTHER));
        assert!(class1000_label(13000).is_err());
        assert!(class1000_label(2005).is_err());
        assert!(class1000_label(19000).is_err());
        assert_eq!(class1000_value(Label::thing(13, 2)).unwrap(), 13002);
        assert!(class1000_value(Label::thing(13, 999)).is_err());
        assert!(class1000_value(Label::thing(13, 1000)).is_err());
    }

    #[test]
    fn round6_is_stable() {
        for x in [0.0, 1.0, 0.3, 1.0 / 3.0, 0.1234565, 0.9999996] {
            let r = round6(x);
            assert_eq!(round6(r), r);
            assert_eq!(format!("{r:.6}").parse::<f64>().unwrap(), r);
        }
    }

    #[test]
    fn diff_reports_paths() {
        let a: Value = serde_json::json!({"x": 1.0, "y": [1, 2], "z": "a"});
        let b: Value = serde_json::json!({"x": 1.5, "y": [1, 2], "w": 0});
        let d = diff_values(&a, &b, 0.0);
        assert_eq!(d, vec!["$.w: only in second", "$.x: 1 != 1.5", "$.z: only in first"]);
        assert!(diff_values(&a, &a, 0.0).is_empty());
    }
}
