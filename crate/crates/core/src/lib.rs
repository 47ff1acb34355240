//! Panoptic quality, uncertainty-aware panoptic quality and its
//! threshold-swept area for panoptic segmentation.

pub mod annotation;
pub mod confidence;
pub mod error;
pub mod eval;
pub mod io;
pub mod oracle;
pub mod pq;
pub mod raster;
pub mod sweep;
pub mod synth;
pub mod upq;

pub use annotation::{derive_difficulty, Difficulty, DifficultyRaster};
pub use confidence::{
    constant_confidence, marginal_confidences, oracle_confidence, BinaryConfidenceMask, ConfidenceKind,
    ConfidenceRaster, MaskClassificationOutput, MaskPair,
};
pub use error::{ErrorCategory, EvalError, Result};
pub use pq::{compute_miou, compute_pq, match_segments_pq, MatchLedger, MetricReport, PanopticTally};
pub use raster::{build_overlap_histogram, build_segment_table, ClassId, Label, PanopticRaster, Region, SegmentId, SegmentKey};
pub use sweep::{binarize, sweep, sweep_image, Binarization, SweepReport, SweepSample, ThresholdGrid};
pub use upq::{apply_confidence_masks, compute_upq, match_segments_upq, AugmentedPrediction, PixelState};
