//! Imaging-sonar echogram toolkit.
//!
//! Converts multi-beam sonar clips into two-channel echograms (maximum
//! intensity per range plus its normalized lateral position), derives
//! per-window upstream/downstream count labels from fish tracks, applies
//! echogram-specific augmentations, assembles labeled dataset manifests and
//! scores count predictions with normalized mean absolute error.

pub mod augment;
pub mod counts;
pub mod dataset;
pub mod echogram;
mod error;
pub mod jsonl;
pub mod preprocess;
pub mod sonar_format;
pub mod sweep;
pub mod synth;

pub use augment::{hflip_naive, hflip_realistic, superpose, vflip, FlipOp, LabeledSlice};
pub use counts::{
    nmae, orient, tracks_to_counts, CountLabel, EvalReport, LabelSource, Prediction, Track,
    TrackPoint, TrackSet,
};
pub use dataset::{build_manifest, check_split_disjoint, class_balance, Manifest, ManifestRecord, Split};
pub use echogram::{
    build_echogram, collapse_frame, normalize_slice, slice_echogram, EchoImage, Echogram,
    EchogramSlice, EcgFile, Lateral, ModelInput,
};
pub use error::{Error, Result};
pub use preprocess::{clean_clip, connected_components, subtract_background, ComponentMask, PreprocessConfig};
pub use sonar_format::{mean_frame, read_clip, write_clip, Clip, ClipHeader, Frame, MeanFrame, UpstreamSide};
pub use synth::{synth_clip, synth_suite, SynthConfig, SynthFish, SynthOutput};
