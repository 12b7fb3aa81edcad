//! Trial ingestion: file formats, alignment, windowing, splits and
//! synthetic corpora.

pub mod feature_file;
pub mod kinematics;
pub mod manifest;
pub mod pca;
pub mod split;
pub mod synth;
pub mod transcript;
pub mod trial;
pub mod window;

pub use feature_file::{read_feature_matrix, write_feature_matrix, FeatureKind, FeatureMatrix};
pub use kinematics::{parse_kinematics, select_kinematic_subset, KinematicFrame, KinematicSubset};
pub use manifest::{load_dataset, read_manifest, ManifestEntry};
pub use pca::{pca_fit, Pca};
pub use split::{louo_splits, Fold, ZScore};
pub use synth::{synthesize_corpus, synthesize_trial, SynthConfig, SynthTruth, SynthWorld, TrajectoryStyle};
pub use transcript::{parse_transcript, GestureLabel, GestureTranscript, Interval};
pub use trial::{align_and_label, downsample, ColumnBlock, LabelMap, LabeledTrial};
pub use window::{tumbling_windows, Horizon, Window, WindowBatch};
