//! Recording ingestion, manifests, splits, pair sampling, and synthetic data.

mod format;
mod manifest;
mod sampling;
mod store;
mod synth;

pub use format::{
    format_frame, parse_frame, read_recording, recording_files, recording_to_string, write_recording, FrameLine,
    Recording, RecordingMeta,
};
pub use manifest::{
    assign_holdout, split_sessions, split_sessions_with, Eligibility, IngestOutcome, Manifest, ManifestEntry, Split,
};
pub use sampling::{sample_action_pairs, sample_anonymizer_pairs, sample_user_pairs, AnonTrainSample, PairLabel, PairSample};
pub use store::{prepare_window, Dataset};
pub use synth::{synth_generate, synth_generate_with, write_corpus, SynthConfig, SynthCorpus};

/// Convenience for [`Manifest::ingest`].
pub fn ingest(dir: impl AsRef<std::path::Path>) -> crate::Result<IngestOutcome> {
    Manifest::ingest(dir)
}
