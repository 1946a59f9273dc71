//! Dataset generation: synthetic corpus, beam-signal mixing under the four
//! acoustic conditions, analysis-window segmentation, and on-disk manifests.

mod dataset;
mod mix;
mod synth;

use serde::{Deserialize, Serialize};

pub use dataset::{
    build_dataset, check_files, load_manifest, load_utterance, load_windows, DatagenConfig, DatasetManifest,
    ManifestEntry, PairFiles, RirRecord, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use mix::{
    apply_moving_gain, check_window_frames, frame_windows, magnitude_mat, mix_moving, mix_no_reverb,
    mix_reverberant, segment_signals, segment_windows, Condition, MixSpec, Trajectory, UtterancePair,
    B1_OFFSET_DB, SNR_RANGE_DB,
};
pub use synth::{list_split, synth_babble, synth_utterance, utterance_name, write_synthetic_corpus, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent child seed for `(stream, index)` under `base`.
pub fn derive_seed(base: u64, stream: &str, index: u64) -> u64 {
    let tag = stream.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    splitmix64(splitmix64(base ^ tag) ^ index)
}
