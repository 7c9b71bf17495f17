//! Corpus synthesis, WAV I/O, SNR mixing and feature shards.

mod dataset;
mod manifest;
mod shard;
mod synth;
mod wav;

pub use dataset::{
    build_dataset, input_rows, load_utterance, utterance_features, utterance_paths, Dataset,
    FeatureOptions, FittedStats, NormMode, Utterance, UtteranceFeatures, UtteranceSource,
};
pub use manifest::{CorpusManifest, ManifestEntry, MixSpec, Split, TEST_SNRS, TRAIN_SNRS};
pub use shard::{
    load_gv_stats, load_norm_stats, load_shard, parse_stats, save_gv_stats, save_norm_stats,
    save_shard, stats_bytes, FeatureShard, SHARD_MAGIC, SHARD_VERSION, STATS_MAGIC, STATS_VERSION,
};
pub use synth::{
    active_mask, make_noise, masked_power, mix_at_snr, scale_noise_for_snr, synth_clean, NoiseKind,
    ACTIVITY_RATIO, CLEAN_PEAK, MIN_CLEAN_SECS,
};
pub use wav::{parse_wav, read_wav, wav_bytes, write_wav, SUPPORTED_RATES};
