//! Entry points shared by the cargo-fuzz targets under `fuzz/` and the seed
//! replay test. Each takes arbitrary bytes, must never panic, and asserts the
//! parser's round-trip invariant whenever the input is accepted.

use crate::avpf;
use crate::experiment::store::{FeaturesManifest, SynthManifest};
use crate::experiment::{ExperimentConfig, SweepResults};
use crate::fusion::{Checkpoint, CheckpointHeader};
use crate::io;
use crate::types::Matrix;

/// Names of the targets, matching the directories of `fuzz/corpus`.
pub const TARGETS: [&str; 8] = [
    "avpf_decode",
    "config_json",
    "checkpoint_header",
    "synth_manifest",
    "features_manifest",
    "results_json",
    "wav_decode",
    "raw_frames",
];

/// Dispatches to the entry point called `target`; `false` for an unknown name.
pub fn run(target: &str, data: &[u8]) -> bool {
    match target {
        "avpf_decode" => avpf_decode(data),
        "config_json" => config_json(data),
        "checkpoint_header" => checkpoint_header(data),
        "synth_manifest" => json_round_trip::<SynthManifest>(data),
        "features_manifest" => json_round_trip::<FeaturesManifest>(data),
        "results_json" => results_json(data),
        "wav_decode" => wav_decode(data),
        "raw_frames" => raw_frames(data),
        _ => return false,
    }
    true
}

pub fn avpf_decode(data: &[u8]) {
    if let Ok(m) = avpf::decode(data) {
        let again = avpf::encode(&m).expect("decoded matrix re-encodes");
        // NaN payloads may change bit pattern through f64; compare bytes only
        // when every value is a number.
        if m.as_slice().iter().all(|v| !v.is_nan()) {
            assert_eq!(again, data);
        }
    }
}

pub fn config_json(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let back = serde_json::to_string(&cfg).expect("config serialises");
        assert_eq!(
            ExperimentConfig::from_json(&back).expect("serialised config parses"),
            cfg
        );
    }
}

pub fn checkpoint_header(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(header) = CheckpointHeader::from_json(text) {
        // A parameter column sized by the input itself keeps any allocation
        // proportional to what the fuzzer supplied.
        let flat = Matrix::zeros(data.len(), 1);
        let _ = Checkpoint::from_parts(header, &flat);
    }
}

fn json_round_trip<T>(data: &[u8])
where
    T: serde::de::DeserializeOwned + serde::Serialize + PartialEq + std::fmt::Debug,
{
    let Ok(value) = serde_json::from_slice::<T>(data) else {
        return;
    };
    let back = serde_json::to_string(&value).expect("value serialises");
    assert_eq!(
        serde_json::from_str::<T>(&back).expect("serialised value parses"),
        value
    );
}

pub fn results_json(data: &[u8]) {
    if let Ok(r) = serde_json::from_slice::<SweepResults>(data) {
        let _ = r.to_csv();
        let _ = r.plot_csv();
        let _ = r.render_table();
    }
}

pub fn wav_decode(data: &[u8]) {
    if let Ok(samples) = io::decode_wav(data) {
        assert!(samples.iter().all(|s| (-1.0..=1.0).contains(s)));
        let (bytes, clipped) = io::encode_wav(&samples).expect("decoded audio re-encodes");
        assert_eq!(clipped, 0);
        assert_eq!(io::decode_wav(&bytes).expect("re-encoded audio decodes"), samples);
    }
}

pub fn raw_frames(data: &[u8]) {
    if let Ok(frames) = io::decode_raw_frames(data) {
        assert_eq!(io::encode_raw_frames(&frames).expect("frames re-encode"), data);
    }
}
