//! Replays the checked-in fuzz corpus through the same entry points the
//! cargo-fuzz targets use.

use std::path::PathBuf;

use avfusion::fuzzing::{run, TARGETS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<(&'static str, Vec<Vec<u8>>)> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    TARGETS
        .iter()
        .map(|&target| {
            let dir = root.join(target);
            let mut seeds: Vec<_> = std::fs::read_dir(&dir)
                .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
                .map(|e| e.unwrap().path())
                .collect();
            seeds.sort();
            (target, seeds.iter().map(|p| std::fs::read(p).unwrap()).collect())
        })
        .collect()
}

#[test]
fn every_target_has_seeds_and_none_panic() {
    for (target, seeds) in corpus() {
        assert!(!seeds.is_empty(), "no seeds for {target}");
        for data in seeds {
            assert!(run(target, &data), "unknown target {target}");
            // Truncations exercise every early-exit path of the parsers.
            for cut in [0, 1, 4, 16, data.len() / 2, data.len().saturating_sub(1)] {
                run(target, &data[..cut.min(data.len())]);
            }
        }
    }
}

#[test]
fn target_names_match_the_fuzz_crate() {
    let manifest =
        std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/Cargo.toml")).unwrap();
    for target in TARGETS {
        assert!(
            manifest.contains(&format!("name = \"{target}\"")),
            "{target} missing from fuzz/Cargo.toml"
        );
    }
    assert!(!run("no_such_target", b""));
}

/// A stable-toolchain stand-in for a fuzzing session: random byte flips,
/// insertions and deletions applied to every seed.
#[test]
fn mutated_seeds_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    for (target, seeds) in corpus() {
        for seed in &seeds {
            for _ in 0..150 {
                let mut data = seed.clone();
                for _ in 0..rng.gen_range(1..=4) {
                    let at = rng.gen_range(0..=data.len());
                    match rng.gen_range(0..3) {
                        0 if at < data.len() => data[at] ^= 1 << rng.gen_range(0..8),
                        1 => data.insert(at, rng.gen()),
                        _ if at < data.len() => {
                            data.remove(at);
                        }
                        _ => {}
                    }
                }
                run(target, &data);
            }
        }
    }
}
