//! Prints per-condition WERs of the single streams and of the
//! training-free fusion strategies for one synthetic world.
//!
//! Usage: `cargo run --release -p avfusion --example world_report [seed] [utterances] [world.json] [white|babble]`

use avfusion::decode::{viterbi_decode, wer, DecodeOptions, DecodingGraph, GraphConfig, WerReport};
use avfusion::fusion::{dynamic_fuse, oracle_weights, static_fuse, OracleMode};
use avfusion::reliability::entropy;
use avfusion::synth::{
    build_world, compute_stream_posteriors, early_integration_posteriors, mix_noise, sample_utterance, NoiseKind,
    SnrCondition, WorldConfig,
};
use avfusion::{FusedLogPosterior, Matrix, StreamId};

fn main() -> avfusion::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let count: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let config: WorldConfig = match args.get(3) {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| avfusion::Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| avfusion::Error::config("world", e.to_string()))?
        }
        None => WorldConfig::default(),
    };
    let kind = match args.get(4).map(String::as_str) {
        Some("babble") => NoiseKind::Babble,
        _ => NoiseKind::White,
    };
    let world = build_world(&config, seed)?;
    let graph = DecodingGraph::new(&world.lexicon, &world.lm, &GraphConfig::default())?;
    let utts: Vec<_> = (0..count)
        .map(|i| sample_utterance(&world, 3 + i % 3, seed * 1000 + i as u64))
        .collect::<avfusion::Result<_>>()?;
    println!(
        "{:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "snr", "AO", "VA", "VS", "EI", "equal", "oracle", "H(A)"
    );
    for cond in SnrCondition::grid() {
        let names = ["AO", "VA", "VS", "EI", "equal", "oracle"];
        let mut reports: Vec<Vec<WerReport>> = vec![Vec::new(); names.len()];
        let mut ent = 0.0;
        let mut frames = 0usize;
        for u in &utts {
            let noisy = mix_noise(u, kind, cond, u.seed)?;
            let posts: Vec<_> = StreamId::ALL
                .iter()
                .map(|&s| compute_stream_posteriors(&world, &noisy, s))
                .collect::<avfusion::Result<_>>()?;
            ent += posts[0].frames().iter_rows().map(entropy).sum::<f64>();
            frames += posts[0].num_frames();
            let logs: Vec<Matrix> = posts.iter().map(|p| p.log()).collect();
            let oracle = oracle_weights(&logs, &u.alignment, OracleMode::Renormalized)?;
            let fused = [
                FusedLogPosterior::new(logs[0].clone())?,
                FusedLogPosterior::new(logs[1].clone())?,
                FusedLogPosterior::new(logs[2].clone())?,
                early_integration_posteriors(&world, &noisy)?,
                static_fuse(&logs, &[1.0 / 3.0; 3])?,
                dynamic_fuse(&logs, &oracle)?,
            ];
            for (r, f) in reports.iter_mut().zip(&fused) {
                let d = viterbi_decode(f, &graph, DecodeOptions::default())?;
                r.push(wer(&u.words, &d.word_labels(&graph)));
            }
        }
        print!("{:>6}", cond.to_string());
        for r in &reports {
            print!(" {:>6.3}", WerReport::pooled(r).wer);
        }
        println!(" {:>6.3}", ent / frames as f64);
    }
    Ok(())
}
