//! The SNR sweep: per seed, build the world, extract features, train the
//! learned strategies and score every strategy on the test split.

use rayon::prelude::*;

use super::config::{ExperimentConfig, Strategy};
use super::pipeline::{
    decode_scores, fuse_item, plan_corpus, prepare_features, train_models, FeatureItem, Split, TrainedModels,
};
use super::results::{SeedResult, SweepResults, UtteranceResult};
use crate::decode::{wer, DecodingGraph};
use crate::error::Result;
use crate::synth::{build_world, World};

/// Scores every configured strategy on the test items.
pub fn evaluate_items(
    cfg: &ExperimentConfig,
    graph: &DecodingGraph,
    items: &[FeatureItem],
    models: &TrainedModels,
) -> Result<Vec<UtteranceResult>> {
    let test: Vec<&FeatureItem> = items.iter().filter(|i| i.split == Split::Test).collect();
    let jobs: Vec<(Strategy, &FeatureItem)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| test.iter().map(move |&i| (s, i)))
        .collect();
    jobs.par_iter()
        .map(|&(strategy, item)| {
            let scores = fuse_item(cfg, strategy, item, &models.models)?;
            let hyp = decode_scores(cfg, graph, &scores, &models.priors)?.word_labels(graph);
            Ok(UtteranceResult {
                id: item.features.id.clone(),
                strategy,
                condition: item.features.condition,
                report: wer(&item.features.words, &hyp),
                reference: item.features.words.clone(),
                hypothesis: hyp,
            })
        })
        .collect()
}

/// Everything produced for one seed, kept for inspection by callers.
pub struct SeedRun {
    pub world: World,
    pub graph: DecodingGraph,
    pub items: Vec<FeatureItem>,
    pub models: TrainedModels,
    pub result: SeedResult,
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let world = build_world(&cfg.world, seed)?;
    let graph = DecodingGraph::new(&world.lexicon, &world.lm, &cfg.decode.graph)?;
    let entries = plan_corpus(cfg, seed);
    let items = prepare_features(cfg, &world, &graph, &entries)?;
    let models = train_models(cfg, &items, &cfg.required_models())?;
    let utterances = evaluate_items(cfg, &graph, &items, &models)?;
    let result = SeedResult::from_utterances(
        seed,
        &cfg.strategies,
        &cfg.snr_grid,
        utterances,
        models.summaries.clone(),
    );
    Ok(SeedRun {
        world,
        graph,
        items,
        models,
        result,
    })
}

/// Runs all seeds on `threads` worker threads (all cores when `None`).
/// Results do not depend on the thread count.
pub fn run_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResults> {
    let work = || -> Result<SweepResults> {
        let seeds = cfg
            .seeds
            .iter()
            .map(|&s| run_seed(cfg, s).map(|r| r.result))
            .collect::<Result<Vec<_>>>()?;
        SweepResults::new(cfg.strategies.clone(), cfg.snr_grid.clone(), seeds)
    };
    with_threads(threads, work)
}

/// Runs `f` inside a rayon pool of the given size.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| crate::Error::InvalidInput(format!("cannot start {n} worker threads: {e}")))?;
            pool.install(f)
        }
    }
}
