//! `avfusion`: synthesise a corpus, extract features, train and apply the
//! fusion strategies, decode, score and report.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a configuration
//! error (the message names the offending field).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use avfusion::experiment::{run_sweep, with_threads, ExperimentConfig, Store, Strategy};
use avfusion::extract::ExtractOptions;
use avfusion::fusion::ModelKind;
use avfusion::reliability::ReliabilityGroups;
use avfusion::synth::SnrCondition;

const DEFAULT_OUT: &str = "avfusion-out";

#[derive(Parser, Debug)]
#[command(
    name = "avfusion",
    version,
    about = "Reliability-guided audio-visual stream fusion on a synthetic corpus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (JSON). Later stages default to the one
    /// recorded by `synth`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "AVFUSION_OUT")]
    out: Option<PathBuf>,
    /// Experiment seed; overrides the configured seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (all cores when unset).
    #[arg(long, env = "AVFUSION_THREADS")]
    threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug, Clone)]
struct Selection {
    /// Strategies to process (repeat or comma-separate); defaults to the
    /// configured list.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<Strategy>,
    /// Restrict to one condition of the grid, e.g. `-3` or `clean`.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<SnrCondition>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the corpus: manifest, AVPF matrices, WAV audio, raw frames.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Comma-separated SNR grid overriding the configuration.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr_grid: Vec<SnrCondition>,
    },
    /// Compute stream posteriors, reliability indicators and alignments.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Keep only the model-based reliability measures.
        #[arg(long)]
        model_based: bool,
    },
    /// Train the weight estimators and decision fusion networks.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selection,
    },
    /// Write fused log-posteriors of the test split.
    Fuse {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selection,
    },
    /// Viterbi-decode the fused scores.
    Decode {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selection,
    },
    /// Score hypotheses and write results.csv and results.json.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selection,
    },
    /// Run the whole experiment in memory over all seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selection,
    },
    /// Render results as a table and WER-vs-SNR plot data.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Extract { common, .. }
            | Command::Train { common, .. }
            | Command::Fuse { common, .. }
            | Command::Decode { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Sweep { common, .. }
            | Command::Report { common } => common,
        }
    }
}

fn load_config(path: Option<&Path>) -> avfusion::Result<Option<ExperimentConfig>> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| avfusion::Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map(Some)
}

fn out_dir(common: &Common, cfg: Option<&ExperimentConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn strategies(select: &Selection, cfg: &ExperimentConfig) -> Vec<Strategy> {
    if select.strategy.is_empty() {
        cfg.strategies.clone()
    } else {
        select.strategy.clone()
    }
}

/// Later stages must run on the seed the corpus was rendered with.
fn check_seed(common: &Common, store_seed: u64) -> avfusion::Result<()> {
    match common.seed {
        Some(s) if s != store_seed => Err(avfusion::Error::config(
            "--seed",
            format!("the corpus in this output directory was rendered with seed {store_seed}, not {s}"),
        )),
        _ => Ok(()),
    }
}

fn run(command: Command) -> Result<()> {
    let common = command.common().clone();
    let user = load_config(common.config.as_deref())?;
    let store = Store::new(out_dir(&common, user.as_ref()));
    with_threads(common.threads, || -> avfusion::Result<()> {
        match &command {
            Command::Synth { snr_grid, .. } => {
                let mut cfg = user.clone().unwrap_or_default();
                if !snr_grid.is_empty() {
                    cfg.snr_grid = snr_grid.clone();
                }
                let seed = common.seed.or(cfg.seeds.first().copied()).unwrap_or(1);
                cfg.validate()?;
                let m = store.synth(&cfg, seed)?;
                log::info!(
                    "rendered {} utterances in {} conditions under {}",
                    m.utterances.len(),
                    cfg.snr_grid.len(),
                    store.synth_dir().display()
                );
            }
            Command::Extract { model_based, .. } => {
                let (m, cfg) = store.stage_config(user.clone())?;
                check_seed(&common, m.seed)?;
                let mut opts: ExtractOptions = cfg.extract.clone();
                if *model_based {
                    opts.groups = ReliabilityGroups {
                        model: true,
                        audio: false,
                        video: false,
                    };
                }
                let f = store.extract(&cfg, &opts)?;
                log::info!(
                    "extracted {} feature items under {}",
                    f.items.len(),
                    store.features_dir().display()
                );
            }
            Command::Train { select, .. } => {
                let (m, cfg) = store.stage_config(user.clone())?;
                check_seed(&common, m.seed)?;
                let kinds: Vec<ModelKind> = if select.strategy.is_empty() {
                    cfg.required_models()
                } else {
                    ModelKind::ALL
                        .into_iter()
                        .filter(|k| select.strategy.iter().any(|s| s.model() == Some(*k)))
                        .collect()
                };
                let models = store.train(&cfg, &kinds)?;
                for (k, s) in &models.summaries {
                    log::info!(
                        "{}: validation loss {:.4} -> {:.4} (best at step {} of {})",
                        k.name(),
                        s.initial_val_loss,
                        s.best_val_loss,
                        s.best_step,
                        s.steps
                    );
                }
            }
            Command::Fuse { select, .. } => {
                let (m, cfg) = store.stage_config(user.clone())?;
                check_seed(&common, m.seed)?;
                let n = store.fuse(&cfg, &strategies(select, &cfg), select.snr)?;
                log::info!("wrote {n} fused score matrices");
            }
            Command::Decode { select, .. } => {
                let (m, cfg) = store.stage_config(user.clone())?;
                check_seed(&common, m.seed)?;
                store.decode(&cfg, &strategies(select, &cfg), select.snr)?;
            }
            Command::Evaluate { select, .. } => {
                let (m, cfg) = store.stage_config(user.clone())?;
                check_seed(&common, m.seed)?;
                let r = store.evaluate(&cfg, &strategies(select, &cfg), select.snr)?;
                print!("{}", r.render_table());
            }
            Command::Sweep { select, .. } => {
                let mut cfg = user.clone().unwrap_or_default();
                if let Some(s) = common.seed {
                    cfg.seeds = vec![s];
                }
                if let Some(c) = select.snr {
                    cfg.snr_grid = vec![c];
                }
                cfg.strategies = strategies(select, &cfg);
                cfg.validate()?;
                let r = run_sweep(&cfg, None)?;
                r.write(store.root())?;
                print!("{}", r.render_table());
            }
            Command::Report { .. } => {
                print!("{}", store.report()?);
            }
        }
        Ok(())
    })
    .with_context(|| format!("output directory {}", store.root().display()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<avfusion::Error>() {
        Some(avfusion::Error::Config { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.command.common().quiet {
        log::LevelFilter::Warn
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn negative_snr_values_parse() {
        let cli = Cli::try_parse_from(["avfusion", "synth", "--snr-grid", "-9,-3,clean"]).unwrap();
        let Command::Synth { snr_grid, .. } = cli.command else {
            panic!()
        };
        assert_eq!(
            snr_grid,
            vec![SnrCondition::Db(-9.0), SnrCondition::Db(-3.0), SnrCondition::Clean]
        );
        let cli = Cli::try_parse_from(["avfusion", "fuse", "--snr", "-6", "--strategy", "ao,dfn-blstm"]).unwrap();
        let Command::Fuse { select, .. } = cli.command else {
            panic!()
        };
        assert_eq!(select.snr, Some(SnrCondition::Db(-6.0)));
        assert_eq!(select.strategy, vec![Strategy::Ao, Strategy::DfnBlstm]);
    }

    #[test]
    fn config_errors_map_to_exit_code_2() {
        let e = anyhow::Error::from(avfusion::Error::config("corpus.train", "bad")).context("output directory x");
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("disk full")), 1);
    }
}
