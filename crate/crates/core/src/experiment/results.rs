//! Result tables: per-seed WERs, mean and 95% interval over seeds, and their
//! CSV, JSON and text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Strategy;
use super::pipeline::{mean_ci, TrainSummary};
use crate::decode::WerReport;
use crate::error::{Error, Result};
use crate::fusion::ModelKind;
use crate::synth::SnrCondition;

/// Decoding outcome of one utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceResult {
    pub id: String,
    pub strategy: Strategy,
    pub condition: SnrCondition,
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
    pub report: WerReport,
}

/// Pooled WER of one strategy in one condition for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub strategy: Strategy,
    pub condition: SnrCondition,
    pub report: WerReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedResult {
    pub seed: u64,
    pub cells: Vec<Cell>,
    pub training: BTreeMap<ModelKind, TrainSummary>,
    pub utterances: Vec<UtteranceResult>,
}

impl SeedResult {
    /// Pools utterance results into cells, in strategy-then-grid order.
    pub fn from_utterances(
        seed: u64,
        strategies: &[Strategy],
        conditions: &[SnrCondition],
        utterances: Vec<UtteranceResult>,
        training: BTreeMap<ModelKind, TrainSummary>,
    ) -> Self {
        let mut cells = Vec::new();
        for &s in strategies {
            for &c in conditions {
                let report = WerReport::pooled(
                    utterances
                        .iter()
                        .filter(|u| u.strategy == s && u.condition == c)
                        .map(|u| &u.report),
                );
                cells.push(Cell {
                    strategy: s,
                    condition: c,
                    report,
                });
            }
        }
        Self {
            seed,
            cells,
            training,
            utterances,
        }
    }

    pub fn wer(&self, strategy: Strategy, condition: SnrCondition) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.condition == condition)
            .map(|c| c.report.wer)
    }

    /// Unweighted mean over the conditions of this seed.
    pub fn average(&self, strategy: Strategy, conditions: &[SnrCondition]) -> Option<f64> {
        let v: Option<Vec<f64>> = conditions.iter().map(|&c| self.wer(strategy, c)).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Mean and 95% half-width over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub mean: f64,
    pub ci: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub strategy: Strategy,
    /// One entry per condition, in grid order.
    pub cells: Vec<Summary>,
    pub avg: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepResults {
    pub strategies: Vec<Strategy>,
    pub conditions: Vec<SnrCondition>,
    pub table: Vec<TableRow>,
    pub seeds: Vec<SeedResult>,
}

fn summary(values: &[f64]) -> Summary {
    let (mean, ci) = mean_ci(values);
    Summary { mean, ci }
}

impl SweepResults {
    pub fn new(strategies: Vec<Strategy>, conditions: Vec<SnrCondition>, seeds: Vec<SeedResult>) -> Result<Self> {
        let mut table = Vec::new();
        for &s in &strategies {
            let mut cells = Vec::new();
            for &c in &conditions {
                let v: Option<Vec<f64>> = seeds.iter().map(|r| r.wer(s, c)).collect();
                let v = v.ok_or_else(|| Error::InvalidInput(format!("no result for {s} at {c}")))?;
                cells.push(summary(&v));
            }
            let avg: Vec<f64> = seeds.iter().filter_map(|r| r.average(s, &conditions)).collect();
            table.push(TableRow {
                strategy: s,
                cells,
                avg: summary(&avg),
            });
        }
        Ok(Self {
            strategies,
            conditions,
            table,
            seeds,
        })
    }

    pub fn row(&self, strategy: Strategy) -> Option<&TableRow> {
        self.table.iter().find(|r| r.strategy == strategy)
    }

    /// Table layout: one row per strategy, one column per condition plus the
    /// average, WER in percent.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::from("strategy")];
        header.extend(self.conditions.iter().map(|c| c.to_string()));
        header.push("avg".into());
        w.write_record(&header)?;
        for row in &self.table {
            let mut rec = vec![row.strategy.to_string()];
            rec.extend(row.cells.iter().map(|c| format!("{:.4}", 100.0 * c.mean)));
            rec.push(format!("{:.4}", 100.0 * row.avg.mean));
            w.write_record(&rec)?;
        }
        csv_string(w)
    }

    /// WER-vs-SNR plot data: `strategy, snr, wer_mean, wer_ci` in percent.
    pub fn plot_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["strategy", "snr", "wer_mean", "wer_ci"])?;
        for row in &self.table {
            for (c, s) in self.conditions.iter().zip(&row.cells) {
                w.write_record([
                    row.strategy.to_string(),
                    c.to_string(),
                    format!("{:.4}", 100.0 * s.mean),
                    format!("{:.4}", 100.0 * s.ci),
                ])?;
            }
        }
        csv_string(w)
    }

    /// Fixed-width text table with 95% half-widths.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<14}", "WER (%)");
        for c in &self.conditions {
            let _ = write!(out, "{:>15}", c.to_string());
        }
        let _ = writeln!(out, "{:>15}", "avg");
        for row in &self.table {
            let _ = write!(out, "{:<14}", row.strategy.to_string());
            for s in row.cells.iter().chain(std::iter::once(&row.avg)) {
                let _ = write!(out, "{:>15}", format!("{:.2} ±{:.2}", 100.0 * s.mean, 100.0 * s.ci));
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "\n{} seed(s): {:?}",
            self.seeds.len(),
            self.seeds.iter().map(|s| s.seed).collect::<Vec<_>>()
        );
        if let Some(ao) = self.row(Strategy::Ao) {
            for row in &self.table {
                if row.strategy != Strategy::Ao && ao.avg.mean > 0.0 {
                    let rel = 100.0 * (ao.avg.mean - row.avg.mean) / ao.avg.mean;
                    let _ = writeln!(
                        out,
                        "{:<14} relative WER reduction vs ao: {rel:+.1}%",
                        row.strategy.to_string()
                    );
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: "results.json".into(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Writes `results.csv` and `results.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [("results.csv", self.to_csv()?), ("results.json", self.to_json()?)] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(strategy: Strategy, condition: SnrCondition, errors: usize, n: usize) -> UtteranceResult {
        UtteranceResult {
            id: "u".into(),
            strategy,
            condition,
            reference: vec![],
            hypothesis: vec![],
            report: WerReport {
                substitutions: errors,
                reference_len: n,
                wer: errors as f64 / n as f64,
                ..WerReport::default()
            },
        }
    }

    fn results() -> SweepResults {
        let conds = vec![SnrCondition::Db(-9.0), SnrCondition::Clean];
        let strategies = vec![Strategy::Ao, Strategy::Oracle];
        let seeds = [(1, 4), (2, 2)]
            .iter()
            .map(|&(seed, e)| {
                let u = vec![
                    utt(Strategy::Ao, conds[0], e, 10),
                    utt(Strategy::Ao, conds[1], 0, 10),
                    utt(Strategy::Oracle, conds[0], 1, 10),
                    utt(Strategy::Oracle, conds[1], 0, 10),
                ];
                SeedResult::from_utterances(seed, &strategies, &conds, u, BTreeMap::new())
            })
            .collect();
        SweepResults::new(strategies, conds, seeds).unwrap()
    }

    #[test]
    fn table_means_and_intervals() {
        let r = results();
        let ao = r.row(Strategy::Ao).unwrap();
        assert!((ao.cells[0].mean - 0.3).abs() < 1e-12);
        let sd = (2.0 * 0.1f64.powi(2)).sqrt();
        assert!((ao.cells[0].ci - 1.96 * sd / 2f64.sqrt()).abs() < 1e-12);
        assert!((ao.avg.mean - 0.15).abs() < 1e-12);
        assert_eq!(r.row(Strategy::Oracle).unwrap().cells[0].ci, 0.0);
    }

    #[test]
    fn csv_layouts() {
        let r = results();
        let csv = r.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "strategy,-9,clean,avg");
        assert_eq!(lines.next().unwrap(), "ao,30.0000,0.0000,15.0000");
        let plot = r.plot_csv().unwrap();
        assert!(plot.starts_with("strategy,snr,wer_mean,wer_ci\nao,-9,30.0000,"));
        assert_eq!(plot.lines().count(), 5);
        let back: SweepResults = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.render_table().contains("oracle"));
    }

    #[test]
    fn single_cell_table() {
        let conds = vec![SnrCondition::Clean];
        let s = SeedResult::from_utterances(
            1,
            &[Strategy::Ao],
            &conds,
            vec![utt(Strategy::Ao, conds[0], 1, 4)],
            BTreeMap::new(),
        );
        let r = SweepResults::new(vec![Strategy::Ao], conds, vec![s]).unwrap();
        assert_eq!(r.table.len(), 1);
        assert_eq!(r.table[0].cells.len(), 1);
    }
}
