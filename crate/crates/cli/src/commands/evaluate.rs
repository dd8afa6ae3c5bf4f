use std::path::Path;

use cmmd_core::evalx::{self, MetricReport, ScoreVector};
use cmmd_core::panel::Dataset;
use serde::{Deserialize, Serialize};

use super::{prepare_out, write_json};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{metrics, test_rows, train_model, train_rows};

pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub auc: f64,
    pub h_measure: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub train_rows: usize,
    /// Test rows the model could not score because they have no text.
    pub skipped: usize,
    pub metrics: MetricReport,
}

/// Repeated train/test runs, one per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOutput {
    pub kind: String,
    pub runs: Vec<SeedRun>,
    pub mean: Summary,
    /// Sample standard deviation; zero for a single run.
    pub std: Summary,
}

/// Reads `score` and `label` columns; rows with a blank label are ignored.
pub fn read_scores(path: &Path) -> CliResult<ScoreVector> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let h = rdr.headers()?.clone();
    let col = |name: &str| {
        h.iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| CliError::Data(format!("{}: no {name:?} column", path.display())))
    };
    let (sc, lc) = (col("score")?, col("label")?);
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| CliError::Data(format!("{} line {}: bad {what}", path.display(), i + 2));
        let label = rec.get(lc).unwrap_or("").trim();
        if label.is_empty() {
            continue;
        }
        labels.push(label.parse::<u8>().map_err(|_| bad("label"))?);
        scores.push(rec.get(sc).unwrap_or("").trim().parse::<f64>().map_err(|_| bad("score"))?);
    }
    ScoreVector::new(scores, labels).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn summarise(runs: &[SeedRun]) -> (Summary, Summary) {
    let get = |f: fn(&MetricReport) -> f64| -> (f64, f64) {
        let xs: Vec<f64> = runs.iter().map(|r| f(&r.metrics)).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        (mean, std)
    };
    let (auc, h, ks) = (get(|m| m.auc), get(|m| m.h_measure), get(|m| m.ks));
    (
        Summary {
            auc: auc.0,
            h_measure: h.0,
            ks: ks.0,
        },
        Summary {
            auc: auc.1,
            h_measure: h.1,
            ks: ks.1,
        },
    )
}

/// Either scores an existing `scores.csv`, or repeats train-then-test once
/// per seed in `evaluate.seeds` (the run seed when empty).
pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<()> {
    let beta = cfg.evaluate.h_beta;
    if let Some(path) = &cfg.evaluate.scores {
        let out = prepare_out(cfg)?;
        let report = evalx::evaluate_with(&read_scores(path)?, (beta[0], beta[1]))?;
        write_json(&out.join(METRICS_FILE), &report)?;
        eprintln!("evaluate: auc {:.4} over {} rows", report.auc, report.n);
        return Ok(());
    }

    let spec = cfg.model()?;
    let split = cfg.split()?;
    let ds = Dataset::read(cfg.data_dir()?)?;
    let out = prepare_out(cfg)?;
    let seeds = if cfg.evaluate.seeds.is_empty() {
        vec![cfg.seed]
    } else {
        cfg.evaluate.seeds.clone()
    };
    let (train, test) = (train_rows(&ds, split), test_rows(&ds, split));
    let mut runs = Vec::new();
    for seed in seeds {
        let (trained, log) = train_model(&ds, &train, spec, cfg.features, cfg.horizon, cfg.downsample, seed)?;
        let scored = trained.score(&ds, &test, cfg.predict.n_samples, seed)?;
        runs.push(SeedRun {
            seed,
            train_rows: log.train_rows,
            skipped: scored.skipped.len(),
            metrics: metrics(&ds, &scored, cfg.horizon, beta)?,
        });
    }
    let (mean, std) = summarise(&runs);
    let output = EvaluateOutput {
        kind: spec.kind().into(),
        runs,
        mean,
        std,
    };
    write_json(&out.join(METRICS_FILE), &output)?;
    eprintln!(
        "evaluate: {} over {} seeds, auc {:.4} ± {:.4}",
        output.kind,
        output.runs.len(),
        mean.auc,
        std.auc
    );
    Ok(())
}
