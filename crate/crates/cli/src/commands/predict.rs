use cmmd_core::panel::Dataset;
use serde::Serialize;

use super::{create, model_path, prepare_out, write_json};
use crate::config::{RowSelection, RunConfig};
use crate::error::CliResult;
use crate::experiment::{test_rows, Trained};

pub const SCORES_FILE: &str = "scores.csv";
pub const LATENT_FILE: &str = "latent.csv";
pub const PREDICT_REPORT: &str = "predict_report.json";

#[derive(Debug, Serialize)]
pub struct PredictReport {
    pub kind: String,
    pub rows: usize,
    pub scored: usize,
    /// Ids of rows the model could not score because they have no text.
    pub skipped: Vec<String>,
}

/// Scores test-window rows (or every row) with a saved model.
pub fn cmd_predict(cfg: &RunConfig) -> CliResult<()> {
    let ds = Dataset::read(cfg.data_dir()?)?;
    let out = prepare_out(cfg)?;
    let trained = Trained::load(&model_path(cfg.predict.model.as_deref(), &out))?;
    let idx = match cfg.predict.rows {
        RowSelection::Test => test_rows(&ds, cfg.split()?),
        RowSelection::All => (0..ds.rows.len()).collect(),
    };
    let scored = trained.score(&ds, &idx, cfg.predict.n_samples, cfg.seed)?;
    let horizon = trained.meta.horizon;

    let mut w = csv::Writer::from_writer(create(&out.join(SCORES_FILE))?);
    w.write_record(["id", "firm_id", "quarter", "score", "label"])?;
    for (&i, s) in scored.rows.iter().zip(&scored.scores) {
        let r = &ds.rows[i];
        let label = r.label(horizon).map(|y| y.to_string()).unwrap_or_default();
        w.write_record([r.id(), r.firm_id.clone(), r.quarter.to_string(), s.to_string(), label])?;
    }
    w.flush()?;

    if cfg.predict.export_latent {
        let (mu, var) = trained.latent(&ds, &scored.rows)?;
        let d = mu.cols();
        let mut w = csv::Writer::from_writer(create(&out.join(LATENT_FILE))?);
        let mut header = vec!["id".to_string()];
        header.extend((0..d).map(|j| format!("mu_{j}")));
        header.extend((0..d).map(|j| format!("var_{j}")));
        header.push("score".into());
        w.write_record(&header)?;
        for (r, (&i, s)) in scored.rows.iter().zip(&scored.scores).enumerate() {
            let mut rec = vec![ds.rows[i].id()];
            rec.extend(mu.row(r).iter().map(f64::to_string));
            rec.extend(var.row(r).iter().map(f64::to_string));
            rec.push(s.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
    }

    let report = PredictReport {
        kind: trained.kind().into(),
        rows: idx.len(),
        scored: scored.rows.len(),
        skipped: ds.ids(&scored.skipped),
    };
    write_json(&out.join(PREDICT_REPORT), &report)?;
    eprintln!(
        "predict: scored {} of {} rows ({} skipped without text)",
        report.scored,
        report.rows,
        report.skipped.len()
    );
    Ok(())
}
