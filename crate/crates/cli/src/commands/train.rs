use cmmd_core::panel::Dataset;

use super::{create, prepare_out, write_json};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::experiment::{train_model, train_report, train_rows};

pub const MODEL_FILE: &str = "model.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const TRAIN_REPORT: &str = "train_report.json";

/// Fits the configured model on the training window (every row when no
/// split is set) and writes the bundle, per-epoch history and a report.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let spec = cfg.model()?;
    let ds = Dataset::read(cfg.data_dir()?)?;
    let out = prepare_out(cfg)?;
    let rows = match &cfg.split {
        Some(s) => train_rows(&ds, s),
        None => (0..ds.rows.len()).collect(),
    };
    let (trained, log) = train_model(&ds, &rows, spec, cfg.features, cfg.horizon, cfg.downsample, cfg.seed)?;
    trained.save(&out.join(MODEL_FILE))?;

    if !log.history.is_empty() {
        let mut w = csv::Writer::from_writer(create(&out.join(HISTORY_FILE))?);
        w.write_record(["epoch", "recon_xm", "class_ll", "kl_post_prior", "kl_aux_prior", "total"])?;
        for (e, h) in log.history.iter().enumerate() {
            w.write_record([
                (e + 1).to_string(),
                h.recon_xm.to_string(),
                h.class_ll.to_string(),
                h.kl_post_prior.to_string(),
                h.kl_aux_prior.to_string(),
                h.total.to_string(),
            ])?;
        }
        w.flush()?;
    }
    write_json(&out.join(TRAIN_REPORT), &train_report(&trained, &log, cfg.seed))?;
    eprintln!(
        "train: {} on {} rows, model written to {}",
        trained.kind(),
        log.train_rows,
        out.join(MODEL_FILE).display()
    );
    Ok(())
}
