mod evaluate;
mod mui;
mod predict;
mod prep;
mod sweep;
mod synth;
mod train;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use evaluate::{cmd_evaluate, read_scores, EvaluateOutput, SeedRun, METRICS_FILE};
pub use mui::{cmd_mui, MUI_FILE};
pub use predict::{cmd_predict, PredictReport, LATENT_FILE, PREDICT_REPORT, SCORES_FILE};
pub use prep::{cmd_prep, PREP_REPORT};
pub use sweep::{cmd_sweep, expand_grid, LEADERBOARD_FILE};
pub use synth::{cmd_synth, TRUTH_CSV, TRUTH_JSON};
pub use train::{cmd_train, HISTORY_FILE, MODEL_FILE, TRAIN_REPORT};

use crate::config::RunConfig;
use crate::error::CliResult;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Creates the output directory and archives the resolved config in it.
fn prepare_out(cfg: &RunConfig) -> CliResult<PathBuf> {
    let out = cfg.out_dir()?.to_path_buf();
    cfg.write_resolved(&out)?;
    Ok(out)
}

/// The configured model path, or `model.bin` in the output directory.
fn model_path(explicit: Option<&Path>, out: &Path) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| out.join(MODEL_FILE))
}
