use cmmd_core::panel::{synth_generate, Dataset, SynthCoefficients, SynthConfig};
use serde::Serialize;

use super::{create, prepare_out, write_json};
use crate::config::RunConfig;
use crate::error::CliResult;

pub const TRUTH_JSON: &str = "truth.json";
pub const TRUTH_CSV: &str = "truth.csv";

#[derive(Serialize)]
struct Truth<'a> {
    config: &'a SynthConfig,
    coefficients: &'a SynthCoefficients,
}

/// Writes a synthetic dataset plus its generator coefficients and per-row
/// ground truth. The run seed replaces `synth.seed`.
pub fn cmd_synth(cfg: &RunConfig) -> CliResult<()> {
    let sc = cfg.synth.clone().unwrap_or(SynthConfig {
        seed: cfg.seed,
        ..Default::default()
    });
    let out = prepare_out(cfg)?;
    let data = synth_generate(&sc)?;
    Dataset::from_synth(&data)?.write(&out)?;
    write_json(
        &out.join(TRUTH_JSON),
        &Truth {
            config: &sc,
            coefficients: &data.coefficients,
        },
    )?;

    let mut w = csv::Writer::from_writer(create(&out.join(TRUTH_CSV))?);
    let k = data.z_star.cols();
    let mut header = vec!["id".to_string(), "p_true".into()];
    header.extend((0..k).map(|j| format!("z_{j}")));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec = vec![format!("{}_{}", data.firm_ids[i], data.quarters[i]), data.p_true[i].to_string()];
        rec.extend(data.z_star.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    eprintln!("synth: {} rows written to {}", data.len(), out.display());
    Ok(())
}
