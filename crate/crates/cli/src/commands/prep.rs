use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use cmmd_core::panel::{
    build_panel, merge_market, read_bankruptcies, read_fundamentals, read_market, BuildOptions, Dataset, PrepReport,
    Quarter,
};
use cmmd_core::textprep::{filter_docs, fit_vocabulary, preprocess, read_mda_dir, tokenize, vectorize, Stopwords};
use serde::Serialize;

use super::{prepare_out, write_json};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const PREP_REPORT: &str = "prep_report.json";

#[derive(Serialize)]
struct Report {
    panel: PrepReport,
    /// `(doc_id, raw token count)` of MDA files too short to use.
    short_documents: Vec<(String, usize)>,
    /// Last prediction quarter whose documents counted towards the vocabulary.
    vocabulary_fit_end: Option<Quarter>,
    vocabulary_docs: usize,
    vocabulary_terms: usize,
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Builds a dataset from raw CSVs and an MDA directory. Vocabulary and idf
/// are fitted on documents referenced by training rows only (rows at or
/// before `split.train_end` when a split is configured).
pub fn cmd_prep(cfg: &RunConfig) -> CliResult<()> {
    let p = cfg
        .prep
        .as_ref()
        .ok_or_else(|| CliError::validation("no prep section in config"))?;
    let out = prepare_out(cfg)?;

    let mut raw = read_fundamentals(open(&p.fundamentals)?)?;
    if let Some(m) = &p.market {
        raw = merge_market(raw, read_market(open(m)?)?)?;
    }
    let bankruptcies = read_bankruptcies(open(&p.bankruptcies)?)?;

    let stop = Stopwords::english();
    let mut docs = Vec::new();
    let mut keys = HashMap::new();
    for f in read_mda_dir(&p.mda_dir).map_err(|e| CliError::Data(format!("{}: {e}", p.mda_dir.display())))? {
        let bytes = std::fs::read(&f.path)?;
        let text = String::from_utf8_lossy(&bytes);
        keys.insert(f.doc_id(), (f.firm_id.clone(), f.quarter));
        docs.push(preprocess(tokenize(f.doc_id(), &text), &stop));
    }
    let (kept, filter) = filter_docs(docs);
    let index: BTreeMap<(String, Quarter), String> =
        kept.iter().map(|d| (keys[&d.doc_id].clone(), d.doc_id.clone())).collect();

    let opts = BuildOptions {
        require_mda: p.require_mda,
        label_end: p.label_end,
    };
    let (rows, mut report) = build_panel(&raw, &index, &bankruptcies, &opts)?;
    report.mda_docs_rejected_short = filter.rejected.len();

    let fit_end = cfg.split.map(|s| s.train_end);
    let train_docs: BTreeSet<&str> = rows
        .iter()
        .filter(|r| fit_end.is_none_or(|e| r.quarter <= e))
        .filter_map(|r| r.mda_ref.as_deref())
        .collect();
    let used: BTreeSet<&str> = rows.iter().filter_map(|r| r.mda_ref.as_deref()).collect();
    let fit_docs: Vec<_> = kept.iter().filter(|d| train_docs.contains(d.doc_id.as_str())).cloned().collect();
    let vocab = fit_vocabulary(&fit_docs, p.max_terms);
    let vectors = kept
        .iter()
        .filter(|d| used.contains(d.doc_id.as_str()))
        .map(|d| (d.doc_id.clone(), vectorize(d, &vocab)))
        .collect();

    let ds = Dataset {
        rows,
        vocab,
        docs: vectors,
        source: "prep".into(),
    };
    ds.write(&out)?;
    write_json(
        &out.join(PREP_REPORT),
        &Report {
            panel: report,
            short_documents: filter.rejected,
            vocabulary_fit_end: fit_end,
            vocabulary_docs: fit_docs.len(),
            vocabulary_terms: ds.vocab.len(),
        },
    )?;
    eprintln!("prep: {} rows, {} terms written to {}", ds.rows.len(), ds.vocab.len(), out.display());
    Ok(())
}
