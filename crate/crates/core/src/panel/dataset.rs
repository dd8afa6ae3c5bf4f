use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::build::{PanelRow, HORIZONS};
use super::predictors::{N_PREDICTORS, PREDICTOR_NAMES};
use super::synth::SynthData;
use super::Quarter;
use crate::numcore::Tensor2;
use crate::textprep::{read_sparse, read_vocabulary, write_sparse, write_vocabulary, DocVector, Vocabulary};
use crate::{Error, Result};

pub const PANEL_FILE: &str = "panel.csv";
pub const XM_FILE: &str = "xm.csv";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const META_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    /// Number of training documents the vocabulary was counted on.
    pub vocab_docs: usize,
    pub source: String,
}

/// Panel rows with their text vectors, as stored in a dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<PanelRow>,
    pub vocab: Vocabulary,
    pub docs: HashMap<String, DocVector>,
    pub source: String,
}

impl Dataset {
    pub fn xm_dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn has_xm(&self, i: usize) -> bool {
        self.rows[i]
            .mda_ref
            .as_ref()
            .is_some_and(|d| self.docs.contains_key(d))
    }

    pub fn xo(&self, idx: &[usize]) -> Tensor2 {
        let mut out = Tensor2::zeros(idx.len(), N_PREDICTORS);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(&self.rows[i].predictors);
        }
        out
    }

    /// Text vectors; rows without a document are zero.
    pub fn xm(&self, idx: &[usize]) -> Tensor2 {
        let mut out = Tensor2::zeros(idx.len(), self.xm_dim());
        for (r, &i) in idx.iter().enumerate() {
            if let Some(doc) = self.rows[i].mda_ref.as_ref().and_then(|d| self.docs.get(d)) {
                let row = out.row_mut(r);
                for &(j, v) in &doc.entries {
                    row[j] = v;
                }
            }
        }
        out
    }

    pub fn quarters(&self) -> Vec<Quarter> {
        self.rows.iter().map(|r| r.quarter).collect()
    }

    pub fn ids(&self, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&i| self.rows[i].id()).collect()
    }

    /// Restricts `idx` to rows with a known label for `horizon`.
    pub fn labelled(&self, idx: &[usize], horizon: u8) -> Result<(Vec<usize>, Vec<u8>)> {
        if !HORIZONS.contains(&horizon) {
            return Err(Error::Validation(format!("horizon {horizon} not in {HORIZONS:?}")));
        }
        Ok(idx
            .iter()
            .filter_map(|&i| self.rows[i].label(horizon).map(|y| (i, y)))
            .unzip())
    }

    /// Builds a dataset from synthetic data. Text terms are named by index and
    /// every horizon carries the single synthetic label.
    pub fn from_synth(data: &SynthData) -> Result<Self> {
        if data.xo.cols() != N_PREDICTORS {
            return Err(Error::Validation(format!(
                "datasets hold {N_PREDICTORS} predictors, synthetic xo has {}",
                data.xo.cols()
            )));
        }
        let dim = data.xm.cols();
        let mut rows = Vec::with_capacity(data.len());
        let mut docs = HashMap::new();
        let mut df = vec![0u64; dim];
        for i in 0..data.len() {
            let q = data.quarters[i];
            let doc_id = format!("{}_{}", data.firm_ids[i], q.plus(-1));
            let mda_ref = data.has_xm[i].then(|| doc_id.clone());
            if data.has_xm[i] {
                let entries: Vec<(usize, f64)> = data
                    .xm
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v > 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect();
                for &(j, _) in &entries {
                    df[j] += 1;
                }
                docs.insert(doc_id.clone(), DocVector { doc_id, dim, entries });
            }
            let y = Some(data.y[i]);
            rows.push(PanelRow {
                firm_id: data.firm_ids[i].clone(),
                quarter: q,
                data_quarter: q.plus(-1),
                sic_division: Some(data.sic_divisions[i]),
                predictors: data.xo.row(i).to_vec(),
                mda_ref,
                labels: [y; 3],
            });
        }
        let terms = (0..dim).map(|j| (term_name(j), df[j])).collect();
        Ok(Self {
            vocab: Vocabulary::from_terms(terms, docs.len())?,
            rows,
            docs,
            source: "synth".into(),
        })
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_panel(BufWriter::new(File::create(dir.join(PANEL_FILE))?), &self.rows)?;

        let mut docs: Vec<&DocVector> = self.docs.values().collect();
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let owned: Vec<DocVector> = docs.into_iter().cloned().collect();
        write_sparse(BufWriter::new(File::create(dir.join(XM_FILE))?), &owned)?;

        let mut v = BufWriter::new(File::create(dir.join(VOCAB_FILE))?);
        write_vocabulary(&mut v, &self.vocab)?;
        v.flush()?;

        let meta = DatasetMeta {
            vocab_docs: self.vocab.n_docs(),
            source: self.source.clone(),
        };
        std::fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let open = |name: &str| {
            File::open(dir.join(name)).map_err(|e| Error::Data(format!("{}: {e}", dir.join(name).display())))
        };
        let meta: DatasetMeta = serde_json::from_reader(BufReader::new(open(META_FILE)?))
            .map_err(|e| Error::Data(format!("{META_FILE}: {e}")))?;
        let vocab = read_vocabulary(BufReader::new(open(VOCAB_FILE)?), meta.vocab_docs)?;
        let rows = read_panel(BufReader::new(open(PANEL_FILE)?))?;
        let docs = read_sparse(BufReader::new(open(XM_FILE)?), vocab.len())?
            .into_iter()
            .map(|d| (d.doc_id.clone(), d))
            .collect();
        Ok(Self {
            rows,
            vocab,
            docs,
            source: meta.source,
        })
    }
}

/// Lowercase name for term `j`: `aa`, `ab`, ..., `az`, `ba`, ..., `zz`, `baa`, ...
/// Names have at least two letters so the tokenizer would keep them.
pub fn term_name(mut j: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (j % 26) as u8);
        j /= 26;
        if j == 0 {
            break;
        }
    }
    if s.len() < 2 {
        s.push(b'a');
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

const KEY_COLUMNS: [&str; 8] = ["firm_id", "quarter", "data_quarter", "sic_division", "mda_ref", "y1", "y2", "y3"];

pub fn write_panel<W: Write>(w: W, rows: &[PanelRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(KEY_COLUMNS.iter().chain(PREDICTOR_NAMES.iter()))?;
    let opt = |v: Option<u8>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.firm_id.clone(),
            r.quarter.to_string(),
            r.data_quarter.to_string(),
            opt(r.sic_division),
            r.mda_ref.clone().unwrap_or_default(),
            opt(r.labels[0]),
            opt(r.labels[1]),
            opt(r.labels[2]),
        ];
        rec.extend(r.predictors.iter().map(|v| v.to_string()));
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_panel<R: std::io::Read>(r: R) -> Result<Vec<PanelRow>> {
    let mut csv = csv::Reader::from_reader(r);
    let header: Vec<String> = csv.headers()?.iter().map(String::from).collect();
    let expected: Vec<&str> = KEY_COLUMNS.iter().chain(PREDICTOR_NAMES.iter()).copied().collect();
    if header != expected {
        return Err(Error::Data(format!("{PANEL_FILE}: unexpected header")));
    }
    let mut rows = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::Data(format!("{PANEL_FILE} row {}: {m}", i + 2));
        let opt_u8 = |s: &str, what: &str, max: u8| -> Result<Option<u8>> {
            if s.is_empty() {
                return Ok(None);
            }
            match s.parse::<u8>() {
                Ok(v) if v <= max => Ok(Some(v)),
                _ => Err(bad(&format!("bad {what} {s:?}"))),
            }
        };
        let firm_id = rec[0].to_string();
        if firm_id.is_empty() {
            return Err(bad("empty firm_id"));
        }
        let quarter: Quarter = rec[1].parse().map_err(|_| bad("bad quarter"))?;
        let data_quarter: Quarter = rec[2].parse().map_err(|_| bad("bad data_quarter"))?;
        let sic_division = opt_u8(&rec[3], "sic_division", 10)?;
        let mda_ref = (!rec[4].is_empty()).then(|| rec[4].to_string());
        let labels = [
            opt_u8(&rec[5], "y1", 1)?,
            opt_u8(&rec[6], "y2", 1)?,
            opt_u8(&rec[7], "y3", 1)?,
        ];
        let predictors = (8..8 + N_PREDICTORS)
            .map(|c| {
                rec[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(&format!("bad {}", PREDICTOR_NAMES[c - 8])))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(PanelRow {
            firm_id,
            quarter,
            data_quarter,
            sic_division,
            predictors,
            mda_ref,
            labels,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{synth_generate, SynthConfig};

    #[test]
    fn term_names() {
        assert_eq!(term_name(0), "aa");
        assert_eq!(term_name(25), "az");
        assert_eq!(term_name(26), "ba");
        assert_eq!(term_name(26 * 26), "baa");
    }

    #[test]
    fn synth_dataset_round_trip() {
        let cfg = SynthConfig { n_firms: 6, quarters_per_firm: 3, xm_dim: 60, xm_missing_rate: 0.4, ..Default::default() };
        let data = synth_generate(&cfg).unwrap();
        let ds = Dataset::from_synth(&data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.write(dir.path()).unwrap();
        let back = Dataset::read(dir.path()).unwrap();
        assert_eq!(back, ds);

        let all: Vec<usize> = (0..ds.rows.len()).collect();
        assert_eq!(back.xo(&all), data.xo);
        assert_eq!(back.xm(&all), data.xm);
        for i in all {
            assert_eq!(back.has_xm(i), data.has_xm[i]);
        }
    }

    #[test]
    fn panel_reader_rejects_garbage() {
        assert!(read_panel("a,b\n1,2\n".as_bytes()).is_err());
        let mut header = KEY_COLUMNS.join(",");
        for n in PREDICTOR_NAMES {
            header.push(',');
            header.push_str(n);
        }
        let row = format!("A,2010Q1,2009Q4,,,2,,,{}\n", vec!["0.5"; N_PREDICTORS].join(","));
        assert!(read_panel(format!("{header}\n{row}").as_bytes()).is_err());
        let ok = row.replace(",2,,,", ",1,,,");
        assert_eq!(read_panel(format!("{header}\n{ok}").as_bytes()).unwrap().len(), 1);
    }
}
