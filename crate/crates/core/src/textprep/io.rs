use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use super::{DocVector, Vocabulary};
use crate::panel::Quarter;
use crate::{Error, Result};

/// One `<firm_id>_<YYYYQn>.txt` file from an MDA directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdaFile {
    pub firm_id: String,
    pub quarter: Quarter,
    pub path: PathBuf,
}

impl MdaFile {
    /// `<firm_id>_<YYYYQn>`, also used as the document id.
    pub fn doc_id(&self) -> String {
        format!("{}_{}", self.firm_id, self.quarter)
    }
}

/// Splits `<firm_id>_<YYYYQn>.txt` at the last underscore.
pub fn parse_mda_filename(name: &str) -> Result<(String, Quarter)> {
    let bad = || Error::Data(format!("MDA file name {name:?} is not <firm_id>_<YYYYQn>.txt"));
    let stem = name.strip_suffix(".txt").ok_or_else(bad)?;
    let (firm, q) = stem.rsplit_once('_').ok_or_else(bad)?;
    if firm.is_empty() {
        return Err(bad());
    }
    Ok((firm.to_string(), q.parse().map_err(|_| bad())?))
}

/// Lists MDA files sorted by firm and quarter. Files not ending in `.txt`
/// are ignored; malformed `.txt` names are an error.
pub fn read_mda_dir(dir: impl AsRef<Path>) -> Result<Vec<MdaFile>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if !name.ends_with(".txt") {
            continue;
        }
        let (firm_id, quarter) = parse_mda_filename(name)?;
        out.push(MdaFile {
            firm_id,
            quarter,
            path: entry.path(),
        });
    }
    out.sort_by(|a, b| (&a.firm_id, a.quarter).cmp(&(&b.firm_id, b.quarter)));
    Ok(out)
}

/// One `term<TAB>df` line per term, in vocabulary order.
pub fn write_vocabulary<W: Write>(mut w: W, vocab: &Vocabulary) -> Result<()> {
    for (t, df) in vocab.terms() {
        writeln!(w, "{t}\t{df}")?;
    }
    Ok(())
}

/// Reads a vocabulary file; `n_docs` is the training corpus size.
pub fn read_vocabulary<R: BufRead>(r: R, n_docs: usize) -> Result<Vocabulary> {
    let mut terms = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Data(format!("vocabulary line {}: {line:?}", i + 1));
        let (t, df) = line.split_once('\t').ok_or_else(bad)?;
        if t.is_empty() || !t.bytes().all(|c| c.is_ascii_lowercase()) {
            return Err(bad());
        }
        let df: u64 = df.parse().map_err(|_| bad())?;
        terms.push((t.to_string(), df));
    }
    Vocabulary::from_terms(terms, n_docs)
}

/// `doc_id,term_index,value` triples. A document without entries is written
/// as a single `(doc_id, 0, 0)` row so its presence survives a round trip.
pub fn write_sparse<W: Write>(w: W, vectors: &[DocVector]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["doc_id", "term_index", "value"])?;
    for v in vectors {
        if v.entries.is_empty() {
            csv.write_record([v.doc_id.as_str(), "0", "0"])?;
        }
        for &(i, x) in &v.entries {
            csv.write_record([v.doc_id.clone(), i.to_string(), x.to_string()])?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Reads triples back into vectors of dimension `dim`, in order of first
/// appearance. Explicit zeros are accepted and dropped.
pub fn read_sparse<R: Read>(r: R, dim: usize) -> Result<Vec<DocVector>> {
    let mut csv = csv::Reader::from_reader(r);
    let headers = csv.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["doc_id", "term_index", "value"] {
        return Err(Error::Data(format!("sparse matrix header {headers:?}")));
    }
    let mut out: Vec<DocVector> = Vec::new();
    let mut pos: HashMap<String, usize> = HashMap::new();
    for (line, rec) in csv.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::Data(format!("sparse matrix row {}: {m}", line + 2));
        if rec.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        let id = &rec[0];
        let i: usize = rec[1].parse().map_err(|_| bad("bad term index"))?;
        let x: f64 = rec[2].parse().map_err(|_| bad("bad value"))?;
        if !x.is_finite() || x < 0.0 {
            return Err(bad("value must be finite and nonnegative"));
        }
        if x > 0.0 && i >= dim {
            return Err(bad(&format!("term index {i} outside dimension {dim}")));
        }
        let k = *pos.entry(id.to_string()).or_insert_with(|| {
            out.push(DocVector {
                doc_id: id.to_string(),
                dim,
                entries: Vec::new(),
            });
            out.len() - 1
        });
        if x > 0.0 {
            out[k].entries.push((i, x));
        }
    }
    for v in &mut out {
        v.entries.sort_by_key(|e| e.0);
        if v.entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Data(format!("duplicate term index in document {}", v.doc_id)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{fit_vocabulary, vectorize, TokenizedDoc};

    #[test]
    fn mda_names() {
        let (f, q) = parse_mda_filename("ACME_CO_2010Q1.txt").unwrap();
        assert_eq!((f.as_str(), q.to_string().as_str()), ("ACME_CO", "2010Q1"));
        for bad in ["x.txt", "_2010Q1.txt", "a_2010Q5.txt", "a_2010Q1.md", "a2010Q1.txt"] {
            assert!(parse_mda_filename(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn directory_listing_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["b_2010Q1.txt", "a_2011Q2.txt", "a_2010Q3.txt", "notes.md"] {
            std::fs::write(dir.path().join(n), "x").unwrap();
        }
        let files = read_mda_dir(dir.path()).unwrap();
        let ids: Vec<String> = files.iter().map(MdaFile::doc_id).collect();
        assert_eq!(ids, ["a_2010Q3", "a_2011Q2", "b_2010Q1"]);
    }

    #[test]
    fn vocabulary_and_sparse_round_trip() {
        let docs: Vec<TokenizedDoc> = [vec!["loss", "debt", "loss"], vec!["debt"], vec!["cash"], vec![]]
            .iter()
            .enumerate()
            .map(|(i, t)| TokenizedDoc {
                doc_id: format!("d{i}"),
                tokens: t.iter().map(|s| s.to_string()).collect(),
                raw_token_count: t.len(),
            })
            .collect();
        let vocab = fit_vocabulary(&docs, 10);
        let mut buf = Vec::new();
        write_vocabulary(&mut buf, &vocab).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "debt\t2\ncash\t1\nloss\t1\n");
        assert_eq!(read_vocabulary(&buf[..], docs.len()).unwrap(), vocab);

        let vecs: Vec<DocVector> = docs.iter().map(|d| vectorize(d, &vocab)).collect();
        let mut buf = Vec::new();
        write_sparse(&mut buf, &vecs).unwrap();
        assert_eq!(read_sparse(&buf[..], vocab.len()).unwrap(), vecs);
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_vocabulary(&b"a\tx\n"[..], 3).is_err());
        assert!(read_vocabulary(&b"a\t5\n"[..], 3).is_err());
        assert!(read_vocabulary(&b"a\t1\na\t1\n"[..], 3).is_err());
        assert!(read_sparse(&b"doc_id,term_index,value\nd,9,0.5\n"[..], 3).is_err());
        assert!(read_sparse(&b"doc_id,term_index,value\nd,1,-0.5\n"[..], 3).is_err());
        assert!(read_sparse(&b"doc_id,term_index,value\nd,1,0.5\nd,1,0.1\n"[..], 3).is_err());
        assert!(read_sparse(&b"a,b,c\n"[..], 3).is_err());
    }
}
