//! MDA text pipeline: tokenization, stopword removal, Porter stemming,
//! length filtering and TF-IDF vectorization.

mod io;
mod porter;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::numcore::Tensor2;
use crate::{Error, Result};

pub use io::{
    parse_mda_filename, read_mda_dir, read_sparse, read_vocabulary, write_sparse,
    write_vocabulary, MdaFile,
};
pub use porter::stem;

/// Documents need strictly more raw tokens than this to be kept.
pub const MIN_RAW_TOKENS: usize = 1500;
pub const DEFAULT_MAX_TERMS: usize = 20_000;

const ENGLISH_STOPWORDS: &str = include_str!("stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub doc_id: String,
    pub tokens: Vec<String>,
    /// Token count straight out of the tokenizer, before stopword removal.
    pub raw_token_count: usize,
}

/// Lowercases, splits on anything that is not an ASCII letter and drops
/// tokens shorter than two characters.
pub fn tokenize(doc_id: impl Into<String>, text: &str) -> TokenizedDoc {
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|t| t.len() >= 2)
        .map(|t| t.to_ascii_lowercase())
        .collect();
    TokenizedDoc {
        doc_id: doc_id.into(),
        raw_token_count: tokens.len(),
        tokens,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// The embedded English list.
    pub fn english() -> Self {
        Self::from_terms(ENGLISH_STOPWORDS.lines())
    }

    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(
            terms
                .into_iter()
                .map(|t| t.as_ref().trim().to_ascii_lowercase())
                .filter(|t| !t.is_empty())
                .collect(),
        )
    }

    pub fn contains(&self, term: &str) -> bool {
        self.0.contains(term)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Removes stopwords, then stems what is left. `raw_token_count` is kept.
pub fn preprocess(doc: TokenizedDoc, stopwords: &Stopwords) -> TokenizedDoc {
    let tokens = doc
        .tokens
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .map(|t| stem(&t))
        .collect();
    TokenizedDoc {
        doc_id: doc.doc_id,
        tokens,
        raw_token_count: doc.raw_token_count,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    /// `(doc_id, raw_token_count)` of every rejected document.
    pub rejected: Vec<(String, usize)>,
}

/// Keeps documents with more than [`MIN_RAW_TOKENS`] raw tokens.
pub fn filter_docs(docs: Vec<TokenizedDoc>) -> (Vec<TokenizedDoc>, FilterReport) {
    let mut report = FilterReport::default();
    let kept = docs
        .into_iter()
        .filter(|d| {
            let keep = d.raw_token_count > MIN_RAW_TOKENS;
            if !keep {
                report.rejected.push((d.doc_id.clone(), d.raw_token_count));
            }
            keep
        })
        .collect();
    (kept, report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<(String, u64)>,
    index: HashMap<String, usize>,
    n_docs: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from explicit `(term, df)` pairs in the given order.
    pub fn from_terms(terms: Vec<(String, u64)>, n_docs: usize) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, (t, df)) in terms.iter().enumerate() {
            if *df as usize > n_docs {
                return Err(Error::Data(format!("term {t:?} has df {df} above corpus size {n_docs}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Self { terms, index, n_docs })
    }

    pub fn terms(&self) -> &[(String, u64)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Size of the corpus the document frequencies were counted on.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn position(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, i: usize) -> f64 {
        let n = self.n_docs as f64;
        ((1.0 + n) / (1.0 + self.terms[i].1 as f64)).ln() + 1.0
    }
}

/// Top `max_terms` terms by document frequency, ties broken by the term.
pub fn fit_vocabulary(docs: &[TokenizedDoc], max_terms: usize) -> Vocabulary {
    let mut df: HashMap<&str, u64> = HashMap::new();
    for d in docs {
        let uniq: HashSet<&str> = d.tokens.iter().map(String::as_str).collect();
        for t in uniq {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut terms: Vec<(String, u64)> = df.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    terms.truncate(max_terms);
    Vocabulary::from_terms(terms, docs.len()).expect("counted terms are unique")
}

/// Sparse document vector; entries are sorted by term index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub doc_id: String,
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl DocVector {
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// L2-normalised TF-IDF with raw counts as term frequency.
pub fn vectorize(doc: &TokenizedDoc, vocab: &Vocabulary) -> DocVector {
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for t in &doc.tokens {
        if let Some(i) = vocab.position(t) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, c)| (i, c as f64 * vocab.idf(i)))
        .collect();
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        entries.iter_mut().for_each(|(_, v)| *v /= norm);
    }
    DocVector {
        doc_id: doc.doc_id.clone(),
        dim: vocab.len(),
        entries,
    }
}

/// Stacks vectors into a dense `n x dim` tensor.
pub fn to_dense(vectors: &[&DocVector], dim: usize) -> Result<Tensor2> {
    let mut out = Tensor2::zeros(vectors.len(), dim);
    for (r, v) in vectors.iter().enumerate() {
        if v.dim != dim {
            return Err(Error::dim("to_dense", format!("vector {} has dim {}, expected {dim}", v.doc_id, v.dim)));
        }
        let row = out.row_mut(r);
        for &(i, x) in &v.entries {
            row[i] = x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use sha2::{Digest, Sha256};

    fn doc(id: &str, toks: &[&str]) -> TokenizedDoc {
        TokenizedDoc {
            doc_id: id.into(),
            tokens: toks.iter().map(|s| s.to_string()).collect(),
            raw_token_count: toks.len(),
        }
    }

    #[test]
    fn tokenizer_rules() {
        let d = tokenize("d", "The company's Q4 losses");
        assert_eq!(d.tokens, ["the", "company", "losses"]);
        assert_eq!(d.raw_token_count, 3);
        let e = tokenize("e", "");
        assert!(e.tokens.is_empty());
        assert_eq!(e.raw_token_count, 0);
        let again = tokenize("d", &d.tokens.join(" "));
        assert_eq!(again.tokens, d.tokens);
        assert_eq!(tokenize("x", "Épargne naïve co-op").tokens, ["pargne", "na", "ve", "co", "op"]);
    }

    #[test]
    fn stopword_list_is_pinned() {
        let hash = Sha256::digest(ENGLISH_STOPWORDS.as_bytes());
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "ca1904afa9752b85e26d5c4998bb7ed1ed30de40945bea384cdeb068c32741b2");
        let sw = Stopwords::english();
        assert_eq!(sw.len(), 153);
        assert!(sw.contains("the") && sw.contains("because"));
    }

    #[test]
    fn preprocess_removes_then_stems() {
        let sw = Stopwords::english();
        let d = preprocess(tokenize("d", "the losses were running"), &sw);
        assert_eq!(d.tokens, ["loss", "run"]);
        assert_eq!(d.raw_token_count, 4);
        assert!(preprocess(tokenize("d", "and the of"), &sw).tokens.is_empty());
        // "during" stems to "dure", which is not a stopword.
        assert_eq!(stem("during"), "dure");
        assert!(preprocess(tokenize("d", "during"), &sw).tokens.is_empty());
    }

    #[test]
    fn length_filter_is_strict() {
        let mk = |id: &str, n: usize| TokenizedDoc {
            doc_id: id.into(),
            tokens: vec![],
            raw_token_count: n,
        };
        let (kept, report) = filter_docs(vec![mk("a", 1500), mk("b", 1501), mk("c", 0)]);
        assert_eq!(kept.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), ["b"]);
        assert_eq!(report.rejected, [("a".to_string(), 1500), ("c".to_string(), 0)]);
        let (kept, report) = filter_docs(vec![]);
        assert!(kept.is_empty() && report.rejected.is_empty());
    }

    #[test]
    fn vocabulary_order_and_cap() {
        let corpus = [doc("1", &["a", "b"]), doc("2", &["b", "c"])];
        let v = fit_vocabulary(&corpus, 2);
        assert_eq!(v.terms(), [("b".to_string(), 2), ("a".to_string(), 1)]);
        let all = fit_vocabulary(&corpus, 100);
        assert_eq!(all.len(), 3);
        assert_eq!(fit_vocabulary(&corpus, 100), all);
    }

    #[test]
    fn tfidf_worked_example() {
        let d1 = doc("d1", &["a", "b", "a"]);
        let d2 = doc("d2", &["b", "c"]);
        let vocab = Vocabulary::from_terms(
            vec![("a".into(), 1), ("b".into(), 2), ("c".into(), 1)],
            2,
        )
        .unwrap();
        assert_eq!(fit_vocabulary(&[d1.clone(), d2.clone()], 10).len(), 3);
        let raw_a: f64 = 2.0 * ((3.0f64 / 2.0).ln() + 1.0);
        assert!((raw_a - 2.81093).abs() < 1e-5);
        let v = vectorize(&d1, &vocab).to_dense();
        assert!((v[0] - 0.942_155_6).abs() < 1e-6, "{v:?}");
        assert!((v[1] - 0.335_175_7).abs() < 1e-6, "{v:?}");
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn vectorize_edge_cases() {
        let vocab = fit_vocabulary(&[doc("1", &["a", "b"]), doc("2", &["b"])], 10);
        let oov = vectorize(&doc("x", &["zzz"]), &vocab);
        assert!(oov.entries.is_empty());
        assert_eq!(oov.norm(), 0.0);
        let single = vectorize(&doc("y", &["a", "a"]), &vocab);
        assert_eq!(single.entries.len(), 1);
        assert!((single.norm() - 1.0).abs() < 1e-12);
    }

    fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
        let term = prop::sample::select(vec!["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta"]);
        prop::collection::vec(prop::collection::vec(term.prop_map(String::from), 0..12), 1..10)
    }

    proptest! {
        #[test]
        fn permutation_invariance(corpus in corpus_strategy(), rot in 0usize..10, max in 1usize..8) {
            let docs: Vec<TokenizedDoc> = corpus
                .iter()
                .enumerate()
                .map(|(i, t)| TokenizedDoc { doc_id: i.to_string(), tokens: t.clone(), raw_token_count: t.len() })
                .collect();
            let mut shuffled = docs.clone();
            shuffled.reverse();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            let v1 = fit_vocabulary(&docs, max);
            let v2 = fit_vocabulary(&shuffled, max);
            prop_assert_eq!(&v1, &v2);
            for d in &docs {
                let a = vectorize(d, &v1);
                prop_assert_eq!(&a, &vectorize(d, &v2));
                let n = a.norm();
                prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
                for &(i, x) in &a.entries {
                    prop_assert!(x > 0.0);
                    prop_assert!(d.tokens.contains(&v1.terms()[i].0));
                }
            }
        }
    }
}
