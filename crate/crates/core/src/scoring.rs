//! Lexical scorers (DPH, BM25), MaxPassage and per-intent score matrices.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::intentgen::IntentSet;
use crate::text::tokenize;
use crate::{Error, Result};

pub const DEFAULT_POOL_DEPTH: usize = 100;
pub const PASSAGE_WINDOW: usize = 150;
pub const PASSAGE_STRIDE: usize = 75;

/// Collection statistics shared by all lexical scorers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub avg_len: f64,
    /// Collection term frequency.
    pub ctf: HashMap<String, u64>,
    /// Document frequency.
    pub df: HashMap<String, u64>,
}

/// Tokenized in-memory document collection.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: BTreeMap<String, Vec<String>>,
    stats: CorpusStats,
}

impl Corpus {
    pub fn new(documents: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut docs = BTreeMap::new();
        for (docno, text) in documents {
            if docs.insert(docno.clone(), tokenize(&text)).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate docno {docno:?}")));
            }
        }
        let mut stats = CorpusStats {
            n_docs: docs.len(),
            ..Default::default()
        };
        let mut total_len = 0usize;
        for tokens in docs.values() {
            total_len += tokens.len();
            let mut seen = HashSet::new();
            for t in tokens {
                *stats.ctf.entry(t.clone()).or_default() += 1;
                if seen.insert(t) {
                    *stats.df.entry(t.clone()).or_default() += 1;
                }
            }
        }
        stats.avg_len = if docs.is_empty() {
            0.0
        } else {
            total_len as f64 / docs.len() as f64
        };
        Ok(Corpus { docs, stats })
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn get(&self, docno: &str) -> Option<&[String]> {
        self.docs.get(docno).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.docs.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Term counts of a query; repeated terms weigh their contribution.
fn query_weights(query: &[String]) -> BTreeMap<&str, f64> {
    let mut w = BTreeMap::new();
    for t in query {
        *w.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    w
}

fn term_frequencies<'a>(doc: &'a [String], terms: &BTreeMap<&str, f64>) -> HashMap<&'a str, f64> {
    let mut tf = HashMap::new();
    for t in doc {
        if terms.contains_key(t.as_str()) {
            *tf.entry(t.as_str()).or_insert(0.0) += 1.0;
        }
    }
    tf
}

pub trait Scorer: Sync {
    fn score(&self, query: &[String], doc: &[String]) -> f64;
}

/// Parameter-free DPH from the divergence-from-randomness family.
#[derive(Debug, Clone, Copy)]
pub struct Dph<'a> {
    pub stats: &'a CorpusStats,
}

impl Dph<'_> {
    /// Contribution of one matched term with frequency `tf` in a document
    /// of length `len` and collection frequency `ctf`.
    pub fn term_score(&self, tf: f64, len: f64, ctf: f64) -> f64 {
        if tf <= 0.0 || ctf <= 0.0 || len <= 0.0 {
            return 0.0;
        }
        let f = tf / len;
        if f >= 1.0 {
            return 0.0;
        }
        let norm = (1.0 - f) * (1.0 - f) / (tf + 1.0);
        let n = self.stats.n_docs as f64;
        norm * (tf * ((tf * self.stats.avg_len / len) * (n / ctf)).log2()
            + 0.5 * (2.0 * std::f64::consts::PI * tf * (1.0 - f)).log2())
    }
}

impl Scorer for Dph<'_> {
    fn score(&self, query: &[String], doc: &[String]) -> f64 {
        let weights = query_weights(query);
        let tf = term_frequencies(doc, &weights);
        let len = doc.len() as f64;
        weights
            .iter()
            .filter_map(|(t, qtf)| {
                let tf = *tf.get(t)?;
                let ctf = *self.stats.ctf.get(*t)? as f64;
                Some(qtf * self.term_score(tf, len, ctf))
            })
            .sum()
    }
}

/// Okapi BM25 with the non-negative `ln(1 + (N - df + 0.5) / (df + 0.5))` idf.
#[derive(Debug, Clone, Copy)]
pub struct Bm25<'a> {
    pub stats: &'a CorpusStats,
    pub k1: f64,
    pub b: f64,
}

impl<'a> Bm25<'a> {
    pub fn new(stats: &'a CorpusStats) -> Self {
        Bm25 { stats, k1: 1.2, b: 0.75 }
    }
}

impl Scorer for Bm25<'_> {
    fn score(&self, query: &[String], doc: &[String]) -> f64 {
        let weights = query_weights(query);
        let tf = term_frequencies(doc, &weights);
        let n = self.stats.n_docs as f64;
        let len_norm = if self.stats.avg_len > 0.0 {
            1.0 - self.b + self.b * doc.len() as f64 / self.stats.avg_len
        } else {
            1.0
        };
        weights
            .iter()
            .filter_map(|(t, qtf)| {
                let tf = *tf.get(t)?;
                let df = *self.stats.df.get(*t).unwrap_or(&0) as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                Some(qtf * idf * tf * (self.k1 + 1.0) / (tf + self.k1 * len_norm))
            })
            .sum()
    }
}

/// Half-open `[start, end)` windows starting every `stride` tokens; the
/// last one is clipped to the document end.
pub fn passage_windows(len: usize, window: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + window).min(len);
        out.push((start, end));
        if end == len {
            break;
        }
        start += stride;
    }
    out
}

/// Maximum score over sliding passages of the document.
pub fn max_passage<S: Scorer + ?Sized>(
    scorer: &S,
    query: &[String],
    doc: &[String],
    window: usize,
    stride: usize,
) -> Result<f64> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window and stride must be positive".into()));
    }
    Ok(passage_windows(doc.len(), window, stride)
        .into_iter()
        .map(|(s, e)| scorer.score(query, &doc[s..e]))
        .reduce(f64::max)
        .unwrap_or(0.0))
}

/// Initial retrieval result for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub qid: String,
    pub entries: Vec<(String, f64)>,
}

impl CandidatePool {
    pub fn docnos(&self) -> Vec<String> {
        self.entries.iter().map(|(d, _)| d.clone()).collect()
    }
}

/// Scores every document containing at least one query term and keeps
/// the best `depth` (ties by docno).
pub fn retrieve<S: Scorer + ?Sized>(
    corpus: &Corpus,
    scorer: &S,
    qid: &str,
    query: &str,
    depth: usize,
) -> CandidatePool {
    let tokens = tokenize(query);
    let terms: HashSet<&str> = tokens.iter().map(String::as_str).collect();
    let mut entries: Vec<(String, f64)> = corpus
        .iter()
        .filter(|(_, doc)| doc.iter().any(|t| terms.contains(t.as_str())))
        .map(|(docno, doc)| (docno.to_string(), scorer.score(&tokens, doc)))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(depth);
    CandidatePool {
        qid: qid.to_string(),
        entries,
    }
}

/// Raw scores of pool documents against the query (column `q0`) and each
/// intent (`i1..in`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub qid: String,
    pub docnos: Vec<String>,
    pub labels: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(qid: &str, docnos: Vec<String>, labels: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != columns.len() || labels.is_empty() {
            return Err(Error::InvalidArgument("one label per column required".into()));
        }
        if columns.iter().any(|c| c.len() != docnos.len()) {
            return Err(Error::InvalidArgument("ragged score matrix".into()));
        }
        let unique: HashSet<_> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::InvalidArgument("duplicate column label".into()));
        }
        let unique: HashSet<_> = docnos.iter().collect();
        if unique.len() != docnos.len() {
            return Err(Error::InvalidArgument("duplicate docno".into()));
        }
        Ok(ScoreMatrix {
            qid: qid.to_string(),
            docnos,
            labels,
            columns,
        })
    }

    pub fn n_intents(&self) -> usize {
        self.columns.len() - 1
    }

    /// Keeps `q0` and the first `n` intent columns.
    pub fn with_intents(&self, n: usize) -> ScoreMatrix {
        ScoreMatrix {
            qid: self.qid.clone(),
            docnos: self.docnos.clone(),
            labels: self.labels.iter().take(n + 1).cloned().collect(),
            columns: self.columns.iter().take(n + 1).cloned().collect(),
        }
    }
}

/// How documents are scored when filling a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoringMode {
    WholeDocument,
    MaxPassage { window: usize, stride: usize },
}

/// Which text stands for an intent when it is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntentText {
    /// Original query followed by the continuation.
    #[default]
    Full,
    Continuation,
}

pub fn build_matrix<S: Scorer + ?Sized>(
    corpus: &Corpus,
    pool: &CandidatePool,
    query: &str,
    intents: &IntentSet,
    scorer: &S,
    mode: ScoringMode,
    intent_text: IntentText,
) -> Result<ScoreMatrix> {
    let docs: Vec<&[String]> = pool
        .entries
        .iter()
        .map(|(docno, _)| corpus.get(docno).ok_or_else(|| Error::MissingDocument(docno.clone())))
        .collect::<Result<_>>()?;
    let mut queries = vec![tokenize(query)];
    queries.extend(intents.intents.iter().map(|i| match intent_text {
        IntentText::Full => tokenize(&i.full_text),
        IntentText::Continuation => i.continuation.clone(),
    }));
    let columns = queries
        .iter()
        .map(|q| {
            docs.iter()
                .map(|doc| match mode {
                    ScoringMode::WholeDocument => Ok(scorer.score(q, doc)),
                    ScoringMode::MaxPassage { window, stride } => max_passage(scorer, q, doc, window, stride),
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = std::iter::once("q0".to_string())
        .chain((1..queries.len()).map(|i| format!("i{i}")))
        .collect();
    ScoreMatrix::new(&pool.qid, pool.docnos(), labels, columns)
}
