//! Readers and writers for every on-disk format the toolkit exchanges.
//!
//! All parsers take the whole file as text, report the 1-based line of the
//! first problem and never panic on malformed input.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::evaldiv::{DiversityQrels, TopicQrels};
use crate::intentgen::IntentSet;
use crate::repswap::{Prototype, TermVectors};
use crate::scoring::ScoreMatrix;
use crate::{Error, Result};

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}

/// `topic subtopic docno judgment`, whitespace separated.
pub fn parse_qrels(text: &str) -> Result<DiversityQrels> {
    let mut qrels = DiversityQrels::default();
    let mut keys = HashSet::new();
    for (line_no, line) in lines(text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::parse("qrels", line_no, msg);
        let [topic, subtopic, docno, grade] = fields[..] else {
            return Err(err("expected 4 fields: topic subtopic docno judgment"));
        };
        let subtopic: u32 = subtopic.parse().map_err(|_| err("subtopic is not a non-negative integer"))?;
        let grade: i64 = grade.parse().map_err(|_| err("judgment is not an integer"))?;
        if grade < 0 {
            return Err(err("negative judgment"));
        }
        let grade = u32::try_from(grade).map_err(|_| err("judgment out of range"))?;
        if !keys.insert((topic.to_string(), subtopic, docno.to_string())) {
            return Err(err("duplicate (topic, subtopic, docno)"));
        }
        qrels
            .topics
            .entry(topic.to_string())
            .or_insert_with(TopicQrels::default)
            .insert(subtopic, docno, grade);
    }
    Ok(qrels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub docno: String,
    pub rank: i64,
    pub score: f64,
}

/// A TREC run: `qid Q0 docno rank score tag`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    pub topics: BTreeMap<String, Vec<RunEntry>>,
}

impl Run {
    /// Per-topic docnos ordered by score (descending), then rank.
    pub fn rankings(&self) -> BTreeMap<String, Vec<String>> {
        self.topics
            .iter()
            .map(|(qid, entries)| {
                let mut sorted: Vec<&RunEntry> = entries.iter().collect();
                sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.rank.cmp(&b.rank)));
                (qid.clone(), sorted.into_iter().map(|e| e.docno.clone()).collect())
            })
            .collect()
    }
}

pub fn parse_run(text: &str) -> Result<Run> {
    let mut run = Run::default();
    let mut seen = HashSet::new();
    for (line_no, line) in lines(text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::parse("run", line_no, msg);
        let [qid, _q0, docno, rank, score, _tag] = fields[..] else {
            return Err(err("expected 6 fields: qid Q0 docno rank score tag"));
        };
        let rank: i64 = rank.parse().map_err(|_| err("rank is not an integer"))?;
        let score: f64 = score.parse().map_err(|_| err("score is not a number"))?;
        if !score.is_finite() {
            return Err(err("score is not finite"));
        }
        if !seen.insert((qid.to_string(), docno.to_string())) {
            return Err(err("duplicate docno for topic"));
        }
        run.topics.entry(qid.to_string()).or_default().push(RunEntry {
            docno: docno.to_string(),
            rank,
            score,
        });
    }
    Ok(run)
}

/// Writes ranked `(docno, score)` lists, ranks starting at 1.
pub fn write_run(topics: &[(String, Vec<(String, f64)>)], tag: &str) -> String {
    let mut out = String::new();
    for (qid, entries) in topics {
        for (idx, (docno, score)) in entries.iter().enumerate() {
            writeln!(out, "{qid} Q0 {docno} {} {score} {tag}", idx + 1).unwrap();
        }
    }
    out
}

/// `qid<TAB>query`, in file order.
pub fn parse_topics(text: &str) -> Result<Vec<(String, String)>> {
    let mut topics = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| Error::parse("topics", line_no, msg);
        let (qid, query) = line.split_once('\t').ok_or_else(|| err("expected qid<TAB>query"))?;
        let (qid, query) = (qid.trim(), query.trim());
        if qid.is_empty() || query.is_empty() {
            return Err(err("empty qid or query"));
        }
        if !seen.insert(qid.to_string()) {
            return Err(err("duplicate qid"));
        }
        topics.push((qid.to_string(), query.to_string()));
    }
    Ok(topics)
}

pub fn write_topics(topics: &[(String, String)]) -> String {
    topics.iter().map(|(q, t)| format!("{q}\t{t}\n")).collect()
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str, format: &'static str) -> Result<Vec<T>> {
    lines(text)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(line_no, l)| serde_json::from_str(l).map_err(|e| Error::parse(format, line_no, e.to_string())))
        .collect()
}

fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("serializable"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub docno: String,
    pub text: String,
}

pub fn parse_corpus(text: &str) -> Result<Vec<(String, String)>> {
    let records: Vec<CorpusRecord> = parse_jsonl(text, "corpus")?;
    let mut seen = HashSet::new();
    for (idx, r) in records.iter().enumerate() {
        if !seen.insert(r.docno.as_str()) {
            return Err(Error::parse("corpus", idx + 1, format!("duplicate docno {:?}", r.docno)));
        }
    }
    Ok(records.into_iter().map(|r| (r.docno, r.text)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredText {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentsRecord {
    pub qid: String,
    pub intents: Vec<ScoredText>,
}

/// Intents JSONL; the intent order within a record is preserved.
pub fn parse_intents(text: &str) -> Result<BTreeMap<String, Vec<(String, f64)>>> {
    let mut out = BTreeMap::new();
    for (line_no, line) in lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let rec: IntentsRecord =
            serde_json::from_str(line).map_err(|e| Error::parse("intents", line_no, e.to_string()))?;
        if rec.intents.iter().any(|i| i.score.is_nan()) {
            return Err(Error::parse("intents", line_no, "NaN score"));
        }
        let entries = rec.intents.into_iter().map(|i| (i.text, i.score)).collect();
        if out.insert(rec.qid.clone(), entries).is_some() {
            return Err(Error::parse("intents", line_no, format!("duplicate qid {:?}", rec.qid)));
        }
    }
    Ok(out)
}

/// One record per topic; intent text is the continuation, score the
/// generation log-probability.
pub fn write_intents(sets: &[(String, IntentSet)]) -> String {
    write_jsonl(sets.iter().map(|(qid, set)| IntentsRecord {
        qid: qid.clone(),
        intents: set
            .intents
            .iter()
            .map(|i| ScoredText {
                text: i.text(),
                score: i.logprob,
            })
            .collect(),
    }))
}

pub fn write_score_matrices(matrices: &[ScoreMatrix]) -> String {
    let mut out = String::new();
    for (idx, m) in matrices.iter().enumerate() {
        if idx > 0 {
            out.push('\n');
        }
        writeln!(out, "qid\t{}", m.qid).unwrap();
        writeln!(out, "docno\t{}", m.labels.join("\t")).unwrap();
        for (row, docno) in m.docnos.iter().enumerate() {
            out.push_str(docno);
            for col in &m.columns {
                write!(out, "\t{}", col[row]).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// Reads blocks of `qid<TAB>id`, a `docno<TAB>q0<TAB>i1...` header and one
/// row per document. When `known_qids` is given, other qids are rejected.
pub fn parse_score_matrices(text: &str, known_qids: Option<&BTreeSet<String>>) -> Result<Vec<ScoreMatrix>> {
    struct Block {
        qid: String,
        labels: Option<Vec<String>>,
        docnos: Vec<String>,
        columns: Vec<Vec<f64>>,
        seen: HashSet<String>,
        line: usize,
    }
    fn finish(block: Block) -> Result<ScoreMatrix> {
        let labels = block
            .labels
            .ok_or_else(|| Error::parse("score matrix", block.line, "missing column header"))?;
        ScoreMatrix::new(&block.qid, block.docnos, labels, block.columns)
            .map_err(|e| Error::parse("score matrix", block.line, e.to_string()))
    }

    let mut out = Vec::new();
    let mut qids = HashSet::new();
    let mut block: Option<Block> = None;
    for (line_no, line) in lines(text) {
        let err = |msg: String| Error::parse("score matrix", line_no, msg);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields[0] == "qid" {
            if fields.len() != 2 || fields[1].trim().is_empty() {
                return Err(err("expected qid<TAB>id".into()));
            }
            let qid = fields[1].trim().to_string();
            if known_qids.is_some_and(|k| !k.contains(&qid)) {
                return Err(err(format!("unknown qid {qid:?}")));
            }
            if !qids.insert(qid.clone()) {
                return Err(err(format!("duplicate qid block {qid:?}")));
            }
            if let Some(done) = block.take() {
                out.push(finish(done)?);
            }
            block = Some(Block {
                qid,
                labels: None,
                docnos: Vec::new(),
                columns: Vec::new(),
                seen: HashSet::new(),
                line: line_no,
            });
            continue;
        }
        let Some(current) = block.as_mut() else {
            return Err(err("data before the first qid line".into()));
        };
        match &current.labels {
            None => {
                let expected = std::iter::once("q0".to_string()).chain((1..).map(|i| format!("i{i}")));
                if fields[0] != "docno" || fields.len() < 2 || !fields[1..].iter().zip(expected).all(|(f, e)| *f == e) {
                    return Err(err("missing column header (docno, q0, i1..)".into()));
                }
                let labels: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
                current.columns = vec![Vec::new(); labels.len()];
                current.labels = Some(labels);
            }
            Some(labels) => {
                if fields.len() != labels.len() + 1 {
                    return Err(err(format!("expected {} columns, found {}", labels.len() + 1, fields.len())));
                }
                let docno = fields[0].to_string();
                if docno.is_empty() || !current.seen.insert(docno.clone()) {
                    return Err(err(format!("duplicate or empty docno {docno:?}")));
                }
                for (col, raw) in current.columns.iter_mut().zip(&fields[1..]) {
                    let v: f64 = raw.parse().map_err(|_| err(format!("bad score {raw:?}")))?;
                    if !v.is_finite() {
                        return Err(err(format!("non-finite score {raw:?}")));
                    }
                    col.push(v);
                }
                current.docnos.push(docno);
            }
        }
    }
    if let Some(done) = block.take() {
        out.push(finish(done)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub term: String,
    pub passage_id: String,
    pub vector: Vec<f64>,
}

/// Groups embedding records by term (terms in sorted order).
pub fn parse_embeddings(text: &str) -> Result<Vec<TermVectors>> {
    let records: Vec<EmbeddingRecord> = parse_jsonl(text, "embeddings")?;
    let mut grouped: BTreeMap<String, Vec<(String, Vec<f64>)>> = BTreeMap::new();
    let mut dims: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, r) in records.into_iter().enumerate() {
        let dim = *dims.entry(r.term.clone()).or_insert(r.vector.len());
        if dim != r.vector.len() || dim == 0 {
            return Err(Error::parse(
                "embeddings",
                idx + 1,
                format!("vector for {:?} has dimension {} (expected {dim})", r.term, r.vector.len()),
            ));
        }
        grouped.entry(r.term).or_default().push((r.passage_id, r.vector));
    }
    Ok(grouped
        .into_iter()
        .map(|(term, entries)| TermVectors { term, entries })
        .collect())
}

pub fn write_prototypes(prototypes: &[Prototype]) -> String {
    write_jsonl(prototypes)
}

pub fn write_samples<T: Serialize>(samples: impl IntoIterator<Item = T>) -> String {
    write_jsonl(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn qrels() {
        let q = parse_qrels("1 1 d1 1\n1 2 d2 1\n1 0 d3 0\n\n2 1 d1 0\n").unwrap();
        assert_eq!(q.topics.len(), 2);
        let t = q.topic("1").unwrap();
        assert_eq!(t.intents().len(), 2);
        assert!(t.is_judged("d3"));
        assert!(!q.topic("2").unwrap().has_relevant());
        for bad in ["1 1 d1", "1 x d1 1", "1 1 d1 -1", "1 1 d1 1\n1 1 d1 0"] {
            assert!(parse_qrels(bad).is_err(), "{bad}");
        }
        let e = parse_qrels("1 1 d1 1\n1 1 d2").unwrap_err();
        assert!(e.to_string().contains("line 2"));
    }

    #[test]
    fn run_round_trip_and_order() {
        let text = write_run(
            &[("q1".into(), vec![("b".into(), 2.5), ("a".into(), 1.0)])],
            "tag",
        );
        assert_eq!(text, "q1 Q0 b 1 2.5 tag\nq1 Q0 a 2 1 tag\n");
        let run = parse_run(&text).unwrap();
        assert_eq!(run.rankings()["q1"], ["b", "a"]);
        let tied = parse_run("q 0 x 2 1.0 t\nq 0 y 1 1.0 t\n").unwrap();
        assert_eq!(tied.rankings()["q"], ["y", "x"]);
        assert!(parse_run("q Q0 x 1 nan t").is_err());
        assert!(parse_run("q Q0 x 1 1 t\nq Q0 x 2 0 t").is_err());
        assert!(parse_run("q Q0 x 1").is_err());
    }

    #[test]
    fn topics() {
        let t = parse_topics("1\tpenguins\n2\tsolar panels\n").unwrap();
        assert_eq!(t[1], ("2".to_string(), "solar panels".to_string()));
        assert_eq!(parse_topics(&write_topics(&t)).unwrap(), t);
        assert!(parse_topics("1 penguins").is_err());
        assert!(parse_topics("1\ta\n1\tb").is_err());
    }

    #[test]
    fn corpus_and_intents() {
        let c = parse_corpus("{\"docno\":\"d1\",\"text\":\"hello\"}\n").unwrap();
        assert_eq!(c, vec![("d1".to_string(), "hello".to_string())]);
        assert!(parse_corpus("{\"docno\":\"d1\",\"text\":\"a\"}\n{\"docno\":\"d1\",\"text\":\"b\"}").is_err());
        let i = parse_intents("{\"qid\":\"1\",\"intents\":[{\"text\":\"b x\",\"score\":-1},{\"text\":\"a\",\"score\":-0.5}]}\n").unwrap();
        assert_eq!(i["1"][0].0, "b x");
        assert!(parse_intents("{\"qid\":\"1\"}").is_err());
    }

    #[test]
    fn score_matrix_fixture() {
        let text = "qid\t7\ndocno\tq0\ti1\nd1\t1.5\t-2\nd2\t0\t0.25\n";
        let m = parse_score_matrices(text, None).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].docnos, ["d1", "d2"]);
        assert_eq!(m[0].columns, vec![vec![1.5, 0.0], vec![-2.0, 0.25]]);
        assert_eq!(write_score_matrices(&m), text);
    }

    #[test]
    fn score_matrix_errors() {
        let cases = [
            ("qid\t1\nd1\t1\n", "missing column header"),
            ("qid\t1\ndocno\tq0\td1\t1\t2\n", "missing column header"),
            ("qid\t1\ndocno\tq0\ti1\nd1\t1\n", "line 3"),
            ("qid\t1\ndocno\tq0\nd1\t1\nd1\t2\n", "line 4"),
            ("docno\tq0\n", "line 1"),
            ("qid\t1\ndocno\tq0\nd1\tabc\n", "bad score"),
            ("qid\t1\n", "missing column header"),
        ];
        for (text, needle) in cases {
            let e = parse_score_matrices(text, None).unwrap_err().to_string();
            assert!(e.contains(needle), "{text:?}: {e}");
        }
        let known: BTreeSet<String> = ["1".to_string()].into_iter().collect();
        let e = parse_score_matrices("qid\t2\ndocno\tq0\n", Some(&known)).unwrap_err();
        assert!(e.to_string().contains("unknown qid"));
    }

    #[test]
    fn embeddings() {
        let text = "{\"term\":\"b\",\"passage_id\":\"p1\",\"vector\":[1,0]}\n{\"term\":\"a\",\"passage_id\":\"p2\",\"vector\":[0.5]}\n";
        let t = parse_embeddings(text).unwrap();
        assert_eq!(t[0].term, "a");
        assert_eq!(t[1].entries[0].1, vec![1.0, 0.0]);
        let bad = "{\"term\":\"a\",\"passage_id\":\"p1\",\"vector\":[1,0]}\n{\"term\":\"a\",\"passage_id\":\"p2\",\"vector\":[1]}\n";
        assert!(parse_embeddings(bad).unwrap_err().to_string().contains("line 2"));
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<ScoreMatrix>> {
        prop::collection::vec((1usize..5, 0usize..4), 1..4).prop_flat_map(|shapes| {
            shapes
                .into_iter()
                .enumerate()
                .map(|(q, (docs, intents))| {
                    prop::collection::vec(prop::collection::vec(-1e6f64..1e6, docs), intents + 1).prop_map(move |columns| {
                        let labels = std::iter::once("q0".to_string()).chain((1..=intents).map(|i| format!("i{i}"))).collect();
                        ScoreMatrix::new(&format!("t{q}"), (0..docs).map(|d| format!("d{d}")).collect(), labels, columns).unwrap()
                    })
                })
                .collect::<Vec<_>>()
        })
    }

    proptest! {
        #[test]
        fn score_matrix_round_trip(ms in matrix_strategy()) {
            let back = parse_score_matrices(&write_score_matrices(&ms), None).unwrap();
            prop_assert_eq!(back, ms);
        }

        #[test]
        fn parsers_never_panic(s in "\\PC*") {
            let _ = parse_qrels(&s);
            let _ = parse_run(&s);
            let _ = parse_topics(&s);
            let _ = parse_score_matrices(&s, None);
            let _ = parse_intents(&s);
        }
    }
}
