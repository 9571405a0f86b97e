//! Intent-aware evaluation: alpha-nDCG@k, ERR-IA@k, NRBP and Judged@k.
//!
//! Judgments are read per (topic, subtopic, docno). A document counts as
//! relevant to a subtopic when its grade is positive. Subtopic `0` lines
//! only contribute to Judged@k.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub alpha: f64,
    pub beta: f64,
    pub cutoff: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            alpha: 0.5,
            beta: 0.5,
            cutoff: 20,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidArgument(format!("beta {} outside (0, 1)", self.beta)));
        }
        if self.cutoff == 0 {
            return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
        }
        Ok(())
    }
}

/// Judgments for one topic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicQrels {
    /// docno -> subtopic -> grade, for positive subtopic ids.
    grades: HashMap<String, BTreeMap<u32, u32>>,
    /// Every docno with any judgment line, including subtopic 0.
    judged: HashSet<String>,
    /// Subtopics with at least one relevant document.
    intents: BTreeSet<u32>,
    max_grade: u32,
}

impl TopicQrels {
    pub fn insert(&mut self, subtopic: u32, docno: &str, grade: u32) {
        self.judged.insert(docno.to_string());
        if subtopic == 0 {
            return;
        }
        self.grades
            .entry(docno.to_string())
            .or_default()
            .insert(subtopic, grade);
        if grade > 0 {
            self.intents.insert(subtopic);
            self.max_grade = self.max_grade.max(grade);
        }
    }

    pub fn intents(&self) -> &BTreeSet<u32> {
        &self.intents
    }

    pub fn has_relevant(&self) -> bool {
        !self.intents.is_empty()
    }

    pub fn is_judged(&self, docno: &str) -> bool {
        self.judged.contains(docno)
    }

    pub fn grade(&self, docno: &str, subtopic: u32) -> u32 {
        self.grades
            .get(docno)
            .and_then(|g| g.get(&subtopic))
            .copied()
            .unwrap_or(0)
    }

    /// Binary relevance vector of a document over the topic's intents.
    fn relevance(&self, docno: &str) -> Vec<bool> {
        self.intents.iter().map(|&i| self.grade(docno, i) > 0).collect()
    }

    fn relevant_docs(&self) -> Vec<&str> {
        let mut docs: Vec<&str> = self
            .grades
            .iter()
            .filter(|(_, g)| g.values().any(|&v| v > 0))
            .map(|(d, _)| d.as_str())
            .collect();
        docs.sort_unstable();
        docs
    }
}

/// Diversity qrels keyed by topic id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiversityQrels {
    pub topics: BTreeMap<String, TopicQrels>,
}

impl DiversityQrels {
    pub fn topic(&self, qid: &str) -> Option<&TopicQrels> {
        self.topics.get(qid)
    }
}

/// First occurrence of each docno, in rank order.
fn dedup(ranking: &[String]) -> Vec<&str> {
    let mut seen = HashSet::new();
    ranking
        .iter()
        .map(String::as_str)
        .filter(|d| seen.insert(*d))
        .collect()
}

/// Novelty-discounted gains of a ranking of relevance vectors.
fn novelty_gains(rows: &[Vec<bool>], alpha: f64) -> Vec<f64> {
    let m = rows.first().map_or(0, Vec::len);
    let mut seen = vec![0i32; m];
    rows.iter()
        .map(|rel| {
            let mut gain = 0.0;
            for (i, &r) in rel.iter().enumerate() {
                if r {
                    gain += (1.0 - alpha).powi(seen[i]);
                    seen[i] += 1;
                }
            }
            gain
        })
        .collect()
}

fn dcg(gains: &[f64]) -> f64 {
    gains
        .iter()
        .enumerate()
        .map(|(r, g)| g / (r as f64 + 2.0).log2())
        .sum()
}

/// Greedy ideal ranking: repeatedly take the document with the largest
/// novelty gain given those already placed (ties to the smaller docno).
pub fn greedy_ideal_dcg(qrels: &TopicQrels, alpha: f64, cutoff: usize) -> f64 {
    let m = qrels.intents.len();
    let mut pool: Vec<Vec<bool>> = qrels
        .relevant_docs()
        .into_iter()
        .map(|d| qrels.relevance(d))
        .collect();
    let mut seen = vec![0i32; m];
    let mut total = 0.0;
    for rank in 0..cutoff.min(pool.len()) {
        let gain_of = |rel: &Vec<bool>| -> f64 {
            rel.iter()
                .enumerate()
                .filter(|(_, &r)| r)
                .map(|(i, _)| (1.0 - alpha).powi(seen[i]))
                .sum()
        };
        let (best, gain) = pool
            .iter()
            .enumerate()
            .map(|(idx, rel)| (idx, gain_of(rel)))
            .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        let rel = pool.remove(best);
        for (i, &r) in rel.iter().enumerate() {
            if r {
                seen[i] += 1;
            }
        }
        total += gain / (rank as f64 + 2.0).log2();
    }
    total
}

/// Unnormalised alpha-DCG of a ranking at the cutoff.
pub fn alpha_dcg(ranking: &[String], qrels: &TopicQrels, alpha: f64, cutoff: usize) -> f64 {
    let rows: Vec<Vec<bool>> = dedup(ranking)
        .into_iter()
        .take(cutoff)
        .map(|d| qrels.relevance(d))
        .collect();
    dcg(&novelty_gains(&rows, alpha))
}

pub fn alpha_ndcg(ranking: &[String], qrels: &TopicQrels, cfg: &MetricConfig) -> f64 {
    let ideal = greedy_ideal_dcg(qrels, cfg.alpha, cfg.cutoff);
    if ideal <= 0.0 {
        return 0.0;
    }
    (alpha_dcg(ranking, qrels, cfg.alpha, cfg.cutoff) / ideal).clamp(0.0, 1.0)
}

pub fn err_ia(ranking: &[String], qrels: &TopicQrels, cfg: &MetricConfig) -> f64 {
    if !qrels.has_relevant() {
        return 0.0;
    }
    let denom = 2f64.powi(qrels.max_grade as i32);
    let docs: Vec<&str> = dedup(ranking).into_iter().take(cfg.cutoff).collect();
    let total: f64 = qrels
        .intents
        .iter()
        .map(|&intent| {
            let mut not_stopped = 1.0;
            let mut err = 0.0;
            for (r, d) in docs.iter().enumerate() {
                let g = qrels.grade(d, intent);
                let p = (2f64.powi(g as i32) - 1.0) / denom;
                err += not_stopped * p / (r as f64 + 1.0);
                not_stopped *= 1.0 - p;
            }
            err
        })
        .sum();
    total / qrels.intents.len() as f64
}

/// NRBP over the whole ranking (no cutoff).
pub fn nrbp(ranking: &[String], qrels: &TopicQrels, cfg: &MetricConfig) -> f64 {
    if !qrels.has_relevant() {
        return 0.0;
    }
    let rows: Vec<Vec<bool>> = dedup(ranking).into_iter().map(|d| qrels.relevance(d)).collect();
    let gains = novelty_gains(&rows, cfg.alpha);
    let series: f64 = gains
        .iter()
        .enumerate()
        .map(|(r, g)| cfg.beta.powi(r as i32) * g)
        .sum();
    let scale = (1.0 - (1.0 - cfg.alpha) * cfg.beta) / qrels.intents.len() as f64;
    (scale * series).clamp(0.0, 1.0)
}

/// Fraction of the top-`k` documents with any judgment for the topic.
pub fn judged(ranking: &[String], qrels: &TopicQrels, k: usize) -> f64 {
    let top: Vec<&str> = dedup(ranking).into_iter().take(k).collect();
    if top.is_empty() {
        return 0.0;
    }
    top.iter().filter(|d| qrels.is_judged(d)).count() as f64 / top.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEval {
    pub qid: String,
    pub alpha_ndcg: f64,
    pub err_ia: f64,
    pub nrbp: f64,
    pub judged: f64,
    /// Set when the topic has no relevant documents; its metrics are 0.
    pub no_relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub config: MetricConfig,
    pub topics: Vec<TopicEval>,
    pub mean_alpha_ndcg: f64,
    pub mean_err_ia: f64,
    pub mean_nrbp: f64,
    pub mean_judged: f64,
}

impl EvalResult {
    pub fn topic(&self, qid: &str) -> Option<&TopicEval> {
        self.topics.iter().find(|t| t.qid == qid)
    }
}

pub fn evaluate_topic(qid: &str, ranking: &[String], qrels: Option<&TopicQrels>, cfg: &MetricConfig) -> TopicEval {
    let empty = TopicQrels::default();
    let q = qrels.unwrap_or(&empty);
    TopicEval {
        qid: qid.to_string(),
        alpha_ndcg: alpha_ndcg(ranking, q, cfg),
        err_ia: err_ia(ranking, q, cfg),
        nrbp: nrbp(ranking, q, cfg),
        judged: judged(ranking, q, cfg.cutoff),
        no_relevant: !q.has_relevant(),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Evaluates every topic that has a ranking; topics without relevant
/// documents stay in the means with zero values.
pub fn evaluate(runs: &BTreeMap<String, Vec<String>>, qrels: &DiversityQrels, cfg: &MetricConfig) -> Result<EvalResult> {
    cfg.validate()?;
    let topics: Vec<TopicEval> = runs
        .iter()
        .map(|(qid, ranking)| evaluate_topic(qid, ranking, qrels.topic(qid), cfg))
        .collect();
    Ok(summarize(*cfg, topics))
}

pub fn summarize(config: MetricConfig, topics: Vec<TopicEval>) -> EvalResult {
    EvalResult {
        config,
        mean_alpha_ndcg: mean(topics.iter().map(|t| t.alpha_ndcg)),
        mean_err_ia: mean(topics.iter().map(|t| t.err_ia)),
        mean_nrbp: mean(topics.iter().map(|t| t.nrbp)),
        mean_judged: mean(topics.iter().map(|t| t.judged)),
        topics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qrels(lines: &[(u32, &str, u32)]) -> TopicQrels {
        let mut q = TopicQrels::default();
        for &(s, d, g) in lines {
            q.insert(s, d, g);
        }
        q
    }

    fn rank(docs: &[&str]) -> Vec<String> {
        docs.iter().map(|d| d.to_string()).collect()
    }

    #[test]
    fn alpha_ndcg_two_relevant() {
        let q = qrels(&[(1, "a", 1), (1, "b", 1)]);
        let cfg = MetricConfig::default();
        let dcg = alpha_dcg(&rank(&["a", "b"]), &q, 0.5, 20);
        assert!((dcg - (1.0 + 0.5 / 3f64.log2())).abs() < 1e-12);
        assert!((alpha_ndcg(&rank(&["a", "b"]), &q, &cfg) - 1.0).abs() < 1e-12);
        assert_eq!(alpha_ndcg(&rank(&["x", "y"]), &q, &cfg), 0.0);
    }

    #[test]
    fn err_ia_hand_values() {
        let cfg = MetricConfig::default();
        let q = qrels(&[(1, "a", 1)]);
        assert!((err_ia(&rank(&["a", "x"]), &q, &cfg) - 0.5).abs() < 1e-12);
        let q = qrels(&[(1, "a", 1), (1, "b", 1)]);
        assert!((err_ia(&rank(&["a", "b"]), &q, &cfg) - 0.625).abs() < 1e-12);
        assert_eq!(err_ia(&rank(&["a"]), &qrels(&[(1, "a", 0)]), &cfg), 0.0);
    }

    #[test]
    fn nrbp_hand_values() {
        let cfg = MetricConfig::default();
        let q = qrels(&[(1, "a", 1)]);
        assert!((nrbp(&rank(&["a"]), &q, &cfg) - 0.75).abs() < 1e-12);
        assert_eq!(nrbp(&[], &q, &cfg), 0.0);
        let q = qrels(&[(1, "a", 1), (2, "a", 1)]);
        assert!((nrbp(&rank(&["a"]), &q, &cfg) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn judged_rate() {
        let q = qrels(&[(0, "a", 0), (1, "b", 0), (2, "c", 1)]);
        assert_eq!(judged(&rank(&["a", "b", "c"]), &q, 20), 1.0);
        assert_eq!(judged(&rank(&["x", "y"]), &q, 20), 0.0);
        let ranking: Vec<String> = (0..20).map(|i| format!("d{i}")).collect();
        let mut q2 = TopicQrels::default();
        for i in (0..20).step_by(2) {
            q2.insert(1, &format!("d{i}"), 0);
        }
        assert_eq!(judged(&ranking, &q2, 20), 0.5);
    }

    #[test]
    fn subtopic_zero_only_counts_for_judged() {
        let q = qrels(&[(0, "a", 1)]);
        assert!(!q.has_relevant());
        assert!(q.is_judged("a"));
        let e = evaluate_topic("t", &rank(&["a"]), Some(&q), &MetricConfig::default());
        assert!(e.no_relevant);
        assert_eq!(e.alpha_ndcg, 0.0);
        assert_eq!(e.judged, 1.0);
    }

    #[test]
    fn binary_ndcg_limit() {
        // one intent, alpha -> 0 is plain binary nDCG
        let q = qrels(&[(1, "a", 1), (1, "c", 1), (1, "e", 1)]);
        let cfg = MetricConfig { alpha: 1e-12, beta: 0.5, cutoff: 20 };
        let r = rank(&["b", "a", "d", "c", "e"]);
        let dcg = 1.0 / 3f64.log2() + 1.0 / 5f64.log2() + 1.0 / 6f64.log2();
        let idcg = 1.0 + 1.0 / 3f64.log2() + 1.0 / 4f64.log2();
        assert!((alpha_ndcg(&r, &q, &cfg) - dcg / idcg).abs() < 1e-9);
    }

    #[test]
    fn greedy_ideal_is_not_always_optimal() {
        // docs a={1,2}, b={1,3}, c={2,4}; greedy takes a first (tie, smaller
        // docno) and ends below the best order b, c, a.
        let q = qrels(&[(1, "a", 1), (2, "a", 1), (1, "b", 1), (3, "b", 1), (2, "c", 1), (4, "c", 1)]);
        let greedy = greedy_ideal_dcg(&q, 0.5, 20);
        let best = alpha_dcg(&rank(&["b", "c", "a"]), &q, 0.5, 20);
        assert!(best > greedy + 1e-3);
        // the metric stays clamped
        assert_eq!(alpha_ndcg(&rank(&["b", "c", "a"]), &q, &MetricConfig::default()), 1.0);
    }

    #[test]
    fn duplicates_ignored() {
        let q = qrels(&[(1, "a", 1)]);
        let cfg = MetricConfig::default();
        assert_eq!(err_ia(&rank(&["a", "a"]), &q, &cfg), err_ia(&rank(&["a"]), &q, &cfg));
    }

    #[test]
    fn config_validation() {
        assert!(MetricConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(MetricConfig { beta: 1.0, ..Default::default() }.validate().is_err());
        assert!(MetricConfig { cutoff: 0, ..Default::default() }.validate().is_err());
    }
}
