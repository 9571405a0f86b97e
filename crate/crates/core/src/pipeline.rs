//! End-to-end experiments: retrieve, generate intents, score, diversify,
//! evaluate, plus grid tuning and frequency-stratified reports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diversify::{complete_ranking, normalize, pm2, xquad, XquadConfig};
use crate::error::read_file;
use crate::evaldiv::{evaluate, DiversityQrels, EvalResult, MetricConfig, TopicEval};
use crate::external::ExternalGenerator;
use crate::formats;
use crate::intentgen::{filter_ranked, generate, CountLm, IntentSet, MAX_INTENTS};
use crate::querylog::{Buckets, PrefixTree, QueryCollection};
use crate::scoring::{
    build_matrix, retrieve, Bm25, CandidatePool, Corpus, Dph, IntentText, ScoreMatrix, Scorer,
    ScoringMode, PASSAGE_STRIDE, PASSAGE_WINDOW,
};
use crate::text::tokenize;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntentSource {
    #[default]
    CountLm,
    External,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    #[default]
    Dph,
    Bm25,
    /// Score matrices are read from `scores_file`; their row order is the pool.
    Ingest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregator {
    #[default]
    Xquad,
    Pm2,
}

fn default_n() -> usize {
    MAX_INTENTS
}
fn default_lambda() -> f64 {
    0.5
}
fn default_pool_depth() -> usize {
    crate::scoring::DEFAULT_POOL_DEPTH
}
fn default_depth() -> usize {
    crate::diversify::DEFAULT_DEPTH
}
fn default_beam() -> usize {
    crate::intentgen::DEFAULT_BEAM
}
fn default_alpha() -> f64 {
    0.5
}
fn default_beta() -> f64 {
    0.5
}
fn default_cutoff() -> usize {
    20
}
fn default_tag() -> String {
    "intentdiv".into()
}

/// A declarative experiment, read from a flat TOML file. Relative paths
/// are resolved against the directory of that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    pub topics: PathBuf,
    pub qrels: PathBuf,
    #[serde(default)]
    pub intent_source: IntentSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intents_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Vec<String>>,
    #[serde(default)]
    pub scorer: ScorerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores_file: Option<PathBuf>,
    #[serde(default)]
    pub aggregator: Aggregator,
    #[serde(default = "default_n")]
    pub n_intents: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_pool_depth")]
    pub pool_depth: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_beam")]
    pub beam: usize,
    #[serde(default)]
    pub passages: bool,
    #[serde(default)]
    pub intent_text: IntentText,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tag")]
    pub run_tag: String,
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn override_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

impl ExperimentConfig {
    /// Parses a config, applies `key=value` overrides, resolves paths
    /// against `base_dir` and validates the result.
    pub fn parse(text: &str, base_dir: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            table.insert(key.clone(), override_value(value));
        }
        let mut config: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.resolve(base_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = read_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.topics);
        join(&mut self.qrels);
        for p in [
            &mut self.corpus,
            &mut self.query_log,
            &mut self.intents_file,
            &mut self.scores_file,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }

    pub fn metric(&self) -> MetricConfig {
        MetricConfig {
            alpha: self.alpha,
            beta: self.beta,
            cutoff: self.cutoff,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(1..=MAX_INTENTS).contains(&self.n_intents) {
            return bad(format!("n_intents {} outside [1, {MAX_INTENTS}]", self.n_intents));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if self.pool_depth == 0 || self.depth == 0 || self.beam == 0 {
            return bad("pool_depth, depth and beam must be positive".into());
        }
        self.metric().validate().map_err(|e| Error::Config(e.to_string()))?;
        let mut required: Vec<(&str, Option<&PathBuf>)> =
            vec![("topics", Some(&self.topics)), ("qrels", Some(&self.qrels))];
        if self.scorer == ScorerKind::Ingest {
            required.push(("scores_file", self.scores_file.as_ref()));
        } else {
            required.push(("corpus", self.corpus.as_ref()));
            match self.intent_source {
                IntentSource::CountLm => required.push(("query_log", self.query_log.as_ref())),
                IntentSource::File => required.push(("intents_file", self.intents_file.as_ref())),
                IntentSource::External => {
                    if self.generator.as_ref().is_none_or(|g| g.is_empty()) {
                        return bad("external intent source needs a generator command".into());
                    }
                }
            }
        }
        for (key, path) in required {
            match path {
                None => return bad(format!("{key} is required")),
                Some(p) if !p.exists() => return bad(format!("{key}: {} does not exist", p.display())),
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Everything about one topic that does not depend on the aggregator, the
/// intent count or λ.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicData {
    pub qid: String,
    pub query: String,
    pub pool: CandidatePool,
    /// `None` when scores were ingested.
    pub intents: Option<IntentSet>,
    pub matrix: ScoreMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub topics: Vec<TopicData>,
    pub qrels: DiversityQrels,
}

fn scorer<'a>(kind: ScorerKind, corpus: &'a Corpus) -> Box<dyn Scorer + 'a> {
    match kind {
        ScorerKind::Bm25 => Box::new(Bm25::new(corpus.stats())),
        _ => Box::new(Dph { stats: corpus.stats() }),
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::new(formats::parse_corpus(&read_file(path)?)?)
}

fn gen_intents(config: &ExperimentConfig, topics: &[(String, String)]) -> Result<Vec<IntentSet>> {
    let n = config.n_intents;
    match config.intent_source {
        IntentSource::CountLm => {
            let path = config.query_log.as_ref().expect("validated");
            let log = QueryCollection::parse(&read_file(path)?, &path.display().to_string())?;
            let model = CountLm::new(PrefixTree::build(&log)?);
            topics
                .par_iter()
                .map(|(_, q)| generate(&model, q, n, config.beam))
                .collect()
        }
        IntentSource::External => {
            let command = config.generator.as_ref().expect("validated");
            let mut generator = ExternalGenerator::spawn(command)?;
            let queries: Vec<String> = topics.iter().map(|(_, q)| q.clone()).collect();
            generator.generate_batch(&queries, n, config.beam)
        }
        IntentSource::File => {
            let path = config.intents_file.as_ref().expect("validated");
            let raw = formats::parse_intents(&read_file(path)?)?;
            Ok(topics
                .iter()
                .map(|(qid, q)| match raw.get(qid) {
                    Some(list) => filter_ranked(list, &tokenize(q), n),
                    None => IntentSet::empty(q),
                })
                .collect())
        }
    }
}

/// Loads inputs and computes pools, intents and score matrices.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let (topics, qrels) = (|| -> Result<_> {
        let topics = formats::parse_topics(&read_file(&config.topics)?)?;
        let qrels = formats::parse_qrels(&read_file(&config.qrels)?)?;
        Ok((topics, qrels))
    })()
    .map_err(|e| e.in_stage("load"))?;

    if config.scorer == ScorerKind::Ingest {
        let known: BTreeSet<String> = topics.iter().map(|(q, _)| q.clone()).collect();
        let path = config.scores_file.as_ref().expect("validated");
        let matrices = read_file(path)
            .and_then(|text| formats::parse_score_matrices(&text, Some(&known)))
            .map_err(|e| e.in_stage("score"))?;
        let mut by_qid: BTreeMap<String, ScoreMatrix> =
            matrices.into_iter().map(|m| (m.qid.clone(), m)).collect();
        let topics = topics
            .into_iter()
            .map(|(qid, query)| {
                let matrix = by_qid.remove(&qid).unwrap_or_else(|| {
                    ScoreMatrix::new(&qid, Vec::new(), vec!["q0".into()], vec![Vec::new()]).expect("valid")
                });
                let matrix = matrix.with_intents(config.n_intents);
                let pool = CandidatePool {
                    qid: qid.clone(),
                    entries: matrix.docnos.iter().cloned().zip(matrix.columns[0].iter().copied()).collect(),
                };
                TopicData {
                    qid,
                    query,
                    pool,
                    intents: None,
                    matrix,
                }
            })
            .collect();
        return Ok(Prepared { topics, qrels });
    }

    let corpus_path = config.corpus.as_ref().expect("validated");
    let corpus = load_corpus(corpus_path).map_err(|e| e.in_stage("load"))?;
    let scorer = scorer(config.scorer, &corpus);
    let pools: Vec<CandidatePool> = topics
        .par_iter()
        .map(|(qid, query)| retrieve(&corpus, scorer.as_ref(), qid, query, config.pool_depth))
        .collect();
    let intents = gen_intents(config, &topics).map_err(|e| e.in_stage("intents"))?;
    let mode = if config.passages {
        ScoringMode::MaxPassage {
            window: PASSAGE_WINDOW,
            stride: PASSAGE_STRIDE,
        }
    } else {
        ScoringMode::WholeDocument
    };
    let matrices: Vec<ScoreMatrix> = topics
        .par_iter()
        .zip(pools.par_iter().zip(intents.par_iter()))
        .map(|((_, query), (pool, set))| {
            build_matrix(&corpus, pool, query, set, scorer.as_ref(), mode, config.intent_text)
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("score"))?;
    let topics = topics
        .into_iter()
        .zip(pools)
        .zip(intents)
        .zip(matrices)
        .map(|((((qid, query), pool), set), matrix)| TopicData {
            qid,
            query,
            pool,
            intents: Some(set),
            matrix,
        })
        .collect();
    Ok(Prepared { topics, qrels })
}

/// Diversifies one matrix with the first `n` intents. The top `depth`
/// positions come from the aggregator, the rest of the pool follows in pool
/// order. Scores are descending pseudo-scores `len - position`.
pub fn rank_matrix(
    matrix: &ScoreMatrix,
    aggregator: Aggregator,
    n: usize,
    lambda: f64,
    depth: usize,
) -> Result<Vec<(String, f64)>> {
    let probs = normalize(matrix).with_intents(n);
    let len = probs.n_docs();
    let order: Vec<usize> = if probs.n_intents() == 0 {
        (0..len).collect()
    } else {
        let selected = match aggregator {
            Aggregator::Xquad => xquad(&probs, &XquadConfig::new(lambda), depth)?,
            Aggregator::Pm2 => pm2(&probs, lambda, depth)?,
        };
        complete_ranking(&selected, len)
    };
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(pos, d)| (probs.docnos[d].clone(), (len - pos) as f64))
        .collect())
}

/// Diversified rankings for every topic, in topic order.
pub fn rank_all(
    prepared: &Prepared,
    aggregator: Aggregator,
    n: usize,
    lambda: f64,
    depth: usize,
) -> Result<Vec<(String, Vec<(String, f64)>)>> {
    prepared
        .topics
        .par_iter()
        .map(|t| Ok((t.qid.clone(), rank_matrix(&t.matrix, aggregator, n, lambda, depth)?)))
        .collect()
}

pub fn rankings_of(run: &[(String, Vec<(String, f64)>)]) -> BTreeMap<String, Vec<String>> {
    run.iter()
        .map(|(qid, entries)| (qid.clone(), entries.iter().map(|(d, _)| d.clone()).collect()))
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-topic metrics as TSV with a closing `all` row of means.
pub fn eval_tsv(result: &EvalResult) -> String {
    let mut out = String::from("qid\talpha_ndcg\terr_ia\tnrbp\tjudged\n");
    let row = |qid: &str, a: f64, e: f64, n: f64, j: f64| format!("{qid}\t{a:.6}\t{e:.6}\t{n:.6}\t{j:.6}\n");
    for t in &result.topics {
        out.push_str(&row(&t.qid, t.alpha_ndcg, t.err_ia, t.nrbp, t.judged));
    }
    out.push_str(&row(
        "all",
        result.mean_alpha_ndcg,
        result.mean_err_ia,
        result.mean_nrbp,
        result.mean_judged,
    ));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub baseline: EvalResult,
    pub diversified: EvalResult,
    /// File name to SHA-256 of every artifact written.
    pub hashes: BTreeMap<String, String>,
}

fn write(dir: &Path, name: &str, contents: &str, hashes: &mut BTreeMap<String, String>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| Error::File { path, source })?;
    hashes.insert(name.to_string(), sha256_hex(contents.as_bytes()));
    Ok(())
}

/// Runs the whole experiment and writes `run.txt`, `baseline.txt`,
/// `intents.jsonl`, `scores.tsv`, `eval.tsv`, `eval.json`,
/// `baseline_eval.json` and `manifest.json` into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    let prepared = prepare(config)?;
    let metric = config.metric();

    let diversified = rank_all(&prepared, config.aggregator, config.n_intents, config.lambda, config.depth)
        .map_err(|e| e.in_stage("diversify"))?;
    let baseline: Vec<(String, Vec<(String, f64)>)> = prepared
        .topics
        .iter()
        .map(|t| (t.qid.clone(), t.pool.entries.clone()))
        .collect();
    let (base_eval, div_eval) = (|| -> Result<_> {
        Ok((
            evaluate(&rankings_of(&baseline), &prepared.qrels, &metric)?,
            evaluate(&rankings_of(&diversified), &prepared.qrels, &metric)?,
        ))
    })()
    .map_err(|e| e.in_stage("evaluate"))?;

    let mut hashes = BTreeMap::new();
    (|| -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|source| Error::File {
            path: out_dir.to_path_buf(),
            source,
        })?;
        write(out_dir, "run.txt", &formats::write_run(&diversified, &config.run_tag), &mut hashes)?;
        write(
            out_dir,
            "baseline.txt",
            &formats::write_run(&baseline, &format!("{}-baseline", config.run_tag)),
            &mut hashes,
        )?;
        if prepared.topics.iter().all(|t| t.intents.is_some()) {
            let sets: Vec<(String, IntentSet)> = prepared
                .topics
                .iter()
                .map(|t| (t.qid.clone(), t.intents.clone().expect("checked")))
                .collect();
            write(out_dir, "intents.jsonl", &formats::write_intents(&sets), &mut hashes)?;
        }
        let matrices: Vec<ScoreMatrix> = prepared.topics.iter().map(|t| t.matrix.clone()).collect();
        write(out_dir, "scores.tsv", &formats::write_score_matrices(&matrices), &mut hashes)?;
        write(out_dir, "eval.tsv", &eval_tsv(&div_eval), &mut hashes)?;
        write(out_dir, "eval.json", &serde_json::to_string_pretty(&div_eval)?, &mut hashes)?;
        write(out_dir, "baseline_eval.json", &serde_json::to_string_pretty(&base_eval)?, &mut hashes)?;

        let mut inputs = BTreeMap::new();
        let mut hash_input = |name: &str, path: Option<&PathBuf>| -> Result<()> {
            if let Some(p) = path {
                inputs.insert(name.to_string(), sha256_hex(read_file(p)?.as_bytes()));
            }
            Ok(())
        };
        hash_input("topics", Some(&config.topics))?;
        hash_input("qrels", Some(&config.qrels))?;
        hash_input("corpus", config.corpus.as_ref())?;
        hash_input("query_log", config.query_log.as_ref())?;
        hash_input("intents_file", config.intents_file.as_ref())?;
        hash_input("scores_file", config.scores_file.as_ref())?;
        let manifest = serde_json::json!({
            "config": config,
            "inputs": inputs,
            "outputs": hashes,
        });
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .map_err(|source| Error::File { path, source })?;
        Ok(())
    })()
    .map_err(|e| e.in_stage("write"))?;

    Ok(RunOutput {
        baseline: base_eval,
        diversified: div_eval,
        hashes,
    })
}

/// Candidate `(n, λ)` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_values: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl Default for Grid {
    /// 1..=20 intents by 0.0..=1.0 in steps of 0.1.
    fn default() -> Self {
        Grid {
            n_values: (1..=MAX_INTENTS).collect(),
            lambdas: (0..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub lambda: f64,
    pub score: f64,
}

/// Evaluates every grid point and returns the best. Ties go to the smaller
/// `n`, then the smaller λ.
pub fn select_best(grid: &Grid, mut objective: impl FnMut(usize, f64) -> Result<f64>) -> Result<GridPoint> {
    let mut n_values = grid.n_values.clone();
    n_values.sort_unstable();
    n_values.dedup();
    let mut lambdas = grid.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let mut best: Option<GridPoint> = None;
    for &n in &n_values {
        for &lambda in &lambdas {
            let score = objective(n, lambda)?;
            if best.is_none_or(|b| score > b.score) {
                best = Some(GridPoint { n, lambda, score });
            }
        }
    }
    best.ok_or(Error::EmptyGrid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub collection: String,
    pub n: usize,
    pub lambda: f64,
    /// Mean objective over the training topics at the chosen point.
    pub train_score: f64,
    pub held_out_score: f64,
}

/// Leave-one-collection-out tuning. `objective(collections, n, λ)` must
/// return the per-topic mean over the union of the named collections.
pub fn grid_tune(
    collections: &[String],
    grid: &Grid,
    objective: impl Fn(&[&str], usize, f64) -> Result<f64>,
) -> Result<Vec<HeldOut>> {
    if collections.len() < 2 {
        return Err(Error::InvalidArgument("leave-one-out tuning needs at least 2 collections".into()));
    }
    collections
        .iter()
        .map(|held| {
            let train: Vec<&str> = collections.iter().filter(|c| *c != held).map(String::as_str).collect();
            let best = select_best(grid, |n, lambda| objective(&train, n, lambda))?;
            Ok(HeldOut {
                collection: held.clone(),
                n: best.n,
                lambda: best.lambda,
                train_score: best.score,
                held_out_score: objective(&[held.as_str()], best.n, best.lambda)?,
            })
        })
        .collect()
}

/// Grid tuning over prepared collections, maximising mean α-nDCG.
pub fn tune_prepared(
    collections: &[(String, Prepared)],
    aggregator: Aggregator,
    depth: usize,
    metric: &MetricConfig,
    grid: &Grid,
) -> Result<Vec<HeldOut>> {
    let names: Vec<String> = collections.iter().map(|(n, _)| n.clone()).collect();
    grid_tune(&names, grid, |selected, n, lambda| {
        let mut scores = Vec::new();
        for (name, prepared) in collections {
            if !selected.contains(&name.as_str()) {
                continue;
            }
            let run = rank_all(prepared, aggregator, n, lambda, depth)?;
            let result = evaluate(&rankings_of(&run), &prepared.qrels, metric)?;
            scores.extend(result.topics.iter().map(|t| t.alpha_ndcg));
        }
        Ok(if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub bucket: String,
    pub count: usize,
    pub alpha_ndcg: f64,
    pub err_ia: f64,
    pub nrbp: f64,
}

/// Per-bucket metric means. Every bucket appears, empty ones with count 0
/// and zero means.
pub fn stratified_report(
    topics: &[TopicEval],
    assignment: &BTreeMap<String, usize>,
    buckets: &Buckets,
) -> Result<Vec<StratumRow>> {
    let mut sums = vec![(0usize, 0.0, 0.0, 0.0); buckets.len()];
    for t in topics {
        let &b = assignment
            .get(&t.qid)
            .ok_or_else(|| Error::InvalidArgument(format!("topic {} has no frequency bucket", t.qid)))?;
        let s = sums
            .get_mut(b)
            .ok_or_else(|| Error::InvalidArgument(format!("bucket {b} out of range")))?;
        s.0 += 1;
        s.1 += t.alpha_ndcg;
        s.2 += t.err_ia;
        s.3 += t.nrbp;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(b, (count, a, e, n))| {
            let d = count.max(1) as f64;
            StratumRow {
                bucket: buckets.label(b),
                count,
                alpha_ndcg: a / d,
                err_ia: e / d,
                nrbp: n / d,
            }
        })
        .collect())
}

pub fn stratified_tsv(rows: &[StratumRow]) -> String {
    let mut out = String::from("bucket\tcount\talpha_ndcg\terr_ia\tnrbp\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            r.bucket, r.count, r.alpha_ndcg, r.err_ia, r.nrbp
        ));
    }
    let total: usize = rows.iter().map(|r| r.count).sum();
    out.push_str(&format!("total\t{total}\t\t\t\n"));
    out
}
