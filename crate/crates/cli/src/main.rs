use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use intentdiv::evaldiv::{evaluate, EvalResult, MetricConfig};
use intentdiv::external::{serve, ExternalGenerator};
use intentdiv::formats;
use intentdiv::intentgen::{filter_ranked, generate, CountLm, IntentSet, DEFAULT_BEAM, MAX_INTENTS};
use intentdiv::pipeline::{self, Aggregator, ExperimentConfig, Grid, Prepared};
use intentdiv::querylog::{emit_clm_samples, emit_dclm_samples, frequency, Buckets, PrefixTree, QueryCollection};
use intentdiv::repswap::cluster_prototypes;
use intentdiv::scoring::{
    build_matrix, retrieve, Bm25, CandidatePool, Corpus, Dph, IntentText, Scorer, ScoringMode, DEFAULT_POOL_DEPTH,
    PASSAGE_STRIDE, PASSAGE_WINDOW,
};
use intentdiv::stats::{paired_ttest, tost_equivalence, DEFAULT_EQUIVALENCE_BOUND};
use intentdiv::text::tokenize;
use intentdiv::{read_file, Error};

#[derive(Parser)]
#[command(name = "intentdiv", version, about = "Intent generation, diversification and diversity evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a prefix tree from a query log.
    BuildTree {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit distributional training samples from random tree walks.
    EmitDclm {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = 1000)]
        walks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit one next-token sample per query position.
    EmitClm {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate intents for every topic.
    GenIntents {
        #[arg(long)]
        topics: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Generator command speaking the JSONL protocol on stdio.
        #[arg(long, num_args = 1.., allow_hyphen_values = true, conflicts_with_all = ["log", "tree"])]
        external: Option<Vec<String>>,
        #[arg(long, default_value_t = MAX_INTENTS)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_BEAM)]
        beam: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrieve a candidate pool per topic as a TREC run.
    Retrieve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long, value_enum, default_value_t = ScorerArg::Dph)]
        scorer: ScorerArg,
        #[arg(long, default_value_t = DEFAULT_POOL_DEPTH)]
        depth: usize,
        #[arg(long, default_value = "intentdiv-baseline")]
        tag: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score pool documents against each query and its intents.
    Score {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        /// Run file whose per-topic ranking is the candidate pool.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        intents: PathBuf,
        #[arg(long, default_value_t = MAX_INTENTS)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ScorerArg::Dph)]
        scorer: ScorerArg,
        #[arg(long)]
        passages: bool,
        #[arg(long, value_enum, default_value_t = IntentTextArg::Full)]
        intent_text: IntentTextArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-rank score matrices with xQuAD or PM2.
    Diversify {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_enum, default_value_t = AggregatorArg::Xquad)]
        aggregator: AggregatorArg,
        #[arg(long, default_value_t = MAX_INTENTS)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = intentdiv::diversify::DEFAULT_DEPTH)]
        depth: usize,
        #[arg(long, default_value = "intentdiv")]
        tag: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Intent-aware evaluation of a run.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// Topics absent from the run are evaluated as empty rankings.
        #[arg(long)]
        topics: Option<PathBuf>,
        #[command(flatten)]
        metric: MetricArgs,
        /// Per-topic metrics TSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full result as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Leave-one-collection-out grid search over n and lambda.
    Tune {
        /// One experiment config per collection.
        #[arg(long = "config", required = true, num_args = 1)]
        configs: Vec<PathBuf>,
        /// `key=value` overrides applied to every config.
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, String)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metric means per query-log frequency bucket.
    Stratify {
        /// Evaluation JSON written by `evaluate --json` or `run`.
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1u64, 37])]
        bounds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired t-test and TOST equivalence on per-topic alpha-nDCG.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Number of comparisons for the Bonferroni correction.
        #[arg(long, default_value_t = 1)]
        tests: usize,
        #[arg(long, default_value_t = DEFAULT_EQUIVALENCE_BOUND)]
        bound: f64,
    },
    /// Run a whole experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, String)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the count-based model over the generator protocol on stdio.
    Serve {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Cluster contextual vectors into per-term prototypes.
    Prototypes {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = intentdiv::repswap::DEFAULT_K)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Query log to build the count model from.
    #[arg(long, conflicts_with = "tree")]
    log: Option<PathBuf>,
    /// Prefix tree JSON written by `build-tree`.
    #[arg(long)]
    tree: Option<PathBuf>,
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 20)]
    cutoff: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerArg {
    Dph,
    Bm25,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregatorArg {
    Xquad,
    Pm2,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntentTextArg {
    Full,
    Continuation,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

fn read(path: &Path) -> anyhow::Result<String> {
    Ok(read_file(path)?)
}

fn emit(out: Option<&Path>, contents: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, contents)
            .map_err(|source| Error::File { path: path.to_path_buf(), source })?,
        None => std::io::stdout().lock().write_all(contents.as_bytes())?,
    }
    Ok(())
}

fn load_collection(path: &Path) -> anyhow::Result<QueryCollection> {
    Ok(QueryCollection::parse(&read(path)?, &path.display().to_string())?)
}

fn load_model(args: &ModelArgs) -> anyhow::Result<CountLm> {
    let tree = match (&args.log, &args.tree) {
        (Some(log), None) => PrefixTree::build(&load_collection(log)?)?,
        (None, Some(tree)) => PrefixTree::from_json(&read(tree)?)?,
        _ => return Err(anyhow!(Usage("one of --log or --tree is required".into()))),
    };
    Ok(CountLm::new(tree))
}

fn load_corpus(path: &Path) -> anyhow::Result<Corpus> {
    Ok(Corpus::new(formats::parse_corpus(&read(path)?)?)?)
}

fn make_scorer(kind: ScorerArg, corpus: &Corpus) -> Box<dyn Scorer + '_> {
    match kind {
        ScorerArg::Dph => Box::new(Dph { stats: corpus.stats() }),
        ScorerArg::Bm25 => Box::new(Bm25::new(corpus.stats())),
    }
}

/// A usage error found after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::BuildTree { log, out } => {
            let tree = PrefixTree::build(&load_collection(&log)?)?;
            emit(out.as_deref(), &(tree.to_json()? + "\n"))
        }
        Command::EmitDclm { tree, walks, seed, out } => {
            let tree = PrefixTree::from_json(&read(&tree)?)?;
            emit(out.as_deref(), &formats::write_samples(emit_dclm_samples(&tree, walks, seed)?))
        }
        Command::EmitClm { log, out } => {
            let log = load_collection(&log)?;
            emit(out.as_deref(), &formats::write_samples(emit_clm_samples(&log)))
        }
        Command::GenIntents { topics, model, external, n, beam, out } => {
            let topics = formats::parse_topics(&read(&topics)?)?;
            let sets: Vec<IntentSet> = match external {
                Some(command) => {
                    let queries: Vec<String> = topics.iter().map(|(_, q)| q.clone()).collect();
                    ExternalGenerator::spawn(&command)?.generate_batch(&queries, n, beam)?
                }
                None => {
                    let model = load_model(&model)?;
                    topics
                        .iter()
                        .map(|(_, q)| generate(&model, q, n, beam))
                        .collect::<intentdiv::Result<_>>()?
                }
            };
            let records: Vec<(String, IntentSet)> = topics.into_iter().map(|(q, _)| q).zip(sets).collect();
            emit(out.as_deref(), &formats::write_intents(&records))
        }
        Command::Retrieve { corpus, topics, scorer, depth, tag, out } => {
            let corpus = load_corpus(&corpus)?;
            let scorer = make_scorer(scorer, &corpus);
            let topics = formats::parse_topics(&read(&topics)?)?;
            let run: Vec<(String, Vec<(String, f64)>)> = topics
                .iter()
                .map(|(qid, q)| (qid.clone(), retrieve(&corpus, scorer.as_ref(), qid, q, depth).entries))
                .collect();
            emit(out.as_deref(), &formats::write_run(&run, &tag))
        }
        Command::Score { corpus, topics, pool, intents, n, scorer, passages, intent_text, out } => {
            let corpus = load_corpus(&corpus)?;
            let scorer = make_scorer(scorer, &corpus);
            let topics = formats::parse_topics(&read(&topics)?)?;
            let pools = formats::parse_run(&read(&pool)?)?.rankings();
            let intents = formats::parse_intents(&read(&intents)?)?;
            let mode = if passages {
                ScoringMode::MaxPassage { window: PASSAGE_WINDOW, stride: PASSAGE_STRIDE }
            } else {
                ScoringMode::WholeDocument
            };
            let intent_text = match intent_text {
                IntentTextArg::Full => IntentText::Full,
                IntentTextArg::Continuation => IntentText::Continuation,
            };
            let mut matrices = Vec::new();
            for (qid, query) in &topics {
                let entries = pools
                    .get(qid)
                    .map(|docs| docs.iter().map(|d| (d.clone(), 0.0)).collect())
                    .unwrap_or_default();
                let set = match intents.get(qid) {
                    Some(list) => filter_ranked(list, &tokenize(query), n),
                    None => IntentSet::empty(query),
                };
                let candidates = CandidatePool { qid: qid.clone(), entries };
                matrices.push(build_matrix(&corpus, &candidates, query, &set, scorer.as_ref(), mode, intent_text)?);
            }
            emit(out.as_deref(), &formats::write_score_matrices(&matrices))
        }
        Command::Diversify { scores, aggregator, n, lambda, depth, tag, out } => {
            let matrices = formats::parse_score_matrices(&read(&scores)?, None)?;
            let aggregator = match aggregator {
                AggregatorArg::Xquad => Aggregator::Xquad,
                AggregatorArg::Pm2 => Aggregator::Pm2,
            };
            let run = matrices
                .iter()
                .map(|m| Ok((m.qid.clone(), pipeline::rank_matrix(m, aggregator, n, lambda, depth)?)))
                .collect::<intentdiv::Result<Vec<_>>>()?;
            emit(out.as_deref(), &formats::write_run(&run, &tag))
        }
        Command::Evaluate { run, qrels, topics, metric, out, json } => {
            let mut rankings = formats::parse_run(&read(&run)?)?.rankings();
            if let Some(topics) = topics {
                for (qid, _) in formats::parse_topics(&read(&topics)?)? {
                    rankings.entry(qid).or_default();
                }
            }
            let qrels = formats::parse_qrels(&read(&qrels)?)?;
            let cfg = MetricConfig { alpha: metric.alpha, beta: metric.beta, cutoff: metric.cutoff };
            let result = evaluate(&rankings, &qrels, &cfg)?;
            if let Some(path) = json {
                emit(Some(&path), &serde_json::to_string_pretty(&result)?)?;
            }
            emit(out.as_deref(), &pipeline::eval_tsv(&result))
        }
        Command::Tune { configs, overrides, out } => {
            let mut names = BTreeSet::new();
            let mut collections: Vec<(String, Prepared)> = Vec::new();
            let mut settings = None;
            for path in &configs {
                let config = ExperimentConfig::load(path, &overrides)?;
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                if !names.insert(name.clone()) {
                    return Err(anyhow!(Usage(format!("duplicate collection name {name:?}"))));
                }
                let current = (config.aggregator, config.depth, config.metric());
                if settings.is_some_and(|s| s != current) {
                    return Err(anyhow!(Usage("configs disagree on aggregator, depth or metric".into())));
                }
                settings = Some(current);
                collections.push((name, pipeline::prepare(&config)?));
            }
            let (aggregator, depth, metric) = settings.expect("at least one config");
            let held = pipeline::tune_prepared(&collections, aggregator, depth, &metric, &Grid::default())?;
            emit(out.as_deref(), &(serde_json::to_string_pretty(&held)? + "\n"))
        }
        Command::Stratify { eval, topics, log, bounds, out } => {
            let result: EvalResult = serde_json::from_str(&read(&eval)?).context("reading evaluation JSON")?;
            let topics: BTreeMap<String, String> = formats::parse_topics(&read(&topics)?)?.into_iter().collect();
            let log = load_collection(&log)?;
            let buckets = Buckets::new(bounds)?;
            let mut assignment = BTreeMap::new();
            for t in &result.topics {
                let query = topics
                    .get(&t.qid)
                    .ok_or_else(|| Error::InvalidArgument(format!("topic {} missing from topics file", t.qid)))?;
                assignment.insert(t.qid.clone(), buckets.bucket(frequency(&log, query) as u64));
            }
            let rows = pipeline::stratified_report(&result.topics, &assignment, &buckets)?;
            emit(out.as_deref(), &pipeline::stratified_tsv(&rows))
        }
        Command::Compare { a, b, tests, bound } => {
            let load = |p: &Path| -> anyhow::Result<BTreeMap<String, f64>> {
                let r: EvalResult = serde_json::from_str(&read(p)?).context("reading evaluation JSON")?;
                Ok(r.topics.into_iter().map(|t| (t.qid, t.alpha_ndcg)).collect())
            };
            let (a, b) = (load(&a)?, load(&b)?);
            if a.keys().ne(b.keys()) {
                return Err(Error::InvalidArgument("evaluations cover different topics".into()).into());
            }
            let (xa, xb): (Vec<f64>, Vec<f64>) = a.values().copied().zip(b.values().copied()).unzip();
            let report = serde_json::json!({
                "topics": xa.len(),
                "ttest": paired_ttest(&xa, &xb, tests)?,
                "tost": tost_equivalence(&xa, &xb, bound)?,
            });
            emit(None, &(serde_json::to_string_pretty(&report)? + "\n"))
        }
        Command::Run { config, overrides, out } => {
            let config = ExperimentConfig::load(&config, &overrides)?;
            let result = pipeline::run(&config, &out)?;
            println!(
                "baseline alpha-nDCG@{k} {:.4}\ndiversified alpha-nDCG@{k} {:.4}",
                result.baseline.mean_alpha_ndcg,
                result.diversified.mean_alpha_ndcg,
                k = config.cutoff
            );
            Ok(())
        }
        Command::Serve { model } => {
            let model = load_model(&model)?;
            let stdin = std::io::stdin();
            serve(&model, BufReader::new(stdin.lock()), std::io::stdout().lock())?;
            Ok(())
        }
        Command::Prototypes { embeddings, k, out } => {
            let terms = formats::parse_embeddings(&read(&embeddings)?)?;
            let mut prototypes = Vec::new();
            for term in &terms {
                prototypes.extend(cluster_prototypes(term, k)?.prototypes);
            }
            emit(out.as_deref(), &formats::write_prototypes(&prototypes))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        1
    } else if let Some(e) = err.downcast_ref::<Error>() {
        if e.is_data_error() {
            2
        } else {
            3
        }
    } else if err.downcast_ref::<serde_json::Error>().is_some() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
