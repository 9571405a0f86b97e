//! Intent generation: deterministic beam search over a next-token model,
//! followed by the query-term and length filters.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::querylog::PrefixTree;
use crate::text::{tokenize, END_TOKEN};
use crate::{Error, Result};

/// Maximum number of generated tokens per intent.
pub const MAX_GENERATED_TOKENS: usize = 10;
/// Continuations shorter than this (in characters, spaces excluded) are dropped.
pub const MIN_INTENT_CHARS: usize = 6;
pub const DEFAULT_BEAM: usize = 30;
pub const MAX_INTENTS: usize = 20;

/// Conditional next-token distribution. The distribution may contain
/// [`END_TOKEN`]; an empty distribution means the prefix is unknown.
pub trait NextTokenModel {
    fn next_distribution(&self, prefix: &[String]) -> Vec<(String, f64)>;
}

/// Unsmoothed count language model read off a prefix tree.
#[derive(Debug, Clone)]
pub struct CountLm {
    tree: PrefixTree,
}

impl CountLm {
    pub fn new(tree: PrefixTree) -> Self {
        CountLm { tree }
    }

    pub fn tree(&self) -> &PrefixTree {
        &self.tree
    }
}

impl NextTokenModel for CountLm {
    fn next_distribution(&self, prefix: &[String]) -> Vec<(String, f64)> {
        let Some(node) = self.tree.node(prefix) else {
            return Vec::new();
        };
        if node.count == 0 {
            return Vec::new();
        }
        let total = node.count as f64;
        let mut dist = Vec::with_capacity(node.children.len() + 1);
        if node.end_count > 0 {
            dist.push((END_TOKEN.to_string(), node.end_count as f64 / total));
        }
        dist.extend(
            node.children
                .iter()
                .map(|(token, child)| (token.clone(), child.count as f64 / total)),
        );
        dist
    }
}

/// A finished beam-search sequence (generated tokens only, no end marker).
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    pub logprob: f64,
}

#[derive(Debug, Clone)]
struct Candidate {
    tokens: Vec<String>,
    logprob: f64,
    ended: bool,
}

// Higher logprob first; then lexicographic tokens, with an ended sequence
// ordered before any extension of the same tokens.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.logprob
        .total_cmp(&a.logprob)
        .then_with(|| a.tokens.cmp(&b.tokens))
        .then_with(|| b.ended.cmp(&a.ended))
}

/// Beam search without length penalty.
///
/// Every step expands all live hypotheses by every token of the model's
/// distribution, keeps the best `beam` expansions overall, retires those
/// that chose the end token and continues with the rest. Hypotheses that
/// reach `max_tokens` generated tokens are retired as they are. The best
/// `beam` retired sequences are returned, best first.
pub fn beam_search<M: NextTokenModel + ?Sized>(
    model: &M,
    query: &[String],
    beam: usize,
    max_tokens: usize,
) -> Result<Vec<Hypothesis>> {
    if beam == 0 {
        return Err(Error::InvalidArgument("beam width must be at least 1".into()));
    }
    let mut live = vec![Candidate {
        tokens: Vec::new(),
        logprob: 0.0,
        ended: false,
    }];
    let mut finished: Vec<Candidate> = Vec::new();
    let mut prefix = query.to_vec();

    for _ in 0..max_tokens {
        let mut expansions = Vec::new();
        for hyp in &live {
            prefix.truncate(query.len());
            prefix.extend_from_slice(&hyp.tokens);
            for (token, p) in model.next_distribution(&prefix) {
                if p <= 0.0 {
                    continue;
                }
                let ended = token == END_TOKEN;
                let mut tokens = hyp.tokens.clone();
                if !ended {
                    tokens.push(token);
                }
                expansions.push(Candidate {
                    tokens,
                    logprob: hyp.logprob + p.ln(),
                    ended,
                });
            }
        }
        expansions.sort_by(rank);
        expansions.truncate(beam);
        let (ended, cont): (Vec<_>, Vec<_>) = expansions.into_iter().partition(|c| c.ended);
        finished.extend(ended);
        live = cont;
        if live.is_empty() {
            break;
        }
    }
    // Cap reached: retire what is still live.
    finished.extend(live.into_iter().map(|c| Candidate { ended: true, ..c }));
    finished.sort_by(rank);
    finished.truncate(beam);
    Ok(finished
        .into_iter()
        .map(|c| Hypothesis {
            tokens: c.tokens,
            logprob: c.logprob,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    /// Generated expansion with original-query terms removed.
    pub continuation: Vec<String>,
    /// Original query followed by the continuation.
    pub full_text: String,
    pub logprob: f64,
}

impl Intent {
    pub fn text(&self) -> String {
        self.continuation.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntentSet {
    pub query: String,
    pub intents: Vec<Intent>,
}

impl IntentSet {
    pub fn empty(query: &str) -> Self {
        IntentSet {
            query: query.to_string(),
            intents: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.intents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intents.is_empty()
    }

    /// First `n` intents.
    pub fn top(&self, n: usize) -> IntentSet {
        IntentSet {
            query: self.query.clone(),
            intents: self.intents.iter().take(n).cloned().collect(),
        }
    }
}

/// Drops query terms from a candidate; `None` if what remains is too short.
fn strip_candidate(tokens: &[String], query: &[String]) -> Option<Vec<String>> {
    let query: HashSet<&str> = query.iter().map(String::as_str).collect();
    let kept: Vec<String> = tokens
        .iter()
        .filter(|t| !query.contains(t.as_str()))
        .cloned()
        .collect();
    let chars: usize = kept.iter().map(|t| t.chars().count()).sum();
    (chars >= MIN_INTENT_CHARS).then_some(kept)
}

fn make_intent(query: &[String], continuation: Vec<String>, logprob: f64) -> Intent {
    let mut full = query.to_vec();
    full.extend(continuation.iter().cloned());
    Intent {
        full_text: full.join(" "),
        continuation,
        logprob,
    }
}

/// Applies the query-term and minimum-length filters, removes duplicate
/// continuations (keeping the more probable one) and returns the `n` most
/// probable survivors. Ties are broken by continuation text.
pub fn filter_intents(raw: &[Hypothesis], query: &[String], n: usize) -> IntentSet {
    let mut survivors: Vec<Intent> = raw
        .iter()
        .filter_map(|h| {
            strip_candidate(&h.tokens, query).map(|c| make_intent(query, c, h.logprob))
        })
        .collect();
    survivors.sort_by(|a, b| {
        b.logprob
            .total_cmp(&a.logprob)
            .then_with(|| a.continuation.cmp(&b.continuation))
    });
    let mut seen = HashSet::new();
    survivors.retain(|i| seen.insert(i.continuation.clone()));
    survivors.truncate(n);
    IntentSet {
        query: query.join(" "),
        intents: survivors,
    }
}

/// Like [`filter_intents`] but for externally ranked intents (generator
/// responses, suggestion files): the given order is kept, and a duplicate
/// continuation keeps its first position.
pub fn filter_ranked(raw: &[(String, f64)], query: &[String], n: usize) -> IntentSet {
    let mut seen = HashSet::new();
    let intents = raw
        .iter()
        .filter_map(|(text, score)| {
            strip_candidate(&tokenize(text), query).map(|c| make_intent(query, c, *score))
        })
        .filter(|i| seen.insert(i.continuation.clone()))
        .take(n)
        .collect();
    IntentSet {
        query: query.join(" "),
        intents,
    }
}

/// Tokenizes the query, runs beam search and filters the result.
pub fn generate<M: NextTokenModel + ?Sized>(
    model: &M,
    query: &str,
    n: usize,
    beam: usize,
) -> Result<IntentSet> {
    let tokens = tokenize(query);
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("query is empty".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let raw = beam_search(model, &tokens, beam, MAX_GENERATED_TOKENS)?;
    Ok(filter_intents(&raw, &tokens, n))
}
