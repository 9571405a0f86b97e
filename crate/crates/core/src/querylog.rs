//! Query collections, the token prefix tree and training-sample emission.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text::{tokenize, END_TOKEN};
use crate::{Error, Result};

/// Queries longer than this are truncated when the tree is built.
pub const MAX_QUERY_TOKENS: usize = 10;

/// Raw query strings in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryCollection {
    pub queries: Vec<String>,
    pub source: String,
}

impl QueryCollection {
    pub fn new(queries: impl IntoIterator<Item = impl Into<String>>, source: &str) -> Self {
        let queries = queries
            .into_iter()
            .map(Into::into)
            .filter_map(|q: String| {
                let q = q.trim();
                (!q.is_empty()).then(|| q.to_string())
            })
            .collect();
        QueryCollection {
            queries,
            source: source.to_string(),
        }
    }

    /// Parses either an ORCAS-style TSV (query in the second column) or a
    /// plain one-query-per-line file. The format is TSV iff any line holds a
    /// tab.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let tsv = text.contains('\t');
        let mut queries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let query = if tsv {
                if line.trim().is_empty() {
                    continue;
                }
                match line.split('\t').nth(1) {
                    Some(q) => q,
                    None => {
                        return Err(Error::parse(
                            "query log",
                            idx + 1,
                            "expected a tab-separated query column",
                        ))
                    }
                }
            } else {
                line
            };
            let query = query.trim();
            if !query.is_empty() {
                queries.push(query.to_string());
            }
        }
        Ok(QueryCollection {
            queries,
            source: source.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixNode {
    /// Queries whose token path passes through this node.
    pub count: u64,
    /// Queries that end exactly here.
    pub end_count: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub children: BTreeMap<String, PrefixNode>,
}

impl PrefixNode {
    pub fn child(&self, token: &str) -> Option<&PrefixNode> {
        self.children.get(token)
    }

    fn check(&self, path: &mut Vec<String>) -> std::result::Result<(), String> {
        let child_sum: u64 = self.children.values().map(|c| c.count).sum();
        if self.count != self.end_count + child_sum {
            return Err(format!(
                "count {} != end {} + children {} at {:?}",
                self.count, self.end_count, child_sum, path
            ));
        }
        for (token, child) in &self.children {
            if child.count == 0 {
                return Err(format!("zero-count node {token:?} under {path:?}"));
            }
            path.push(token.clone());
            child.check(path)?;
            path.pop();
        }
        Ok(())
    }
}

/// Token-level trie over a query collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixTree {
    pub root: PrefixNode,
    pub total_queries: u64,
}

impl PrefixTree {
    /// Builds the tree from tokenized queries. Queries that tokenize to
    /// nothing are skipped; longer ones are cut to [`MAX_QUERY_TOKENS`].
    pub fn build(collection: &QueryCollection) -> Result<Self> {
        if collection.is_empty() {
            return Err(Error::EmptyCollection);
        }
        let mut root = PrefixNode::default();
        for query in &collection.queries {
            let tokens = tokenize(query);
            if tokens.is_empty() {
                continue;
            }
            root.count += 1;
            let mut node = &mut root;
            for token in tokens.into_iter().take(MAX_QUERY_TOKENS) {
                node = node.children.entry(token).or_default();
                node.count += 1;
            }
            node.end_count += 1;
        }
        if root.count == 0 {
            return Err(Error::EmptyCollection);
        }
        Ok(PrefixTree {
            total_queries: root.count,
            root,
        })
    }

    /// Node reached by following `prefix` from the root.
    pub fn node(&self, prefix: &[String]) -> Option<&PrefixNode> {
        prefix
            .iter()
            .try_fold(&self.root, |node, token| node.child(token))
    }

    /// Verifies count conservation at every node.
    pub fn validate(&self) -> Result<()> {
        if self.root.count != self.total_queries || self.root.end_count != 0 {
            return Err(Error::InvalidArgument(
                "root count does not match total_queries".into(),
            ));
        }
        self.root
            .check(&mut Vec::new())
            .map_err(Error::InvalidArgument)
    }

    /// Every end-marked path with its multiplicity, in lexicographic order.
    pub fn queries(&self) -> Vec<(Vec<String>, u64)> {
        fn walk(node: &PrefixNode, path: &mut Vec<String>, out: &mut Vec<(Vec<String>, u64)>) {
            if node.end_count > 0 {
                out.push((path.clone(), node.end_count));
            }
            for (token, child) in &node.children {
                path.push(token.clone());
                walk(child, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: PrefixTree = serde_json::from_str(text)
            .map_err(|e| Error::parse("prefix tree", e.line(), e.to_string()))?;
        tree.validate()?;
        Ok(tree)
    }
}

/// One distributional training target: every token observed after `prefix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DclmSample {
    pub prefix: Vec<String>,
    pub targets: Vec<String>,
}

impl DclmSample {
    /// Each target carries weight `1 / |targets|`.
    pub fn weight(&self) -> f64 {
        1.0 / self.targets.len() as f64
    }
}

/// Random root-to-leaf walks over a prefix tree, one sample per interior
/// step. Children are chosen uniformly.
pub struct DclmWalker<'a> {
    tree: &'a PrefixTree,
    rng: ChaCha8Rng,
    walks_left: usize,
    prefix: Vec<String>,
    node: Option<&'a PrefixNode>,
}

impl<'a> DclmWalker<'a> {
    fn pick<'n>(rng: &mut ChaCha8Rng, node: &'n PrefixNode) -> (&'n String, &'n PrefixNode) {
        let idx = rng.random_range(0..node.children.len());
        node.children.iter().nth(idx).expect("index within children")
    }
}

impl<'a> Iterator for DclmWalker<'a> {
    type Item = DclmSample;

    fn next(&mut self) -> Option<DclmSample> {
        loop {
            match self.node {
                Some(node) if !node.children.is_empty() => {
                    let sample = DclmSample {
                        prefix: self.prefix.clone(),
                        targets: node.children.keys().cloned().collect(),
                    };
                    let (token, child) = Self::pick(&mut self.rng, node);
                    self.prefix.push(token.clone());
                    self.node = Some(child);
                    return Some(sample);
                }
                _ => {
                    if self.walks_left == 0 {
                        return None;
                    }
                    self.walks_left -= 1;
                    let (token, child) = Self::pick(&mut self.rng, &self.tree.root);
                    self.prefix.clear();
                    self.prefix.push(token.clone());
                    self.node = Some(child);
                }
            }
        }
    }
}

/// Streams DCLM samples from `walks` seeded random walks.
pub fn emit_dclm_samples(tree: &PrefixTree, walks: usize, seed: u64) -> Result<DclmWalker<'_>> {
    if walks == 0 {
        return Err(Error::InvalidArgument("walks must be at least 1".into()));
    }
    if tree.root.children.is_empty() {
        return Err(Error::EmptyTree);
    }
    Ok(DclmWalker {
        tree,
        rng: ChaCha8Rng::seed_from_u64(seed),
        walks_left: walks,
        prefix: Vec::new(),
        node: None,
    })
}

/// Plain causal-LM pair: the token that follows `prefix` in one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClmSample {
    pub prefix: Vec<String>,
    pub next: String,
}

/// One pair per token position after the first, plus an end marker per
/// query.
pub fn emit_clm_samples(collection: &QueryCollection) -> impl Iterator<Item = ClmSample> + '_ {
    collection.queries.iter().flat_map(|query| {
        let mut tokens = tokenize(query);
        tokens.truncate(MAX_QUERY_TOKENS);
        let len = tokens.len();
        (1..=len).filter(move |_| len > 0).map(move |cut| ClmSample {
            prefix: tokens[..cut].to_vec(),
            next: tokens.get(cut).cloned().unwrap_or_else(|| END_TOKEN.to_string()),
        })
    })
}

/// Number of collection entries containing `text`, case-insensitively,
/// anywhere in the query.
pub fn frequency(collection: &QueryCollection, text: &str) -> usize {
    let needle = text.to_lowercase();
    collection
        .queries
        .iter()
        .filter(|q| q.to_lowercase().contains(&needle))
        .count()
}

/// Frequency buckets delimited by inclusive upper bounds, e.g. `[1, 37]`
/// gives `0-1`, `2-37` and `38+`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buckets {
    bounds: Vec<u64>,
}

impl Default for Buckets {
    fn default() -> Self {
        Buckets { bounds: vec![1, 37] }
    }
}

impl Buckets {
    pub fn new(bounds: Vec<u64>) -> Result<Self> {
        if bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "bucket boundaries must be strictly increasing".into(),
            ));
        }
        Ok(Buckets { bounds })
    }

    pub fn len(&self) -> usize {
        self.bounds.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bucket(&self, count: u64) -> usize {
        self.bounds
            .iter()
            .position(|&b| count <= b)
            .unwrap_or(self.bounds.len())
    }

    pub fn label(&self, bucket: usize) -> String {
        let lo = if bucket == 0 { 0 } else { self.bounds[bucket - 1] + 1 };
        match self.bounds.get(bucket) {
            Some(hi) => format!("{lo}-{hi}"),
            None => format!("{lo}+"),
        }
    }
}

/// Assigns each query to its frequency bucket.
pub fn stratify<K: Clone + Ord>(
    frequencies: &BTreeMap<K, u64>,
    buckets: &Buckets,
) -> BTreeMap<K, usize> {
    frequencies
        .iter()
        .map(|(k, &count)| (k.clone(), buckets.bucket(count)))
        .collect()
}
