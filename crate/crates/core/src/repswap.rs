//! Sense prototypes for representation swapping and pooled intent selection
//! across swapped-representation generation runs.

use std::collections::HashMap;

use kodama::{linkage, Method};
use serde::{Deserialize, Serialize};

use crate::diversify::{xquad, ProbMatrix, XquadConfig};
use crate::intentgen::{Intent, IntentSet};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_QUERY_LEN: usize = 1;
pub const DEFAULT_PASSAGE_BUDGET: usize = 1000;

/// Contextual vectors of one term, one per passage.
#[derive(Debug, Clone, PartialEq)]
pub struct TermVectors {
    pub term: String,
    pub entries: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub term: String,
    pub passage_id: String,
    pub vector: Vec<f64>,
    pub cluster_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermPrototypes {
    pub term: String,
    pub prototypes: Vec<Prototype>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsConfig {
    pub k: usize,
    pub max_query_len: usize,
    pub lambda: f64,
}

impl Default for RsConfig {
    fn default() -> Self {
        RsConfig {
            k: DEFAULT_K,
            max_query_len: DEFAULT_MAX_QUERY_LEN,
            lambda: 1.0,
        }
    }
}

/// Whether a query is short enough to be run with swapped representations.
pub fn rs_gate(query: &[String], max_len: usize) -> bool {
    !query.is_empty() && query.len() <= max_len
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 0.0 } else { 1.0 };
    }
    (1.0 - dot / (na * nb)).max(0.0)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn coordinate_median(members: &[&[f64]]) -> Vec<f64> {
    let dim = members[0].len();
    (0..dim)
        .map(|j| median(&mut members.iter().map(|v| v[j]).collect::<Vec<_>>()))
        .collect()
}

fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Clusters a term's vectors into `k` groups (average linkage, cosine
/// distance) and picks, per cluster, the member closest in Euclidean
/// distance to the coordinate-wise median. Identical vectors are clustered
/// once and counted with their multiplicity.
pub fn cluster_prototypes(vectors: &TermVectors, k: usize) -> Result<TermPrototypes> {
    if vectors.entries.is_empty() {
        return Err(Error::InvalidArgument(format!("no vectors for term {:?}", vectors.term)));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let dim = vectors.entries[0].1.len();
    if vectors.entries.iter().any(|(_, v)| v.len() != dim) {
        return Err(Error::InvalidArgument(format!(
            "vectors for {:?} differ in dimensionality",
            vectors.term
        )));
    }
    if vectors.entries.iter().any(|(_, v)| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidArgument("non-finite vector component".into()));
    }

    // Canonical order makes the result independent of input order.
    let mut entries: Vec<(&str, &[f64])> = vectors
        .entries
        .iter()
        .map(|(id, v)| (id.as_str(), v.as_slice()))
        .collect();
    entries.sort_by(|a, b| {
        a.0.cmp(b.0).then_with(|| {
            a.1.iter()
                .zip(b.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    // Distinct vectors (bit-exact) in canonical first-seen order.
    let mut distinct: Vec<&[f64]> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut owner = Vec::with_capacity(entries.len());
    for (_, v) in &entries {
        let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
        let id = *index.entry(key).or_insert_with(|| {
            distinct.push(v);
            distinct.len() - 1
        });
        owner.push(id);
    }

    let n = distinct.len();
    let clusters = k.min(n);
    let mut parent: Vec<usize> = (0..2 * n).collect();
    if n > 1 {
        let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n - 1 {
            for j in i + 1..n {
                condensed.push(cosine_distance(distinct[i], distinct[j]));
            }
        }
        let dendrogram = linkage(&mut condensed, n, Method::Average);
        for (step_idx, step) in dendrogram.steps().iter().take(n - clusters).enumerate() {
            let merged = n + step_idx;
            let a = find(&mut parent, step.cluster1);
            let b = find(&mut parent, step.cluster2);
            parent[a] = merged;
            parent[b] = merged;
        }
    }

    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for (entry_idx, &vec_id) in owner.iter().enumerate() {
        let root = find(&mut parent, vec_id);
        groups.entry(root).or_default().push(entry_idx);
    }

    let mut prototypes: Vec<Prototype> = groups
        .into_values()
        .map(|members| {
            let member_vecs: Vec<&[f64]> = members.iter().map(|&e| entries[e].1).collect();
            let center = coordinate_median(&member_vecs);
            // entries are sorted by passage id, so the first minimum wins ties
            let best = members
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    sq_euclidean(entries[a].1, &center)
                        .total_cmp(&sq_euclidean(entries[b].1, &center))
                        .then(a.cmp(&b))
                })
                .expect("cluster is non-empty");
            Prototype {
                term: vectors.term.clone(),
                passage_id: entries[best].0.to_string(),
                vector: entries[best].1.to_vec(),
                cluster_size: members.len(),
            }
        })
        .collect();
    prototypes.sort_by(|a, b| {
        b.cluster_size
            .cmp(&a.cluster_size)
            .then_with(|| a.passage_id.cmp(&b.passage_id))
    });
    Ok(TermPrototypes {
        term: vectors.term.clone(),
        prototypes,
    })
}

/// Pools intents from several generation runs and selects `n` of them with
/// xQuAD, treating each run as an intent group. A candidate's relevance to a
/// run is its generation probability in that run (zero when absent); its
/// query relevance is the mean over runs.
pub fn pool_and_select(runs: &[IntentSet], n: usize, lambda: f64) -> Result<IntentSet> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("no generation runs".into()));
    }
    let query = runs[0].query.clone();
    let mut candidates: Vec<Intent> = Vec::new();
    let mut position: HashMap<Vec<String>, usize> = HashMap::new();
    for run in runs {
        for intent in &run.intents {
            match position.get(&intent.continuation) {
                Some(&idx) => {
                    if intent.logprob > candidates[idx].logprob {
                        candidates[idx].logprob = intent.logprob;
                    }
                }
                None => {
                    position.insert(intent.continuation.clone(), candidates.len());
                    candidates.push(intent.clone());
                }
            }
        }
    }
    if candidates.is_empty() {
        return Ok(IntentSet::empty(&query));
    }

    let mut groups: Vec<Vec<f64>> = Vec::with_capacity(runs.len());
    for run in runs {
        let mut column = vec![0.0f64; candidates.len()];
        for intent in &run.intents {
            let idx = position[&intent.continuation];
            column[idx] = column[idx].max(intent.logprob.exp());
        }
        groups.push(column);
    }
    let mean: Vec<f64> = (0..candidates.len())
        .map(|c| groups.iter().map(|g| g[c]).sum::<f64>() / groups.len() as f64)
        .collect();
    let mut columns = vec![mean];
    columns.extend(groups);
    let docnos = (0..candidates.len()).map(|i| i.to_string()).collect();
    let probs = ProbMatrix::new(docnos, columns)?;
    let order = xquad(&probs, &XquadConfig::new(lambda), n)?;
    Ok(IntentSet {
        query,
        intents: order.into_iter().map(|i| candidates[i].clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    fn tv(vecs: &[(&str, &[f64])]) -> TermVectors {
        TermVectors {
            term: "t".into(),
            entries: vecs.iter().map(|(id, v)| (id.to_string(), v.to_vec())).collect(),
        }
    }

    fn intent(text: &str, logprob: f64) -> Intent {
        Intent {
            continuation: tokenize(text),
            full_text: format!("q {text}"),
            logprob,
        }
    }

    #[test]
    fn single_cluster_median_member() {
        let v = tv(&[("a", &[0.0, 0.0]), ("b", &[0.0, 2.0]), ("c", &[10.0, 10.0])]);
        let p = cluster_prototypes(&v, 1).unwrap();
        assert_eq!(p.prototypes.len(), 1);
        assert_eq!(p.prototypes[0].vector, vec![0.0, 2.0]);
        assert_eq!(p.prototypes[0].passage_id, "b");
        assert_eq!(p.prototypes[0].cluster_size, 3);
    }

    #[test]
    fn singletons_when_k_matches() {
        let v = tv(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[-1.0, 0.2])]);
        let p = cluster_prototypes(&v, 3).unwrap();
        let mut ids: Vec<_> = p.prototypes.iter().map(|p| p.passage_id.as_str()).collect();
        ids.sort();
        assert_eq!(ids, ["a", "b", "c"]);
        let p = cluster_prototypes(&v, 10).unwrap();
        assert_eq!(p.prototypes.len(), 3);
    }

    #[test]
    fn duplicates_count_once_for_k() {
        let v = tv(&[("a", &[1.0, 0.0]), ("b", &[1.0, 0.0]), ("c", &[0.0, 1.0])]);
        let p = cluster_prototypes(&v, 5).unwrap();
        assert_eq!(p.prototypes.len(), 2);
        assert_eq!(p.prototypes[0].passage_id, "a");
        assert_eq!(p.prototypes[0].cluster_size, 2);
    }

    #[test]
    fn errors() {
        assert!(cluster_prototypes(&tv(&[]), 2).is_err());
        assert!(cluster_prototypes(&tv(&[("a", &[1.0]), ("b", &[1.0, 2.0])]), 2).is_err());
        assert!(cluster_prototypes(&tv(&[("a", &[1.0])]), 0).is_err());
    }

    #[test]
    fn gate() {
        assert!(rs_gate(&tokenize("penguins"), 1));
        assert!(!rs_gate(&tokenize("electoral college"), 1));
        assert!(!rs_gate(&[], 1));
    }

    #[test]
    fn single_run_is_top_n() {
        let run = IntentSet {
            query: "q".into(),
            intents: vec![intent("alpha one", -0.5), intent("bravo two", -1.0), intent("charlie", -2.0)],
        };
        let out = pool_and_select(std::slice::from_ref(&run), 2, 1.0).unwrap();
        assert_eq!(out, run.top(2));
    }

    #[test]
    fn disjoint_runs_take_one_each() {
        let a = IntentSet { query: "q".into(), intents: vec![intent("hockey team", -1.0), intent("hockey score", -1.0)] };
        let b = IntentSet { query: "q".into(), intents: vec![intent("animals facts", -1.0), intent("animal habitat", -1.0)] };
        let out = pool_and_select(&[a, b], 2, 1.0).unwrap();
        let texts: Vec<_> = out.intents.iter().map(Intent::text).collect();
        assert_eq!(texts, ["hockey team", "animals facts"]);
    }

    #[test]
    fn shared_intent_selected_once() {
        let a = IntentSet { query: "q".into(), intents: vec![intent("shared one", -0.1), intent("other aaa", -3.0)] };
        let b = IntentSet { query: "q".into(), intents: vec![intent("shared one", -0.1), intent("other bbb", -3.0)] };
        let out = pool_and_select(&[a, b], 4, 1.0).unwrap();
        let texts: Vec<_> = out.intents.iter().map(Intent::text).collect();
        assert_eq!(texts.iter().filter(|t| *t == "shared one").count(), 1);
        assert_eq!(out.len(), 3);
        let empty = pool_and_select(&[IntentSet::empty("q")], 3, 1.0).unwrap();
        assert!(empty.is_empty());
    }
}
