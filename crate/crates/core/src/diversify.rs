//! Explicit diversification: xQuAD and PM2 over per-intent probabilities.

use serde::Serialize;

use crate::scoring::ScoreMatrix;
use crate::{Error, Result};

pub const DEFAULT_DEPTH: usize = 20;

/// Per-document probabilities. Column 0 is the original query, columns
/// `1..` are intents. Rows follow the candidate pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub docnos: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl ProbMatrix {
    pub fn new(docnos: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidArgument("missing original-query column".into()));
        }
        if columns.iter().any(|c| c.len() != docnos.len()) {
            return Err(Error::InvalidArgument("ragged probability matrix".into()));
        }
        Ok(ProbMatrix { docnos, columns })
    }

    pub fn n_docs(&self) -> usize {
        self.docnos.len()
    }

    pub fn n_intents(&self) -> usize {
        self.columns.len() - 1
    }

    fn query(&self, doc: usize) -> f64 {
        self.columns[0][doc]
    }

    fn intent(&self, intent: usize, doc: usize) -> f64 {
        self.columns[intent + 1][doc]
    }

    /// Keeps the query column and the first `n` intent columns.
    pub fn with_intents(&self, n: usize) -> ProbMatrix {
        ProbMatrix {
            docnos: self.docnos.clone(),
            columns: self.columns.iter().take(n + 1).cloned().collect(),
        }
    }
}

/// Min-max normalises a raw column; constant columns become all zeros.
pub fn normalize_column(column: &[f64]) -> Vec<f64> {
    let (min, max) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = max - min;
    if !(span > 0.0) {
        return vec![0.0; column.len()];
    }
    column.iter().map(|v| (v - min) / span).collect()
}

pub fn normalize(scores: &ScoreMatrix) -> ProbMatrix {
    ProbMatrix {
        docnos: scores.docnos.clone(),
        columns: scores.columns.iter().map(|c| normalize_column(c)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XquadConfig {
    pub lambda: f64,
    /// `P(i|q)`; uniform when `None`.
    pub priors: Option<Vec<f64>>,
}

impl XquadConfig {
    pub fn new(lambda: f64) -> Self {
        XquadConfig { lambda, priors: None }
    }
}

/// One greedy step: the selected row and the objective value it achieved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step {
    pub doc: usize,
    pub objective: f64,
}

/// Relative gap below which two objectives count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

fn exceeds(a: f64, b: f64) -> bool {
    a - b > TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn ties(a: f64, b: f64) -> bool {
    !exceeds(a, b) && !exceeds(b, a)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// xQuAD greedy selection, returning the per-step trace.
///
/// Each step picks the remaining document maximising
/// `(1 - λ) P(d|q) + λ Σ_i P(i|q) P(d|i) Π_{d' ∈ S} (1 - P(d'|i))`.
/// Ties (up to a relative 1e-12) go to the earlier pool position.
pub fn xquad_trace(probs: &ProbMatrix, cfg: &XquadConfig, depth: usize) -> Result<Vec<Step>> {
    check_lambda(cfg.lambda)?;
    let m = probs.n_intents();
    let priors = match &cfg.priors {
        Some(p) => {
            if p.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "{} priors for {m} intents",
                    p.len()
                )));
            }
            if m > 0 && (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 || p.iter().any(|&w| w < 0.0) {
                return Err(Error::InvalidArgument("intent priors must sum to 1".into()));
            }
            p.clone()
        }
        None => vec![1.0 / m.max(1) as f64; m],
    };
    let lambda = cfg.lambda;
    // Π over selected docs of (1 - P(d'|i)), per intent.
    let mut uncovered = vec![1.0; m];
    let mut remaining: Vec<usize> = (0..probs.n_docs()).collect();
    let mut steps = Vec::new();
    while steps.len() < depth && !remaining.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (pos, &d) in remaining.iter().enumerate() {
            let diversity: f64 = (0..m)
                .map(|i| priors[i] * probs.intent(i, d) * uncovered[i])
                .sum();
            let objective = (1.0 - lambda) * probs.query(d) + lambda * diversity;
            if best.is_none_or(|(_, b)| exceeds(objective, b)) {
                best = Some((pos, objective));
            }
        }
        let (pos, objective) = best.expect("remaining is non-empty");
        let d = remaining.remove(pos);
        for (i, u) in uncovered.iter_mut().enumerate() {
            *u *= 1.0 - probs.intent(i, d);
        }
        steps.push(Step { doc: d, objective });
    }
    Ok(steps)
}

/// xQuAD ranking (row indices) of at most `depth` documents.
pub fn xquad(probs: &ProbMatrix, cfg: &XquadConfig, depth: usize) -> Result<Vec<usize>> {
    Ok(xquad_trace(probs, cfg, depth)?.into_iter().map(|s| s.doc).collect())
}

/// PM2 proportional-representation selection with uniform votes.
///
/// Each step takes the intent with the largest Sainte-Laguë quotient
/// `v_i / (2 s_i + 1)` (ties to the lower column), scores documents by
/// `λ qt_{i*} P(d|i*) + (1 - λ) Σ_{i ≠ i*} qt_i P(d|i)` and then hands out
/// seat shares `P(d|i) / Σ_j P(d|j)`. Equal scores prefer the larger
/// `P(d|i*)`, then the earlier pool position; scores within a relative
/// 1e-12 count as equal.
pub fn pm2_trace(probs: &ProbMatrix, lambda: f64, depth: usize) -> Result<Vec<Step>> {
    check_lambda(lambda)?;
    let m = probs.n_intents();
    if m == 0 {
        return Err(Error::InvalidArgument("PM2 needs at least one intent".into()));
    }
    let votes = vec![1.0 / m as f64; m];
    let mut seats = vec![0.0; m];
    let mut remaining: Vec<usize> = (0..probs.n_docs()).collect();
    let mut steps = Vec::new();
    while steps.len() < depth && !remaining.is_empty() {
        let quotients: Vec<f64> = (0..m).map(|i| votes[i] / (2.0 * seats[i] + 1.0)).collect();
        let target = (0..m).fold(0, |best, i| if exceeds(quotients[i], quotients[best]) { i } else { best });
        let mut best: Option<(usize, f64, f64)> = None;
        for (pos, &d) in remaining.iter().enumerate() {
            let focus = probs.intent(target, d);
            let others: f64 = (0..m)
                .filter(|&i| i != target)
                .map(|i| quotients[i] * probs.intent(i, d))
                .sum();
            let objective = lambda * quotients[target] * focus + (1.0 - lambda) * others;
            let better = match best {
                None => true,
                Some((_, b_obj, b_focus)) => {
                    exceeds(objective, b_obj) || (ties(objective, b_obj) && exceeds(focus, b_focus))
                }
            };
            if better {
                best = Some((pos, objective, focus));
            }
        }
        let (pos, objective, _) = best.expect("remaining is non-empty");
        let d = remaining.remove(pos);
        let mass: f64 = (0..m).map(|i| probs.intent(i, d)).sum();
        if mass > 0.0 {
            for (i, s) in seats.iter_mut().enumerate() {
                *s += probs.intent(i, d) / mass;
            }
        }
        steps.push(Step { doc: d, objective });
    }
    Ok(steps)
}

pub fn pm2(probs: &ProbMatrix, lambda: f64, depth: usize) -> Result<Vec<usize>> {
    Ok(pm2_trace(probs, lambda, depth)?.into_iter().map(|s| s.doc).collect())
}

/// Appends the rows not selected, in pool order, so the result is a
/// permutation of the whole pool.
pub fn complete_ranking(selected: &[usize], n_docs: usize) -> Vec<usize> {
    let mut taken = vec![false; n_docs];
    let mut out = Vec::with_capacity(n_docs);
    for &d in selected {
        if !taken[d] {
            taken[d] = true;
            out.push(d);
        }
    }
    out.extend((0..n_docs).filter(|&d| !taken[d]));
    out
}
