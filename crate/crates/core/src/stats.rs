//! Paired significance and equivalence tests over per-topic scores.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.05;
pub const DEFAULT_EQUIVALENCE_BOUND: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    /// `min(1, p * tests)`.
    pub p_bonferroni: f64,
    /// The differences have zero variance; `p` is reported as 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tost {
    pub p_lower: f64,
    pub p_upper: f64,
    pub equivalent: bool,
    pub degenerate: bool,
}

struct Paired {
    n: f64,
    mean: f64,
    se: f64,
}

fn paired(a: &[f64], b: &[f64]) -> Result<Paired> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("paired tests need at least 2 topics".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Paired {
        n,
        mean,
        se: (var / n).sqrt(),
    })
}

fn student(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("df is positive")
}

/// Two-sided paired t-test of `a - b`, with a Bonferroni adjustment for
/// `tests` comparisons.
pub fn paired_ttest(a: &[f64], b: &[f64], tests: usize) -> Result<TTest> {
    let d = paired(a, b)?;
    let df = d.n - 1.0;
    if d.se == 0.0 || !d.se.is_finite() {
        let t = if d.mean == 0.0 { 0.0 } else { d.mean.signum() * f64::INFINITY };
        return Ok(TTest {
            t,
            df,
            p: 1.0,
            p_bonferroni: 1.0,
            degenerate: true,
        });
    }
    let t = d.mean / d.se;
    let p = (2.0 * student(df).cdf(-t.abs())).min(1.0);
    Ok(TTest {
        t,
        df,
        p,
        p_bonferroni: (p * tests.max(1) as f64).min(1.0),
        degenerate: false,
    })
}

/// Two one-sided paired tests for equivalence of `a` and `b` within
/// `±bound`.
pub fn tost_equivalence(a: &[f64], b: &[f64], bound: f64) -> Result<Tost> {
    if !(bound > 0.0) {
        return Err(Error::InvalidArgument("equivalence bound must be positive".into()));
    }
    let d = paired(a, b)?;
    if d.se == 0.0 || !d.se.is_finite() {
        let inside = d.mean.abs() < bound;
        let p = if inside { 0.0 } else { 1.0 };
        return Ok(Tost {
            p_lower: p,
            p_upper: p,
            equivalent: inside,
            degenerate: true,
        });
    }
    let dist = student(d.n - 1.0);
    // H0: mean <= -bound, and H0: mean >= +bound.
    let p_lower = 1.0 - dist.cdf((d.mean + bound) / d.se);
    let p_upper = dist.cdf((d.mean - bound) / d.se);
    Ok(Tost {
        p_lower,
        p_upper,
        equivalent: p_lower < SIGNIFICANCE && p_upper < SIGNIFICANCE,
        degenerate: false,
    })
}
