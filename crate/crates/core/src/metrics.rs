//! Ranking quality metrics: NDCG@k and ERR@k over graded relevance ratings.
//!
//! Rankings are induced by sorting scores descending with ties broken by the
//! original document index, so permuting input order never changes a metric.

use std::collections::BTreeMap;

use crate::data::{Dataset, QueryGroup};
use crate::error::{LtrError, Result};

/// How to score a query whose documents are all rated zero (ideal DCG = 0).
///
/// `Skip` drops the query from aggregate means; `One` counts it as a perfect
/// query (NDCG = 1.0), the convention some toolkits use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroLabelPolicy {
    #[default]
    Skip,
    One,
}

impl ZeroLabelPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(ZeroLabelPolicy::Skip),
            "one" => Ok(ZeroLabelPolicy::One),
            other => Err(LtrError::validation(format!(
                "unknown zero-label policy `{other}` (expected `skip` or `one`)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ZeroLabelPolicy::Skip => "skip",
            ZeroLabelPolicy::One => "one",
        }
    }
}

/// Exponential gain used throughout: 2^rating - 1.
pub fn gain(rating: u32) -> f64 {
    (rating as f64).exp2() - 1.0
}

/// Indices of `scores` sorted descending, ties broken by ascending index.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// DCG@k of ratings already listed in ranked order.
pub fn dcg_at_k(ranked_ratings: &[u32], k: usize) -> f64 {
    ranked_ratings
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, &r)| gain(r) / ((pos + 2) as f64).log2())
        .sum()
}

/// Ideal DCG@k: the DCG of ratings sorted descending.
pub fn ideal_dcg_at_k(ratings: &[u32], k: usize) -> f64 {
    let mut sorted = ratings.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    dcg_at_k(&sorted, k)
}

/// NDCG@k of `scores` against `ratings`. Returns `None` when the ideal DCG is
/// zero under the `Skip` policy; under `One` such queries score 1.0.
pub fn ndcg_at_k(
    scores: &[f64],
    ratings: &[u32],
    k: usize,
    policy: ZeroLabelPolicy,
) -> Result<Option<f64>> {
    if scores.len() != ratings.len() {
        return Err(LtrError::validation(format!(
            "scores ({}) and ratings ({}) length mismatch",
            scores.len(),
            ratings.len()
        )));
    }
    let ideal = ideal_dcg_at_k(ratings, k);
    if ideal == 0.0 {
        return Ok(match policy {
            ZeroLabelPolicy::Skip => None,
            ZeroLabelPolicy::One => Some(1.0),
        });
    }
    let ranked: Vec<u32> = rank_by_score(scores).iter().map(|&i| ratings[i]).collect();
    Ok(Some(dcg_at_k(&ranked, k) / ideal))
}

/// ERR@k with stop probability R_i = (2^r_i - 1) / 2^max_grade.
pub fn err_at_k(scores: &[f64], ratings: &[u32], k: usize, max_grade: u32) -> Result<f64> {
    if scores.len() != ratings.len() {
        return Err(LtrError::validation(format!(
            "scores ({}) and ratings ({}) length mismatch",
            scores.len(),
            ratings.len()
        )));
    }
    let denom = (max_grade as f64).exp2();
    let mut err = 0.0;
    let mut continue_prob = 1.0;
    for (pos, &i) in rank_by_score(scores).iter().take(k).enumerate() {
        let stop = gain(ratings[i]) / denom;
        err += continue_prob * stop / (pos + 1) as f64;
        continue_prob *= 1.0 - stop;
    }
    Ok(err)
}

/// Aggregate metric settings for a dataset pass.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
    pub policy: ZeroLabelPolicy,
    /// Grade ceiling for the ERR stop probability.
    pub max_grade: u32,
}

impl EvalConfig {
    pub fn new(cutoffs: Vec<usize>, policy: ZeroLabelPolicy, max_grade: u32) -> Self {
        EvalConfig {
            cutoffs,
            policy,
            max_grade,
        }
    }

    /// Standard cutoffs with the grade ceiling taken from the dataset.
    pub fn for_dataset(dataset: &Dataset, policy: ZeroLabelPolicy) -> Self {
        EvalConfig {
            cutoffs: vec![1, 3, 5, 10],
            policy,
            max_grade: dataset.max_rating().max(1),
        }
    }
}

/// Mean metrics over a dataset, keyed by cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ndcg: BTreeMap<usize, f64>,
    pub err: BTreeMap<usize, f64>,
    pub queries_evaluated: usize,
    pub queries_skipped: usize,
}

impl EvalReport {
    /// Tab-separated table: one row per metric, one column per cutoff,
    /// values with four decimal places.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric");
        for k in self.ndcg.keys() {
            out.push_str(&format!("\tk={k}"));
        }
        out.push('\n');
        out.push_str("ndcg");
        for v in self.ndcg.values() {
            out.push_str(&format!("\t{v:.4}"));
        }
        out.push('\n');
        out.push_str("err");
        for v in self.err.values() {
            out.push_str(&format!("\t{v:.4}"));
        }
        out.push('\n');
        out
    }
}

/// Scores every query with `scorer` and averages NDCG/ERR at each cutoff.
/// Under the `Skip` policy all-zero-rated queries contribute to neither
/// metric; under `One` they count as NDCG 1.0 and their actual (zero) ERR.
pub fn evaluate<F>(dataset: &Dataset, mut scorer: F, config: &EvalConfig) -> Result<EvalReport>
where
    F: FnMut(&QueryGroup) -> Vec<f64>,
{
    if dataset.queries.is_empty() {
        return Err(LtrError::validation("cannot evaluate an empty dataset"));
    }
    if config.cutoffs.is_empty() {
        return Err(LtrError::validation("no metric cutoffs given"));
    }
    let mut ndcg_sums = vec![0.0; config.cutoffs.len()];
    let mut err_sums = vec![0.0; config.cutoffs.len()];
    let mut evaluated = 0usize;
    let mut skipped = 0usize;

    for group in &dataset.queries {
        let ratings = group.ratings();
        let scores = scorer(group);
        if scores.len() != ratings.len() {
            return Err(LtrError::validation(format!(
                "scorer returned {} scores for query `{}` with {} documents",
                scores.len(),
                group.query_id,
                ratings.len()
            )));
        }
        let all_zero = ideal_dcg_at_k(&ratings, ratings.len()) == 0.0;
        if all_zero && config.policy == ZeroLabelPolicy::Skip {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        for (slot, &k) in config.cutoffs.iter().enumerate() {
            let ndcg = ndcg_at_k(&scores, &ratings, k, config.policy)?
                .expect("skip policy handled above");
            ndcg_sums[slot] += ndcg;
            err_sums[slot] += err_at_k(&scores, &ratings, k, config.max_grade)?;
        }
    }

    if evaluated == 0 {
        return Err(LtrError::validation(
            "every query was skipped (all-zero ratings under the skip policy)",
        ));
    }

    let mut ndcg = BTreeMap::new();
    let mut err = BTreeMap::new();
    for (slot, &k) in config.cutoffs.iter().enumerate() {
        ndcg.insert(k, ndcg_sums[slot] / evaluated as f64);
        err.insert(k, err_sums[slot] / evaluated as f64);
    }
    Ok(EvalReport {
        ndcg,
        err,
        queries_evaluated: evaluated,
        queries_skipped: skipped,
    })
}
