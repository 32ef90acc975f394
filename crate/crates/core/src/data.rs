//! LETOR/SVMLight-style dataset handling: parsing, serialization, per-query
//! feature normalization and the unique-rating partition used by every loss
//! in this crate.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;

use crate::error::{LtrError, Result};

/// A single judged document: integer relevance rating plus a dense feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub rating: u32,
    pub features: Vec<f64>,
}

/// All documents sharing one query id, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query_id: String,
    pub documents: Vec<Document>,
}

impl QueryGroup {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn ratings(&self) -> Vec<u32> {
        self.documents.iter().map(|d| d.rating).collect()
    }

    /// Distinct ratings sorted descending.
    pub fn unique_ratings(&self) -> Vec<u32> {
        let mut r = self.ratings();
        r.sort_unstable_by(|a, b| b.cmp(a));
        r.dedup();
        r
    }

    /// Dense n-by-l matrix with one row per document.
    pub fn feature_matrix(&self) -> Array2<f64> {
        let n = self.documents.len();
        let l = self.documents.first().map_or(0, |d| d.features.len());
        let mut m = Array2::zeros((n, l));
        for (i, doc) in self.documents.iter().enumerate() {
            for (j, &v) in doc.features.iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }
}

/// A parsed dataset: query groups in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub queries: Vec<QueryGroup>,
    /// Dataset-wide feature dimensionality (the maximum feature id seen).
    pub feature_count: usize,
}

impl Dataset {
    pub fn num_documents(&self) -> usize {
        self.queries.iter().map(|q| q.len()).sum()
    }

    pub fn max_rating(&self) -> u32 {
        self.queries
            .iter()
            .flat_map(|q| q.documents.iter().map(|d| d.rating))
            .max()
            .unwrap_or(0)
    }
}

/// One step of the unique-rating partition. `level_docs` holds the indices of
/// documents rated exactly at this step's rating; `lower_docs` holds every
/// index with a strictly lower rating.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStep {
    pub rating: u32,
    pub level_docs: Vec<usize>,
    pub lower_docs: Vec<usize>,
}

/// The per-query partition over distinct rating levels, highest first.
/// Steps cover every document exactly once via `level_docs`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingPartition {
    pub steps: Vec<PartitionStep>,
}

impl RatingPartition {
    pub fn from_ratings(ratings: &[u32]) -> Self {
        let mut levels: Vec<u32> = ratings.to_vec();
        levels.sort_unstable_by(|a, b| b.cmp(a));
        levels.dedup();
        let steps = levels
            .iter()
            .map(|&r| PartitionStep {
                rating: r,
                level_docs:indices_where(ratings, |x| x == r),
                lower_docs: indices_where(ratings, |x| x < r),
            })
            .collect();
        RatingPartition { steps }
    }

    /// Number of distinct rating levels.
    pub fn num_levels(&self) -> usize {
        self.steps.len()
    }

    /// Number of loss-bearing steps (levels minus the final one).
    pub fn num_steps(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }
}

fn indices_where(ratings: &[u32], pred: impl Fn(u32) -> bool) -> Vec<usize> {
    ratings
        .iter()
        .enumerate()
        .filter_map(|(i, &x)| pred(x).then_some(i))
        .collect()
}

pub fn partition_unique_ratings(group: &QueryGroup) -> RatingPartition {
    RatingPartition::from_ratings(&group.ratings())
}

/// Parses LETOR/SVMLight text: `<rating> qid:<id> <fid>:<value> ... [# comment]`.
///
/// Feature ids are 1-based and may be sparse; absent ids fill with 0.0. The
/// dataset feature count is the maximum id seen anywhere. Lines with the same
/// qid group together in first-appearance order even when non-adjacent.
pub fn parse_letor(text: &str) -> Result<Dataset> {
    struct Row {
        qid: String,
        rating: u32,
        pairs: Vec<(usize, f64)>,
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut feature_count = 0usize;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let mut tokens = line.split_whitespace();
        let Some(rating_tok) = tokens.next() else {
            continue; // blank or comment-only line
        };

        let rating: i64 = rating_tok.parse().map_err(|_| {
            LtrError::parse(line_no, format!("expected integer rating, got `{rating_tok}`"))
        })?;
        if rating < 0 {
            return Err(LtrError::parse(
                line_no,
                format!("negative rating `{rating}` is not allowed"),
            ));
        }

        let Some(qid_tok) = tokens.next() else {
            return Err(LtrError::parse(line_no, "missing qid field"));
        };
        let Some(qid) = qid_tok.strip_prefix("qid:") else {
            return Err(LtrError::parse(
                line_no,
                format!("expected `qid:<id>`, got `{qid_tok}`"),
            ));
        };
        if qid.is_empty() {
            return Err(LtrError::parse(line_no, "empty qid"));
        }

        let mut pairs = Vec::new();
        for tok in tokens {
            let Some((fid_str, val_str)) = tok.split_once(':') else {
                return Err(LtrError::parse(
                    line_no,
                    format!("expected `<fid>:<value>`, got `{tok}`"),
                ));
            };
            let fid: usize = fid_str.parse().map_err(|_| {
                LtrError::parse(line_no, format!("invalid feature id `{fid_str}`"))
            })?;
            if fid == 0 {
                return Err(LtrError::parse(line_no, "feature ids are 1-based; got 0"));
            }
            let value: f64 = val_str.parse().map_err(|_| {
                LtrError::parse(line_no, format!("invalid feature value `{val_str}`"))
            })?;
            feature_count = feature_count.max(fid);
            pairs.push((fid, value));
        }

        rows.push(Row {
            qid: qid.to_string(),
            rating: rating as u32,
            pairs,
        });
    }

    let mut queries: Vec<QueryGroup> = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    for row in rows {
        let mut features = vec![0.0; feature_count];
        for (fid, value) in row.pairs {
            features[fid - 1] = value;
        }
        let doc = Document {
            rating: row.rating,
            features,
        };
        match index_of.get(&row.qid) {
            Some(&i) => queries[i].documents.push(doc),
            None => {
                index_of.insert(row.qid.clone(), queries.len());
                queries.push(QueryGroup {
                    query_id: row.qid,
                    documents: vec![doc],
                });
            }
        }
    }

    Ok(Dataset {
        queries,
        feature_count,
    })
}

/// Serializes a dataset back to LETOR text. Every feature id is written
/// densely so that parsing the output reproduces the dataset exactly.
pub fn serialize_letor(dataset: &Dataset) -> String {
    let mut out = String::new();
    for group in &dataset.queries {
        for doc in &group.documents {
            out.push_str(&format!("{} qid:{}", doc.rating, group.query_id));
            for (j, &v) in doc.features.iter().enumerate() {
                out.push_str(&format!(" {}:{}", j + 1, v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn load_letor(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| LtrError::io(path, e))?;
    parse_letor(&text)
}

pub fn save_letor(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize_letor(dataset)).map_err(|e| LtrError::io(path, e))
}

/// Min-max scales each feature column to [0, 1] within one query. Columns
/// with a degenerate range map to 0.0 for every document.
pub fn normalize_per_query(group: &QueryGroup) -> QueryGroup {
    let n = group.documents.len();
    if n == 0 {
        return group.clone();
    }
    let l = group.documents[0].features.len();
    let mut mins = vec![f64::INFINITY; l];
    let mut maxs = vec![f64::NEG_INFINITY; l];
    for doc in &group.documents {
        for (j, &v) in doc.features.iter().enumerate() {
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    let documents = group
        .documents
        .iter()
        .map(|doc| Document {
            rating: doc.rating,
            features: doc
                .features
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let range = maxs[j] - mins[j];
                    if range > 0.0 {
                        (v - mins[j]) / range
                    } else {
                        0.0
                    }
                })
                .collect(),
        })
        .collect();
    QueryGroup {
        query_id: group.query_id.clone(),
        documents,
    }
}

/// Applies [`normalize_per_query`] to every group of a dataset.
pub fn normalize_dataset(dataset: &Dataset) -> Dataset {
    Dataset {
        queries: dataset.queries.iter().map(normalize_per_query).collect(),
        feature_count: dataset.feature_count,
    }
}
