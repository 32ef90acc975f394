//! Model persistence: a versioned JSON envelope wrapping any trained scorer.
//!
//! The envelope records the format name, a version number, and the feature
//! count the model was trained on; the payload stores matrices row-major
//! with explicit dimensions so a checkpoint is self-describing and
//! independent of in-memory layout.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::boosting::{NeuralEnsemble, WeakLearner};
use crate::data::QueryGroup;
use crate::error::{LtrError, Result};
use crate::gbdt::{RegressionTree, TreeEnsembleModel};
use crate::mlp::{mlp_forward, MLPParams};
use crate::rnn::{rnn_first_step_scores, RnnScorerParams};

pub const CHECKPOINT_FORMAT: &str = "urank-model";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A dense matrix with explicit shape, stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    fn from_array(a: &Array2<f64>) -> Self {
        MatrixData {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }

    fn into_array(self) -> Result<Array2<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(LtrError::Checkpoint(format!(
                "matrix payload holds {} values but declares {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Array2::from_shape_vec((self.rows, self.cols), self.data)
            .map_err(|e| LtrError::Checkpoint(format!("matrix shape rejected: {e}")))
    }
}

/// Serialized payload of one scorer, tagged by kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelData {
    Mlp {
        activate_output: bool,
        w1: MatrixData,
        w2: MatrixData,
        w3: MatrixData,
    },
    Rnn {
        w1: MatrixData,
        w2: MatrixData,
        w_in: MatrixData,
        w_rec: MatrixData,
        bias: Vec<f64>,
        w_out: Vec<f64>,
    },
    TreeEnsemble {
        shrinkage: f64,
        trees: Vec<RegressionTree>,
    },
    Ensemble {
        coefficients: Vec<f64>,
        learners: Vec<ModelData>,
    },
}

/// The on-disk envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    feature_count: usize,
    model: ModelData,
}

/// Any trained scorer, ready to rank documents.
#[derive(Debug, Clone)]
pub enum Model {
    Mlp(MLPParams),
    Rnn(RnnScorerParams),
    TreeEnsemble(TreeEnsembleModel),
    Ensemble(NeuralEnsemble),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Mlp(_) => "mlp",
            Model::Rnn(_) => "rnn",
            Model::TreeEnsemble(_) => "tree-ensemble",
            Model::Ensemble(e) => {
                if e.learners.iter().any(|l| matches!(l, WeakLearner::Rnn(_))) {
                    "rnn-ensemble"
                } else {
                    "mlp-ensemble"
                }
            }
        }
    }

    /// Scores one query's documents. Ratings are never consulted.
    pub fn score_query(&self, group: &QueryGroup) -> Result<Vec<f64>> {
        match self {
            Model::Mlp(p) => mlp_forward(p, &group.feature_matrix()),
            Model::Rnn(p) => {
                let x = group.feature_matrix();
                if x.ncols() != p.feature_count() {
                    return Err(LtrError::validation(format!(
                        "feature matrix has {} columns but the scorer expects {}",
                        x.ncols(),
                        p.feature_count()
                    )));
                }
                Ok(rnn_first_step_scores(p, &x))
            }
            Model::TreeEnsemble(m) => Ok(group
                .documents
                .iter()
                .map(|d| m.predict(&d.features))
                .collect()),
            Model::Ensemble(e) => Ok(e.score_query(group)),
        }
    }

    fn to_data(&self) -> ModelData {
        match self {
            Model::Mlp(p) => mlp_to_data(p),
            Model::Rnn(p) => rnn_to_data(p),
            Model::TreeEnsemble(m) => ModelData::TreeEnsemble {
                shrinkage: m.shrinkage,
                trees: m.trees.clone(),
            },
            Model::Ensemble(e) => ModelData::Ensemble {
                coefficients: e.coefficients.clone(),
                learners: e
                    .learners
                    .iter()
                    .map(|l| match l {
                        WeakLearner::Mlp(p) => mlp_to_data(p),
                        WeakLearner::Rnn(p) => rnn_to_data(p),
                    })
                    .collect(),
            },
        }
    }

    fn from_data(data: ModelData) -> Result<Model> {
        match data {
            ModelData::Mlp { .. } => Ok(Model::Mlp(mlp_from_data(data)?)),
            ModelData::Rnn { .. } => Ok(Model::Rnn(rnn_from_data(data)?)),
            ModelData::TreeEnsemble { shrinkage, trees } => {
                if !shrinkage.is_finite() || shrinkage <= 0.0 {
                    return Err(LtrError::Checkpoint(format!(
                        "shrinkage must be positive and finite, got {shrinkage}"
                    )));
                }
                Ok(Model::TreeEnsemble(TreeEnsembleModel { trees, shrinkage }))
            }
            ModelData::Ensemble {
                coefficients,
                learners,
            } => {
                if learners.is_empty() {
                    return Err(LtrError::Checkpoint("ensemble holds no learners".into()));
                }
                if coefficients.len() != learners.len() {
                    return Err(LtrError::Checkpoint(format!(
                        "ensemble declares {} coefficients for {} learners",
                        coefficients.len(),
                        learners.len()
                    )));
                }
                let learners = learners
                    .into_iter()
                    .map(|l| match l {
                        ModelData::Mlp { .. } => Ok(WeakLearner::Mlp(mlp_from_data(l)?)),
                        ModelData::Rnn { .. } => Ok(WeakLearner::Rnn(rnn_from_data(l)?)),
                        _ => Err(LtrError::Checkpoint(
                            "ensemble learners must be mlp or rnn scorers".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Model::Ensemble(NeuralEnsemble {
                    learners,
                    coefficients,
                }))
            }
        }
    }
}

fn mlp_to_data(p: &MLPParams) -> ModelData {
    ModelData::Mlp {
        activate_output: p.activate_output,
        w1: MatrixData::from_array(&p.w1),
        w2: MatrixData::from_array(&p.w2),
        w3: MatrixData::from_array(&p.w3),
    }
}

fn mlp_from_data(data: ModelData) -> Result<MLPParams> {
    let ModelData::Mlp {
        activate_output,
        w1,
        w2,
        w3,
    } = data
    else {
        return Err(LtrError::Checkpoint("expected an mlp payload".into()));
    };
    let params = MLPParams {
        w1: w1.into_array()?,
        w2: w2.into_array()?,
        w3: w3.into_array()?,
        activate_output,
    };
    if params.w1.ncols() != params.w2.nrows()
        || params.w2.ncols() != params.w3.nrows()
        || params.w3.ncols() != 1
    {
        return Err(LtrError::Checkpoint(
            "mlp layer dimensions do not chain".into(),
        ));
    }
    Ok(params)
}

fn rnn_to_data(p: &RnnScorerParams) -> ModelData {
    ModelData::Rnn {
        w1: MatrixData::from_array(&p.w1),
        w2: MatrixData::from_array(&p.w2),
        w_in: MatrixData::from_array(&p.w_in),
        w_rec: MatrixData::from_array(&p.w_rec),
        bias: p.bias.clone(),
        w_out: p.w_out.clone(),
    }
}

fn rnn_from_data(data: ModelData) -> Result<RnnScorerParams> {
    let ModelData::Rnn {
        w1,
        w2,
        w_in,
        w_rec,
        bias,
        w_out,
    } = data
    else {
        return Err(LtrError::Checkpoint("expected an rnn payload".into()));
    };
    let params = RnnScorerParams {
        w1: w1.into_array()?,
        w2: w2.into_array()?,
        w_in: w_in.into_array()?,
        w_rec: w_rec.into_array()?,
        bias,
        w_out,
    };
    let h = params.w_in.ncols();
    let k2 = params.w2.ncols();
    if params.w1.ncols() != params.w2.nrows()
        || params.w_in.nrows() != k2
        || params.w_rec.nrows() != h
        || params.w_rec.ncols() != h
        || params.bias.len() != h
        || params.w_out.len() != h + k2
    {
        return Err(LtrError::Checkpoint(
            "rnn weight dimensions do not chain".into(),
        ));
    }
    Ok(params)
}

/// Writes `model` to `path` as a versioned JSON checkpoint.
pub fn save_model(model: &Model, feature_count: usize, path: &Path) -> Result<()> {
    let envelope = Envelope {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        feature_count,
        model: model.to_data(),
    };
    let body = serde_json::to_string(&envelope)
        .map_err(|e| LtrError::Checkpoint(format!("serialization failed: {e}")))?;
    fs::write(path, body).map_err(|e| LtrError::io(path, e))
}

/// Reads a checkpoint, validating format, version, and payload dimensions.
/// Returns the model and the feature count it expects.
pub fn load_model(path: &Path) -> Result<(Model, usize)> {
    let body = fs::read_to_string(path).map_err(|e| LtrError::io(path, e))?;
    let envelope: Envelope = serde_json::from_str(&body)
        .map_err(|e| LtrError::Checkpoint(format!("malformed checkpoint: {e}")))?;
    if envelope.format != CHECKPOINT_FORMAT {
        return Err(LtrError::Checkpoint(format!(
            "unrecognized format `{}`",
            envelope.format
        )));
    }
    if envelope.version != CHECKPOINT_VERSION {
        return Err(LtrError::Checkpoint(format!(
            "unsupported version {} (this build reads {})",
            envelope.version, CHECKPOINT_VERSION
        )));
    }
    Ok((Model::from_data(envelope.model)?, envelope.feature_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Document;
    use crate::gbdt::TreeNode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn sample_query() -> QueryGroup {
        QueryGroup {
            query_id: "q1".into(),
            documents: vec![
                Document { rating: 2, features: vec![0.3, -0.1, 0.8] },
                Document { rating: 0, features: vec![-0.5, 0.2, 0.1] },
                Document { rating: 1, features: vec![0.9, 0.9, -0.4] },
            ],
        }
    }

    #[test]
    fn mlp_round_trip_preserves_scores_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = MLPParams::glorot(3, (5, 4), true, &mut rng);
        let model = Model::Mlp(params);
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, 3, &path).unwrap();
        let (loaded, feature_count) = load_model(&path).unwrap();
        assert_eq!(feature_count, 3);
        assert_eq!(loaded.kind(), "mlp");
        let q = sample_query();
        assert_eq!(model.score_query(&q).unwrap(), loaded.score_query(&q).unwrap());
    }

    #[test]
    fn rnn_round_trip_preserves_scores_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = RnnScorerParams::glorot(3, (5, 4), 6, &mut rng);
        let model = Model::Rnn(params);
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, 3, &path).unwrap();
        let (loaded, _) = load_model(&path).unwrap();
        let q = sample_query();
        assert_eq!(model.score_query(&q).unwrap(), loaded.score_query(&q).unwrap());
    }

    #[test]
    fn tree_ensemble_round_trip_preserves_structure() {
        let tree = RegressionTree {
            nodes: vec![
                TreeNode::Split { feature: 1, threshold: 0.15, left: 1, right: 2 },
                TreeNode::Leaf { value: -0.4 },
                TreeNode::Leaf { value: 0.7 },
            ],
        };
        let model = Model::TreeEnsemble(TreeEnsembleModel {
            trees: vec![tree],
            shrinkage: 0.05,
        });
        let dir = tempdir().unwrap();
        let path = dir.path().join("trees.json");
        save_model(&model, 3, &path).unwrap();
        let (loaded, _) = load_model(&path).unwrap();
        let q = sample_query();
        assert_eq!(model.score_query(&q).unwrap(), loaded.score_query(&q).unwrap());
        assert_eq!(loaded.kind(), "tree-ensemble");
    }

    #[test]
    fn ensemble_round_trip_preserves_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = MLPParams::glorot(3, (4, 3), true, &mut rng);
        let b = MLPParams::glorot(3, (4, 3), true, &mut rng);
        let ensemble = NeuralEnsemble {
            learners: vec![WeakLearner::Mlp(a), WeakLearner::Mlp(b)],
            coefficients: vec![1.0, 1.0],
        };
        let model = Model::Ensemble(ensemble);
        let dir = tempdir().unwrap();
        let path = dir.path().join("ensemble.json");
        save_model(&model, 3, &path).unwrap();
        let (loaded, _) = load_model(&path).unwrap();
        assert_eq!(loaded.kind(), "mlp-ensemble");
        let q = sample_query();
        assert_eq!(model.score_query(&q).unwrap(), loaded.score_query(&q).unwrap());
    }

    #[test]
    fn rejects_wrong_format_and_version() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"format":"other","version":1,"feature_count":2,"model":{"kind":"tree_ensemble","shrinkage":0.1,"trees":[]}}"#,
        )
        .unwrap();
        assert!(matches!(load_model(&path), Err(LtrError::Checkpoint(_))));
        std::fs::write(
            &path,
            r#"{"format":"urank-model","version":99,"feature_count":2,"model":{"kind":"tree_ensemble","shrinkage":0.1,"trees":[]}}"#,
        )
        .unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn rejects_inconsistent_matrix_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"format":"urank-model","version":1,"feature_count":1,"model":{"kind":"mlp","activate_output":true,"w1":{"rows":2,"cols":2,"data":[1.0]},"w2":{"rows":1,"cols":1,"data":[1.0]},"w3":{"rows":1,"cols":1,"data":[1.0]}}}"#,
        )
        .unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("declares"));
    }

    #[test]
    fn rejects_nested_ensembles() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nested.json");
        std::fs::write(
            &path,
            r#"{"format":"urank-model","version":1,"feature_count":1,"model":{"kind":"ensemble","coefficients":[1.0],"learners":[{"kind":"ensemble","coefficients":[],"learners":[]}]}}"#,
        )
        .unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("mlp or rnn"));
    }
}
