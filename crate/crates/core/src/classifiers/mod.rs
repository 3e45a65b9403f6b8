//! Five binary classifiers over sparse vectors behind one train/score
//! interface.
//!
//! Every model scores into `[0, 1]`. Tree models report leaf positive
//! proportions, k-NN the positive fraction of its neighbors, and both SVMs
//! squash their signed margin with the logistic function. SVM scores are
//! therefore monotone in the margin but not calibrated probabilities.

mod forest;
mod knn;
mod linear;
mod smo;
mod tree;

use std::fmt;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

pub use forest::{ForestModel, ForestParams};
pub use knn::{KnnModel, KnnParams};
pub use linear::{LinearModel, LinearParams};
pub use smo::{RbfModel, RbfParams};
pub use tree::{MaxFeatures, Node, TreeModel, TreeParams};

/// Deterministic RNG for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn logistic(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

/// `exp(-gamma * ||x - y||^2)` over sparse supports.
pub fn rbf_kernel(x: &SparseVector, y: &SparseVector, gamma: f64) -> f64 {
    (-gamma * x.squared_distance(y)).exp()
}

/// `1 - sum(p_i^2)` over class counts.
pub fn gini_impurity(class_counts: &[f64]) -> f64 {
    let total: f64 = class_counts.iter().sum();
    debug_assert!(total > 0.0, "gini of an empty node");
    1.0 - class_counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Knn,
    SvmRbf,
    Rf,
    SvmLinear,
    Dt,
}

impl ModelKind {
    /// Report row order.
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Knn,
        ModelKind::SvmRbf,
        ModelKind::Rf,
        ModelKind::SvmLinear,
        ModelKind::Dt,
    ];

    pub fn title(self) -> &'static str {
        match self {
            ModelKind::Knn => "k-NN",
            ModelKind::SvmRbf => "SVM-rbf",
            ModelKind::Rf => "RF",
            ModelKind::SvmLinear => "SVM-linear",
            ModelKind::Dt => "DT",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::SvmRbf => "svm-rbf",
            ModelKind::Rf => "rf",
            ModelKind::SvmLinear => "svm-linear",
            ModelKind::Dt => "dt",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        ModelKind::ALL.into_iter().find(|k| k.slug() == s)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Hyperparameters {
    Knn(KnnParams),
    Tree(TreeParams),
    Forest(ForestParams),
    Linear(LinearParams),
    Rbf(RbfParams),
}

impl Hyperparameters {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Knn => Hyperparameters::Knn(KnnParams::default()),
            ModelKind::Dt => Hyperparameters::Tree(TreeParams::default()),
            ModelKind::Rf => Hyperparameters::Forest(ForestParams::default()),
            ModelKind::SvmLinear => Hyperparameters::Linear(LinearParams::default()),
            ModelKind::SvmRbf => Hyperparameters::Rbf(RbfParams::default()),
        }
    }

    fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Knn(_) => ModelKind::Knn,
            Hyperparameters::Tree(_) => ModelKind::Dt,
            Hyperparameters::Forest(_) => ModelKind::Rf,
            Hyperparameters::Linear(_) => ModelKind::SvmLinear,
            Hyperparameters::Rbf(_) => ModelKind::SvmRbf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hyper: Hyperparameters,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            kind,
            hyper: Hyperparameters::default_for(kind),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.hyper.kind() != self.kind {
            return bad(format!("{} spec carries {:?}", self.kind, self.hyper));
        }
        match &self.hyper {
            Hyperparameters::Knn(p) if p.k == 0 || p.k % 2 == 0 => {
                bad(format!("k must be odd and >= 1, got {}", p.k))
            }
            Hyperparameters::Tree(p) => p.validate(),
            Hyperparameters::Forest(p) if p.trees == 0 => bad("trees must be >= 1".into()),
            Hyperparameters::Forest(p) => p.tree.validate(),
            Hyperparameters::Linear(p) if !(p.c.is_finite() && p.c > 0.0) || p.epochs == 0 => {
                bad(format!("linear SVM needs C > 0 and epochs >= 1, got {p:?}"))
            }
            Hyperparameters::Rbf(p) => p.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Parameters {
    Knn(KnnModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Linear(LinearModel),
    Rbf(RbfModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub feature_dim: usize,
    pub params: Parameters,
}

fn check_training(rows: &[SparseVector], targets: &[bool], dim: usize) -> Result<()> {
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: targets.len(),
        });
    }
    for r in rows {
        r.check_dim(dim)?;
    }
    let positives = targets.iter().filter(|&&t| t).count();
    if rows.len() < 2 || positives == 0 || positives == targets.len() {
        return Err(Error::SingleClassTraining);
    }
    Ok(())
}

/// Trains `spec` on `rows` (all of dimensionality `dim`). Bit-for-bit
/// reproducible for a fixed seed.
pub fn train(spec: &ModelSpec, rows: &[SparseVector], targets: &[bool], dim: usize) -> Result<TrainedModel> {
    spec.validate()?;
    check_training(rows, targets, dim)?;
    let params = match &spec.hyper {
        Hyperparameters::Knn(p) => Parameters::Knn(KnnModel::fit(p, rows, targets)),
        Hyperparameters::Tree(p) => {
            let mut rng = rng_for(spec.seed, 0);
            Parameters::Tree(TreeModel::fit(p, rows, targets, None, dim, &mut rng))
        }
        Hyperparameters::Forest(p) => Parameters::Forest(ForestModel::fit(p, rows, targets, dim, spec.seed)),
        Hyperparameters::Linear(p) => Parameters::Linear(LinearModel::fit(p, rows, targets, dim, spec.seed)),
        Hyperparameters::Rbf(p) => Parameters::Rbf(RbfModel::fit(p, rows, targets, dim)),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        feature_dim: dim,
        params,
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn score(&self, x: &SparseVector) -> Result<f64> {
        x.check_dim(self.feature_dim)?;
        Ok(match &self.params {
            Parameters::Knn(m) => m.score(x),
            Parameters::Tree(m) => m.score(x),
            Parameters::Forest(m) => m.score(x),
            Parameters::Linear(m) => logistic(m.margin(x)),
            Parameters::Rbf(m) => logistic(m.margin(x)),
        })
    }

    pub fn score_all(&self, xs: &[SparseVector]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.score(x)).collect()
    }

    pub fn predict(&self, x: &SparseVector, threshold: f64) -> Result<bool> {
        Ok(predict_label(self.score(x)?, threshold))
    }

    /// Training notes worth surfacing in reports (solver non-convergence).
    pub fn warnings(&self) -> Vec<String> {
        match &self.params {
            Parameters::Rbf(m) if !m.converged => vec![format!(
                "SMO stopped at the iteration cap ({} iterations) before reaching tolerance",
                m.iterations
            )],
            _ => Vec::new(),
        }
    }
}

/// `score >= threshold`.
pub fn predict_label(score: f64, threshold: f64) -> bool {
    score >= threshold
}

pub const MODEL_FORMAT: &str = "ciu-model";
pub const MODEL_VERSION: u32 = 1;

/// Versioned on-disk container for a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub task: String,
    pub ablation: crate::features::Ablation,
    pub feature_config: crate::features::FeatureConfig,
    pub config_fingerprint: String,
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(
        task: crate::labels::Task,
        ablation: crate::features::Ablation,
        feature_config: crate::features::FeatureConfig,
        model: TrainedModel,
    ) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            task: task.name().into(),
            ablation,
            config_fingerprint: feature_config.fingerprint(),
            feature_config,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported container {} v{}",
                file.format, file.version
            )));
        }
        if file.feature_config.fingerprint() != file.config_fingerprint {
            return Err(Error::ModelFormat("config fingerprint mismatch".into()));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests;
