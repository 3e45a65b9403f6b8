//! Run settings as one flat `key = value` document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    ForestParams, Hyperparameters, KnnParams, LinearParams, ModelKind, ModelSpec, RbfParams, TreeParams,
};
use crate::error::{Error, Result};
use crate::features::{Ablation, FeatureConfig};
use crate::gate::RoutingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub ratio: f64,
    pub threshold: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub bootstrap_b: usize,

    pub use_token_char: bool,
    pub use_context_char: bool,
    pub use_handcrafted: bool,
    pub context_window: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub hash_bits: u32,

    pub knn_k: usize,
    pub dt_max_depth: usize,
    pub dt_min_split: usize,
    pub rf_trees: usize,
    pub linear_c: f64,
    pub linear_epochs: usize,
    pub rbf_c: f64,
    pub rbf_gamma: Option<f64>,
    pub rbf_tol: f64,
    pub rbf_max_iter: Option<usize>,

    /// Model slugs in report order.
    pub models: Vec<String>,
    /// Ablation slugs in report order.
    pub configs: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let f = FeatureConfig::baseline();
        let rbf = RbfParams::default();
        Self {
            seed: 42,
            ratio: 0.8,
            threshold: 0.5,
            band_low: 0.4,
            band_high: 0.6,
            bootstrap_b: 2000,
            use_token_char: f.use_token_char,
            use_context_char: f.use_context_char,
            use_handcrafted: f.use_handcrafted,
            context_window: f.context_window,
            ngram_min: f.ngram_min,
            ngram_max: f.ngram_max,
            hash_bits: f.hash_bits,
            knn_k: KnnParams::default().k,
            dt_max_depth: TreeParams::default().max_depth,
            dt_min_split: TreeParams::default().min_samples_split,
            rf_trees: ForestParams::default().trees,
            linear_c: LinearParams::default().c,
            linear_epochs: LinearParams::default().epochs,
            rbf_c: rbf.c,
            rbf_gamma: rbf.gamma,
            rbf_tol: rbf.tolerance,
            rbf_max_iter: rbf.max_iter,
            models: ModelKind::ALL.iter().map(|m| m.slug().to_string()).collect(),
            configs: Ablation::ALL.iter().map(|a| a.slug().to_string()).collect(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ratio must be in (0, 1), got {}",
                self.ratio
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        self.routing()?;
        self.feature_config().validate()?;
        for kind in self.models()? {
            self.model_spec(kind, 0).validate()?;
        }
        self.configs()?;
        Ok(())
    }

    pub fn routing(&self) -> Result<RoutingConfig> {
        RoutingConfig::new(self.band_low, self.band_high)
    }

    /// The baseline feature configuration.
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            use_token_char: self.use_token_char,
            use_context_char: self.use_context_char,
            use_handcrafted: self.use_handcrafted,
            context_window: self.context_window,
            ngram_min: self.ngram_min,
            ngram_max: self.ngram_max,
            hash_bits: self.hash_bits,
        }
    }

    pub fn model_spec(&self, kind: ModelKind, seed: u64) -> ModelSpec {
        let tree = TreeParams {
            max_depth: self.dt_max_depth,
            min_samples_split: self.dt_min_split,
            ..TreeParams::default()
        };
        let hyper = match kind {
            ModelKind::Knn => Hyperparameters::Knn(KnnParams { k: self.knn_k }),
            ModelKind::Dt => Hyperparameters::Tree(tree),
            ModelKind::Rf => Hyperparameters::Forest(ForestParams {
                trees: self.rf_trees,
                tree: TreeParams {
                    max_features: ForestParams::default().tree.max_features,
                    ..tree
                },
                ..ForestParams::default()
            }),
            ModelKind::SvmLinear => Hyperparameters::Linear(LinearParams {
                c: self.linear_c,
                epochs: self.linear_epochs,
            }),
            ModelKind::SvmRbf => Hyperparameters::Rbf(RbfParams {
                c: self.rbf_c,
                gamma: self.rbf_gamma,
                tolerance: self.rbf_tol,
                max_iter: self.rbf_max_iter,
                ..RbfParams::default()
            }),
        };
        ModelSpec { kind, hyper, seed }
    }

    /// Models in report order, whatever order the document lists them in.
    pub fn models(&self) -> Result<Vec<ModelKind>> {
        let mut out = Vec::new();
        for s in &self.models {
            let kind =
                ModelKind::parse(s).ok_or_else(|| Error::InvalidConfig(format!("unknown model {s:?}")))?;
            if !out.contains(&kind) {
                out.push(kind);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("no models selected".into()));
        }
        out.sort_by_key(|k| ModelKind::ALL.iter().position(|m| m == k));
        Ok(out)
    }

    /// Ablation arms in report order.
    pub fn configs(&self) -> Result<Vec<Ablation>> {
        let mut out = Vec::new();
        for s in &self.configs {
            let arm =
                Ablation::parse(s).ok_or_else(|| Error::InvalidConfig(format!("unknown ablation {s:?}")))?;
            if !out.contains(&arm) {
                out.push(arm);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("no ablation configs selected".into()));
        }
        out.sort();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.feature_config(), FeatureConfig::baseline());
        assert_eq!(cfg.models().unwrap(), ModelKind::ALL);
        assert_eq!(cfg.configs().unwrap(), Ablation::ALL);
    }

    #[test]
    fn partial_document_keeps_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\nrf_trees = 10\nmodels = [\"dt\", \"knn\"]\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.ratio, 0.8);
        assert_eq!(cfg.models().unwrap(), [ModelKind::Knn, ModelKind::Dt]);
        let Hyperparameters::Forest(p) = cfg.model_spec(ModelKind::Rf, 0).hyper else {
            unreachable!()
        };
        assert_eq!(p.trees, 10);
        assert_eq!(p.tree.max_features, crate::classifiers::MaxFeatures::Sqrt);
    }

    #[test]
    fn rejects_bad_values() {
        for doc in [
            "ratio = 1.5",
            "knn_k = 4",
            "models = [\"bert\"]",
            "configs = []",
            "band_low = 0.7",
            "context_window = 3",
            "unknown_key = 1",
        ] {
            assert!(RunConfig::from_toml(doc).is_err(), "{doc}");
        }
    }
}
