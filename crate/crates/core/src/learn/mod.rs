//! Tree-ensemble learners: softmax gradient boosting, random forest and
//! one-vs-rest logistic boosting, with gain-based feature importance.

mod forest;
mod gbm;
pub mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::AgentLabel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use forest::train_forest;
pub use gbm::{train_gbm, train_gbm_traced, train_one_vs_rest};
pub use tree::TreeNode;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub(crate) const MAX_CLASSES: usize = AgentLabel::ALL.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub l2_reg: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            n_rounds: 100,
            max_depth: 6,
            learning_rate: 0.3,
            min_child_weight: 1.0,
            l2_reg: 1.0,
            seed: 42,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds < 1 || self.max_depth < 1 {
            return Err(Error::InvalidInput("n_rounds and max_depth must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidInput("learning_rate must lie in (0, 1]".into()));
        }
        if self.l2_reg < 0.0 || self.min_child_weight < 0.0 {
            return Err(Error::InvalidInput(
                "l2_reg and min_child_weight must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features per split are always `floor(sqrt(p))`.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 10,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 || self.max_depth < 1 {
            return Err(Error::InvalidInput("n_trees and max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum LearnerConfig {
    Gbm(GbmConfig),
    Forest(ForestConfig),
}

impl LearnerConfig {
    pub fn train(&self, matrix: &FeatureMatrix) -> Result<TreeEnsembleModel> {
        match self {
            LearnerConfig::Gbm(c) => train_gbm(matrix, c),
            LearnerConfig::Forest(c) => train_forest(matrix, c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    GradientBoosted,
    RandomForest,
}

/// Column- and row-major copies of a feature matrix with class indices.
pub(crate) struct Dataset {
    pub columns: Vec<Vec<f64>>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: Vec<AgentLabel>,
    pub priors: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn from_matrix(matrix: &FeatureMatrix) -> Result<Self> {
        if matrix.n_rows() == 0 {
            return Err(Error::InvalidInput("empty feature matrix".into()));
        }
        if matrix.n_features() == 0 {
            return Err(Error::InvalidInput("feature matrix has no columns".into()));
        }
        if matrix.rows.iter().flat_map(|r| &r.values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        let classes = matrix.classes();
        let labels: Vec<usize> = matrix
            .rows
            .iter()
            .map(|r| classes.iter().position(|&c| c == r.label).expect("class present"))
            .collect();
        let mut priors = vec![0.0; classes.len()];
        for &l in &labels {
            priors[l] += 1.0;
        }
        let n = labels.len() as f64;
        priors.iter_mut().for_each(|p| *p /= n);
        Ok(Dataset {
            columns: (0..matrix.n_features()).map(|j| matrix.column(j)).collect(),
            rows: matrix.rows.iter().map(|r| r.values.clone()).collect(),
            labels,
            classes,
            priors,
            feature_names: matrix.feature_names.clone(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

/// Index of the largest score; ties go to the higher prior, then to the
/// earlier class.
pub(crate) fn vote(scores: &[f64], priors: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && priors[i] > priors[best]) {
            best = i;
        }
    }
    best
}

/// A trained ensemble, serialized as versioned JSON.
///
/// `trees` holds one list per class for the softmax booster, a single list
/// for the forest and for one-vs-rest boosters. One-vs-rest models carry
/// their `target`; their probability vector is `[p(target), p(rest)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub config: LearnerConfig,
    pub classes: Vec<AgentLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<AgentLabel>,
    pub class_priors: Vec<f64>,
    pub feature_names: Vec<String>,
    pub trees: Vec<Vec<TreeNode>>,
    pub gain_totals: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShare {
    pub feature: String,
    pub share: f64,
}

impl TreeEnsembleModel {
    pub(crate) fn assemble(
        kind: ModelKind,
        config: LearnerConfig,
        data: &Dataset,
        target: Option<AgentLabel>,
        trees: Vec<Vec<TreeNode>>,
        oob_accuracy: Option<f64>,
    ) -> Self {
        let mut gains = vec![0.0; data.n_features()];
        // sum in a fixed order so totals are reproducible
        let rounds = trees.iter().map(Vec::len).max().unwrap_or(0);
        for r in 0..rounds {
            for group in &trees {
                if let Some(t) = group.get(r) {
                    t.for_each_split(&mut |f, g| gains[f] += g);
                }
            }
        }
        let gain_totals = gains
            .iter()
            .enumerate()
            .filter(|(_, &g)| g > 0.0)
            .map(|(f, &g)| (data.feature_names[f].clone(), g))
            .collect();
        TreeEnsembleModel {
            format_version: MODEL_FORMAT_VERSION,
            kind,
            config,
            classes: data.classes.clone(),
            target,
            class_priors: data.priors.clone(),
            feature_names: data.feature_names.clone(),
            trees,
            gain_totals,
            oob_accuracy,
        }
    }

    /// Labels matching the entries of [`predict`](Self::predict); `None`
    /// stands for "every other class" in a one-vs-rest model.
    pub fn output_labels(&self) -> Vec<Option<AgentLabel>> {
        match self.target {
            Some(t) => vec![Some(t), None],
            None => self.classes.iter().copied().map(Some).collect(),
        }
    }

    pub fn check_dimension(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_names.len() {
            return Err(Error::RegistryMismatch(format!(
                "model expects {} features, got {}",
                self.feature_names.len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Class probability vector for one feature row.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dimension(x)?;
        Ok(match (self.kind, self.target) {
            (ModelKind::GradientBoosted, Some(_)) => {
                let m: f64 = self.trees[0].iter().map(|t| t.leaf_for(x)[0]).sum();
                let p = gbm::sigmoid(m);
                vec![p, 1.0 - p]
            }
            (ModelKind::GradientBoosted, None) => {
                let mut margins: Vec<f64> = self
                    .trees
                    .iter()
                    .map(|group| group.iter().map(|t| t.leaf_for(x)[0]).sum())
                    .collect();
                gbm::softmax_in_place(&mut margins);
                margins
            }
            (ModelKind::RandomForest, _) => {
                let mut votes = vec![0.0; self.classes.len()];
                let trees = &self.trees[0];
                for t in trees {
                    votes[vote(t.leaf_for(x), &self.class_priors)] += 1.0;
                }
                votes.iter_mut().for_each(|v| *v /= trees.len() as f64);
                votes
            }
        })
    }

    /// Index into [`output_labels`](Self::output_labels) of the predicted
    /// class.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        let p = self.predict(x)?;
        Ok(match self.kind {
            ModelKind::RandomForest => vote(&p, &self.class_priors),
            ModelKind::GradientBoosted => vote(&p, &vec![0.0; p.len()]),
        })
    }

    /// Predicted agent of a multi-class model.
    pub fn predict_label(&self, x: &[f64]) -> Result<AgentLabel> {
        if self.target.is_some() {
            return Err(Error::InvalidInput("one-vs-rest model has no multi-class label".into()));
        }
        Ok(self.classes[self.predict_index(x)?])
    }

    /// Gain-share importance, descending, ties in feature order. Features
    /// without any split are omitted.
    pub fn importance(&self, top_k: Option<usize>) -> Result<Vec<FeatureShare>> {
        if self.trees.iter().all(Vec::is_empty) {
            return Err(Error::InvalidInput("model has no trees".into()));
        }
        let total: f64 = self.gain_totals.values().sum();
        let mut shares: Vec<(usize, FeatureShare)> = self
            .feature_names
            .iter()
            .enumerate()
            .filter_map(|(i, f)| {
                self.gain_totals.get(f).map(|g| {
                    (
                        i,
                        FeatureShare {
                            feature: f.clone(),
                            share: g / total,
                        },
                    )
                })
            })
            .collect();
        shares.sort_by(|a, b| b.1.share.total_cmp(&a.1.share).then(a.0.cmp(&b.0)));
        let mut out: Vec<FeatureShare> = shares.into_iter().map(|(_, s)| s).collect();
        if let Some(k) = top_k {
            out.truncate(k);
        }
        Ok(out)
    }

    /// Split gains along the decision paths of `x` in the trees that score
    /// `output` (all trees for a forest), summed per feature.
    pub fn path_gains(&self, x: &[f64], output: usize) -> Result<Vec<f64>> {
        self.check_dimension(x)?;
        let mut gains = vec![0.0; self.feature_names.len()];
        let groups: &[Vec<TreeNode>] = match (self.kind, self.target) {
            (ModelKind::GradientBoosted, None) => std::slice::from_ref(&self.trees[output]),
            _ => &self.trees,
        };
        for group in groups {
            for t in group {
                t.walk_path(x, &mut |f, g| gains[f] += g);
            }
        }
        Ok(gains)
    }

    /// Same model with its feature columns rearranged to `order`, which
    /// must be a permutation of `feature_names`.
    pub fn with_feature_order(&self, order: &[String]) -> Result<TreeEnsembleModel> {
        if order.len() != self.feature_names.len() {
            return Err(Error::RegistryMismatch("feature order has a different length".into()));
        }
        let map: Vec<usize> = self
            .feature_names
            .iter()
            .map(|f| {
                order
                    .iter()
                    .position(|o| o == f)
                    .ok_or_else(|| Error::RegistryMismatch(format!("feature `{f}` missing from new order")))
            })
            .collect::<Result<_>>()?;
        let mut m = self.clone();
        m.feature_names = order.to_vec();
        for group in &mut m.trees {
            for t in group {
                t.remap_features(&map);
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TreeEnsembleModel = serde_json::from_str(text).map_err(|e| Error::Schema(format!("model file: {e}")))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format_version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests;
