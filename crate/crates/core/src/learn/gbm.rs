//! Second-order gradient boosting: softmax for the multi-class model,
//! logistic for one-vs-rest.

use rayon::prelude::*;

use super::tree::{presort, SplitCriterion, TreeGrower, TreeNode};
use super::{Dataset, GbmConfig, LearnerConfig, ModelKind, TreeEnsembleModel};
use crate::corpus::AgentLabel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Gradient/hessian sums with L2-regularized Newton leaf values.
pub(crate) struct NewtonCriterion<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub min_child_weight: f64,
    pub learning_rate: f64,
}

impl NewtonCriterion<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.lambda)
    }
}

impl SplitCriterion for NewtonCriterion<'_> {
    type Stats = (f64, f64);

    fn empty(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn add(&self, s: &mut (f64, f64), row: usize) {
        s.0 += self.grad[row];
        s.1 += self.hess[row];
    }

    fn difference(&self, total: &(f64, f64), part: &(f64, f64)) -> (f64, f64) {
        (total.0 - part.0, total.1 - part.1)
    }

    fn gain(&self, parent: &(f64, f64), l: &(f64, f64), r: &(f64, f64)) -> Option<f64> {
        if l.1 < self.min_child_weight || r.1 < self.min_child_weight {
            return None;
        }
        let gain = 0.5 * (self.score(l.0, l.1) + self.score(r.0, r.1) - self.score(parent.0, parent.1));
        (gain > 0.0).then_some(gain)
    }

    fn leaf(&self, s: &(f64, f64)) -> Vec<f64> {
        vec![-s.0 / (s.1 + self.lambda) * self.learning_rate]
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn fit_tree(columns: &[Vec<f64>], sorted: &[Vec<u32>], grad: &[f64], hess: &[f64], config: &GbmConfig) -> TreeNode {
    let crit = NewtonCriterion {
        grad,
        hess,
        lambda: config.l2_reg,
        min_child_weight: config.min_child_weight,
        learning_rate: config.learning_rate,
    };
    let all: Vec<usize> = (0..columns.len()).collect();
    TreeGrower::new(&crit, columns, config.max_depth).grow(sorted.to_vec(), &mut || all.clone())
}

fn multiclass_log_loss(margins: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (m, &y) in margins.iter().zip(labels) {
        let mut p = m.clone();
        softmax_in_place(&mut p);
        total -= p[y].max(1e-300).ln();
    }
    total / labels.len() as f64
}

/// Trains the softmax booster and also returns the mean training log-loss
/// before the first round and after each round.
pub fn train_gbm_traced(matrix: &FeatureMatrix, config: &GbmConfig) -> Result<(TreeEnsembleModel, Vec<f64>)> {
    config.validate()?;
    let data = Dataset::from_matrix(matrix)?;
    if data.classes.len() < 2 {
        return Err(Error::InvalidInput("training needs at least 2 classes".into()));
    }
    let k = data.classes.len();
    let n = data.n_rows();
    let rows: Vec<usize> = (0..n).collect();
    let sorted = presort(&data.columns, &rows);

    let mut margins = vec![vec![0.0; k]; n];
    let mut per_class: Vec<Vec<TreeNode>> = vec![Vec::with_capacity(config.n_rounds); k];
    let mut losses = vec![multiclass_log_loss(&margins, &data.labels)];

    for _ in 0..config.n_rounds {
        let probs: Vec<Vec<f64>> = margins
            .par_iter()
            .map(|m| {
                let mut p = m.clone();
                softmax_in_place(&mut p);
                p
            })
            .collect();
        let trees: Vec<TreeNode> = (0..k)
            .into_par_iter()
            .map(|c| {
                let grad: Vec<f64> = (0..n)
                    .map(|i| probs[i][c] - if data.labels[i] == c { 1.0 } else { 0.0 })
                    .collect();
                let hess: Vec<f64> = (0..n).map(|i| probs[i][c] * (1.0 - probs[i][c])).collect();
                fit_tree(&data.columns, &sorted, &grad, &hess, config)
            })
            .collect();
        margins.par_iter_mut().enumerate().for_each(|(i, m)| {
            let x = data.row(i);
            for (c, t) in trees.iter().enumerate() {
                m[c] += t.leaf_for(x)[0];
            }
        });
        for (c, t) in trees.into_iter().enumerate() {
            per_class[c].push(t);
        }
        losses.push(multiclass_log_loss(&margins, &data.labels));
    }

    let model = TreeEnsembleModel::assemble(
        ModelKind::GradientBoosted,
        LearnerConfig::Gbm(*config),
        &data,
        None,
        per_class,
        None,
    );
    Ok((model, losses))
}

pub fn train_gbm(matrix: &FeatureMatrix, config: &GbmConfig) -> Result<TreeEnsembleModel> {
    train_gbm_traced(matrix, config).map(|(m, _)| m)
}

/// Logistic booster separating `target` from every other class.
pub fn train_one_vs_rest(matrix: &FeatureMatrix, target: AgentLabel, config: &GbmConfig) -> Result<TreeEnsembleModel> {
    config.validate()?;
    let data = Dataset::from_matrix(matrix)?;
    let Some(t) = data.classes.iter().position(|&c| c == target) else {
        return Err(Error::InvalidInput(format!(
            "target {target} absent from training data"
        )));
    };
    let n = data.n_rows();
    let y: Vec<f64> = data.labels.iter().map(|&l| if l == t { 1.0 } else { 0.0 }).collect();
    let rows: Vec<usize> = (0..n).collect();
    let sorted = presort(&data.columns, &rows);
    let mut margin = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_rounds);
    for _ in 0..config.n_rounds {
        let p: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
        let grad: Vec<f64> = p.iter().zip(&y).map(|(p, y)| p - y).collect();
        let hess: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let tree = fit_tree(&data.columns, &sorted, &grad, &hess, config);
        margin.par_iter_mut().enumerate().for_each(|(i, m)| {
            *m += tree.leaf_for(data.row(i))[0];
        });
        trees.push(tree);
    }
    Ok(TreeEnsembleModel::assemble(
        ModelKind::GradientBoosted,
        LearnerConfig::Gbm(*config),
        &data,
        Some(target),
        vec![trees],
        None,
    ))
}
