//! Bootstrap-aggregated CART trees with Gini splits over a random feature
//! subset at each node.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{presort, SplitCriterion, TreeGrower, TreeNode};
use super::{vote, Dataset, ForestConfig, LearnerConfig, ModelKind, TreeEnsembleModel, MAX_CLASSES};
use crate::error::Result;
use crate::features::FeatureMatrix;

type Counts = [f64; MAX_CLASSES];

struct GiniCriterion<'a> {
    labels: &'a [usize],
    weights: &'a [f64],
    n_classes: usize,
}

fn gini_impurity(c: &Counts) -> (f64, f64) {
    let w: f64 = c.iter().sum();
    if w == 0.0 {
        return (0.0, 0.0);
    }
    (1.0 - c.iter().map(|x| (x / w) * (x / w)).sum::<f64>(), w)
}

impl SplitCriterion for GiniCriterion<'_> {
    type Stats = Counts;

    fn empty(&self) -> Counts {
        [0.0; MAX_CLASSES]
    }

    fn add(&self, s: &mut Counts, row: usize) {
        s[self.labels[row]] += self.weights[row];
    }

    fn difference(&self, total: &Counts, part: &Counts) -> Counts {
        std::array::from_fn(|i| total[i] - part[i])
    }

    /// Weighted impurity decrease `W·G(P) − W_L·G(L) − W_R·G(R)`.
    fn gain(&self, parent: &Counts, l: &Counts, r: &Counts) -> Option<f64> {
        let (gp, wp) = gini_impurity(parent);
        let (gl, wl) = gini_impurity(l);
        let (gr, wr) = gini_impurity(r);
        let gain = wp * gp - wl * gl - wr * gr;
        (gain > 1e-12).then_some(gain)
    }

    fn leaf(&self, s: &Counts) -> Vec<f64> {
        let w: f64 = s.iter().sum();
        s[..self.n_classes]
            .iter()
            .map(|x| if w > 0.0 { x / w } else { 0.0 })
            .collect()
    }

    fn is_pure(&self, s: &Counts) -> bool {
        s.iter().filter(|&&x| x > 0.0).count() <= 1
    }
}

pub(crate) fn features_per_split(p: usize) -> usize {
    ((p as f64).sqrt().floor() as usize).clamp(1, p.max(1))
}

struct GrownTree {
    tree: TreeNode,
    oob_rows: Vec<usize>,
}

fn grow_one(data: &Dataset, config: &ForestConfig, index: usize) -> GrownTree {
    let n = data.n_rows();
    let p = data.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(index as u64));
    let mut weights = vec![0.0; n];
    if config.bootstrap {
        for _ in 0..n {
            weights[rng.gen_range(0..n)] += 1.0;
        }
    } else {
        weights.fill(1.0);
    }
    let in_bag: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    let oob_rows = (0..n).filter(|&i| weights[i] == 0.0).collect();
    let crit = GiniCriterion {
        labels: &data.labels,
        weights: &weights,
        n_classes: data.classes.len(),
    };
    let m = features_per_split(p);
    let sorted = presort(&data.columns, &in_bag);
    let mut choose = || {
        let mut f = sample(&mut rng, p, m).into_vec();
        f.sort_unstable();
        f
    };
    let tree = TreeGrower::new(&crit, &data.columns, config.max_depth).grow(sorted, &mut choose);
    GrownTree { tree, oob_rows }
}

pub fn train_forest(matrix: &FeatureMatrix, config: &ForestConfig) -> Result<TreeEnsembleModel> {
    config.validate()?;
    // a single class is allowed here: every tree degenerates to one leaf
    let data = Dataset::from_matrix(matrix)?;
    let grown: Vec<GrownTree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| grow_one(&data, config, t))
        .collect();

    let k = data.classes.len();
    let mut oob_votes = vec![vec![0.0; k]; data.n_rows()];
    for g in &grown {
        for &i in &g.oob_rows {
            let leaf = g.tree.leaf_for(data.row(i));
            oob_votes[i][vote(leaf, &data.priors)] += 1.0;
        }
    }
    let (mut hits, mut seen) = (0usize, 0usize);
    for (i, v) in oob_votes.iter().enumerate() {
        if v.iter().sum::<f64>() > 0.0 {
            seen += 1;
            hits += (vote(v, &data.priors) == data.labels[i]) as usize;
        }
    }
    let oob = (seen > 0).then(|| hits as f64 / seen as f64);

    Ok(TreeEnsembleModel::assemble(
        ModelKind::RandomForest,
        LearnerConfig::Forest(*config),
        &data,
        None,
        vec![grown.into_iter().map(|g| g.tree).collect()],
        oob,
    ))
}
