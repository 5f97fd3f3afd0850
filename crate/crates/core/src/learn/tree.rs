//! Exact greedy regression/classification tree growth over presorted
//! columns. The split criterion is pluggable: second-order boosting stats
//! for the boosted learners, weighted class counts for the forest.

use serde::{Deserialize, Serialize};

/// Binary tree node. Rows with `value < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        /// Direction for missing values; always left since extraction never
        /// produces them.
        default_left: bool,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: Vec<f64>,
    },
}

impl TreeNode {
    pub fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    /// Calls `visit(feature, gain)` for each split on the path of `x`.
    pub fn walk_path(&self, x: &[f64], visit: &mut impl FnMut(usize, f64)) {
        let mut node = self;
        while let TreeNode::Split {
            feature,
            threshold,
            gain,
            left,
            right,
            ..
        } = node
        {
            visit(*feature, *gain);
            node = if x[*feature] < *threshold { left } else { right };
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn for_each_split(&self, f: &mut impl FnMut(usize, f64)) {
        if let TreeNode::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            f(*feature, *gain);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }

    pub(crate) fn remap_features(&mut self, map: &[usize]) {
        if let TreeNode::Split {
            feature, left, right, ..
        } = self
        {
            *feature = map[*feature];
            left.remap_features(map);
            right.remap_features(map);
        }
    }
}

pub(crate) trait SplitCriterion: Sync {
    type Stats: Copy;

    fn empty(&self) -> Self::Stats;
    fn add(&self, stats: &mut Self::Stats, row: usize);
    fn difference(&self, total: &Self::Stats, part: &Self::Stats) -> Self::Stats;
    /// Gain of splitting `parent` into `left` and `right`, or `None` when
    /// the split is not admissible.
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> Option<f64>;
    fn leaf(&self, stats: &Self::Stats) -> Vec<f64>;
    fn is_pure(&self, _stats: &Self::Stats) -> bool {
        false
    }
}

/// Row indices of each feature, ascending by value (ties by row index).
/// Rows absent from the training sample are omitted.
pub(crate) fn presort(columns: &[Vec<f64>], rows: &[usize]) -> Vec<Vec<u32>> {
    columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Scans one feature's sorted rows for the best admissible split. Candidate
/// thresholds are midpoints between consecutive distinct values.
fn best_split_on<C: SplitCriterion>(
    crit: &C,
    column: &[f64],
    sorted: &[u32],
    total: &C::Stats,
    feature: usize,
) -> Option<SplitChoice> {
    let mut left = crit.empty();
    let mut best: Option<SplitChoice> = None;
    for w in 0..sorted.len().saturating_sub(1) {
        let row = sorted[w] as usize;
        crit.add(&mut left, row);
        let here = column[row];
        let next = column[sorted[w + 1] as usize];
        if next <= here {
            continue;
        }
        let right = crit.difference(total, &left);
        if let Some(gain) = crit.gain(total, &left, &right) {
            if best.is_none_or(|b| gain > b.gain) {
                let mut threshold = here + (next - here) / 2.0;
                if threshold <= here {
                    threshold = next;
                }
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

/// Best split over `features` (scanned in the given order; earlier
/// candidates win ties).
pub(crate) fn find_best_split<C: SplitCriterion>(
    crit: &C,
    columns: &[Vec<f64>],
    sorted: &[Vec<u32>],
    features: &[usize],
    total: &C::Stats,
) -> Option<SplitChoice> {
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        if let Some(c) = best_split_on(crit, &columns[f], &sorted[f], total, f) {
            if best.is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
    }
    best
}

pub(crate) struct TreeGrower<'a, C: SplitCriterion> {
    pub crit: &'a C,
    pub columns: &'a [Vec<f64>],
    pub max_depth: usize,
    go_left: Vec<bool>,
}

impl<'a, C: SplitCriterion> TreeGrower<'a, C> {
    pub fn new(crit: &'a C, columns: &'a [Vec<f64>], max_depth: usize) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        TreeGrower {
            crit,
            columns,
            max_depth,
            go_left: vec![false; n],
        }
    }

    /// Grows a tree from presorted rows. `choose_features` picks the
    /// candidate features of each node.
    pub fn grow(&mut self, sorted: Vec<Vec<u32>>, choose_features: &mut dyn FnMut() -> Vec<usize>) -> TreeNode {
        self.grow_node(sorted, 0, choose_features)
    }

    fn grow_node(
        &mut self,
        sorted: Vec<Vec<u32>>,
        depth: usize,
        choose_features: &mut dyn FnMut() -> Vec<usize>,
    ) -> TreeNode {
        let mut total = self.crit.empty();
        if let Some(rows) = sorted.first() {
            for &r in rows {
                self.crit.add(&mut total, r as usize);
            }
        }
        let n_rows = sorted.first().map_or(0, Vec::len);
        if depth >= self.max_depth || n_rows < 2 || self.crit.is_pure(&total) {
            return TreeNode::Leaf {
                value: self.crit.leaf(&total),
            };
        }
        let features = choose_features();
        let Some(choice) = find_best_split(self.crit, self.columns, &sorted, &features, &total) else {
            return TreeNode::Leaf {
                value: self.crit.leaf(&total),
            };
        };

        let col = &self.columns[choice.feature];
        for &r in &sorted[0] {
            self.go_left[r as usize] = col[r as usize] < choice.threshold;
        }
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| self.go_left[r as usize]);
            left_sorted.push(l);
            right_sorted.push(r);
        }
        let left = self.grow_node(left_sorted, depth + 1, choose_features);
        let right = self.grow_node(right_sorted, depth + 1, choose_features);
        TreeNode::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            gain: choice.gain,
            default_left: true,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}
