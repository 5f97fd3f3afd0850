//! Stratified k-fold cross-validation and classification metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::AgentLabel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::learn::LearnerConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold id of every row.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Shuffles each class's rows with a seeded generator and deals them
/// round-robin. The dealer carries on from where the previous class
/// stopped, so fold sizes stay balanced overall as well as per class.
pub fn stratified_folds(labels: &[AgentLabel], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidInput("need at least 2 folds".into()));
    }
    let mut by_class: BTreeMap<AgentLabel, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if let Some((label, rows)) = by_class.iter().find(|(_, rows)| rows.len() < k) {
        return Err(Error::InvalidInput(format!(
            "class {label} has {} samples, fewer than {k} folds",
            rows.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; labels.len()];
    let mut next = 0;
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            assignments[r] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, seed, assignments })
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<AgentLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<AgentLabel>) -> Self {
        let k = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn record(&mut self, truth: AgentLabel, predicted: AgentLabel) {
        let t = self.index(truth).expect("true class in matrix");
        let p = self.index(predicted).expect("predicted class in matrix");
        self.counts[t][p] += 1;
    }

    pub fn index(&self, label: AgentLabel) -> Option<usize> {
        self.classes.iter().position(|&c| c == label)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Aligned text grid, true classes down the side.
    pub fn render_text(&self) -> String {
        let names: Vec<&str> = self.classes.iter().map(|c| c.as_str()).collect();
        let label_w = names.iter().map(|n| n.len()).max().unwrap_or(0).max("true\\pred".len());
        let cell_w = names
            .iter()
            .map(|n| n.len())
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1);
        let mut out = format!("{:<label_w$}", "true\\pred");
        for n in &names {
            write!(out, "  {n:>cell_w$}").unwrap();
        }
        out.push('\n');
        for (n, row) in names.iter().zip(&self.counts) {
            write!(out, "{n:<label_w$}").unwrap();
            for c in row {
                write!(out, "  {c:>cell_w$}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(c.as_str());
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: BTreeMap<AgentLabel, ClassMetrics>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub accuracy: f64,
    /// One entry per metric whose denominator was zero and was reported as 0.
    pub warnings: Vec<String>,
}

fn safe_div(num: f64, den: f64, what: impl FnOnce() -> String, warnings: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        warnings.push(what());
        0.0
    } else {
        num / den
    }
}

pub fn metrics_from_confusion(confusion: &ConfusionMatrix) -> Result<Metrics> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    let mut warnings = Vec::new();
    let mut per_class = BTreeMap::new();
    for (i, &c) in confusion.classes.iter().enumerate() {
        let tp = confusion.counts[i][i] as f64;
        let support = confusion.row_sum(i);
        let precision = safe_div(
            tp,
            confusion.col_sum(i) as f64,
            || format!("{c}: precision undefined (no predictions)"),
            &mut warnings,
        );
        let recall = safe_div(
            tp,
            support as f64,
            || format!("{c}: recall undefined (no samples)"),
            &mut warnings,
        );
        let f1 = safe_div(
            2.0 * precision * recall,
            precision + recall,
            || format!("{c}: F1 undefined"),
            &mut warnings,
        );
        per_class.insert(
            c,
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    let k = per_class.len() as f64;
    let macro_avg = Averages {
        precision: per_class.values().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.values().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.values().map(|m| m.f1).sum::<f64>() / k,
    };
    let w =
        |f: fn(&ClassMetrics) -> f64| per_class.values().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64;
    let weighted_avg = Averages {
        precision: w(|m| m.precision),
        recall: w(|m| m.recall),
        f1: w(|m| m.f1),
    };
    let correct: u64 = (0..confusion.classes.len()).map(|i| confusion.counts[i][i]).sum();
    Ok(Metrics {
        per_class,
        macro_avg,
        weighted_avg,
        accuracy: correct as f64 / total as f64,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub learner: LearnerConfig,
    pub k_folds: usize,
    pub fold_seed: u64,
    pub feature_count: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// Predictions of all held-out folds pooled together.
    pub confusion: ConfusionMatrix,
    /// Weighted F1 of each held-out fold, by fold id.
    pub per_fold_f1: Vec<f64>,
    pub f1_spread: f64,
}

pub fn cross_validate(matrix: &FeatureMatrix, learner: &LearnerConfig, plan: &FoldPlan) -> Result<EvaluationReport> {
    if plan.assignments.len() != matrix.n_rows() {
        return Err(Error::InvalidInput(format!(
            "fold plan covers {} rows, matrix has {}",
            plan.assignments.len(),
            matrix.n_rows()
        )));
    }
    if plan.assignments.iter().any(|&f| f >= plan.k) {
        return Err(Error::InvalidInput("fold id out of range".into()));
    }
    let classes = matrix.classes();
    let folds: Vec<ConfusionMatrix> = (0..plan.k)
        .into_par_iter()
        .map(|fold| -> Result<ConfusionMatrix> {
            let wrap = |e: Error| Error::Fold {
                fold,
                source: Box::new(e),
            };
            let train = matrix.subset_rows(&plan.train_rows(fold));
            let model = learner.train(&train).map_err(wrap)?;
            let mut cm = ConfusionMatrix::new(classes.clone());
            for i in plan.test_rows(fold) {
                let row = &matrix.rows[i];
                let predicted = model.predict_label(&row.values).map_err(wrap)?;
                cm.record(row.label, predicted);
            }
            Ok(cm)
        })
        .collect::<Result<_>>()?;

    let mut pooled = ConfusionMatrix::new(classes);
    let mut per_fold_f1 = Vec::with_capacity(plan.k);
    for cm in &folds {
        pooled.add(cm);
        per_fold_f1.push(metrics_from_confusion(cm)?.weighted_avg.f1);
    }
    let max = per_fold_f1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = per_fold_f1.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EvaluationReport {
        learner: *learner,
        k_folds: plan.k,
        fold_seed: plan.seed,
        feature_count: matrix.n_features(),
        metrics: metrics_from_confusion(&pooled)?,
        confusion: pooled,
        per_fold_f1,
        f1_spread: max - min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetComparison {
    pub features_full: usize,
    pub features_reduced: usize,
    pub f1_full: f64,
    pub f1_reduced: f64,
    /// `f1_full − f1_reduced`; positive means the reduction cost accuracy.
    pub delta: f64,
}

pub fn compare_feature_sets(
    full: &FeatureMatrix,
    reduced: &FeatureMatrix,
    learner: &LearnerConfig,
    plan: &FoldPlan,
) -> Result<FeatureSetComparison> {
    if full.n_rows() != reduced.n_rows() {
        return Err(Error::InvalidInput(format!(
            "row counts differ: {} vs {}",
            full.n_rows(),
            reduced.n_rows()
        )));
    }
    if full
        .rows
        .iter()
        .zip(&reduced.rows)
        .any(|(a, b)| a.pr_id != b.pr_id || a.label != b.label)
    {
        return Err(Error::InvalidInput("matrices do not describe the same rows".into()));
    }
    let f1_full = cross_validate(full, learner, plan)?.metrics.weighted_avg.f1;
    let f1_reduced = cross_validate(reduced, learner, plan)?.metrics.weighted_avg.f1;
    Ok(FeatureSetComparison {
        features_full: full.n_features(),
        features_reduced: reduced.n_features(),
        f1_full,
        f1_reduced,
        delta: f1_full - f1_reduced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::learn::GbmConfig;
    use proptest::prelude::*;
    use rand::Rng;

    const A: AgentLabel = AgentLabel::OpenAICodex;
    const B: AgentLabel = AgentLabel::Copilot;
    const C: AgentLabel = AgentLabel::Devin;

    fn per_class_fold_counts(plan: &FoldPlan, labels: &[AgentLabel]) -> BTreeMap<AgentLabel, Vec<usize>> {
        let mut m: BTreeMap<AgentLabel, Vec<usize>> = BTreeMap::new();
        for (&l, &f) in labels.iter().zip(&plan.assignments) {
            m.entry(l).or_insert_with(|| vec![0; plan.k])[f] += 1;
        }
        m
    }

    #[test]
    fn balanced_folds() {
        let labels: Vec<_> = [A; 5].into_iter().chain([B; 5]).collect();
        let plan = stratified_folds(&labels, 5, 1).unwrap();
        for counts in per_class_fold_counts(&plan, &labels).values() {
            assert_eq!(counts, &vec![1; 5]);
        }
        let labels = vec![A; 7];
        let plan = stratified_folds(&labels, 5, 1).unwrap();
        let counts = &per_class_fold_counts(&plan, &labels)[&A];
        assert!(counts.iter().all(|&c| c == 1 || c == 2));
        assert_eq!(
            stratified_folds(&labels, 5, 9).unwrap(),
            stratified_folds(&labels, 5, 9).unwrap()
        );
    }

    #[test]
    fn too_few_samples() {
        assert!(stratified_folds(&[A, A, A, B, B, B, B, B], 5, 0).is_err());
    }

    #[test]
    fn identity_confusion_is_perfect() {
        let cm = ConfusionMatrix {
            classes: vec![A, B, C],
            counts: vec![vec![3, 0, 0], vec![0, 4, 0], vec![0, 0, 5]],
        };
        let m = metrics_from_confusion(&cm).unwrap();
        assert!(m
            .per_class
            .values()
            .all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
        assert_eq!(m.weighted_avg.f1, 1.0);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn single_class_flags_the_rest() {
        let cm = ConfusionMatrix {
            classes: vec![A, B],
            counts: vec![vec![4, 0], vec![0, 0]],
        };
        let m = metrics_from_confusion(&cm).unwrap();
        assert_eq!(m.per_class[&A].f1, 1.0);
        assert_eq!(m.per_class[&B].f1, 0.0);
        assert!(!m.warnings.is_empty());
        assert!(metrics_from_confusion(&ConfusionMatrix::new(vec![A])).is_err());
    }

    #[test]
    fn hand_computed_three_class() {
        // rows: truth, cols: predicted
        let cm = ConfusionMatrix {
            classes: vec![A, B, C],
            counts: vec![vec![5, 1, 0], vec![2, 3, 1], vec![0, 0, 4]],
        };
        let m = metrics_from_confusion(&cm).unwrap();
        let (pa, ra) = (5.0 / 7.0, 5.0 / 6.0);
        let (pb, rb) = (3.0 / 4.0, 3.0 / 6.0);
        let (pc, rc) = (4.0 / 5.0, 4.0 / 4.0);
        let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
        let macro_f1 = (f(pa, ra) + f(pb, rb) + f(pc, rc)) / 3.0;
        let weighted_f1 = (6.0 * f(pa, ra) + 6.0 * f(pb, rb) + 4.0 * f(pc, rc)) / 16.0;
        assert!((m.macro_avg.f1 - macro_f1).abs() < 1e-12);
        assert!((m.weighted_avg.f1 - weighted_f1).abs() < 1e-12);
        assert!((m.macro_avg.precision - (pa + pb + pc) / 3.0).abs() < 1e-12);
        assert!((m.weighted_avg.recall - 12.0 / 16.0).abs() < 1e-12);
        assert!((m.accuracy - 12.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn renderings() {
        let cm = ConfusionMatrix {
            classes: vec![A, B],
            counts: vec![vec![10, 2], vec![0, 7]],
        };
        assert_eq!(
            cm.render_csv(),
            "true\\predicted,OpenAI_Codex,Copilot\nOpenAI_Codex,10,2\nCopilot,0,7\n"
        );
        let text = cm.render_text();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.len() == text.lines().next().unwrap().len()));
    }

    fn matrix(values: Vec<Vec<f64>>, labels: Vec<AgentLabel>) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: (0..values[0].len()).map(|j| format!("f{j}")).collect(),
            rows: values
                .into_iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (values, label))| FeatureVector {
                    values,
                    label,
                    pr_id: i.to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn separable_corpus_scores_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let labels: Vec<AgentLabel> = (0..250).map(|i| AgentLabel::ALL[i % 5]).collect();
        let values = labels
            .iter()
            .map(|l| {
                let mut v: Vec<f64> = (0..6).map(|_| rng.gen()).collect();
                v[5] = l.index() as f64 * 10.0;
                v
            })
            .collect();
        let m = matrix(values, labels.clone());
        let plan = stratified_folds(&labels, 5, 42).unwrap();
        let learner = LearnerConfig::Gbm(GbmConfig {
            n_rounds: 20,
            ..Default::default()
        });
        let r = cross_validate(&m, &learner, &plan).unwrap();
        assert_eq!(r.metrics.weighted_avg.f1, 1.0);
        assert_eq!(r.confusion.total(), 250);
        assert_eq!(r.f1_spread, 0.0);

        let with_constant = matrix(
            m.rows.iter().map(|r| [r.values.clone(), vec![7.0]].concat()).collect(),
            labels.clone(),
        );
        let cmp = compare_feature_sets(&with_constant, &m, &learner, &plan).unwrap();
        assert_eq!(cmp.delta, 0.0);
        assert!(compare_feature_sets(&m, &m.subset_rows(&[0, 1]), &learner, &plan).is_err());
    }

    #[test]
    fn shuffled_labels_are_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels: Vec<AgentLabel> = (0..1000).map(|i| AgentLabel::ALL[i % 5]).collect();
        let values = (0..1000).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        let m = matrix(values, labels.clone());
        let plan = stratified_folds(&labels, 5, 42).unwrap();
        let learner = LearnerConfig::Gbm(GbmConfig {
            n_rounds: 20,
            ..Default::default()
        });
        let f1 = cross_validate(&m, &learner, &plan).unwrap().metrics.weighted_avg.f1;
        assert!((f1 - 0.2).abs() <= 0.05, "f1 = {f1}");
    }

    proptest! {
        #[test]
        fn stratification_holds(labels in proptest::collection::vec(0usize..5, 0..200), k in 2usize..8, seed: u64) {
            let labels: Vec<AgentLabel> = labels.into_iter().map(|i| AgentLabel::ALL[i]).collect();
            match stratified_folds(&labels, k, seed) {
                Ok(plan) => {
                    prop_assert_eq!(plan.assignments.len(), labels.len());
                    for counts in per_class_fold_counts(&plan, &labels).values() {
                        let (mx, mn) = (counts.iter().max().unwrap(), counts.iter().min().unwrap());
                        prop_assert!(mx - mn <= 1);
                    }
                }
                Err(_) => {
                    let mut counts: BTreeMap<AgentLabel, usize> = BTreeMap::new();
                    for &l in &labels {
                        *counts.entry(l).or_default() += 1;
                    }
                    prop_assert!(counts.values().any(|&c| c < k));
                }
            }
        }

        #[test]
        fn weighted_f1_two_routes_agree(counts in proptest::collection::vec(proptest::collection::vec(0u64..50, 3), 3)) {
            let cm = ConfusionMatrix { classes: vec![A, B, C], counts };
            prop_assume!(cm.total() > 0);
            let m = metrics_from_confusion(&cm).unwrap();
            // F1 = 2·tp / (row + col), weighted by row sums
            let direct: f64 = (0..3)
                .map(|i| {
                    let den = (cm.row_sum(i) + cm.col_sum(i)) as f64;
                    let f1 = if den == 0.0 { 0.0 } else { 2.0 * cm.counts[i][i] as f64 / den };
                    f1 * cm.row_sum(i) as f64
                })
                .sum::<f64>() / cm.total() as f64;
            prop_assert!((m.weighted_avg.f1 - direct).abs() < 1e-12);
        }

        #[test]
        fn metrics_follow_class_permutation(counts in proptest::collection::vec(proptest::collection::vec(1u64..50, 3), 3)) {
            let cm = ConfusionMatrix { classes: vec![A, B, C], counts: counts.clone() };
            let perm = [2usize, 0, 1];
            let permuted = ConfusionMatrix {
                classes: perm.iter().map(|&i| cm.classes[i]).collect(),
                counts: perm.iter().map(|&i| perm.iter().map(|&j| counts[i][j]).collect()).collect(),
            };
            let (a, b) = (metrics_from_confusion(&cm).unwrap(), metrics_from_confusion(&permuted).unwrap());
            for c in [A, B, C] {
                prop_assert_eq!(a.per_class[&c], b.per_class[&c]);
            }
            prop_assert!((a.weighted_avg.f1 - b.weighted_avg.f1).abs() < 1e-12);
        }
    }
}
