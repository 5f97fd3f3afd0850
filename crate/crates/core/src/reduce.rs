//! Two-step feature reduction: correlation clustering with average linkage,
//! then linear-regression redundancy. Also the events-per-variable check.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::AgentLabel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub correlation_threshold: f64,
    pub r2_threshold: f64,
    pub epv_minimum: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            correlation_threshold: 0.70,
            r2_threshold: 0.90,
            epv_minimum: 10.0,
        }
    }
}

impl ReductionConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.correlation_threshold) || !unit(self.r2_threshold) {
            return Err(Error::InvalidInput("reduction thresholds must lie in (0, 1]".into()));
        }
        if self.epv_minimum <= 0.0 || !self.epv_minimum.is_finite() {
            return Err(Error::InvalidInput("epv_minimum must be positive".into()));
        }
        Ok(())
    }
}

/// Symmetric correlation matrix in the matrix's column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Correlation {
    pub fn abs(&self, i: usize, j: usize) -> f64 {
        self.values[i][j].abs()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Pearson correlation of two equal-length columns; 0 when either is
/// constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

pub fn correlation_matrix(matrix: &FeatureMatrix) -> Result<Correlation> {
    if matrix.n_rows() < 2 {
        return Err(Error::InvalidInput("correlation needs at least 2 rows".into()));
    }
    let p = matrix.n_features();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| matrix.column(j)).collect();
    let upper: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| (i + 1..p).map(|j| pearson(&cols[i], &cols[j])).collect())
        .collect();
    let mut values = vec![vec![0.0; p]; p];
    for i in 0..p {
        values[i][i] = 1.0;
        for (k, &r) in upper[i].iter().enumerate() {
            let j = i + 1 + k;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(Correlation {
        names: matrix.feature_names.clone(),
        values,
    })
}

/// Agglomerative clustering on `d = 1 − |ρ|` with average linkage. Two
/// clusters merge while the mean |ρ| over all their cross pairs is at least
/// `threshold`; the closest pair merges first, ties going to the pair with
/// the lowest member indices. Clusters are returned as sorted index lists,
/// ordered by their first member.
pub fn cluster_features(corr: &Correlation, threshold: f64) -> Vec<Vec<usize>> {
    let p = corr.len();
    let mut clusters: Vec<Vec<usize>> = (0..p).map(|i| vec![i]).collect();
    // mean |ρ| between live clusters, updated with the size-weighted
    // Lance–Williams rule for average linkage
    let mut sim: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| corr.abs(i, j)).collect()).collect();
    let mut alive: Vec<bool> = vec![true; p];

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..p {
            if !alive[a] {
                continue;
            }
            for b in a + 1..p {
                if !alive[b] {
                    continue;
                }
                let s = sim[a][b];
                if best.is_none_or(|(_, _, bs)| s > bs) {
                    best = Some((a, b, s));
                }
            }
        }
        let Some((a, b, s)) = best else { break };
        if s < threshold {
            break;
        }
        let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
        for c in 0..p {
            if alive[c] && c != a && c != b {
                let merged = (na * sim[a][c] + nb * sim[b][c]) / (na + nb);
                sim[a][c] = merged;
                sim[c][a] = merged;
            }
        }
        let moved = std::mem::take(&mut clusters[b]);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
        alive[b] = false;
    }

    let mut out: Vec<Vec<usize>> = clusters
        .into_iter()
        .zip(alive)
        .filter(|(_, a)| *a)
        .map(|(c, _)| c)
        .collect();
    out.sort_by_key(|c| c[0]);
    out
}

/// Keeps, in each multi-member cluster, the member with the lowest mean |ρ|
/// to every feature outside the cluster (lowest index on ties).
pub fn select_representatives(clusters: &[Vec<usize>], corr: &Correlation) -> (Vec<usize>, Vec<usize>) {
    let p = corr.len();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for cluster in clusters {
        if cluster.len() == 1 {
            kept.push(cluster[0]);
            continue;
        }
        let outside: Vec<usize> = (0..p).filter(|j| !cluster.contains(j)).collect();
        let external = |i: usize| {
            if outside.is_empty() {
                0.0
            } else {
                outside.iter().map(|&j| corr.abs(i, j)).sum::<f64>() / outside.len() as f64
            }
        };
        let mut rep = cluster[0];
        let mut rep_score = external(rep);
        for &i in &cluster[1..] {
            let s = external(i);
            if s < rep_score {
                rep = i;
                rep_score = s;
            }
        }
        kept.push(rep);
        dropped.extend(cluster.iter().copied().filter(|&i| i != rep));
    }
    kept.sort_unstable();
    dropped.sort_unstable();
    (kept, dropped)
}

fn standardized_columns(matrix: &FeatureMatrix, cols: &[usize]) -> Vec<Option<Vec<f64>>> {
    let n = matrix.n_rows() as f64;
    cols.iter()
        .map(|&j| {
            let c = matrix.column(j);
            let m = c.iter().sum::<f64>() / n;
            let ss: f64 = c.iter().map(|x| (x - m) * (x - m)).sum();
            (ss > 0.0).then(|| {
                let sd = (ss / n).sqrt();
                c.iter().map(|x| (x - m) / sd).collect()
            })
        })
        .collect()
}

/// R² of predicting `target` from `predictors` with intercept (columns are
/// pre-centered, so the intercept is implicit). Constant targets score 0.
fn r_squared(target: &Option<Vec<f64>>, predictors: &[&Vec<f64>]) -> f64 {
    let Some(y) = target else { return 0.0 };
    let n = y.len();
    let k = predictors.len();
    if k == 0 {
        return 0.0;
    }
    let x = DMatrix::from_fn(n, k, |i, j| predictors[j][i]);
    let yv = DVector::from_column_slice(y);
    let mut xtx = x.transpose() * &x;
    for d in 0..k {
        xtx[(d, d)] += RIDGE;
    }
    let xty = x.transpose() * &yv;
    let beta = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => match xtx.lu().solve(&xty) {
            Some(b) => b,
            None => return 0.0,
        },
    };
    let resid = &yv - &x * beta;
    let sse = resid.norm_squared();
    let sst = yv.norm_squared();
    (1.0 - sse / sst).clamp(0.0, 1.0)
}

/// Greedy redundancy elimination among the columns `candidates` of
/// `matrix`: repeatedly fit every remaining feature on all others and drop
/// the one with the highest R² while it exceeds `threshold`.
///
/// Returns the R² of every candidate (at drop time for dropped ones, from
/// the final round for kept ones) and the dropped indices in drop order.
pub fn r2_redundancy(
    matrix: &FeatureMatrix,
    candidates: &[usize],
    threshold: f64,
) -> Result<(BTreeMap<usize, f64>, Vec<usize>)> {
    if matrix.n_rows() <= candidates.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "R² redundancy needs more rows ({}) than features + 1 ({})",
            matrix.n_rows(),
            candidates.len() + 1
        )));
    }
    let cols = standardized_columns(matrix, candidates);
    if !candidates.is_empty() && cols.iter().all(Option::is_none) {
        return Err(Error::InvalidInput("every feature is constant".into()));
    }
    let mut live: Vec<usize> = (0..candidates.len()).collect();
    let mut scores = BTreeMap::new();
    let mut dropped = Vec::new();
    loop {
        let round: Vec<f64> = live
            .par_iter()
            .map(|&t| {
                let preds: Vec<&Vec<f64>> = live
                    .iter()
                    .filter(|&&o| o != t)
                    .filter_map(|&o| cols[o].as_ref())
                    .collect();
                r_squared(&cols[t], &preds)
            })
            .collect();
        let worst = round
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, &r)| match acc {
                Some((_, br)) if br >= r => acc,
                _ => Some((i, r)),
            });
        match worst {
            Some((pos, r)) if r > threshold => {
                let t = live.remove(pos);
                scores.insert(candidates[t], r);
                dropped.push(candidates[t]);
            }
            _ => {
                for (&t, &r) in live.iter().zip(&round) {
                    scores.insert(candidates[t], r);
                }
                break;
            }
        }
    }
    Ok((scores, dropped))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpvEntry {
    pub samples: usize,
    pub epv: f64,
    pub below_minimum: bool,
}

pub fn epv_check(
    class_counts: &BTreeMap<AgentLabel, usize>,
    n_features: usize,
    epv_minimum: f64,
) -> Result<BTreeMap<AgentLabel, EpvEntry>> {
    if n_features == 0 {
        return Err(Error::InvalidInput("EPV needs at least one feature".into()));
    }
    Ok(class_counts
        .iter()
        .map(|(&label, &samples)| {
            let epv = samples as f64 / n_features as f64;
            (
                label,
                EpvEntry {
                    samples,
                    epv,
                    below_minimum: epv < epv_minimum,
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCluster {
    pub members: Vec<String>,
    pub representative: String,
    pub mean_abs_correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub config: ReductionConfig,
    /// Multi-member clusters only; every other feature is a singleton.
    pub clusters: Vec<FeatureCluster>,
    pub pair_clusters: usize,
    pub larger_clusters: usize,
    pub dropped_step1: Vec<String>,
    pub r2_scores: BTreeMap<String, f64>,
    pub max_r2_kept: f64,
    pub dropped_step2: Vec<String>,
    pub kept: Vec<String>,
    pub epv_table: BTreeMap<AgentLabel, EpvEntry>,
}

fn mean_pairwise(cluster: &[usize], corr: &Correlation) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, &i) in cluster.iter().enumerate() {
        for &j in &cluster[a + 1..] {
            sum += corr.abs(i, j);
            n += 1;
        }
    }
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

/// Runs both reduction steps and the EPV check on the kept set.
pub fn reduce(matrix: &FeatureMatrix, config: &ReductionConfig) -> Result<ReductionReport> {
    config.validate()?;
    let corr = correlation_matrix(matrix)?;
    let clusters = cluster_features(&corr, config.correlation_threshold);
    let (kept1, dropped1) = select_representatives(&clusters, &corr);
    let (r2, dropped2) = r2_redundancy(matrix, &kept1, config.r2_threshold)?;
    let kept: Vec<usize> = kept1.iter().copied().filter(|i| !dropped2.contains(i)).collect();

    let name = |i: usize| matrix.feature_names[i].clone();
    let multi: Vec<&Vec<usize>> = clusters.iter().filter(|c| c.len() > 1).collect();
    let report_clusters = multi
        .iter()
        .map(|c| FeatureCluster {
            members: c.iter().map(|&i| name(i)).collect(),
            representative: name(*c.iter().find(|i| kept1.contains(i)).expect("one member kept")),
            mean_abs_correlation: mean_pairwise(c, &corr),
        })
        .collect();
    let max_r2_kept = kept.iter().map(|i| r2[i]).fold(0.0, f64::max);
    Ok(ReductionReport {
        config: *config,
        clusters: report_clusters,
        pair_clusters: multi.iter().filter(|c| c.len() == 2).count(),
        larger_clusters: multi.iter().filter(|c| c.len() > 2).count(),
        dropped_step1: dropped1.iter().map(|&i| name(i)).collect(),
        r2_scores: r2.iter().map(|(&i, &r)| (name(i), r)).collect(),
        max_r2_kept,
        dropped_step2: dropped2.iter().map(|&i| name(i)).collect(),
        kept: kept.iter().map(|&i| name(i)).collect(),
        epv_table: epv_check(&matrix.class_counts(), kept.len().max(1), config.epv_minimum)?,
    })
}
