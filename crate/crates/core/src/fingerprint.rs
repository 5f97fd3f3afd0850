//! Global and per-agent importance fingerprints.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::sha256_hex;
use crate::corpus::AgentLabel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::learn::{train_gbm, train_one_vs_rest, FeatureShare, GbmConfig, TreeEnsembleModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFingerprint {
    pub agent: AgentLabel,
    pub top_features: Vec<FeatureShare>,
    /// SHA-256 of the one-vs-rest model's JSON.
    pub model_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankShift {
    pub feature: String,
    /// 1-based rank in the multi-class importance list; `None` when the
    /// feature never split there.
    pub global_rank: Option<usize>,
    pub ovr_rank: usize,
    /// `global_rank − ovr_rank`; large values flag signals the multi-class
    /// model buries.
    pub shift: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub rows: usize,
    pub features: usize,
    pub class_counts: BTreeMap<AgentLabel, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintReport {
    pub top_k: usize,
    pub global_ranking: Vec<FeatureShare>,
    pub global_model_ref: String,
    pub per_agent: BTreeMap<AgentLabel, AgentFingerprint>,
    pub rank_shifts: BTreeMap<AgentLabel, Vec<RankShift>>,
    pub generated_at: Option<String>,
    pub corpus: CorpusSummary,
}

pub fn model_hash(model: &TreeEnsembleModel) -> String {
    sha256_hex(model.to_json().as_bytes())
}

pub fn fingerprint_from_model(agent: AgentLabel, model: &TreeEnsembleModel, top_k: usize) -> Result<AgentFingerprint> {
    Ok(AgentFingerprint {
        agent,
        top_features: model.importance(Some(top_k))?,
        model_ref: model_hash(model),
    })
}

pub fn rank_shift(global: &[FeatureShare], fingerprint: &AgentFingerprint) -> Vec<RankShift> {
    fingerprint
        .top_features
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let global_rank = global.iter().position(|g| g.feature == s.feature).map(|p| p + 1);
            RankShift {
                feature: s.feature.clone(),
                global_rank,
                ovr_rank: i + 1,
                shift: global_rank.map(|g| g as i64 - (i as i64 + 1)),
            }
        })
        .collect()
}

/// Trains one multi-class booster for the global ranking and one
/// one-vs-rest booster per class present.
pub fn build_fingerprints(
    matrix: &FeatureMatrix,
    config: &GbmConfig,
    top_k: usize,
    generated_at: Option<String>,
) -> Result<FingerprintReport> {
    let global_model = train_gbm(matrix, config)?;
    let global_ranking = global_model.importance(None)?;
    let classes = matrix.classes();
    let fingerprints: Vec<AgentFingerprint> = classes
        .par_iter()
        .map(|&agent| {
            let wrap = |e: Error| Error::Agent {
                agent: agent.to_string(),
                source: Box::new(e),
            };
            let model = train_one_vs_rest(matrix, agent, config).map_err(wrap)?;
            fingerprint_from_model(agent, &model, top_k).map_err(wrap)
        })
        .collect::<Result<_>>()?;
    let rank_shifts = fingerprints
        .iter()
        .map(|fp| (fp.agent, rank_shift(&global_ranking, fp)))
        .collect();
    Ok(FingerprintReport {
        top_k,
        global_model_ref: model_hash(&global_model),
        global_ranking,
        per_agent: fingerprints.into_iter().map(|fp| (fp.agent, fp)).collect(),
        rank_shifts,
        generated_at,
        corpus: CorpusSummary {
            rows: matrix.n_rows(),
            features: matrix.n_features(),
            class_counts: matrix.class_counts(),
        },
    })
}

impl FingerprintReport {
    /// `agent,rank,feature,share` rows; the global ranking uses agent
    /// `global`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent,rank,feature,share\n");
        for (i, s) in self.global_ranking.iter().enumerate() {
            writeln!(out, "global,{},{},{}", i + 1, s.feature, s.share).unwrap();
        }
        for fp in self.per_agent.values() {
            for (i, s) in fp.top_features.iter().enumerate() {
                writeln!(out, "{},{},{},{}", fp.agent, i + 1, s.feature, s.share).unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn share(f: &str, s: f64) -> FeatureShare {
        FeatureShare {
            feature: f.into(),
            share: s,
        }
    }

    #[test]
    fn identical_rankings_have_no_shift() {
        let global = vec![share("a", 0.5), share("b", 0.3), share("c", 0.2)];
        let fp = AgentFingerprint {
            agent: AgentLabel::Devin,
            top_features: global.clone(),
            model_ref: String::new(),
        };
        assert!(rank_shift(&global, &fp).iter().all(|r| r.shift == Some(0)));
    }

    #[test]
    fn buried_feature_surfaces() {
        let global: Vec<FeatureShare> = (0..12).map(|i| share(&format!("g{i}"), 1.0 / 12.0)).collect();
        let fp = AgentFingerprint {
            agent: AgentLabel::ClaudeCode,
            top_features: vec![share("g11", 0.6), share("missing", 0.4)],
            model_ref: String::new(),
        };
        let shifts = rank_shift(&global, &fp);
        assert_eq!(shifts[0].global_rank, Some(12));
        assert_eq!(shifts[0].shift, Some(11));
        assert_eq!(shifts[1].global_rank, None);
        assert_eq!(shifts[1].shift, None);
    }

    #[test]
    fn identifying_features_top_each_agent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = 8;
        let rows = (0..400)
            .map(|i| {
                let label = AgentLabel::ALL[i % 5];
                let mut values: Vec<f64> = (0..p).map(|_| rng.gen::<f64>()).collect();
                for (a, v) in values.iter_mut().take(5).enumerate() {
                    *v = if a == label.index() {
                        1.0 + rng.gen::<f64>()
                    } else {
                        rng.gen::<f64>() * 0.5
                    };
                }
                FeatureVector {
                    values,
                    label,
                    pr_id: i.to_string(),
                }
            })
            .collect();
        let m = FeatureMatrix {
            feature_names: (0..p).map(|j| format!("f{j}")).collect(),
            rows,
        };
        let cfg = GbmConfig {
            n_rounds: 30,
            ..Default::default()
        };
        let report = build_fingerprints(&m, &cfg, 3, None).unwrap();
        for (agent, fp) in &report.per_agent {
            assert_eq!(fp.top_features[0].feature, format!("f{}", agent.index()));
            assert!(fp.top_features.windows(2).all(|w| w[0].share >= w[1].share));
            assert!(fp.top_features.len() <= 3);
        }
        let again = build_fingerprints(&m, &cfg, 3, None).unwrap();
        assert_eq!(
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
        let csv = report.to_csv();
        assert!(csv.starts_with("agent,rank,feature,share\nglobal,1,"));
    }
}
