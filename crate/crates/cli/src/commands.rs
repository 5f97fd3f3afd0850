//! One function per subcommand. Each reads its upstream artifacts, delegates
//! to the library and writes `{stage}.json` plus any side files to `out`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use agentprint_core::artifact::{
    read_feature_list, read_model, sha256_hex, source_date, write_feature_list, write_text, ArtifactMeta, Envelope,
};
use agentprint_core::corpus::{load_corpus, load_unlabeled, IngestStats};
use agentprint_core::eval::{compare_feature_sets, cross_validate, stratified_folds};
use agentprint_core::features::{build_matrix, extract_values, feature_names, FeatureMatrix, FEATURE_REGISTRY};
use agentprint_core::fingerprint::build_fingerprints;
use agentprint_core::learn::TreeEnsembleModel;
use agentprint_core::textparse::profile_table;
use agentprint_core::{reduce as reduction, Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

fn input_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::read_csv(BufReader::new(f)).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        Error::Csv(c) => Error::Schema(format!("{}: {c}", path.display())),
        other => other,
    })
}

/// Reads a matrix and optionally restricts it to a feature list.
fn load_matrix(input: &Path, features: Option<&Path>) -> Result<(FeatureMatrix, Option<Vec<String>>)> {
    let m = read_matrix(input)?;
    match features {
        None => Ok((m, None)),
        Some(list) => {
            let names = read_feature_list(list)?;
            Ok((m.select(&names)?, Some(names)))
        }
    }
}

fn write_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut buf = Vec::new();
    m.write_csv(&mut buf)?;
    write_text(path, std::str::from_utf8(&buf).expect("csv is utf-8"))
}

fn write_stage<T: Serialize>(out: &Path, stage: &str, meta: ArtifactMeta, data: T) -> Result<PathBuf> {
    let path = out.join(format!("{stage}.json"));
    Envelope::new(stage, meta, data).write(&path)?;
    Ok(path)
}

#[derive(Serialize)]
struct ExtractSummary {
    input_sha256: String,
    ingest: IngestStats,
    rows: usize,
    columns: usize,
    class_counts: BTreeMap<String, usize>,
}

pub fn extract(input: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let (corpus, stats) = load_corpus(input, cfg.strict)?;
    let matrix = build_matrix(&corpus);
    let csv_path = out.join("features.csv");
    write_matrix(&csv_path, &matrix)?;
    let summary = ExtractSummary {
        input_sha256: input_hash(input)?,
        ingest: stats,
        rows: matrix.n_rows(),
        columns: matrix.n_features() + 2,
        class_counts: matrix
            .class_counts()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    };
    let meta = ArtifactMeta::new(cfg.seed, &json!({ "strict": cfg.strict }));
    let json_path = write_stage(out, "extract", meta, &summary)?;
    println!(
        "extracted {} PRs ({} incomplete, {} malformed skipped)",
        stats.loaded, stats.skipped_incomplete, stats.skipped_malformed
    );
    for (agent, n) in &summary.class_counts {
        println!("  {agent:<14} {n}");
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

pub fn reduce(input: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let matrix = read_matrix(input)?;
    let report = reduction::reduce(&matrix, &cfg.reduction)?;
    let reduced = matrix.select(&report.kept)?;
    let kept_path = out.join("kept_features.txt");
    let csv_path = out.join("reduced.csv");
    write_feature_list(&kept_path, &report.kept)?;
    write_matrix(&csv_path, &reduced)?;
    let meta = ArtifactMeta::new(cfg.seed, &cfg.reduction);
    let json_path = write_stage(out, "reduce", meta, &report)?;
    println!(
        "{} features -> {} after clustering ({} pair, {} larger clusters) -> {} after R² (max kept R² {:.3})",
        matrix.n_features(),
        matrix.n_features() - report.dropped_step1.len(),
        report.pair_clusters,
        report.larger_clusters,
        report.kept.len(),
        report.max_r2_kept
    );
    println!("dropped by clustering: {}", report.dropped_step1.join(", "));
    println!("dropped by R²: {}", report.dropped_step2.join(", "));
    for (agent, e) in &report.epv_table {
        let flag = if e.below_minimum { "  below minimum" } else { "" };
        println!(
            "  EPV {:<14} {:>6} samples  {:>8.1}{flag}",
            agent.as_str(),
            e.samples,
            e.epv
        );
    }
    println!(
        "wrote {}, {} and {}",
        json_path.display(),
        kept_path.display(),
        csv_path.display()
    );
    Ok(())
}

pub fn train(input: &Path, features: Option<&Path>, out: &Path, cfg: &RunConfig) -> Result<()> {
    let (matrix, names) = load_matrix(input, features)?;
    let learner = cfg.learner_config();
    let model = learner.train(&matrix)?;
    let meta = ArtifactMeta::new(cfg.seed, &json!({ "learner": learner, "features": names }));
    let path = write_stage(out, "train", meta, &model)?;
    println!(
        "trained {:?} on {} rows x {} features, {} classes",
        model.kind,
        matrix.n_rows(),
        matrix.n_features(),
        model.classes.len()
    );
    if let Some(oob) = model.oob_accuracy {
        println!("out-of-bag accuracy {oob:.4}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn evaluate(input: &Path, features: Option<&Path>, out: &Path, cfg: &RunConfig) -> Result<()> {
    let (matrix, names) = load_matrix(input, features)?;
    let learner = cfg.learner_config();
    let plan = stratified_folds(&matrix.labels(), cfg.folds, cfg.seed)?;
    let report = cross_validate(&matrix, &learner, &plan)?;
    let txt = out.join("evaluate.confusion.txt");
    let csv = out.join("evaluate.confusion.csv");
    write_text(&txt, &report.confusion.render_text())?;
    write_text(&csv, &report.confusion.render_csv())?;
    let meta = ArtifactMeta::new(
        cfg.seed,
        &json!({ "learner": learner, "folds": cfg.folds, "features": names }),
    );
    let path = write_stage(out, "evaluate", meta, &report)?;
    let m = &report.metrics;
    println!(
        "{}-fold CV on {} rows x {} features",
        cfg.folds,
        matrix.n_rows(),
        matrix.n_features()
    );
    println!(
        "  {:<14} {:>9} {:>9} {:>9} {:>8}",
        "agent", "precision", "recall", "f1", "support"
    );
    for (agent, c) in &m.per_class {
        println!(
            "  {:<14} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            agent.as_str(),
            c.precision,
            c.recall,
            c.f1,
            c.support
        );
    }
    for (name, a) in [("macro avg", &m.macro_avg), ("weighted avg", &m.weighted_avg)] {
        println!("  {:<14} {:>9.4} {:>9.4} {:>9.4}", name, a.precision, a.recall, a.f1);
    }
    println!(
        "  accuracy {:.4}, per-fold F1 spread {:.4}",
        m.accuracy, report.f1_spread
    );
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", report.confusion.render_text());
    println!("wrote {}, {} and {}", path.display(), txt.display(), csv.display());
    Ok(())
}

pub fn compare(full: &Path, reduced: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let full_m = read_matrix(full)?;
    let reduced_m = read_matrix(reduced)?;
    let learner = cfg.learner_config();
    let plan = stratified_folds(&full_m.labels(), cfg.folds, cfg.seed)?;
    let cmp = compare_feature_sets(&full_m, &reduced_m, &learner, &plan)?;
    let meta = ArtifactMeta::new(
        cfg.seed,
        &json!({ "learner": learner, "folds": cfg.folds, "compare": true }),
    );
    let path = write_stage(out, "evaluate", meta, &cmp)?;
    println!("weighted F1 with {} features: {:.4}", cmp.features_full, cmp.f1_full);
    println!(
        "weighted F1 with {} features: {:.4}",
        cmp.features_reduced, cmp.f1_reduced
    );
    println!("delta F1: {:+.4}", cmp.delta);
    println!("wrote {}", path.display());
    Ok(())
}

pub fn fingerprint(input: &Path, features: Option<&Path>, out: &Path, cfg: &RunConfig) -> Result<()> {
    let (matrix, names) = load_matrix(input, features)?;
    let gbm = cfg.gbm_config();
    let report = build_fingerprints(&matrix, &gbm, cfg.top_k, source_date())?;
    let csv = out.join("fingerprint.csv");
    write_text(&csv, &report.to_csv())?;
    let meta = ArtifactMeta::new(cfg.seed, &json!({ "gbm": gbm, "top_k": cfg.top_k, "features": names }));
    let path = write_stage(out, "fingerprint", meta, &report)?;
    println!("global ranking:");
    for (i, s) in report.global_ranking.iter().take(10).enumerate() {
        println!("  {:>2}. {:<28} {:>6.1}%", i + 1, s.feature, 100.0 * s.share);
    }
    for (agent, shifts) in &report.rank_shifts {
        println!("{agent} (one-vs-rest):");
        for (s, r) in report.per_agent[agent].top_features.iter().zip(shifts) {
            let global = r.global_rank.map_or("-".to_string(), |g| g.to_string());
            println!(
                "  {}. {:<28} {:>6.1}%  global rank {global}",
                r.ovr_rank,
                s.feature,
                100.0 * s.share
            );
        }
    }
    println!("wrote {} and {}", path.display(), csv.display());
    Ok(())
}

#[derive(Serialize)]
struct Contribution {
    feature: String,
    gain: f64,
}

#[derive(Serialize)]
struct Prediction {
    pr_id: String,
    predicted_agent: String,
    probabilities: BTreeMap<String, f64>,
    top_contributing_features: Vec<Contribution>,
}

fn predict_row(model: &TreeEnsembleModel, pr_id: String, x: &[f64], top_k: usize) -> Result<Prediction> {
    let probs = model.predict(x)?;
    let best = model.predict_index(x)?;
    let labels: Vec<String> = model
        .output_labels()
        .into_iter()
        .map(|l| l.map_or_else(|| "rest".to_string(), |a| a.to_string()))
        .collect();
    let gains = model.path_gains(x, best)?;
    let mut order: Vec<usize> = (0..gains.len()).filter(|&j| gains[j] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    order.truncate(top_k);
    Ok(Prediction {
        pr_id,
        predicted_agent: labels[best].clone(),
        probabilities: labels.iter().cloned().zip(probs).collect(),
        top_contributing_features: order
            .into_iter()
            .map(|j| Contribution {
                feature: model.feature_names[j].clone(),
                gain: gains[j],
            })
            .collect(),
    })
}

/// Rows for `model` from a feature CSV (whose feature columns must be
/// exactly the model's) or from an unlabeled NDJSON corpus.
fn prediction_rows(model: &TreeEnsembleModel, input: &Path, strict: bool) -> Result<Vec<(String, Vec<f64>)>> {
    let is_csv = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let matrix = if is_csv {
        let m = read_matrix(input)?;
        let mut have = m.feature_names.clone();
        let mut want = model.feature_names.clone();
        have.sort();
        want.sort();
        if have != want {
            return Err(Error::RegistryMismatch(format!(
                "{} has {} feature columns, model expects {}",
                input.display(),
                m.n_features(),
                model.feature_names.len()
            )));
        }
        m
    } else {
        let (prs, stats) = load_unlabeled(input, strict)?;
        if stats.skipped_incomplete + stats.skipped_malformed > 0 {
            eprintln!(
                "skipped {} incomplete and {} malformed records",
                stats.skipped_incomplete, stats.skipped_malformed
            );
        }
        let rows: Vec<(String, Vec<f64>)> = prs.iter().map(|pr| (pr.id.clone(), extract_values(pr))).collect();
        let full = feature_names();
        let idx: Vec<usize> = model
            .feature_names
            .iter()
            .map(|f| {
                full.iter()
                    .position(|n| n == f)
                    .ok_or_else(|| Error::RegistryMismatch(format!("model feature `{f}` is not in the registry")))
            })
            .collect::<Result<_>>()?;
        return Ok(rows
            .into_iter()
            .map(|(id, v)| (id, idx.iter().map(|&j| v[j]).collect()))
            .collect());
    };
    let m = matrix.select(&model.feature_names)?;
    Ok(m.rows.into_iter().map(|r| (r.pr_id, r.values)).collect())
}

pub fn predict(model_path: &Path, input: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let model = read_model(model_path)?.data;
    let rows = prediction_rows(&model, input, cfg.strict)?;
    let predictions = rows
        .into_iter()
        .map(|(id, x)| predict_row(&model, id, &x, cfg.top_k))
        .collect::<Result<Vec<_>>>()?;
    let meta = ArtifactMeta::new(
        cfg.seed,
        &json!({ "model_sha256": input_hash(model_path)?, "top_k": cfg.top_k }),
    );
    for p in &predictions {
        let top: Vec<&str> = p.top_contributing_features.iter().map(|c| c.feature.as_str()).collect();
        println!(
            "{}\t{}\t{:.3}\t{}",
            p.pr_id,
            p.predicted_agent,
            p.probabilities[&p.predicted_agent],
            top.join(",")
        );
    }
    let path = write_stage(out, "predict", meta, &predictions)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Writes to stdout, treating a closed pipe (`| head`) as success.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

pub fn dump_features() -> Result<()> {
    emit(&serde_json::to_string_pretty(FEATURE_REGISTRY)?)
}

pub fn dump_profiles() -> Result<()> {
    emit(&serde_json::to_string_pretty(&profile_table())?)
}
