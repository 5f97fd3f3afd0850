//! The 53-feature behavioral vector and the labeled feature matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{DateTime, Datelike, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AgentLabel, CommitRecord, FileChangeRecord, FileOperation, PullRequest, PullRequestRecord};
use crate::error::{Error, Result};
use crate::stats;
use crate::textparse::{self, LineTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureCategory {
    Commit,
    PRStructure,
    CodeChanges,
    PatchLevel,
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureUnit {
    Count,
    Ratio,
    Chars,
    Words,
    Nats,
    Gini,
    Depth,
    Hour,
    Day,
    Flag,
    Columns,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureDef {
    pub name: &'static str,
    pub category: FeatureCategory,
    pub description: &'static str,
    pub unit: FeatureUnit,
}

macro_rules! registry {
    ($( $cat:ident { $( $name:literal, $unit:ident, $desc:literal; )* } )*) => {
        pub static FEATURE_REGISTRY: &[FeatureDef] = &[
            $( $( FeatureDef {
                name: $name,
                category: FeatureCategory::$cat,
                description: $desc,
                unit: FeatureUnit::$unit,
            }, )* )*
        ];
    };
}

registry! {
    Commit {
        "commit_count", Count, "Number of commits in the PR";
        "conventional_commit_ratio", Ratio, "Share of commits whose first line is a conventional-commit header (types: feat fix docs style refactor perf test build ci chore revert; optional (scope), optional !, then ': ' and a description)";
        "msg_len_avg", Chars, "Mean commit message length in Unicode scalar values";
        "msg_len_min", Chars, "Shortest commit message length";
        "msg_len_max", Chars, "Longest commit message length";
        "msg_len_std", Chars, "Population standard deviation of commit message length";
        "multiline_commit_ratio", Ratio, "Share of commits with more than one non-blank line";
        "capitalization_ratio", Ratio, "Share of commits whose first character is an uppercase letter";
        "msg_word_count_avg", Words, "Mean whitespace-delimited word count per commit message (ninth commit feature; a placeholder since only eight are named for this category)";
    }
    PRStructure {
        "title_length", Chars, "PR title length";
        "title_word_count", Words, "PR title word count";
        "body_length", Chars, "PR body length, trailing line breaks excluded";
        "body_word_count", Words, "PR body word count";
        "checklist_count", Count, "Markdown task-list items (- [ ] / - [x]) outside code fences";
        "code_block_count", Count, "Fenced code blocks (pairs of ``` lines)";
        "link_count", Count, "Inline markdown links plus bare http(s) URLs outside code fences";
        "bullet_count", Count, "Non-checklist bullet lines (-, *, + followed by a space) outside code fences";
        "title_is_conventional", Flag, "1 when the title is a conventional-commit header";
    }
    CodeChanges {
        "files_changed", Count, "Number of changed files";
        "distinct_extension_count", Count, "Distinct file extensions (files without one share a bucket)";
        "extension_entropy", Nats, "Shannon entropy (natural log) of the extension distribution";
        "test_file_ratio", Ratio, "Share of files classified as tests";
        "config_file_ratio", Ratio, "Share of files classified as configuration";
        "doc_file_ratio", Ratio, "Share of files classified as documentation";
        "avg_dir_depth", Depth, "Mean directory depth (number of '/' separators)";
        "max_dir_depth", Depth, "Maximum directory depth";
        "added_file_ratio", Ratio, "Share of files added";
        "modified_file_ratio", Ratio, "Share of files modified";
        "removed_file_ratio", Ratio, "Share of files removed";
        "renamed_file_ratio", Ratio, "Share of files renamed";
        "total_additions", Count, "Sum of added lines reported per file";
        "total_deletions", Count, "Sum of deleted lines reported per file";
        "addition_deletion_ratio", Ratio, "additions / (additions + deletions), 0 when both are 0";
        "change_gini", Gini, "Gini coefficient of per-file changed lines (additions + deletions)";
    }
    PatchLevel {
        "added_line_count", Count, "Added lines across all patches";
        "removed_line_count", Count, "Removed lines across all patches";
        "added_line_len_avg", Chars, "Mean added-line length";
        "added_line_len_max", Chars, "Longest added line";
        "added_line_len_std", Chars, "Population standard deviation of added-line length";
        "trailing_whitespace_ratio", Ratio, "Share of added lines ending in a space or tab";
        "tab_indent_ratio", Ratio, "Tab-indented lines among indented added lines";
        "avg_indent_width", Chars, "Mean leading-space count among space-indented added lines";
        "comment_density", Ratio, "Comment lines per added line";
        "import_density", Ratio, "Import lines per added line";
        "function_decl_count", Count, "Added lines declaring a function";
        "type_decl_count", Count, "Added lines declaring a class or type";
        "conditional_count", Count, "Added lines starting a conditional";
        "loop_count", Count, "Added lines starting a loop";
        "blank_line_ratio", Ratio, "Blank added lines per added line";
    }
    Temporal {
        "hour_of_day", Hour, "UTC hour of PR creation";
        "is_weekend", Flag, "1 on Saturday or Sunday (UTC)";
        "is_business_hours", Flag, "1 on weekdays between 09:00 and 16:59 UTC";
        "day_of_week", Day, "UTC day of week, Monday = 0";
    }
}

pub const FEATURE_COUNT: usize = 53;

pub fn feature_names() -> Vec<String> {
    FEATURE_REGISTRY.iter().map(|d| d.name.to_string()).collect()
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_REGISTRY.iter().position(|d| d.name == name)
}

pub fn extract_commit_features(commits: &[CommitRecord]) -> [f64; 9] {
    let shapes: Vec<_> = commits
        .iter()
        .map(|c| textparse::parse_commit_message(&c.message))
        .collect();
    let lengths: Vec<f64> = shapes.iter().map(|s| s.total_length as f64).collect();
    let words: Vec<f64> = commits
        .iter()
        .map(|c| c.message.split_whitespace().count() as f64)
        .collect();
    let n = commits.len();
    let share = |pred: &dyn Fn(&textparse::CommitMessageShape) -> bool| {
        stats::ratio(shapes.iter().filter(|s| pred(s)).count() as f64, n as f64)
    };
    [
        n as f64,
        share(&|s| s.is_conventional),
        stats::mean(&lengths),
        stats::min(&lengths),
        stats::max(&lengths),
        stats::pop_std(&lengths),
        share(&|s| s.is_multiline),
        share(&|s| s.first_char_capitalized),
        stats::mean(&words),
    ]
}

pub fn extract_structure_features(title: &str, body: &str) -> [f64; 9] {
    let b = textparse::parse_body(body);
    [
        title.chars().count() as f64,
        title.split_whitespace().count() as f64,
        b.length_chars as f64,
        b.word_count as f64,
        b.checklist_items as f64,
        b.fenced_code_blocks as f64,
        b.links as f64,
        b.bullet_lines as f64,
        if textparse::is_conventional_header(title.lines().next().unwrap_or("")) {
            1.0
        } else {
            0.0
        },
    ]
}

/// Lowercased extension of the last path component; empty when there is
/// none. Dotfiles such as `.gitignore` have no extension.
pub fn file_extension(path: &str) -> String {
    let name = path.rsplit('/').next().unwrap_or(path);
    match name.rfind('.') {
        Some(0) | None => String::new(),
        Some(i) => name[i + 1..].to_ascii_lowercase(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Test,
    Doc,
    Config,
    Source,
}

const CONFIG_EXTENSIONS: [&str; 7] = ["json", "yaml", "yml", "toml", "ini", "cfg", "conf"];
const DOC_EXTENSIONS: [&str; 4] = ["md", "rst", "txt", "adoc"];

/// Test beats doc beats config; every file gets exactly one kind.
pub fn classify_file(path: &str) -> FileKind {
    let components: Vec<String> = path.split('/').map(str::to_ascii_lowercase).collect();
    let (dirs, file) = components.split_at(components.len().saturating_sub(1));
    let file = file.first().map(String::as_str).unwrap_or("");
    let ext = file_extension(path);
    let stem = match file.rfind('.') {
        Some(i) if i > 0 => &file[..i],
        _ => file,
    };
    let is_test = dirs.iter().any(|d| matches!(d.as_str(), "test" | "tests" | "spec"))
        || file.starts_with("test_")
        || stem.ends_with("_test")
        || file.contains(".spec.");
    if is_test {
        return FileKind::Test;
    }
    if DOC_EXTENSIONS.contains(&ext.as_str()) || dirs.iter().any(|d| d == "docs") {
        return FileKind::Doc;
    }
    if CONFIG_EXTENSIONS.contains(&ext.as_str()) || file.starts_with('.') {
        return FileKind::Config;
    }
    FileKind::Source
}

pub fn extract_change_features(files: &[FileChangeRecord]) -> [f64; 16] {
    let n = files.len() as f64;
    let mut ext_counts: BTreeMap<String, usize> = BTreeMap::new();
    for f in files {
        *ext_counts.entry(file_extension(&f.path)).or_default() += 1;
    }
    let ext_freqs: Vec<f64> = ext_counts.values().map(|&c| c as f64).collect();
    let kind_share = |k: FileKind| stats::ratio(files.iter().filter(|f| classify_file(&f.path) == k).count() as f64, n);
    let op_share = |op: FileOperation| stats::ratio(files.iter().filter(|f| f.operation == op).count() as f64, n);
    let depths: Vec<f64> = files
        .iter()
        .map(|f| f.path.trim_matches('/').matches('/').count() as f64)
        .collect();
    let additions: f64 = files.iter().map(|f| f.additions as f64).sum();
    let deletions: f64 = files.iter().map(|f| f.deletions as f64).sum();
    let per_file: Vec<f64> = files.iter().map(|f| (f.additions + f.deletions) as f64).collect();
    [
        n,
        ext_counts.len() as f64,
        stats::shannon_entropy(&ext_freqs),
        kind_share(FileKind::Test),
        kind_share(FileKind::Config),
        kind_share(FileKind::Doc),
        stats::mean(&depths),
        stats::max(&depths),
        op_share(FileOperation::Added),
        op_share(FileOperation::Modified),
        op_share(FileOperation::Removed),
        op_share(FileOperation::Renamed),
        additions,
        deletions,
        stats::ratio(additions, additions + deletions),
        stats::gini(&per_file),
    ]
}

pub fn extract_patch_features(files: &[FileChangeRecord]) -> [f64; 15] {
    let mut added: Vec<(String, String)> = Vec::new();
    let mut removed = 0usize;
    for f in files {
        if let Some(patch) = &f.patch {
            let shape = textparse::parse_patch(patch);
            removed += shape.removed_lines.len();
            let ext = file_extension(&f.path);
            added.extend(shape.added_lines.into_iter().map(|l| (l, ext.clone())));
        }
    }
    let n = added.len() as f64;
    let lengths: Vec<f64> = added.iter().map(|(l, _)| l.chars().count() as f64).collect();
    let trailing = added.iter().filter(|(l, _)| l.ends_with([' ', '\t'])).count() as f64;
    let tab_indented = added.iter().filter(|(l, _)| l.starts_with('\t')).count() as f64;
    let space_indents: Vec<f64> = added
        .iter()
        .filter(|(l, _)| l.starts_with(' '))
        .map(|(l, _)| l.chars().take_while(|&c| c == ' ').count() as f64)
        .collect();
    let indented = tab_indented + space_indents.len() as f64;

    let mut tag_counts = [0usize; 8];
    for (line, ext) in &added {
        for tag in textparse::classify_code_line(line, ext).iter() {
            tag_counts[tag as usize] += 1;
        }
    }
    let count = |t: LineTag| tag_counts[t as usize] as f64;
    [
        n,
        removed as f64,
        stats::mean(&lengths),
        stats::max(&lengths),
        stats::pop_std(&lengths),
        stats::ratio(trailing, n),
        stats::ratio(tab_indented, indented),
        stats::mean(&space_indents),
        stats::ratio(count(LineTag::Comment), n),
        stats::ratio(count(LineTag::Import), n),
        count(LineTag::FunctionDecl),
        count(LineTag::TypeDecl),
        count(LineTag::Conditional),
        count(LineTag::Loop),
        stats::ratio(count(LineTag::Blank), n),
    ]
}

pub fn extract_temporal_features(created_at: &DateTime<Utc>) -> [f64; 4] {
    let hour = created_at.hour();
    let dow = created_at.weekday().num_days_from_monday();
    let weekend = dow >= 5;
    let business = !weekend && (9..17).contains(&hour);
    [hour as f64, weekend as u8 as f64, business as u8 as f64, dow as f64]
}

/// All 53 features of one PR in registry order.
pub fn extract_values(pr: &PullRequest) -> Vec<f64> {
    let mut v = Vec::with_capacity(FEATURE_COUNT);
    v.extend(extract_commit_features(&pr.commits));
    v.extend(extract_structure_features(&pr.title, &pr.body));
    v.extend(extract_change_features(&pr.file_changes));
    v.extend(extract_patch_features(&pr.file_changes));
    v.extend(extract_temporal_features(&pr.created_at));
    debug_assert_eq!(v.len(), FEATURE_COUNT);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: AgentLabel,
    pub pr_id: String,
}

/// Rows of feature values aligned to `feature_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureVector>,
}

pub fn build_matrix(corpus: &[PullRequestRecord]) -> FeatureMatrix {
    let rows = corpus
        .par_iter()
        .map(|r| FeatureVector {
            values: extract_values(&r.pr),
            label: r.agent_label,
            pr_id: r.pr.id.clone(),
        })
        .collect();
    FeatureMatrix {
        feature_names: feature_names(),
        rows,
    }
}

/// `%.{digits}g`-style formatting: `digits` significant digits, trailing
/// zeros dropped, exponent form outside [1e-5, 1e{digits}).
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = strip_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[j]).collect()
    }

    pub fn labels(&self) -> Vec<AgentLabel> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Labels present, in registry order.
    pub fn classes(&self) -> Vec<AgentLabel> {
        let present: BTreeSet<AgentLabel> = self.rows.iter().map(|r| r.label).collect();
        present.into_iter().collect()
    }

    pub fn class_counts(&self) -> BTreeMap<AgentLabel, usize> {
        let mut m = BTreeMap::new();
        for r in &self.rows {
            *m.entry(r.label).or_default() += 1;
        }
        m
    }

    /// Restricts to the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::RegistryMismatch(format!("feature `{n}` not in matrix")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureMatrix {
            feature_names: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureVector {
                    values: idx.iter().map(|&j| r.values[j]).collect(),
                    label: r.label,
                    pr_id: r.pr_id.clone(),
                })
                .collect(),
        })
    }

    pub fn subset_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// CSV with the feature columns, then `label` and `pr_id`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.extend(["label", "pr_id"]);
        out.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.values.iter().map(|&v| format_significant(v, 12)).collect();
            rec.push(row.label.as_str().to_string());
            rec.push(row.pr_id.clone());
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<FeatureMatrix> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rdr.headers()?.clone();
        let n = header.len();
        if n < 2 || &header[n - 2] != "label" || &header[n - 1] != "pr_id" {
            return Err(Error::Schema("feature CSV must end with `label,pr_id` columns".into()));
        }
        let feature_names: Vec<String> = header.iter().take(n - 2).map(str::to_string).collect();
        let unique: BTreeSet<&String> = feature_names.iter().collect();
        if unique.len() != feature_names.len() {
            return Err(Error::Schema("duplicate feature column".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let values = (0..n - 2)
                .map(|j| {
                    rec[j]
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Schema(format!("row {}: bad number `{}`", i + 2, &rec[j])))
                })
                .collect::<Result<Vec<_>>>()?;
            let label = rec[n - 2]
                .parse()
                .map_err(|_| Error::Schema(format!("row {}: unknown label `{}`", i + 2, &rec[n - 2])))?;
            rows.push(FeatureVector {
                values,
                label,
                pr_id: rec[n - 1].to_string(),
            });
        }
        Ok(FeatureMatrix { feature_names, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn commit(m: &str) -> CommitRecord {
        CommitRecord {
            message: m.into(),
            author_name: String::new(),
        }
    }

    fn file(path: &str, op: FileOperation, add: u64, del: u64, patch: Option<&str>) -> FileChangeRecord {
        FileChangeRecord {
            path: path.into(),
            operation: op,
            additions: add,
            deletions: del,
            patch: patch.map(Into::into),
        }
    }

    fn idx(name: &str) -> usize {
        feature_index(name).unwrap()
    }

    #[test]
    fn registry_shape() {
        assert_eq!(FEATURE_REGISTRY.len(), FEATURE_COUNT);
        let mut by_cat = BTreeMap::new();
        for d in FEATURE_REGISTRY {
            *by_cat.entry(d.category).or_insert(0) += 1;
        }
        assert_eq!(by_cat.values().copied().collect::<Vec<_>>(), vec![9, 9, 16, 15, 4]);
        let names: BTreeSet<_> = FEATURE_REGISTRY.iter().map(|d| d.name).collect();
        assert_eq!(names.len(), FEATURE_COUNT);
    }

    #[test]
    fn commit_block() {
        let v = extract_commit_features(&[commit("feat: a")]);
        assert_eq!((v[0], v[1], v[6]), (1.0, 1.0, 0.0));
        let v = extract_commit_features(&[commit("a\n\nb"), commit("c")]);
        assert_eq!(v[6], 0.5);
        let v = extract_commit_features(&[commit("Fix"), commit("fix: x")]);
        assert_eq!((v[7], v[1]), (0.5, 0.5));
        // lengths 3 and 6
        assert_eq!((v[2], v[3], v[4], v[5]), (4.5, 3.0, 6.0, 1.5));
    }

    #[test]
    fn structure_block() {
        let v = extract_structure_features("fix: typo", "");
        assert_eq!((v[8], v[2]), (1.0, 0.0));
        let v = extract_structure_features("t", "- a\n- b\n- c\n[x](http://y)");
        assert_eq!((v[7], v[6]), (3.0, 1.0));
        let v = extract_structure_features("t", "word word");
        assert_eq!((v[3], v[2]), (2.0, 9.0));
    }

    #[test]
    fn change_block() {
        let four: Vec<_> = (0..4)
            .map(|i| file(&format!("f{i}.py"), FileOperation::Modified, 5, 5, None))
            .collect();
        let v = extract_change_features(&four);
        assert_eq!(v[15], 0.0);
        assert_eq!(v[2], 0.0);
        let lopsided = vec![
            file("a.py", FileOperation::Added, 100, 0, None),
            file("b.py", FileOperation::Modified, 0, 0, None),
            file("c.py", FileOperation::Modified, 0, 0, None),
            file("d.py", FileOperation::Modified, 0, 0, None),
        ];
        let v = extract_change_features(&lopsided);
        assert_eq!(v[15], 0.75);
        assert_eq!(v[8], 0.25);
        assert_eq!(v[14], 1.0);
        let v = extract_change_features(&[
            file("src/a.py", FileOperation::Modified, 1, 0, None),
            file("tests/test_a.py", FileOperation::Modified, 1, 0, None),
        ]);
        assert_eq!(v[3], 0.5);
        assert_eq!(v[6], 1.0);
        assert_eq!(extract_change_features(&[]), [0.0; 16]);
    }

    #[test]
    fn file_kinds() {
        assert_eq!(classify_file("tests/test_a.py"), FileKind::Test);
        assert_eq!(classify_file("pkg/foo_test.go"), FileKind::Test);
        assert_eq!(classify_file("web/app.spec.ts"), FileKind::Test);
        assert_eq!(classify_file("docs/test_plan.md"), FileKind::Test);
        assert_eq!(classify_file("docs/conf.py"), FileKind::Doc);
        assert_eq!(classify_file("README.md"), FileKind::Doc);
        assert_eq!(classify_file("Cargo.toml"), FileKind::Config);
        assert_eq!(classify_file(".gitignore"), FileKind::Config);
        assert_eq!(classify_file("src/main.rs"), FileKind::Source);
        assert_eq!(classify_file("src/contest.rs"), FileKind::Source);
    }

    #[test]
    fn extensions() {
        assert_eq!(file_extension("a/b/c.TAR.GZ"), "gz");
        assert_eq!(file_extension(".env"), "");
        assert_eq!(file_extension("Makefile"), "");
        assert_eq!(file_extension("x.d/Makefile"), "");
    }

    #[test]
    fn patch_block() {
        assert_eq!(
            extract_patch_features(&[file("a.py", FileOperation::Modified, 1, 1, None)]),
            [0.0; 15]
        );
        let v = extract_patch_features(&[file(
            "a.py",
            FileOperation::Modified,
            2,
            0,
            Some("@@ -0,0 +1,2 @@\n+# a\n+x = 1"),
        )]);
        assert_eq!(v[idx("comment_density") - 34], 0.5);
        let v = extract_patch_features(&[file(
            "a.py",
            FileOperation::Modified,
            3,
            0,
            Some("+if a:\n+  b()\n+for i in r:"),
        )]);
        assert_eq!(v[idx("conditional_count") - 34], 1.0);
        assert_eq!(v[idx("loop_count") - 34], 1.0);
        assert_eq!(v[idx("avg_indent_width") - 34], 2.0);
        assert_eq!(v[idx("tab_indent_ratio") - 34], 0.0);
    }

    #[test]
    fn temporal_block() {
        let sat = Utc.with_ymd_and_hms(2025, 1, 4, 10, 0, 0).unwrap();
        let v = extract_temporal_features(&sat);
        assert_eq!((v[1], v[2]), (1.0, 0.0));
        let mon = Utc.with_ymd_and_hms(2025, 1, 6, 10, 0, 0).unwrap();
        let v = extract_temporal_features(&mon);
        assert_eq!((v[2], v[3]), (1.0, 0.0));
        let midnight = Utc.with_ymd_and_hms(2025, 1, 6, 0, 0, 0).unwrap();
        assert_eq!(extract_temporal_features(&midnight)[0], 0.0);
        let five_pm = Utc.with_ymd_and_hms(2025, 1, 6, 17, 0, 0).unwrap();
        assert_eq!(extract_temporal_features(&five_pm)[2], 0.0);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.0, 12), "0");
        assert_eq!(format_significant(1.0, 12), "1");
        assert_eq!(format_significant(0.5, 12), "0.5");
        assert_eq!(format_significant(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_significant(2.0 / 3.0 * 100.0, 12), "66.6666666667");
        assert_eq!(format_significant(1234567.0, 12), "1234567");
        assert_eq!(format_significant(1e15, 12), "1e+15");
        assert_eq!(format_significant(1.5e-7, 12), "1.5e-07");
        assert_eq!(format_significant(-0.25, 12), "-0.25");
    }

    #[test]
    fn csv_round_trip() {
        let m = FeatureMatrix {
            feature_names: vec!["a".into(), "b".into()],
            rows: vec![FeatureVector {
                values: vec![0.1, 2.0 / 3.0],
                label: AgentLabel::Devin,
                pr_id: "pr,1".into(),
            }],
        };
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "a,b,label,pr_id\n0.1,0.666666666667,Devin,\"pr,1\"\n");
        let back = FeatureMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(back.rows[0].pr_id, "pr,1");
        assert!((back.rows[0].values[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(FeatureMatrix::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    fn arb_file() -> impl Strategy<Value = FileChangeRecord> {
        (
            "[a-z]{1,3}(/[a-z]{1,3}){0,3}\\.(py|rs|md|json|txt|go)",
            prop_oneof![
                Just(FileOperation::Added),
                Just(FileOperation::Modified),
                Just(FileOperation::Removed),
                Just(FileOperation::Renamed)
            ],
            0u64..500,
            0u64..500,
        )
            .prop_map(|(path, op, a, d)| file(&path, op, a, d, None))
    }

    proptest! {
        #[test]
        fn ratios_stay_in_unit_interval(files in proptest::collection::vec(arb_file(), 0..12),
                                        msgs in proptest::collection::vec("[A-Za-z:\n ]{0,30}", 1..5),
                                        body in "[-*\\[\\]x a-z\n`()]{0,80}",
                                        patch in "([-+ ][ \ta-z#():]{0,12}\n){0,10}") {
            let mut files = files;
            if let Some(f) = files.first_mut() {
                f.patch = Some(patch);
            }
            let pr = PullRequest {
                id: "x".into(),
                title: "t".into(),
                body,
                created_at: Utc.with_ymd_and_hms(2025, 3, 3, 3, 3, 3).unwrap(),
                commits: msgs.iter().map(|m| commit(m)).collect(),
                file_changes: files,
            };
            let v = extract_values(&pr);
            for (d, x) in FEATURE_REGISTRY.iter().zip(&v) {
                prop_assert!(x.is_finite());
                prop_assert!(*x >= 0.0, "{} = {}", d.name, x);
                if matches!(d.unit, FeatureUnit::Ratio | FeatureUnit::Gini | FeatureUnit::Flag) {
                    prop_assert!(*x <= 1.0, "{} = {}", d.name, x);
                }
            }
        }

        #[test]
        fn change_features_ignore_file_order(files in proptest::collection::vec(arb_file(), 0..10), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = files.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = extract_change_features(&files);
            let b = extract_change_features(&shuffled);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn entropy_zero_iff_single_extension(files in proptest::collection::vec(arb_file(), 1..10)) {
            let v = extract_change_features(&files);
            let exts: BTreeSet<_> = files.iter().map(|f| file_extension(&f.path)).collect();
            prop_assert_eq!(v[2] == 0.0, exts.len() == 1);
        }
    }
}
