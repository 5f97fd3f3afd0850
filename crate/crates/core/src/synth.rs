//! Seeded synthetic corpus with one injected style signature per agent.
//!
//! Every agent draws titles, bodies, commits, file paths and patches from the
//! same generators; each differs from the rest in exactly one behavior:
//!
//! | agent        | signature                                  |
//! |--------------|--------------------------------------------|
//! | OpenAI_Codex | commit messages carry a body paragraph     |
//! | Copilot      | PR body is mostly a task checklist         |
//! | Devin        | 4–8 commits instead of 1–3                 |
//! | Cursor       | PR body is mostly bullet points            |
//! | Claude_Code  | added code is dense with conditionals      |
//!
//! Signatures replace, rather than add to, neutral content so that length
//! and count features stay identically distributed across agents.

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AgentLabel, CommitRecord, FileChangeRecord, FileOperation, PullRequest, PullRequestRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    /// PRs per agent, in [`AgentLabel::ALL`] order.
    pub counts: [usize; 5],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            counts: [1000, 500, 500, 300, 200],
            seed: 42,
        }
    }
}

pub fn signature_feature(agent: AgentLabel) -> &'static str {
    match agent {
        AgentLabel::OpenAICodex => "multiline_commit_ratio",
        AgentLabel::Copilot => "checklist_count",
        AgentLabel::Devin => "commit_count",
        AgentLabel::Cursor => "bullet_count",
        AgentLabel::ClaudeCode => "conditional_count",
    }
}

const WORDS: &[&str] = &[
    "add",
    "update",
    "handler",
    "config",
    "parser",
    "cache",
    "retry",
    "logic",
    "request",
    "response",
    "client",
    "server",
    "token",
    "session",
    "user",
    "error",
    "path",
    "build",
    "schema",
    "query",
    "index",
    "limit",
    "timeout",
    "buffer",
    "stream",
    "event",
    "queue",
    "worker",
    "metric",
    "report",
    "field",
    "value",
    "option",
    "flag",
    "route",
    "module",
    "helper",
    "test",
    "fixture",
    "docs",
    "endpoint",
    "payload",
    "header",
    "format",
    "layout",
    "widget",
    "state",
    "store",
    "model",
    "record",
    "table",
    "column",
    "migration",
    "script",
    "job",
    "task",
    "pipeline",
];

const COMMIT_TYPES: &[&str] = &[
    "feat", "fix", "docs", "refactor", "test", "chore", "perf", "build", "ci",
];

const DIRS: &[&str] = &[
    "src",
    "lib",
    "app",
    "core",
    "api",
    "utils",
    "services",
    "components",
    "internal",
    "pkg",
];

const EXTENSIONS: &[&str] = &["py", "rs", "ts", "go", "js", "py", "ts", "md", "toml", "json"];

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn headline(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let text = words(rng, lo, hi);
    if rng.gen_bool(0.4) {
        let ty = COMMIT_TYPES.choose(rng).unwrap();
        if rng.gen_bool(0.5) {
            let scope = WORDS.choose(rng).unwrap();
            format!("{ty}({scope}): {text}")
        } else {
            format!("{ty}: {text}")
        }
    } else if rng.gen_bool(0.6) {
        capitalize(&text)
    } else {
        text
    }
}

fn commit_message(rng: &mut ChaCha8Rng, multiline: bool) -> String {
    // both shapes draw the same number of words
    let total = rng.gen_range(6..=24);
    if multiline {
        let head = rng.gen_range(3..=5.min(total - 2));
        let header = headline(rng, head, head);
        let rest = words(rng, total - head, total - head);
        let mut lines = Vec::new();
        for chunk in rest.split(' ').collect::<Vec<_>>().chunks(6) {
            lines.push(chunk.join(" "));
        }
        format!("{header}\n\n{}", lines.join("\n"))
    } else {
        headline(rng, total, total)
    }
}

#[derive(Clone, Copy)]
enum Segment {
    Prose,
    Bullet,
    Check,
}

fn body(rng: &mut ChaCha8Rng, agent: AgentLabel) -> String {
    let n = rng.gen_range(3..=10);
    let (bullet, check) = match agent {
        AgentLabel::Cursor => (0.8, 0.0),
        AgentLabel::Copilot => (0.0, 0.8),
        _ => (0.05, 0.02),
    };
    let mut out = vec![format!("## {}", capitalize(&words(rng, 1, 3))), String::new()];
    for _ in 0..n {
        let roll: f64 = rng.gen();
        let seg = if roll < bullet {
            Segment::Bullet
        } else if roll < bullet + check {
            Segment::Check
        } else {
            Segment::Prose
        };
        let text = words(rng, 4, 12);
        out.push(match seg {
            Segment::Prose => format!("{}.", capitalize(&text)),
            Segment::Bullet => format!("- {text}"),
            Segment::Check => format!("- [{}] {text}", if rng.gen_bool(0.5) { 'x' } else { ' ' }),
        });
    }
    if rng.gen_bool(0.3) {
        out.push(String::new());
        out.push(format!("See https://example.com/issues/{}", rng.gen_range(1..5000)));
    }
    if rng.gen_bool(0.2) {
        out.extend(["```".to_string(), words(rng, 2, 5), "```".to_string()]);
    }
    out.join("\n")
}

fn ident(rng: &mut ChaCha8Rng) -> String {
    format!("{}_{}", WORDS.choose(rng).unwrap(), WORDS.choose(rng).unwrap())
}

fn code_line(rng: &mut ChaCha8Rng, ext: &str, conditional_rate: f64) -> String {
    let indent = " ".repeat(4 * rng.gen_range(0..3));
    let a = ident(rng);
    let b = ident(rng);
    if !matches!(ext, "py" | "rs" | "ts" | "js" | "go") {
        return match ext {
            "md" => words(rng, 3, 10),
            "toml" => format!("{a} = \"{b}\""),
            _ => format!("{indent}\"{a}\": \"{b}\","),
        };
    }
    if rng.gen_bool(conditional_rate) {
        return match ext {
            "py" => format!("{indent}if {a} > {}:", rng.gen_range(0..100)),
            "rs" => format!("{indent}if {a} > {} {{", rng.gen_range(0..100)),
            _ => format!("{indent}if ({a} > {}) {{", rng.gen_range(0..100)),
        };
    }
    let roll = rng.gen_range(0..10);
    match (ext, roll) {
        (_, 0) => String::new(),
        ("py", 1) => format!("{indent}# {}", words(rng, 2, 6)),
        (_, 1) => format!("{indent}// {}", words(rng, 2, 6)),
        ("py", 2) => format!("import {a}"),
        ("rs", 2) => format!("use crate::{a};"),
        ("go", 2) => format!("import \"{a}\""),
        (_, 2) => format!("import {{ {a} }} from \"./{b}\";"),
        ("py", 3) => format!("def {a}({b}):"),
        ("rs", 3) => format!("fn {a}({b}: u32) {{"),
        ("go", 3) => format!("func {a}({b} int) {{"),
        (_, 3) => format!("function {a}({b}) {{"),
        ("py", 4) => format!("{indent}for {b} in {a}:"),
        ("go", 4) => format!("{indent}for _, {b} := range {a} {{"),
        (_, 4) => format!("{indent}for (const {b} of {a}) {{"),
        ("py", _) => format!("{indent}{a} = {b}({})", rng.gen_range(0..10)),
        ("rs", _) => format!("{indent}let {a} = {b}({});", rng.gen_range(0..10)),
        ("go", _) => format!("{indent}{a} := {b}({})", rng.gen_range(0..10)),
        _ => format!("{indent}const {a} = {b}({});", rng.gen_range(0..10)),
    }
}

fn file_change(rng: &mut ChaCha8Rng, agent: AgentLabel) -> FileChangeRecord {
    let ext = *EXTENSIONS.choose(rng).unwrap();
    let depth = rng.gen_range(0..=3);
    let mut parts: Vec<String> = (0..depth).map(|_| DIRS.choose(rng).unwrap().to_string()).collect();
    let stem = ident(rng);
    parts.push(if rng.gen_bool(0.2) {
        format!("test_{stem}.{ext}")
    } else {
        format!("{stem}.{ext}")
    });
    let operation = match rng.gen_range(0..10) {
        0..=1 => FileOperation::Added,
        2 => FileOperation::Removed,
        3 => FileOperation::Renamed,
        _ => FileOperation::Modified,
    };
    let conditional_rate = if agent == AgentLabel::ClaudeCode { 0.4 } else { 0.02 };
    let (n_add, n_del) = match operation {
        FileOperation::Added => (rng.gen_range(3..=40), 0),
        FileOperation::Removed => (0, rng.gen_range(3..=30)),
        _ => (rng.gen_range(1..=25), rng.gen_range(0..=10)),
    };
    let n_ctx = if operation == FileOperation::Modified { 3 } else { 0 };
    let mut lines = vec![format!("@@ -1,{} +1,{} @@", n_del + n_ctx, n_add + n_ctx)];
    for _ in 0..n_ctx {
        lines.push(format!(" {}", code_line(rng, ext, 0.0)));
    }
    for _ in 0..n_del {
        lines.push(format!("-{}", code_line(rng, ext, 0.02)));
    }
    for _ in 0..n_add {
        let mut l = code_line(rng, ext, conditional_rate);
        if !l.is_empty() && rng.gen_bool(0.03) {
            l.push(' ');
        }
        lines.push(format!("+{l}"));
    }
    FileChangeRecord {
        path: parts.join("/"),
        operation,
        additions: n_add as u64,
        deletions: n_del as u64,
        patch: Some(lines.join("\n")),
    }
}

fn created_at(rng: &mut ChaCha8Rng) -> DateTime<Utc> {
    let start = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap().timestamp();
    let span = 180 * 24 * 3600;
    Utc.timestamp_opt(start + rng.gen_range(0..span), 0).unwrap()
}

fn pull_request(rng: &mut ChaCha8Rng, agent: AgentLabel, id: String) -> PullRequest {
    let n_commits = if agent == AgentLabel::Devin {
        rng.gen_range(4..=8)
    } else {
        rng.gen_range(1..=3)
    };
    let multiline_rate = if agent == AgentLabel::OpenAICodex { 0.9 } else { 0.03 };
    let commits = (0..n_commits)
        .map(|_| {
            let multiline = rng.gen_bool(multiline_rate);
            CommitRecord {
                message: commit_message(rng, multiline),
                author_name: agent.as_str().to_lowercase(),
            }
        })
        .collect();
    let n_files = rng.gen_range(1..=6);
    PullRequest {
        id,
        title: headline(rng, 3, 10),
        body: body(rng, agent),
        created_at: created_at(rng),
        commits,
        file_changes: (0..n_files).map(|_| file_change(rng, agent)).collect(),
    }
}

/// Generates the corpus in a seed-determined shuffled order.
pub fn generate(config: &SynthConfig) -> Vec<PullRequestRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut labels: Vec<AgentLabel> = AgentLabel::ALL
        .iter()
        .zip(config.counts)
        .flat_map(|(&a, n)| std::iter::repeat_n(a, n))
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, agent)| PullRequestRecord {
            agent_label: agent,
            pr: pull_request(&mut rng, agent, format!("synth-{i:05}")),
        })
        .collect()
}
