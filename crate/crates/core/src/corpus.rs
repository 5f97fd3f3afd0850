//! Pull-request data model and NDJSON ingestion.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": str, "agent": str, "title": str, "body": str|null, "created_at": RFC3339 str,
//!  "commits": [{"message": str, "author": str}],
//!  "files": [{"path": str, "op": "added"|"modified"|"removed"|"renamed",
//!             "additions": int, "deletions": int, "patch": str|null}]}
//! ```
//!
//! A record is *incomplete* when it has no commits or any commit lacks a
//! message. Incomplete records are skipped in both strict and lenient mode;
//! they are counted separately from malformed lines.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five agents of the closed classification task, in registry order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentLabel {
    OpenAICodex,
    Copilot,
    Devin,
    Cursor,
    ClaudeCode,
}

impl AgentLabel {
    pub const ALL: [AgentLabel; 5] = [
        AgentLabel::OpenAICodex,
        AgentLabel::Copilot,
        AgentLabel::Devin,
        AgentLabel::Cursor,
        AgentLabel::ClaudeCode,
    ];

    /// Canonical name as it appears in the input format.
    pub fn as_str(self) -> &'static str {
        match self {
            AgentLabel::OpenAICodex => "OpenAI_Codex",
            AgentLabel::Copilot => "Copilot",
            AgentLabel::Devin => "Devin",
            AgentLabel::Cursor => "Cursor",
            AgentLabel::ClaudeCode => "Claude_Code",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AgentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentLabel {
    type Err = Error;

    /// Case-insensitive; spaces, underscores and hyphens are ignored so
    /// `OpenAI_Codex`, `openai codex` and `OPENAI-CODEX` all parse.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "openaicodex" => Ok(AgentLabel::OpenAICodex),
            "copilot" | "githubcopilot" => Ok(AgentLabel::Copilot),
            "devin" => Ok(AgentLabel::Devin),
            "cursor" => Ok(AgentLabel::Cursor),
            "claudecode" => Ok(AgentLabel::ClaudeCode),
            _ => Err(Error::UnknownAgent(s.to_string())),
        }
    }
}

impl Serialize for AgentLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AgentLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub message: String,
    pub author_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileOperation {
    Added,
    Modified,
    Removed,
    Renamed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileChangeRecord {
    pub path: String,
    pub operation: FileOperation,
    pub additions: u64,
    pub deletions: u64,
    pub patch: Option<String>,
}

/// PR content without a label; what feature extraction consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PullRequest {
    pub id: String,
    pub title: String,
    /// Null bodies are read as empty.
    pub body: String,
    pub created_at: DateTime<Utc>,
    pub commits: Vec<CommitRecord>,
    pub file_changes: Vec<FileChangeRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PullRequestRecord {
    pub agent_label: AgentLabel,
    pub pr: PullRequest,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub loaded: usize,
    pub skipped_incomplete: usize,
    pub skipped_malformed: usize,
}

// Wire format. Everything optional so that incompleteness can be told apart
// from malformed JSON.
#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    agent: Option<String>,
    title: String,
    #[serde(default)]
    body: Option<String>,
    created_at: String,
    #[serde(default)]
    commits: Vec<WireCommit>,
    #[serde(default)]
    files: Vec<WireFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireCommit {
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    author: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireFile {
    path: String,
    op: FileOperation,
    additions: u64,
    deletions: u64,
    #[serde(default)]
    patch: Option<String>,
}

enum LineOutcome<T> {
    Loaded(T),
    Incomplete,
}

fn is_hunk_content(line: &str) -> bool {
    line.is_empty() || matches!(line.as_bytes()[0], b' ' | b'+' | b'-' | b'\\' | b'@')
}

fn parse_pull_request(wire: WireRecord) -> std::result::Result<LineOutcome<PullRequest>, String> {
    if wire.id.is_empty() {
        return Err("empty id".into());
    }
    let created_at = DateTime::parse_from_rfc3339(&wire.created_at)
        .map_err(|e| format!("created_at `{}`: {e}", wire.created_at))?
        .with_timezone(&Utc);

    let mut file_changes = Vec::with_capacity(wire.files.len());
    for f in wire.files {
        if f.path.is_empty() {
            return Err("file with empty path".into());
        }
        if let Some(patch) = &f.patch {
            if let Some(bad) = patch.lines().find(|l| !is_hunk_content(l)) {
                return Err(format!("{}: invalid patch line `{bad}`", f.path));
            }
        }
        file_changes.push(FileChangeRecord {
            path: f.path,
            operation: f.op,
            additions: f.additions,
            deletions: f.deletions,
            patch: f.patch,
        });
    }

    if wire.commits.is_empty() || wire.commits.iter().any(|c| c.message.is_none()) {
        return Ok(LineOutcome::Incomplete);
    }
    let commits = wire
        .commits
        .into_iter()
        .map(|c| CommitRecord {
            message: c.message.unwrap_or_default(),
            author_name: c.author.unwrap_or_default(),
        })
        .collect();

    Ok(LineOutcome::Loaded(PullRequest {
        id: wire.id,
        title: wire.title,
        body: wire.body.unwrap_or_default(),
        created_at,
        commits,
        file_changes,
    }))
}

fn parse_line(
    line: &str,
    labeled: bool,
) -> std::result::Result<LineOutcome<(Option<AgentLabel>, PullRequest)>, String> {
    let wire: WireRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let label = match (&wire.agent, labeled) {
        (Some(a), _) => Some(a.parse::<AgentLabel>().map_err(|e| e.to_string())?),
        (None, true) => return Err("missing agent label".into()),
        (None, false) => None,
    };
    Ok(match parse_pull_request(wire)? {
        LineOutcome::Loaded(pr) => LineOutcome::Loaded((label, pr)),
        LineOutcome::Incomplete => LineOutcome::Incomplete,
    })
}

fn read_lines<R: BufRead, T>(
    reader: R,
    strict: bool,
    origin: &Path,
    labeled: bool,
    mut keep: impl FnMut(Option<AgentLabel>, PullRequest) -> T,
) -> Result<(Vec<T>, IngestStats)> {
    let mut out = Vec::new();
    let mut stats = IngestStats::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, labeled) {
            Ok(LineOutcome::Loaded((label, pr))) => {
                out.push(keep(label, pr));
                stats.loaded += 1;
            }
            Ok(LineOutcome::Incomplete) => stats.skipped_incomplete += 1,
            Err(reason) if strict => return Err(Error::MalformedRecord { line: i + 1, reason }),
            Err(_) => stats.skipped_malformed += 1,
        }
    }
    Ok((out, stats))
}

/// Reads labeled records from an NDJSON reader. `origin` is only used in
/// error messages.
pub fn read_corpus<R: BufRead>(
    reader: R,
    strict: bool,
    origin: &Path,
) -> Result<(Vec<PullRequestRecord>, IngestStats)> {
    read_lines(reader, strict, origin, true, |label, pr| PullRequestRecord {
        agent_label: label.expect("labeled mode guarantees a label"),
        pr,
    })
}

pub fn load_corpus(path: &Path, strict: bool) -> Result<(Vec<PullRequestRecord>, IngestStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), strict, path)
}

/// Like [`load_corpus`] but the `agent` field is optional and ignored.
pub fn load_unlabeled(path: &Path, strict: bool) -> Result<(Vec<PullRequest>, IngestStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_lines(BufReader::new(file), strict, path, false, |_, pr| pr)
}

pub fn class_counts(corpus: &[PullRequestRecord]) -> BTreeMap<AgentLabel, usize> {
    let mut counts: BTreeMap<AgentLabel, usize> = AgentLabel::ALL.iter().map(|&a| (a, 0)).collect();
    for r in corpus {
        *counts.entry(r.agent_label).or_default() += 1;
    }
    counts
}

fn to_wire(pr: &PullRequest, agent: Option<AgentLabel>) -> WireRecord {
    WireRecord {
        id: pr.id.clone(),
        agent: agent.map(|a| a.as_str().to_string()),
        title: pr.title.clone(),
        body: Some(pr.body.clone()),
        created_at: pr.created_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        commits: pr
            .commits
            .iter()
            .map(|c| WireCommit {
                message: Some(c.message.clone()),
                author: Some(c.author_name.clone()),
            })
            .collect(),
        files: pr
            .file_changes
            .iter()
            .map(|f| WireFile {
                path: f.path.clone(),
                op: f.operation,
                additions: f.additions,
                deletions: f.deletions,
                patch: f.patch.clone(),
            })
            .collect(),
    }
}

impl PullRequestRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&to_wire(&self.pr, Some(self.agent_label))).expect("wire record is always serializable")
    }
}

impl PullRequest {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&to_wire(self, None)).expect("wire record is always serializable")
    }
}

pub fn write_corpus<W: Write>(mut w: W, corpus: &[PullRequestRecord]) -> std::io::Result<()> {
    for r in corpus {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}
