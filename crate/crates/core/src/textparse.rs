//! Lexical parsers for commit messages, markdown PR bodies and unified-diff
//! fragments. Everything here is a pure function of its input.

use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

/// Conventional-commit types accepted in a header. Matching is
/// case-insensitive.
pub const CONVENTIONAL_TYPES: [&str; 11] = [
    "feat", "fix", "docs", "style", "refactor", "perf", "test", "build", "ci", "chore", "revert",
];

static CONVENTIONAL_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"^(?i:{})(?:\([^()\r\n]+\))?!?: .*\S",
        CONVENTIONAL_TYPES.join("|")
    ))
    .unwrap()
});
static CHECKLIST: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*- \[[ xX]\]").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*[-*+] ").unwrap());
static INLINE_LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[[^\]\n]*\]\([^)\s]+(?:\s+[^)]*)?\)").unwrap());
static BARE_URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"https?://[^\s<>()\[\]"']+"#).unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommitMessageShape {
    pub first_line: String,
    pub nonblank_line_count: usize,
    pub total_length: usize,
    pub is_multiline: bool,
    pub is_conventional: bool,
    pub first_char_capitalized: bool,
}

pub fn is_conventional_header(line: &str) -> bool {
    CONVENTIONAL_HEADER.is_match(line)
}

pub fn parse_commit_message(message: &str) -> CommitMessageShape {
    let first_line = message.lines().next().unwrap_or("").to_string();
    let nonblank_line_count = message.lines().filter(|l| !l.trim().is_empty()).count();
    let first_char_capitalized = first_line
        .trim_start()
        .chars()
        .next()
        .is_some_and(|c| c.is_alphabetic() && c.is_uppercase());
    CommitMessageShape {
        is_conventional: is_conventional_header(&first_line),
        first_line,
        nonblank_line_count,
        total_length: message.chars().count(),
        is_multiline: nonblank_line_count > 1,
        first_char_capitalized,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BodyStructure {
    pub length_chars: usize,
    pub word_count: usize,
    pub checklist_items: usize,
    pub fenced_code_blocks: usize,
    pub links: usize,
    pub bullet_lines: usize,
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Counts markdown structure in a PR body.
///
/// Lengths and word counts cover the whole body (trailing line breaks are
/// not counted). Checklists, bullets and links are only counted outside
/// fenced code blocks.
pub fn parse_body(body: &str) -> BodyStructure {
    let mut s = BodyStructure {
        length_chars: body.trim_end_matches(['\n', '\r']).chars().count(),
        word_count: body.split_whitespace().count(),
        ..Default::default()
    };
    let mut fence_lines = 0;
    let mut in_fence = false;
    for line in body.lines() {
        if is_fence(line) {
            fence_lines += 1;
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if CHECKLIST.is_match(line) {
            s.checklist_items += 1;
        } else if BULLET.is_match(line) {
            s.bullet_lines += 1;
        }
        let inline = INLINE_LINK.find_iter(line).count();
        let rest = INLINE_LINK.replace_all(line, " ");
        s.links += inline + BARE_URL.find_iter(&rest).count();
    }
    s.fenced_code_blocks = fence_lines / 2;
    s
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PatchShape {
    pub added_lines: Vec<String>,
    pub removed_lines: Vec<String>,
    pub context_line_count: usize,
    /// Hunk headers, file headers, `\ No newline` markers and anything else
    /// that is not content.
    pub ignored_line_count: usize,
}

pub fn parse_patch(patch: &str) -> PatchShape {
    let mut shape = PatchShape::default();
    for line in patch.lines() {
        if line.starts_with("+++") || line.starts_with("---") {
            shape.ignored_line_count += 1;
        } else if let Some(rest) = line.strip_prefix('+') {
            shape.added_lines.push(rest.to_string());
        } else if let Some(rest) = line.strip_prefix('-') {
            shape.removed_lines.push(rest.to_string());
        } else if line.is_empty() || line.starts_with(' ') {
            // some exporters strip the single space from blank context lines
            shape.context_line_count += 1;
        } else {
            shape.ignored_line_count += 1;
        }
    }
    shape
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LineTag {
    Comment,
    Import,
    FunctionDecl,
    TypeDecl,
    Conditional,
    Loop,
    Blank,
    Other,
}

impl LineTag {
    const ALL: [LineTag; 8] = [
        LineTag::Comment,
        LineTag::Import,
        LineTag::FunctionDecl,
        LineTag::TypeDecl,
        LineTag::Conditional,
        LineTag::Loop,
        LineTag::Blank,
        LineTag::Other,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// Set of tags attached to one code line.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LineTags(u8);

impl LineTags {
    pub fn only(tag: LineTag) -> Self {
        LineTags(tag.bit())
    }

    pub fn insert(&mut self, tag: LineTag) {
        self.0 |= tag.bit();
    }

    pub fn contains(self, tag: LineTag) -> bool {
        self.0 & tag.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = LineTag> {
        LineTag::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

impl std::fmt::Debug for LineTags {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Lexical syntax profile for one family of file extensions.
#[derive(Debug, Serialize)]
pub struct SyntaxProfile {
    pub name: &'static str,
    pub extensions: &'static [&'static str],
    pub comment_prefixes: &'static [&'static str],
    /// Leading words stripped before keyword matching (`pub`, `export`, ...).
    pub modifiers: &'static [&'static str],
    pub import_keywords: &'static [&'static str],
    pub function_keywords: &'static [&'static str],
    /// Optional regex for declarations without a leading keyword
    /// (C-style `int main(void) {`).
    pub function_pattern: Option<&'static str>,
    pub type_keywords: &'static [&'static str],
    pub conditional_keywords: &'static [&'static str],
    pub loop_keywords: &'static [&'static str],
}

const C_STYLE_COMMENTS: &[&str] = &["//", "/*", "*"];
const C_FUNCTION_PATTERN: &str = r"^[A-Za-z_][\w:<>,\[\]\*&\s]*[\s\*&]\**~?[A-Za-z_][\w:]*\s*\([^;]*$";

pub static PROFILES: &[SyntaxProfile] = &[
    SyntaxProfile {
        name: "python",
        extensions: &["py"],
        comment_prefixes: &["#"],
        modifiers: &["async"],
        import_keywords: &["import", "from"],
        function_keywords: &["def"],
        function_pattern: None,
        type_keywords: &["class"],
        conditional_keywords: &["if", "elif", "else"],
        loop_keywords: &["for", "while"],
    },
    SyntaxProfile {
        name: "javascript",
        extensions: &["js", "ts", "tsx", "jsx"],
        comment_prefixes: C_STYLE_COMMENTS,
        modifiers: &[
            "export",
            "default",
            "async",
            "static",
            "public",
            "private",
            "protected",
            "declare",
            "abstract",
        ],
        import_keywords: &["import", "require"],
        function_keywords: &["function"],
        function_pattern: None,
        type_keywords: &["class", "interface", "type", "enum"],
        conditional_keywords: &["if", "else", "switch", "case"],
        loop_keywords: &["for", "while", "do"],
    },
    SyntaxProfile {
        name: "go",
        extensions: &["go"],
        comment_prefixes: C_STYLE_COMMENTS,
        modifiers: &[],
        import_keywords: &["import"],
        function_keywords: &["func"],
        function_pattern: None,
        type_keywords: &["type"],
        conditional_keywords: &["if", "else", "switch", "case", "select"],
        loop_keywords: &["for"],
    },
    SyntaxProfile {
        name: "rust",
        extensions: &["rs"],
        comment_prefixes: C_STYLE_COMMENTS,
        modifiers: &[
            "pub(crate)",
            "pub(super)",
            "pub",
            "async",
            "unsafe",
            "const",
            "extern",
            "default",
        ],
        import_keywords: &["use", "extern crate"],
        function_keywords: &["fn"],
        function_pattern: None,
        type_keywords: &["struct", "enum", "trait", "impl", "type", "union"],
        conditional_keywords: &["if", "else", "match"],
        loop_keywords: &["for", "while", "loop"],
    },
    SyntaxProfile {
        name: "java",
        extensions: &["java"],
        comment_prefixes: C_STYLE_COMMENTS,
        modifiers: &[
            "public",
            "private",
            "protected",
            "static",
            "final",
            "abstract",
            "synchronized",
            "native",
            "default",
        ],
        import_keywords: &["import"],
        function_keywords: &[],
        function_pattern: Some(C_FUNCTION_PATTERN),
        type_keywords: &["class", "interface", "enum", "record", "@interface"],
        conditional_keywords: &["if", "else", "switch", "case"],
        loop_keywords: &["for", "while", "do"],
    },
    SyntaxProfile {
        name: "c_family",
        extensions: &["c", "h", "cpp", "hpp"],
        comment_prefixes: C_STYLE_COMMENTS,
        modifiers: &["static", "inline", "extern", "virtual", "constexpr"],
        import_keywords: &["#include", "import"],
        function_keywords: &[],
        function_pattern: Some(C_FUNCTION_PATTERN),
        type_keywords: &["struct", "class", "enum", "union", "typedef"],
        conditional_keywords: &["if", "else", "switch", "case"],
        loop_keywords: &["for", "while", "do"],
    },
    SyntaxProfile {
        name: "ruby",
        extensions: &["rb"],
        comment_prefixes: &["#"],
        modifiers: &["private", "protected"],
        import_keywords: &["require", "require_relative", "include"],
        function_keywords: &["def"],
        function_pattern: None,
        type_keywords: &["class", "module"],
        conditional_keywords: &["if", "elsif", "else", "unless", "case", "when"],
        loop_keywords: &["while", "until", "for", "loop"],
    },
    SyntaxProfile {
        name: "shell",
        extensions: &["sh"],
        comment_prefixes: &["#"],
        modifiers: &[],
        import_keywords: &["source"],
        function_keywords: &["function"],
        function_pattern: Some(r"^[A-Za-z_][\w-]*\s*\(\)\s*\{?\s*$"),
        type_keywords: &[],
        conditional_keywords: &["if", "elif", "else", "case"],
        loop_keywords: &["for", "while", "until"],
    },
    SyntaxProfile {
        name: "yaml",
        extensions: &["yaml", "yml"],
        comment_prefixes: &["#"],
        modifiers: &[],
        import_keywords: &[],
        function_keywords: &[],
        function_pattern: None,
        type_keywords: &[],
        conditional_keywords: &[],
        loop_keywords: &[],
    },
    SyntaxProfile {
        name: "markdown",
        extensions: &["md"],
        comment_prefixes: &["<!--"],
        modifiers: &[],
        import_keywords: &[],
        function_keywords: &[],
        function_pattern: None,
        type_keywords: &[],
        conditional_keywords: &[],
        loop_keywords: &[],
    },
];

pub static GENERIC_PROFILE: SyntaxProfile = SyntaxProfile {
    name: "generic",
    extensions: &[],
    comment_prefixes: &["//", "#", "/*", "*", "--"],
    modifiers: &["pub", "public", "private", "export", "static", "async"],
    import_keywords: &["import", "#include", "require", "use"],
    function_keywords: &["def", "function", "fn", "func"],
    function_pattern: None,
    type_keywords: &["class", "struct", "interface", "enum"],
    conditional_keywords: &["if", "elif", "else", "switch", "case"],
    loop_keywords: &["for", "while"],
};

static COMPILED_PATTERNS: LazyLock<Vec<Option<Regex>>> = LazyLock::new(|| {
    PROFILES
        .iter()
        .map(|p| p.function_pattern.map(|src| Regex::new(src).unwrap()))
        .collect()
});

/// Picks the syntax profile for a file extension (with or without the
/// leading dot, case-insensitive). Unknown extensions get the generic one.
pub fn profile_for(extension: &str) -> &'static SyntaxProfile {
    let ext = extension.trim_start_matches('.').to_ascii_lowercase();
    PROFILES
        .iter()
        .find(|p| p.extensions.contains(&ext.as_str()))
        .unwrap_or(&GENERIC_PROFILE)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// `text` starts with `keyword` and the keyword is not the prefix of a
/// longer identifier.
fn starts_with_word(text: &str, keyword: &str) -> bool {
    match text.strip_prefix(keyword) {
        None => false,
        Some(rest) => {
            !keyword.chars().last().is_some_and(is_word_char) || !rest.chars().next().is_some_and(is_word_char)
        }
    }
}

fn strip_modifiers<'a>(mut code: &'a str, modifiers: &[&str]) -> &'a str {
    'outer: loop {
        for m in modifiers {
            if starts_with_word(code, m) {
                code = code[m.len()..].trim_start();
                continue 'outer;
            }
        }
        return code;
    }
}

/// Tags one added code line by its first lexical token.
///
/// Comment detection only looks at the start of the line, so trailing
/// comments do not make a line a comment. Blank and comment lines carry no
/// other tag.
pub fn classify_code_line(line: &str, extension: &str) -> LineTags {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return LineTags::only(LineTag::Blank);
    }
    let profile = profile_for(extension);
    if profile.comment_prefixes.iter().any(|p| trimmed.starts_with(p)) {
        return LineTags::only(LineTag::Comment);
    }

    let code = trimmed.trim_start_matches(|c: char| c == '}' || c == ')' || c.is_whitespace());
    let code = strip_modifiers(code, profile.modifiers);
    let any = |kws: &[&str]| kws.iter().any(|k| starts_with_word(code, k));

    let mut tags = LineTags::default();
    if any(profile.import_keywords) {
        tags.insert(LineTag::Import);
    }
    if any(profile.type_keywords) {
        tags.insert(LineTag::TypeDecl);
    }
    let conditional = any(profile.conditional_keywords);
    let looping = any(profile.loop_keywords);
    if conditional {
        tags.insert(LineTag::Conditional);
    }
    if looping {
        tags.insert(LineTag::Loop);
    }
    let keyword_fn = any(profile.function_keywords);
    let pattern_fn = !conditional
        && !looping
        && !["return", "new", "throw", "delete", "else", "case", "goto", "sizeof"]
            .iter()
            .any(|k| starts_with_word(code, k))
        && profile_pattern(profile).is_some_and(|re| re.is_match(code));
    if keyword_fn || pattern_fn {
        tags.insert(LineTag::FunctionDecl);
    }
    if tags.is_empty() {
        tags.insert(LineTag::Other);
    }
    tags
}

fn profile_pattern(profile: &SyntaxProfile) -> Option<&'static Regex> {
    PROFILES
        .iter()
        .position(|p| std::ptr::eq(p, profile))
        .and_then(|i| COMPILED_PATTERNS[i].as_ref())
}

/// Profile table as exported by `agentprint dump-profiles`.
#[derive(Serialize)]
pub struct ProfileTable {
    pub profiles: &'static [SyntaxProfile],
    pub generic: &'static SyntaxProfile,
    pub conventional_types: &'static [&'static str],
}

pub fn profile_table() -> ProfileTable {
    ProfileTable {
        profiles: PROFILES,
        generic: &GENERIC_PROFILE,
        conventional_types: &CONVENTIONAL_TYPES,
    }
}
