//! Comment- and string-aware extraction of qualified call sites and Python
//! import statements, plus the regex fallback used when lexing fails.
//!
//! A call site is a chain `IDENT ('.' IDENT)*` written without interior
//! whitespace and followed (after optional whitespace) by `(`. Chains that
//! begin right after a `.` hang off a non-identifier receiver such as
//! `f().g(`; they are not reported, which keeps the lexer in agreement with
//! the fallback's preceding-character guard.

use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sigdb::{LanguageSel, Pattern, SiteKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LanguageFamily {
    Python,
    CFamily,
    Unknown,
}

impl LanguageFamily {
    pub fn name(self) -> &'static str {
        match self {
            LanguageFamily::Python => "python",
            LanguageFamily::CFamily => "c-family",
            LanguageFamily::Unknown => "unknown",
        }
    }

    /// Selector a signature must list (besides `*`) to apply to this family.
    pub fn selector(self) -> Option<LanguageSel> {
        match self {
            LanguageFamily::Python => Some(LanguageSel::Python),
            LanguageFamily::CFamily => Some(LanguageSel::CFamily),
            LanguageFamily::Unknown => None,
        }
    }
}

impl fmt::Display for LanguageFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const C_FAMILY_EXTENSIONS: &[&str] = &[
    "js", "jsx", "ts", "tsx", "java", "c", "h", "cpp", "cc", "hpp", "cs", "go",
];

pub fn identify_language(path: &str) -> LanguageFamily {
    let ext = match Path::new(path).extension().and_then(|e| e.to_str()) {
        Some(e) => e.to_ascii_lowercase(),
        None => return LanguageFamily::Unknown,
    };
    if ext == "py" {
        LanguageFamily::Python
    } else if C_FAMILY_EXTENSIONS.contains(&ext.as_str()) {
        LanguageFamily::CFamily
    } else {
        LanguageFamily::Unknown
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ScanMode {
    Lexical,
    Raw,
}

impl fmt::Display for ScanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanMode::Lexical => "LEXICAL",
            ScanMode::Raw => "RAW",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub segments: Vec<String>,
    pub line: u32,
    pub column: u32,
    pub kind: SiteKind,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated string starting at {line}:{column}")]
    UnterminatedString { line: u32, column: u32 },
    #[error("unterminated block comment starting at {line}:{column}")]
    UnterminatedComment { line: u32, column: u32 },
    #[error("no lexer for language family {0}")]
    UnsupportedFamily(LanguageFamily),
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn is_python_string_prefix(word: &str) -> bool {
    matches!(
        word.to_ascii_lowercase().as_str(),
        "r" | "u" | "b" | "f" | "t" | "br" | "rb" | "fr" | "rf" | "tr" | "rt"
    )
}

#[derive(Clone, Copy)]
struct Mark {
    pos: usize,
    line: u32,
    col: u32,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    python: bool,
    sites: Vec<CallSite>,
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn mark(&self) -> Mark {
        Mark {
            pos: self.pos,
            line: self.line,
            col: self.col,
        }
    }

    fn reset(&mut self, m: Mark) {
        self.pos = m.pos;
        self.line = m.line;
        self.col = m.col;
    }

    fn text_since(&self, m: Mark) -> String {
        self.chars[m.pos..self.pos].iter().collect()
    }

    fn run(mut self) -> Result<Vec<CallSite>, LexError> {
        while let Some(c) = self.peek() {
            match c {
                '#' if self.python => self.skip_line(),
                '/' if !self.python && self.peek_at(1) == Some('/') => self.skip_line(),
                '/' if !self.python && self.peek_at(1) == Some('*') => self.skip_block_comment()?,
                '"' | '\'' => self.skip_string(c)?,
                '`' if !self.python => self.skip_template()?,
                c if is_ident_start(c) => self.word()?,
                c if c.is_ascii_digit() => self.skip_number(),
                '.' if self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) => {
                    self.bump();
                    self.skip_number();
                }
                _ => {
                    self.bump();
                }
            }
        }
        self.sites.sort_by_key(|s| (s.line, s.column));
        Ok(self.sites)
    }

    fn skip_line(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    fn skip_block_comment(&mut self) -> Result<(), LexError> {
        let start = self.mark();
        self.bump();
        self.bump();
        loop {
            match self.bump() {
                None => {
                    return Err(LexError::UnterminatedComment {
                        line: start.line,
                        column: start.col,
                    })
                }
                Some('*') if self.peek() == Some('/') => {
                    self.bump();
                    return Ok(());
                }
                Some(_) => {}
            }
        }
    }

    fn skip_number(&mut self) {
        while let Some(c) = self.peek() {
            if is_ident_char(c) || c == '.' {
                self.bump();
            } else {
                break;
            }
        }
    }

    /// Skips a quoted literal starting at the opening quote. Python triple
    /// quotes may span lines; every other form ends at an unescaped newline,
    /// which is reported as unterminated.
    fn skip_string(&mut self, quote: char) -> Result<(), LexError> {
        let start = self.mark();
        let unterminated = LexError::UnterminatedString {
            line: start.line,
            column: start.col,
        };
        let triple =
            self.python && self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        if triple {
            self.bump();
            self.bump();
            self.bump();
            loop {
                match self.bump() {
                    None => return Err(unterminated),
                    Some('\\') => {
                        self.bump();
                    }
                    Some(c)
                        if c == quote
                            && self.peek() == Some(quote)
                            && self.peek_at(1) == Some(quote) =>
                    {
                        self.bump();
                        self.bump();
                        return Ok(());
                    }
                    Some(_) => {}
                }
            }
        }
        self.bump();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(unterminated),
                Some('\\') => {
                    self.bump();
                }
                Some(c) if c == quote => return Ok(()),
                Some(_) => {}
            }
        }
    }

    /// Backtick template literal, interpolations included.
    fn skip_template(&mut self) -> Result<(), LexError> {
        let start = self.mark();
        let unterminated = LexError::UnterminatedString {
            line: start.line,
            column: start.col,
        };
        self.bump();
        loop {
            match self.peek() {
                None => return Err(unterminated),
                Some('\\') => {
                    self.bump();
                    self.bump();
                }
                Some('`') => {
                    self.bump();
                    return Ok(());
                }
                Some('$') if self.peek_at(1) == Some('{') => {
                    self.bump();
                    self.bump();
                    self.skip_interpolation(start)?;
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
    }

    fn skip_interpolation(&mut self, template_start: Mark) -> Result<(), LexError> {
        let mut depth = 1usize;
        loop {
            match self.peek() {
                None => {
                    return Err(LexError::UnterminatedString {
                        line: template_start.line,
                        column: template_start.col,
                    })
                }
                Some('{') => {
                    depth += 1;
                    self.bump();
                }
                Some('}') => {
                    self.bump();
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                Some(q @ ('"' | '\'')) => self.skip_string(q)?,
                Some('`') => self.skip_template()?,
                Some('/') if self.peek_at(1) == Some('/') => self.skip_line(),
                Some('/') if self.peek_at(1) == Some('*') => self.skip_block_comment()?,
                Some(_) => {
                    self.bump();
                }
            }
        }
    }

    fn read_ident(&mut self) -> String {
        let m = self.mark();
        while self.peek().is_some_and(is_ident_char) {
            self.bump();
        }
        self.text_since(m)
    }

    /// Reads `IDENT ('.' IDENT)*` from the current position (which must be
    /// an identifier start).
    fn read_chain(&mut self, first: String) -> Vec<String> {
        let mut segments = vec![first];
        while self.peek() == Some('.') && self.peek_at(1).is_some_and(is_ident_start) {
            self.bump();
            segments.push(self.read_ident());
        }
        segments
    }

    fn skip_inline_space(&mut self) {
        while let Some(c) = self.peek() {
            if c == ' ' || c == '\t' {
                self.bump();
            } else if c == '\\' && self.peek_at(1) == Some('\n') {
                self.bump();
                self.bump();
            } else {
                break;
            }
        }
    }

    fn followed_by_paren(&self) -> bool {
        self.chars[self.pos..]
            .iter()
            .find(|c| !c.is_whitespace())
            .is_some_and(|&c| c == '(')
    }

    fn push_site(&mut self, segments: Vec<String>, start: Mark, kind: SiteKind) {
        let raw_text = self.text_since(start);
        self.sites.push(CallSite {
            segments,
            line: start.line,
            column: start.col,
            kind,
            raw_text,
        });
    }

    fn word(&mut self) -> Result<(), LexError> {
        let start = self.mark();
        let after_dot = start.pos > 0 && self.chars[start.pos - 1] == '.';
        let word = self.read_ident();

        if self.python {
            if let Some(q @ ('"' | '\'')) = self.peek() {
                if is_python_string_prefix(&word) {
                    return self.skip_string(q);
                }
            }
            if !after_dot && word == "import" {
                self.import_list();
                return Ok(());
            }
            if !after_dot && word == "from" && self.try_from_import() {
                return Ok(());
            }
        }

        let segments = self.read_chain(word);
        if !after_dot && self.followed_by_paren() {
            self.push_site(segments, start, SiteKind::Call);
        }
        Ok(())
    }

    /// `import a.b [as c], d ...` after the `import` keyword.
    fn import_list(&mut self) {
        loop {
            self.skip_inline_space();
            if !self.peek().is_some_and(is_ident_start) {
                return;
            }
            let start = self.mark();
            let first = self.read_ident();
            let segments = self.read_chain(first);
            self.push_site(segments, start, SiteKind::Import);
            self.skip_inline_space();
            if self.peek_word() == Some("as") {
                self.read_ident();
                self.skip_inline_space();
                if self.peek().is_some_and(is_ident_start) {
                    self.read_ident();
                }
                self.skip_inline_space();
            }
            if self.peek() == Some(',') {
                self.bump();
            } else {
                return;
            }
        }
    }

    fn peek_word(&self) -> Option<&'static str> {
        for kw in ["as", "import"] {
            let n = kw.len();
            let matches = kw
                .chars()
                .enumerate()
                .all(|(i, c)| self.peek_at(i) == Some(c));
            if matches && !self.peek_at(n).is_some_and(is_ident_char) {
                return Some(kw);
            }
        }
        None
    }

    /// `from [.]*a.b import ...` after the `from` keyword. Restores the
    /// position and returns false when the text is not a from-import (for
    /// instance `yield from f()`).
    fn try_from_import(&mut self) -> bool {
        let resume = self.mark();
        let before = self.pos;
        self.skip_inline_space();
        let mut relative = false;
        while self.peek() == Some('.') {
            relative = true;
            self.bump();
        }
        if self.pos == before {
            self.reset(resume);
            return false;
        }
        let mut module = None;
        if self.peek().is_some_and(is_ident_start) {
            let start = self.mark();
            let first = self.read_ident();
            module = Some((self.read_chain(first), start));
        } else if !relative {
            self.reset(resume);
            return false;
        }
        let module_end = self.mark();
        self.skip_inline_space();
        if (self.pos == module_end.pos && !relative) || self.peek_word() != Some("import") {
            self.reset(resume);
            return false;
        }
        self.read_ident();
        if let Some((segments, start)) = module {
            let end = self.mark();
            self.reset(module_end);
            self.push_site(segments, start, SiteKind::Import);
            self.reset(end);
        }
        true
    }
}

/// Extracts call sites (and Python import sites) from normalized text.
/// Comments and string literals are never scanned. Fails on unterminated
/// strings and block comments, signaling the caller to fall back to
/// [`raw_scan`].
pub fn lex_call_sites(content: &str, family: LanguageFamily) -> Result<Vec<CallSite>, LexError> {
    let python = match family {
        LanguageFamily::Python => true,
        LanguageFamily::CFamily => false,
        LanguageFamily::Unknown => return Err(LexError::UnsupportedFamily(family)),
    };
    Lexer {
        chars: content.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        python,
        sites: Vec::new(),
    }
    .run()
}

/// Precompiled fallback matcher for a fixed set of dotted patterns.
pub struct RawScanner {
    patterns: Vec<(Pattern, Regex)>,
}

impl RawScanner {
    pub fn new<'a, I: IntoIterator<Item = &'a Pattern>>(patterns: I) -> Self {
        let mut unique: Vec<Pattern> = patterns.into_iter().cloned().collect();
        unique.sort();
        unique.dedup();
        let patterns = unique
            .into_iter()
            .map(|p| {
                let re = Regex::new(&format!(r"{}\s*\(", regex::escape(&p.dotted())))
                    .expect("escaped pattern is a valid regex");
                (p, re)
            })
            .collect();
        RawScanner { patterns }
    }

    /// Every occurrence of a pattern followed by `(` whose preceding
    /// character is not an identifier character or `.`. Comments and
    /// strings are not excluded.
    pub fn scan(&self, content: &str) -> Vec<CallSite> {
        let line_starts: Vec<usize> = std::iter::once(0)
            .chain(content.match_indices('\n').map(|(i, _)| i + 1))
            .collect();
        let mut sites = Vec::new();
        for (pattern, re) in &self.patterns {
            let text_len = pattern.dotted().len();
            for m in re.find_iter(content) {
                let start = m.start();
                let guarded = content[..start]
                    .chars()
                    .next_back()
                    .is_some_and(|c| is_ident_char(c) || c == '.');
                if guarded {
                    continue;
                }
                let line_idx = line_starts.partition_point(|&s| s <= start) - 1;
                let column = content[line_starts[line_idx]..start].chars().count() + 1;
                sites.push(CallSite {
                    segments: pattern.segments().to_vec(),
                    line: line_idx as u32 + 1,
                    column: column as u32,
                    kind: SiteKind::Call,
                    raw_text: content[start..start + text_len].to_string(),
                });
            }
        }
        sites.sort_by(|a, b| (a.line, a.column, &a.segments).cmp(&(b.line, b.column, &b.segments)));
        sites
    }
}

pub fn raw_scan(content: &str, patterns: &[Pattern]) -> Vec<CallSite> {
    RawScanner::new(patterns).scan(content)
}
