//! Corpus ingestion: manifest parsing, deduplication, source acquisition and
//! source-tree normalization.

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, Read};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

/// Directory name used for per-plugin run archives. Never copied during
/// acquisition so archived results are not rescanned.
pub const ARCHIVE_DIR_NAME: &str = ".mcp-audit";

pub const DEFAULT_MAX_FILE_BYTES: u64 = 1024 * 1024;

/// Number of leading bytes inspected for a NUL byte.
pub const BINARY_SNIFF_BYTES: usize = 8192;

pub const DEFAULT_PRUNE: &[&str] = &[
    "node_modules",
    "venv",
    ".venv",
    ".git",
    ".tox",
    "__pycache__",
    "dist",
    "build",
    "target",
    "vendor",
    "site-packages",
];

macro_rules! app_categories {
    ($($variant:ident => $label:literal,)*) => {
        /// Application category of a plugin, one of the 23 marketplace groupings.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum ApplicationCategory {
            $($variant,)*
        }

        impl ApplicationCategory {
            /// All categories in table order.
            pub const ALL: [ApplicationCategory; 23] = [$(ApplicationCategory::$variant,)*];

            pub fn label(self) -> &'static str {
                match self {
                    $(ApplicationCategory::$variant => $label,)*
                }
            }
        }

        impl FromStr for ApplicationCategory {
            type Err = UnknownCategory;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($label => Ok(ApplicationCategory::$variant),)*
                    other => Err(UnknownCategory(other.to_string())),
                }
            }
        }
    };
}

app_categories! {
    ApiDevelopment => "API Development",
    AnalyticsMonitoring => "Analytics & Monitoring",
    BrowserAutomation => "Browser Automation",
    CloudInfrastructure => "Cloud Infrastructure",
    CollaborationTools => "Collaboration Tools",
    ContentManagement => "Content Management",
    DataScienceMl => "Data Science & ML",
    DatabaseManagement => "Database Management",
    DeploymentDevops => "Deployment & DevOps",
    DesignTools => "Design Tools",
    DeveloperTools => "Developer Tools",
    EcommerceSolutions => "E-commerce Solutions",
    Featured => "Featured",
    GameDevelopment => "Game Development",
    LearningDocumentation => "Learning & Documentation",
    MarketingAutomation => "Marketing Automation",
    MobileDevelopment => "Mobile Development",
    Official => "Official",
    Other => "Other",
    ProductivityWorkflow => "Productivity & Workflow",
    SecurityTesting => "Security & Testing",
    SocialMediaManagement => "Social Media Management",
    WebScraping => "Web Scraping & Data Collection",
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown category \"{0}\"")]
pub struct UnknownCategory(pub String);

impl fmt::Display for ApplicationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for ApplicationCategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for ApplicationCategory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One corpus entry: a server, where its repository lives, its marketplace
/// category and popularity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluginRecord {
    pub id: String,
    pub name: String,
    pub source: String,
    pub category: ApplicationCategory,
    pub stars: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_hint: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read manifest: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid field `{field}`: {message}")]
    Validation {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("duplicate id \"{id}\" on lines {first_line} and {second_line}")]
    Duplicate {
        id: String,
        first_line: usize,
        second_line: usize,
    },
}

/// How unknown keys in manifest objects are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ManifestMode {
    #[default]
    Strict,
    Lenient,
}

const REQUIRED_KEYS: [&str; 5] = ["id", "name", "source", "category", "stars"];
const OPTIONAL_KEYS: [&str; 2] = ["language_hint", "tags"];

/// Parses a JSON Lines manifest. Blank lines are ignored; line numbers in
/// errors are 1-based and count blank lines.
pub fn parse_manifest<R: Read>(
    input: R,
    mode: ManifestMode,
) -> Result<Vec<PluginRecord>, ManifestError> {
    let reader = io::BufReader::new(input);
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record = parse_record(trimmed, line_no, mode)?;
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(ManifestError::Duplicate {
                id: record.id,
                first_line,
                second_line: line_no,
            });
        }
        seen.insert(record.id.clone(), line_no);
        records.push(record);
    }
    Ok(records)
}

fn parse_record(
    text: &str,
    line: usize,
    mode: ManifestMode,
) -> Result<PluginRecord, ManifestError> {
    let parse_err = |message: String| ManifestError::Parse { line, message };
    let invalid = |field: &'static str, message: String| ManifestError::Validation {
        line,
        field,
        message,
    };

    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse_err("expected a JSON object".to_string()))?;

    for key in REQUIRED_KEYS {
        if !obj.contains_key(key) {
            return Err(parse_err(format!("missing required key `{key}`")));
        }
    }
    if mode == ManifestMode::Strict {
        if let Some(key) = obj
            .keys()
            .find(|k| !REQUIRED_KEYS.contains(&k.as_str()) && !OPTIONAL_KEYS.contains(&k.as_str()))
        {
            return Err(parse_err(format!("unknown key `{key}`")));
        }
    }

    let string_field = |field: &'static str| -> Result<String, ManifestError> {
        obj[field]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| invalid(field, "expected a string".to_string()))
    };

    let id = string_field("id")?;
    if id.is_empty() {
        return Err(invalid("id", "must be nonempty".to_string()));
    }
    let name = string_field("name")?;
    let source = string_field("source")?;
    if source.trim().is_empty() {
        return Err(invalid("source", "must be nonempty".to_string()));
    }
    let category = string_field("category")?
        .parse::<ApplicationCategory>()
        .map_err(|e| invalid("category", e.to_string()))?;

    let stars = match &obj["stars"] {
        serde_json::Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(v), _) => v,
            (None, Some(_)) => return Err(invalid("stars", "must be nonnegative".to_string())),
            _ => return Err(invalid("stars", format!("expected an integer, got {n}"))),
        },
        other => {
            return Err(invalid(
                "stars",
                format!("expected an integer, got {other}"),
            ))
        }
    };

    let language_hint = match obj.get("language_hint") {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(invalid("language_hint", "expected a string".to_string())),
    };
    let tags = match obj.get("tags") {
        None | Some(serde_json::Value::Null) => Vec::new(),
        Some(serde_json::Value::Array(items)) => items
            .iter()
            .map(|t| {
                t.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| invalid("tags", "expected a list of strings".to_string()))
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(invalid("tags", "expected a list of strings".to_string())),
    };

    Ok(PluginRecord {
        id,
        name,
        source,
        category,
        stars,
        language_hint,
        tags,
    })
}

/// A record removed by deduplication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedRecord {
    pub record: PluginRecord,
    pub reason: String,
}

pub fn is_url(source: &str) -> bool {
    let s = source.trim();
    ["http://", "https://", "git://", "ssh://", "file://"]
        .iter()
        .any(|p| s.len() > p.len() && s[..p.len()].eq_ignore_ascii_case(p))
        || (s.starts_with("git@") && s.contains(':'))
}

/// Canonical form of a source locator used for duplicate detection:
/// trailing slashes removed, scheme and host lowercased for URLs, `.git`
/// suffix removed.
pub fn canonical_source(source: &str) -> String {
    let mut s = source.trim().trim_end_matches('/').to_string();
    if let Some(stripped) = s.strip_suffix(".git") {
        s = stripped.trim_end_matches('/').to_string();
    }
    if !is_url(&s) {
        return s;
    }
    if let Some(pos) = s.find("://") {
        let (scheme, rest) = s.split_at(pos);
        let rest = &rest[3..];
        let host_end = rest.find('/').unwrap_or(rest.len());
        let (authority, path) = rest.split_at(host_end);
        // userinfo is case-sensitive, host is not
        let authority = match authority.rsplit_once('@') {
            Some((user, host)) => format!("{user}@{}", host.to_ascii_lowercase()),
            None => authority.to_ascii_lowercase(),
        };
        format!("{}://{authority}{path}", scheme.to_ascii_lowercase())
    } else {
        // scp-like git@host:path
        match s.split_once(':') {
            Some((userhost, path)) => match userhost.split_once('@') {
                Some((user, host)) => format!("{user}@{}:{path}", host.to_ascii_lowercase()),
                None => format!("{}:{path}", userhost.to_ascii_lowercase()),
            },
            None => s,
        }
    }
}

/// Drops records whose canonical source collides with an earlier record.
/// First occurrence wins and input order is preserved.
pub fn dedup_manifest(records: Vec<PluginRecord>) -> (Vec<PluginRecord>, Vec<DroppedRecord>) {
    let mut first_by_source: HashMap<String, String> = HashMap::new();
    let mut kept = Vec::with_capacity(records.len());
    let mut dropped = Vec::new();
    for record in records {
        let key = canonical_source(&record.source);
        match first_by_source.get(&key) {
            Some(first_id) => {
                let reason = format!("duplicate source of \"{first_id}\"");
                dropped.push(DroppedRecord { record, reason });
            }
            None => {
                first_by_source.insert(key, record.id.clone());
                kept.push(record);
            }
        }
    }
    (kept, dropped)
}

#[derive(Debug, Error)]
pub enum AcquireError {
    #[error("source not found: {source_str}")]
    Missing { source_str: String },
    #[error("failed to copy {source_str}: {err}")]
    Copy { source_str: String, err: io::Error },
    #[error("failed to clone {source_str}: {message}")]
    Clone { source_str: String, message: String },
}

impl AcquireError {
    pub fn source_str(&self) -> &str {
        match self {
            AcquireError::Missing { source_str }
            | AcquireError::Copy { source_str, .. }
            | AcquireError::Clone { source_str, .. } => source_str,
        }
    }
}

/// Directory name under the workdir for a plugin id. Ids that are not
/// already filesystem-safe get a hash suffix so distinct ids never collide.
pub fn plugin_dir_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if safe == id && safe != "." && safe != ".." && !safe.starts_with('.') {
        safe
    } else {
        let digest = hex::encode(Sha256::digest(id.as_bytes()));
        format!("{}-{}", safe.trim_start_matches('.'), &digest[..8])
    }
}

pub fn materialized_dir(workdir: &Path, id: &str) -> PathBuf {
    workdir.join(plugin_dir_name(id))
}

/// Materializes a plugin's source under `workdir/<id>/`. Local paths are
/// copied (relative paths resolve against `base_dir`); URLs are shallow
/// cloned with `git`. An existing archive directory at the destination is
/// preserved, everything else there is replaced.
pub fn acquire(
    record: &PluginRecord,
    workdir: &Path,
    base_dir: &Path,
) -> Result<PathBuf, AcquireError> {
    let dest = materialized_dir(workdir, &record.id);
    let source_str = record.source.clone();
    let io_err = |err: io::Error| AcquireError::Copy {
        source_str: source_str.clone(),
        err,
    };

    if is_url(&record.source) {
        fs::create_dir_all(workdir).map_err(io_err)?;
        let staging = workdir.join(format!(".clone-{}", plugin_dir_name(&record.id)));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io_err)?;
        }
        let output = Command::new("git")
            .args(["clone", "--depth", "1", "--quiet", "--"])
            .arg(record.source.trim())
            .arg(&staging)
            .env("GIT_TERMINAL_PROMPT", "0")
            .output()
            .map_err(|e| AcquireError::Clone {
                source_str: source_str.clone(),
                message: e.to_string(),
            })?;
        if !output.status.success() {
            let _ = fs::remove_dir_all(&staging);
            return Err(AcquireError::Clone {
                source_str,
                message: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        clear_dir_keep_archive(&dest).map_err(io_err)?;
        for entry in fs::read_dir(&staging).map_err(io_err)? {
            let entry = entry.map_err(io_err)?;
            if entry.file_name() == ARCHIVE_DIR_NAME {
                continue;
            }
            fs::rename(entry.path(), dest.join(entry.file_name())).map_err(io_err)?;
        }
        fs::remove_dir_all(&staging).map_err(io_err)?;
        return Ok(dest);
    }

    let src = {
        let p = Path::new(record.source.trim());
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };
    if !src.is_dir() {
        return Err(AcquireError::Missing { source_str });
    }
    clear_dir_keep_archive(&dest).map_err(io_err)?;
    let walker = WalkDir::new(&src)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !(e.depth() == 1 && e.file_name() == ARCHIVE_DIR_NAME));
    for entry in walker {
        let entry = entry.map_err(|e| io_err(e.into()))?;
        let rel = entry
            .path()
            .strip_prefix(&src)
            .expect("walk stays under root");
        if rel.as_os_str().is_empty() {
            continue;
        }
        let target = dest.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            fs::create_dir_all(&target).map_err(io_err)?;
        } else if ft.is_file() {
            fs::copy(entry.path(), &target).map_err(io_err)?;
        }
        // symlinks are not followed or recreated
    }
    Ok(dest)
}

fn clear_dir_keep_archive(dir: &Path) -> io::Result<()> {
    if dir.exists() {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            if entry.file_name() == ARCHIVE_DIR_NAME {
                continue;
            }
            if entry.file_type()?.is_dir() {
                fs::remove_dir_all(entry.path())?;
            } else {
                fs::remove_file(entry.path())?;
            }
        }
    }
    fs::create_dir_all(dir)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneConfig {
    pub prune_dirs: BTreeSet<String>,
    pub max_file_bytes: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            prune_dirs: DEFAULT_PRUNE.iter().map(|s| s.to_string()).collect(),
            max_file_bytes: DEFAULT_MAX_FILE_BYTES,
        }
    }
}

impl PruneConfig {
    /// Builds a prune set from a comma separated list, replacing the default.
    pub fn with_prune_list(mut self, list: &str) -> Self {
        self.prune_dirs = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    PrunedDir,
    Oversize,
    Binary,
    Unreadable,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::PrunedDir => "pruned-dir",
            SkipReason::Oversize => "oversize",
            SkipReason::Binary => "binary",
            SkipReason::Unreadable => "unreadable",
        })
    }
}

/// A retained file with its normalized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeFile {
    pub path: String,
    pub len: u64,
    pub hash: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedTree {
    pub root: PathBuf,
    /// Sorted by path.
    pub files: Vec<TreeFile>,
    pub skipped: Vec<(String, SkipReason)>,
    /// Files that contained invalid UTF-8 and were decoded with replacement.
    pub lossy: Vec<String>,
}

/// Decodes bytes as UTF-8 (replacing invalid sequences), drops a leading
/// byte-order mark and converts CRLF and lone CR to LF. Returns the text and
/// whether replacement happened.
pub fn normalize_text(bytes: &[u8]) -> (String, bool) {
    let decoded = String::from_utf8_lossy(bytes);
    let lossy = matches!(decoded, Cow::Owned(_));
    let text = decoded.strip_prefix('\u{feff}').unwrap_or(&decoded);
    let out = if text.contains('\r') {
        text.replace("\r\n", "\n").replace('\r', "\n")
    } else {
        text.to_string()
    };
    (out, lossy)
}

pub fn content_hash(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn rel_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Walks `root`, classifying every regular file as retained or skipped.
/// Retained files carry normalized UTF-8/LF content. The tree on disk is
/// not modified.
pub fn normalize_tree(root: &Path, config: &PruneConfig) -> io::Result<NormalizedTree> {
    if !root.is_dir() {
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{} is not a directory", root.display()),
        ));
    }
    let mut files = Vec::new();
    let mut skipped = Vec::new();
    let mut lossy = Vec::new();

    let mut walker = WalkDir::new(root).follow_links(false).into_iter();
    while let Some(entry) = walker.next() {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                if let Some(path) = err.path() {
                    if path.is_file() {
                        skipped.push((rel_path(root, path), SkipReason::Unreadable));
                    }
                }
                continue;
            }
        };
        let ft = entry.file_type();
        if ft.is_dir() {
            // our own run archives are not part of the plugin
            if entry.depth() == 1 && entry.file_name() == ARCHIVE_DIR_NAME {
                walker.skip_current_dir();
                continue;
            }
            if entry.depth() > 0
                && config
                    .prune_dirs
                    .contains(entry.file_name().to_string_lossy().as_ref())
            {
                walker.skip_current_dir();
                record_pruned(root, entry.path(), &mut skipped);
            }
            continue;
        }
        if !ft.is_file() {
            continue;
        }
        let rel = rel_path(root, entry.path());
        let size = match entry.metadata() {
            Ok(m) => m.len(),
            Err(_) => {
                skipped.push((rel, SkipReason::Unreadable));
                continue;
            }
        };
        if size > config.max_file_bytes {
            skipped.push((rel, SkipReason::Oversize));
            continue;
        }
        let bytes = match fs::read(entry.path()) {
            Ok(b) => b,
            Err(_) => {
                skipped.push((rel, SkipReason::Unreadable));
                continue;
            }
        };
        if bytes.len() as u64 > config.max_file_bytes {
            skipped.push((rel, SkipReason::Oversize));
            continue;
        }
        if bytes[..bytes.len().min(BINARY_SNIFF_BYTES)].contains(&0) {
            skipped.push((rel, SkipReason::Binary));
            continue;
        }
        let (content, was_lossy) = normalize_text(&bytes);
        if was_lossy {
            lossy.push(rel.clone());
        }
        files.push(TreeFile {
            len: content.len() as u64,
            hash: content_hash(content.as_bytes()),
            path: rel,
            content,
        });
    }

    files.sort_by(|a, b| a.path.cmp(&b.path));
    skipped.sort();
    lossy.sort();
    Ok(NormalizedTree {
        root: root.to_path_buf(),
        files,
        skipped,
        lossy,
    })
}

fn record_pruned(root: &Path, dir: &Path, skipped: &mut Vec<(String, SkipReason)>) {
    for entry in WalkDir::new(dir).follow_links(false).into_iter().flatten() {
        if entry.file_type().is_file() {
            skipped.push((rel_path(root, entry.path()), SkipReason::PrunedDir));
        }
    }
}
