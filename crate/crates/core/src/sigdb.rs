//! Signature databases: the API patterns that count as security-sensitive
//! resource access, grouped into four resource categories.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const DB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ResourceCategory {
    File,
    Memory,
    Network,
    System,
}

impl ResourceCategory {
    pub const ALL: [ResourceCategory; 4] = [
        ResourceCategory::File,
        ResourceCategory::Memory,
        ResourceCategory::Network,
        ResourceCategory::System,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceCategory::File => "FILE",
            ResourceCategory::Memory => "MEMORY",
            ResourceCategory::Network => "NETWORK",
            ResourceCategory::System => "SYSTEM",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ResourceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a signature targets call sites or import statements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteKind {
    Call,
    Import,
}

/// Language selector in a signature's `languages` list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LanguageSel {
    #[serde(rename = "*")]
    Any,
    #[serde(rename = "python")]
    Python,
    #[serde(rename = "c-family")]
    CFamily,
}

impl LanguageSel {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "*" => Some(LanguageSel::Any),
            "python" => Some(LanguageSel::Python),
            "c-family" => Some(LanguageSel::CFamily),
            _ => None,
        }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A dotted API path split into identifier segments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern(Vec<String>);

pub const MAX_PATTERN_SEGMENTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("empty segment")]
    EmptySegment,
    #[error("segment \"{0}\" is not an identifier")]
    BadSegment(String),
    #[error("more than {MAX_PATTERN_SEGMENTS} segments")]
    TooLong,
}

impl Pattern {
    pub fn parse(text: &str) -> Result<Self, PatternError> {
        let segments: Vec<&str> = text.split('.').collect();
        if segments.len() > MAX_PATTERN_SEGMENTS {
            return Err(PatternError::TooLong);
        }
        for seg in &segments {
            if seg.is_empty() {
                return Err(PatternError::EmptySegment);
            }
            if !is_identifier(seg) {
                return Err(PatternError::BadSegment(seg.to_string()));
            }
        }
        Ok(Pattern(segments.into_iter().map(str::to_string).collect()))
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn dotted(&self) -> String {
        self.0.join(".")
    }

    /// Single-segment patterns such as `read` match very broadly.
    pub fn is_low_specificity(&self) -> bool {
        self.0.len() == 1
    }

    /// Segment-aligned suffix test: the last `k` segments of `site` equal
    /// the `k` pattern segments.
    pub fn is_suffix_of<S: AsRef<str>>(&self, site: &[S]) -> bool {
        let k = self.0.len();
        site.len() >= k
            && site[site.len() - k..]
                .iter()
                .zip(&self.0)
                .all(|(a, b)| a.as_ref() == b)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dotted())
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.dotted())
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Pattern::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub id: String,
    pub category: ResourceCategory,
    pub pattern: Pattern,
    pub kind: SiteKind,
    pub languages: Vec<LanguageSel>,
    pub risk: String,
}

impl Signature {
    pub fn applies_to(&self, language: LanguageSel) -> bool {
        self.languages
            .iter()
            .any(|l| *l == LanguageSel::Any || *l == language)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureDb {
    pub version: u32,
    pub signatures: Vec<Signature>,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Error)]
pub enum DbError {
    #[error("failed to read signature database: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed signature database: {0}")]
    Parse(String),
    #[error("signature \"{id}\": invalid `{field}`: {message}")]
    Invalid {
        id: String,
        field: &'static str,
        message: String,
    },
    #[error("duplicate signature id \"{0}\"")]
    DuplicateId(String),
}

/// On-disk document shape.
#[derive(Serialize, Deserialize)]
struct DbDocument<S> {
    version: u32,
    signatures: Vec<S>,
}

#[derive(Deserialize)]
struct RawSignature {
    id: Option<String>,
    category: Option<String>,
    pattern: Option<String>,
    kind: Option<String>,
    languages: Option<Vec<String>>,
    risk: Option<String>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '_' | '.' | '-'))
}

fn validate(raw: RawSignature, index: usize) -> Result<Signature, DbError> {
    let id = raw.id.unwrap_or_default();
    let label = if id.is_empty() {
        format!("#{index}")
    } else {
        id.clone()
    };
    let invalid = |field: &'static str, message: String| DbError::Invalid {
        id: label.clone(),
        field,
        message,
    };
    if !valid_id(&id) {
        return Err(invalid("id", "must match [a-z0-9_.-]+".to_string()));
    }
    let category = raw
        .category
        .as_deref()
        .ok_or_else(|| invalid("category", "missing".to_string()))
        .and_then(|c| {
            ResourceCategory::parse(c)
                .ok_or_else(|| invalid("category", format!("unknown category \"{c}\"")))
        })?;
    let pattern = raw
        .pattern
        .as_deref()
        .ok_or_else(|| invalid("pattern", "missing".to_string()))
        .and_then(|p| Pattern::parse(p).map_err(|e| invalid("pattern", e.to_string())))?;
    let kind = match raw.kind.as_deref() {
        Some("call") => SiteKind::Call,
        Some("import") => SiteKind::Import,
        Some(other) => return Err(invalid("kind", format!("unknown kind \"{other}\""))),
        None => return Err(invalid("kind", "missing".to_string())),
    };
    let languages = raw
        .languages
        .ok_or_else(|| invalid("languages", "missing".to_string()))?;
    if languages.is_empty() {
        return Err(invalid("languages", "must be nonempty".to_string()));
    }
    let languages = languages
        .iter()
        .map(|l| {
            LanguageSel::parse(l)
                .ok_or_else(|| invalid("languages", format!("unknown language \"{l}\"")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Signature {
        id,
        category,
        pattern,
        kind,
        languages,
        risk: raw.risk.unwrap_or_default(),
    })
}

/// Loads and validates a signature database document. `source_name` is
/// recorded in the provenance list.
pub fn load_db<R: Read>(mut input: R, source_name: &str) -> Result<SignatureDb, DbError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let doc: DbDocument<RawSignature> =
        serde_json::from_str(&text).map_err(|e| DbError::Parse(e.to_string()))?;
    if doc.version == 0 {
        return Err(DbError::Parse(
            "version must be a positive integer".to_string(),
        ));
    }
    let mut seen = HashSet::new();
    let mut signatures = Vec::with_capacity(doc.signatures.len());
    for (i, raw) in doc.signatures.into_iter().enumerate() {
        let sig = validate(raw, i)?;
        if !seen.insert(sig.id.clone()) {
            return Err(DbError::DuplicateId(sig.id));
        }
        signatures.push(sig);
    }
    Ok(SignatureDb {
        version: doc.version,
        provenance: vec![Provenance {
            source: source_name.to_string(),
            count: signatures.len(),
        }],
        signatures,
    })
}

const BUILTIN: &[(&str, ResourceCategory, &str, &str)] = &[
    (
        "file.open",
        ResourceCategory::File,
        "open",
        "unauthorized file access, hardcoded paths",
    ),
    (
        "file.read",
        ResourceCategory::File,
        "read",
        "unauthorized file access, TOCTOU race conditions",
    ),
    (
        "file.write",
        ResourceCategory::File,
        "write",
        "unauthorized file modification, TOCTOU race conditions",
    ),
    (
        "file.shutil_copy",
        ResourceCategory::File,
        "shutil.copy",
        "unrestricted file copying",
    ),
    (
        "file.image_open",
        ResourceCategory::File,
        "Image.open",
        "untrusted image file parsing",
    ),
    (
        "file.load_dotenv",
        ResourceCategory::File,
        "load_dotenv",
        "credential exposure through environment files",
    ),
    (
        "sys.os_system",
        ResourceCategory::System,
        "os.system",
        "command injection (RCE)",
    ),
    (
        "sys.subprocess_call",
        ResourceCategory::System,
        "subprocess.call",
        "command injection (RCE), improper process management",
    ),
    (
        "sys.subprocess_run",
        ResourceCategory::System,
        "subprocess.run",
        "command injection (RCE), privilege escalation",
    ),
    (
        "sys.fork",
        ResourceCategory::System,
        "fork",
        "improper process management",
    ),
    (
        "sys.exec",
        ResourceCategory::System,
        "exec",
        "arbitrary code or command execution",
    ),
    (
        "net.socket_bind",
        ResourceCategory::Network,
        "socket.bind",
        "open high-risk ports",
    ),
    (
        "net.connect",
        ResourceCategory::Network,
        "connect",
        "unencrypted communications",
    ),
    (
        "net.dns_resolver_query",
        ResourceCategory::Network,
        "dns.resolver.query",
        "DNS hijacking",
    ),
    (
        "net.post",
        ResourceCategory::Network,
        "post",
        "data exfiltration over outbound requests",
    ),
    (
        "net.openai",
        ResourceCategory::Network,
        "OPENAI",
        "query interception via external model APIs",
    ),
    (
        "mem.strcpy",
        ResourceCategory::Memory,
        "strcpy",
        "buffer overflow",
    ),
    (
        "mem.malloc",
        ResourceCategory::Memory,
        "malloc",
        "unchecked allocation, buffer overflow",
    ),
    (
        "mem.ctypes_cdll",
        ResourceCategory::Memory,
        "ctypes.CDLL",
        "malicious library injection",
    ),
    (
        "mem.create_string_buffer",
        ResourceCategory::Memory,
        "create_string_buffer",
        "fixed buffer overflow",
    ),
];

pub const BUILTIN_SOURCE: &str = "builtin";

/// The embedded default database, sorted by id.
pub fn builtin_db() -> SignatureDb {
    let mut signatures: Vec<Signature> = BUILTIN
        .iter()
        .map(|&(id, category, pattern, risk)| Signature {
            id: id.to_string(),
            category,
            pattern: Pattern::parse(pattern).expect("builtin patterns are valid"),
            kind: SiteKind::Call,
            languages: vec![LanguageSel::Any],
            risk: risk.to_string(),
        })
        .collect();
    signatures.sort_by(|a, b| a.id.cmp(&b.id));
    SignatureDb {
        version: DB_FORMAT_VERSION,
        provenance: vec![Provenance {
            source: BUILTIN_SOURCE.to_string(),
            count: signatures.len(),
        }],
        signatures,
    }
}

/// Overlays `overlay` onto `base`: same ids are replaced, new ids added.
/// The result is sorted by id.
pub fn merge(base: &SignatureDb, overlay: &SignatureDb) -> SignatureDb {
    let mut signatures = base.signatures.clone();
    for sig in &overlay.signatures {
        match signatures.iter_mut().find(|s| s.id == sig.id) {
            Some(slot) => *slot = sig.clone(),
            None => signatures.push(sig.clone()),
        }
    }
    signatures.sort_by(|a, b| a.id.cmp(&b.id));
    SignatureDb {
        version: base.version.max(overlay.version),
        signatures,
        provenance: base
            .provenance
            .iter()
            .chain(&overlay.provenance)
            .cloned()
            .collect(),
    }
}

impl SignatureDb {
    pub fn get(&self, id: &str) -> Option<&Signature> {
        self.signatures.iter().find(|s| s.id == id)
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Serializes to the on-disk document format (no provenance), pretty
    /// printed with a trailing newline.
    pub fn to_document(&self) -> String {
        let doc = DbDocument {
            version: self.version,
            signatures: self.signatures.clone(),
        };
        let value = serde_json::to_value(&doc).expect("db serializes");
        let mut out = serde_json::to_string_pretty(&value).expect("db serializes");
        out.push('\n');
        out
    }
}
