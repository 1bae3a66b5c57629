//! Signature matching over lexed sites and whole-repository scanning.

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, NormalizedTree, PluginRecord, PruneConfig};
use crate::lexscan::{self, CallSite, LanguageFamily, RawScanner, ScanMode};
use crate::sigdb::{LanguageSel, ResourceCategory, Signature, SignatureDb, SiteKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub plugin_id: String,
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub signature_id: String,
    pub category: ResourceCategory,
    pub matched_text: String,
    pub mode: ScanMode,
}

impl Finding {
    fn sort_key(&self) -> (&str, u32, u32, &str) {
        (&self.file, self.line, self.column, &self.signature_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ScanStatus {
    Scanned,
    Unacquired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluginScanResult {
    pub plugin_id: String,
    pub status: ScanStatus,
    /// Why the plugin could not be acquired, when it could not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub findings: Vec<Finding>,
    pub files_scanned: u64,
    pub files_skipped: u64,
    pub lexer_fallbacks: u64,
}

impl PluginScanResult {
    pub fn unacquired(plugin_id: &str, error: impl fmt::Display) -> Self {
        PluginScanResult {
            plugin_id: plugin_id.to_string(),
            status: ScanStatus::Unacquired,
            error: Some(error.to_string()),
            findings: Vec::new(),
            files_scanned: 0,
            files_skipped: 0,
            lexer_fallbacks: 0,
        }
    }
}

/// When the regex fallback runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RawFallback {
    /// Files the lexer rejects are skipped.
    Off,
    /// Files the lexer rejects are rescanned in RAW mode.
    #[default]
    OnError,
    /// As `OnError`, and unknown-language files are scanned in RAW mode too.
    All,
}

impl std::str::FromStr for RawFallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(RawFallback::Off),
            "on-error" => Ok(RawFallback::OnError),
            "all" => Ok(RawFallback::All),
            other => Err(format!("unknown raw fallback policy \"{other}\"")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanPolicy {
    pub jobs: usize,
    pub raw_fallback: RawFallback,
}

impl Default for ScanPolicy {
    fn default() -> Self {
        ScanPolicy {
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            raw_fallback: RawFallback::OnError,
        }
    }
}

fn family_applies(sig: &Signature, family: LanguageFamily) -> bool {
    match family.selector() {
        Some(sel) => sig.applies_to(sel),
        None => sig.languages.contains(&LanguageSel::Any),
    }
}

/// Signatures matching a site: same kind, applicable language, and pattern
/// segments forming a segment-aligned suffix of the site's segments.
/// Sorted by signature id.
pub fn match_site<'a>(
    site: &CallSite,
    db: &'a SignatureDb,
    family: LanguageFamily,
) -> Vec<(&'a str, ResourceCategory)> {
    let mut hits: Vec<(&str, ResourceCategory)> = db
        .signatures
        .iter()
        .filter(|s| {
            s.kind == site.kind
                && family_applies(s, family)
                && s.pattern.is_suffix_of(&site.segments)
        })
        .map(|s| (s.id.as_str(), s.category))
        .collect();
    hits.sort_by(|a, b| a.0.cmp(b.0));
    hits
}

/// Scans every retained file of a normalized tree.
pub fn scan_plugin(
    record: &PluginRecord,
    tree: &NormalizedTree,
    db: &SignatureDb,
    policy: &ScanPolicy,
) -> PluginScanResult {
    let mut findings = Vec::new();
    let mut files_scanned = 0u64;
    let mut files_skipped = tree.skipped.len() as u64;
    let mut lexer_fallbacks = 0u64;
    let mut raw_scanners: Vec<(LanguageFamily, RawScanner)> = Vec::new();

    for file in &tree.files {
        let family = lexscan::identify_language(&file.path);
        let (sites, mode) = match family {
            LanguageFamily::Unknown => {
                if policy.raw_fallback != RawFallback::All {
                    files_skipped += 1;
                    continue;
                }
                (
                    raw_scanner(&mut raw_scanners, db, family).scan(&file.content),
                    ScanMode::Raw,
                )
            }
            _ => match lexscan::lex_call_sites(&file.content, family) {
                Ok(sites) => (sites, ScanMode::Lexical),
                Err(_) if policy.raw_fallback == RawFallback::Off => {
                    files_skipped += 1;
                    continue;
                }
                Err(_) => {
                    lexer_fallbacks += 1;
                    (
                        raw_scanner(&mut raw_scanners, db, family).scan(&file.content),
                        ScanMode::Raw,
                    )
                }
            },
        };
        files_scanned += 1;
        for site in &sites {
            for (signature_id, category) in match_site(site, db, family) {
                findings.push(Finding {
                    plugin_id: record.id.clone(),
                    file: file.path.clone(),
                    line: site.line,
                    column: site.column,
                    signature_id: signature_id.to_string(),
                    category,
                    matched_text: site.raw_text.clone(),
                    mode,
                });
            }
        }
    }

    findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    findings.dedup_by(|a, b| a.sort_key() == b.sort_key());

    PluginScanResult {
        plugin_id: record.id.clone(),
        status: ScanStatus::Scanned,
        error: None,
        findings,
        files_scanned,
        files_skipped,
        lexer_fallbacks,
    }
}

fn raw_scanner<'s>(
    cache: &'s mut Vec<(LanguageFamily, RawScanner)>,
    db: &SignatureDb,
    family: LanguageFamily,
) -> &'s RawScanner {
    let idx = match cache.iter().position(|(f, _)| *f == family) {
        Some(i) => i,
        None => {
            let patterns = db
                .signatures
                .iter()
                .filter(|s| s.kind == SiteKind::Call && family_applies(s, family))
                .map(|s| &s.pattern);
            cache.push((family, RawScanner::new(patterns)));
            cache.len() - 1
        }
    };
    &cache[idx].1
}

/// Where and how plugins are materialized before scanning.
#[derive(Debug, Clone)]
pub struct CorpusLayout {
    pub workdir: PathBuf,
    /// Base for relative local sources, normally the manifest's directory.
    pub source_base: PathBuf,
    pub prune: PruneConfig,
}

/// Acquires, normalizes and scans one plugin. Never fails: acquisition and
/// tree errors produce an UNACQUIRED result.
pub fn scan_one(
    record: &PluginRecord,
    db: &SignatureDb,
    policy: &ScanPolicy,
    layout: &CorpusLayout,
) -> PluginScanResult {
    let root = match corpus::acquire(record, &layout.workdir, &layout.source_base) {
        Ok(root) => root,
        Err(e) => return PluginScanResult::unacquired(&record.id, e),
    };
    match corpus::normalize_tree(&root, &layout.prune) {
        Ok(tree) => scan_plugin(record, &tree, db, policy),
        Err(e) => PluginScanResult::unacquired(&record.id, e),
    }
}

/// Scans a deduplicated corpus with `policy.jobs` workers. Results are in
/// manifest order and identical to a sequential run.
pub fn scan_corpus(
    records: &[PluginRecord],
    db: &SignatureDb,
    policy: &ScanPolicy,
    layout: &CorpusLayout,
) -> Result<Vec<PluginScanResult>, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(policy.jobs.max(1))
        .build()?;
    Ok(pool.install(|| {
        records
            .par_iter()
            .map(|r| scan_one(r, db, policy, layout))
            .collect()
    }))
}
