//! Static scanner that audits MCP server repositories for security-sensitive
//! API usage across file, memory, network and system resources, and
//! aggregates the results per resource category, application category and
//! popularity range.
//!
//! The pipeline is: [`corpus`] (manifest, acquisition, normalization) →
//! [`lexscan`] (call-site extraction) → [`detect`] (signature matching) →
//! [`aggregate`] → [`report`].

pub mod aggregate;
pub mod corpus;
pub mod detect;
pub mod lexscan;
pub mod report;
pub mod sigdb;

pub use aggregate::{
    bucket_for_stars, diff_runs, AggregateReport, DiffReport, Dimension, ResourceCounts, StarBucket,
};
pub use corpus::{
    acquire, dedup_manifest, normalize_tree, parse_manifest, ApplicationCategory, ManifestMode,
    NormalizedTree, PluginRecord, PruneConfig,
};
pub use detect::{
    match_site, scan_corpus, scan_plugin, CorpusLayout, Finding, PluginScanResult, RawFallback,
    ScanPolicy, ScanStatus,
};
pub use lexscan::{
    identify_language, lex_call_sites, raw_scan, CallSite, LanguageFamily, ScanMode,
};
pub use report::{
    archive_run, emit_chart_csv, export_json, parse_export, render_markdown, ChartView, RunExport,
};
pub use sigdb::{builtin_db, load_db, merge, Pattern, ResourceCategory, Signature, SignatureDb};
