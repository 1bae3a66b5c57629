//! Run exports: canonical JSON, Markdown reports, chart CSVs and per-plugin
//! archives.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregate::{aggregate, AggregateError, AggregateReport, DiffReport, TableRow};
use crate::corpus::{DroppedRecord, PluginRecord, ARCHIVE_DIR_NAME};
use crate::detect::{PluginScanResult, ScanStatus};
use crate::sigdb::{Provenance, ResourceCategory, Signature, SignatureDb};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedEntry {
    pub id: String,
    pub source: String,
    pub reason: String,
}

impl From<&DroppedRecord> for DroppedEntry {
    fn from(d: &DroppedRecord) -> Self {
        DroppedEntry {
            id: d.record.id.clone(),
            source: d.record.source.clone(),
            reason: d.reason.clone(),
        }
    }
}

/// Everything a run produced. The active signatures and the scanned corpus
/// records are embedded so findings and aggregates can be rechecked from the
/// export alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunExport {
    pub schema_version: u32,
    pub run_id: String,
    pub timestamp: String,
    pub db_provenance: Vec<Provenance>,
    pub signatures: Vec<Signature>,
    pub manifest_digest: String,
    pub corpus: Vec<PluginRecord>,
    pub dropped: Vec<DroppedEntry>,
    pub plugins: Vec<PluginScanResult>,
    pub aggregates: AggregateReport,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("malformed run export: {0}")]
    Parse(String),
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Version { found: u64 },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

#[derive(Debug, Error)]
#[error("invalid RFC 3339 timestamp \"{0}\"")]
pub struct TimestampError(pub String);

/// Current UTC time, or the pinned value normalized to UTC.
pub fn utc_timestamp(pinned: Option<&str>) -> Result<String, TimestampError> {
    let time = match pinned {
        Some(p) => DateTime::parse_from_rfc3339(p)
            .map_err(|_| TimestampError(p.to_string()))?
            .with_timezone(&Utc),
        None => Utc::now(),
    };
    Ok(time.to_rfc3339_opts(SecondsFormat::AutoSi, true))
}

impl RunExport {
    /// Assembles a run and computes its aggregates. The run id combines the
    /// timestamp with a digest of the run's inputs and results, so identical
    /// runs at the same instant share an id.
    pub fn assemble(
        timestamp: String,
        db: &SignatureDb,
        manifest_digest: String,
        corpus: Vec<PluginRecord>,
        dropped: &[DroppedRecord],
        plugins: Vec<PluginScanResult>,
    ) -> Result<Self, AggregateError> {
        let aggregates = aggregate(&plugins, &corpus)?;
        let mut run = RunExport {
            schema_version: SCHEMA_VERSION,
            run_id: String::new(),
            timestamp,
            db_provenance: db.provenance.clone(),
            signatures: db.signatures.clone(),
            manifest_digest,
            corpus,
            dropped: dropped.iter().map(DroppedEntry::from).collect(),
            plugins,
            aggregates,
        };
        run.run_id = run.compute_run_id();
        Ok(run)
    }

    fn compute_run_id(&self) -> String {
        let compact = DateTime::parse_from_rfc3339(&self.timestamp)
            .map(|t| t.with_timezone(&Utc).format("%Y%m%dT%H%M%SZ").to_string())
            .unwrap_or_else(|_| "undated".to_string());
        let mut hasher = Sha256::new();
        hasher.update(self.timestamp.as_bytes());
        hasher.update(self.manifest_digest.as_bytes());
        hasher.update(serde_json::to_vec(&self.signatures).expect("serializable"));
        hasher.update(serde_json::to_vec(&self.plugins).expect("serializable"));
        let digest = hex::encode(hasher.finalize());
        format!("{compact}-{}", &digest[..8])
    }

    pub fn total_findings(&self) -> usize {
        self.plugins.iter().map(|p| p.findings.len()).sum()
    }

    pub fn signature(&self, id: &str) -> Option<&Signature> {
        self.signatures.iter().find(|s| s.id == id)
    }

    /// The run restricted to one plugin, with aggregates recomputed over
    /// that plugin alone.
    pub fn slice_for_plugin(&self, plugin_id: &str) -> Option<RunExport> {
        let result = self
            .plugins
            .iter()
            .find(|p| p.plugin_id == plugin_id)?
            .clone();
        let corpus: Vec<PluginRecord> = self
            .corpus
            .iter()
            .filter(|r| r.id == plugin_id)
            .cloned()
            .collect();
        let plugins = vec![result];
        let aggregates = aggregate(&plugins, &corpus).ok()?;
        Some(RunExport {
            schema_version: self.schema_version,
            run_id: self.run_id.clone(),
            timestamp: self.timestamp.clone(),
            db_provenance: self.db_provenance.clone(),
            signatures: self.signatures.clone(),
            manifest_digest: self.manifest_digest.clone(),
            corpus,
            dropped: Vec::new(),
            plugins,
            aggregates,
        })
    }
}

/// Canonical JSON: keys sorted, two-space indent, LF, trailing newline.
pub fn export_json(run: &RunExport, pinned_timestamp: Option<&str>) -> Vec<u8> {
    let mut value = serde_json::to_value(run).expect("run export serializes");
    if let Some(ts) = pinned_timestamp {
        value["timestamp"] = serde_json::Value::String(ts.to_string());
    }
    // serde_json's default map is ordered by key
    let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
    out.push('\n');
    out.into_bytes()
}

pub fn parse_export(bytes: &[u8]) -> Result<RunExport, ExportError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| ExportError::Parse(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ExportError::Parse("missing schema_version".to_string()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(ExportError::Version { found: version });
    }
    serde_json::from_value(value).map_err(|e| ExportError::Parse(e.to_string()))
}

fn md_cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

fn push_table_rows(out: &mut String, first_header: &str, rows: &[TableRow]) {
    let _ = writeln!(
        out,
        "| {first_header} | File | Memory | Network | System | Total |"
    );
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for row in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            md_cell(&row.label),
            row.counts.file,
            row.counts.memory,
            row.counts.network,
            row.counts.system,
            row.total
        );
    }
}

/// Markdown report with five sections: run summary, threat type
/// distribution, calls by application category, calls by star range and
/// per-plugin findings.
pub fn render_markdown(run: &RunExport) -> String {
    let agg = &run.aggregates;
    let mut out = String::new();
    out.push_str("# MCP Server Audit Report\n\n");
    let _ = writeln!(out, "Run `{}` at {}.\n", run.run_id, run.timestamp);

    out.push_str("## Run Summary\n\n");
    out.push_str("| Metric | Value |\n|---|---:|\n");
    let _ = writeln!(out, "| Corpus size | {} |", agg.corpus_size);
    let _ = writeln!(out, "| Unacquired | {} |", agg.unacquired);
    let _ = writeln!(out, "| Dropped as duplicates | {} |", run.dropped.len());
    let _ = writeln!(out, "| Total findings | {} |", run.total_findings());
    let unacquired: Vec<&PluginScanResult> = run
        .plugins
        .iter()
        .filter(|p| p.status == ScanStatus::Unacquired)
        .collect();
    if !unacquired.is_empty() {
        out.push_str("\nUnacquired plugins:\n\n");
        for p in unacquired {
            let _ = writeln!(
                out,
                "- `{}`: {}",
                p.plugin_id,
                md_cell(p.error.as_deref().unwrap_or("unknown error"))
            );
        }
    }
    if !run.dropped.is_empty() {
        out.push_str("\nDropped records:\n\n");
        for d in &run.dropped {
            let _ = writeln!(out, "- `{}`: {}", d.id, md_cell(&d.reason));
        }
    }

    out.push_str("\n## Threat Type Distribution\n\n");
    out.push_str("| Category | Servers affected |\n|---|---:|\n");
    for c in ResourceCategory::ALL {
        let _ = writeln!(out, "| {} | {} |", c, agg.servers_affected.get(c));
    }

    out.push_str("\n## API Calls by Application Category\n\n");
    push_table_rows(&mut out, "Application category", &agg.calls_by_category);

    out.push_str("\n## API Calls by Star Range\n\n");
    push_table_rows(&mut out, "Star range", &agg.calls_by_stars);

    out.push_str("\n## Per-Plugin Findings\n");
    let mut any = false;
    for p in run.plugins.iter().filter(|p| !p.findings.is_empty()) {
        any = true;
        let _ = writeln!(out, "\n### `{}`\n", p.plugin_id);
        out.push_str("| Location | Signature | Category | Matched text | Mode |\n");
        out.push_str("|---|---|---|---|---|\n");
        for f in &p.findings {
            let low = run
                .signature(&f.signature_id)
                .is_some_and(|s| s.pattern.is_low_specificity());
            let _ = writeln!(
                out,
                "| `{}:{}:{}` | `{}`{} | {} | `{}` | {} |",
                md_cell(&f.file),
                f.line,
                f.column,
                f.signature_id,
                if low { " (low-specificity)" } else { "" },
                f.category,
                md_cell(&f.matched_text),
                f.mode
            );
        }
    }
    if !any {
        out.push_str("\nNo findings.\n");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartView {
    /// Servers affected per resource category.
    Fig2,
    /// Calls per application category.
    Table2,
    /// Calls per star range.
    Table3,
}

pub fn emit_chart_csv(run: &RunExport, view: ChartView) -> String {
    let agg = &run.aggregates;
    let mut out = String::new();
    let rows = match view {
        ChartView::Fig2 => {
            out.push_str("category,servers_affected\n");
            for c in ResourceCategory::ALL {
                let _ = writeln!(out, "{},{}", c, agg.servers_affected.get(c));
            }
            return out;
        }
        ChartView::Table2 => {
            out.push_str("app_category,file,memory,network,system,total\n");
            &agg.calls_by_category
        }
        ChartView::Table3 => {
            out.push_str("star_range,file,memory,network,system,total\n");
            &agg.calls_by_stars
        }
    };
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.label, r.counts.file, r.counts.memory, r.counts.network, r.counts.system, r.total
        );
    }
    out
}

pub fn archive_path(archive_root: &Path, run_id: &str) -> PathBuf {
    archive_root
        .join(ARCHIVE_DIR_NAME)
        .join(format!("run-{run_id}.json"))
}

/// Writes the plugin's slice of the run to
/// `<archive_root>/.mcp-audit/run-<run_id>.json`. Earlier archives are kept.
pub fn archive_run(run: &RunExport, plugin_id: &str, archive_root: &Path) -> io::Result<PathBuf> {
    let slice = run.slice_for_plugin(plugin_id).ok_or_else(|| {
        io::Error::new(
            io::ErrorKind::NotFound,
            format!("plugin \"{plugin_id}\" is not part of run {}", run.run_id),
        )
    })?;
    let path = archive_path(archive_root, &run.run_id);
    fs::create_dir_all(path.parent().expect("archive path has a parent"))?;
    fs::write(&path, export_json(&slice, None))?;
    Ok(path)
}

fn signed(n: i64) -> String {
    if n > 0 {
        format!("+{n}")
    } else {
        n.to_string()
    }
}

pub fn render_diff_markdown(diff: &DiffReport) -> String {
    let mut out = String::from("# Run Diff\n\n");
    if diff.is_empty() {
        out.push_str("No changes.\n");
        return out;
    }
    out.push_str("| Category | Findings | Servers affected |\n|---|---:|---:|\n");
    for c in ResourceCategory::ALL {
        let _ = writeln!(
            out,
            "| {} | {} | {} |",
            c,
            signed(diff.finding_deltas.get(c)),
            signed(diff.servers_affected_deltas.get(c))
        );
    }
    for p in &diff.plugins {
        let _ = writeln!(
            out,
            "\n## `{}` (+{} / -{})\n",
            p.plugin_id,
            p.added.len(),
            p.removed.len()
        );
        for (sign, entries) in [("+", &p.added), ("-", &p.removed)] {
            for e in entries {
                let _ = writeln!(
                    out,
                    "- {sign} `{}:{}:{}` `{}` {} `{}`",
                    md_cell(&e.file),
                    e.line,
                    e.column,
                    e.signature_id,
                    e.category,
                    md_cell(&e.matched_text)
                );
            }
        }
    }
    out
}
