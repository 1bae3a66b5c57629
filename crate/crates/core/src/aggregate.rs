//! Corpus-level measurement views: servers affected per resource category,
//! call counts per application category and per star range, and run-to-run
//! diffs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{content_hash, ApplicationCategory, PluginRecord};
use crate::detect::{Finding, PluginScanResult, ScanStatus};
use crate::report::{RunExport, SCHEMA_VERSION};
use crate::sigdb::ResourceCategory;

/// Popularity bucket over GitHub star counts. Bounds are inclusive; 50000
/// falls in `10001-50000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StarBucket {
    UpTo10,
    UpTo100,
    UpTo1000,
    UpTo10000,
    UpTo50000,
    Above50000,
}

impl StarBucket {
    pub const ALL: [StarBucket; 6] = [
        StarBucket::UpTo10,
        StarBucket::UpTo100,
        StarBucket::UpTo1000,
        StarBucket::UpTo10000,
        StarBucket::UpTo50000,
        StarBucket::Above50000,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StarBucket::UpTo10 => "0-10",
            StarBucket::UpTo100 => "11-100",
            StarBucket::UpTo1000 => "101-1000",
            StarBucket::UpTo10000 => "1001-10000",
            StarBucket::UpTo50000 => "10001-50000",
            StarBucket::Above50000 => "50000+",
        }
    }

    /// Inclusive lower bound and inclusive upper bound (`None` = unbounded).
    pub fn bounds(self) -> (u64, Option<u64>) {
        match self {
            StarBucket::UpTo10 => (0, Some(10)),
            StarBucket::UpTo100 => (11, Some(100)),
            StarBucket::UpTo1000 => (101, Some(1000)),
            StarBucket::UpTo10000 => (1001, Some(10000)),
            StarBucket::UpTo50000 => (10001, Some(50000)),
            StarBucket::Above50000 => (50001, None),
        }
    }
}

impl fmt::Display for StarBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn bucket_for_stars(stars: u64) -> StarBucket {
    match stars {
        0..=10 => StarBucket::UpTo10,
        11..=100 => StarBucket::UpTo100,
        101..=1000 => StarBucket::UpTo1000,
        1001..=10000 => StarBucket::UpTo10000,
        10001..=50000 => StarBucket::UpTo50000,
        _ => StarBucket::Above50000,
    }
}

/// One count per resource category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCounts {
    pub file: u64,
    pub memory: u64,
    pub network: u64,
    pub system: u64,
}

impl ResourceCounts {
    pub fn get(&self, category: ResourceCategory) -> u64 {
        match category {
            ResourceCategory::File => self.file,
            ResourceCategory::Memory => self.memory,
            ResourceCategory::Network => self.network,
            ResourceCategory::System => self.system,
        }
    }

    pub fn add(&mut self, category: ResourceCategory, n: u64) {
        match category {
            ResourceCategory::File => self.file += n,
            ResourceCategory::Memory => self.memory += n,
            ResourceCategory::Network => self.network += n,
            ResourceCategory::System => self.system += n,
        }
    }

    pub fn total(&self) -> u64 {
        self.file + self.memory + self.network + self.system
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    #[serde(flatten)]
    pub counts: ResourceCounts,
    /// Sum of the four resource cells.
    pub total: u64,
}

impl TableRow {
    fn new(label: &str, counts: ResourceCounts) -> Self {
        TableRow {
            label: label.to_string(),
            total: counts.total(),
            counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Category,
    Stars,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub servers_affected: ResourceCounts,
    pub calls_by_category: Vec<TableRow>,
    pub calls_by_stars: Vec<TableRow>,
    pub corpus_size: u64,
    pub unacquired: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("scan result for plugin \"{0}\" has no manifest record")]
    UnknownPlugin(String),
}

/// Number of plugins with at least one finding per category.
pub fn servers_affected(results: &[PluginScanResult]) -> ResourceCounts {
    let mut counts = ResourceCounts::default();
    for result in results {
        let present: BTreeSet<ResourceCategory> =
            result.findings.iter().map(|f| f.category).collect();
        for category in present {
            counts.add(category, 1);
        }
    }
    counts
}

/// Finding counts per application category or star bucket. Every row of
/// the dimension is emitted, in enumeration order, including empty rows.
pub fn calls_by_dimension(
    results: &[PluginScanResult],
    records: &[PluginRecord],
    dimension: Dimension,
) -> Result<Vec<TableRow>, AggregateError> {
    let by_id: HashMap<&str, &PluginRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    match dimension {
        Dimension::Category => {
            let mut cells: BTreeMap<ApplicationCategory, ResourceCounts> = BTreeMap::new();
            for result in results {
                let record = by_id
                    .get(result.plugin_id.as_str())
                    .ok_or_else(|| AggregateError::UnknownPlugin(result.plugin_id.clone()))?;
                let cell = cells.entry(record.category).or_default();
                for f in &result.findings {
                    cell.add(f.category, 1);
                }
            }
            Ok(ApplicationCategory::ALL
                .iter()
                .map(|c| TableRow::new(c.label(), cells.get(c).copied().unwrap_or_default()))
                .collect())
        }
        Dimension::Stars => {
            let mut cells: BTreeMap<StarBucket, ResourceCounts> = BTreeMap::new();
            for result in results {
                let record = by_id
                    .get(result.plugin_id.as_str())
                    .ok_or_else(|| AggregateError::UnknownPlugin(result.plugin_id.clone()))?;
                let cell = cells.entry(bucket_for_stars(record.stars)).or_default();
                for f in &result.findings {
                    cell.add(f.category, 1);
                }
            }
            Ok(StarBucket::ALL
                .iter()
                .map(|b| TableRow::new(b.label(), cells.get(b).copied().unwrap_or_default()))
                .collect())
        }
    }
}

pub fn aggregate(
    results: &[PluginScanResult],
    records: &[PluginRecord],
) -> Result<AggregateReport, AggregateError> {
    Ok(AggregateReport {
        servers_affected: servers_affected(results),
        calls_by_category: calls_by_dimension(results, records, Dimension::Category)?,
        calls_by_stars: calls_by_dimension(results, records, Dimension::Stars)?,
        corpus_size: results.len() as u64,
        unacquired: results
            .iter()
            .filter(|r| r.status == ScanStatus::Unacquired)
            .count() as u64,
    })
}

/// Signed per-category change.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountDeltas {
    pub file: i64,
    pub memory: i64,
    pub network: i64,
    pub system: i64,
}

impl CountDeltas {
    fn between(previous: &ResourceCounts, current: &ResourceCounts) -> Self {
        let d = |c| current.get(c) as i64 - previous.get(c) as i64;
        CountDeltas {
            file: d(ResourceCategory::File),
            memory: d(ResourceCategory::Memory),
            network: d(ResourceCategory::Network),
            system: d(ResourceCategory::System),
        }
    }

    pub fn get(&self, category: ResourceCategory) -> i64 {
        match category {
            ResourceCategory::File => self.file,
            ResourceCategory::Memory => self.memory,
            ResourceCategory::Network => self.network,
            ResourceCategory::System => self.system,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == CountDeltas::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub file: String,
    pub signature_id: String,
    pub category: ResourceCategory,
    pub matched_text: String,
    /// Location in the run the entry comes from (current for additions,
    /// previous for removals). Not part of the identity key.
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluginDiff {
    pub plugin_id: String,
    pub added: Vec<DiffEntry>,
    pub removed: Vec<DiffEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    /// Only plugins with at least one added or removed finding, by id.
    pub plugins: Vec<PluginDiff>,
    pub finding_deltas: CountDeltas,
    pub servers_affected_deltas: CountDeltas,
}

impl DiffReport {
    pub fn is_empty(&self) -> bool {
        self.plugins.is_empty()
            && self.finding_deltas.is_zero()
            && self.servers_affected_deltas.is_zero()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("schema version mismatch: previous {previous}, current {current}, supported {SCHEMA_VERSION}")]
    SchemaMismatch { previous: u32, current: u32 },
}

type DiffKey = (String, String, String);

fn diff_key(f: &Finding) -> DiffKey {
    (
        f.file.clone(),
        f.signature_id.clone(),
        content_hash(f.matched_text.as_bytes()),
    )
}

fn entry(f: &Finding) -> DiffEntry {
    DiffEntry {
        file: f.file.clone(),
        signature_id: f.signature_id.clone(),
        category: f.category,
        matched_text: f.matched_text.clone(),
        line: f.line,
        column: f.column,
    }
}

fn group(findings: &[Finding]) -> BTreeMap<DiffKey, Vec<&Finding>> {
    let mut map: BTreeMap<DiffKey, Vec<&Finding>> = BTreeMap::new();
    for f in findings {
        map.entry(diff_key(f)).or_default().push(f);
    }
    map
}

/// Compares two runs. Findings are keyed by file, signature and a hash of
/// the matched text, so moving a call to another line is not a change.
/// Keys are compared as multisets.
pub fn diff_runs(previous: &RunExport, current: &RunExport) -> Result<DiffReport, DiffError> {
    if previous.schema_version != SCHEMA_VERSION || current.schema_version != SCHEMA_VERSION {
        return Err(DiffError::SchemaMismatch {
            previous: previous.schema_version,
            current: current.schema_version,
        });
    }
    let findings_of = |run: &RunExport| -> BTreeMap<String, Vec<Finding>> {
        run.plugins
            .iter()
            .map(|p| (p.plugin_id.clone(), p.findings.clone()))
            .collect()
    };
    let prev = findings_of(previous);
    let cur = findings_of(current);
    let ids: BTreeSet<&String> = prev.keys().chain(cur.keys()).collect();

    let empty = Vec::new();
    let mut plugins = Vec::new();
    let mut finding_deltas = CountDeltas::default();
    for id in ids {
        let before = group(prev.get(id).unwrap_or(&empty));
        let after = group(cur.get(id).unwrap_or(&empty));
        let mut added = Vec::new();
        let mut removed = Vec::new();
        let keys: BTreeSet<&DiffKey> = before.keys().chain(after.keys()).collect();
        for key in keys {
            let b = before.get(key).map_or(&[][..], Vec::as_slice);
            let a = after.get(key).map_or(&[][..], Vec::as_slice);
            if a.len() > b.len() {
                added.extend(a[b.len()..].iter().map(|f| entry(f)));
            } else if b.len() > a.len() {
                removed.extend(b[a.len()..].iter().map(|f| entry(f)));
            }
        }
        if added.is_empty() && removed.is_empty() {
            continue;
        }
        let order = |x: &DiffEntry, y: &DiffEntry| {
            (&x.file, x.line, x.column, &x.signature_id).cmp(&(
                &y.file,
                y.line,
                y.column,
                &y.signature_id,
            ))
        };
        added.sort_by(order);
        removed.sort_by(order);
        for e in &added {
            bump(&mut finding_deltas, e.category, 1);
        }
        for e in &removed {
            bump(&mut finding_deltas, e.category, -1);
        }
        plugins.push(PluginDiff {
            plugin_id: id.clone(),
            added,
            removed,
        });
    }

    Ok(DiffReport {
        plugins,
        finding_deltas,
        servers_affected_deltas: CountDeltas::between(
            &previous.aggregates.servers_affected,
            &current.aggregates.servers_affected,
        ),
    })
}

fn bump(d: &mut CountDeltas, category: ResourceCategory, by: i64) {
    match category {
        ResourceCategory::File => d.file += by,
        ResourceCategory::Memory => d.memory += by,
        ResourceCategory::Network => d.network += by,
        ResourceCategory::System => d.system += by,
    }
}
