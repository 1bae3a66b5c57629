//! `mcp-audit` command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mcp_audit_core::corpus::{self, ManifestMode, PruneConfig, DEFAULT_MAX_FILE_BYTES};
use mcp_audit_core::detect::{self, CorpusLayout, RawFallback, ScanPolicy, ScanStatus};
use mcp_audit_core::report::{self, ChartView, RunExport};
use mcp_audit_core::sigdb::{self, SignatureDb};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_DIFF_FOUND: i32 = 2;

/// Output file names written by `scan`.
pub const OUTPUT_FILES: [&str; 5] = [
    "run.json",
    "report.md",
    "fig2.csv",
    "table2.csv",
    "table3.csv",
];

#[derive(Debug, Parser)]
#[command(
    name = "mcp-audit",
    version,
    about = "Audit MCP server repositories for security-sensitive API usage"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan every plugin in a manifest and write reports.
    Scan(ScanArgs),
    /// Inspect signature databases.
    #[command(subcommand)]
    Db(DbCommand),
    /// Compare two run exports; exits 2 when they differ.
    Diff { old: PathBuf, new: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum DbCommand {
    /// Validate a signature database file.
    Validate { file: PathBuf },
    /// Print the built-in database as JSON.
    PrintBuiltin,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    /// JSON Lines manifest of plugins.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where plugin sources are materialized (default: <out>/work).
    #[arg(long)]
    pub workdir: Option<PathBuf>,
    /// Signature database overlays, applied in order over the built-in set.
    #[arg(long = "db")]
    pub db: Vec<PathBuf>,
    #[arg(long, default_value = "mcp-audit-out")]
    pub out: PathBuf,
    /// Worker threads (default: logical CPU count).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Comma separated directory names to skip, replacing the default set.
    #[arg(long)]
    pub prune: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_FILE_BYTES)]
    pub max_file_bytes: u64,
    #[arg(long, default_value = "on-error", value_parser = ["off", "on-error", "all"])]
    pub raw_fallback: String,
    /// Write each plugin's slice of the run into its archive directory.
    #[arg(long)]
    pub archive: bool,
    /// Archive under <dir>/<plugin> instead of the materialized plugin tree.
    #[arg(long)]
    pub archive_dir: Option<PathBuf>,
    /// Fixed RFC 3339 timestamp instead of the wall clock.
    #[arg(long)]
    pub timestamp: Option<String>,
    /// Ignore unknown manifest keys.
    #[arg(long)]
    pub lenient: bool,
}

/// Resolved scan configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub workdir: PathBuf,
    pub db_paths: Vec<PathBuf>,
    pub prune: PruneConfig,
    pub policy: ScanPolicy,
    pub archive: bool,
    pub archive_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub pinned_timestamp: Option<String>,
    pub manifest_mode: ManifestMode,
}

impl RunConfig {
    pub fn from_args(args: &ScanArgs) -> Result<Self> {
        let jobs = match args.jobs {
            Some(0) => bail!("--jobs must be at least 1"),
            Some(n) => n,
            None => ScanPolicy::default().jobs,
        };
        let raw_fallback: RawFallback = args.raw_fallback.parse().map_err(anyhow::Error::msg)?;
        let mut prune = PruneConfig {
            max_file_bytes: args.max_file_bytes,
            ..PruneConfig::default()
        };
        if let Some(list) = &args.prune {
            prune = prune.with_prune_list(list);
        }
        Ok(RunConfig {
            manifest_path: args.manifest.clone(),
            workdir: args
                .workdir
                .clone()
                .unwrap_or_else(|| args.out.join("work")),
            db_paths: args.db.clone(),
            prune,
            policy: ScanPolicy { jobs, raw_fallback },
            archive: args.archive,
            archive_dir: args.archive_dir.clone(),
            out_dir: args.out.clone(),
            pinned_timestamp: args.timestamp.clone(),
            manifest_mode: if args.lenient {
                ManifestMode::Lenient
            } else {
                ManifestMode::Strict
            },
        })
    }
}

/// Built-in database with each overlay file merged in order.
pub fn load_active_db(paths: &[PathBuf]) -> Result<SignatureDb> {
    let mut db = sigdb::builtin_db();
    for path in paths {
        let file = fs::File::open(path)
            .with_context(|| format!("cannot read signature database {}", path.display()))?;
        let overlay = sigdb::load_db(file, &path.display().to_string())
            .with_context(|| format!("invalid signature database {}", path.display()))?;
        db = sigdb::merge(&db, &overlay);
    }
    Ok(db)
}

pub struct ScanOutcome {
    pub run: RunExport,
    pub warnings: Vec<String>,
}

/// parse → dedup → acquire → normalize → scan → aggregate → export.
pub fn cmd_scan(cfg: &RunConfig) -> Result<ScanOutcome> {
    let manifest_bytes = fs::read(&cfg.manifest_path)
        .with_context(|| format!("cannot read manifest {}", cfg.manifest_path.display()))?;
    let records = corpus::parse_manifest(manifest_bytes.as_slice(), cfg.manifest_mode)
        .with_context(|| format!("invalid manifest {}", cfg.manifest_path.display()))?;
    let (kept, dropped) = corpus::dedup_manifest(records);
    let db = load_active_db(&cfg.db_paths)?;
    let timestamp = report::utc_timestamp(cfg.pinned_timestamp.as_deref())?;

    fs::create_dir_all(&cfg.workdir)
        .with_context(|| format!("cannot create workdir {}", cfg.workdir.display()))?;
    let layout = CorpusLayout {
        workdir: cfg.workdir.clone(),
        source_base: manifest_base(&cfg.manifest_path),
        prune: cfg.prune.clone(),
    };
    let results = detect::scan_corpus(&kept, &db, &cfg.policy, &layout)
        .context("cannot start scan workers")?;

    let mut warnings = Vec::new();
    for d in &dropped {
        warnings.push(format!("dropped {}: {}", d.record.id, d.reason));
    }
    for r in results
        .iter()
        .filter(|r| r.status == ScanStatus::Unacquired)
    {
        warnings.push(format!(
            "unacquired {}: {}",
            r.plugin_id,
            r.error.as_deref().unwrap_or("unknown error")
        ));
    }

    let run = RunExport::assemble(
        timestamp,
        &db,
        corpus::content_hash(&manifest_bytes),
        kept,
        &dropped,
        results,
    )?;

    write_outputs(&run, &cfg.out_dir)?;

    if cfg.archive {
        for p in run
            .plugins
            .iter()
            .filter(|p| p.status == ScanStatus::Scanned)
        {
            let root = match &cfg.archive_dir {
                Some(dir) => dir.join(corpus::plugin_dir_name(&p.plugin_id)),
                None => corpus::materialized_dir(&cfg.workdir, &p.plugin_id),
            };
            if let Err(e) = report::archive_run(&run, &p.plugin_id, &root) {
                warnings.push(format!("archive {} failed: {e}", p.plugin_id));
            }
        }
    }
    Ok(ScanOutcome { run, warnings })
}

fn manifest_base(manifest: &Path) -> PathBuf {
    match manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn write_outputs(run: &RunExport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
    let files: [(&str, Vec<u8>); 5] = [
        ("run.json", report::export_json(run, None)),
        ("report.md", report::render_markdown(run).into_bytes()),
        (
            "fig2.csv",
            report::emit_chart_csv(run, ChartView::Fig2).into_bytes(),
        ),
        (
            "table2.csv",
            report::emit_chart_csv(run, ChartView::Table2).into_bytes(),
        ),
        (
            "table3.csv",
            report::emit_chart_csv(run, ChartView::Table3).into_bytes(),
        ),
    ];
    for (name, data) in files {
        let path = out_dir.join(name);
        fs::write(&path, data).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn cmd_db(command: &DbCommand) -> Result<String> {
    match command {
        DbCommand::PrintBuiltin => Ok(sigdb::builtin_db().to_document()),
        DbCommand::Validate { file } => {
            let reader =
                fs::File::open(file).with_context(|| format!("cannot read {}", file.display()))?;
            let db = sigdb::load_db(reader, &file.display().to_string())
                .with_context(|| format!("invalid signature database {}", file.display()))?;
            Ok(format!("{}: {} signatures ok\n", file.display(), db.len()))
        }
    }
}

/// Returns the rendered diff and whether anything changed.
pub fn cmd_diff(old: &Path, new: &Path) -> Result<(String, bool)> {
    let load = |p: &Path| -> Result<RunExport> {
        let bytes = fs::read(p).with_context(|| format!("cannot read {}", p.display()))?;
        report::parse_export(&bytes)
            .with_context(|| format!("cannot load run export {}", p.display()))
    };
    let previous = load(old)?;
    let current = load(new)?;
    let diff = mcp_audit_core::diff_runs(&previous, &current)?;
    Ok((report::render_diff_markdown(&diff), !diff.is_empty()))
}

/// Runs a parsed command line, printing to stdout/stderr, and returns the
/// process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Scan(args) => RunConfig::from_args(args)
            .and_then(|cfg| cmd_scan(&cfg))
            .map(|o| {
                for w in &o.warnings {
                    eprintln!("warning: {w}");
                }
                eprintln!(
                    "scanned {} plugins, {} findings, {} unacquired; outputs in {}",
                    o.run.aggregates.corpus_size,
                    o.run.total_findings(),
                    o.run.aggregates.unacquired,
                    args.out.display()
                );
                EXIT_OK
            }),
        Command::Db(cmd) => cmd_db(cmd).map(|text| {
            print!("{text}");
            EXIT_OK
        }),
        Command::Diff { old, new } => cmd_diff(old, new).map(|(text, changed)| {
            print!("{text}");
            if changed {
                EXIT_DIFF_FOUND
            } else {
                EXIT_OK
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FATAL
        }
    }
}
