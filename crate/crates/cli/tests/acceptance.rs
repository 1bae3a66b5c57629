//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mcp_audit::{cmd_diff, cmd_scan, RunConfig, OUTPUT_FILES};
use mcp_audit_core::aggregate::bucket_for_stars;
use mcp_audit_core::corpus::{ApplicationCategory, ManifestMode, PruneConfig};
use mcp_audit_core::detect::{RawFallback, ScanPolicy};
use mcp_audit_core::lexscan::{lex_call_sites, raw_scan, CallSite, LanguageFamily};
use mcp_audit_core::report::{export_json, parse_export, RunExport};
use mcp_audit_core::sigdb::{builtin_db, Pattern, ResourceCategory, SiteKind};

const PIN: &str = "2025-06-01T12:00:00Z";

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn config(manifest: &Path, out: &Path, jobs: usize) -> RunConfig {
    RunConfig {
        manifest_path: manifest.to_path_buf(),
        workdir: out.join("work"),
        db_paths: vec![],
        prune: PruneConfig::default(),
        policy: ScanPolicy {
            jobs,
            raw_fallback: RawFallback::OnError,
        },
        archive: false,
        archive_dir: None,
        out_dir: out.to_path_buf(),
        pinned_timestamp: Some(PIN.to_string()),
        manifest_mode: ManifestMode::Strict,
    }
}

fn scan_fixture(out: &Path, jobs: usize) -> Result<(RunExport, Duration), String> {
    let cfg = config(&fixtures().join("manifest.jsonl"), out, jobs);
    let start = Instant::now();
    let outcome = cmd_scan(&cfg).map_err(|e| format!("{e:#}"))?;
    Ok((outcome.run, start.elapsed()))
}

type FindingRow = (String, String, u32, u32, String, String, String, String);

fn oracle_findings() -> BTreeSet<FindingRow> {
    fs::read_to_string(fixtures().join("expected_findings.tsv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            (
                c[0].into(),
                c[1].into(),
                c[2].parse().unwrap(),
                c[3].parse().unwrap(),
                c[4].into(),
                c[5].into(),
                c[6].into(),
                c[7].into(),
            )
        })
        .collect()
}

fn run_findings(run: &RunExport) -> Vec<FindingRow> {
    run.plugins
        .iter()
        .flat_map(|p| &p.findings)
        .map(|f| {
            (
                f.plugin_id.clone(),
                f.file.clone(),
                f.line,
                f.column,
                f.signature_id.clone(),
                f.category.to_string(),
                f.matched_text.clone(),
                f.mode.to_string(),
            )
        })
        .collect()
}

fn c1_planted_corpus() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (run, elapsed) = scan_fixture(tmp.path(), 1)?;
    let got = run_findings(&run);
    let got_set: BTreeSet<FindingRow> = got.iter().cloned().collect();
    if got_set.len() != got.len() {
        return Err("duplicate findings".into());
    }
    let oracle = oracle_findings();
    let missing: Vec<_> = oracle.difference(&got_set).collect();
    let extra: Vec<_> = got_set.difference(&oracle).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(format!("missing {missing:?}, extra {extra:?}"));
    }
    if run.plugins.len() != 12 {
        return Err(format!("expected 12 plugins, got {}", run.plugins.len()));
    }
    // every builtin signature is exercised
    let used: BTreeSet<&str> = oracle.iter().map(|r| r.4.as_str()).collect();
    let unused: Vec<_> = builtin_db()
        .signatures
        .iter()
        .filter(|s| !used.contains(s.id.as_str()))
        .map(|s| s.id.clone())
        .collect();
    if !unused.is_empty() {
        return Err(format!("builtin signatures not covered: {unused:?}"));
    }
    if elapsed >= Duration::from_secs(5) {
        return Err(format!("took {elapsed:?} (limit 5s)"));
    }
    Ok(format!(
        "{} findings, precision = recall = 1, {:.2?} single-threaded",
        got.len(),
        elapsed
    ))
}

fn c2_servers_affected() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (run, _) = scan_fixture(tmp.path(), 1)?;
    let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for row in oracle_findings() {
        sets.entry(row.5).or_default().insert(row.0);
    }
    for c in ResourceCategory::ALL {
        let want = sets.get(c.as_str()).map_or(0, |s| s.len()) as u64;
        let got = run.aggregates.servers_affected.get(c);
        if want != got {
            return Err(format!("{c}: oracle {want}, got {got}"));
        }
    }
    let s = run.aggregates.servers_affected;
    Ok(format!(
        "FILE={} MEMORY={} NETWORK={} SYSTEM={}",
        s.file, s.memory, s.network, s.system
    ))
}

fn check_table(text: &str, header: &str, labels: &[&str]) -> Result<(), String> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.first() != Some(&header) {
        return Err(format!("bad header {:?}", lines.first()));
    }
    if lines.len() != labels.len() + 1 {
        return Err(format!(
            "{} data rows, expected {}",
            lines.len() - 1,
            labels.len()
        ));
    }
    for (line, label) in lines[1..].iter().zip(labels) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 || cells[0] != *label {
            return Err(format!("row {line:?}, expected label {label}"));
        }
        let nums: Vec<u64> = cells[1..].iter().map(|c| c.parse().unwrap()).collect();
        if nums[..4].iter().sum::<u64>() != nums[4] {
            return Err(format!("row total mismatch: {line}"));
        }
    }
    Ok(())
}

fn c3_table_shapes() -> Outcome {
    let category_labels: Vec<&str> = ApplicationCategory::ALL.iter().map(|c| c.label()).collect();
    let star_labels = [
        "0-10",
        "11-100",
        "101-1000",
        "1001-10000",
        "10001-50000",
        "50000+",
    ];
    let tmp = tempfile::tempdir().unwrap();

    let empty_manifest = tmp.path().join("empty.jsonl");
    fs::write(&empty_manifest, "").unwrap();
    let empty_out = tmp.path().join("empty");
    cmd_scan(&config(&empty_manifest, &empty_out, 1)).map_err(|e| format!("{e:#}"))?;
    let full_out = tmp.path().join("full");
    scan_fixture(&full_out, 1)?;

    for out in [&empty_out, &full_out] {
        let t2 = fs::read_to_string(out.join("table2.csv")).unwrap();
        check_table(
            &t2,
            "app_category,file,memory,network,system,total",
            &category_labels,
        )?;
        let t3 = fs::read_to_string(out.join("table3.csv")).unwrap();
        check_table(
            &t3,
            "star_range,file,memory,network,system,total",
            &star_labels,
        )?;
    }
    Ok("23 + 6 data rows, totals = row sums, on empty and fixture corpora".into())
}

fn c4_star_buckets() -> Outcome {
    let bounds: [(&str, u64, u64); 6] = [
        ("0-10", 0, 10),
        ("11-100", 11, 100),
        ("101-1000", 101, 1000),
        ("1001-10000", 1001, 10000),
        ("10001-50000", 10001, 50000),
        ("50000+", 50001, u64::MAX),
    ];
    for stars in [
        0u64, 10, 11, 100, 101, 1000, 1001, 10000, 10001, 50000, 50001,
    ] {
        let want: Vec<&str> = bounds
            .iter()
            .filter(|(_, lo, hi)| (*lo..=*hi).contains(&stars))
            .map(|b| b.0)
            .collect();
        if want.len() != 1 {
            return Err(format!("oracle not a partition at {stars}"));
        }
        let got = bucket_for_stars(stars).label();
        if got != want[0] {
            return Err(format!("{stars}: expected {}, got {got}", want[0]));
        }
    }
    Ok("11 boundary values match".into())
}

const CHAINS: &[&str] = &[
    "os.system",
    "subprocess.run",
    "open",
    "fd.read",
    "socket.bind",
    "dns.resolver.query",
    "strcpy",
    "malloc",
    "ctypes.CDLL",
    "sock.connect",
    "Image.open",
    "exec",
    "fork",
    "requests.post",
    "load_dotenv",
    "shutil.copy",
    "a.b.c.write",
];

type Expected = Vec<(Vec<String>, u32, u32)>;

struct ProgramBuilder {
    python: bool,
    lines: Vec<String>,
    expected: Expected,
}

impl ProgramBuilder {
    fn line_no(&self) -> u32 {
        self.lines.len() as u32
    }

    fn current(&mut self) -> &mut String {
        self.lines.last_mut().unwrap()
    }

    fn new_line(&mut self) {
        self.lines.push(String::new());
    }

    fn push(&mut self, text: &str) {
        self.current().push_str(text);
    }

    /// A real call, possibly with a nested real call as its argument.
    fn call(&mut self, rng: &mut ChaCha8Rng, depth: u32) {
        let chain = *CHAINS.choose(rng).unwrap();
        let col = self.current().chars().count() as u32 + 1;
        let line = self.line_no();
        self.expected
            .push((chain.split('.').map(str::to_string).collect(), line, col));
        self.push(chain);
        self.push(&" ".repeat(rng.gen_range(0..2)));
        self.push("(");
        match rng.gen_range(0..3) {
            0 => {}
            1 => self.push("a, 1"),
            _ if depth == 0 => self.call(rng, 1),
            _ => self.push("b"),
        }
        self.push(")");
    }

    fn decoy_text(rng: &mut ChaCha8Rng) -> String {
        format!("{}(x) ", CHAINS.choose(rng).unwrap())
    }

    fn comment(&mut self, rng: &mut ChaCha8Rng) {
        let body = Self::decoy_text(rng);
        if self.python {
            self.push(&format!("# {body}"));
        } else if rng.gen_bool(0.5) {
            self.push(&format!("// {body}"));
        } else {
            self.push(&format!("/* {body}"));
            if rng.gen_bool(0.5) {
                self.new_line();
                self.push(&Self::decoy_text(rng));
            }
            self.push("*/ ");
        }
    }

    fn string(&mut self, rng: &mut ChaCha8Rng) {
        let body = Self::decoy_text(rng);
        let quotes: &[&str] = if self.python {
            &["\"", "'", "r\"", "b'", "f\"", "Rb'"]
        } else {
            &["\"", "'"]
        };
        let open = *quotes.choose(rng).unwrap();
        let close = &open[open.len() - 1..];
        self.push(&format!("v = {open}{body}\\{close}{close}; "));
    }

    fn multiline_string(&mut self, rng: &mut ChaCha8Rng) {
        let (open, close) = if self.python {
            if rng.gen_bool(0.5) {
                ("\"\"\"", "\"\"\"")
            } else {
                ("f'''", "'''")
            }
        } else {
            ("`", "`")
        };
        self.push(&format!("w = {open}{}", Self::decoy_text(rng)));
        self.new_line();
        if !self.python {
            let interp = Self::decoy_text(rng);
            self.push(&format!("${{ {{k: {interp}}} }} "));
        }
        self.push(&format!("{}{close}", Self::decoy_text(rng)));
    }
}

fn generate_program(rng: &mut ChaCha8Rng, python: bool) -> (String, Expected) {
    let mut b = ProgramBuilder {
        python,
        lines: vec![],
        expected: vec![],
    };
    for _ in 0..rng.gen_range(1..12) {
        b.new_line();
        b.push(&" ".repeat(rng.gen_range(0..5)));
        for _ in 0..rng.gen_range(1..4) {
            match rng.gen_range(0..6) {
                0 | 1 => {
                    b.call(rng, 0);
                    b.push("; ");
                }
                2 => b.string(rng),
                3 => b.multiline_string(rng),
                _ => {
                    b.comment(rng);
                    if python || b.current().contains("//") {
                        break;
                    }
                }
            }
        }
    }
    let mut text = b.lines.join("\n");
    text.push('\n');
    (text, b.expected)
}

fn call_sites(sites: &[CallSite]) -> Expected {
    sites
        .iter()
        .filter(|s| s.kind == SiteKind::Call)
        .map(|s| (s.segments.clone(), s.line, s.column))
        .collect()
}

fn c5_lexer_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut planted = 0;
    for i in 0..200 {
        let python = i % 2 == 0;
        let family = if python {
            LanguageFamily::Python
        } else {
            LanguageFamily::CFamily
        };
        let (text, mut expected) = generate_program(&mut rng, python);
        expected.sort_by_key(|e| (e.1, e.2));
        let sites =
            lex_call_sites(&text, family).map_err(|e| format!("program {i}: {e}\n{text}"))?;
        let got = call_sites(&sites);
        if got != expected {
            return Err(format!(
                "program {i} ({family}):\n{text}\nexpected {expected:?}\ngot {got:?}"
            ));
        }
        for s in &sites {
            let line: Vec<char> = text
                .lines()
                .nth(s.line as usize - 1)
                .unwrap()
                .chars()
                .collect();
            let start = s.column as usize - 1;
            let slice: String = line[start..start + s.raw_text.chars().count()]
                .iter()
                .collect();
            if slice != s.raw_text {
                return Err(format!(
                    "program {i}: position of {:?} does not reproduce text",
                    s.raw_text
                ));
            }
        }
        planted += expected.len();
    }
    Ok(format!("200 programs, {planted} planted calls, exact"))
}

fn c6_mode_equivalence() -> Outcome {
    let patterns: Vec<Pattern> = builtin_db()
        .signatures
        .iter()
        .map(|s| s.pattern.clone())
        .chain(
            ["foo.bar", "system", "x1"]
                .iter()
                .map(|p| Pattern::parse(p).unwrap()),
        )
        .collect();
    let pieces = [
        "os.system",
        "open",
        "Image.open",
        "foo.bar",
        "foo",
        "bar",
        "x1",
        "_tmp",
        "system",
        "dns.resolver.query",
        "post",
        "(",
        ")",
        "1",
        "2.5",
        "+",
        "-",
        "*",
        ",",
        "=",
        "[",
        "]",
        "{",
        "}",
        ":",
        ").",
        "x.",
        "@",
        "!",
        "<",
        ">",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut compared = 0;
    for i in 0..100 {
        let mut line = String::new();
        for _ in 0..rng.gen_range(3..14) {
            let piece = *pieces.choose(&mut rng).unwrap();
            line.push_str(piece);
            if piece.starts_with(|c: char| c.is_ascii_alphabetic()) && rng.gen_bool(0.6) {
                line.push_str(&" ".repeat(rng.gen_range(0..2)));
                line.push('(');
            }
            if rng.gen_bool(0.4) {
                line.push(' ');
            }
        }
        let family = if i % 2 == 0 {
            LanguageFamily::Python
        } else {
            LanguageFamily::CFamily
        };
        let lexical = lex_call_sites(&line, family).map_err(|e| format!("{line:?}: {e}"))?;
        let lexical: Vec<(Vec<String>, u32, u32, String)> = lexical
            .into_iter()
            .filter(|s| {
                s.kind == SiteKind::Call
                    && patterns
                        .iter()
                        .any(|p| p.segments() == s.segments.as_slice())
            })
            .map(|s| (s.segments, s.line, s.column, s.raw_text))
            .collect();
        let raw: Vec<(Vec<String>, u32, u32, String)> = raw_scan(&line, &patterns)
            .into_iter()
            .map(|s| (s.segments, s.line, s.column, s.raw_text))
            .collect();
        if lexical != raw {
            return Err(format!("{line:?}: lexical {lexical:?} vs raw {raw:?}"));
        }
        compared += raw.len();
    }
    Ok(format!("100 one-liners, {compared} sites identical"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcp-audit"))
}

fn scan_via_binary(out: &Path, jobs: &str) -> Result<(), String> {
    let status = bin()
        .args(["scan", "--manifest"])
        .arg(fixtures().join("manifest.jsonl"))
        .arg("--out")
        .arg(out)
        .args(["--jobs", jobs, "--timestamp", PIN])
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.code() != Some(0) {
        return Err(format!(
            "scan exited {:?}: {}",
            status.status.code(),
            String::from_utf8_lossy(&status.stderr)
        ));
    }
    Ok(())
}

fn c7_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs = [("a", "1"), ("b", "1"), ("c", "8")];
    for (dir, jobs) in runs {
        scan_via_binary(&tmp.path().join(dir), jobs)?;
    }
    for name in OUTPUT_FILES {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        for (dir, _) in &runs[1..] {
            let other = fs::read(tmp.path().join(dir).join(name)).unwrap();
            if a != other {
                return Err(format!("{name} differs between run a and run {dir}"));
            }
        }
    }
    Ok("5 outputs byte-identical across repeat and --jobs 1 vs 8".into())
}

fn c8_pruning() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let plugin = tmp.path().join("plugin");
    let risky_py = "import os\nos.system('x')\nsubprocess.run(y)\nopen(p).read()\n";
    let risky_js = "exec('x'); net.connect(1); strcpy(a, b);\n";
    for (rel, body) in [
        ("node_modules/pkg/index.js", risky_js),
        ("node_modules/pkg/lib/setup.py", risky_py),
        ("venv/lib/python3.12/site.py", risky_py),
        ("venv/bin/tool.js", risky_js),
    ] {
        let path = plugin.join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, body).unwrap();
    }
    let manifest = tmp.path().join("m.jsonl");
    fs::write(
        &manifest,
        r#"{"id":"pruned","name":"pruned","source":"plugin","category":"Other","stars":3}"#,
    )
    .unwrap();
    let run = cmd_scan(&config(&manifest, &tmp.path().join("out"), 2))
        .map_err(|e| format!("{e:#}"))?
        .run;
    let p = &run.plugins[0];
    if run.total_findings() != 0 {
        return Err(format!(
            "{} findings from pruned dirs",
            run.total_findings()
        ));
    }
    if p.files_skipped != 4 || p.files_scanned != 0 {
        return Err(format!(
            "scanned {}, skipped {}",
            p.files_scanned, p.files_skipped
        ));
    }
    Ok("0 findings, 4 files skipped".into())
}

fn c9_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (run, _) = scan_fixture(tmp.path(), 4)?;
    let parsed = parse_export(&export_json(&run, None)).map_err(|e| e.to_string())?;
    if parsed != run {
        return Err("parsed export differs from run".into());
    }
    let on_disk =
        parse_export(&fs::read(tmp.path().join("run.json")).unwrap()).map_err(|e| e.to_string())?;
    if on_disk != run {
        return Err("run.json differs from run".into());
    }
    Ok(format!(
        "{} plugins, {} findings round-trip",
        run.plugins.len(),
        run.total_findings()
    ))
}

fn copy_tree(src: &Path, dst: &Path) {
    for entry in fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let target = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            fs::create_dir_all(&target).unwrap();
            copy_tree(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), &target).unwrap();
        }
    }
}

fn c10_diff() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("fixtures");
    fs::create_dir_all(&base).unwrap();
    copy_tree(&fixtures(), &base);
    let manifest = base.join("manifest.jsonl");
    let workdir = tmp.path().join("work");

    let mut cfg = config(&manifest, &tmp.path().join("run-a"), 4);
    cfg.workdir = workdir.clone();
    cfg.archive = true;
    cfg.pinned_timestamp = Some("2025-06-01T12:00:00Z".into());
    let run_a = cmd_scan(&cfg).map_err(|e| format!("{e:#}"))?.run;

    let target = base.join("corpus/p06/bridge.py");
    let mut text = fs::read_to_string(&target).unwrap();
    text.push_str("os.system(\"ls\")\n");
    fs::write(&target, text).unwrap();

    cfg.out_dir = tmp.path().join("run-b");
    cfg.pinned_timestamp = Some("2025-06-02T12:00:00Z".into());
    let run_b = cmd_scan(&cfg).map_err(|e| format!("{e:#}"))?.run;
    if run_a.run_id == run_b.run_id {
        return Err("run ids collide".into());
    }

    let diff = mcp_audit_core::diff_runs(&run_a, &run_b).map_err(|e| e.to_string())?;
    let expect_one = |d: &mcp_audit_core::DiffReport, what: &str| -> Result<(), String> {
        if d.plugins.len() != 1 || d.plugins[0].plugin_id != "p06" {
            return Err(format!("{what}: changed plugins {:?}", d.plugins));
        }
        let p = &d.plugins[0];
        if p.added.len() != 1 || !p.removed.is_empty() {
            return Err(format!("{what}: +{} -{}", p.added.len(), p.removed.len()));
        }
        let a = &p.added[0];
        if a.category != ResourceCategory::System || a.signature_id != "sys.os_system" {
            return Err(format!("{what}: added {a:?}"));
        }
        let deltas = d.finding_deltas;
        if (deltas.file, deltas.memory, deltas.network, deltas.system) != (0, 0, 0, 1) {
            return Err(format!("{what}: deltas {deltas:?}"));
        }
        Ok(())
    };
    expect_one(&diff, "full export")?;

    // archived slices give the same answer for that plugin
    let archive = |run: &RunExport| {
        workdir
            .join("p06/.mcp-audit")
            .join(format!("run-{}.json", run.run_id))
    };
    let slice_a = parse_export(&fs::read(archive(&run_a)).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let slice_b = parse_export(&fs::read(archive(&run_b)).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let archived = mcp_audit_core::diff_runs(&slice_a, &slice_b).map_err(|e| e.to_string())?;
    if archived.plugins != diff.plugins {
        return Err("archive diff differs from full diff".into());
    }

    let (_, changed) = cmd_diff(
        &tmp.path().join("run-a/run.json"),
        &tmp.path().join("run-b/run.json"),
    )
    .map_err(|e| format!("{e:#}"))?;
    if !changed {
        return Err("cmd_diff reported no change".into());
    }
    Ok("exactly +1 SYSTEM finding in p06 (full export and archive)".into())
}

fn c11_scale() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let mut manifest = String::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0011);
    let mut files = 0;
    for p in 0..100 {
        let id = format!("gen{p:03}");
        for f in 0..20 {
            let (ext, python) = if f % 2 == 0 {
                ("py", true)
            } else {
                ("ts", false)
            };
            let (body, _) = generate_program(&mut rng, python);
            let path = corpus.join(&id).join(format!("pkg{}/mod{f}.{ext}", f % 4));
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            // pad to a realistic file size
            fs::write(path, body.repeat(20)).unwrap();
            files += 1;
        }
        let category = ApplicationCategory::ALL[p % 23].label();
        manifest.push_str(&format!(
            "{{\"id\":\"{id}\",\"name\":\"{id}\",\"source\":\"corpus/{id}\",\"category\":\"{category}\",\"stars\":{}}}\n",
            rng.gen_range(0..100_000u64)
        ));
    }
    let manifest_path = tmp.path().join("manifest.jsonl");
    fs::write(&manifest_path, manifest).unwrap();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let start = Instant::now();
    let run = cmd_scan(&config(&manifest_path, &tmp.path().join("out"), jobs))
        .map_err(|e| format!("{e:#}"))?
        .run;
    let elapsed = start.elapsed();
    let scanned: u64 = run.plugins.iter().map(|p| p.files_scanned).sum();
    if scanned != files {
        return Err(format!("scanned {scanned} of {files} files"));
    }
    if elapsed >= Duration::from_secs(30) {
        return Err(format!("took {elapsed:?} (limit 30s)"));
    }
    Ok(format!(
        "100 plugins, {files} files, {} findings in {elapsed:.2?}",
        run.total_findings()
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 planted-corpus exactness", c1_planted_corpus),
        ("2 servers-affected semantics", c2_servers_affected),
        ("3 table-shape conformance", c3_table_shapes),
        ("4 star bucketing", c4_star_buckets),
        ("5 lexer soundness", c5_lexer_soundness),
        ("6 mode equivalence", c6_mode_equivalence),
        ("7 determinism", c7_determinism),
        ("8 pruning guarantee", c8_pruning),
        ("9 export round-trip", c9_round_trip),
        ("10 diff correctness", c10_diff),
        ("11 scale smoke", c11_scale),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS criterion {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL criterion {name}: panicked");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
