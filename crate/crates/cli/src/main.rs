mod render;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use peerspin::registry::{parse_manifest, PackumentSource, RemoteRegistry, SnapshotFormat, SnapshotStore};
use peerspin::resolver::{resolve, Resolution, ResolutionConfig, ResolutionOutcome, RootSpec};
use peerspin::scanner::fixtures::{
    gen_pattern_fixture, gen_pattern_variant, gen_random_fixture, motivating_fixture, Fixture, Pattern, RandomShape,
};
use peerspin::scanner::{default_jobs, ecosystem_stats, scan_batch, ScanReport, ScanResult, ScanTask, Verdict};
use serde_json::{json, Value};

const EXIT_CLEAN: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_PEERSPIN: u8 = 2;
const EXIT_UNRESOLVABLE: u8 = 3;
const EXIT_ITERATION_LIMIT: u8 = 4;

/// Simulates npm-style dependency resolution and detects PeerSpin loops.
#[derive(Debug, Parser)]
#[command(name = "peerspin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// Registry snapshot: an NDJSON file or a directory of packuments.
    #[arg(long, global = true, conflicts_with = "registry_url")]
    snapshot: Option<PathBuf>,
    /// Snapshot layout; detected from the path when omitted.
    #[arg(long, global = true, value_enum)]
    snapshot_format: Option<FormatArg>,
    /// Fetch packuments over HTTP instead of reading a snapshot.
    #[arg(long, global = true)]
    registry_url: Option<String>,
    /// Write-once cache for --registry-url.
    #[arg(long, global = true, default_value = ".peerspin-cache")]
    cache_dir: PathBuf,
    #[arg(long, global = true, value_enum)]
    format: Option<Output>,
    /// Scan workers (default: logical processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, default_value_t = 10_000)]
    max_iterations: usize,
    /// Write the placement log as NDJSON.
    #[arg(long, global = true)]
    emit_log: Option<PathBuf>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Ndjson,
    Directory,
}

impl From<FormatArg> for SnapshotFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Ndjson => SnapshotFormat::Ndjson,
            FormatArg::Directory => SnapshotFormat::Directory,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Json,
    TreeText,
    Ndjson,
}

#[derive(Debug, Args)]
struct RootArgs {
    /// `name@range`, `name@tag` or a bare name (latest).
    #[arg(required_unless_present = "manifest")]
    root: Option<String>,
    /// Use a project manifest (package.json shape) as the tree root.
    #[arg(long, conflicts_with = "root")]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resolve a root and print the resulting tree.
    Resolve(RootArgs),
    /// Resolve a root and print only the verdict (and report, if any).
    Detect(RootArgs),
    /// Detect over many roots; one NDJSON result line per task.
    Scan {
        /// `name@version`, `name@range` or a bare name for every version.
        tasks: Vec<String>,
        /// Scan every version of every package in the snapshot.
        #[arg(long)]
        all_packages: bool,
        /// Read additional tasks from a file, one per line.
        #[arg(long)]
        tasks_file: Option<PathBuf>,
    },
    /// Peer-usage, yearly and top-peer-dependent statistics.
    Stats {
        /// Scan results (NDJSON) for the yearly affected counts.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Write a synthetic snapshot.
    GenFixture {
        #[arg(long, value_parser = parse_pattern)]
        pattern: Option<Pattern>,
        #[arg(long, default_value_t = 0)]
        intermediates: usize,
        /// Seeded pattern variant with renamed packages and noise.
        #[arg(long, conflicts_with_all = ["pattern", "random", "motivating"])]
        variant: Option<u64>,
        /// Seeded random graph.
        #[arg(long, conflicts_with_all = ["pattern", "motivating"])]
        random: Option<u64>,
        /// With --random: one version per package and compatible ranges.
        #[arg(long, requires = "random")]
        conflict_free: bool,
        /// The xydesign/antd/react-dom/draft-js/react example.
        #[arg(long, conflicts_with = "pattern")]
        motivating: bool,
        /// Where to write the project manifest for --motivating.
        #[arg(long, requires = "motivating")]
        project_out: Option<PathBuf>,
    },
}

fn parse_pattern(s: &str) -> Result<Pattern, String> {
    s.parse()
}

/// A usage problem detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_CLEAN };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if e.downcast_ref::<Usage>().is_some() {
                eprintln!("usage error: {e}");
                eprintln!("hint: see `peerspin --help`");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Resolve(root) => run_resolution(g, root, true),
        Command::Detect(root) => run_resolution(g, root, false),
        Command::Scan {
            tasks,
            all_packages,
            tasks_file,
        } => run_scan(g, tasks, *all_packages, tasks_file.as_deref()),
        Command::Stats { results, top } => run_stats(g, results.as_deref(), *top),
        Command::GenFixture {
            pattern,
            intermediates,
            variant,
            random,
            conflict_free,
            motivating,
            project_out,
        } => {
            let fixture = if *motivating {
                let (project, registry) = motivating_fixture();
                FixtureChoice::Project(project, registry)
            } else if let Some(seed) = variant {
                FixtureChoice::Plain(gen_pattern_variant(*seed, ""))
            } else if let Some(seed) = random {
                let shape = if *conflict_free {
                    RandomShape::conflict_free()
                } else {
                    RandomShape::mixed()
                };
                FixtureChoice::Plain(gen_random_fixture(*seed, shape, ""))
            } else if let Some(p) = pattern {
                FixtureChoice::Plain(gen_pattern_fixture(*p, *intermediates).map_err(usage)?)
            } else {
                return Err(usage("gen-fixture needs --pattern, --variant, --random or --motivating"));
            };
            run_gen_fixture(g, fixture, project_out.as_deref())
        }
    }
}

fn snapshot_format(g: &Global, path: &Path) -> SnapshotFormat {
    g.snapshot_format.map(Into::into).unwrap_or_else(|| SnapshotFormat::detect(path))
}

fn load_snapshot(g: &Global) -> Result<SnapshotStore> {
    let path = g.snapshot.as_deref().ok_or_else(|| usage("this command needs --snapshot"))?;
    let store = SnapshotStore::import(path, snapshot_format(g, path))
        .with_context(|| format!("importing {}", path.display()))?;
    let diags = store.diagnostics();
    for d in diags.iter().take(20) {
        eprintln!("warning: {}: {}", d.location, d.message);
    }
    if diags.len() > 20 {
        eprintln!("warning: {} more import diagnostics suppressed", diags.len() - 20);
    }
    Ok(store)
}

fn registry_source(g: &Global) -> Result<Box<dyn PackumentSource>> {
    match (&g.snapshot, &g.registry_url) {
        (Some(_), None) => Ok(Box::new(load_snapshot(g)?)),
        (None, Some(url)) => Ok(Box::new(RemoteRegistry::new(url, &g.cache_dir))),
        _ => Err(usage("give exactly one of --snapshot or --registry-url")),
    }
}

fn config(g: &Global) -> Result<ResolutionConfig> {
    if g.max_iterations == 0 {
        return Err(usage("--max-iterations must be positive"));
    }
    Ok(ResolutionConfig {
        max_iterations: g.max_iterations,
        detector_enabled: true,
        emit_placement_log: g.emit_log.is_some(),
    })
}

/// Stdout, or the --out file.
fn output(g: &Global) -> Result<Box<dyn Write + Send>> {
    Ok(match &g.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json(out: &mut dyn Write, v: &Value, pretty: bool) -> Result<()> {
    if pretty {
        serde_json::to_writer_pretty(&mut *out, v)?;
    } else {
        serde_json::to_writer(&mut *out, v)?;
    }
    writeln!(out)?;
    Ok(())
}

fn exit_code(outcome: &ResolutionOutcome) -> u8 {
    match outcome {
        ResolutionOutcome::Success(_) => EXIT_CLEAN,
        ResolutionOutcome::PeerSpin(_) => EXIT_PEERSPIN,
        ResolutionOutcome::Unresolvable(_) => EXIT_UNRESOLVABLE,
        ResolutionOutcome::IterationLimitExceeded(_) => EXIT_ITERATION_LIMIT,
    }
}

fn run_resolution(g: &Global, args: &RootArgs, with_tree: bool) -> Result<u8> {
    let root = match (&args.root, &args.manifest) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RootSpec::Manifest(parse_manifest(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?)
        }
        (Some(spec), None) => RootSpec::parse(spec),
        (None, None) => return Err(usage("give a root package or --manifest")),
    };
    let source = registry_source(g)?;
    let config = config(g)?;
    let r: Resolution = resolve(&root, source.as_ref(), config);
    if let Some(path) = &g.emit_log {
        let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        for e in &r.log {
            serde_json::to_writer(&mut f, e)?;
            writeln!(f)?;
        }
        f.flush()?;
    }
    let mut out = output(g)?;
    match g.format.unwrap_or(Output::Json) {
        Output::TreeText => out.write_all(render::outcome_text(&r, with_tree).as_bytes())?,
        fmt => {
            let v = if with_tree {
                render::resolution_json(&r)
            } else {
                render::verdict_json(&r)
            };
            write_json(&mut out, &v, fmt == Output::Json)?;
        }
    }
    out.flush()?;
    if let ResolutionOutcome::Unresolvable(msg) = &r.outcome {
        eprintln!("unresolvable: {msg}");
    }
    Ok(exit_code(&r.outcome))
}

fn read_tasks(path: &Path) -> Result<Vec<ScanTask>> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut tasks = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            tasks.push(ScanTask::parse(t));
        }
    }
    Ok(tasks)
}

fn run_scan(g: &Global, args: &[String], all_packages: bool, tasks_file: Option<&Path>) -> Result<u8> {
    let mut tasks: Vec<ScanTask> = args.iter().map(|t| ScanTask::parse(t)).collect();
    if let Some(p) = tasks_file {
        tasks.extend(read_tasks(p)?);
    }
    let jobs = g.jobs.unwrap_or_else(default_jobs);
    if jobs == 0 {
        return Err(usage("--jobs must be positive"));
    }
    let config = config(g)?;
    let fmt = g.format.unwrap_or(Output::Ndjson);
    let report: ScanReport = if all_packages {
        let store = match (&g.snapshot, &g.registry_url) {
            (Some(_), None) => load_snapshot(g)?,
            _ => return Err(usage("--all-packages needs --snapshot")),
        };
        tasks.extend(store.packuments().map(|p| ScanTask::new(&p.name, "all")));
        scan_into(g, fmt, &store, &tasks, jobs, config)?
    } else {
        if tasks.is_empty() {
            return Err(usage("scan needs tasks, --tasks-file or --all-packages"));
        }
        let source = registry_source(g)?;
        scan_into(g, fmt, source.as_ref(), &tasks, jobs, config)?
    };
    let summary = serde_json::to_value(&report.summary)?;
    eprintln!("{summary}");
    Ok(if report.summary.count(Verdict::Peerspin) > 0 {
        EXIT_PEERSPIN
    } else {
        EXIT_CLEAN
    })
}

/// Streams NDJSON lines for `ndjson`; other formats render once at the end.
fn scan_into(
    g: &Global,
    fmt: Output,
    source: &dyn PackumentSource,
    tasks: &[ScanTask],
    jobs: usize,
    config: ResolutionConfig,
) -> Result<ScanReport> {
    let mut out = output(g)?;
    let report = if fmt == Output::Ndjson {
        scan_batch(source, tasks, jobs, config, &mut out)?
    } else {
        let report = scan_batch(source, tasks, jobs, config, &mut io::sink())?;
        match fmt {
            Output::Json => {
                let v = json!({ "summary": report.summary, "results": report.results });
                write_json(&mut out, &v, true)?;
            }
            _ => {
                for r in &report.results {
                    let what = r.report.as_ref().map(|rep| format!(" ({})", rep.package)).unwrap_or_default();
                    writeln!(out, "{}@{}\t{}{what}", r.name, r.version, r.verdict.as_str())?;
                }
            }
        }
        report
    };
    out.flush()?;
    Ok(report)
}

/// Scan results plus, for PeerSpin lines, the package the report blames.
fn read_results(path: &Path) -> Result<(Vec<ScanResult>, Vec<String>)> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut results, mut causes) = (Vec::new(), Vec::new());
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        let field = |k: &str| v.get(k).and_then(Value::as_str).map(str::to_string);
        let verdict = match field("verdict").as_deref() {
            Some("peerspin") => Verdict::Peerspin,
            Some("clean") => Verdict::Clean,
            Some("unresolvable") => Verdict::Unresolvable,
            Some("iteration-limit") => Verdict::IterationLimit,
            Some("error") => Verdict::Error,
            other => bail!("{} line {}: unknown verdict {other:?}", path.display(), i + 1),
        };
        let (Some(name), Some(version)) = (field("name"), field("version")) else {
            bail!("{} line {}: missing name or version", path.display(), i + 1);
        };
        results.push(ScanResult {
            name,
            version,
            verdict,
            elapsed: std::time::Duration::ZERO,
            report: None,
            detail: None,
        });
        if verdict == Verdict::Peerspin {
            if let Some(pkg) = v.get("report").and_then(|r| r.get("package")).and_then(Value::as_str) {
                causes.push(pkg.to_string());
            }
        }
    }
    Ok((results, causes))
}

fn run_stats(g: &Global, results: Option<&Path>, top: usize) -> Result<u8> {
    let store = load_snapshot(g)?;
    let (results, blamed) = match results {
        Some(p) => read_results(p)?,
        None => Default::default(),
    };
    let stats = ecosystem_stats(&store, &results, top);
    // cause attribution: the package named in each PeerSpin report
    let mut causes: BTreeMap<&str, usize> = BTreeMap::new();
    for pkg in &blamed {
        *causes.entry(pkg).or_insert(0) += 1;
    }
    let mut critical: Vec<(&str, usize)> = causes.into_iter().collect();
    critical.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    critical.truncate(top);
    let mut out = output(g)?;
    match g.format.unwrap_or(Output::Json) {
        Output::TreeText => {
            let u = &stats.usage;
            writeln!(out, "packages: {}  versions: {}", u.packages, u.versions)?;
            writeln!(out, "peer usage: {:.2}%", u.peer_usage_fraction * 100.0)?;
            for (year, b) in &stats.yearly.yearly {
                writeln!(out, "{year}: released {} with-peers {} affected {}", b.released, b.with_peers, b.peerspin_affected)?;
            }
            for d in &stats.top_peer_dependents {
                writeln!(out, "peer-depended: {}@{} {}", d.name, d.version, d.count)?;
            }
            for (pkg, n) in &critical {
                writeln!(out, "cause: {pkg} {n}")?;
            }
        }
        fmt => {
            let mut v = serde_json::to_value(&stats)?;
            v["critical_packages"] = critical.iter().map(|(p, n)| json!({ "package": p, "affected": n })).collect();
            write_json(&mut out, &v, fmt == Output::Json)?;
        }
    }
    out.flush()?;
    Ok(EXIT_CLEAN)
}

enum FixtureChoice {
    Plain(Fixture),
    Project(peerspin::registry::Manifest, Vec<peerspin::registry::Manifest>),
}

fn run_gen_fixture(g: &Global, choice: FixtureChoice, project_out: Option<&Path>) -> Result<u8> {
    let path = g.out.as_deref().ok_or_else(|| usage("gen-fixture needs --out"))?;
    let format = g.snapshot_format.map(Into::into).unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ndjson" | "jsonl") => SnapshotFormat::Ndjson,
            _ => SnapshotFormat::Directory,
        }
    });
    let (fixture, project) = match choice {
        FixtureChoice::Plain(f) => (f, None),
        FixtureChoice::Project(project, registry) => {
            let f = Fixture {
                label: "motivating".into(),
                manifests: registry,
                root_name: project.name.clone(),
                root_version: project.version.clone(),
                expected: Some("peerspin"),
            };
            (f, Some(project))
        }
    };
    fixture.write(path, format).with_context(|| format!("writing {}", path.display()))?;
    let mut descriptor = json!({
        "label": fixture.label,
        "snapshot": path.display().to_string(),
        "format": match format { SnapshotFormat::Ndjson => "ndjson", SnapshotFormat::Directory => "directory" },
        "packages": fixture.packages(),
        "versions": fixture.manifests.len(),
        "root": format!("{}@{}", fixture.root_name, fixture.root_version),
        "expected": fixture.expected,
    });
    if let Some(project) = project {
        let manifest = serde_json::to_value(&project)?;
        if let Some(p) = project_out {
            std::fs::write(p, serde_json::to_string_pretty(&manifest)? + "\n")
                .with_context(|| format!("writing {}", p.display()))?;
            descriptor["project_manifest"] = Value::from(p.display().to_string());
        }
        descriptor["root"] = Value::Null;
        descriptor["project"] = manifest;
    }
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    write_json(&mut lock, &descriptor, g.format != Some(Output::Ndjson))?;
    Ok(EXIT_CLEAN)
}
