//! Batch detection over a snapshot with a worker pool and NDJSON results.

pub mod fixtures;
pub mod stats;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::detector::PeerSpinReport;
use crate::registry::PackumentSource;
use crate::resolver::{resolve, ResolutionConfig, ResolutionOutcome, RootSpec};

pub use fixtures::{gen_pattern_fixture, Fixture, Pattern};
pub use stats::{ecosystem_stats, peer_usage_stats, top_peer_dependents, yearly_affected_counts, EcosystemStats};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("cannot write scan results: {0}")]
    SinkUnwritable(#[from] std::io::Error),
}

/// One package to scan: a concrete version, a range, or `all`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanTask {
    pub name: String,
    pub version: String,
}

impl ScanTask {
    pub fn new(name: impl Into<String>, version: impl Into<String>) -> Self {
        ScanTask {
            name: name.into(),
            version: version.into(),
        }
    }

    /// `name@version`, or a bare name meaning all versions.
    pub fn parse(text: &str) -> Self {
        match text.char_indices().skip(1).find(|&(_, c)| c == '@') {
            Some((i, _)) => ScanTask::new(&text[..i], &text[i + 1..]),
            None => ScanTask::new(text, "all"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Peerspin,
    Clean,
    Unresolvable,
    Error,
    IterationLimit,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Peerspin => "peerspin",
            Verdict::Clean => "clean",
            Verdict::Unresolvable => "unresolvable",
            Verdict::Error => "error",
            Verdict::IterationLimit => "iteration-limit",
        }
    }
}

fn millis<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1000.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub name: String,
    pub version: String,
    pub verdict: Verdict,
    #[serde(rename = "elapsed_ms", serialize_with = "millis")]
    pub elapsed: Duration,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PeerSpinReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ScanSummary {
    pub total: usize,
    pub counts: BTreeMap<Verdict, usize>,
}

impl ScanSummary {
    pub fn count(&self, v: Verdict) -> usize {
        self.counts.get(&v).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScanReport {
    pub summary: ScanSummary,
    /// Results in task order (after expansion of `all`).
    pub results: Vec<ScanResult>,
}

/// Expands `all` tasks into one task per stored version, newest first.
/// Tasks naming an unknown package are kept so they surface as errors.
pub fn expand_tasks(store: &dyn PackumentSource, tasks: &[ScanTask]) -> Vec<ScanTask> {
    let mut out = Vec::new();
    for t in tasks {
        if t.version != "all" {
            out.push(t.clone());
            continue;
        }
        match store.packument(&t.name) {
            Ok(p) => out.extend(p.versions.keys().rev().map(|v| ScanTask::new(&t.name, v.to_string()))),
            Err(_) => out.push(t.clone()),
        }
    }
    out
}

/// Resolves one task and classifies the outcome.
pub fn scan_one(store: &dyn PackumentSource, task: &ScanTask, config: ResolutionConfig) -> ScanResult {
    let started = Instant::now();
    let (verdict, report, detail) = match store.packument(&task.name) {
        Err(e) => (Verdict::Error, None, Some(e.to_string())),
        Ok(_) => {
            let root = RootSpec::Package {
                name: task.name.clone(),
                requested: task.version.clone(),
            };
            match resolve(&root, store, config).outcome {
                ResolutionOutcome::Success(_) => (Verdict::Clean, None, None),
                ResolutionOutcome::PeerSpin(r) => (Verdict::Peerspin, Some(r), None),
                ResolutionOutcome::Unresolvable(msg) => (Verdict::Unresolvable, None, Some(msg)),
                ResolutionOutcome::IterationLimitExceeded(_) => (Verdict::IterationLimit, None, None),
            }
        }
    };
    ScanResult {
        name: task.name.clone(),
        version: task.version.clone(),
        verdict,
        elapsed: started.elapsed(),
        report,
        detail,
    }
}

/// Runs every task on up to `jobs` workers, appending one NDJSON line per
/// finished task to `sink` in completion order.
pub fn scan_batch(
    store: &dyn PackumentSource,
    tasks: &[ScanTask],
    jobs: usize,
    config: ResolutionConfig,
    sink: &mut (dyn Write + Send),
) -> Result<ScanReport, ScanError> {
    let tasks = expand_tasks(store, tasks);
    let next = AtomicUsize::new(0);
    let sink = Mutex::new(sink);
    let slots: Mutex<Vec<Option<ScanResult>>> = Mutex::new(vec![None; tasks.len()]);
    let failure: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let workers = jobs.max(1).min(tasks.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() || failure.lock().expect("failure lock").is_some() {
                    break;
                }
                let result = scan_one(store, &tasks[i], config);
                let line = serde_json::to_string(&result).expect("result serializes");
                {
                    let mut out = sink.lock().expect("sink lock");
                    if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
                        failure.lock().expect("failure lock").get_or_insert(e);
                        break;
                    }
                }
                slots.lock().expect("slots lock")[i] = Some(result);
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("failure lock") {
        return Err(ScanError::SinkUnwritable(e));
    }
    let results: Vec<ScanResult> = slots
        .into_inner()
        .expect("slots lock")
        .into_iter()
        .map(|r| r.expect("every task finished"))
        .collect();
    let mut summary = ScanSummary {
        total: results.len(),
        counts: BTreeMap::new(),
    };
    for r in &results {
        *summary.counts.entry(r.verdict).or_insert(0) += 1;
    }
    Ok(ScanReport { summary, results })
}

/// Default worker count: the number of logical processors.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
