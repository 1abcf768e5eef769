//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//! Runs without the libtest harness so the lines always reach stdout.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use peerspin::registry::{Manifest, SnapshotStore};
use peerspin::resolver::{resolve, ResolutionConfig, ResolutionOutcome, RootSpec};
use peerspin::scanner::fixtures::{
    dated_store, gen_pattern_fixture, gen_pattern_variant, gen_random_fixture, motivating_fixture, Fixture, Pattern,
    RandomShape,
};
use peerspin::scanner::stats::{peer_usage_stats, top_peer_dependents, yearly_affected_counts, DepCategory};
use peerspin::scanner::{scan_batch, ScanResult, ScanTask, Verdict};
use peerspin::semver::{max_satisfying, parse_range, parse_version, satisfies, Version};
use serde::Deserialize;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn detect(f: &Fixture) -> ResolutionOutcome {
    resolve(&f.root(), &f.store(), ResolutionConfig::default()).outcome
}

fn pattern_reproduction() -> Check {
    let mut notes = Vec::new();
    for (pattern, expect) in [(Pattern::A, "B"), (Pattern::B, "C")] {
        let f = gen_pattern_fixture(pattern, 0).map_err(|e| e.to_string())?;
        let started = Instant::now();
        let outcome = detect(&f);
        let elapsed = started.elapsed();
        let ResolutionOutcome::PeerSpin(rep) = outcome else {
            return Err(format!("pattern {pattern:?}: verdict {}", outcome.verdict()));
        };
        ensure(rep.package == expect, || format!("pattern {pattern:?}: cycle on {}, expected {expect}", rep.package))?;
        ensure(elapsed < Duration::from_secs(1), || format!("pattern {pattern:?}: took {elapsed:?}"))?;
        notes.push(format!("{pattern:?}->{} in {:.2}ms", rep.package, elapsed.as_secs_f64() * 1e3));
    }
    Ok(notes.join(", "))
}

fn motivating_example() -> Check {
    let (project, registry) = motivating_fixture();
    let store = SnapshotStore::from_manifests(registry);
    let outcome = resolve(&RootSpec::Manifest(project), &store, ResolutionConfig::default()).outcome;
    let ResolutionOutcome::PeerSpin(rep) = outcome else {
        return Err(format!("verdict {}", outcome.verdict()));
    };
    ensure(rep.package == "react", || format!("cycle on {}", rep.package))?;
    let distinct: BTreeSet<&Version> = rep.versions.iter().collect();
    ensure(rep.versions.len() == 2 && distinct.len() == 2, || format!("versions {:?}", rep.versions))?;
    Ok(format!("react {} <-> {} at {}", rep.versions[0], rep.versions[1], rep.position))
}

fn intermediate_robustness() -> Check {
    for pattern in [Pattern::A, Pattern::B] {
        for k in 1..=3 {
            let f = gen_pattern_fixture(pattern, k).map_err(|e| e.to_string())?;
            let v = detect(&f).verdict();
            ensure(v == "peerspin", || format!("{}: {v}", f.label))?;
        }
    }
    Ok("6/6 peerspin".into())
}

fn detector_oracle_agreement() -> Check {
    let pos = common::positives();
    let neg = common::negatives(200);
    let max_packages = pos.iter().chain(&neg).map(Fixture::packages).max().unwrap_or(0);
    ensure(pos.len() >= 50 && neg.len() >= 150, || "corpus too small".into())?;
    ensure(max_packages <= 30, || format!("fixture with {max_packages} packages"))?;
    let mut disagreements = Vec::new();
    let (mut oracle_loops, mut detected) = (0, 0);
    for f in pos.iter().chain(&neg) {
        let det = matches!(detect(f), ResolutionOutcome::PeerSpin(_));
        let (oracle, _) = common::oracle_verdict(f);
        detected += det as usize;
        oracle_loops += oracle as usize;
        if det != oracle {
            disagreements.push(format!("{} (detector {det}, oracle {oracle})", f.label));
        }
    }
    ensure(disagreements.is_empty(), || format!("{} disagreements: {}", disagreements.len(), disagreements.join("; ")))?;
    Ok(format!(
        "{} fixtures ({} positive, {} negative), detector {detected} / oracle {oracle_loops} loops, 0 disagreements",
        pos.len() + neg.len(),
        pos.len(),
        neg.len()
    ))
}

fn success_soundness() -> Check {
    let mut corpus = common::positives();
    corpus.extend(common::negatives(200));
    corpus.extend((0..200).map(|s| gen_random_fixture(5000 + s, RandomShape::mixed(), "")));
    let mut successes = 0;
    for f in &corpus {
        if let ResolutionOutcome::Success(tree) = detect(f) {
            tree.check_well_formed().map_err(|e| format!("{}: {e}", f.label))?;
            common::sound(&tree).map_err(|e| format!("{}: {e}", f.label))?;
            successes += 1;
        }
    }
    ensure(successes >= 200, || format!("only {successes} successes"))?;
    Ok(format!("{successes}/{successes} successful trees pass full rescan"))
}

/// One store holding many prefixed fixtures, plus a task per fixture root.
fn combined(fixtures: &[Fixture]) -> (SnapshotStore, Vec<ScanTask>) {
    let store = SnapshotStore::from_manifests(fixtures.iter().flat_map(|f| f.manifests.iter().cloned()));
    let tasks = fixtures
        .iter()
        .map(|f| ScanTask::new(&f.root_name, f.root_version.to_string()))
        .collect();
    (store, tasks)
}

fn prefixed_corpus(n: u64) -> Vec<Fixture> {
    (0..n)
        .map(|i| match i % 5 {
            0 => gen_pattern_variant(i, &format!("v{i}-")),
            1 => gen_random_fixture(i, RandomShape::mixed(), &format!("m{i}-")),
            _ => gen_random_fixture(i, RandomShape::conflict_free(), &format!("c{i}-")),
        })
        .collect()
}

fn verdicts(results: &[ScanResult]) -> Vec<(String, String, Verdict)> {
    results.iter().map(|r| (r.name.clone(), r.version.clone(), r.verdict)).collect()
}

fn determinism() -> Check {
    let mut corpus = common::positives();
    corpus.extend(common::negatives(100));
    let config = ResolutionConfig {
        emit_placement_log: true,
        ..Default::default()
    };
    for f in &corpus {
        let store = f.store();
        let a = resolve(&f.root(), &store, config);
        let b = resolve(&f.root(), &store, config);
        let la = serde_json::to_vec(&a.log).map_err(|e| e.to_string())?;
        let lb = serde_json::to_vec(&b.log).map_err(|e| e.to_string())?;
        ensure(la == lb && a.outcome.verdict() == b.outcome.verdict(), || format!("{}: runs differ", f.label))?;
    }
    let (store, tasks) = combined(&prefixed_corpus(300));
    let mut sink1 = Vec::new();
    let mut sink8 = Vec::new();
    let r1 = scan_batch(&store, &tasks, 1, ResolutionConfig::default(), &mut sink1).map_err(|e| e.to_string())?;
    let r8 = scan_batch(&store, &tasks, 8, ResolutionConfig::default(), &mut sink8).map_err(|e| e.to_string())?;
    let mut v1 = verdicts(&r1.results);
    let mut v8 = verdicts(&r8.results);
    v1.sort();
    v8.sort();
    ensure(v1 == v8 && r1.summary == r8.summary, || "scan verdicts differ between 1 and 8 workers".into())?;
    Ok(format!(
        "{} byte-identical logs; scan of {} tasks identical at jobs 1 and 8",
        corpus.len(),
        tasks.len()
    ))
}

/// Package names reachable from `root` over any version's declarations.
fn transitive_names(store: &SnapshotStore, root: &str) -> usize {
    let mut seen = HashSet::from([root.to_string()]);
    let mut stack = vec![root.to_string()];
    while let Some(name) = stack.pop() {
        let Ok(p) = store.get_packument(&name) else { continue };
        for m in p.versions.values() {
            for dep in m.dependencies.keys().chain(m.peer_dependencies.keys()) {
                if seen.insert(dep.clone()) {
                    stack.push(dep.clone());
                }
            }
        }
    }
    seen.len() - 1
}

fn throughput() -> Check {
    let fixtures: Vec<Fixture> = (0..1000u64)
        .map(|i| {
            if i % 4 == 0 {
                gen_pattern_variant(i, &format!("p{i}-"))
            } else {
                gen_random_fixture(i, RandomShape::conflict_free(), &format!("c{i}-"))
            }
        })
        .collect();
    let (store, tasks) = combined(&fixtures);
    let widest = tasks.iter().map(|t| transitive_names(&store, &t.name)).max().unwrap_or(0);
    ensure(widest <= 40, || format!("a root reaches {widest} packages"))?;
    let mut sink = std::io::sink();
    let report = scan_batch(&store, &tasks, 1, ResolutionConfig::default(), &mut sink).map_err(|e| e.to_string())?;
    ensure(report.summary.total == 1000, || format!("{} results", report.summary.total))?;
    let limits = report.summary.count(Verdict::IterationLimit);
    ensure(limits == 0, || format!("{limits} iteration-limit verdicts"))?;
    let total: Duration = report.results.iter().map(|r| r.elapsed).sum();
    let mean_ms = total.as_secs_f64() * 1e3 / report.results.len() as f64;
    ensure(mean_ms <= 25.0, || format!("mean {mean_ms:.3}ms"))?;
    Ok(format!(
        "mean {mean_ms:.3}ms over 1000 roots ({} peerspin, {} clean)",
        report.summary.count(Verdict::Peerspin),
        report.summary.count(Verdict::Clean)
    ))
}

fn brute_usage(manifests: &[Manifest]) -> (BTreeMap<DepCategory, usize>, BTreeMap<DepCategory, usize>) {
    let category = |m: &Manifest| {
        if !m.peer_dependencies.is_empty() {
            DepCategory::HasPeer
        } else if !m.dependencies.is_empty() {
            DepCategory::RegularOnly
        } else {
            DepCategory::None
        }
    };
    let mut versions = BTreeMap::new();
    let mut by_name: BTreeMap<&str, Vec<DepCategory>> = BTreeMap::new();
    for m in manifests {
        *versions.entry(category(m)).or_insert(0) += 1;
        by_name.entry(&m.name).or_default().push(category(m));
    }
    let mut packages = BTreeMap::new();
    for cats in by_name.values() {
        let c = if cats.contains(&DepCategory::HasPeer) {
            DepCategory::HasPeer
        } else if cats.contains(&DepCategory::RegularOnly) {
            DepCategory::RegularOnly
        } else {
            DepCategory::None
        };
        *packages.entry(c).or_insert(0) += 1;
    }
    (packages, versions)
}

fn brute_top(manifests: &[Manifest], n: usize) -> Vec<(String, Version, usize)> {
    let mut out = Vec::new();
    for target in manifests {
        let count = manifests
            .iter()
            .filter(|m| m.name != target.name)
            .filter(|m| {
                m.peer_dependencies
                    .get(&target.name)
                    .and_then(|spec| parse_range(spec).ok())
                    .is_some_and(|r| satisfies(&target.version, &r))
            })
            .count();
        if count > 0 {
            out.push((target.name.clone(), target.version.clone(), count));
        }
    }
    out.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)).then_with(|| a.1.cmp(&b.1)));
    out.truncate(n);
    out
}

fn stats_store(seed: u64) -> Vec<Manifest> {
    let mut manifests = Vec::new();
    for (i, shape) in [RandomShape::mixed(), RandomShape::conflict_free(), RandomShape::mixed()].into_iter().enumerate() {
        manifests.extend(gen_random_fixture(seed * 7 + i as u64, shape, &format!("s{i}-")).manifests);
    }
    manifests
}

fn statistics() -> Check {
    // hand-built store with known answers
    let v = |s: &str| parse_version(s).expect("literal version");
    let hand = vec![
        Manifest::new("react", v("16.14.0")),
        Manifest::new("react", v("18.2.0")),
        Manifest::new("react-dom", v("18.2.0")).with_peer("react", "^18.2.0"),
        Manifest::new("draft-js", v("0.11.7")).with_peer("react", "^16.0.0 || ^18.0.0"),
        Manifest::new("antd", v("5.12.0")).with_peer("react-dom", "^18.0.0").with_dep("lodash", "^4.0.0"),
        Manifest::new("lodash", v("4.17.21")),
    ];
    let store = SnapshotStore::from_manifests(hand.clone());
    let usage = peer_usage_stats(&store);
    ensure(usage.packages == 5 && usage.versions == 6, || format!("{usage:?}"))?;
    ensure((usage.peer_usage_fraction - 0.6).abs() < 1e-12, || format!("{usage:?}"))?;
    let top = top_peer_dependents(&store, 1);
    ensure(
        top.len() == 1 && top[0].name == "react" && top[0].version == v("18.2.0") && top[0].count == 2,
        || format!("{top:?}"),
    )?;

    let mut checked = 0;
    for seed in 0..40u64 {
        let manifests = stats_store(seed);
        let names: BTreeSet<&str> = manifests.iter().map(|m| m.name.as_str()).collect();
        ensure(names.len() <= 50, || format!("seed {seed}: {} packages", names.len()))?;
        let store = dated_store(&manifests, 2015);

        let (pk, vk) = brute_usage(&manifests);
        let usage = peer_usage_stats(&store);
        ensure(usage.packages_by_category == pk && usage.versions_by_category == vk, || format!("seed {seed}: usage"))?;
        let with_peer = pk.get(&DepCategory::HasPeer).copied().unwrap_or(0);
        ensure(usage.peer_usage_fraction == with_peer as f64 / names.len() as f64, || format!("seed {seed}: fraction"))?;

        // yearly: the k-th version of a package is dated 2015 + k
        let mut results = Vec::new();
        let mut expected: BTreeMap<i32, (usize, usize, usize)> = BTreeMap::new();
        let mut index: BTreeMap<&str, i32> = BTreeMap::new();
        for (i, m) in manifests.iter().enumerate() {
            let k = index.entry(&m.name).or_insert(0);
            let year = 2015 + *k;
            *k += 1;
            let e = expected.entry(year).or_default();
            e.0 += 1;
            e.1 += !m.peer_dependencies.is_empty() as usize;
            if i % 3 == 0 {
                e.2 += 1;
                results.push(ScanResult {
                    name: m.name.clone(),
                    version: m.version.to_string(),
                    verdict: Verdict::Peerspin,
                    elapsed: Duration::ZERO,
                    report: None,
                    detail: None,
                });
            }
        }
        results.push(ScanResult {
            name: "ghost".into(),
            version: "1.0.0".into(),
            verdict: Verdict::Peerspin,
            elapsed: Duration::ZERO,
            report: None,
            detail: None,
        });
        let yearly = yearly_affected_counts(&store, &results);
        let got: BTreeMap<i32, (usize, usize, usize)> = yearly
            .yearly
            .iter()
            .map(|(y, b)| (*y, (b.released, b.with_peers, b.peerspin_affected)))
            .collect();
        ensure(got == expected && yearly.skipped_affected == 1, || format!("seed {seed}: yearly {got:?} vs {expected:?}"))?;

        let top: Vec<(String, Version, usize)> = top_peer_dependents(&store, 10)
            .into_iter()
            .map(|d| (d.name, d.version, d.count))
            .collect();
        ensure(top == brute_top(&manifests, 10), || format!("seed {seed}: top peer dependents"))?;
        checked += 1;
    }
    Ok(format!("hand-built store plus {checked} random stores match brute force"))
}

#[derive(Deserialize)]
struct Corpus {
    satisfies: Vec<SatisfiesCase>,
    max_satisfying: Vec<MaxCase>,
}

#[derive(Deserialize)]
struct SatisfiesCase {
    version: String,
    range: String,
    expected: bool,
}

#[derive(Deserialize)]
struct MaxCase {
    versions: Vec<String>,
    range: String,
    expected: Option<String>,
}

fn semver_conformance() -> Check {
    let corpus: Corpus =
        serde_json::from_str(include_str!("data/semver_corpus.json")).map_err(|e| e.to_string())?;
    ensure(corpus.satisfies.len() >= 500, || "corpus too small".into())?;
    let mut mismatches = 0;
    for c in &corpus.satisfies {
        let v = parse_version(&c.version).map_err(|e| e.to_string())?;
        let r = parse_range(&c.range).map_err(|e| e.to_string())?;
        mismatches += (satisfies(&v, &r) != c.expected) as usize;
    }
    for c in &corpus.max_satisfying {
        let vs: Vec<Version> = c.versions.iter().map(|s| parse_version(s)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let r = parse_range(&c.range).map_err(|e| e.to_string())?;
        let got = max_satisfying(vs.iter(), &r).map(|v| v.to_string());
        mismatches += (got != c.expected) as usize;
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok(format!(
        "{} satisfies + {} max_satisfying cases, 0 mismatches",
        corpus.satisfies.len(),
        corpus.max_satisfying.len()
    ))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 9] = [
        ("pattern reproduction", pattern_reproduction),
        ("motivating example", motivating_example),
        ("intermediate-node robustness", intermediate_robustness),
        ("detector/oracle agreement", detector_oracle_agreement),
        ("success soundness", success_soundness),
        ("determinism", determinism),
        ("throughput budget", throughput),
        ("ecosystem statistics", statistics),
        ("semver conformance", semver_conformance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail}) [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({detail}) [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
