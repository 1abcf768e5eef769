//! Ecosystem statistics over a snapshot and a set of scan results.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::Datelike;
use serde::Serialize;

use super::{ScanResult, Verdict};
use crate::depmodel::{interpret_spec, EdgeReq};
use crate::registry::{Manifest, SnapshotStore};
use crate::semver::Version;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepCategory {
    None,
    RegularOnly,
    HasPeer,
}

fn manifest_category(m: &Manifest) -> DepCategory {
    if !m.peer_dependencies.is_empty() {
        DepCategory::HasPeer
    } else if !m.dependencies.is_empty() {
        DepCategory::RegularOnly
    } else {
        DepCategory::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeerUsage {
    pub packages: usize,
    pub versions: usize,
    pub packages_by_category: BTreeMap<DepCategory, usize>,
    pub versions_by_category: BTreeMap<DepCategory, usize>,
    /// Share of packages with at least one version declaring peers.
    pub peer_usage_fraction: f64,
}

/// A package falls in the most peer-heavy category any of its versions has.
pub fn peer_usage_stats(store: &SnapshotStore) -> PeerUsage {
    let mut packages_by_category = BTreeMap::new();
    let mut versions_by_category = BTreeMap::new();
    let (mut packages, mut versions) = (0, 0);
    for p in store.packuments() {
        let mut worst = DepCategory::None;
        for m in p.versions.values() {
            let c = manifest_category(m);
            *versions_by_category.entry(c).or_insert(0) += 1;
            worst = worst.max(c);
            versions += 1;
        }
        *packages_by_category.entry(worst).or_insert(0) += 1;
        packages += 1;
    }
    let with_peers = packages_by_category.get(&DepCategory::HasPeer).copied().unwrap_or(0);
    PeerUsage {
        packages,
        versions,
        packages_by_category,
        versions_by_category,
        peer_usage_fraction: if packages == 0 {
            0.0
        } else {
            with_peers as f64 / packages as f64
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct YearBucket {
    pub released: usize,
    pub with_peers: usize,
    pub peerspin_affected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct YearlyCounts {
    pub yearly: BTreeMap<i32, YearBucket>,
    /// Store versions without a release time.
    pub undated_versions: usize,
    /// PeerSpin results whose version has no release time.
    pub skipped_affected: usize,
}

/// Buckets released versions, peer-declaring versions and PeerSpin-affected
/// versions by release year. Undated versions are counted separately.
pub fn yearly_affected_counts(store: &SnapshotStore, results: &[ScanResult]) -> YearlyCounts {
    let mut out = YearlyCounts::default();
    for p in store.packuments() {
        for (v, m) in &p.versions {
            match p.release_time(v) {
                Some(t) => {
                    let b = out.yearly.entry(t.year()).or_default();
                    b.released += 1;
                    if !m.peer_dependencies.is_empty() {
                        b.with_peers += 1;
                    }
                }
                None => out.undated_versions += 1,
            }
        }
    }
    let affected: BTreeSet<(&str, &str)> = results
        .iter()
        .filter(|r| r.verdict == Verdict::Peerspin)
        .map(|r| (r.name.as_str(), r.version.as_str()))
        .collect();
    for (name, version) in affected {
        let time = store
            .get_packument(name)
            .ok()
            .and_then(|p| p.versions.keys().find(|v| v.to_string() == version).and_then(|v| p.release_time(v)));
        match time {
            Some(t) => out.yearly.entry(t.year()).or_default().peerspin_affected += 1,
            None => out.skipped_affected += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeerDependent {
    pub name: String,
    pub version: Version,
    pub count: usize,
}

/// For every stored version, how many manifests of other packages declare
/// a peer range it satisfies. Highest counts first; ties by name, then
/// version ascending. Zero counts are omitted.
pub fn top_peer_dependents(store: &SnapshotStore, n: usize) -> Vec<PeerDependent> {
    let mut counts: HashMap<(String, Version), usize> = HashMap::new();
    for p in store.packuments() {
        for m in p.versions.values() {
            for (peer, spec) in &m.peer_dependencies {
                if peer == &m.name {
                    continue;
                }
                let Ok(target) = store.get_packument(peer) else { continue };
                let EdgeReq::Range(range) = interpret_spec(store, peer, spec) else { continue };
                for v in target.versions.keys() {
                    if crate::semver::satisfies(v, &range) {
                        *counts.entry((peer.clone(), v.clone())).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    let mut ranked: Vec<PeerDependent> = counts
        .into_iter()
        .map(|((name, version), count)| PeerDependent { name, version, count })
        .collect();
    ranked.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)).then_with(|| a.version.cmp(&b.version)));
    ranked.truncate(n);
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcosystemStats {
    pub usage: PeerUsage,
    pub yearly: YearlyCounts,
    pub top_peer_dependents: Vec<PeerDependent>,
}

pub fn ecosystem_stats(store: &SnapshotStore, results: &[ScanResult], top: usize) -> EcosystemStats {
    EcosystemStats {
        usage: peer_usage_stats(store),
        yearly: yearly_affected_counts(store, results),
        top_peer_dependents: top_peer_dependents(store, top),
    }
}
