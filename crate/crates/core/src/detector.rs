//! Replacement-conflict loop detection and the placement-log loop oracle.

use std::collections::HashMap;

use serde::Serialize;

use crate::depmodel::{tree_position, DepKind, EdgeChange, EdgeStatus, NodeId, NodeTree, TreePosition};
use crate::resolver::{PlacementLogEntry, PlacementType};
use crate::semver::Version;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PatternHint {
    A,
    B,
    #[serde(rename = "unknown")]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct PackageRef {
    pub name: String,
    pub version: Version,
}

impl PackageRef {
    fn of(tree: &NodeTree, id: NodeId) -> Self {
        let n = tree.node(id);
        PackageRef {
            name: n.name.clone(),
            version: n.version.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplacementEvent {
    pub seq: u64,
    pub name: String,
    pub from: Version,
    pub to: Version,
    pub position: TreePosition,
    pub risky: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PeerSpinReport {
    pub package: String,
    /// The two alternating versions, ascending.
    pub versions: Vec<Version>,
    pub position: TreePosition,
    pub peer_source: Option<PackageRef>,
    pub peer_entry: Option<PackageRef>,
    pub pattern_hint: PatternHint,
    pub iterations: usize,
    pub trace: Vec<ReplacementEvent>,
}

/// Why a replacement was judged risky.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskFinding {
    pub hint: PatternHint,
    pub source: Option<PackageRef>,
    pub entry: Option<PackageRef>,
}

/// Position counts for risky replacements plus the full replacement trace.
#[derive(Debug, Clone, Default)]
pub struct RiskLedger {
    pos_count: HashMap<(String, Version, TreePosition), usize>,
    trace: Vec<ReplacementEvent>,
}

impl RiskLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trace(&self) -> &[ReplacementEvent] {
        &self.trace
    }

    pub fn count(&self, name: &str, version: &Version, pos: &TreePosition) -> usize {
        self.pos_count
            .get(&(name.to_string(), version.clone(), pos.clone()))
            .copied()
            .unwrap_or(0)
    }
}

pub fn record_position(ledger: &mut RiskLedger, name: &str, version: &Version, pos: &TreePosition) -> usize {
    let c = ledger
        .pos_count
        .entry((name.to_string(), version.clone(), pos.clone()))
        .or_insert(0);
    *c += 1;
    *c
}

/// Inspects the edge transitions caused by swapping `old` for the node now
/// at `slot`. Risky when a PeerSource's regular edge into its entry broke,
/// or when a peer edge from an entry or member onto the swapped name broke.
pub fn check_risky(tree: &NodeTree, slot: NodeId, old: &PackageRef, changes: &[EdgeChange]) -> Option<RiskFinding> {
    let broken: Vec<&EdgeChange> = changes
        .iter()
        .filter(|c| c.before == EdgeStatus::Valid && c.after != EdgeStatus::Valid)
        .filter(|c| tree.contains(c.edge.from) && tree.edge(c.edge).is_active())
        .collect();
    let slot_name = &tree.node(slot).name;

    for c in &broken {
        let e = tree.edge(c.edge);
        if e.kind != DepKind::Regular {
            continue;
        }
        let entry = match e.resolved {
            Some(t) if t == slot => old.clone(),
            Some(t) => PackageRef::of(tree, t),
            None => continue,
        };
        return Some(RiskFinding {
            hint: PatternHint::A,
            source: Some(PackageRef::of(tree, c.edge.from)),
            entry: Some(entry),
        });
    }

    for c in &broken {
        let e = tree.edge(c.edge);
        if e.kind != DepKind::Peer || &e.to_name != slot_name {
            continue;
        }
        let entry = tree.peer_entries(c.edge.from).into_iter().next().unwrap_or(c.edge.from);
        let source = tree
            .in_edges(entry)
            .into_iter()
            .find(|s| tree.edge(*s).kind == DepKind::Regular)
            .map(|s| PackageRef::of(tree, s.from));
        return Some(RiskFinding {
            hint: PatternHint::B,
            source,
            entry: Some(PackageRef::of(tree, entry)),
        });
    }
    None
}

/// Called at the moment of a replacement, before pruning. Returns a report
/// when the replacing version has now been placed riskily at this position
/// more than once.
pub fn on_replace(
    ledger: &mut RiskLedger,
    tree: &NodeTree,
    slot: NodeId,
    old: &PackageRef,
    changes: &[EdgeChange],
    seq: u64,
    iterations: usize,
) -> Option<PeerSpinReport> {
    let new = PackageRef::of(tree, slot);
    let position = tree_position(tree, slot);
    let finding = check_risky(tree, slot, old, changes);
    ledger.trace.push(ReplacementEvent {
        seq,
        name: new.name.clone(),
        from: old.version.clone(),
        to: new.version.clone(),
        position: position.clone(),
        risky: finding.is_some(),
    });
    let finding = finding?;
    if record_position(ledger, &new.name, &new.version, &position) <= 1 {
        return None;
    }
    let mut versions = vec![old.version.clone(), new.version.clone()];
    versions.sort();
    Some(PeerSpinReport {
        package: new.name,
        versions,
        position,
        peer_source: finding.source,
        peer_entry: finding.entry,
        pattern_hint: finding.hint,
        iterations,
        trace: ledger.trace.clone(),
    })
}

fn same_step(a: &PlacementLogEntry, b: &PlacementLogEntry) -> bool {
    a.action == b.action && a.name == b.name && a.version == b.version && a.position == b.position
}

/// True when the log ends with at least two back-to-back copies of some
/// window of at most `max_window` entries that includes a replacement.
/// Windows of only ADD/KEEP steps cannot cycle.
pub fn loop_log_oracle(log: &[PlacementLogEntry], max_window: usize) -> bool {
    let n = log.len();
    (1..=max_window.min(n / 2)).any(|w| {
        let tail = &log[n - w..];
        tail.iter().any(|e| e.action == PlacementType::Replace)
            && (0..w).all(|i| same_step(&log[n - 2 * w + i], &tail[i]))
    })
}
