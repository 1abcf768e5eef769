//! Text and JSON views of resolution outcomes.

use std::fmt::Write as _;

use peerspin::depmodel::{DepKind, EdgeStatus, NodeId, NodeTree};
use peerspin::detector::PeerSpinReport;
use peerspin::resolver::{Resolution, ResolutionOutcome};
use serde_json::{json, Map, Value};

fn kind(k: DepKind) -> &'static str {
    match k {
        DepKind::Regular => "regular",
        DepKind::Peer => "peer",
    }
}

fn status(s: EdgeStatus) -> &'static str {
    match s {
        EdgeStatus::Valid => "valid",
        EdgeStatus::Invalid => "invalid",
        EdgeStatus::Missing => "missing",
    }
}

fn node_json(tree: &NodeTree, id: NodeId) -> Value {
    let n = tree.node(id);
    let mut edges = Map::new();
    for e in &n.edges_out {
        let mut entry = json!({ "spec": e.spec, "type": kind(e.kind), "status": status(e.status) });
        if e.optional {
            entry["optional"] = Value::Bool(true);
        }
        edges.insert(e.to_name.clone(), entry);
    }
    let children: Map<String, Value> = n
        .children
        .iter()
        .map(|(name, &c)| (name.clone(), node_json(tree, c)))
        .collect();
    json!({ "version": n.version.to_string(), "edges": edges, "children": children })
}

/// Nested object keyed by child name; maps are sorted so output is stable.
pub fn tree_json(tree: &NodeTree) -> Value {
    let root = tree.root();
    let mut v = node_json(tree, root);
    v["name"] = Value::from(tree.node(root).name.clone());
    v
}

pub fn tree_text(tree: &NodeTree) -> String {
    fn walk(tree: &NodeTree, id: NodeId, depth: usize, out: &mut String) {
        let n = tree.node(id);
        let bad = n
            .edges_out
            .iter()
            .filter(|e| e.is_active() && e.status != EdgeStatus::Valid)
            .count();
        let _ = write!(out, "{}{}@{}", "  ".repeat(depth), n.name, n.version);
        if bad > 0 {
            let _ = write!(out, " ({bad} unmet)");
        }
        out.push('\n');
        for &c in n.children.values() {
            walk(tree, c, depth + 1, out);
        }
    }
    let mut out = String::new();
    walk(tree, tree.root(), 0, &mut out);
    out
}

pub fn report_text(rep: &PeerSpinReport) -> String {
    let versions: Vec<String> = rep.versions.iter().map(ToString::to_string).collect();
    let mut out = format!(
        "peerspin: {} cycles between {} at {} (pattern {:?}, {} iterations)\n",
        rep.package,
        versions.join(" and "),
        rep.position,
        rep.pattern_hint,
        rep.iterations
    );
    if let Some(s) = &rep.peer_source {
        let _ = writeln!(out, "  peer source: {}@{}", s.name, s.version);
    }
    if let Some(e) = &rep.peer_entry {
        let _ = writeln!(out, "  peer entry:  {}@{}", e.name, e.version);
    }
    for ev in &rep.trace {
        let _ = writeln!(
            out,
            "  #{} {} {} -> {} at {}{}",
            ev.seq,
            ev.name,
            ev.from,
            ev.to,
            ev.position,
            if ev.risky { " (risky)" } else { "" }
        );
    }
    out
}

/// `resolve` output: the tree on success, otherwise the verdict object.
pub fn resolution_json(r: &Resolution) -> Value {
    match &r.outcome {
        ResolutionOutcome::Success(tree) => tree_json(tree),
        _ => verdict_json(r),
    }
}

/// `detect` output: verdict, iteration count and, when present, the report.
pub fn verdict_json(r: &Resolution) -> Value {
    let mut v = json!({ "verdict": r.outcome.verdict(), "iterations": r.iterations });
    match &r.outcome {
        ResolutionOutcome::Success(tree) => v["nodes"] = Value::from(tree.len()),
        ResolutionOutcome::PeerSpin(rep) => v["report"] = serde_json::to_value(rep).expect("report serializes"),
        ResolutionOutcome::Unresolvable(msg) => v["detail"] = Value::from(msg.clone()),
        ResolutionOutcome::IterationLimitExceeded(tail) => {
            v["tail"] = serde_json::to_value(tail).expect("log serializes")
        }
    }
    v
}

pub fn outcome_text(r: &Resolution, with_tree: bool) -> String {
    match &r.outcome {
        ResolutionOutcome::Success(tree) if with_tree => tree_text(tree),
        ResolutionOutcome::Success(tree) => format!("clean: {} nodes, {} iterations\n", tree.len(), r.iterations),
        ResolutionOutcome::PeerSpin(rep) => report_text(rep),
        ResolutionOutcome::Unresolvable(msg) => format!("unresolvable: {msg}\n"),
        ResolutionOutcome::IterationLimitExceeded(tail) => {
            let mut out = format!("iteration limit reached after {} iterations; last placements:\n", r.iterations);
            for e in tail {
                let _ = writeln!(out, "  #{} {:?} {}@{} at {}", e.seq, e.action, e.name, e.version, e.position);
            }
            out
        }
    }
}
