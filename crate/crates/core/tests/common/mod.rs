//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use peerspin::depmodel::{DepKind, EdgeReq, NodeId, NodeTree};
use peerspin::detector::loop_log_oracle;
use peerspin::resolver::{resolve, Resolution, ResolutionConfig};
use peerspin::scanner::fixtures::{gen_pattern_fixture, gen_pattern_variant, gen_random_fixture, Fixture, Pattern, RandomShape};
use peerspin::semver::satisfies;

/// Brute-force directory walk: collect every ancestor dir, then take the
/// first one holding `name`.
pub fn walk(tree: &NodeTree, from: NodeId, name: &str) -> Option<NodeId> {
    let mut dirs = vec![from];
    let mut cur = from;
    while let Some(p) = tree.get(cur).expect("live node").parent {
        dirs.push(p);
        cur = p;
    }
    dirs.into_iter().find_map(|d| tree.get(d).expect("live node").children.get(name).copied())
}

/// Full rescan from manifests: every required edge resolves to a satisfying
/// node, and every regular dependent sees the same copies of its target's
/// transitive peers that the target itself loads.
pub fn sound(tree: &NodeTree) -> Result<(), String> {
    for id in tree.live() {
        let n = tree.node(id);
        for e in &n.edges_out {
            if e.optional {
                continue;
            }
            let t = walk(tree, id, &e.to_name).ok_or(format!("{}: {} is missing", n.name, e.to_name))?;
            let EdgeReq::Range(r) = &e.req else {
                return Err(format!("{}: unsupported spec for {}", n.name, e.to_name));
            };
            if !satisfies(&tree.node(t).version, r) {
                return Err(format!("{}: {} does not satisfy {}", n.name, tree.node(t).version, e.spec));
            }
            if e.kind != DepKind::Regular {
                continue;
            }
            let mut stack = vec![t];
            let mut seen = vec![t];
            while let Some(x) = stack.pop() {
                for (p, _) in tree.node(x).manifest.required_peers() {
                    let Some(mx) = walk(tree, x, p) else {
                        return Err(format!("{}: peer {p} is missing", tree.node(x).name));
                    };
                    let seen_by_source = walk(tree, id, p).map(|y| tree.node(y).version.clone());
                    if seen_by_source.as_ref() != Some(&tree.node(mx).version) {
                        return Err(format!("{} does not see {}'s peer {p}", n.name, tree.node(x).name));
                    }
                    if !seen.contains(&mx) {
                        seen.push(mx);
                        stack.push(mx);
                    }
                }
            }
        }
    }
    Ok(())
}

pub const ORACLE_CAP: usize = 1000;
pub const ORACLE_WINDOW: usize = 256;

/// Runs the fixture with the detector off and a capped loop, then asks the
/// log oracle whether it ended in a cycle.
pub fn oracle_verdict(f: &Fixture) -> (bool, Resolution) {
    let config = ResolutionConfig {
        max_iterations: ORACLE_CAP,
        detector_enabled: false,
        emit_placement_log: true,
    };
    let r = resolve(&f.root(), &f.store(), config);
    (loop_log_oracle(&r.log, ORACLE_WINDOW), r)
}

pub fn positives() -> Vec<Fixture> {
    let mut out = Vec::new();
    for p in [Pattern::A, Pattern::B] {
        for k in 0..=8 {
            out.push(gen_pattern_fixture(p, k).expect("within limit"));
        }
    }
    out.extend((0..100).map(|s| gen_pattern_variant(s, "")));
    out
}

pub fn negatives(n: u64) -> Vec<Fixture> {
    (0..n).map(|s| gen_random_fixture(s, RandomShape::conflict_free(), "")).collect()
}
