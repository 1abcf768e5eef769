mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use peerspin::depmodel::{
    compute_peer_set, interpret_spec, manifest_edges, resolve_name, revalidate_edges, tree_position, EdgeStatus,
    NodeId, NodeTree,
};
use peerspin::registry::{Manifest, SnapshotStore};
use peerspin::semver::Version;
use proptest::prelude::*;
use proptest::sample::Index;

const NAMES: [&str; 5] = ["a", "b", "c", "d", "e"];
const RANGES: [&str; 3] = ["^1.0.0", "^2.0.0", "*"];

/// (name, range, is_peer)
type Decl = (usize, usize, bool);
/// (parent pick, name, major, declarations)
type Op = (Index, usize, u64, Vec<Decl>);

fn manifest(name: usize, major: u64, decls: &[Decl]) -> Manifest {
    let mut m = Manifest::new(NAMES[name], Version::new(major, 0, 0));
    for &(dep, range, peer) in decls {
        if dep == name {
            continue;
        }
        m = if peer {
            m.with_peer(NAMES[dep], RANGES[range])
        } else {
            m.with_dep(NAMES[dep], RANGES[range])
        };
    }
    m
}

fn edges(m: &Manifest) -> Vec<peerspin::depmodel::DependencyEdge> {
    let store = SnapshotStore::default();
    manifest_edges(m, &|n, s| interpret_spec(&store, n, s))
}

fn all_names() -> BTreeSet<String> {
    NAMES.iter().map(|s| s.to_string()).collect()
}

/// Builds a tree of depth at most 6 and validates every edge from scratch.
fn build(ops: &[Op]) -> NodeTree {
    let root = Arc::new(manifest(0, 1, &[(1, 2, false), (2, 2, false)]));
    let mut tree = NodeTree::new(Arc::clone(&root), edges(&root));
    for (pick, name, major, decls) in ops {
        let live: Vec<NodeId> = tree.live().filter(|&n| tree.depth(n) < 6).collect();
        let parent = live[pick.index(live.len())];
        if tree.child(parent, NAMES[*name]).is_some() {
            continue;
        }
        let m = Arc::new(manifest(*name, *major, decls));
        let e = edges(&m);
        tree.insert_child(parent, m, e);
    }
    revalidate_edges(&mut tree, &all_names());
    tree
}

fn statuses(tree: &NodeTree) -> Vec<(NodeId, usize, EdgeStatus, Option<NodeId>)> {
    let mut out = Vec::new();
    for id in tree.live() {
        for (i, e) in tree.node(id).edges_out.iter().enumerate() {
            out.push((id, i, e.status, e.resolved));
        }
    }
    out
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    let decl = (0..NAMES.len(), 0..RANGES.len(), any::<bool>());
    prop::collection::vec(
        (any::<Index>(), 0..NAMES.len(), 1..=3u64, prop::collection::vec(decl, 0..3)),
        1..30,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn resolve_name_matches_brute_force_walk(ops in ops()) {
        let tree = build(&ops);
        tree.check_well_formed().unwrap();
        for id in tree.live() {
            prop_assert!(tree.depth(id) <= 6);
            for name in NAMES {
                prop_assert_eq!(resolve_name(&tree, id, name), common::walk(&tree, id, name));
            }
        }
    }

    #[test]
    fn valid_edges_satisfy_their_requirement(ops in ops()) {
        let tree = build(&ops);
        for id in tree.live() {
            for e in &tree.node(id).edges_out {
                match e.status {
                    EdgeStatus::Valid => {
                        let t = e.resolved.expect("valid edge is resolved");
                        prop_assert_eq!(&tree.node(t).name, &e.to_name);
                        prop_assert!(e.req.accepts(&tree.node(t).version));
                    }
                    EdgeStatus::Missing => prop_assert!(e.resolved.is_none()),
                    EdgeStatus::Invalid => {}
                }
            }
        }
    }

    #[test]
    fn incremental_revalidation_matches_full(ops in ops(), extra in (any::<Index>(), 0..NAMES.len(), 1..=3u64), remove in any::<Index>(), do_remove in any::<bool>()) {
        let mut tree = build(&ops);
        let mut touched = BTreeSet::new();
        if do_remove {
            let victims: Vec<NodeId> = tree.live().filter(|&n| n != tree.root()).collect();
            if !victims.is_empty() {
                let v = victims[remove.index(victims.len())];
                for n in tree.subtree(v) {
                    touched.insert(tree.node(n).name.clone());
                }
                tree.remove_subtree(v);
            }
        } else {
            let (pick, name, major) = extra;
            let live: Vec<NodeId> = tree.live().filter(|&n| tree.depth(n) < 6).collect();
            let parent = live[pick.index(live.len())];
            if let Some(old) = tree.child(parent, NAMES[name]) {
                for n in tree.subtree(old) {
                    touched.insert(tree.node(n).name.clone());
                }
                tree.remove_subtree(old);
            }
            let m = Arc::new(manifest(name, major, &[]));
            let e = edges(&m);
            let fresh = tree.insert_child(parent, m, e);
            touched.insert(NAMES[name].to_string());
            // the new node's own edges start unresolved
            for e in &tree.node(fresh).edges_out {
                touched.insert(e.to_name.clone());
            }
        }
        let mut full = tree.clone();
        revalidate_edges(&mut tree, &touched);
        revalidate_edges(&mut full, &all_names());
        prop_assert_eq!(statuses(&tree), statuses(&full));
    }

    #[test]
    fn tree_positions_are_unique(ops in ops()) {
        let tree = build(&ops);
        let positions: BTreeSet<_> = tree.live().map(|n| tree_position(&tree, n)).collect();
        prop_assert_eq!(positions.len(), tree.len());
    }

    #[test]
    fn peer_set_ignores_registry_order(decls in prop::collection::vec((0..NAMES.len(), 1..=3u64, prop::collection::vec((0..NAMES.len(), 0..RANGES.len(), any::<bool>()), 0..3)), 1..15), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut manifests: Vec<Manifest> = decls.iter().map(|(n, v, d)| manifest(*n, *v, d)).collect();
        manifests.sort_by(|a, b| (&a.name, &a.version).cmp(&(&b.name, &b.version)));
        manifests.dedup_by(|a, b| a.name == b.name && a.version == b.version);
        let forward = SnapshotStore::from_manifests(manifests.clone());
        let mut shuffled = manifests.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let backward = SnapshotStore::from_manifests(shuffled);
        for m in &manifests {
            let a = compute_peer_set(Arc::new(m.clone()), &forward, &[]);
            let b = compute_peer_set(Arc::new(m.clone()), &backward, &[]);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a, &b);
                    let names: BTreeSet<&str> = a.names().into_iter().collect();
                    prop_assert_eq!(names.len(), a.members.len());
                }
                (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }
    }
}

#[test]
fn shadowed_copy_is_found_first() {
    let m = |n: &str, v: u64| Arc::new(Manifest::new(n, Version::new(v, 0, 0)));
    let mut tree = NodeTree::new(m("app", 1), Vec::new());
    let root = tree.root();
    let draft = tree.insert_child(root, m("draft-js", 1), Vec::new());
    let react_root = tree.insert_child(root, m("react", 18), Vec::new());
    let react_nested = tree.insert_child(draft, m("react", 16), Vec::new());
    let leaf = tree.insert_child(draft, m("leaf", 1), Vec::new());
    assert_eq!(resolve_name(&tree, leaf, "react"), Some(react_nested));
    assert_eq!(resolve_name(&tree, root, "react"), Some(react_root));
    assert_eq!(resolve_name(&tree, leaf, "vue"), None);
}
