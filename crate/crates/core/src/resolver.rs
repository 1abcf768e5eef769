//! Breadth-first dependency resolution: load, place, prune, re-queue.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use crate::depmodel::{
    compute_peer_set_with, interpret_spec, manifest_edges, revalidate_edges, tree_position, ContextBinding, DepKind,
    EdgeChange, EdgeRef, EdgeReq, EdgeStatus, NodeId, NodeTree, PeerSet, TreePosition,
};
use crate::detector::{on_replace, PackageRef, PeerSpinReport, RiskLedger};
use crate::registry::{select_version, Manifest, PackumentSource, Requested};
use crate::semver::{Version, VersionRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PlacementType {
    Add,
    Keep,
    Replace,
    Conflict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolutionConfig {
    pub max_iterations: usize,
    pub detector_enabled: bool,
    pub emit_placement_log: bool,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            max_iterations: 10_000,
            detector_enabled: true,
            emit_placement_log: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlacementLogEntry {
    pub seq: u64,
    pub action: PlacementType,
    pub name: String,
    pub version: Version,
    pub position: TreePosition,
}

/// What to install: a registry package or a project manifest used as the
/// tree root.
#[derive(Debug, Clone)]
pub enum RootSpec {
    Package { name: String, requested: String },
    Manifest(Manifest),
}

impl RootSpec {
    /// Parses `name@range-or-tag`; scoped names keep their leading `@`.
    /// A bare name means `latest`.
    pub fn parse(text: &str) -> RootSpec {
        let split = text.char_indices().skip(1).find(|&(_, c)| c == '@').map(|(i, _)| i);
        let (name, requested) = match split {
            Some(i) => (&text[..i], &text[i + 1..]),
            None => (text, "latest"),
        };
        RootSpec::Package {
            name: name.to_string(),
            requested: requested.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ResolutionOutcome {
    Success(NodeTree),
    PeerSpin(PeerSpinReport),
    Unresolvable(String),
    IterationLimitExceeded(Vec<PlacementLogEntry>),
}

impl ResolutionOutcome {
    pub fn verdict(&self) -> &'static str {
        match self {
            ResolutionOutcome::Success(_) => "clean",
            ResolutionOutcome::PeerSpin(_) => "peerspin",
            ResolutionOutcome::Unresolvable(_) => "unresolvable",
            ResolutionOutcome::IterationLimitExceeded(_) => "iteration-limit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Resolution {
    pub outcome: ResolutionOutcome,
    /// Full placement log; empty unless `emit_placement_log` was set.
    pub log: Vec<PlacementLogEntry>,
    pub iterations: usize,
}

const LOG_TAIL: usize = 32;

/// FIFO of nodes awaiting processing; a node is pending at most once.
#[derive(Debug, Default, Clone)]
pub struct WorkQueue {
    items: VecDeque<NodeId>,
    pending: HashSet<NodeId>,
}

impl WorkQueue {
    pub fn push(&mut self, id: NodeId) -> bool {
        if self.pending.insert(id) {
            self.items.push_back(id);
            true
        } else {
            false
        }
    }

    pub fn pop(&mut self) -> Option<NodeId> {
        let id = self.items.pop_front()?;
        self.pending.remove(&id);
        Some(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Enqueues nodes placed this round, then sources of invalidated edges,
/// each group in tree-position order. Dead nodes are skipped.
pub fn update_queue(queue: &mut WorkQueue, tree: &NodeTree, placed: &[NodeId], invalidated: &BTreeSet<NodeId>) {
    let sorted = |ids: &mut dyn Iterator<Item = NodeId>| {
        let mut v: Vec<(TreePosition, NodeId)> =
            ids.filter(|id| tree.contains(*id)).map(|id| (tree_position(tree, id), id)).collect();
        v.sort();
        v.dedup();
        v
    };
    for (_, id) in sorted(&mut placed.iter().copied()) {
        queue.push(id);
    }
    for (_, id) in sorted(&mut invalidated.iter().copied()) {
        queue.push(id);
    }
}

/// Loaded work for one non-valid edge of the node being processed.
#[derive(Debug, Clone)]
pub struct LoadedItem {
    pub edge: EdgeRef,
    pub kind: DepKind,
    pub set: PeerSet,
}

enum Stop {
    PeerSpin(Box<PeerSpinReport>),
    Unresolvable(String),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Regular,
    Peer,
}

struct Candidate {
    name: String,
    version: Version,
    manifest: Arc<Manifest>,
}

struct Engine<'a> {
    store: &'a dyn PackumentSource,
    config: ResolutionConfig,
    tree: NodeTree,
    queue: WorkQueue,
    log: Vec<PlacementLogEntry>,
    tail: VecDeque<PlacementLogEntry>,
    seq: u64,
    ledger: RiskLedger,
    pops: usize,
    placed: Vec<NodeId>,
    invalidated: BTreeSet<NodeId>,
}

pub fn resolve(root: &RootSpec, store: &dyn PackumentSource, config: ResolutionConfig) -> Resolution {
    let root_manifest = match root {
        RootSpec::Manifest(m) => m.clone(),
        RootSpec::Package { name, requested } => {
            let picked = Requested::parse(name, requested).and_then(|req| select_version(store, name, &req));
            match picked {
                Ok((v, _)) => Manifest::new(crate::depmodel::ROOT_LABEL, Version::new(0, 0, 0))
                    .with_dep(name, &VersionRange::exact(&v).to_string()),
                Err(e) => {
                    return Resolution {
                        outcome: ResolutionOutcome::Unresolvable(e.to_string()),
                        log: Vec::new(),
                        iterations: 0,
                    }
                }
            }
        }
    };
    let edges = manifest_edges(&root_manifest, &|n, s| interpret_spec(store, n, s));
    let mut tree = NodeTree::new(Arc::new(root_manifest), edges);
    let all: BTreeSet<String> = tree.node(tree.root()).edges_out.iter().map(|e| e.to_name.clone()).collect();
    revalidate_edges(&mut tree, &all);
    let mut engine = Engine {
        store,
        config,
        tree,
        queue: WorkQueue::default(),
        log: Vec::new(),
        tail: VecDeque::new(),
        seq: 0,
        ledger: RiskLedger::new(),
        pops: 0,
        placed: Vec::new(),
        invalidated: BTreeSet::new(),
    };
    let outcome = engine.run();
    Resolution {
        outcome,
        log: engine.log,
        iterations: engine.pops,
    }
}

impl Engine<'_> {
    fn run(&mut self) -> ResolutionOutcome {
        self.queue.push(self.tree.root());
        while !self.queue.is_empty() {
            if self.pops >= self.config.max_iterations {
                return ResolutionOutcome::IterationLimitExceeded(self.tail.iter().cloned().collect());
            }
            let current = self.queue.pop().expect("non-empty queue");
            self.pops += 1;
            if !self.tree.contains(current) {
                continue;
            }
            match self.process(current) {
                Ok(()) => {}
                Err(Stop::PeerSpin(report)) => return ResolutionOutcome::PeerSpin(*report),
                Err(Stop::Unresolvable(msg)) => return ResolutionOutcome::Unresolvable(msg),
            }
            let placed = std::mem::take(&mut self.placed);
            let invalidated = std::mem::take(&mut self.invalidated);
            update_queue(&mut self.queue, &self.tree, &placed, &invalidated);
        }
        if let Some(msg) = self.unsatisfied_edge() {
            return ResolutionOutcome::Unresolvable(msg);
        }
        ResolutionOutcome::Success(self.tree.clone())
    }

    fn unsatisfied_edge(&self) -> Option<String> {
        self.tree.live().find_map(|id| {
            let n = self.tree.node(id);
            n.edges_out
                .iter()
                .find(|e| e.is_active() && e.status != EdgeStatus::Valid)
                .map(|e| format!("{}@{} cannot satisfy {} {:?}", n.name, n.version, e.to_name, e.spec))
        })
    }

    fn process(&mut self, current: NodeId) -> Result<(), Stop> {
        let items = load_nodes(current, &self.tree, self.store).map_err(Stop::Unresolvable)?;
        for item in items {
            if !self.tree.contains(current) {
                break;
            }
            if self.tree.edge(item.edge).status == EdgeStatus::Valid {
                continue;
            }
            // earlier placements this round may have changed the context
            let item = if context_current(&item, &self.tree) {
                item
            } else {
                load_edge(item.edge, &self.tree, self.store).map_err(Stop::Unresolvable)?
            };
            self.place_set(&item)?;
        }
        Ok(())
    }

    fn place_set(&mut self, item: &LoadedItem) -> Result<(), Stop> {
        let requester = item.edge.from;
        let (start, mode) = match item.kind {
            DepKind::Regular => (requester, Mode::Regular),
            DepKind::Peer => (self.tree.parent(requester).unwrap_or(requester), Mode::Peer),
        };
        let entry = item.set.entry();
        let cand = Candidate {
            name: entry.name.clone(),
            version: entry.version.clone(),
            manifest: entry.manifest.clone().expect("entry is loaded"),
        };
        let (t, entry_node) = self.place(&cand, item.edge, start, mode, Some(&item.set))?;
        if t == PlacementType::Keep {
            return Ok(());
        }
        let mut placed_as: HashMap<String, NodeId> = HashMap::from([(cand.name.clone(), entry_node)]);
        for m in item.set.members.iter().skip(1).filter(|m| !m.is_bound()) {
            let Some(&declarer) = m.declared_by.as_ref().and_then(|d| placed_as.get(d)) else {
                continue;
            };
            if !self.tree.contains(declarer) || !self.tree.contains(entry_node) {
                break;
            }
            let Some(edge) = self.tree.edge_to(declarer, &m.name) else {
                continue;
            };
            if self.tree.edge(edge).status == EdgeStatus::Valid {
                if let Some(r) = self.tree.edge(edge).resolved {
                    placed_as.insert(m.name.clone(), r);
                }
                continue;
            }
            let start = self.tree.parent(entry_node).unwrap_or(entry_node);
            let cand = Candidate {
                name: m.name.clone(),
                version: m.version.clone(),
                manifest: m.manifest.clone().expect("unbound member is loaded"),
            };
            let (_, id) = self.place(&cand, edge, start, Mode::Peer, None)?;
            placed_as.insert(m.name.clone(), id);
        }
        Ok(())
    }

    /// Nodes that must be able to load the candidate from the target
    /// position: the requester, plus for peers the PeerSources above it.
    fn viewers(&self, requester: NodeId, mode: Mode) -> Vec<NodeId> {
        let mut v = vec![requester];
        if mode == Mode::Peer {
            v.extend(self.tree.peer_source_edges(requester).into_iter().map(|e| e.from));
        }
        v.sort();
        v.dedup();
        v
    }

    /// Adding `name@version` at `pos` would break a valid edge below it.
    fn shadows(&self, name: &str, version: &Version, pos: NodeId) -> bool {
        self.tree.subtree(pos).into_iter().any(|y| {
            self.tree.node(y).edges_out.iter().any(|e| {
                e.to_name == name
                    && e.is_active()
                    && e.status == EdgeStatus::Valid
                    && !e.req.accepts(version)
                    && self.tree.sees_through(y, pos, name)
            })
        })
    }

    fn members_fit(&self, set: &PeerSet, pos: NodeId, viewers: &[NodeId]) -> bool {
        set.members.iter().skip(1).all(|m| {
            if m.is_bound() {
                return self.tree.lookup_from(pos, &m.name) == m.node;
            }
            if !viewers.iter().all(|&v| self.tree.sees_equivalent(v, pos, &m.name, &m.version)) {
                return false;
            }
            self.tree.child(pos, &m.name).is_some() || !self.shadows(&m.name, &m.version, pos)
        })
    }

    fn can_place(
        &self,
        cand: &Candidate,
        pos: NodeId,
        edge: EdgeRef,
        mode: Mode,
        viewers: &[NodeId],
        set: Option<&PeerSet>,
    ) -> PlacementType {
        if !viewers.iter().all(|&v| self.tree.sees_equivalent(v, pos, &cand.name, &cand.version)) {
            return PlacementType::Conflict;
        }
        let req = &self.tree.edge(edge).req;
        let requester = edge.from;
        let t = match self.tree.child(pos, &cand.name) {
            Some(existing) => {
                let ex = self.tree.node(existing);
                if ex.version == cand.version || req.accepts(&ex.version) {
                    let usable = mode == Mode::Peer
                        || !ex.manifest.has_peers()
                        || self.tree.peers_visible_from(requester, existing);
                    return if usable {
                        PlacementType::Keep
                    } else {
                        PlacementType::Conflict
                    };
                }
                let holders_ok = self.tree.in_edges(existing).into_iter().all(|e| {
                    let e = self.tree.edge(e);
                    !e.is_active() || e.status != EdgeStatus::Valid || e.req.accepts(&cand.version)
                });
                // a dependent's own directory always yields to its requirement
                if mode == Mode::Peer || pos == requester || holders_ok {
                    PlacementType::Replace
                } else {
                    PlacementType::Conflict
                }
            }
            None if self.shadows(&cand.name, &cand.version, pos) => PlacementType::Conflict,
            None => PlacementType::Add,
        };
        match set {
            Some(set) if !self.members_fit(set, pos, viewers) => PlacementType::Conflict,
            _ => t,
        }
    }

    fn place(
        &mut self,
        cand: &Candidate,
        edge: EdgeRef,
        start: NodeId,
        mode: Mode,
        set: Option<&PeerSet>,
    ) -> Result<(PlacementType, NodeId), Stop> {
        let viewers = self.viewers(edge.from, mode);
        let mut pos = start;
        let mut last = None;
        loop {
            let t = self.can_place(cand, pos, edge, mode, &viewers, set);
            if t == PlacementType::Conflict {
                break;
            }
            last = Some((pos, t));
            if t != PlacementType::Add {
                break;
            }
            match self.tree.parent(pos) {
                Some(p) => pos = p,
                None => break,
            }
        }
        let Some((pos, t)) = last else {
            let from = self.tree.node(edge.from);
            return Err(Stop::Unresolvable(format!(
                "no position for {}@{} required by {}@{}",
                cand.name, cand.version, from.name, from.version
            )));
        };
        self.apply(cand, pos, t)
    }

    fn record(&mut self, action: PlacementType, id: NodeId) {
        let n = self.tree.node(id);
        let entry = PlacementLogEntry {
            seq: self.seq,
            action,
            name: n.name.clone(),
            version: n.version.clone(),
            position: tree_position(&self.tree, id),
        };
        self.seq += 1;
        if self.tail.len() == LOG_TAIL {
            self.tail.pop_front();
        }
        self.tail.push_back(entry.clone());
        if self.config.emit_placement_log {
            self.log.push(entry);
        }
    }

    fn apply(&mut self, cand: &Candidate, pos: NodeId, t: PlacementType) -> Result<(PlacementType, NodeId), Stop> {
        let store = self.store;
        let interpret = |n: &str, s: &str| interpret_spec(store, n, s);
        match t {
            PlacementType::Keep => {
                let id = self.tree.child(pos, &cand.name).expect("kept node");
                self.record(t, id);
                Ok((t, id))
            }
            PlacementType::Add => {
                let edges = manifest_edges(&cand.manifest, &interpret);
                let id = self.tree.insert_child(pos, Arc::clone(&cand.manifest), edges);
                let changes = self.revalidate(BTreeSet::from([cand.name.clone()]), Some(id));
                self.record(t, id);
                self.placed.push(id);
                self.prune(changes);
                Ok((t, id))
            }
            PlacementType::Replace => {
                let old_id = self.tree.child(pos, &cand.name).expect("replaced node");
                let old = PackageRef {
                    name: cand.name.clone(),
                    version: self.tree.node(old_id).version.clone(),
                };
                let mut touched: BTreeSet<String> =
                    self.tree.subtree(old_id).into_iter().map(|n| self.tree.node(n).name.clone()).collect();
                self.tree.remove_subtree(old_id);
                let edges = manifest_edges(&cand.manifest, &interpret);
                let id = self.tree.insert_child(pos, Arc::clone(&cand.manifest), edges);
                touched.insert(cand.name.clone());
                let changes = self.revalidate(touched, Some(id));
                let seq = self.seq;
                self.record(t, id);
                self.placed.push(id);
                if self.config.detector_enabled {
                    if let Some(report) =
                        on_replace(&mut self.ledger, &self.tree, id, &old, &changes, seq, self.pops)
                    {
                        return Err(Stop::PeerSpin(Box::new(report)));
                    }
                }
                self.prune(changes);
                Ok((t, id))
            }
            PlacementType::Conflict => unreachable!("conflicts are never applied"),
        }
    }

    /// Revalidates `touched` plus every edge of a freshly inserted node.
    fn revalidate(&mut self, mut touched: BTreeSet<String>, fresh: Option<NodeId>) -> Vec<EdgeChange> {
        if let Some(id) = fresh {
            touched.extend(self.tree.node(id).edges_out.iter().map(|e| e.to_name.clone()));
        }
        revalidate_edges(&mut self.tree, &touched)
    }

    /// Removes nodes whose peer contract broke and nodes no longer reachable
    /// from the root, then marks sources of newly broken edges for re-queue.
    fn prune(&mut self, changes: Vec<EdgeChange>) -> BTreeSet<NodeId> {
        let root = self.tree.root();
        let mut removed = BTreeSet::new();
        let mut all = changes.clone();
        let mut fresh = changes;
        loop {
            let mut victims: Vec<NodeId> = fresh
                .iter()
                .filter(|c| c.before == EdgeStatus::Valid && c.after == EdgeStatus::Invalid)
                .filter(|c| self.tree.contains(c.edge.from) && c.edge.from != root)
                .filter(|c| {
                    let e = self.tree.edge(c.edge);
                    e.kind == DepKind::Peer && e.is_active()
                })
                .map(|c| c.edge.from)
                .collect();
            if victims.is_empty() {
                victims = self.unreachable();
            }
            if victims.is_empty() {
                break;
            }
            let mut touched = BTreeSet::new();
            for v in victims {
                if self.tree.contains(v) {
                    for n in self.tree.subtree(v) {
                        touched.insert(self.tree.node(n).name.clone());
                        removed.insert(n);
                    }
                    self.tree.remove_subtree(v);
                }
            }
            fresh = revalidate_edges(&mut self.tree, &touched);
            all.extend(fresh.iter().copied());
        }
        for c in all {
            if c.before == EdgeStatus::Valid && c.after != EdgeStatus::Valid && self.tree.contains(c.edge.from) {
                self.invalidated.insert(c.edge.from);
            }
        }
        removed
    }

    fn unreachable(&self) -> Vec<NodeId> {
        let mut seen = HashSet::from([self.tree.root()]);
        let mut stack = vec![self.tree.root()];
        while let Some(n) = stack.pop() {
            for e in &self.tree.node(n).edges_out {
                if let Some(t) = e.resolved.filter(|_| e.is_active()) {
                    if seen.insert(t) {
                        stack.push(t);
                    }
                }
            }
        }
        self.tree.live().filter(|id| !seen.contains(id)).collect()
    }
}

/// Selects versions and peer closures for every non-valid active edge of
/// `current`. Regular targets see context from `current`'s own directory;
/// peer targets from the directory that holds `current`.
pub fn load_nodes(current: NodeId, tree: &NodeTree, store: &dyn PackumentSource) -> Result<Vec<LoadedItem>, String> {
    let node = tree.node(current);
    (0..node.edges_out.len())
        .filter(|&i| {
            let e = &node.edges_out[i];
            e.is_active() && e.status != EdgeStatus::Valid
        })
        .map(|index| load_edge(EdgeRef { from: current, index }, tree, store))
        .collect()
}

/// Directory whose view supplies context for an edge's peer closure.
fn context_dir(tree: &NodeTree, edge: EdgeRef) -> NodeId {
    match tree.edge(edge).kind {
        DepKind::Regular => edge.from,
        DepKind::Peer => tree.parent(edge.from).unwrap_or(edge.from),
    }
}

fn load_edge(edge: EdgeRef, tree: &NodeTree, store: &dyn PackumentSource) -> Result<LoadedItem, String> {
    let node = tree.node(edge.from);
    let e = tree.edge(edge);
    let range = match &e.req {
        EdgeReq::Range(r) => r.clone(),
        EdgeReq::Unsupported(spec) => {
            return Err(format!("{}@{}: unsupported specifier {spec:?} for {}", node.name, node.version, e.to_name))
        }
    };
    let (_, manifest) = select_version(store, &e.to_name, &Requested::Range(range))
        .map_err(|err| format!("{}@{}: {err}", node.name, node.version))?;
    let dir = context_dir(tree, edge);
    let context = |name: &str| {
        tree.lookup_from(dir, name).map(|id| ContextBinding {
            version: tree.node(id).version.clone(),
            node: Some(id),
        })
    };
    let mut set = compute_peer_set_with(manifest, store, &context)
        .map_err(|err| format!("{}@{}: {err}", node.name, node.version))?;
    if e.kind == DepKind::Regular {
        set.source_edges.push(edge);
    }
    Ok(LoadedItem { edge, kind: e.kind, set })
}

/// The context a loaded set was bound against still matches the tree.
fn context_current(item: &LoadedItem, tree: &NodeTree) -> bool {
    let dir = context_dir(tree, item.edge);
    item.set
        .members
        .iter()
        .skip(1)
        .all(|m| tree.lookup_from(dir, &m.name) == if m.is_bound() { m.node } else { None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::PatternHint;
    use crate::registry::SnapshotStore;
    use crate::semver::parse_version;

    fn m(name: &str, ver: &str) -> Manifest {
        Manifest::new(name, parse_version(ver).unwrap())
    }

    fn run(store: &SnapshotStore, root: &str) -> Resolution {
        let config = ResolutionConfig {
            emit_placement_log: true,
            ..Default::default()
        };
        resolve(&RootSpec::parse(root), store, config)
    }

    fn pattern_a() -> SnapshotStore {
        SnapshotStore::from_manifests([
            m("A", "1.0.0").with_dep("B", "^2.0.0"),
            m("B", "1.0.0"),
            m("B", "2.0.0").with_dep("C", "1.0.0"),
            m("C", "1.0.0").with_peer("B", "^1.0.0"),
        ])
    }

    fn pattern_b() -> SnapshotStore {
        SnapshotStore::from_manifests([
            m("A", "1.0.0").with_dep("B", "1.0.0"),
            m("B", "1.0.0").with_peer("C", "^2.0.0").with_peer("D", "1.0.0"),
            m("C", "1.0.0"),
            m("C", "2.0.0"),
            m("D", "1.0.0").with_peer("C", "^1.0.0"),
        ])
    }

    #[test]
    fn pattern_a_spins_on_b() {
        let r = run(&pattern_a(), "A@1.0.0");
        let ResolutionOutcome::PeerSpin(rep) = &r.outcome else { panic!("{:?}", r.outcome) };
        assert_eq!(rep.package, "B");
        assert_eq!(rep.versions, vec![parse_version("1.0.0").unwrap(), parse_version("2.0.0").unwrap()]);
        assert_eq!(rep.position.0, vec!["<root>", "B"]);
        assert_eq!(rep.pattern_hint, PatternHint::A);
        assert_eq!(rep.peer_source.as_ref().unwrap().name, "A");
    }

    #[test]
    fn pattern_b_spins_on_c() {
        let r = run(&pattern_b(), "A@1.0.0");
        let ResolutionOutcome::PeerSpin(rep) = &r.outcome else { panic!("{:?}", r.outcome) };
        assert_eq!(rep.package, "C");
        assert_eq!(rep.pattern_hint, PatternHint::B);
        assert_eq!(rep.peer_entry.as_ref().unwrap().name, "B");
    }

    #[test]
    fn pattern_a_without_detector_hits_the_cap() {
        let config = ResolutionConfig {
            max_iterations: 200,
            detector_enabled: false,
            emit_placement_log: true,
        };
        let r = resolve(&RootSpec::parse("A@1.0.0"), &pattern_a(), config);
        assert!(matches!(r.outcome, ResolutionOutcome::IterationLimitExceeded(_)));
        assert!(crate::detector::loop_log_oracle(&r.log, 64));
    }

    #[test]
    fn leaf_package_resolves_to_root_plus_one() {
        let store = SnapshotStore::from_manifests([m("leaf", "1.0.0")]);
        let r = run(&store, "leaf@1.0.0");
        let ResolutionOutcome::Success(tree) = &r.outcome else { panic!("{:?}", r.outcome) };
        assert_eq!(tree.len(), 2);
    }

    #[test]
    fn chain_hoists_to_root() {
        let store = SnapshotStore::from_manifests([
            m("A", "1.0.0").with_dep("B", "^1"),
            m("B", "1.0.0").with_dep("C", "^1"),
            m("C", "1.0.0"),
        ]);
        let r = run(&store, "A");
        let ResolutionOutcome::Success(tree) = &r.outcome else { panic!("{:?}", r.outcome) };
        let root = tree.root();
        assert_eq!(tree.node(root).children.keys().collect::<Vec<_>>(), vec!["A", "B", "C"]);
        assert!(r.log.iter().all(|e| e.action == PlacementType::Add));
    }

    #[test]
    fn regular_diamond_nests_conflicting_copy() {
        let store = SnapshotStore::from_manifests([
            m("app", "1.0.0").with_dep("x", "^1").with_dep("y", "^1"),
            m("x", "1.0.0").with_dep("z", "^1"),
            m("y", "1.0.0").with_dep("z", "^2"),
            m("z", "1.0.0"),
            m("z", "2.0.0"),
        ]);
        let r = run(&store, "app");
        let ResolutionOutcome::Success(tree) = &r.outcome else { panic!("{:?}", r.outcome) };
        tree.check_well_formed().unwrap();
        assert_eq!(tree.len(), 6);
    }

    #[test]
    fn motivating_example_spins_on_react() {
        let store = SnapshotStore::from_manifests([
            m("antd", "5.0.0").with_peer("react", "^18.0.0").with_peer("react-dom", "^18.0.0"),
            m("react-dom", "18.2.0").with_peer("react", "^18.2.0"),
            m("draft-js", "0.11.7").with_peer("react", "^16.0.0"),
            m("react", "16.14.0"),
            m("react", "18.2.0"),
        ]);
        let project = m("xydesign", "1.0.0").with_dep("antd", "^5.0.0").with_dep("draft-js", "^0.11.0");
        let r = resolve(&RootSpec::Manifest(project), &store, ResolutionConfig::default());
        let ResolutionOutcome::PeerSpin(rep) = &r.outcome else { panic!("{:?}", r.outcome) };
        assert_eq!(rep.package, "react");
        assert_eq!(rep.position.0, vec!["<root>", "react"]);
        assert_eq!(rep.versions.len(), 2);
        assert_ne!(rep.versions[0], rep.versions[1]);
    }

    #[test]
    fn unknown_package_is_unresolvable() {
        let r = run(&pattern_a(), "missing@1.0.0");
        assert!(matches!(r.outcome, ResolutionOutcome::Unresolvable(_)));
    }

    #[test]
    fn queue_rejects_pending_duplicates() {
        let mut q = WorkQueue::default();
        assert!(q.push(NodeId(3)));
        assert!(!q.push(NodeId(3)));
        assert_eq!(q.len(), 1);
        assert_eq!(q.pop(), Some(NodeId(3)));
        assert!(q.push(NodeId(3)));
    }

    #[test]
    fn root_spec_parsing() {
        let RootSpec::Package { name, requested } = RootSpec::parse("@babel/core@^7.0.0") else { unreachable!() };
        assert_eq!((name.as_str(), requested.as_str()), ("@babel/core", "^7.0.0"));
        let RootSpec::Package { name, requested } = RootSpec::parse("react") else { unreachable!() };
        assert_eq!((name.as_str(), requested.as_str()), ("react", "latest"));
    }
}
